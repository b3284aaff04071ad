"""Command line: ``finslab run``, ``finslab example`` and ``finslab check``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .catalog import catalog_dict, catalog_names
from .config import ConfigError, config_from_dict, load_config
from .runner import run

EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2

# (block, key, comparison, expected) per catalog entry
EXPECTED: dict[str, list[tuple[str, str, str, object]]] = {
    "ex1": [("nullity", "dim", "==", 2), ("parallel", "final_dim", "==", 1),
            ("parallel", "basis", "~", [[0, 0, 0, 1]]), ("freedom", "mu_s", ">=", 2)],
    "ex2": [("parallel", "final_dim", "==", 2), ("curvature", "max_abs_R", "<=", 1e-10),
            ("freedom", "mu_s", ">=", 2)],
    "ex2-3": [("parallel", "final_dim", "==", 3), ("curvature", "max_abs_R", "<=", 1e-10)],
    "ex3": [("parallel", "final_dim", "==", 0), ("freedom", "mu_s", "==", 2),
            ("freedom", "stable_depth", "<=", 3)],
    "ex3-quartic": [("berwald", "is_berwald", "==", True)],
    "ex4": [("parallel", "final_dim", "==", 0)],
    "ex5": [("parallel", "final_dim", "==", 1), ("parallel", "basis", "~", [[0, 0, 1]]),
            ("berwald", "is_berwald", "==", False), ("freedom", "mu_s", ">=", 2)],
    "sphere2": [("nullity", "dim", "==", 0), ("parallel", "final_dim", "==", 0),
                ("freedom", "mu_s", "==", 1)],
}


def _compare(value, op: str, expected) -> bool:
    if value is None:
        return False
    if op == "==":
        return value == expected
    if op == ">=":
        return value >= expected
    if op == "<=":
        return value <= expected
    if op == "~":
        return len(value) == len(expected) and all(
            abs(a - b) <= 1e-8 for r, e in zip(value, expected) for a, b in zip(r, e))
    raise ValueError(op)


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="finslab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="analyse a metric described by a JSON config")
    r.add_argument("config")
    r.add_argument("--out", help="write the report here instead of stdout")
    r.add_argument("--analyses", help="comma-separated subset of analyses")
    r.add_argument("--seed", type=int)
    r.add_argument("--rank-tol", type=float)
    r.add_argument("--depth", type=int)

    e = sub.add_parser("example", help="run (or print) a built-in catalog config")
    e.add_argument("name", choices=catalog_names() + ["ex2-4"], metavar="name")
    e.add_argument("--print-config", action="store_true")
    e.add_argument("--out")

    sub.add_parser("check", help="run the catalog against its expected verdicts")
    return p


def _override(d: dict, args) -> dict:
    d = dict(d)
    if getattr(args, "analyses", None):
        d["analyses"] = [a.strip() for a in args.analyses.split(",") if a.strip()]
    if getattr(args, "seed", None) is not None:
        d["seed"] = args.seed
    if getattr(args, "rank_tol", None) is not None:
        d["tolerances"] = dict(d.get("tolerances") or {}, rank_tol=args.rank_tol)
    if getattr(args, "depth", None) is not None:
        d["depth"] = args.depth
    return d


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _cmd_run(args) -> int:
    try:
        raw = json.loads(Path(args.config).read_text())
    except OSError as err:
        raise ConfigError(f"cannot read {args.config}: {err}") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"malformed JSON in {args.config}: {err}") from None
    cfg = config_from_dict(_override(raw, args))
    report = run(cfg, _log)
    _emit(report.to_json(), args.out)
    return EXIT_PASS if report.verdict == "PASS" else EXIT_FAIL


def _cmd_example(args) -> int:
    d = catalog_dict(args.name)
    if args.print_config:
        _emit(json.dumps(d, indent=2), args.out)
        return EXIT_PASS
    report = run(config_from_dict(d), _log)
    _emit(report.to_json(), args.out)
    return EXIT_PASS if report.verdict == "PASS" else EXIT_FAIL


def check() -> bool:
    all_ok = True
    for name, expectations in EXPECTED.items():
        report = run(config_from_dict(catalog_dict(name)))
        blocks = report.blocks
        ok = report.verdict == "PASS"
        lines = []
        for block, key, op, want in expectations:
            got = blocks.get(block, {}).get(key)
            good = _compare(got, op, want)
            ok &= good
            lines.append(f"    {'ok  ' if good else 'FAIL'} {block}.{key} = {got} (expected {op} {want})")
        for bname, b in blocks.items():
            if b["status"] != "PASS":
                lines.append(f"    FAIL block {bname}: {b.get('error', b['status'])}")
        print(f"{'PASS' if ok else 'FAIL'} {name}")
        print("\n".join(lines))
        all_ok &= ok
    return all_ok


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "example":
            return _cmd_example(args)
        return EXIT_PASS if check() else EXIT_FAIL
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
