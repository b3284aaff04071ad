import json

import numpy as np
import pytest

from finslab.catalog import catalog_dict, catalog_names
from finslab.cli import main
from finslab.config import (
    ConfigError, SplitMix64, base_point, config_from_dict, draw_samples, load_config,
)
from finslab.runner import canonical_json, run

from conftest import CATALOG, report


def write(tmp_path, d, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(d) if isinstance(d, dict) else d)
    return p


# ---------------------------------------------------------------- PRNG

def test_splitmix64_reference_values():
    rng = SplitMix64(0)
    assert rng.next_u64() == 0xE220A8397B1DCDAF
    assert rng.next_u64() == 0x6E789E6AA1B965F4
    u = SplitMix64(1).uniform()
    assert 0.0 <= u < 1.0


# ---------------------------------------------------------------- config loading

def test_load_example1_config(tmp_path):
    cfg = load_config(write(tmp_path, catalog_dict("ex1")))
    assert cfg.dim == 4 and cfg.spec.kind == "riemannian"
    assert [str(d) for d in cfg.spec.source["domain"]] == ["x2", "x3"]
    X = np.array([s.x for s in draw_samples(cfg)])
    assert np.all(X[:, 1:3] > 0)


@pytest.mark.parametrize("patch, msg", [
    ({"dim": 0}, "dim"),
    ({"kind": "pseudo"}, "kind"),
    ({"metric": [["1"]]}, "metric"),
    ({"box": {"x": [[-1, 1]] * 2}}, "box"),
    ({"samples": 0}, "samples"),
    ({"seed": -3}, "seed"),
    ({"tolerances": {"rank_tol": -1}}, "tolerances"),
    ({"analyses": ["spray", "bogus"]}, "analyses"),
    ({"loop_scales": []}, "loop_scales"),
    ({"depth": 0}, "depth"),
    ({"colour": "red"}, "unknown config keys"),
    ({"base_point": [1, 2]}, "base_point"),
])
def test_config_validation_errors(patch, msg):
    d = catalog_dict("ex1")
    d.update(patch)
    with pytest.raises(ConfigError, match=msg):
        config_from_dict(d)


def test_parse_error_carries_offset():
    d = catalog_dict("ex5")
    d["F"] = "sqrt(y1^2 + * y2^2)"
    with pytest.raises(ConfigError, match="offset 12"):
        config_from_dict(d)


def test_box_outside_domain_is_rejected():
    d = catalog_dict("ex1")
    d["box"]["x"][1] = [-2, -1]
    with pytest.raises(ConfigError, match="not inside the domain"):
        config_from_dict(d)


def test_malformed_json(tmp_path):
    with pytest.raises(ConfigError, match="malformed JSON"):
        load_config(write(tmp_path, "{not json"))


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.json")


def test_base_point_is_centroid_or_nearest_valid_sample():
    cfg = config_from_dict(catalog_dict("ex1"))
    assert np.allclose(base_point(cfg), [0, 1.25, 1.25, 0])
    d = catalog_dict("sphere2")
    d["domain"] = ["sin(x1)", "x2 - 0.1"]
    d["box"]["x"][1] = [-1, 1.4]
    bp = base_point(config_from_dict(d))
    assert bp[1] > 0.1


# ---------------------------------------------------------------- catalog

def test_catalog_names():
    names = catalog_names()
    for n in ("ex1", "ex2", "ex3", "ex3-quartic", "ex4", "ex5", "sphere2", "euclidean-4"):
        assert n in names
    with pytest.raises(KeyError):
        catalog_dict("ex9")


def test_catalog_ex4_is_shen_on_the_ball():
    cfg = config_from_dict(catalog_dict("ex4"))
    assert cfg.spec.kind == "finsler" and cfg.dim == 2
    X = np.array([s.x for s in draw_samples(cfg)])
    assert np.max(np.linalg.norm(X, axis=1)) <= 0.7


def test_catalog_euclidean4_is_flat():
    cfg = config_from_dict(catalog_dict("euclidean-4"))
    assert cfg.dim == 4 and all(cfg.spec.source["metric"][i][i] == "1" for i in range(4))


# ---------------------------------------------------------------- run / report

@pytest.mark.parametrize("name", CATALOG)
def test_catalog_entry_runs_without_block_errors(name):
    rep = report(name)
    assert set(rep["blocks"]) == {"spray", "curvature", "nullity", "parallel", "berwald", "freedom"}
    errors = {k: b.get("error") for k, b in rep["blocks"].items() if b["status"] == "ERROR"}
    assert not errors
    assert rep["verdict"] == "PASS"


def test_report_schema():
    rep = report("ex5")
    assert set(rep) >= {"metric", "version", "config", "blocks", "verdict"}
    b = rep["blocks"]
    assert {"algebraic_dim", "holonomy_dim", "final_dim", "basis", "residuals"} <= set(b["parallel"])
    assert {"is_berwald", "max_residual"} <= set(b["berwald"])
    assert {"rank_per_sample", "mu_s", "stabilized"} <= set(b["freedom"])
    assert all("wall_time" in blk for blk in b.values())


def test_example5_report():
    b = report("ex5")["blocks"]
    assert b["parallel"]["final_dim"] == 1
    assert np.allclose(b["parallel"]["basis"], [[0, 0, 1]], atol=1e-8)
    assert b["berwald"]["is_berwald"] is False


def test_example3_report():
    b = report("ex3")["blocks"]
    assert b["parallel"]["final_dim"] == 0
    assert b["freedom"]["mu_s"] == 2
    assert b["spray"]["alternate_spray_match"]["ex3-quartic"] <= 1e-7


def test_example2_report():
    b = report("ex2")["blocks"]
    assert b["parallel"]["final_dim"] == 2
    assert b["curvature"]["max_abs_R"] <= 1e-10


def test_run_is_deterministic():
    d = catalog_dict("ex3")
    d["analyses"] = ["spray", "curvature", "nullity", "parallel"]
    a = canonical_json(run(config_from_dict(d)))
    b = canonical_json(run(config_from_dict(d)))
    assert a == b


def test_analyses_subset_runs_in_fixed_order():
    d = catalog_dict("sphere2")
    d["analyses"] = ["freedom", "spray"]
    rep = run(config_from_dict(d))
    assert list(rep.blocks) == ["spray", "freedom"]


def test_block_errors_are_captured():
    d = catalog_dict("ex4")
    d.update({"analyses": ["spray", "parallel"], "samples": 10, "loop_scales": [5.0]})
    rep = run(config_from_dict(d))
    assert rep.blocks["spray"]["status"] == "PASS"
    assert rep.blocks["parallel"]["status"] == "ERROR"
    assert "TransportError" in rep.blocks["parallel"]["error"]
    assert rep.verdict == "FAIL"


# ---------------------------------------------------------------- command line

def _small(name="euclidean-2", **kw):
    d = catalog_dict(name)
    d.update({"analyses": ["spray", "curvature"], "samples": 10})
    d.update(kw)
    return d


def test_cli_run_pass(tmp_path, capsys):
    out = tmp_path / "rep.json"
    assert main(["run", str(write(tmp_path, _small())), "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["verdict"] == "PASS" and rep["metric"] == "euclidean-2"


def test_cli_run_fail_exit_code(tmp_path):
    d = _small("sphere2", alternates=[{"name": "flat", "F": "sqrt(y1^2 + y2^2)"}])
    assert main(["run", str(write(tmp_path, d))]) == 2


def test_cli_config_error_exit_code(tmp_path, capsys):
    assert main(["run", str(write(tmp_path, _small(dim=0)))]) == 1
    assert "configuration error" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.json")]) == 1


def test_cli_overrides(tmp_path, capsys):
    p = write(tmp_path, _small("sphere2"))
    assert main(["run", str(p), "--analyses", "spray", "--seed", "7", "--rank-tol", "1e-9",
                 "--depth", "2"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert list(rep["blocks"]) == ["spray"]
    assert rep["config"]["seed"] == 7 and rep["config"]["depth"] == 2
    assert rep["config"]["tolerances"]["rank_tol"] == 1e-9


def test_cli_example_print_config(capsys):
    assert main(["example", "ex4", "--print-config"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["kind"] == "finsler" and d["dim"] == 2


def test_cli_example_round_trips_through_run(tmp_path, capsys):
    main(["example", "sphere2", "--print-config"])
    d = json.loads(capsys.readouterr().out)
    d["analyses"] = ["spray"]
    assert main(["run", str(write(tmp_path, d))]) == 0


def test_cli_unknown_example():
    with pytest.raises(SystemExit):
        main(["example", "nope"])
