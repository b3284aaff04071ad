"""Sprays, curvature, parallel one-forms and holonomy of Riemannian and Finsler metrics."""

__version__ = "0.1.0"

from .expr import Expr, ParseError, differentiate, evaluate, parse_expr, simplify_basic, to_text  # noqa: E402
from .geometry import MetricSpec, TangentSample  # noqa: E402
from .numerics import SubspaceBasis, ToleranceConfig  # noqa: E402

__all__ = [
    "__version__", "Expr", "ParseError", "differentiate", "evaluate", "parse_expr",
    "simplify_basic", "to_text", "MetricSpec", "TangentSample", "SubspaceBasis",
    "ToleranceConfig",
]
