"""srfix: symbolic classifier search with fixed-point deployment semantics.

The package splits into a search side (expression trees, evolutionary
engine, dataset handling) and a deployment side (fixed-point arithmetic,
LUT function approximation, clock-cycle cost model), tied together by a
command-line harness that emits delimited reports and matching figures.
"""

__version__ = "0.1.0"

from .expr import (  # noqa: F401
    BinaryOp,
    Binary,
    ComplexityMap,
    Const,
    Expr,
    OperatorSet,
    Unary,
    UnaryOp,
    Var,
    check_constraints,
    complexity,
    eval_f64,
    eval_f64_batch,
    format_expr,
    parse,
)
from .fixed import FixedSpec, FixedValue, eval_fixed, quantize, to_f64  # noqa: F401
from .lut import LutSpec, LutTable, build_table, deviation_report, lookup  # noqa: F401
