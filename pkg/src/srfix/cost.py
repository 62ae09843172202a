"""Clock-cycle latency and resource estimation for compiled expressions.

The pipeline model is fully spatial with an initiation interval of 1: every
node gets its own hardware, latency is the critical-path sum of per-node
cycle costs (leaves are free), and resources are the plain sum over nodes.
At 200 MHz one cycle is 5 ns.

Cycle costs are keyed by (operator, B, I). The shipped <16,6> cycle numbers
for the transcendental functions come from HLS synthesis of the math
library at that precision; the DSP/LUT columns are coarse placeholders
meant to preserve orderings (tan far above sin above add), not absolute
synthesis results. Other precisions are supplied via cost-table files with
rows "op, B, I, cycles, dsp, lut".

In LUT-approximation mode every transcendental node costs one cycle (a
table index) and its storage is charged as ceil(size * B / 64) logic LUTs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import CostModelError
from .expr import (
    Binary,
    BinaryOp,
    ComplexityMap,
    Expr,
    TRANSCENDENTAL_OPS,
    Unary,
    UnaryOp,
)
from .fixed import FixedSpec

__all__ = [
    "OpCost", "CostTables", "PipelineEstimate",
    "estimate_latency", "estimate_resources", "generate_complexity_map",
    "load_cost_tables", "write_cost_tables", "default_cost_tables",
    "lut_storage_luts", "CLOCK_PERIOD_NS", "DEFAULT_LUT_SIZE",
]

CLOCK_PERIOD_NS = 5.0  # 200 MHz
DEFAULT_LUT_SIZE = 1024

_OP_BY_NAME = {op.value: op for op in list(UnaryOp) + list(BinaryOp)}
_NAME_BY_OP = {op: op.value for op in list(UnaryOp) + list(BinaryOp)}


@dataclass(frozen=True)
class OpCost:
    cycles: int
    dsp: int = 0
    lut: int = 0

    def __post_init__(self):
        if self.cycles < 0 or self.dsp < 0 or self.lut < 0:
            raise ValueError("costs must be non-negative")


@dataclass
class CostTables:
    """Per (operator, B, I) cycle and resource costs."""

    entries: dict = field(default_factory=dict)  # (op, B, I) -> OpCost
    lookup_op_cycles: int = 1

    def has_bucket(self, spec: FixedSpec) -> bool:
        return any(b == spec.width and i == spec.integer_bits
                   for (_, b, i) in self.entries)

    def ops_in_bucket(self, spec: FixedSpec):
        return sorted(
            (op for (op, b, i) in self.entries
             if b == spec.width and i == spec.integer_bits),
            key=lambda op: _NAME_BY_OP[op],
        )

    def cost_for(self, op, spec: FixedSpec) -> OpCost:
        key = (op, spec.width, spec.integer_bits)
        cost = self.entries.get(key)
        if cost is None:
            raise CostModelError(
                f"operator {_NAME_BY_OP.get(op, op)!r} has no cost entry for "
                f"bucket <{spec.width},{spec.integer_bits}>"
            )
        return cost


# <16,6> cycle counts for the transcendental functions at 200 MHz; the
# remaining rows (div, gauss, square, resource columns) are ordering-
# preserving defaults, overridable through cost-table files.
_DEFAULT_16_6 = {
    BinaryOp.ADD: OpCost(cycles=1, dsp=0, lut=16),
    BinaryOp.SUB: OpCost(cycles=1, dsp=0, lut=16),
    BinaryOp.MUL: OpCost(cycles=1, dsp=1, lut=0),
    BinaryOp.DIV: OpCost(cycles=18, dsp=0, lut=320),
    UnaryOp.SQUARE: OpCost(cycles=1, dsp=1, lut=0),
    UnaryOp.LOG_ABS: OpCost(cycles=4, dsp=4, lut=350),
    UnaryOp.SIN: OpCost(cycles=8, dsp=4, lut=600),
    UnaryOp.TAN: OpCost(cycles=48, dsp=10, lut=2400),
    UnaryOp.COSH: OpCost(cycles=8, dsp=6, lut=700),
    UnaryOp.SINH: OpCost(cycles=9, dsp=6, lut=800),
    UnaryOp.EXP: OpCost(cycles=3, dsp=5, lut=400),
    UnaryOp.GAUSS: OpCost(cycles=4, dsp=6, lut=420),
}


def default_cost_tables() -> CostTables:
    tables = CostTables()
    for op, cost in _DEFAULT_16_6.items():
        tables.entries[(op, 16, 6)] = cost
    return tables


def load_cost_tables(path) -> CostTables:
    """Read a cost-table file with rows "op, B, I, cycles, dsp, lut"."""
    tables = CostTables()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            if parts[0].lower() == "op":  # header row
                continue
            if len(parts) != 6:
                raise CostModelError(
                    f"{path}:{lineno}: expected 6 columns 'op, B, I, cycles, dsp, lut'"
                )
            op = _OP_BY_NAME.get(parts[0])
            if op is None:
                raise CostModelError(f"{path}:{lineno}: unknown operator {parts[0]!r}")
            try:
                b, i, cycles, dsp, lut = (int(p) for p in parts[1:])
            except ValueError:
                raise CostModelError(f"{path}:{lineno}: non-integer cost field") from None
            tables.entries[(op, b, i)] = OpCost(cycles, dsp, lut)
    if not tables.entries:
        raise CostModelError(f"{path}: no cost rows found")
    return tables


def write_cost_tables(tables: CostTables, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("op, B, I, cycles, dsp, lut\n")
        for (op, b, i), cost in sorted(
            tables.entries.items(), key=lambda kv: (kv[0][1], kv[0][2], _NAME_BY_OP[kv[0][0]])
        ):
            fh.write(f"{_NAME_BY_OP[op]}, {b}, {i}, {cost.cycles}, {cost.dsp}, {cost.lut}\n")


@dataclass(frozen=True)
class PipelineEstimate:
    latency_cycles: int
    latency_ns: float
    dsp: int
    lut: int
    initiation_interval: int = 1


def lut_storage_luts(size: int, width: int) -> int:
    """Logic-LUT charge for storing `size` entries of `width` bits."""
    return math.ceil(size * width / 64)


def _node_cycles(e: Expr, tables: CostTables, spec: FixedSpec, use_luts: bool) -> int:
    if isinstance(e, Unary) and use_luts and e.op in TRANSCENDENTAL_OPS:
        return tables.lookup_op_cycles
    op = e.op if isinstance(e, (Unary, Binary)) else None
    assert op is not None
    return tables.cost_for(op, spec).cycles


def _critical_path(e: Expr, tables: CostTables, spec: FixedSpec, use_luts: bool) -> int:
    if isinstance(e, Unary):
        return _node_cycles(e, tables, spec, use_luts) + _critical_path(
            e.child, tables, spec, use_luts
        )
    if isinstance(e, Binary):
        return _node_cycles(e, tables, spec, use_luts) + max(
            _critical_path(e.left, tables, spec, use_luts),
            _critical_path(e.right, tables, spec, use_luts),
        )
    return 0  # leaves are wires


def estimate_resources(e: Expr, tables: CostTables, spec: FixedSpec,
                       use_luts: bool = False,
                       lut_sizes: dict | None = None) -> tuple[int, int]:
    """Summed (dsp, lut) over all operator nodes of the tree."""
    dsp = lut = 0
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, Unary):
            if use_luts and node.op in TRANSCENDENTAL_OPS:
                size = (lut_sizes or {}).get(node.op, DEFAULT_LUT_SIZE)
                lut += lut_storage_luts(size, spec.width)
            else:
                cost = tables.cost_for(node.op, spec)
                dsp += cost.dsp
                lut += cost.lut
            stack.append(node.child)
        elif isinstance(node, Binary):
            cost = tables.cost_for(node.op, spec)
            dsp += cost.dsp
            lut += cost.lut
            stack.extend((node.left, node.right))
    return dsp, lut


def estimate_latency(e: Expr, tables: CostTables, spec: FixedSpec,
                     use_luts: bool = False,
                     lut_sizes: dict | None = None) -> PipelineEstimate:
    """Critical-path latency plus summed resources under the II=1 model."""
    cycles = _critical_path(e, tables, spec, use_luts)
    dsp, lut = estimate_resources(e, tables, spec, use_luts, lut_sizes)
    return PipelineEstimate(
        latency_cycles=cycles,
        latency_ns=cycles * CLOCK_PERIOD_NS,
        dsp=dsp,
        lut=lut,
    )


def generate_complexity_map(tables: CostTables, spec: FixedSpec) -> ComplexityMap:
    """Search weights from cycle costs: weight = max(1, cycles), leaves 1."""
    if not tables.has_bucket(spec):
        raise CostModelError(
            f"cost tables have no bucket for <{spec.width},{spec.integer_bits}>"
        )
    weights = {
        op: max(1, tables.cost_for(op, spec).cycles)
        for op in tables.ops_in_bucket(spec)
    }
    return ComplexityMap(operator_weights=weights)
