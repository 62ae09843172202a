"""Lookup-table approximation of unary functions.

A table covers [range_start, range_end) with a power-of-two number of
equal-width bins; entry k holds the function value at the bin midpoint,
quantized to the table's value format. Lookups index by bin and clamp
out-of-range inputs to the boundary entries, so a table is total over the
whole real line and piecewise constant with exactly `size` pieces.

The configuration string notation is "[start, end; size]".
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError
from .expr import UnaryOp, unary_f64
from .fixed import FixedSpec, FixedValue, convert, quantize

__all__ = [
    "LutSpec", "LutTable", "DeviationReport",
    "build_table", "lookup", "deviation_report",
    "parse_lut_range", "format_lut_range", "DEFAULT_RANGES",
]

# Standardized inputs concentrate within a few units of zero; tables
# default to the +-4 sigma span unless configured per operator.
DEFAULT_RANGES: dict[UnaryOp, tuple[float, float]] = {
    op: (-4.0, 4.0) for op in UnaryOp
}


@dataclass(frozen=True)
class LutSpec:
    func: UnaryOp
    range_start: float
    range_end: float
    size: int
    value_spec: FixedSpec

    def __post_init__(self):
        if not (self.range_start < self.range_end):
            raise ConfigError(
                f"LUT range start must be below end, got "
                f"[{self.range_start}, {self.range_end}]"
            )
        if self.size < 2 or (self.size & (self.size - 1)) != 0:
            raise ConfigError(f"LUT size must be a power of two >= 2, got {self.size}")

    @property
    def bin_width(self) -> float:
        return (self.range_end - self.range_start) / self.size

    def midpoint(self, k: int) -> float:
        return self.range_start + (k + 0.5) * self.bin_width


@dataclass(frozen=True)
class LutTable:
    spec: LutSpec
    entries: tuple[FixedValue, ...]

    def index_of(self, x: float) -> int:
        s = self.spec
        k = math.floor((x - s.range_start) * s.size / (s.range_end - s.range_start))
        return min(max(k, 0), s.size - 1)

    def lookup_f64(self, x: float) -> FixedValue:
        return self.entries[self.index_of(x)]

    def lookup(self, v: FixedValue) -> FixedValue:
        return self.lookup_f64(v.value)

    def lookup_raw_batch(self, x: np.ndarray, out_spec: FixedSpec) -> np.ndarray:
        """Vector lookup returning raw integers in out_spec (int64)."""
        s = self.spec
        k = np.floor((x - s.range_start) * s.size / (s.range_end - s.range_start))
        k = np.clip(k, 0, s.size - 1).astype(np.int64)
        raws = np.array(
            [convert(e, out_spec).raw for e in self.entries], dtype=np.int64
        )
        return raws[k]


def build_table(spec: LutSpec, func: Callable[[float], float] | None = None) -> LutTable:
    """Sample the function at bin midpoints and quantize to the value format.

    `func` overrides the operator's reference implementation (used for
    testing with synthetic functions).
    """
    f = func if func is not None else (lambda u: unary_f64(spec.func, u))
    entries = []
    for k in range(spec.size):
        y = f(spec.midpoint(k))
        if math.isnan(y):
            y = 0.0
        elif math.isinf(y):
            y = spec.value_spec.max_value if y > 0 else spec.value_spec.min_value
        entries.append(quantize(y, spec.value_spec))
    return LutTable(spec, tuple(entries))


def lookup(table: LutTable, v: FixedValue) -> FixedValue:
    return table.lookup(v)


@dataclass
class DeviationReport:
    x: np.ndarray
    truth: np.ndarray
    approx: np.ndarray
    deviation: np.ndarray
    max_abs_err: float
    mean_abs_err: float


def deviation_report(table: LutTable, grid_points: int,
                     func: Callable[[float], float] | None = None) -> DeviationReport:
    """Compare table lookups to the double-precision function on a uniform grid."""
    if grid_points < 2:
        raise ValueError("need at least 2 grid points")
    s = table.spec
    f = func if func is not None else (lambda u: unary_f64(s.func, u))
    x = np.linspace(s.range_start, s.range_end, grid_points)
    truth = np.array([f(v) for v in x])
    approx = np.array([table.lookup_f64(v).value for v in x])
    deviation = approx - truth
    abs_err = np.abs(deviation)
    return DeviationReport(
        x=x,
        truth=truth,
        approx=approx,
        deviation=deviation,
        max_abs_err=float(abs_err.max()),
        mean_abs_err=float(abs_err.mean()),
    )


_RANGE_RE = re.compile(
    r"^\s*\[?\s*([-+0-9.eE]+)\s*,\s*([-+0-9.eE]+)\s*;\s*(\d+)\s*\]?\s*$"
)


def parse_lut_range(text: str) -> tuple[float, float, int]:
    """Parse the "[start, end; size]" notation."""
    m = _RANGE_RE.match(text)
    if m is None:
        raise ConfigError(f"cannot parse LUT range {text!r}; expected '[start, end; size]'")
    try:
        return float(m.group(1)), float(m.group(2)), int(m.group(3))
    except ValueError as exc:
        raise ConfigError(f"cannot parse LUT range {text!r}: {exc}") from None


def format_lut_range(start: float, end: float, size: int) -> str:
    return f"[{start:g}, {end:g}; {size}]"
