"""Signed fixed-point arithmetic simulating the deployed number system.

A format <B,I> has B total bits (two's complement) of which I are integer
bits including the sign, leaving F = B - I fractional bits. A stored raw
integer r represents the real value r * 2^-F.

Intermediate sums and products are computed exactly (Python integers) and
reduced to the output format in a single rounding step, so rounding and
overflow handling are the only sources of error. Defaults are truncate
(round toward minus infinity) and wrap, matching common HLS fixed-point
defaults; both are configurable per spec.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace
from typing import Literal, Mapping, Sequence

import numpy as np

from .errors import ConfigError
from .expr import (
    Binary,
    BinaryOp,
    Const,
    Expr,
    TRANSCENDENTAL_OPS,
    Unary,
    UnaryOp,
    Var,
    unary_f64,
)

__all__ = [
    "FixedSpec", "FixedValue", "parse_fixed_spec",
    "quantize", "to_f64", "convert",
    "fx_add", "fx_sub", "fx_mul", "fx_div",
    "eval_fixed", "eval_fixed_batch",
]

OverflowMode = Literal["wrap", "saturate"]
RoundMode = Literal["truncate", "round_nearest"]


@dataclass(frozen=True)
class FixedSpec:
    """<B,I> format descriptor with overflow and rounding behavior."""

    width: int
    integer_bits: int
    overflow: OverflowMode = "wrap"
    rounding: RoundMode = "truncate"

    def __post_init__(self):
        if not (1 <= self.integer_bits <= self.width <= 64):
            raise ValueError(
                f"need 1 <= I <= B <= 64, got B={self.width}, I={self.integer_bits}"
            )
        if self.overflow not in ("wrap", "saturate"):
            raise ValueError(f"unknown overflow mode {self.overflow!r}")
        if self.rounding not in ("truncate", "round_nearest"):
            raise ValueError(f"unknown rounding mode {self.rounding!r}")

    @property
    def frac_bits(self) -> int:
        return self.width - self.integer_bits

    @property
    def resolution(self) -> float:
        return 2.0 ** -self.frac_bits

    @property
    def min_raw(self) -> int:
        return -(1 << (self.width - 1))

    @property
    def max_raw(self) -> int:
        return (1 << (self.width - 1)) - 1

    @property
    def min_value(self) -> float:
        return self.min_raw * self.resolution

    @property
    def max_value(self) -> float:
        return self.max_raw * self.resolution

    def __str__(self) -> str:
        return f"<{self.width},{self.integer_bits}>"


_SPEC_RE = re.compile(
    r"^\s*(?:ap_fixed\s*)?[<⟨]?\s*(\d+)\s*,\s*(\d+)\s*[>⟩]?\s*$"
)


def parse_fixed_spec(text: str, overflow: OverflowMode = "wrap",
                     rounding: RoundMode = "truncate") -> FixedSpec:
    """Accepts "12,6", "<12,6>", "ap_fixed<12,6>" and the angle-bracket form."""
    m = _SPEC_RE.match(text)
    if m is None:
        raise ConfigError(f"cannot parse fixed-point spec {text!r}")
    return FixedSpec(int(m.group(1)), int(m.group(2)), overflow, rounding)


@dataclass(frozen=True)
class FixedValue:
    raw: int
    spec: FixedSpec

    def __post_init__(self):
        if not (self.spec.min_raw <= self.raw <= self.spec.max_raw):
            raise ValueError(
                f"raw {self.raw} does not fit {self.spec} "
                f"[{self.spec.min_raw}, {self.spec.max_raw}]"
            )

    @property
    def value(self) -> float:
        return math.ldexp(self.raw, -self.spec.frac_bits)

    def __str__(self) -> str:
        return f"{self.value}{self.spec}"


def _fit(raw: int, spec: FixedSpec) -> int:
    """Apply the spec's overflow mode to an arbitrary-width integer."""
    if spec.min_raw <= raw <= spec.max_raw:
        return raw
    if spec.overflow == "saturate":
        return spec.max_raw if raw > spec.max_raw else spec.min_raw
    span = 1 << spec.width
    return ((raw - spec.min_raw) % span) + spec.min_raw


def _round_scaled(scaled: float, rounding: RoundMode) -> int:
    if rounding == "round_nearest":
        return math.floor(scaled + 0.5)
    return math.floor(scaled)


def _shift_round(v: int, shift: int, rounding: RoundMode) -> int:
    """Exact value v * 2^-shift rounded per mode (shift may be negative)."""
    if shift <= 0:
        return v << -shift
    if rounding == "round_nearest":
        return (v + (1 << (shift - 1))) >> shift
    return v >> shift


def _div_round(num: int, den: int, rounding: RoundMode) -> int:
    """Exact num/den rounded per mode; den must be nonzero."""
    if den < 0:
        num, den = -num, -den
    if rounding == "round_nearest":
        return (2 * num + den) // (2 * den)
    return num // den  # floor division == truncate toward -inf


def quantize(x: float, spec: FixedSpec) -> FixedValue:
    """Nearest representable value per the spec's rounding/overflow modes."""
    if not math.isfinite(x):
        raise ValueError(f"cannot quantize non-finite value {x!r}")
    raw = _round_scaled(math.ldexp(x, spec.frac_bits), spec.rounding)
    return FixedValue(_fit(raw, spec), spec)


def to_f64(v: FixedValue) -> float:
    return v.value


def convert(v: FixedValue, spec: FixedSpec) -> FixedValue:
    """Re-represent a value in another spec (exact when formats agree)."""
    if v.spec == spec:
        return v
    raw = _shift_round(v.raw, v.spec.frac_bits - spec.frac_bits, spec.rounding)
    return FixedValue(_fit(raw, spec), spec)


def _quantize_saturating(y: float, spec: FixedSpec) -> FixedValue:
    """Quantize a math-library result; non-finite values pin to the rails."""
    if math.isnan(y):
        return FixedValue(0, spec)
    if math.isinf(y):
        return FixedValue(spec.max_raw if y > 0 else spec.min_raw, spec)
    raw = _round_scaled(math.ldexp(y, spec.frac_bits), spec.rounding)
    if raw > spec.max_raw:
        raw = spec.max_raw
    elif raw < spec.min_raw:
        raw = spec.min_raw
    return FixedValue(raw, spec)


def _check_same_spec(a: FixedValue, b: FixedValue):
    if a.spec.width != b.spec.width or a.spec.integer_bits != b.spec.integer_bits:
        raise ValueError(f"operand formats differ: {a.spec} vs {b.spec}")


def fx_add(a: FixedValue, b: FixedValue, out: FixedSpec) -> FixedValue:
    _check_same_spec(a, b)
    raw = _shift_round(a.raw + b.raw, a.spec.frac_bits - out.frac_bits, out.rounding)
    return FixedValue(_fit(raw, out), out)


def fx_sub(a: FixedValue, b: FixedValue, out: FixedSpec) -> FixedValue:
    _check_same_spec(a, b)
    raw = _shift_round(a.raw - b.raw, a.spec.frac_bits - out.frac_bits, out.rounding)
    return FixedValue(_fit(raw, out), out)


def fx_mul(a: FixedValue, b: FixedValue, out: FixedSpec) -> FixedValue:
    _check_same_spec(a, b)
    product = a.raw * b.raw  # exact, width 2B
    raw = _shift_round(product, 2 * a.spec.frac_bits - out.frac_bits, out.rounding)
    return FixedValue(_fit(raw, out), out)


def fx_div(a: FixedValue, b: FixedValue, out: FixedSpec) -> FixedValue:
    _check_same_spec(a, b)
    if b.raw == 0:
        if a.raw == 0:
            return FixedValue(0, out)
        return FixedValue(out.max_raw if a.raw > 0 else out.min_raw, out)
    raw = _div_round(a.raw << out.frac_bits, b.raw, out.rounding)
    return FixedValue(_fit(raw, out), out)


_FX_BINARY = {
    BinaryOp.ADD: fx_add,
    BinaryOp.SUB: fx_sub,
    BinaryOp.MUL: fx_mul,
    BinaryOp.DIV: fx_div,
}


def eval_fixed(e: Expr, x: Sequence[float], spec: FixedSpec,
               luts: Mapping[UnaryOp, "object"] | None = None) -> FixedValue:
    """Evaluate one sample entirely in the working fixed-point format.

    Inputs are quantized to `spec`; arithmetic goes through the fx_* ops.
    Transcendental functions are computed in double precision then
    quantized (math mode, luts is None) or resolved by table lookup when a
    per-operator LUT mapping is supplied. Squaring is always a multiply.
    """
    if isinstance(e, Const):
        return quantize(e.value, spec)
    if isinstance(e, Var):
        return quantize(float(x[e.index]), spec)
    if isinstance(e, Unary):
        v = eval_fixed(e.child, x, spec, luts)
        if e.op is UnaryOp.SQUARE:
            return fx_mul(v, v, spec)
        if luts is None:
            return _quantize_saturating(unary_f64(e.op, to_f64(v)), spec)
        table = luts.get(e.op)
        if table is None:
            raise ConfigError(f"no LUT configured for operator {e.op.value!r}")
        return convert(table.lookup(v), spec)
    left = eval_fixed(e.left, x, spec, luts)
    right = eval_fixed(e.right, x, spec, luts)
    return _FX_BINARY[e.op](left, right, spec)


# ---------------------------------------------------------------------------
# Vectorized evaluation (exact mirror of the scalar path)
# ---------------------------------------------------------------------------

def eval_fixed_batch(e: Expr, X: np.ndarray, spec: FixedSpec,
                     luts: Mapping[UnaryOp, "object"] | None = None) -> np.ndarray:
    """Fixed-point evaluation over all rows of X; returns real values.

    Uses an int64 vector path when 2B+1 bits fit in int64, otherwise falls
    back to the scalar evaluator row by row.
    """
    X = np.asarray(X, dtype=np.float64)
    if 2 * spec.width + 1 <= 63:
        raws = _batch_eval_raw(e, X, spec, luts)
        return raws.astype(np.float64) * spec.resolution
    return np.array(
        [to_f64(eval_fixed(e, row, spec, luts)) for row in X], dtype=np.float64
    )


def _fit_vec(raw: np.ndarray, spec: FixedSpec) -> np.ndarray:
    if spec.overflow == "saturate":
        return np.clip(raw, spec.min_raw, spec.max_raw)
    span = 1 << spec.width
    return ((raw - spec.min_raw) % span) + spec.min_raw


def _round_scaled_vec(scaled: np.ndarray, rounding: RoundMode) -> np.ndarray:
    if rounding == "round_nearest":
        return np.floor(scaled + 0.5).astype(np.int64)
    return np.floor(scaled).astype(np.int64)


def _shift_round_vec(v: np.ndarray, shift: int, rounding: RoundMode) -> np.ndarray:
    if shift <= 0:
        return v << -shift
    if rounding == "round_nearest":
        return (v + (1 << (shift - 1))) >> shift
    return v >> shift


def _quantize_vec(x: np.ndarray, spec: FixedSpec) -> np.ndarray:
    scaled = x * float(2 ** spec.frac_bits)
    return _fit_vec(_round_scaled_vec(scaled, spec.rounding), spec)


def _quantize_saturating_vec(y: np.ndarray, spec: FixedSpec) -> np.ndarray:
    raw = np.zeros(y.shape, dtype=np.int64)
    finite = np.isfinite(y)
    raw[finite] = _round_scaled_vec(
        y[finite] * float(2 ** spec.frac_bits), spec.rounding
    )
    raw[np.isposinf(y)] = spec.max_raw
    raw[np.isneginf(y)] = spec.min_raw
    return np.clip(raw, spec.min_raw, spec.max_raw)


def _batch_eval_raw(e: Expr, X: np.ndarray, spec: FixedSpec,
                    luts: Mapping[UnaryOp, "object"] | None) -> np.ndarray:
    if isinstance(e, Const):
        return np.full(X.shape[0], quantize(e.value, spec).raw, dtype=np.int64)
    if isinstance(e, Var):
        return _quantize_vec(X[:, e.index], spec)
    if isinstance(e, Unary):
        v = _batch_eval_raw(e.child, X, spec, luts)
        if e.op is UnaryOp.SQUARE:
            shift = spec.frac_bits
            return _fit_vec(_shift_round_vec(v * v, shift, spec.rounding), spec)
        u = v.astype(np.float64) * spec.resolution
        if luts is None:
            with np.errstate(all="ignore"):
                y = _UNARY_VEC[e.op](u)
            return _quantize_saturating_vec(y, spec)
        table = luts.get(e.op)
        if table is None:
            raise ConfigError(f"no LUT configured for operator {e.op.value!r}")
        return table.lookup_raw_batch(u, spec)
    a = _batch_eval_raw(e.left, X, spec, luts)
    b = _batch_eval_raw(e.right, X, spec, luts)
    F = spec.frac_bits
    op = e.op
    if op is BinaryOp.ADD:
        return _fit_vec(a + b, spec)
    if op is BinaryOp.SUB:
        return _fit_vec(a - b, spec)
    if op is BinaryOp.MUL:
        return _fit_vec(_shift_round_vec(a * b, F, spec.rounding), spec)
    # division with the zero-denominator sentinel policy
    out = np.empty(a.shape, dtype=np.int64)
    zero = b == 0
    nz = ~zero
    num = a[nz] << F
    den = b[nz]
    sign = np.sign(den)
    num, den = num * sign, den * sign
    if spec.rounding == "round_nearest":
        q = (2 * num + den) // (2 * den)
    else:
        q = num // den
    out[nz] = _fit_vec(q, spec)
    out[zero & (a > 0)] = spec.max_raw
    out[zero & (a < 0)] = spec.min_raw
    out[zero & (a == 0)] = 0
    return out


def _log_abs_vec(u: np.ndarray) -> np.ndarray:
    from .expr import LOG_ZERO_SENTINEL

    out = np.log(np.abs(u))
    out[u == 0.0] = LOG_ZERO_SENTINEL
    return out


_UNARY_VEC = {
    UnaryOp.SIN: np.sin,
    UnaryOp.TAN: np.tan,
    UnaryOp.SINH: np.sinh,
    UnaryOp.COSH: np.cosh,
    UnaryOp.EXP: np.exp,
    UnaryOp.GAUSS: lambda u: np.exp(-(u * u)),
    UnaryOp.LOG_ABS: _log_abs_vec,
}
