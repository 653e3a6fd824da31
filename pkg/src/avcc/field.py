"""Prime-field arithmetic and the fixed-point embedding of reals into F_q.

Scalars are plain Python ints in ``[0, q)`` (or :class:`FieldElement` when
operator syntax is wanted). Vectors and matrices are numpy arrays: ``int64``
whenever ``(q-1)**2`` fits a signed 64-bit product, ``object`` otherwise.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from sympy import isprime

from .errors import QuantOverflow, ShapeMismatch, ZeroInverse

DEFAULT_Q = 2**25 - 39
INT64_MAX = 2**63 - 1


@numba.njit("int64(int64[:], int64[:], int64)", cache=True)
def _dot_mod(a, b, q):
    acc = 0
    for i in range(a.shape[0]):
        acc = (acc + a[i] * b[i]) % q
    return acc


class PrimeField:
    """The field of integers modulo a prime ``q < 2**63``.

    ``fast_path`` allows a single int64 accumulator for matrix products
    when ``n * (q-1)**2`` cannot overflow; longer inner dimensions (or
    ``fast_path=False``) accumulate in reduced chunks instead.
    """

    def __init__(self, q: int = DEFAULT_Q, fast_path: bool = True):
        q = int(q)
        if q < 2 or q > INT64_MAX:
            raise ValueError(f"modulus {q} outside [2, 2**63)")
        if not isprime(q):
            raise ValueError(f"modulus {q} is not prime")
        self.q = q
        self.half = (q - 1) // 2
        self.fast_path = fast_path
        self.small = (q - 1) ** 2 + (q - 1) <= INT64_MAX
        self.dtype = np.int64 if self.small else object
        # longest inner dimension a single int64 accumulator can absorb
        self.max_fast_len = (INT64_MAX // (q - 1) ** 2) if q > 1 else 0

    def __repr__(self):
        return f"PrimeField(q={self.q})"

    def __eq__(self, other):
        return isinstance(other, PrimeField) and other.q == self.q

    def __hash__(self):
        return hash(("PrimeField", self.q))

    def __call__(self, value: int) -> FieldElement:
        return FieldElement(int(value) % self.q, self)

    # scalar operations on canonical ints

    def add(self, a: int, b: int) -> int:
        return (a + b) % self.q

    def sub(self, a: int, b: int) -> int:
        return (a - b) % self.q

    def mul(self, a: int, b: int) -> int:
        return (a * b) % self.q

    def neg(self, a: int) -> int:
        return -a % self.q

    def inv(self, a: int) -> int:
        a %= self.q
        if a == 0:
            raise ZeroInverse("0 has no multiplicative inverse")
        return pow(a, self.q - 2, self.q)

    def div(self, a: int, b: int) -> int:
        return self.mul(a, self.inv(b))

    # array operations

    def array(self, values) -> np.ndarray:
        """Canonical field array from integers (negatives wrap around)."""
        arr = np.asarray(values)
        if self.small:
            if arr.dtype == object:
                return np.array([int(v) % self.q for v in arr.ravel()],
                                dtype=np.int64).reshape(arr.shape)
            return np.mod(arr.astype(np.int64), self.q)
        flat = [int(v) % self.q for v in arr.ravel()]
        out = np.empty(len(flat), dtype=object)
        out[:] = flat
        return out.reshape(arr.shape)

    def zeros(self, shape) -> np.ndarray:
        zeros = np.zeros(shape, dtype=np.int64)
        return zeros if self.small else zeros.astype(object)

    def random(self, rng: np.random.Generator, shape) -> np.ndarray:
        """Uniform samples from F_q."""
        vals = rng.integers(0, self.q, size=shape, dtype=np.int64)
        return vals if self.small else self.array(vals.astype(object))

    def matmul(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Exact ``a @ b mod q`` for canonical operands."""
        if a.shape[-1] != b.shape[0]:
            raise ShapeMismatch(f"cannot multiply {a.shape} by {b.shape}")
        n = a.shape[-1]
        if not self.small:
            return np.mod(a.astype(object) @ b.astype(object), self.q)
        if self.fast_path and n <= self.max_fast_len:
            return np.mod(a @ b, self.q)
        step = max(1, self.max_fast_len)
        out = None
        for s in range(0, n, step):
            part = np.mod(a[..., s:s + step] @ b[s:s + step], self.q)
            out = part if out is None else np.mod(out + part, self.q)
        if out is None:
            shape = a.shape[:-1] + b.shape[1:]
            return self.zeros(shape)
        return out

    def dot(self, a: np.ndarray, b: np.ndarray) -> int:
        """Inner product with per-term reduction; never overflows."""
        if a.shape != b.shape or a.ndim != 1:
            raise ShapeMismatch(f"dot of {a.shape} and {b.shape}")
        if self.small:
            return int(_dot_mod(a, b, self.q))
        acc = 0
        for x, y in zip(a, b):
            acc = (acc + int(x) * int(y)) % self.q
        return acc

    def lift(self, a):
        """Signed representative in ``[-(q-1)/2, (q-1)/2]``."""
        if np.isscalar(a) or isinstance(a, int):
            a = int(a)
            return a - self.q if a > self.half else a
        arr = np.asarray(a)
        return np.where(arr > self.half, arr - self.q, arr)


@dataclass(frozen=True)
class FieldElement:
    value: int
    field: PrimeField

    def _coerce(self, other):
        if isinstance(other, FieldElement):
            if other.field != self.field:
                raise ValueError("operands from different fields")
            return other.value
        return int(other) % self.field.q

    def __add__(self, other):
        return FieldElement(self.field.add(self.value, self._coerce(other)), self.field)

    __radd__ = __add__

    def __sub__(self, other):
        return FieldElement(self.field.sub(self.value, self._coerce(other)), self.field)

    def __rsub__(self, other):
        return FieldElement(self.field.sub(self._coerce(other), self.value), self.field)

    def __mul__(self, other):
        return FieldElement(self.field.mul(self.value, self._coerce(other)), self.field)

    __rmul__ = __mul__

    def __neg__(self):
        return FieldElement(self.field.neg(self.value), self.field)

    def __truediv__(self, other):
        return FieldElement(self.field.div(self.value, self._coerce(other)), self.field)

    def inv(self):
        return FieldElement(self.field.inv(self.value), self.field)

    def __eq__(self, other):
        if isinstance(other, FieldElement):
            return self.field == other.field and self.value == other.value
        if isinstance(other, (int, np.integer)):
            return self.value == int(other) % self.field.q
        return NotImplemented

    def __hash__(self):
        return hash((self.value, self.field.q))

    def __int__(self):
        return self.value

    def __repr__(self):
        return f"{self.value} (mod {self.field.q})"


def _value(a, F: PrimeField) -> int:
    if isinstance(a, FieldElement):
        if a.field != F:
            raise ValueError("operand from a different field")
        return a.value
    return int(a) % F.q


def field_add(a, b, F: PrimeField) -> FieldElement:
    return F(F.add(_value(a, F), _value(b, F)))


def field_sub(a, b, F: PrimeField) -> FieldElement:
    return F(F.sub(_value(a, F), _value(b, F)))


def field_mul(a, b, F: PrimeField) -> FieldElement:
    return F(F.mul(_value(a, F), _value(b, F)))


def field_inv(a, F: PrimeField) -> FieldElement:
    return F(F.inv(_value(a, F)))


@dataclass(frozen=True)
class QuantParams:
    """Number of fractional bits kept when embedding reals."""

    l: int = 5

    def check(self, field: PrimeField):
        if self.l < 0:
            raise ValueError("precision bits must be non-negative")
        if 2**self.l >= (field.q - 1) / 2:
            raise ValueError(f"2**{self.l} leaves no headroom in F_{field.q}")


def _round_half_away(x):
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize(x, qp: QuantParams, field: PrimeField):
    """Map reals to F_q: ``round(2**l * x)``, negatives as ``q - |.|``.

    Accepts a scalar (returns int) or an array (returns a field array).
    Ties round away from zero so that ``quantize(-x) == q - quantize(x)``.
    """
    scaled = _round_half_away(np.asarray(x, dtype=np.float64) * 2.0**qp.l)
    if not np.all(np.isfinite(scaled)):
        raise QuantOverflow("cannot quantize a non-finite value")
    peak = float(np.max(np.abs(scaled))) if scaled.size else 0.0
    if peak > field.half:
        raise QuantOverflow(f"|{peak:.0f}| exceeds (q-1)/2 = {field.half}")
    if scaled.ndim == 0:
        return int(scaled) % field.q
    if field.small:
        return np.mod(scaled.astype(np.int64), field.q)
    return field.array(scaled.astype(np.int64))


def dequantize(a, scale_exponent: int, field: PrimeField):
    """Inverse embedding: signed lift, then scale by ``2**-scale_exponent``.

    ``scale_exponent`` is ``l`` times the number of quantized factors that
    were multiplied together to produce ``a``.
    """
    lifted = field.lift(a)
    if isinstance(lifted, int):
        return lifted / 2.0**scale_exponent
    return np.asarray(lifted, dtype=np.float64) / 2.0**scale_exponent
