import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from avcc.errors import QuantOverflow, ShapeMismatch, ZeroInverse
from avcc.field import (
    DEFAULT_Q,
    PrimeField,
    QuantParams,
    dequantize,
    field_add,
    field_inv,
    field_mul,
    field_sub,
    quantize,
)

F7 = PrimeField(7)
F257 = PrimeField(257)
FQ = PrimeField()


def brute_inverse(a, q):
    return next(x for x in range(1, q) if a * x % q == 1)


def test_default_modulus():
    assert DEFAULT_Q == 2**25 - 39
    assert FQ.q == 33554393


def test_small_field_examples():
    assert F7.add(3, 5) == 1
    assert F7.mul(3, 5) == 1
    assert FQ.mul(FQ.q - 1, FQ.q - 1) == 1
    assert F7.inv(3) == 5
    assert F7.inv(1) == 1


def test_free_functions():
    assert field_add(F7(3), F7(5), F7) == 1
    assert field_sub(3, 5, F7) == 5
    assert field_mul(F7(3), 5, F7) == 1
    assert field_inv(F257(2), F257) == 129
    with pytest.raises(ValueError):
        field_add(F257(1), 1, F7)


def test_inverse_matches_brute_force_scan():
    # frozen oracle: brute-force scan of 2x = 1 mod 257
    assert brute_inverse(2, 257) == 129
    assert F257.inv(2) == 129
    for a in range(1, 257):
        assert F257.inv(a) == brute_inverse(a, 257)


def test_zero_has_no_inverse():
    with pytest.raises(ZeroInverse):
        F7.inv(0)
    with pytest.raises(ZeroDivisionError):
        F7.div(3, 0)


def test_rejects_composite_modulus():
    with pytest.raises(ValueError):
        PrimeField(15)


def test_field_element_operators():
    a, b = F7(3), F7(5)
    assert a + b == 1
    assert a * b == 1
    assert a - b == 5
    assert -a == 4
    assert a / b == F7.mul(3, F7.inv(5))
    assert a.inv() == 5
    with pytest.raises(ValueError):
        a + F257(1)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 256), st.integers(0, 256), st.integers(0, 256))
def test_field_axioms(a, b, c):
    F = F257
    assert F.add(a, b) == F.add(b, a)
    assert F.mul(a, b) == F.mul(b, a)
    assert F.add(F.add(a, b), c) == F.add(a, F.add(b, c))
    assert F.mul(F.mul(a, b), c) == F.mul(a, F.mul(b, c))
    assert F.mul(a, F.add(b, c)) == F.add(F.mul(a, b), F.mul(a, c))
    assert F.add(a, F.neg(a)) == 0
    if a % 257:
        assert F.mul(a, F.inv(a)) == 1


def test_matmul_matches_python_ints():
    rng = np.random.default_rng(0)
    A = FQ.random(rng, (5, 40))
    B = FQ.random(rng, (40, 3))
    expect = (A.astype(object) @ B.astype(object)) % FQ.q
    assert np.array_equal(FQ.matmul(A, B), expect.astype(np.int64))


def test_matmul_long_inner_dimension_is_chunked():
    F = PrimeField(2**31 - 1)
    assert F.max_fast_len == 2
    rng = np.random.default_rng(1)
    A = F.random(rng, (3, 50))
    B = F.random(rng, (50, 2))
    expect = (A.astype(object) @ B.astype(object)) % F.q
    assert np.array_equal(F.matmul(A, B), expect.astype(np.int64))
    with pytest.raises(ShapeMismatch):
        F.matmul(A, A)


def test_large_field_uses_python_ints():
    F = PrimeField(2**61 - 1)
    assert F.dtype is object
    rng = np.random.default_rng(2)
    A = F.random(rng, (3, 4))
    B = F.random(rng, (4, 2))
    expect = (A @ B) % F.q
    assert np.array_equal(F.matmul(A, B), expect)
    assert F.dot(A[0], B[:, 0]) == int(expect[0, 0])


def test_dot_per_term_reduction():
    rng = np.random.default_rng(3)
    a = FQ.random(rng, 10_000)
    b = FQ.random(rng, 10_000)
    assert FQ.dot(a, b) == int(sum(int(x) * int(y) for x, y in zip(a, b)) % FQ.q)


def test_quantize_examples():
    qp = QuantParams(5)
    assert quantize(0.5, qp, FQ) == 16
    assert quantize(0.0, QuantParams(9), FQ) == 0
    assert quantize(-1.0, qp, F257) == 225
    assert dequantize(16, 5, FQ) == 0.5
    assert dequantize(225, 5, F257) == -1.0
    assert dequantize(0, 5, FQ) == 0.0


def test_quantize_rounds_half_away_from_zero():
    qp = QuantParams(0)
    assert quantize(2.5, qp, FQ) == 3
    assert quantize(-2.5, qp, FQ) == FQ.q - 3


def test_quantize_overflow():
    with pytest.raises(QuantOverflow):
        quantize(5.0, QuantParams(5), F257)
    with pytest.raises(QuantOverflow):
        quantize(np.array([np.nan]), QuantParams(5), FQ)


def test_quant_params_need_headroom():
    with pytest.raises(ValueError):
        QuantParams(7).check(F257)
    QuantParams(6).check(F257)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1000, 1000, allow_nan=False), min_size=1, max_size=20))
def test_quantize_round_trip_within_half_step(xs):
    x = np.array(xs)
    back = dequantize(quantize(x, QuantParams(5), FQ), 5, FQ)
    assert np.all(np.abs(back - x) <= 2.0**-6 + 1e-12)
