import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from spdzbio.errors import FieldMismatchError
from spdzbio.field import (
    DEFAULT_PRIME,
    EntropySource,
    FieldElement,
    FieldParams,
    fe_add,
    fe_bits,
    fe_mul,
    fe_rand,
    fe_recompose,
    fe_sub,
    is_prime,
)

# one prime per multiplication path: 32-bit direct, float-corrected, object fallback
PRIMES = [251, 65521, 2**31 - 1, 35184372088777, DEFAULT_PRIME, 2**61 - 1]


def test_is_prime_matches_sympy():
    for n in range(2000):
        assert is_prime(n) == sympy.isprime(n)
    rng = np.random.default_rng(1)
    for n in rng.integers(2**40, 2**62, 200).tolist():
        assert is_prime(n) == sympy.isprime(n)
    assert is_prime(DEFAULT_PRIME)
    assert DEFAULT_PRIME.bit_length() == 46


def test_params_validation():
    with pytest.raises(ValueError):
        FieldParams(91)
    with pytest.raises(ValueError):
        FieldParams(2)
    with pytest.raises(ValueError):
        FieldParams(2**64 - 59)
    assert FieldParams(DEFAULT_PRIME).ell == 46
    assert FieldParams(251).half == 126


@pytest.mark.parametrize("p", PRIMES)
def test_vector_ops_match_python(p):
    f = FieldParams(p)
    rng = np.random.default_rng(p % 1000)
    a = f.rand(5000, EntropySource(rng.integers(1 << 30)))
    b = f.rand(5000, EntropySource(rng.integers(1 << 30)))
    # include the edges of the range
    a[:4] = [0, 1, p - 1, p - 2]
    b[:4] = [p - 1, p - 1, p - 1, 0]
    ai, bi = a.tolist(), b.tolist()
    assert f.add(a, b).tolist() == [(x + y) % p for x, y in zip(ai, bi)]
    assert f.sub(a, b).tolist() == [(x - y) % p for x, y in zip(ai, bi)]
    assert f.neg(a).tolist() == [(-x) % p for x in ai]
    assert f.mul(a, b).tolist() == [x * y % p for x, y in zip(ai, bi)]
    assert f.mul(a[:3], b[:3]).tolist() == [x * y % p for x, y in zip(ai[:3], bi[:3])]
    assert int(f.sum(a)) == sum(ai) % p


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(PRIMES), st.integers(0, 2**63), st.integers(0, 2**63))
def test_scalar_ops_property(p, x, y):
    f = FieldParams(p)
    a, b = f.element(x), f.element(y)
    assert int(a + b) == (x + y) % p
    assert int(a - b) == (x - y) % p
    assert int(a * b) == x * y % p
    assert int(fe_recompose(f, fe_bits(a))) == x % p


def test_sum_axis_does_not_overflow(big):
    a = np.full((3, 200_000), big.p - 1, dtype=np.uint64)
    got = big.sum(a, axis=1)
    assert got.tolist() == [(200_000 * (big.p - 1)) % big.p] * 3


def test_reduce_any_sign(big):
    assert big.reduce([-1, big.p, 2 * big.p + 3]).tolist() == [big.p - 1, 0, 3]
    assert big.reduce(np.array([2**64 - 1], dtype=np.uint64)).tolist() == [(2**64 - 1) % big.p]


def test_bits_roundtrip(big):
    v = big.rand(100, EntropySource(3))
    bits = big.bits(v)
    assert bits.shape == (100, 46)
    assert set(np.unique(bits).tolist()) <= {0, 1}
    assert np.array_equal(big.recompose(bits), v)


def test_rand_is_uniform_and_in_range(tiny):
    v = tiny.rand(251 * 400, EntropySource(9))
    assert int(v.max()) < 251
    counts = np.bincount(v.astype(np.int64), minlength=251)
    # chi-square with 250 dof: mean 250, sd about 22
    chi2 = float(((counts - 400) ** 2 / 400).sum())
    assert chi2 < 250 + 6 * 22.4


def test_entropy_source_reproducible_and_children_independent():
    a, b = EntropySource(5), EntropySource(5)
    assert a.bytes(32) == b.bytes(32)
    assert EntropySource(5).child("x").bytes(16) != EntropySource(5).child("y").bytes(16)
    assert EntropySource(5).bytes(16) != EntropySource(6).bytes(16)
    assert not EntropySource().seeded
    assert len(EntropySource().bytes(10)) == 10


def test_element_mismatch_raises():
    a = FieldParams(251).element(3)
    b = FieldParams(65521).element(3)
    for op in (fe_add, fe_sub, fe_mul):
        with pytest.raises(FieldMismatchError):
            op(a, b)
    with pytest.raises(ValueError):
        FieldElement(FieldParams(251), 251)


def test_fe_rand_in_range(big):
    src = EntropySource(1)
    assert all(0 <= fe_rand(big, src).value < big.p for _ in range(50))
