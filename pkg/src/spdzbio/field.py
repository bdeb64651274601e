"""Prime-field arithmetic over F_p for p below 2^63.

Scalars are plain ``FieldElement`` values; the engine itself works on numpy
``uint64`` arrays through the vector methods on :class:`FieldParams`.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import FieldMismatchError

DEFAULT_PRIME = 67280421310721
U64 = np.uint64

_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin, exact for every n < 3.3e24."""
    if n < 2:
        return False
    for q in _MR_BASES:
        if n % q == 0:
            return n == q
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in _MR_BASES:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


class EntropySource:
    """Byte stream for share and mask generation.

    With a seed the stream is Philox keyed by SHA-256 of the seed, so runs
    are reproducible (a test and benchmarking aid, not a CSPRNG); without
    one it reads the OS CSPRNG.
    """

    def __init__(self, seed: int | bytes | str | None = None):
        if seed is None:
            self._key = None
        else:
            if isinstance(seed, int):
                seed = seed.to_bytes(16, "little", signed=True)
            elif isinstance(seed, str):
                seed = seed.encode()
            self._key = hashlib.sha256(b"spdzbio/drbg" + seed).digest()
        self._gen = None
        if self._key is not None:
            key = np.frombuffer(self._key[:16], dtype="<u8").astype(U64)
            self._gen = np.random.Generator(np.random.Philox(key=key))

    @property
    def seeded(self) -> bool:
        return self._key is not None

    def bytes(self, n: int) -> bytes:
        if self._key is None:
            return os.urandom(n)
        return self.words(-(-n // 8)).astype("<u8").tobytes()[:n]

    def words(self, n: int) -> np.ndarray:
        if n == 0:
            return np.zeros(0, dtype=U64)
        if self._gen is not None:
            return self._gen.bit_generator.random_raw(n).astype(U64, copy=False)
        return np.frombuffer(os.urandom(8 * n), dtype="<u8").astype(U64)

    def child(self, label: str) -> "EntropySource":
        """Independent stream derived from this one (fresh OS entropy if unseeded)."""
        if self._key is None:
            return EntropySource()
        return EntropySource(hashlib.sha256(self._key + label.encode()).digest())


@dataclass(frozen=True)
class FieldParams:
    p: int
    ell: int = field(init=False)

    def __post_init__(self):
        if not 2 < self.p < 2**63:
            raise ValueError(f"modulus {self.p} outside the supported range (2, 2^63)")
        if not is_prime(self.p):
            raise ValueError(f"modulus {self.p} is not prime")
        object.__setattr__(self, "ell", self.p.bit_length())

    @property
    def half(self) -> int:
        """Comparison operands must stay strictly below this bound."""
        return (self.p + 1) // 2

    # -- vector arithmetic on uint64 arrays holding reduced residues --------

    def reduce(self, x) -> np.ndarray:
        """Bring ints or integer arrays (any sign, any size) into [0, p)."""
        arr = np.asarray(x)
        if arr.dtype == U64:
            return arr % U64(self.p) if arr.size and int(arr.max()) >= self.p else arr
        if arr.dtype.kind in "iu" and arr.dtype.itemsize <= 8:
            return np.mod(arr.astype(np.int64), self.p).astype(U64)
        return (arr.astype(object) % self.p).astype(U64)

    # add/sub rely on uint64 wraparound: of the two candidates only the
    # correct residue is below p, so the minimum picks it.
    def add(self, a, b) -> np.ndarray:
        s = np.add(a, b, dtype=U64)
        return np.minimum(s, s - U64(self.p))

    def sub(self, a, b) -> np.ndarray:
        d = np.subtract(a, b, dtype=U64)
        return np.minimum(d, d + U64(self.p))

    def neg(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=U64)
        return np.where(a == 0, a, U64(self.p) - a)

    def mul(self, a, b) -> np.ndarray:
        a = np.asarray(a, dtype=U64)
        b = np.asarray(b, dtype=U64)
        p = self.p
        if p < 2**32:
            return (a * b) % U64(p)
        if a.size <= 8 and b.size <= 8:
            # numpy call overhead dominates tiny operands
            a, b = np.broadcast_arrays(a, b)
            prods = [x * y % p for x, y in zip(a.ravel().tolist(), b.ravel().tolist())]
            return np.array(prods, dtype=U64).reshape(a.shape)
        if p <= 2**50:
            # float quotient is off by at most one; fix up in wrapping uint64
            q = np.floor(a.astype(np.float64) * b.astype(np.float64) / p).astype(U64)
            with np.errstate(over="ignore"):
                r = (a * b - q * U64(p)).view(np.int64)
            r = np.where(r < 0, r + p, r)
            r = np.where(r >= p, r - p, r)
            return r.astype(U64)
        return ((a.astype(object) * b.astype(object)) % p).astype(U64)

    def sum(self, a, axis=None):
        a = np.asarray(a, dtype=U64)
        if axis is None:
            return U64(int(sum(a.ravel().tolist())) % self.p)
        # chunked so that partial sums stay below 2^64
        chunk = max(1, 2 ** (64 - self.ell) - 1)
        a = np.moveaxis(a, axis, -1)
        acc = np.zeros(a.shape[:-1], dtype=U64)
        for start in range(0, a.shape[-1], chunk):
            part = a[..., start:start + chunk].sum(axis=-1, dtype=U64) % U64(self.p)
            acc = self.add(acc, part)
        return acc

    def rand(self, n, src: EntropySource) -> np.ndarray:
        """Uniform residues by rejection sampling on ell-bit draws."""
        shape = (n,) if isinstance(n, int) else tuple(n)
        total = int(np.prod(shape))
        mask = U64((1 << self.ell) - 1)
        out = np.empty(0, dtype=U64)
        while out.size < total:
            need = total - out.size
            draw = src.words(need + need // 2 + 8) & mask
            out = np.concatenate([out, draw[draw < U64(self.p)]])
        return out[:total].reshape(shape)

    def bits(self, a) -> np.ndarray:
        """LSB-first bit decomposition; adds a trailing axis of length ell."""
        a = np.asarray(a, dtype=U64)
        return ((a[..., None] >> np.arange(self.ell, dtype=U64)) & U64(1)).astype(U64)

    def recompose(self, bits) -> np.ndarray:
        bits = np.asarray(bits, dtype=U64)
        weights = U64(1) << np.arange(bits.shape[-1], dtype=U64)
        return (bits * weights).sum(axis=-1, dtype=U64)

    def element(self, value: int) -> "FieldElement":
        return FieldElement(self, value % self.p)


@dataclass(frozen=True)
class FieldElement:
    params: FieldParams
    value: int

    def __post_init__(self):
        if not 0 <= self.value < self.params.p:
            raise ValueError(f"{self.value} is not a residue mod {self.params.p}")

    def __add__(self, other):
        return fe_add(self, other)

    def __sub__(self, other):
        return fe_sub(self, other)

    def __mul__(self, other):
        return fe_mul(self, other)

    def __int__(self):
        return self.value


def _check(a: FieldElement, b: FieldElement) -> int:
    if a.params != b.params:
        raise FieldMismatchError(f"mod {a.params.p} and mod {b.params.p} operands")
    return a.params.p


def fe_add(a: FieldElement, b: FieldElement) -> FieldElement:
    p = _check(a, b)
    return FieldElement(a.params, (a.value + b.value) % p)


def fe_sub(a: FieldElement, b: FieldElement) -> FieldElement:
    p = _check(a, b)
    return FieldElement(a.params, (a.value - b.value) % p)


def fe_mul(a: FieldElement, b: FieldElement) -> FieldElement:
    _check(a, b)
    return FieldElement(a.params, int(a.params.mul(a.value, b.value)))


def fe_rand(params: FieldParams, src: EntropySource) -> FieldElement:
    return FieldElement(params, int(params.rand(1, src)[0]))


def fe_bits(a: FieldElement) -> list[int]:
    return [int(b) for b in a.params.bits(a.value)]


def fe_recompose(params: FieldParams, bits) -> FieldElement:
    return FieldElement(params, sum(int(b) << i for i, b in enumerate(bits)))
