"""Trusted-dealer preprocessing: MAC keys, Beaver triples, square pairs,
bit-decomposed random values and input masks, plus the bundle file format."""

from __future__ import annotations

import struct
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import BundleFormatError
from .field import U64, EntropySource, FieldParams
from .shares import AuthShare, MacKeyShare

MAGIC = b"SMB1"
VERSION = 1
# magic, version, party, p, four counts, bundle id, alpha share
_HEADER = struct.Struct("<4sHBQIIII16sQ")

PROTOCOLS = ("iris", "face", "multimodal")


@dataclass(frozen=True, eq=False)
class BeaverTriples:
    a: AuthShare
    b: AuthShare
    c: AuthShare

    def __len__(self):
        return len(self.a)

    def __getitem__(self, idx) -> "BeaverTriples":
        return BeaverTriples(self.a[idx], self.b[idx], self.c[idx])


@dataclass(frozen=True, eq=False)
class SquarePairs:
    a: AuthShare
    a2: AuthShare

    def __len__(self):
        return len(self.a)

    def __getitem__(self, idx) -> "SquarePairs":
        return SquarePairs(self.a[idx], self.a2[idx])


@dataclass(frozen=True, eq=False)
class RandomBits:
    r: AuthShare  # shape (n,)
    bits: AuthShare  # shape (n, ell), LSB first

    def __len__(self):
        return len(self.r)

    def __getitem__(self, idx) -> "RandomBits":
        return RandomBits(self.r[idx], self.bits[idx])


@dataclass(frozen=True, eq=False)
class InputMasks:
    m: AuthShare
    owner: np.ndarray  # uint8 party id per record
    plain: np.ndarray  # mask value where owner == this party, 0 elsewhere

    def __len__(self):
        return len(self.m)


@dataclass(frozen=True)
class Counts:
    triples: int = 0
    squares: int = 0
    randbits: int = 0
    masks_per_party: int = 0

    def __add__(self, other: "Counts") -> "Counts":
        return Counts(*(getattr(self, f.name) + getattr(other, f.name) for f in fields(self)))

    def scaled(self, factor: int) -> "Counts":
        return Counts(*(getattr(self, f.name) * factor for f in fields(self)))


@dataclass(frozen=True, eq=False)
class PreprocessingBundle:
    params: FieldParams
    party: int
    key: MacKeyShare
    triples: BeaverTriples
    squares: SquarePairs
    randbits: RandomBits
    masks: InputMasks
    bundle_id: bytes

    @property
    def counts(self) -> Counts:
        per_party = int(np.count_nonzero(self.masks.owner == 1))
        return Counts(len(self.triples), len(self.squares), len(self.randbits), per_party)

    def equals(self, other: "PreprocessingBundle") -> bool:
        def same(x: AuthShare, y: AuthShare) -> bool:
            return np.array_equal(x.val, y.val) and np.array_equal(x.mac, y.mac)

        return (
            self.params == other.params
            and self.party == other.party
            and self.key == other.key
            and self.bundle_id == other.bundle_id
            and same(self.triples.a, other.triples.a)
            and same(self.triples.b, other.triples.b)
            and same(self.triples.c, other.triples.c)
            and same(self.squares.a, other.squares.a)
            and same(self.squares.a2, other.squares.a2)
            and same(self.randbits.r, other.randbits.r)
            and same(self.randbits.bits, other.randbits.bits)
            and same(self.masks.m, other.masks.m)
            and np.array_equal(self.masks.owner, other.masks.owner)
            and np.array_equal(self.masks.plain, other.masks.plain)
        )


def estimate(
    protocol: str,
    n_bits: int = 0,
    k: int = 0,
    ell: int = 46,
    *,
    public_thresholds: bool = False,
    lean: bool = False,
) -> Counts:
    """Preprocessing needed for one authentication run.

    Defaults reproduce the closed forms 3N+l+1 (iris), l triples + k squares
    (face) and 3N+l+6 triples + k squares (multimodal).
    """
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r}")
    if protocol in ("iris", "multimodal") and n_bits < 1:
        raise ValueError("iris template length N must be at least 1")
    if protocol in ("face", "multimodal") and not 1 <= k <= 10:
        raise ValueError("number of eigenfaces k must be in [1, 10]")
    if ell < 2:
        raise ValueError("bit length must be at least 2")
    private = 0 if public_thresholds else 1
    if protocol == "iris":
        return Counts(3 * n_bits + ell + private, 0, 1, 2 * n_bits + private)
    if protocol == "face":
        return Counts(ell, k, 1, k)
    return Counts(3 * n_bits + ell + fusion_products(public_thresholds, lean), k, 1, 2 * n_bits + k + private)


def fusion_products(public_range: bool, lean: bool) -> int:
    """Share-by-share products in the fusion block (see ``protocols.fuse_authenticate``)."""
    if lean:
        return 1 if public_range else 3
    return 4 if public_range else 6


def deal(
    params: FieldParams,
    counts: Counts,
    seed=None,
    *,
    r_values=None,
) -> tuple[PreprocessingBundle, PreprocessingBundle]:
    """Generate correlated randomness for both parties.

    ``r_values`` pins the comparison masks r (testing hook); otherwise they
    are uniform on F_p.
    """
    if min(counts.triples, counts.squares, counts.randbits, counts.masks_per_party) < 0:
        raise ValueError("counts must be non-negative")
    src = seed if isinstance(seed, EntropySource) else EntropySource(seed)
    f = params
    bundle_id = src.bytes(16)
    alpha = int(f.rand(1, src)[0])
    alpha1 = int(f.rand(1, src)[0])
    alpha2 = (alpha - alpha1) % f.p
    alpha_arr = U64(alpha)

    def share(values: np.ndarray) -> tuple[AuthShare, AuthShare]:
        v1 = f.rand(values.shape, src)
        m = f.mul(values, np.full(values.shape, alpha_arr, dtype=U64))
        m1 = f.rand(values.shape, src)
        return (
            AuthShare(f, v1, m1, bundle_id),
            AuthShare(f, f.sub(values, v1), f.sub(m, m1), bundle_id),
        )

    a = f.rand(counts.triples, src)
    b = f.rand(counts.triples, src)
    (a1, a2), (b1, b2), (c1, c2) = share(a), share(b), share(f.mul(a, b))

    sq = f.rand(counts.squares, src)
    (s1, s2), (q1, q2) = share(sq), share(f.mul(sq, sq))

    if r_values is None:
        r = f.rand(counts.randbits, src)
    else:
        r = f.reduce(np.asarray(r_values))
        if r.shape != (counts.randbits,):
            raise ValueError("r_values must provide exactly counts.randbits values")
    (r1, r2), (rb1, rb2) = share(r), share(f.bits(r))

    per = counts.masks_per_party
    owner = np.concatenate([np.full(per, 1, dtype=np.uint8), np.full(per, 2, dtype=np.uint8)])
    mplain = f.rand(2 * per, src)
    mk1, mk2 = share(mplain)
    zero = np.zeros_like(mplain)

    bundles = []
    for party, (ta, tb, tc, sa, sa2, rr, rbits, mk, alpha_i) in (
        (1, (a1, b1, c1, s1, q1, r1, rb1, mk1, alpha1)),
        (2, (a2, b2, c2, s2, q2, r2, rb2, mk2, alpha2)),
    ):
        plain = np.where(owner == party, mplain, zero)
        bundles.append(
            PreprocessingBundle(
                params=f,
                party=party,
                key=MacKeyShare(f, party, alpha_i),
                triples=BeaverTriples(ta, tb, tc),
                squares=SquarePairs(sa, sa2),
                randbits=RandomBits(rr, rbits),
                masks=InputMasks(mk, owner.copy(), plain),
                bundle_id=bundle_id,
            )
        )
    return bundles[0], bundles[1]


def global_alpha(b1: PreprocessingBundle, b2: PreprocessingBundle) -> int:
    """Dealer-side MAC key, for reconstruction in tests."""
    return (b1.key.alpha + b2.key.alpha) % b1.params.p


# -- file format --------------------------------------------------------------


def _interleave(*shares: AuthShare) -> np.ndarray:
    """Rows of (val, mac) pairs per record; a multi-bit share emits one pair per bit."""
    n = len(shares[0].val)
    if n == 0:
        return np.zeros((0,), dtype="<u8")
    out = []
    for s in shares:
        v = s.val.reshape(n, -1)
        m = s.mac.reshape(n, -1)
        out.append(np.stack([v, m], axis=-1).reshape(n, -1))
    return np.concatenate(out, axis=1).astype("<u8")


def encode_bundle(bundle: PreprocessingBundle) -> bytes:
    c = bundle.counts
    m = bundle.masks
    header = _HEADER.pack(
        MAGIC, VERSION, bundle.party, bundle.params.p,
        c.triples, c.squares, c.randbits, len(m),
        bundle.bundle_id, bundle.key.alpha,
    )
    t, s, rb = bundle.triples, bundle.squares, bundle.randbits
    parts = [
        header,
        _interleave(t.a, t.b, t.c).tobytes(),
        _interleave(s.a, s.a2).tobytes(),
        _interleave(rb.r, rb.bits).tobytes(),
    ]
    rec = bytearray()
    for i in range(len(m)):
        owner = int(m.owner[i])
        rec += struct.pack("<BQQ", owner, int(m.m.val[i]), int(m.m.mac[i]))
        if owner == bundle.party:
            rec += struct.pack("<Q", int(m.plain[i]))
    parts.append(bytes(rec))
    return b"".join(parts)


def decode_bundle(data: bytes) -> PreprocessingBundle:
    if len(data) < _HEADER.size:
        raise BundleFormatError("truncated header", len(data))
    magic, version, party, p, nt, ns, nr, nm, bundle_id, alpha_i = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise BundleFormatError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise BundleFormatError(f"unsupported version {version}", 4)
    if party not in (1, 2):
        raise BundleFormatError(f"bad party id {party}", 6)
    try:
        f = FieldParams(p)
    except ValueError as exc:
        raise BundleFormatError(str(exc), 7) from None
    if alpha_i >= p:
        raise BundleFormatError("MAC key share not reduced", _HEADER.size - 8)
    offset = _HEADER.size

    def take(n_records: int, width: int, what: str) -> np.ndarray:
        nonlocal offset
        nbytes = n_records * width * 8
        if offset + nbytes > len(data):
            raise BundleFormatError(f"truncated {what} section", len(data))
        arr = np.frombuffer(data, dtype="<u8", count=n_records * width, offset=offset)
        if arr.size and int(arr.max()) >= p:
            bad = int(np.argmax(arr >= p))
            raise BundleFormatError(f"unreduced field element in {what}", offset + 8 * bad)
        offset += nbytes
        return arr.astype(U64).reshape(n_records, width)

    def unpack(block: np.ndarray, start: int) -> AuthShare:
        return AuthShare(f, block[:, start].copy(), block[:, start + 1].copy(), bundle_id)

    tr = take(nt, 6, "triples")
    sq = take(ns, 4, "squares")
    rb = take(nr, 2 + 2 * f.ell, "randbits")
    bits_block = rb[:, 2:].reshape(nr, f.ell, 2)
    bits = AuthShare(f, bits_block[..., 0].copy(), bits_block[..., 1].copy(), bundle_id)

    owner = np.zeros(nm, dtype=np.uint8)
    mval = np.zeros(nm, dtype=U64)
    mmac = np.zeros(nm, dtype=U64)
    plain = np.zeros(nm, dtype=U64)
    for i in range(nm):
        if offset + 17 > len(data):
            raise BundleFormatError("truncated mask record", len(data))
        o, v, mc = struct.unpack_from("<BQQ", data, offset)
        if o not in (1, 2):
            raise BundleFormatError(f"bad mask owner marker {o}", offset)
        if v >= p or mc >= p:
            raise BundleFormatError("unreduced field element in masks", offset + 1)
        offset += 17
        owner[i], mval[i], mmac[i] = o, v, mc
        if o == party:
            if offset + 8 > len(data):
                raise BundleFormatError("truncated mask record", len(data))
            (pl,) = struct.unpack_from("<Q", data, offset)
            if pl >= p:
                raise BundleFormatError("unreduced mask value", offset)
            plain[i] = pl
            offset += 8
    if offset != len(data):
        raise BundleFormatError("trailing bytes after last section", offset)

    return PreprocessingBundle(
        params=f,
        party=party,
        key=MacKeyShare(f, party, alpha_i),
        triples=BeaverTriples(unpack(tr, 0), unpack(tr, 2), unpack(tr, 4)),
        squares=SquarePairs(unpack(sq, 0), unpack(sq, 2)),
        randbits=RandomBits(unpack(rb, 0), bits),
        masks=InputMasks(AuthShare(f, mval, mmac, bundle_id), owner, plain),
        bundle_id=bundle_id,
    )


def write_bundle(bundle: PreprocessingBundle, path) -> None:
    Path(path).write_bytes(encode_bundle(bundle))


def read_bundle(path) -> PreprocessingBundle:
    return decode_bundle(Path(path).read_bytes())
