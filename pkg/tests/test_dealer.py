import numpy as np
import pytest

from spdzbio.dealer import (
    Counts,
    decode_bundle,
    deal,
    encode_bundle,
    estimate,
    global_alpha,
    read_bundle,
    write_bundle,
)
from spdzbio.errors import BundleFormatError
from spdzbio.shares import reconstruct


@pytest.fixture(scope="module")
def pair(big):
    b1, b2 = deal(big, Counts(50, 7, 5, 9), seed=11)
    return b1, b2, global_alpha(b1, b2)


def open_(pair, getter):
    b1, b2, alpha = pair
    rec = reconstruct(getter(b1), getter(b2), alpha)
    assert rec.mac_ok.all()
    return rec.value.astype(object)


def test_triples_are_products(pair, big):
    a = open_(pair, lambda b: b.triples.a)
    b = open_(pair, lambda b: b.triples.b)
    c = open_(pair, lambda b: b.triples.c)
    assert ((a * b) % big.p == c).all()


def test_squares(pair, big):
    a = open_(pair, lambda b: b.squares.a)
    a2 = open_(pair, lambda b: b.squares.a2)
    assert ((a * a) % big.p == a2).all()


def test_random_bits_match_r(pair, big):
    r = open_(pair, lambda b: b.randbits.r)
    bits = open_(pair, lambda b: b.randbits.bits)
    assert bits.shape == (5, big.ell)
    assert set(bits.ravel().tolist()) <= {0, 1}
    assert [sum(int(v) << i for i, v in enumerate(row)) for row in bits] == r.tolist()


def test_masks_are_known_only_to_owner(pair):
    b1, b2, _ = pair
    m = open_(pair, lambda b: b.masks.m)
    own1 = b1.masks.owner == 1
    assert own1.sum() == 9 and (b1.masks.owner == b2.masks.owner).all()
    assert (b1.masks.plain[own1] == m[own1]).all()
    assert (b2.masks.plain[~own1] == m[~own1]).all()
    assert not b1.masks.plain[~own1].any() and not b2.masks.plain[own1].any()


def test_pinned_r_values(big):
    b1, b2 = deal(big, Counts(0, 0, 3, 0), seed=1, r_values=[0, 5, big.p - 1])
    rec = reconstruct(b1.randbits.r, b2.randbits.r, global_alpha(b1, b2))
    assert rec.value.tolist() == [0, 5, big.p - 1]
    with pytest.raises(ValueError):
        deal(big, Counts(0, 0, 3, 0), r_values=[1, 2])


def test_estimate_closed_forms():
    assert estimate("iris", 1600, 0, 46) == Counts(4847, 0, 1, 3201)
    assert estimate("face", 0, 3, 46) == Counts(46, 3, 1, 3)
    assert estimate("multimodal", 1600, 1, 46) == Counts(4852, 1, 1, 3202)
    assert estimate("iris", 1600, 0, 46, public_thresholds=True).triples == 4846
    assert estimate("multimodal", 64, 2, 16, lean=True).triples == 3 * 64 + 16 + 3
    with pytest.raises(ValueError):
        estimate("face", 0, 11, 46)
    with pytest.raises(ValueError):
        estimate("iris", 0, 0, 46)
    with pytest.raises(ValueError):
        estimate("palm", 1, 1, 46)


def test_deal_is_deterministic_with_seed(big):
    a = deal(big, Counts(4, 1, 1, 2), seed=3)
    b = deal(big, Counts(4, 1, 1, 2), seed=3)
    c = deal(big, Counts(4, 1, 1, 2), seed=4)
    assert a[0].equals(b[0]) and a[1].equals(b[1])
    assert a[0].bundle_id != c[0].bundle_id


def test_file_roundtrip(pair, tmp_path):
    b1, b2, _ = pair
    for b in (b1, b2):
        path = tmp_path / f"x.p{b.party}"
        write_bundle(b, path)
        back = read_bundle(path)
        assert back.equals(b) and back.counts == b.counts and back.key.alpha == b.key.alpha


def test_decode_rejects_corruption(pair, big):
    data = encode_bundle(pair[0])
    with pytest.raises(BundleFormatError) as e:
        decode_bundle(b"XXXX" + data[4:])
    assert e.value.offset == 0
    with pytest.raises(BundleFormatError):
        decode_bundle(data[:-3])
    with pytest.raises(BundleFormatError):
        decode_bundle(data + b"\0")
    with pytest.raises(BundleFormatError):
        decode_bundle(data[:10])
    # overwrite the first triple word with an unreduced value
    head = 4 + 2 + 1 + 8 + 4 * 4 + 16 + 8
    bad = data[:head] + (big.p).to_bytes(8, "little") + data[head + 8:]
    with pytest.raises(BundleFormatError) as e:
        decode_bundle(bad)
    assert e.value.offset == head
