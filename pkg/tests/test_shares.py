import numpy as np
import pytest

from spdzbio.dealer import Counts, deal, global_alpha
from spdzbio.errors import FieldMismatchError
from spdzbio.shares import AuthShare, reconstruct, sh_add_public, sh_scale


@pytest.fixture
def masks(big):
    b1, b2 = deal(big, Counts(0, 0, 0, 20), seed=4)
    return b1, b2, global_alpha(b1, b2)


def test_mask_shares_reconstruct_with_valid_mac(masks):
    b1, b2, alpha = masks
    rec = reconstruct(b1.masks.m, b2.masks.m, alpha)
    assert rec.mac_ok.all()
    assert np.array_equal(rec.value[:20], b1.masks.plain[:20])
    assert np.array_equal(rec.value[20:], b2.masks.plain[20:])


def test_linear_operations(masks, big):
    b1, b2, alpha = masks
    x1, x2 = b1.masks.m[:10], b2.masks.m[:10]
    y1, y2 = b1.masks.m[10:20], b2.masks.m[10:20]
    x = reconstruct(x1, x2, alpha).value.astype(object)
    y = reconstruct(y1, y2, alpha).value.astype(object)
    p = big.p

    rec = reconstruct(x1 + y1, x2 + y2, alpha)
    assert rec.mac_ok.all() and rec.value.tolist() == ((x + y) % p).tolist()
    rec = reconstruct(x1 - y1, x2 - y2, alpha)
    assert rec.mac_ok.all() and rec.value.tolist() == ((x - y) % p).tolist()
    rec = reconstruct(sh_scale(7, x1), 7 * x2, alpha)
    assert rec.mac_ok.all() and rec.value.tolist() == ((7 * x) % p).tolist()
    rec = reconstruct(sh_add_public(5, x1, b1.key), sh_add_public(5, x2, b2.key), alpha)
    assert rec.mac_ok.all() and rec.value.tolist() == ((x + 5) % p).tolist()
    rec = reconstruct(x1.total(), x2.total(), alpha)
    assert rec.mac_ok.all() and int(np.ravel(rec.value)[0]) == int(x.sum() % p)


def test_tampered_share_fails_mac(masks):
    b1, b2, alpha = masks
    x1, x2 = b1.masks.m[:5], b2.masks.m[:5]
    bad = AuthShare(x1.params, x1.params.add(x1.val, np.ones(5, dtype=np.uint64)), x1.mac, x1.sid)
    assert not reconstruct(bad, x2, alpha).mac_ok.any()


def test_mixing_sessions_is_rejected(big, small):
    a1, _ = deal(big, Counts(0, 0, 0, 2), seed=1)
    c1, _ = deal(big, Counts(0, 0, 0, 2), seed=2)
    with pytest.raises(FieldMismatchError):
        a1.masks.m + c1.masks.m
    s1, _ = deal(small, Counts(0, 0, 0, 2), seed=1)
    with pytest.raises(FieldMismatchError):
        a1.masks.m - s1.masks.m


def test_concat_reshape_zeros(big):
    z = AuthShare.zeros(big, (2, 3), b"id")
    assert z.shape == (2, 3)
    flat = z.reshape(6)
    both = AuthShare.concat([flat, flat])
    assert len(both) == 12 and not both.val.any()
