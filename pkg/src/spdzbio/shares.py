"""MAC-authenticated additive shares and their local linear algebra.

Every ``AuthShare`` is one party's view of a whole array of shared values:
``val`` holds the additive value shares a_i and ``mac`` the shares of
alpha * a. None of the operations here communicate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import FieldMismatchError
from .field import U64, FieldParams


@dataclass(frozen=True)
class MacKeyShare:
    params: FieldParams
    party: int
    alpha: int  # this party's additive share of the global MAC key


@dataclass(frozen=True)
class PublicValue:
    val: np.ndarray
    provenance: str = "constant"  # or "opened"


@dataclass(frozen=True, eq=False)
class AuthShare:
    params: FieldParams
    val: np.ndarray
    mac: np.ndarray
    sid: bytes = b""

    @property
    def shape(self):
        return self.val.shape

    def __len__(self):
        return len(self.val)

    def __getitem__(self, idx) -> "AuthShare":
        return AuthShare(self.params, self.val[idx], self.mac[idx], self.sid)

    def __add__(self, other: "AuthShare") -> "AuthShare":
        return sh_add(self, other)

    def __sub__(self, other: "AuthShare") -> "AuthShare":
        return sh_sub(self, other)

    def __rmul__(self, c) -> "AuthShare":
        return sh_scale(c, self)

    def total(self) -> "AuthShare":
        """Share of the sum of all entries (shape ``(1,)``)."""
        f = self.params
        return AuthShare(f, np.atleast_1d(f.sum(self.val)), np.atleast_1d(f.sum(self.mac)), self.sid)

    def reshape(self, *shape) -> "AuthShare":
        return AuthShare(self.params, self.val.reshape(*shape), self.mac.reshape(*shape), self.sid)

    @staticmethod
    def concat(parts: Sequence["AuthShare"]) -> "AuthShare":
        first = parts[0]
        for other in parts[1:]:
            _same(first, other)
        return AuthShare(
            first.params,
            np.concatenate([s.val for s in parts]),
            np.concatenate([s.mac for s in parts]),
            first.sid,
        )

    @staticmethod
    def zeros(params: FieldParams, shape, sid: bytes = b"") -> "AuthShare":
        z = np.zeros(shape, dtype=U64)
        return AuthShare(params, z, z.copy(), sid)


def _same(x: AuthShare, y: AuthShare) -> None:
    if x.params != y.params:
        raise FieldMismatchError("shares from different fields")
    if x.sid != y.sid:
        raise FieldMismatchError("shares from different sessions cannot be mixed")


def _public(params: FieldParams, c) -> np.ndarray:
    if isinstance(c, PublicValue):
        c = c.val
    return params.reduce(c)


def sh_add(x: AuthShare, y: AuthShare) -> AuthShare:
    _same(x, y)
    f = x.params
    return AuthShare(f, f.add(x.val, y.val), f.add(x.mac, y.mac), x.sid)


def sh_sub(x: AuthShare, y: AuthShare) -> AuthShare:
    _same(x, y)
    f = x.params
    return AuthShare(f, f.sub(x.val, y.val), f.sub(x.mac, y.mac), x.sid)


def sh_scale(c, x: AuthShare) -> AuthShare:
    """Multiply by a public scalar or by a public array, elementwise."""
    f = x.params
    c = _public(f, c)
    return AuthShare(f, f.mul(c, x.val), f.mul(c, x.mac), x.sid)


def sh_add_public(c, x: AuthShare, key: MacKeyShare) -> AuthShare:
    """Add a public constant: party 1 absorbs it into its value share,
    both parties add alpha_i * c to their MAC share."""
    f = x.params
    if key.params != f:
        raise FieldMismatchError("MAC key from a different field")
    c = np.broadcast_to(_public(f, c), x.val.shape)
    val = f.add(x.val, c) if key.party == 1 else x.val
    mac = f.add(x.mac, f.mul(c, np.full(c.shape, key.alpha, dtype=U64)))
    return AuthShare(f, val, mac, x.sid)


class Reconstruction(NamedTuple):
    value: np.ndarray
    mac_ok: np.ndarray


def reconstruct(x1: AuthShare, x2: AuthShare, alpha: int) -> Reconstruction:
    """Dealer-side oracle: open both shares and check the MAC relation."""
    _same(x1, x2)
    f = x1.params
    value = f.add(x1.val, x2.val)
    mac = f.add(x1.mac, x2.mac)
    expected = f.mul(np.full(value.shape, alpha % f.p, dtype=U64), value)
    return Reconstruction(value, mac == expected)
