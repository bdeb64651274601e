"""Per-party online runtime: input sharing, batched Beaver multiplication,
squaring, partial opening, secure comparison and the terminal MAC check."""

from __future__ import annotations

import hashlib
import logging
import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dealer import PreprocessingBundle
from .errors import MacCheckFailed, PreprocessingExhausted, SessionAborted, SpdzError
from .field import U64, EntropySource
from .shares import AuthShare, PublicValue, sh_add_public, sh_scale
from .transport import ChannelStats, Endpoint, Message, Tag, pair_in_memory

log = logging.getLogger(__name__)

SERVER, CLIENT = 1, 2


@dataclass
class SessionStats:
    rounds: int = 0
    tuple_open_elements: int = 0
    aux_elements: int = 0
    bytes_on_wire: int = 0
    triples_used: int = 0
    squares_used: int = 0
    randbits_used: int = 0
    masks_used: int = 0
    outputs_opened: int = 0
    flushes_by_tag: dict = field(default_factory=dict)
    flushes_by_label: dict = field(default_factory=dict)

    @property
    def input_rounds(self) -> int:
        return self.flushes_by_tag.get("input_diff", 0)

    @property
    def mac_check_rounds(self) -> int:
        return self.flushes_by_tag.get("sigma_commit", 0) + self.flushes_by_tag.get("sigma_reveal", 0)

    @property
    def compute_rounds(self) -> int:
        """Flushes of the evaluation proper: excludes input distribution,
        the final output opening and the MAC check."""
        return self.rounds - self.input_rounds - self.mac_check_rounds - self.outputs_opened


class PartySession:
    """One party's side of a two-party online phase.

    A session is driven by a single thread. Preprocessing is consumed in
    order and never reused; after a failed MAC check every further call
    raises ``SessionAborted``.
    """

    def __init__(self, bundle: PreprocessingBundle, endpoint: Endpoint, seed=None):
        self.bundle = bundle
        self.party = bundle.party
        self.params = bundle.params
        self.key = bundle.key
        self.endpoint = endpoint
        self.sid = bundle.bundle_id
        self._rng = seed if isinstance(seed, EntropySource) else EntropySource(seed)
        self._triple_pos = 0
        self._square_pos = 0
        self._randbit_pos = 0
        self._mask_idx = {o: np.flatnonzero(bundle.masks.owner == o) for o in (1, 2)}
        self._mask_pos = {1: 0, 2: 0}
        self._opened_vals: list[np.ndarray] = []
        self._opened_macs: list[np.ndarray] = []
        self._transcript = hashlib.sha256(b"spdzbio/opened")
        self._outputs = 0
        self._aborted = False

    # -- bookkeeping ----------------------------------------------------------

    @property
    def aborted(self) -> bool:
        return self._aborted

    def _live(self) -> None:
        if self._aborted:
            raise SessionAborted("session aborted after a failed MAC check")

    def _guard(fn):  # noqa: N805 - decorator defined in class body
        def wrapper(self, *args, **kwargs):
            self._live()
            try:
                return fn(self, *args, **kwargs)
            except (SpdzError, OSError) as exc:
                if not isinstance(exc, PreprocessingExhausted):
                    self._aborted = True
                raise

        wrapper.__name__ = fn.__name__
        wrapper.__doc__ = fn.__doc__
        return wrapper

    def _take(self, kind: str, n: int, pos: int, available: int) -> slice:
        if pos + n > available:
            raise PreprocessingExhausted(f"need {n} {kind}, only {available - pos} left")
        return slice(pos, pos + n)

    def stats(self) -> SessionStats:
        ch: ChannelStats = self.endpoint.stats.snapshot()
        return SessionStats(
            rounds=ch.rounds_sent,
            tuple_open_elements=ch.tuple_open_elements,
            aux_elements=ch.aux_elements,
            bytes_on_wire=ch.bytes_on_wire,
            triples_used=self._triple_pos,
            squares_used=self._square_pos,
            randbits_used=self._randbit_pos,
            masks_used=sum(self._mask_pos.values()),
            outputs_opened=self._outputs,
            flushes_by_tag=ch.flushes_by_tag,
            flushes_by_label=ch.flushes_by_label,
        )

    def _exchange(self, tag: Tag, payload: np.ndarray, label: str) -> np.ndarray:
        self.endpoint.send(Message(tag, payload, label))
        reply = self.endpoint.recv()
        if reply.tag != tag or reply.payload.size != payload.size:
            raise SpdzError(
                f"protocol desync: sent {tag.name}[{payload.size}], got {reply.tag.name}[{reply.payload.size}]"
            )
        return reply.payload

    def _open_vals(self, x: AuthShare, tag: Tag, label: str) -> np.ndarray:
        """Swap value shares, log the opened values for the MAC check."""
        f = self.params
        theirs = self._exchange(tag, x.val, label)
        if int(theirs.max(initial=0)) >= f.p:
            raise SpdzError("peer sent an unreduced field element")
        opened = f.add(x.val.ravel(), theirs).reshape(x.shape)
        self._opened_vals.append(opened.ravel())
        self._opened_macs.append(x.mac.ravel())
        self._transcript.update(opened.astype("<u8").tobytes())
        return opened

    # -- constants --------------------------------------------------------------

    def constant(self, values) -> AuthShare:
        """Authenticated sharing of a public constant; no communication."""
        c = self.params.reduce(values)
        return sh_add_public(c, AuthShare.zeros(self.params, c.shape, self.sid), self.key)

    def add_public(self, c, x: AuthShare) -> AuthShare:
        return sh_add_public(c, x, self.key)

    # -- interactive operations -----------------------------------------------

    @_guard
    def share_input(self, owner: int, values=None, *, count: int | None = None) -> AuthShare:
        """Secret-share a vector owned by ``owner``; the other party passes ``count``."""
        f = self.params
        if owner == self.party:
            values = f.reduce(np.atleast_1d(np.asarray(values)))
            n = values.size
        else:
            if count is None:
                raise ValueError("the non-owner must state how many values are input")
            n = count
        idx = self._mask_idx[owner]
        sl = self._take(f"input masks of party {owner}", n, self._mask_pos[owner], len(idx))
        self._mask_pos[owner] = sl.stop
        sel = idx[sl]
        mask = self.bundle.masks.m[sel]
        if owner == self.party:
            d = f.sub(values, self.bundle.masks.plain[sel])
            self.endpoint.send(Message(Tag.INPUT_DIFF, d, "input"))
        else:
            msg = self.endpoint.recv()
            if msg.tag != Tag.INPUT_DIFF or msg.payload.size != n:
                raise SpdzError(f"protocol desync: expected INPUT_DIFF[{n}], got {msg.tag.name}[{msg.payload.size}]")
            d = msg.payload
            if int(d.max(initial=0)) >= f.p:
                raise SpdzError("peer sent an unreduced field element")
        return sh_add_public(d, mask, self.key)

    @_guard
    def mul_batch(self, x: AuthShare, y: AuthShare) -> AuthShare:
        """Elementwise products; two flushes per party whatever the batch size."""
        f = self.params
        n = x.val.size
        sl = self._take("triples", n, self._triple_pos, len(self.bundle.triples))
        self._triple_pos = sl.stop
        t = self.bundle.triples[sl]
        shape = x.shape
        xf, yf = x.reshape(-1), y.reshape(-1)
        eps = self._open_vals(xf - t.a, Tag.EPSILON, "eps")
        dlt = self._open_vals(yf - t.b, Tag.DELTA, "delta")
        z = t.c + sh_scale(eps, t.b) + sh_scale(dlt, t.a)
        return self.add_public(f.mul(eps, dlt), z).reshape(shape)

    @_guard
    def square_batch(self, x: AuthShare) -> AuthShare:
        """Elementwise squares; a single flush per party."""
        f = self.params
        n = x.val.size
        sl = self._take("square pairs", n, self._square_pos, len(self.bundle.squares))
        self._square_pos = sl.stop
        sp = self.bundle.squares[sl]
        shape = x.shape
        eps = self._open_vals(x.reshape(-1) - sp.a, Tag.EPSILON, "square-eps")
        z = sp.a2 + sh_scale(f.add(eps, eps), sp.a)
        return self.add_public(f.mul(eps, eps), z).reshape(shape)

    @_guard
    def partial_open(self, x: AuthShare, *, label: str = "open") -> PublicValue:
        return PublicValue(self._open_vals(x, Tag.OPEN, label), "opened")

    @_guard
    def compare_less(self, x: AuthShare, y: AuthShare, *, _flip_convention: bool = False) -> AuthShare:
        """Shares of [x < y] elementwise, for plaintexts in [0, p/2).

        z = x - y wraps above p/2 exactly when x < y, so 2z mod p is odd
        exactly when x < y. With s = 2z + r opened, LSB(2z) = s0 ^ r0 ^ [s < r],
        where [s < r] flags the modular wrap and is evaluated on public bits of
        s and shared bits of r: l-1 sequential products plus one for the final
        XOR, l triples per comparison in total.

        ``_flip_convention`` applies the extra complement of the literal
        textbook formula; it exists only so mutation checks can show the
        exhaustive oracle catches it.
        """
        f = self.params
        ell = f.ell
        xf, yf = x.reshape(-1), y.reshape(-1)
        n = xf.val.size
        sl = self._take("random bit values", n, self._randbit_pos, len(self.bundle.randbits))
        self._randbit_pos = sl.stop
        rb = self.bundle.randbits[sl]
        z = xf - yf
        s_share = z + z + rb.r
        s = self._open_vals(s_share, Tag.OPEN, "s-open")
        sbits = f.bits(s)  # (n, ell) public
        one = U64(1)
        r0 = rb.bits[:, 0]
        s0 = sbits[:, 0]
        # [s < r] on the lowest bit: r0 AND NOT s0
        delta = sh_scale(one - s0, r0)
        for i in range(1, ell):
            ri = rb.bits[:, i]
            si = sbits[:, i]
            # s_i = 0: delta <- r_i + delta (1 - r_i); s_i = 1: delta <- r_i delta
            factor = self.add_public(one - si, sh_scale(f.sub(f.add(si, si), one), ri))
            delta = self.mul_batch(delta, factor) + sh_scale(one - si, ri)
        dr = self.mul_batch(delta, r0)
        # delta ^ r0, then ^ s0 with s0 public
        xor = delta + r0 - sh_scale(2, dr)
        lsb = self.add_public(s0, sh_scale(f.sub(one, f.add(s0, s0)), xor))
        # [z < p/2] = 1 - lsb and [x < y] = 1 - [z < p/2]
        below_half = self.add_public(1, sh_scale(f.p - 1, lsb))
        result = self.add_public(1, sh_scale(f.p - 1, below_half))
        if _flip_convention:
            result = below_half
        return result.reshape(x.shape)

    @_guard
    def mac_check(self) -> None:
        """Batched check of every value opened since the last check.

        Coefficients come from a hash of this party's view of the opened
        values, sigma shares are committed before being revealed. Raises
        ``MacCheckFailed`` and poisons the session on any inconsistency.
        """
        if not self._opened_vals:
            return
        f = self.params
        vals = np.concatenate(self._opened_vals)
        macs = np.concatenate(self._opened_macs)
        self._opened_vals, self._opened_macs = [], []
        digest = self._transcript.digest()
        self._transcript = hashlib.sha256(b"spdzbio/opened" + digest)
        rho = _coefficients(f, digest, vals.size)
        alpha = np.full(vals.shape, self.key.alpha, dtype=U64)
        diff = f.sub(macs, f.mul(alpha, vals))
        sigma = int(f.sum(f.mul(rho, diff)))

        nonce = self._rng.words(4)
        commit = _commit(sigma, nonce)
        their_commit = self._exchange(Tag.SIGMA_COMMIT, commit, "sigma-commit")
        reveal = np.concatenate([np.array([sigma], dtype=U64), nonce])
        theirs = self._exchange(Tag.SIGMA_REVEAL, reveal, "sigma-reveal")
        their_sigma = int(theirs[0])
        if not np.array_equal(_commit(their_sigma, theirs[1:]), their_commit):
            self._fail("peer's sigma does not match its commitment")
        if (sigma + their_sigma) % f.p != 0:
            self._fail("MAC check failed: opened values are inconsistent with their MACs")

    def _fail(self, reason: str) -> None:
        """Poison the session and hang up so the peer does not wait on us."""
        self._aborted = True
        self.endpoint.close()
        raise MacCheckFailed(reason)

    @_guard
    def open_output(self, x: AuthShare) -> np.ndarray:
        """Open ``x`` to both parties. Every earlier opening is MAC-checked
        before the output shares leave this party, and the output itself
        after, so a failed run never puts the output on the wire."""
        self.mac_check()
        value = self._open_vals(x, Tag.OPEN, "output-open")
        self._outputs += 1
        self.mac_check()
        return value

    del _guard


def _coefficients(f, digest: bytes, n: int) -> np.ndarray:
    """Check coefficients: SHAKE-256 of the transcript digest, 64 bits each
    reduced mod p (bias below p / 2^64)."""
    words = np.frombuffer(hashlib.shake_256(digest).digest(8 * n), dtype="<u8")
    return words.astype(U64) % U64(f.p)


def _commit(sigma: int, nonce: np.ndarray) -> np.ndarray:
    h = hashlib.sha256(sigma.to_bytes(8, "little") + np.asarray(nonce, dtype="<u8").tobytes())
    return np.frombuffer(h.digest(), dtype="<u8").astype(U64)


def run_local(
    bundles: tuple[PreprocessingBundle, PreprocessingBundle],
    server_fn: Callable[[PartySession], object],
    client_fn: Callable[[PartySession], object],
    *,
    seed=None,
    endpoints=None,
    timeout: float | None = 60.0,
) -> tuple[object, object, PartySession, PartySession]:
    """Run both parties on two threads over an in-memory (or given) channel.

    Returns each party's result (or the exception it raised) and both sessions.
    """
    if endpoints is None:
        endpoints = pair_in_memory(timeout=timeout)
    base = seed if isinstance(seed, EntropySource) else EntropySource(seed)
    sessions = [
        PartySession(bundles[0], endpoints[0], base.child("party1")),
        PartySession(bundles[1], endpoints[1], base.child("party2")),
    ]
    results: list[object] = [None, None]

    def drive(i: int, fn) -> None:
        try:
            results[i] = fn(sessions[i])
        except BaseException as exc:  # reported to the caller, not swallowed
            results[i] = exc
            endpoints[i].close()

    worker = threading.Thread(target=drive, args=(1, client_fn), daemon=True)
    worker.start()
    drive(0, server_fn)
    worker.join()
    return results[0], results[1], sessions[0], sessions[1]
