"""In-process two-party execution of a whole authentication run."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .dealer import Counts, PreprocessingBundle, deal, estimate
from .engine import PartySession, SessionStats, run_local
from .field import EntropySource, FieldParams
from .protocols import (
    Decision,
    FaceSetup,
    FaceTemplate,
    IrisSetup,
    IrisTemplate,
    MultimodalSetup,
    face_authenticate,
    fuse_authenticate,
    iris_authenticate,
)


@dataclass
class ServerInputs:
    iris: IrisTemplate | None = None
    face: FaceTemplate | None = None
    t_num: int | None = None  # private iris threshold numerator
    face_range: int | None = None  # private face range R


@dataclass
class ClientInputs:
    iris: IrisTemplate | None = None
    face: FaceTemplate | None = None


@dataclass
class RunResult:
    protocol: str
    ell: int
    server: object  # Decision or the exception raised
    client: object
    server_stats: SessionStats
    client_stats: SessionStats
    online_seconds: float
    counts: Counts = field(default_factory=Counts)

    @property
    def decision(self) -> Decision:
        """Outcome as seen by both parties; abort if either aborted or failed."""
        if self.server == self.client and isinstance(self.server, Decision):
            return self.server
        return Decision.ABORT


def required_counts(protocol: str, setup, ell: int) -> Counts:
    if protocol == "iris":
        return estimate("iris", setup.n_bits, 0, ell, public_thresholds=setup.t_num is not None)
    if protocol == "face":
        return estimate("face", 0, setup.k, ell)
    return estimate(
        "multimodal", setup.n_bits, setup.k, ell,
        public_thresholds=setup.face_range is not None, lean=setup.lean,
    )


def party_function(protocol: str, setup, inputs):
    """The callable one party runs against its session."""
    if protocol == "iris":
        t_num = getattr(inputs, "t_num", None)
        return lambda s: iris_authenticate(s, setup, inputs.iris, t_num)
    if protocol == "face":
        return lambda s: face_authenticate(s, setup, inputs.face)
    if protocol == "multimodal":
        r = getattr(inputs, "face_range", None)
        return lambda s: fuse_authenticate(s, setup, inputs.iris, inputs.face, r)
    raise ValueError(f"unknown protocol {protocol!r}")


def run_protocol(
    protocol: str,
    params: FieldParams,
    setup: IrisSetup | FaceSetup | MultimodalSetup,
    server: ServerInputs,
    client: ClientInputs,
    *,
    seed=None,
    bundles: tuple[PreprocessingBundle, PreprocessingBundle] | None = None,
    endpoints=None,
    timeout: float | None = 60.0,
) -> RunResult:
    """Deal (unless bundles are given) and run both parties locally."""
    src = seed if isinstance(seed, EntropySource) else EntropySource(seed)
    counts = required_counts(protocol, setup, params.ell)
    if bundles is None:
        bundles = deal(params, counts, src.child("dealer"))
    timings = [0.0, 0.0]

    def timed(i, fn):
        def run(session: PartySession):
            t0 = time.perf_counter()
            try:
                return fn(session)
            finally:
                timings[i] = time.perf_counter() - t0
        return run

    res_s, res_c, s1, s2 = run_local(
        bundles,
        timed(0, party_function(protocol, setup, server)),
        timed(1, party_function(protocol, setup, client)),
        seed=src.child("sessions"),
        endpoints=endpoints,
        timeout=timeout,
    )
    return RunResult(protocol, params.ell, res_s, res_c, s1.stats(), s2.stats(), max(timings), counts)
