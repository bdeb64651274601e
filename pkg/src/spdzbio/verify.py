"""Self-verification suite behind ``spdzbio verify``.

Each check returns a ``CheckResult``; ``run_all`` prints one line per check.
"""

from __future__ import annotations

import time
import zlib
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from .dealer import Counts, deal
from .engine import run_local
from .faults import TamperingEndpoint
from .field import DEFAULT_PRIME, EntropySource, FieldParams
from .protocols import (
    Decision,
    FaceSetup,
    IrisSetup,
    MultimodalSetup,
    oracle_face_decision,
    oracle_iris_decision,
    oracle_iris_hd,
    oracle_multimodal_decision,
    quantize_fusion,
    rational_threshold,
)
from .report import PUBLISHED_BANDWIDTH_KB, bandwidth_formula_bits, kib, rounds_formula, triples_formula
from .runner import ClientInputs, ServerInputs, run_protocol
from .synth import face_pair, iris_pair
from .transport import pair_in_memory

SMALL_PRIME = 65521
PRIME_45 = 35184372088777  # largest prime below 2^45
TAMPER_LABELS = ("eps", "delta", "square-eps", "s-open", "sigma-reveal")


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail} ({self.seconds:.1f}s)"


# -- comparison -----------------------------------------------------------------


def comparison_sweep(p: int, r_per_pair: int, *, seed=0, flip: bool = False, chunk: int = 250_000,
                     pairs=None) -> tuple[int, int]:
    """Run compare_less over every (x, y) below p/2 with ``r_per_pair``
    distinct dealer masks r each. Returns (mismatches, comparisons)."""
    f = FieldParams(p)
    rng = np.random.default_rng(seed)
    if pairs is None:
        xs, ys = np.meshgrid(np.arange(f.half), np.arange(f.half), indexing="ij")
        xs, ys = xs.ravel(), ys.ravel()
    else:
        xs, ys = (np.asarray(v) for v in pairs)
    r_per_pair = min(r_per_pair, p)
    rs = np.argsort(rng.random((xs.size, p)), axis=1)[:, :r_per_pair] if r_per_pair < p else None
    x_all = np.repeat(xs, r_per_pair)
    y_all = np.repeat(ys, r_per_pair)
    r_all = rs.ravel() if rs is not None else np.tile(np.arange(p), xs.size)
    mismatches = 0
    for start in range(0, x_all.size, chunk):
        x = x_all[start:start + chunk]
        y = y_all[start:start + chunk]
        n = x.size
        bundles = deal(f, Counts(n * f.ell, 0, n, n), seed=(seed, start).__repr__(), r_values=r_all[start:start + n])

        def party(owner_vals):
            def fn(s):
                a = s.share_input(1, x) if s.party == 1 else s.share_input(1, count=n)
                b = s.share_input(2, y) if s.party == 2 else s.share_input(2, count=n)
                return s.open_output(s.compare_less(a, b, _flip_convention=flip))
            return fn

        out, other, _, _ = run_local(bundles, party(x), party(y), seed=start)
        if isinstance(out, Exception):
            raise out
        mismatches += int(np.count_nonzero(out.astype(bool) != (x < y)))
    return mismatches, x_all.size


def check_comparison(quick: bool) -> CheckResult:
    r_per = 20 if quick else 200
    bad, total = comparison_sweep(251, r_per)
    return CheckResult("comparison-exhaustive-p251", bad == 0,
                       f"{total} comparisons ({r_per} r values per pair), {bad} mismatches")


def check_mutation() -> CheckResult:
    bad, total = comparison_sweep(251, 2, flip=True)
    return CheckResult("comparison-mutation-detected", bad > 0,
                       f"flipped convention gives {bad}/{total} mismatches")


# -- end-to-end oracle equivalence ------------------------------------------------


def random_instance(protocol: str, p: int, rng: np.random.Generator, *, n_bits=64, k=2):
    """A random (setup, server, client, oracle decision) tuple that fits p."""
    big = p > 2**40
    genuine = bool(rng.integers(0, 2))
    if protocol == "iris":
        t = [Fraction(1, 4), Fraction(7, 20)][rng.integers(0, 2)]
        t_num, t_den = rational_threshold(t)
        a, b = iris_pair(n_bits, rng, genuine=genuine, flip_rate=float(rng.uniform(0, 0.5)),
                         mask_rate=float(rng.uniform(0, 0.3)))
        expected = oracle_iris_decision(a, b, t_num, t_den)
        return IrisSetup(n_bits, t_den), ServerInputs(iris=a, t_num=t_num), ClientInputs(iris=b), expected
    if protocol == "face":
        bf = 8 if big else 6
        a, b = face_pair(k, rng, genuine=genuine, bf=bf, radius=int(rng.integers(1, 20)))
        sed = int(((a.features - b.features) ** 2).sum())
        # thresholds around the actual distance, including the tie
        t2 = max(0, sed + int(rng.integers(-3, 4)))
        setup = FaceSetup(k, t2, bf)
        return setup, ServerInputs(face=a), ClientInputs(face=b), oracle_face_decision(a, b, t2)
    bf = 8 if big else 1
    alpha, t = [(0.80, 0.35), (0.55, 0.25)][rng.integers(0, 2)]
    params = quantize_fusion(alpha, t)
    setup = MultimodalSetup(n_bits, k, params, bf)
    ia, ib = iris_pair(n_bits, rng, genuine=genuine, flip_rate=float(rng.uniform(0, 0.5)),
                       mask_rate=float(rng.uniform(0, 0.3)))
    fa, fb = face_pair(k, rng, genuine=genuine, bf=bf, radius=int(rng.integers(0, 40)))
    r = int(rng.integers(1, setup.r_bound + 1))
    expected = oracle_multimodal_decision(ia, ib, fa, fb, params, r)
    return setup, ServerInputs(iris=ia, face=fa, face_range=r), ClientInputs(iris=ib, face=fb), expected


def oracle_equivalence(protocol: str, p: int, instances: int, *, seed=0, **shape) -> tuple[int, int, int]:
    """Returns (mismatches, accepts, instances)."""
    f = FieldParams(p)
    rng = np.random.default_rng(seed)
    bad = accepts = 0
    for i in range(instances):
        setup, srv, cli, expected = random_instance(protocol, p, rng, **shape)
        res = run_protocol(protocol, f, setup, srv, cli, seed=(seed, i).__repr__())
        got = res.decision
        accepts += got is Decision.ACCEPT
        if got is not (Decision.ACCEPT if expected else Decision.REJECT):
            bad += 1
    return bad, accepts, instances


def check_equivalence(quick: bool) -> CheckResult:
    n = 20 if quick else 500
    parts, ok = [], True
    for p in (SMALL_PRIME, DEFAULT_PRIME):
        cases = [("iris", {}), ("face", {"k": 1}), ("face", {"k": 2}), ("face", {"k": 3}),
                 ("multimodal", {"k": 2})]
        for proto, shape in cases:
            bad, acc, tot = oracle_equivalence(proto, p, n, seed=zlib.crc32(f"{proto}/{p}/{shape}".encode()), **shape)
            ok &= bad == 0
            parts.append(f"{proto}{shape.get('k', '')}@{p.bit_length()}b:{tot - bad}/{tot}(acc {acc})")
    return CheckResult("oracle-equivalence", ok, " ".join(parts))


# -- accounting ------------------------------------------------------------------


def genuine_run(protocol: str, p: int, n_bits: int, k: int, *, seed=0, endpoints=None, **modes):
    """One run on a genuine synthetic pair with the default thresholds."""
    f = FieldParams(p)
    rng = np.random.default_rng(seed)
    ia, ib = iris_pair(n_bits, rng, genuine=True) if protocol != "face" else (None, None)
    fa, fb = face_pair(k, rng, genuine=True) if protocol != "iris" else (None, None)
    if protocol == "iris":
        setup = IrisSetup(n_bits, 20, paper_faithful=modes.get("paper_faithful", False))
        srv, cli = ServerInputs(iris=ia, t_num=7), ClientInputs(iris=ib)
    elif protocol == "face":
        setup = FaceSetup(k, 100 * k)
        srv, cli = ServerInputs(face=fa), ClientInputs(face=fb)
    else:
        setup = MultimodalSetup(n_bits, k, quantize_fusion(0.8, 0.35), **modes)
        srv = ServerInputs(iris=ia, face=fa, face_range=setup.r_bound)
        cli = ClientInputs(iris=ib, face=fb)
    return run_protocol(protocol, f, setup, srv, cli, seed=seed, endpoints=endpoints)


def check_consumption(quick: bool) -> CheckResult:
    grid = [(1600, 1)] if quick else [(1600, 1), (3600, 3), (5760, 2), (6400, 2)]
    parts, ok = [], True
    for n, k in grid:
        for proto in ("iris", "face", "multimodal"):
            res = genuine_run(proto, DEFAULT_PRIME, n if proto != "face" else 0, k if proto != "iris" else 0)
            st = res.server_stats
            want_t = triples_formula(proto, n, k, res.ell)
            want_s = 0 if proto == "iris" else k
            good = st.triples_used == want_t and st.squares_used == want_s and st.randbits_used == 1
            ok &= good and res.decision is Decision.ACCEPT
            parts.append(f"{proto}(N={n},k={k}):{st.triples_used}/{want_t}t,{st.squares_used}/{want_s}s")
    return CheckResult("preprocessing-consumption", ok, " ".join(parts))


def check_bandwidth() -> CheckResult:
    parts, ok = [], True
    n, k = 1600, 1
    for proto, idx in (("iris", 1), ("multimodal", 2)):
        r45 = genuine_run(proto, PRIME_45, n, k)
        bits45 = r45.server_stats.tuple_open_elements * r45.ell
        published = PUBLISHED_BANDWIDTH_KB[n][idx]
        rel = abs(kib(bits45) - published) / published
        r46 = genuine_run(proto, DEFAULT_PRIME, n, k)
        bits46 = r46.server_stats.tuple_open_elements * r46.ell
        exact = bits46 == bandwidth_formula_bits(proto, n, k, r46.ell)
        ok &= rel <= 0.002 and exact and bits45 == bandwidth_formula_bits(proto, n, k, 45)
        parts.append(f"{proto}: l=45 {kib(bits45):.2f}KiB vs {published} ({rel:.3%}); l=46 formula exact={exact}")
    parts.append("note: published figures use l=45, the 46-bit prime gives l=46")
    return CheckResult("tuple-open-bandwidth", ok, "; ".join(parts))


def check_rounds() -> CheckResult:
    parts, ok = [], True
    for proto, modes in (("iris", {}), ("iris", {"paper_faithful": True}), ("face", {}),
                         ("multimodal", {"paper_faithful": True}), ("multimodal", {})):
        res = genuine_run(proto, DEFAULT_PRIME, 64 if proto != "face" else 0, 2 if proto != "iris" else 0, **modes)
        got = res.server_stats.compute_rounds
        want = rounds_formula(proto, 64, 2, res.ell)
        if proto != "multimodal" or modes:
            ok &= abs(got - want) <= 2
        tag = proto + ("/paper-faithful" if modes else "")
        parts.append(f"{tag}:{got} vs {want} (delta {got - want:+d})")
    return CheckResult("round-counts", ok, " ".join(parts))


# -- malicious abort ------------------------------------------------------------------


_TAMPER_SHAPES = {"iris": (24, 0), "face": (0, 2), "multimodal": (16, 1)}
_label_counts: dict = {}


def _sent_labels(proto: str, side: int, p: int) -> dict:
    key = (proto, side, p)
    if key not in _label_counts:
        clean = genuine_run(proto, p, *_TAMPER_SHAPES[proto])
        _label_counts[key] = (clean.server_stats if side == 0 else clean.client_stats).flushes_by_label
    return _label_counts[key]


def tamper_trial(label: str, trial: int, *, p: int = DEFAULT_PRIME) -> tuple[object, object, int]:
    """Run one protocol with a single additive fault on one outgoing message
    of the given label. Returns (server outcome, client outcome, attacker)
    where attacker 0 is the server and 1 the client."""
    rng = np.random.default_rng(trial)
    protos = ("face", "multimodal") if label == "square-eps" else ("face", "multimodal", "iris")
    proto = protos[trial % len(protos)]
    attacker = (trial // len(protos)) % 2
    count = _sent_labels(proto, attacker, p).get(label, 0)
    if count == 0:
        raise RuntimeError(f"protocol {proto} sends no {label!r} messages")
    a, b = pair_in_memory()
    ends = [a, b]
    ends[attacker] = TamperingEndpoint(
        ends[attacker], FieldParams(p), label, int(rng.integers(1, p)),
        # sigma faults hit the check that guards the output opening
        occurrence=0 if label.startswith("sigma") else int(rng.integers(0, count)),
        element=int(rng.integers(0, 1 << 20)),
    )
    res = genuine_run(proto, p, *_TAMPER_SHAPES[proto], seed=trial, endpoints=tuple(ends))
    if not ends[attacker].fired:
        raise RuntimeError("fault was not injected")
    return res.server, res.client, attacker


def check_tamper(quick: bool) -> CheckResult:
    trials = 50 if quick else 1000
    detected = 0
    for t in range(trials):
        label = TAMPER_LABELS[t % len(TAMPER_LABELS)]
        server, client, attacker = tamper_trial(label, t)
        victim = client if attacker == 0 else server
        detected += victim is Decision.ABORT
    return CheckResult("malicious-abort", detected == trials, f"{detected}/{trials} tampered runs aborted")


# -- synthetic data and timing -------------------------------------------------------


def separation_error(pairs: int = 2000, n_bits: int = 1600, t=Fraction(7, 20), seed=0) -> float:
    rng = np.random.default_rng(seed)
    errors = 0
    for i in range(pairs):
        genuine = i % 2 == 0
        a, b = iris_pair(n_bits, rng, genuine=genuine, flip_rate=0.05)
        hd = oracle_iris_hd(a.bits, a.mask, b.bits, b.mask)
        errors += (hd < t) != genuine
    return errors / pairs


def check_separation(quick: bool) -> CheckResult:
    err = separation_error(200 if quick else 2000)
    return CheckResult("synthetic-separation", err < 0.01, f"empirical error {err:.4f} at t=0.35")


def best_time(proto: str, n: int, k: int, reps: int = 3) -> float:
    return min(genuine_run(proto, DEFAULT_PRIME, n, k, seed=i).online_seconds for i in range(reps))


def check_performance() -> CheckResult:
    t1600 = best_time("iris", 1600, 0)
    t6400 = best_time("iris", 6400, 0)
    m6400 = best_time("multimodal", 6400, 2)
    overhead = m6400 / t6400 - 1
    ok = t1600 <= 1.0 and t6400 <= 4.0 and overhead <= 0.20
    return CheckResult("performance", ok,
                       f"iris N=1600 {t1600:.3f}s, N=6400 {t6400:.3f}s, multimodal overhead {overhead:+.1%}")


CHECKS: list[tuple[str, Callable[[bool], CheckResult]]] = [
    ("comparison", check_comparison),
    ("mutation", lambda quick: check_mutation()),
    ("equivalence", check_equivalence),
    ("consumption", check_consumption),
    ("bandwidth", lambda quick: check_bandwidth()),
    ("rounds", lambda quick: check_rounds()),
    ("tamper", check_tamper),
    ("separation", check_separation),
    ("performance", lambda quick: check_performance()),
]


def run_all(quick: bool = False, only=None, echo=print) -> list[CheckResult]:
    results = []
    for name, fn in CHECKS:
        if only and name not in only:
            continue
        t0 = time.perf_counter()
        try:
            res = fn(quick)
        except Exception as exc:  # a crashing check is a failing check
            res = CheckResult(name, False, f"{type(exc).__name__}: {exc}")
        res.seconds = time.perf_counter() - t0
        echo(res.line())
        results.append(res)
    return results
