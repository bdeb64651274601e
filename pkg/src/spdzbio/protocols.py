"""Iris, face and fused biometric authentication over authenticated shares,
with exact plaintext oracles and the fusion-weight quantizer.

Party 1 is the server (enrolled template, thresholds), party 2 the client
(fresh probe). Each ``*_authenticate`` function is called by both parties
with their own private inputs; only the decision bit is ever opened.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .engine import CLIENT, SERVER, PartySession
from .errors import MacCheckFailed, RangeFitError, TemplateError
from .field import FieldParams
from .shares import AuthShare

WEIGHT_SCALE = 10
THRESHOLD_DENOMINATORS = (10, 20, 100)


class Decision(enum.Enum):
    ACCEPT = "accept"
    REJECT = "reject"
    ABORT = "abort"


# -- templates ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class IrisTemplate:
    bits: np.ndarray
    mask: np.ndarray  # 1 = noisy bit, excluded from the distance
    radial: int | None = None
    angular: int | None = None

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8).ravel()
        mask = np.asarray(self.mask, dtype=np.uint8).ravel()
        if bits.size != mask.size or bits.size == 0:
            raise TemplateError("iris bits and mask must be non-empty and of equal length")
        if bits.max() > 1 or mask.max() > 1:
            raise TemplateError("iris bits and mask must be binary")
        if self.radial is not None and self.angular is not None:
            if 2 * self.radial * self.angular != bits.size:
                raise TemplateError(f"N={bits.size} does not equal 2*r*theta={2 * self.radial * self.angular}")
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "mask", mask)

    @property
    def n_bits(self) -> int:
        return self.bits.size

    def __eq__(self, other):
        return (
            isinstance(other, IrisTemplate)
            and np.array_equal(self.bits, other.bits)
            and np.array_equal(self.mask, other.mask)
            and (self.radial, self.angular) == (other.radial, other.angular)
        )


@dataclass(frozen=True, eq=False)
class FaceTemplate:
    features: np.ndarray
    bf: int = 8

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.int64).ravel()
        if not 1 <= feats.size <= 10:
            raise TemplateError(f"face template needs 1..10 projections, got {feats.size}")
        if feats.min() < 0 or feats.max() >= 1 << self.bf:
            raise TemplateError(f"face features must lie in [0, 2^{self.bf})")
        object.__setattr__(self, "features", feats)

    @property
    def k(self) -> int:
        return self.features.size

    def __eq__(self, other):
        return isinstance(other, FaceTemplate) and self.bf == other.bf and np.array_equal(self.features, other.features)


def format_template(t: IrisTemplate | FaceTemplate) -> str:
    if isinstance(t, IrisTemplate):
        head = f"iris N={t.n_bits}"
        if t.radial is not None and t.angular is not None:
            head += f" r={t.radial} theta={t.angular}"
        return "\n".join([
            head,
            "bits " + "".join(map(str, t.bits.tolist())),
            "mask " + "".join(map(str, t.mask.tolist())),
        ]) + "\n"
    return f"face k={t.k} bf={t.bf}\nfeatures " + " ".join(map(str, t.features.tolist())) + "\n"


def parse_templates(text: str) -> list[IrisTemplate | FaceTemplate]:
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    out: list[IrisTemplate | FaceTemplate] = []
    i = 0
    while i < len(lines):
        kind, *pairs = lines[i].split()
        try:
            meta = dict(kv.split("=", 1) for kv in pairs)
        except ValueError:
            raise TemplateError(f"malformed header line {lines[i]!r}") from None
        if kind == "iris":
            if i + 2 >= len(lines):
                raise TemplateError("truncated iris record")
            rows = {}
            for ln in lines[i + 1:i + 3]:
                name, _, payload = ln.partition(" ")
                rows[name] = payload.strip()
            if set(rows) != {"bits", "mask"}:
                raise TemplateError("iris record needs 'bits' and 'mask' lines")
            if any(set(v) - {"0", "1"} for v in rows.values()):
                raise TemplateError("iris payload must be a bit string")
            t = IrisTemplate(
                np.frombuffer(rows["bits"].encode(), dtype=np.uint8) - ord("0"),
                np.frombuffer(rows["mask"].encode(), dtype=np.uint8) - ord("0"),
                int(meta["r"]) if "r" in meta else None,
                int(meta["theta"]) if "theta" in meta else None,
            )
            if int(meta.get("N", t.n_bits)) != t.n_bits:
                raise TemplateError(f"header says N={meta['N']}, payload has {t.n_bits} bits")
            i += 3
        elif kind == "face":
            if i + 1 >= len(lines) or not lines[i + 1].startswith("features"):
                raise TemplateError("face record needs a 'features' line")
            vals = [int(v) for v in lines[i + 1].split()[1:]]
            t = FaceTemplate(np.array(vals, dtype=np.int64), int(meta.get("bf", 8)))
            if int(meta.get("k", t.k)) != t.k:
                raise TemplateError(f"header says k={meta['k']}, payload has {t.k} features")
            i += 2
        else:
            raise TemplateError(f"unknown template kind {kind!r}")
        out.append(t)
    return out


def write_templates(path, templates) -> None:
    Path(path).write_text("".join(format_template(t) for t in templates))


def read_templates(path) -> list[IrisTemplate | FaceTemplate]:
    return parse_templates(Path(path).read_text())


# -- plaintext oracles --------------------------------------------------------


def iris_fraction(f1, m1, f2, m2) -> tuple[int, int]:
    """Unreduced (numerator, denominator) of the masked Hamming distance."""
    f1, m1, f2, m2 = (np.asarray(v, dtype=np.int64) for v in (f1, m1, f2, m2))
    if not f1.size == m1.size == f2.size == m2.size:
        raise TemplateError("iris vectors differ in length")
    usable = (1 - m1) * (1 - m2)
    num = int(((f1 ^ f2) & usable).sum())
    den = int(f1.size - (m1 | m2).sum())
    return num, den


def oracle_iris_hd(f1, m1, f2, m2) -> Fraction:
    num, den = iris_fraction(f1, m1, f2, m2)
    if den == 0:
        raise TemplateError("every bit is masked in at least one template")
    return Fraction(num, den)


def oracle_face_sed(a, b) -> int:
    a = a.features if isinstance(a, FaceTemplate) else np.asarray(a)
    b = b.features if isinstance(b, FaceTemplate) else np.asarray(b)
    if a.size != b.size:
        raise TemplateError("face templates differ in length")
    return sum((int(x) - int(y)) ** 2 for x, y in zip(a.tolist(), b.tolist()))


@dataclass(frozen=True)
class FusionParams:
    """Public fusion rule alpha*hd + beta*sed_norm < T with alpha, beta on
    a 0..10 grid and T = t_num / t_den."""

    alpha_q: int
    beta_q: int
    t_num: int
    t_den: int
    scale: int = WEIGHT_SCALE
    min_face: int = 0
    lossy: bool = False

    def __post_init__(self):
        if not (0 <= self.alpha_q <= self.scale and 0 <= self.beta_q <= self.scale):
            raise ValueError("quantized weights must lie in [0, scale]")
        if self.t_den <= 0 or self.t_num < 0:
            raise ValueError("threshold must be a non-negative rational with positive denominator")

    @property
    def alpha(self) -> Fraction:
        return Fraction(self.alpha_q, self.scale)

    @property
    def beta(self) -> Fraction:
        return Fraction(self.beta_q, self.scale)

    @property
    def threshold(self) -> Fraction:
        return Fraction(self.t_num, self.t_den)

    def integer_weights(self) -> tuple[int, int, int]:
        """(w_num, w_sed, w_thr) after clearing the denominators scale*t_den."""
        return self.t_den * self.alpha_q, self.t_den * self.beta_q, self.scale * self.t_num


def _exact(x) -> Fraction:
    return Fraction(str(x)) if isinstance(x, float) else Fraction(x)


def rational_threshold(t, denominators=THRESHOLD_DENOMINATORS) -> tuple[int, int]:
    """Smallest listed denominator giving an integer numerator."""
    t = _exact(t)
    for den in denominators:
        if (t * den).denominator == 1:
            return int(t * den), den
    raise ValueError(f"threshold {t} is not representable with denominators {denominators}")


def quantize_fusion(alpha, t, *, mode: str = "exact", min_face: int = 0) -> FusionParams:
    """Weights rounded to tenths (ties to even), beta = 1 - alpha.

    ``mode="exact"`` keeps t exact over a denominator of 10, 20 or 100;
    ``mode="strict"`` also rounds t to tenths.
    """
    alpha, t = _exact(alpha), _exact(t)
    if not 0 <= alpha <= 1:
        raise ValueError("alpha must lie in [0, 1]")
    if not 0 < t < 1:
        raise ValueError("threshold must lie in (0, 1)")
    alpha_q = round(alpha * WEIGHT_SCALE)
    lossy = (alpha * WEIGHT_SCALE).denominator != 1
    if mode == "exact":
        t_num, t_den = rational_threshold(t)
    elif mode == "strict":
        t_num, t_den = round(t * WEIGHT_SCALE), WEIGHT_SCALE
        lossy = lossy or (t * WEIGHT_SCALE).denominator != 1
    else:
        raise ValueError(f"unknown quantization mode {mode!r}")
    return FusionParams(alpha_q, WEIGHT_SCALE - alpha_q, t_num, t_den, WEIGHT_SCALE, min_face, lossy)


def oracle_fusion(hd, sed, params: FusionParams, face_range) -> bool:
    """Exact-rational evaluation of the fused rule; True means accept."""
    span = Fraction(face_range) - params.min_face
    if span <= 0:
        raise ValueError("face range must exceed the face minimum")
    score = params.alpha * Fraction(hd) + params.beta * (Fraction(sed) - params.min_face) / span
    return score < params.threshold


def oracle_iris_decision(server: IrisTemplate, client: IrisTemplate, t_num: int, t_den: int) -> bool:
    """Division-free iris rule num*t_den < t_num*den (rejects fully masked pairs)."""
    num, den = iris_fraction(server.bits, server.mask, client.bits, client.mask)
    return num * t_den < t_num * den


def oracle_face_decision(server: FaceTemplate, client: FaceTemplate, t_squared: int) -> bool:
    return oracle_face_sed(server, client) < t_squared


def oracle_multimodal_decision(
    server_iris: IrisTemplate,
    client_iris: IrisTemplate,
    server_face: FaceTemplate,
    client_face: FaceTemplate,
    params: FusionParams,
    face_range: int,
) -> bool:
    num, den = iris_fraction(server_iris.bits, server_iris.mask, client_iris.bits, client_iris.mask)
    sed = oracle_face_sed(server_face, client_face)
    if den == 0:
        # division-free form with den = 0 degenerates to 0 < 0
        return False
    return oracle_fusion(Fraction(num, den), sed, params, face_range)


# -- public protocol setups ---------------------------------------------------


@dataclass(frozen=True)
class IrisSetup:
    n_bits: int
    t_den: int
    t_num: int | None = None  # set only when the threshold is public
    paper_faithful: bool = False

    def check_range(self, params: FieldParams, t_num: int | None = None) -> None:
        t_num = self.t_num if t_num is None else t_num
        bound = max(self.t_den, t_num if t_num is not None else self.t_den) * self.n_bits
        if bound >= params.half:
            raise RangeFitError(f"iris operands up to {bound} do not fit below p/2 = {params.p / 2:g}")


@dataclass(frozen=True)
class FaceSetup:
    k: int
    t_squared: int
    bf: int = 8

    @property
    def sed_bound(self) -> int:
        return self.k * ((1 << self.bf) - 1) ** 2

    def check_range(self, params: FieldParams) -> None:
        if max(self.sed_bound, self.t_squared) >= params.half:
            raise RangeFitError(
                f"face operands up to {max(self.sed_bound, self.t_squared)} do not fit below p/2"
            )


@dataclass(frozen=True)
class MultimodalSetup:
    n_bits: int
    k: int
    params: FusionParams
    bf: int = 8
    range_bound: int | None = None  # public bound on the server's face range R
    face_range: int | None = None  # set only when R is public
    paper_faithful: bool = False
    lean: bool = False

    def __post_init__(self):
        if self.paper_faithful and self.lean:
            raise ValueError("paper-faithful and lean fusion modes are exclusive")

    @property
    def sed_bound(self) -> int:
        return self.k * ((1 << self.bf) - 1) ** 2

    @property
    def r_bound(self) -> int:
        return self.range_bound if self.range_bound is not None else self.sed_bound

    def operand_bounds(self) -> tuple[int, int]:
        w_num, w_sed, w_thr = self.params.integer_weights()
        span = self.r_bound - self.params.min_face
        sed = max(self.sed_bound - self.params.min_face, 0)
        n = self.n_bits
        return w_num * n * span + w_sed * sed * n, w_thr * n * span

    def check_range(self, field: FieldParams) -> None:
        lhs, rhs = self.operand_bounds()
        if max(lhs, rhs) >= field.half:
            raise RangeFitError(
                f"fusion operands up to {max(lhs, rhs)} do not fit below p/2 = {field.p / 2:g}; "
                "lower the feature width, N, or the threshold denominator"
            )


@dataclass(frozen=True, eq=False)
class ScorePair:
    num: AuthShare
    den: AuthShare


# -- secure protocols ---------------------------------------------------------


def _iris_vector(t: IrisTemplate, n_bits: int) -> np.ndarray:
    if t.n_bits != n_bits:
        raise TemplateError(f"template has {t.n_bits} bits, protocol expects {n_bits}")
    if t.mask.all():
        raise TemplateError("template is fully masked; no usable bits")
    return np.concatenate([t.bits, t.mask]).astype(np.uint64)


def _face_vector(t: FaceTemplate, k: int, bf: int) -> np.ndarray:
    if t.k != k or t.bf > bf:
        raise TemplateError(f"face template (k={t.k}, bf={t.bf}) does not match k={k}, bf={bf}")
    return t.features.astype(np.uint64)


def _iris_layers(session: PartySession, f1, m1, f2, m2, extra=None):
    """Shared XOR/OR layer, masked-difference layer, optional piggy-backed
    product pair in the second layer. Returns (ScorePair, extra product)."""
    n = len(f1)
    prod = session.mul_batch(AuthShare.concat([f1, m1]), AuthShare.concat([f2, m2]))
    ff, mm = prod[:n], prod[n:]
    xor = f1 + f2 - 2 * ff
    either = m1 + m2 - mm
    keep = session.add_public(1, (session.params.p - 1) * either)
    den = session.add_public(n, (session.params.p - 1) * either.total())
    if extra is None:
        num = session.mul_batch(xor, keep).total()
        return ScorePair(num, den), None
    lhs, rhs = extra(den)
    out = session.mul_batch(AuthShare.concat([xor, lhs]), AuthShare.concat([keep, rhs]))
    return ScorePair(out[:n].total(), den), out[n:]


def iris_distance_shares(session: PartySession, f1, m1, f2, m2) -> ScorePair:
    """Shares of (num, den) of the masked Hamming distance; 3N triples."""
    return _iris_layers(session, f1, m1, f2, m2)[0]


def _decide(session: PartySession, bit: AuthShare) -> Decision:
    try:
        value = session.open_output(bit)
    except MacCheckFailed:
        return Decision.ABORT
    return Decision.ACCEPT if int(value[0]) == 1 else Decision.REJECT


def iris_authenticate(
    session: PartySession,
    setup: IrisSetup,
    template: IrisTemplate | None = None,
    t_num: int | None = None,
) -> Decision:
    """Accept iff num * t_den < t_num * den.

    The server passes its enrolled template and, unless the threshold is
    public, its private numerator ``t_num``; the client passes its probe.
    """
    n = setup.n_bits
    private = setup.t_num is None
    if session.party == SERVER:
        if private and t_num is None:
            raise ValueError("server must supply the private threshold numerator")
        setup.check_range(session.params, t_num)
        vec = _iris_vector(template, n)
        srv = session.share_input(SERVER, np.append(vec, t_num) if private else vec)
        cli = session.share_input(CLIENT, count=2 * n)
    else:
        setup.check_range(session.params, setup.t_num if not private else setup.t_den)
        srv = session.share_input(SERVER, count=2 * n + private)
        cli = session.share_input(CLIENT, _iris_vector(template, n))
    f1, m1, f2, m2 = srv[:n], srv[n:2 * n], cli[:n], cli[n:]

    if not private:
        scores, _ = _iris_layers(session, f1, m1, f2, m2)
        rhs = setup.t_num * scores.den
    elif setup.paper_faithful:
        scores, _ = _iris_layers(session, f1, m1, f2, m2)
        rhs = session.mul_batch(scores.den, srv[2 * n:])
    else:
        scores, rhs = _iris_layers(session, f1, m1, f2, m2, extra=lambda den: (den, srv[2 * n:]))
    lhs = setup.t_den * scores.num
    return _decide(session, session.compare_less(lhs, rhs))


def face_sed_shares(session: PartySession, a: AuthShare, b: AuthShare) -> AuthShare:
    """Shares of the squared Euclidean distance; k squares in one flush."""
    return session.square_batch(a - b).total()


def face_authenticate(session: PartySession, setup: FaceSetup, template: FaceTemplate) -> Decision:
    """Accept iff SED < t^2 with t^2 public."""
    setup.check_range(session.params)
    k = setup.k
    vec = _face_vector(template, k, setup.bf)
    if session.party == SERVER:
        a = session.share_input(SERVER, vec)
        b = session.share_input(CLIENT, count=k)
    else:
        a = session.share_input(SERVER, count=k)
        b = session.share_input(CLIENT, vec)
    sed = face_sed_shares(session, a, b)
    return _decide(session, session.compare_less(sed, session.constant([setup.t_squared])))


def fuse_authenticate(
    session: PartySession,
    setup: MultimodalSetup,
    iris: IrisTemplate,
    face: FaceTemplate,
    face_range: int | None = None,
) -> Decision:
    """Division-free fused rule

        w_num * num * R + w_sed * SED * den < w_thr * den * R

    with R and SED shifted by the public face minimum. By default the three
    integer weights enter as constant shares and are multiplied in, six
    share products in two batched layers; ``paper_faithful`` runs the six
    products one after another; ``lean`` applies the weights as public
    scalars (three products).
    """
    fp = setup.params
    n, k = setup.n_bits, setup.k
    setup.check_range(session.params)
    private_r = setup.face_range is None
    iris_vec = _iris_vector(iris, n)
    face_vec = _face_vector(face, k, setup.bf)
    if session.party == SERVER:
        extra = []
        if private_r:
            if face_range is None:
                raise ValueError("server must supply the private face range R")
            if not fp.min_face < face_range <= setup.r_bound:
                raise RangeFitError(f"face range {face_range} outside ({fp.min_face}, {setup.r_bound}]")
            extra = [face_range - fp.min_face]
        srv = session.share_input(SERVER, np.concatenate([iris_vec, face_vec, np.array(extra, dtype=np.uint64)]))
        cli = session.share_input(CLIENT, count=2 * n + k)
    else:
        srv = session.share_input(SERVER, count=2 * n + k + private_r)
        cli = session.share_input(CLIENT, np.concatenate([iris_vec, face_vec]))
    f1, m1, w1 = srv[:n], srv[n:2 * n], srv[2 * n:2 * n + k]
    f2, m2, w2 = cli[:n], cli[n:2 * n], cli[2 * n:]

    layer1 = session.mul_batch(AuthShare.concat([f1, m1]), AuthShare.concat([f2, m2]))
    sq = session.square_batch(w1 - w2)
    ff, mm = layer1[:n], layer1[n:]
    xor = f1 + f2 - 2 * ff
    either = m1 + m2 - mm
    minus = session.params.p - 1
    keep = session.add_public(1, minus * either)
    den = session.add_public(n, minus * either.total())
    num = session.mul_batch(xor, keep).total()
    sed = session.add_public(-fp.min_face, sq.total())

    w_num, w_sed, w_thr = fp.integer_weights()
    seq = setup.paper_faithful
    if private_r:
        r = srv[2 * n + k:]
        if setup.lean:
            t_num_r, t_sed_den, t_den_r = _products(session, [(num, r), (sed, den), (den, r)], seq)
            lhs = w_num * t_num_r + w_sed * t_sed_den
            rhs = w_thr * t_den_r
        else:
            c = session.constant([w_num, w_sed, w_thr])
            a_num, a_sed, a_thr = _products(session, [(c[0:1], num), (c[1:2], sed), (c[2:3], den)], seq)
            b_num, b_sed, b_thr = _products(session, [(a_num, r), (a_sed, den), (a_thr, r)], seq)
            lhs, rhs = b_num + b_sed, b_thr
    else:
        r = setup.face_range - fp.min_face
        if setup.lean:
            (t_sed_den,) = _products(session, [(sed, den)], seq)
            lhs = (w_num * r) * num + w_sed * t_sed_den
            rhs = (w_thr * r) * den
        else:
            c = session.constant([w_num, w_sed, w_thr])
            a_num, a_sed, a_thr = _products(session, [(c[0:1], num), (c[1:2], sed), (c[2:3], den)], seq)
            (b_sed,) = _products(session, [(a_sed, den)], seq)
            lhs, rhs = r * a_num + b_sed, r * a_thr
    return _decide(session, session.compare_less(lhs, rhs))


def _products(session: PartySession, pairs, sequential: bool) -> list[AuthShare]:
    """Products of one-element shares: one batch, or one after another."""
    if sequential:
        return [session.mul_batch(x, y) for x, y in pairs]
    out = session.mul_batch(AuthShare.concat([x for x, _ in pairs]), AuthShare.concat([y for _, y in pairs]))
    return [out[i:i + 1] for i in range(len(pairs))]
