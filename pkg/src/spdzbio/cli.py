"""Command-line entry point: ``spdzbio {deal,gen-data,run,verify,bench}``.

Exit codes of ``run``: 0 accept, 1 reject, 2 abort, 3 operational error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .dealer import deal, read_bundle, write_bundle
from .engine import PartySession
from .errors import SessionAborted, SpdzError
from .field import DEFAULT_PRIME, EntropySource, FieldParams
from .protocols import (
    Decision,
    FaceSetup,
    FaceTemplate,
    IrisSetup,
    IrisTemplate,
    MultimodalSetup,
    quantize_fusion,
    read_templates,
    write_templates,
)
from .report import build_record, format_record
from .runner import ClientInputs, RunResult, ServerInputs, party_function, required_counts, run_protocol
from .synth import face_pair, iris_pair
from .transport import connect_tcp, listen_tcp

log = logging.getLogger("spdzbio")

EXIT_CODES = {Decision.ACCEPT: 0, Decision.REJECT: 1, Decision.ABORT: 2}
EXIT_ERROR = 3

# (N, k, alpha, t) rows of the reference experiment grid
DEFAULT_GRID = [
    (1600, 1, 0.80, 0.35),
    (1600, 2, 0.55, 0.25),
    (3600, 3, 0.55, 0.25),
    (5760, 2, 0.80, 0.35),
    (6400, 2, 0.80, 0.35),
]


class UsageError(Exception):
    pass


# -- shared option helpers ---------------------------------------------------------


def _field(args) -> FieldParams:
    try:
        return FieldParams(args.p)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _template_length(args) -> int | None:
    if args.radial is not None or args.angular is not None:
        if args.radial is None or args.angular is None:
            raise UsageError("--radial and --angular go together")
        n = 2 * args.radial * args.angular
        if args.n is not None and args.n != n:
            raise UsageError(f"--n {args.n} disagrees with 2*r*theta = {n}")
        return n
    return args.n


def _add_shape(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=int, help="iriscode length N")
    p.add_argument("--radial", type=int, help="radial resolution r (N = 2*r*theta)")
    p.add_argument("--angular", type=int, help="angular resolution theta")
    p.add_argument("--k", type=int, help="number of eigenface projections")


def _add_modes(p: argparse.ArgumentParser) -> None:
    p.add_argument("--paper-faithful", action="store_true",
                   help="sequence the fusion products one per round")
    p.add_argument("--public-thresholds", action="store_true",
                   help="treat the iris threshold and face range as public")
    p.add_argument("--lean", action="store_true", help="public fusion weights, fewer products")


def _threshold_num(t: float, t_den: int) -> int:
    from fractions import Fraction

    num = Fraction(str(t)) * t_den
    if num.denominator != 1:
        raise UsageError(f"threshold {t} is not a multiple of 1/{t_den}; pass a matching --t-den")
    return int(num)


# -- deal ----------------------------------------------------------------------------


def cmd_deal(args) -> int:
    f = _field(args)
    n = _template_length(args) or 0
    k = args.k or 0
    try:
        counts = required_counts(args.protocol, _setup_shape(args.protocol, n, k, args), f.ell)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    counts = counts.scaled(args.margin)
    src = EntropySource(args.seed)
    b1, b2 = deal(f, counts, src.child("dealer"))
    prefix = Path(args.out)
    write_bundle(b1, f"{prefix}.p1")
    write_bundle(b2, f"{prefix}.p2")
    print(f"bundle_id={b1.bundle_id.hex()} triples={counts.triples} squares={counts.squares} "
          f"randbits={counts.randbits} masks_per_party={counts.masks_per_party}")
    return 0


def _setup_shape(protocol: str, n: int, k: int, args):
    """A setup object carrying only what sizing the preprocessing needs."""
    if protocol == "iris":
        return IrisSetup(n, 1, t_num=0 if args.public_thresholds else None)
    if protocol == "face":
        return FaceSetup(k, 0)
    return MultimodalSetup(n, k, quantize_fusion(0.8, 0.35), face_range=1 if args.public_thresholds else None,
                           lean=args.lean)


# -- gen-data -----------------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    n = _template_length(args) or 1600
    k = args.k or 2
    rng = np.random.default_rng(args.seed)
    server, client = [], []
    for _ in range(args.count):
        genuine = not args.impostor
        ia, ib = iris_pair(n, rng, genuine=genuine, flip_rate=args.flip, mask_rate=args.mask_rate,
                           radial=args.radial, angular=args.angular)
        fa, fb = face_pair(k, rng, genuine=genuine, bf=args.bf, radius=args.radius)
        server += [ia, fa]
        client += [ib, fb]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_templates(out / "server.tpl", server)
    write_templates(out / "client.tpl", client)
    print(f"wrote {args.count} {'impostor' if args.impostor else 'genuine'} pair(s) to {out}")
    return 0


# -- run --------------------------------------------------------------------------------


def _load_pair(path, index: int) -> tuple[IrisTemplate | None, FaceTemplate | None]:
    records = read_templates(path)
    irises = [t for t in records if isinstance(t, IrisTemplate)]
    faces = [t for t in records if isinstance(t, FaceTemplate)]
    pick = lambda xs: xs[index] if index < len(xs) else None  # noqa: E731
    return pick(irises), pick(faces)


def _build_setup(args, iris: IrisTemplate | None, face: FaceTemplate | None):
    proto = args.protocol
    n = iris.n_bits if iris is not None else None
    k = face.k if face is not None else None
    want_n = _template_length(args)
    if want_n is not None and n is not None and want_n != n:
        raise UsageError(f"templates have N={n}, --n says {want_n}")
    if args.k is not None and k is not None and args.k != k:
        raise UsageError(f"templates have k={k}, --k says {args.k}")
    if proto in ("iris", "multimodal") and n is None:
        raise UsageError("no iris template found")
    if proto in ("face", "multimodal") and k is None:
        raise UsageError("no face template found")
    bf = args.bf if args.bf is not None else face.bf if face is not None else 8
    if proto == "iris":
        t_num = _threshold_num(args.t, args.t_den) if args.public_thresholds else None
        return IrisSetup(n, args.t_den, t_num=t_num, paper_faithful=args.paper_faithful)
    if proto == "face":
        if args.t2 is None:
            raise UsageError("face runs need --t2 (squared threshold)")
        return FaceSetup(k, args.t2, bf)
    setup = MultimodalSetup(
        n, k, quantize_fusion(args.alpha, args.t), bf,
        range_bound=args.range_bound,
        paper_faithful=args.paper_faithful,
        lean=args.lean,
    )
    if args.public_thresholds:
        r = args.face_range if args.face_range is not None else setup.r_bound
        setup = replace(setup, face_range=r)
    return setup


def _server_inputs(args, setup, iris, face) -> ServerInputs:
    t_num = None
    if args.protocol == "iris":
        if args.t is None:
            raise UsageError("the server needs --t")
        t_num = _threshold_num(args.t, args.t_den)
    face_range = None
    if args.protocol == "multimodal":
        face_range = args.face_range if args.face_range is not None else setup.r_bound
    return ServerInputs(iris=iris, face=face, t_num=t_num, face_range=face_range)


def _emit(args, result: RunResult, decision: Decision, role: str, n: int, k: int, p: int) -> int:
    print(f"decision={decision.value}")
    if args.report:
        mode = "paper-faithful" if args.paper_faithful else "lean" if args.lean else "default"
        rec = build_record(result, p=p, n=n, k=k, mode=mode)
        rec["role"] = role
        with open(args.report, "a") as fh:
            fh.write(format_record(rec) + "\n")
    return EXIT_CODES[decision]


def cmd_run(args) -> int:
    f = _field(args)
    if args.role == "both-local":
        if len(args.templates) != 2:
            raise UsageError("both-local needs --templates SERVER CLIENT")
        s_iris, s_face = _load_pair(args.templates[0], args.index)
        c_iris, c_face = _load_pair(args.templates[1], args.index)
        setup = _build_setup(args, s_iris, s_face)
        bundles = None
        if args.bundle:
            if len(args.bundle) != 2:
                raise UsageError("both-local needs --bundle P1 P2 or none")
            bundles = (read_bundle(args.bundle[0]), read_bundle(args.bundle[1]))
        server = _server_inputs(args, setup, s_iris, s_face)
        res = run_protocol(args.protocol, f, setup, server, ClientInputs(c_iris, c_face),
                           seed=args.seed, bundles=bundles, timeout=args.timeout)
        for side in (res.server, res.client):
            if isinstance(side, Exception) and not isinstance(side, (SpdzError, OSError)):
                raise side
        return _emit(args, res, res.decision, "both-local", getattr(setup, "n_bits", 0), getattr(setup, "k", 0), f.p)

    if len(args.templates) != 1 or not args.bundle or len(args.bundle) != 1:
        raise UsageError(f"{args.role} needs one --templates file and one --bundle file")
    if not args.addr:
        raise UsageError(f"{args.role} needs --addr HOST:PORT")
    iris, face = _load_pair(args.templates[0], args.index)
    setup = _build_setup(args, iris, face)
    bundle = read_bundle(args.bundle[0])
    if bundle.params.p != f.p:
        raise UsageError(f"bundle is for p={bundle.params.p}, --p is {f.p}")
    want = 1 if args.role == "server" else 2
    if bundle.party != want:
        raise UsageError(f"bundle belongs to party {bundle.party}, the {args.role} is party {want}")
    inputs = _server_inputs(args, setup, iris, face) if args.role == "server" else ClientInputs(iris, face)

    if args.role == "server":
        endpoint = listen_tcp(args.addr, accept_timeout=args.timeout, timeout=args.timeout)
    else:
        endpoint = connect_tcp(args.addr, timeout=args.timeout)
    session = PartySession(bundle, endpoint, EntropySource(args.seed).child("sessions").child(f"party{want}"))
    t0 = time.perf_counter()
    try:
        decision = party_function(args.protocol, setup, inputs)(session)
    except SessionAborted:
        decision = Decision.ABORT
    finally:
        elapsed = time.perf_counter() - t0
        endpoint.close()
    stats = session.stats()
    result = RunResult(args.protocol, f.ell, decision, decision, stats, stats, elapsed,
                       required_counts(args.protocol, setup, f.ell))
    return _emit(args, result, decision, args.role, getattr(setup, "n_bits", 0), getattr(setup, "k", 0), f.p)


# -- verify / bench ------------------------------------------------------------------------


def cmd_verify(args) -> int:
    from .verify import run_all

    results = run_all(quick=args.quick, only=args.only)
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def _parse_grid(text: str) -> list[tuple[int, int, float, float]]:
    rows = []
    for item in text.split(","):
        parts = item.split(":")
        if len(parts) != 4:
            raise UsageError(f"grid rows look like N:k:alpha:t, got {item!r}")
        rows.append((int(parts[0]), int(parts[1]), float(parts[2]), float(parts[3])))
    return rows


def cmd_bench(args) -> int:
    f = _field(args)
    grid = _parse_grid(args.grid) if args.grid else DEFAULT_GRID
    mode = "paper-faithful" if args.paper_faithful else "lean" if args.lean else "default"
    out = open(args.report, "a") if args.report else None
    try:
        for row, (n, k, alpha, t) in enumerate(grid):
            rng = np.random.default_rng([args.seed or 0, row])
            ia, ib = iris_pair(n, rng, genuine=True)
            fa, fb = face_pair(k, rng, genuine=True, bf=args.bf)
            for proto in args.protocols:
                if proto == "iris":
                    t_num, t_den = _iris_threshold(t)
                    setup = IrisSetup(n, t_den, t_num=t_num if args.public_thresholds else None,
                                      paper_faithful=args.paper_faithful)
                    srv, cli = ServerInputs(iris=ia, t_num=t_num), ClientInputs(iris=ib)
                elif proto == "face":
                    setup = FaceSetup(k, 100 * k, args.bf)
                    srv, cli = ServerInputs(face=fa), ClientInputs(face=fb)
                else:
                    setup = MultimodalSetup(n, k, quantize_fusion(alpha, t), args.bf,
                                            paper_faithful=args.paper_faithful, lean=args.lean)
                    if args.public_thresholds:
                        setup = MultimodalSetup(n, k, setup.params, args.bf, face_range=setup.r_bound,
                                                paper_faithful=args.paper_faithful, lean=args.lean)
                    srv = ServerInputs(iris=ia, face=fa, face_range=setup.r_bound)
                    cli = ClientInputs(iris=ib, face=fb)
                res = run_protocol(proto, f, setup, srv, cli, seed=f"{args.seed}/{row}/{proto}")
                rec = build_record(res, p=f.p, n=n if proto != "face" else 0, k=k if proto != "iris" else 0,
                                   mode=mode)
                rec["alpha"], rec["t"] = alpha, t
                text = format_record(rec)
                print(text)
                if out:
                    out.write(text + "\n")
    finally:
        if out:
            out.close()
    return 0


def _iris_threshold(t: float) -> tuple[int, int]:
    from .protocols import rational_threshold

    return rational_threshold(str(t))


# -- parser ---------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spdzbio", description="Two-party authenticated biometric matching.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    d = sub.add_parser("deal", help="generate preprocessing bundles for both parties")
    d.add_argument("--protocol", choices=("iris", "face", "multimodal"), required=True)
    _add_shape(d)
    d.add_argument("--p", type=int, default=DEFAULT_PRIME)
    d.add_argument("--margin", type=int, default=1, help="multiply the estimated counts by this factor")
    d.add_argument("--out", required=True, help="output prefix; writes PREFIX.p1 and PREFIX.p2")
    d.add_argument("--seed", type=int)
    d.add_argument("--public-thresholds", action="store_true")
    d.add_argument("--lean", action="store_true")
    d.set_defaults(func=cmd_deal)

    g = sub.add_parser("gen-data", help="write synthetic server/client templates")
    _add_shape(g)
    g.add_argument("--bf", type=int, default=8, help="face feature width in bits")
    g.add_argument("--flip", type=float, default=0.05, help="genuine bit-flip rate")
    g.add_argument("--mask-rate", type=float, default=0.05)
    g.add_argument("--radius", type=int, default=4, help="genuine face perturbation radius")
    g.add_argument("--impostor", action="store_true", help="independent probe templates")
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_gen_data)

    r = sub.add_parser("run", help="execute one authentication")
    r.add_argument("--protocol", choices=("iris", "face", "multimodal"), required=True)
    r.add_argument("--role", choices=("server", "client", "both-local"), default="both-local")
    r.add_argument("--templates", nargs="+", required=True,
                   help="template file (server/client) or SERVER CLIENT files (both-local)")
    r.add_argument("--index", type=int, default=0, help="which pair in the template files")
    r.add_argument("--bundle", nargs="+", help="bundle file(s); both-local deals in-process if omitted")
    r.add_argument("--addr", help="HOST:PORT to listen on (server) or connect to (client)")
    _add_shape(r)
    r.add_argument("--bf", type=int)
    r.add_argument("--t", type=float, default=0.35, help="iris or fusion threshold")
    r.add_argument("--t-den", type=int, default=20, help="public denominator of the iris threshold")
    r.add_argument("--alpha", type=float, default=0.80, help="fusion iris weight")
    r.add_argument("--t2", type=int, help="squared face threshold")
    r.add_argument("--face-range", type=int, help="server's face score range R")
    r.add_argument("--range-bound", type=int, help="public upper bound on R")
    r.add_argument("--p", type=int, default=DEFAULT_PRIME)
    r.add_argument("--seed", type=int)
    r.add_argument("--timeout", type=float, default=60.0)
    r.add_argument("--report", help="append a key=value record to this file")
    _add_modes(r)
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="run the self-verification suite")
    v.add_argument("--quick", action="store_true")
    v.add_argument("--only", nargs="+", help="subset of checks to run")
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bench", help="run the experiment grid and print report records")
    b.add_argument("--grid", help="comma-separated N:k:alpha:t rows")
    b.add_argument("--protocols", nargs="+", choices=("iris", "face", "multimodal"),
                   default=["iris", "face", "multimodal"])
    b.add_argument("--p", type=int, default=DEFAULT_PRIME)
    b.add_argument("--bf", type=int, default=8)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--report")
    _add_modes(b)
    b.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "paper_faithful", False) and getattr(args, "lean", False):
        print("error: --paper-faithful and --lean are exclusive", file=sys.stderr)
        return EXIT_ERROR
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
    except (SpdzError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
