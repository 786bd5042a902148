"""Command-line front end.

Every subcommand prints a header with the package version and the fully
resolved configuration, followed by ``key: value`` records.  Point lists can
be written as CSV instead.  Exit status is 0 for definitive verdicts, 2 when
a result could not be certified and 1 for usage or validation errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from gmpy2 import mpfr

from . import __version__
from .chains import (
    FiniteNet,
    PreconditionError,
    ShadowFailure,
    build_chain_graph,
    core_net,
    hausdorff,
    is_chain_transitive,
    random_pseudo_orbit,
    shadow_point,
    verify_pseudo_orbit,
    weak_incompressibility_check,
)
from .kneading import (
    NoConvergenceError,
    admissible,
    kneading_prefix,
    precritical_admissible,
    shadowing_criterion,
    signature,
    slope_from_kneading,
)
from .omega import (
    ConstructionError,
    build_counterexample,
    construct_omega_point,
    critical_data,
    non_omega_certificate,
    omega_approx,
    omega_membership,
    precritical_set,
)
from .symbolic import InsufficientPrefixError, as_view, format_sequence, parse_sequence
from .tent import (
    DEFAULT_PRECISION,
    HALF,
    AmbiguousError,
    InadmissiblePrefixError,
    Side,
    TentMap,
    UncertifiedError,
    evaluate,
    format_point,
    itinerary_prefix,
    limit_itinerary,
    orbit_prefix,
    parse_point,
    precision_for_depth,
    resolve_slope,
)

log = logging.getLogger("tentdyn")

EXIT_OK, EXIT_USAGE, EXIT_UNCERTIFIED = 0, 1, 2


class OutputFormat(Enum):
    STRUCTURED_TEXT = "text"
    CSV = "csv"


@dataclass
class RunConfig:
    command: str
    slope_spec: str
    precision_bits: int
    options: dict = field(default_factory=dict)
    output_path: str | None = None
    format: OutputFormat = OutputFormat.STRUCTURED_TEXT

    def header(self) -> list[str]:
        lines = [f"# tentdyn {__version__}", f"command: {self.command}",
                 f"slope: {self.slope_spec}", f"precision_bits: {self.precision_bits}"]
        lines += [f"{k}: {v}" for k, v in sorted(self.options.items())]
        return lines


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class Report:
    """Accumulates output records; ``uncertain`` switches the exit status to 2."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.records: list[tuple[str, str]] = []
        self.rows: list[tuple] = []
        self.columns: tuple = ("index", "value")
        self.uncertain = False

    def add(self, key: str, value) -> None:
        self.records.append((key, _fmt(value)))

    def render(self) -> str:
        if self.config.format is OutputFormat.CSV and self.rows:
            buf = io.StringIO()
            for line in self.config.header():
                buf.write(f"# {line.lstrip('# ')}\n")
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(self.columns)
            w.writerows([_fmt(c) for c in row] for row in self.rows)
            return buf.getvalue()
        lines = self.config.header() + ["---"]
        lines += [f"{k}: {v}" for k, v in self.records]
        if self.rows:
            lines.append(f"points: {len(self.rows)}")
            lines += [f"  {', '.join(_fmt(c) for c in row)}" for row in self.rows]
        return "\n".join(lines) + "\n"


def _fmt(value) -> str:
    if isinstance(value, type(HALF)):
        return f"{value:.20g}"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    return str(value)


# -- argument helpers ------------------------------------------------------------


def _make_map(args) -> TentMap:
    slope, hint, label = resolve_slope(args.slope, args.precision)
    return TentMap(slope, args.precision, hint, label)


def _point(T: TentMap, text: str) -> mpfr:
    t = text.strip().lower()
    if t == "c":
        return HALF
    if t in ("t(c)", "tc"):
        return T.critical_value
    return parse_point(text, T.precision_bits)


def _seq(text: str):
    try:
        return parse_sequence(text)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _resolve_net(T: TentMap, spec: str) -> tuple[TentMap, FiniteNet]:
    """Net specifications: ``core:SPACING``, ``points:x,y,...``, ``critical``,
    ``omega:POINT``, ``file:PATH`` and ``counterexample:K``."""
    kind, _, arg = spec.partition(":")
    if kind == "core":
        return T, core_net(T, float(arg or 0.02))
    if kind == "points":
        vals = [_point(T, v) for v in arg.split(",") if v.strip()]
        return T, FiniteNet(tuple(vals), 0.0, spec)
    if kind == "critical":
        ret = T.critical_return
        if ret is None:
            raise UsageError("critical orbit net needs a periodic critical point")
        return T, FiniteNet(ret.orbit, 0.0, "critical orbit")
    if kind == "omega":
        return T, omega_approx(T, _point(T, arg), 1000, 2000, 1e-3).net
    if kind == "file":
        with open(arg) as fh:
            rows = [ln.split(",")[-1].strip() for ln in fh if ln.strip() and not ln.startswith("#")]
        vals = [parse_point(r, T.precision_bits) for r in rows if r not in ("value", "x")]
        return T, FiniteNet(tuple(vals), 0.0, spec)
    if kind == "counterexample":
        ce = build_counterexample(int(arg or 2))
        return ce.T, ce.net
    raise UsageError(f"unknown net specification {spec!r}")


# -- subcommands -------------------------------------------------------------------


def cmd_itinerary(args, rep: Report):
    T = _make_map(args)
    x = _point(T, args.x)
    Tw = T.with_precision(precision_for_depth(T, args.depth))
    if args.side == "exact":
        res = itinerary_prefix(Tw, x, args.depth, T.tol)
    else:
        res = limit_itinerary(Tw, x, Side.UPPER if args.side == "upper" else Side.LOWER, args.depth, T.tol)
    rep.add("x", format_point(x))
    rep.add("side", args.side)
    rep.add("itinerary", res.word)
    rep.add("critical_hit", res.crit_hit)
    rep.add("certified", res.certified)
    rep.add("in_core", res.in_core)
    rep.uncertain = not res.certified


def cmd_kneading(args, rep: Report):
    T = _make_map(args)
    K = kneading_prefix(T, args.depth)
    rep.add("kneading", K.prefix)
    rep.add("exact", K.exact if K.exact is not None else "none")
    rep.add("m", K.period_m if K.period_m is not None else "none")
    rep.add("certified", K.certified)
    rep.add("critical_value", T.critical_value)
    if K.exact is not None and K.period_m >= 3:
        cd = critical_data(T)
        rep.add("delta_T", cd.delta_T)
        rep.add("accessible", cd.accessible)
        rep.add("landing", cd.landing)
    rep.uncertain = not K.certified


def cmd_slope_find(args, rep: Report):
    target = _seq(args.target)
    lam = slope_from_kneading(target, args.depth, bits=args.precision)
    check = kneading_prefix(TentMap(lam, args.precision + 64), args.depth)
    rep.add("slope", lam)
    rep.add("target", format_sequence(target))
    rep.add("recomputed_prefix", check.prefix)
    rep.add("matches", check.prefix == parse_prefix(target, args.depth))


def parse_prefix(target, depth: int) -> str:
    v = as_view(target)
    return v.prefix(min(depth, v.known_length))


def cmd_admissible(args, rep: Report):
    T = _make_map(args)
    s = _seq(args.seq)
    K = kneading_prefix(T, max(args.depth, 64) + 64)
    v = admissible(s, K, args.depth)
    rep.add("sequence", format_sequence(s))
    rep.add("kneading", K)
    rep.add("status", v.status)
    if v.witness is not None:
        rep.add("witness_shift", v.witness.shift)
        rep.add("witness_depth", v.witness.depth)
        rep.add("witness_window", v.witness.window)
        rep.add("witness_reason", v.witness.reason)


def cmd_precritical(args, rep: Report):
    T = _make_map(args)
    if args.prefix is not None:
        v = precritical_admissible(args.prefix, T)
        rep.add("prefix", args.prefix)
        rep.add("admissible", v.admissible)
        rep.add("case", v.case.name if v.case else "none")
        rep.add("certified", v.certified)
        if v.witness is not None:
            rep.add("witness_shift", v.witness.shift)
            rep.add("witness_window", v.witness.window)
        rep.uncertain = not v.certified
        return
    ps = precritical_set(T, args.level)
    rep.add("levels", ps.levels)
    rep.add("count", len(ps.points))
    rep.add("truncated", ps.truncated)
    rep.columns = ("index", "value", "n_p", "word")
    rep.rows = [(i, p.value, p.n_p, p.word or "-") for i, p in enumerate(ps.points)]


def cmd_signature(args, rep: Report):
    T = _make_map(args)
    K = kneading_prefix(T, args.n + 1)
    rep.add("kneading", K.prefix[: args.n])
    rep.add("signature", signature(K, args.n))


def cmd_shadow_criterion(args, rep: Report):
    T = _make_map(args)
    r = shadowing_criterion(T, args.epsilon, args.horizon)
    rep.add("status", r.status)
    rep.add("witness", r.witness if r.witness is not None else "none")
    rep.add("clause", r.clause or "none")
    rep.add("distance", r.distance if r.distance is not None else "none")
    rep.add("horizon", r.horizon)


def cmd_shadow_point(args, rep: Report):
    T = _make_map(args)
    if args.points:
        pts = tuple(_point(T, v) for v in args.points.split(","))
    else:
        pts = random_pseudo_orbit(T, args.delta, args.length, np.random.default_rng(args.seed))
    check = verify_pseudo_orbit(T, pts, args.delta)
    rep.add("length", len(pts))
    rep.add("pseudo_orbit", check.status)
    rep.add("max_jump", check.max_jump)
    try:
        enc = shadow_point(T, pts, args.epsilon)
    except ShadowFailure as exc:
        rep.add("status", exc.kind)
        rep.add("failure_index", exc.index)
        return
    rep.add("status", "SHADOWED")
    rep.add("enclosure_lo", enc.lo)
    rep.add("enclosure_hi", enc.hi)
    rep.add("width", float(enc.width))


def cmd_ict_check(args, rep: Report):
    T, net = _resolve_net(_make_map(args), args.net)
    g = build_chain_graph(T, net, args.delta)
    v = is_chain_transitive(g)
    rep.add("net", net)
    rep.add("edges", g.edge_count)
    rep.add("uncertain_edges", len(g.uncertain))
    rep.add("status", v.status)
    rep.add("components", v.components)
    if v.witness is not None:
        i, j = v.witness
        rep.add("no_chain_from", net.points[i])
        rep.add("no_chain_to", net.points[j])
    rep.uncertain = bool(g.uncertain)


def cmd_wi_check(args, rep: Report):
    T, net = _resolve_net(_make_map(args), args.net)
    v = weak_incompressibility_check(T, net, args.granularity, args.slack)
    rep.add("net", net)
    rep.add("status", v.status)
    rep.add("candidates", v.candidates)
    if v.witness is not None:
        rep.add("witness", [f"[{a:.12g}, {b:.12g}]" for a, b in v.witness])


def cmd_omega_approx(args, rep: Report):
    T = _make_map(args)
    oa = omega_approx(T, _point(T, args.x), args.burn_in, args.samples, args.cluster_tol)
    rep.add("size", len(oa.net))
    rep.add("truncated", oa.truncated)
    rep.rows = [(i, p) for i, p in enumerate(oa.net.points)]


def cmd_omega_member(args, rep: Report):
    T = _make_map(args)
    v = omega_membership(T, _point(T, args.x), _point(T, args.y), args.depth,
                         args.min_occurrences, args.horizon)
    rep.add("status", v.status)
    rep.add("preperiodic", v.preperiodic)
    rep.add("length", v.length)
    rep.add("occurrences", v.occurrences if v.occurrences is not None else "none")
    rep.add("pattern", v.pattern)


def cmd_counterexample(args, rep: Report):
    ce = build_counterexample(args.k, args.depth)
    for key, val in ce.provenance.items():
        rep.add(key, val)
    for d in args.deltas:
        rep.add(f"ict_{d}", is_chain_transitive(build_chain_graph(ce.T, ce.net, d)).status)
    crit = shadowing_criterion(ce.T, 0.01, args.horizon)
    rep.add("shadow_criterion", crit.status)
    cert = non_omega_certificate(args.k, args.depth)
    rep.add("certificate_kneading", cert.kneading)
    for c in cert.cases:
        rep.add(f"case_{c.H}", f"{c.verdict.value} window={c.window} shift={c.shift} ({c.detail})")


def cmd_construct_omega(args, rep: Report):
    T = _make_map(args)
    D = core_net(T, args.spacing)
    start = time.perf_counter()
    tr = construct_omega_point(T, D, args.stages, burn_in=args.burn_in, samples=args.samples,
                               seed=args.seed)
    rep.add("case", tr.case)
    rep.add("D", D)
    for r in tr.stages:
        rep.add(f"stage_{r.n}", f"F={len(r.F)} eps={r.epsilon!r} eta={r.eta!r} q={r.q} "
                                f"J={r.J} K={r.K} padded={r.padded} net={r.net_size}")
    if tr.case != "constructed":
        for note in tr.notes:
            rep.add("note", note)
        return
    rep.add("gamma_length", len(tr.gamma_prefix))
    rep.add("gamma_head", tr.gamma_prefix[:60])
    rep.add("admissibility", tr.admissibility.status)
    rep.add("segment_checks", f"{tr.segment_checks} sampled, {tr.segment_failures} failed")
    rep.add("y", tr.y.mid)
    rep.add("y_width", tr.y.width)
    oa = omega_approx(T, tr.y, args.burn_in, args.samples, args.cluster_tol)
    rep.add("omega_points", len(oa.net))
    rep.add("hausdorff_to_D", hausdorff(oa.net, D))
    log.info("construction took %.1f s", time.perf_counter() - start)


def cmd_plot_data(args, rep: Report):
    T = _make_map(args)
    rep.config.format = OutputFormat.CSV
    if args.kind == "orbit":
        x = _point(T, args.x)
        Tw = T.with_precision(precision_for_depth(T, args.n))
        rep.columns = ("index", "value")
        rep.rows = [(i, float(p)) for i, p in enumerate(orbit_prefix(Tw, x, args.n))]
    elif args.kind == "net":
        _, net = _resolve_net(T, args.net)
        rep.columns = ("index", "value")
        rep.rows = [(i, float(p)) for i, p in enumerate(net.points)]
    elif args.kind == "precritical":
        ps = precritical_set(T, args.n)
        rep.columns = ("n_p", "value")
        rep.rows = [(p.n_p, float(p.value)) for p in ps.points]
    elif args.kind == "cobweb":
        x = _point(T, args.x)
        Tw = T.with_precision(precision_for_depth(T, args.n))
        rows = []
        for p in orbit_prefix(Tw, x, args.n):
            rows.append((float(p), float(evaluate(Tw, p))))
        rep.columns = ("x", "y")
        rep.rows = rows


COMMANDS = {
    "itinerary": cmd_itinerary,
    "kneading": cmd_kneading,
    "slope-find": cmd_slope_find,
    "admissible": cmd_admissible,
    "precritical": cmd_precritical,
    "signature": cmd_signature,
    "shadow-criterion": cmd_shadow_criterion,
    "shadow-point": cmd_shadow_point,
    "ict-check": cmd_ict_check,
    "wi-check": cmd_wi_check,
    "omega-approx": cmd_omega_approx,
    "omega-member": cmd_omega_member,
    "counterexample": cmd_counterexample,
    "construct-omega": cmd_construct_omega,
    "plot-data": cmd_plot_data,
}


def _precision(text: str) -> int:
    bits = int(text)
    if bits < 64:
        raise argparse.ArgumentTypeError("precision below the 64-bit floor")
    return bits


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--slope", default="golden", help="decimal, 'golden' or 'kneading:SEQ'")
    common.add_argument("--precision", type=_precision,
                        default=int(os.environ.get("TENTDYN_PRECISION", DEFAULT_PRECISION)))
    common.add_argument("--output", "-o", help="write to this file instead of stdout")
    common.add_argument("--format", choices=[f.value for f in OutputFormat], default="text")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="tentdyn", description="Symbolic dynamics and omega-limit sets of tent maps.")
    p.add_argument("--version", action="version", version=f"tentdyn {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("itinerary", parents=[common], help="itinerary prefix of a point")
    s.add_argument("--x", required=True, help="point, 'c' or 'T(c)'; PREC via '0.3@512'")
    s.add_argument("--depth", type=int, default=20)
    s.add_argument("--side", choices=["exact", "upper", "lower"], default="exact")

    s = sub.add_parser("kneading", parents=[common], help="kneading sequence prefix")
    s.add_argument("--depth", type=int, default=40)

    s = sub.add_parser("slope-find", parents=[common], help="slope realizing a kneading sequence")
    s.add_argument("--target", required=True, help="sequence such as 100(110)")
    s.add_argument("--depth", type=int, default=40)

    s = sub.add_parser("admissible", parents=[common], help="admissibility against the map's kneading")
    s.add_argument("--seq", required=True)
    s.add_argument("--depth", type=int, default=60)

    s = sub.add_parser("precritical", parents=[common], help="pre-critical itineraries and points")
    s.add_argument("--prefix", help="word w; tests w followed by itin(c)")
    s.add_argument("--level", type=int, default=3, help="list P_n for this n when no prefix is given")

    s = sub.add_parser("signature", parents=[common], help="signature sequence of the kneading")
    s.add_argument("--n", type=int, default=20)

    s = sub.add_parser("shadow-criterion", parents=[common], help="shadowing criterion at a scale")
    s.add_argument("--epsilon", type=float, default=0.1)
    s.add_argument("--horizon", type=int, default=1000)

    s = sub.add_parser("shadow-point", parents=[common], help="shadow a pseudo-orbit")
    s.add_argument("--points", help="comma-separated pseudo-orbit; random walk if omitted")
    s.add_argument("--delta", type=float, default=1e-3)
    s.add_argument("--epsilon", type=float, default=0.05)
    s.add_argument("--length", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)

    net_help = "core:SPACING | points:x,y,... | critical | omega:POINT | file:PATH | counterexample:K"
    s = sub.add_parser("ict-check", parents=[common], help="chain transitivity of a net")
    s.add_argument("--net", default="core:0.02", help=net_help)
    s.add_argument("--delta", type=float, default=0.05)

    s = sub.add_parser("wi-check", parents=[common], help="weak incompressibility of a net")
    s.add_argument("--net", default="core:0.02", help=net_help)
    s.add_argument("--granularity", type=int, default=24)
    s.add_argument("--slack", type=float)

    s = sub.add_parser("omega-approx", parents=[common], help="approximate an omega-limit set")
    s.add_argument("--x", default="c")
    s.add_argument("--burn-in", type=int, default=1000)
    s.add_argument("--samples", type=int, default=10000)
    s.add_argument("--cluster-tol", type=float, default=1e-3)

    s = sub.add_parser("omega-member", parents=[common], help="symbolic omega-limit membership test")
    s.add_argument("--x", default="c")
    s.add_argument("--y", required=True)
    s.add_argument("--depth", type=int, default=12)
    s.add_argument("--min-occurrences", type=int, default=2)
    s.add_argument("--horizon", type=int, default=2000)

    s = sub.add_parser("counterexample", parents=[common], help="chain transitive set that is not an omega-limit set")
    s.add_argument("--k", type=int, default=2)
    s.add_argument("--depth", type=int, default=60)
    s.add_argument("--horizon", type=int, default=10000)
    s.add_argument("--deltas", type=float, nargs="+", default=[0.05, 0.02, 0.01])

    s = sub.add_parser("construct-omega", parents=[common], help="point whose omega-limit set is the core")
    s.add_argument("--stages", type=int, default=5)
    s.add_argument("--spacing", type=float, default=0.02)
    s.add_argument("--burn-in", type=int, default=1000)
    s.add_argument("--samples", type=int, default=10000)
    s.add_argument("--cluster-tol", type=float, default=1e-3)
    s.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("plot-data", parents=[common], help="CSV data for external plotting")
    s.add_argument("--kind", choices=["orbit", "net", "precritical", "cobweb"], default="orbit")
    s.add_argument("--x", default="c")
    s.add_argument("--n", type=int, default=100)
    s.add_argument("--net", default="core:0.02", help=net_help)
    return p


_CONFIG_SKIP = {"command", "slope", "precision", "output", "format", "verbose"}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    options = {k.replace("_", "-"): v for k, v in vars(args).items() if k not in _CONFIG_SKIP}
    config = RunConfig(args.command, args.slope, args.precision,
                       {k: _fmt(v) for k, v in options.items() if v is not None},
                       args.output, OutputFormat(args.format))
    rep = Report(config)
    status = EXIT_OK
    try:
        COMMANDS[args.command](args, rep)
        if rep.uncertain:
            status = EXIT_UNCERTIFIED
    except (AmbiguousError, UncertifiedError) as exc:
        rep.add("status", "UNCERTIFIED" if isinstance(exc, UncertifiedError) else "AMBIGUOUS")
        rep.add("reason", exc)
        status = EXIT_UNCERTIFIED
    except (UsageError, ValueError, InsufficientPrefixError, InadmissiblePrefixError,
            NoConvergenceError, PreconditionError, ConstructionError, OSError) as exc:
        print(f"tentdyn {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    text = rep.render()
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return status
