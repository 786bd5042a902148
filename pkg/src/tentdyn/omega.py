"""Omega-limit sets: approximation, membership, the non-omega counterexample
family, and the construction of a point whose omega-limit set is a given
chain transitive set (for maps with periodic critical point)."""

from __future__ import annotations

import itertools
import logging
import math
import time
import warnings
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import gmpy2
import numpy as np
from gmpy2 import mpfr

from .chains import (
    FiniteNet,
    ICTStatus,
    PreconditionError,
    ShadowFailure,
    build_chain_graph,
    calibrate_shadowing_modulus,
    chain_path,
    is_chain_transitive,
    shadow_point,
    verify_pseudo_orbit,
    ChainStatus,
)
from .kneading import (
    Admissibility,
    admissible,
    kneading_prefix,
    map_from_kneading,
    precritical_admissible,
)
from .symbolic import EPSeq, Order, find_segment, parity, Parity, plex_compare_words
from .tent import (
    HALF,
    IntervalEnclosure,
    Side,
    TentMap,
    UncertifiedError,
    critical_itinerary,
    evaluate,
    image_interval,
    itinerary_prefix,
    itinerary_to_point,
    limit_itinerary,
    preimages,
    precision_for_depth,
    scale2,
)

log = logging.getLogger(__name__)

__all__ = [
    "OmegaApprox",
    "omega_approx",
    "MembershipStatus",
    "MembershipVerdict",
    "omega_membership",
    "CounterexampleResult",
    "build_counterexample",
    "CaseVerdict",
    "CertificateCase",
    "NonOmegaCertificate",
    "non_omega_certificate",
    "CriticalSide",
    "CriticalData",
    "critical_data",
    "PrecriticalPoint",
    "PrecriticalSet",
    "precritical_set",
    "extension_pieces",
    "extend_ict",
    "StageRecord",
    "ConstructionTrace",
    "ConstructionError",
    "construct_omega_point",
    "MAX_ORBIT_BITS",
]

MAX_ORBIT_BITS = 1 << 16


# -- omega-limit approximation ------------------------------------------------


@dataclass(frozen=True)
class OmegaApprox:
    net: FiniteNet
    burn_in: int
    samples: int
    cluster_tol: float
    truncated: bool = False


def _as_point(x) -> mpfr:
    if isinstance(x, IntervalEnclosure):
        return x.mid
    if isinstance(x, type(HALF)):
        return x
    return mpfr(str(x), 256)


def _cluster(points, tol: float) -> list:
    pts = sorted(points)
    reps = [pts[0]]
    ref = float(pts[0])
    for p in pts[1:]:
        if float(p) - ref >= tol / 2:
            reps.append(p)
            ref = float(p)
    return reps


def _critical_orbit_points(T: TentMap, start: int, stop: int):
    """``T^i(c)`` for ``start <= i < stop`` from symbolic knowledge, or None."""
    ret = T.critical_return
    if ret is not None:
        m = ret.period
        return [ret.orbit[i % m] for i in range(start, min(stop, start + m))]
    if T.kneading_hint is not None:
        hint = T.kneading_hint
        depth = max(64, math.ceil(T.precision_bits / 2 / T.log2_slope))
        seen = {}
        for i in range(max(start, 1), stop):
            key = hint.shift(i - 1)
            if key in seen:
                if i - 1 >= len(hint.preperiod) + len(hint.period):
                    break
                continue
            seen[key] = itinerary_to_point(T, key, depth).mid
        out = list(seen.values())
        if start == 0:
            out.append(HALF)
        return out
    return None


def omega_approx(T: TentMap, x, burn_in: int = 1000, samples: int = 10000,
                 cluster_tol: float = 1e-3) -> OmegaApprox:
    """Cluster ``T^i(x)`` for ``burn_in <= i < burn_in + samples``."""
    if burn_in < 1 or samples < 1:
        raise ValueError("burn_in and samples must be positive")
    x = _as_point(x)
    if x == HALF:
        pts = _critical_orbit_points(T, burn_in, burn_in + samples)
        if pts is not None:
            net = FiniteNet(tuple(_cluster(pts, cluster_tol)), cluster_tol / 2, "omega of c")
            return OmegaApprox(net, burn_in, samples, cluster_tol)
    steps = burn_in + samples
    need = math.ceil(steps * T.log2_slope) + 64
    truncated = False
    if need > MAX_ORBIT_BITS:
        steps = int((MAX_ORBIT_BITS - 64) / T.log2_slope)
        truncated = True
        warnings.warn(f"orbit truncated to {steps} iterates by the precision budget", stacklevel=2)
        if steps <= burn_in:
            raise UncertifiedError("precision budget exhausted before the burn-in ends")
    bits = max(T.precision_bits, x.precision, min(need, MAX_ORBIT_BITS))
    Tw = T.with_precision(bits)
    ctx, lam = Tw.ctx, Tw.slope
    pts = []
    for i in range(steps):
        if i >= burn_in:
            pts.append(x)
        x = ctx.mul(lam, x) if x <= HALF else ctx.mul(lam, ctx.sub(1, x))
    net = FiniteNet(tuple(_cluster(pts, cluster_tol)), cluster_tol / 2, "omega approximation")
    return OmegaApprox(net, burn_in, steps - burn_in, cluster_tol, truncated)


# -- omega membership ----------------------------------------------------------


class MembershipStatus(Enum):
    SUPPORTED = "SUPPORTED"
    UNSUPPORTED = "UNSUPPORTED"


@dataclass(frozen=True)
class MembershipVerdict:
    status: MembershipStatus
    preperiodic: bool
    length: int | None = None
    occurrences: int | None = None
    pattern: str = ""


def _eventual_period(word: str, max_period: int) -> int | None:
    """Least p such that the second half of ``word`` is p-periodic."""
    n = len(word)
    half = n // 2
    for p in range(1, max_period + 1):
        if n - half <= p:
            break
        tail = word[half:]
        if tail[p:] == tail[:-p]:
            return p
    return None


def _orbit_word(T: TentMap, x, n: int) -> tuple[str, bool]:
    if x == HALF:
        res = critical_itinerary(T, n)
        return res.word, res.certified
    Tw = T.with_precision(precision_for_depth(T, n))
    res = itinerary_prefix(Tw, x, n, T.tol)
    return res.word, res.certified


def omega_membership(T: TentMap, x, y, depth: int = 12, min_occurrences: int = 2,
                     horizon: int = 2000) -> MembershipVerdict:
    """Finite-depth symbolic test of ``y`` in omega(x).

    Each initial segment of length up to ``depth`` of an admissible pattern
    for ``y`` must occur ``min_occurrences`` times in the first ``horizon``
    symbols of itin(x), at least once in the second half.  The patterns are
    itin(y) when x is detected pre-periodic and the two limit itineraries
    of y otherwise.
    """
    x, y = _as_point(x), _as_point(y)
    word, ok = _orbit_word(T, x, horizon)
    if not ok:
        raise UncertifiedError("itinerary of x not certified to the horizon")
    pre = _eventual_period(word, horizon // 3) is not None
    if pre:
        yword, ok = _orbit_word(T, y, depth)
        patterns = [yword]
    else:
        Tw = T.with_precision(precision_for_depth(T, depth))
        patterns = []
        ok = True
        for side in (Side.LOWER, Side.UPPER):
            if side is Side.UPPER and y == Tw.critical_value:
                continue
            res = limit_itinerary(Tw, y, side, depth, T.tol)
            ok = ok and res.certified
            patterns.append(res.word)
    if not ok:
        raise UncertifiedError("itinerary of y not certified to depth")
    half = horizon // 2
    for length in range(1, depth + 1):
        best = (0, "")
        for pat in patterns:
            hits = find_segment(pat[:length], word, 0, horizon)
            late = any(h >= half for h in hits)
            if len(hits) >= min_occurrences and late:
                best = None
                break
            if len(hits) >= best[0]:
                best = (len(hits), pat[:length])
        if best is not None:
            return MembershipVerdict(MembershipStatus.UNSUPPORTED, pre, length, best[0], best[1])
    return MembershipVerdict(MembershipStatus.SUPPORTED, pre, depth, None, patterns[0][:depth])


# -- the counterexample family -------------------------------------------------

BLOCK = "110"


def _counterexample_words(k: int):
    a = "1" + "0" * k
    return a, EPSeq(a, BLOCK)


@dataclass(frozen=True)
class CounterexampleResult:
    T: TentMap
    net: FiniteNet
    sequences: tuple
    provenance: dict = field(default_factory=dict)

    @property
    def slope(self) -> mpfr:
        return self.T.slope


def _lambda_sequences(a: str, jmax: int, nmax: int):
    seen = []
    keys = set()
    for j in range(jmax + 1):
        base = EPSeq(BLOCK * j + "C" + a, BLOCK)
        for n in range(nmax + 1):
            s = base.shift(n)
            if s not in keys:
                keys.add(s)
                seen.append(s)
    for r in range(3):
        s = EPSeq.periodic(BLOCK[r:] + BLOCK[:r])
        if s not in keys:
            keys.add(s)
            seen.append(s)
    return seen


def build_counterexample(k: int = 2, depth: int = 60, jmax: int | None = None, nmax: int | None = None,
                         bits: int = 256, delta: float = 0.01) -> CounterexampleResult:
    """Slope with kneading ``1 0^k (110)^inf`` and a net of the closed chain
    transitive set of points with itineraries shifts of ``(110)^j C 1 0^k (110)^inf``.

    ``jmax`` defaults to a value large enough that the chain back from the
    3-cycle to the deepest sequence closes at scale ``delta``.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    a, K = _counterexample_words(k)
    T = map_from_kneading(K, depth=40, bits=bits, label=f"counterexample k={k}")
    if jmax is None:
        jmax = max(1, math.ceil(math.log(1 / delta) / math.log(float(T.slope)) / 3) + 2)
    if nmax is None:
        nmax = 3 * jmax + k + 3
    seqs = _lambda_sequences(a, jmax, nmax)
    info = kneading_prefix(T, depth)
    pts = []
    for s in seqs:
        verdict = admissible(s, info, depth)
        if verdict.status is Admissibility.VIOLATES:
            raise ValueError(f"sequence {s} violates admissibility: {verdict.witness}")
        p = str(s).find("C")
        if 0 <= p:
            head = s.prefix(p)
            pv = precritical_admissible(head, info)
            if not pv.admissible:
                raise ValueError(f"pre-critical prefix {head} inadmissible")
        pts.append(itinerary_to_point(T, s, depth).mid)
    # points of the next level bound how far the truncation is from the full set
    probe = [itinerary_to_point(T, s, depth).mid for s in _lambda_sequences(a, jmax + 1, nmax + 3)]
    draft = FiniteNet(tuple(pts), 0.0)
    resolution = float(np.max(draft.nearest_distance([float(p) for p in probe])))
    net = FiniteNet(tuple(pts), resolution, f"counterexample k={k} jmax={jmax} nmax={nmax}")
    prov = {
        "k": k,
        "slope": f"{T.slope:.20f}",
        "kneading": str(K),
        "depth": depth,
        "jmax": jmax,
        "nmax": nmax,
        "points": len(net),
        "resolution": resolution,
        "bits": bits,
    }
    return CounterexampleResult(T, net, tuple(seqs), prov)


class CaseVerdict(Enum):
    PARITY_VIOLATION = "PARITY_VIOLATION"
    NOT_IN_L_LANGUAGE = "NOT_IN_L_LANGUAGE"
    EXCLUDED_B = "EXCLUDED_B"


@dataclass(frozen=True)
class CertificateCase:
    H: str
    verdict: CaseVerdict
    window: str
    shift: int | None
    detail: str


@dataclass(frozen=True)
class NonOmegaCertificate:
    k: int
    kneading: str
    window_depth: int
    cases: tuple

    def __post_init__(self):
        if sorted(c.H for c in self.cases) != ["".join(w) for w in itertools.product("01", repeat=3)]:
            raise ValueError("certificate must cover all eight words of length 3")


def _language_variants(a: str, jmax: int, nmax: int, depth: int):
    """Prefixes of Lambda elements, with C replaced by each of 0, 1 as well."""
    out = set()
    for s in _lambda_sequences(a, jmax, nmax):
        w = s.prefix(depth)
        out.add(w)
        out.add(w.replace("C", "0"))
        out.add(w.replace("C", "1"))
    return out


def non_omega_certificate(k: int = 2, window_depth: int = 60) -> NonOmegaCertificate:
    """Replayable case analysis showing the counterexample set is not an
    omega-limit set: no three-symbol word can follow a B-block infinitely
    often in the itinerary of a point whose omega-limit set it is."""
    if k < 2:
        raise ValueError("k must be at least 2")
    if window_depth < k + 10:
        raise ValueError("window_depth must be at least k + 10")
    a, K = _counterexample_words(k)
    kword = K.prefix(window_depth)
    jmax = window_depth // 3 + 1
    language = _language_variants(a, jmax, 3 * jmax + k + 3, window_depth)
    cases = []
    for H in ("".join(w) for w in itertools.product("01", repeat=3)):
        if H == BLOCK:
            cases.append(CertificateCase(H, CaseVerdict.EXCLUDED_B, BLOCK, None, "H equals B"))
            continue
        if H[0] == "0":
            # a window A B^q H of the itinerary against K: agreement up to the
            # 0 of H, with an odd number of 1s before it
            witness = None
            q = 1
            while len(a) + 3 * q + 3 <= window_depth:
                w = a + BLOCK * q + H
                order, d = plex_compare_words(w, kword[: len(w)])
                if order is not Order.GT or d != len(a) + 3 * q or parity(w[:d]) is not Parity.ODD:
                    raise AssertionError(f"parity argument fails for H={H}, q={q}")
                if witness is None:
                    witness = (w, d)
                q += 1
            w, d = witness
            cases.append(CertificateCase(
                H, CaseVerdict.PARITY_VIOLATION, w, d,
                f"shift exceeds K at discrepancy {d} after an odd prefix; checked q=1..{q - 1}"))
            continue
        needle = BLOCK + H
        hits = [s for s in language if needle in s]
        if hits:
            raise AssertionError(f"window {needle} occurs in the language of L")
        cases.append(CertificateCase(
            H, CaseVerdict.NOT_IN_L_LANGUAGE, needle, None,
            f"absent from {len(language)} scanned itinerary prefixes of length {window_depth}"))
    return NonOmegaCertificate(k, str(K), window_depth, tuple(cases))


# -- periodic critical point machinery ------------------------------------------


class CriticalSide(Enum):
    LEFT_OF_C = "LEFT_OF_C"
    RIGHT_OF_C = "RIGHT_OF_C"


@dataclass(frozen=True)
class CriticalData:
    """Scale and side data of a periodic critical point.

    ``accessible`` follows the definition: the left side when the period-m
    return of the ``delta_T``-neighbourhood of c lands in ``[c, 1)``.
    ``landing`` is the side that return actually lands on; pulled-back
    pieces must come from this side to stay inside the core.
    """

    period_m: int
    delta_T: mpfr
    accessible: CriticalSide
    landing: CriticalSide
    orbit: tuple
    kneading: EPSeq
    return_image: IntervalEnclosure


def critical_data(T: TentMap) -> CriticalData:
    ret = T.critical_return
    if ret is None or ret.period < 3:
        raise PreconditionError("critical point not certified periodic with period >= 3")
    m = ret.period
    orbit = tuple(sorted(ret.orbit))
    ctx = T.ctx
    gap = min(ctx.sub(orbit[i + 1], orbit[i]) for i in range(m - 1))
    delta = ctx.div(gap, ctx.pow(T.slope, m))
    lo, hi = T.down.sub(HALF, delta), T.up.add(HALF, delta)
    for _ in range(m):
        lo, hi = image_interval(T, lo, hi)
    K = kneading_prefix(T, m).exact
    tol = scale2(mpfr(1), -(T.precision_bits // 2))
    if lo >= ctx.sub(HALF, tol):
        accessible, landing = CriticalSide.LEFT_OF_C, CriticalSide.RIGHT_OF_C
    elif hi <= ctx.add(HALF, tol):
        accessible, landing = CriticalSide.RIGHT_OF_C, CriticalSide.LEFT_OF_C
    else:
        raise AssertionError("return image of the critical neighbourhood straddles c")
    odd = parity(K.period[: m - 1]) is Parity.ODD
    if odd != (landing is CriticalSide.RIGHT_OF_C):
        raise AssertionError("return side disagrees with the parity of K|_(m-1)")
    return CriticalData(m, delta, accessible, landing, tuple(ret.orbit), K,
                        IntervalEnclosure(max(lo, mpfr(0)), min(hi, mpfr(1))))


@dataclass(frozen=True)
class PrecriticalPoint:
    value: mpfr
    n_p: int
    word: str


@dataclass(frozen=True)
class PrecriticalSet:
    points: tuple
    levels: int
    truncated: bool = False

    @property
    def net(self) -> FiniteNet:
        return FiniteNet(tuple(p.value for p in self.points), 0.0, f"pre-critical points n_p < {self.levels}")

    @property
    def values(self) -> np.ndarray:
        return np.array([float(p.value) for p in self.points])


def precritical_set(T: TentMap, n: int, cap: int = 1 << 16) -> PrecriticalSet:
    """Points p with ``T^{n_p}(p) = c`` for ``n_p < max(n, 2m)``, by breadth-first preimages."""
    if n < 1:
        raise ValueError("n must be >= 1")
    m = T.critical_period or 0
    levels = max(n, 2 * m)
    out = [PrecriticalPoint(HALF, 0, "")]
    seen = {HALF}
    frontier = [out[0]]
    truncated = False
    for level in range(1, levels):
        nxt = []
        for q in frontier:
            for pre in preimages(T, q.value):
                if pre in seen:
                    continue
                seen.add(pre)
                sym = "0" if pre < HALF else "1"
                nxt.append(PrecriticalPoint(pre, level, sym + q.word))
        if len(out) + len(nxt) > cap:
            truncated = True
            nxt = nxt[: cap - len(out)]
        out.extend(nxt)
        frontier = nxt
        if truncated:
            break
    out.sort(key=lambda p: p.value)
    return PrecriticalSet(tuple(out), levels, truncated)


def _side_filter(cd: CriticalData, side: CriticalSide, x) -> bool:
    return x < HALF if side is CriticalSide.LEFT_OF_C else x > HALF


def extension_pieces(T: TentMap, D: FiniteNet, n: int, side: CriticalSide | None = None,
                     pset: PrecriticalSet | None = None) -> dict:
    """Pulled-back pieces near each pre-critical point of D.

    Returns ``{p: (points...)}`` where the points are preimages under
    ``T^{n_p}`` of the net points of D within ``2^-n delta_T`` of c on the
    chosen side, restricted to the ball of radius ``2^-n lambda^-n_p delta_T``
    around p.
    """
    cd = critical_data(T)
    side = cd.landing if side is None else side
    rc = scale2(cd.delta_T, -n)
    near_c = float(D.nearest_distance([0.5])[0])
    reasons = []
    if near_c > D.resolution * (1 + 1e-9) + 1e-15:
        reasons.append("c is not in D at net resolution")
    S = [x for x in D.points if _side_filter(cd, side, x) and abs(x - HALF) <= rc]
    if len(S) < 2:
        reasons.append(f"c is isolated in D on the {side.value} side at radius 2^-{n} delta_T")
    if reasons:
        raise PreconditionError("; ".join(reasons))
    pset = precritical_set(T, n) if pset is None else pset
    ctx = T.ctx
    lam = T.slope
    pieces = {}
    tol = D.resolution * (1 + 1e-9) + 1e-15
    pv = pset.values
    dist = D.nearest_distance(pv)
    for p, d in zip(pset.points, dist):
        if d > tol or p.n_p == 0:
            continue
        orbit = [p.value]
        for _ in range(p.n_p - 1):
            orbit.append(evaluate(T, orbit[-1]))
        xs = S
        for i in range(p.n_p - 1, -1, -1):
            r = ctx.div(rc, ctx.pow(lam, p.n_p - i))
            centre = orbit[i]
            xs = [q for x in xs for q in preimages(T, x) if abs(ctx.sub(q, centre)) <= r]
            if not xs:
                break
        if xs:
            pieces[p.value] = tuple(xs)
    return pieces


def extend_ict(T: TentMap, D: FiniteNet, n: int, side: CriticalSide | None = None) -> FiniteNet:
    """``D_n``: D together with the pulled-back pieces near its pre-critical points."""
    pieces = extension_pieces(T, D, n, side)
    added = tuple(x for xs in pieces.values() for x in xs)
    return FiniteNet(D.points + added, D.resolution, f"{D.label} extended stage {n}")


# -- construction of a point with prescribed omega-limit set --------------------


class ConstructionError(RuntimeError):
    def __init__(self, stage: int, reason: str):
        super().__init__(f"stage {stage}: {reason}")
        self.stage = stage
        self.reason = reason


@dataclass(frozen=True)
class StageRecord:
    n: int
    net_size: int
    F: tuple
    eta: float
    epsilon: float
    q: int
    J: int
    K: int
    padded: bool
    c_enclosure: IntervalEnclosure
    d_enclosure: IntervalEnclosure
    calibration: object = None
    c_orbit: tuple = field(default=(), repr=False)
    d_orbit: tuple = field(default=(), repr=False)


@dataclass(frozen=True)
class ConstructionTrace:
    case: str
    stages: tuple = ()
    gamma_prefix: str = ""
    y: IntervalEnclosure | None = None
    admissibility: object = None
    segment_checks: int = 0
    segment_failures: int = 0
    loops: int = 0
    notes: tuple = ()


def _greedy_cover(values: np.ndarray, radius: float) -> list[int]:
    chosen = []
    edge = -math.inf
    for i, v in enumerate(values):
        if v >= edge:
            chosen.append(i)
            edge = v + radius
    return chosen


def _dyadic_below(bound: float, cap: float) -> float:
    """Largest ``2^-k`` strictly below both ``bound`` and ``cap``."""
    k = max(0, math.floor(-math.log2(min(bound, cap))))
    while 2.0 ** -k >= min(bound, cap):
        k += 1
    return 2.0 ** -k


def _path_through(graph, order: list[int]) -> list[int]:
    path = [order[0]]
    for a, b in zip(order, order[1:]):
        if a == b:
            continue
        path.extend(chain_path(graph, a, b)[1:])
    return path


def construct_omega_point(T: TentMap, D: FiniteNet, stages: int = 5, *, burn_in: int = 1000,
                          samples: int = 10000, margin: int = 256, ict_deltas=(0.05, 0.03),
                          trials: int = 6, seed: int = 0, segment_samples: int = 200,
                          max_net: int = 400_000) -> ConstructionTrace:
    """Run the staged construction of a point y whose omega-limit set approximates D.

    Stage n extends D near its pre-critical points, picks a finite
    ``2^-n``-dense subset F_n kept ``epsilon_n`` away from the pre-critical
    points of level below ``max(n, 2m)``, chains through F_n with an
    ``eta_n``-pseudo-orbit inside the extended net, and shadows it.  The
    concatenated true orbit segments give the address word gamma, which is
    checked for admissibility and pulled back to y.  The last stage repeats
    until gamma is long enough for the requested omega approximation.
    """
    cd = critical_data(T)
    m = cd.period_m
    top = T.critical_value
    bottom = evaluate(T, top)
    res = D.resolution
    v = D.values
    if v[0] < float(bottom) - res - 1e-12 or v[-1] > float(top) + res + 1e-12:
        raise PreconditionError("D is not inside the core interval [T^2(c), T(c)]")
    for delta in ict_deltas:
        verdict = is_chain_transitive(build_chain_graph(T, D, delta))
        if verdict.status is not ICTStatus.YES:
            raise PreconditionError(f"D is not chain transitive at delta {delta}: no chain {verdict.witness}")
    if float(D.nearest_distance([0.5])[0]) > res * (1 + 1e-9):
        return ConstructionTrace("no_critical_point", notes=(
            "c is not in D; D avoids T(c) and is an omega-limit set by chain transitivity alone",))
    try:
        extension_pieces(T, _refine(D, float(cd.delta_T) / 16), 1)
    except PreconditionError as exc:
        orbit_net = FiniteNet(cd.orbit, 0.0)
        if hausdorff_close(D, orbit_net, res):
            return ConstructionTrace("periodic_orbit", y=IntervalEnclosure(HALF, HALF),
                                     notes=("D is the critical orbit, the omega-limit set of c",))
        raise PreconditionError(str(exc)) from exc

    rng_seed = seed
    pieces_cache = {}

    def stage_net(n):
        Dr = _refine(D, float(scale2(cd.delta_T, -(n + 1))) / 8)
        if n not in pieces_cache:
            pieces_cache[n] = (Dr, extension_pieces(T, Dr, n))
        return pieces_cache[n]

    records = []
    segments = []  # (start point, length) of true orbit segments in order
    eps_prev = math.inf
    plans = []
    for n in range(1, stages + 1):
        Dr, pieces = stage_net(n)
        Dn = FiniteNet(Dr.points + tuple(x for xs in pieces.values() for x in xs), Dr.resolution,
                       f"D_{n}")
        pset = precritical_set(T, n)
        pv = pset.values
        # F: cover of D_n away from P_n, plus one point x_p per p in P_n
        far = np.flatnonzero(_dist_to(pv, Dn.values) >= 2.0 ** -(n + 1))
        cover = [Dn.points[far[i]] for i in _greedy_cover(Dn.values[far], 2.0 ** -n)]
        _, next_pieces = stage_net(n + 1)
        xps = []
        for p in pset.points:
            cand = next_pieces.get(p.value)
            if cand:
                xps.append(max(cand, key=lambda x: abs(x - p.value)))
        F = sorted(set(cover) | set(xps))
        gap = float(np.min(_dist_to(pv, np.array([float(f) for f in F]))))
        if gap <= 0:
            raise ConstructionError(n, "F_n meets a pre-critical point")
        eps = min(_dyadic_below(gap, 2.0 ** -n), eps_prev)
        eps_prev = eps
        plans.append((n, Dn, F, eps))

    for idx, (n, Dn, F, eps) in enumerate(plans):
        try:
            cal = calibrate_shadowing_modulus(T, eps, trials=trials, seed=rng_seed + n)
        except PreconditionError as exc:
            raise ConstructionError(n, f"calibration failed: {exc}") from exc
        eta = cal.delta / 2
        plans[idx] = (n, Dn, F, eps, eta, cal)

    def chain_net(Dn, F, eta):
        spacing = eta / 2
        size = (float(top) - float(bottom)) / spacing
        if size > max_net:
            raise ConstructionError(n, f"chain net of about {size:.0f} points exceeds max_net")
        net = FiniteNet(Dn.refined(spacing).points + tuple(F), spacing / 2, Dn.label)
        return net

    def shadowed(graph, order, eps, q, n):
        path = _path_through(graph, order)
        padded = False
        while len(path) < q + 2:
            path.extend(chain_path(graph, path[-1], path[-1])[1:])
            padded = True
        pts = tuple(graph.net.points[i] for i in path)
        check = verify_pseudo_orbit(T, pts, graph.delta)
        if check.status is not ChainStatus.VALID:
            raise ConstructionError(n, f"pseudo-orbit {check.status.value} at {check.index}")
        try:
            enc = shadow_point(T, pts, eps)
        except ShadowFailure as exc:
            raise ConstructionError(n, f"shadowing failed: {exc}") from exc
        return pts, enc, padded

    target = burn_in + samples + margin
    graphs = {}
    total = 0
    loops = 0
    stage_list = list(plans)
    idx = 0
    while True:
        n, Dn, F, eps, eta, cal = stage_list[min(idx, len(stage_list) - 1)]
        final = idx >= len(stage_list) - 1
        if n not in graphs:
            net = chain_net(Dn, F, eta)
            graphs[n] = (build_chain_graph(T, net, eta), [net.points.index(f) for f in F])
        graph, order = graphs[n]
        q = max(n, 2 * m)
        pts_c, enc_c, padded = shadowed(graph, order, eps, q, n)
        # connector to the first point of the next stage (or back to this one)
        if final:
            nn, Dnn, Fn, epsn, etan, _ = stage_list[-1]
        else:
            nn, Dnn, Fn, epsn, etan, _ = stage_list[idx + 1]
        if nn not in graphs:
            net = chain_net(Dnn, Fn, etan)
            graphs[nn] = (build_chain_graph(T, net, etan), [net.points.index(f) for f in Fn])
        g_next, order_next = graphs[nn]
        # the connector runs in the finer net at eta_{n+1}
        start = g_next.net.points.index(pts_c[-1]) if pts_c[-1] in g_next.net.points else None
        if start is None:
            merged = FiniteNet(g_next.net.points + (pts_c[-1],), g_next.net.resolution, g_next.net.label)
            g_next = build_chain_graph(T, merged, etan)
            start = merged.points.index(pts_c[-1])
            order_next = [merged.points.index(f) for f in Fn]
            graphs[nn] = (g_next, order_next)
        pts_d, enc_d, _ = shadowed(g_next, [start, order_next[0]], epsn, 1, n)
        segments.append((enc_c.mid, len(pts_c) - 1))
        segments.append((enc_d.mid, len(pts_d) - 1))
        total += len(pts_c) - 1 + len(pts_d) - 1
        if idx < len(stage_list):
            records.append(StageRecord(n, len(graph.net), tuple(F), eta, eps, q, len(pts_c) - 1,
                                       len(pts_d) - 1, padded, enc_c, enc_d, cal, pts_c, pts_d))
        else:
            loops += 1
        idx += 1
        if idx >= len(stage_list) and total >= target:
            break

    # realized orbit segments and their addresses
    L = total
    bits = math.ceil(L * T.log2_slope) + 128
    Tw = T.with_precision(max(bits, T.precision_bits))
    ctx, lam = Tw.ctx, Tw.slope
    a_pts = []
    for x, length in segments:
        for _ in range(length):
            a_pts.append(x)
            x = ctx.mul(lam, x) if x <= HALF else ctx.mul(lam, ctx.sub(1, x))
    tol = T.tol
    if any(abs(p - HALF) <= tol for p in a_pts):
        raise ConstructionError(stages, "an orbit segment passes within tolerance of c")
    gamma = "".join("0" if p < HALF else "1" for p in a_pts)
    K = kneading_prefix(T, 64)
    verdict = admissible(gamma, K, len(gamma))
    if verdict.status is Admissibility.VIOLATES:
        raise ConstructionError(stages, f"gamma violates admissibility: {verdict.witness}")
    # orbit-segment agreement at sampled times after the first stage
    rng = np.random.default_rng(seed)
    first = records[0].J + records[0].K if records else 0
    q_last = max(stages, 2 * m)
    checks = fails = 0
    hi_t = len(a_pts) - q_last
    if hi_t > first:
        for t in sorted(rng.choice(np.arange(first, hi_t), size=min(segment_samples, hi_t - first),
                                   replace=False)):
            res = itinerary_prefix(Tw, a_pts[t], q_last)
            checks += 1
            if res.word != gamma[t:t + q_last]:
                fails += 1
    y = itinerary_to_point(Tw, gamma, len(gamma))
    return ConstructionTrace("constructed", tuple(records), gamma, y, verdict, checks, fails, loops)


def _refine(D: FiniteNet, spacing: float) -> FiniteNet:
    # a zero-resolution net is an exact finite set and has no gaps to fill
    return D if D.resolution <= 0 else D.refined(min(D.resolution, spacing))


def _dist_to(targets: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Distance from each of ``xs`` to the nearest of ``targets``."""
    t = np.sort(targets)
    idx = np.clip(np.searchsorted(t, xs), 1, len(t) - 1)
    return np.minimum(np.abs(xs - t[idx - 1]), np.abs(xs - t[idx]))


def hausdorff_close(a: FiniteNet, b: FiniteNet, tol: float) -> bool:
    from .chains import hausdorff

    return hausdorff(a, b) <= tol + 1e-12
