"""Pseudo-orbits, chain graphs on finite nets, weak incompressibility and
rigorous shadowing of pseudo-orbits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import gmpy2
import numpy as np
from gmpy2 import mpfr
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .kneading import CriterionStatus, shadowing_criterion
from .tent import HALF, IntervalEnclosure, TentMap, evaluate, scale2

__all__ = [
    "ChainStatus",
    "PseudoOrbitCheck",
    "PseudoOrbit",
    "FiniteNet",
    "ChainGraph",
    "ICTStatus",
    "ICTVerdict",
    "WIStatus",
    "WIVerdict",
    "NoPathError",
    "ShadowFailure",
    "ShadowFailureKind",
    "CalibrationResult",
    "PreconditionError",
    "verify_pseudo_orbit",
    "build_chain_graph",
    "is_chain_transitive",
    "find_chain",
    "weak_incompressibility_check",
    "shadow_point",
    "calibrate_shadowing_modulus",
    "core_net",
    "hausdorff",
    "random_pseudo_orbit",
    "chain_path",
]

# float64 image margin below which an edge is re-decided in full precision
EDGE_MARGIN = 1e-12


class ChainStatus(Enum):
    VALID = "VALID"
    INVALID = "INVALID"
    AMBIGUOUS = "AMBIGUOUS"


@dataclass(frozen=True)
class PseudoOrbitCheck:
    status: ChainStatus
    index: int | None = None
    max_jump: float = 0.0


class PreconditionError(ValueError):
    """An operation's stated precondition does not hold."""


def _jump(T: TentMap, x, y) -> mpfr:
    return abs(T.ctx.sub(evaluate(T, x), y))


def verify_pseudo_orbit(T: TentMap, points, delta) -> PseudoOrbitCheck:
    """Check ``|T(x_i) - x_{i+1}| < delta`` for every consecutive pair."""
    if len(points) < 2:
        raise ValueError("a pseudo-orbit needs at least two points")
    delta = mpfr(delta)
    slack = scale2(mpfr(1), 4 - T.precision_bits)
    worst = mpfr(0)
    for i in range(len(points) - 1):
        d = _jump(T, points[i], points[i + 1])
        worst = max(worst, d)
        if d >= delta + slack:
            return PseudoOrbitCheck(ChainStatus.INVALID, i, float(worst))
        if d > delta - slack:
            return PseudoOrbitCheck(ChainStatus.AMBIGUOUS, i, float(worst))
    return PseudoOrbitCheck(ChainStatus.VALID, None, float(worst))


@dataclass(frozen=True)
class PseudoOrbit:
    """A delta-pseudo-orbit of ``T``; validated on construction."""

    T: TentMap
    points: tuple
    delta: float

    def __post_init__(self):
        check = verify_pseudo_orbit(self.T, self.points, self.delta)
        if check.status is not ChainStatus.VALID:
            raise ValueError(f"not a {self.delta}-pseudo-orbit: {check.status.value} at {check.index}")

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class FiniteNet:
    """Sorted, deduplicated points approximating a closed set.

    Every point of the represented set lies within ``resolution`` of some
    net point.
    """

    points: tuple
    resolution: float
    label: str = ""

    def __post_init__(self):
        pts = sorted(set(self.points))
        if not pts:
            raise ValueError("a net needs at least one point")
        if pts[0] < 0 or pts[-1] > 1:
            raise ValueError("net points must lie in [0, 1]")
        object.__setattr__(self, "points", tuple(pts))

    @classmethod
    def from_values(cls, values, resolution: float, label: str = "", bits: int = 256) -> "FiniteNet":
        return cls(tuple(v if isinstance(v, type(HALF)) else mpfr(str(v), bits) for v in values), resolution, label)

    @cached_property
    def values(self) -> np.ndarray:
        return np.array([float(p) for p in self.points])

    def __len__(self):
        return len(self.points)

    def refined(self, spacing: float) -> "FiniteNet":
        """Fill gaps of at most twice the resolution with points ``spacing`` apart."""
        if spacing <= 0:
            raise ValueError("spacing must be positive")
        bits = max(p.precision for p in self.points)
        ctx = gmpy2.context(precision=bits)
        out = list(self.points)
        v = self.values
        reach = 2 * self.resolution * (1 + 1e-9)
        for i in range(len(v) - 1):
            gap = v[i + 1] - v[i]
            if spacing < gap <= reach:
                k = math.ceil(gap / spacing)
                step = ctx.div(ctx.sub(self.points[i + 1], self.points[i]), k)
                out.extend(ctx.add(self.points[i], ctx.mul(step, j)) for j in range(1, k))
        return FiniteNet(tuple(out), min(self.resolution, spacing), self.label)

    def nearest_distance(self, xs) -> np.ndarray:
        """Distance from each value in ``xs`` to the net."""
        v = self.values
        xs = np.asarray(xs, dtype=float)
        idx = np.clip(np.searchsorted(v, xs), 1, len(v) - 1) if len(v) > 1 else np.zeros(len(xs), int)
        if len(v) == 1:
            return np.abs(xs - v[0])
        return np.minimum(np.abs(xs - v[idx - 1]), np.abs(xs - v[idx]))

    def union(self, other: "FiniteNet", label: str | None = None) -> "FiniteNet":
        return FiniteNet(self.points + other.points, max(self.resolution, other.resolution),
                         self.label if label is None else label)

    def __str__(self) -> str:
        return f"FiniteNet({len(self)} points, resolution={self.resolution}, {self.label})"


def core_net(T: TentMap, spacing: float, label: str = "") -> FiniteNet:
    """Evenly spaced net of the core interval ``[T^2(c), T(c)]``."""
    hi = T.critical_value
    lo = evaluate(T, hi)
    ctx = T.ctx
    k = max(1, math.ceil(float(hi - lo) / spacing))
    step = ctx.div(ctx.sub(hi, lo), k)
    pts = tuple(ctx.add(lo, ctx.mul(step, j)) for j in range(k + 1))
    return FiniteNet(pts, float(step) / 2, label or f"core net spacing {spacing}")


def hausdorff(a, b) -> float:
    """Hausdorff distance between two finite point sets on the line."""
    va = np.sort(np.asarray(a.values if isinstance(a, FiniteNet) else a, dtype=float))
    vb = np.sort(np.asarray(b.values if isinstance(b, FiniteNet) else b, dtype=float))

    def directed(x, y):
        idx = np.clip(np.searchsorted(y, x), 1, max(len(y) - 1, 1))
        if len(y) == 1:
            return float(np.max(np.abs(x - y[0])))
        return float(np.max(np.minimum(np.abs(x - y[idx - 1]), np.abs(x - y[idx]))))

    return max(directed(va, vb), directed(vb, va))


@dataclass(frozen=True)
class ChainGraph:
    """Directed graph on a net with ``i -> j`` iff ``|T(p_i) - p_j| < delta``.

    Edges whose margin could not be decided at working precision are kept
    out of ``adjacency`` and listed in ``uncertain``.
    """

    T: TentMap
    net: FiniteNet
    delta: float
    adjacency: csr_matrix = field(repr=False)
    uncertain: tuple = ()

    @property
    def edge_count(self) -> int:
        return int(self.adjacency.nnz)

    def has_edge(self, i: int, j: int) -> bool:
        return bool(self.adjacency[i, j])

    def edges(self):
        coo = self.adjacency.tocoo()
        return sorted(zip(coo.row.tolist(), coo.col.tolist()))


def _images(T: TentMap, net: FiniteNet) -> list:
    return [evaluate(T, p) for p in net.points]


def build_chain_graph(T: TentMap, net: FiniteNet, delta) -> ChainGraph:
    delta_f = float(delta)
    if delta_f <= 0:
        raise ValueError("delta must be positive")
    delta_m = mpfr(delta)
    v = net.values
    imgs = _images(T, net)
    fimg = np.array([float(y) for y in imgs])
    lo = np.searchsorted(v, fimg - delta_f - EDGE_MARGIN, side="left")
    hi = np.searchsorted(v, fimg + delta_f + EDGE_MARGIN, side="right")
    rows, cols, uncertain = [], [], []
    for i in range(len(v)):
        for j in range(lo[i], hi[i]):
            gap = abs(fimg[i] - v[j])
            if gap < delta_f - EDGE_MARGIN:
                rows.append(i)
                cols.append(j)
                continue
            exact = abs(T.ctx.sub(imgs[i], net.points[j]))
            if exact < delta_m - scale2(mpfr(1), 8 - T.precision_bits):
                rows.append(i)
                cols.append(j)
            elif exact < delta_m + scale2(mpfr(1), 8 - T.precision_bits):
                uncertain.append((i, j))
    n = len(v)
    adj = csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n, n))
    return ChainGraph(T, net, delta_f, adj, tuple(uncertain))


class ICTStatus(Enum):
    YES = "YES"
    NO = "NO"


@dataclass(frozen=True)
class ICTVerdict:
    status: ICTStatus
    witness: tuple | None = None
    components: int = 1


def is_chain_transitive(graph: ChainGraph) -> ICTVerdict:
    """Strong connectivity of the chain graph, with a no-path witness otherwise."""
    n = len(graph.net)
    ncomp, labels = connected_components(graph.adjacency, directed=True, connection="strong")
    if ncomp == 1:
        if n > 1 or graph.adjacency[0, 0]:
            return ICTVerdict(ICTStatus.YES, None, 1)
        return ICTVerdict(ICTStatus.NO, (0, 0), 1)
    # a sink component of the condensation reaches nothing outside itself
    coo = graph.adjacency.tocoo()
    leaves = np.zeros(ncomp, dtype=bool)
    cross = labels[coo.row] != labels[coo.col]
    leaves[np.unique(labels[coo.row[cross]])] = True
    sink = int(np.flatnonzero(~leaves)[0])
    x = int(np.flatnonzero(labels == sink)[0])
    y = int(np.flatnonzero(labels != sink)[0])
    return ICTVerdict(ICTStatus.NO, (x, y), int(ncomp))


class NoPathError(LookupError):
    """No chain joins the requested nodes."""


def find_chain(graph: ChainGraph, start: int, end: int) -> PseudoOrbit:
    """Shortest pseudo-orbit from node ``start`` to node ``end``."""
    adj = graph.adjacency
    if start == end:
        if adj[start, start]:
            path = [start, start]
        else:
            order, pred = breadth_first_order(adj, start, directed=True, return_predecessors=True)
            into = adj[:, start].nonzero()[0]
            best = None
            for u in into:
                if u == start or (pred[u] < 0 and u != start):
                    continue
                path = _unwind(pred, start, int(u))
                if best is None or len(path) < len(best):
                    best = path
            if best is None:
                raise NoPathError(f"no cycle through node {start}")
            path = best + [start]
    else:
        order, pred = breadth_first_order(adj, start, directed=True, return_predecessors=True)
        if pred[end] < 0:
            raise NoPathError(f"no chain from node {start} to node {end}")
        path = _unwind(pred, start, end)
    pts = tuple(graph.net.points[i] for i in path)
    return PseudoOrbit(graph.T, pts, graph.delta)


def _unwind(pred, start: int, end: int) -> list[int]:
    path = [end]
    while path[-1] != start:
        path.append(int(pred[path[-1]]))
    return path[::-1]


def chain_path(graph: ChainGraph, start: int, end: int) -> list[int]:
    """Node indices of a shortest path; ``start == end`` yields a cycle."""
    pts = find_chain(graph, start, end).points
    index = {p: i for i, p in enumerate(graph.net.points)}
    return [index[p] for p in pts]


class WIStatus(Enum):
    CONSISTENT = "CONSISTENT"
    REFUTED = "REFUTED"


@dataclass(frozen=True)
class WIVerdict:
    status: WIStatus
    witness: tuple | None = None
    candidates: int = 0
    points: int = 0


def _cut_positions(v: np.ndarray, granularity: int) -> np.ndarray:
    """Indices ``g`` of the gaps ``(v[g], v[g + 1])`` used as block boundaries."""
    gaps = np.diff(v)
    n = len(gaps)
    if n <= granularity:
        return np.arange(n)
    # the widest gaps separate pieces; the rest are spread evenly
    wide = np.argsort(-gaps, kind="stable")[: granularity // 2]
    even = np.linspace(0, n - 1, granularity - len(wide)).round().astype(int)
    return np.unique(np.concatenate([wide, even]))


def weak_incompressibility_check(T: TentMap, net: FiniteNet, family_granularity: int = 24,
                                 slack: float | None = None) -> WIVerdict:
    """Search relatively open traces ``U`` of the net with ``T(U)`` inside ``U``.

    ``U`` ranges over unions of one or two runs of consecutive blocks, the
    blocks being cut at gap midpoints.  An image point counts as inside U
    only if its ``slack``-neighbourhood stays within the trace intervals.
    """
    v = net.values
    if len(v) < 2:
        return WIVerdict(WIStatus.CONSISTENT, None, 0, len(v))
    s = net.resolution if slack is None else slack
    gpos = _cut_positions(v, family_granularity)
    cuts = (v[gpos] + v[gpos + 1]) / 2
    nb = len(cuts) + 1
    block = np.searchsorted(cuts, v, side="left")
    img = np.array([float(evaluate(T, p)) for p in net.points])
    lo = np.searchsorted(cuts, img - s, side="left")
    hi = np.searchsorted(cuts, img + s, side="left")
    # an image far from every net point lies outside the set, hence outside any U
    outside = net.nearest_distance(img) > s + net.resolution
    lo = np.where(outside, nb, lo)
    hi = np.where(outside, nb, hi)

    big = nb + 1
    blo = np.full(nb, big)
    bhi = np.full(nb, -1)
    np.minimum.at(blo, block, lo)
    np.maximum.at(bhi, block, hi)

    def interval(i, j):
        a = -math.inf if i == 0 else float(cuts[i - 1])
        b = math.inf if j == nb - 1 else float(cuts[j])
        return (max(a, 0.0), min(b, 1.0))

    tested = 0
    for i in range(nb):
        mlo, mhi = big, -1
        for j in range(i, nb):
            mlo, mhi = min(mlo, blo[j]), max(mhi, bhi[j])
            if i == 0 and j == nb - 1:
                continue
            tested += 1
            if mlo >= i and mhi <= j:
                return WIVerdict(WIStatus.REFUTED, (interval(i, j),), tested, len(v))

    for i1 in range(nb):
        for j1 in range(i1, nb - 2):
            fail = ~((lo >= i1) & (hi <= j1))
            in1 = (block >= i1) & (block <= j1)
            f1 = fail & in1
            a1 = int(lo[f1].min()) if f1.any() else big
            b1 = int(hi[f1].max()) if f1.any() else -1
            flo = np.full(nb, big)
            fhi = np.full(nb, -1)
            np.minimum.at(flo, block[fail], lo[fail])
            np.maximum.at(fhi, block[fail], hi[fail])
            for i2 in range(j1 + 2, nb):
                if i2 > a1:
                    break
                mlo, mhi = big, -1
                for j2 in range(i2, nb):
                    mlo, mhi = min(mlo, flo[j2]), max(mhi, fhi[j2])
                    tested += 1
                    if mlo < i2:
                        break
                    if mhi <= j2 and b1 <= j2:
                        return WIVerdict(WIStatus.REFUTED, (interval(i1, j1), interval(i2, j2)), tested, len(v))
    return WIVerdict(WIStatus.CONSISTENT, None, tested, len(v))


class ShadowFailureKind(Enum):
    NO_SHADOW_FOUND = "NO_SHADOW_FOUND"
    CAP_EXCEEDED = "CAP_EXCEEDED"


class ShadowFailure(Exception):
    def __init__(self, kind: ShadowFailureKind, index: int):
        super().__init__(f"{kind.value} at step {index}")
        self.kind = kind
        self.index = index


def _merge(intervals):
    intervals.sort(key=lambda iv: iv[0])
    out = [list(intervals[0])]
    for a, b in intervals[1:]:
        if a <= out[-1][1]:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return out


def _gap_to(x, iv) -> mpfr:
    a, b = iv
    if x < a:
        return a - x
    if x > b:
        return x - b
    return mpfr(0)


MAX_SHADOW_CAP = 4096


def shadow_point(T: TentMap, pseudo_orbit, epsilon, cap: int = 64) -> IntervalEnclosure:
    """Enclosure of points whose orbit stays within ``epsilon`` of the pseudo-orbit.

    Works backwards: ``E_n`` is the closed ``epsilon``-ball around the last
    point and ``E_i`` is the ball around ``x_i`` intersected with the
    preimage of ``E_{i+1}``.  Preimages are rounded inwards, so every point
    of the returned set shadows.  ``E_i`` may split into many pieces; only
    ``cap`` of them are kept, and the pass is repeated with a larger cap
    (up to ``MAX_SHADOW_CAP``) if pruning lost every piece.
    """
    pts = pseudo_orbit.points if isinstance(pseudo_orbit, PseudoOrbit) else tuple(pseudo_orbit)
    eps = mpfr(epsilon)
    L = len(pts)
    bits = max(T.precision_bits, math.ceil(L * T.log2_slope + math.log2(1 / float(eps))) + 64)
    Tw = T.with_precision(bits)
    # shrink the closed ball a hair so that membership is strict
    r = Tw.down.sub(eps, scale2(eps, -40))
    while True:
        try:
            return _shadow_pass(Tw, pts, r, cap)
        except ShadowFailure as exc:
            if exc.kind is not ShadowFailureKind.CAP_EXCEEDED or cap >= MAX_SHADOW_CAP:
                raise
            cap *= 4


def _shadow_pass(Tw: TentMap, pts: tuple, r, cap: int) -> IntervalEnclosure:
    down, up, lam = Tw.down, Tw.up, Tw.slope
    top = Tw.critical_value
    L = len(pts)

    def ball(x):
        return max(up.sub(x, r), mpfr(0)), min(down.add(x, r), mpfr(1))

    cands = [ball(pts[-1])]
    truncated = False
    for i in range(L - 2, -1, -1):
        blo, bhi = ball(pts[i])
        nxt = []
        for a, b in cands:
            if a > top:
                continue
            b = min(b, top)
            # left branch: [a, b] / lam within [0, 1/2]
            la, lb = up.div(a, lam), min(down.div(b, lam), HALF)
            la, lb = max(la, blo), min(lb, bhi)
            if la <= lb:
                nxt.append((la, lb))
            # right branch: 1 - [a, b] / lam within [1/2, 1]
            ra, rb = max(up.sub(1, down.div(b, lam)), HALF), down.sub(1, up.div(a, lam))
            ra, rb = max(ra, blo), min(rb, bhi)
            if ra <= rb:
                nxt.append((ra, rb))
        if not nxt:
            kind = ShadowFailureKind.CAP_EXCEEDED if truncated else ShadowFailureKind.NO_SHADOW_FOUND
            raise ShadowFailure(kind, i)
        cands = _merge(nxt)
        if len(cands) > cap:
            truncated = True
            x = pts[i]
            # keep the pieces reaching deepest into the ball, then the widest
            cands.sort(key=lambda iv: (-_gap_to(x, iv), iv[1] - iv[0]), reverse=True)
            cands = sorted(cands[:cap], key=lambda iv: iv[0])
    a, b = max(cands, key=lambda iv: iv[1] - iv[0])
    return IntervalEnclosure(a, b)


@dataclass(frozen=True)
class CalibrationResult:
    delta: float
    epsilon: float
    trials: int
    length: int
    seed: int
    tried: tuple = ()


def random_pseudo_orbit(T: TentMap, delta: float, length: int, rng: np.random.Generator,
                        start=None) -> tuple:
    """Random walk ``x_{i+1} = T(x_i) + u_i`` with ``|u_i| < delta``, kept in the core."""
    ctx = T.ctx
    top = T.critical_value
    bottom = evaluate(T, top)
    if start is None:
        start = ctx.add(bottom, ctx.mul(ctx.sub(top, bottom), mpfr(rng.random())))
    x = start
    out = [x]
    bump = rng.uniform(-0.999 * delta, 0.999 * delta, size=length - 1)
    for u in bump:
        y = ctx.add(evaluate(T, x), mpfr(float(u)))
        x = min(max(y, bottom), top)
        out.append(x)
    return tuple(out)


def calibrate_shadowing_modulus(T: TentMap, epsilon: float, trials: int = 8, delta_grid=None,
                                length: int = 200, seed: int = 0) -> CalibrationResult:
    """Largest grid ``delta`` whose random pseudo-orbits all shadow at ``epsilon``."""
    crit = shadowing_criterion(T, epsilon, 1000)
    if crit.status is not CriterionStatus.SATISFIED:
        raise PreconditionError("shadowing criterion not satisfied at this scale")
    if delta_grid is None:
        delta_grid = [epsilon / 2 ** k for k in range(1, 12)] + [1e-12]
    length = max(length, 200)
    tried = []
    for delta in sorted(delta_grid, reverse=True):
        rng = np.random.default_rng(seed)
        ok = True
        for _ in range(trials):
            orbit = random_pseudo_orbit(T, delta, length, rng)
            try:
                shadow_point(T, orbit, epsilon)
            except ShadowFailure:
                ok = False
                break
        tried.append((delta, ok))
        if ok:
            return CalibrationResult(delta, epsilon, trials, length, seed, tuple(tried))
    raise PreconditionError(f"no grid delta passes at epsilon {epsilon} (NONE_PASS)")
