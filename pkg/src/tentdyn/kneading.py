"""Kneading sequences, admissibility, signatures and the shadowing criterion."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache

import gmpy2
from gmpy2 import mpfr

from .symbolic import (
    EPSeq,
    InsufficientPrefixError,
    Order,
    SeqView,
    as_view,
    parity,
    Parity,
    plex_compare_words,
    shift,
)
from .tent import (
    HALF,
    AmbiguousError,
    Side,
    TentMap,
    default_tol,
    find_critical_return,
    itinerary_to_point,
    limit_itinerary,
    precision_for_depth,
    scale2,
)

__all__ = [
    "KneadingInfo",
    "Admissibility",
    "AdmissibilityVerdict",
    "Witness",
    "PrecriticalCase",
    "PrecriticalVerdict",
    "CriterionStatus",
    "CriterionResult",
    "NoConvergenceError",
    "as_kneading",
    "kneading_prefix",
    "detect_periodic_critical",
    "admissible",
    "precritical_admissible",
    "segment_violation",
    "signature",
    "shadowing_criterion",
    "slope_from_kneading",
    "map_from_kneading",
]


class NoConvergenceError(ArithmeticError):
    """Slope bisection did not reproduce the target kneading sequence."""


@dataclass(frozen=True)
class KneadingInfo:
    """Kneading data of a map.

    ``prefix`` is the known initial segment of K.  ``exact`` is set only when
    the critical point is periodic, in which case K is purely periodic with
    an even period word of length ``period_m``.  ``symbolic`` holds the
    whole of K whenever it is known exactly (periodic or supplied).
    """

    prefix: str
    exact: EPSeq | None = None
    period_m: int | None = None
    certified: bool = True
    symbolic: EPSeq | None = None

    def __post_init__(self):
        if "C" in self.prefix:
            raise ValueError("a kneading prefix never contains C")
        if self.exact is not None:
            if not self.exact.is_periodic or len(self.exact.period) != self.period_m:
                raise ValueError(f"exact kneading {self.exact} inconsistent with period {self.period_m}")
            if parity(self.exact.period) is not Parity.EVEN:
                raise ValueError(f"periodic kneading word {self.exact.period} is odd")
            if self.symbolic is None:
                object.__setattr__(self, "symbolic", self.exact)

    def view(self) -> SeqView:
        if self.symbolic is not None:
            return SeqView(self.symbolic)
        return SeqView(self.prefix)

    def critical_view(self) -> SeqView:
        """View of itin(c)."""
        if self.exact is not None:
            return SeqView(EPSeq.periodic("C" + self.exact.period[:-1]))
        if self.symbolic is not None:
            return SeqView(EPSeq("C" + self.symbolic.preperiod, self.symbolic.period))
        return SeqView("C" + self.prefix)

    def __str__(self) -> str:
        return str(self.symbolic) if self.symbolic is not None else self.prefix


def as_kneading(K, depth: int = 64) -> KneadingInfo:
    """Coerce a kneading sequence given as text, word or EPSeq.

    A purely periodic K forces a periodic critical point (T(c) has the single
    preimage c), so it is treated as the exact periodic case.
    """
    if isinstance(K, KneadingInfo):
        return K
    if isinstance(K, SeqView):
        K = K.source
    if isinstance(K, EPSeq):
        if K.is_periodic:
            return KneadingInfo(K.prefix(depth), K, len(K.period))
        return KneadingInfo(K.prefix(depth), symbolic=K)
    if isinstance(K, str):
        return KneadingInfo(K)
    raise TypeError(f"cannot interpret {type(K).__name__} as a kneading sequence")


def detect_periodic_critical(T: TentMap, max_period: int = 64, tol=None) -> int | None:
    """Certified least period of the critical point, if it is at most ``max_period``."""
    if max_period < 3:
        raise ValueError("max_period must be at least 3")
    if max_period <= 64 and tol is None:
        ret = T.critical_return
        if ret is None:
            # distinguish "absent" from "ambiguous"
            find_critical_return(T, max_period)
            return None
        return ret.period if ret.period <= max_period else None
    ret = find_critical_return(T, max_period, tol)
    return None if ret is None else ret.period


def kneading_prefix(T: TentMap, depth: int) -> KneadingInfo:
    if depth < 1:
        raise ValueError("depth must be >= 1")
    ret = T.critical_return
    if ret is not None:
        m = ret.period
        res = limit_itinerary(T, T.critical_value, Side.LOWER, max(m, depth))
        word = res.word[:m]
        exact = EPSeq.periodic(word)
        if res.word != exact.prefix(len(res.word)):
            raise AmbiguousError("periodic critical orbit inconsistent with its kneading prefix")
        return KneadingInfo(exact.prefix(depth), exact, m, res.certified)
    if T.kneading_hint is not None:
        hint = T.kneading_hint
        return KneadingInfo(hint.prefix(depth), None, None, True, hint)
    Tw = T.with_precision(precision_for_depth(T, depth))
    res = limit_itinerary(Tw, Tw.critical_value, Side.LOWER, depth, T.tol)
    return KneadingInfo(res.word, None, None, res.certified)


class Admissibility(Enum):
    STRICT = "STRICT"
    BOUNDARY = "BOUNDARY"
    VIOLATES = "VIOLATES"


@dataclass(frozen=True)
class Witness:
    shift: int
    depth: int
    window: str
    reason: str = ""


@dataclass(frozen=True)
class AdmissibilityVerdict:
    status: Admissibility
    witness: Witness | None = None

    def __post_init__(self):
        if self.status is Admissibility.VIOLATES and self.witness is None:
            raise ValueError("VIOLATES verdicts must carry a witness")


def admissible(s, K, depth: int) -> AdmissibilityVerdict:
    """Check the admissibility conditions for ``s`` against kneading ``K``.

    Infinite sequences compare every shift against K to ``depth``; finite
    words use ``s[i:]`` against the matching prefix of K.  If ``s`` contains
    C at position p, the tail from p must be itin(c) and each earlier shift
    is compared on the stretch before the C.
    """
    K = as_kneading(K)
    sv = as_view(s)
    kv = K.view()
    if sv.is_exact:
        n = depth
        src = sv.source
        shifts = min(depth, len(src.preperiod) + len(src.period))
        word = sv.prefix(n + shifts)
    else:
        n = min(depth, len(sv.source))
        shifts = n
        word = sv.prefix(n)

    p = word.find("C", 0, n)
    if p >= 0:
        return _admissible_precritical(word, p, n, K, kv)

    boundary = None
    for i in range(shifts):
        length = n if sv.is_exact else n - i
        a = word[i:i + length]
        b = kv.prefix(length)
        order, k = plex_compare_words(a, b)
        if order is Order.GT:
            return AdmissibilityVerdict(Admissibility.VIOLATES, Witness(i, k, a[:k + 1], "shift exceeds K"))
        if order is Order.EQ_TO_DEPTH and boundary is None:
            boundary = Witness(i, length, a, "shift equals K to depth")
    if boundary is not None:
        return AdmissibilityVerdict(Admissibility.BOUNDARY, boundary)
    return AdmissibilityVerdict(Admissibility.STRICT)


def _admissible_precritical(word: str, p: int, n: int, K: KneadingInfo, kv: SeqView) -> AdmissibilityVerdict:
    cv = K.critical_view()
    tail = word[p:n]
    crit = cv.prefix(min(len(tail), cv.known_length))
    if tail[: len(crit)] != crit:
        k = next(i for i in range(len(crit)) if tail[i] != crit[i])
        return AdmissibilityVerdict(
            Admissibility.VIOLATES, Witness(p, k, tail[: k + 1], "tail after C is not itin(c)")
        )
    boundary = None
    for i in range(p):
        a = word[i:p]
        order, k = plex_compare_words(a, kv.prefix(p - i))
        if order is Order.GT:
            return AdmissibilityVerdict(Admissibility.VIOLATES, Witness(i, k, a[:k + 1], "shift exceeds K"))
        if order is Order.EQ_TO_DEPTH and boundary is None:
            boundary = Witness(i, p - i, a, "segment before C equals K")
    if boundary is not None:
        return AdmissibilityVerdict(Admissibility.BOUNDARY, boundary)
    return AdmissibilityVerdict(Admissibility.STRICT)


class PrecriticalCase(Enum):
    ZEROS = 1
    BELOW_KNEADING = 2
    CRITICAL_ORBIT = 3


@dataclass(frozen=True)
class PrecriticalVerdict:
    admissible: bool
    case: PrecriticalCase | None = None
    certified: bool = True
    witness: Witness | None = None


def precritical_admissible(prefix: str, K) -> PrecriticalVerdict:
    """Is ``prefix + itin(c)`` the itinerary of a pre-critical point in [0, T(c)]?"""
    if set(prefix) - {"0", "1"}:
        raise ValueError("prefix must be a word over {0, 1}")
    if isinstance(K, TentMap):
        K = kneading_prefix(K, len(prefix) + 2 * 64)
    K = as_kneading(K)
    if not K.certified:
        return PrecriticalVerdict(False, None, False)
    n = len(prefix)
    if prefix == "0" * n:
        return PrecriticalVerdict(True, PrecriticalCase.ZEROS)
    if K.exact is not None:
        t = K.exact.period[:-1]
        m = K.period_m
        if any(prefix == t[k:] for k in range(m - 1)):
            return PrecriticalVerdict(True, PrecriticalCase.CRITICAL_ORBIT)
    cv = K.critical_view()
    kv = K.view()
    # every comparison is decided by the C at position n - k at the latest
    full = prefix + cv.prefix(1)
    for k in range(n + 1):
        a = full[k:]
        order, d = plex_compare_words(a, kv.prefix(len(a)))
        if order is not Order.LT:
            return PrecriticalVerdict(False, None, True, Witness(k, d if d is not None else len(a), a))
    return PrecriticalVerdict(True, PrecriticalCase.BELOW_KNEADING)


def segment_violation(t, K, depth: int) -> str | None:
    """A segment r of ``t`` with ``|r| <= m`` and ``r`` above ``K|_{|r|}``.

    The first shift exceeding K is found; its discrepancy index ``mi + j``
    is reduced modulo the period, which keeps the order because every full
    period word of K is even.
    """
    K = as_kneading(K)
    if K.exact is None:
        raise ValueError("segment_violation needs a periodic kneading sequence")
    m = K.period_m
    word = as_view(t).prefix(depth)
    kv = K.view()
    for k in range(len(word)):
        a = word[k:]
        order, d = plex_compare_words(a, kv.prefix(len(a)))
        if order is Order.GT:
            j = d % m
            start = k + d - j
            return word[start:start + j + 1]
    return None


def signature(K, n: int) -> list[int]:
    """The first ``n`` values of the signature sequence of ``K``."""
    if n < 1:
        return []
    kv = as_view(K.view() if isinstance(K, KneadingInfo) else K)
    word = kv.prefix(n - 1)
    rho = [-1]
    for sym in word:
        if sym == "0":
            rho.append(rho[-1])
        elif sym == "1":
            rho.append(-rho[-1])
        else:
            rho.append(-1)
    return rho


class CriterionStatus(Enum):
    SATISFIED = "SATISFIED"
    NOT_FOUND = "NOT_FOUND"


@dataclass(frozen=True)
class CriterionResult:
    status: CriterionStatus
    witness: int | None
    horizon: int
    clause: str = ""
    distance: float | None = None


def _critical_orbit_enclosures(T: TentMap, horizon: int):
    """Yield ``(n, lo, hi, exact_hit)`` bounding ``T^n(c)`` for ``n = 1..horizon``."""
    ret = T.critical_return
    if ret is not None:
        m = ret.period
        err = scale2(mpfr(1), -(T.precision_bits // 2))
        for n in range(1, horizon + 1):
            if n % m == 0:
                yield n, HALF, HALF, True
            else:
                x = ret.orbit[n % m]
                yield n, x - err, x + err, False
        return
    if T.kneading_hint is not None:
        cache = {}
        depth = max(64, math.ceil(T.precision_bits / 2 / T.log2_slope))
        hint = T.kneading_hint
        for n in range(1, horizon + 1):
            key = hint.shift(n - 1)
            enc = cache.get(key)
            if enc is None:
                enc = cache[key] = itinerary_to_point(T, key, depth)
            yield n, enc.lo, enc.hi, False
        return
    bits = max(T.precision_bits, math.ceil(horizon * T.log2_slope) + 64)
    Tw = T.with_precision(bits)
    ctx, lam = Tw.ctx, Tw.slope
    up = gmpy2.context(precision=64, round=gmpy2.RoundUp)
    unit = scale2(mpfr(1), 2 - bits)
    x, err = Tw.critical_value, mpfr(0)
    for n in range(1, horizon + 1):
        yield n, x - err, x + err, False
        x = ctx.mul(lam, x) if x <= HALF else ctx.mul(lam, ctx.sub(1, x))
        err = up.add(up.mul(lam, err), unit)


def shadowing_criterion(T: TentMap, epsilon, horizon: int) -> CriterionResult:
    """Least ``n <= horizon`` meeting the shadowing criterion at scale ``epsilon``.

    The condition is ``|T^n(c) - c| < epsilon`` together with either an exact
    return ``T^n(c) = c`` or the signature rule ``rho_n = +1`` when
    ``K_n = 0`` and ``rho_n = -1`` when ``K_n = 1``.
    """
    eps = mpfr(epsilon)
    if eps <= 0 or horizon < 1:
        raise ValueError("need epsilon > 0 and horizon >= 1")
    K = kneading_prefix(T, horizon + 1)
    rho = signature(K, horizon + 1)
    kword = K.view().prefix(horizon + 1)
    for n, lo, hi, exact in _critical_orbit_enclosures(T, horizon):
        if exact:
            return CriterionResult(CriterionStatus.SATISFIED, n, horizon, "exact_return", 0.0)
        near = max(HALF - lo, hi - HALF)
        far = max(lo - HALF, HALF - hi, mpfr(0))
        if far >= eps:
            continue
        sig_ok = (kword[n] == "0" and rho[n] == 1) or (kword[n] == "1" and rho[n] == -1)
        if near < eps:
            if not K.certified:
                raise AmbiguousError(f"kneading symbol {n} not certified")
            if sig_ok:
                return CriterionResult(CriterionStatus.SATISFIED, n, horizon, "signature", float(near))
            continue
        if sig_ok:
            raise AmbiguousError(f"|T^{n}(c) - c| < epsilon undecided at working precision")
    return CriterionResult(CriterionStatus.NOT_FOUND, None, horizon)


def _compare_kneading(lam: mpfr, target: str, bits: int) -> Order:
    """Order of K(lam) against ``target`` on ``len(target)`` symbols.

    A critical near-hit before the first discrepancy counts as agreement.
    """
    ctx = gmpy2.context(precision=bits)
    tol = default_tol(bits)
    x = scale2(lam, -1)
    odd = False
    for i, want in enumerate(target):
        d = ctx.sub(x, HALF)
        if abs(d) <= tol:
            return Order.EQ_TO_DEPTH
        if d < 0:
            sym = "0"
            nxt = ctx.mul(lam, x)
        else:
            sym = "1"
            nxt = ctx.mul(lam, ctx.sub(1, x))
        if sym != want:
            below = sym < want
            return Order.GT if below == odd else Order.LT
        if sym == "1":
            odd = not odd
        x = nxt
    return Order.EQ_TO_DEPTH


def _bisect_edge(target: str, bits: int, below: frozenset, steps: int) -> tuple[mpfr, mpfr]:
    ctx = gmpy2.context(precision=bits)
    lo, hi = mpfr(1, bits), mpfr(2, bits)
    for _ in range(steps):
        mid = scale2(ctx.add(lo, hi), -1)
        if mid == lo or mid == hi:
            break
        if _compare_kneading(mid, target, bits) in below:
            lo = mid
        else:
            hi = mid
    return lo, hi


def slope_from_kneading(target, depth: int = 40, tol=None, bits: int = 256) -> mpfr:
    """Slope whose kneading sequence agrees with ``target`` to ``depth``.

    Bisects on both edges of the parameter plateau where the kneading prefix
    equals the target (the kneading sequence is monotone in the slope under
    parity-lexicographic order) and returns the plateau midpoint, then
    certifies it by recomputing the kneading prefix.
    """
    if isinstance(target, EPSeq):
        inner = target.prefix(max(depth, bits))
    else:
        inner = target
        depth = min(depth, len(target))
    if not inner or set(inner) - {"0", "1"}:
        raise ValueError("target must be a non-empty sequence over {0, 1}")
    steps = bits - 8
    lo_edge, _ = _bisect_edge(inner, bits, frozenset({Order.LT}), steps)
    _, hi_edge = _bisect_edge(inner, bits, frozenset({Order.LT, Order.EQ_TO_DEPTH}), steps)
    ctx = gmpy2.context(precision=bits)
    lam = scale2(ctx.add(lo_edge, hi_edge), -1)
    if tol is not None and ctx.sub(hi_edge, lo_edge) > mpfr(tol) and isinstance(target, EPSeq):
        raise NoConvergenceError("bisection bracket did not narrow below tol")
    if not 1 < lam < 2:
        raise NoConvergenceError("target kneading sequence not realized in (1, 2)")
    check = kneading_prefix(TentMap(lam, bits + 64), depth)
    want = as_view(target).prefix(depth)
    if check.prefix != want:
        raise NoConvergenceError(f"recomputed kneading {check.prefix} differs from {want}")
    return lam


def map_from_kneading(target: EPSeq, depth: int = 40, bits: int = 256, label: str = "") -> TentMap:
    """The tent map realizing ``target``, carrying it as its kneading hint."""
    lam = slope_from_kneading(target, depth, bits=bits)
    return TentMap(lam, bits, target, label or f"kneading:{target}")
