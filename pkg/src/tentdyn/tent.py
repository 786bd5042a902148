"""High-precision tent map dynamics.

All point arithmetic goes through :mod:`gmpy2` contexts owned by the map, so
the global gmpy2 context is never consulted.  Orbits carry a running bound on
accumulated rounding error; an address decision counts as certified only
when the point clears the critical point by more than ``tol`` and the error
bound stays below ``tol / 2``.
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property

import gmpy2
from gmpy2 import mpfr

from .symbolic import EPSeq, as_view

__all__ = [
    "DEFAULT_PRECISION",
    "MIN_PRECISION",
    "HALF",
    "Address",
    "Side",
    "TentMap",
    "IntervalEnclosure",
    "ItineraryResult",
    "CriticalReturn",
    "AmbiguousError",
    "UncertifiedError",
    "InadmissiblePrefixError",
    "resolve_slope",
    "parse_point",
    "format_point",
    "default_tol",
    "evaluate",
    "orbit_prefix",
    "address",
    "itinerary_prefix",
    "limit_itinerary",
    "critical_itinerary",
    "preimages",
    "inverse_branch",
    "image_interval",
    "itinerary_to_point",
    "interval_of_prefix",
    "find_critical_return",
    "precision_for_depth",
    "scale2",
]

DEFAULT_PRECISION = int(os.environ.get("TENTDYN_PRECISION", "256"))
MIN_PRECISION = 64
HALF = mpfr("0.5")

_ERR = gmpy2.context(precision=64, round=gmpy2.RoundUp)


class AmbiguousError(ArithmeticError):
    """A decision could not be certified either way at working precision."""


class UncertifiedError(ArithmeticError):
    """An itinerary needed as input was not certified."""


class InadmissiblePrefixError(ValueError):
    """Backward interval iteration of an itinerary prefix became empty."""


class Address(Enum):
    ZERO = "0"
    ONE = "1"
    CRIT = "C"
    NEAR_CRIT = "?"


class Side(Enum):
    UPPER = 1
    LOWER = -1


def scale2(x, n: int) -> mpfr:
    """Exact ``x * 2**n`` at the precision of ``x``."""
    x = mpfr(x) if not isinstance(x, type(HALF)) else x
    return gmpy2.context(precision=x.precision).mul_2exp(x, n)


def default_tol(bits: int) -> mpfr:
    return scale2(mpfr(1), -(bits // 4))


@dataclass(frozen=True)
class TentMap:
    """The tent map with slope ``slope`` and critical point 1/2.

    ``kneading_hint`` is an optional symbolic fact: the exact kneading
    sequence of the map, supplied by whoever constructed the slope (for
    instance :func:`tentdyn.kneading.slope_from_kneading`).  It is used only
    where the numeric orbit of the critical point cannot be followed for
    long enough.
    """

    slope: mpfr
    precision_bits: int = DEFAULT_PRECISION
    kneading_hint: EPSeq | None = None
    label: str = ""

    def __post_init__(self):
        if self.precision_bits < MIN_PRECISION:
            raise ValueError(f"precision {self.precision_bits} below floor {MIN_PRECISION}")
        slope = mpfr(self.slope, max(self.precision_bits, _prec(self.slope)))
        object.__setattr__(self, "slope", slope)
        if not 1 < slope <= 2:
            raise ValueError(f"slope {float(slope)} outside (1, 2]")
        if slope == 2:
            warnings.warn("slope 2 is outside the periodic-critical-point range (1, 2)", stacklevel=2)

    @cached_property
    def ctx(self):
        return gmpy2.context(precision=self.precision_bits, round=gmpy2.RoundToNearest)

    @cached_property
    def down(self):
        return gmpy2.context(precision=self.precision_bits, round=gmpy2.RoundDown)

    @cached_property
    def up(self):
        return gmpy2.context(precision=self.precision_bits, round=gmpy2.RoundUp)

    @cached_property
    def tol(self) -> mpfr:
        return default_tol(self.precision_bits)

    @cached_property
    def unit_error(self) -> mpfr:
        # one evaluation: rounding of (1 - x) and of the product
        return scale2(mpfr(1), 2 - self.precision_bits)

    @cached_property
    def log2_slope(self) -> float:
        return math.log2(float(self.slope))

    @cached_property
    def critical_value(self) -> mpfr:
        """T(c) = slope / 2, exact."""
        return scale2(self.slope, -1)

    @cached_property
    def critical_return(self) -> "CriticalReturn | None":
        try:
            return find_critical_return(self, max_period=64, tol=self.tol)
        except AmbiguousError:
            return None

    @property
    def critical_period(self) -> int | None:
        ret = self.critical_return
        return None if ret is None else ret.period

    def with_precision(self, bits: int) -> "TentMap":
        if bits == self.precision_bits:
            return self
        return replace(self, precision_bits=bits)

    def __call__(self, x: mpfr) -> mpfr:
        return evaluate(self, x)

    def describe(self) -> str:
        return self.label or f"{float(self.slope):.12g}"


def _prec(x) -> int:
    return x.precision if isinstance(x, type(HALF)) else 53


def precision_for_depth(T: TentMap, depth: int, guard: int | None = None) -> int:
    """Working precision that keeps ``depth`` iterates certifiable."""
    guard = T.precision_bits // 4 + 32 if guard is None else guard
    return max(T.precision_bits, math.ceil(depth * T.log2_slope) + guard + 16)


def resolve_slope(spec: str, bits: int = DEFAULT_PRECISION) -> tuple[mpfr, EPSeq | None, str]:
    """Resolve a slope token into ``(slope, kneading_hint, label)``.

    Accepts a decimal string, ``golden`` or ``kneading:<seq>``.
    """
    spec = spec.strip()
    ctx = gmpy2.context(precision=bits)
    if spec == "golden":
        return ctx.div(ctx.add(1, ctx.sqrt(5)), 2), None, "golden"
    if spec.startswith("kneading:"):
        from .kneading import slope_from_kneading
        from .symbolic import parse_sequence

        target = parse_sequence(spec.split(":", 1)[1])
        slope = slope_from_kneading(target, bits=bits)
        hint = target if isinstance(target, EPSeq) else None
        return slope, hint, spec
    try:
        return mpfr(spec, bits), None, spec
    except ValueError as exc:
        raise ValueError(f"unrecognized slope {spec!r}") from exc


def parse_point(text: str, bits: int = DEFAULT_PRECISION) -> mpfr:
    """Parse ``0.3`` or ``0.3@256`` into a point in [0, 1]."""
    value, _, prec = text.strip().partition("@")
    x = mpfr(value, int(prec) if prec else bits)
    if not 0 <= x <= 1:
        raise ValueError(f"point {text!r} outside [0, 1]")
    return x


def format_point(x: mpfr, digits: int = 20) -> str:
    return f"{x:.{digits}f}@{x.precision}"


@dataclass(frozen=True)
class IntervalEnclosure:
    lo: mpfr
    hi: mpfr

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError("empty enclosure")

    @property
    def width(self) -> mpfr:
        ctx = gmpy2.context(precision=max(_prec(self.lo), _prec(self.hi)), round=gmpy2.RoundUp)
        return ctx.sub(self.hi, self.lo)

    @property
    def mid(self) -> mpfr:
        ctx = gmpy2.context(precision=max(_prec(self.lo), _prec(self.hi)) + 1)
        return scale2(ctx.add(self.lo, self.hi), -1)

    def contains(self, x) -> bool:
        return self.lo <= x <= self.hi

    def __str__(self) -> str:
        return f"[{float(self.lo):.17g}, {float(self.hi):.17g}]"


@dataclass(frozen=True)
class ItineraryResult:
    word: str
    crit_hit: int | None = None
    certified: bool = True
    in_core: bool = True

    def __post_init__(self):
        if self.crit_hit is not None and self.word[self.crit_hit] != "C":
            raise ValueError("crit_hit must index a C symbol")


@dataclass(frozen=True)
class CriticalReturn:
    """Certified return of the critical point: some slope within ``radius``
    of the map's slope has ``T^period(c) = c`` exactly."""

    period: int
    radius: mpfr
    orbit: tuple = field(repr=False, default=())


def evaluate(T: TentMap, x: mpfr) -> mpfr:
    ctx = T.ctx
    if x <= HALF:
        return ctx.mul(T.slope, x)
    return ctx.mul(T.slope, ctx.sub(1, x))


def orbit_prefix(T: TentMap, x: mpfr, n: int) -> list[mpfr]:
    if n < 1:
        raise ValueError("n must be >= 1")
    out = [x]
    for _ in range(n - 1):
        x = evaluate(T, x)
        out.append(x)
    return out


def address(T: TentMap, x: mpfr, tol=None) -> Address:
    tol = T.tol if tol is None else tol
    if tol <= 0:
        raise ValueError("tol must be positive")
    if x == HALF:
        return Address.CRIT
    d = T.ctx.sub(x, HALF)
    if d < -tol:
        return Address.ZERO
    if d > tol:
        return Address.ONE
    return Address.NEAR_CRIT


def _is_critical_hit(T: TentMap, x: mpfr, tol) -> bool:
    # exact representation of 1/2, or within tol when the map's critical
    # point is certified periodic (the orbit is then identified with c)
    if x == HALF:
        return True
    return T.critical_period is not None and abs(T.ctx.sub(x, HALF)) <= tol


def _in_core(T: TentMap, x: mpfr) -> bool:
    t1 = T.critical_value
    return evaluate(T, t1) <= x <= t1


def critical_itinerary(T: TentMap, n: int, tol=None) -> ItineraryResult:
    """First ``n`` symbols of itin(c).

    Uses the exact periodic word when the critical point is certified
    periodic, the map's kneading hint when one was supplied, and the numeric
    orbit otherwise.
    """
    if n <= 0:
        return ItineraryResult("", None, True)
    ret = T.critical_return
    if ret is not None:
        t = "".join("0" if x < HALF else "1" for x in ret.orbit[1:])
        return ItineraryResult(EPSeq.periodic("C" + t).prefix(n), 0, True)
    if T.kneading_hint is not None:
        return ItineraryResult("C" + T.kneading_hint.prefix(n - 1), 0, True)
    rest = itinerary_prefix(T, T.critical_value, n - 1, tol) if n > 1 else ItineraryResult("")
    word = "C" + rest.word
    return ItineraryResult(word, 0, rest.certified)


def itinerary_prefix(T: TentMap, x: mpfr, n: int, tol=None) -> ItineraryResult:
    """Addresses of ``x, T(x), ..., T^{n-1}(x)``.

    On the first critical hit the remaining symbols are those of itin(c).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    tol = T.tol if tol is None else tol
    half_tol = scale2(tol, -1)
    ctx, lam, unit = T.ctx, T.slope, T.unit_error
    symbols = []
    certified = True
    err = mpfr(0)
    xi = x
    for i in range(n):
        if _is_critical_hit(T, xi, tol):
            rest = critical_itinerary(T, n - i, tol)
            return ItineraryResult("".join(symbols) + rest.word, i, certified and rest.certified, _in_core(T, x))
        d = ctx.sub(xi, HALF)
        if -tol <= d <= tol or err > half_tol:
            certified = False
        if xi < HALF:
            symbols.append("0")
            xi = ctx.mul(lam, xi)
        else:
            symbols.append("1")
            xi = ctx.mul(lam, ctx.sub(1, xi))
        err = _ERR.add(_ERR.mul(lam, err), unit)
    return ItineraryResult("".join(symbols), None, certified, _in_core(T, x))


def limit_itinerary(T: TentMap, x: mpfr, side: Side, n: int, tol=None) -> ItineraryResult:
    """First ``n`` symbols of the one-sided limit itinerary of ``x``.

    An infinitesimal perturbation of sign ``side`` is carried along the
    orbit: it flips on the decreasing branch, decides the symbol at a
    critical hit, and is negative after every fold.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if side is Side.UPPER and x == T.critical_value:
        raise ValueError("upper limit itinerary at T(c) is not defined")
    tol = T.tol if tol is None else tol
    half_tol = scale2(tol, -1)
    ctx, lam, unit = T.ctx, T.slope, T.unit_error
    sign = side.value
    symbols = []
    certified = True
    crit_hit = None
    err = mpfr(0)
    xi = x
    for i in range(n):
        if _is_critical_hit(T, xi, tol):
            if crit_hit is None:
                crit_hit = i
            symbols.append("1" if sign > 0 else "0")
            sign = -1
            xi = T.critical_value
            err = mpfr(0)
            continue
        d = ctx.sub(xi, HALF)
        if -tol <= d <= tol or err > half_tol:
            certified = False
        if xi < HALF:
            symbols.append("0")
            xi = ctx.mul(lam, xi)
        else:
            symbols.append("1")
            sign = -sign
            xi = ctx.mul(lam, ctx.sub(1, xi))
        err = _ERR.add(_ERR.mul(lam, err), unit)
    # crit_hit is reported separately: a limit itinerary carries no C symbol
    result = ItineraryResult("".join(symbols), None, certified, _in_core(T, x))
    object.__setattr__(result, "crit_hit", crit_hit)
    return result


def preimages(T: TentMap, y: mpfr) -> list[mpfr]:
    if not 0 <= y <= 1:
        raise ValueError("y outside [0, 1]")
    if y > T.critical_value:
        return []
    ctx = T.ctx
    left = ctx.div(y, T.slope)
    right = ctx.sub(1, left)
    return [left] if left == right else [left, right]


def inverse_branch(T: TentMap, symbol: str, y: mpfr, ctx=None) -> mpfr:
    """Preimage of ``y`` on the branch labelled ``symbol``."""
    ctx = T.ctx if ctx is None else ctx
    if symbol == "0":
        return ctx.div(y, T.slope)
    if symbol == "1":
        return ctx.sub(1, ctx.div(y, T.slope))
    if symbol == "C":
        return HALF
    raise ValueError(f"bad symbol {symbol!r}")


def image_interval(T: TentMap, lo: mpfr, hi: mpfr) -> tuple[mpfr, mpfr]:
    """Outward-rounded enclosure of ``T([lo, hi])``."""
    down, up, lam = T.down, T.up, T.slope
    if hi <= HALF:
        return down.mul(lam, lo), up.mul(lam, hi)
    if lo >= HALF:
        return down.mul(lam, down.sub(1, hi)), up.mul(lam, up.sub(1, lo))
    left = down.mul(lam, lo)
    right = down.mul(lam, down.sub(1, hi))
    return min(left, right), T.critical_value


def itinerary_to_point(T: TentMap, s, depth: int) -> IntervalEnclosure:
    """Enclosure of the points whose itinerary matches ``s`` to ``depth``.

    Works backwards from the branch interval of the last symbol (or from c
    itself if a C occurs), pulling back through each earlier branch with
    outward rounding.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    word = as_view(s).prefix(depth)
    down, up, lam = T.down, T.up, T.slope
    top = T.critical_value
    k = word.find("C")
    if k >= 0:
        lo = hi = HALF
        word = word[:k]
    else:
        lo, hi = (mpfr(0), HALF) if word[-1] == "0" else (HALF, mpfr(1))
        word = word[:-1]
    for i in range(len(word) - 1, -1, -1):
        if lo > top:
            raise InadmissiblePrefixError(f"no preimage for position {i} of the prefix")
        hi = min(hi, top)
        if word[i] == "0":
            lo, hi = down.div(lo, lam), min(up.div(hi, lam), HALF)
        else:
            lo, hi = max(down.sub(1, up.div(hi, lam)), HALF), up.sub(1, down.div(lo, lam))
        if lo > hi:
            raise InadmissiblePrefixError(f"empty pullback at position {i}")
    return IntervalEnclosure(lo, hi)


def interval_of_prefix(T: TentMap, x: mpfr, N: int, tol=None) -> IntervalEnclosure:
    res = itinerary_prefix(T, x, N, tol)
    if not res.certified:
        raise UncertifiedError(f"itinerary of {float(x)} not certified to depth {N}")
    return itinerary_to_point(T, res.word, N)


def _critical_orbit_at(lam: mpfr, bits: int, m: int):
    """Orbit c, T(c), ..., T^m(c) at slope ``lam`` with an error bound."""
    ctx = gmpy2.context(precision=bits)
    unit = scale2(mpfr(1), 2 - bits)
    xs = [HALF]
    errs = [mpfr(0)]
    x, err = HALF, mpfr(0)
    for _ in range(m):
        x = ctx.mul(lam, x) if x <= HALF else ctx.mul(lam, ctx.sub(1, x))
        err = _ERR.add(_ERR.mul(lam, err), unit)
        xs.append(x)
        errs.append(err)
    return xs, errs


def find_critical_return(T: TentMap, max_period: int, tol=None) -> CriticalReturn | None:
    """Least ``m <= max_period`` with ``T^m(c)`` within ``tol`` of c, certified.

    Certification brackets the slope: ``T^m(c) - c`` must take opposite
    certified signs at ``slope - r`` and ``slope + r`` while every earlier
    iterate keeps a margin from c larger than its possible drift over the
    bracket.  The intermediate value theorem then gives an exact periodic
    critical point at some slope within ``r``.
    """
    tol = T.tol if tol is None else tol
    bits = T.precision_bits
    xs, errs = _critical_orbit_at(T.slope, bits, max_period)
    for m in range(1, max_period + 1):
        gap = abs(T.ctx.sub(xs[m], HALF))
        if errs[m] >= tol:
            return None
        if gap >= tol:
            continue
        ctx = gmpy2.context(precision=bits + 8)
        r = scale2(mpfr(1), -(bits // 2))
        limit = scale2(mpfr(1), -(bits // 8))
        while r <= limit:
            signs = []
            ok = True
            for lam in (ctx.sub(T.slope, r), ctx.add(T.slope, r)):
                if not 1 < lam < 2:
                    ok = False
                    break
                ys, es = _critical_orbit_at(lam, bits + 8, m)
                for i in range(1, m):
                    drift = _ERR.mul(_ERR.mul(i, _ERR.pow(2, i)), r)
                    if abs(ys[i] - HALF) <= drift + es[i] or (ys[i] < HALF) != (xs[i] < HALF):
                        ok = False
                g = ys[m] - HALF
                if abs(g) <= es[m]:
                    ok = False
                signs.append(g > 0)
            if ok and signs[0] != signs[1]:
                return CriticalReturn(m, r, tuple(xs[:m]))
            r = scale2(r, 2)
        raise AmbiguousError(f"T^{m}(c) within tol of c but no certified slope bracket")
    return None
