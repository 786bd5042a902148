import math
from fractions import Fraction

import pytest
import gmpy2
from gmpy2 import mpfr
from hypothesis import assume, given, strategies as st

from conftest import make_map
from tentdyn.symbolic import EPSeq
from tentdyn.tent import (
    HALF,
    Address,
    Side,
    TentMap,
    address,
    critical_itinerary,
    evaluate,
    find_critical_return,
    format_point,
    image_interval,
    interval_of_prefix,
    itinerary_prefix,
    itinerary_to_point,
    limit_itinerary,
    parse_point,
    precision_for_depth,
    preimages,
    resolve_slope,
    scale2,
)


def exact_itinerary(lam: Fraction, x: Fraction, n: int) -> str:
    out = []
    for _ in range(n):
        if x == Fraction(1, 2):
            out.append("C")
        elif x < Fraction(1, 2):
            out.append("0")
        else:
            out.append("1")
        x = lam * x if x <= Fraction(1, 2) else lam * (1 - x)
    return "".join(out)


dyadic_slope = st.integers(17, 31).map(lambda k: Fraction(k, 16))
dyadic_point = st.integers(0, 1 << 12).map(lambda k: Fraction(k, 1 << 12))


def to_mpfr(q: Fraction, bits: int = 512) -> mpfr:
    return mpfr(q.numerator, bits) / q.denominator


class TestConstruction:
    def test_golden_oracle(self, golden):
        lam = golden.slope
        ctx = gmpy2.context(precision=512)
        assert abs(ctx.sub(ctx.mul(lam, lam), ctx.add(lam, 1))) < 1e-70
        assert golden.critical_value == ctx.div(lam, 2)

    def test_precision_floor(self):
        with pytest.raises(ValueError):
            TentMap(mpfr("1.5"), 32)

    @pytest.mark.parametrize("bad", ["1.0", "0.5", "2.5"])
    def test_slope_range(self, bad):
        with pytest.raises(ValueError):
            make_map(bad)

    def test_resolve_slope_kneading(self):
        slope, hint, label = resolve_slope("kneading:(101)", 256)
        assert hint == EPSeq.periodic("101")
        assert abs(float(slope) - (1 + 5 ** 0.5) / 2) < 1e-12

    def test_resolve_rejects(self):
        with pytest.raises(ValueError):
            resolve_slope("banana")

    def test_parse_point(self):
        x = parse_point("0.3@512")
        assert x.precision == 512
        assert format_point(x).endswith("@512")
        with pytest.raises(ValueError):
            parse_point("1.5")


class TestItineraries:
    def test_golden_critical(self, golden):
        assert critical_itinerary(golden, 6).word == "C10C10"
        res = limit_itinerary(golden, golden.critical_value, Side.LOWER, 9)
        assert res.word == "101101101"

    def test_upper_limit_at_critical_value_rejected(self, golden):
        with pytest.raises(ValueError):
            limit_itinerary(golden, golden.critical_value, Side.UPPER, 5)

    def test_limits_at_c(self, t18):
        lower = limit_itinerary(t18, HALF, Side.LOWER, 6).word
        upper = limit_itinerary(t18, HALF, Side.UPPER, 6).word
        assert lower[0] == "0" and upper[0] == "1"
        assert lower[1:] == upper[1:]

    def test_known_orbit(self, t18):
        assert itinerary_prefix(t18, mpfr("0.3", 256), 4).word == "0110"

    def test_address(self, t18):
        assert address(t18, HALF) is Address.CRIT
        assert address(t18, mpfr("0.2")) is Address.ZERO
        ctx = gmpy2.context(precision=256)
        assert address(t18, ctx.add(HALF, scale2(mpfr(1), -200))) is Address.NEAR_CRIT

    @given(dyadic_slope, dyadic_point, st.integers(1, 30))
    def test_matches_exact_rational_oracle(self, lam, x, n):
        T = TentMap(to_mpfr(lam), 512)
        res = itinerary_prefix(T, to_mpfr(x), n, tol=mpfr(2) ** -400)
        want = exact_itinerary(lam, x, n)
        if "C" in want:
            # after the critical hit both report itin(c)
            p = want.index("C")
            assert res.word[: p + 1] == want[: p + 1]
        else:
            assert res.word == want
            assert res.certified


class TestInverse:
    def test_golden_kneading_point(self, golden):
        enc = itinerary_to_point(golden, EPSeq.periodic("101"), 40)
        assert enc.contains(golden.critical_value)
        assert float(enc.width) < 1e-8

    def test_roundtrip_1_8(self, t18):
        x = mpfr("0.3", 256)
        word = itinerary_prefix(t18, x, 30).word
        assert itinerary_to_point(t18, word, 30).contains(x)

    @given(st.floats(1.05, 1.95), st.floats(0.0, 1.0), st.integers(5, 40))
    def test_roundtrip_property(self, lam, x, n):
        T = TentMap(mpfr(lam, 256), 256)
        top = T.critical_value
        x = mpfr(x, 256)
        assume(x <= top)
        res = itinerary_prefix(T, x, n)
        assume(res.certified and res.crit_hit is None)
        enc = itinerary_to_point(T, res.word, n)
        assert enc.contains(x)
        assert itinerary_prefix(T, enc.mid, n).word == res.word

    def test_interval_of_prefix(self, t18):
        x = mpfr("0.3", 256)
        enc = interval_of_prefix(t18, x, 20)
        assert enc.contains(x)

    @given(st.floats(1.05, 1.999), st.floats(0.0, 1.0))
    def test_preimages(self, lam, y):
        T = TentMap(mpfr(lam, 256), 256)
        y = mpfr(y, 256)
        pres = preimages(T, y)
        if y > T.critical_value:
            assert pres == []
        for p in pres:
            assert abs(T.ctx.sub(evaluate(T, p), y)) < scale2(mpfr(1), -240)

    @given(st.floats(1.05, 1.999), st.floats(0.0, 1.0), st.floats(0.0, 0.2))
    def test_image_interval_encloses(self, lam, a, w):
        T = TentMap(mpfr(lam, 256), 256)
        lo, hi = mpfr(a, 256), mpfr(min(a + w, 1.0), 256)
        ilo, ihi = image_interval(T, lo, hi)
        ctx = gmpy2.context(precision=256, round=gmpy2.RoundDown)
        for t in range(11):
            x = min(ctx.add(lo, ctx.div(ctx.mul(ctx.sub(hi, lo), t), 10)), hi)
            assert ilo <= evaluate(T, x) <= ihi


class TestCriticalReturn:
    def test_golden_period_three(self, golden):
        ret = golden.critical_return
        assert ret.period == 3
        lam = golden.slope
        want = sorted([0.5, float(lam) / 2, float(lam - 1) / 2])
        assert sorted(float(x) for x in ret.orbit) == pytest.approx(want, abs=1e-15)

    def test_no_return_for_generic_slope(self, t18):
        assert find_critical_return(t18, 20) is None

    def test_precision_for_depth_grows(self, t18):
        assert precision_for_depth(t18, 1000) > 1000 * math.log2(1.8)
