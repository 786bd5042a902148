import gmpy2
import pytest
from gmpy2 import mpfr
from hypothesis import assume, given, strategies as st

from conftest import make_map
from oracles import counterexample_slope, superstable_slope
from tentdyn.kneading import (
    Admissibility,
    CriterionStatus,
    KneadingInfo,
    PrecriticalCase,
    admissible,
    as_kneading,
    detect_periodic_critical,
    kneading_prefix,
    map_from_kneading,
    precritical_admissible,
    segment_violation,
    shadowing_criterion,
    signature,
    slope_from_kneading,
)
from tentdyn.symbolic import EPSeq, Order, Parity, parity, plex_compare, plex_compare_words
from tentdyn.tent import TentMap, itinerary_prefix

COUNTER_K = {k: EPSeq("1" + "0" * k, "110") for k in (2, 3)}


@pytest.fixture(scope="module")
def counter2():
    return map_from_kneading(COUNTER_K[2])


class TestKneadingPrefix:
    def test_golden(self, golden):
        K = kneading_prefix(golden, 9)
        assert K.prefix == "101101101"
        assert K.exact == EPSeq.periodic("101") and K.period_m == 3

    def test_generic_numeric(self, t18):
        K = kneading_prefix(t18, 40)
        assert K.exact is None and K.certified and len(K.prefix) == 40

    def test_hint_used(self, counter2):
        K = kneading_prefix(counter2, 200)
        assert K.prefix == COUNTER_K[2].prefix(200)

    def test_odd_period_rejected(self):
        with pytest.raises(ValueError):
            KneadingInfo("100100", EPSeq.periodic("100"), 3)

    def test_detect_needs_period_three(self, golden):
        with pytest.raises(ValueError):
            detect_periodic_critical(golden, 2)
        assert detect_periodic_critical(golden, 10) == 3

    @given(st.floats(1.05, 1.95), st.floats(1.05, 1.95))
    def test_monotone_in_slope(self, a, b):
        assume(abs(a - b) > 1e-6)
        lo, hi = sorted((a, b))
        ka = kneading_prefix(TentMap(mpfr(lo, 256), 256), 30)
        kb = kneading_prefix(TentMap(mpfr(hi, 256), 256), 30)
        assume(ka.certified and kb.certified)
        assert plex_compare_words(ka.prefix, kb.prefix)[0] is not Order.GT


class TestSlopeRecovery:
    @pytest.mark.parametrize("k", [2, 3])
    def test_counterexample_slopes(self, k):
        lam = slope_from_kneading(COUNTER_K[k], 40)
        assert abs(float(lam) - counterexample_slope(k)) < 1e-10

    def test_longer_zero_run_gives_larger_slope(self):
        assert slope_from_kneading(COUNTER_K[3]) > slope_from_kneading(COUNTER_K[2])

    def test_golden_recovered(self, golden):
        lam = slope_from_kneading(EPSeq.periodic("101"), 40)
        assert abs(gmpy2.context(precision=256).sub(lam, golden.slope)) < 1e-30

    @pytest.mark.parametrize("word", ["101", "1001", "10111", "10010", "10001"])
    def test_superstable_oracle(self, word):
        want = superstable_slope(word)
        T = map_from_kneading(EPSeq.periodic(word))
        assert abs(float(T.slope) - want) < 1e-10
        K = kneading_prefix(TentMap(T.slope, 256), 40)
        assert K.exact == EPSeq.periodic(word)
        assert parity(word) is Parity.EVEN


class TestAdmissibility:
    def test_cycle_below_counterexample(self):
        v = admissible(EPSeq.periodic("110"), COUNTER_K[2], 60)
        assert v.status is Admissibility.STRICT

    def test_finite_boundary(self):
        v = admissible("111", COUNTER_K[2], 60)
        assert v.status is Admissibility.BOUNDARY

    def test_fixed_point(self):
        assert admissible(EPSeq.periodic("1"), COUNTER_K[2], 60).status is Admissibility.STRICT

    def test_violation_has_witness(self, golden):
        v = admissible("100", kneading_prefix(golden, 10), 3)
        assert v.status is Admissibility.VIOLATES
        assert v.witness.shift == 0 and v.witness.window == "100"

    def test_kneading_itself_is_boundary(self, golden):
        K = kneading_prefix(golden, 30)
        assert admissible(K.exact, K, 30).status is Admissibility.BOUNDARY

    def test_precritical_word(self, golden):
        K = kneading_prefix(golden, 30)
        assert admissible("01C10C", K, 6).status is not Admissibility.VIOLATES
        assert admissible("01C00", K, 5).status is Admissibility.VIOLATES

    @given(st.floats(1.05, 1.95), st.floats(0.0, 1.0), st.integers(2, 30))
    def test_realized_itineraries_never_violate(self, lam, x, n):
        T = TentMap(mpfr(lam, 256), 256)
        x = mpfr(x, 256)
        assume(x <= T.critical_value)
        res = itinerary_prefix(T, x, n)
        assume(res.certified)
        K = kneading_prefix(T, n + 64)
        assume(K.certified)
        assert admissible(res.word, K, n).status is not Admissibility.VIOLATES

    @given(st.floats(1.05, 1.95), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
    def test_order_consistency(self, lam, a, b):
        T = TentMap(mpfr(lam, 256), 256)
        x, y = sorted((mpfr(a, 256), mpfr(b, 256)))
        assume(x < y)
        ix, iy = itinerary_prefix(T, x, 40), itinerary_prefix(T, y, 40)
        assume(ix.certified and iy.certified and ix.word != iy.word)
        assert plex_compare(ix.word, iy.word, 40) is Order.LT


class TestPrecritical:
    def test_golden_cases(self, golden):
        assert precritical_admissible("000", golden).case is PrecriticalCase.ZEROS
        assert precritical_admissible("10", golden).case is PrecriticalCase.CRITICAL_ORBIT
        v = precritical_admissible("01", golden)
        assert v.admissible and v.case is PrecriticalCase.BELOW_KNEADING
        assert precritical_admissible("11", golden).admissible
        bad = precritical_admissible("100", golden)
        assert not bad.admissible and bad.witness is not None

    def test_rejects_c_in_prefix(self, golden):
        with pytest.raises(ValueError):
            precritical_admissible("0C", golden)


class TestSegmentsAndSignature:
    def test_segment_violation_golden(self, golden):
        K = kneading_prefix(golden, 20)
        r = segment_violation(EPSeq("100", "101"), K, 30)
        assert r == "100"
        assert plex_compare_words(r, K.prefix[: len(r)])[0] is Order.GT
        assert segment_violation(EPSeq.periodic("110"), K, 30) is None

    @given(st.text(alphabet="01", min_size=1, max_size=30))
    def test_signature_oracle(self, word):
        rho = signature(word, len(word) + 1)
        for n, r in enumerate(rho):
            assert r == -((-1) ** word[:n].count("1"))

    def test_signature_golden(self, golden):
        assert signature(kneading_prefix(golden, 10), 8) == [-1, 1, 1, -1, 1, 1, -1, 1]


class TestShadowingCriterion:
    def test_golden_exact_return(self, golden):
        r = shadowing_criterion(golden, 0.1, 100)
        assert r.status is CriterionStatus.SATISFIED and r.witness == 3 and r.clause == "exact_return"

    def test_generic_signature_clause(self, t18):
        r = shadowing_criterion(t18, 0.05, 1000)
        assert r.status is CriterionStatus.SATISFIED and r.clause == "signature"
        assert r.witness == 26 and r.distance < 0.05

    def test_counterexample_not_found(self, counter2):
        r = shadowing_criterion(counter2, 0.01, 10_000)
        assert r.status is CriterionStatus.NOT_FOUND

    def test_bad_arguments(self, golden):
        with pytest.raises(ValueError):
            shadowing_criterion(golden, 0, 10)

    def test_as_kneading_periodic(self):
        assert as_kneading(EPSeq.periodic("1001")).period_m == 4
