import itertools
import warnings

import gmpy2
import numpy as np
import pytest
from gmpy2 import mpfr
from hypothesis import given, settings, strategies as st

from conftest import make_map
from tentdyn import omega as omega_mod
from tentdyn.chains import (
    ChainStatus,
    FiniteNet,
    ICTStatus,
    PreconditionError,
    build_chain_graph,
    core_net,
    is_chain_transitive,
    verify_pseudo_orbit,
)
from tentdyn.kneading import Admissibility, admissible, kneading_prefix, map_from_kneading
from tentdyn.symbolic import EPSeq, Order, Parity, parity, plex_compare_words
from tentdyn.tent import HALF, TentMap, evaluate, itinerary_to_point, orbit_prefix
from tentdyn.omega import (
    CaseVerdict,
    CriticalSide,
    MembershipStatus,
    build_counterexample,
    construct_omega_point,
    critical_data,
    extend_ict,
    extension_pieces,
    non_omega_certificate,
    omega_approx,
    omega_membership,
    precritical_set,
)


@pytest.fixture(scope="module")
def counter2():
    return build_counterexample(2)


def cycle_points(T):
    return sorted(float(itinerary_to_point(T, EPSeq.periodic(w), 80).mid) for w in ("110", "101", "011"))


class TestOmegaApprox:
    def test_fixed_point_zero(self, t18):
        assert list(omega_approx(t18, mpfr(0), 10, 100).net.values) == [0.0]

    def test_golden_critical_orbit(self, golden):
        lam = float(golden.slope)
        got = sorted(omega_approx(golden, HALF, 1000, 10_000).net.values)
        assert got == pytest.approx(sorted([0.5, lam / 2, (lam - 1) / 2]), abs=1e-12)

    def test_counterexample_critical_orbit(self, counter2):
        T = counter2.T
        got = sorted(omega_approx(T, HALF, 1000, 10_000).net.values)
        assert got == pytest.approx(cycle_points(T), abs=1e-12)

    def test_numeric_path_agrees(self, counter2):
        # the same orbit computed numerically from T(c); the slope carries 256
        # bits, so the repelling cycle is followed for about 300 iterates
        T = counter2.T
        got = omega_approx(T, T.critical_value, 50, 150, 1e-3).net.values
        assert sorted(got) == pytest.approx(cycle_points(T), abs=1e-6)

    @given(st.floats(1.1, 1.95), st.floats(0.0, 1.0), st.floats(1e-3, 0.1))
    @settings(max_examples=25)
    def test_cluster_separation(self, lam, x, tol):
        T = TentMap(mpfr(lam, 256), 256)
        net = omega_approx(T, mpfr(x, 256), 50, 300, tol).net
        assert np.all(np.diff(net.values) >= tol / 2 - 1e-15)

    def test_truncation_warns(self, t18, monkeypatch):
        monkeypatch.setattr(omega_mod, "MAX_ORBIT_BITS", 600)
        with pytest.warns(UserWarning):
            oa = omega_approx(t18, mpfr("0.3", 256), 100, 10_000)
        assert oa.truncated and oa.samples < 10_000

    def test_bad_counts(self, t18):
        with pytest.raises(ValueError):
            omega_approx(t18, HALF, 0, 10)


class TestMembership:
    def test_golden_zero_unsupported(self, golden):
        v = omega_membership(golden, HALF, mpfr(0))
        assert v.status is MembershipStatus.UNSUPPORTED and v.pattern == "00" and v.preperiodic

    def test_golden_orbit_point_supported(self, golden):
        assert omega_membership(golden, HALF, golden.critical_value).status is MembershipStatus.SUPPORTED

    def test_counterexample_cycle_supported(self, counter2):
        T = counter2.T
        y = itinerary_to_point(T, EPSeq.periodic("110"), 100)
        assert omega_membership(T, HALF, y).status is MembershipStatus.SUPPORTED

    def test_orbit_point_of_generic_orbit(self, t18):
        x = mpfr("0.3", 256)
        Tw = t18.with_precision(2048)
        y = orbit_prefix(Tw, x, 6)[-1]
        v = omega_membership(t18, x, y, depth=10, horizon=2000)
        assert v.status is MembershipStatus.SUPPORTED and not v.preperiodic


class TestCounterexample:
    def test_truncation_zero_contains_c(self):
        ce = build_counterexample(2, jmax=0, nmax=0)
        assert 0.5 in ce.net.values
        assert len(ce.net) == 4

    @pytest.mark.parametrize("k", [2, 3])
    def test_ict_at_scales(self, k):
        ce = build_counterexample(k)
        for d in (0.05, 0.02, 0.01):
            assert is_chain_transitive(build_chain_graph(ce.T, ce.net, d)).status is ICTStatus.YES
        assert ce.provenance["resolution"] < 0.01

    def test_sequences_admissible(self, counter2):
        K = kneading_prefix(counter2.T, 80)
        for s in counter2.sequences:
            assert admissible(s, K, 60).status is not Admissibility.VIOLATES

    def test_needs_k_two(self):
        with pytest.raises(ValueError):
            build_counterexample(1)


class TestCertificate:
    @pytest.mark.parametrize("k", [2, 3])
    def test_verdict_pattern(self, k):
        cert = non_omega_certificate(k)
        by_h = {c.H: c for c in cert.cases}
        assert set(by_h) == {"".join(w) for w in itertools.product("01", repeat=3)}
        for h, c in by_h.items():
            if h == "110":
                assert c.verdict is CaseVerdict.EXCLUDED_B
            elif h[0] == "0":
                assert c.verdict is CaseVerdict.PARITY_VIOLATION
            else:
                assert c.verdict is CaseVerdict.NOT_IN_L_LANGUAGE

    def test_parity_witness_replays(self):
        cert = non_omega_certificate(2, 40)
        K = EPSeq("100", "110")
        for c in cert.cases:
            if c.verdict is CaseVerdict.PARITY_VIOLATION:
                order, d = plex_compare_words(c.window, K.prefix(len(c.window)))
                assert order is Order.GT and d == c.shift
                assert parity(c.window[:d]) is Parity.ODD

    def test_window_depth_floor(self):
        with pytest.raises(ValueError):
            non_omega_certificate(2, 5)


class TestCriticalData:
    def test_golden(self, golden):
        cd = critical_data(golden)
        ctx = gmpy2.context(precision=256)
        lam = golden.slope
        want = ctx.div(ctx.sub(2, lam), ctx.mul(2, ctx.pow(lam, 3)))
        assert cd.period_m == 3
        assert abs(float(cd.delta_T) - float(want)) < 1e-15
        assert abs(float(cd.delta_T) - 0.04509) < 1e-5
        assert cd.accessible is CriticalSide.LEFT_OF_C
        assert cd.landing is CriticalSide.RIGHT_OF_C

    @pytest.mark.parametrize("word", ["101", "1001", "10111", "10010", "10001"])
    def test_side_agrees_with_parity(self, word):
        T = TentMap(map_from_kneading(EPSeq.periodic(word)).slope, 256)
        cd = critical_data(T)
        odd = parity(word[:-1]) is Parity.ODD
        assert (cd.landing is CriticalSide.RIGHT_OF_C) == odd
        assert 0 < cd.delta_T

    def test_generic_slope_rejected(self, t18):
        with pytest.raises(PreconditionError):
            critical_data(t18)


class TestPrecritical:
    def test_golden_level_three(self, golden):
        ps = precritical_set(golden, 3)
        assert ps.levels == 6
        assert ps.points[0].value < ps.points[-1].value
        Tw = golden.with_precision(512)
        for p in ps.points:
            x = p.value
            hits = []
            for i in range(p.n_p + 1):
                hits.append(abs(float(x) - 0.5) < 1e-60)
                x = evaluate(Tw, x)
            assert hits[-1] and not any(hits[:-1])
        vals = {float(p.value) for p in ps.points}
        for o in golden.critical_return.orbit:
            assert float(o) in vals

    def test_cap(self, t18):
        ps = precritical_set(t18, 20, cap=50)
        assert ps.truncated and len(ps.points) == 50


class TestExtension:
    def test_orbit_is_isolated(self, golden):
        D = FiniteNet(golden.critical_return.orbit, 0.0)
        with pytest.raises(PreconditionError, match="isolated"):
            extend_ict(golden, D, 1)

    def test_core_pieces(self, golden):
        cd = critical_data(golden)
        D = core_net(golden, 0.02).refined(0.0005)
        n = 2
        pieces = extension_pieces(golden, D, n)
        assert pieces
        lam = float(golden.slope)
        rc = float(cd.delta_T) / 2 ** n
        ps = {p.value: p for p in precritical_set(golden, n).points}
        for pv, pts in pieces.items():
            p = ps[pv]
            for x in pts:
                assert abs(float(x) - float(pv)) <= rc / lam ** p.n_p + 1e-12
                y = x
                for _ in range(p.n_p):
                    y = evaluate(golden, y)
                assert 0.5 < float(y) <= 0.5 + rc + 1e-12
                assert D.nearest_distance([float(y)])[0] < 1e-12
        Dn = extend_ict(golden, D, n)
        assert len(Dn) > len(D)


class TestConstruction:
    @pytest.fixture(scope="class")
    @staticmethod
    def trace(golden):
        return construct_omega_point(golden, core_net(golden, 0.02), 2, burn_in=200, samples=1000)

    def test_soundness(self, golden, trace):
        assert trace.case == "constructed"
        for r in trace.stages:
            assert r.epsilon < 2.0 ** -r.n
            assert r.eta < r.epsilon
            assert r.J >= r.q + 1
            assert verify_pseudo_orbit(golden, r.c_orbit, r.eta).status is ChainStatus.VALID
            Tw = golden.with_precision(4096)
            x = r.c_enclosure.mid
            for p in r.c_orbit:
                assert abs(float(x) - float(p)) <= r.epsilon + 1e-12
                x = evaluate(Tw, x)
        assert [r.epsilon for r in trace.stages] == sorted((r.epsilon for r in trace.stages), reverse=True)

    def test_gamma(self, golden, trace):
        assert trace.admissibility.status is not Admissibility.VIOLATES
        assert trace.segment_checks > 0 and trace.segment_failures == 0
        assert len(trace.gamma_prefix) >= 1200

    def test_periodic_orbit_short_circuit(self, golden):
        D = FiniteNet(golden.critical_return.orbit, 0.0)
        tr = construct_omega_point(golden, D, 3)
        assert tr.case == "periodic_orbit" and tr.y.mid == HALF

    def test_no_critical_point(self, golden):
        ctx = gmpy2.context(precision=256)
        p = ctx.div(golden.slope, ctx.add(1, golden.slope))
        tr = construct_omega_point(golden, FiniteNet((p,), 0.0), 3)
        assert tr.case == "no_critical_point"

    def test_not_chain_transitive(self, golden):
        ctx = gmpy2.context(precision=256)
        p = ctx.div(golden.slope, ctx.add(1, golden.slope))
        D = FiniteNet((p, golden.critical_value), 0.0)
        with pytest.raises(PreconditionError):
            construct_omega_point(golden, D, 3)
