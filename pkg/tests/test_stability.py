from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from closedattr.geometry import AffineSubspace, SphereArc, grid_points
from closedattr.semiflow import builtin_system, system_from_dict
from closedattr.stability import (
    INCONCLUSIVE,
    NONUNIFORM,
    UNIFORM,
    build_default_lyapunov,
    build_ndr_function,
    certify_stability,
    estimate_delta,
    estimate_T,
    growth_verdict,
    settling_times,
)

AXIS = AffineSubspace.coordinate_axis()
WINDOWS = [[(-w, w), (-1.0, 1.0)] for w in (1, 2, 4, 8)]


def repelling_axis():
    return system_from_dict(
        {"polynomial": {"dimension": 2, "components": [[], [{"coef": 1.0, "powers": [0, 1]}]]}, "h": 0.01}
    )


class TestGrowthRule:
    def test_three_growing_ratios(self):
        verdict, _ = growth_verdict([1, 2, 4, 8], [False] * 4)
        assert verdict == NONUNIFORM

    def test_two_growing_ratios_are_not_enough(self):
        verdict, _ = growth_verdict([1, 2, 4, 4.1], [False] * 4)
        assert verdict == UNIFORM

    def test_flat_sups(self):
        assert growth_verdict([2.3, 2.3, 2.3, 2.3], [False] * 4)[0] == UNIFORM

    def test_censoring_blocks_uniform(self):
        assert growth_verdict([5, 5, 5, 5], [False, False, False, True])[0] == INCONCLUSIVE


class TestSettling:
    def test_contraction_settles_in_ln10(self):
        sys = builtin_system("xaxis_contraction")
        T, cens, lost = settling_times(sys, AXIS, np.array([[0.0, 1.0], [5.0, -1.0]]), 0.1, 10.0)
        assert not cens.any() and not lost.any()
        assert np.all(np.abs(T - math.log(10)) <= sys.h)

    def test_strip_settling_grows_with_x(self):
        sys = builtin_system("nonuniform_strip")
        starts = np.array([[x, 1.0] for x in (0.0, 1.0, 2.0)])
        T, _, _ = settling_times(sys, AXIS, starts, 0.1, 50.0)
        oracle = (1 + starts[:, 0] ** 2) * math.log(10)
        assert np.all(np.abs(T - oracle) <= 2 * sys.h)

    def test_never_settling_is_censored(self):
        T, cens, _ = settling_times(builtin_system("constant"), AXIS, np.array([[0.0, 0.5]]), 0.1, 3.0)
        assert cens[0] and T[0] == 3.0

    @given(h1=st.floats(1.0, 5.0), extra=st.floats(0.5, 5.0))
    def test_censored_time_is_monotone_in_horizon(self, h1, extra):
        sys = builtin_system("nonuniform_strip")
        X = np.array([[3.0, 1.0], [0.0, 0.5]])
        a, _, _ = settling_times(sys, AXIS, X, 0.1, h1)
        b, _, _ = settling_times(sys, AXIS, X, 0.1, h1 + extra)
        assert np.all(b >= a - 1e-12)

    def test_report_lookup_and_csv(self):
        rep = estimate_T(builtin_system("xaxis_contraction"), AXIS, 1.0, 0.1, WINDOWS[:2], 10.0, budget=20, extra_points=[(0.5, 1.0)])
        T, cens = rep.settling_time_of((0.5, 1.0))
        assert T == pytest.approx(math.log(10), abs=0.01) and not cens
        assert len(rep.csv_rows()) == 2 * 20 + 2
        with pytest.raises(KeyError):
            rep.settling_time_of((9.0, 9.0))

    def test_eps_must_be_below_alpha(self):
        with pytest.raises(ValueError):
            estimate_T(builtin_system("xaxis_contraction"), AXIS, 0.1, 0.2, WINDOWS, 5.0)

    def test_uniform_and_inconclusive_verdicts(self):
        assert estimate_T(builtin_system("xaxis_contraction"), AXIS, 1.0, 0.1, WINDOWS, 10.0, budget=50).verdict == UNIFORM
        assert estimate_T(builtin_system("constant"), AXIS, 1.0, 0.1, WINDOWS, 2.0, budget=50).verdict == INCONCLUSIVE


class TestDelta:
    def test_strip_is_uniformly_stable(self):
        res = estimate_delta(builtin_system("nonuniform_strip"), AXIS, 0.5, 10.0, [(-10, 10), (-2, 2)], budget=200)
        assert res.delta == 0.5 and res.witness is None

    def test_repelling_axis_has_no_delta(self):
        res = estimate_delta(repelling_axis(), AXIS, 0.1, 10.0, [(-1, 1), (-1, 1)], budget=50, bisection_steps=6)
        assert res.delta is None
        assert res.witness.distance >= 0.1

    def test_counter_s1_reports_domain_exits(self):
        res = estimate_delta(builtin_system("counterS1"), SphereArc.circle(), 0.3, 20.0, budget=300)
        assert res.delta == pytest.approx(0.3)

    @given(e1=st.floats(0.05, 1.0), e2=st.floats(0.05, 1.0))
    def test_delta_is_monotone_in_eps(self, e1, e2):
        sys = builtin_system("xaxis_contraction")
        lo, hi = sorted((e1, e2))
        d1 = estimate_delta(sys, AXIS, lo, 5.0, [(-2, 2), (-2, 2)], budget=30).delta
        d2 = estimate_delta(sys, AXIS, hi, 5.0, [(-2, 2), (-2, 2)], budget=30).delta
        assert d2 >= d1

    def test_certify_report(self, tmp_path):
        rep = certify_stability(builtin_system("xaxis_contraction"), AXIS, [0.1, 0.5], 1.0, WINDOWS, 10.0, budget=30)
        d = rep.to_dict()
        assert d["uniformity_verdict"] == UNIFORM
        assert [x["delta"] for x in d["delta_of_eps"]] == [0.1, 0.5]
        rep.write_settling_csv(str(tmp_path / "s.csv"))
        assert (tmp_path / "s.csv").read_text().startswith("eps,window,x,T,censored")


@pytest.fixture(scope="module")
def counter():
    G = grid_points([(-2, 2), (-2, 2)], 0.25)
    G = G[(np.linalg.norm(G, axis=1) > 0.2) & (np.linalg.norm(G - [1.0, 0.0], axis=1) > 0.2)]
    return build_default_lyapunov(builtin_system("counterS1"), SphereArc.circle(), G, 5.0), G


class TestLyapunov:
    def test_no_decrease_violations(self, counter):
        assert counter[0].decrease_violations == []

    def test_envelopes_bracket_squared_distance(self, counter):
        data = counter[0]
        assert np.allclose(data.lower, data.radii**2, atol=1e-8)
        assert np.all(np.diff(data.upper) >= 0)
        assert data.upper_inverse(1.0) == pytest.approx(1.0, abs=1e-6)

    def test_repelling_axis_violates_decrease(self):
        data = build_default_lyapunov(repelling_axis(), AXIS, [[0.0, 0.5]], 1.0, window=[(-1, 1), (-3, 3)])
        assert len(data.decrease_violations) == 1

    def test_ndr_from_lyapunov(self, counter):
        data, G = counter
        ndr = build_ndr_function(data, samples=np.vstack([G, [[0.0, 1.0]]]))
        assert ndr.kind == "lyapunov"
        assert all(ndr.diagnostics[k] for k in ("in_unit_interval", "zero_set_matches", "below_one_on_neighbourhood"))

    def test_metric_ndr(self):
        ndr = build_ndr_function((SphereArc.circle(), 0.5), samples=[[1.0, 0.0], [1.2, 0.0], [3.0, 0.0]])
        assert np.allclose(ndr([[1.0, 0.0], [1.2, 0.0], [3.0, 0.0]]), [0.0, 0.4, 1.0])

    @given(r1=st.floats(0, 30), r2=st.floats(0, 30), angle=st.floats(0, 6.28))
    def test_u_preserves_order_of_distance(self, r1, r2, angle):
        data = build_default_lyapunov(builtin_system("counterS1"), SphereArc.circle(), np.zeros((0, 2)), 1.0, shell_count=20)
        ndr = build_ndr_function(data)
        e = np.array([math.cos(angle), math.sin(angle)])
        u1, u2 = ndr(np.array([(1 + r1) * e, (1 + r2) * e]))
        assert (u1 <= u2) == (r1 <= r2) or u1 == u2
