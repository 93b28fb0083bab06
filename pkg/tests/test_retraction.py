from __future__ import annotations

import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from closedattr.geometry import AffineSubspace, FinitePointSet, SphereArc, grid_points
from closedattr.retraction import (
    CHECKS,
    SeamMismatchError,
    concatenate_homotopies,
    distance_flow_check,
    distortion,
    hitting_time,
    hitting_times,
    identity_homotopy,
    reach_retract_homotopy,
    weak_retract_homotopy,
)
from closedattr.semiflow import ReachViolationError, builtin_system
from closedattr.stability import squared_distance

AXIS = AffineSubspace.coordinate_axis()


def V_axis(X):
    return np.square(X[:, 1])


class TestHittingTimes:
    @pytest.mark.parametrize("q", [10.0, 1e2, 1e4])
    def test_contraction_matches_log_formula(self, q):
        ht = hitting_time(builtin_system("xaxis_contraction"), V_axis, 1.0 / q, [2.0, 1.0], 20.0)
        assert ht.value == pytest.approx(0.5 * math.log(q), abs=1e-4)
        assert not ht.censored

    def test_counter_s1_radial_oracle(self):
        # V = (rho - 1)^2 decays like exp(-4t)
        sys = builtin_system("counterS1")
        ht = hitting_time(sys, squared_distance(SphereArc.circle()), 1e-4, [0.0, 2.0], 20.0)
        assert ht.value == pytest.approx(0.25 * math.log(1e4), abs=1e-4)

    def test_inside_sublevel_is_zero(self):
        assert hitting_time(builtin_system("xaxis_contraction"), V_axis, 0.5, [0.0, 0.1], 5.0).value == 0.0

    def test_censored(self):
        res = hitting_times(builtin_system("constant"), V_axis, 0.01, [[0.0, 1.0]], 2.0)
        assert res.censored[0] and math.isinf(res.times[0])
        assert res.last_value[0] == 1.0

    def test_level_must_be_positive(self):
        with pytest.raises(ValueError):
            hitting_times(builtin_system("constant"), V_axis, 0.0, [[0.0, 1.0]], 1.0)

    @given(y=st.floats(0.2, 5.0), h1=st.floats(0.5, 3.0))
    def test_longer_horizon_never_shortens(self, y, h1):
        sys = builtin_system("xaxis_contraction")
        a = hitting_time(sys, V_axis, 0.01, [0.0, y], h1)
        b = hitting_time(sys, V_axis, 0.01, [0.0, y], h1 + 2.0)
        if not a.censored:
            assert b.value == pytest.approx(a.value)
        else:
            assert b.censored or b.value >= h1 - sys.h


class TestWeakRetract:
    def test_contraction_passes_every_check(self):
        G = grid_points([(-5, 5), (-3, 3)], 0.5)
        probe = weak_retract_homotopy(builtin_system("xaxis_contraction"), V_axis, 0.01, G, 20.0, tol=1e-6)
        assert probe.passed
        assert set(CHECKS) <= set(probe.results)
        assert probe.diagnostics["V_nonincreasing_in_s"]

    def test_counter_s1_passes(self):
        G = grid_points([(-2, 2), (-2, 2)], 0.25)
        G = G[(np.linalg.norm(G, axis=1) > 0.2) & (np.linalg.norm(G - [1.0, 0.0], axis=1) > 0.2)]
        probe = weak_retract_homotopy(builtin_system("counterS1"), squared_distance(SphereArc.circle()), 0.01, G, 10.0)
        assert probe.passed

    def test_short_horizon_is_incomplete(self):
        probe = weak_retract_homotopy(builtin_system("xaxis_contraction"), V_axis, 1e-6, [[0.0, 3.0], [0.0, 0.0]], 1.0)
        assert len(probe.incomplete) == 1
        assert not probe.passed

    def test_evaluate_matches_stored_values(self):
        G = np.array([[0.0, 1.0], [1.0, -2.0]])
        probe = weak_retract_homotopy(builtin_system("xaxis_contraction"), V_axis, 0.01, G, 20.0, s_values=[0, 0.5, 1])
        assert np.allclose(probe.evaluate(G, 0.5), probe.values[1])

    def test_trace_csv(self, tmp_path):
        probe = weak_retract_homotopy(builtin_system("xaxis_contraction"), V_axis, 0.01, [[0.0, 1.0]], 20.0, s_values=[0, 1])
        path = tmp_path / "trace.csv"
        probe.write_trace_csv(str(path))
        rows = list(csv.reader(path.open()))
        assert rows[0] == ["x1", "x2", "s", "H1", "H2"]
        assert len(rows) == 3


class TestReachRetract:
    def test_contraction_identity_holds_with_equality(self):
        k = np.arange(50)
        rad = 0.02 + 1.96 * k / 49
        ang = 2 * math.pi * ((7 * k) % 50) / 50
        G = np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=1)
        probe = reach_retract_homotopy(SphereArc.circle(), 1.0, G)
        assert len(probe.s_values) == 11
        assert probe.diagnostics["contraction_equality_error"] <= 1e-9
        assert probe.passed and probe.results["contraction"].passed

    def test_grid_outside_tube_is_rejected(self):
        with pytest.raises(ValueError):
            reach_retract_homotopy(SphereArc.circle(), 0.5, [[3.0, 0.0]])

    def test_ambiguous_projection_is_rejected(self):
        A = FinitePointSet(np.array([[-1.0, 0.0], [1.0, 0.0]]))
        with pytest.raises(ReachViolationError):
            reach_retract_homotopy(A, 2.0, [[0.0, 0.5]])

    @given(x=st.floats(-3, 3), y=st.floats(-3, 3), s=st.floats(0, 1))
    def test_line_retraction_is_affine(self, x, y, s):
        probe = reach_retract_homotopy(AXIS, 10.0, [[x, y]], s_values=[0, 1])
        assert np.allclose(probe.evaluate(np.array([[x, y]]), s), [[x, (1 - s) * y]], atol=1e-12)


class TestConcatenation:
    def test_weak_then_reach(self):
        G = grid_points([(-2, 2), (-0.5, 0.5)], 0.25)
        sys = builtin_system("xaxis_contraction")
        comp = concatenate_homotopies(weak_retract_homotopy(sys, V_axis, 0.01, G, 20.0), reach_retract_homotopy(AXIS, 1.0, G))
        assert comp.results["seam"].value == 0.0
        assert comp.results["endpoint_in_target"].passed
        assert np.allclose(comp.evaluate(G, 1.0)[:, 1], 0.0)

    def test_identity_seam(self):
        G = grid_points([(-1, 1), (-1, 1)], 0.5)
        comp = concatenate_homotopies(identity_homotopy(G), reach_retract_homotopy(AXIS, 5.0, G))
        assert comp.results["seam"].passed

    def test_seam_mismatch(self):
        G = np.array([[0.0, 0.5]])
        bad = identity_homotopy(G)
        bad.domain = lambda X: np.ones(len(X), dtype=bool)
        other = identity_homotopy(G)
        other.evaluate = lambda X, s: X + 1.0
        with pytest.raises(SeamMismatchError):
            concatenate_homotopies(bad, other)


class TestDistortion:
    def test_identity_has_unit_distortion(self):
        G = grid_points([(0, 1), (0, 1)], 0.1)
        assert distortion(G, G[None]) == pytest.approx(1.0)

    def test_jump_is_detected(self):
        G = grid_points([(0, 1), (0, 1)], 0.01)
        jump = G.copy()
        jump[G[:, 0] > 0.5, 0] += 100.0
        assert distortion(G, jump[None]) > 1e3


class TestDistanceFlow:
    def test_circle_decays_linearly(self):
        rep = distance_flow_check(SphereArc.circle(), 1.0, [1.8, 0.0], h=1e-3, tol=1e-4)
        assert rep.passed
        assert rep.max_decay_error < 1e-4
        assert np.allclose(rep.distances, np.maximum(0.8 - rep.times, 0), atol=1e-4)

    def test_inside_the_circle(self):
        assert distance_flow_check(SphereArc.circle(), 1.0, [0.0, 0.4], h=1e-3).passed

    def test_start_must_be_in_tube(self):
        with pytest.raises(ValueError):
            distance_flow_check(SphereArc.circle(), 0.5, [2.0, 0.0])

    def test_crossing_the_medial_axis_is_caught(self):
        A = FinitePointSet(np.array([[-1.0, 0.0], [1.0, 0.0]]))
        with pytest.raises(ReachViolationError):
            distance_flow_check(A, 3.0, [0.0, 0.5])
