from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from closedattr.geometry import AmbientSpace, SphereArc
from closedattr.semiflow import (
    COMPLETED,
    LEFT_DOMAIN,
    STEP_LIMIT,
    LeftDomainError,
    ReachViolationError,
    SemiflowSystem,
    StepLimitError,
    builtin_system,
    check_semigroup,
    distance_gradient,
    flow_at,
    flow_batch,
    integrate,
    simulate_batch,
    simulate_chunks,
    system_from_dict,
    time_grid,
)


def radial_oracle(x, t):
    """counterS1 in polar form: rho' = -2(rho - 1), angle fixed."""
    x = np.asarray(x, float)
    rho = np.linalg.norm(x)
    rho_t = 1.0 + (rho - 1.0) * math.exp(-2.0 * t)
    return x / rho * rho_t


class TestTimeGrid:
    def test_last_step_is_shortened(self):
        t = time_grid(0.25, 0.1)
        assert t[-1] == 0.25
        assert np.allclose(np.diff(t), [0.1, 0.1, 0.05])

    def test_exact_multiple(self):
        assert len(time_grid(1.0, 0.1)) == 11

    def test_zero_and_negative(self):
        assert list(time_grid(0.0, 0.1)) == [0.0]
        with pytest.raises(ValueError):
            time_grid(-1.0, 0.1)


class TestIntegration:
    def test_rk4_matches_radial_solution(self):
        sys = builtin_system("counterS1").integrated()
        x = [0.3, -1.4]
        assert np.allclose(flow_at(sys, x, 1.3), radial_oracle(x, 1.3), atol=1e-7)

    def test_closed_forms_agree_with_rk4(self):
        for name in ("nonuniform_strip", "xaxis_contraction"):
            sys = builtin_system(name)
            x = [1.5, -0.7]
            assert np.allclose(flow_at(sys, x, 2.0), flow_at(sys.integrated(), x, 2.0), atol=1e-8)

    def test_identity_at_time_zero_is_bitwise(self):
        sys = builtin_system("counterS1")
        x = np.array([0.123456789, 2.0])
        assert np.array_equal(flow_at(sys, x, 0.0), x)

    def test_start_on_puncture_raises(self):
        with pytest.raises(LeftDomainError):
            flow_at(builtin_system("counterS1"), [1.0, 0.0], 1.0)

    def test_orbit_into_puncture_is_truncated(self):
        sys = builtin_system("counterS1")
        traj = integrate(sys, [1.5, 0.0], 10.0)
        assert traj.termination == LEFT_DOMAIN
        with pytest.raises(LeftDomainError) as exc:
            flow_at(sys, [1.5, 0.0], 10.0)
        assert exc.value.time < 10.0

    def test_step_limit(self):
        sys = SemiflowSystem(AmbientSpace(1), rhs=lambda X: -X, h=0.1, max_steps=5)
        assert integrate(sys, [1.0], 2.0).termination == STEP_LIMIT
        with pytest.raises(StepLimitError):
            flow_at(sys, [1.0], 2.0)

    def test_trajectory_csv_rows(self):
        traj = integrate(builtin_system("xaxis_contraction"), [1.0, 1.0], 0.05, h=0.01)
        rows = traj.to_csv_rows()
        assert traj.termination == COMPLETED
        assert len(rows) == 6 and len(rows[0]) == 3
        assert rows[-1][2] == pytest.approx(math.exp(-0.05))


class TestBatches:
    def test_flow_batch_per_row_times(self):
        sys = builtin_system("counterS1").integrated()
        X = np.array([[0.5, 0.5], [2.0, 1.0], [0.0, -3.0]])
        T = np.array([0.0, 0.37, 1.21])
        Y, ok = flow_batch(sys, X, T)
        assert ok.all()
        assert np.array_equal(Y[0], X[0])
        for x, t, y in zip(X[1:], T[1:], Y[1:]):
            assert np.allclose(y, radial_oracle(x, t), atol=1e-7)

    def test_flow_batch_marks_domain_exit(self):
        sys = builtin_system("counterS1").integrated()
        Y, ok = flow_batch(sys, [[1.5, 0.0], [0.0, 2.0]], 10.0)
        assert list(ok) == [False, True]
        assert np.isnan(Y[0]).all()

    def test_chunks_match_integrate(self):
        sys = builtin_system("counterS1")
        X0 = np.array([[0.2, 0.9], [-1.7, 0.4]])
        stacked = np.concatenate([c.states for c in simulate_chunks(sys, X0, 1.0, 0.05, chunk=7)])
        for i, x in enumerate(X0):
            assert np.allclose(stacked[:, i], integrate(sys, x, 1.0, 0.05).states)

    def test_closed_form_chunks(self):
        sys = builtin_system("nonuniform_strip")
        X0 = np.array([[0.0, 1.0], [2.0, -0.5]])
        chunks = list(simulate_chunks(sys, X0, 1.0, 0.1, chunk=4))
        t = np.concatenate([c.times for c in chunks])
        S = np.concatenate([c.states for c in chunks])
        expect = X0[None, :, 1] * np.exp(-t[:, None] / (1 + X0[None, :, 0] ** 2))
        assert np.allclose(S[:, :, 1], expect)

    def test_observer_sees_every_step(self):
        seen = []
        simulate_batch(builtin_system("xaxis_contraction"), [[0.0, 1.0]], 0.3, 0.1, observe=lambda k, t, X, a: seen.append(k))
        assert seen == [0, 1, 2, 3]


class TestSemigroup:
    def test_closed_form_is_exact(self):
        sys = builtin_system("nonuniform_strip")
        assert check_semigroup(sys, [1.0, 1.0], 0.37, 0.59) < 1e-14

    def test_fourth_order_residual_scaling(self):
        sys = builtin_system("counterS1").integrated()
        res = [check_semigroup(sys, [0.3, 1.8], 0.37, 0.59, h) for h in (0.2, 0.1, 0.05)]
        assert res[0] / res[1] >= 12.0
        assert res[1] / res[2] >= 12.0


@given(t=st.floats(0.0, 2.0), s=st.floats(0.0, 2.0), x=st.floats(-3, 3), y=st.floats(0.1, 3))
def test_strip_semigroup_property(t, s, x, y):
    sys = builtin_system("nonuniform_strip")
    two = flow_at(sys, flow_at(sys, [x, y], t), s)
    assert np.allclose(two, flow_at(sys, [x, y], t + s), rtol=1e-12, atol=1e-14)


class TestConfigs:
    def test_polynomial_field(self):
        cfg = {
            "polynomial": {
                "dimension": 2,
                "components": [[], [{"coef": -1.0, "powers": [0, 1]}]],
            },
            "h": 0.01,
        }
        sys = system_from_dict(cfg)
        assert np.allclose(flow_at(sys, [3.0, 1.0], 1.0), [3.0, math.exp(-1.0)], atol=1e-9)

    def test_rational_field(self):
        cfg = {
            "polynomial": {
                "dimension": 2,
                "components": [[], [{"coef": -1.0, "powers": [0, 1]}]],
                "denominators": [[{"coef": 1.0, "powers": [0, 0]}], [{"coef": 1.0, "powers": [0, 0]}, {"coef": 1.0, "powers": [2, 0]}]],
            }
        }
        sys = system_from_dict(cfg)
        strip = builtin_system("nonuniform_strip")
        assert np.allclose(flow_at(sys, [1.0, 1.0], 1.0), flow_at(strip, [1.0, 1.0], 1.0), atol=1e-8)

    def test_builtin_round_trip(self):
        sys = builtin_system("counterS1", h=0.02)
        again = system_from_dict(sys.to_dict())
        assert again.h == 0.02 and again.space.punctures == sys.space.punctures

    def test_unknown_builtin(self):
        with pytest.raises(ValueError):
            builtin_system("lorenz")


class TestDistanceFlow:
    def test_gradient_has_unit_norm_off_the_set(self):
        G = distance_gradient(SphereArc.circle(), [[1.5, 0.2], [0.3, -0.1], [1.0 + 1e-7, 0.0]])
        assert np.allclose(np.linalg.norm(G, axis=1), 1.0, atol=1e-6)

    def test_reach_is_certified(self):
        sys = builtin_system("distance_flow", A=SphereArc.circle(), r=0.9)
        y = flow_at(sys, [1.5, 0.0], 0.25, h=1e-3)
        assert np.linalg.norm(y) == pytest.approx(1.25, abs=1e-6)

    def test_radius_past_reach_is_refused(self):
        with pytest.raises(ReachViolationError):
            builtin_system("distance_flow", A=SphereArc.circle(), r=1.5)
