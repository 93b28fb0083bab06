"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary
(and immediately, when run with -s).  Run just this file with

    pytest tests/test_acceptance.py -v
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from closedattr.cuts import CutFeasibilityProblem, derive_cut_constraints, verify_cut_instance
from closedattr.geometry import (
    AffineSubspace,
    FinitePointSet,
    ProductSet,
    RegionPredicate,
    SphereArc,
    estimate_reach,
    find_epsilon_inclusion,
    grid_points,
)
from closedattr.homology import (
    FAILS,
    PASSES_NECESSARY,
    betti,
    betti_vector,
    build_rips,
    cofibration_necessary_check,
    induced_map_rank,
)
from closedattr.registry import STRIP_STARTS, counter_s1_clouds, strip_settling_report, xaxis_clouds
from closedattr.retraction import CHECKS, distance_flow_check, hitting_time, reach_retract_homotopy, weak_retract_homotopy
from closedattr.semiflow import builtin_system, check_semigroup
from closedattr.stability import NONUNIFORM, estimate_delta

from conftest import ACCEPTANCE_LINES

pytestmark = pytest.mark.acceptance

AXIS = AffineSubspace.coordinate_axis()


def record(number: int, title: str, passed: bool, detail: str) -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {title} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert passed, line


class Timer:
    def __enter__(self) -> "Timer":
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc) -> None:
        self.seconds = time.perf_counter() - self.t0


def test_criterion_01_nonuniform_attraction():
    with Timer() as t:
        sys, rep = strip_settling_report(seed=0)
    steps = []
    for x in STRIP_STARTS:
        T, censored = rep.settling_time_of((x, 1.0))
        oracle = (1.0 + x * x) * math.log(10.0)  # y(t) = exp(-t/(1+x^2)) crosses 0.1
        steps.append(math.inf if censored else abs(T - oracle) / sys.h)
    ok = max(steps) <= 2.0 and rep.verdict == NONUNIFORM and t.seconds < 5.0
    record(1, "strip settling times and nonuniform verdict", ok, f"max error {max(steps):.2f} steps, verdict {rep.verdict}, {t.seconds:.2f} s")


def test_criterion_02_uniform_stability():
    sys = builtin_system("nonuniform_strip")
    with Timer() as t:
        ratios = []
        for eps in (0.1, 0.5, 1.0):
            res = estimate_delta(sys, AXIS, eps, horizon=20.0, window=[(-10, 10), (-2, 2)], budget=400, seed=0)
            ratios.append(0.0 if res.delta is None else res.delta / eps)
    ok = min(ratios) >= 0.9 and t.seconds < 10.0
    record(2, "delta(eps) >= 0.9 eps on |x| <= 10", ok, f"ratios {[round(r, 3) for r in ratios]}, {t.seconds:.2f} s")


def test_criterion_03_counterexample():
    with Timer() as t:
        A, U, B, scale = counter_s1_clouds()
        v = cofibration_necessary_check(A, U, B, scale)
    samples = len(A) + len(B)
    ok = (
        v.betti_A.ranks == (1, 0)
        and v.betti_B.ranks == (1, 2)
        and v.induced_ranks[1] == 2
        and v.verdict == FAILS
        and samples <= 2000
        and t.seconds < 30.0
    )
    detail = f"beta(A)={list(v.betti_A.ranks)}, beta(B)={list(v.betti_B.ranks)}, rank H1={v.induced_ranks[1]}, {v.verdict}, {samples} samples, {t.seconds:.2f} s"
    record(3, "punctured-circle basin fails the cofibration check", ok, detail)


def test_criterion_04_positive_control():
    sys = builtin_system("xaxis_contraction")
    A, U, B, scale = xaxis_clouds()
    cof = cofibration_necessary_check(A, U, B, scale)
    G = grid_points([(-5, 5), (-3, 3)], 0.5)
    probe = weak_retract_homotopy(sys, lambda X: np.square(X[:, 1]), 0.01, G, horizon=20.0, tol=1e-6)
    passed = [k for k in CHECKS if probe.results[k].passed]
    ok = cof.verdict == PASSES_NECESSARY and len(passed) == 4 and len(probe.incomplete) == 0
    record(4, "contraction passes cofibration check and all four probe checks", ok, f"{cof.verdict}, {len(passed)}/4 checks")


def test_criterion_05_filter_separation():
    U = RegionPredicate.exp_funnel([(-1, 1), (-1, 1)])
    grid = [0.2, 0.1, 0.05, 0.01]
    v = find_epsilon_inclusion(AXIS, U, grid, 2000, seed=0)
    verified = {}
    for eps, w in v.witnesses:
        width = 0.0 if w[0] == 0 else math.exp(-1.0 / (w[0] * w[0]))
        verified[eps] = abs(w[1]) < eps and not abs(w[1]) < width
    ok = v.eps_found is None and all(verified.get(e, False) for e in grid)
    record(5, "a witness in N_eps(A) outside the funnel for every eps", ok, f"verified {sorted(e for e, good in verified.items() if good)}")


def test_criterion_06_compact_inclusion():
    C = SphereArc.circle()
    budget = 10_000
    v = find_epsilon_inclusion(C, RegionPredicate.metric_neighborhood(C, 0.3), [0.2], budget, seed=0)
    ok = v.eps_found == 0.2 and not v.witnesses and v.samples_per_eps >= 10_000
    record(6, "eps = 0.2 certified for the circle inside N_0.3", ok, f"eps {v.eps_found}, {len(v.witnesses)} witnesses, {v.samples_per_eps} samples")


def test_criterion_07_reach_machinery():
    C = SphereArc.circle()
    rep = estimate_reach(C, 2.0, 0.01, seed=0)
    k = np.arange(50)
    rad = 0.02 + 1.96 * k / 49
    ang = 2 * math.pi * ((7 * k) % 50) / 50
    G = np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=1)
    probe = reach_retract_homotopy(C, 1.0, G)
    # independent radial oracle: the retraction moves x along its ray, |x| -> |x| + s (1 - |x|)
    oracle = np.stack([(1 - s) * np.abs(rad - 1.0) for s in probe.s_values])
    measured = np.stack([C.distance(V) for V in probe.values])
    radial_err = float(np.max(np.abs(measured - oracle)))
    flow = distance_flow_check(C, 1.0, [1.8, 0.0], h=1e-3, tol=1e-4)
    eq_err = probe.diagnostics["contraction_equality_error"]
    ok = (
        0.95 <= rep.r_lo <= 1.05
        and probe.values.shape[:2] == (11, 50)
        and eq_err <= 1e-9
        and radial_err <= 1e-9
        and flow.max_decay_error < 1e-4
    )
    detail = f"reach {rep.r_lo:.3f}, contraction error {eq_err:.1e}, radial oracle {radial_err:.1e}, decay error {flow.max_decay_error:.1e}"
    record(7, "reach estimate, nearest-point retraction and distance flow", ok, detail)


def test_criterion_08_hitting_time():
    sys = builtin_system("xaxis_contraction")
    errs = []
    for q in (10.0, 1e2, 1e4):
        ht = hitting_time(sys, lambda X: np.square(X[:, 1]), 1.0 / q, [0.7, 1.0], horizon=20.0)
        errs.append(abs(ht.value - 0.5 * math.log(q)))  # V(t) = exp(-2t) V0
    ok = max(errs) <= 1e-4
    record(8, "hitting time matches ln(V0/c)/2", ok, f"max error {max(errs):.1e}")


def test_criterion_09_cut_constraints():
    rp3 = CutFeasibilityProblem((1, 0, 0, 1), (1, 1), 1, 3)
    rep = derive_cut_constraints(rp3, assume_nonempty=True)
    inst = rep.instance("1", 3)
    top_status = verify_cut_instance(rp3, (1, 1, 0)).status("1", 3)
    empty = derive_cut_constraints(CutFeasibilityProblem((1, 0, 0), (1, 0), 1, 2))
    ok = rep.forced.get(0) == 1 and rep.forced.get(1) == 1 and empty.empty_cut_feasible and inst.text
    detail = f"forced {rep.forced}, empty cut feasible {empty.empty_cut_feasible}, n=3: {inst.text}, (1,1,0) gives {top_status[0]} <= {top_status[1]} {'holds' if top_status[2] else 'fails'}"
    record(9, "cut constraints on the projective-space ranks and the empty cut", bool(ok), detail)


def test_criterion_10_property_suites():
    rng = np.random.default_rng(2024)
    sets = [
        AXIS,
        SphereArc.circle(),
        SphereArc([0.3, -0.2], 0.7, 1.0, 4.0),
        FinitePointSet(rng.normal(size=(40, 2))),
        ProductSet(FinitePointSet(np.array([[0.0], [2.0]])), 1),
    ]
    violations = 0
    pairs = 0
    per = 100_000 // len(sets)
    for A in sets:
        X, Y = rng.uniform(-4, 4, size=(2, per, 2))
        gap = np.abs(A.distance(X) - A.distance(Y)) - np.linalg.norm(X - Y, axis=1)
        violations += int(np.sum(gap > 1e-12))
        pairs += per

    sys = builtin_system("counterS1").integrated()
    res = [check_semigroup(sys, [0.3, 1.8], 0.37, 0.59, h) for h in (0.2, 0.1, 0.05)]
    shrink = min(res[0] / res[1], res[1] / res[2])

    euler_bad = 0
    for _ in range(100):
        cx = build_rips(rng.uniform(size=(int(rng.integers(5, 40)), 2)), float(rng.uniform(0.1, 0.4)))
        euler_bad += cx.euler_characteristic() != sum((-1) ** k * b for k, b in enumerate(betti_vector(cx).ranks))

    rank_bad = 0
    for _ in range(50):
        n = int(rng.integers(5, 40))
        cx = build_rips(rng.uniform(size=(n, 2)), float(rng.uniform(0.1, 0.4)))
        rank_bad += any(induced_map_rank(range(n), cx, k).rank != betti(cx, k) for k in range(3))

    ok = violations == 0 and pairs >= 100_000 and shrink >= 12.0 and euler_bad == 0 and rank_bad == 0
    detail = f"{violations} Lipschitz violations in {pairs} pairs, semigroup shrink {shrink:.1f}x, {euler_bad}/100 Euler, {rank_bad}/50 rank"
    record(10, "property suites", ok, detail)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))
