"""Worked examples with their expected outcomes.

Each case runs a full pipeline and compares what it observes against
expectations.  Every expectation carries a provenance tag:

* ``worked-example``: the value is stated in the source example itself;
* ``derived``: the value comes from an independent oracle, named in ``source``;
* ``trivial``: the value follows directly from the definitions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from .cuts import CutFeasibilityProblem, derive_cut_constraints, verify_cut_instance
from .geometry import (
    AffineSubspace,
    AmbientSpace,
    FinitePointSet,
    RegionPredicate,
    SphereArc,
    estimate_reach,
    find_epsilon_inclusion,
    grid_points,
)
from .homology import cofibration_necessary_check, homotopy_equivalence_necessary_check
from .retraction import (
    concatenate_homotopies,
    distance_flow_check,
    hitting_time,
    reach_retract_homotopy,
    weak_retract_homotopy,
)
from .semiflow import builtin_system, flow_at
from .stability import build_default_lyapunov, estimate_delta, estimate_T

PROVENANCE_KINDS = ("worked-example", "derived", "trivial")


@dataclass(frozen=True)
class Expectation:
    key: str
    expected: Any
    provenance: str
    source: str
    compare: str = "eq"  # eq, ge, le
    tol: float | None = None

    def __post_init__(self) -> None:
        if self.provenance not in PROVENANCE_KINDS:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if not self.source:
            raise ValueError("every expectation needs a source")

    def holds(self, observed: Any) -> bool:
        if observed is None and self.expected is not None:
            return False
        if self.compare == "ge":
            return bool(observed >= self.expected)
        if self.compare == "le":
            return bool(observed <= self.expected)
        if self.tol is not None:
            return bool(np.all(np.abs(np.asarray(observed, float) - np.asarray(self.expected, float)) <= self.tol))
        return observed == self.expected


@dataclass
class CheckRow:
    key: str
    expected: Any
    observed: Any
    passed: bool
    provenance: str
    source: str

    def to_dict(self) -> dict:
        return {
            "key": self.key,
            "expected": self.expected,
            "observed": self.observed,
            "passed": self.passed,
            "provenance": self.provenance,
            "source": self.source,
        }


Pipeline = Callable[[int, float], dict]


@dataclass(frozen=True)
class ExampleCase:
    name: str
    title: str
    expectations: tuple[Expectation, ...]
    pipeline: Pipeline
    default_tol: float = 1e-6

    def run(self, seed: int = 0, tol: float | None = None) -> tuple[list[CheckRow], dict]:
        observed = self.pipeline(seed, self.default_tol if tol is None else tol)
        rows = []
        for e in self.expectations:
            got = observed.get(e.key)
            rows.append(CheckRow(e.key, e.expected, got, e.holds(got), e.provenance, e.source))
        return rows, observed


# ---------------------------------------------------------------------------
# sample clouds for the homology checks


def counter_s1_clouds(
    spacing: float = 0.1, hole: float = 0.25, band: float = 0.45, arc_gap: float = 0.3, arc_count: int = 120
) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """(A, U, B, scale) for the punctured-circle attractor.

    B: grid on [-1.5, 2.5] x [-1.5, 1.5] with disks of radius ``hole`` around
    the origin and around (1, 0) removed (the basin misses the origin, the
    space misses (1, 0)).  U: the B vertices in the annulus |r - 1| < band.
    A: the circle sampled on [arc_gap, 2 pi - arc_gap], an arc whose end gap
    is wider than the Rips scale.  Scale 1.5 * spacing joins grid diagonals
    but nothing longer.
    """
    B = grid_points([(-1.5, 2.5), (-1.5, 1.5)], spacing)
    keep = (np.linalg.norm(B, axis=1) > hole) & (np.linalg.norm(B - [1.0, 0.0], axis=1) > hole)
    B = B[keep]
    U = B[np.abs(np.linalg.norm(B, axis=1) - 1.0) < band]
    th = np.linspace(arc_gap, 2 * math.pi - arc_gap, arc_count)
    A = np.stack([np.cos(th), np.sin(th)], axis=1)
    return A, U, B, 1.5 * spacing


def xaxis_clouds(spacing: float = 0.1, half_width: float = 3.0, height: float = 2.0, strip: float = 0.3):
    """(A, U, B, scale): segment of the x-axis, a strip around it, a plane window."""
    B = grid_points([(-half_width, half_width), (-height, height)], spacing)
    U = B[np.abs(B[:, 1]) < strip]
    xs = np.linspace(-half_width, half_width, int(round(2 * half_width / (spacing / 2))) + 1)
    A = np.stack([xs, np.zeros_like(xs)], axis=1)
    return A, U, B, 1.5 * spacing


def arc_distance_lower_bound(x: np.ndarray, theta0: float, theta1: float, dtheta: float = 1e-5) -> float:
    """Brute-force distance from x to the unit-circle arc [theta0, theta1],
    minus the largest error a theta-grid of that spacing can make."""
    th = np.arange(theta0, theta1 + dtheta, dtheta)
    th = np.clip(th, theta0, theta1)
    d = np.hypot(x[0] - np.cos(th), x[1] - np.sin(th)).min()
    return float(d - dtheta / 2)


# ---------------------------------------------------------------------------
# pipelines


def _counter_s1(seed: int, tol: float) -> dict:
    sys = builtin_system("counterS1")
    C = SphereArc.circle()
    delta = estimate_delta(sys, C, 0.3, horizon=5.0, budget=300, seed=seed)
    G = grid_points([(-2, 2), (-2, 2)], 0.25)
    G = G[(np.linalg.norm(G, axis=1) > 0.2) & (np.linalg.norm(G - [1.0, 0.0], axis=1) > 0.2)]
    lyap = build_default_lyapunov(sys, C, G, horizon=5.0)
    V = lyap.V
    probe = weak_retract_homotopy(sys, V, 0.01, G, horizon=10.0, tol=tol)
    A, U, B, scale = counter_s1_clouds()
    eq = homotopy_equivalence_necessary_check(A, B, scale)
    cof = cofibration_necessary_check(A, U, B, scale)
    return {
        "delta_over_eps": None if delta.delta is None else delta.delta / 0.3,
        "lyapunov_decrease_violations": len(lyap.decrease_violations),
        "retract_endpoint_in_target": probe.results["endpoint_in_target"].passed,
        "retract_stationarity": probe.results["stationarity_on_target"].passed,
        "betti_A": list(eq.betti_A.ranks),
        "betti_B": list(eq.betti_B.ranks),
        "induced_rank_H1": cof.induced_ranks.get(1),
        "equivalence_check": eq.verdict,
        "cofibration_check": cof.verdict,
        "sample_count": int(len(A) + len(B)),
    }


def _s1_closed(seed: int, tol: float) -> dict:
    eps = 0.25
    t0 = math.asin(eps)
    arc = SphereArc(np.zeros(2), 1.0, t0, 2 * math.pi - t0)
    U = RegionPredicate.metric_neighborhood(arc, eps, window=[(0.9, 1.1), (-0.1, 0.1)])
    space = AmbientSpace(2, ((1.0, 0.0),))
    grid = [0.2, 0.1, 0.05, 0.01]
    v = find_epsilon_inclusion(SphereArc.circle(), U, grid, 10_000, seed=seed, space=space)
    verified = [
        abs(math.hypot(*w) - 1.0) < e and arc_distance_lower_bound(w, t0, 2 * math.pi - t0) >= eps
        for e, w in v.witnesses
    ]
    return {
        "eps_found": v.eps_found,
        "witness_count": len(v.witnesses),
        "witnesses_verified": bool(verified) and all(verified),
    }


def _funnel(seed: int, tol: float) -> dict:
    A = AffineSubspace.coordinate_axis()
    U = RegionPredicate.exp_funnel([(-1, 1), (-1, 1)])
    grid = [0.2, 0.1, 0.05, 0.01]
    v = find_epsilon_inclusion(A, U, grid, 2000, seed=seed)
    ok = []
    for e, w in v.witnesses:
        width = 0.0 if w[0] == 0 else math.exp(-1.0 / (w[0] * w[0]))
        ok.append(abs(w[1]) < e and abs(w[1]) >= width)
    return {
        "eps_found": v.eps_found,
        "witness_eps": [e for e, _ in v.witnesses],
        "witnesses_verified": bool(ok) and all(ok),
    }


def _circle_inclusion(seed: int, tol: float) -> dict:
    C = SphereArc.circle()
    v = find_epsilon_inclusion(C, RegionPredicate.metric_neighborhood(C, 0.3), [0.2], 10_000, seed=seed)
    return {"eps_found": v.eps_found, "witness_count": len(v.witnesses)}


STRIP_STARTS = (0.0, 1.0, 2.0, 4.0, 8.0)


def strip_settling_report(seed: int = 0):
    sys = builtin_system("nonuniform_strip")
    A = AffineSubspace.coordinate_axis()
    windows = [[(-w, w), (-1.0, 1.0)] for w in (1, 2, 4, 8)]
    starts = [(x, 1.0) for x in STRIP_STARTS]
    return sys, estimate_T(sys, A, 1.0, 0.1, windows, horizon=200.0, budget=200, seed=seed, extra_points=starts)


def _strip(seed: int, tol: float) -> dict:
    sys, rep = strip_settling_report(seed)
    A = AffineSubspace.coordinate_axis()
    errs = []
    for x in STRIP_STARTS:
        T, _ = rep.settling_time_of((x, 1.0))
        errs.append(abs(T - (1 + x * x) * math.log(10)) / sys.h)
    ratios = []
    for e in (0.1, 0.5, 1.0):
        d = estimate_delta(sys, A, e, horizon=20.0, window=[(-10, 10), (-2, 2)], budget=400, seed=seed)
        ratios.append(0.0 if d.delta is None else d.delta / e)
    return {
        "flow_at_(1,1)_t1": flow_at(sys, [1.0, 1.0], 1.0).tolist(),
        "max_settling_error_steps": max(errs),
        "verdict": rep.verdict,
        "min_delta_over_eps": min(ratios),
    }


def _contraction(seed: int, tol: float) -> dict:
    sys = builtin_system("xaxis_contraction")
    A = AffineSubspace.coordinate_axis()

    def V(X):
        return np.square(X[:, 1])

    A_s, U_s, B_s, scale = xaxis_clouds()
    cof = cofibration_necessary_check(A_s, U_s, B_s, scale)
    G = grid_points([(-5, 5), (-3, 3)], 0.5)
    probe = weak_retract_homotopy(sys, V, 0.01, G, horizon=20.0, tol=tol)
    errs = [abs(hitting_time(sys, V, 1.0 / q, [0.0, 1.0], 20.0).value - 0.5 * math.log(q)) for q in (10, 100, 1e4)]
    strip = G[np.abs(G[:, 1]) <= 0.5]
    comp = concatenate_homotopies(
        weak_retract_homotopy(sys, V, 0.01, strip, horizon=20.0, tol=tol), reach_retract_homotopy(A, 1.0, strip)
    )
    windows = [[(-w, w), (-1.0, 1.0)] for w in (1, 2, 4, 8)]
    rep = estimate_T(sys, A, 1.0, 0.1, windows, horizon=20.0, budget=100, seed=seed)
    return {
        "cofibration_check": cof.verdict,
        "retract_all_checks": probe.passed,
        "max_hitting_time_error": max(errs),
        "composite_seam_residual": comp.results["seam"].value,
        "composite_retracts_to_A": comp.results["endpoint_in_target"].passed,
        "verdict": rep.verdict,
    }


def _reach(seed: int, tol: float) -> dict:
    C = SphereArc.circle()
    rc = estimate_reach(C, 2.0, 0.01, seed=seed)
    two = FinitePointSet(np.array([[-1.0, 0.0], [1.0, 0.0]]))
    rt = estimate_reach(two, 2.0, 0.01, seed=seed)
    w = rt.witness
    line = estimate_reach(AffineSubspace.coordinate_axis(), 10.0, 0.1, window=[(-5, 5), (-11, 11)], seed=seed)
    k = np.arange(50)
    rad = 0.02 + 1.96 * k / 49
    ang = 2 * math.pi * ((7 * k) % 50) / 50
    G = np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=1)
    probe = reach_retract_homotopy(C, min(rc.r_lo, 1.0), G)
    f1 = distance_flow_check(C, 1.0, [1.8, 0.0], h=1e-3, tol=1e-4)
    f2 = distance_flow_check(AffineSubspace.coordinate_axis(), 10.0, [0.0, 0.5], h=1e-3, tol=1e-4)
    return {
        "reach_circle": rc.r_lo,
        "reach_two_points": rt.r_lo,
        "two_point_witness_equidistant": None
        if w is None
        else abs(float(np.linalg.norm(w.point - w.foot_a) - np.linalg.norm(w.point - w.foot_b))) <= 1e-9,
        "reach_line": line.r_lo,
        "retract_contraction_error": probe.diagnostics["contraction_equality_error"],
        "retract_grid": [int(len(G)), int(len(probe.s_values))],
        "distance_flow_error_circle": f1.max_decay_error,
        "distance_flow_error_line": f2.max_decay_error,
    }


def _so3(seed: int, tol: float) -> dict:
    p = CutFeasibilityProblem((1, 0, 0, 1), (1, 1), 1, 3)
    rep = derive_cut_constraints(p, assume_nonempty=True)
    inst = rep.instance("1", 3)
    stated = verify_cut_instance(p, (1, 1, 0))
    return {
        "forced_b0": rep.forced.get(0),
        "forced_b1": rep.forced.get(1),
        "b2_lower_bound": rep.lower[2],
        "n3_family1_instance": inst.text,
        "stated_vector_passes_n3": stated.status("1", 3)[2],
    }


def _empty_cut(seed: int, tol: float) -> dict:
    p = CutFeasibilityProblem((1, 0, 0), (1, 0), 1, 2)
    rep = derive_cut_constraints(p)
    return {"empty_cut_feasible": rep.empty_cut_feasible, "lower_bounds": rep.lower}


# ---------------------------------------------------------------------------
# the registry

WE = "worked-example"
DER = "derived"
TRIV = "trivial"

CASES: dict[str, ExampleCase] = {}


def _register(case: ExampleCase) -> None:
    CASES[case.name] = case


_register(
    ExampleCase(
        "counterS1",
        "Unit circle minus (1,0) attracting the squared-distance gradient flow",
        (
            Expectation("delta_over_eps", 0.9, DER, "radial dynamics r' = -2(r-1) never increase |r-1|", "ge"),
            Expectation("lyapunov_decrease_violations", 0, DER, "dV/dt = -|grad V|^2 < 0 off the circle"),
            Expectation("retract_endpoint_in_target", True, DER, "radial ODE reaches the sublevel set in finite time"),
            Expectation("retract_stationarity", True, TRIV, "zero hitting time inside the sublevel set"),
            Expectation("betti_A", [1, 0], WE, "the arc is contractible"),
            Expectation("betti_B", [1, 2], WE, "the basin is the plane minus two points, a wedge of two circles"),
            Expectation("induced_rank_H1", 2, DER, "GF(2) reduction of annulus cycles against basin boundaries"),
            Expectation("equivalence_check", "NOT-EQUIVALENT", WE, "attractor and basin are not homotopy equivalent"),
            Expectation("cofibration_check", "FAILS", WE, "the metric neighbourhood cannot factor through a contractible set"),
            Expectation("sample_count", 2000, TRIV, "desk-scale sample budget", "le"),
        ),
        _counter_s1,
    )
)
_register(
    ExampleCase(
        "s1closed",
        "Open neighbourhood of the punctured circle that contains no metric annulus",
        (
            Expectation("eps_found", None, WE, "no annulus around the punctured circle fits inside the neighbourhood"),
            Expectation("witness_count", 4, TRIV, "one witness per tested eps"),
            Expectation("witnesses_verified", True, DER, "brute-force theta-grid lower bound on the arc distance"),
        ),
        _s1_closed,
    )
)
_register(
    ExampleCase(
        "xaxis-funnel",
        "Exponentially pinched neighbourhood of the x-axis",
        (
            Expectation("eps_found", None, WE, "no metric strip fits inside the funnel"),
            Expectation("witness_eps", [0.2, 0.1, 0.05, 0.01], TRIV, "one witness per tested eps"),
            Expectation("witnesses_verified", True, DER, "direct evaluation of exp(-1/x1^2) at each witness"),
        ),
        _funnel,
    )
)
_register(
    ExampleCase(
        "circle-inclusion",
        "Compact attractor: a metric neighbourhood inside a given neighbourhood",
        (
            Expectation("eps_found", 0.2, TRIV, "nested metric neighbourhoods"),
            Expectation("witness_count", 0, TRIV, "nested metric neighbourhoods"),
        ),
        _circle_inclusion,
    )
)
_register(
    ExampleCase(
        "nonuniform-strip",
        "y' = -y/(1+x^2): uniformly stable, non-uniformly attracting x-axis",
        (
            Expectation("flow_at_(1,1)_t1", [1.0, math.exp(-0.5)], WE, "closed-form flow (x, exp(-t/(1+x^2)) y)", tol=1e-12),
            Expectation("max_settling_error_steps", 2.0, DER, "settling time (1+x^2) ln 10 from the closed form", "le"),
            Expectation("verdict", "nonuniform", WE, "the attraction is not uniform"),
            Expectation("min_delta_over_eps", 0.9, WE, "|y| never increases, so the axis is uniformly stable", "ge"),
        ),
        _strip,
    )
)
_register(
    ExampleCase(
        "xaxis-contraction",
        "Stand-in system x1' = 0, x2' = -x2 contracting the plane onto the x-axis",
        (
            Expectation("cofibration_check", "PASSES-NECESSARY", DER, "line, strip and plane are all contractible"),
            Expectation("retract_all_checks", True, DER, "closed-form solution makes every probe check analytic"),
            Expectation("max_hitting_time_error", 1e-4, DER, "T_c = ln(V0/c)/2 from x2(t) = exp(-t) x2", "le"),
            Expectation("composite_seam_residual", 1e-9, TRIV, "the second homotopy starts at the identity", "le"),
            Expectation("composite_retracts_to_A", True, DER, "straight-line retraction of the strip onto the axis"),
            Expectation("verdict", "uniform", DER, "settling time ln 10 for every start on the unit level"),
        ),
        _contraction,
    )
)
_register(
    ExampleCase(
        "reach-curves",
        "Reach, nearest-point retraction and unit-speed distance descent",
        (
            Expectation("reach_circle", 1.0, DER, "reach of a circle is its radius", tol=0.05),
            Expectation("reach_two_points", 1.0, DER, "the midpoint is equidistant from both points", tol=0.02),
            Expectation("two_point_witness_equidistant", True, DER, "midpoint equidistance"),
            Expectation("reach_line", 10.0, TRIV, "convex sets have infinite reach"),
            Expectation("retract_contraction_error", 1e-9, DER, "radial geometry along the segment to the foot point", "le"),
            Expectation("retract_grid", [50, 11], TRIV, "grid size"),
            Expectation("distance_flow_error_circle", 1e-4, DER, "radial oracle d = 0.8 - t", "le"),
            Expectation("distance_flow_error_line", 1e-4, DER, "unit-speed vertical descent", "le"),
        ),
        _reach,
    )
)
_register(
    ExampleCase(
        "so3-cuts",
        "Cut-set constraints for X with the Betti ranks of RP^3 and A a circle, codimension 1",
        (
            Expectation("forced_b0", 1, WE, "b^0(E) forced to 1 in the worked example"),
            Expectation("forced_b1", 1, WE, "b^1(E) forced to 1 in the worked example"),
            Expectation("b2_lower_bound", 1, DER, "family 1 at n = 3 with rank 1 in the top degree of X"),
            Expectation("stated_vector_passes_n3", False, DER, "direct arithmetic 1 <= 0 + 0 fails for b^2(E) = 0"),
        ),
        _so3,
    )
)
_register(
    ExampleCase(
        "empty-cut",
        "Plane attracted to the x-axis: nothing needs cutting",
        (
            Expectation("empty_cut_feasible", True, WE, "equal Betti vectors make the empty cut admissible"),
            Expectation("lower_bounds", [0, 0], TRIV, "no inequality forces a nonzero rank"),
        ),
        _empty_cut,
    )
)


def get_case(name: str) -> ExampleCase:
    try:
        return CASES[name]
    except KeyError:
        raise KeyError(f"unknown example {name!r}; known: {', '.join(sorted(CASES))}") from None
