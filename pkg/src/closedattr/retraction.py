"""Explicit deformations and their numerical verification.

Three constructions are probed on finite grids: the hitting-time homotopy
that slides points along orbits until they reach a Lyapunov sublevel set,
the straight-line homotopy to the nearest point (valid inside the reach),
and the unit-speed descent of the distance function.  Homotopies can be
concatenated, first one at double speed and then the other.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .geometry import ClosedSetSpec, as_point, as_points, project_to_set
from .semiflow import (
    AmbientSpace,
    ReachViolationError,
    SemiflowSystem,
    distance_gradient,
    flow_batch,
    integrate,
    make_distance_flow_rhs,
    simulate_chunks,
)

ScalarField = Callable[[np.ndarray], np.ndarray]
HomotopyMap = Callable[[np.ndarray, float], np.ndarray]

CHECKS = ("endpoint_identity", "endpoint_in_target", "stationarity_on_target", "continuity")


# ---------------------------------------------------------------------------
# hitting times


@dataclass
class HittingTimes:
    times: np.ndarray  # inf where censored
    censored: np.ndarray
    last_value: np.ndarray  # V at the last state reached
    left_domain: np.ndarray


@dataclass
class HittingTime:
    value: float
    censored: bool
    last_value: float


def hitting_times(
    sys: SemiflowSystem, V: ScalarField, c: float, X: Any, horizon: float, h: float | None = None
) -> HittingTimes:
    """First time V drops to c along each orbit, by linear interpolation of V
    between the two stored steps that bracket the crossing."""
    if not c > 0:
        raise ValueError("level c must be positive")
    X = as_points(X, sys.dim)
    m = len(X)
    V0 = V(X) if m else np.zeros(0)
    T = np.full(m, np.inf)
    done = V0 <= c
    T[done] = 0.0
    last = V0.copy()
    alive = np.ones(m, dtype=bool)
    prev_v, prev_t = V0.copy(), 0.0
    if np.all(done):
        return HittingTimes(T, ~done, last, ~alive)
    for ch in simulate_chunks(sys, X, horizon, h):
        K = len(ch.times)
        Vs = np.full((K, m), np.nan)
        Vs[ch.alive] = V(ch.states[ch.alive])
        if ch.start == 0:
            Vall, tall = Vs, ch.times
        else:
            Vall = np.vstack([prev_v[None], Vs])
            tall = np.concatenate([[prev_t], ch.times])
        hit = Vall[1:] <= c
        fresh = hit.any(axis=0) & ~done
        if np.any(fresh):
            cols = np.flatnonzero(fresh)
            j = np.argmax(hit, axis=0)[cols]
            v0, v1 = Vall[j, cols], Vall[j + 1, cols]
            t0, t1 = tall[j], tall[j + 1]
            T[cols] = t0 + (v0 - c) / (v0 - v1) * (t1 - t0)
            done |= fresh
        n_alive = ch.alive.sum(axis=0)
        seen = n_alive > 0
        last[seen] = Vs[n_alive[seen] - 1, np.flatnonzero(seen)]
        alive = ch.alive[-1]
        prev_v, prev_t = Vs[-1], ch.times[-1]
        if np.all(done | ~alive):
            break
    return HittingTimes(T, ~done, last, ~alive & ~done)


def hitting_time(sys: SemiflowSystem, V: ScalarField, c: float, x: Any, horizon: float, h: float | None = None) -> HittingTime:
    res = hitting_times(sys, V, c, as_point(x, sys.dim)[None], horizon, h)
    return HittingTime(float(res.times[0]), bool(res.censored[0]), float(res.last_value[0]))


# ---------------------------------------------------------------------------
# probes


@dataclass
class CheckResult:
    passed: bool
    value: float
    detail: str = ""

    def to_dict(self) -> dict:
        return {"passed": self.passed, "value": self.value, "detail": self.detail}


@dataclass
class HomotopyProbe:
    name: str
    evaluate: HomotopyMap
    target: str
    target_excess: ScalarField  # <= tol means the point is in the target set
    domain: Callable[[np.ndarray], np.ndarray]
    grid: np.ndarray
    s_values: np.ndarray
    values: np.ndarray  # (len(s_values), len(grid), n)
    results: dict[str, CheckResult]
    incomplete: np.ndarray
    tol: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return len(self.incomplete) == 0 and all(self.results[k].passed for k in CHECKS if k in self.results)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "target": self.target,
            "tol": self.tol,
            "grid_points": int(len(self.grid)),
            "s_values": self.s_values.tolist(),
            "results": {k: v.to_dict() for k, v in self.results.items()},
            "incomplete": self.incomplete.tolist(),
            "passed": self.passed,
            "diagnostics": self.diagnostics,
        }

    def write_trace_csv(self, path: str) -> None:
        n = self.grid.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i + 1}" for i in range(n)] + ["s"] + [f"H{i + 1}" for i in range(n)])
            for j, s in enumerate(self.s_values):
                for x, y in zip(self.grid, self.values[j]):
                    w.writerow([*map(float, x), float(s), *map(float, y)])


def _s_values(s_values: Sequence[float] | None) -> np.ndarray:
    s = np.linspace(0.0, 1.0, 11) if s_values is None else np.asarray(s_values, dtype=float)
    if s[0] != 0.0 or s[-1] != 1.0 or np.any(np.diff(s) <= 0):
        raise ValueError("s_values must increase from 0 to 1")
    return s


def distortion(grid: np.ndarray, values: np.ndarray, neighbours: int = 4) -> float:
    """Max of |H(x,s) - H(y,s)| / |x - y| over nearest-neighbour pairs of the grid."""
    if len(grid) < 2:
        return 0.0
    k = min(neighbours + 1, len(grid))
    dist, idx = cKDTree(grid).query(grid, k=k)
    worst = 0.0
    for j in range(1, k):
        dx = dist[:, j]
        nz = dx > 0
        for V in values:
            dH = np.linalg.norm(V[nz] - V[idx[nz, j]], axis=1)
            worst = max(worst, float(np.nanmax(dH / dx[nz])) if np.any(nz) else 0.0)
    return worst


def _scalar_modulus(grid: np.ndarray, f: np.ndarray, neighbours: int = 4) -> float:
    return distortion(grid, f[None, :, None], neighbours)


def _common_checks(
    grid: np.ndarray,
    values: np.ndarray,
    target_excess: ScalarField,
    on_target: np.ndarray,
    tol: float,
    distortion_bound: float,
) -> dict[str, CheckResult]:
    ident = bool(np.array_equal(values[0], grid))
    end = target_excess(values[-1]) if len(grid) else np.zeros(0)
    end_max = float(np.max(end)) if len(end) else 0.0
    if np.any(on_target):
        stay = max(float(np.max(np.abs(V[on_target] - grid[on_target]))) for V in values)
    else:
        stay = 0.0
    mod = distortion(grid, values)
    return {
        "endpoint_identity": CheckResult(ident, 0.0 if ident else float(np.max(np.abs(values[0] - grid))), "H(x,0) == x bitwise"),
        "endpoint_in_target": CheckResult(end_max <= tol, end_max, "max excess of H(x,1) over the target"),
        "stationarity_on_target": CheckResult(stay <= tol, stay, f"{int(np.sum(on_target))} grid points already in the target"),
        "continuity": CheckResult(bool(np.isfinite(mod) and mod <= distortion_bound), mod, f"max neighbour distortion, bound {distortion_bound:g}"),
    }


def weak_retract_homotopy(
    sys: SemiflowSystem,
    V: ScalarField,
    c: float,
    grid: Any,
    horizon: float,
    s_values: Sequence[float] | None = None,
    tol: float = 1e-6,
    distortion_bound: float = 1e3,
) -> HomotopyProbe:
    """H(x, s) = phi^{s T_c(x)}(x), probed on ``grid``.

    Grid points whose hitting time is censored make the probe incomplete;
    the checks then run on the remaining points.
    """
    G = as_points(grid, sys.dim)
    s = _s_values(s_values)
    ht = hitting_times(sys, V, c, G, horizon)
    bad = ht.censored
    G_ok, T_ok = G[~bad], ht.times[~bad]

    def evaluate(X: np.ndarray, s_: float) -> np.ndarray:
        X = as_points(X, sys.dim)
        if s_ == 0.0:
            return X.copy()
        Tx = hitting_times(sys, V, c, X, horizon).times
        fin = np.isfinite(Tx)
        out = np.full_like(X, np.nan)
        out[fin] = flow_batch(sys, X[fin], s_ * Tx[fin])[0]
        return out

    values = np.empty((len(s), len(G_ok), sys.dim))
    for j, sj in enumerate(s):
        values[j] = G_ok if sj == 0.0 else flow_batch(sys, G_ok, sj * T_ok)[0]

    def excess(X: np.ndarray) -> np.ndarray:
        return V(X) - c

    on_target = V(G_ok) <= c
    results = _common_checks(G_ok, values, excess, on_target, tol, distortion_bound)
    Vs = np.array([V(v) for v in values])
    diag = {
        "level": c,
        "horizon": horizon,
        "max_hitting_time": float(np.max(T_ok)) if len(T_ok) else 0.0,
        "hitting_time_modulus": _scalar_modulus(G_ok, T_ok),
        "V_nonincreasing_in_s": bool(np.all(np.diff(Vs, axis=0) <= tol)),
    }
    return HomotopyProbe(
        "weak-retract",
        evaluate,
        f"sublevel set V <= {c:g}",
        excess,
        lambda X: sys.space.contains(as_points(X, sys.dim), sys.domain_guard),
        G_ok,
        s,
        values,
        results,
        G[bad],
        tol,
        diag,
    )


def reach_retract_homotopy(
    A: ClosedSetSpec,
    r: float,
    grid: Any,
    s_values: Sequence[float] | None = None,
    tol: float = 1e-9,
    projection_tol: float = 1e-9,
    separation: float | None = None,
    distortion_bound: float = 1e3,
) -> HomotopyProbe:
    """H(x, s) = x + s (Pi(x) - x) on D_{0.99 r}(A).

    Written this way H(x, 0) is x bitwise; it equals Pi(x) + (1-s)(x - Pi(x))
    up to rounding.  Besides the four standard checks the probe records the
    contraction identity d(H(x,s), A) = (1-s) d(x,A).
    """
    if not r > 0:
        raise ValueError("r must be positive")
    G = as_points(grid, A.dim)
    dG = A.distance(G)
    if np.any(dG > 0.99 * r):
        raise ValueError("grid points must lie in D_{0.99 r}(A)")
    for x in G:
        if len(project_to_set(x, A, projection_tol, separation)) > 1:
            raise ReachViolationError(f"non-unique projection at {x.tolist()}: reach is below the claimed radius")
    s = _s_values(s_values)
    P = A.nearest(G)

    def evaluate(X: np.ndarray, s_: float) -> np.ndarray:
        X = as_points(X, A.dim)
        if s_ == 0.0:
            return X.copy()
        return X + s_ * (A.nearest(X) - X)

    values = np.stack([G if sj == 0.0 else G + sj * (P - G) for sj in s])
    on_target = dG <= tol
    results = _common_checks(G, values, A.distance, on_target, tol, distortion_bound)
    dev = max(float(np.max(np.abs(A.distance(V) - (1.0 - sj) * dG))) for sj, V in zip(s, values))
    over = max(float(np.max(A.distance(V) - (1.0 - sj) * dG)) for sj, V in zip(s, values))
    results["contraction"] = CheckResult(over <= tol, over, "max of d(H,A) - (1-s) d(x,A)")
    return HomotopyProbe(
        "reach-retract",
        evaluate,
        "A",
        A.distance,
        lambda X: A.distance(as_points(X, A.dim)) <= 0.99 * r,
        G,
        s,
        values,
        results,
        np.zeros((0, A.dim)),
        tol,
        {"r": r, "contraction_equality_error": dev},
    )


def identity_homotopy(grid: Any, s_values: Sequence[float] | None = None) -> HomotopyProbe:
    G = as_points(grid)
    s = _s_values(s_values)
    values = np.stack([G] * len(s))
    zero = lambda X: np.zeros(len(X))  # noqa: E731
    results = _common_checks(G, values, zero, np.ones(len(G), dtype=bool), 0.0, 1.0)
    return HomotopyProbe(
        "identity",
        lambda X, s_: as_points(X).copy(),
        "whole domain",
        zero,
        lambda X: np.ones(len(as_points(X)), dtype=bool),
        G,
        s,
        values,
        results,
        np.zeros((0, G.shape[1])),
        0.0,
    )


class SeamMismatchError(RuntimeError):
    pass


def concatenate_homotopies(
    Hw: HomotopyProbe, H: HomotopyProbe, tol: float = 1e-9, distortion_bound: float = 1e3
) -> HomotopyProbe:
    """Run Hw at double speed on [0, 1/2], then H from Hw's endpoint on [1/2, 1].

    Probed on Hw's grid.  The seam compares Hw(x, 1) with H(Hw(x, 1), 0).
    """
    G = Hw.grid
    s = _s_values(np.union1d(Hw.s_values, [0.5]))
    ends = Hw.evaluate(G, 1.0)
    if not np.all(H.domain(ends)):
        raise ValueError("the first homotopy ends outside the domain of the second")
    seam = float(np.max(np.linalg.norm(H.evaluate(ends, 0.0) - ends, axis=1))) if len(G) else 0.0
    if seam > tol:
        raise SeamMismatchError(f"seam residual {seam:.3g} exceeds {tol:g}")

    def evaluate(X: np.ndarray, s_: float) -> np.ndarray:
        if s_ <= 0.5:
            return Hw.evaluate(X, 2.0 * s_)
        return H.evaluate(Hw.evaluate(X, 1.0), 2.0 * s_ - 1.0)

    values = np.stack([G if sj == 0.0 else evaluate(G, float(sj)) for sj in s])
    check_tol = max(tol, H.tol)
    on_target = (H.target_excess(G) <= check_tol) & (Hw.target_excess(G) <= Hw.tol)
    results = _common_checks(G, values, H.target_excess, on_target, check_tol, distortion_bound)
    results["seam"] = CheckResult(seam <= tol, seam, "|Hw(x,1) - H(Hw(x,1),0)|")
    return HomotopyProbe(
        f"{Hw.name}+{H.name}",
        evaluate,
        H.target,
        H.target_excess,
        Hw.domain,
        G,
        s,
        values,
        results,
        Hw.incomplete,
        check_tol,
        {"seam_residual": seam},
    )


# ---------------------------------------------------------------------------
# distance flow


@dataclass
class DistanceFlowReport:
    start: np.ndarray
    d0: float
    times: np.ndarray
    distances: np.ndarray
    max_decay_error: float
    terminal_distance: float
    max_gradient_defect: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_decay_error <= self.tol and self.terminal_distance <= self.tol

    def to_dict(self) -> dict:
        return {
            "start": self.start.tolist(),
            "d0": self.d0,
            "steps": int(len(self.times) - 1),
            "max_decay_error": self.max_decay_error,
            "terminal_distance": self.terminal_distance,
            "max_gradient_defect": self.max_gradient_defect,
            "tol": self.tol,
            "passed": self.passed,
        }


def distance_flow_check(A: ClosedSetSpec, r: float, x0: Any, h: float = 1e-3, tol: float = 1e-4) -> DistanceFlowReport:
    """Integrate x' = -grad F / |grad F|^2 with F = d(., A) and check F decays at unit rate.

    The field is discontinuous on A, so the orbit is integrated to time
    d0 - tol/2 and the terminal point is then within tol/2 of A.  The
    finite-difference gradient norm must stay within max(tol, 1e-6) of 1
    along the orbit (finite differences are not trusted below 1e-6); a
    larger defect means the orbit met a point without a unique
    nearest point, i.e. the reach is smaller than r.
    """
    x0 = as_point(x0, A.dim)
    d0 = float(A.distance(x0)[0])
    if not 0 < d0 < r:
        raise ValueError("need 0 < d(x0, A) < r")
    sys = SemiflowSystem(AmbientSpace(A.dim), rhs=make_distance_flow_rhs(A, r), h=h, name="distance_flow")
    traj = integrate(sys, x0, d0 - 0.5 * tol)
    F = A.distance(traj.states)
    defect = float(np.max(np.abs(np.linalg.norm(distance_gradient(A, traj.states), axis=1) - 1.0)))
    if defect > max(tol, 1e-6):
        raise ReachViolationError(f"gradient norm of the distance deviates from 1 by {defect:.3g}")
    mask = traj.times <= d0 - tol
    err = float(np.max(np.abs(F[mask] - (d0 - traj.times[mask]))))
    return DistanceFlowReport(x0, d0, traj.times, F, err, float(F[-1]), defect, tol)
