"""Sampling-based certificates of uniform stability and uniform attraction,
plus the default Lyapunov function V = d(., A)^2 and the scalar NDR functions
built from it.

Everything here is evidence gathered on finite samples over finite horizons.
Reports say so: a censored settling time is a lower bound, and a
"nonuniform" verdict means the growth rule fired on the windows tested.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .geometry import (
    ClosedSetSpec,
    as_points,
    as_window,
    in_window,
    sample_distance_shell,
    sample_neighborhood,
)
from .semiflow import SemiflowSystem, simulate_batch, simulate_chunks, time_grid

ON_SET_TOL = 1e-9
GROWTH_FACTOR = 1.5
GROWTH_RUN = 3

UNIFORM = "uniform"
NONUNIFORM = "nonuniform"
INCONCLUSIVE = "inconclusive"


# ---------------------------------------------------------------------------
# delta(eps)


@dataclass
class EscapeWitness:
    start: np.ndarray
    time: float
    distance: float

    def to_dict(self) -> dict:
        return {"start": self.start.tolist(), "time": self.time, "distance": self.distance}


@dataclass
class DeltaResult:
    eps: float
    delta: float | None
    witness: EscapeWitness | None
    left_domain: np.ndarray
    samples: int

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "delta": self.delta,
            "witness": None if self.witness is None else self.witness.to_dict(),
            "left_domain": self.left_domain.tolist(),
            "samples": self.samples,
        }


def _chunk_distances(A: ClosedSetSpec, ch) -> np.ndarray:
    K, m, n = ch.states.shape
    D = np.full((K, m), np.nan)
    if ch.alive.any():
        D[ch.alive] = A.distance(ch.states[ch.alive])
    return D


def _first_escape(
    sys: SemiflowSystem, A: ClosedSetSpec, X: np.ndarray, eps: float, horizon: float
) -> tuple[EscapeWitness | None, np.ndarray]:
    escaped_at = np.full(len(X), np.nan)
    escaped_d = np.full(len(X), np.nan)
    alive = np.ones(len(X), dtype=bool)
    for ch in simulate_chunks(sys, X, horizon):
        D = _chunk_distances(A, ch)
        hit = ch.alive & (D >= eps)
        first = np.argmax(hit, axis=0)
        fresh = hit.any(axis=0) & np.isnan(escaped_at)
        escaped_at[fresh] = ch.times[first[fresh]]
        escaped_d[fresh] = D[first[fresh], np.flatnonzero(fresh)]
        alive = ch.alive[-1]
    lost = X[~alive]
    bad = np.flatnonzero(~np.isnan(escaped_at))
    if len(bad) == 0:
        return None, lost
    i = int(bad[0])
    return EscapeWitness(X[i].copy(), float(escaped_at[i]), float(escaped_d[i])), lost


def estimate_delta(
    sys: SemiflowSystem,
    A: ClosedSetSpec,
    eps: float,
    horizon: float,
    window: Any = None,
    budget: int = 400,
    seed: int = 0,
    bisection_steps: int = 12,
) -> DeltaResult:
    """Largest delta on a bisection grid of (0, eps] whose sampled orbits stay in N_eps(A).

    delta = eps is tried first.  Orbits that reach a puncture guard are
    listed in ``left_domain`` and never count as escapes.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")

    def trial(delta: float) -> tuple[EscapeWitness | None, np.ndarray]:
        X = sample_neighborhood(A, delta, budget, window, seed, sys.space)
        return _first_escape(sys, A, X, eps, horizon)

    witness, lost = trial(eps)
    if witness is None:
        return DeltaResult(eps, eps, None, lost, budget)
    lo, hi = 0.0, eps
    for _ in range(bisection_steps):
        mid = 0.5 * (lo + hi)
        w, l = trial(mid)
        if w is None:
            lo, lost = mid, l
        else:
            hi, witness = mid, w
    if lo == 0.0:
        return DeltaResult(eps, None, witness, lost, budget)
    return DeltaResult(eps, lo, None, lost, budget)


# ---------------------------------------------------------------------------
# T(eps)


@dataclass
class WindowSettling:
    window: np.ndarray
    starts: np.ndarray
    times: np.ndarray
    censored: np.ndarray
    left_domain: np.ndarray

    @property
    def sup(self) -> float:
        kept = self.times[~self.left_domain]
        return float(np.max(kept)) if len(kept) else 0.0

    @property
    def any_censored(self) -> bool:
        return bool(np.any(self.censored))

    def to_dict(self) -> dict:
        return {
            "window": self.window.tolist(),
            "sup": self.sup,
            "samples": int(len(self.times)),
            "censored": int(np.sum(self.censored)),
            "left_domain": int(np.sum(self.left_domain)),
        }


@dataclass
class SettlingReport:
    alpha: float
    eps: float
    horizon: float
    windows: list[WindowSettling]
    verdict: str
    evidence: str

    @property
    def sups(self) -> list[float]:
        return [w.sup for w in self.windows]

    def settling_time_of(self, x: Sequence[float]) -> tuple[float, bool]:
        """Settling time recorded for an exact start point (first window containing it)."""
        x = np.asarray(x, dtype=float)
        for w in self.windows:
            hit = np.flatnonzero(np.all(w.starts == x, axis=1))
            if len(hit):
                return float(w.times[hit[0]]), bool(w.censored[hit[0]])
        raise KeyError(f"{x.tolist()} was not among the sampled starts")

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "eps": self.eps,
            "horizon": self.horizon,
            "verdict": self.verdict,
            "evidence": self.evidence,
            "windows": [w.to_dict() for w in self.windows],
        }

    def csv_rows(self) -> list[list[Any]]:
        rows = []
        for i, w in enumerate(self.windows):
            for x, T, c in zip(w.starts, w.times, w.censored):
                rows.append([i, " ".join(f"{v:.12g}" for v in x), float(T), bool(c)])
        return rows


def settling_times(
    sys: SemiflowSystem, A: ClosedSetSpec, X: np.ndarray, eps: float, horizon: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """First stored time after which every stored state is in N_eps(A).

    Returns (times, censored, left_domain).  A start still outside N_eps at
    the horizon is censored at the horizon.
    """
    last_out = np.full(len(X), -1, dtype=np.int64)
    alive = np.ones(len(X), dtype=bool)
    n = 0
    for ch in simulate_chunks(sys, X, horizon):
        outside = ch.alive & (_chunk_distances(A, ch) >= eps)
        K = len(ch.times)
        any_out = outside.any(axis=0)
        last_in_chunk = K - 1 - np.argmax(outside[::-1], axis=0)
        last_out[any_out] = ch.start + last_in_chunk[any_out]
        alive = ch.alive[-1]
        n = ch.start + K - 1
    grid = time_grid(horizon, sys.h)
    censored = (last_out >= n) & alive
    settle_idx = np.minimum(last_out + 1, n)
    T = grid[settle_idx]
    T[censored] = horizon
    return T, censored, ~alive


def growth_verdict(sups: Sequence[float], censored: Sequence[bool]) -> tuple[str, str]:
    """Nonuniform if GROWTH_RUN consecutive windows each raise the sup by more
    than GROWTH_FACTOR over the previous one; uniform if nothing is censored
    and the last window adds at most that factor; inconclusive otherwise."""
    ratios = [b / a if a > 0 else (np.inf if b > 0 else 1.0) for a, b in zip(sups, sups[1:])]
    run = best = 0
    for r in ratios:
        run = run + 1 if r > GROWTH_FACTOR else 0
        best = max(best, run)
    shown = ", ".join(f"{r:.3g}" for r in ratios)
    if best >= GROWTH_RUN:
        return NONUNIFORM, f"sup settling time grew by more than {GROWTH_FACTOR}x over {best} consecutive windows (ratios {shown})"
    if not any(censored) and ratios and ratios[-1] <= GROWTH_FACTOR:
        return UNIFORM, f"sup settling time stabilised across windows (ratios {shown})"
    if any(censored):
        return INCONCLUSIVE, "some orbits never settled within the horizon (censored)"
    return INCONCLUSIVE, f"growth rule did not fire and sup did not stabilise (ratios {shown})"


def estimate_T(
    sys: SemiflowSystem,
    A: ClosedSetSpec,
    alpha: float,
    eps: float,
    windows: Sequence[Any],
    horizon: float,
    budget: int = 200,
    seed: int = 0,
    extra_points: Any = None,
) -> SettlingReport:
    """Per-window sup of settling times into N_eps(A) from N_alpha(A).

    ``extra_points`` are added to every window that contains them, provided
    d(x, A) <= alpha; they let a caller pin the starts whose settling time it
    knows in closed form.
    """
    if not 0 < eps < alpha:
        raise ValueError("need 0 < eps < alpha")
    extra = None if extra_points is None else as_points(extra_points, A.dim)
    if extra is not None:
        extra = extra[A.distance(extra) <= alpha]
    results = []
    for W in windows:
        W = as_window(W, A.dim)
        X = sample_neighborhood(A, alpha, budget, W, seed, sys.space)
        if extra is not None:
            X = np.concatenate([extra[in_window(extra, W)], X])
        T, cens, lost = settling_times(sys, A, X, eps, horizon)
        results.append(WindowSettling(W, X, T, cens, lost))
    verdict, evidence = growth_verdict([w.sup for w in results], [w.any_censored for w in results])
    return SettlingReport(alpha, eps, horizon, results, verdict, evidence)


@dataclass
class StabilityReport:
    system: str
    eps_grid: list[float]
    delta_of_eps: list[DeltaResult]
    T_of_eps: list[SettlingReport]
    alpha: float
    verdict: str
    evidence: str
    windows: list[list[list[float]]]

    def to_dict(self) -> dict:
        return {
            "system": self.system,
            "eps_grid": self.eps_grid,
            "alpha": self.alpha,
            "delta_of_eps": [d.to_dict() for d in self.delta_of_eps],
            "T_of_eps": [{"eps": s.eps, "sups": s.sups, "verdict": s.verdict} for s in self.T_of_eps],
            "uniformity_verdict": self.verdict,
            "evidence": self.evidence,
            "windows": self.windows,
        }

    def write_settling_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["eps", "window", "x", "T", "censored"])
            for s in self.T_of_eps:
                for row in s.csv_rows():
                    w.writerow([s.eps, *row])


def certify_stability(
    sys: SemiflowSystem,
    A: ClosedSetSpec,
    eps_grid: Sequence[float],
    alpha: float,
    windows: Sequence[Any],
    horizon: float,
    budget: int = 200,
    seed: int = 0,
    extra_points: Any = None,
) -> StabilityReport:
    """delta(eps) on the largest window and T(eps) on every window, for each eps."""
    eps_grid = sorted(float(e) for e in eps_grid)
    big = windows[-1]
    deltas = [estimate_delta(sys, A, e, horizon, big, budget, seed) for e in eps_grid]
    settle = [estimate_T(sys, A, alpha, e, windows, horizon, budget, seed, extra_points) for e in eps_grid if e < alpha]
    verdicts = [s.verdict for s in settle]
    if NONUNIFORM in verdicts:
        verdict = NONUNIFORM
        evidence = next(s.evidence for s in settle if s.verdict == NONUNIFORM)
    elif verdicts and all(v == UNIFORM for v in verdicts):
        verdict, evidence = UNIFORM, "every eps tested stabilised"
    else:
        verdict, evidence = INCONCLUSIVE, "; ".join(s.evidence for s in settle) or "no eps below alpha"
    return StabilityReport(
        sys.name,
        eps_grid,
        deltas,
        settle,
        alpha,
        verdict,
        evidence,
        [as_window(w, A.dim).tolist() for w in windows],
    )


# ---------------------------------------------------------------------------
# Lyapunov data and NDR functions


@dataclass
class DecreaseViolation:
    start: np.ndarray
    time: float
    before: float
    after: float

    def to_dict(self) -> dict:
        return {"start": self.start.tolist(), "time": self.time, "before": self.before, "after": self.after}


@dataclass
class LyapunovData:
    V: Callable[[np.ndarray], np.ndarray]
    radii: np.ndarray
    lower_raw: np.ndarray
    upper_raw: np.ndarray
    lower: np.ndarray  # monotone class-K lower envelope alpha(r)
    upper: np.ndarray  # monotone class-K upper envelope beta(r)
    decrease_violations: list[DecreaseViolation]
    A: ClosedSetSpec
    on_set_tol: float = ON_SET_TOL

    def upper_at(self, r: float) -> float:
        return float(np.interp(r, self.radii, self.upper))

    def upper_inverse(self, level: float) -> float | None:
        """Smallest r with beta(r) >= level, by linear interpolation; None if never."""
        hit = np.flatnonzero(self.upper >= level)
        if len(hit) == 0:
            return None
        i = int(hit[0])
        if i == 0:
            return float(self.radii[0])
        r0, r1 = self.radii[i - 1], self.radii[i]
        b0, b1 = self.upper[i - 1], self.upper[i]
        return float(r0 + (level - b0) * (r1 - r0) / (b1 - b0))

    def to_dict(self) -> dict:
        return {
            "radii": self.radii.tolist(),
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "decrease_violations": [v.to_dict() for v in self.decrease_violations],
        }


def squared_distance(A: ClosedSetSpec) -> Callable[[np.ndarray], np.ndarray]:
    return lambda X: np.square(A.distance(X))


def build_default_lyapunov(
    sys: SemiflowSystem,
    A: ClosedSetSpec,
    samples: Any,
    horizon: float,
    radii: Sequence[float] | None = None,
    window: Any = None,
    shell_count: int = 200,
    seed: int = 0,
    on_set_tol: float = ON_SET_TOL,
) -> LyapunovData:
    """V = d(., A)^2, checked for strict decrease along sampled orbits.

    A violation is a stored step with V(next) >= V(prev) while the orbit is
    still farther than ``on_set_tol`` from A.  Envelopes come from inf/sup of
    V over exact distance shells, then get monotone regularisation.
    """
    V = squared_distance(A)
    X = as_points(samples, A.dim)
    prev = np.full(len(X), np.nan)
    first_bad: dict[int, DecreaseViolation] = {}

    def observe(k: int, t: float, Y: np.ndarray, alive: np.ndarray) -> None:
        cur = np.full(len(Y), np.nan)
        cur[alive] = V(Y[alive])
        if k > 0:
            bad = alive & (cur >= prev) & (prev > on_set_tol**2)
            for i in np.flatnonzero(bad):
                if int(i) not in first_bad:
                    first_bad[int(i)] = DecreaseViolation(X[i].copy(), float(t), float(prev[i]), float(cur[i]))
        prev[:] = cur

    if len(X):
        simulate_batch(sys, X, horizon, observe=observe)
    r = np.linspace(0.0, 2.0, 21) if radii is None else np.asarray(sorted(radii), dtype=float)
    lo_raw = np.empty(len(r))
    hi_raw = np.empty(len(r))
    for j, rad in enumerate(r):
        if rad == 0:
            lo_raw[j] = hi_raw[j] = 0.0
            continue
        S = sample_distance_shell(A, rad, shell_count, window, seed)
        vals = V(S) if len(S) else np.array([rad * rad])
        lo_raw[j], hi_raw[j] = float(np.min(vals)), float(np.max(vals))
    lower = np.minimum.accumulate(lo_raw[::-1])[::-1]
    upper = np.maximum.accumulate(hi_raw)
    violations = [first_bad[i] for i in sorted(first_bad)]
    return LyapunovData(V, r, lo_raw, hi_raw, lower, upper, violations, A, on_set_tol)


@dataclass
class NDRFunction:
    u: Callable[[np.ndarray], np.ndarray]
    kind: str
    eps_prime: float | None
    diagnostics: dict = field(default_factory=dict)

    def __call__(self, X: Any) -> np.ndarray:
        return self.u(as_points(X))


def build_ndr_function(
    source: LyapunovData | tuple[ClosedSetSpec, float],
    samples: Any = None,
    on_set_tol: float = ON_SET_TOL,
) -> NDRFunction:
    """u = V/(1+V) from Lyapunov data, or the metric clamp min(1, d/eps) from (A, eps).

    Diagnostics on ``samples``: u stays in [0, 1]; u vanishes exactly on the
    samples within ``on_set_tol`` of A; u < 1 on N_eps'(A).
    """
    if isinstance(source, LyapunovData):
        A, Vf = source.A, source.V

        def u(X: np.ndarray) -> np.ndarray:
            v = Vf(X)
            return v / (1.0 + v)

        kind = "lyapunov"
        eps_prime = source.upper_inverse(1.0)
        b = source.upper_at(on_set_tol)
        zero_bound = b / (1.0 + b)
    else:
        A, eps = source
        if not eps > 0:
            raise ValueError("eps must be positive")

        def u(X: np.ndarray) -> np.ndarray:
            return np.minimum(1.0, A.distance(X) / eps)

        kind = "metric"
        eps_prime = float(eps)
        zero_bound = on_set_tol / eps
    diag: dict[str, Any] = {}
    if samples is not None:
        X = as_points(samples, A.dim)
        uv = u(X)
        d = A.distance(X)
        near = d <= on_set_tol
        diag["in_unit_interval"] = bool(np.all((uv >= 0) & (uv <= 1)))
        diag["zero_set_matches"] = bool(np.all(uv[near] <= zero_bound) and np.all(uv[~near] > 0))
        if eps_prime is not None:
            inner = d < eps_prime
            diag["below_one_on_neighbourhood"] = bool(np.all(uv[inner] < 1))
        diag["samples"] = int(len(X))
    return NDRFunction(u, kind, eps_prime, diag)
