"""Semiflows on punctured Euclidean spaces.

A system carries a vector field, an exact flow map, or both.  The exact map is
preferred whenever present; otherwise orbits come from fixed-step RK4 whose
final step is shortened to land exactly on the requested time.  Orbits that
come within ``domain_guard`` of a puncture stop with ``left_domain``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Any, Callable

import numpy as np

from .geometry import AmbientSpace, ClosedSetSpec, as_point, as_points, estimate_reach, set_from_dict

COMPLETED = "completed"
LEFT_DOMAIN = "left_domain"
STEP_LIMIT = "step_limit"

VectorField = Callable[[np.ndarray], np.ndarray]
# closed forms broadcast: X of shape (..., n) against t of shape (...)
FlowMap = Callable[[np.ndarray, Any], np.ndarray]


class LeftDomainError(RuntimeError):
    def __init__(self, last_state: np.ndarray, time: float):
        super().__init__(f"orbit reached a puncture guard ball at t={time:.6g}")
        self.last_state = last_state
        self.time = time


class StepLimitError(RuntimeError):
    pass


class ReachViolationError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class SemiflowSystem:
    space: AmbientSpace
    rhs: VectorField | None = None
    closed_form: FlowMap | None = None
    h: float = 0.01
    max_steps: int = 1_000_000
    domain_guard: float = 1e-6
    name: str = "custom"
    label: str = ""
    config: dict | None = None

    def __post_init__(self) -> None:
        if self.rhs is None and self.closed_form is None:
            raise ValueError("a system needs a vector field or a closed-form flow")
        if not self.h > 0:
            raise ValueError("step h must be positive")
        if self.max_steps <= 0:
            raise ValueError("max_steps must be positive")

    @property
    def dim(self) -> int:
        return self.space.dimension

    def with_step(self, h: float) -> "SemiflowSystem":
        return replace(self, h=float(h))

    def integrated(self) -> "SemiflowSystem":
        """Same system with the exact flow dropped, forcing RK4."""
        if self.rhs is None:
            raise ValueError("system has no vector field to integrate")
        return replace(self, closed_form=None)

    def to_dict(self) -> dict:
        if self.config is None:
            raise ValueError("system was built from bare callables and has no JSON form")
        return dict(self.config, h=self.h, max_steps=self.max_steps, domain_guard=self.domain_guard)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    termination: str

    def to_csv_rows(self) -> list[list[float]]:
        return [[float(t), *map(float, x)] for t, x in zip(self.times, self.states)]


def time_grid(T: float, h: float) -> np.ndarray:
    """0, h, 2h, ... with the last step shortened to end exactly at T."""
    if T < 0:
        raise ValueError("only forward time is supported")
    if T == 0:
        return np.zeros(1)
    n = int(math.ceil(T / h - 1e-9))
    t = np.arange(n + 1) * h
    t[-1] = T
    return t


def rk4_step(f: VectorField, X: np.ndarray, dt: float) -> np.ndarray:
    k1 = f(X)
    k2 = f(X + 0.5 * dt * k1)
    k3 = f(X + 0.5 * dt * k2)
    k4 = f(X + dt * k3)
    return X + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass
class BatchResult:
    times: np.ndarray
    final: np.ndarray  # NaN rows for orbits that did not complete
    status: np.ndarray  # per-row termination label
    exit_state: np.ndarray  # last valid state of each row
    exit_time: np.ndarray


Observer = Callable[[int, float, np.ndarray, np.ndarray], None]


@dataclass
class Chunk:
    start: int  # index of the first stored step in this chunk
    times: np.ndarray  # (K,)
    states: np.ndarray  # (K, m, n), NaN where the orbit has left the domain
    alive: np.ndarray  # (K, m)


def simulate_chunks(sys: SemiflowSystem, X0: Any, T: float, h: float | None = None, chunk: int = 256):
    """Yield the stored steps 0..N of every orbit in blocks of ``chunk`` steps.

    Closed-form systems evaluate a whole block in one broadcast call, which
    is what makes long horizons cheap; integrated systems step RK4 row-wise.
    """
    X0 = as_points(X0, sys.dim)
    h = sys.h if h is None else float(h)
    times = time_grid(T, h)
    if len(times) - 1 > sys.max_steps:
        raise StepLimitError(f"{len(times) - 1} steps requested, limit is {sys.max_steps}")
    m, n = X0.shape
    alive = sys.space.contains(X0, sys.domain_guard) if m else np.zeros(0, dtype=bool)
    cur = np.where(alive[:, None], X0, np.nan)
    for k0 in range(0, len(times), chunk):
        tk = times[k0 : k0 + chunk]
        K = len(tk)
        if sys.closed_form is not None:
            S = np.asarray(sys.closed_form(X0[None, :, :], tk[:, None]), dtype=float).reshape(K, m, n)
            if k0 == 0:
                S[0] = X0
        else:
            S = np.empty((K, m, n))
            start = 0
            if k0 == 0:
                S[0] = cur
                start = 1
            for j in range(start, K):
                k = k0 + j
                nxt = np.full_like(cur, np.nan)
                if np.any(alive):
                    nxt[alive] = rk4_step(sys.rhs, cur[alive], times[k] - times[k - 1])
                S[j] = nxt
                cur = nxt
        ok = np.all(np.isfinite(S), axis=2)
        flat = ok.ravel()
        flat[flat] = sys.space.contains(S.reshape(-1, n)[flat], sys.domain_guard)
        ok = flat.reshape(K, m)
        # once an orbit has left the domain it stays out
        ok = np.logical_and.accumulate(np.concatenate([alive[None], ok]), axis=0)[1:]
        S[~ok] = np.nan
        alive = ok[-1]
        if sys.closed_form is None:
            cur = S[-1].copy()
        yield Chunk(k0, tk, S, ok)


def simulate_batch(
    sys: SemiflowSystem,
    X0: Any,
    T: float,
    h: float | None = None,
    observe: Observer | None = None,
) -> BatchResult:
    """Advance every row of X0 to time T.

    ``observe(k, t, X, alive)`` is called at every stored step (k = 0 is the
    initial state); rows that have left the domain are NaN in X and False in
    ``alive``.  Nothing is stored beyond what the observer keeps.
    """
    X0 = as_points(X0, sys.dim)
    m = len(X0)
    status = np.full(m, COMPLETED, dtype=object)
    exit_state = X0.copy()
    exit_time = np.zeros(m)
    last = X0.copy()
    times = time_grid(T, sys.h if h is None else float(h))
    for ch in simulate_chunks(sys, X0, T, h):
        for j in range(len(ch.times)):
            X, alive = ch.states[j], ch.alive[j]
            if observe is not None:
                observe(ch.start + j, float(ch.times[j]), X, alive)
            exit_state[alive] = X[alive]
            exit_time[alive] = ch.times[j]
            last = X
    status[np.isnan(last).any(axis=1)] = LEFT_DOMAIN
    return BatchResult(times, last, status, exit_state, exit_time)


def integrate(sys: SemiflowSystem, x: Any, T: float, h: float | None = None) -> Trajectory:
    """Stored orbit of a single point; truncated (not raised) on domain exit or step limit."""
    x = as_point(x, sys.dim)
    h = sys.h if h is None else float(h)
    times = time_grid(T, h)
    termination = COMPLETED
    if len(times) - 1 > sys.max_steps:
        times = times[: sys.max_steps + 1]
        termination = STEP_LIMIT
    states = np.empty((len(times), sys.dim))
    states[0] = x
    if not sys.space.contains(x[None], sys.domain_guard)[0]:
        return Trajectory(times[:1], states[:1], LEFT_DOMAIN)
    cur = x[None, :]
    for k in range(1, len(times)):
        if sys.closed_form is not None:
            nxt = sys.closed_form(x[None, :], times[k])
        else:
            nxt = rk4_step(sys.rhs, cur, times[k] - times[k - 1])
        if not (np.all(np.isfinite(nxt)) and sys.space.contains(nxt, sys.domain_guard)[0]):
            return Trajectory(times[:k], states[:k], LEFT_DOMAIN)
        states[k] = nxt[0]
        cur = nxt
    return Trajectory(times, states, termination)


def flow_at(sys: SemiflowSystem, x: Any, t: float, h: float | None = None) -> np.ndarray:
    x = as_point(x, sys.dim)
    if t < 0:
        raise ValueError("only forward time is supported")
    if not sys.space.contains(x[None], sys.domain_guard)[0]:
        raise LeftDomainError(x.copy(), 0.0)
    if t == 0:
        return x.copy()
    if sys.closed_form is not None:
        return np.asarray(sys.closed_form(x[None, :], float(t)), dtype=float)[0]
    traj = integrate(sys, x, t, h)
    if traj.termination == LEFT_DOMAIN:
        raise LeftDomainError(traj.states[-1].copy(), float(traj.times[-1]))
    if traj.termination == STEP_LIMIT:
        raise StepLimitError(f"reaching t={t} needs more than {sys.max_steps} steps")
    return traj.states[-1].copy()


def flow_batch(sys: SemiflowSystem, X: Any, T: Any, h: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """phi^{T_i}(X_i) for per-row end times; returns (states, ok mask).

    Rows run in lockstep with step h, each with its own shortened last step.
    Rows with T_i = 0 come back bitwise unchanged; rows that reach a
    puncture guard come back NaN with ok False.
    """
    X = as_points(X, sys.dim)
    T = np.array(np.broadcast_to(np.asarray(T, dtype=float), (len(X),)))
    if np.any(T < 0):
        raise ValueError("only forward time is supported")
    ok = sys.space.contains(X, sys.domain_guard) if len(X) else np.zeros(0, dtype=bool)
    out = X.copy()
    if sys.closed_form is not None:
        idx = ok & (T > 0)
        if np.any(idx):
            Y = np.asarray(sys.closed_form(X[idx], T[idx]), dtype=float)
            good = np.all(np.isfinite(Y), axis=1)
            good[good] = sys.space.contains(Y[good], sys.domain_guard)
            out[idx] = Y
            ok[np.flatnonzero(idx)[~good]] = False
    else:
        h = sys.h if h is None else float(h)
        nsteps = np.where(T > 0, np.ceil(T / h - 1e-9), 0).astype(np.int64)
        if len(nsteps) and nsteps.max() > sys.max_steps:
            raise StepLimitError(f"{nsteps.max()} steps requested, limit is {sys.max_steps}")
        last_dt = T - (nsteps - 1) * h
        for k in range(int(nsteps.max()) if len(nsteps) else 0):
            act = ok & (k < nsteps)
            if not np.any(act):
                break
            dt = np.where(k == nsteps - 1, last_dt, h)[act]
            Y = rk4_step(sys.rhs, out[act], dt[:, None])
            good = np.all(np.isfinite(Y), axis=1)
            good[good] = sys.space.contains(Y[good], sys.domain_guard)
            out[act] = Y
            ok[np.flatnonzero(act)[~good]] = False
    out[~ok] = np.nan
    return out, ok


def check_semigroup(sys: SemiflowSystem, x: Any, t: float, s: float, h: float | None = None) -> float:
    if t < 0 or s < 0:
        raise ValueError("t and s must be nonnegative")
    two_leg = flow_at(sys, flow_at(sys, x, t, h), s, h)
    one_leg = flow_at(sys, x, t + s, h)
    return float(np.linalg.norm(two_leg - one_leg))


# ---------------------------------------------------------------------------
# built-in systems


def _counter_s1_rhs(X: np.ndarray) -> np.ndarray:
    # -grad d(x, S^1)^2 = -2 (rho - 1) x / rho, set to zero at the origin
    rho = np.linalg.norm(X, axis=1, keepdims=True)
    safe = np.where(rho > 0, rho, 1.0)
    return np.where(rho > 0, -2.0 * (rho - 1.0) * X / safe, 0.0)


def _strip_rate(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.square(x))


def _strip_rhs(X: np.ndarray) -> np.ndarray:
    return np.stack([np.zeros(len(X)), -_strip_rate(X[:, 0]) * X[:, 1]], axis=1)


def _strip_flow(X: np.ndarray, t: Any) -> np.ndarray:
    x, y = np.broadcast_arrays(X[..., 0], X[..., 1], np.asarray(t, dtype=float))[:2]
    return np.stack([x, np.exp(-_strip_rate(X[..., 0]) * t) * y], axis=-1)


def _contraction_rhs(X: np.ndarray) -> np.ndarray:
    return np.stack([np.zeros(len(X)), -X[:, 1]], axis=1)


def _contraction_flow(X: np.ndarray, t: Any) -> np.ndarray:
    x, y = np.broadcast_arrays(X[..., 0], X[..., 1], np.asarray(t, dtype=float))[:2]
    return np.stack([x, np.exp(-np.asarray(t, dtype=float)) * y], axis=-1)


def distance_gradient(A: ClosedSetSpec, X: Any, step: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient of d(., A).

    The stencil shrinks to a quarter of the distance near A so that it never
    straddles the set, where d has a kink.
    """
    X = as_points(X, A.dim)
    hs = np.minimum(step, np.maximum(0.25 * A.distance(X), 1e-10))
    G = np.empty_like(X)
    for i in range(A.dim):
        E = np.zeros_like(X)
        E[:, i] = hs
        G[:, i] = (A.distance(X + E) - A.distance(X - E)) / (2.0 * hs)
    return G


def make_distance_flow_rhs(A: ClosedSetSpec, r: float, on_set_tol: float = 1e-12) -> VectorField:
    def rhs(X: np.ndarray) -> np.ndarray:
        d = A.distance(X)
        G = distance_gradient(A, X)
        n2 = np.sum(G * G, axis=1)
        active = (d > on_set_tol) & (d < r) & (n2 > 0)
        out = np.zeros_like(X)
        out[active] = -G[active] / n2[active, None]
        return out

    return rhs


def builtin_system(name: str, **params: Any) -> SemiflowSystem:
    """Named systems.  ``distance_flow`` needs ``A`` (a ClosedSetSpec) and ``r``;
    its reach is re-estimated here and must reach r."""
    h = float(params.get("h", 0.01))
    if name == "counterS1":
        return SemiflowSystem(
            AmbientSpace(2, ((1.0, 0.0),)),
            rhs=_counter_s1_rhs,
            h=h,
            name=name,
            label="negative gradient flow of the squared distance to the unit circle, plane punctured at (1,0)",
            config={"builtin": name},
        )
    if name == "nonuniform_strip":
        return SemiflowSystem(
            AmbientSpace(2),
            rhs=_strip_rhs,
            closed_form=_strip_flow,
            h=h,
            name=name,
            label="y' = -y/(1+x^2): decay rate vanishing as |x| grows",
            config={"builtin": name},
        )
    if name == "xaxis_contraction":
        return SemiflowSystem(
            AmbientSpace(2),
            rhs=_contraction_rhs,
            closed_form=_contraction_flow,
            h=h,
            name=name,
            label="stand-in system x1' = 0, x2' = -x2 (uniform contraction onto the x-axis)",
            config={"builtin": name},
        )
    if name == "constant":
        dim = int(params.get("dimension", 2))
        return SemiflowSystem(
            AmbientSpace(dim),
            rhs=lambda X: np.zeros_like(X),
            closed_form=lambda X, t: np.array(np.broadcast_to(X, np.broadcast_shapes(X.shape, np.shape(t) + (1,))), dtype=float),
            h=h,
            name=name,
            label="constant flow",
            config={"builtin": name, "dimension": dim},
        )
    if name == "distance_flow":
        A = params["A"]
        r = float(params["r"])
        if not r > 0:
            raise ValueError("distance_flow needs r > 0")
        window = params.get("window")
        report = estimate_reach(A, r, r / 50.0, window=window)
        if report.r_lo < r - 1e-12:
            raise ReachViolationError(f"reach estimate {report.r_lo:.4g} is below the requested radius {r:.4g}")
        return SemiflowSystem(
            AmbientSpace(A.dim),
            rhs=make_distance_flow_rhs(A, r),
            h=h,
            name=name,
            label="unit-speed descent of the distance inside the reach tube",
            config={"builtin": name, "set": A.to_dict(), "r": r, "window": window},
        )
    raise ValueError(f"unknown system {name!r}")


# ---------------------------------------------------------------------------
# JSON polynomial / rational fields


def _polynomial(terms: list[dict], dim: int) -> Callable[[np.ndarray], np.ndarray]:
    coefs = np.array([float(t["coef"]) for t in terms])
    powers = np.array([t["powers"] for t in terms], dtype=int).reshape(len(terms), dim)

    def p(X: np.ndarray) -> np.ndarray:
        if len(terms) == 0:
            return np.zeros(len(X))
        mono = np.prod(X[:, None, :] ** powers[None, :, :], axis=2)
        return mono @ coefs

    return p


def polynomial_field(dim: int, components: list[list[dict]], denominators: list[list[dict]] | None = None) -> VectorField:
    if len(components) != dim:
        raise ValueError("need one polynomial per coordinate")
    nums = [_polynomial(c, dim) for c in components]
    dens = None if denominators is None else [_polynomial(c, dim) for c in denominators]

    def rhs(X: np.ndarray) -> np.ndarray:
        cols = [p(X) for p in nums]
        if dens is not None:
            cols = [c / q(X) for c, q in zip(cols, dens)]
        return np.stack(cols, axis=1)

    return rhs


def system_from_dict(data: dict) -> SemiflowSystem:
    step = {k: data[k] for k in ("h", "max_steps", "domain_guard") if k in data}
    if "builtin" in data:
        params = {k: v for k, v in data.items() if k not in ("builtin", "max_steps", "domain_guard")}
        if "set" in params:
            params["A"] = set_from_dict(params.pop("set"))
        sys = builtin_system(data["builtin"], **params)
    elif "polynomial" in data:
        poly = data["polynomial"]
        space = AmbientSpace.from_dict(data.get("space", {"dimension": poly["dimension"]}))
        sys = SemiflowSystem(
            space,
            rhs=polynomial_field(space.dimension, poly["components"], poly.get("denominators")),
            name="polynomial",
            label=data.get("label", "polynomial vector field"),
            config={k: data[k] for k in ("polynomial", "space", "label") if k in data},
        )
    else:
        raise ValueError("system config needs 'builtin' or 'polynomial'")
    return replace(sys, **step) if step else sys
