"""Closed subsets of Euclidean space and the metric operations on them.

Every set is described analytically (affine subspaces, circular arcs, finite
point sets, products with free Euclidean factors) or by a point cloud with a
density guarantee.  Distances and projections are exact for the analytic
variants.  Unbounded sets never get silently truncated: any operation that has
to sample one needs an explicit axis-aligned window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree

TWO_PI = 2.0 * math.pi
ON_SET_TOL = 1e-9


class DimensionMismatchError(ValueError):
    pass


class WindowRequiredError(ValueError):
    """Raised when an unbounded set has to be sampled without a window."""


# ---------------------------------------------------------------------------
# points and windows


def as_points(X: Any, dim: int | None = None) -> np.ndarray:
    """Return ``X`` as a finite float array of shape (m, n)."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError(f"expected points of shape (m, n), got {arr.shape}")
    if dim is not None and arr.shape[1] != dim:
        raise DimensionMismatchError(f"points have dimension {arr.shape[1]}, set lives in dimension {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("points must have finite coordinates")
    return arr


def as_point(x: Any, dim: int | None = None) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"expected a single point, got shape {arr.shape}")
    return as_points(arr, dim)[0]


def as_window(window: Any, dim: int | None = None) -> np.ndarray | None:
    """Normalise a window ``[(lo, hi), ...]`` to an (n, 2) array."""
    if window is None:
        return None
    W = np.asarray(window, dtype=float)
    if W.ndim != 2 or W.shape[1] != 2:
        raise ValueError("window must be a sequence of (lo, hi) pairs")
    if dim is not None and W.shape[0] != dim:
        raise DimensionMismatchError(f"window has dimension {W.shape[0]}, expected {dim}")
    if np.any(W[:, 1] <= W[:, 0]):
        raise ValueError("window needs lo < hi in every coordinate")
    return W


def in_window(X: np.ndarray, window: np.ndarray | None) -> np.ndarray:
    if window is None:
        return np.ones(len(X), dtype=bool)
    return np.all((X >= window[:, 0]) & (X <= window[:, 1]), axis=1)


def grid_points(window: Any, spacing: float) -> np.ndarray:
    """Regular grid covering ``window`` with the given spacing (row-major)."""
    W = as_window(window)
    axes = []
    for lo, hi in W:
        n = int(math.floor((hi - lo) / spacing + 1e-9))
        axes.append(lo + spacing * np.arange(n + 1))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _unit_ball(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    """Uniform samples from the open unit ball."""
    g = rng.standard_normal((count, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    radius = rng.random(count) ** (1.0 / dim)
    return g * radius[:, None]


# ---------------------------------------------------------------------------
# ambient space


@dataclass(frozen=True)
class AmbientSpace:
    """R^n with finitely many points removed."""

    dimension: int
    punctures: tuple[tuple[float, ...], ...] = ()

    def __post_init__(self) -> None:
        if self.dimension <= 0:
            raise ValueError("dimension must be positive")
        pts = tuple(tuple(float(c) for c in p) for p in self.punctures)
        for p in pts:
            if len(p) != self.dimension:
                raise DimensionMismatchError("puncture dimension does not match the space")
        if len(set(pts)) != len(pts):
            raise ValueError("punctures must be pairwise distinct")
        object.__setattr__(self, "punctures", pts)

    def puncture_distance(self, X: Any) -> np.ndarray:
        X = as_points(X, self.dimension)
        if not self.punctures:
            return np.full(len(X), np.inf)
        P = np.asarray(self.punctures)
        return np.min(np.linalg.norm(X[:, None, :] - P[None, :, :], axis=2), axis=1)

    def contains(self, X: Any, guard: float = 0.0) -> np.ndarray:
        return self.puncture_distance(X) > guard

    def to_dict(self) -> dict:
        return {"dimension": self.dimension, "punctures": [list(p) for p in self.punctures]}

    @classmethod
    def from_dict(cls, data: dict) -> "AmbientSpace":
        return cls(int(data["dimension"]), tuple(tuple(p) for p in data.get("punctures", [])))


# ---------------------------------------------------------------------------
# closed sets


class ClosedSetSpec:
    """Interface shared by all closed-set descriptions.

    Subclasses implement vectorised ``distance`` and ``nearest`` (one
    minimiser per row), ``minimizers`` (all tol-minimisers of a single point,
    discretised finely enough to be clustered) and ``sample`` (points of the
    set inside an optional window).
    """

    kind: str = ""

    @property
    def dim(self) -> int:
        raise NotImplementedError

    @property
    def bounded(self) -> bool:
        raise NotImplementedError

    def distance(self, X: Any) -> np.ndarray:
        raise NotImplementedError

    def nearest(self, X: Any) -> np.ndarray:
        raise NotImplementedError

    def minimizers(self, x: np.ndarray, tol: float, spacing: float) -> np.ndarray:
        raise NotImplementedError

    def sample(self, count: int, rng: np.random.Generator, window: np.ndarray | None = None) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    def _require_window(self, window: np.ndarray | None) -> np.ndarray:
        if window is None:
            raise WindowRequiredError(f"{self.kind} set is unbounded; pass an explicit sampling window")
        return as_window(window, self.dim)


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class AffineSubspace(ClosedSetSpec):
    """basepoint + span(directions); directions must be orthonormal rows."""

    basepoint: np.ndarray
    directions: np.ndarray
    kind = "affine"

    def __post_init__(self) -> None:
        b = _readonly(np.atleast_1d(self.basepoint))
        D = np.asarray(self.directions, dtype=float)
        if D.size == 0:
            D = np.zeros((0, b.size))
        D = np.atleast_2d(D)
        if D.shape[1] != b.size:
            raise DimensionMismatchError("directions and basepoint disagree on dimension")
        if not np.allclose(D @ D.T, np.eye(D.shape[0]), atol=1e-10):
            raise ValueError("directions must be orthonormal")
        object.__setattr__(self, "basepoint", b)
        object.__setattr__(self, "directions", _readonly(D))

    @classmethod
    def coordinate_axis(cls, dim: int = 2, axis: int = 0) -> "AffineSubspace":
        e = np.zeros(dim)
        e[axis] = 1.0
        return cls(np.zeros(dim), e[None, :])

    @property
    def dim(self) -> int:
        return self.basepoint.size

    @property
    def bounded(self) -> bool:
        return self.directions.shape[0] == 0

    def _offset(self, X: Any) -> tuple[np.ndarray, np.ndarray]:
        X = as_points(X, self.dim)
        R = X - self.basepoint
        along = (R @ self.directions.T) @ self.directions
        return X, R - along

    def distance(self, X: Any) -> np.ndarray:
        _, normal = self._offset(X)
        return np.linalg.norm(normal, axis=1)

    def nearest(self, X: Any) -> np.ndarray:
        X, normal = self._offset(X)
        return X - normal

    def minimizers(self, x: np.ndarray, tol: float, spacing: float) -> np.ndarray:
        return self.nearest(x)

    def sample(self, count: int, rng: np.random.Generator, window: np.ndarray | None = None) -> np.ndarray:
        if self.bounded:
            return np.tile(self.basepoint, (count, 1))
        W = self._require_window(window)
        D, b = self.directions, self.basepoint
        tmin = np.minimum(D * W[:, 0], D * W[:, 1]).sum(axis=1) - D @ b
        tmax = np.maximum(D * W[:, 0], D * W[:, 1]).sum(axis=1) - D @ b
        out: list[np.ndarray] = []
        have = 0
        for _ in range(1000):
            t = rng.uniform(tmin, tmax, size=(max(2 * (count - have), 16), D.shape[0]))
            P = b + t @ D
            P = P[in_window(P, W)]
            out.append(P)
            have += len(P)
            if have >= count:
                return np.concatenate(out)[:count]
        raise ValueError("affine subspace does not meet the sampling window")

    def to_dict(self) -> dict:
        return {"type": self.kind, "basepoint": self.basepoint.tolist(), "directions": self.directions.tolist()}


@dataclass(frozen=True, eq=False)
class SphereArc(ClosedSetSpec):
    """Arc of a circle in the plane, angles in radians, counter-clockwise.

    The interval [theta0, theta1] is closed; a span of 2*pi or more is the
    full circle.
    """

    center: np.ndarray
    radius: float
    theta0: float = 0.0
    theta1: float = TWO_PI
    kind = "arc"

    def __post_init__(self) -> None:
        c = _readonly(self.center)
        if c.shape != (2,):
            raise DimensionMismatchError("arcs live in the plane")
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if not self.theta1 > self.theta0:
            raise ValueError("need theta0 < theta1")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))

    @classmethod
    def circle(cls, center: Sequence[float] = (0.0, 0.0), radius: float = 1.0) -> "SphereArc":
        return cls(np.asarray(center, dtype=float), radius)

    @property
    def full(self) -> bool:
        return self.theta1 - self.theta0 >= TWO_PI - 1e-15

    @property
    def span(self) -> float:
        return min(self.theta1 - self.theta0, TWO_PI)

    @property
    def dim(self) -> int:
        return 2

    @property
    def bounded(self) -> bool:
        return True

    def point_at(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return self.center + self.radius * np.stack([np.cos(theta), np.sin(theta)], axis=-1)

    def _endpoints(self) -> np.ndarray:
        return self.point_at(np.array([self.theta0, self.theta1]))

    def _polar(self, X: Any) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        X = as_points(X, 2)
        rel = X - self.center
        return X, np.hypot(rel[:, 0], rel[:, 1]), np.arctan2(rel[:, 1], rel[:, 0])

    def _in_arc(self, phi: np.ndarray) -> np.ndarray:
        if self.full:
            return np.ones_like(phi, dtype=bool)
        return np.mod(phi - self.theta0, TWO_PI) <= self.span + 1e-15

    def distance(self, X: Any) -> np.ndarray:
        X, rho, phi = self._polar(X)
        radial = np.abs(rho - self.radius)
        if self.full:
            return radial
        ends = self._endpoints()
        e = np.min(np.linalg.norm(X[:, None, :] - ends[None, :, :], axis=2), axis=1)
        return np.where(self._in_arc(phi) | (rho == 0.0), radial, e)

    def nearest(self, X: Any) -> np.ndarray:
        X, rho, phi = self._polar(X)
        theta = np.where(rho == 0.0, self.theta0, phi)
        foot = self.point_at(theta)
        if self.full:
            return foot
        ends = self._endpoints()
        de = np.linalg.norm(X[:, None, :] - ends[None, :, :], axis=2)
        end = ends[np.argmin(de, axis=1)]
        inside = self._in_arc(phi) | (rho == 0.0)
        return np.where(inside[:, None], foot, end)

    def minimizers(self, x: np.ndarray, tol: float, spacing: float) -> np.ndarray:
        X, rho, phi = self._polar(x)
        rho, phi = float(rho[0]), float(phi[0])
        R = self.radius
        bound = float(self.distance(X)[0]) + tol
        if rho == 0.0:
            half = math.pi
        else:
            kappa = (rho * rho + R * R - bound * bound) / (2.0 * rho * R)
            half = math.pi if kappa <= -1.0 else (0.0 if kappa >= 1.0 else math.acos(kappa))
        # qualifying angles form [phi - half, phi + half]; intersect with the arc
        span = self.span
        pieces: list[tuple[float, float]] = []
        if half >= math.pi:
            pieces.append((0.0, span))
        else:
            s = (phi - half - self.theta0) % TWO_PI
            e = s + 2.0 * half
            for lo, hi in ((s, min(e, TWO_PI)), (0.0, e - TWO_PI)):
                lo, hi = max(lo, 0.0), min(hi, span)
                if hi >= lo:
                    pieces.append((lo, hi))
        thetas = [np.array([self.theta0 if rho == 0.0 else phi])] if (rho == 0.0 or self._in_arc(np.array([phi]))[0]) else []
        for lo, hi in pieces:
            n = max(1, int(math.ceil((hi - lo) * R / spacing)))
            thetas.append(self.theta0 + np.linspace(lo, hi, n + 1))
        if not self.full:
            thetas.append(np.array([self.theta0, self.theta1]))
        P = self.point_at(np.concatenate(thetas))
        d = np.linalg.norm(P - X[0], axis=1)
        return P[d <= bound + 1e-12]

    def sample(self, count: int, rng: np.random.Generator, window: np.ndarray | None = None) -> np.ndarray:
        W = as_window(window, 2)
        out: list[np.ndarray] = []
        have = 0
        for _ in range(1000):
            th = self.theta0 + self.span * rng.random(max(2 * (count - have), 16))
            P = self.point_at(th)
            P = P[in_window(P, W)]
            out.append(P)
            have += len(P)
            if have >= count:
                return np.concatenate(out)[:count]
        raise ValueError("arc does not meet the sampling window")

    def to_dict(self) -> dict:
        return {
            "type": self.kind,
            "center": self.center.tolist(),
            "radius": self.radius,
            "theta0": self.theta0,
            "theta1": self.theta1,
        }


@dataclass(frozen=True, eq=False)
class FinitePointSet(ClosedSetSpec):
    points: np.ndarray
    kind = "points"

    def __post_init__(self) -> None:
        P = as_points(self.points)
        if len(P) == 0:
            raise ValueError("point set must be nonempty")
        object.__setattr__(self, "points", _readonly(P))
        object.__setattr__(self, "_tree", cKDTree(P))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def bounded(self) -> bool:
        return True

    def distance(self, X: Any) -> np.ndarray:
        d, _ = self._tree.query(as_points(X, self.dim))
        return np.asarray(d, dtype=float)

    def nearest(self, X: Any) -> np.ndarray:
        _, idx = self._tree.query(as_points(X, self.dim))
        return self.points[idx]

    def minimizers(self, x: np.ndarray, tol: float, spacing: float) -> np.ndarray:
        x = as_point(x, self.dim)
        bound = float(self.distance(x)[0]) + tol
        idx = sorted(self._tree.query_ball_point(x, bound + 1e-12))
        return self.points[idx]

    def sample(self, count: int, rng: np.random.Generator, window: np.ndarray | None = None) -> np.ndarray:
        W = as_window(window, self.dim)
        pool = self.points[in_window(self.points, W)]
        if len(pool) == 0:
            raise ValueError("no point of the set lies in the sampling window")
        return pool[rng.integers(0, len(pool), size=count)]

    def to_dict(self) -> dict:
        return {"type": self.kind, "points": self.points.tolist()}


@dataclass(frozen=True, eq=False)
class SampledSet(FinitePointSet):
    """Point cloud standing in for a set it covers to within ``density``.

    Distances are upper estimates: d_cloud - density <= d_true <= d_cloud.
    """

    density: float = 0.0
    kind = "sampled"

    def to_dict(self) -> dict:
        return {"type": self.kind, "points": self.points.tolist(), "density": self.density}


@dataclass(frozen=True, eq=False)
class ProductSet(ClosedSetSpec):
    """factor x R^free_dims, with the free coordinates last."""

    factor: ClosedSetSpec
    free_dims: int
    kind = "product"

    def __post_init__(self) -> None:
        if self.free_dims < 0:
            raise ValueError("free_dims must be nonnegative")

    @property
    def dim(self) -> int:
        return self.factor.dim + self.free_dims

    @property
    def bounded(self) -> bool:
        return self.free_dims == 0 and self.factor.bounded

    def distance(self, X: Any) -> np.ndarray:
        X = as_points(X, self.dim)
        return self.factor.distance(X[:, : self.factor.dim])

    def nearest(self, X: Any) -> np.ndarray:
        X = as_points(X, self.dim)
        k = self.factor.dim
        return np.concatenate([self.factor.nearest(X[:, :k]), X[:, k:]], axis=1)

    def minimizers(self, x: np.ndarray, tol: float, spacing: float) -> np.ndarray:
        x = as_point(x, self.dim)
        k = self.factor.dim
        F = self.factor.minimizers(x[:k], tol, spacing)
        return np.concatenate([F, np.tile(x[k:], (len(F), 1))], axis=1)

    def sample(self, count: int, rng: np.random.Generator, window: np.ndarray | None = None) -> np.ndarray:
        k = self.factor.dim
        if self.free_dims == 0:
            return self.factor.sample(count, rng, window)
        W = self._require_window(window)
        F = self.factor.sample(count, rng, W[:k])
        Z = rng.uniform(W[k:, 0], W[k:, 1], size=(count, self.free_dims))
        return np.concatenate([F, Z], axis=1)

    def to_dict(self) -> dict:
        return {"type": self.kind, "factor": self.factor.to_dict(), "free_dims": self.free_dims}


def set_from_dict(data: dict) -> ClosedSetSpec:
    kind = data.get("type")
    if kind == "affine":
        return AffineSubspace(np.asarray(data["basepoint"], float), np.asarray(data.get("directions", []), float))
    if kind == "arc":
        return SphereArc(
            np.asarray(data["center"], float),
            float(data["radius"]),
            float(data.get("theta0", 0.0)),
            float(data.get("theta1", TWO_PI)),
        )
    if kind == "points":
        return FinitePointSet(np.asarray(data["points"], float))
    if kind == "sampled":
        return SampledSet(np.asarray(data["points"], float), float(data.get("density", 0.0)))
    if kind == "product":
        return ProductSet(set_from_dict(data["factor"]), int(data["free_dims"]))
    raise ValueError(f"unknown closed-set type {kind!r}")


# ---------------------------------------------------------------------------
# region predicates


@dataclass(frozen=True, eq=False)
class RegionPredicate:
    """Membership test for a (nominally open) region U."""

    test: Callable[[np.ndarray], np.ndarray]
    label: str
    window: np.ndarray | None = None
    config: dict | None = field(default=None, repr=False)

    def __call__(self, X: Any) -> np.ndarray:
        return np.asarray(self.test(as_points(X)), dtype=bool)

    @classmethod
    def metric_neighborhood(cls, A: ClosedSetSpec, eps: float, window: Any = None) -> "RegionPredicate":
        W = as_window(window, A.dim)
        return cls(
            lambda X: A.distance(X) < eps,
            f"open {eps:g}-neighbourhood of a {A.kind} set",
            W,
            {"type": "neighborhood", "set": A.to_dict(), "eps": eps, "window": None if W is None else W.tolist()},
        )

    @classmethod
    def ball(cls, center: Sequence[float], radius: float) -> "RegionPredicate":
        c = np.asarray(center, dtype=float)
        return cls(
            lambda X: np.linalg.norm(X - c, axis=1) < radius,
            f"open ball of radius {radius:g}",
            np.stack([c - radius, c + radius], axis=1),
            {"type": "ball", "center": c.tolist(), "radius": radius},
        )

    @classmethod
    def exp_funnel(cls, window: Any) -> "RegionPredicate":
        """{|x2| < exp(-1/x1^2)}: an open neighbourhood of the x1-axis that
        pinches to zero width at x1 = 0."""
        W = as_window(window, 2)
        return cls(
            lambda X: np.abs(X[:, 1]) < funnel_width(X[:, 0]),
            "exponential funnel around the x1-axis",
            W,
            {"type": "funnel", "window": W.tolist()},
        )

    def to_dict(self) -> dict:
        if self.config is None:
            raise ValueError("this predicate was built from a bare callable and has no JSON form")
        return dict(self.config)

    @classmethod
    def from_dict(cls, data: dict) -> "RegionPredicate":
        kind = data.get("type")
        if kind == "neighborhood":
            return cls.metric_neighborhood(set_from_dict(data["set"]), float(data["eps"]), data.get("window"))
        if kind == "ball":
            return cls.ball(data["center"], float(data["radius"]))
        if kind == "funnel":
            return cls.exp_funnel(data["window"])
        raise ValueError(f"unknown region type {kind!r}")


def funnel_width(x1: Any) -> np.ndarray:
    x1 = np.asarray(x1, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(x1 == 0.0, 0.0, np.exp(-1.0 / np.square(x1)))


# ---------------------------------------------------------------------------
# operations


def distance_to_set(x: Any, A: ClosedSetSpec) -> float:
    return float(A.distance(as_point(x, A.dim))[0])


def leader_clusters(P: np.ndarray, origin: np.ndarray, separation: float) -> np.ndarray:
    """Greedy clustering: walk candidates nearest-first, open a new cluster
    whenever a candidate is farther than ``separation`` from every leader."""
    order = np.argsort(np.linalg.norm(P - origin, axis=1), kind="stable")
    leaders = [P[order[0]]]
    for i in order[1:]:
        if np.min(np.linalg.norm(np.asarray(leaders) - P[i], axis=1)) > separation:
            leaders.append(P[i])
    return np.asarray(leaders)


def project_to_set(x: Any, A: ClosedSetSpec, tol: float, separation: float | None = None) -> np.ndarray:
    """All tol-minimisers of d(x, .) over A, one representative per cluster.

    Rows are ordered nearest-first, so row 0 is the best foot point.  The
    tol-minimiser set of a smooth problem spreads like sqrt(tol), hence the
    default separation of 100*sqrt(tol).
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    x = as_point(x, A.dim)
    sep = 100.0 * math.sqrt(tol) if separation is None else float(separation)
    cands = A.minimizers(x, tol, spacing=sep / 2.0)
    if len(cands) == 0:
        raise RuntimeError("projection produced no minimiser for a nonempty set")
    return leader_clusters(cands, x, sep)


def sample_neighborhood(
    A: ClosedSetSpec,
    eps: float,
    count: int,
    window: Any = None,
    seed: int = 0,
    space: AmbientSpace | None = None,
) -> np.ndarray:
    """Seeded samples of N_eps(A) (inside ``window`` and outside punctures).

    Points of A are drawn first and pushed by a uniform offset from the open
    ball of radius eps, so every sample satisfies d(x, A) < eps by
    construction.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if count < 0:
        raise ValueError("count must be nonnegative")
    W = as_window(window, A.dim)
    if W is None and not A.bounded:
        raise WindowRequiredError(f"{A.kind} set is unbounded; sampling N_eps needs a window")
    if count == 0:
        return np.zeros((0, A.dim))
    rng = np.random.default_rng(seed)
    base_window = None if W is None else np.stack([W[:, 0] - eps, W[:, 1] + eps], axis=1)
    out: list[np.ndarray] = []
    have = 0
    for _ in range(1000):
        m = max(2 * (count - have), 32)
        X = A.sample(m, rng, base_window) + eps * _unit_ball(rng, m, A.dim)
        keep = in_window(X, W) & (A.distance(X) < eps)
        if space is not None:
            keep &= space.contains(X)
        X = X[keep]
        out.append(X)
        have += len(X)
        if have >= count:
            return np.concatenate(out)[:count]
    raise RuntimeError("could not fill the sample budget inside the window")


@dataclass
class InclusionVerdict:
    eps_found: float | None
    witnesses: list[tuple[float, np.ndarray]]
    tested: list[float]
    samples_per_eps: int = 0

    @property
    def no_eps_works(self) -> bool:
        return self.eps_found is None

    def to_dict(self) -> dict:
        return {
            "eps_found": self.eps_found,
            "witnesses": [{"eps": e, "point": p.tolist()} for e, p in self.witnesses],
            "tested": list(self.tested),
            "samples_per_eps": self.samples_per_eps,
        }


def find_epsilon_inclusion(
    A: ClosedSetSpec,
    U: RegionPredicate,
    eps_grid: Sequence[float],
    sample_budget: int,
    seed: int = 0,
    window: Any = None,
    space: AmbientSpace | None = None,
) -> InclusionVerdict:
    """Search the (descending) grid for an eps with N_eps(A) inside U.

    Returns the first eps for which no sample of N_eps(A) escapes U, together
    with one escaping witness for every larger eps that failed.
    """
    grid = [float(e) for e in eps_grid]
    if any(e <= 0 for e in grid) or any(b > a for a, b in zip(grid, grid[1:])):
        raise ValueError("eps_grid must be positive and sorted in descending order")
    if sample_budget <= 0:
        raise ValueError("sample_budget must be positive")
    W = as_window(window, A.dim) if window is not None else U.window
    if W is None and not A.bounded:
        raise WindowRequiredError("unbounded set and the region carries no sampling window")
    witnesses: list[tuple[float, np.ndarray]] = []
    tested: list[float] = []
    for eps in grid:
        tested.append(eps)
        X = sample_neighborhood(A, eps, sample_budget, W, seed, space)
        outside = np.flatnonzero(~U(X))
        if len(outside) == 0:
            return InclusionVerdict(eps, witnesses, tested, len(X))
        witnesses.append((eps, X[outside[0]].copy()))
    return InclusionVerdict(None, witnesses, tested, sample_budget)


# ---------------------------------------------------------------------------
# reach


@dataclass
class ReachWitness:
    point: np.ndarray
    foot_a: np.ndarray
    foot_b: np.ndarray
    separation: float
    tolerance: float

    def to_dict(self) -> dict:
        return {
            "point": self.point.tolist(),
            "foot_a": self.foot_a.tolist(),
            "foot_b": self.foot_b.tolist(),
            "separation": self.separation,
            "tolerance": self.tolerance,
        }


@dataclass
class ReachReport:
    r_lo: float
    r_max: float
    grid_resolution: float
    separation: float
    witness: ReachWitness | None = None

    def to_dict(self) -> dict:
        return {
            "r_lo": self.r_lo,
            "r_max": self.r_max,
            "grid_resolution": self.grid_resolution,
            "separation": self.separation,
            "witness": None if self.witness is None else self.witness.to_dict(),
        }


def proximal_rays(
    A: ClosedSetSpec, r_max: float, count: int, window: Any = None, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Foot points and unit proximal normals (a, n) with a = Pi(a + t n) for small t.

    Seeds are drawn from neighbourhoods at several geometric scales up to
    r_max: a single wide neighbourhood is dominated by its outer shell and
    would under-sample the normals on the concave side of a small set.
    """
    scales = r_max * np.geomspace(1.0 / 64.0, 1.0, 4)
    sizes = np.full(len(scales), count // len(scales))
    sizes[: count % len(scales)] += 1
    Y = np.concatenate(
        [sample_neighborhood(A, float(s), int(m), window, seed + i) for i, (s, m) in enumerate(zip(scales, sizes)) if m > 0]
    )
    F = A.nearest(Y)
    V = Y - F
    norm = np.linalg.norm(V, axis=1)
    keep = norm > 1e-12
    return F[keep], V[keep] / norm[keep, None]


def sample_distance_shell(
    A: ClosedSetSpec, r: float, count: int, window: Any = None, seed: int = 0, tol: float = 1e-9
) -> np.ndarray:
    """Points at distance exactly r from A (up to tol), pushed out along proximal normals."""
    a, n = proximal_rays(A, max(r, 1e-6), count, window, seed)
    X = a + r * n
    return X[np.abs(A.distance(X) - r) <= tol]


def estimate_reach(
    A: ClosedSetSpec,
    r_max: float,
    grid_resolution: float,
    separation: float | None = None,
    window: Any = None,
    ray_count: int = 512,
    seed: int = 0,
    tol: float = 1e-9,
) -> ReachReport:
    """Sweep radii r = k*grid_resolution up to r_max along proximal normal rays.

    At radius r every ray point x = a + r n lies in D_r(A).  The radius fails
    when some x has a non-unique projection (more than one cluster) or its
    projection has left the ray's foot point by more than ``separation``; the
    latter means the segment [a, x] crossed a point of non-unique projection.
    r_lo is the last radius before the first failure; the witness is the cut
    point on the failing ray located by bisection.
    """
    if not r_max > 0 or not grid_resolution > 0:
        raise ValueError("r_max and grid_resolution must be positive")
    sep = 10.0 * grid_resolution if separation is None else float(separation)
    a, n = proximal_rays(A, r_max, ray_count, window, seed)
    k_max = int(math.floor(r_max / grid_resolution + 1e-9))
    radii = [k * grid_resolution for k in range(1, k_max + 1)]
    if not radii or radii[-1] < r_max - 1e-12:
        radii.append(r_max)
    r_lo, prev = 0.0, 0.0
    for r in radii:
        X = a + r * n
        d = A.distance(X)
        failing = []
        for i in np.flatnonzero(d < r - tol):
            P = project_to_set(X[i], A, tol, sep)
            if len(P) > 1 or np.linalg.norm(P[0] - a[i]) > sep:
                failing.append(i)
        if failing:
            witness = _locate_cut(A, a[failing], n[failing], prev, r, sep)
            return ReachReport(r_lo, r_max, grid_resolution, sep, witness)
        r_lo = prev = r
    return ReachReport(r_lo, r_max, grid_resolution, sep, None)


def _locate_cut(A: ClosedSetSpec, a: np.ndarray, n: np.ndarray, lo: float, hi: float, sep: float) -> ReachWitness:
    def jumped(t: np.ndarray) -> np.ndarray:
        return np.linalg.norm(A.nearest(a + t[:, None] * n) - a, axis=1) > sep

    t_lo = np.full(len(a), lo)
    t_lo[jumped(t_lo)] = 0.0
    t_hi = np.full(len(a), hi)
    valid = jumped(t_hi)
    if not np.any(valid):
        # failure came from cluster multiplicity alone; report at the failing radius
        valid[:] = True
    for _ in range(60):
        mid = 0.5 * (t_lo + t_hi)
        j = jumped(mid)
        t_hi = np.where(j, mid, t_hi)
        t_lo = np.where(j, t_lo, mid)
    i = int(np.flatnonzero(valid)[np.argmin(t_hi[valid])])
    x = a[i] + t_hi[i] * n[i]
    far = A.nearest(x)[0]
    d = float(A.distance(x)[0])
    tolerance = max(abs(float(np.linalg.norm(x - a[i])) - d), abs(float(np.linalg.norm(x - far)) - d))
    return ReachWitness(x, a[i].copy(), far, float(np.linalg.norm(a[i] - far)), tolerance)
