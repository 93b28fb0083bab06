"""Vietoris-Rips complexes up to dimension 2 and their homology over GF(2).

Chains are Python integers used as bitsets (bit i = simplex i), so column
reduction is XOR on ints.  That keeps boundary matrices sparse for free and is
exact.  Complexes are truncated at triangles, so beta_2 counts the 2-cycles of
the 2-skeleton (e.g. every 4-clique contributes a hollow tetrahedron); only
beta_0 and beta_1 are faithful to the Rips filtration at that scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

MAX_POINTS = 10_000

FAILS = "FAILS"
PASSES_NECESSARY = "PASSES-NECESSARY"
INCONCLUSIVE = "INCONCLUSIVE"
NOT_EQUIVALENT = "NOT-EQUIVALENT"
EQUIVALENCE_NOT_RULED_OUT = "INCONCLUSIVE-NECESSARY-PASSED"


@dataclass(frozen=True)
class BettiVector:
    ranks: tuple[int, ...]
    field: str = "GF(2)"

    def __getitem__(self, k: int) -> int:
        return self.ranks[k] if 0 <= k < len(self.ranks) else 0

    def __len__(self) -> int:
        return len(self.ranks)

    def to_dict(self) -> dict:
        return {"ranks": list(self.ranks), "field": self.field}


def reduce_columns(columns: Iterable[int], pivots: dict[int, int] | None = None) -> tuple[dict[int, int], int]:
    """Gaussian elimination over GF(2) keyed on the highest set bit.

    Adds the reduced nonzero columns to ``pivots`` (created if None) and
    returns it with the number of new pivots, i.e. the rank gained.
    """
    piv = {} if pivots is None else pivots
    gained = 0
    for col in columns:
        while col:
            p = col.bit_length() - 1
            other = piv.get(p)
            if other is None:
                piv[p] = col
                gained += 1
                break
            col ^= other
    return piv, gained


@dataclass(eq=False)
class SimplicialComplex:
    """Rips complex: vertices are row indices of ``points``.

    ``simplices[k]`` is a (count, k+1) array of sorted vertex indices in
    lexicographic order.
    """

    points: np.ndarray
    scale: float
    simplices: list[np.ndarray]
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def max_dim(self) -> int:
        return len(self.simplices) - 1

    def count(self, k: int) -> int:
        return len(self.simplices[k]) if 0 <= k <= self.max_dim else 0

    def index(self, k: int) -> dict[tuple[int, ...], int]:
        key = ("index", k)
        if key not in self._cache:
            self._cache[key] = {tuple(int(v) for v in s): i for i, s in enumerate(self.simplices[k])}
        return self._cache[key]

    def boundary_columns(self, k: int) -> list[int]:
        """Columns of the boundary map from k-chains to (k-1)-chains as bitsets."""
        if k <= 0 or k > self.max_dim:
            return []
        key = ("boundary", k)
        if key not in self._cache:
            face = self.index(k - 1)
            cols = []
            for s in self.simplices[k]:
                s = tuple(int(v) for v in s)
                col = 0
                for drop in range(len(s)):
                    col |= 1 << face[s[:drop] + s[drop + 1 :]]
                cols.append(col)
            self._cache[key] = cols
        return self._cache[key]

    def boundary_pivots(self, k: int) -> dict[int, int]:
        key = ("pivots", k)
        if key not in self._cache:
            self._cache[key] = reduce_columns(self.boundary_columns(k))[0]
        return self._cache[key]

    def boundary_rank(self, k: int) -> int:
        return len(self.boundary_pivots(k))

    def euler_characteristic(self) -> int:
        return sum((-1) ** k * self.count(k) for k in range(self.max_dim + 1))

    def to_text(self) -> str:
        lines = []
        for k, S in enumerate(self.simplices):
            for s in S:
                lines.append(" ".join([str(k), *map(str, s)]))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, points: Any = None, scale: float = float("nan")) -> "SimplicialComplex":
        rows: dict[int, list[tuple[int, ...]]] = {}
        for line in text.splitlines():
            parts = line.split()
            if not parts:
                continue
            k = int(parts[0])
            verts = tuple(sorted(int(v) for v in parts[1:]))
            if len(verts) != k + 1:
                raise ValueError(f"line {line!r}: a {k}-simplex needs {k + 1} vertices")
            rows.setdefault(k, []).append(verts)
        top = max(rows) if rows else 0
        simplices = [np.array(sorted(rows.get(k, [])), dtype=np.int64).reshape(-1, k + 1) for k in range(top + 1)]
        n = len(simplices[0])
        pts = np.zeros((n, 0)) if points is None else np.asarray(points, dtype=float)
        cx = cls(pts, scale, simplices)
        if not is_downward_closed(cx):
            raise ValueError("complex is not closed under taking faces")
        return cx


def is_downward_closed(cx: SimplicialComplex) -> bool:
    for k in range(1, cx.max_dim + 1):
        face = cx.index(k - 1)
        for s in cx.simplices[k]:
            s = tuple(int(v) for v in s)
            for drop in range(len(s)):
                if s[:drop] + s[drop + 1 :] not in face:
                    return False
    return True


def build_rips(points: Any, scale: float, max_dim: int = 2) -> SimplicialComplex:
    """Edges between points at distance <= scale, triangles on 3-cliques."""
    if not scale > 0:
        raise ValueError("scale must be positive")
    if max_dim not in (0, 1, 2):
        raise ValueError("max_dim must be 0, 1 or 2")
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    n = len(P)
    if n > MAX_POINTS:
        raise ValueError(f"{n} points exceeds the limit of {MAX_POINTS}")
    simplices = [np.arange(n, dtype=np.int64)[:, None]]
    if max_dim >= 1:
        pairs = cKDTree(P).query_pairs(scale, output_type="ndarray") if n > 1 else np.zeros((0, 2), dtype=np.int64)
        pairs = np.sort(pairs.astype(np.int64), axis=1)
        if len(pairs):
            pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
        simplices.append(pairs.reshape(-1, 2))
    if max_dim >= 2:
        nbr: list[set[int]] = [set() for _ in range(n)]
        for i, j in simplices[1]:
            nbr[int(i)].add(int(j))
        tris = []
        for i, j in simplices[1]:
            i, j = int(i), int(j)
            for k in sorted(nbr[i] & nbr[j]):
                tris.append((i, j, k))
        simplices.append(np.array(sorted(tris), dtype=np.int64).reshape(-1, 3))
    return SimplicialComplex(P, float(scale), simplices)


def betti(cx: SimplicialComplex, k: int) -> int:
    """dim ker d_k - dim im d_{k+1} over GF(2)."""
    if k < 0 or k > cx.max_dim:
        raise ValueError(f"k must lie in 0..{cx.max_dim}")
    return cx.count(k) - cx.boundary_rank(k) - cx.boundary_rank(k + 1)


def betti_vector(cx: SimplicialComplex, top: int | None = None) -> BettiVector:
    top = cx.max_dim if top is None else top
    return BettiVector(tuple(betti(cx, k) for k in range(top + 1)))


def cycle_basis(cx: SimplicialComplex, k: int, allowed: np.ndarray | None = None) -> list[int]:
    """Basis of the k-cycles supported on the ``allowed`` k-simplices (all if None),
    as bitsets over the k-simplices of ``cx``."""
    idx = range(cx.count(k)) if allowed is None else (int(i) for i in np.flatnonzero(allowed))
    if k == 0:
        return [1 << i for i in idx]
    cols = cx.boundary_columns(k)
    piv: dict[int, tuple[int, int]] = {}
    cycles = []
    for i in idx:
        col, combo = cols[i], 1 << i
        while col:
            p = col.bit_length() - 1
            if p not in piv:
                piv[p] = (col, combo)
                break
            c2, m2 = piv[p]
            col ^= c2
            combo ^= m2
        if col == 0:
            cycles.append(combo)
    return cycles


@dataclass
class InducedMapReport:
    k: int
    rank: int
    betti_sub: BettiVector
    betti_full: BettiVector

    def to_dict(self) -> dict:
        return {"k": self.k, "rank": self.rank, "betti_sub": list(self.betti_sub.ranks), "betti_full": list(self.betti_full.ranks)}


def restrict(full: SimplicialComplex, sub_vertex_indices: Sequence[int]) -> tuple[SimplicialComplex, list[np.ndarray]]:
    """Full subcomplex on the given vertices, plus for each dimension the mask
    of full-complex simplices that survive."""
    sub = np.asarray(sub_vertex_indices, dtype=np.int64).ravel()
    n = full.count(0)
    if len(sub) == 0 or sub.min() < 0 or sub.max() >= n or len(np.unique(sub)) != len(sub):
        raise ValueError("sub vertices must be distinct vertex indices of the full complex")
    keep = np.zeros(n, dtype=bool)
    keep[sub] = True
    masks = [np.all(keep[S], axis=1) if len(S) else np.zeros(0, dtype=bool) for S in full.simplices]
    order = np.sort(sub)
    relabel = np.full(n, -1, dtype=np.int64)
    relabel[order] = np.arange(len(order))
    simplices = [relabel[S[m]] for S, m in zip(full.simplices, masks)]
    return SimplicialComplex(full.points[order], full.scale, simplices), masks


def induced_map_rank(sub_vertex_indices: Sequence[int], full: SimplicialComplex, k: int) -> InducedMapReport:
    """Rank of H_k(sub) -> H_k(full) for the full subcomplex on the given vertices.

    Cycles of the subcomplex are written in full-complex indices and reduced
    on top of the reduced boundaries of the full complex; the new pivots
    count the independent classes that survive.
    """
    sub_cx, masks = restrict(full, sub_vertex_indices)
    cycles = cycle_basis(full, k, masks[k]) if k <= full.max_dim else []
    piv = dict(full.boundary_pivots(k + 1))
    _, rank = reduce_columns(cycles, piv)
    return InducedMapReport(k, rank, betti_vector(sub_cx), betti_vector(full))


# ---------------------------------------------------------------------------
# necessary-condition checks


def max_nn_spacing(points: Any) -> float:
    P = np.asarray(points, dtype=float)
    if len(P) < 2:
        return 0.0
    d, _ = cKDTree(P).query(P, k=2)
    return float(np.max(d[:, 1]))


@dataclass
class CofibrationVerdict:
    verdict: str
    induced_ranks: dict[int, int]
    betti_A: BettiVector | None
    betti_U: BettiVector | None
    betti_B: BettiVector | None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "induced_ranks": {str(k): v for k, v in self.induced_ranks.items()},
            "betti_A": None if self.betti_A is None else list(self.betti_A.ranks),
            "betti_U": None if self.betti_U is None else list(self.betti_U.ranks),
            "betti_B": None if self.betti_B is None else list(self.betti_B.ranks),
            "diagnostics": self.diagnostics,
        }


def _match_rows(sub: np.ndarray, full: np.ndarray) -> np.ndarray:
    where = {tuple(row): i for i, row in enumerate(full.tolist())}
    missing = [row for row in sub.tolist() if tuple(row) not in where]
    if missing:
        raise ValueError(f"{len(missing)} U samples are not B samples (first: {missing[0]})")
    return np.array([where[tuple(row)] for row in sub.tolist()], dtype=np.int64)


def _density_problems(scale: float, **clouds: np.ndarray) -> dict[str, float]:
    return {name: s for name, P in clouds.items() if (s := max_nn_spacing(P)) > scale}


def cofibration_necessary_check(A_samples: Any, U_samples: Any, B_samples: Any, scale: float, dims: Sequence[int] = (0, 1)) -> CofibrationVerdict:
    """If U deformation-retracts into A inside B up to homotopy, the inclusion
    U -> B factors through A in homology, so rank H_k(U) -> H_k(B) <= beta_k(A).
    A larger rank in some dimension means the check FAILS; otherwise it only
    passes the necessary condition."""
    A = np.asarray(A_samples, dtype=float)
    U = np.asarray(U_samples, dtype=float)
    B = np.asarray(B_samples, dtype=float)
    sparse = _density_problems(scale, A=A, U=U, B=B)
    if sparse:
        detail = ", ".join(f"{k} spacing {v:.3g}" for k, v in sparse.items())
        return CofibrationVerdict(INCONCLUSIVE, {}, None, None, None, {"reason": f"samples too sparse for scale {scale:g}: {detail}"})
    u_idx = _match_rows(U, B)
    top = max(dims)
    cxA = build_rips(A, scale, max_dim=min(top + 1, 2))
    cxB = build_rips(B, scale, max_dim=min(top + 1, 2))
    ranks: dict[int, int] = {}
    betti_U = None
    for k in dims:
        rep = induced_map_rank(u_idx, cxB, k)
        ranks[k] = rep.rank
        betti_U = BettiVector(rep.betti_sub.ranks[: top + 1])
    bA = betti_vector(cxA, top)
    bad = [k for k in dims if ranks[k] > bA[k]]
    verdict = FAILS if bad else PASSES_NECESSARY
    diag = {"scale": scale, "violating_dims": bad, "sizes": {"A": len(A), "U": len(U), "B": len(B)}}
    return CofibrationVerdict(verdict, ranks, bA, betti_U, betti_vector(cxB, top), diag)


@dataclass
class EquivalenceVerdict:
    verdict: str
    betti_A: BettiVector
    betti_B: BettiVector

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "betti_A": list(self.betti_A.ranks), "betti_B": list(self.betti_B.ranks)}


def homotopy_equivalence_necessary_check(A_samples: Any, B_samples: Any, scale: float, dims: Sequence[int] = (0, 1)) -> EquivalenceVerdict:
    top = max(dims)
    bA = betti_vector(build_rips(A_samples, scale, max_dim=min(top + 1, 2)), top)
    bB = betti_vector(build_rips(B_samples, scale, max_dim=min(top + 1, 2)), top)
    differ = any(bA[k] != bB[k] for k in dims)
    return EquivalenceVerdict(NOT_EQUIVALENT if differ else EQUIVALENCE_NOT_RULED_OUT, bA, bB)
