"""Betti-number constraints on an extended cut set E of codimension c.

Removing E from X leaves a space that must retract onto A.  Rank
bookkeeping in the long exact sequence of the pair (X, X - E) gives three
families of inequalities, for every degree N:

    family 1:  b^N(X)   <= b^{N-c}(E)   + b^N(A)
    family 2:  b^N(A)   <= b^N(X)       + b^{N-c+1}(E)
    family 3:  b^{N-c}(E) <= b^{N-1}(A) + b^N(X)

Each instance involves at most one Betti number of E, so the feasible set is
a box.  Unknowns are e_k = b^k(E) for 0 <= k <= n - c; every Betti number at
a negative index or beyond the dimension of its space is 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

LOWER = "lower"
UPPER = "upper"
CONSTANT = "constant"


@dataclass(frozen=True)
class CutFeasibilityProblem:
    betti_X: tuple[int, ...]
    betti_A: tuple[int, ...]
    codim: int
    top: int  # dimension n of X

    def __post_init__(self) -> None:
        object.__setattr__(self, "betti_X", tuple(int(b) for b in self.betti_X))
        object.__setattr__(self, "betti_A", tuple(int(b) for b in self.betti_A))
        if self.codim < 1 or self.codim > self.top:
            raise ValueError("need 1 <= codim <= top dimension")
        if any(b < 0 for b in self.betti_X + self.betti_A):
            raise ValueError("Betti numbers must be nonnegative")
        if len(self.betti_X) > self.top + 1 or len(self.betti_A) > self.top + 1:
            raise ValueError("Betti vectors cannot extend past the top dimension")

    @property
    def cut_dim(self) -> int:
        return self.top - self.codim

    def bX(self, k: int) -> int:
        return self.betti_X[k] if 0 <= k < len(self.betti_X) else 0

    def bA(self, k: int) -> int:
        return self.betti_A[k] if 0 <= k < len(self.betti_A) else 0

    def unknown(self, k: int) -> int | None:
        """Index of the E-unknown b^k(E), or None when it is identically 0."""
        return k if 0 <= k <= self.cut_dim else None

    def to_dict(self) -> dict:
        return {"betti_X": list(self.betti_X), "betti_A": list(self.betti_A), "codim": self.codim, "top": self.top}

    @classmethod
    def from_dict(cls, data: dict) -> "CutFeasibilityProblem":
        return cls(tuple(data["betti_X"]), tuple(data["betti_A"]), int(data["codim"]), int(data["top"]))


@dataclass
class Instance:
    family: str  # "1", "2", "3" or "nonempty"
    n: int
    text: str
    kind: str  # LOWER, UPPER or CONSTANT
    index: int | None  # E-unknown involved, if any
    bound: int  # e_index >= bound (LOWER), <= bound (UPPER); for CONSTANT: 0 <= bound must hold

    @property
    def satisfied_as_constant(self) -> bool:
        return self.kind != CONSTANT or self.bound >= 0

    def to_dict(self) -> dict:
        return {"family": self.family, "n": self.n, "text": self.text, "kind": self.kind, "index": self.index, "bound": self.bound}


def _e(k: int) -> str:
    return f"b^{k}(E)"


def instances(p: CutFeasibilityProblem, assume_nonempty: bool = False) -> list[Instance]:
    """Every instance of the three families for N in [0, n + c], turned into a
    single-variable bound on E or a constant condition."""
    c = p.codim
    out: list[Instance] = []
    for N in range(0, p.top + c + 1):
        # family 1: e_{N-c} >= bX(N) - bA(N)
        k = N - c
        text = f"b^{N}(X)={p.bX(N)} <= {_e(k)} + b^{N}(A)={p.bA(N)}"
        rhs = p.bX(N) - p.bA(N)
        if p.unknown(k) is None:
            out.append(Instance("1", N, text, CONSTANT, None, -rhs))
        else:
            out.append(Instance("1", N, text, LOWER, k, rhs))
        # family 2: e_{N-c+1} >= bA(N) - bX(N)
        k = N - c + 1
        text = f"b^{N}(A)={p.bA(N)} <= b^{N}(X)={p.bX(N)} + {_e(k)}"
        rhs = p.bA(N) - p.bX(N)
        if p.unknown(k) is None:
            out.append(Instance("2", N, text, CONSTANT, None, -rhs))
        else:
            out.append(Instance("2", N, text, LOWER, k, rhs))
        # family 3: e_{N-c} <= bA(N-1) + bX(N)
        k = N - c
        cap = p.bA(N - 1) + p.bX(N)
        text = f"{_e(k)} <= b^{N - 1}(A)={p.bA(N - 1)} + b^{N}(X)={p.bX(N)}"
        if p.unknown(k) is None:
            out.append(Instance("3", N, text, CONSTANT, None, cap))
        else:
            out.append(Instance("3", N, text, UPPER, k, cap))
    if assume_nonempty:
        out.append(Instance("nonempty", 0, "b^0(E) >= 1 (E nonempty)", LOWER, 0, 1))
    return out


@dataclass
class CutConstraintReport:
    problem: CutFeasibilityProblem
    assume_nonempty: bool
    lower: list[int]
    upper: list[float]  # math.inf when unbounded
    lower_source: list[Instance | None]
    upper_source: list[Instance | None]
    instances: list[Instance]
    clashes: list[str] = field(default_factory=list)
    empty_cut_feasible: bool = False

    @property
    def feasible(self) -> bool:
        return not self.clashes

    @property
    def forced(self) -> dict[int, int]:
        return {k: lo for k, (lo, hi) in enumerate(zip(self.lower, self.upper)) if lo == hi}

    def instance(self, family: str, n: int) -> Instance:
        for inst in self.instances:
            if inst.family == family and inst.n == n:
                return inst
        raise KeyError((family, n))

    def to_dict(self) -> dict:
        return {
            "problem": self.problem.to_dict(),
            "assume_nonempty": self.assume_nonempty,
            "bounds": [
                {"k": k, "lo": lo, "hi": None if math.isinf(hi) else int(hi)}
                for k, (lo, hi) in enumerate(zip(self.lower, self.upper))
            ],
            "forced": {str(k): v for k, v in self.forced.items()},
            "feasible": self.feasible,
            "clashes": self.clashes,
            "empty_cut_feasible": self.empty_cut_feasible,
            "instances": [i.to_dict() for i in self.instances],
        }


def derive_cut_constraints(p: CutFeasibilityProblem, assume_nonempty: bool = False) -> CutConstraintReport:
    insts = instances(p, assume_nonempty)
    m = p.cut_dim + 1
    lower = [0] * m
    upper: list[float] = [math.inf] * m
    lo_src: list[Instance | None] = [None] * m
    hi_src: list[Instance | None] = [None] * m
    clashes = []
    for inst in insts:
        if inst.kind == LOWER and inst.bound > lower[inst.index]:
            lower[inst.index], lo_src[inst.index] = inst.bound, inst
        elif inst.kind == UPPER and inst.bound < upper[inst.index]:
            upper[inst.index], hi_src[inst.index] = inst.bound, inst
        elif inst.kind == CONSTANT and not inst.satisfied_as_constant:
            clashes.append(f"family {inst.family}, n={inst.n}: {inst.text} fails whatever E is")
    for k in range(m):
        if lower[k] > upper[k]:
            a = lo_src[k].text if lo_src[k] else "nonnegativity"
            b = hi_src[k].text if hi_src[k] else "?"
            clashes.append(f"b^{k}(E) >= {lower[k]} from [{a}] clashes with <= {int(upper[k])} from [{b}]")
    empty = verify_cut_instance(p, [0] * m).passed
    return CutConstraintReport(p, assume_nonempty, lower, upper, lo_src, hi_src, insts, clashes, empty)


@dataclass
class Violation:
    family: str
    n: int
    lhs: int
    rhs: int
    text: str

    def to_dict(self) -> dict:
        return {"family": self.family, "n": self.n, "lhs": self.lhs, "rhs": self.rhs, "text": self.text}


@dataclass
class CutCheck:
    passed: bool
    violations: list[Violation]
    statuses: list[tuple[str, int, int, int, bool]]  # (family, n, lhs, rhs, holds)

    def status(self, family: str, n: int) -> tuple[int, int, bool]:
        for f, N, lhs, rhs, ok in self.statuses:
            if f == family and N == n:
                return lhs, rhs, ok
        raise KeyError((family, n))

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "violations": [v.to_dict() for v in self.violations],
            "instances": [{"family": f, "n": N, "lhs": l, "rhs": r, "holds": ok} for f, N, l, r, ok in self.statuses],
        }


def verify_cut_instance(p: CutFeasibilityProblem, betti_E: Sequence[int]) -> CutCheck:
    """Substitute a candidate Betti vector of E into every instance."""
    bE = [int(b) for b in betti_E]
    if len(bE) < p.cut_dim + 1:
        raise ValueError(f"betti_E must cover degrees 0..{p.cut_dim}")
    if any(b < 0 for b in bE):
        raise ValueError("Betti numbers must be nonnegative")

    def e(k: int) -> int:
        return bE[k] if p.unknown(k) is not None else 0

    c = p.codim
    statuses = []
    violations = []
    for N in range(0, p.top + c + 1):
        rows = [
            ("1", p.bX(N), e(N - c) + p.bA(N), f"b^{N}(X) <= b^{N - c}(E) + b^{N}(A)"),
            ("2", p.bA(N), p.bX(N) + e(N - c + 1), f"b^{N}(A) <= b^{N}(X) + b^{N - c + 1}(E)"),
            ("3", e(N - c), p.bA(N - 1) + p.bX(N), f"b^{N - c}(E) <= b^{N - 1}(A) + b^{N}(X)"),
        ]
        for fam, lhs, rhs, text in rows:
            ok = lhs <= rhs
            statuses.append((fam, N, lhs, rhs, ok))
            if not ok:
                violations.append(Violation(fam, N, lhs, rhs, text))
    return CutCheck(not violations, violations, statuses)


def render_table(report: CutConstraintReport) -> str:
    lines = [f"{'k':>3}  {'lo':>4}  {'hi':>4}  forced  source"]
    for k, (lo, hi) in enumerate(zip(report.lower, report.upper)):
        hi_s = "inf" if math.isinf(hi) else str(int(hi))
        forced = "yes" if lo == hi else ""
        srcs = [s.text for s in (report.lower_source[k], report.upper_source[k]) if s is not None]
        lines.append(f"{k:>3}  {lo:>4}  {hi_s:>4}  {forced:<6}  {' ; '.join(srcs)}")
    lines.append(f"feasible: {report.feasible}   empty cut feasible: {report.empty_cut_feasible}")
    for c in report.clashes:
        lines.append(f"clash: {c}")
    return "\n".join(lines)
