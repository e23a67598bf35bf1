"""H-representation polytopes: membership, intersection, emptiness, vertices.

Everything here is input-space plumbing for the first-step set tightening.
Vertex enumeration is combinatorial (all facet subsets of size dim), which
is exact and deterministic at the small sizes this package works with.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

_ZERO_NORMAL_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Halfspace:
    """The set {u : normal . u <= offset}."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        normal = np.asarray(self.normal, dtype=float).ravel()
        if float(np.linalg.norm(normal)) <= _ZERO_NORMAL_TOL:
            raise ValueError("halfspace normal must be nonzero")
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "offset", float(self.offset))

    def __eq__(self, other):
        if not isinstance(other, Halfspace):
            return NotImplemented
        return np.array_equal(self.normal, other.normal) and self.offset == other.offset


@dataclass(frozen=True, eq=False)
class Polytope:
    """Intersection of halfspaces in R^dim."""

    halfspaces: tuple[Halfspace, ...]
    dim: int

    def __post_init__(self):
        object.__setattr__(self, "halfspaces", tuple(self.halfspaces))
        for hs in self.halfspaces:
            if hs.normal.shape != (self.dim,):
                raise ValueError(
                    f"halfspace normal has length {hs.normal.shape[0]}, expected {self.dim}"
                )

    @classmethod
    def from_bounds(cls, bounds: Sequence[tuple[float, float]]) -> "Polytope":
        """Axis-aligned box from per-coordinate (lo, hi) pairs."""
        dim = len(bounds)
        hs = []
        for i, (lo, hi) in enumerate(bounds):
            e = np.zeros(dim)
            e[i] = 1.0
            hs.append(Halfspace(e, hi))
            hs.append(Halfspace(-e, -lo))
        return cls(tuple(hs), dim)

    @classmethod
    def from_inequalities(cls, A: np.ndarray, b: np.ndarray) -> "Polytope":
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float).ravel()
        return cls(tuple(Halfspace(row, bi) for row, bi in zip(A, b)), A.shape[1])

    @property
    def A(self) -> np.ndarray:
        """Stacked normals, shape (#halfspaces, dim)."""
        if not self.halfspaces:
            return np.zeros((0, self.dim))
        return np.vstack([hs.normal for hs in self.halfspaces])

    @property
    def b(self) -> np.ndarray:
        return np.array([hs.offset for hs in self.halfspaces])

    def __eq__(self, other):
        if not isinstance(other, Polytope):
            return NotImplemented
        return self.dim == other.dim and list(self.halfspaces) == list(other.halfspaces)


def contains(P: Polytope, u: np.ndarray, tol: float = 1e-9) -> bool:
    """True iff every halfspace holds at u within tol."""
    u = np.asarray(u, dtype=float).ravel()
    if u.shape != (P.dim,):
        raise ValueError(f"point has dimension {u.shape[0]}, polytope has {P.dim}")
    if not P.halfspaces:
        return True
    return bool(np.all(P.A @ u <= P.b + tol))


def intersect(P: Polytope, H: Halfspace) -> Polytope:
    if H.normal.shape != (P.dim,):
        raise ValueError("halfspace dimension does not match polytope")
    return Polytope(P.halfspaces + (H,), P.dim)


def is_empty(P: Polytope, tol: float = 1e-9) -> bool:
    """Emptiness via the Chebyshev-center LP.

    Maximizes the inscribed-ball radius r subject to a.u + |a| r <= b
    (r capped at 1 so the LP stays bounded); the set is empty iff the
    optimal radius is below -tol.
    """
    from . import solver

    if not P.halfspaces:
        return False
    d = P.dim
    rows = []
    offs = []
    for hs in P.halfspaces:
        rows.append(np.append(hs.normal, float(np.linalg.norm(hs.normal))))
        offs.append(hs.offset)
    cap = np.zeros(d + 1)
    cap[d] = 1.0
    rows.append(cap)
    offs.append(1.0)
    lifted = Polytope.from_inequalities(np.vstack(rows), np.array(offs))
    f = np.zeros(d + 1)
    f[d] = -1.0
    report = solver.solve_qp(solver.QuadraticProgram(H=np.zeros((d + 1, d + 1)), f=f, ineq=lifted))
    if report.status != "optimal":
        raise solver.SolverError(f"Chebyshev-center LP failed: {report.status}")
    radius = report.minimizer[d]
    return bool(radius < -tol)


def _support_bound(P: Polytope, direction: np.ndarray):
    """LP support value max direction.u over P; returns (status, value)."""
    from . import solver

    qp = solver.QuadraticProgram(
        H=np.zeros((P.dim, P.dim)), f=-np.asarray(direction, dtype=float), ineq=P
    )
    report = solver.solve_qp(qp)
    if report.status == "optimal":
        return "optimal", -report.objective
    return report.status, None


def is_bounded(P: Polytope) -> bool:
    """Finite support bound in all 2*dim coordinate directions.

    Raises SolverError if any probe fails numerically; an infeasible probe
    (empty set) counts as bounded.
    """
    from . import solver

    for i in range(P.dim):
        for sign in (1.0, -1.0):
            e = np.zeros(P.dim)
            e[i] = sign
            status, _ = _support_bound(P, e)
            if status == "unbounded":
                return False
            if status not in ("optimal", "infeasible"):
                raise solver.SolverError(f"boundedness probe failed: {status}")
    return True


def _vertices_unchecked(P: Polytope, feas_tol: float = 1e-8, merge_tol: float = 1e-8):
    """All basic feasible points of P, deduplicated and lexicographically sorted.

    Assumes P is bounded; callers gate on is_bounded first.
    """
    A, b = P.A, P.b
    k, d = A.shape
    if k < d:
        return []
    found = []
    for idx in itertools.combinations(range(k), d):
        sub = A[list(idx)]
        if np.linalg.matrix_rank(sub, tol=1e-10) < d:
            continue
        try:
            v = np.linalg.solve(sub, b[list(idx)])
        except np.linalg.LinAlgError:
            continue
        if not np.all(np.isfinite(v)):
            continue
        if np.all(A @ v <= b + feas_tol):
            found.append(v)
    merged: list[np.ndarray] = []
    for v in sorted(found, key=tuple):
        if not any(np.max(np.abs(v - w)) <= merge_tol for w in merged):
            merged.append(v)
    return merged


def enumerate_vertices(P: Polytope) -> list[np.ndarray]:
    """Vertices of a bounded polytope with dim <= 3, lexicographically ordered.

    Each vertex solves dim active independent halfspaces and is feasible for
    the rest within 1e-8; duplicates within 1e-8 are merged.  Raises for
    dim > 3 or an unbounded polytope; an empty polytope yields [].
    """
    if P.dim > 3:
        raise ValueError(f"vertex enumeration supports dim <= 3, got {P.dim}")
    if not is_bounded(P):
        raise ValueError("vertex enumeration requires a bounded polytope")
    return _vertices_unchecked(P)


def halfspace_preimage(hs: Halfspace, M: np.ndarray, c: np.ndarray) -> list[Halfspace]:
    """Rewrite {x : a.x <= b} over x = M u + c as halfspaces in u.

    Returns [] when the constraint is insensitive to u and already holds;
    returns a contradictory pair (an explicit empty-set encoding) when it is
    insensitive and violated.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    c = np.asarray(c, dtype=float).ravel()
    normal = M.T @ hs.normal
    offset = hs.offset - float(hs.normal @ c)
    if float(np.linalg.norm(normal)) <= _ZERO_NORMAL_TOL:
        if offset >= -_ZERO_NORMAL_TOL:
            return []
        dim = M.shape[1]
        e = np.zeros(dim)
        e[0] = 1.0
        return [Halfspace(e, -1.0), Halfspace(-e, -1.0)]
    return [Halfspace(normal, offset)]
