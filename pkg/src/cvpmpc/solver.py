"""Small deterministic QP/LP layer.

One entry point, solve_qp, covers both problem classes used by the package:
a zero Hessian routes to scipy's HiGHS linear solver, a nonzero Hessian to a
hand-written primal active-set method with lowest-index tie-breaking.  Both
paths are bit-reproducible for identical inputs.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from .geometry import Polytope

_SYMMETRY_TOL = 1e-10
_EIG_TOL = -1e-10
_FEASIBILITY_TOL = 1e-7
_STATIONARITY_TOL = 1e-6
_MULTIPLIER_TOL = 1e-9
_RIDGE = 1e-10


class SolverError(RuntimeError):
    """Raised when an optimization subroutine cannot certify its result."""

    def __init__(self, message: str, status: str = "numerical-failure"):
        super().__init__(message)
        self.status = status


@dataclass(frozen=True)
class QuadraticProgram:
    """min 0.5 u'Hu + f'u + c0  s.t.  u in ineq, eq_A u = eq_b."""

    H: np.ndarray
    f: np.ndarray
    ineq: Polytope
    eq_A: Optional[np.ndarray] = None
    eq_b: Optional[np.ndarray] = None
    c0: float = 0.0

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        f = np.asarray(self.f, dtype=float).ravel()
        d = f.shape[0]
        if H.shape != (d, d):
            raise ValueError(f"H has shape {H.shape}, expected ({d}, {d})")
        if self.ineq.dim != d:
            raise ValueError("inequality polytope dimension does not match f")
        if np.max(np.abs(H - H.T), initial=0.0) > _SYMMETRY_TOL:
            raise ValueError("H must be symmetric within 1e-10")
        if np.any(H) and float(np.min(np.linalg.eigvalsh(H))) < _EIG_TOL:
            raise ValueError("H must be positive semidefinite")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "f", f)
        eq_A, eq_b = self.eq_A, self.eq_b
        if (eq_A is None) != (eq_b is None):
            raise ValueError("eq_A and eq_b must be given together")
        if eq_A is not None:
            eq_A = np.atleast_2d(np.asarray(eq_A, dtype=float))
            eq_b = np.asarray(eq_b, dtype=float).ravel()
            if eq_A.shape != (eq_b.shape[0], d):
                raise ValueError("equality constraint shapes are inconsistent")
            object.__setattr__(self, "eq_A", eq_A)
            object.__setattr__(self, "eq_b", eq_b)
        object.__setattr__(self, "c0", float(self.c0))

    @property
    def dim(self) -> int:
        return self.f.shape[0]


@dataclass(frozen=True)
class SolveReport:
    status: str  # "optimal" | "infeasible" | "unbounded" | "numerical-failure"
    minimizer: Optional[np.ndarray] = None
    objective: Optional[float] = None
    active_set: tuple[int, ...] = ()


def solve_qp(qp: QuadraticProgram) -> SolveReport:
    """Solve qp; LP route for H == 0, active-set route otherwise."""
    if not np.any(qp.H):
        return _solve_lp(qp)
    return _solve_pd_qp(qp)


def _ineq_arrays(qp: QuadraticProgram):
    if qp.ineq.halfspaces:
        return qp.ineq.A, qp.ineq.b
    return None, None


_LP_STATUS = {0: "optimal", 1: "numerical-failure", 2: "infeasible", 3: "unbounded", 4: "numerical-failure"}


def _solve_lp(qp: QuadraticProgram) -> SolveReport:
    A_ub, b_ub = _ineq_arrays(qp)
    res = linprog(
        qp.f,
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=qp.eq_A,
        b_eq=qp.eq_b,
        bounds=(None, None),
        method="highs",
    )
    status = _LP_STATUS.get(res.status, "numerical-failure")
    if status != "optimal":
        return SolveReport(status=status)
    x = np.asarray(res.x, dtype=float)
    active = ()
    if A_ub is not None:
        slack = b_ub - A_ub @ x
        active = tuple(int(i) for i in np.flatnonzero(slack <= 1e-8))
    return SolveReport(
        status="optimal",
        minimizer=x,
        objective=float(qp.f @ x + qp.c0),
        active_set=active,
    )


def _phase_one(qp: QuadraticProgram):
    """A feasible point via a zero-cost LP, or None with the failure status."""
    d = qp.dim
    if not qp.ineq.halfspaces and qp.eq_A is None:
        return np.zeros(d), None
    A_ub, b_ub = _ineq_arrays(qp)
    res = linprog(
        np.zeros(d),
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=qp.eq_A,
        b_eq=qp.eq_b,
        bounds=(None, None),
        method="highs",
    )
    if res.status == 2:
        return None, "infeasible"
    if res.status != 0:
        return None, _LP_STATUS.get(res.status, "numerical-failure")
    return np.asarray(res.x, dtype=float), None


def _solve_pd_qp(qp: QuadraticProgram) -> SolveReport:
    H_work = qp.H
    try:
        np.linalg.cholesky(H_work)
    except np.linalg.LinAlgError:
        # Rank-deficient PSD Hessians (stacked norm objectives) get a tiny
        # ridge; the unshifted KKT residual is verified before reporting.
        H_work = qp.H + _RIDGE * np.eye(qp.dim)
        try:
            np.linalg.cholesky(H_work)
        except np.linalg.LinAlgError:
            return SolveReport(status="numerical-failure")

    x, failure = _phase_one(qp)
    if failure is not None:
        return SolveReport(status=failure)

    d = qp.dim
    A_in, b_in = _ineq_arrays(qp)
    n_in = 0 if A_in is None else A_in.shape[0]
    n_eq = 0 if qp.eq_A is None else qp.eq_A.shape[0]
    working: list[int] = []
    lam = np.zeros(0)
    max_iter = 50 + 10 * (n_in + d)

    for _ in range(max_iter):
        if n_eq or working:
            A_w = np.vstack(
                ([qp.eq_A] if n_eq else []) + ([A_in[working]] if working else [])
            )
        else:
            A_w = np.zeros((0, d))
        g = H_work @ x + qp.f
        kkt = np.block(
            [[H_work, A_w.T], [A_w, np.zeros((A_w.shape[0], A_w.shape[0]))]]
        )
        rhs = np.concatenate([-g, np.zeros(A_w.shape[0])])
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
        p = sol[:d]
        lam = sol[d:]

        if np.max(np.abs(p), initial=0.0) <= 1e-11 * max(1.0, float(np.max(np.abs(x)))):
            ineq_lam = lam[n_eq:]
            below = np.flatnonzero(ineq_lam < -_MULTIPLIER_TOL)
            if below.size == 0:
                return _certified_report(qp, x, working, lam, n_eq)
            # Bland-style: drop the working constraint with the lowest
            # original index among those with a negative multiplier.
            drop = min(working[j] for j in below)
            working.remove(drop)
            continue

        alpha = 1.0
        blocker = -1
        if n_in:
            in_working = np.zeros(n_in, dtype=bool)
            if working:
                in_working[working] = True
            steps = A_in @ p
            gaps = b_in - A_in @ x
            for i in range(n_in):
                if in_working[i] or steps[i] <= 1e-14:
                    continue
                ratio = max(gaps[i] / steps[i], 0.0)
                if ratio < alpha - 1e-12:
                    alpha = ratio
                    blocker = i
        x = x + alpha * p
        if blocker >= 0:
            bisect.insort(working, blocker)

    return SolveReport(status="numerical-failure")


def _certified_report(qp, x, working, lam, n_eq) -> SolveReport:
    """Check KKT conditions of the original (unshifted) problem."""
    A_in, b_in = _ineq_arrays(qp)
    feas = 0.0
    if A_in is not None:
        feas = max(feas, float(np.max(A_in @ x - b_in, initial=0.0)))
    if qp.eq_A is not None:
        feas = max(feas, float(np.max(np.abs(qp.eq_A @ x - qp.eq_b), initial=0.0)))
    if feas > _FEASIBILITY_TOL:
        return SolveReport(status="numerical-failure")

    g = qp.H @ x + qp.f
    if n_eq or working:
        A_w = np.vstack(
            ([qp.eq_A] if n_eq else []) + ([A_in[working]] if working else [])
        )
        stationarity = float(np.max(np.abs(g + A_w.T @ lam)))
    else:
        stationarity = float(np.max(np.abs(g), initial=0.0))
    if stationarity > _STATIONARITY_TOL:
        return SolveReport(status="numerical-failure")

    objective = float(0.5 * x @ (qp.H @ x) + qp.f @ x + qp.c0)
    return SolveReport(
        status="optimal",
        minimizer=x,
        objective=objective,
        active_set=tuple(working),
    )


def min_norm_to_point(M: np.ndarray, b: np.ndarray, P: Polytope):
    """Minimize |M u - b| over P.  Returns (minimizer, value)."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    qp = QuadraticProgram(H=2.0 * M.T @ M, f=-2.0 * M.T @ b, ineq=P, c0=float(b @ b))
    report = solve_qp(qp)
    if report.status != "optimal":
        raise SolverError(f"norm minimization failed: {report.status}", report.status)
    u = report.minimizer
    return u, float(np.linalg.norm(M @ u - b))


def max_norm_to_point(M: np.ndarray, b: np.ndarray, P: Polytope):
    """Maximize |M u - b| over a bounded P with dim <= 3 (vertex scan).

    The maximum of a convex function over a polytope sits at a vertex, so the
    value is exact up to vertex arithmetic.  Ties resolve to the vertex that
    comes first in the lexicographic vertex order.
    """
    if P.dim > 3:
        raise ValueError(f"norm maximization supports dim <= 3, got {P.dim}")
    return _max_norm_unchecked(M, b, P)


def _max_norm_unchecked(M: np.ndarray, b: np.ndarray, P: Polytope):
    from . import geometry

    M = np.atleast_2d(np.asarray(M, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    if not geometry.is_bounded(P):
        raise SolverError("norm maximization requires a bounded polytope")
    vertices = geometry._vertices_unchecked(P)
    if not vertices:
        raise SolverError("norm maximization over an empty polytope", "infeasible")
    best = None
    best_val = -1.0
    for v in vertices:
        val = float(np.linalg.norm(M @ v - b))
        if val > best_val:
            best, best_val = v, val
    return best, best_val
