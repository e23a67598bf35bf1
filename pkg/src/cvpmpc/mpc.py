"""Receding-horizon tracking controller with first-step safety tightening.

Each step classifies the admissible first inputs against the obstacle
(cvpm.compute_admissible_set), then minimizes the usual quadratic tracking
cost over the input sequence with the classification imposed on u_0: nothing
for a full set, a supporting halfspace for a restricted set, an equality pin
for a singleton.  The horizon problem is condensed to a dense QP in the
stacked inputs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import collision, cvpm, geometry, solver
from .geometry import Halfspace, Polytope
from .model import LinearSystem, ObstacleModel, nominal_next_obstacle

_RICCATI_TOL = 1e-10
_RICCATI_MAX_ITER = 10000


class InfeasibleStepError(RuntimeError):
    """The constraints admit no input sequence at the current state."""


@dataclass(frozen=True, eq=False)
class PlantReference:
    """Reference trajectory rolled from x_ref0 by the plant under a constant
    input, so the tracked velocity is exactly the commanded one."""

    x_ref0: np.ndarray
    u_ref: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x_ref0", np.asarray(self.x_ref0, dtype=float).ravel())
        object.__setattr__(self, "u_ref", np.asarray(self.u_ref, dtype=float).ravel())

    def state_at(self, sys: LinearSystem, k: int) -> np.ndarray:
        if k < 0:
            raise ValueError("reference step index must be nonnegative")
        x = self.x_ref0
        for _ in range(k):
            x = sys.step(x, self.u_ref)
        return x

    def __eq__(self, other):
        if not isinstance(other, PlantReference):
            return NotImplemented
        return np.array_equal(self.x_ref0, other.x_ref0) and np.array_equal(
            self.u_ref, other.u_ref
        )


@dataclass(frozen=True, eq=False)
class MpcConfig:
    N: int
    Q: np.ndarray
    R: np.ndarray
    P_f: np.ndarray
    input_set: Polytope
    state_set: Polytope
    terminal_set: Polytope
    reference: PlantReference

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("horizon N must be >= 1")
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        P_f = np.atleast_2d(np.asarray(self.P_f, dtype=float))
        for name, mat in (("Q", Q), ("R", R), ("P_f", P_f)):
            if mat.shape[0] != mat.shape[1]:
                raise ValueError(f"{name} must be square")
            if np.max(np.abs(mat - mat.T), initial=0.0) > 1e-10:
                raise ValueError(f"{name} must be symmetric")
        if float(np.min(np.linalg.eigvalsh(Q))) < -1e-10:
            raise ValueError("Q must be positive semidefinite")
        if float(np.min(np.linalg.eigvalsh(P_f))) < -1e-10:
            raise ValueError("P_f must be positive semidefinite")
        try:
            np.linalg.cholesky(R)
        except np.linalg.LinAlgError:
            raise ValueError("R must be positive definite") from None
        if P_f.shape != Q.shape:
            raise ValueError("P_f must match Q in shape")
        if self.input_set.dim != R.shape[0]:
            raise ValueError("input set dimension must match R")
        if self.state_set.dim != Q.shape[0] or self.terminal_set.dim != Q.shape[0]:
            raise ValueError("state and terminal sets must match Q in dimension")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "P_f", P_f)

    def __eq__(self, other):
        if not isinstance(other, MpcConfig):
            return NotImplemented
        return (
            self.N == other.N
            and np.array_equal(self.Q, other.Q)
            and np.array_equal(self.R, other.R)
            and np.array_equal(self.P_f, other.P_f)
            and self.input_set == other.input_set
            and self.state_set == other.state_set
            and self.terminal_set == other.terminal_set
            and self.reference == other.reference
        )


@dataclass(frozen=True)
class ControlDecision:
    u0: np.ndarray
    case_label: str
    predicted_violation_probability: float
    nominal_next_distance: float
    h_min: float
    h_max: float
    threshold: float
    cost: float
    solve_time: float


def riccati_terminal_weight(sys: LinearSystem, Q: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Fixed point of the discrete Riccati recursion, iterated from Q."""
    A, B = sys.A, sys.B
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    P = Q.copy()
    for _ in range(_RICCATI_MAX_ITER):
        BtP = B.T @ P
        gain = np.linalg.solve(R + BtP @ B, BtP @ A)
        P_next = Q + A.T @ P @ A - A.T @ P @ B @ gain
        P_next = 0.5 * (P_next + P_next.T)
        if float(np.max(np.abs(P_next - P))) < _RICCATI_TOL:
            return P_next
        P = P_next
    raise RuntimeError("Riccati recursion did not converge")


def first_step_input_polytope(sys: LinearSystem, cfg: MpcConfig, x0: np.ndarray) -> Polytope:
    """Inputs whose one-step successor satisfies the state constraints (and
    the terminal constraints when the horizon is a single step)."""
    x0 = np.asarray(x0, dtype=float).ravel()
    rows: list[Halfspace] = list(cfg.input_set.halfspaces)
    free = sys.A @ x0
    for hs in cfg.state_set.halfspaces:
        rows.extend(geometry.halfspace_preimage(hs, sys.B, free))
    if cfg.N == 1:
        for hs in cfg.terminal_set.halfspaces:
            rows.extend(geometry.halfspace_preimage(hs, sys.B, free))
    return Polytope(tuple(rows), sys.m)


def _reference_window(sys: LinearSystem, ref: PlantReference, k: int, N: int):
    """Reference states x_ref at steps k..k+N and the inputs that realize
    them, recovered through the pseudoinverse of B."""
    X_ref = np.empty((N + 1, sys.n))
    x = ref.state_at(sys, k)
    for j in range(N + 1):
        X_ref[j] = x
        if j < N:
            x = sys.step(x, ref.u_ref)
    B_pinv = np.linalg.pinv(sys.B)
    U_ref = np.empty((N, sys.m))
    for j in range(N):
        U_ref[j] = B_pinv @ (X_ref[j + 1] - sys.A @ X_ref[j])
    return X_ref, U_ref


def _build_tracking_qp(
    sys: LinearSystem,
    cfg: MpcConfig,
    x0: np.ndarray,
    k: int,
    admissible: cvpm.AdmissibleInputSet,
) -> solver.QuadraticProgram:
    N, n, m = cfg.N, sys.n, sys.m
    d = N * m
    X_ref, U_ref = _reference_window(sys, cfg.reference, k, N)

    # Free response c_j = A^j x0 and input sensitivities S_j with x_j = c_j + S_j z.
    free = [np.asarray(x0, dtype=float).ravel()]
    sens = [np.zeros((n, d))]
    for j in range(N):
        S_next = sys.A @ sens[j]
        S_next[:, j * m : (j + 1) * m] += sys.B
        sens.append(S_next)
        free.append(sys.A @ free[j])

    H = np.zeros((d, d))
    f = np.zeros(d)
    c0 = float((free[0] - X_ref[0]) @ cfg.Q @ (free[0] - X_ref[0]))
    for j in range(1, N + 1):
        W = cfg.P_f if j == N else cfg.Q
        Sj = sens[j]
        resid = free[j] - X_ref[j]
        WS = W @ Sj
        H += 2.0 * Sj.T @ WS
        f += 2.0 * Sj.T @ (W @ resid)
        c0 += float(resid @ W @ resid)
    for j in range(N):
        blk = slice(j * m, (j + 1) * m)
        H[blk, blk] += 2.0 * cfg.R
        f[blk] += -2.0 * cfg.R @ U_ref[j]
        c0 += float(U_ref[j] @ cfg.R @ U_ref[j])
    H = 0.5 * (H + H.T)

    rows: list[Halfspace] = []
    for j in range(N):
        for hs in cfg.input_set.halfspaces:
            normal = np.zeros(d)
            normal[j * m : (j + 1) * m] = hs.normal
            rows.append(Halfspace(normal, hs.offset))
    for j in range(1, N + 1):
        source = cfg.terminal_set if j == N else cfg.state_set
        for hs in source.halfspaces:
            rows.extend(geometry.halfspace_preimage(hs, sens[j], free[j]))

    eq_A = None
    eq_b = None
    variant = admissible.variant
    if isinstance(variant, cvpm.RestrictedInputSet):
        normal = np.zeros(d)
        normal[:m] = variant.halfspace.normal
        rows.append(Halfspace(normal, variant.halfspace.offset))
    elif isinstance(variant, cvpm.SingletonInputSet):
        eq_A = np.hstack([np.eye(m), np.zeros((m, d - m))])
        eq_b = variant.u

    return solver.QuadraticProgram(
        H=H, f=f, ineq=Polytope(tuple(rows), d), eq_A=eq_A, eq_b=eq_b, c0=c0
    )


def solve_step(
    sys: LinearSystem,
    cfg: MpcConfig,
    x0: np.ndarray,
    obstacle: ObstacleModel,
    y_r: np.ndarray,
    k: int,
    c1: float,
) -> ControlDecision:
    """One controller step: tighten the first-step input set, then track."""
    started = time.perf_counter()
    x0 = np.asarray(x0, dtype=float).ravel()
    y_r = np.asarray(y_r, dtype=float).ravel()
    if x0.shape != (sys.n,):
        raise ValueError(f"state has shape {x0.shape}, expected ({sys.n},)")

    U_x0 = first_step_input_polytope(sys, cfg, x0)
    if geometry.is_empty(U_x0, 1e-9):
        raise InfeasibleStepError("no input keeps the next state inside the state set")

    ybar_r1 = nominal_next_obstacle(obstacle, y_r, k)
    ctx = cvpm.ViolationContext(
        x0=x0,
        ybar_r1=ybar_r1,
        c1=c1,
        w_max0=obstacle.w_max_at(k),
        input_set=U_x0,
    )
    admissible = cvpm.compute_admissible_set(sys, ctx)

    qp = _build_tracking_qp(sys, cfg, x0, k, admissible)
    report = solver.solve_qp(qp)
    if report.status == "infeasible":
        raise InfeasibleStepError("tracking problem has no feasible input sequence")
    if report.status != "optimal":
        raise solver.SolverError(f"tracking solve failed: {report.status}", report.status)

    u0 = report.minimizer[: sys.m]
    d_next = float(np.linalg.norm(sys.C @ sys.step(x0, u0) - ybar_r1))
    label = admissible.case_label
    if label in ("2", "3-fallback"):
        predicted = collision.violation_probability(obstacle.density_at(k), c1, d_next)
    else:
        predicted = 0.0

    return ControlDecision(
        u0=u0,
        case_label=label,
        predicted_violation_probability=predicted,
        nominal_next_distance=d_next,
        h_min=admissible.h_min,
        h_max=admissible.h_max,
        threshold=admissible.threshold,
        cost=float(report.objective),
        solve_time=time.perf_counter() - started,
    )
