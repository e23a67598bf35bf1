"""First-step input-set tightening against a noisy obstacle.

Given the reachable output after one step and the obstacle's nominal next
output, the squared separation h(u) = |C(Ax0 + Bu) - ybar|^2 is compared
against the squared safety threshold (c1 + w_max)^2 over the admissible
first-step inputs.  Three outcomes:

  * every input keeps h above the threshold: the set passes through whole;
  * no input reaches it: the admissible set collapses to the h-maximizer;
  * mixed: a supporting halfspace at a boundary point carves out the inputs
    certified safe to first order (exactly, since h is quadratic convex).

The halfspace side follows from convexity: h(u) >= h(p) + grad.(u - p), so
grad.(u - p) >= 0 forces h(u) >= threshold.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
from scipy.stats import qmc

from . import geometry, solver
from .geometry import Halfspace, Polytope
from .model import LinearSystem

_EMPTY_TOL = 1e-9
_BOUNDARY_REL_TOL = 1e-9
_ZERO_GRADIENT_TOL = 1e-12


@dataclass(frozen=True)
class SubstituteFn:
    """Monotone substitute pair: h squares the separation, g the threshold."""

    @staticmethod
    def h(value: float) -> float:
        return value * value

    @staticmethod
    def g(value: float) -> float:
        return value * value


SQUARED_SEPARATION = SubstituteFn()


@dataclass(frozen=True, eq=False)
class ViolationContext:
    """One-step safety data: current state, obstacle nominal next output,
    clearance radius c1, noise support radius, and the first-step input set."""

    x0: np.ndarray
    ybar_r1: np.ndarray
    c1: float
    w_max0: float
    input_set: Polytope

    def __post_init__(self):
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float).ravel())
        object.__setattr__(self, "ybar_r1", np.asarray(self.ybar_r1, dtype=float).ravel())
        object.__setattr__(self, "c1", float(self.c1))
        object.__setattr__(self, "w_max0", float(self.w_max0))
        if self.c1 < 0:
            raise ValueError("clearance radius c1 must be nonnegative")
        if self.w_max0 < 0:
            raise ValueError("noise support radius must be nonnegative")

    def __eq__(self, other):
        if not isinstance(other, ViolationContext):
            return NotImplemented
        return (
            np.array_equal(self.x0, other.x0)
            and np.array_equal(self.ybar_r1, other.ybar_r1)
            and self.c1 == other.c1
            and self.w_max0 == other.w_max0
            and self.input_set == other.input_set
        )


@dataclass(frozen=True)
class FullInputSet:
    """Whole input set already certified safe."""

    polytope: Polytope


@dataclass(frozen=True, eq=False)
class SingletonInputSet:
    """Single input maximizing the separation; safety cannot be certified."""

    u: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "u", np.asarray(self.u, dtype=float).ravel())

    def __eq__(self, other):
        if not isinstance(other, SingletonInputSet):
            return NotImplemented
        return np.array_equal(self.u, other.u)


@dataclass(frozen=True)
class RestrictedInputSet:
    """Input set cut by a supporting halfspace at boundary point p."""

    polytope: Polytope
    halfspace: Halfspace
    p: np.ndarray


InputSetVariant = Union[FullInputSet, SingletonInputSet, RestrictedInputSet]


@dataclass(frozen=True)
class AdmissibleInputSet:
    variant: InputSetVariant
    h_min: float
    h_max: float
    threshold: float
    fell_back: bool = False

    @property
    def case_label(self) -> str:
        if isinstance(self.variant, FullInputSet):
            return "1"
        if isinstance(self.variant, RestrictedInputSet):
            return "3"
        return "3-fallback" if self.fell_back else "2"


def _separation_map(sys: LinearSystem, ctx: ViolationContext):
    """(M, b) with h(u) = |M u - b|^2 for the one-step output map."""
    M = sys.C @ sys.B
    b = ctx.ybar_r1 - sys.C @ sys.A @ ctx.x0
    return M, b


def compute_admissible_set(sys: LinearSystem, ctx: ViolationContext) -> AdmissibleInputSet:
    """Classify ctx.input_set against the squared safety threshold."""
    if ctx.input_set.dim != sys.m:
        raise ValueError("input set dimension does not match the system input")
    M, b = _separation_map(sys, ctx)
    threshold = SQUARED_SEPARATION.g(ctx.c1 + ctx.w_max0)
    return _classify(M, b, ctx.input_set, threshold)


def _classify(M: np.ndarray, b: np.ndarray, P: Polytope, threshold: float) -> AdmissibleInputSet:
    if geometry.is_empty(P, _EMPTY_TOL):
        raise ValueError("admissible-set classification requires a nonempty input set")
    u_lo, val_lo = solver.min_norm_to_point(M, b, P)
    u_hi, val_hi = solver._max_norm_unchecked(M, b, P)
    h_min = val_lo * val_lo
    h_max = val_hi * val_hi

    if h_min >= threshold:
        return AdmissibleInputSet(FullInputSet(P), h_min, h_max, threshold)
    if h_max < threshold:
        return AdmissibleInputSet(SingletonInputSet(u_hi), h_min, h_max, threshold)

    p = _bisect_boundary(M, b, u_lo, u_hi, threshold)
    grad = 2.0 * M.T @ (M @ p - b)
    if float(np.linalg.norm(grad)) <= _ZERO_GRADIENT_TOL:
        return AdmissibleInputSet(
            SingletonInputSet(u_hi), h_min, h_max, threshold, fell_back=True
        )
    halfspace = Halfspace(-grad, float(-grad @ p))
    restricted = geometry.intersect(P, halfspace)
    if geometry.is_empty(restricted, _EMPTY_TOL):
        return AdmissibleInputSet(
            SingletonInputSet(u_hi), h_min, h_max, threshold, fell_back=True
        )
    return AdmissibleInputSet(
        RestrictedInputSet(restricted, halfspace, p), h_min, h_max, threshold
    )


def _bisect_boundary(
    M: np.ndarray, b: np.ndarray, u_lo: np.ndarray, u_hi: np.ndarray, threshold: float
) -> np.ndarray:
    """Point p on the segment [u_lo, u_hi] with |M p - b|^2 ~ threshold.

    Requires h(u_lo) < threshold <= h(u_hi); h is continuous along the
    segment so bisection brackets the level crossing.  Returns u_hi outright
    when the maximum sits exactly on the threshold.
    """
    delta = u_hi - u_lo

    def h_at(t: float) -> float:
        r = M @ (u_lo + t * delta) - b
        return float(r @ r)

    tol = _BOUNDARY_REL_TOL * max(1.0, threshold)
    if h_at(1.0) <= threshold:
        return u_hi
    # Convergence is tested on the upper bracket endpoint, which stays on the
    # h >= threshold side, so the returned p never undershoots the level set.
    t_lo, t_hi = 0.0, 1.0
    for _ in range(200):
        if h_at(t_hi) - threshold <= tol:
            break
        t = 0.5 * (t_lo + t_hi)
        if h_at(t) < threshold:
            t_lo = t
        else:
            t_hi = t
    return u_lo + t_hi * delta


def gradient_at(sys: LinearSystem, ctx: ViolationContext, p: np.ndarray) -> np.ndarray:
    """Gradient of h(u) = |C(Ax0 + Bu) - ybar_r1|^2 at u = p."""
    p = np.asarray(p, dtype=float).ravel()
    M, b = _separation_map(sys, ctx)
    return 2.0 * M.T @ (M @ p - b)


def find_boundary_point(
    sys: LinearSystem, ctx: ViolationContext, u_lo: np.ndarray, u_hi: np.ndarray
) -> np.ndarray:
    """Bisect between an unsafe and a safe input for the threshold crossing."""
    u_lo = np.asarray(u_lo, dtype=float).ravel()
    u_hi = np.asarray(u_hi, dtype=float).ravel()
    M, b = _separation_map(sys, ctx)
    threshold = SQUARED_SEPARATION.g(ctx.c1 + ctx.w_max0)
    for u in (u_lo, u_hi):
        if not geometry.contains(ctx.input_set, u, 1e-7):
            raise ValueError("boundary search endpoints must lie in the input set")
    r_lo = M @ u_lo - b
    r_hi = M @ u_hi - b
    if not float(r_lo @ r_lo) < threshold <= float(r_hi @ r_hi):
        raise ValueError("boundary search requires h(u_lo) < threshold <= h(u_hi)")
    return _bisect_boundary(M, b, u_lo, u_hi, threshold)


def multi_step_admissible_set(
    sys: LinearSystem, contexts: Sequence[ViolationContext], l: int
) -> AdmissibleInputSet:
    """Classify the stacked l-step input sequence against the accumulated
    threshold (c1 + sum of per-step noise radii)^2 on the step-l separation.

    Contexts are consumed in step order; context i supplies the step-i input
    set and noise radius, the last context the nominal obstacle output at
    step l.  The stacked dimension m*l is capped at 6 (vertex enumeration
    cost grows combinatorially).
    """
    if l < 1 or l != len(contexts):
        raise ValueError("l must match the number of contexts and be >= 1")
    m = sys.m
    if m * l > 6:
        raise ValueError("stacked dimension m*l must be <= 6")
    c1 = contexts[0].c1
    for ctx in contexts:
        if ctx.input_set.dim != m:
            raise ValueError("every context input set must match the system input")
        if ctx.c1 != c1:
            raise ValueError("contexts must share one clearance radius")

    x0 = contexts[0].x0
    A_pow = [np.linalg.matrix_power(sys.A, j) for j in range(l + 1)]
    M = np.hstack([sys.C @ A_pow[l - 1 - i] @ sys.B for i in range(l)])
    b = contexts[-1].ybar_r1 - sys.C @ A_pow[l] @ x0
    threshold = SQUARED_SEPARATION.g(c1 + sum(ctx.w_max0 for ctx in contexts))

    stacked: list[Halfspace] = []
    for i, ctx in enumerate(contexts):
        for hs in ctx.input_set.halfspaces:
            normal = np.zeros(m * l)
            normal[i * m : (i + 1) * m] = hs.normal
            stacked.append(Halfspace(normal, hs.offset))
    P = Polytope(tuple(stacked), m * l)
    return _classify(M, b, P, threshold)


def sampled_general_uopt(
    sys: LinearSystem,
    ctx: ViolationContext,
    prob_fn: Callable[[np.ndarray], float],
    n_samples: int,
) -> list[np.ndarray]:
    """Near-minimizers of a violation-probability function over the input set.

    Low-discrepancy (unscrambled Halton) points in the input set's bounding
    box are rejection-filtered into the polytope; returns every sample whose
    probability is within 1e-9 of the sampled minimum.  Deterministic.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    vertices = geometry.enumerate_vertices(ctx.input_set)
    if not vertices:
        raise ValueError("input set has no vertices to bound the sample box")
    stacked = np.vstack(vertices)
    lo = stacked.min(axis=0)
    hi = stacked.max(axis=0)

    sampler = qmc.Halton(d=ctx.input_set.dim, scramble=False)
    accepted: list[np.ndarray] = []
    drawn = 0
    budget = 1000 * n_samples
    while len(accepted) < n_samples and drawn < budget:
        batch = sampler.random(min(256, budget - drawn))
        drawn += batch.shape[0]
        for row in lo + batch * (hi - lo):
            if geometry.contains(ctx.input_set, row, 1e-9):
                accepted.append(row)
                if len(accepted) == n_samples:
                    break
    if not accepted:
        raise RuntimeError("no samples landed in the input set")

    probs = np.array([float(prob_fn(u)) for u in accepted])
    p_min = float(probs.min())
    return [u for u, p in zip(accepted, probs) if p <= p_min + 1e-9]


def reverse_triangle_implication_holds(
    y: np.ndarray,
    ybar_r: np.ndarray,
    c: float,
    w_max: float,
    w_samples: np.ndarray,
) -> bool:
    """Check |y - ybar_r| >= c + w_max implies |y - ybar_r - w| >= c for all
    sampled noise steps w with |w| <= w_max.  Vacuously true when the
    nominal separation is below c + w_max."""
    y = np.asarray(y, dtype=float).ravel()
    ybar_r = np.asarray(ybar_r, dtype=float).ravel()
    w = np.atleast_2d(np.asarray(w_samples, dtype=float))
    norms = np.linalg.norm(w, axis=1)
    if np.any(norms > w_max + 1e-12):
        raise ValueError("noise samples must lie within the support ball")
    gap = y - ybar_r
    if float(np.linalg.norm(gap)) < c + w_max:
        return True
    residual = np.linalg.norm(gap[None, :] - w, axis=1)
    return bool(np.all(residual >= c))
