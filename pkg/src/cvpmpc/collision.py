"""Collision probability between a point vehicle and a noisy obstacle.

The obstacle takes one random planar step: radius from a truncated Gaussian,
angle uniform.  A collision is a strict violation |y - y_r| < r_comb of the
combined safety radius.  The exact probability reduces to a one-dimensional
angular integral of the radial mass over each ray's chord through the
violation disc, evaluated by adaptive Simpson quadrature; a sampling
estimator is provided as an independent check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import TruncatedRadialGaussian

_QUAD_TOL = 1e-7
_CLAMP = 1e-9


@dataclass(frozen=True)
class CollisionGeometry:
    """Safety radii and the noise density they are checked against."""

    r_cv: float
    r_r: float
    density: TruncatedRadialGaussian

    def __post_init__(self):
        if self.r_cv <= 0 or self.r_r <= 0:
            raise ValueError("safety radii must be positive")
        object.__setattr__(self, "r_cv", float(self.r_cv))
        object.__setattr__(self, "r_r", float(self.r_r))

    @property
    def r_comb(self) -> float:
        return self.r_cv + self.r_r


def adaptive_simpson(f, a: float, b: float, tol: float = _QUAD_TOL) -> float:
    """Adaptive Simpson quadrature of f over [a, b] with Richardson refinement."""
    if b <= a:
        return 0.0
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _simpson_split(f, a, b, fa, fm, fb, whole, tol, 50)


def _simpson_split(f, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    delta = left + right - whole
    if depth <= 0 or abs(delta) <= 15.0 * tol:
        return left + right + delta / 15.0
    return _simpson_split(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + _simpson_split(
        f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1
    )


def _half_angle(d: float, c: float, w: float) -> float:
    """Half-angle subtended at the obstacle by the overlap of the radius-w
    support disc with the radius-c violation disc centered distance d away.

    Law of cosines on the triangle (obstacle, vehicle, crossing point).  The
    angle is obtuse when d^2 < c^2 - w^2, so the arccos form is used rather
    than arcsin of the chord, which cannot tell the two cases apart.
    """
    radicand = 4.0 * d * d * w * w - (d * d - c * c + w * w) ** 2
    if radicand < -1e-12 * max(1.0, 4.0 * d * d * w * w):
        raise ValueError("support and violation discs do not overlap")
    cos_t = (w * w + d * d - c * c) / (2.0 * w * d)
    if abs(cos_t) > 1.0:
        if abs(cos_t) > 1.0 + 1e-12:
            raise ValueError("inconsistent disc overlap geometry")
        cos_t = math.copysign(1.0, cos_t)
    return math.acos(cos_t)


def _near_crossing(d: float, c: float, theta: float) -> float:
    """Nearer intersection radius of the angle-theta ray with the violation
    circle.  Negative when the ray starts inside the circle (d < c)."""
    proj = 2.0 * d * math.cos(theta)
    radicand = proj * proj - 4.0 * (d * d - c * c)
    if radicand < 0.0:
        if radicand < -1e-12 * max(1.0, proj * proj):
            raise ValueError("ray does not reach the violation circle")
        radicand = 0.0
    return 0.5 * (proj - math.sqrt(radicand))


def _far_crossing(d: float, c: float, theta: float) -> float:
    proj = 2.0 * d * math.cos(theta)
    radicand = max(proj * proj - 4.0 * (d * d - c * c), 0.0)
    return 0.5 * (proj + math.sqrt(radicand))


def intersection_half_angle(g: CollisionGeometry, d: float) -> float:
    """Angle at the obstacle between the vehicle direction and the point
    where the support circle crosses the violation circle, in [0, pi]."""
    w = g.density.w_max
    c = g.r_comb
    if w <= 0.0:
        raise ValueError("half-angle requires a positive noise support radius")
    if not (abs(d - w) <= c <= d + w):
        raise ValueError("discs must intersect: need |d - w| <= r_comb <= d + w")
    return _half_angle(d, c, w)


def inner_radius(g: CollisionGeometry, d: float, theta: float) -> float:
    """Minimum step radius along direction theta that enters the violation disc."""
    return _near_crossing(d, g.r_comb, theta)


def violation_probability(density: TruncatedRadialGaussian, c: float, d: float) -> float:
    """P(|x - (y_r + w)| < c) for one noise step w, with |x - y_r| = d.

    The trivial all/none regimes short-circuit.  Otherwise the probability
    is the angular integral of the radial mass over the chord the violation
    disc cuts from each noise ray, split at the support half-angle where
    the chord bracket hits the support radius and the integrand kinks.
    Whenever d^2 >= c^2 + w^2 the far crossing exceeds the support radius
    inside that angle and the bracket upper limit is just w.
    """
    if c <= 0:
        raise ValueError("violation radius must be positive")
    if d < 0:
        raise ValueError("distance must be nonnegative")
    w = density.w_max
    if d + w < c:
        return 1.0
    if d - w >= c:
        return 0.0

    # Angular reach of the violation disc as seen from the obstacle.
    theta_max = math.pi if d < c else math.asin(min(c / d, 1.0))

    def chord_mass(theta: float) -> float:
        lo = max(_near_crossing(d, c, theta), 0.0)
        hi = min(_far_crossing(d, c, theta), w)
        if hi <= lo:
            return 0.0
        return density.support_mass(lo, hi)

    breaks = [0.0, theta_max]
    if abs(d - w) <= c and d > 0:
        # Support and violation circles properly intersect; the crossing
        # angle is a derivative kink of chord_mass.
        theta_1 = _half_angle(d, c, w)
        if 1e-12 < theta_1 < theta_max:
            breaks.insert(1, theta_1)
    prob = (
        math.fsum(
            adaptive_simpson(chord_mass, a, b, _QUAD_TOL)
            for a, b in zip(breaks, breaks[1:])
        )
        / math.pi
    )

    if not (-_CLAMP <= prob <= 1.0 + _CLAMP):
        raise RuntimeError(f"integrated probability {prob} escaped [0, 1]")
    return min(max(prob, 0.0), 1.0)


def collision_probability(g: CollisionGeometry, d: float) -> float:
    """Probability that one obstacle noise step closes the gap below r_comb."""
    return violation_probability(g.density, g.r_comb, d)


def monte_carlo_collision_estimate(
    g: CollisionGeometry, d: float, samples: int, seed: int
) -> float:
    """Empirical violation frequency over sampled noise steps.

    Places the vehicle at (d, 0) relative to the obstacle and counts strict
    violations |(d, 0) - w| < r_comb.  Deterministic for a fixed seed.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if d < 0:
        raise ValueError("distance must be nonnegative")
    rng = np.random.default_rng(seed)
    steps = g.density.sample_step(rng, samples)
    rel = steps - np.array([d, 0.0])
    hits = np.sum(np.einsum("ij,ij->i", rel, rel) < g.r_comb**2)
    return float(hits) / float(samples)
