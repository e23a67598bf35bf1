"""Plant, obstacle, and uncertainty models for the planar avoidance setup."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import erf, erfinv

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """Discrete-time LTI system x_{k+1} = A x_k + B u_k, y_k = C x_k."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise ValueError(f"B must have {A.shape[0]} rows, got {B.shape}")
        if C.shape[1] != A.shape[0]:
            raise ValueError(f"C must have {A.shape[0]} columns, got {C.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def q(self) -> int:
        return self.C.shape[0]

    def step(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.A @ np.asarray(x, dtype=float) + self.B @ np.asarray(u, dtype=float)

    def output(self, x: np.ndarray) -> np.ndarray:
        return self.C @ np.asarray(x, dtype=float)

    def __eq__(self, other):
        if not isinstance(other, LinearSystem):
            return NotImplemented
        return (
            np.array_equal(self.A, other.A)
            and np.array_equal(self.B, other.B)
            and np.array_equal(self.C, other.C)
        )


def discretize_double_integrator(dt: float) -> LinearSystem:
    """Planar velocity-input plant discretized with A = I, B = (e^dt - 1) I, C = I.

    The input is the commanded velocity [u1, u2]; one step advances the
    position by (e^dt - 1) * u.  Raises ValueError for non-positive dt.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    b = math.expm1(dt)
    eye = np.eye(2)
    return LinearSystem(A=eye, B=b * eye, C=eye)


@dataclass(frozen=True)
class TruncatedRadialGaussian:
    """Radial Gaussian truncated to [0, w_max], with uniform angle.

    The step radius r has density

        f(r) = 1 / (sigma * z * sqrt(2 pi)) * exp(-r^2 / (2 sigma^2))

    on 0 <= r <= w_max and 0 elsewhere, where z = Phi(w_max) - Phi(0)
    and Phi is the standard normal CDF scaled by sigma.  The planar
    displacement is r times a uniformly random unit vector.
    """

    sigma: float
    w_max: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.w_max < 0:
            raise ValueError(f"w_max must be nonnegative, got {self.w_max}")

    @property
    def z(self) -> float:
        """Truncation mass Phi(w_max) - Phi(0) = 0.5 erf(w_max / (sigma sqrt 2))."""
        return 0.5 * float(erf(self.w_max / (self.sigma * _SQRT2)))

    def pdf(self, r: float) -> float:
        if r < 0 or r > self.w_max or self.w_max == 0:
            return 0.0
        return math.exp(-r * r / (2.0 * self.sigma**2)) / (self.sigma * self.z * _SQRT2PI)

    def support_mass(self, a: float, b: float) -> float:
        """Integral of the radial density over [a, b] within [0, w_max], via erf."""
        if self.w_max == 0:
            return 0.0
        a = min(max(a, 0.0), self.w_max)
        b = min(max(b, 0.0), self.w_max)
        if b <= a:
            return 0.0
        s = self.sigma * _SQRT2
        return float(erf(b / s) - erf(a / s)) / float(erf(self.w_max / s))

    def sample_radius(self, uniform: np.ndarray) -> np.ndarray:
        """Inverse-CDF map from uniform(0,1) draws to step radii."""
        u = np.asarray(uniform, dtype=float)
        if self.w_max == 0:
            return np.zeros_like(u)
        s = self.sigma * _SQRT2
        return s * erfinv(u * erf(self.w_max / s))

    def sample_step(self, rng: np.random.Generator, count: int = 1) -> np.ndarray:
        """Draw planar steps, shape (count, 2): radius by inverse CDF, angle uniform."""
        radii = self.sample_radius(rng.random(count))
        angles = rng.random(count) * 2.0 * math.pi
        return np.column_stack((radii * np.cos(angles), radii * np.sin(angles)))


def radial_density(d: TruncatedRadialGaussian, r: float) -> float:
    """Density of the step radius at r, zero outside [0, w_max]."""
    if r < 0:
        raise ValueError(f"r must be nonnegative, got {r}")
    return d.pdf(r)


class StepSchedule:
    """Piecewise-constant, step-indexed schedule; last value repeats forever.

    Entries are (from_step, value) pairs; the first entry must start at 0.
    """

    def __init__(self, entries: Sequence[tuple[int, object]]):
        entries = sorted(entries, key=lambda e: e[0])
        if not entries:
            raise ValueError("schedule needs at least one entry")
        if entries[0][0] != 0:
            raise ValueError("schedule must start at step 0")
        self._steps = [int(s) for s, _ in entries]
        self._values = [v for _, v in entries]

    @classmethod
    def constant(cls, value) -> "StepSchedule":
        return cls([(0, value)])

    def value_at(self, k: int):
        if k < 0:
            raise ValueError(f"step must be nonnegative, got {k}")
        idx = 0
        for i, s in enumerate(self._steps):
            if s <= k:
                idx = i
            else:
                break
        return self._values[idx]

    @property
    def entries(self) -> list[tuple[int, object]]:
        return list(zip(self._steps, self._values))

    def __eq__(self, other):
        if not isinstance(other, StepSchedule):
            return NotImplemented
        if self._steps != other._steps or len(self._values) != len(other._values):
            return False
        return all(np.array_equal(a, b) for a, b in zip(self._values, other._values))


@dataclass(frozen=True, eq=False)
class ObstacleModel:
    """Driven random walk y_{r,k+1} = y_{r,k} + u_{r,k} + w_k.

    u_r is a known deterministic input schedule; w_k is a random planar
    step with radius drawn from the truncated radial Gaussian whose
    support radius follows w_max_schedule.  The density field carries
    sigma and the step-0 support.
    """

    y_r0: np.ndarray
    u_r_schedule: StepSchedule
    w_max_schedule: StepSchedule
    density: TruncatedRadialGaussian

    def __post_init__(self):
        object.__setattr__(self, "y_r0", np.asarray(self.y_r0, dtype=float))
        for _, w in self.w_max_schedule.entries:
            if w < 0:
                raise ValueError(f"w_max entries must be nonnegative, got {w}")

    def u_r_at(self, k: int) -> np.ndarray:
        return np.asarray(self.u_r_schedule.value_at(k), dtype=float)

    def w_max_at(self, k: int) -> float:
        return float(self.w_max_schedule.value_at(k))

    def density_at(self, k: int) -> TruncatedRadialGaussian:
        return TruncatedRadialGaussian(self.density.sigma, self.w_max_at(k))

    def __eq__(self, other):
        if not isinstance(other, ObstacleModel):
            return NotImplemented
        return (
            np.array_equal(self.y_r0, other.y_r0)
            and self.u_r_schedule == other.u_r_schedule
            and self.w_max_schedule == other.w_max_schedule
            and self.density == other.density
        )


def nominal_next_obstacle(o: ObstacleModel, y_r: np.ndarray, k: int) -> np.ndarray:
    """Nominal next obstacle output, the current output plus the scheduled input."""
    return np.asarray(y_r, dtype=float) + o.u_r_at(k)
