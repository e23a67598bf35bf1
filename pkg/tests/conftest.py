"""Shared fixtures for the road scenarios used across test modules."""

import pytest

from cvpmpc import sim
from cvpmpc.collision import CollisionGeometry
from cvpmpc.model import TruncatedRadialGaussian


@pytest.fixture(scope="session")
def scenario2_det_log():
    """Deterministic (zero-noise) rollout of the built-in crossing scenario.

    Session-scoped: several modules check landmarks on the same trajectory
    and the rollout costs about a second.
    """
    return sim.run_scenario(sim.builtin_scenario_2(), seed=0, noise_mode="deterministic")


@pytest.fixture()
def road_geometry():
    return CollisionGeometry(2.0, 0.8, TruncatedRadialGaussian(1.0, 0.9))
