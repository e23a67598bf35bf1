"""Closed-loop rollouts: determinism, scenario landmarks, collision flags."""

import dataclasses

import numpy as np
import pytest

from cvpmpc.collision import CollisionGeometry
from cvpmpc.model import ObstacleModel, StepSchedule, TruncatedRadialGaussian
from cvpmpc.sim import (
    BUILTIN_SCENARIOS,
    ScenarioConfig,
    builtin_scenario_1,
    builtin_scenario_2,
    first_support_jump,
    monte_carlo_validation,
    run_scenario,
)

# Regression pins for the overtaking scenario rolled noise-free from seed 0.
# The first pair is the analytic probability and nominal distance at the
# noise-support jump; the second is the residual probability one step later.
JUMP_STEP_PROBABILITY = 0.07233168128809035
JUMP_STEP_DISTANCE = 3.318914997971282
POST_JUMP_PROBABILITY = 0.00012627271691920139


def records_equal(a, b):
    if len(a) != len(b):
        return False
    for ra, rb in zip(a, b):
        if not (
            ra.k == rb.k
            and ra.t == rb.t
            and np.array_equal(ra.x, rb.x)
            and np.array_equal(ra.u, rb.u)
            and np.array_equal(ra.y_r, rb.y_r)
            and ra.case_label == rb.case_label
            and ra.predicted_violation_probability == rb.predicted_violation_probability
            and ra.analytic_collision_probability == rb.analytic_collision_probability
            and ra.distance == rb.distance
            and ra.w_max_active == rb.w_max_active
            and ra.collided == rb.collided
        ):
            return False
    return True


def single_step_config(obstacle_position, r_r):
    base = builtin_scenario_1()
    obstacle = ObstacleModel(
        y_r0=np.asarray(obstacle_position, dtype=float),
        u_r_schedule=StepSchedule.constant(np.zeros(2)),
        w_max_schedule=StepSchedule.constant(0.15),
        density=TruncatedRadialGaussian(1.0, 0.15),
    )
    return dataclasses.replace(
        base,
        name="strictness-probe",
        obstacle=obstacle,
        geometry=CollisionGeometry(2.0, r_r, TruncatedRadialGaussian(1.0, 0.15)),
        x0=np.array([0.0, 5.0]),
        duration_steps=1,
    )


class TestScenarioConfigValidation:
    def test_builtin_registry_builds(self):
        for factory in BUILTIN_SCENARIOS.values():
            cfg = factory()
            assert isinstance(cfg, ScenarioConfig)

    def test_bad_durations_rejected(self):
        base = builtin_scenario_1()
        with pytest.raises(ValueError):
            dataclasses.replace(base, duration_steps=0)
        with pytest.raises(ValueError):
            dataclasses.replace(base, dt=0.0)
        with pytest.raises(ValueError):
            dataclasses.replace(base, x0=np.zeros(3))

    def test_equality_is_by_content(self):
        assert builtin_scenario_1() == builtin_scenario_1()
        assert builtin_scenario_1() != builtin_scenario_2()


class TestDeterminism:
    def test_same_seed_reproduces_the_log(self):
        cfg = builtin_scenario_2()
        a = run_scenario(cfg, seed=3, noise_mode="sampled")
        b = run_scenario(cfg, seed=3, noise_mode="sampled")
        assert records_equal(a.records, b.records)

    def test_different_seeds_diverge(self):
        cfg = builtin_scenario_2()
        a = run_scenario(cfg, seed=0, noise_mode="sampled")
        b = run_scenario(cfg, seed=1, noise_mode="sampled")
        assert not records_equal(a.records, b.records)

    def test_deterministic_mode_ignores_the_seed(self):
        cfg = builtin_scenario_2()
        a = run_scenario(cfg, seed=0, noise_mode="deterministic")
        b = run_scenario(cfg, seed=99, noise_mode="deterministic")
        assert records_equal(a.records, b.records)

    def test_unknown_noise_mode_rejected(self):
        with pytest.raises(ValueError):
            run_scenario(builtin_scenario_1(), seed=0, noise_mode="exact")


class TestCruiseScenario:
    def test_margin_never_binds(self):
        log = run_scenario(builtin_scenario_1(), seed=0, noise_mode="sampled")
        assert len(log.records) == 120
        assert all(r.case_label == "1" for r in log.records)
        assert all(r.analytic_collision_probability == 0.0 for r in log.records)
        assert all(r.predicted_violation_probability == 0.0 for r in log.records)
        assert log.collision_count == 0
        assert all(r.t == pytest.approx(r.k * 0.1, rel=1e-15) for r in log.records)


class TestOvertakingScenario:
    def test_support_jump_step(self, scenario2_det_log):
        records = scenario2_det_log.records
        assert records[29].w_max_active == 0.15
        assert records[30].w_max_active == 0.9
        assert records[50].w_max_active == 0.15

    def test_jump_step_landmarks(self, scenario2_det_log):
        r30 = scenario2_det_log.records[30]
        assert r30.case_label == "2"
        assert r30.analytic_collision_probability == JUMP_STEP_PROBABILITY
        assert r30.predicted_violation_probability == JUMP_STEP_PROBABILITY
        assert r30.distance == JUMP_STEP_DISTANCE

    def test_escape_step_landmarks(self, scenario2_det_log):
        records = scenario2_det_log.records
        assert records[31].predicted_violation_probability == POST_JUMP_PROBABILITY
        assert records[32].case_label == "3"
        assert records[32].analytic_collision_probability == 0.0

    def test_case_progression(self, scenario2_det_log):
        labels = [r.case_label for r in scenario2_det_log.records]
        assert set(labels) <= {"1", "2", "3"}
        assert labels.index("2") == 30
        assert "3" in labels

    def test_returns_to_the_lane(self, scenario2_det_log):
        r65 = scenario2_det_log.records[65]
        assert abs(r65.x[1] - 4.0) == pytest.approx(0.005110353711384796, rel=1e-9)

    def test_never_collides_noise_free(self, scenario2_det_log):
        assert scenario2_det_log.collision_count == 0


class TestCollisionFlagStrictness:
    def test_exact_combined_radius_is_not_a_collision(self):
        cfg = single_step_config((3.0, 5.0), r_r=1.0)
        log = run_scenario(cfg, seed=0, noise_mode="deterministic")
        assert log.records[0].collided is False
        assert log.collision_count == 0

    def test_just_inside_is_a_collision(self):
        cfg = single_step_config((2.999, 5.0), r_r=1.0)
        log = run_scenario(cfg, seed=0, noise_mode="deterministic")
        assert log.records[0].collided is True
        assert log.collision_count == 1


class TestSupportJumpSearch:
    def test_finds_the_builtin_jump(self):
        cfg = builtin_scenario_2()
        assert first_support_jump(cfg.obstacle, cfg.duration_steps) == 30

    def test_constant_schedule_has_none(self):
        cfg = builtin_scenario_1()
        with pytest.raises(ValueError):
            first_support_jump(cfg.obstacle, cfg.duration_steps)


class TestMonteCarloValidation:
    def test_fields_and_agreement(self):
        cfg = builtin_scenario_2()
        out = monte_carlo_validation(cfg, runs=200, base_seed=0)
        assert out.runs == 200
        assert out.jump_step == 30
        assert out.frequency == out.collisions / 200
        assert out.analytic_probability == JUMP_STEP_PROBABILITY
        # 3-sigma binomial band around the analytic value.
        band = 3.0 * (JUMP_STEP_PROBABILITY * (1 - JUMP_STEP_PROBABILITY) / 200) ** 0.5
        assert abs(out.frequency - out.analytic_probability) <= band

    def test_deterministic_given_the_base_seed(self):
        cfg = builtin_scenario_2()
        a = monte_carlo_validation(cfg, runs=150, base_seed=7)
        b = monte_carlo_validation(cfg, runs=150, base_seed=7)
        assert a == b

    def test_run_count_validated(self):
        with pytest.raises(ValueError):
            monte_carlo_validation(builtin_scenario_2(), runs=0)
