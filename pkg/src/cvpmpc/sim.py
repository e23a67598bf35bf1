"""Closed-loop rollouts and the collision-frequency validation harness."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import collision, mpc, solver
from .collision import CollisionGeometry
from .geometry import Halfspace, Polytope
from .mpc import MpcConfig, PlantReference
from .model import (
    LinearSystem,
    ObstacleModel,
    StepSchedule,
    TruncatedRadialGaussian,
    discretize_double_integrator,
    nominal_next_obstacle,
)

NOISE_MODES = ("sampled", "deterministic")


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    name: str
    system: LinearSystem
    mpc: MpcConfig
    obstacle: ObstacleModel
    geometry: CollisionGeometry
    x0: np.ndarray
    duration_steps: int
    dt: float
    reference_velocity: float
    y_ref: float

    def __post_init__(self):
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float).ravel())
        if self.duration_steps < 1:
            raise ValueError("duration_steps must be >= 1")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.x0.shape != (self.system.n,):
            raise ValueError("x0 dimension does not match the system state")

    def __eq__(self, other):
        if not isinstance(other, ScenarioConfig):
            return NotImplemented
        return (
            self.name == other.name
            and self.system == other.system
            and self.mpc == other.mpc
            and self.obstacle == other.obstacle
            and self.geometry == other.geometry
            and np.array_equal(self.x0, other.x0)
            and self.duration_steps == other.duration_steps
            and self.dt == other.dt
            and self.reference_velocity == other.reference_velocity
            and self.y_ref == other.y_ref
        )


@dataclass(frozen=True)
class StepRecord:
    k: int
    t: float
    x: np.ndarray
    u: np.ndarray
    y_r: np.ndarray
    case_label: str
    predicted_violation_probability: float
    analytic_collision_probability: float
    distance: float
    w_max_active: float
    collided: bool


@dataclass(frozen=True)
class TrajectoryLog:
    scenario_name: str
    seed: int
    noise_mode: str
    records: list[StepRecord] = field(default_factory=list)

    @property
    def collision_count(self) -> int:
        return sum(1 for r in self.records if r.collided)


@dataclass(frozen=True)
class MonteCarloResult:
    runs: int
    collisions: int
    frequency: float
    analytic_probability: float
    jump_step: int


def run_scenario(cfg: ScenarioConfig, seed: int = 0, noise_mode: str = "sampled") -> TrajectoryLog:
    """Roll the closed loop for cfg.duration_steps controller steps.

    The obstacle's realized noise is sampled per step ("sampled") or pinned
    to zero ("deterministic"); the controller sees only the noise bound
    either way.  Collision flags compare the current true outputs strictly
    against the combined radius.
    """
    if noise_mode not in NOISE_MODES:
        raise ValueError(f"noise_mode must be one of {NOISE_MODES}, got {noise_mode!r}")
    rng = np.random.default_rng(seed)
    system, obstacle, geo = cfg.system, cfg.obstacle, cfg.geometry
    x = cfg.x0.copy()
    y_r = obstacle.y_r0.astype(float).copy()
    records: list[StepRecord] = []

    for k in range(cfg.duration_steps):
        try:
            decision = mpc.solve_step(system, cfg.mpc, x, obstacle, y_r, k, geo.r_comb)
        except mpc.InfeasibleStepError as exc:
            raise mpc.InfeasibleStepError(f"step {k}: {exc}") from exc
        except solver.SolverError as exc:
            raise solver.SolverError(f"step {k}: {exc}", exc.status) from exc

        collided = bool(np.linalg.norm(system.output(x) - y_r) < geo.r_comb)
        step_geo = CollisionGeometry(geo.r_cv, geo.r_r, obstacle.density_at(k))
        p_analytic = collision.collision_probability(step_geo, decision.nominal_next_distance)
        records.append(
            StepRecord(
                k=k,
                t=k * cfg.dt,
                x=x.copy(),
                u=decision.u0.copy(),
                y_r=y_r.copy(),
                case_label=decision.case_label,
                predicted_violation_probability=decision.predicted_violation_probability,
                analytic_collision_probability=p_analytic,
                distance=decision.nominal_next_distance,
                w_max_active=obstacle.w_max_at(k),
                collided=collided,
            )
        )

        ybar_next = nominal_next_obstacle(obstacle, y_r, k)
        if noise_mode == "sampled":
            w = obstacle.density_at(k).sample_step(rng, 1)[0]
        else:
            w = np.zeros(obstacle.y_r0.shape[0])
        x = system.step(x, decision.u0)
        y_r = ybar_next + w

    return TrajectoryLog(cfg.name, seed, noise_mode, records)


def first_support_jump(obstacle: ObstacleModel, duration_steps: int) -> int:
    """First step k >= 1 where the noise support radius increases."""
    for k in range(1, duration_steps):
        if obstacle.w_max_at(k) > obstacle.w_max_at(k - 1):
            return k
    raise ValueError("the noise schedule has no support jump")


def monte_carlo_validation(cfg: ScenarioConfig, runs: int, base_seed: int = 0) -> MonteCarloResult:
    """Empirical collision frequency one step after the noise-support jump.

    The closed loop is rolled noise-free once up to the jump step; each run
    then draws a single obstacle step from that shared prefix state and
    checks the strict combined-radius violation at the next step.  Run i
    uses its own generator seeded with base_seed + i.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    k_star = first_support_jump(cfg.obstacle, cfg.duration_steps)
    prefix_cfg = dataclasses.replace(cfg, duration_steps=k_star + 1)
    log = run_scenario(prefix_cfg, seed=0, noise_mode="deterministic")
    last = log.records[-1]

    system, obstacle, geo = cfg.system, cfg.obstacle, cfg.geometry
    x_next = system.step(last.x, last.u)
    y_vehicle = system.output(x_next)
    ybar_next = nominal_next_obstacle(obstacle, last.y_r, k_star)
    density = obstacle.density_at(k_star)

    collisions = 0
    for i in range(runs):
        w = density.sample_step(np.random.default_rng(base_seed + i), 1)[0]
        if float(np.linalg.norm(y_vehicle - (ybar_next + w))) < geo.r_comb:
            collisions += 1

    return MonteCarloResult(
        runs=runs,
        collisions=collisions,
        frequency=collisions / runs,
        analytic_probability=last.analytic_collision_probability,
        jump_step=k_star,
    )


_ROAD_DT = 0.1
_ROAD_Y_LOW = 2.0
_ROAD_Y_HIGH = 8.0
_INPUT_BOUNDS = ((1.0, 9.0), (-3.5, 3.5))
_R_CV = 2.0
_R_R = 0.8
_SIGMA = 1.0
_HORIZON = 10
# Obstacle start in the overtaking scenario, placed so the noise-support
# jump lands mid-pass with the escape step reaching the reference clearance.
_SCENARIO_2_OBSTACLE_X0 = 5.87


def _road_state_set() -> Polytope:
    return Polytope(
        (
            Halfspace(np.array([0.0, 1.0]), _ROAD_Y_HIGH),
            Halfspace(np.array([0.0, -1.0]), -_ROAD_Y_LOW),
        ),
        2,
    )


def _road_mpc_config(system: LinearSystem, reference: PlantReference) -> MpcConfig:
    Q = np.eye(2)
    R = 0.1 * np.eye(2)
    P_f = mpc.riccati_terminal_weight(system, Q, R)
    state_set = _road_state_set()
    return MpcConfig(
        N=_HORIZON,
        Q=Q,
        R=R,
        P_f=P_f,
        input_set=Polytope.from_bounds(_INPUT_BOUNDS),
        state_set=state_set,
        terminal_set=state_set,
        reference=reference,
    )


def builtin_scenario_1() -> ScenarioConfig:
    """Cruise along the upper road bound while a noisy obstacle drifts below.

    The vehicle tracks y = 8 at 5 units/s; the obstacle starts at the same
    longitudinal position at y = 4 with a small noise support, so the safety
    margin never binds and the admissible input set stays whole.
    """
    system = discretize_double_integrator(_ROAD_DT)
    w_max = 0.15
    reference = PlantReference(np.array([0.0, 8.0]), np.array([5.0, 0.0]))
    obstacle = ObstacleModel(
        y_r0=np.array([0.0, 4.0]),
        u_r_schedule=StepSchedule.constant(np.array([0.5, 0.0])),
        w_max_schedule=StepSchedule.constant(w_max),
        density=TruncatedRadialGaussian(_SIGMA, w_max),
    )
    return ScenarioConfig(
        name="scenario-1",
        system=system,
        mpc=_road_mpc_config(system, reference),
        obstacle=obstacle,
        geometry=CollisionGeometry(_R_CV, _R_R, TruncatedRadialGaussian(_SIGMA, w_max)),
        x0=np.array([0.0, 8.0]),
        duration_steps=120,
        dt=_ROAD_DT,
        reference_velocity=5.0,
        y_ref=8.0,
    )


def builtin_scenario_2() -> ScenarioConfig:
    """Overtake a slower obstacle whose noise support jumps mid-pass.

    The vehicle tracks y = 4 at 4 units/s and passes an obstacle crawling
    along y = 3.  At t = 3.0 s the noise support widens from 0.15 to 0.9,
    shrinking the certifiable-safe input set to the single most-distant
    input for a few steps; at t = 5.0 s the support drops back.
    """
    system = discretize_double_integrator(_ROAD_DT)
    reference = PlantReference(np.array([0.0, 4.0]), np.array([4.0, 0.0]))
    obstacle = ObstacleModel(
        y_r0=np.array([_SCENARIO_2_OBSTACLE_X0, 3.0]),
        u_r_schedule=StepSchedule.constant(np.array([0.25, 0.0])),
        w_max_schedule=StepSchedule([(0, 0.15), (30, 0.9), (50, 0.15)]),
        density=TruncatedRadialGaussian(_SIGMA, 0.15),
    )
    return ScenarioConfig(
        name="scenario-2",
        system=system,
        mpc=_road_mpc_config(system, reference),
        obstacle=obstacle,
        geometry=CollisionGeometry(_R_CV, _R_R, TruncatedRadialGaussian(_SIGMA, 0.15)),
        x0=np.array([0.0, 4.0]),
        duration_steps=70,
        dt=_ROAD_DT,
        reference_velocity=4.0,
        y_ref=4.0,
    )


BUILTIN_SCENARIOS = {
    "builtin:1": builtin_scenario_1,
    "builtin:2": builtin_scenario_2,
}
