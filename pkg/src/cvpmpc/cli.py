"""Command-line front end: rollouts, validation runs, probability queries.

Exit codes: 0 success, 2 configuration or argument error, 3 solver failure.
Every generated text file starts with `# key=value` manifest lines; outputs
contain no timestamps, so identical invocations produce identical bytes.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, collision, mpc, sim, solver
from .collision import CollisionGeometry
from .geometry import Halfspace, Polytope
from .model import (
    LinearSystem,
    ObstacleModel,
    StepSchedule,
    TruncatedRadialGaussian,
)
from .mpc import MpcConfig, PlantReference
from .sim import ScenarioConfig, TrajectoryLog

CSV_COLUMNS = (
    "k,t,x1,x2,u1,u2,yr1,yr2,case,p_cv_pred,p_col_analytic,d,w_max,collided"
)


class ConfigError(Exception):
    """Unusable scenario file, schema violation, or bad parameter."""


def _fmt(value: float) -> str:
    return format(float(value), ".9g")


# ---------------------------------------------------------------- config I/O


def _polytope_to_dict(P: Polytope) -> dict:
    return {
        "normals": [hs.normal.tolist() for hs in P.halfspaces],
        "offsets": [hs.offset for hs in P.halfspaces],
    }


def _polytope_from_dict(data: dict, where: str) -> Polytope:
    try:
        normals = data["normals"]
        offsets = data["offsets"]
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{where}: expected keys 'normals' and 'offsets'") from exc
    if len(normals) != len(offsets) or not normals:
        raise ConfigError(f"{where}: normals and offsets must be equal-length and nonempty")
    try:
        hs = tuple(Halfspace(np.asarray(n, dtype=float), float(b)) for n, b in zip(normals, offsets))
        return Polytope(hs, len(normals[0]))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _schedule_to_list(schedule: StepSchedule) -> list:
    out = []
    for step, value in schedule.entries:
        arr = np.asarray(value)
        out.append({"from_step": step, "value": arr.tolist() if arr.ndim else float(arr)})
    return out


def _schedule_from_list(data: list, where: str) -> StepSchedule:
    try:
        entries = []
        for item in data:
            value = item["value"]
            if isinstance(value, (list, tuple)):
                value = np.asarray(value, dtype=float)
            else:
                value = float(value)
            entries.append((int(item["from_step"]), value))
        return StepSchedule(entries)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    return {
        "system": {
            "A": cfg.system.A.tolist(),
            "B": cfg.system.B.tolist(),
            "C": cfg.system.C.tolist(),
        },
        "mpc": {
            "N": cfg.mpc.N,
            "Q": cfg.mpc.Q.tolist(),
            "R": cfg.mpc.R.tolist(),
            "P_f": cfg.mpc.P_f.tolist(),
            "input_set": _polytope_to_dict(cfg.mpc.input_set),
            "state_set": _polytope_to_dict(cfg.mpc.state_set),
            "terminal_set": _polytope_to_dict(cfg.mpc.terminal_set),
            "reference": {
                "x0": cfg.mpc.reference.x_ref0.tolist(),
                "u": cfg.mpc.reference.u_ref.tolist(),
            },
        },
        "obstacle": {
            "y_r0": cfg.obstacle.y_r0.tolist(),
            "u_r_schedule": _schedule_to_list(cfg.obstacle.u_r_schedule),
            "w_max_schedule": _schedule_to_list(cfg.obstacle.w_max_schedule),
            "sigma": cfg.obstacle.density.sigma,
        },
        "geometry": {"r_cv": cfg.geometry.r_cv, "r_r": cfg.geometry.r_r},
        "simulation": {
            "name": cfg.name,
            "x0": cfg.x0.tolist(),
            "duration_steps": cfg.duration_steps,
            "dt": cfg.dt,
            "reference_velocity": cfg.reference_velocity,
            "y_ref": cfg.y_ref,
        },
    }


def scenario_from_dict(data: dict) -> ScenarioConfig:
    try:
        system_d = data["system"]
        mpc_d = data["mpc"]
        obstacle_d = data["obstacle"]
        geometry_d = data["geometry"]
        sim_d = data["simulation"]
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"missing top-level config key: {exc}") from exc

    try:
        system = LinearSystem(
            A=np.asarray(system_d["A"], dtype=float),
            B=np.asarray(system_d["B"], dtype=float),
            C=np.asarray(system_d["C"], dtype=float),
        )
        reference = PlantReference(
            np.asarray(mpc_d["reference"]["x0"], dtype=float),
            np.asarray(mpc_d["reference"]["u"], dtype=float),
        )
        mpc_cfg = MpcConfig(
            N=int(mpc_d["N"]),
            Q=np.asarray(mpc_d["Q"], dtype=float),
            R=np.asarray(mpc_d["R"], dtype=float),
            P_f=np.asarray(mpc_d["P_f"], dtype=float),
            input_set=_polytope_from_dict(mpc_d["input_set"], "mpc.input_set"),
            state_set=_polytope_from_dict(mpc_d["state_set"], "mpc.state_set"),
            terminal_set=_polytope_from_dict(mpc_d["terminal_set"], "mpc.terminal_set"),
            reference=reference,
        )
        sigma = float(obstacle_d["sigma"])
        w_max_schedule = _schedule_from_list(obstacle_d["w_max_schedule"], "obstacle.w_max_schedule")
        obstacle = ObstacleModel(
            y_r0=np.asarray(obstacle_d["y_r0"], dtype=float),
            u_r_schedule=_schedule_from_list(obstacle_d["u_r_schedule"], "obstacle.u_r_schedule"),
            w_max_schedule=w_max_schedule,
            density=TruncatedRadialGaussian(sigma, float(w_max_schedule.value_at(0))),
        )
        geometry_cfg = CollisionGeometry(
            r_cv=float(geometry_d["r_cv"]),
            r_r=float(geometry_d["r_r"]),
            density=TruncatedRadialGaussian(sigma, float(w_max_schedule.value_at(0))),
        )
        return ScenarioConfig(
            name=str(sim_d["name"]),
            system=system,
            mpc=mpc_cfg,
            obstacle=obstacle,
            geometry=geometry_cfg,
            x0=np.asarray(sim_d["x0"], dtype=float),
            duration_steps=int(sim_d["duration_steps"]),
            dt=float(sim_d["dt"]),
            reference_velocity=float(sim_d["reference_velocity"]),
            y_ref=float(sim_d["y_ref"]),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid scenario config: {exc}") from exc


def resolve_scenario(spec: str) -> ScenarioConfig:
    if spec in sim.BUILTIN_SCENARIOS:
        return sim.BUILTIN_SCENARIOS[spec]()
    path = Path(spec)
    if not path.is_file():
        raise ConfigError(f"scenario config not found: {spec}")
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"unreadable scenario config {spec}: {exc}") from exc
    return scenario_from_dict(data)


# ------------------------------------------------------------------- outputs


def _manifest_lines(manifest: dict) -> list[str]:
    return [f"# {key}={value}" for key, value in manifest.items()]


def write_trajectory_csv(path: Path, log: TrajectoryLog, manifest: dict) -> None:
    lines = _manifest_lines(manifest)
    lines.append(CSV_COLUMNS)
    for r in log.records:
        lines.append(
            ",".join(
                (
                    str(r.k),
                    _fmt(r.t),
                    _fmt(r.x[0]),
                    _fmt(r.x[1]),
                    _fmt(r.u[0]),
                    _fmt(r.u[1]),
                    _fmt(r.y_r[0]),
                    _fmt(r.y_r[1]),
                    r.case_label,
                    _fmt(r.predicted_violation_probability),
                    _fmt(r.analytic_collision_probability),
                    _fmt(r.distance),
                    _fmt(r.w_max_active),
                    "true" if r.collided else "false",
                )
            )
        )
    path.write_text("\n".join(lines) + "\n")


def _render_run_figures(cfg: ScenarioConfig, log: TrajectoryLog, out_csv: Path) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    xs = np.array([r.x for r in log.records])
    us = np.array([r.u for r in log.records])
    yr = np.array([r.y_r for r in log.records])
    ts = np.array([r.t for r in log.records])
    seps = np.linalg.norm(xs - yr, axis=1)
    d_nom = np.array([r.distance for r in log.records])
    p_col = np.array([r.analytic_collision_probability for r in log.records])
    p_pred = np.array([r.predicted_violation_probability for r in log.records])
    w_active = np.array([r.w_max_active for r in log.records])
    r_comb = cfg.geometry.r_comb

    paths: list[Path] = []

    fig, ax = plt.subplots(figsize=(12.0, 3.4))
    ax.plot(xs[:, 0], xs[:, 1], color="tab:blue", label="vehicle")
    ax.plot(yr[:, 0], yr[:, 1], color="tab:red", label="obstacle")
    ax.scatter([xs[0, 0], yr[0, 0]], [xs[0, 1], yr[0, 1]], marker="o", color="black", zorder=3, s=18)
    closest = int(np.argmin(seps))
    ax.add_patch(
        plt.Circle(
            (yr[closest, 0], yr[closest, 1]),
            r_comb,
            fill=False,
            linestyle=":",
            color="tab:red",
            label="combined radius at closest pass",
        )
    )
    for bound in (2.0, 8.0):
        ax.axhline(bound, color="gray", linewidth=0.8)
    ax.axhline(cfg.y_ref, color="tab:green", linestyle="--", linewidth=0.8, label="reference lane")
    ax.set_xlabel("x position")
    ax.set_ylabel("y position")
    ax.set_title(f"{cfg.name}: plane view (seed {log.seed}, {log.noise_mode} noise)")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    traj_path = out_csv.with_name(out_csv.stem + "_trajectory.png")
    fig.savefig(traj_path, dpi=130)
    plt.close(fig)
    paths.append(traj_path)

    fig, axes = plt.subplots(3, 1, sharex=True, figsize=(9.0, 7.2))
    axes[0].step(ts, us[:, 0], where="post", label="u1 (forward velocity)")
    axes[0].step(ts, us[:, 1], where="post", label="u2 (lateral velocity)")
    axes[0].set_ylabel("input")
    axes[0].legend(loc="best", fontsize=8)

    axes[1].plot(ts, seps, label="true separation")
    axes[1].plot(ts, d_nom, label="nominal next separation", linestyle="--")
    axes[1].plot(ts, r_comb + w_active, label="tightened radius", color="tab:red", linestyle=":")
    axes[1].axhline(r_comb, color="tab:red", linewidth=0.8, label="combined radius")
    axes[1].set_ylabel("distance")
    axes[1].legend(loc="best", fontsize=8)

    axes[2].plot(ts, p_col, label="analytic collision probability")
    axes[2].plot(ts, p_pred, label="predicted violation probability", linestyle="--")
    tight = [t for t, r in zip(ts, log.records) if r.case_label != "1"]
    if tight:
        axes[2].scatter(
            tight,
            np.zeros(len(tight)),
            marker="|",
            color="tab:orange",
            label="steps with a tightened input set",
        )
    axes[2].set_ylabel("probability")
    axes[2].set_xlabel("time [s]")
    axes[2].legend(loc="best", fontsize=8)
    fig.suptitle(f"{cfg.name}: step profiles")
    fig.tight_layout()
    prof_path = out_csv.with_name(out_csv.stem + "_profiles.png")
    fig.savefig(prof_path, dpi=130)
    plt.close(fig)
    paths.append(prof_path)
    return paths


def _render_sweep_figure(ds: np.ndarray, ps: np.ndarray, out_csv: Path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    ax.plot(ds, ps, color="tab:blue")
    ax.set_xlabel("nominal separation d")
    ax.set_ylabel("collision probability")
    ax.set_title("analytic collision probability vs separation")
    fig.tight_layout()
    png = out_csv.with_suffix(".png")
    fig.savefig(png, dpi=130)
    plt.close(fig)
    return png


# ------------------------------------------------------------------ commands


def cmd_run(args) -> int:
    cfg = resolve_scenario(args.scenario)
    if args.dump_config is not None:
        out = Path(args.dump_config)
        out.write_text(json.dumps(scenario_to_dict(cfg), indent=2) + "\n")
        print(f"wrote {out}")
        return 0
    log = sim.run_scenario(cfg, seed=args.seed, noise_mode=args.noise)
    last = log.records[-1]
    if args.out is not None:
        out = Path(args.out)
        manifest = {
            "generator": f"cvpmpc {__version__}",
            "command": "run",
            "scenario": args.scenario,
            "seed": args.seed,
            "noise": args.noise,
            "duration_steps": cfg.duration_steps,
        }
        write_trajectory_csv(out, log, manifest)
        written = [out]
        if not args.no_figures:
            written.extend(_render_run_figures(cfg, log, out))
        for p in written:
            print(f"wrote {p}")
    print(
        f"scenario={cfg.name} steps={len(log.records)} collisions={log.collision_count} "
        f"final_p_col_analytic={_fmt(last.analytic_collision_probability)}"
    )
    return 0


def cmd_montecarlo(args) -> int:
    if args.runs < 1:
        raise ConfigError(f"--runs must be >= 1, got {args.runs}")
    cfg = resolve_scenario(args.scenario)
    try:
        result = sim.monte_carlo_validation(cfg, runs=args.runs, base_seed=args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    line = (
        f"runs={result.runs} collisions={result.collisions} "
        f"frequency={_fmt(result.frequency)} analytic={_fmt(result.analytic_probability)}"
    )
    print(line)
    if args.out is not None:
        summary = {
            "generator": f"cvpmpc {__version__}",
            "command": "montecarlo",
            "scenario": args.scenario,
            "seed": args.seed,
            "runs": result.runs,
            "collisions": result.collisions,
            "frequency": result.frequency,
            "analytic_probability": result.analytic_probability,
            "jump_step": result.jump_step,
        }
        Path(args.out).write_text(json.dumps(summary, indent=2) + "\n")
        print(f"wrote {args.out}")
    return 0


def _parse_sweep(text: str) -> np.ndarray:
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError("--sweep expects d0:d1:n")
    try:
        d0, d1, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise ConfigError(f"--sweep expects numeric d0:d1:n, got {text!r}") from exc
    if n < 2 or d1 <= d0 or d0 < 0:
        raise ConfigError("--sweep needs 0 <= d0 < d1 and n >= 2")
    return np.linspace(d0, d1, n)


def cmd_probability(args) -> int:
    try:
        geo = CollisionGeometry(args.rcv, args.rr, TruncatedRadialGaussian(args.sigma, args.wmax))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if args.sweep is not None:
        ds = _parse_sweep(args.sweep)
        ps = np.array([collision.collision_probability(geo, float(d)) for d in ds])
        lines = _manifest_lines(
            {
                "generator": f"cvpmpc {__version__}",
                "command": "probability",
                "rcv": args.rcv,
                "rr": args.rr,
                "wmax": args.wmax,
                "sigma": args.sigma,
                "sweep": args.sweep,
            }
        )
        lines.append("d,probability")
        lines.extend(f"{_fmt(d)},{_fmt(p)}" for d, p in zip(ds, ps))
        text = "\n".join(lines) + "\n"
        if args.out is not None:
            out = Path(args.out)
            out.write_text(text)
            png = _render_sweep_figure(ds, ps, out)
            print(f"wrote {out}")
            print(f"wrote {png}")
        else:
            sys.stdout.write(text)
        return 0
    if args.d is None:
        raise ConfigError("provide --d or --sweep")
    if args.d < 0:
        raise ConfigError(f"--d must be nonnegative, got {args.d}")
    try:
        p = collision.collision_probability(geo, args.d)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(f"{p:.6f}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cvpmpc",
        description="Collision-aware MPC rollouts, validation, and probability queries.",
    )
    parser.add_argument("--version", action="version", version=f"cvpmpc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="roll a scenario and export the trajectory")
    run.add_argument("--scenario", default="builtin:1", help="builtin:1, builtin:2, or a config path")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--noise", choices=sim.NOISE_MODES, default="sampled")
    run.add_argument("--out", default=None, help="trajectory CSV path; figures go alongside")
    run.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    run.add_argument(
        "--dump-config",
        default=None,
        metavar="PATH",
        help="write the resolved scenario config JSON and exit",
    )
    run.set_defaults(handler=cmd_run)

    mc = sub.add_parser("montecarlo", help="collision-frequency validation at the noise jump")
    mc.add_argument("--runs", type=int, required=True)
    mc.add_argument("--seed", type=int, default=0)
    mc.add_argument("--scenario", default="builtin:2")
    mc.add_argument("--out", default=None, help="optional JSON summary path")
    mc.set_defaults(handler=cmd_montecarlo)

    prob = sub.add_parser("probability", help="analytic collision probability queries")
    prob.add_argument("--d", type=float, default=None)
    prob.add_argument("--rcv", type=float, required=True)
    prob.add_argument("--rr", type=float, required=True)
    prob.add_argument("--wmax", type=float, required=True)
    prob.add_argument("--sigma", type=float, default=1.0)
    prob.add_argument("--sweep", default=None, metavar="D0:D1:N")
    prob.add_argument("--out", default=None, help="sweep CSV path; a PNG goes alongside")
    prob.set_defaults(handler=cmd_probability)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (mpc.InfeasibleStepError, solver.SolverError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
