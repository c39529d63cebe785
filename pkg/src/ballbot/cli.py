"""Command-line front end: ``ballbot simulate|optimize|sweep|metrics|preset``.

Exit codes: 0 success, 1 run failed (fall, blow-up, no convergence), 2 bad
configuration or input file.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import ConfigError, RunConfig, default_config_text
from .control import ControllerState
from .metrics import BrakingWeights, NoStopDetectedError, compute_metrics
from .sim import BlowUpError, EquilibriumError, StiffTorso, TrackingRider, find_equilibrium, simulate
from .trajopt import BrakingProblem, solve_nlp, sweep, transcribe

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _common(sp, sim=False, opt=False):
    sp.add_argument("--config", type=Path, help="INI configuration file")
    sp.add_argument("--out", type=Path, help="output directory (overrides [output] dir)")
    sp.add_argument("--v0", type=float, help="initial speed in m/s")
    if sim or opt:
        sp.add_argument("--scheme", help="baseline|hics1|hics2|hacs1|hacs2|hacs3")
        sp.add_argument("--nu", type=float)
        sp.add_argument("--nu-p", type=float)
        sp.add_argument("--nu-i", type=float)
    if sim:
        sp.add_argument("--dt", type=float, help="integration step in s")
        sp.add_argument("--replay", type=Path,
                        help="rider torque to replay: a trajectory CSV or a two-column t,tau_R CSV")
    if opt:
        sp.add_argument("--segments", type=int, help="collocation segments")
        sp.add_argument("--seed", type=int, help="seed for random solver restarts")
        sp.add_argument("--workers", type=int, help="worker threads (default: logical cores)")


def build_parser():
    ap = argparse.ArgumentParser(prog="ballbot", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("simulate", help="closed-loop simulation from cruise"), sim=True)
    _common(sub.add_parser("optimize", help="minimum-effort braking for one condition"), opt=True)
    _common(sub.add_parser("sweep", help="braking effort over schemes and sensitivities"), opt=True)
    m = sub.add_parser("metrics", help="braking metrics of a trajectory CSV")
    m.add_argument("csv", type=Path)
    m.add_argument("--config", type=Path, help="configuration supplying r_s and default weights")
    m.add_argument("--zeta-rom", type=float, help="rider torso range of motion (rad)")
    m.add_argument("--distance", type=float, help="desired braking distance (m)")
    m.add_argument("--zeta-dot-max", type=float, help="rider torso rate capability (rad/s)")
    m.add_argument("--tau-R-max", type=float, help="rider torque capability (N m)")
    m.add_argument("--onset", type=float, default=0.0, help="brake onset time (s)")
    m.add_argument("--scheme", default="unknown", help="label for the scheme column")
    p = sub.add_parser("preset", help="print a built-in configuration")
    p.add_argument("name", choices=["default-rider"])
    p.add_argument("--out", type=Path, help="write to this file instead of standard output")
    return ap


def _load(args):
    cfg = RunConfig.load(args.config)
    flag_map = {
        "scheme": ("control", "scheme"), "nu": ("control", "nu"), "nu_p": ("control", "nu_p"),
        "nu_i": ("control", "nu_i"), "dt": ("sim", "dt"), "segments": ("opt", "segments"),
        "seed": ("opt", "seed"), "workers": ("opt", "workers"),
    }
    for flag, (sec, key) in flag_map.items():
        val = getattr(args, flag, None)
        if val is not None:
            cfg.override(sec, key, val)
    if getattr(args, "v0", None) is not None:
        cfg.override("sim", "v0", args.v0)
        cfg.override("opt", "v0", args.v0)
    if getattr(args, "out", None) is not None:
        cfg.override("output", "dir", os.fspath(args.out))
    cfg.validate()
    return cfg


def _out_dir(cfg):
    out = Path(cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(cfg.to_text(), encoding="utf-8")
    return out


def _metrics_or_none(traj, weights, p, onset=0.0):
    try:
        return compute_metrics(traj, weights, p, t_onset=onset), "ok"
    except NoStopDetectedError:
        return None, "no_stop"


def _summary(lines, out, name="summary.txt"):
    text = "\n".join(lines) + "\n"
    (out / name).write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def _metric_lines(m, status="ok"):
    if m is None:
        reason = "robot fell" if status == "fell" else "speed never settled"
        return [f"metrics: unavailable ({reason})"]
    return [
        f"J = {io.fmt(m.J)}",
        f"torso_ROM_deg = {io.fmt(m.torso_ROM)}",
        f"max_tau_p = {io.fmt(m.max_tau_p)}",
        f"L_m = {io.fmt(m.L)}",
        f"T_s = {io.fmt(m.T)}",
    ]


def _replay_policy(path):
    """Rider policy from a trajectory CSV (tracking replay) or a plain ``t,tau_R`` table."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    if tuple(header) == io.TRAJECTORY_COLUMNS:
        tr = io.read_trajectory_csv(path)
        return TrackingRider(tr.t, tr.inputs[:, 0], tr.states[:, 0], tr.states[:, 3])
    if header == ["t", "tau_R"]:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return (data[:, 0], data[:, 1])
    raise io.CSVFormatError(f"{path}: expected a trajectory CSV or a 't,tau_R' table")


def cmd_simulate(args):
    cfg = _load(args)
    p, g, sch = cfg.params(), cfg.gains(), cfg.scheme()
    sim_cfg = cfg["sim"]
    s0, hold, integral = find_equilibrium(sch, g, p, sim_cfg["v0"])
    if args.replay is not None:
        policy = _replay_policy(args.replay)
    elif sim_cfg["rider"] == "hold":
        policy = TrackingRider([0.0, 1.0], [hold, hold], [s0[0], s0[0]], [0.0, 0.0])
    elif sim_cfg["rider"] == "stiff":
        policy = StiffTorso()
    else:
        policy = None
    out = _out_dir(cfg)
    traj = simulate(
        s0, policy, sch, g, p, dt=sim_cfg["dt"], t_end=sim_cfg["t_end"],
        theta_limit=sim_cfg["theta_limit"], tau_max=sim_cfg["tau_max"],
        controller_state=ControllerState(tau_p_integral=integral),
    )
    io.write_trajectory_csv(traj, out / "trajectory.csv")
    if traj.fell:
        m, status = None, "fell"
    else:
        m, status = _metrics_or_none(traj, cfg.weights(), p)
    io.write_metrics_csv([io.metrics_row(sch.kind, sch.param_name, sch.sensitivity, m, status)],
                         out / "metrics.csv")
    _summary([
        f"scheme = {sch.kind} ({sch.param_name} = {sch.sensitivity:g})",
        f"duration_s = {io.fmt(traj.t[-1])}",
        f"fell = {str(traj.fell).lower()}",
        f"saturated_steps = {int(np.sum(traj.saturated))}",
        *_metric_lines(m, status),
    ], out)
    if traj.fell:
        print(f"error: chassis tilt exceeded {sim_cfg['theta_limit']} rad at t = {traj.t[-1]:.3f} s",
              file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def _sweep_row(row):
    sol = row.solution
    base = io.metrics_row(row.scheme, row.param_name, row.param_value, row.metrics, row.status)
    if sol is None:
        return base + [0, math.nan, math.nan]
    return base + [sol.iterations, sol.kkt_residual, sol.max_defect]


def _plots_enabled(cfg):
    return bool(cfg["output"]["plots"])


def cmd_optimize(args):
    cfg = _load(args)
    p, g, sch = cfg.params(), cfg.gains(), cfg.scheme()
    o = cfg["opt"]
    prob = BrakingProblem(sch, **cfg.problem_kw())
    sol = solve_nlp(transcribe(prob, p, g), max_iter=o["max_iter"], tol=o["tol"])
    out = _out_dir(cfg)
    io.write_trajectory_csv(sol.trajectory, out / "trajectory.csv")
    m, _ = _metrics_or_none(sol.trajectory, prob.weights, p)
    status = "converged" if sol.converged else "not_converged"
    row = io.metrics_row(sch.kind, sch.param_name, sch.sensitivity, m, status)
    io.write_metrics_csv([row + [sol.iterations, sol.kkt_residual, sol.max_defect]], out / "metrics.csv",
                         sweep=True)
    if _plots_enabled(cfg):
        from .plots import plot_trajectory

        plot_trajectory(sol.trajectory, p.r_s, out / "panels.svg", f"{sch.kind} {sch.sensitivity:g}")
    _summary([
        f"scheme = {sch.kind} ({sch.param_name} = {sch.sensitivity:g})",
        f"status = {status}",
        f"J_star = {io.fmt(sol.J_star)}",
        f"t_F = {io.fmt(sol.t_F)}",
        f"iterations = {sol.iterations}",
        f"max_defect = {sol.max_defect:.3e}",
        f"kkt_residual = {sol.kkt_residual:.3e}",
        *_metric_lines(m),
    ], out)
    return EXIT_OK if sol.converged else EXIT_FAIL


def condition_dir(scheme, value):
    return f"{scheme}_{value:g}"


def cmd_sweep(args):
    cfg = _load(args)
    p, g = cfg.params(), cfg.gains()
    o = cfg["opt"]
    workers = o["workers"] or os.cpu_count() or 1
    rows = sweep(
        o["schemes"], o["sensitivities"], p, g, workers=workers, max_iter=o["max_iter"], tol=o["tol"],
        restarts=o["restarts"], seed=o["seed"], **cfg.problem_kw(),
    )
    out = _out_dir(cfg)
    io.write_metrics_csv([_sweep_row(r) for r in rows], out / "sweep.csv", sweep=True)
    plots = _plots_enabled(cfg)
    if plots:
        from .plots import plot_sweep, plot_trajectory

        plot_sweep(rows, out / "J_vs_sensitivity.svg")
    for r in rows:
        if r.solution is None:
            continue
        d = out / condition_dir(r.scheme, r.param_value)
        io.write_trajectory_csv(r.solution.trajectory, d / "trajectory.csv")
        if plots:
            plot_trajectory(r.solution.trajectory, p.r_s, d / "panels.svg", f"{r.scheme} {r.param_value:g}")
    n_ok = sum(r.status == "converged" for r in rows)
    _summary([f"conditions = {len(rows)}", f"converged = {n_ok}"] + [
        f"{r.scheme} {r.param_name}={r.param_value:g}: {r.status}"
        + (f" J={r.solution.J_star:.6g}" if r.solution is not None else "")
        + (f" ({r.error})" if r.error else "")
        for r in rows
    ], out)
    return EXIT_OK if n_ok >= 1 else EXIT_FAIL


def cmd_metrics(args):
    cfg = RunConfig.load(args.config)
    o = cfg["opt"]
    w = BrakingWeights.for_rider(
        args.zeta_rom if args.zeta_rom is not None else o["effort_zeta_rom"],
        args.distance if args.distance is not None else o["effort_distance"],
        args.zeta_dot_max if args.zeta_dot_max is not None else o["effort_zeta_dot_max"],
        args.tau_R_max if args.tau_R_max is not None else o["effort_tau_R_max"],
        cfg["model"]["r_s"],
    )
    traj = io.read_trajectory_csv(args.csv)
    m, status = _metrics_or_none(traj, w, cfg.params(), args.onset)
    print(f"# weights: zeta_ROM={w.zeta_ROM:g} phi_max={w.phi_max:.6g} "
          f"zeta_dot_max={w.zeta_dot_max:g} tau_R_max={w.tau_R_max:g}")
    print(",".join(io.METRICS_COLUMNS))
    print(",".join(io.fmt(v) for v in io.metrics_row(args.scheme, "none", math.nan, m, status)))
    return EXIT_OK if m is not None else EXIT_FAIL


def cmd_preset(args):
    text = default_config_text()
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate, "optimize": cmd_optimize, "sweep": cmd_sweep,
    "metrics": cmd_metrics, "preset": cmd_preset,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, io.CSVFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EquilibriumError, BlowUpError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
