"""SVG figures: braking effort against sensitivity and per-condition trajectory panels.

Built on ``matplotlib.figure.Figure`` directly (no pyplot state), so figures
can be drawn from worker threads. A fixed hash salt and no date metadata
keep the SVG bytes reproducible.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
import numpy as np
from matplotlib.figure import Figure

_SVG_META = {"Date": None, "Creator": None}
_LABELS = {"hics1": "HICS-1", "hics2": "HICS-2", "hacs1": "HACS-1", "baseline": "Baseline"}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with matplotlib.rc_context({"svg.hashsalt": "ballbot", "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata=_SVG_META)
    return path


def plot_sweep(rows, path):
    """Braking effort J against the sweep parameter, one series per scheme.

    ``rows`` are :class:`~ballbot.trajopt.SweepRow`. Conditions that did not
    converge are drawn as hollow markers; failures are left out.
    """
    fig = Figure(figsize=(6.0, 4.0))
    ax = fig.add_subplot()
    schemes = list(dict.fromkeys(r.scheme for r in rows))
    for kind in schemes:
        sel = [r for r in rows if r.scheme == kind and r.solution is not None]
        x = np.array([r.param_value for r in sel])
        J = np.array([r.solution.J_star for r in sel])
        ok = np.array([r.status == "converged" for r in sel], dtype=bool)
        (line,) = ax.plot(x, J, "-", label=_LABELS.get(kind, kind), gid=f"series-{kind}")
        ax.plot(x[ok], J[ok], "o", color=line.get_color())
        if np.any(~ok):
            ax.plot(x[~ok], J[~ok], "o", mfc="none", color=line.get_color())
    ax.set_xlabel("sensitivity parameter")
    ax.set_ylabel("braking effort J")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def plot_trajectory(traj, r_s, path, title=""):
    """Three stacked panels: angles, torques, and displacement / speeds."""
    fig = Figure(figsize=(6.0, 7.5))
    ax1, ax2, ax3 = fig.subplots(3, 1, sharex=True)
    t = traj.t
    ax1.plot(t, np.degrees(traj.states[:, 1]), label="chassis tilt")
    ax1.plot(t, np.degrees(traj.states[:, 0]), label="torso lean")
    ax1.set_ylabel("angle (deg)")
    ax2.plot(t, traj.inputs[:, 0], label="rider torque")
    ax2.plot(t, traj.inputs[:, 1], label="drive torque")
    ax2.plot(t, traj.tau_p, "--", label="seat moment")
    ax2.set_ylabel("torque (N m)")
    ax3.plot(t, r_s * (traj.states[:, 2] - traj.states[0, 2]), label="displacement (m)")
    ax3.plot(t, r_s * traj.states[:, 5], label="speed (m/s)")
    ax3.plot(t, r_s * traj.phi_dot_c, "--", label="command speed (m/s)")
    ax3.set_xlabel("time (s)")
    for ax in (ax1, ax2, ax3):
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize="small")
    if title:
        ax1.set_title(title)
    fig.tight_layout()
    return _save(fig, path)
