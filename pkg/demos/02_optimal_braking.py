"""Minimum-effort braking for one condition, then its closed-loop replay.

The optimizer plays the rider: it picks the hip torque profile that stops
the robot with the least weighted effort. Replaying that profile through
the time-stepping simulator checks the transcription.
"""
import sys
from pathlib import Path

from ballbot import BrakingProblem, ControlScheme, RiderBallbotParams, balance_gains, compute_metrics
from ballbot import simulate, solve_nlp, transcribe
from ballbot.sim import TrackingRider

p = RiderBallbotParams.default_rider()
g = balance_gains(p)
prob = BrakingProblem(ControlScheme.hacs1(1.0))
nlp = transcribe(prob, p, g)
sol = solve_nlp(nlp)
print(f"{sol.message}: J* = {sol.J_star:.4f}, t_F = {sol.t_F:.2f} s, {sol.iterations} iterations, "
      f"max defect {sol.max_defect:.1e}")

tr = sol.trajectory
rider = TrackingRider(tr.t, tr.inputs[:, 0], tr.states[:, 0], tr.states[:, 3])
run = simulate(nlp.s_eq, rider, prob.scheme, g, p, t_end=tr.t[-1] + 3.0)
m = compute_metrics(run, prob.weights, p)
print(f"replay: J = {m.J:.4f} ({100 * (m.J / sol.J_star - 1):+.2f} %), final speed "
      f"{abs(run.speed[-1]) * p.r_s:.1e} m/s")

if len(sys.argv) > 1:
    from ballbot.plots import plot_trajectory
    print("wrote", plot_trajectory(tr, p.r_s, Path(sys.argv[1]) / "hacs1_optimal.svg", "HACS-1, nu_P = 1"))
