"""Cruise at 1.4 m/s, then the rider braces and stops leaning.

Each scheme starts in its steady cruise equilibrium with the rider holding
the lean that sustains it. At 0.5 s the rider locks the torso to the
chassis; the balancing controller alone then brings the robot to rest.
"""
from ballbot import BrakingWeights, ControlScheme, RiderBallbotParams, balance_gains, compute_metrics
from ballbot import find_equilibrium, simulate
from ballbot.sim import StiffTorso

p = RiderBallbotParams.default_rider()
g = balance_gains(p)
brace = StiffTorso()

for sch in (ControlScheme.baseline(), ControlScheme.hics1(0.5), ControlScheme.hacs1(0.5)):
    s_eq, hold, _ = find_equilibrium(sch, g, p, v_target=1.4)
    run = simulate(s_eq, lambda t, s: hold if t < 0.5 else brace(t, s), sch, g, p, t_end=8.0)
    m = compute_metrics(run, BrakingWeights(), p, t_onset=0.5)
    print(f"{sch.kind:8s} lean {s_eq[0]:+.3f} rad, tilt {s_eq[1]:+.4f} rad, hold {hold:+6.2f} N m | "
          f"J {m.J:.3f}, ROM {m.torso_ROM:4.1f} deg, L {m.L:.2f} m, T {m.T:.2f} s")
