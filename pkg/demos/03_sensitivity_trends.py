"""Coarse sensitivity sweep of the three hands-free schemes.

Admittance control keeps getting easier to brake with as the rider gains
authority. Impedance control does not: lowering the speed gain helps at
first, but the robot then resists the rider less and coasts further.
"""
from ballbot import sweep

rows = sweep(sensitivities=(0.0, 0.25, 0.5, 0.75, 1.0), restarts=0)
for kind in ("hacs1", "hics1", "hics2"):
    line = "  ".join(f"{r.param_value:.2f}:{r.solution.J_star:.3f}" for r in rows if r.scheme == kind)
    print(f"{kind:6s} {line}")
best = {k: min((r for r in rows if r.scheme == k), key=lambda r: r.solution.J_star) for k in ("hacs1", "hics1", "hics2")}
for k, r in best.items():
    m = r.metrics
    print(f"best {k} at {r.param_value:.2f}: J {m.J:.3f}, ROM {m.torso_ROM:.1f} deg, "
          f"seat {m.max_tau_p:.1f} N m, L {m.L:.2f} m, T {m.T:.2f} s")
