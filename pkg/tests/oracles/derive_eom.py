"""Derive the planar rider-ballbot equations of motion symbolically and freeze sample values.

Independent of the package's closed-form matrices: the Lagrangian is built
from body-point positions, and the generalized forces from actuator power.
Run from the repository root to regenerate ``eom_oracle.json``:

    python tests/oracles/derive_eom.py
"""

import json
from pathlib import Path

import numpy as np
import sympy as sp

from ballbot.model import RiderBallbotParams

t = sp.symbols("t")
zeta, theta, phi = (sp.Function(n)(t) for n in ("zeta", "theta", "phi"))
q = [zeta, theta, phi]
names = ("m_s", "r_s", "I_s", "m_c", "l_c", "I_c", "m_r", "l_r", "I_r", "h_s", "g")
m_s, r_s, I_s, m_c, l_c, I_c, m_r, l_r, I_r, h_s, g = sp.symbols(names, positive=True)
tau_R, tau = sp.symbols("tau_R tau")

x_ball = r_s * phi
chassis = sp.Matrix([x_ball + l_c * sp.sin(theta), r_s + l_c * sp.cos(theta)])
pivot = sp.Matrix([x_ball + h_s * sp.sin(theta), r_s + h_s * sp.cos(theta)])
torso = pivot + sp.Matrix([l_r * sp.sin(zeta), l_r * sp.cos(zeta)])


def speed2(point):
    v = point.diff(t)
    return (v.T * v)[0]


T = (
    sp.Rational(1, 2) * m_s * x_ball.diff(t) ** 2 + sp.Rational(1, 2) * I_s * phi.diff(t) ** 2
    + sp.Rational(1, 2) * m_c * speed2(chassis) + sp.Rational(1, 2) * I_c * theta.diff(t) ** 2
    + sp.Rational(1, 2) * m_r * speed2(torso) + sp.Rational(1, 2) * I_r * zeta.diff(t) ** 2
)
V = g * (m_c * chassis[1] + m_r * torso[1])
L = T - V
# actuator power: tau_R between torso and chassis, tau between chassis and ball
power = tau_R * (zeta.diff(t) - theta.diff(t)) + tau * (phi.diff(t) - theta.diff(t))
Q = [sp.diff(power, qi.diff(t)) for qi in q]

eqs = [sp.diff(L.diff(qi.diff(t)), t) - L.diff(qi) - Qi for qi, Qi in zip(q, Q)]
qdd = [qi.diff(t, 2) for qi in q]
M = sp.Matrix(3, 3, lambda i, j: sp.diff(eqs[i], qdd[j]))
rest = sp.Matrix([eqs[i].subs({a: 0 for a in qdd}) for i in range(3)])

# plain symbols for lambdify
zs, ts, ps, zd, td, pd = sp.symbols("zs ts ps zd td pd")
sub = {zeta.diff(t): zd, theta.diff(t): td, phi.diff(t): pd}
sub2 = {zeta: zs, theta: ts, phi: ps}
M_s = sp.simplify(M.subs(sub).subs(sub2))
rest_s = sp.simplify(rest.subs(sub).subs(sub2))
args = (zs, ts, ps, zd, td, pd, tau_R, tau, *sp.symbols(names, positive=True))
f_M = sp.lambdify(args, M_s, "numpy")
f_rest = sp.lambdify(args, rest_s, "numpy")

p = RiderBallbotParams.default_rider()
pv = [getattr(p, n) for n in names]
rng = np.random.default_rng(20240601)
cases = []
# first case: the fixed configuration (0.1, -0.2, 0.5) at rest, unforced
samples = [(np.array([0.1, -0.2, 0.5, 0.0, 0.0, 0.0]), np.zeros(2))]
for _ in range(25):
    s = np.concatenate([rng.uniform(-1.2, 1.2, 2), rng.uniform(-5, 5, 1), rng.uniform(-3, 3, 2), rng.uniform(-15, 15, 1)])
    samples.append((s, rng.uniform(-50, 50, 2)))
for s, u in samples:
    Mn = np.array(f_M(*s, *u, *pv), dtype=float)
    rn = np.array(f_rest(*s, *u, *pv), dtype=float).ravel()
    cases.append({
        "state": s.tolist(),
        "input": u.tolist(),
        "mass_matrix": Mn.tolist(),
        "qdd": np.linalg.solve(Mn, -rn).tolist(),
    })

out = Path(__file__).with_name("eom_oracle.json")
out.write_text(json.dumps({"params": p.as_dict(), "cases": cases}, indent=1))
print(f"wrote {len(cases)} cases to {out}")
