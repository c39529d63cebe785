"""Closed-loop simulation of the rider-ballbot system."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .control import ControllerState, drivetrain_torque
from .model import eom_forward, phri_wrench, scalar_dynamics


class BlowUpError(RuntimeError):
    pass


class EquilibriumError(ValueError):
    pass


@dataclass
class Trajectory:
    """Time-gridded record of a run.

    ``states`` is ``(n, 6)``, ``inputs`` is ``(n, 2)`` holding ``(tau_R, tau)``.
    """

    t: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    tau_p: np.ndarray
    phi_dot_c: np.ndarray
    saturated: np.ndarray = None
    fell: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.states = np.asarray(self.states, dtype=float).reshape(-1, 6)
        self.inputs = np.asarray(self.inputs, dtype=float).reshape(-1, 2)
        self.tau_p = np.asarray(self.tau_p, dtype=float)
        self.phi_dot_c = np.asarray(self.phi_dot_c, dtype=float)
        if self.saturated is None:
            self.saturated = np.zeros(len(self.t), dtype=bool)
        self.saturated = np.asarray(self.saturated, dtype=bool)
        n = len(self.t)
        if n < 2:
            raise ValueError("a trajectory needs at least two knots")
        for name in ("states", "inputs", "tau_p", "phi_dot_c", "saturated"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} has {len(getattr(self, name))} rows, expected {n}")
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("time grid must be strictly increasing")

    def __len__(self):
        return len(self.t)

    def slice(self, start, stop):
        return Trajectory(
            self.t[start:stop],
            self.states[start:stop],
            self.inputs[start:stop],
            self.tau_p[start:stop],
            self.phi_dot_c[start:stop],
            self.saturated[start:stop],
            fell=self.fell,
            meta=dict(self.meta),
        )

    @property
    def speed(self):
        """Ground speed in rad/s of ball rotation."""
        return self.states[:, 5]


def step_rk4(s, u, dt, p, rhs=None):
    """One classical Runge-Kutta step with the input held over the step.

    ``rhs`` is an optional :func:`scalar_dynamics` closure for ``p``; passing
    it saves rebuilding the closure every step.
    """
    if not 0.0 < dt <= 0.01:
        raise ValueError(f"dt must lie in (0, 0.01], got {dt}")
    f = rhs or scalar_dynamics(p)
    tau_R, tau = float(u[0]), float(u[1])
    s = tuple(float(v) for v in s)
    k1 = f(s, tau_R, tau)
    k2 = f(tuple(x + 0.5 * dt * k for x, k in zip(s, k1)), tau_R, tau)
    k3 = f(tuple(x + 0.5 * dt * k for x, k in zip(s, k2)), tau_R, tau)
    k4 = f(tuple(x + dt * k for x, k in zip(s, k3)), tau_R, tau)
    out = np.array([x + dt / 6.0 * (a + 2.0 * b + 2.0 * c + d)
                    for x, a, b, c, d in zip(s, k1, k2, k3, k4)])
    if not np.all(np.isfinite(out)):
        raise BlowUpError(f"non-finite state after RK4 step from {s} with input {u}")
    return out


def _as_policy(rider_policy):
    if rider_policy is None:
        return lambda t, s: 0.0
    if callable(rider_policy):
        return rider_policy
    t_tab, tau_tab = (np.asarray(a, dtype=float) for a in rider_policy)
    return lambda t, s: float(np.interp(t, t_tab, tau_tab))


class StiffTorso:
    """Rider policy that holds the torso aligned with the chassis."""

    def __init__(self, kp=2000.0, kd=200.0):
        self.kp, self.kd = kp, kd

    def __call__(self, t, s):
        return -self.kp * (s[0] - s[1]) - self.kd * (s[3] - s[4])


class TrackingRider:
    """Feedforward torso torque plus PD tracking of a reference lean.

    Replays a tabulated ``tau_R(t)`` while correcting drift of the torso
    (an inverted pendulum on the seat) from the reference ``zeta(t)``. Past
    the end of the table the last sample is held.
    """

    def __init__(self, t, tau_R, zeta, zeta_dot, kp=400.0, kd=60.0):
        self.t = np.asarray(t, dtype=float)
        self.tau_R = np.asarray(tau_R, dtype=float)
        self.zeta = np.asarray(zeta, dtype=float)
        self.zeta_dot = np.asarray(zeta_dot, dtype=float)
        self.kp, self.kd = kp, kd

    def __call__(self, t, s):
        ff = np.interp(t, self.t, self.tau_R)
        z_ref = np.interp(t, self.t, self.zeta)
        zd_ref = np.interp(t, self.t, self.zeta_dot) if t <= self.t[-1] else 0.0
        return float(ff - self.kp * (s[0] - z_ref) - self.kd * (s[3] - zd_ref))


def simulate(s0, rider_policy, sch, g, p, dt=1e-3, t_end=5.0, theta_limit=0.35,
             tau_max=None, controller_state=None):
    """Integrate the closed loop from ``s0`` for ``t_end`` seconds.

    ``rider_policy`` is ``None`` (relaxed torso), a callable ``(t, state) ->
    tau_R`` or a ``(t_grid, tau_R_grid)`` table. The drivetrain torque comes
    from the scheme's control law each step, fed by the seat pitch moment of
    the current step. A fall (``|theta| > theta_limit``) truncates the run and
    sets ``fell``.
    """
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    policy = _as_policy(rider_policy)
    n_steps = int(round(t_end / dt))
    s = np.asarray(s0, dtype=float).copy()
    cs = controller_state or ControllerState()
    qdd_prev = np.zeros(3)
    rhs = scalar_dynamics(p)

    t_log, s_log, u_log, taup_log, cmd_log, sat_log = [], [], [], [], [], []
    fell = False
    for k in range(n_steps + 1):
        t = k * dt
        tau_R = float(policy(t, s))
        tau_p = phri_wrench(s, qdd_prev, tau_R, p).tau_py
        tau_r, cs, phi_dot_c = drivetrain_torque(s, tau_p, cs, dt, g, sch)
        saturated = tau_max is not None and abs(tau_r) > tau_max
        tau = float(np.clip(tau_r, -tau_max, tau_max)) if saturated else float(tau_r)

        t_log.append(t)
        s_log.append(s)
        u_log.append((tau_R, tau))
        taup_log.append(tau_p)
        cmd_log.append(phi_dot_c)
        sat_log.append(saturated)
        if abs(s[1]) > theta_limit:
            fell = True
            break
        if k == n_steps:
            break
        u = (tau_R, tau)
        qdd_prev = np.array(rhs(s, tau_R, tau)[3:])
        s = step_rk4(s, u, dt, p, rhs)

    if len(t_log) < 2:
        raise ValueError("initial state is already beyond the fall limit")
    traj = Trajectory(
        np.array(t_log), np.array(s_log), np.array(u_log), np.array(taup_log),
        np.array(cmd_log), np.array(sat_log), fell=fell,
    )
    traj.meta.update(scheme=sch.kind, dt=dt, controller_state=cs)
    return traj


def _drive_torque(s, tau_R, integral, g, sch):
    cs = ControllerState(tau_p_integral=integral)
    tau, _, _ = drivetrain_torque(s, -tau_R, cs, 1.0, g, sch)
    return tau


def find_equilibrium(sch, g, p, v_target, tau_R_max=None, tol=1e-10):
    """Steady cruise at ``v_target`` m/s under scheme ``sch``.

    Solves for torso lean, chassis tilt and the rider's hold torque (plus the
    integrator value for HACS-2/3) so that all accelerations vanish. Returns
    ``(state, tau_R_hold, integral)``.
    """
    if v_target < 0:
        raise ValueError("v_target must be >= 0")
    phi_dot = v_target / p.r_s
    if v_target == 0.0:
        return np.zeros(6), 0.0, 0.0

    def state_of(x):
        return np.array([x[0], x[1], 0.0, 0.0, 0.0, phi_dot])

    if sch.has_integral:
        if sch.nu_i == 0.0:
            raise EquilibriumError(f"{sch.kind} with nu_i = 0 has no cruise equilibrium")

        def residual(x):
            s = state_of(x)
            tau = _drive_torque(s, x[2], x[3], g, sch)
            # the integrator only rests when the seat moment is zero
            return np.append(eom_forward(s, (x[2], tau), p), x[2])

        x0 = np.array([0.0, 0.0, 0.0, phi_dot / sch.nu_i])
    else:

        def residual(x):
            s = state_of(x)
            tau = _drive_torque(s, x[2], 0.0, g, sch)
            return eom_forward(s, (x[2], tau), p)

        x0 = np.zeros(3)

    sol = optimize.root(residual, x0, method="hybr", options={"xtol": 1e-14})
    x = sol.x
    # a few Newton polish steps on a finite-difference Jacobian
    for _ in range(5):
        r = residual(x)
        if np.max(np.abs(r)) < 0.01 * tol:
            break
        h = 1e-7
        J = np.column_stack([(residual(x + h * e) - residual(x - h * e)) / (2 * h) for e in np.eye(len(x))])
        x = x - np.linalg.solve(J, r)

    s = state_of(x)
    integral = x[3] if sch.has_integral else 0.0
    tau_R = float(x[2])
    acc = eom_forward(s, (tau_R, _drive_torque(s, tau_R, integral, g, sch)), p)
    if not np.all(np.isfinite(acc)) or np.max(np.abs(acc)) >= tol or abs(s[1]) >= np.pi / 2:
        raise EquilibriumError(f"no cruise equilibrium at {v_target} m/s for {sch.kind} (residual {acc})")
    if tau_R_max is not None and abs(tau_R) > tau_R_max:
        raise EquilibriumError(
            f"cruise at {v_target} m/s needs hold torque {tau_R:.3f} N*m beyond {tau_R_max}"
        )
    return s, tau_R, float(integral)
