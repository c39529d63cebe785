"""Balancing gains and the hands-free control laws.

Every translation scheme produces the drivetrain torque

    tau_r = k1 (0 - theta) + k2 (0 - theta_dot) + k3_hat (phi_dot_c - phi_dot)

and differs only in the speed gain ``k3_hat`` (impedance schemes) or in the
command speed ``phi_dot_c`` derived from the seat pitch moment ``tau_p``
(admittance schemes). The torque is applied to the ball with an equal and
opposite reaction on the chassis.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg

from .model import rigid_rider_linearization

SCHEMES = ("baseline", "hics1", "hics2", "hacs1", "hacs2", "hacs3")
PHI_DOT_MAX = 17.6  # rad/s, 2 m/s on the ball

# LQR weights on (theta, theta_dot, phi_dot) and on the drivetrain torque
DEFAULT_Q_BALANCE = (400.0, 10.0, 4.0)
DEFAULT_R_BALANCE = 1.0
DEFAULT_Q_YAW = (100.0, 1.0)
DEFAULT_R_YAW = 1.0


class LQRError(ValueError):
    pass


@dataclass(frozen=True)
class Gains:
    k1: float
    k2: float
    k3: float
    k1z: float = 0.0
    k2z: float = 0.0


@dataclass(frozen=True)
class ControlScheme:
    """One of the translation control schemes plus the yaw sensitivity.

    Use the named constructors (``ControlScheme.hics1(0.4)`` ...) or
    :meth:`from_name`. Sensitivities live in [0, 1].
    """

    kind: str = "baseline"
    nu: float = 1.0
    nu_p: float = 0.0
    nu_i: float = 0.0
    phi_dot_max: float = PHI_DOT_MAX
    nu_z: float = 1.0
    integral_clamp: float | None = None

    def __post_init__(self):
        if self.kind not in SCHEMES:
            raise ValueError(f"unknown control scheme {self.kind!r}; expected one of {SCHEMES}")
        for name in ("nu", "nu_p", "nu_i", "nu_z"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"sensitivity {name} must lie in [0, 1], got {v}")
        if self.phi_dot_max <= 0:
            raise ValueError("phi_dot_max must be positive")

    @classmethod
    def baseline(cls, **kw):
        return cls("baseline", **kw)

    @classmethod
    def hics1(cls, nu, **kw):
        return cls("hics1", nu=nu, **kw)

    @classmethod
    def hics2(cls, nu, phi_dot_max=PHI_DOT_MAX, **kw):
        return cls("hics2", nu=nu, phi_dot_max=phi_dot_max, **kw)

    @classmethod
    def hacs1(cls, nu_p, **kw):
        return cls("hacs1", nu_p=nu_p, **kw)

    @classmethod
    def hacs2(cls, nu_i, **kw):
        return cls("hacs2", nu_i=nu_i, **kw)

    @classmethod
    def hacs3(cls, nu_p, nu_i, **kw):
        return cls("hacs3", nu_p=nu_p, nu_i=nu_i, **kw)

    @classmethod
    def from_name(cls, name, sensitivity=None, **kw):
        """Build a scheme from its name and the value of its sweep parameter."""
        sch = cls(name.lower().replace("-", ""), **kw)
        return sch if sensitivity is None else sch.with_sensitivity(sensitivity)

    @property
    def param_name(self):
        return {"hics1": "nu", "hics2": "nu", "hacs1": "nu_p", "hacs2": "nu_i", "hacs3": "nu_p"}.get(
            self.kind, "none"
        )

    @property
    def sensitivity(self):
        return {"hics1": self.nu, "hics2": self.nu, "hacs1": self.nu_p, "hacs2": self.nu_i, "hacs3": self.nu_p}.get(
            self.kind, 0.0
        )

    @property
    def has_integral(self):
        return self.kind in ("hacs2", "hacs3")

    def with_sensitivity(self, value):
        return replace(self, **{self.param_name: value}) if self.param_name != "none" else self


@dataclass(frozen=True)
class ControllerState:
    """Integral of the seat moment for HACS-2/3 and the last sample it used."""

    tau_p_integral: float = 0.0
    tau_p_prev: float | None = None


def _is_stabilizable(A, B, tol=1e-9):
    n = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if lam.real >= -tol:
            pbh = np.hstack([A - lam * np.eye(n), B.astype(complex)])
            if np.linalg.matrix_rank(pbh, tol=1e-9 * max(1.0, np.abs(pbh).max())) < n:
                return False
    return True


def care_residual(A, B, Q, R, P):
    return A.T @ P + P @ A - P @ B @ np.linalg.solve(R, B.T @ P) + Q


def lqr_gains(A, B, Q, R, tol=1e-8, max_iter=50):
    """Infinite-horizon LQR gain ``K`` (``u = -K x``) and Riccati solution ``P``.

    The Hamiltonian (Schur) solution seeds Newton-Kleinman iterations, which
    polish ``P`` until the Riccati residual's Frobenius norm drops below ``tol``.
    """
    A, B = np.atleast_2d(np.asarray(A, float)), np.atleast_2d(np.asarray(B, float))
    Q, R = np.atleast_2d(np.asarray(Q, float)), np.atleast_2d(np.asarray(R, float))
    if B.shape[0] != A.shape[0]:
        B = B.T
    if not _is_stabilizable(A, B):
        raise LQRError("(A, B) is not stabilizable")
    if np.min(np.linalg.eigvalsh(R)) <= 0:
        raise LQRError("R must be positive definite")

    P = linalg.solve_continuous_are(A, B, Q, R)
    K = np.linalg.solve(R, B.T @ P)
    for _ in range(max_iter):
        if np.linalg.norm(care_residual(A, B, Q, R, P), "fro") < tol:
            break
        Acl = A - B @ K
        if np.max(np.linalg.eigvals(Acl).real) >= 0:
            raise LQRError("Newton-Kleinman iterate lost closed-loop stability")
        P = linalg.solve_continuous_lyapunov(Acl.T, -(Q + K.T @ R @ K))
        P = 0.5 * (P + P.T)
        K = np.linalg.solve(R, B.T @ P)
    else:
        raise LQRError(f"Riccati iteration did not reach residual {tol} in {max_iter} steps")
    return K, P


def balance_gains(p, q_weights=DEFAULT_Q_BALANCE, r_weight=DEFAULT_R_BALANCE,
                  q_yaw=DEFAULT_Q_YAW, r_yaw=DEFAULT_R_YAW):
    """Synthesize the balancing and yaw gains for parameter set ``p``.

    The translation plant is the upright ballbot with the torso locked to the
    chassis; the yaw plant is a rotor with inertia ``I_z`` tracking the twist
    angle.
    """
    A, B = rigid_rider_linearization(p)
    K, _ = lqr_gains(A, B, np.diag(q_weights), np.atleast_2d(r_weight))
    Az = np.array([[0.0, 1.0], [0.0, 0.0]])
    Bz = np.array([[0.0], [1.0 / p.I_z]])
    Kz, _ = lqr_gains(Az, Bz, np.diag(q_yaw), np.atleast_2d(r_yaw))
    return Gains(*(float(v) for v in K[0]), k1z=float(Kz[0, 0]), k2z=float(Kz[0, 1]))


def speed_gain(phi_dot, g, sch):
    """Effective speed-feedback gain ``k3_hat`` of the impedance schemes."""
    if sch.kind == "hics1":
        return sch.nu * g.k3
    if sch.kind == "hics2":
        # speed magnitude scales the gain, so the braking term keeps the sign of phi_dot
        return sch.nu * (abs(phi_dot) / sch.phi_dot_max) * g.k3
    return g.k3


def hics_torque(s, g, sch):
    """Drivetrain torque of Baseline, HICS-1 and HICS-2."""
    if sch.kind not in ("baseline", "hics1", "hics2"):
        raise ValueError(f"hics_torque does not handle scheme {sch.kind!r}")
    theta, theta_dot, phi_dot = s[1], s[4], s[5]
    return -g.k1 * theta - g.k2 * theta_dot - speed_gain(phi_dot, g, sch) * phi_dot


def command_speed(tau_p, tau_p_integral, sch):
    if sch.kind == "hacs1":
        return sch.nu_p * tau_p
    if sch.kind == "hacs2":
        return sch.nu_i * tau_p_integral
    if sch.kind == "hacs3":
        return sch.nu_p * tau_p + sch.nu_i * tau_p_integral
    return 0.0


def advance_integral(cs, tau_p, dt, sch):
    """Trapezoidal update of the seat-moment integral."""
    if cs.tau_p_prev is None:
        integral = cs.tau_p_integral
    else:
        integral = cs.tau_p_integral + 0.5 * dt * (cs.tau_p_prev + tau_p)
    if sch.integral_clamp is not None:
        integral = float(np.clip(integral, -sch.integral_clamp, sch.integral_clamp))
    return ControllerState(tau_p_integral=integral, tau_p_prev=tau_p)


def hacs_torque(s, tau_p, cs, dt, g, sch):
    """Admittance schemes: returns ``(tau_r, new_state, phi_dot_c)``."""
    if sch.kind not in ("hacs1", "hacs2", "hacs3"):
        raise ValueError(f"hacs_torque does not handle scheme {sch.kind!r}")
    if dt <= 0:
        raise ValueError("dt must be positive")
    cs = advance_integral(cs, tau_p, dt, sch)
    phi_dot_c = command_speed(tau_p, cs.tau_p_integral, sch)
    theta, theta_dot, phi_dot = s[1], s[4], s[5]
    tau_r = -g.k1 * theta - g.k2 * theta_dot + g.k3 * (phi_dot_c - phi_dot)
    return tau_r, cs, phi_dot_c


def drivetrain_torque(s, tau_p, cs, dt, g, sch):
    """Dispatch to the scheme's law; returns ``(tau_r, new_state, phi_dot_c)``."""
    if sch.kind in ("baseline", "hics1", "hics2"):
        return hics_torque(s, g, sch), cs, 0.0
    return hacs_torque(s, tau_p, cs, dt, g, sch)


def control_law(s, tau_R, g, sch):
    """Memoryless drivetrain torque for collocation, with its derivatives.

    Only schemes without an integral state qualify. The seat pitch moment
    equals ``-tau_R``. Broadcasts over knots; returns ``(tau, dtau_ds,
    dtau_dtauR)`` with ``dtau_ds`` of shape ``(..., 6)``.
    """
    if sch.has_integral:
        raise ValueError(f"{sch.kind} carries an integral state and has no memoryless law")
    s = np.asarray(s, dtype=float)
    tau_R = np.asarray(tau_R, dtype=float)
    theta, theta_dot, phi_dot = s[..., 1], s[..., 4], s[..., 5]
    ds = np.zeros(s.shape)
    ds[..., 1] = -g.k1
    ds[..., 4] = -g.k2
    dR = np.zeros(np.broadcast(theta, tau_R).shape)
    if sch.kind == "hacs1":
        phi_dot_c = sch.nu_p * (-tau_R)
        tau = -g.k1 * theta - g.k2 * theta_dot + g.k3 * (phi_dot_c - phi_dot)
        ds[..., 5] = -g.k3
        dR = dR - g.k3 * sch.nu_p
    elif sch.kind == "hics2":
        k = sch.nu * g.k3 / sch.phi_dot_max
        tau = -g.k1 * theta - g.k2 * theta_dot - k * phi_dot * np.abs(phi_dot)
        ds[..., 5] = -2.0 * k * np.abs(phi_dot)
    else:
        k3 = speed_gain(phi_dot, g, sch)
        tau = -g.k1 * theta - g.k2 * theta_dot - k3 * phi_dot
        ds[..., 5] = -k3
    tau = tau + np.zeros_like(dR)
    return tau, ds, dR


def yaw_torque(ys, nu_z, g):
    """Yaw drivetrain torque tracking the torso twist angle."""
    if not 0.0 <= nu_z <= 1.0:
        raise ValueError(f"nu_z must lie in [0, 1], got {nu_z}")
    return nu_z * (g.k1z * (ys.zeta_z - ys.theta_z) + g.k2z * (0.0 - ys.theta_z_dot))
