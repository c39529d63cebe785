"""Sagittal-plane rider-ballbot dynamics.

The system is a planar chain of three rigid bodies:

    S  spherical wheel, rolling without slip on flat ground
    C  chassis plus the rider's lower body, pinned at the ball center
    R  rider torso, pinned at the seat pivot located ``h_s`` up the chassis axis

Generalized coordinates are ``q = (zeta, theta, phi)``: torso lean from
vertical, chassis tilt from vertical and absolute ball rotation. Positive
angles lean/roll forward, so the ground displacement is ``r_s * phi``.

State vectors are laid out as ``s = (zeta, theta, phi, zeta_dot, theta_dot,
phi_dot)``. All array functions broadcast over leading axes so the optimizer
can evaluate every collocation knot in one call.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import NamedTuple

import math

import numpy as np

ZETA, THETA, PHI, ZETA_DOT, THETA_DOT, PHI_DOT = range(6)
STATE_NAMES = ("zeta", "theta", "phi", "zeta_dot", "theta_dot", "phi_dot")

# generalized force = TORQUE_MAP @ (tau_R, tau); both actuators act between two bodies
TORQUE_MAP = np.array([[1.0, 0.0], [-1.0, -1.0], [0.0, 1.0]])


class NotAnEquilibriumError(ValueError):
    pass


@dataclass(frozen=True)
class RiderBallbotParams:
    """Physical parameters of the rider-ballbot model (SI units).

    Attributes:
        m_s, r_s, I_s: ball mass, radius and moment of inertia
        m_c, l_c, I_c: chassis + lower-body mass, ball-center-to-COM distance,
            pitch inertia about the COM
        m_r, l_r, I_r: torso mass, pivot-to-COM distance, pitch inertia about the COM
        h_s: ball center to seat pivot along the chassis axis
        I_z: yaw inertia of the whole assembly
        b_phi: viscous rolling friction on the ball
        g: gravitational acceleration
    """

    m_s: float
    r_s: float
    I_s: float
    m_c: float
    l_c: float
    I_c: float
    m_r: float
    l_r: float
    I_r: float
    h_s: float
    I_z: float
    b_phi: float = 0.0
    g: float = 9.81

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not np.isfinite(v):
                raise ValueError(f"parameter {f.name} must be finite, got {v}")
            if f.name == "b_phi":
                if v < 0:
                    raise ValueError(f"b_phi must be >= 0, got {v}")
            elif v <= 0:
                raise ValueError(f"parameter {f.name} must be > 0, got {v}")

    @classmethod
    def default_rider(cls, rider_mass=60.0, chassis_mass=30.0, ball_mass=5.0):
        """Preset for a 60 kg, 1.8 m rider on the ballbot.

        The torso (head, trunk, arms) takes 67.8 % of body mass; the rest rides
        with the chassis. Body inertias use slender rods of length twice the
        COM offset, the ball is a thin spherical shell, and the yaw inertia is
        a 0.2 m radius cylinder plus the ball.
        """
        r_s = 2.0 / 17.6
        l_c, l_r = 0.3, 0.3
        m_r = 0.678 * rider_mass
        m_c = chassis_mass + rider_mass - m_r
        return cls(
            m_s=ball_mass,
            r_s=r_s,
            I_s=2.0 / 3.0 * ball_mass * r_s**2,
            m_c=m_c,
            l_c=l_c,
            I_c=m_c * (2 * l_c) ** 2 / 12.0,
            m_r=m_r,
            l_r=l_r,
            I_r=m_r * (2 * l_r) ** 2 / 12.0,
            h_s=0.45,
            I_z=0.5 * (m_c + m_r) * 0.2**2 + 2.0 / 3.0 * ball_mass * r_s**2,
        )

    def as_dict(self):
        return asdict(self)

    @property
    def total_mass(self):
        return self.m_s + self.m_c + self.m_r


class PlanarState(NamedTuple):
    zeta: float = 0.0
    theta: float = 0.0
    phi: float = 0.0
    zeta_dot: float = 0.0
    theta_dot: float = 0.0
    phi_dot: float = 0.0

    def as_array(self):
        return np.array(self, dtype=float)

    @classmethod
    def from_array(cls, s):
        return cls(*(float(v) for v in np.asarray(s).ravel()[:6]))


class YawState(NamedTuple):
    theta_z: float = 0.0
    theta_z_dot: float = 0.0
    zeta_z: float = 0.0


class InputTorques(NamedTuple):
    tau_R: float = 0.0
    tau: float = 0.0


class PHRIWrench(NamedTuple):
    """Force and moment the torso applies to the seat center.

    Sagittal simulation only produces ``F_py`` (fore-aft), ``F_pz`` (vertical)
    and ``tau_py`` (pitch); the other three are identically zero.
    """

    F_px: float
    F_py: float
    F_pz: float
    tau_px: float
    tau_py: float
    tau_pz: float


def _coefficients(p):
    a = p.m_r * p.h_s * p.l_r
    d = p.m_r * p.r_s * p.l_r
    e = (p.m_c * p.l_c + p.m_r * p.h_s) * p.r_s
    M_zz = p.m_r * p.l_r**2 + p.I_r
    M_tt = p.m_c * p.l_c**2 + p.I_c + p.m_r * p.h_s**2
    M_pp = p.total_mass * p.r_s**2 + p.I_s
    return a, d, e, M_zz, M_tt, M_pp


def mass_matrix(q, p):
    """Configuration-dependent mass matrix, shape ``q.shape[:-1] + (3, 3)``."""
    q = np.asarray(q)
    zeta, theta = q[..., 0], q[..., 1]
    a, d, e, M_zz, M_tt, M_pp = _coefficients(p)
    M = np.empty(q.shape[:-1] + (3, 3), dtype=np.result_type(q, float))
    M[..., 0, 0] = M_zz
    M[..., 1, 1] = M_tt
    M[..., 2, 2] = M_pp
    M[..., 0, 1] = M[..., 1, 0] = a * np.cos(theta - zeta)
    M[..., 0, 2] = M[..., 2, 0] = d * np.cos(zeta)
    M[..., 1, 2] = M[..., 2, 1] = e * np.cos(theta)
    return M


def mass_matrix_partials(q, p):
    """``dM[..., i, j, k] = dM_ij / dq_k``."""
    q = np.asarray(q)
    zeta, theta = q[..., 0], q[..., 1]
    a, d, e, *_ = _coefficients(p)
    dM = np.zeros(q.shape[:-1] + (3, 3, 3))
    s_tz = np.sin(theta - zeta)
    dM[..., 0, 1, 0] = dM[..., 1, 0, 0] = a * s_tz
    dM[..., 0, 1, 1] = dM[..., 1, 0, 1] = -a * s_tz
    dM[..., 0, 2, 0] = dM[..., 2, 0, 0] = -d * np.sin(zeta)
    dM[..., 1, 2, 1] = dM[..., 2, 1, 1] = -e * np.sin(theta)
    return dM


def coriolis_matrix(q, qd, p):
    """Christoffel-form ``C(q, qd)`` so that ``dM/dt - 2C`` is skew-symmetric."""
    dM = mass_matrix_partials(q, p)
    # Gamma_ijk = 1/2 (dM_ij/dq_k + dM_ik/dq_j - dM_jk/dq_i)
    gamma = 0.5 * (dM + np.swapaxes(dM, -1, -2) - np.moveaxis(dM, -1, -3))
    return np.einsum("...ijk,...k->...ij", gamma, np.asarray(qd))


def velocity_terms(q, qd, p):
    """Velocity-product vector ``C(q, qd) @ qd`` in closed form."""
    q, qd = np.asarray(q), np.asarray(qd)
    zeta, theta = q[..., 0], q[..., 1]
    zd, td = qd[..., 0], qd[..., 1]
    a, d, e, *_ = _coefficients(p)
    s_tz = np.sin(theta - zeta)
    return np.stack(
        [
            -a * s_tz * td**2,
            a * s_tz * zd**2,
            -d * np.sin(zeta) * zd**2 - e * np.sin(theta) * td**2,
        ],
        axis=-1,
    )


def gravity_vector(q, p):
    q = np.asarray(q)
    zeta, theta = q[..., 0], q[..., 1]
    return np.stack(
        [
            -p.m_r * p.g * p.l_r * np.sin(zeta),
            -(p.m_c * p.l_c + p.m_r * p.h_s) * p.g * np.sin(theta),
            np.zeros_like(zeta),
        ],
        axis=-1,
    )


def generalized_forces(qd, u, p):
    """Actuator plus friction forces on the right-hand side of the EOM."""
    qd, u = np.asarray(qd), np.asarray(u)
    return u @ TORQUE_MAP.T - p.b_phi * qd * np.array([0.0, 0.0, 1.0])


def eom_forward(s, u, p):
    """Accelerations ``(zeta_ddot, theta_ddot, phi_ddot)`` for state ``s``, input ``u = (tau_R, tau)``."""
    s = np.asarray(s, dtype=float)
    u = np.asarray(u, dtype=float)
    q, qd = s[..., :3], s[..., 3:]
    rhs = generalized_forces(qd, u, p) - velocity_terms(q, qd, p) - gravity_vector(q, p)
    return np.linalg.solve(mass_matrix(q, p), rhs[..., None])[..., 0]


def eom_jacobians(s, u, p):
    """Accelerations and their partial derivatives.

    Returns ``(qdd, dqdd_ds, dqdd_du)`` with shapes ``(..., 3)``,
    ``(..., 3, 6)`` and ``(..., 3, 2)``.
    """
    s = np.asarray(s, dtype=float)
    u = np.asarray(u, dtype=float)
    q, qd = s[..., :3], s[..., 3:]
    zeta, theta = q[..., 0], q[..., 1]
    zd, td = qd[..., 0], qd[..., 1]
    a, d, e, *_ = _coefficients(p)
    M = mass_matrix(q, p)
    rhs = generalized_forces(qd, u, p) - velocity_terms(q, qd, p) - gravity_vector(q, p)
    qdd = np.linalg.solve(M, rhs[..., None])[..., 0]

    c_tz, s_tz = np.cos(theta - zeta), np.sin(theta - zeta)
    dh = np.zeros(s.shape[:-1] + (3, 6))
    # -d(velocity terms)/dq
    dh[..., 0, 0] = -a * c_tz * td**2
    dh[..., 0, 1] = a * c_tz * td**2
    dh[..., 1, 0] = a * c_tz * zd**2
    dh[..., 1, 1] = -a * c_tz * zd**2
    dh[..., 2, 0] = d * np.cos(zeta) * zd**2
    dh[..., 2, 1] = e * np.cos(theta) * td**2
    # -d(gravity)/dq
    dh[..., 0, 0] += p.m_r * p.g * p.l_r * np.cos(zeta)
    dh[..., 1, 1] += (p.m_c * p.l_c + p.m_r * p.h_s) * p.g * np.cos(theta)
    # -d(velocity terms)/dqd and friction
    dh[..., 0, 4] = 2 * a * s_tz * td
    dh[..., 1, 3] = -2 * a * s_tz * zd
    dh[..., 2, 3] = 2 * d * np.sin(zeta) * zd
    dh[..., 2, 4] = 2 * e * np.sin(theta) * td
    dh[..., 2, 5] = -p.b_phi
    # -(dM/dq_k) qdd
    dM = mass_matrix_partials(q, p)
    dh[..., :, :3] -= np.einsum("...ijk,...j->...ik", dM, qdd)

    Minv = np.linalg.inv(M)
    dqdd_ds = Minv @ dh
    dqdd_du = Minv @ TORQUE_MAP
    return qdd, dqdd_ds, dqdd_du


def scalar_dynamics(p):
    """Fast single-state right-hand side ``f(s, tau_R, tau) -> ds/dt`` as a tuple.

    Same equations as :func:`eom_forward`, written with ``math`` and a
    cofactor solve so the simulator avoids per-step array overhead.
    """
    a, d, e, M_zz, M_tt, M_pp = _coefficients(p)
    g_r = p.m_r * p.g * p.l_r
    g_c = (p.m_c * p.l_c + p.m_r * p.h_s) * p.g
    b = p.b_phi
    sin, cos = math.sin, math.cos

    def rhs(s, tau_R, tau):
        zeta, theta, _, zd, td, pd = s
        s_tz = sin(theta - zeta)
        m01 = a * cos(theta - zeta)
        m02 = d * cos(zeta)
        m12 = e * cos(theta)
        r0 = tau_R + a * s_tz * td * td + g_r * sin(zeta)
        r1 = -tau_R - tau - a * s_tz * zd * zd + g_c * sin(theta)
        r2 = tau - b * pd + d * sin(zeta) * zd * zd + e * sin(theta) * td * td
        c00 = M_tt * M_pp - m12 * m12
        c01 = m02 * m12 - m01 * M_pp
        c02 = m01 * m12 - M_tt * m02
        c11 = M_zz * M_pp - m02 * m02
        c12 = m01 * m02 - M_zz * m12
        c22 = M_zz * M_tt - m01 * m01
        det = M_zz * c00 + m01 * c01 + m02 * c02
        return (
            zd, td, pd,
            (c00 * r0 + c01 * r1 + c02 * r2) / det,
            (c01 * r0 + c11 * r1 + c12 * r2) / det,
            (c02 * r0 + c12 * r1 + c22 * r2) / det,
        )

    return rhs


def state_derivative(s, u, p):
    s = np.asarray(s, dtype=float)
    return np.concatenate([s[..., 3:], eom_forward(s, u, p)], axis=-1)


def kinetic_energy(s, p):
    s = np.asarray(s, dtype=float)
    qd = s[..., 3:]
    M = mass_matrix(s[..., :3], p)
    return 0.5 * np.einsum("...i,...ij,...j->...", qd, M, qd)


def potential_energy(s, p):
    s = np.asarray(s, dtype=float)
    zeta, theta = s[..., 0], s[..., 1]
    return p.g * (
        (p.m_c * p.l_c + p.m_r * p.h_s) * (np.cos(theta) - 1.0)
        + p.m_r * p.l_r * (np.cos(zeta) - 1.0)
    )


def total_energy(s, p):
    """Kinetic plus potential energy, zero at the upright rest configuration."""
    return kinetic_energy(s, p) + potential_energy(s, p)


def torso_com_acceleration(s, qdd, p):
    zeta, theta = s[0], s[1]
    zd, td = s[3], s[4]
    zdd, tdd, pdd = qdd
    ax = (
        p.r_s * pdd
        + p.h_s * (np.cos(theta) * tdd - np.sin(theta) * td**2)
        + p.l_r * (np.cos(zeta) * zdd - np.sin(zeta) * zd**2)
    )
    az = -p.h_s * (np.sin(theta) * tdd + np.cos(theta) * td**2) - p.l_r * (
        np.sin(zeta) * zdd + np.cos(zeta) * zd**2
    )
    return ax, az


def phri_wrench(s, qdd, tau_R, p):
    """Wrench the torso exerts on the seat center, from Newton-Euler on the torso.

    The seat center is the torso pivot, so the pitch moment is the reaction of
    the rider's own joint torque and does not depend on the accelerations.
    """
    s = np.asarray(s, dtype=float)
    ax, az = torso_com_acceleration(s, np.asarray(qdd, dtype=float), p)
    # pivot force on the torso is m_r (a - g); the seat feels its negative
    return PHRIWrench(
        F_px=0.0,
        F_py=float(-p.m_r * ax),
        F_pz=float(-p.m_r * (az + p.g)),
        tau_px=0.0,
        tau_py=float(-tau_R),
        tau_pz=0.0,
    )


def isolated_accelerations(s, tau, wrench, p):
    """Chassis and ball accelerations of the ballbot with the torso removed.

    The rider is replaced by ``wrench`` acting on the seat center. Returns
    ``(theta_ddot, phi_ddot)``.
    """
    theta, theta_dot, phi_dot = s[1], s[4], s[5]
    r, h = p.r_s, p.h_s
    ct, st = np.cos(theta), np.sin(theta)
    M = np.array(
        [
            [p.m_c * p.l_c**2 + p.I_c, p.m_c * p.l_c * r * ct],
            [p.m_c * p.l_c * r * ct, (p.m_s + p.m_c) * r**2 + p.I_s],
        ]
    )
    velocity = np.array([0.0, -p.m_c * p.l_c * r * st * theta_dot**2])
    gravity = np.array([-p.m_c * p.g * p.l_c * st, 0.0])
    # seat-point Jacobian: rows (x, z), columns (theta, phi)
    J = np.array([[h * ct, r], [-h * st, 0.0]])
    Q = J.T @ np.array([wrench.F_py, wrench.F_pz])
    Q[0] += wrench.tau_py - tau
    Q[1] += tau - p.b_phi * phi_dot
    return np.linalg.solve(M, Q - velocity - gravity)


def linearize(p, s0=None, u0=None, tol=1e-8):
    """Jacobians ``(A, B)`` of the first-order dynamics at an equilibrium."""
    s0 = np.zeros(6) if s0 is None else np.asarray(s0, dtype=float)
    u0 = np.zeros(2) if u0 is None else np.asarray(u0, dtype=float)
    qdd, dqdd_ds, dqdd_du = eom_jacobians(s0, u0, p)
    if np.max(np.abs(qdd)) > tol:
        raise NotAnEquilibriumError(f"accelerations {qdd} exceed {tol} at the linearization point")
    A = np.zeros((6, 6))
    A[:3, 3:] = np.eye(3)
    A[3:, :] = dqdd_ds
    B = np.zeros((6, 2))
    B[3:, :] = dqdd_du
    return A, B


def rigid_rider_linearization(p):
    """Upright linearization with the torso locked to the chassis.

    Returns ``(A, B)`` for the reduced state ``(theta, theta_dot, phi_dot)``
    and the single drivetrain input. This is the plant the balancing gains are
    designed for: one combined body on the ball.
    """
    T = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])  # (theta, phi) -> (zeta, theta, phi)
    M = T.T @ mass_matrix(np.zeros(3), p) @ T
    # d(gravity)/dq at upright
    K = np.diag([-p.m_r * p.g * p.l_r, -(p.m_c * p.l_c + p.m_r * p.h_s) * p.g, 0.0])
    Kr = T.T @ K @ T
    Br = T.T @ TORQUE_MAP[:, 1]
    Minv = np.linalg.inv(M)
    acc_q = -Minv @ Kr  # columns: theta, phi
    acc_u = Minv @ Br
    A = np.array(
        [
            [0.0, 1.0, 0.0],
            [acc_q[0, 0], 0.0, 0.0],
            [acc_q[1, 0], 0.0, 0.0],
        ]
    )
    B = np.array([[0.0], [acc_u[0]], [acc_u[1]]])
    return A, B


def isolated_linearization(p):
    """Upright linearization of the chassis + ball alone, reduced state ``(theta, theta_dot, phi_dot)``."""
    r = p.r_s
    M = np.array(
        [
            [p.m_c * p.l_c**2 + p.I_c, p.m_c * p.l_c * r],
            [p.m_c * p.l_c * r, (p.m_s + p.m_c) * r**2 + p.I_s],
        ]
    )
    Minv = np.linalg.inv(M)
    acc_theta = Minv @ np.array([p.m_c * p.g * p.l_c, 0.0])
    acc_u = Minv @ np.array([-1.0, 1.0])
    A = np.array(
        [
            [0.0, 1.0, 0.0],
            [acc_theta[0], 0.0, 0.0],
            [acc_theta[1], 0.0, 0.0],
        ]
    )
    B = np.array([[0.0], [acc_u[0]], [acc_u[1]]])
    return A, B


def yaw_eom(ys, tau_z, p):
    """Yaw acceleration of the assembly treated as one rigid rotor."""
    return tau_z / p.I_z
