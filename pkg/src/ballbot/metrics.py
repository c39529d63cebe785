"""Braking effort and the braking-performance metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NoStopDetectedError(ValueError):
    pass


@dataclass(frozen=True)
class BrakingWeights:
    """Rider capabilities that normalize the braking effort.

    ``phi_max`` is the desired braking distance expressed as ball rotation (rad).
    """

    zeta_ROM: float = 0.52
    phi_max: float = 1.0 / (2.0 / 17.6)
    zeta_dot_max: float = 2.0
    tau_R_max: float = 60.0

    def __post_init__(self):
        for name in ("zeta_ROM", "phi_max", "zeta_dot_max", "tau_R_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")

    @classmethod
    def for_rider(cls, zeta_ROM, braking_distance, zeta_dot_max, tau_R_max, r_s):
        return cls(zeta_ROM, braking_distance / r_s, zeta_dot_max, tau_R_max)

    def matrices(self):
        return braking_weights(self.zeta_ROM, self.phi_max, self.zeta_dot_max, self.tau_R_max)


@dataclass(frozen=True)
class BrakingMetrics:
    J: float
    torso_ROM: float  # deg
    max_tau_p: float
    L: float
    T: float


def braking_weights(zeta_ROM, phi_max, zeta_dot_max, tau_R_max):
    """Diagonal state and input weights ``(Q_y, R_y)``."""
    vals = (zeta_ROM, phi_max, zeta_dot_max, tau_R_max)
    if min(vals) <= 0:
        raise ValueError(f"braking weights need positive inputs, got {vals}")
    Q = np.diag([zeta_ROM**-2, 0.0, phi_max**-2, zeta_dot_max**-2, 0.0, 0.0])
    R = np.diag([tau_R_max**-2, 0.0])
    return Q, R


def effort_integrand(states, inputs, Q, R, reference):
    ds = np.asarray(states) - reference
    u = np.asarray(inputs)
    return np.einsum("ni,ij,nj->n", ds, Q, ds) + np.einsum("ni,ij,nj->n", u, R, u)


def braking_effort(traj, Q, R, reference=None):
    """Trapezoidal quadrature of the quadratic braking-effort integrand.

    States are penalized as deviations from ``reference``, by default the
    first knot: torso lean relative to its cruise value and ball angle as
    distance covered since onset.
    """
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    ref = traj.states[0] if reference is None else np.asarray(reference, dtype=float)
    f = effort_integrand(traj.states, traj.inputs, Q, R, ref)
    return float(np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(traj.t)))


def detect_stop(t, speed, v_stop=0.02, hold=0.2):
    """Index of the first sample from which ``|speed| < v_stop`` holds for ``hold`` seconds.

    A stretch that runs to the end of the record counts as held.
    """
    below = np.abs(speed) < v_stop
    # index of the first violation at or after each sample
    nxt = np.full(len(t) + 1, len(t))
    for i in range(len(t) - 1, -1, -1):
        nxt[i] = nxt[i + 1] if below[i] else i
    for i in np.flatnonzero(below):
        j = nxt[i]
        if j == len(t) or t[j] - t[i] >= hold:
            return int(i)
    return None


def compute_metrics(traj, w, p, t_onset=0.0, v_stop=0.02, hold=0.2):
    """Braking metrics from onset to the detected stop.

    ``v_stop`` is a ground speed in m/s. Effort, torso range of motion and peak
    seat moment are all taken over the braking interval.
    """
    i0 = int(np.searchsorted(traj.t, t_onset - 1e-12))
    ground_speed = traj.speed * p.r_s
    rel = detect_stop(traj.t[i0:], ground_speed[i0:], v_stop, hold)
    if rel is None:
        raise NoStopDetectedError(f"speed never settles below {v_stop} m/s for {hold} s")
    iF = i0 + rel
    zeta = traj.states[i0 : iF + 1, 0]
    Q, R = w.matrices()
    J = braking_effort(traj.slice(i0, iF + 1), Q, R) if iF > i0 else 0.0
    return BrakingMetrics(
        J=J,
        torso_ROM=float(np.degrees(zeta.max() - zeta.min())),
        max_tau_p=float(np.max(np.abs(traj.tau_p[i0 : iF + 1]))),
        L=float(p.r_s * (traj.states[iF, 2] - traj.states[i0, 2])),
        T=float(traj.t[iF] - traj.t[i0]),
    )
