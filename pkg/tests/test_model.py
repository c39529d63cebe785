import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ballbot.model import (
    TORQUE_MAP, NotAnEquilibriumError, PlanarState, RiderBallbotParams, YawState, coriolis_matrix,
    eom_forward, eom_jacobians, gravity_vector, isolated_accelerations, kinetic_energy, linearize,
    mass_matrix, mass_matrix_partials, phri_wrench, scalar_dynamics, state_derivative, total_energy,
    velocity_terms, yaw_eom,
)
from ballbot.sim import find_equilibrium, step_rk4
from ballbot.control import ControlScheme
from conftest import random_states

finite = st.floats(-3.0, 3.0, allow_nan=False)


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300)


# ---------------------------------------------------------------- parameters

def test_default_rider_split(params):
    assert params.m_r == pytest.approx(0.678 * 60.0)
    assert params.m_c + params.m_r == pytest.approx(90.0)
    assert params.r_s == pytest.approx(2.0 / 17.6)
    assert params.b_phi == 0.0


@pytest.mark.parametrize("field,value", [("m_s", 0.0), ("l_r", -1.0), ("b_phi", -0.1), ("I_c", float("nan"))])
def test_params_reject_invalid(params, field, value):
    with pytest.raises(ValueError, match=field):
        dataclasses.replace(params, **{field: value})


def test_planar_state_round_trip():
    s = PlanarState(0.1, 0.2, 0.3, 0.4, 0.5, 0.6)
    assert PlanarState.from_array(s.as_array()) == s


# ---------------------------------------------------------------- mass matrix

def test_mass_matrix_symmetric_pd_10k(params, rng):
    q = rng.uniform(-np.pi, np.pi, (10_000, 3)) * np.array([1.0, 1.0, 10.0])
    M = mass_matrix(q, params)
    assert np.array_equal(M, np.swapaxes(M, -1, -2))
    assert np.linalg.eigvalsh(M).min() > 0


@settings(max_examples=200, deadline=None)
@given(finite, finite, st.floats(-100, 100))
def test_mass_matrix_pd_property(zeta, theta, phi):
    p = RiderBallbotParams.default_rider()
    M = mass_matrix(np.array([zeta, theta, phi]), p)
    assert np.all(M == M.T)
    assert np.linalg.eigvalsh(M).min() > 0


def test_mass_matrix_matches_symbolic_oracle(eom_oracle):
    p, cases = eom_oracle
    fixed = cases[0]
    assert fixed["state"][:3] == [0.1, -0.2, 0.5]
    for case in cases:
        M = mass_matrix(np.array(case["state"][:3]), p)
        assert rel_err(M, case["mass_matrix"]) < 1e-10


def test_eom_matches_symbolic_oracle(eom_oracle):
    p, cases = eom_oracle
    for case in cases:
        qdd = eom_forward(case["state"], case["input"], p)
        assert rel_err(qdd, case["qdd"]) < 1e-10


def test_mass_matrix_partials_match_fd(params, rng):
    q = rng.uniform(-1, 1, 3)
    h = 1e-6
    fd = np.stack([(mass_matrix(q + h * e, params) - mass_matrix(q - h * e, params)) / (2 * h)
                   for e in np.eye(3)], axis=-1)
    assert np.max(np.abs(mass_matrix_partials(q, params) - fd)) < 1e-8


def test_skew_symmetry(params, rng):
    s = random_states(rng, 500)
    q, qd = s[:, :3], s[:, 3:]
    Mdot = np.einsum("nijk,nk->nij", mass_matrix_partials(q, params), qd)
    N = Mdot - 2.0 * coriolis_matrix(q, qd, params)
    assert np.max(np.abs(np.einsum("ni,nij,nj->n", qd, N, qd))) < 1e-9
    assert np.max(np.abs(N + np.swapaxes(N, -1, -2))) < 1e-9
    assert np.allclose(np.einsum("nij,nj->ni", coriolis_matrix(q, qd, params), qd),
                       velocity_terms(q, qd, params), atol=1e-10)


# ---------------------------------------------------------------- forward dynamics

def test_upright_rest_is_equilibrium(params):
    assert np.array_equal(eom_forward(np.zeros(6), (0.0, 0.0), params), np.zeros(3))


def test_tilt_falls_away(params):
    qdd = eom_forward([0.0, 0.05, 0, 0, 0, 0], (0.0, 0.0), params)
    assert qdd[1] > 0


def test_torque_map_routes_reactions():
    assert TORQUE_MAP.tolist() == [[1, 0], [-1, -1], [0, 1]]


def test_eom_residual_form(params, rng):
    for s in random_states(rng, 20):
        u = rng.uniform(-40, 40, 2)
        q, qd = s[:3], s[3:]
        qdd = eom_forward(s, u, params)
        lhs = mass_matrix(q, params) @ qdd + coriolis_matrix(q, qd, params) @ qd + gravity_vector(q, params)
        assert np.allclose(lhs, TORQUE_MAP @ u, atol=1e-10)


def test_scalar_dynamics_matches_vectorized(params, rng):
    p = dataclasses.replace(params, b_phi=0.7)
    f = scalar_dynamics(p)
    for s in random_states(rng, 50):
        u = rng.uniform(-40, 40, 2)
        assert np.allclose(f(tuple(s), *u), state_derivative(s, u, p), rtol=1e-12, atol=1e-12)


def test_eom_jacobians_match_fd(params, rng):
    h = 1e-6
    for s in random_states(rng, 5):
        u = rng.uniform(-40, 40, 2)
        _, ds, du = eom_jacobians(s, u, params)
        fd_s = np.column_stack([(eom_forward(s + h * e, u, params) - eom_forward(s - h * e, u, params)) / (2 * h)
                                for e in np.eye(6)])
        fd_u = np.column_stack([(eom_forward(s, u + h * e, params) - eom_forward(s, u - h * e, params)) / (2 * h)
                                for e in np.eye(2)])
        assert rel_err(ds, fd_s) < 1e-6
        assert rel_err(du, fd_u) < 1e-6


# ---------------------------------------------------------------- energy

def test_energy_zero_point(params):
    assert total_energy(np.zeros(6), params) == 0.0


def test_pure_spin_energy(params):
    s = np.array([0, 0, 0, 0, 0, 1.0])
    M = mass_matrix(np.zeros(3), params)
    assert total_energy(s, params) == pytest.approx(0.5 * M[2, 2], rel=1e-15)
    assert total_energy(s, params) == pytest.approx(
        0.5 * (params.I_s + params.total_mass * params.r_s**2), rel=1e-14)


def _unforced_run(p, s0, t_end=5.0, dt=1e-3):
    f = scalar_dynamics(p)
    s = np.array(s0, float)
    energies = [total_energy(s, p)]
    for _ in range(int(round(t_end / dt))):
        s = step_rk4(s, (0.0, 0.0), dt, p, f)
        energies.append(total_energy(s, p))
    return np.array(energies)


def _drift(E):
    return np.max(np.abs(E - E[0])) / max(abs(E[0]), 1.0)


def test_energy_conservation_frictionless(params):
    # large swing about the hanging configuration: rates up to ~37 rad/s, no tumbling
    E = _unforced_run(params, [np.pi + 1.0, np.pi - 0.8, 0.0, 1.0, -1.0, 5.0])
    assert _drift(E) < 1e-6


def test_energy_drift_of_upright_tumble_is_rk4_truncation(params):
    # falling from upright the bodies spin up to ~70 rad/s; drift must shrink at fourth order
    s0 = [0.05, -0.03, 0.0, 0.2, 0.1, 2.0]
    coarse = _drift(_unforced_run(params, s0, dt=1e-3))
    fine = _drift(_unforced_run(params, s0, dt=5e-4))
    assert 10.0 < coarse / fine < 24.0
    assert fine < 1e-5


def test_passivity_with_friction(params):
    p = dataclasses.replace(params, b_phi=2.0)
    E = _unforced_run(p, [0.05, -0.03, 0.0, 0.2, 0.1, 2.0], t_end=3.0)
    assert np.all(np.diff(E) <= 1e-9 * max(abs(E[0]), 1.0))
    assert E[-1] < E[0]


def test_kinetic_energy_non_negative(params, rng):
    assert kinetic_energy(random_states(rng, 1000), params).min() >= 0


# ---------------------------------------------------------------- pHRI

def test_phri_static_upright(params):
    w = phri_wrench(np.zeros(6), np.zeros(3), 0.0, params)
    assert w.F_pz == pytest.approx(-params.m_r * params.g)
    assert w.tau_py == 0.0
    assert w.F_px == w.tau_px == w.tau_pz == 0.0


def test_phri_static_lean(params):
    zeta = 0.2
    g_r = params.m_r * params.g * params.l_r
    g_c = (params.m_c * params.l_c + params.m_r * params.h_s) * params.g
    tau_R = -g_r * np.sin(zeta)
    s = np.array([zeta, np.arcsin(tau_R / g_c), 0, 0, 0, 0])
    assert np.max(np.abs(eom_forward(s, (tau_R, 0.0), params))) < 1e-12
    w = phri_wrench(s, np.zeros(3), tau_R, params)
    assert abs(w.tau_py) == pytest.approx(g_r * np.sin(zeta), rel=1e-12)


@pytest.mark.parametrize("b_phi", [0.0, 1.5])
def test_isolation_equivalence(params, rng, b_phi):
    p = dataclasses.replace(params, b_phi=b_phi)
    worst = 0.0
    for s in random_states(rng, 1000):
        u = rng.uniform(-60, 60, 2)
        qdd = eom_forward(s, u, p)
        w = phri_wrench(s, qdd, u[0], p)
        iso = isolated_accelerations(s, u[1], w, p)
        worst = max(worst, np.max(np.abs(iso - qdd[1:]) / np.maximum(np.abs(qdd[1:]), 1.0)))
    assert worst < 1e-9


# ---------------------------------------------------------------- linearization

def _fd_linearization(p, s0, u0, h=1e-6):
    A = np.column_stack([(state_derivative(s0 + h * e, u0, p) - state_derivative(s0 - h * e, u0, p)) / (2 * h)
                         for e in np.eye(6)])
    B = np.column_stack([(state_derivative(s0, u0 + h * e, p) - state_derivative(s0, u0 - h * e, p)) / (2 * h)
                         for e in np.eye(2)])
    return A, B


def test_linearize_upright(params):
    A, B = linearize(params)
    assert np.array_equal(A[:3, :3], np.zeros((3, 3)))
    assert np.array_equal(A[:3, 3:], np.eye(3))
    assert np.array_equal(B[:3], np.zeros((3, 2)))
    assert np.max(np.linalg.eigvals(A).real) > 0
    A_fd, B_fd = _fd_linearization(params, np.zeros(6), np.zeros(2))
    assert rel_err(A, A_fd) < 1e-6
    assert rel_err(B, B_fd) < 1e-6


def test_linearize_cruise_equilibrium(params, gains):
    sch = ControlScheme.hics1(0.5)
    s0, hold, _ = find_equilibrium(sch, gains, params, 1.4)
    from ballbot.control import hics_torque
    u0 = np.array([hold, hics_torque(s0, gains, sch)])
    A, B = linearize(params, s0, u0)
    A_fd, B_fd = _fd_linearization(params, s0, u0)
    assert rel_err(A, A_fd) < 1e-6
    assert rel_err(B, B_fd) < 1e-6


def test_linearize_rejects_non_equilibrium(params):
    with pytest.raises(NotAnEquilibriumError):
        linearize(params, np.array([0, 0.1, 0, 0, 0, 0]), np.zeros(2))


# ---------------------------------------------------------------- yaw

def test_yaw_eom(params):
    ys = YawState(0.3, -0.2, 0.1)
    assert yaw_eom(ys, 0.0, params) == 0.0
    assert yaw_eom(ys, params.I_z, params) == 1.0
    assert yaw_eom(ys, 2.0, dataclasses.replace(params, I_z=4.0)) == 0.5
