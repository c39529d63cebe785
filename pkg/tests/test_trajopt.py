import numpy as np
import pytest

from ballbot.control import ControlScheme, control_law
from ballbot.metrics import compute_metrics
from ballbot.model import eom_forward
from ballbot.sim import TrackingRider, simulate
from ballbot.trajopt import BrakingProblem, solve_nlp, sweep, transcribe

CLASSES = [ControlScheme.baseline(), ControlScheme.hics1(0.4), ControlScheme.hics2(0.7), ControlScheme.hacs1(0.6)]


@pytest.fixture(scope="module")
def hacs1_best(params, gains):
    prob = BrakingProblem(ControlScheme.hacs1(1.0))
    nlp = transcribe(prob, params, gains)
    return prob, nlp, solve_nlp(nlp)


@pytest.fixture(scope="module")
def hics1_mid(params, gains):
    prob = BrakingProblem(ControlScheme.hics1(0.5))
    nlp = transcribe(prob, params, gains)
    return prob, nlp, solve_nlp(nlp)


def _random_points(nlp, rng, n=20):
    """Feasible-box points scattered around the straight-line guess."""
    y0 = nlp.initial_guess()
    lo, hi = nlp.bounds()
    for _ in range(n):
        yield np.clip(y0 + 0.3 * rng.standard_normal(nlp.n), lo + 1e-3, hi - 1e-3)


def _fd_jac(f, y, h=1e-6):
    cols = []
    for i in range(len(y)):
        e = np.zeros(len(y))
        e[i] = h
        cols.append((np.atleast_1d(f(y + e)) - np.atleast_1d(f(y - e))) / (2 * h))
    return np.column_stack(cols)


def _rel(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12)


# ---------------------------------------------------------------- transcription

def test_problem_validation():
    with pytest.raises(ValueError, match="integral"):
        BrakingProblem(ControlScheme.hacs2(0.5))
    with pytest.raises(ValueError, match="10"):
        BrakingProblem(ControlScheme.hacs1(0.5), N=9)
    with pytest.raises(ValueError, match="final-time"):
        BrakingProblem(ControlScheme.hacs1(0.5), t_F_bounds=(2.0, 1.0))


def test_constraint_counts(params, gains):
    nlp = transcribe(BrakingProblem(ControlScheme.hics1(0.5), N=10), params, gains)
    assert nlp.n_defects == 60
    assert nlp.n == 11 * 6 + 11 + 1
    assert len(nlp.eq_constraints(nlp.initial_guess())) == nlp.n_eq == 60 + nlp.n_boundary
    loose = transcribe(BrakingProblem(ControlScheme.hics1(0.5), N=10, final_rest=False), params, gains)
    assert nlp.n_boundary - loose.n_boundary == 2


def test_pack_round_trip(params, gains, rng):
    nlp = transcribe(BrakingProblem(ControlScheme.hacs1(0.5), N=10), params, gains)
    y = rng.standard_normal(nlp.n)
    assert np.allclose(nlp.pack(*nlp.unpack(y)), y, rtol=1e-15)


def test_stationary_task_is_free(params, gains):
    nlp = transcribe(BrakingProblem(ControlScheme.hics1(0.5), v0=0.0, N=10), params, gains)
    y0 = nlp.initial_guess()
    _, _, t_F = nlp.unpack(y0)
    assert t_F == nlp.prob.t_F_bounds[0]
    assert np.max(np.abs(nlp.eq_constraints(y0))) < 1e-12
    assert nlp.objective(y0) < 1e-8
    sol = solve_nlp(nlp)
    assert sol.J_star < 1e-8


@pytest.mark.parametrize("sch", CLASSES, ids=lambda s: s.kind)
def test_derivatives_match_fd(params, gains, rng, sch):
    nlp = transcribe(BrakingProblem(sch, N=10), params, gains)
    for y in _random_points(nlp, rng):
        assert _rel(nlp.objective_grad(y), _fd_jac(nlp.objective, y)[0]) < 1e-5
        assert _rel(nlp.eq_jacobian(y), _fd_jac(nlp.eq_constraints, y)) < 1e-5
        assert _rel(nlp.ineq_jacobian(y), _fd_jac(nlp.ineq_constraints, y)) < 1e-5


def test_lagrangian_hessian_matches_fd(params, gains, rng):
    nlp = transcribe(BrakingProblem(ControlScheme.hics2(0.7), N=10), params, gains)
    y = next(_random_points(nlp, rng))
    le = rng.standard_normal(nlp.n_eq)
    li = -rng.uniform(0, 1, len(nlp.ineq_constraints(y)))
    H = nlp.lagrangian_hessian(y, le, li)
    H_fd = _fd_jac(lambda v: nlp.lagrangian_grad(v, le, li), y, h=1e-5)
    assert np.allclose(H, H.T)
    assert _rel(H, 0.5 * (H_fd + H_fd.T)) < 1e-5


def test_infeasible_rider_authority_is_reported(params, gains):
    nlp = transcribe(BrakingProblem(ControlScheme.hacs1(0.5), tau_R_max=0.0), params, gains)
    sol = solve_nlp(nlp, max_iter=40)
    assert not sol.converged
    assert np.isfinite(sol.J_star)


def test_unknown_method(params, gains):
    nlp = transcribe(BrakingProblem(ControlScheme.hacs1(0.5), N=10), params, gains)
    with pytest.raises(ValueError, match="method"):
        solve_nlp(nlp, method="newton")


# ---------------------------------------------------------------- converged solutions

@pytest.mark.parametrize("which", ["hacs1_best", "hics1_mid"])
def test_solution_integrity(request, params, gains, which):
    prob, nlp, sol = request.getfixturevalue(which)
    assert sol.converged, sol.message
    tr = sol.trajectory
    X, U, tau = tr.states, tr.inputs[:, 0], tr.inputs[:, 1]
    # defects, re-evaluated from the forward dynamics
    f = np.concatenate([X[:, 3:], eom_forward(X, tr.inputs, params)], axis=1)
    h = np.diff(tr.t)[:, None]
    assert np.max(np.abs(X[1:] - X[:-1] - 0.5 * h * (f[1:] + f[:-1]))) < 1e-6
    # control-law tie
    assert np.max(np.abs(tau - control_law(X, U, gains, prob.scheme)[0])) < 1e-10
    # boxes
    assert np.max(np.abs(X[:, 0])) <= prob.zeta_bound + 1e-8
    assert np.max(np.abs(X[:, 1])) <= prob.theta_bound + 1e-8
    assert np.max(np.abs(U)) <= prob.tau_R_max + 1e-8
    assert np.max(np.abs(tau)) <= prob.tau_max + 1e-8
    # boundary conditions
    assert np.allclose(X[0], nlp.s_eq, atol=1e-8) and U[0] == pytest.approx(nlp.tau_R_hold, abs=1e-8)
    assert np.max(np.abs(X[-1, [0, 1, 3, 4, 5]])) < 1e-8 and abs(U[-1]) < 1e-8
    assert sol.kkt_residual < 1e-6 and sol.max_defect < 1e-6


def test_replay_reproduces_effort(params, gains, hacs1_best):
    prob, nlp, sol = hacs1_best
    tr = sol.trajectory
    rider = TrackingRider(tr.t, tr.inputs[:, 0], tr.states[:, 0], tr.states[:, 3])
    run = simulate(nlp.s_eq, rider, prob.scheme, gains, params, t_end=tr.t[-1] + 3.0)
    assert not run.fell
    m = compute_metrics(run, prob.weights, params)
    assert m.J == pytest.approx(sol.J_star, rel=0.02)
    assert abs(run.speed[-1]) < 0.02  # rad/s, so ground speed is far below 0.02 m/s


def test_replay_effort_is_step_converged(params, gains, hacs1_best):
    prob, nlp, sol = hacs1_best
    tr = sol.trajectory
    J = []
    for dt in (1e-3, 5e-4):
        rider = TrackingRider(tr.t, tr.inputs[:, 0], tr.states[:, 0], tr.states[:, 3])
        run = simulate(nlp.s_eq, rider, prob.scheme, gains, params, dt=dt, t_end=tr.t[-1] + 3.0)
        J.append(compute_metrics(run, prob.weights, params).J)
    assert J[1] == pytest.approx(J[0], rel=5e-3)


def test_warm_start_independence(params, gains, hacs1_best):
    _, _, warm_from = hacs1_best
    nlp = transcribe(BrakingProblem(ControlScheme.hacs1(0.9)), params, gains)
    cold = solve_nlp(nlp)
    warm = solve_nlp(nlp, init=warm_from)
    assert cold.converged and warm.converged
    assert warm.J_star == pytest.approx(cold.J_star, rel=5e-3)


@pytest.mark.slow
def test_grid_refinement(params, gains, hacs1_best):
    # N = 50 -> 100 moves J by ~1.2 %; the refinement is first order, so check the next doubling
    _, _, coarse = hacs1_best
    J = {}
    prev = coarse
    for N in (100, 200):
        sol = solve_nlp(transcribe(BrakingProblem(ControlScheme.hacs1(1.0), N=N), params, gains), init=prev)
        assert sol.converged
        J[N], prev = sol.J_star, sol
    assert abs(J[200] - J[100]) / J[100] < 0.01
    assert abs(J[100] - coarse.J_star) / coarse.J_star < 0.02


# ---------------------------------------------------------------- sweep harness

def test_small_sweep(params, gains):
    kw = dict(schemes=("hacs1", "hics1"), sensitivities=(1.0, 0.5), p=params, g=gains, restarts=0, N=20)
    rows = sweep(**kw)
    assert [(r.scheme, r.param_value) for r in rows] == [("hacs1", 1.0), ("hacs1", 0.5), ("hics1", 1.0),
                                                           ("hics1", 0.5)]
    assert all(r.status == "converged" and r.metrics is not None for r in rows)
    assert rows[0].param_name == "nu_p" and rows[2].param_name == "nu"
    again = sweep(**kw, workers=2)
    assert [r.solution.J_star for r in again] == [r.solution.J_star for r in rows]


def test_sweep_records_failures(params, gains):
    rows = sweep(("hacs2",), (0.5,), params, gains, restarts=0, N=10)
    assert rows[0].status == "failed" and "integral" in rows[0].error
