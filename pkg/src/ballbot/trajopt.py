"""Minimum-braking-effort trajectory optimization by direct collocation.

The rider is the optimizing agent: the decision variables are the state at
each knot, the torso torque at each knot and the free final time. The
drivetrain torque is not free; it is eliminated by substituting the scheme's
control law, so the ballbot behaves exactly as it would on the road.

Trapezoidal collocation on a uniform normalized grid:

    x[k+1] - x[k] - h/2 (f[k] + f[k+1]) = 0,   h = t_F / N

and the effort integral uses the same trapezoid weights.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .control import ControlScheme, balance_gains, control_law
from .metrics import BrakingWeights, NoStopDetectedError, compute_metrics
from .model import RiderBallbotParams, eom_forward, eom_jacobians
from .nlp import minimize_ip
from .sim import Trajectory, find_equilibrium

COLLOCATION_SCHEMES = ("baseline", "hics1", "hics2", "hacs1")

# typical magnitudes used to scale decision variables and defects
STATE_SCALE = np.array([0.5, 0.1, 10.0, 1.0, 1.0, 10.0])
TORQUE_SCALE = 50.0


@dataclass(frozen=True)
class BrakingProblem:
    scheme: ControlScheme
    v0: float = 1.4
    weights: BrakingWeights = field(default_factory=BrakingWeights)
    zeta_bound: float = 0.52
    theta_bound: float = 0.30  # rad, kept clear of the 0.35 rad fall limit so replays have margin
    tau_R_max: float = 60.0
    tau_max: float = 40.0
    t_F_bounds: tuple = (0.2, 10.0)
    N: int = 50
    final_rest: bool = True  # pin final lean and torque to the stopped equilibrium

    def __post_init__(self):
        if self.scheme.kind not in COLLOCATION_SCHEMES:
            raise ValueError(
                f"{self.scheme.kind} carries an integral state and cannot be transcribed; "
                f"use one of {COLLOCATION_SCHEMES}"
            )
        if self.N < 10:
            raise ValueError("need at least 10 collocation segments")
        if self.v0 < 0:
            raise ValueError("v0 must be >= 0")
        lo, hi = self.t_F_bounds
        if not 0 < lo < hi:
            raise ValueError(f"bad final-time bounds {self.t_F_bounds}")
        for name in ("zeta_bound", "theta_bound", "tau_max"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.tau_R_max < 0:
            raise ValueError("tau_R_max must be >= 0")

    @property
    def sensitivity(self):
        return self.scheme.sensitivity


@dataclass
class OptimalSolution:
    trajectory: Trajectory
    J_star: float
    t_F: float
    iterations: int
    max_defect: float
    kkt_residual: float
    converged: bool
    message: str = ""
    z: np.ndarray = None
    runtime: float = 0.0


class NLPInstance:
    """Transcribed braking problem.

    The decision vector is scaled: ``z = y * scale`` where ``z`` packs the
    knot states (row-major, ``(N+1, 6)``), the knot torso torques and ``t_F``.
    All public callables take the scaled vector ``y``.
    """

    def __init__(self, prob, p, g, s_eq, tau_R_hold, s_stop=None, tau_R_stop=0.0):
        self.prob, self.p, self.g = prob, p, g
        self.N = prob.N
        self.s_eq = np.asarray(s_eq, dtype=float)
        self.tau_R_hold = float(tau_R_hold)
        self.s_stop = np.zeros(6) if s_stop is None else np.asarray(s_stop, dtype=float)
        self.tau_R_stop = float(tau_R_stop)
        self.Q, self.R = prob.weights.matrices()
        n = self.N + 1
        self.n_x = 6 * n
        self.n = self.n_x + n + 1
        self.scale = np.concatenate([np.tile(STATE_SCALE, n), np.full(n, TORQUE_SCALE), [1.0]])
        self.w = np.ones(n)
        self.w[[0, -1]] = 0.5
        self.defect_scale = np.tile(STATE_SCALE, self.N)

    # -- layout -------------------------------------------------------------
    def unpack(self, y):
        z = np.asarray(y) * self.scale
        X = z[: self.n_x].reshape(self.N + 1, 6)
        U = z[self.n_x : -1]
        return X, U, z[-1]

    def pack(self, X, U, t_F):
        z = np.concatenate([np.ravel(X), np.ravel(U), [t_F]])
        return z / self.scale

    @property
    def n_defects(self):
        return 6 * self.N

    @property
    def n_boundary(self):
        return 7 + 4 + (2 if self.prob.final_rest else 0)

    @property
    def n_eq(self):
        return self.n_defects + self.n_boundary

    def drive_torque(self, X, U):
        return control_law(X, U, self.g, self.prob.scheme)

    # -- objective ----------------------------------------------------------
    def objective(self, y):
        X, U, t_F = self.unpack(y)
        dX = X - self.s_eq
        L = np.einsum("ni,ij,nj->n", dX, self.Q, dX) + self.R[0, 0] * U**2
        return float(t_F / self.N * np.dot(self.w, L))

    def objective_grad(self, y):
        X, U, t_F = self.unpack(y)
        h = t_F / self.N
        dX = X - self.s_eq
        L = np.einsum("ni,ij,nj->n", dX, self.Q, dX) + self.R[0, 0] * U**2
        gx = 2.0 * h * self.w[:, None] * (dX @ self.Q)
        gu = 2.0 * h * self.w * self.R[0, 0] * U
        gt = np.dot(self.w, L) / self.N
        return np.concatenate([gx.ravel(), gu, [gt]]) * self.scale

    # -- dynamics -----------------------------------------------------------
    def _dynamics(self, X, U):
        tau, dtau_ds, dtau_dR = self.drive_torque(X, U)
        u = np.column_stack([U, tau])
        qdd, dqdd_ds, dqdd_du = eom_jacobians(X, u, self.p)
        f = np.concatenate([X[:, 3:], qdd], axis=1)
        F = np.zeros((len(X), 6, 6))
        F[:, :3, 3:] = np.eye(3)
        F[:, 3:, :] = dqdd_ds + dqdd_du[:, :, 1:2] * dtau_ds[:, None, :]
        G = np.zeros((len(X), 6))
        G[:, 3:] = dqdd_du[:, :, 0] + dqdd_du[:, :, 1] * dtau_dR[:, None]
        return f, F, G

    def defects(self, y):
        X, U, t_F = self.unpack(y)
        f, _, _ = self._dynamics(X, U)
        h = t_F / self.N
        D = X[1:] - X[:-1] - 0.5 * h * (f[1:] + f[:-1])
        return D.ravel()

    def eq_constraints(self, y):
        X, U, t_F = self.unpack(y)
        D = self.defects(y) / self.defect_scale
        b0 = (X[0] - self.s_eq) / STATE_SCALE
        bu = (U[0] - self.tau_R_hold) / TORQUE_SCALE
        bF = X[-1, [3, 1, 4, 5]] / STATE_SCALE[[3, 1, 4, 5]]
        parts = [D, b0, [bu], bF]
        if self.prob.final_rest:
            parts.append([(X[-1, 0] - self.s_stop[0]) / STATE_SCALE[0],
                          (U[-1] - self.tau_R_stop) / TORQUE_SCALE])
        return np.concatenate(parts)

    def eq_jacobian(self, y):
        X, U, t_F = self.unpack(y)
        N = self.N
        h = t_F / N
        f, F, G = self._dynamics(X, U)
        Jz = np.zeros((self.n_eq, self.n))
        I6 = np.eye(6)
        for k in range(N):
            r = slice(6 * k, 6 * k + 6)
            Jz[r, 6 * k : 6 * k + 6] = -I6 - 0.5 * h * F[k]
            Jz[r, 6 * k + 6 : 6 * k + 12] = I6 - 0.5 * h * F[k + 1]
            Jz[r, self.n_x + k] = -0.5 * h * G[k]
            Jz[r, self.n_x + k + 1] = -0.5 * h * G[k + 1]
            Jz[r, -1] = -0.5 / N * (f[k] + f[k + 1])
        Jz[: 6 * N] /= self.defect_scale[:, None]
        row = 6 * N
        Jz[row : row + 6, 0:6] = np.diag(1.0 / STATE_SCALE)
        Jz[row + 6, self.n_x] = 1.0 / TORQUE_SCALE
        for i, j in enumerate([3, 1, 4, 5]):
            Jz[row + 7 + i, 6 * N + j] = 1.0 / STATE_SCALE[j]
        if self.prob.final_rest:
            Jz[row + 11, 6 * N] = 1.0 / STATE_SCALE[0]
            Jz[row + 12, self.n_x + N] = 1.0 / TORQUE_SCALE
        return Jz * self.scale

    def ineq_constraints(self, y):
        """Drivetrain torque box, ``>= 0`` when satisfied."""
        X, U, _ = self.unpack(y)
        tau, _, _ = self.drive_torque(X, U)
        return np.concatenate([self.prob.tau_max - tau, self.prob.tau_max + tau]) / TORQUE_SCALE

    def ineq_jacobian(self, y):
        X, U, _ = self.unpack(y)
        n = self.N + 1
        _, dtau_ds, dtau_dR = self.drive_torque(X, U)
        J = np.zeros((n, self.n))
        idx = np.arange(n)
        for j in range(6):
            J[idx, 6 * idx + j] = dtau_ds[:, j]
        J[idx, self.n_x + idx] = dtau_dR
        J = J * self.scale / TORQUE_SCALE
        return np.vstack([-J, J])

    def lagrangian_grad(self, y, lam_eq, lam_ineq):
        return (self.objective_grad(y) + self.eq_jacobian(y).T @ lam_eq
                + self.ineq_jacobian(y).T @ lam_ineq)

    def lagrangian_hessian(self, y, lam_eq, lam_ineq, eps=1e-7):
        """Hessian of the Lagrangian by compressed forward differences.

        Knot ``k`` only couples to knots ``k-1``, ``k+1`` and ``t_F``, so
        perturbing every third knot at once recovers the banded part in
        21 gradient evaluations; ``t_F`` gets its own column.
        """
        n_k = self.N + 1
        knot = np.concatenate([np.repeat(np.arange(n_k), 6), np.arange(n_k), [-1]])
        comp = np.concatenate([np.tile(np.arange(6), n_k), np.full(n_k, 6), [-1]])
        var = np.zeros((n_k, 7), dtype=int)
        var[knot[:-1], comp[:-1]] = np.arange(self.n - 1)
        g0 = self.lagrangian_grad(y, lam_eq, lam_ineq)
        H = np.zeros((self.n, self.n))
        rows = np.arange(self.n - 1)
        for c in range(3):
            # column knot seen from each row: the neighbour with colour c
            k_col = knot[rows] + ((c - knot[rows] + 1) % 3) - 1
            ok = (k_col >= 0) & (k_col < n_k)
            for j in range(7):
                d = np.zeros(self.n)
                d[var[c::3, j]] = eps
                dg = (self.lagrangian_grad(y + d, lam_eq, lam_ineq) - g0) / eps
                H[rows[ok], var[k_col[ok], j]] = dg[rows[ok]]
        d = np.zeros(self.n)
        d[-1] = eps
        H[:, -1] = (self.lagrangian_grad(y + d, lam_eq, lam_ineq) - g0) / eps
        H[-1, :] = H[:, -1]
        return 0.5 * (H + H.T)

    def bounds(self):
        prob = self.prob
        n = self.N + 1
        lo = np.full(self.n, -np.inf)
        hi = np.full(self.n, np.inf)
        X_lo = lo[: self.n_x].reshape(n, 6)
        X_hi = hi[: self.n_x].reshape(n, 6)
        X_lo[:, 0], X_hi[:, 0] = -prob.zeta_bound, prob.zeta_bound
        X_lo[:, 1], X_hi[:, 1] = -prob.theta_bound, prob.theta_bound
        lo[self.n_x : -1], hi[self.n_x : -1] = -prob.tau_R_max, prob.tau_R_max
        lo[-1], hi[-1] = prob.t_F_bounds
        return lo / self.scale, hi / self.scale

    # -- helpers ------------------------------------------------------------
    def initial_guess(self, t_F=None):
        """Straight-line interpolation from cruise to a stop at the origin lean."""
        prob = self.prob
        if t_F is None:
            t_F = float(np.clip(2.0 * prob.v0 / 0.8, *prob.t_F_bounds)) if prob.v0 > 0 else prob.t_F_bounds[0]
        s = np.linspace(0.0, 1.0, self.N + 1)
        phi_dot0 = self.s_eq[5]
        X = np.outer(1.0 - s, self.s_eq)
        X[:, 5] = phi_dot0 * (1.0 - s)
        X[:, 2] = phi_dot0 * t_F * (s - 0.5 * s**2)
        U = self.tau_R_hold * (1.0 - s)
        return self.pack(X, U, t_F)

    def to_trajectory(self, y):
        X, U, t_F = self.unpack(y)
        tau, _, _ = self.drive_torque(X, U)
        t = np.linspace(0.0, t_F, self.N + 1)
        phi_dot_c = -self.prob.scheme.nu_p * U if self.prob.scheme.kind == "hacs1" else np.zeros_like(U)
        return Trajectory(t, X, np.column_stack([U, tau]), -U, phi_dot_c)

    def max_defect(self, y):
        """Largest defect, re-evaluated through the forward dynamics."""
        X, U, t_F = self.unpack(y)
        tau, _, _ = self.drive_torque(X, U)
        qdd = eom_forward(X, np.column_stack([U, tau]), self.p)
        f = np.concatenate([X[:, 3:], qdd], axis=1)
        D = X[1:] - X[:-1] - 0.5 * (t_F / self.N) * (f[1:] + f[:-1])
        return float(np.max(np.abs(D)))

    def kkt_residual(self, y, multipliers=None, active_tol=1e-5):
        """Largest entry of the Lagrangian gradient.

        With ``multipliers = (lam_eq, lam_ineq, z_bound)`` from the solver the
        gradient is re-evaluated at ``y`` with those multipliers (inequality
        multipliers must be non-positive). Without them, least-squares
        multipliers over the near-active set are used, restricted to the dual
        feasible sign.
        """
        grad = self.objective_grad(y)
        Jeq = self.eq_jacobian(y)
        if multipliers is not None:
            lam_eq, lam_ineq, z_bound = multipliers
            if np.any(lam_ineq > 0):
                return np.inf
            r = grad + Jeq.T @ lam_eq + self.ineq_jacobian(y).T @ lam_ineq - z_bound
            return float(np.max(np.abs(r)))
        c_in = self.ineq_constraints(y)
        Jin = self.ineq_jacobian(y)[c_in < active_tol]
        lo, hi = self.bounds()
        at_lo = np.flatnonzero(y - lo < active_tol)
        at_hi = np.flatnonzero(hi - y < active_tol)
        E = np.eye(self.n)
        # grad = Jeq^T l + Jin^T mu + E_lo^T a - E_hi^T b, mu, a, b >= 0
        Acols = np.vstack([Jeq, Jin, E[at_lo], -E[at_hi]]).T
        n_eq = Jeq.shape[0]
        lb = np.concatenate([np.full(n_eq, -np.inf), np.zeros(Acols.shape[1] - n_eq)])
        res = optimize.lsq_linear(Acols, grad, bounds=(lb, np.full(Acols.shape[1], np.inf)),
                                  lsmr_tol="auto", method="bvls")
        return float(np.max(np.abs(Acols @ res.x - grad)))

    def bound_violation(self, y):
        lo, hi = self.bounds()
        z_lo = np.where(np.isfinite(lo), (lo - y) * self.scale, 0.0)
        z_hi = np.where(np.isfinite(hi), (y - hi) * self.scale, 0.0)
        box = np.max(np.concatenate([z_lo, z_hi, [0.0]]))
        tau_box = max(0.0, -np.min(self.ineq_constraints(y)) * TORQUE_SCALE)
        return float(max(box, tau_box))


def transcribe(prob, p, g):
    """Build the NLP for ``prob``.

    The first knot is pinned to cruise equilibrium; with ``final_rest`` the
    last knot is pinned to the stopped equilibrium as well. A cruise state
    outside the rider bounds is not an error here: the NLP is then
    infeasible and the solver reports non-convergence.
    """
    s_eq, tau_R_hold, _ = find_equilibrium(prob.scheme, g, p, prob.v0)
    s_stop, tau_R_stop, _ = find_equilibrium(prob.scheme, g, p, 0.0)
    return NLPInstance(prob, p, g, s_eq, tau_R_hold, s_stop, tau_R_stop)


def solve_nlp(nlp, init=None, max_iter=500, tol=1e-6, method="ip", verbose=False):
    """Solve the transcribed problem.

    ``init`` is a scaled decision vector, a :class:`Trajectory` / solution to
    resample, or ``None`` for the straight-line guess. ``method`` selects the
    interior-point solver (``"ip"``) or scipy's SLSQP (``"slsqp"``).
    Non-convergence is reported through the returned diagnostics rather than
    raised.
    """
    start = time.perf_counter()
    y0 = _initial_vector(nlp, init)
    lo, hi = nlp.bounds()
    y0 = np.clip(y0, lo, hi)
    if method == "ip":
        res = minimize_ip(
            nlp.objective, nlp.objective_grad, y0,
            eq=nlp.eq_constraints, eq_jac=nlp.eq_jacobian,
            ineq=nlp.ineq_constraints, ineq_jac=nlp.ineq_jacobian,
            lo=lo, hi=hi, hess=nlp.lagrangian_hessian, tol=1e-2 * tol, max_iter=max_iter, verbose=verbose,
        )
        y, nit, ok, msg = res.x, res.iterations, res.success, res.message
        mult = (res.lam_eq, res.lam_ineq, res.z_bound)
    elif method == "slsqp":
        cons = [
            {"type": "eq", "fun": nlp.eq_constraints, "jac": nlp.eq_jacobian},
            {"type": "ineq", "fun": nlp.ineq_constraints, "jac": nlp.ineq_jacobian},
        ]
        bounds = list(zip(np.where(np.isfinite(lo), lo, None), np.where(np.isfinite(hi), hi, None)))
        res = optimize.minimize(
            nlp.objective, y0, jac=nlp.objective_grad, method="SLSQP", bounds=bounds,
            constraints=cons, options={"maxiter": max_iter, "ftol": 1e-12},
        )
        y, nit, ok, msg = res.x, res.nit, res.status == 0, str(res.message)
        mult = None
    else:
        raise ValueError(f"unknown method {method!r}")

    max_def = nlp.max_defect(y)
    kkt = nlp.kkt_residual(y, mult)
    viol = nlp.bound_violation(y)
    eq_viol = float(np.max(np.abs(nlp.eq_constraints(y)[nlp.n_defects :]))) * max(STATE_SCALE.max(), TORQUE_SCALE)
    converged = bool(ok and max_def < tol and kkt < tol and viol < 1e-8 and eq_viol < tol)
    _, _, t_F = nlp.unpack(y)
    return OptimalSolution(
        trajectory=nlp.to_trajectory(y),
        J_star=nlp.objective(y),
        t_F=float(t_F),
        iterations=int(nit),
        max_defect=max_def,
        kkt_residual=kkt,
        converged=converged,
        message=msg,
        z=y,
        runtime=time.perf_counter() - start,
    )


def _initial_vector(nlp, init):
    if init is None:
        return nlp.initial_guess()
    if isinstance(init, OptimalSolution):
        init = init.trajectory
    if isinstance(init, Trajectory):
        t_F = float(np.clip(init.t[-1], *nlp.prob.t_F_bounds))
        tn = np.linspace(0.0, init.t[-1], nlp.N + 1)
        X = np.column_stack([np.interp(tn, init.t, init.states[:, j]) for j in range(6)])
        U = np.interp(tn, init.t, init.inputs[:, 0])
        # keep the pinned first knot consistent with this problem's equilibrium
        X = X + (nlp.s_eq - X[0]) * np.linspace(1.0, 0.0, nlp.N + 1)[:, None]
        U = U + (nlp.tau_R_hold - U[0]) * np.linspace(1.0, 0.0, nlp.N + 1)
        return nlp.pack(X, U, t_F)
    return np.asarray(init, dtype=float)


DEFAULT_SWEEP_SCHEMES = ("hics1", "hics2", "hacs1")
DEFAULT_SENSITIVITIES = tuple(round(0.1 * i, 1) for i in range(11))


@dataclass
class SweepRow:
    scheme: str
    param_name: str
    param_value: float
    status: str
    solution: OptimalSolution = None
    metrics: object = None  # BrakingMetrics or None
    error: str = ""


def _better(a, b):
    """Prefer converged solutions, then lower objective."""
    if b is None:
        return a
    if a is None or (b.converged, -b.J_star) > (a.converged, -a.J_star):
        return b
    return a


def _solve_chain(kind, sensitivities, p, g, problem_kw, max_iter, tol, restarts, rng):
    rows, nlps = [], []
    for nu in sensitivities:
        scheme = ControlScheme.from_name(kind, nu)
        rows.append(SweepRow(kind, scheme.param_name, float(nu), "failed"))
        try:
            nlps.append(transcribe(BrakingProblem(scheme, **problem_kw), p, g))
        except Exception as exc:  # noqa: BLE001 - a sweep never aborts
            rows[-1].error = f"{type(exc).__name__}: {exc}"
            nlps.append(None)

    best = [None] * len(nlps)

    def attempt(i, init):
        try:
            best[i] = _better(best[i], solve_nlp(nlps[i], init=init, max_iter=max_iter, tol=tol))
        except Exception as exc:  # noqa: BLE001
            rows[i].error = f"{type(exc).__name__}: {exc}"

    # forward pass: default guess, left neighbour, random final-time guesses
    for i, nlp in enumerate(nlps):
        if nlp is None:
            continue
        attempt(i, None)
        if i > 0 and best[i - 1] is not None:
            attempt(i, best[i - 1])
        lo, hi = nlp.prob.t_F_bounds
        for t_F in rng.uniform(lo, min(hi, 4.0 * max(nlp.prob.v0, 0.1)), size=restarts):
            attempt(i, nlp.initial_guess(float(t_F)))
    # backward pass lets a good basin found downstream propagate upstream
    for i in range(len(nlps) - 2, -1, -1):
        if nlps[i] is not None and best[i + 1] is not None and best[i + 1].converged:
            attempt(i, best[i + 1])

    for row, nlp, sol in zip(rows, nlps, best):
        if sol is None:
            continue
        row.solution = sol
        row.status = "converged" if sol.converged else "not_converged"
        try:
            row.metrics = compute_metrics(sol.trajectory, nlp.prob.weights, p)
        except NoStopDetectedError as exc:
            row.error = str(exc)
    return rows


def sweep(schemes=DEFAULT_SWEEP_SCHEMES, sensitivities=DEFAULT_SENSITIVITIES, p=None, g=None,
          weights=None, workers=1, max_iter=200, tol=1e-6, restarts=2, seed=0, **problem_kw):
    """Solve every (scheme, sensitivity) condition.

    Each scheme is a chain over ascending sensitivity. Every condition keeps
    the best of a cold start, a warm start from its left neighbour,
    ``restarts`` seeded random final-time guesses and, in a backward pass, a
    warm start from its right neighbour. The problem is non-convex, so the
    extra starts guard against reporting a poor local minimum. Chains run on
    up to ``workers`` threads; rows come back in ``schemes`` x
    ``sensitivities`` order whatever the worker count.
    """
    from concurrent.futures import ThreadPoolExecutor

    if p is None:
        p = RiderBallbotParams.default_rider()
    if g is None:
        g = balance_gains(p)
    if weights is not None:
        problem_kw["weights"] = weights
    order = sorted(range(len(sensitivities)), key=lambda i: sensitivities[i])
    ordered = [sensitivities[i] for i in order]
    with ThreadPoolExecutor(max_workers=max(1, int(workers))) as pool:
        futures = [
            pool.submit(_solve_chain, k, ordered, p, g, dict(problem_kw), max_iter, tol, restarts,
                        np.random.default_rng([int(seed), j]))
            for j, k in enumerate(schemes)
        ]
        chains = [f.result() for f in futures]
    rows = []
    for chain in chains:
        back = [None] * len(order)
        for pos, i in enumerate(order):
            back[i] = chain[pos]
        rows.extend(back)
    return rows
