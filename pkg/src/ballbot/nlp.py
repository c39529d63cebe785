"""Primal-dual interior-point solver for small dense nonlinear programs.

Solves

    min f(x)  s.t.  c(x) = 0,  d(x) >= 0,  lo <= x <= hi

with a log barrier on the bounds and on slacks ``s = d(x)``. Each iteration
factors the condensed primal-dual system

    [ W + Sx   Ae^T   Ai^T     ] [dx ]
    [ Ae       -dc I  0        ] [dle]
    [ Ai       0      -Ss^-1   ] [dli]

once and reuses the factors for a second-order correction. ``W`` is either a
damped BFGS approximation of the Lagrangian Hessian or a user-supplied exact
Hessian; in the latter case ``W`` is shifted until the system has the right
inertia. Globalization is a backtracking filter line search in the style of IPOPT,
with a second-order correction on the first rejected trial.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg


@dataclass
class NLPResult:
    x: np.ndarray
    fun: float
    lam_eq: np.ndarray
    lam_ineq: np.ndarray
    z_bound: np.ndarray  # lower-bound minus upper-bound multipliers, per variable
    iterations: int
    kkt_error: float
    constraint_violation: float
    success: bool
    message: str


def _inertia(D):
    """Count (positive, negative, zero) eigenvalues of an LDL block-diagonal factor."""
    pos = neg = zero = 0
    i, n = 0, D.shape[0]
    while i < n:
        if i + 1 < n and D[i + 1, i] != 0.0:
            ev = np.linalg.eigvalsh(D[i : i + 2, i : i + 2])
            i += 2
        else:
            ev = [D[i, i]]
            i += 1
        for e in ev:
            if e > 1e-14:
                pos += 1
            elif e < -1e-14:
                neg += 1
            else:
                zero += 1
    return pos, neg, zero


def minimize_ip(fun, grad, x0, eq=None, eq_jac=None, ineq=None, ineq_jac=None,
                lo=None, hi=None, hess=None, tol=1e-8, max_iter=500, mu0=0.1,
                verbose=False):
    """Minimize ``fun`` subject to equality, inequality and bound constraints.

    ``hess(x, lam_eq, lam_ineq)`` returns the Hessian of
    ``f + lam_eq.c + lam_ineq.d``; without it BFGS is used. Convergence means
    the scaled KKT error (stationarity, feasibility, complementarity at zero
    barrier) is below ``tol``. Running out of iterations returns the last
    iterate with ``success=False``.
    """
    x = np.asarray(x0, dtype=float).copy()
    n = len(x)
    lo = np.full(n, -np.inf) if lo is None else np.asarray(lo, dtype=float)
    hi = np.full(n, np.inf) if hi is None else np.asarray(hi, dtype=float)
    if np.any(lo > hi):
        raise ValueError("lower bound above upper bound")
    fixed = lo == hi
    if fixed.any():
        return _solve_without_fixed(fixed, fun, grad, x, eq, eq_jac, ineq, ineq_jac, lo, hi, hess,
                                    tol=tol, max_iter=max_iter, mu0=mu0, verbose=verbose)
    eq = eq or (lambda x: np.zeros(0))
    eq_jac = eq_jac or (lambda x: np.zeros((0, n)))
    ineq = ineq or (lambda x: np.zeros(0))
    ineq_jac = ineq_jac or (lambda x: np.zeros((0, n)))

    iL = np.flatnonzero(np.isfinite(lo))
    iU = np.flatnonzero(np.isfinite(hi))
    # push the start strictly inside the box
    kappa1, kappa2 = 1e-2, 1e-2
    for idx in iL:
        span = hi[idx] - lo[idx] if np.isfinite(hi[idx]) else np.inf
        push = min(kappa1 * max(1.0, abs(lo[idx])), kappa2 * span)
        x[idx] = max(x[idx], lo[idx] + push)
    for idx in iU:
        span = hi[idx] - lo[idx] if np.isfinite(lo[idx]) else np.inf
        push = min(kappa1 * max(1.0, abs(hi[idx])), kappa2 * span)
        x[idx] = min(x[idx], hi[idx] - push)

    c, d = eq(x), ineq(x)
    m_e, m_i = len(c), len(d)
    s = np.maximum(d, 1e-2)
    mu = mu0
    zL = mu / (x[iL] - lo[iL])
    zU = mu / (hi[iU] - x[iU])
    v = mu / s
    lam_e = np.zeros(m_e)
    lam_i = -v.copy()  # stationarity in s: -lam_i - v = 0
    g = grad(x)
    Ae, Ai = eq_jac(x), ineq_jac(x)
    B = np.eye(n)
    th_start = max(1.0, np.sum(np.abs(c)) + np.sum(np.abs(d - s)))
    theta_max, theta_min = 1e4 * th_start, 1e-4 * th_start
    filt = []
    tau_min = 0.99
    delta_prev = 0.0
    message = "iteration limit reached"
    success = False

    def barrier_obj(x, s, f, mu):
        return f - mu * (np.sum(np.log(x[iL] - lo[iL])) + np.sum(np.log(hi[iU] - x[iU])) + np.sum(np.log(s)))

    def infeas(c, d, s):
        return np.sum(np.abs(c)) + np.sum(np.abs(d - s))

    def errors(mu):
        grad_L = g + Ae.T @ lam_e + Ai.T @ lam_i
        grad_L[iL] -= zL
        grad_L[iU] += zU
        stat = np.max(np.abs(grad_L), initial=0.0)
        stat = max(stat, np.max(np.abs(-lam_i - v), initial=0.0))
        feas = max(np.max(np.abs(c), initial=0.0), np.max(np.abs(d - s), initial=0.0))
        comp = max(
            np.max(np.abs((x[iL] - lo[iL]) * zL - mu), initial=0.0),
            np.max(np.abs((hi[iU] - x[iU]) * zU - mu), initial=0.0),
            np.max(np.abs(s * v - mu), initial=0.0),
        )
        s_max = 100.0
        n_dual = m_e + m_i + len(zL) + len(zU) + len(v)
        dual_norm = (np.sum(np.abs(lam_e)) + np.sum(np.abs(lam_i)) + np.sum(zL) + np.sum(zU) + np.sum(v)) / max(n_dual, 1)
        s_d = max(s_max, dual_norm) / s_max
        n_z = len(zL) + len(zU) + len(v)
        s_c = max(s_max, (np.sum(zL) + np.sum(zU) + np.sum(v)) / max(n_z, 1)) / s_max
        return max(stat / s_d, feas, comp / s_c), stat, feas

    f = fun(x)
    it = 0
    step_info = "-"
    for it in range(1, max_iter + 1):
        E0, stat0, feas0 = errors(0.0)
        if verbose:
            print(f"{it:4d} f={f:.8e} err={E0:.2e} stat={stat0:.2e} feas={feas0:.2e} mu={mu:.1e} "
                  f"step={step_info}")
        if E0 < tol:
            success, message = True, "converged"
            it -= 1
            break
        # barrier parameter update (monotone)
        while errors(mu)[0] <= 10.0 * mu and mu > tol / 10.0:
            mu = max(tol / 10.0, min(0.2 * mu, mu**1.5))
            tau_min = max(0.99, 1.0 - mu)
            filt.clear()

        dL = x[iL] - lo[iL]
        dU = hi[iU] - x[iU]
        Sx = np.zeros(n)
        Sx[iL] += zL / dL
        Sx[iU] += zU / dU
        Ss = v / s

        W = hess(x, lam_e, lam_i) if hess is not None else B
        r_x = g + Ae.T @ lam_e + Ai.T @ lam_i
        r_x[iL] -= mu / dL
        r_x[iU] += mu / dU

        N_tot = n + m_e + m_i
        K = np.zeros((N_tot, N_tot))
        K[n : n + m_e, :n] = Ae
        K[:n, n : n + m_e] = Ae.T
        K[n + m_e :, :n] = Ai
        K[:n, n + m_e :] = Ai.T
        K[n + m_e :, n + m_e :] = -np.diag(1.0 / Ss)
        delta_c = 1e-10
        K[n : n + m_e, n : n + m_e] = -delta_c * np.eye(m_e)

        delta = 0.0
        for _attempt in range(40):
            Kw = K.copy()
            Kw[:n, :n] = W + np.diag(Sx) + delta * np.eye(n)
            if hess is None:
                break
            _, Dl, _ = linalg.ldl(Kw, lower=True)
            pos, neg, zero = _inertia(Dl)
            if pos == n and neg == m_e + m_i and zero == 0:
                break
            if delta == 0.0:
                delta = 1e-4 if delta_prev == 0.0 else max(1e-20, delta_prev / 3.0)
            else:
                delta *= 8.0 if delta_prev == 0.0 else 3.0
        delta_prev = delta
        lu = linalg.lu_factor(Kw, check_finite=False)

        def solve_step(c_rhs, dms_rhs):
            r_i = -dms_rhs + (lam_i + mu / s) / Ss
            sol = linalg.lu_solve(lu, -np.concatenate([r_x, c_rhs, -r_i]), check_finite=False)
            dlam_i = sol[n + m_e :]
            return sol[:n], sol[n : n + m_e], dlam_i, (lam_i + mu / s + dlam_i) / Ss

        dx, dlam_e, dlam_i, ds = solve_step(c, d - s)

        dzL = mu / dL - zL - (zL / dL) * dx[iL]
        dzU = mu / dU - zU + (zU / dU) * dx[iU]
        dv = mu / s - v - Ss * ds

        def frac_to_boundary(val, dval):
            neg_ = dval < 0
            if not np.any(neg_):
                return 1.0
            return min(1.0, float(np.min(-tau_min * val[neg_] / dval[neg_])))

        def primal_max(dx_, ds_):
            return min(frac_to_boundary(dL, dx_[iL]), frac_to_boundary(dU, -dx_[iU]), frac_to_boundary(s, ds_))

        a_max = primal_max(dx, ds)
        a_dual = min(frac_to_boundary(zL, dzL), frac_to_boundary(zU, dzU), frac_to_boundary(v, dv))

        th0 = infeas(c, d, s)
        ph0 = barrier_obj(x, s, f, mu)
        grad_phi_x = g.copy()
        grad_phi_x[iL] -= mu / dL
        grad_phi_x[iU] += mu / dU
        D = grad_phi_x @ dx - mu * np.sum(ds / s)

        def acceptable(alpha_, th_t, ph_t):
            """Filter test; returns (accepted, objective-type step)."""
            if not (np.isfinite(ph_t) and th_t <= theta_max):
                return False, False
            if any(th_t >= th_j and ph_t >= ph_j for th_j, ph_j in filt):
                return False, False
            switching = D < 0 and alpha_ * (-D) ** 2.3 > th0**1.1
            if th0 <= theta_min and switching:
                return ph_t <= ph0 + 1e-4 * alpha_ * D, True
            return th_t <= (1.0 - 1e-5) * th0 or ph_t <= ph0 - 1e-8 * th0, False

        alpha = a_max
        accepted = f_type = False
        for ls in range(40):
            x_t, s_t = x + alpha * dx, s + alpha * ds
            f_t, c_t, d_t = fun(x_t), eq(x_t), ineq(x_t)
            th_t = infeas(c_t, d_t, s_t)
            accepted, f_type = acceptable(alpha, th_t, barrier_obj(x_t, s_t, f_t, mu))
            if accepted:
                break
            if ls == 0 and th_t >= th0:
                # second-order correction against the Maratos effect
                dx_c, _, _, ds_c = solve_step(alpha * c + c_t, alpha * (d - s) + (d_t - s_t))
                a_soc = primal_max(dx_c, ds_c)
                x_c, s_c = x + a_soc * dx_c, s + a_soc * ds_c
                f_c, c_c, d_c = fun(x_c), eq(x_c), ineq(x_c)
                accepted, f_type = acceptable(alpha, infeas(c_c, d_c, s_c), barrier_obj(x_c, s_c, f_c, mu))
                if accepted:
                    x_t, s_t, f_t, c_t, d_t = x_c, s_c, f_c, c_c, d_c
                    break
            alpha *= 0.5
        if not accepted:
            # no acceptable point: take the short step and forget the filter
            filt.clear()
        elif not f_type:
            filt.append(((1.0 - 1e-5) * th0, ph0 - 1e-8 * th0))

        step_info = f"a={alpha:.2e}/{a_max:.2e} ad={a_dual:.2e} dlt={delta:.1e} ok={int(accepted)}"
        lam_e_new = lam_e + a_dual * dlam_e
        lam_i_new = lam_i + a_dual * dlam_i
        zL = zL + a_dual * dzL
        zU = zU + a_dual * dzU
        v = v + a_dual * dv
        # keep bound multipliers within a factor of their barrier values
        kap = 1e10
        zL = np.clip(zL, mu / (kap * (x_t[iL] - lo[iL])), kap * mu / (x_t[iL] - lo[iL]))
        zU = np.clip(zU, mu / (kap * (hi[iU] - x_t[iU])), kap * mu / (hi[iU] - x_t[iU]))
        v = np.clip(v, mu / (kap * s_t), kap * mu / s_t)

        g_t = grad(x_t)
        Ae_t, Ai_t = eq_jac(x_t), ineq_jac(x_t)
        if hess is None:
            sk = x_t - x
            yk = (g_t + Ae_t.T @ lam_e_new + Ai_t.T @ lam_i_new) - (g + Ae.T @ lam_e_new + Ai.T @ lam_i_new)
            Bs = B @ sk
            sBs = sk @ Bs
            sy = sk @ yk
            if sBs > 1e-16:
                if sy < 0.2 * sBs:
                    theta = 0.8 * sBs / (sBs - sy)
                    yk = theta * yk + (1.0 - theta) * Bs
                    sy = sk @ yk
                B = B - np.outer(Bs, Bs) / sBs + np.outer(yk, yk) / sy

        x, s, f, c, d, g, Ae, Ai = x_t, s_t, f_t, c_t, d_t, g_t, Ae_t, Ai_t
        lam_e, lam_i = lam_e_new, lam_i_new
    else:
        it = max_iter

    E0, _, feas = errors(0.0)
    z_bound = np.zeros(n)
    z_bound[iL] += zL
    z_bound[iU] -= zU
    return NLPResult(
        x=x,
        fun=float(f),
        lam_eq=lam_e,
        lam_ineq=lam_i,
        z_bound=z_bound,
        iterations=it,
        kkt_error=float(E0),
        constraint_violation=float(max(feas, np.max(-d, initial=0.0))),
        success=success,
        message=message,
    )


def _solve_without_fixed(fixed, fun, grad, x, eq, eq_jac, ineq, ineq_jac, lo, hi, hess, **kw):
    """Eliminate variables with ``lo == hi`` and solve over the rest.

    A fixed variable leaves no interior for the barrier. Its bound multiplier
    is recovered afterwards as the Lagrangian gradient component.
    """
    free = ~fixed
    x = x.copy()
    x[fixed] = lo[fixed]
    n = len(x)

    def full(xf):
        out = x.copy()
        out[free] = xf
        return out

    def cols(jac):
        return None if jac is None else (lambda xf: np.atleast_2d(jac(full(xf)))[:, free])

    def wrap(f):
        return None if f is None else (lambda xf: f(full(xf)))

    red_hess = None if hess is None else (lambda xf, le, li: hess(full(xf), le, li)[np.ix_(free, free)])
    res = minimize_ip(
        lambda xf: fun(full(xf)), lambda xf: grad(full(xf))[free], x[free],
        wrap(eq), cols(eq_jac), wrap(ineq), cols(ineq_jac), lo[free], hi[free], red_hess, **kw,
    )
    xs = full(res.x)
    grad_L = np.asarray(grad(xs), dtype=float).copy()
    if eq_jac is not None and len(res.lam_eq):
        grad_L += np.atleast_2d(eq_jac(xs)).T @ res.lam_eq
    if ineq_jac is not None and len(res.lam_ineq):
        grad_L += np.atleast_2d(ineq_jac(xs)).T @ res.lam_ineq
    z = np.zeros(n)
    z[free] = res.z_bound
    z[fixed] = grad_L[fixed]
    res.x, res.z_bound = xs, z
    return res
