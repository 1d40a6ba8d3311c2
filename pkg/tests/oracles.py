"""Independent reference solvers used by the tests."""

import cvxpy as cp
import numpy as np
import mpmath as mp


def grid_restricted_solve(prob, y, lam, G=64):
    """Convex solve of the regularised problem with measures supported on ``k/G``.

    Written directly from the definitions of ``K`` and ``R`` per family,
    without the library's atom machinery: scalar and demixing become a
    LASSO (plus a free l1 vector for demixing), group-l2 a group LASSO with
    one R^d block per grid point, group-l1 a LASSO over all components.
    Returns the optimal objective value.
    """
    x = np.arange(G) / G
    phi = prob.bank.evaluate(x, 0)  # (G, N, d)
    N, d = prob.N, prob.d
    y = np.asarray(y, dtype=float)
    if prob.family in ("scalar-blasso", "demixing"):
        v = cp.Variable(G)
        fwd = phi[:, :, 0].T @ v
        pen = cp.norm1(v)
        if prob.family == "demixing":
            z = cp.Variable(N)
            fwd = fwd + z
            pen = pen + cp.norm1(z)
    else:
        V = cp.Variable((G, d))
        M = phi.transpose(1, 0, 2).reshape(N, G * d)
        fwd = M @ cp.vec(V, order="C")
        pen = cp.sum(cp.norm(V, 2, axis=1)) if prob.family == "group-l2" else cp.sum(cp.abs(V))
    obj = 0.5 * cp.sum_squares(fwd - y) + lam * pen
    problem = cp.Problem(cp.Minimize(obj))
    problem.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
    return float(problem.value)


def nonneg_lasso(A, y, lam):
    c = cp.Variable(A.shape[1], nonneg=True)
    cp.Problem(cp.Minimize(0.5 * cp.sum_squares(A @ c - y) + lam * cp.sum(c))).solve(
        solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12
    )
    return np.asarray(c.value)



def curve_fd_mp(bank, p, a1, a2, x1, dx, t, h=1e-4, dps=30):
    """Central second difference, step ``h``, of ``t -> <eta, gamma(t)>`` on the l2 curve.

    ``gamma(t) = a_t/|a_t| delta_{x1 + t dx}`` with ``a_t = a1 + t (a2 - a1)``.
    The pairing is evaluated in ``dps``-digit arithmetic straight from the
    cosine parameters of a Fourier bank, so the difference quotient carries
    no double-precision roundoff.
    """
    with mp.workdps(dps):
        t, h = mp.mpf(t), mp.mpf(h)
        w = [[mp.mpf(float(p[i] * bank.amplitudes[i, k])) for k in range(bank.d)] for i in range(bank.N)]
        vals = []
        for s in (t - h, t, t + h):
            a = [mp.mpf(u) + s * (mp.mpf(v) - mp.mpf(u)) for u, v in zip(a1, a2)]
            n = mp.sqrt(mp.fsum(c * c for c in a))
            x = 2 * mp.pi * (mp.mpf(x1) + s * mp.mpf(dx))
            eta = [
                mp.fsum(w[i][k] * mp.cos(int(bank.frequencies[i, k]) * x + bank.phases[i, k]) for i in range(bank.N))
                for k in range(bank.d)
            ]
            vals.append(mp.fsum(e * c for e, c in zip(eta, a)) / n)
        return float((vals[0] - 2 * vals[1] + vals[2]) / h**2)
