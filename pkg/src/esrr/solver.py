"""Sliding conditional-gradient solver for the Tikhonov-regularised problems.

    minimise  0.5 * |K u - y|^2 + lam * R(u)

over sparse signals of the problem family.  Each outer iteration forms the
residual certificate ``p = (y - K u) / lam``, asks the linear minimisation
oracle for the extreme point with the largest pairing, stops if that
pairing is at most ``1 + gap_tol``, and otherwise inserts the atom,
re-optimises all coefficients, and slides positions, directions and
coefficients jointly by damped Newton steps.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _scan
from .atoms import (
    AxisSpike,
    CanonicalSpike,
    SparseSignal,
    TorusSpike,
    VectorSpike,
    dictionary,
    forward_signal,
)
from .certificate import Certificate
from .errors import NoConvergenceError
from .torus import torus_dist, wrap

log = logging.getLogger(__name__)

MERGE_TOL = 1e-6


@dataclass
class SolverConfig:
    max_outer_iters: int = 200
    lmo_grid: int = 4096
    polish_iters: int = 20
    slide_iters: int = 50
    coeff_tol: float = 1e-10
    gap_tol: float = 1e-7
    prune_tol: float = 1e-10

    def __post_init__(self):
        for name in ("coeff_tol", "gap_tol", "prune_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.lmo_grid < 16:
            raise ValueError("lmo_grid must be at least 16")
        if self.max_outer_iters < 1 or self.slide_iters < 0 or self.polish_iters < 0:
            raise ValueError("iteration counts must be non-negative (outer >= 1)")

    def to_dict(self):
        return asdict(self)


@dataclass
class SolveResult:
    u: SparseSignal
    objective: float
    certificate_sup: float
    iterations: int
    converged: bool
    p: np.ndarray = None
    history: list = field(default_factory=list)


@dataclass
class LmoResult:
    atom: object
    value: float
    degenerate: bool = False

    def __iter__(self):
        return iter((self.atom, self.value))


def objective(prob, u, y, lam):
    r = forward_signal(prob, u) - y
    return 0.5 * float(r @ r) + lam * float(sum(u.coefs))


def residual_certificate(prob, u, y, lam):
    if not lam > 0:
        raise ValueError("lambda must be positive")
    return Certificate((np.asarray(y, float) - forward_signal(prob, u)) / lam, prob)


def lmo(prob, cert, grid=4096, polish_iters=20):
    """Extreme point maximising ``<K* p, u>`` and the attained value."""
    if not np.any(cert.p):
        first = _scan.scan_candidates(prob, cert.p, grid, 0)
        return LmoResult(min(first, key=lambda c: c.order_key).atom, 0.0, True)
    best = _scan.best_candidate(_scan.scan_candidates(prob, cert.p, grid, polish_iters))
    return LmoResult(best.atom, best.value, False)


# ---------------------------------------------------------------------------
# coefficients


def _nonneg_lasso(A, y, lam, tol, max_iter=None):
    """Active-set (Lawson-Hanson style) solve of min 0.5|Ac - y|^2 + lam sum c, c >= 0."""
    n = A.shape[1]
    G = A.T @ A
    q = A.T @ y - lam
    c = np.zeros(n)
    active = np.zeros(n, dtype=bool)
    max_iter = max_iter or 10 * n + 10

    def sub(mask):
        idx = np.flatnonzero(mask)
        z = np.zeros(n)
        Gp = G[np.ix_(idx, idx)]
        sol, *_ = np.linalg.lstsq(Gp, q[idx], rcond=None)
        # one step of iterative refinement
        corr, *_ = np.linalg.lstsq(Gp, q[idx] - Gp @ sol, rcond=None)
        z[idx] = sol + corr
        return z

    for _ in range(max_iter):
        w = q - G @ c
        cand = np.flatnonzero(~active & (w > tol))
        if cand.size == 0:
            break
        active[cand[np.argmax(w[cand])]] = True
        for _ in range(max_iter):
            z = sub(active)
            neg = active & (z <= 0)
            if not np.any(neg):
                c = z
                break
            ratio = c[neg] / (c[neg] - z[neg])
            alpha = float(np.min(ratio))
            c = c + alpha * (z - c)
            active &= c > 1e-300
            c[~active] = 0.0
        else:
            raise NoConvergenceError("coefficient subproblem: inner loop did not terminate")
    else:
        raise NoConvergenceError("coefficient subproblem hit its iteration cap")
    return c


def kkt_residual(A, y, lam, c):
    g = A.T @ (A @ c - y) + lam
    act = c > 0
    r_act = np.max(np.abs(g[act])) if np.any(act) else 0.0
    r_ina = np.max(np.maximum(-g[~act], 0.0)) if np.any(~act) else 0.0
    return float(max(r_act, r_ina))


def coefficient_subproblem(prob, atoms, y, lam, cfg=None):
    """Non-negative coefficients minimising ``0.5 |A c - y|^2 + lam sum c``."""
    cfg = cfg or SolverConfig()
    atoms = list(atoms)
    if not atoms:
        return np.zeros(0)
    A = dictionary(prob, atoms)
    y = np.asarray(y, dtype=float)
    c = _nonneg_lasso(A, y, lam, cfg.coeff_tol)
    res = kkt_residual(A, y, lam, c)
    if res > cfg.coeff_tol:
        raise NoConvergenceError(f"coefficient subproblem KKT residual {res:.3e} > {cfg.coeff_tol:.1e}")
    return c


# ---------------------------------------------------------------------------
# sliding


class _Params:
    """Flat smooth parametrisation of a signal with fixed discrete tags.

    A spike with coefficient ``c`` is stored as an amplitude ``b``: the
    signed scalar ``sign * c``, or the vector ``c * a`` for l2 atoms, so
    that ``R`` is ``sum |b|`` and the direction stays on the sphere.
    """

    def __init__(self, prob, u):
        self.prob = prob
        self.kinds = []
        self.slots = []
        theta = []
        for c, atom in u:
            start = len(theta)
            if isinstance(atom, CanonicalSpike):
                self.kinds.append(("canon", atom.k - 1))
                theta.append(atom.sign * c)
            elif isinstance(atom, VectorSpike):
                self.kinds.append(("vec", None))
                theta.append(atom.x)
                theta.extend(c * np.asarray(atom.a))
            else:
                comp = atom.k - 1 if isinstance(atom, AxisSpike) else 0
                self.kinds.append(("axis" if isinstance(atom, AxisSpike) else "spike", comp))
                theta.extend([atom.x, atom.sign * c])
            self.slots.append(slice(start, len(theta)))
        self.theta0 = np.array(theta, dtype=float)

    def signal(self, theta, prune_tol=0.0):
        coefs, atoms = [], []
        for (kind, comp), sl in zip(self.kinds, self.slots):
            v = theta[sl]
            if kind == "canon":
                c = abs(v[0])
                atom = CanonicalSpike(comp + 1, 1 if v[0] > 0 else -1) if c > 0 else None
            elif kind == "vec":
                c = float(np.linalg.norm(v[1:]))
                atom = VectorSpike.normalized(v[1:], v[0]) if c > 0 else None
            else:
                c = abs(v[1])
                s = 1 if v[1] > 0 else -1
                if c == 0:
                    atom = None
                elif kind == "axis":
                    atom = AxisSpike(comp + 1, s, v[0])
                else:
                    atom = TorusSpike(s, v[0])
            if atom is not None and c > prune_tol:
                coefs.append(c)
                atoms.append(atom)
        return _merge(coefs, atoms)

    def value_grad_hess(self, theta, y, lam, need_hess=True):
        prob = self.prob
        N = prob.N
        P = theta.size
        J = np.zeros((N, P))
        Hr = np.zeros((P, P))
        fwd = np.zeros(N)
        reg = 0.0
        greg = np.zeros(P)
        Hreg = np.zeros((P, P))
        spikes = [(i, sl) for i, ((k, _), sl) in enumerate(zip(self.kinds, self.slots)) if k != "canon"]
        if spikes:
            xs = np.array([theta[sl][0] for _, sl in spikes])
            ph0, ph1, ph2 = (prob.bank.evaluate(xs, o) for o in (0, 1, 2))
        j = 0
        second = []
        for (kind, comp), sl in zip(self.kinds, self.slots):
            v = theta[sl]
            if kind == "canon":
                J[comp, sl.start] = 1.0
                fwd[comp] += v[0]
                reg += abs(v[0])
                greg[sl.start] = np.sign(v[0])
                continue
            if kind == "vec":
                b = v[1:]
                M0, M1, M2 = ph0[j], ph1[j], ph2[j]
            else:
                b = v[1:2]
                M0, M1, M2 = ph0[j][:, comp:comp + 1], ph1[j][:, comp:comp + 1], ph2[j][:, comp:comp + 1]
            j += 1
            ix = sl.start
            ib = slice(sl.start + 1, sl.stop)
            fwd += M0 @ b
            J[:, ix] = M1 @ b
            J[:, ib] = M0
            nb = np.linalg.norm(b)
            reg += nb
            if nb > 0:
                greg[ib] = b / nb
                if kind == "vec":
                    bh = b / nb
                    Hreg[ib, ib] = (np.eye(b.size) - np.outer(bh, bh)) / nb
            second.append((ix, ib, M1, M2, b))
        r = fwd - y
        f = 0.5 * float(r @ r) + lam * reg
        g = J.T @ r + lam * greg
        if not need_hess:
            return f, g, None
        for ix, ib, M1, M2, b in second:
            Hr[ix, ix] += r @ (M2 @ b)
            cross = M1.T @ r
            Hr[ix, ib] += cross
            Hr[ib, ix] += cross
        H = J.T @ J + Hr + lam * Hreg
        return f, g, H

    def feasible(self, theta, step):
        """Largest fraction of ``step`` keeping every scalar amplitude's sign."""
        t = 1.0
        for (kind, _), sl in zip(self.kinds, self.slots):
            if kind == "vec":
                continue
            i = sl.start if kind == "canon" else sl.start + 1
            b, s = theta[i], step[i]
            if b * s < 0 and abs(s) >= abs(b):
                t = min(t, 0.999 * abs(b) / abs(s))
        for (kind, _), sl in zip(self.kinds, self.slots):
            if kind != "canon" and abs(step[sl.start]) * t > 0.05:
                t = min(t, 0.05 / abs(step[sl.start]))
        return t


def _merge(coefs, atoms):
    """Combine atoms with equal tags whose positions differ by < MERGE_TOL."""
    out_c, out_a = [], []
    for c, a in zip(coefs, atoms):
        for j, b in enumerate(out_a):
            if type(a) is not type(b) or isinstance(a, CanonicalSpike) and a != b:
                continue
            if isinstance(a, CanonicalSpike):
                out_c[j] += c
                break
            if torus_dist(a.x, b.x) >= MERGE_TOL:
                continue
            if isinstance(a, VectorSpike):
                v = out_c[j] * np.asarray(b.a) + c * np.asarray(a.a)
                if np.linalg.norm(v) == 0:
                    continue
                out_c[j] = float(np.linalg.norm(v))
                out_a[j] = VectorSpike.normalized(v, b.x)
                break
            if a.sign == b.sign and getattr(a, "k", None) == getattr(b, "k", None):
                out_c[j] += c
                break
        else:
            out_c.append(c)
            out_a.append(a)
    keep = [i for i, c in enumerate(out_c) if c > 0]
    return SparseSignal(tuple(out_c[i] for i in keep), tuple(out_a[i] for i in keep))


def slide(prob, u, y, lam, cfg=None):
    """Joint damped-Newton descent on positions, directions and coefficients.

    Discrete tags never change; a scalar amplitude may shrink to zero but
    not change sign, in which case the atom is dropped.  The objective is
    non-increasing.
    """
    cfg = cfg or SolverConfig()
    if len(u) == 0 or cfg.slide_iters == 0:
        return u
    y = np.asarray(y, dtype=float)
    par = _Params(prob, u)
    theta = par.theta0.copy()
    f, g, H = par.value_grad_hess(theta, y, lam)
    for _ in range(cfg.slide_iters):
        w, V = np.linalg.eigh(H)
        floor = 1e-12 * max(1.0, float(np.max(np.abs(w))))
        step = -V @ ((V.T @ g) / np.maximum(np.abs(w), floor))
        t = par.feasible(theta, step)
        slope = float(g @ step)
        if slope >= 0:
            step, slope = -g, -float(g @ g)
            t = par.feasible(theta, step)
        accepted = False
        for _ in range(40):
            trial = theta + t * step
            ft, gt, Ht = par.value_grad_hess(trial, y, lam)
            if ft <= f + 1e-4 * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted or ft >= f:
            if accepted and ft == f:
                theta = trial
            break
        converged = f - ft <= 1e-16 * max(1.0, abs(f))
        theta, f, g, H = trial, ft, gt, Ht
        if converged:
            break
    for (kind, _), sl in zip(par.kinds, par.slots):
        if kind != "canon":
            theta[sl.start] = wrap(theta[sl.start])
    out = par.signal(theta)
    # a merge of near-coincident atoms must not raise the objective
    if objective(prob, out, y, lam) > objective(prob, u, y, lam):
        return u
    return out


def _prune(coefs, atoms, tol):
    keep = [i for i, c in enumerate(coefs) if c > tol]
    return _merge([coefs[i] for i in keep], [atoms[i] for i in keep])


def solve(prob, y, lam, cfg=None, init=None):
    """Minimise ``0.5 |K u - y|^2 + lam R(u)`` by sliding Frank-Wolfe.

    Returns a ``SolveResult``; ``converged`` is False when the outer
    iteration cap is reached, in which case the best iterate is returned.
    """
    cfg = cfg or SolverConfig()
    if not lam > 0:
        raise ValueError("lambda must be positive")
    y = np.asarray(y, dtype=float)
    u = init if init is not None else SparseSignal()
    if len(u):
        c = coefficient_subproblem(prob, u.atoms, y, lam, cfg)
        u = slide(prob, _prune(list(c), list(u.atoms), cfg.prune_tol), y, lam, cfg)
    f = objective(prob, u, y, lam)
    history = [f]
    best = (f, u)
    value = np.inf
    p = None
    for it in range(1, cfg.max_outer_iters + 1):
        cert = residual_certificate(prob, u, y, lam)
        p = cert.p
        atom, value = lmo(prob, cert, cfg.lmo_grid, cfg.polish_iters)
        log.debug("iter %d: %d atoms, objective %.12e, sup %.12f", it, len(u), f, value)
        if value <= 1 + cfg.gap_tol:
            return SolveResult(u, f, float(value), it, True, p, history)
        atoms = list(u.atoms)
        # if the oracle re-found a support atom only the coefficients need work
        if not any(_same_tags_close(atom, a) for a in atoms):
            atoms.append(atom)
        c = coefficient_subproblem(prob, atoms, y, lam, cfg)
        u_new = _prune(list(c), atoms, cfg.prune_tol)
        u_new = slide(prob, u_new, y, lam, cfg)
        f_new = objective(prob, u_new, y, lam)
        if f_new > f + 1e-12 * max(1.0, abs(f)):
            log.warning("objective increased by %.3e; keeping previous iterate", f_new - f)
            u_new, f_new = u, f
        elif f_new >= f and len(u_new) == len(u) and all(
            _same_tags_close(a, b, 1e-14) for a, b in zip(u_new.atoms, u.atoms)
        ):
            # no progress possible at this resolution
            history.append(f_new)
            cert = residual_certificate(prob, u_new, y, lam)
            return SolveResult(u_new, f_new, float(value), it, False, cert.p, history)
        u, f = u_new, f_new
        history.append(f)
        if f < best[0]:
            best = (f, u)
    cert = residual_certificate(prob, best[1], y, lam)
    sup = lmo(prob, cert, cfg.lmo_grid, cfg.polish_iters).value
    return SolveResult(best[1], best[0], float(sup), cfg.max_outer_iters, False, cert.p, history)


def _same_tags_close(a, b, tol=MERGE_TOL):
    if type(a) is not type(b):
        return False
    if isinstance(a, CanonicalSpike):
        return a == b
    if isinstance(a, VectorSpike):
        return torus_dist(a.x, b.x) < tol and np.linalg.norm(np.subtract(a.a, b.a)) < tol
    return a.sign == b.sign and getattr(a, "k", 0) == getattr(b, "k", 0) and torus_dist(a.x, b.x) < tol
