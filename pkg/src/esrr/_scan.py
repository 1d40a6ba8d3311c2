"""Dense scan of ``u -> <K* p, u>`` over the extreme points, with Newton polish.

Each family's extreme points split into smooth "channels" parametrised by
a torus position (a signed scalar component, an axis of the l1 ball, or
the l2 direction field), plus the finitely many canonical spikes of the
demixing family.  The scan evaluates every channel on a uniform grid,
keeps the discrete local maxima that can still beat the floor after
accounting for the grid error, and polishes each of them with safeguarded
Newton steps that may not leave the seed's grid cell.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .atoms import AxisSpike, CanonicalSpike, TorusSpike, VectorSpike
from .torus import wrap


@dataclass(frozen=True)
class Candidate:
    atom: object
    value: float
    order_key: int  # grid index of the seed; canonical spikes sort after the grid


def eta_on_grid(prob, p, size):
    """Grid positions and ``eta, eta', eta''`` on them, each of shape ``(size, d)``."""
    x, P0, P1, P2 = prob.grid(size)
    return (x, *(np.einsum("gnd,n->gd", P, p) for P in (P0, P1, P2)))


def _eta_at(prob, p, xs, order):
    return np.einsum("knd,n->kd", prob.bank.evaluate(xs, order), p)


def _local_max_mask(v):
    return (v >= np.roll(v, 1)) & (v >= np.roll(v, -1))


def _channels(prob, e0):
    """Objective on the grid per channel: list of (values, component or None)."""
    if prob.family in ("scalar-blasso", "demixing"):
        return [(np.abs(e0[:, 0]), 0)]
    if prob.family == "group-l1":
        return [(np.abs(e0[:, k]), k) for k in range(prob.d)]
    return [(np.linalg.norm(e0, axis=1), None)]


def _polish_scalar(prob, p, x0, comp, sign, h, iters):
    x = x0.copy()
    for _ in range(iters):
        f1 = sign * _eta_at(prob, p, x, 1)[:, comp]
        f2 = sign * _eta_at(prob, p, x, 2)[:, comp]
        ok = f2 < 0
        step = np.where(ok, -f1 / np.where(ok, f2, -1.0), 0.0)
        xn = x + step
        keep = np.abs(xn - x0) <= h
        x = np.where(keep, xn, x)
        if np.all(np.abs(np.where(keep, step, 0.0)) < 1e-15):
            break
    return x


def _polish_norm(prob, p, x0, h, iters):
    x = x0.copy()
    for _ in range(iters):
        e0 = _eta_at(prob, p, x, 0)
        e1 = _eta_at(prob, p, x, 1)
        e2 = _eta_at(prob, p, x, 2)
        # Newton on half the squared norm; same maximisers as the norm
        g1 = np.sum(e0 * e1, axis=1)
        g2 = np.sum(e1 * e1, axis=1) + np.sum(e0 * e2, axis=1)
        ok = g2 < 0
        step = np.where(ok, -g1 / np.where(ok, g2, -1.0), 0.0)
        xn = x + step
        keep = np.abs(xn - x0) <= h
        x = np.where(keep, xn, x)
        if np.all(np.abs(np.where(keep, step, 0.0)) < 1e-15):
            break
    return x


def scan_candidates(prob, p, size, polish_iters=20, floor=None):
    """All polished local maxima that may reach ``floor``.

    With ``floor=None`` only candidates that can compete with the best grid
    value are kept (enough for a sup or an argmax).  Returns a list of
    ``Candidate`` sorted by decreasing value, ties broken by grid index.
    """
    p = np.asarray(p, dtype=float)
    x, e0, e1, e2 = eta_on_grid(prob, p, size)
    h = 1.0 / size
    out = []
    chans = _channels(prob, e0)
    best = max(float(np.max(v)) for v, _ in chans)
    if prob.family == "demixing" and p.size:
        best = max(best, float(np.max(np.abs(p))))
    # a local max can exceed its grid neighbours by at most max|eta''| h^2 / 2
    slack = 0.5 * float(np.max(np.linalg.norm(e2, axis=1))) * h * h + 1e-12
    level = (best if floor is None else min(floor, best)) - slack
    for v, comp in chans:
        idx = np.flatnonzero(_local_max_mask(v) & (v >= level))
        if idx.size == 0:
            continue
        xs = x[idx]
        if comp is None:
            xp = _polish_norm(prob, p, xs, h, polish_iters)
            ep = _eta_at(prob, p, xp, 0)
            vp = np.linalg.norm(ep, axis=1)
            better = vp >= v[idx]
            xp = np.where(better, xp, xs)
            ep = np.where(better[:, None], ep, e0[idx])
            vp = np.where(better, vp, v[idx])
            for j, gi in enumerate(idx):
                n = vp[j]
                a = ep[j] / n if n > 0 else np.eye(prob.d)[0]
                out.append(Candidate(VectorSpike.normalized(a, xp[j]), float(n), int(gi)))
        else:
            sign = np.where(e0[idx, comp] >= 0, 1, -1)
            xp = _polish_scalar(prob, p, xs, comp, sign, h, polish_iters)
            vp = sign * _eta_at(prob, p, xp, 0)[:, comp]
            better = vp >= v[idx]
            xp = np.where(better, xp, xs)
            vp = np.where(better, vp, v[idx])
            for j, gi in enumerate(idx):
                s = int(sign[j])
                if prob.family == "group-l1":
                    atom = AxisSpike(comp + 1, s, wrap(xp[j]))
                else:
                    atom = TorusSpike(s, wrap(xp[j]))
                out.append(Candidate(atom, float(vp[j]), int(gi)))
    if prob.family == "demixing":
        for k in range(prob.N):
            if floor is None or abs(p[k]) >= level:
                s = 1 if p[k] >= 0 else -1
                out.append(Candidate(CanonicalSpike(k + 1, s), float(abs(p[k])), size + k))
    out.sort(key=lambda c: (-c.value, c.order_key))
    return out


def best_candidate(cands, rtol=1e-12):
    """Largest value; on a flat ridge the smallest grid index wins."""
    top = cands[0].value
    tied = [c for c in cands if c.value >= top - rtol * max(1.0, abs(top))]
    return min(tied, key=lambda c: c.order_key)
