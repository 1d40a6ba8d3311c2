"""Empirical exact-sparse-representation-recovery sweeps.

A sweep solves the regularised problem for every ``(lambda, noise)`` cell
of an admissible region, matches the recovered atoms to the ground truth
and records whether recovery was exact: same number of atoms, same
discrete tags, and positions, directions and coefficients within ``eps``.
"""

from __future__ import annotations

import csv
import io
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .atoms import AxisSpike, CanonicalSpike, SparseSignal, TorusSpike, VectorSpike, forward_signal
from .errors import EsrrError
from .solver import SolverConfig, solve
from .torus import torus_dist

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "family",
    "lambda",
    "seed",
    "noise_norm",
    "atom_count",
    "count_match",
    "max_pos_err",
    "max_coeff_err",
    "max_dir_err",
    "verdict",
    "objective",
    "wall_ms",
)


class MndscNotSatisfied(EsrrError):
    """Raised by ``run_sweep`` when the ground truth fails the MNDSC gate."""


@dataclass
class AdmissibleRegion:
    """Cells ``(lam, w)`` with ``lam <= lambda0`` and ``|w| = fraction * alpha * lam``."""

    alpha: float
    lambda0: float
    lambdas: list
    noise_fractions: list = field(default_factory=lambda: [1.0])
    seeds: list = field(default_factory=lambda: [0])

    def __post_init__(self):
        self.lambdas = [float(v) for v in self.lambdas]
        self.noise_fractions = [float(v) for v in self.noise_fractions]
        self.seeds = [int(s) for s in self.seeds]
        if not (self.alpha > 0 and self.lambda0 > 0):
            raise ValueError("alpha and lambda0 must be positive")
        if any(not 0 < v <= self.lambda0 for v in self.lambdas):
            raise ValueError("every lambda must lie in (0, lambda0]")
        if any(b >= a for a, b in zip(self.lambdas, self.lambdas[1:])):
            raise ValueError("lambda grid must be strictly decreasing")
        if any(not 0 <= f <= 1 for f in self.noise_fractions):
            raise ValueError("noise fractions must lie in [0, 1]")

    def cells(self):
        """(lam, fraction, seed, noise magnitude) in deterministic order."""
        for lam in self.lambdas:
            for frac in self.noise_fractions:
                seeds = self.seeds if frac > 0 else self.seeds[:1]
                for seed in seeds:
                    yield lam, frac, seed, frac * self.alpha * lam


def draw_noise(N, magnitude, seed):
    """Uniform direction on the sphere of radius ``magnitude`` in R^N."""
    if magnitude < 0:
        raise ValueError("noise magnitude must be non-negative")
    if magnitude == 0:
        return np.zeros(N)
    v = np.random.default_rng(seed).standard_normal(N)
    return v * (magnitude / np.linalg.norm(v))


@dataclass
class Matching:
    pairs: list  # (truth index, recovered index)
    position_errors: list
    coefficient_errors: list
    direction_errors: list

    def max_errors(self):
        def m(v):
            return max(v) if v else 0.0

        return m(self.position_errors), m(self.coefficient_errors), m(self.direction_errors)


def _pair_distance(a, b, eps):
    """Smooth distance between two atoms, or None if they cannot be matched."""
    if type(a) is not type(b):
        return None
    if isinstance(a, CanonicalSpike):
        return (0.0, 0.0) if a == b else None
    if isinstance(a, (TorusSpike, AxisSpike)):
        if a.sign != b.sign or getattr(a, "k", 0) != getattr(b, "k", 0):
            return None
        dx = torus_dist(a.x, b.x)
        return (dx, 0.0) if dx <= eps else None
    dx = torus_dist(a.x, b.x)
    da = float(np.linalg.norm(np.subtract(a.a, b.a)))
    return (dx, da) if dx <= eps and da <= eps else None


def match_atoms(truth, recovered, eps):
    """Greedy minimal-distance bijection, or ``None`` when none exists."""
    if len(truth) != len(recovered):
        return None
    edges = []
    for i, a in enumerate(truth.atoms):
        for j, b in enumerate(recovered.atoms):
            d = _pair_distance(a, b, eps)
            if d is not None:
                edges.append((max(d), i, j, d))
    edges.sort(key=lambda e: (e[0], e[1], e[2]))
    used_t, used_r, pairs = set(), set(), {}
    for _, i, j, d in edges:
        if i in used_t or j in used_r:
            continue
        used_t.add(i)
        used_r.add(j)
        pairs[i] = (j, d)
    if len(pairs) != len(truth):
        return None
    order = sorted(pairs)
    vec = any(isinstance(a, VectorSpike) for a in truth.atoms)
    return Matching(
        pairs=[(i, pairs[i][0]) for i in order],
        position_errors=[pairs[i][1][0] for i in order],
        coefficient_errors=[abs(recovered.coefs[pairs[i][0]] - truth.coefs[i]) for i in order],
        direction_errors=[pairs[i][1][1] for i in order] if vec else [],
    )


@dataclass
class CellRecord:
    family: str
    lam: float
    noise_fraction: float
    seed: int
    noise_norm: float
    atom_count: int
    count_match: bool
    matching: list
    position_errors: list
    coefficient_errors: list
    direction_errors: list
    verdict: bool
    objective: float
    status: str  # ok | max_iters | failed
    recovered: list = field(default_factory=list)
    wall_ms: float = None
    error: str = None

    def max_errors(self):
        def m(v):
            return max(v) if v else None

        return m(self.position_errors), m(self.coefficient_errors), m(self.direction_errors)

    def csv_row(self):
        pos, coef, dirn = self.max_errors()
        return [
            self.family,
            repr(self.lam),
            self.seed,
            repr(self.noise_norm),
            self.atom_count,
            int(self.count_match),
            "" if pos is None else repr(pos),
            "" if coef is None else repr(coef),
            "" if dirn is None else repr(dirn),
            int(self.verdict),
            repr(self.objective),
            "" if self.wall_ms is None else f"{self.wall_ms:.1f}",
        ]


@dataclass
class EsrrReport:
    cells: list
    eps: float
    decay_slope: float = None
    frontier: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    @property
    def all_pass(self):
        return all(c.verdict for c in self.cells)

    @property
    def any_failed(self):
        return any(c.status != "ok" for c in self.cells)

    def to_dict(self):
        from .serialize import signal_to_list

        cells = []
        for c in self.cells:
            d = asdict(c)
            d["recovered"] = signal_to_list(c.recovered) if c.recovered else []
            cells.append(d)
        return {
            "eps": self.eps,
            "all_pass": self.all_pass,
            "decay_slope": self.decay_slope,
            "frontier": self.frontier,
            "cells": cells,
            "config": self.config,
        }

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for c in self.cells:
            w.writerow(c.csv_row())
        return buf.getvalue()


def _run_cell(prob, u0, y0, lam, frac, seed, mag, eps, cfg, timing):
    t0 = time.perf_counter()
    w = draw_noise(prob.N, mag, seed)
    base = dict(family=prob.family, lam=lam, noise_fraction=frac, seed=seed, noise_norm=mag)
    try:
        res = solve(prob, y0 + w, lam, cfg)
    except (EsrrError, np.linalg.LinAlgError) as exc:
        log.warning("cell lam=%g seed=%d failed: %s", lam, seed, exc)
        return CellRecord(
            **base, atom_count=0, count_match=False, matching=[], position_errors=[],
            coefficient_errors=[], direction_errors=[], verdict=False,
            objective=float("nan"), status="failed", error=str(exc),
        )
    m = match_atoms(u0, res.u, eps)
    if m is None:
        pos = coef = dirn = []
        pairs = []
        verdict = False
    else:
        pos, coef, dirn, pairs = m.position_errors, m.coefficient_errors, m.direction_errors, m.pairs
        verdict = all(e <= eps for e in pos + coef + dirn)
    rec = CellRecord(
        **base,
        atom_count=len(res.u),
        count_match=len(res.u) == len(u0),
        matching=[list(p) for p in pairs],
        position_errors=[float(v) for v in pos],
        coefficient_errors=[float(v) for v in coef],
        direction_errors=[float(v) for v in dirn],
        verdict=bool(verdict and res.converged),
        objective=float(res.objective),
        status="ok" if res.converged else "max_iters",
        recovered=res.u,
    )
    if timing:
        rec.wall_ms = 1000 * (time.perf_counter() - t0)
    return rec


def decay_slope(cells):
    """Least-squares slope of log(max error) against log(lambda) on noiseless cells."""
    pts = []
    for c in cells:
        if c.noise_norm != 0 or not c.count_match or not c.position_errors:
            continue
        err = max(c.position_errors + c.coefficient_errors + c.direction_errors)
        if err > 0:
            pts.append((np.log(c.lam), np.log(err)))
    if len(pts) < 2:
        return None
    x, y = np.array(pts).T
    if np.ptp(x) == 0:
        return None
    return float(np.polyfit(x, y, 1)[0])


def grid_frontier(cells):
    """Largest grid lambda below which every cell passes, per noise fraction."""
    out = {}
    for frac in sorted({c.noise_fraction for c in cells}):
        sub = sorted((c for c in cells if c.noise_fraction == frac), key=lambda c: c.lam)
        best = None
        for lam in sorted({c.lam for c in sub}):
            if all(c.verdict for c in sub if c.lam == lam):
                best = lam
            else:
                break
        out[repr(frac)] = best
    return out


def run_sweep(prob, u0, region, eps=0.05, cfg=None, mndsc=None, skip_certify=False,
              threads=1, timing=False):
    """Solve and score every cell of ``region``.

    Unless ``skip_certify`` is set, ``mndsc`` (an ``MndscReport``) must be
    given and pass, or it is computed from the minimal-norm certificate.
    """
    cfg = cfg or SolverConfig()
    if not skip_certify:
        if mndsc is None:
            from .certificate import check_mndsc, minimal_norm_certificate_qp

            mndsc = check_mndsc(prob, u0, minimal_norm_certificate_qp(prob, u0))
        if not mndsc.verdict:
            raise MndscNotSatisfied("; ".join(mndsc.reasons) or "MNDSC failed")
    y0 = forward_signal(prob, u0)
    cells = list(region.cells())

    def job(cell):
        lam, frac, seed, mag = cell
        return _run_cell(prob, u0, y0, lam, frac, seed, mag, eps, cfg, timing)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            records = list(pool.map(job, cells))
    else:
        records = [job(c) for c in cells]
    report = EsrrReport(records, eps)
    report.decay_slope = decay_slope(records)
    report.frontier = grid_frontier(records)
    return report


def bisect_lambda0(prob, u0, alpha, seeds, lo, hi, eps=0.05, cfg=None, iters=8):
    """Shrink the admissible lambda0 between a passing ``lo`` and a failing ``hi``.

    Every seed is tried at ``|w| = alpha * lam``; bisection runs in log
    space and returns ``(lo, hi)`` bracketing the empirical frontier.
    """
    y0 = forward_signal(prob, u0)

    def passes(lam):
        return all(
            _run_cell(prob, u0, y0, lam, 1.0, s, alpha * lam, eps, cfg or SolverConfig(), False).verdict
            for s in seeds
        )

    if not passes(lo):
        raise ValueError(f"lower end lambda={lo:g} does not pass")
    if passes(hi):
        return hi, hi
    for _ in range(iters):
        mid = float(np.sqrt(lo * hi))
        if passes(mid):
            lo = mid
        else:
            hi = mid
    return lo, hi


@dataclass
class UniquenessReport:
    trials: int
    objective_spread: float
    atom_set_distance: float
    consistent: bool


def _atom_set_distance(u, v):
    if len(u) != len(v):
        return float("inf")
    m = match_atoms(u, v, eps=0.5)
    if m is None:
        return float("inf")
    return max([0.0, *m.position_errors, *m.direction_errors, *m.coefficient_errors])


def uniqueness_probe(prob, y, lam, result, trials=5, seed=0, cfg=None, perturbation=0.02):
    """Re-solve from perturbed starts and compare objectives and atom sets."""
    cfg = cfg or SolverConfig()
    rng = np.random.default_rng(seed)
    objs = [result.objective]
    dist = 0.0
    for _ in range(trials - 1):
        coefs, atoms = [], []
        for c, a in result.u:
            coefs.append(c * rng.uniform(0.5, 1.5))
            shift = rng.uniform(-perturbation, perturbation)
            if isinstance(a, TorusSpike):
                a = TorusSpike(a.sign, a.x + shift)
            elif isinstance(a, AxisSpike):
                a = AxisSpike(a.k, a.sign, a.x + shift)
            elif isinstance(a, VectorSpike):
                a = VectorSpike.normalized(np.asarray(a.a) + perturbation * rng.standard_normal(prob.d), a.x + shift)
            atoms.append(a)
        try:
            init = SparseSignal(tuple(coefs), tuple(atoms))
        except ValueError:
            init = None
        res = solve(prob, y, lam, cfg, init=init)
        objs.append(res.objective)
        dist = max(dist, _atom_set_distance(result.u, res.u))
    spread = float(max(objs) - min(objs))
    return UniquenessReport(trials, spread, dist, spread <= 1e-8 and dist <= 1e-6)
