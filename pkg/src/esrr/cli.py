"""Command-line front end.

    esrr validate-kernels --config exp.json
    esrr certify --config exp.json --out results/
    esrr solve --config exp.json --lambda 1e-3 --noise-seed 0 --noise-frac 1
    esrr sweep --config exp.json --threads 4 [--skip-certify]

Exit codes (one per outcome):

    0  success (kernels valid, MNDSC pass, solve converged, every cell recovered)
    1  config could not be read, parsed or validated
    2  kernel derivative validation failed
    3  source condition infeasible (no interpolating certificate)
    4  MNDSC check failed
    5  solver hit its iteration cap without converging
    6  sweep: at least one cell failed or did not converge
    7  sweep: all cells solved but at least one missed exact recovery
    8  certificate constraints still violated after all grid refinements

Standard output carries tables and summaries only; diagnostics go to
standard error at the level named by ``ESRR_LOG`` (error, warn, info, debug).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import certificate as C
from .atoms import AxisSpike, CanonicalSpike, TorusSpike, VectorSpike, forward_signal
from .errors import (
    ConfigError,
    GridInsufficientError,
    InfeasibleSourceError,
    KernelValidationError,
    NoConvergenceError,
    SolverFailedError,
    TooManyAtomsError,
)
from .harness import draw_noise, run_sweep
from .serialize import signal_to_list
from .solver import solve
from .torus import validate_kernel_derivatives

log = logging.getLogger("esrr")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_KERNEL = 2
EXIT_INFEASIBLE = 3
EXIT_MNDSC = 4
EXIT_MAX_ITERS = 5
EXIT_CELL_FAILED = 6
EXIT_NOT_RECOVERED = 7
EXIT_GRID = 8

TRACE_POINTS = 2048
_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


class _Abort(Exception):
    def __init__(self, code, msg):
        super().__init__(msg)
        self.code = code


def _setup_logging():
    level = _LEVELS.get(os.environ.get("ESRR_LOG", "warn").lower(), logging.WARNING)
    root = logging.getLogger("esrr")
    root.setLevel(level)
    if not root.handlers:
        h = logging.StreamHandler(sys.stderr)
        h.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        root.addHandler(h)


def _load(args):
    from .config import load_config

    if not args.config:
        raise _Abort(EXIT_CONFIG, "no config given (use --config PATH)")
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        raise _Abort(EXIT_CONFIG, f"{args.config}: {exc}") from None
    out = Path(args.out or cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    return cfg, out


def _write_json(path, obj):
    path.write_text(json.dumps(obj, indent=2, allow_nan=True) + "\n")
    log.info("wrote %s", path)


def _fmt(v):
    return repr(float(v))


# ---------------------------------------------------------------------------


def cmd_validate_kernels(args):
    cfg, _ = _load(args)
    bank = cfg.problem().bank
    try:
        report = validate_kernel_derivatives(bank)
        code = EXIT_OK
    except KernelValidationError as exc:
        report = exc.report
        log.error("%s", exc)
        code = EXIT_KERNEL
    print(f"{'kernel':>6}  {'order1_rel_err':>14}  {'order2_rel_err':>14}")
    for i, e1, e2 in report.rows():
        print(f"{i:>6d}  {e1:14.3e}  {e2:14.3e}")
    print("PASS" if code == EXIT_OK else "FAIL", f"(tol {report.tol:.0e}, {report.samples} points)")
    return code


def _build_certificates(cfg, prob):
    """Certificates per configured method; the first one is checked."""
    cs = cfg.certificate
    certs = []
    try:
        if cs.method in ("qp", "both"):
            certs.append(C.minimal_norm_certificate_qp(prob, cfg.truth, cs.grid, cs.refinements))
        if cs.method in ("limit", "both"):
            certs.append(C.minimal_norm_certificate_limit(prob, cfg.truth, cs.lambdas, cfg.solver))
    except (InfeasibleSourceError, TooManyAtomsError) as exc:
        raise _Abort(EXIT_INFEASIBLE, f"INFEASIBLE: {exc}") from None
    except GridInsufficientError as exc:
        raise _Abort(EXIT_GRID, f"GRID_INSUFFICIENT: {exc}") from None
    except (SolverFailedError, NoConvergenceError) as exc:
        raise _Abort(EXIT_MAX_ITERS, f"limit certificate: {exc}") from None
    return certs


def eta_trace(cert, n=TRACE_POINTS):
    x = np.arange(n) / n
    eta = C.eta_function(cert, x)
    return x, eta


def write_eta_csv(path, x, eta):
    d = eta.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", *(f"eta_{k + 1}" for k in range(d)), "norm"])
        for xi, row in zip(x, eta):
            w.writerow([_fmt(xi), *map(_fmt, row), _fmt(np.linalg.norm(row))])


def _certify(cfg, prob, out, write=True):
    certs = _build_certificates(cfg, prob)
    report = C.check_mndsc(prob, cfg.truth, certs[0], cfg.tolerances)
    if write:
        doc = {"method": cfg.certificate.method, **report.to_dict()}
        doc["certificates"] = [
            {"method": c.method, "p": c.p.tolist(), "info": c.info} for c in certs
        ]
        if len(certs) == 2:
            a, b = certs[0].p, certs[1].p
            doc["qp_vs_limit_rel_diff"] = float(np.linalg.norm(a - b) / np.linalg.norm(a))
        doc["config"] = cfg.to_dict()
        pre = cfg.output.prefix
        _write_json(out / f"{pre}_mndsc.json", doc)
        x, eta = eta_trace(certs[0])
        write_eta_csv(out / f"{pre}_eta.csv", x, eta)
        if cfg.output.plots:
            from .plotting import plot_eta_trace

            plot_eta_trace(x, eta, cfg.truth, out / f"{pre}_eta.png",
                           f"{cfg.family}: MNDSC {'pass' if report.verdict else 'fail'}")
    return report


def cmd_certify(args):
    cfg, out = _load(args)
    report = _certify(cfg, cfg.problem(), out)
    print(f"source condition: {'ok' if report.source_condition_ok else 'FAIL'} "
          f"(margin {report.dual_margin:.9f})")
    print(f"off-support extreme points: {len(report.spurious_maximizers)} "
          f"(peak {report.off_support_peak:.6f})")
    for c in report.curvature:
        if "value" in c:
            print(f"curvature atom {c['index']}: {c['value']:.6g}")
    print("MNDSC", "PASS" if report.verdict else "FAIL")
    for r in report.reasons:
        log.warning("%s", r)
    return EXIT_OK if report.verdict else EXIT_MNDSC


def _atom_row(c, a):
    if isinstance(a, TorusSpike):
        return ("torus", f"sign={a.sign:+d}", f"{a.x:.8f}", "", c)
    if isinstance(a, CanonicalSpike):
        return ("canonical", f"k={a.k} sign={a.sign:+d}", "", "", c)
    if isinstance(a, AxisSpike):
        return ("axis", f"k={a.k} sign={a.sign:+d}", f"{a.x:.8f}", "", c)
    if isinstance(a, VectorSpike):
        return ("vector", "", f"{a.x:.8f}", " ".join(f"{v:+.5f}" for v in a.a), c)
    raise TypeError(a)


def cmd_solve(args):
    cfg, out = _load(args)
    prob = cfg.problem()
    lam = args.lam if args.lam is not None else cfg.solve.lam
    seed = args.noise_seed if args.noise_seed is not None else cfg.solve.noise_seed
    frac = args.noise_frac if args.noise_frac is not None else cfg.solve.noise_frac
    if not lam > 0:
        raise _Abort(EXIT_CONFIG, "lambda must be positive")
    alpha = cfg.region.alpha if cfg.region is not None else 1.0
    mag = frac * alpha * lam
    y = forward_signal(prob, cfg.truth) + draw_noise(prob.N, mag, seed)
    res = solve(prob, y, lam, cfg.solver)

    print(f"{'variant':<10} {'tags':<16} {'x':>12} {'a':>28} {'c':>14}")
    for c, a in res.u:
        v, tags, x, av, c = _atom_row(c, a)
        print(f"{v:<10} {tags:<16} {x:>12} {av:>28} {c:14.8f}")
    print(f"objective {res.objective:.12g}  iterations {res.iterations}  "
          f"{'converged' if res.converged else 'MAX_ITERS'}")
    _write_json(out / f"{cfg.output.prefix}_solve.json", {
        "lambda": lam,
        "noise_seed": seed,
        "noise_norm": mag,
        "u": signal_to_list(res.u),
        "objective": res.objective,
        "certificate_sup": res.certificate_sup,
        "iterations": res.iterations,
        "converged": res.converged,
        "config": cfg.to_dict(),
    })
    return EXIT_OK if res.converged else EXIT_MAX_ITERS


def cmd_sweep(args):
    cfg, out = _load(args)
    if cfg.region is None:
        raise _Abort(EXIT_CONFIG, "sweep needs a 'region' block in the config")
    prob = cfg.problem()
    if not args.skip_certify:
        report = _certify(cfg, prob, out, write=False)
        if not report.verdict:
            raise _Abort(EXIT_MNDSC, "MNDSC fails; refusing to sweep (use --skip-certify): "
                         + "; ".join(report.reasons))
    rep = run_sweep(prob, cfg.truth, cfg.region, cfg.eps, cfg.solver, skip_certify=True,
                    threads=args.threads, timing=cfg.output.timing)
    rep.config = cfg.to_dict()
    pre = cfg.output.prefix
    (out / f"{pre}_sweep.csv").write_text(rep.to_csv())
    doc = rep.to_dict()
    doc["certified"] = not args.skip_certify
    _write_json(out / f"{pre}_sweep.json", doc)
    if cfg.output.plots:
        from .plotting import plot_sweep_errors

        plot_sweep_errors(rep, out / f"{pre}_sweep.png")

    n_pass = sum(c.verdict for c in rep.cells)
    print(f"cells recovered: {n_pass}/{len(rep.cells)}")
    print("empirical frontier (largest grid lambda with all smaller lambdas recovered):")
    for frac, lam in rep.frontier.items():
        print(f"  noise fraction {frac}: {'none' if lam is None else f'{lam:g}'}")
    if rep.decay_slope is not None:
        print(f"noiseless log-log slope: {rep.decay_slope:.4f}")
    if rep.any_failed:
        return EXIT_CELL_FAILED
    return EXIT_OK if rep.all_pass else EXIT_NOT_RECOVERED


# ---------------------------------------------------------------------------


def _global_flags(p, suppress):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--config", metavar="PATH", default=d(None), help="experiment config (JSON)")
    p.add_argument("--out", metavar="DIR", default=d(None), help="output directory")
    p.add_argument("--threads", type=int, metavar="K", default=d(1), help="sweep worker threads")
    p.add_argument("--skip-certify", action="store_true", default=d(False),
                   help="sweep even if the MNDSC check fails")


def build_parser():
    ap = argparse.ArgumentParser(prog="esrr", description=__doc__.split("\n\n")[0])
    _global_flags(ap, suppress=False)
    sub = ap.add_subparsers(dest="command", required=True)
    cmds = {
        "validate-kernels": (cmd_validate_kernels, "check kernel derivatives by finite differences"),
        "certify": (cmd_certify, "build the dual certificate and check MNDSC"),
        "solve": (cmd_solve, "solve one regularised problem"),
        "sweep": (cmd_sweep, "ESRR sweep over the admissible region"),
    }
    for name, (fn, help_) in cmds.items():
        p = sub.add_parser(name, help=help_)
        _global_flags(p, suppress=True)
        p.set_defaults(func=fn)
        if name == "solve":
            p.add_argument("--lambda", dest="lam", type=float, default=None)
            p.add_argument("--noise-seed", type=int, default=None)
            p.add_argument("--noise-frac", type=float, default=None,
                           help="noise norm as a fraction of alpha*lambda (alpha=1 without a region)")
    return ap


def main(argv=None):
    _setup_logging()
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except _Abort as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
