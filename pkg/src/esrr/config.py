"""Experiment configuration: a single versioned JSON document.

Example (every block but ``family``, ``kernel`` and ``truth`` is optional)::

    {
      "schema_version": "1",
      "family": "scalar-blasso",
      "kernel": {"kind": "fourier-features", "generator": "lowpass", "N": 20, "d": 1},
      "truth": [{"c": 1.0, "atom": {"type": "torus_spike", "sign": 1, "x": 0.2}}],
      "certificate": {"method": "qp", "grid": 1024, "refinements": 3,
                      "lambdas": [0.01, 0.001, 0.0001]},
      "tolerances": {"interp_tol": 1e-6, "exc_tol": 1e-4, "exclusion_radius": 0.05,
                     "curv_tol": 1e-6, "scan_grid": 16384},
      "region": {"alpha": 0.1, "lambda0": 0.01, "lambdas": [0.01, 0.001],
                 "noise_fractions": [1.0], "seeds": [0, 1, 2]},
      "solver": {"max_outer_iters": 200, "lmo_grid": 4096},
      "solve": {"lambda": 0.001, "noise_seed": 0, "noise_frac": 0.0},
      "output": {"dir": "out", "prefix": "esrr", "timing": false, "plots": true}
    }

Semantic errors are reported with the line of the offending entry.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

from .atoms import FAMILIES, ProblemInstance, SparseSignal
from .certificate import MndscTolerances
from .errors import ConfigError, FamilyMismatchError
from .harness import AdmissibleRegion
from .serialize import bank_from_dict, signal_from_list, signal_to_list
from .solver import SolverConfig
from .torus import torus_dist

SCHEMA_VERSION = "1"
CERT_METHODS = ("qp", "limit", "both")


# ---------------------------------------------------------------------------
# line lookup


def _line_map(text):
    """Map each JSON path (tuple of keys / indices) to the line where its value starts."""
    dec = json.JSONDecoder()
    lines = {}

    def line_of(i):
        return text.count("\n", 0, i) + 1

    def ws(i):
        while i < len(text) and text[i] in " \t\r\n":
            i += 1
        return i

    def value(i, path):
        i = ws(i)
        lines[path] = line_of(i)
        if text[i] == "{":
            i = ws(i + 1)
            if text[i] == "}":
                return i + 1
            while True:
                key, i = json.decoder.scanstring(text, ws(i) + 1)
                i = ws(i) + 1  # colon
                kline = line_of(i)
                i = value(i, path + (key,))
                lines[path + (key,)] = min(lines[path + (key,)], kline)
                i = ws(i)
                if text[i] == "}":
                    return i + 1
                i += 1
        if text[i] == "[":
            i = ws(i + 1)
            if text[i] == "]":
                return i + 1
            k = 0
            while True:
                i = ws(value(i, path + (k,)))
                k += 1
                if text[i] == "]":
                    return i + 1
                i += 1
        _, end = dec.raw_decode(text, i)
        return end

    value(0, ())
    return lines


class _Ctx:
    def __init__(self, lines):
        self.lines = lines

    def fail(self, msg, *path):
        # walk up until a known path
        p = tuple(path)
        while p and p not in self.lines:
            p = p[:-1]
        raise ConfigError(msg, self.lines.get(p), "/".join(map(str, path)))


# ---------------------------------------------------------------------------


@dataclass
class CertificateSettings:
    method: str = "qp"
    grid: int = 1024
    refinements: int = 3
    lambdas: list = field(default_factory=lambda: [1e-2, 1e-3, 1e-4])


@dataclass
class SolveSettings:
    lam: float = 1e-3
    noise_seed: int = 0
    noise_frac: float = 0.0


@dataclass
class OutputSettings:
    dir: str = "out"
    prefix: str = "esrr"
    timing: bool = False
    plots: bool = True


@dataclass
class ExperimentConfig:
    family: str
    kernel: dict
    truth: SparseSignal
    certificate: CertificateSettings = field(default_factory=CertificateSettings)
    tolerances: MndscTolerances = field(default_factory=MndscTolerances)
    region: AdmissibleRegion = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    solve: SolveSettings = field(default_factory=SolveSettings)
    output: OutputSettings = field(default_factory=OutputSettings)
    eps: float = 0.05
    schema_version: str = SCHEMA_VERSION

    def problem(self):
        return ProblemInstance(self.family, bank_from_dict(self.kernel))

    def to_dict(self):
        d = {
            "schema_version": self.schema_version,
            "family": self.family,
            "kernel": self.kernel,
            "truth": signal_to_list(self.truth),
            "eps": self.eps,
            "certificate": asdict(self.certificate),
            "tolerances": asdict(self.tolerances),
            "solver": self.solver.to_dict(),
            "solve": {
                "lambda": self.solve.lam,
                "noise_seed": self.solve.noise_seed,
                "noise_frac": self.solve.noise_frac,
            },
            "output": asdict(self.output),
        }
        if self.region is not None:
            d["region"] = {
                "alpha": self.region.alpha,
                "lambda0": self.region.lambda0,
                "lambdas": self.region.lambdas,
                "noise_fractions": self.region.noise_fractions,
                "seeds": self.region.seeds,
            }
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def _block(ctx, raw, name, cls, rename=None):
    """Build dataclass ``cls`` from ``raw[name]``, rejecting unknown keys."""
    sub = raw.get(name, {})
    if not isinstance(sub, dict):
        ctx.fail(f"'{name}' must be an object", name)
    rename = rename or {}
    known = {f.name for f in fields(cls)}
    kwargs = {}
    for k, v in sub.items():
        attr = rename.get(k, k)
        if attr not in known:
            ctx.fail(f"unknown key '{k}' in '{name}'", name, k)
        kwargs[attr] = v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        ctx.fail(f"invalid '{name}' block: {exc}", name)


_TOP_KEYS = {
    "schema_version", "family", "kernel", "truth", "certificate", "tolerances",
    "region", "solver", "solve", "output", "eps",
}


def parse_config(text):
    """Parse and validate a config document; raises ``ConfigError``."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc.msg} (column {exc.colno})", exc.lineno) from None
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a JSON object", 1)
    ctx = _Ctx(_line_map(text))

    for k in raw:
        if k not in _TOP_KEYS:
            ctx.fail(f"unknown top-level key '{k}'", k)
    if raw.get("schema_version") != SCHEMA_VERSION:
        ctx.fail(f"schema_version must be \"{SCHEMA_VERSION}\"", "schema_version")
    family = raw.get("family")
    if family not in FAMILIES:
        ctx.fail(f"family must be one of {', '.join(FAMILIES)}", "family")

    kernel = raw.get("kernel")
    if not isinstance(kernel, dict):
        ctx.fail("'kernel' object is required", "kernel")
    try:
        bank = bank_from_dict(kernel)
    except (KeyError, TypeError, ValueError) as exc:
        ctx.fail(f"invalid kernel: {exc}", "kernel")
    prob = ProblemInstance(family, bank)

    items = raw.get("truth")
    if not isinstance(items, list):
        ctx.fail("'truth' must be a list of {c, atom} entries", "truth")
    for i, it in enumerate(items):
        try:
            one = signal_from_list([it])
            prob.check_atom(one.atoms[0])
        except FamilyMismatchError as exc:
            ctx.fail(str(exc), "truth", i, "atom")
        except (KeyError, TypeError, ValueError) as exc:
            ctx.fail(f"invalid truth entry: {exc}", "truth", i)
    try:
        truth = signal_from_list(items)
    except ValueError as exc:
        ctx.fail(f"invalid truth: {exc}", "truth")
    if len(truth) > prob.N:
        ctx.fail(f"{len(truth)} atoms exceed N={prob.N} measurements", "truth")
    for i, it in enumerate(items):
        k = getattr(truth.atoms[i], "k", None)
        if k is not None and not 1 <= k <= (prob.N if family == "demixing" else prob.d):
            ctx.fail(f"index k={k} out of range", "truth", i, "atom", "k")

    eps = raw.get("eps", 0.05)
    if not (isinstance(eps, (int, float)) and eps > 0):
        ctx.fail("eps must be a positive number", "eps")
    xs = [(i, a.x) for i, a in enumerate(truth.atoms) if hasattr(a, "x")]
    for a in range(len(xs)):
        for b in range(a + 1, len(xs)):
            if torus_dist(xs[a][1], xs[b][1]) < 2 * eps:
                ctx.fail(
                    f"atoms {xs[a][0]} and {xs[b][0]} are closer than 2*eps={2 * eps:g}",
                    "truth", xs[b][0],
                )

    cert = _block(ctx, raw, "certificate", CertificateSettings)
    if cert.method not in CERT_METHODS:
        ctx.fail(f"certificate method must be one of {', '.join(CERT_METHODS)}", "certificate", "method")
    tols = _block(ctx, raw, "tolerances", MndscTolerances)
    solver = _block(ctx, raw, "solver", SolverConfig)
    solve = _block(ctx, raw, "solve", SolveSettings, {"lambda": "lam"})
    if not solve.lam > 0:
        ctx.fail("solve lambda must be positive", "solve", "lambda")
    output = _block(ctx, raw, "output", OutputSettings)
    region = None
    if "region" in raw:
        sub = raw["region"]
        if not isinstance(sub, dict):
            ctx.fail("'region' must be an object", "region")
        missing = {"alpha", "lambda0", "lambdas"} - set(sub)
        if missing:
            ctx.fail(f"region needs {', '.join(sorted(missing))}", "region")
        region = _block(ctx, raw, "region", AdmissibleRegion)

    return ExperimentConfig(
        family=family,
        kernel=kernel,
        truth=truth,
        certificate=cert,
        tolerances=tols,
        region=region,
        solver=solver,
        solve=solve,
        output=output,
        eps=float(eps),
        schema_version=SCHEMA_VERSION,
    )


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text)
