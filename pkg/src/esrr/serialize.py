"""JSON encodings of atoms, signals and banks."""

from __future__ import annotations

import numpy as np

from .atoms import AxisSpike, CanonicalSpike, SparseSignal, TorusSpike, VectorSpike
from .torus import FourierBank, GaussianBank, lowpass_fourier_bank, random_fourier_bank, uniform_gaussian_bank


def atom_to_dict(atom):
    if isinstance(atom, TorusSpike):
        return {"type": "torus_spike", "sign": atom.sign, "x": atom.x}
    if isinstance(atom, CanonicalSpike):
        return {"type": "canonical_spike", "k": atom.k, "sign": atom.sign}
    if isinstance(atom, VectorSpike):
        return {"type": "vector_spike", "a": list(atom.a), "x": atom.x}
    if isinstance(atom, AxisSpike):
        return {"type": "axis_spike", "k": atom.k, "sign": atom.sign, "x": atom.x}
    raise TypeError(f"not an atom: {atom!r}")


_ATOM_KEYS = {
    "torus_spike": {"sign", "x"},
    "canonical_spike": {"k", "sign"},
    "vector_spike": {"a", "x"},
    "axis_spike": {"k", "sign", "x"},
}


def atom_from_dict(d):
    kind = d.get("type")
    extra = set(d) - {"type"} - _ATOM_KEYS.get(kind, set(d))
    if extra:
        raise ValueError(f"unexpected keys for {kind}: {', '.join(sorted(extra))}")
    if kind == "torus_spike":
        return TorusSpike(int(d["sign"]), float(d["x"]))
    if kind == "canonical_spike":
        return CanonicalSpike(int(d["k"]), int(d["sign"]))
    if kind == "vector_spike":
        a = np.asarray(d["a"], dtype=float)
        gap = abs(np.linalg.norm(a) - 1)
        # JSON written by hand may carry a few digits only; exact unit
        # vectors are kept bit for bit
        if 1e-12 < gap <= 1e-6:
            return VectorSpike.normalized(a, float(d["x"]))
        return VectorSpike(tuple(float(v) for v in a), float(d["x"]))
    if kind == "axis_spike":
        return AxisSpike(int(d["k"]), int(d["sign"]), float(d["x"]))
    raise ValueError(f"unknown atom type {kind!r}")


def signal_to_list(u):
    return [{"c": c, "atom": atom_to_dict(a)} for c, a in u]


def signal_from_list(items):
    return SparseSignal.from_pairs((float(it["c"]), atom_from_dict(it["atom"])) for it in items)


def bank_from_dict(spec):
    """Build a kernel bank from its config block.

    Explicit banks give ``frequencies``/``phases`` or ``centers``/``width``;
    generated banks give ``N``, ``d`` and ``generator`` (``random``,
    ``lowpass`` or ``uniform``) with its parameters and ``seed``.  An
    optional ``amplitude`` (scalar) or ``amplitudes`` (per component)
    scales the kernels.
    """
    kind = spec.get("kind")
    gen = spec.get("generator")
    N, d = spec.get("N"), spec.get("d", 1)
    amp = spec.get("amplitudes", spec.get("amplitude", 1.0))
    if kind == "fourier-features":
        if gen == "random":
            return random_fourier_bank(N, d, spec.get("max_freq", 10), spec.get("seed", 0), amp)
        if gen == "lowpass":
            return lowpass_fourier_bank(N, d, spec.get("seed", 0), amp)
        if gen is not None:
            raise ValueError(f"unknown fourier-features generator {gen!r}")
        bank = FourierBank(spec["frequencies"], spec["phases"], amp)
    elif kind == "periodized-gaussian":
        if gen == "uniform":
            return uniform_gaussian_bank(N, d, spec["width"], amp)
        if gen is not None:
            raise ValueError(f"unknown periodized-gaussian generator {gen!r}")
        bank = GaussianBank(spec["centers"], spec["width"], amp)
    else:
        raise ValueError(f"unknown kernel kind {kind!r}")
    if N is not None and (bank.N, bank.d) != (N, d):
        raise ValueError(f"kernel lists have shape ({bank.N}, {bank.d}), config says ({N}, {d})")
    return bank
