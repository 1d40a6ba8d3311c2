"""Geometry of the one-dimensional torus R/Z and C^2 kernel banks on it.

A kernel bank holds ``N`` functions ``phi_i : T -> R^d`` together with
their first and second derivatives in closed form.  Banks are evaluated in
batch: ``bank.evaluate(x, order)`` returns an array of shape
``(len(x), N, d)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import KernelValidationError

# periodic images kept on each side of the canonical representative
_GAUSS_IMAGES = 2
_MAX_GAUSS_WIDTH = 0.25


def wrap(x):
    """Reduce ``x`` (scalar or array) to the canonical interval [0, 1)."""
    y = np.mod(x, 1.0)
    # np.mod(-tiny, 1.0) rounds to 1.0
    y = np.where(y >= 1.0, 0.0, y)
    if np.ndim(y) == 0:
        return float(y)
    return y


def torus_dist(a, b):
    """Geodesic distance on R/Z, in [0, 0.5]."""
    d = np.abs(wrap(a) - wrap(b))
    d = np.minimum(d, 1.0 - d)
    if np.ndim(d) == 0:
        return float(d)
    return d


def signed_arc(x1, x2):
    """Signed displacement from ``x1`` to ``x2`` along the shorter arc, in [-0.5, 0.5)."""
    return float(np.mod(x2 - x1 + 0.5, 1.0) - 0.5)


class KernelBank:
    """Base class for banks of C^2 periodic kernels.

    Subclasses implement ``_evaluate(x, order)`` on canonical points.
    """

    kind = "abstract"

    def __init__(self, N, d):
        if N < 1 or d < 1:
            raise ValueError("kernel bank needs N >= 1 and d >= 1")
        self.N = int(N)
        self.d = int(d)

    def evaluate(self, x, order=0):
        if order not in (0, 1, 2):
            raise ValueError(f"derivative order must be 0, 1 or 2, got {order}")
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self._evaluate(wrap(x), order)

    def _evaluate(self, x, order):
        raise NotImplementedError

    def params(self):
        """JSON-ready description of the bank."""
        raise NotImplementedError

    def _check_periodic(self):
        edge = np.array([0.0, np.nextafter(1.0, 0.0)])
        for order in (0, 1, 2):
            v = self._evaluate(edge, order)
            scale = max(1.0, float(np.max(np.abs(v))))
            # values must agree to 1e-12 absolute, derivatives relative to their size
            tol = 1e-12 if order == 0 else 1e-10 * scale
            gap = float(np.max(np.abs(v[0] - v[1])))
            if gap > tol:
                raise ValueError(
                    f"{self.kind} bank is not C^2 across the wrap point "
                    f"(order {order} jump {gap:.3e})"
                )


def _amplitudes(amplitudes, shape):
    if amplitudes is None:
        return np.ones(shape)
    amp = np.asarray(amplitudes, dtype=float)
    if amp.ndim == 0:
        return np.full(shape, float(amp))
    if amp.ndim == 1:
        amp = amp[:, None]
    if amp.shape != shape:
        raise ValueError(f"amplitudes must have shape {shape}, got {amp.shape}")
    return amp


class FourierBank(KernelBank):
    """Kernels with components ``A cos(2 pi f x + phase)`` and integer ``f``.

    ``amplitudes`` (scalar or per component, default 1) sets ``A``.
    """

    kind = "fourier-features"

    def __init__(self, frequencies, phases, amplitudes=None):
        freq = np.asarray(frequencies)
        if freq.ndim == 1:
            freq = freq[:, None]
        if not np.all(np.equal(np.mod(freq, 1), 0)):
            raise ValueError("fourier-features frequencies must be integers")
        ph = np.asarray(phases, dtype=float)
        if ph.ndim == 1:
            ph = ph[:, None]
        if ph.shape != freq.shape:
            raise ValueError("frequency and phase lists must have the same shape")
        super().__init__(*freq.shape)
        self.frequencies = freq.astype(np.int64)
        self.phases = ph
        self.amplitudes = _amplitudes(amplitudes, freq.shape)
        self._check_periodic()

    def _evaluate(self, x, order):
        f = self.frequencies[None, :, :]
        # reduce f*x mod 1 before scaling so integer shifts of x are exact
        arg = 2 * np.pi * np.mod(f * x[:, None, None], 1.0) + self.phases[None]
        w = 2 * np.pi * f
        amp = self.amplitudes[None]
        if order == 0:
            return amp * np.cos(arg)
        if order == 1:
            return -amp * w * np.sin(arg)
        return -amp * w**2 * np.cos(arg)

    def params(self):
        return {
            "kind": self.kind,
            "N": self.N,
            "d": self.d,
            "frequencies": self.frequencies.tolist(),
            "phases": self.phases.tolist(),
            "amplitudes": self.amplitudes.tolist(),
        }


class GaussianBank(KernelBank):
    """Periodized Gaussians ``sum_m exp(-(x - c + m)^2 / (2 w^2))``.

    The sum is truncated to the 5 images nearest to the centre; each
    component of each kernel has its own centre and amplitude.
    """

    kind = "periodized-gaussian"

    def __init__(self, centers, width, amplitudes=None):
        c = np.asarray(centers, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        if not 0.02 <= width <= _MAX_GAUSS_WIDTH:
            raise ValueError(f"gaussian width must lie in [0.02, {_MAX_GAUSS_WIDTH}]")
        super().__init__(*c.shape)
        self.centers = wrap(c)
        self.width = float(width)
        self.amplitudes = _amplitudes(amplitudes, c.shape)
        self._check_periodic()

    def _evaluate(self, x, order):
        r = np.mod(x[:, None, None] - self.centers[None] + 0.5, 1.0) - 0.5
        w2 = self.width**2
        out = np.zeros(r.shape)
        for m in range(-_GAUSS_IMAGES, _GAUSS_IMAGES + 1):
            s = r + m
            g = np.exp(-(s**2) / (2 * w2))
            if order == 0:
                out += g
            elif order == 1:
                out += -s / w2 * g
            else:
                out += (s**2 / w2**2 - 1 / w2) * g
        return self.amplitudes[None] * out

    def params(self):
        return {
            "kind": self.kind,
            "N": self.N,
            "d": self.d,
            "width": self.width,
            "centers": self.centers.tolist(),
            "amplitudes": self.amplitudes.tolist(),
        }


def random_fourier_bank(N, d=1, max_freq=10, seed=0, amplitude=1.0):
    rng = np.random.default_rng(seed)
    freq = rng.integers(0, max_freq + 1, size=(N, d))
    phases = rng.uniform(0, 2 * np.pi, size=(N, d))
    return FourierBank(freq, phases, amplitude)


def lowpass_fourier_bank(N, d=1, seed=None, amplitude=1.0):
    """Real low-pass Fourier measurements: cos/sin pairs of increasing frequency.

    Row ``i`` measures frequency ``(i + 1) // 2`` with a cosine for even ``i``
    and a sine for odd ``i``.  For ``d > 1`` each component gets an extra
    random phase drawn from ``seed`` so the components are not collinear.
    """
    i = np.arange(N)
    freq = np.repeat(((i + 1) // 2)[:, None], d, axis=1)
    phases = np.repeat(np.where(i % 2 == 1, -np.pi / 2, 0.0)[:, None], d, axis=1)
    if d > 1:
        rng = np.random.default_rng(seed)
        phases = phases + rng.uniform(0, 2 * np.pi, size=(N, d))
    return FourierBank(freq, phases, amplitude)


def uniform_gaussian_bank(N, d=1, width=0.05, amplitude=1.0):
    """Gaussians centred on a uniform grid; component ``k`` shifted by ``k/(d N)``."""
    c = (np.arange(N)[:, None] + np.arange(d)[None, :] / d) / N
    return GaussianBank(c, width, amplitude)


def kernel_eval(bank, i, x, order=0):
    """Value, first or second derivative of kernel ``i`` at ``x`` (shape ``(d,)``)."""
    if not 0 <= i < bank.N:
        raise IndexError(f"kernel index {i} out of range for N={bank.N}")
    return bank.evaluate([x], order)[0, i]


@dataclass
class KernelValidationReport:
    max_rel_err_order1: np.ndarray
    max_rel_err_order2: np.ndarray
    tol: float
    samples: int
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = bool(
            np.all(self.max_rel_err_order1 <= self.tol)
            and np.all(self.max_rel_err_order2 <= self.tol)
        )

    def worst(self):
        """(kernel index, order, error) of the worst offender."""
        e = np.stack([self.max_rel_err_order1, self.max_rel_err_order2])
        order, i = np.unravel_index(int(np.argmax(e)), e.shape)
        return int(i), int(order) + 1, float(e[order, i])

    def rows(self):
        return [
            (i, float(self.max_rel_err_order1[i]), float(self.max_rel_err_order2[i]))
            for i in range(len(self.max_rel_err_order1))
        ]


def validate_kernel_derivatives(bank, samples=100, tol=1e-6, h=1e-5, seed=0):
    """Compare analytic derivatives with central finite differences.

    The first derivative is checked against differences of the values and
    the second against differences of the (already checked) first
    derivative.  Errors are relative to the largest magnitude of the
    kernel or derivative over the sample, per kernel.

    Raises
    ------
    KernelValidationError
        If any kernel exceeds ``tol``; the report is attached.
    """
    if samples < 2:
        raise ValueError("need at least 2 samples")
    x = np.random.default_rng(seed).uniform(0, 1, samples)
    v0 = bank.evaluate(x, 0)
    v1 = bank.evaluate(x, 1)
    v2 = bank.evaluate(x, 2)
    fd1 = (bank.evaluate(x + h, 0) - bank.evaluate(x - h, 0)) / (2 * h)
    fd2 = (bank.evaluate(x + h, 1) - bank.evaluate(x - h, 1)) / (2 * h)

    def rel(analytic, fd, *refs):
        scale = np.max([np.max(np.abs(r), axis=(0, 2)) for r in refs], axis=0)
        scale = np.maximum(scale, np.finfo(float).tiny)
        return np.max(np.abs(analytic - fd), axis=(0, 2)) / scale

    report = KernelValidationReport(
        max_rel_err_order1=rel(v1, fd1, v0, v1),
        max_rel_err_order2=rel(v2, fd2, v0, v1, v2),
        tol=tol,
        samples=samples,
    )
    if not report.passed:
        i, order, err = report.worst()
        raise KernelValidationError(
            f"kernel {i}: order-{order} derivative off by {err:.3e} (tol {tol:.1e})",
            report,
        )
    return report
