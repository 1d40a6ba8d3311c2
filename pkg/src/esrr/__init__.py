"""Sparse recovery on the torus: BLASSO-type problems, dual certificates and ESRR sweeps."""

from .atoms import (
    AxisSpike,
    CanonicalSpike,
    ProblemInstance,
    SparseSignal,
    TorusSpike,
    VectorSpike,
    forward_signal,
)
from .certificate import (
    Certificate,
    MndscTolerances,
    check_mndsc,
    dual_feasibility_margin,
    eta_function,
    group_curve_second_derivative,
    minimal_norm_certificate_limit,
    minimal_norm_certificate_qp,
)
from .harness import AdmissibleRegion, draw_noise, match_atoms, run_sweep, uniqueness_probe
from .solver import SolverConfig, solve
from .torus import (
    FourierBank,
    GaussianBank,
    lowpass_fourier_bank,
    random_fourier_bank,
    uniform_gaussian_bank,
    validate_kernel_derivatives,
)

__version__ = "0.1.0"
