"""Bound states and threshold behaviour of rank-one perturbed two-particle operators on the torus."""

__version__ = "0.1.0"

from .catalog import (  # noqa: E402
    ModelSpec,
    TorusPoint,
    derivatives_w,
    eval_phi,
    eval_w,
    make_model,
    reference_models,
)
from .errors import (  # noqa: E402
    ConfigurationError,
    DivergenceError,
    DomainError,
    InadmissibleMomentumError,
    InconsistencyError,
    NonConvergenceError,
    NumericError,
    PoorFitError,
    QuadratureError,
    ResolutionError,
    ThresholdSpectraError,
)
from .quadrature import QuadratureEstimate, integrate_auto, integrate_near_threshold, integrate_periodic  # noqa: E402
from .spectral import (  # noqa: E402
    BandInfo,
    EigenvalueResult,
    NormProfile,
    band_edges,
    coupling_threshold,
    delta,
    eigenvalue,
    grid_oracle_extrapolated,
    omega,
    threshold_norm_profile,
    threshold_solution,
)
from .threshold import ThresholdReport, classify, leading_coefficients, log_fit_coefficient  # noqa: E402
from .asymptotics import FitResult, SweepTable, fit_case, sweep_eigenvalues  # noqa: E402
