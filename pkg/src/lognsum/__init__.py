"""Distribution bounds and approximations for sums of independent lognormals."""
from importlib import metadata as _metadata

try:
    __version__ = _metadata.version("artifact")
except _metadata.PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .core import (
    DB_LAMBDA,
    GaussianParams,
    ShiftedLognormal,
    SumProblem,
    db_to_natural,
    log_q_function,
    q_function,
    shifted_lognormal_cdf,
    shifted_lognormal_pdf,
)
from .errors import (
    DomainError,
    IllConditionedInversionError,
    InvalidParameterError,
    LognsumError,
    NoRootError,
    NumericFailureError,
    TailUnderflowError,
    UnsupportedError,
)
from .means import am_tm_gap, arithmetic_mean, geometric_mean, tangential_mean
from .mellin import (
    ComplexAbscissa,
    QuadratureConfig,
    mellin_convolution_pdf,
    mellin_transform,
    product_cdf,
    product_pdf,
)
from .bound import BoundResult, gm_bound_cdf, left_tail_cdf, tm_bound_cdf, tm_bound_pdf
from .approx import (
    GaussHermiteRule,
    RecursionState,
    approx_n2,
    approx_recursive,
    clt_ccdf,
    clt_cdf,
    clt_moments,
    conditional_mean_and_norm,
    farley_ccdf,
    g_derivatives,
    gauss_hermite_rule,
    x0_epsilon,
    x0_solve,
)
from .montecarlo import (
    EmpiricalCurve,
    MCConfig,
    OutageEstimate,
    empirical_cdf,
    outage_estimate,
    outage_probability,
)
from .curves import DistributionCurve
