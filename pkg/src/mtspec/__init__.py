"""Log-spectral density estimation with sinusoidal multitapers, adaptive
kernel smoothing and optimal boundary kernels."""

from .boundary import (
    BoundaryGeometry,
    BoundaryKernel,
    continuum_boundary_kernel,
    equivalent_weighting,
    lpr_fit,
    lpr_weighting_from_kernel,
    solve_boundary_coeffs,
    touch_point,
)
from .errors import (
    BandwidthTooSmallError,
    BoundaryCrossingError,
    DegenerateEstimateError,
    GridDegeneracyError,
    InvalidArgumentError,
    MtspecError,
    NoTouchPointError,
    PipelineStageError,
)
from .kernels import Kernel, epanechnikov, interior_kernel, kernel_smooth, optimal_halfwidth
from .pipeline import (
    AdaptiveResult,
    BandwidthProfile,
    PipelineConfig,
    adaptive_estimate,
    adaptive_from_estimates,
    default_taper_count,
    halfwidth_quotient,
    rice_global_bandwidth,
)
from .synth import (
    EaseReport,
    FixedBandwidth,
    PipelineEstimator,
    ProcessSpec,
    generate,
    monte_carlo_ease,
    oracle_spectrum,
)
from .tapers import (
    FrequencyGrid,
    LogSpectralEstimate,
    SpectralEstimate,
    TaperSet,
    TimeSeries,
    log_multitaper,
    multitaper_spectrum,
    single_taper_log_periodogram,
    sinusoidal_tapers,
)

__version__ = "0.1.0"
