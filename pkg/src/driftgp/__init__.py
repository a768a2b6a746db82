"""driftgp: drifted stationary Gaussian processes at high frequency.

Simulation (exact circulant-embedding / Cholesky sampling), local-Gauss
contrast estimation of drift and kernel parameters, moment corrections for
parameters the contrast cannot identify, and a Monte Carlo harness with
preset replication studies.
"""

__version__ = "0.1.0"

from .asymptotics import AsymptoticInfo, fisher_blocks, standard_errors
from .contrast import (
    EstimateReport,
    est_sde_beta,
    estimate_gaussian_kernel_model,
    gaussian_kernel_gamma,
    least_squares_drift,
    local_gauss_contrast,
    minimize_contrast,
    mollified_ou_beta,
    rq_estimate,
)
from .drift import DriftModel, dri_tail_mass, drift_eval, drift_grad_xi, drift_integral
from .errors import (
    CapabilityError,
    ConfigError,
    DegenerateVarianceError,
    DriftGPError,
    NumericalError,
    ParameterDomainError,
    RootNotFoundError,
    SimulationError,
    UnidentifiableError,
)
from .experiments import (
    ExperimentConfig,
    RepRecord,
    SummaryTable,
    case_preset,
    qq_correlation,
    qq_data,
    run_case,
    summarize,
)
from .kernels import (
    KernelModel,
    MollifierSpec,
    gram_matrix,
    kernel_d2_at_zero,
    kernel_d4_at_zero,
    kernel_eval,
    local_variance,
)
from .moments import (
    DetrendedSeries,
    detrend,
    empirical_increment_moment,
    estimate_k4,
    g_functional,
    g_functional_limit,
    increment_moment_limit,
    k4_from_moments,
    moment_alpha,
    moment_beta,
    newey_west_lrv,
    z_estimator,
)
from .simulate import (
    GaussianPathSampler,
    PathSample,
    SamplingScheme,
    derive_seed,
    empirical_covariance,
    read_path_csv,
    sample_stationary_gp,
    simulate_model,
    write_path_csv,
)

__all__ = [name for name in dir() if not name.startswith("_")]
