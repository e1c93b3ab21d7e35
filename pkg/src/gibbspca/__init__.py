"""Private PCA through the Gibbs (exponential) mechanism on the Stiefel manifold."""

__version__ = "0.1.0"

from .adaptive import AdaptiveResult, PrivateSpectralStats, adaptive_mechanism, privatize_stats
from .audit import (
    TradeoffEstimate,
    UtilityEstimate,
    compare_report,
    estimate_tradeoff,
    estimate_utility,
    procrustes_align,
    sphere_quadrature_moments,
)
from .errors import (
    ConfigError,
    DataError,
    GibbsPCAError,
    NormViolationWarning,
    RegimeError,
)
from .mechanism import (
    DEFAULT_SEED,
    GibbsTarget,
    OrthoFrame,
    SamplerConfig,
    ZeroFrame,
    exp_mechanism,
    sample,
    sample_approx,
    sample_batch,
    sample_exact_mh,
    sample_haar_frame,
)
from .preprocess import rank_covariance, rank_mechanism, rank_transform
from .spectral import (
    Dataset,
    SpectralSummary,
    covariance,
    eig_sym,
    hilbert,
    kkernel,
    spiked_dataset,
    spiked_summary,
    summarize,
)
from .theory import (
    beta_for_target,
    gdp_tradeoff,
    privacy_profile,
    renyi_gauss,
    sigma_beta,
    utility_prediction,
    variance_function,
    variance_function_datapoint,
    worst_case_neighbor,
)
