"""Message passing for linear and bilinear inverse problems.

UTAMP solvers, Bi-UTAMP for ``y = sum_k b_k A_k c + w`` (single and multiple
measurement vectors), state evolution, problem generators and metrics.
"""

from .amp import AmpConfig, AmpResult, estimate_beta, run_amp, run_utamp_v1, run_utamp_v2, transform_linear
from .bilinear import (
    BiUtampConfig,
    BiUtampResult,
    BiUtampState,
    biutamp_iteration,
    biutamp_mmv_iteration,
    biutamp_smv_iteration,
    init_state,
    lifted_residual,
    run_biutamp,
    run_biutamp_mmv,
    run_biutamp_smv,
)
from .denoisers import (
    BernoulliGaussianPrior,
    GaussianPrior,
    NonInformativePrior,
    PinnedPrior,
    PosteriorMoments,
    Prior,
    denoise,
    denoise_derivative,
    denoiser_mse,
    expected_mse,
)
from .estimators import BiUTAMPEstimator, UTAMPRegressor
from .exceptions import (
    BiUtampError,
    DegenerateModelError,
    DimensionError,
    DivergenceError,
    DomainError,
    NumericError,
)
from .metrics import TrialReport, nmse, nmse_ambiguous, oracle_bound_b, oracle_bound_c, to_db
from .model_transform import LiftedModel, TransformedModel, build_lifted, unitary_transform
from .problems import (
    Correlated,
    IidGaussian,
    IllConditioned,
    LowRank,
    NonZeroMean,
    gen_cs_mu,
    gen_dl,
    gen_matrix,
    load_instance,
    save_instance,
)
from .state_evolution import MseTable, build_mse_table, predict_biutamp, run_se, se_step

__version__ = "0.1.0"
