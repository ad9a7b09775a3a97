"""Mean independent component analysis for multivariate time series."""
from .estimator import (
    EstimationResult,
    MicaConfig,
    estimate_mica,
    estimate_mica_sequential,
    objective_s,
)
from .exceptions import (
    ConfigError,
    DegenerateDenominator,
    DegenerateProjection,
    MicaError,
    SingularCovariance,
    TooManyFailures,
)
from .group import (
    Gmica1Result,
    GroupStructure,
    algorithm1,
    estimate_gmica_known,
    estimate_r,
    group_from_graph,
    objective_g,
    pair_stats,
)
from .mdd import dvar, make_lagged, mdc_sq, mdd_sq, tr_var_sq
from .ortho import (
    Alignment,
    align_columns,
    cayley_step,
    d_distance_scaled,
    dtilde_distance_scaled,
    givens_compose,
    haar_random,
)
from .harness import ExperimentConfig, ExperimentReport, load_config, run_experiment
from .simulate import DgpSpec, GeneratedData, adjusted_truth, generate, whiten

__version__ = "0.1.0"
