"""Identifiability and structure learning for Gaussian AMP chain graphs."""

from .errors import (
    CapabilityError,
    ChainIdError,
    ConvergenceError,
    DataError,
    GenerationError,
    SingularityError,
)
from .graph import ChainGraph, is_topological, shd, validate
from .learning import (
    LearnResult,
    empirical_covariance,
    learn_order_known,
    learn_order_known_from_data,
    learn_unknown,
    recover_edges,
)
from .linalg import CovMatrix, Statistic, conditional_cov, evaluate_statistic, log_det
from .sem import (
    AmpSem,
    Dataset,
    generate_certified_known_instance,
    generate_certified_unknown_instance,
    generate_sem,
    population_covariance,
    sample,
)
from .sfm import LogDetOracle, SubmodularOracle, brute_force_min, min_nonempty, min_norm_point

__version__ = "0.1.0"
