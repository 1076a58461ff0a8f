"""Calibration and consistency toolkit for margin losses under adversarial perturbations."""

from .calibration import (
    CalibrationQuery,
    CalibrationValue,
    VerdictReport,
    calibration_verdict,
    delta_max_bruteforce,
    delta_max_reduced,
    uniform_delta,
)
from .consistency import (
    ExperimentConfig,
    SyntheticDistribution,
    consistency_experiment,
    empirical_risk,
    minimize_surrogate,
    sample_distribution,
)
from .errors import (
    AdvCalError,
    ConfigurationError,
    DomainError,
    InapplicableError,
    InvalidLossError,
    UnsupportedDimensionError,
    UnsupportedFamilyError,
    UnsupportedReductionError,
)
from .grids import DEFAULT_GRID, GridSpec
from .hypotheses import (
    HypothesisFamily,
    HypothesisPoint,
    MarginPair,
    MonotoneFn,
    a_bounds,
    adversarial_margins,
    eval_hypothesis,
    is_regular_at,
    margins_oracle,
    param_grid,
)
from .losses import (
    MarginLoss,
    cbar,
    cbar_interval_inf,
    eval_loss,
    sup_loss_value,
    verify_loss_properties,
)
from .risk import (
    adv01_inner_risk,
    inner_risk,
    minimal_inner_risk,
    region_classify,
)
from .theorems import (
    TheoremVerdict,
    check_qce_glm,
    check_qce_linear,
    check_relu_corollary,
    convex_negative_witness,
    regularity_theorem_check,
    sup_rho_positive_check,
)

__version__ = "0.1.0"
