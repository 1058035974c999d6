"""Estimation of ln sigma and entropy for several exponential populations sharing a scale."""

from .errors import (
    BracketError,
    ContractError,
    DomainError,
    ExpoEntropyError,
    NumericError,
    QuadratureError,
    SimulationError,
    ValidationError,
)
from .estimators import (
    EstimateReport,
    SufficientStats,
    bayes_squared_error,
    brewster_zidek,
    bz_closed_form_k2,
    bz_offset,
    entropy_from_theta,
    mrie,
    stein,
)
from .losses import (
    LossConstants,
    LossModel,
    check_dominance_condition,
    compute_constants,
    linex_loss,
    loss_from_name,
    squared_error_loss,
)
from .numerics import QuadratureSpec, digamma, gamma_expectation, gamma_weighted_integral, log_gamma, trigamma
from .sampling import SchemeConfig, generate, reduce
from .simulation import DominanceReport, RiskRow, RiskTable, SimulationPlan, dominance_scan, estimate_risk, pri_table

__version__ = "0.1.0"
