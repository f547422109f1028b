"""Profile matching: largest self-weighted subsamples balanced toward a
target covariate profile, with estimators, simulation, and paired
sensitivity analysis."""

from .balance import FeatureSpec, Profile, eval_features, kish_ess, profile_from_target, tasmd
from .errors import NumericalError, ProfmatchError, UserError
from .matching import MatchRequest, optimal_rematch, pairwise_cardinality_match, profile_match
from .solver import BalanceProblem, SelectionResult, brute_force_reference, solve_max_balanced_subset

__version__ = "0.1.0"

__all__ = [
    "BalanceProblem",
    "FeatureSpec",
    "MatchRequest",
    "NumericalError",
    "Profile",
    "ProfmatchError",
    "SelectionResult",
    "UserError",
    "brute_force_reference",
    "eval_features",
    "kish_ess",
    "optimal_rematch",
    "pairwise_cardinality_match",
    "profile_from_target",
    "profile_match",
    "solve_max_balanced_subset",
    "tasmd",
]
