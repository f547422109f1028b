"""Exception hierarchy.

Every error carries a short machine-readable ``code``. ``UserError`` subclasses
map to CLI exit status 1, ``NumericalError`` subclasses to exit status 2.
"""


class ProfmatchError(Exception):
    code = "error"
    exit_status = 1


class UserError(ProfmatchError):
    code = "user_error"
    exit_status = 1


class NumericalError(ProfmatchError):
    code = "numerical_error"
    exit_status = 2


# numerics
class FactorizationError(NumericalError):
    code = "factorization"


class DomainError(UserError):
    code = "domain"


class EmptyInputError(UserError):
    code = "empty_input"


# glm
class RankError(NumericalError):
    code = "rank_deficient"


class SeparationError(NumericalError):
    code = "separation"


class DegenerateResponseError(NumericalError):
    code = "degenerate_response"


class UnderdeterminedError(NumericalError):
    code = "underdetermined"


class ShapeError(UserError):
    code = "shape"


# balance
class ColumnError(UserError):
    code = "missing_column"


class DataError(UserError):
    code = "data"


class ZeroVarianceError(NumericalError):
    code = "zero_variance"


class DegenerateWeightsError(NumericalError):
    code = "degenerate_weights"


# solver / matching
class LpError(NumericalError):
    code = "lp_failure"


class SizeError(UserError):
    code = "size"


# estimators / simulation
class EmptyArmError(NumericalError):
    code = "empty_arm"


class PositivityError(NumericalError):
    code = "positivity"


class BootstrapDegenerateError(NumericalError):
    code = "bootstrap_degenerate"


class ScenarioDegenerateError(NumericalError):
    code = "scenario_degenerate"


# paired analysis
class DegenerateError(NumericalError):
    code = "degenerate"


# io
class ConfigError(UserError):
    code = "config"


class ParseError(UserError):
    code = "parse"


class ProfileFormatError(UserError):
    code = "profile_format"
