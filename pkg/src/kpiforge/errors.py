"""Exception types raised by the library.

Every error that callers are expected to catch has its own class so that
CLI exit-code mapping and tests can dispatch on type rather than on
message text.
"""


class KpiForgeError(Exception):
    """Base class for all library errors."""


class ConfigError(KpiForgeError):
    """A configuration file is missing, malformed, or inconsistent."""


class DataError(KpiForgeError):
    """Input data violates a contract (bad CSV, bad schema, bad values)."""


# --- tabular -----------------------------------------------------------

class MissingColumnError(DataError):
    """A column named by the schema is absent from the file header."""


class DuplicateColumnError(DataError):
    """The file header or the schema names a column twice."""


class EmptyFileError(DataError):
    """The file has no header row or no data rows."""


class TargetMissingValueError(DataError):
    """The target column contains a missing value; never imputable."""


class RejectedMissingError(DataError):
    """A reject-policy column contains missing values."""


class AllMissingError(DataError):
    """An impute-policy column has no observed values to impute from."""


class DegenerateSplitError(DataError):
    """A holdout split would leave one side empty."""


class MissingValuesError(DataError):
    """An operation that requires a cleaned table received missing cells."""


# --- cart / forest -----------------------------------------------------

class EmptyNodeError(KpiForgeError):
    """Impurity requested for an empty sample."""


class EmptyTrainingSetError(KpiForgeError):
    """fit was called with zero rows."""


class SchemaMismatchError(DataError):
    """A row or table does not match the schema the model was trained on."""


class InvalidParamsError(KpiForgeError):
    """Parameter values violate their documented ranges."""


class NoOobCoverageError(KpiForgeError):
    """Some rows are in-bag for every tree, so no out-of-bag estimate exists."""

    def __init__(self, rows):
        self.rows = tuple(rows)
        super().__init__(
            f"no out-of-bag coverage for rows {list(self.rows)[:10]}"
            + ("..." if len(self.rows) > 10 else "")
        )


# --- importance --------------------------------------------------------

class RepeatsZeroError(InvalidParamsError):
    """Permutation importance needs at least one repeat."""


class TooFewFeaturesError(KpiForgeError):
    """Rank correlation is undefined for fewer than two features."""


class SeedCollisionError(InvalidParamsError):
    """Stability selection was given duplicate master seeds."""


# --- kpi registry ------------------------------------------------------

class ThresholdInvalidError(InvalidParamsError):
    """Derivation thresholds outside their documented ranges."""


class CrossMacroMergeError(KpiForgeError):
    """Merge candidates must share one macro KPI."""


class AlreadyDecidedError(KpiForgeError):
    """The candidate has already been confirmed, rejected, or merged."""


class UnknownCandidateError(KpiForgeError):
    """No candidate with the given id exists in the registry."""


class UnknownMacroError(KpiForgeError):
    """No macro KPI with the given id exists in the registry."""


class DuplicateMacroError(KpiForgeError):
    """A macro KPI with the given id is already registered."""


# --- monitor -----------------------------------------------------------

class FeatureSetMismatchError(KpiForgeError):
    """Two importance reports cover different feature sets."""


class EmptyWindowError(DataError):
    """An evaluation window holds no rows."""


# --- synth -------------------------------------------------------------

class InvalidSpecError(ConfigError):
    """A generator specification violates its documented constraints."""


class InapplicableMutationError(KpiForgeError):
    """The requested window mutation does not apply to this spec."""
