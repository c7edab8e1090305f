"""Exception hierarchy shared across the package.

Every error carries a short machine-readable ``code`` that the CLI maps into
its JSON error payloads and exit codes.
"""

from __future__ import annotations


class GdidError(Exception):
    """Base class for all package errors."""

    code = "error"


class ConfigError(GdidError):
    code = "config"


# --- panel data -------------------------------------------------------------

class MissingCellError(GdidError):
    code = "missing_cell"


class NonBinaryTreatmentError(GdidError):
    code = "non_binary_treatment"


class DuplicateRowError(GdidError):
    code = "duplicate_row"


class InsufficientHistoryError(GdidError):
    code = "insufficient_history"


# --- learners ---------------------------------------------------------------

class SingularDesignError(GdidError):
    code = "singular_design"


class NotEnoughNeighborsError(GdidError):
    code = "not_enough_neighbors"


class FoldWithoutControlsError(GdidError):
    code = "fold_without_controls"


class SeparationWarning(UserWarning):
    """Perfect separation detected in a propensity fit; ridge fallback used."""


# --- estimators -------------------------------------------------------------

class MissingFitsError(GdidError):
    code = "missing_fits"


class MissingTreatedArmFitsError(GdidError):
    code = "missing_treated_arm_fits"


class MissingComponentError(GdidError):
    code = "missing_component"


class DegeneratePropensityError(GdidError):
    code = "degenerate_propensity"


class NoTreatedUnitsError(GdidError):
    code = "no_treated_units"


class NoControlUnitsError(GdidError):
    code = "no_control_units"


# --- inference --------------------------------------------------------------

class EmptyInfluenceError(GdidError):
    code = "empty_influence"


class SingularJacobianError(GdidError):
    code = "singular_jacobian"


class NotParametricPathError(GdidError):
    code = "not_parametric_path"


# --- staggered --------------------------------------------------------------

class NoNeverTreatedUnitsError(GdidError):
    code = "no_never_treated_units"


class HistoryNotInXiError(GdidError):
    code = "history_not_in_xi"


class WeightMismatchError(GdidError):
    code = "weight_mismatch"


class EmptySelectionError(GdidError):
    code = "empty_selection"


# --- clustered --------------------------------------------------------------

class EmptyClusterError(GdidError):
    code = "empty_cluster"


class ClusterPropensityMismatchError(GdidError):
    code = "cluster_propensity_mismatch"


# --- simulation -------------------------------------------------------------

class AllReplicatesFailedError(GdidError):
    code = "all_replicates_failed"


class NotSpecifiedError(GdidError):
    code = "not_specified"
