"""Panel data ingestion, reshaping, and overlap diagnostics.

A :class:`PanelDataset` is a balanced units-by-time grid with a single
post-treatment period. Time indices are normalized to consecutive integers
ending at t=1 (the post period), whatever the calendar labels in the input
were. Conditioning sets stack the time-invariant covariates with a
configurable number of lagged outcomes anchored at a pre-treatment period.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    DuplicateRowError,
    InsufficientHistoryError,
    MissingCellError,
    NonBinaryTreatmentError,
)


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class PanelDataset:
    """Balanced panel with one post period.

    outcomes[i, j] is the outcome of unit i at times[j]; times are strictly
    increasing consecutive integers ending at 1. covariates are time-invariant.
    """

    unit_ids: tuple[str, ...]
    times: tuple[int, ...]
    outcomes: np.ndarray          # (n, T) float
    covariates: np.ndarray        # (n, p) float
    treatment: np.ndarray         # (n,) int in {0, 1}
    covariate_names: tuple[str, ...] = ()

    def __post_init__(self):
        n = len(self.unit_ids)
        outcomes = np.asarray(self.outcomes, dtype=float)
        covariates = np.asarray(self.covariates, dtype=float)
        if covariates.ndim == 1:
            covariates = covariates.reshape(n, -1) if covariates.size else covariates.reshape(n, 0)
        treatment = np.asarray(self.treatment)
        if outcomes.shape != (n, len(self.times)):
            raise ValueError(f"outcomes shape {outcomes.shape} does not match "
                             f"{n} units x {len(self.times)} times")
        if covariates.shape[0] != n:
            raise ValueError("covariates row count does not match unit count")
        if treatment.shape != (n,):
            raise ValueError("treatment must be one value per unit")
        if not np.isin(treatment, (0, 1)).all():
            raise NonBinaryTreatmentError("treatment values must be 0 or 1")
        if not np.isfinite(outcomes).all():
            raise MissingCellError("outcomes contain non-finite cells")
        if not np.isfinite(covariates).all():
            raise MissingCellError("covariates contain non-finite values")
        times = tuple(int(t) for t in self.times)
        if len(times) < 2 or times[-1] != 1 or any(
                b - a != 1 for a, b in zip(times, times[1:])):
            raise ValueError("times must be consecutive integers ending at 1")
        names = tuple(self.covariate_names) or tuple(
            f"x{j + 1}" for j in range(covariates.shape[1]))
        if len(names) != covariates.shape[1]:
            raise ValueError("covariate_names length mismatch")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "outcomes", _freeze(outcomes))
        object.__setattr__(self, "covariates", _freeze(covariates))
        object.__setattr__(self, "treatment", _freeze(treatment.astype(np.int8)))
        object.__setattr__(self, "covariate_names", names)

    @property
    def n_units(self) -> int:
        return len(self.unit_ids)

    @property
    def n_covariates(self) -> int:
        return self.covariates.shape[1]

    @property
    def n_treated(self) -> int:
        return int(self.treatment.sum())

    @property
    def t_min(self) -> int:
        return self.times[0]

    def time_index(self, t: int) -> int:
        try:
            return self.times.index(t)
        except ValueError:
            raise KeyError(f"time {t} not in panel times {self.times}") from None

    def outcome_at(self, t: int) -> np.ndarray:
        return self.outcomes[:, self.time_index(t)]


@dataclass(frozen=True)
class ConditioningSet:
    """Per-unit feature matrix (X_i, Y_anchor, ..., Y_{anchor-lag_depth+1})."""

    anchor_time: int
    lag_depth: int
    features: np.ndarray          # (n, p + lag_depth)
    feature_names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "features", _freeze(np.asarray(self.features, dtype=float)))

    @property
    def width(self) -> int:
        return self.features.shape[1]


@dataclass
class ValidationReport:
    overlap_diagnostics: dict
    structural_errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.structural_errors


@dataclass(frozen=True)
class PanelSchema:
    """Column mapping for CSV ingestion.

    layout "long": one row per (unit, time); layout "wide": one row per unit
    with outcome_cols mapping column name -> raw time label.
    """

    layout: str = "long"
    unit_col: str = "unit"
    time_col: str = "time"
    outcome_col: str = "outcome"
    treatment_col: str = "treatment"
    covariate_cols: tuple[str, ...] = ()
    outcome_cols: tuple[tuple[str, int], ...] = ()   # wide layout only
    cluster_col: str | None = None

    def __post_init__(self):
        if self.layout not in ("long", "wide"):
            raise ConfigError(f"unknown layout {self.layout!r}")
        if self.layout == "wide" and not self.outcome_cols:
            raise ConfigError("wide layout requires outcome_cols mapping")


def _canonical_times(raw_labels) -> dict:
    """Map sorted raw time labels to consecutive integers ending at 1."""
    labels = sorted(set(raw_labels))
    T = len(labels)
    return {lab: j - T + 2 for j, lab in enumerate(labels)}


def _parse_float(text: str, where: str) -> float:
    text = text.strip()
    if text == "" or text.lower() in ("na", "nan"):
        raise MissingCellError(f"missing value in {where}")
    return float(text)


def _parse_treatment(text: str, where: str) -> int:
    text = text.strip()
    if text not in ("0", "1"):
        raise NonBinaryTreatmentError(f"treatment value {text!r} in {where} is not 0/1")
    return int(text)


def load_panel_csv(path, schema: PanelSchema):
    """Load a UTF-8 CSV (header required) into a balanced :class:`PanelDataset`.

    Returns (dataset, cluster_labels) where cluster_labels is None unless the
    schema names a cluster column.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ConfigError(f"{path}: empty file")
        rows = list(reader)
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    missing = _schema_columns(schema) - set(rows[0].keys())
    if missing:
        raise ConfigError(f"{path}: missing columns {sorted(missing)}")
    if schema.layout == "long":
        return _from_long(rows, schema)
    return _from_wide(rows, schema)


def _schema_columns(schema: PanelSchema) -> set:
    cols = {schema.unit_col, schema.treatment_col}
    cols.update(schema.covariate_cols)
    if schema.layout == "long":
        cols.update({schema.time_col, schema.outcome_col})
    else:
        cols.update(name for name, _ in schema.outcome_cols)
    if schema.cluster_col:
        cols.add(schema.cluster_col)
    return cols


def _maybe_int(label: str):
    try:
        return int(label)
    except ValueError:
        return label


def _from_long(rows, schema):
    cells: dict[tuple, float] = {}
    unit_order: list[str] = []
    raw_times = set()
    treat: dict[str, int] = {}
    covs: dict[str, tuple] = {}
    clusters: dict[str, str] = {}
    for k, row in enumerate(rows):
        unit = row[schema.unit_col].strip()
        t = _maybe_int(row[schema.time_col].strip())
        where = f"row {k + 2} (unit {unit}, time {t})"
        if (unit, t) in cells:
            raise DuplicateRowError(f"duplicate row for unit {unit} at time {t}")
        cells[(unit, t)] = _parse_float(row[schema.outcome_col], where)
        raw_times.add(t)
        a = _parse_treatment(row[schema.treatment_col], where)
        if unit in treat and treat[unit] != a:
            raise NonBinaryTreatmentError(
                f"unit {unit} has inconsistent treatment values across rows")
        x = tuple(_parse_float(row[c], where) for c in schema.covariate_cols)
        if unit in covs and covs[unit] != x:
            raise MissingCellError(f"unit {unit} has inconsistent covariate values")
        if unit not in treat:
            unit_order.append(unit)
        treat[unit] = a
        covs[unit] = x
        if schema.cluster_col:
            clusters[unit] = row[schema.cluster_col].strip()
    time_map = _canonical_times(raw_times)
    ordered_raw = sorted(time_map, key=time_map.get)
    outcomes = np.empty((len(unit_order), len(ordered_raw)))
    for i, unit in enumerate(unit_order):
        for j, t in enumerate(ordered_raw):
            if (unit, t) not in cells:
                raise MissingCellError(f"unit {unit} lacks an outcome at time {t}")
            outcomes[i, j] = cells[(unit, t)]
    dataset = PanelDataset(
        unit_ids=tuple(unit_order),
        times=tuple(time_map[t] for t in ordered_raw),
        outcomes=outcomes,
        covariates=np.array([covs[u] for u in unit_order], dtype=float).reshape(
            len(unit_order), len(schema.covariate_cols)),
        treatment=np.array([treat[u] for u in unit_order]),
        covariate_names=tuple(schema.covariate_cols),
    )
    labels = [clusters[u] for u in unit_order] if schema.cluster_col else None
    return dataset, labels


def _from_wide(rows, schema):
    unit_order, seen = [], set()
    outcome_cols = list(schema.outcome_cols)
    time_map = _canonical_times([t for _, t in outcome_cols])
    if len(time_map) != len(outcome_cols):
        raise ConfigError("outcome_cols map two columns to the same time")
    outcome_cols.sort(key=lambda item: time_map[item[1]])
    outcomes, covs, treat, clusters = [], [], [], []
    for k, row in enumerate(rows):
        unit = row[schema.unit_col].strip()
        where = f"row {k + 2} (unit {unit})"
        if unit in seen:
            raise DuplicateRowError(f"duplicate row for unit {unit}")
        seen.add(unit)
        unit_order.append(unit)
        outcomes.append([_parse_float(row[c], where) for c, _ in outcome_cols])
        treat.append(_parse_treatment(row[schema.treatment_col], where))
        covs.append([_parse_float(row[c], where) for c in schema.covariate_cols])
        if schema.cluster_col:
            clusters.append(row[schema.cluster_col].strip())
    dataset = PanelDataset(
        unit_ids=tuple(unit_order),
        times=tuple(sorted(time_map.values())),
        outcomes=np.array(outcomes, dtype=float),
        covariates=np.array(covs, dtype=float).reshape(len(unit_order),
                                                       len(schema.covariate_cols)),
        treatment=np.array(treat),
        covariate_names=tuple(schema.covariate_cols),
    )
    return dataset, (clusters if schema.cluster_col else None)


def build_conditioning(dataset: PanelDataset, anchor_time: int,
                       lag_depth: int) -> ConditioningSet:
    """Stack covariates with lag_depth outcomes ending at anchor_time.

    Feature row i is (X_i, Y_{i,anchor}, ..., Y_{i,anchor-lag_depth+1}).
    """
    if anchor_time > 0:
        raise ValueError("anchor_time must be a pre-treatment period (<= 0)")
    if lag_depth < 0:
        raise ValueError("lag_depth must be non-negative")
    if lag_depth and anchor_time - lag_depth + 1 < dataset.t_min:
        raise InsufficientHistoryError(
            f"lag_depth {lag_depth} at anchor {anchor_time} reaches before "
            f"t_min={dataset.t_min}")
    cols = [dataset.covariates]
    names = list(dataset.covariate_names)
    for lag in range(lag_depth):
        t = anchor_time - lag
        cols.append(dataset.outcome_at(t).reshape(-1, 1))
        names.append(f"y[{t}]")
    features = np.hstack(cols) if cols else np.empty((dataset.n_units, 0))
    return ConditioningSet(anchor_time=anchor_time, lag_depth=lag_depth,
                           features=features, feature_names=tuple(names))


def validate(dataset: PanelDataset, conditioning: ConditioningSet,
             trim_eps: float = 0.01) -> ValidationReport:
    """Overlap diagnostics on the conditioning set (Assumption-3 style).

    Fits a crude logistic propensity on the conditioning features and reports
    the share of units whose estimate exceeds 1 - trim_eps, plus separation
    flags. Diagnostic only; never raises on bad overlap.
    """
    if not 0 < trim_eps < 0.5:
        raise ValueError("trim_eps must lie in (0, 0.5)")
    errors, warnings = [], []
    a = dataset.treatment
    n1 = int(a.sum())
    if n1 == 0:
        errors.append("no treated units")
    if n1 == dataset.n_units:
        errors.append("no control units")
    if conditioning.features.shape[0] != dataset.n_units:
        errors.append("conditioning set does not match dataset units")
    diagnostics = {
        "n": dataset.n_units,
        "n_treated": n1,
        "trim_eps": trim_eps,
        "feature_width": conditioning.width,
    }
    if not errors:
        from .learners import LearnerSpec, fit_propensity

        with np.errstate(all="ignore"):
            import warnings as _w
            with _w.catch_warnings(record=True) as caught:
                _w.simplefilter("always")
                model = fit_propensity(conditioning.features, a,
                                       LearnerSpec(kind="logistic"))
            pi = model.predict(conditioning.features)
        separated = bool(getattr(model, "separation_flagged", False))
        share_high = float(np.mean(pi > 1 - trim_eps))
        share_low = float(np.mean(pi < trim_eps))
        diagnostics.update({
            "propensity_min": float(pi.min()),
            "propensity_max": float(pi.max()),
            "propensity_mean": float(pi.mean()),
            "share_above_1_minus_eps": share_high,
            "share_below_eps": share_low,
            "decile_means": [float(v) for v in _decile_means(pi)],
            "complete_separation": separated,
        })
        if separated:
            warnings.append("complete separation in crude propensity fit")
        if share_high > 0:
            warnings.append(
                f"{share_high:.1%} of units have crude propensity above "
                f"{1 - trim_eps:g}; positivity may be (nearly) violated")
        del caught
    return ValidationReport(overlap_diagnostics=diagnostics,
                            structural_errors=errors, warnings=warnings)


def _decile_means(pi: np.ndarray) -> np.ndarray:
    order = np.sort(pi)
    return np.array([chunk.mean() for chunk in np.array_split(order, 10) if chunk.size])
