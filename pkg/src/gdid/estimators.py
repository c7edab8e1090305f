"""Point estimators for the ATT and its comparison estimands.

All estimators return an :class:`AttEstimate` carrying the per-unit
(uncentered) influence contributions whose sum over the normalizer reproduces
the point estimate exactly; inference lives in :mod:`gdid.inference`.

The generalized estimator debiases the post-period AIPW ignorability estimate
by subtracting the analogous pre-period estimate, summand by summand:

    tau_hat = n1^{-1} sum_i [ Y_i1 A_i
                - ((1-A_i) pi Y_i1 + (A_i - pi) mu1) / (1 - pi)
                - Y_i0 A_i
                + ((1-A_i) pi0 Y_i0 + (A_i - pi0) mu0) / (1 - pi0) ]

with the propensities clipped above at 1 - trim_eps.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegeneratePropensityError,
    MissingComponentError,
    MissingFitsError,
    MissingTreatedArmFitsError,
    NoControlUnitsError,
    NoTreatedUnitsError,
)
from .learners import NuisanceFits
from .panel_data import PanelDataset

ESTIMANDS = ("gdid", "ignorability_post", "ignorability_pre", "did", "cdid",
             "ate_gdid")

IMPUTATION_KINDS = ("eta_ign", "eta_cdid", "eta_gdid")


@dataclass
class AttEstimate:
    """Point estimate plus per-unit influence contributions.

    ``influence`` holds uncentered summands: influence.sum() / normalizer ==
    tau_hat exactly. ``centering`` is what the plug-in variance subtracts from
    each entry (tau_hat for iid estimands; scaled by cluster exposure in the
    clustered design). normalizer is n_treated for ATT estimands, the unit
    count for the ATE variant, and the cluster count for clustered estimates.
    """

    estimand: str
    tau_hat: float
    influence: np.ndarray
    normalizer: float
    n: int
    n_treated: int
    trim_eps: float
    centering: np.ndarray | None = None
    fits: NuisanceFits | None = None
    se: float | None = None
    ci_lower: float | None = None
    ci_upper: float | None = None
    inference_method: str | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.influence = np.asarray(self.influence, dtype=float)
        if self.centering is None:
            self.centering = np.full(self.influence.shape, self.tau_hat)
        if self.n_treated <= 0:
            raise NoTreatedUnitsError("estimate requires at least one treated unit")
        total = self.influence.sum() / self.normalizer
        if not np.isclose(total, self.tau_hat, rtol=0, atol=1e-10 * max(1, abs(self.tau_hat))):
            raise AssertionError("influence contributions do not reproduce tau_hat")

    def centered_influence(self) -> np.ndarray:
        return self.influence - self.centering

    def to_json_dict(self, config: dict | None = None) -> dict:
        payload = {
            "estimand": self.estimand,
            "tau_hat": self.tau_hat,
            "se": self.se,
            "ci_lower": self.ci_lower,
            "ci_upper": self.ci_upper,
            "n": self.n,
            "n_treated": self.n_treated,
            "trim_eps": self.trim_eps,
            "inference": self.inference_method,
            "config_digest": config_digest(config or {}),
        }
        return payload


def config_digest(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _require_arms(dataset: PanelDataset):
    n1 = dataset.n_treated
    if n1 == 0:
        raise NoTreatedUnitsError("no treated units in dataset")
    if n1 == dataset.n_units:
        raise NoControlUnitsError("no control units in dataset")
    return n1


def aipw_att_summands(y, a, mu, pi, trim_eps: float) -> np.ndarray:
    """Per-unit AIPW ATT summands with the propensity clipped at 1 - trim_eps."""
    y = np.asarray(y, dtype=float)
    a = np.asarray(a, dtype=float)
    pi = np.minimum(np.asarray(pi, dtype=float), 1.0 - trim_eps)
    denom = 1.0 - pi
    if (denom <= 0).any():
        raise DegeneratePropensityError("propensity reached 1 despite clipping")
    return y * a - ((1.0 - a) * pi * y + (a - pi) * mu) / denom


def estimate_aipw_att(dataset: PanelDataset, outcome_time: int,
                      fits: NuisanceFits, trim_eps: float = 0.01) -> AttEstimate:
    """Single-period AIPW ignorability estimate (post t=1 or pre t=0)."""
    n1 = _require_arms(dataset)
    if fits is None:
        raise MissingFitsError("nuisance fits are required")
    a = dataset.treatment
    if outcome_time == 1:
        y, mu, pi = dataset.outcome_at(1), fits.mu1_hat, fits.pi_hat
        estimand = "ignorability_post"
    elif outcome_time == 0:
        y, mu, pi = dataset.outcome_at(0), fits.mu0_hat, fits.pi0_hat
        estimand = "ignorability_pre"
    else:
        raise ValueError("outcome_time must be 0 or 1")
    if mu is None or pi is None:
        raise MissingFitsError(f"fits lack predictions for period {outcome_time}")
    s = aipw_att_summands(y, a, mu, pi, trim_eps)
    tau = float(s.sum() / n1)
    return AttEstimate(estimand=estimand, tau_hat=tau, influence=s,
                       normalizer=float(n1), n=dataset.n_units, n_treated=n1,
                       trim_eps=trim_eps, fits=fits)


def estimate_gdid(dataset: PanelDataset, fits: NuisanceFits,
                  trim_eps: float = 0.01) -> AttEstimate:
    """Doubly robust generalized DiD: post-period minus pre-period summands."""
    n1 = _require_arms(dataset)
    if fits is None:
        raise MissingFitsError("nuisance fits are required")
    a = dataset.treatment
    s1 = aipw_att_summands(dataset.outcome_at(1), a, fits.mu1_hat, fits.pi_hat,
                           trim_eps)
    s0 = aipw_att_summands(dataset.outcome_at(0), a, fits.mu0_hat, fits.pi0_hat,
                           trim_eps)
    s = s1 - s0
    tau = float(s.sum() / n1)
    return AttEstimate(estimand="gdid", tau_hat=tau, influence=s,
                       normalizer=float(n1), n=dataset.n_units, n_treated=n1,
                       trim_eps=trim_eps, fits=fits)


def estimate_did(dataset: PanelDataset) -> AttEstimate:
    """Unconditional two-group, two-period difference in trend means.

    Computed through the AIPW summands with the exact constant fits (control
    means and the sample treated share), which reproduces the textbook
    estimator exactly and yields influence contributions in the same scale as
    the other estimands.
    """
    n1 = _require_arms(dataset)
    a = dataset.treatment
    y1, y0 = dataset.outcome_at(1), dataset.outcome_at(0)
    controls = a == 0
    share = n1 / dataset.n_units
    s1 = aipw_att_summands(y1, a, np.full(dataset.n_units, y1[controls].mean()),
                           np.full(dataset.n_units, share), trim_eps=0.0)
    s0 = aipw_att_summands(y0, a, np.full(dataset.n_units, y0[controls].mean()),
                           np.full(dataset.n_units, share), trim_eps=0.0)
    s = s1 - s0
    tau = float(s.sum() / n1)
    return AttEstimate(estimand="did", tau_hat=tau, influence=s,
                       normalizer=float(n1), n=dataset.n_units, n_treated=n1,
                       trim_eps=0.0)


def estimate_cdid(dataset: PanelDataset, fits: NuisanceFits,
                  trim_eps: float = 0.01) -> AttEstimate:
    """Conditional DiD: the generalized pipeline on the covariates-only set."""
    if fits.lag_depth != 0:
        raise MissingFitsError("cdid requires fits built with lag_depth=0")
    est = estimate_gdid(dataset, fits, trim_eps)
    est.estimand = "cdid"
    return est


def estimate_ate_gdid(dataset: PanelDataset, fits: NuisanceFits,
                      trim_eps: float = 0.01) -> AttEstimate:
    """ATE analogue: difference of post- and pre-period AIPW ATE estimators.

    Requires treated-arm outcome regressions in addition to the control-arm
    ones; propensities are clipped two-sided to [trim_eps, 1 - trim_eps] and
    the average runs over all units.
    """
    _require_arms(dataset)
    if fits.mu1_treated is None or fits.mu0_treated is None:
        raise MissingTreatedArmFitsError(
            "ATE requires treated-arm outcome regressions "
            "(cross_fit_nuisances(include_treated_arm=True))")
    a = dataset.treatment.astype(float)
    n = dataset.n_units

    def period(y, mu_t, mu_c, pi):
        pi = np.clip(pi, trim_eps, 1.0 - trim_eps)
        return (mu_t - mu_c + a * (y - mu_t) / pi
                - (1.0 - a) * (y - mu_c) / (1.0 - pi))

    s1 = period(dataset.outcome_at(1), fits.mu1_treated, fits.mu1_hat, fits.pi_hat)
    s0 = period(dataset.outcome_at(0), fits.mu0_treated, fits.mu0_hat, fits.pi0_hat)
    s = s1 - s0
    tau = float(s.sum() / n)
    return AttEstimate(estimand="ate_gdid", tau_hat=tau, influence=s,
                       normalizer=float(n), n=n, n_treated=dataset.n_treated,
                       trim_eps=trim_eps, fits=fits)


def impute_counterfactual(kind: str, y0=None, mu1_w0=None, mu0_wm1=None,
                          delta=None):
    """Impute the untreated post-period outcome for treated units.

    eta_ign  = mu1(W0); eta_cdid = Y0 + delta(X);
    eta_gdid = Y0 + mu1(W0) - mu0(W-1).
    """
    if kind not in IMPUTATION_KINDS:
        raise ValueError(f"unknown imputation kind {kind!r}")
    if kind == "eta_ign":
        if mu1_w0 is None:
            raise MissingComponentError("eta_ign requires mu1(W0)")
        return np.asarray(mu1_w0, dtype=float)
    if kind == "eta_cdid":
        if y0 is None or delta is None:
            raise MissingComponentError("eta_cdid requires Y0 and delta(X)")
        return np.asarray(y0, dtype=float) + np.asarray(delta, dtype=float)
    if y0 is None or mu1_w0 is None or mu0_wm1 is None:
        raise MissingComponentError("eta_gdid requires Y0, mu1(W0), mu0(W-1)")
    return (np.asarray(y0, dtype=float) + np.asarray(mu1_w0, dtype=float)
            - np.asarray(mu0_wm1, dtype=float))
