import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gdid.errors import MissingComponentError, MissingTreatedArmFitsError
from gdid.estimators import (
    estimate_aipw_att,
    estimate_ate_gdid,
    estimate_cdid,
    estimate_did,
    estimate_gdid,
    impute_counterfactual,
)
from gdid.learners import NuisanceFits
from gdid.panel_data import PanelDataset, build_conditioning

# Arithmetic oracles for the 4-unit dataset (worked out by hand before the
# estimators were written; see conftest for the data and fits):
#   post-period AIPW:  (4 + 1 + 1/4 - 10/3) / 2           = 23/24
#   pre-period AIPW:   (3/2 - 1/2 - 1/6 + 2) / 2          = 17/12
#   gdid:              23/24 - 17/12                      = -11/24
#   did:               (4 - 1.5) - (4 - 3.5)              = 2
#   ate_gdid:          -1/48 - 13/24                      = -9/16
POST_ORACLE = 23.0 / 24.0
PRE_ORACLE = 17.0 / 12.0
GDID_ORACLE = -11.0 / 24.0
DID_ORACLE = 2.0
ATE_ORACLE = -9.0 / 16.0


def test_aipw_post_matches_hand_oracle(hand_dataset, hand_fits):
    est = estimate_aipw_att(hand_dataset, 1, hand_fits, trim_eps=0.01)
    assert est.estimand == "ignorability_post"
    assert est.tau_hat == pytest.approx(POST_ORACLE, abs=1e-12)
    assert est.influence.sum() / est.n_treated == pytest.approx(POST_ORACLE, abs=1e-12)


def test_aipw_pre_matches_hand_oracle(hand_dataset, hand_fits):
    est = estimate_aipw_att(hand_dataset, 0, hand_fits, trim_eps=0.01)
    assert est.estimand == "ignorability_pre"
    assert est.tau_hat == pytest.approx(PRE_ORACLE, abs=1e-12)


def test_gdid_matches_hand_oracle(hand_dataset, hand_fits):
    est = estimate_gdid(hand_dataset, hand_fits, trim_eps=0.01)
    assert est.tau_hat == pytest.approx(GDID_ORACLE, abs=1e-12)


def test_gdid_decomposition_identity(hand_dataset, hand_fits):
    # gdid == post-AIPW - pre-AIPW at 1e-12, summand-wise
    whole = estimate_gdid(hand_dataset, hand_fits)
    post = estimate_aipw_att(hand_dataset, 1, hand_fits)
    pre = estimate_aipw_att(hand_dataset, 0, hand_fits)
    assert whole.tau_hat == pytest.approx(post.tau_hat - pre.tau_hat, abs=1e-12)
    np.testing.assert_allclose(whole.influence, post.influence - pre.influence,
                               atol=1e-12)


def test_did_matches_hand_oracle(hand_dataset):
    est = estimate_did(hand_dataset)
    assert est.tau_hat == pytest.approx(DID_ORACLE, abs=1e-12)
    assert est.influence.sum() / est.n_treated == pytest.approx(DID_ORACLE, abs=1e-12)


def test_did_zero_under_equal_trends():
    ds = PanelDataset(
        unit_ids=("a", "b", "c", "d"),
        times=(0, 1),
        outcomes=np.array([[1.0, 3.0], [2.0, 4.0], [5.0, 7.0], [0.0, 2.0]]),
        covariates=np.zeros((4, 0)),
        treatment=np.array([1, 1, 0, 0]),
    )
    assert estimate_did(ds).tau_hat == pytest.approx(0.0, abs=1e-12)


def test_gdid_zero_when_periods_identical(hand_dataset, hand_fits):
    # identical pre/post outcomes and shared fits cancel exactly
    y = hand_dataset.outcomes.copy()
    y[:, 2] = y[:, 1]
    ds = PanelDataset(unit_ids=hand_dataset.unit_ids, times=(-1, 0, 1),
                      outcomes=y, covariates=hand_dataset.covariates,
                      treatment=hand_dataset.treatment)
    fits = NuisanceFits(
        mu1_hat=hand_fits.mu0_hat, mu0_hat=hand_fits.mu0_hat,
        pi_hat=hand_fits.pi0_hat, pi0_hat=hand_fits.pi0_hat,
        plan="no-split", lag_depth=1, cond0=hand_fits.cond0,
        cond_m1=hand_fits.cond_m1)
    assert estimate_gdid(ds, fits).tau_hat == pytest.approx(0.0, abs=1e-12)


def test_zero_propensity_reduces_to_regression_imputation(hand_dataset, hand_fits):
    fits = NuisanceFits(
        mu1_hat=hand_fits.mu1_hat, mu0_hat=hand_fits.mu0_hat,
        pi_hat=np.zeros(4), pi0_hat=np.zeros(4),
        plan="no-split", lag_depth=1, cond0=hand_fits.cond0,
        cond_m1=hand_fits.cond_m1)
    est = estimate_aipw_att(hand_dataset, 1, fits)
    y1, a, mu = hand_dataset.outcome_at(1), hand_dataset.treatment, fits.mu1_hat
    want = (y1[a == 1] - mu[a == 1]).mean()
    assert est.tau_hat == pytest.approx(want, abs=1e-12)


def test_cdid_stratified_hand_oracle(hand_dataset):
    # exact stratum means as fits: stratified DiD is (5 + -1) / 2 = 2
    cond0 = build_conditioning(hand_dataset, 0, 0)
    cond_m1 = build_conditioning(hand_dataset, -1, 0)
    x = hand_dataset.covariates[:, 0]
    mu1 = np.where(x == 1, 2.0, 6.0)   # control Y1 per stratum
    mu0 = np.where(x == 1, 4.0, 3.0)   # control Y0 per stratum
    pi = np.full(4, 0.5)
    fits = NuisanceFits(mu1_hat=mu1, mu0_hat=mu0, pi_hat=pi, pi0_hat=pi,
                        plan="no-split", lag_depth=0, cond0=cond0,
                        cond_m1=cond_m1)
    est = estimate_cdid(hand_dataset, fits)
    assert est.estimand == "cdid"
    assert est.tau_hat == pytest.approx(2.0, abs=1e-12)


def test_cdid_without_covariates_equals_did(hand_dataset):
    # constant features with exact constant fits reduce cdid to did exactly
    ds = PanelDataset(unit_ids=hand_dataset.unit_ids, times=(-1, 0, 1),
                      outcomes=hand_dataset.outcomes,
                      covariates=np.zeros((4, 0)),
                      treatment=hand_dataset.treatment)
    cond0 = build_conditioning(ds, 0, 0)
    cond_m1 = build_conditioning(ds, -1, 0)
    ctrl = ds.treatment == 0
    fits = NuisanceFits(
        mu1_hat=np.full(4, ds.outcome_at(1)[ctrl].mean()),
        mu0_hat=np.full(4, ds.outcome_at(0)[ctrl].mean()),
        pi_hat=np.full(4, 0.5), pi0_hat=np.full(4, 0.5),
        plan="no-split", lag_depth=0, cond0=cond0, cond_m1=cond_m1)
    assert estimate_cdid(ds, fits).tau_hat == pytest.approx(
        estimate_did(ds).tau_hat, abs=1e-12)


def test_ate_gdid_hand_oracle(hand_dataset, hand_fits):
    est = estimate_ate_gdid(hand_dataset, hand_fits, trim_eps=0.01)
    assert est.estimand == "ate_gdid"
    assert est.tau_hat == pytest.approx(ATE_ORACLE, abs=1e-12)
    assert est.normalizer == hand_dataset.n_units


def test_ate_gdid_requires_treated_arm_fits(hand_dataset, hand_fits):
    fits = NuisanceFits(
        mu1_hat=hand_fits.mu1_hat, mu0_hat=hand_fits.mu0_hat,
        pi_hat=hand_fits.pi_hat, pi0_hat=hand_fits.pi0_hat,
        plan="no-split", lag_depth=1, cond0=hand_fits.cond0,
        cond_m1=hand_fits.cond_m1)
    with pytest.raises(MissingTreatedArmFitsError):
        estimate_ate_gdid(hand_dataset, fits)


def test_ate_zero_under_symmetric_null():
    # everyone treated with probability exactly 1/2, constant outcomes
    n = 10
    ds = PanelDataset(
        unit_ids=tuple(map(str, range(n))), times=(0, 1),
        outcomes=np.full((n, 2), 3.0), covariates=np.zeros((n, 1)),
        treatment=np.array([1, 0] * (n // 2)))
    cond0 = build_conditioning(ds, 0, 0)
    fits = NuisanceFits(
        mu1_hat=np.full(n, 3.0), mu0_hat=np.full(n, 3.0),
        pi_hat=np.full(n, 0.5), pi0_hat=np.full(n, 0.5),
        plan="no-split", lag_depth=0, cond0=cond0, cond_m1=cond0,
        mu1_treated=np.full(n, 3.0), mu0_treated=np.full(n, 3.0))
    assert estimate_ate_gdid(ds, fits).tau_hat == pytest.approx(0.0, abs=1e-12)


# ---------------------------------------------------------------------------
# imputation functions
# ---------------------------------------------------------------------------

def test_impute_eta_gdid_carry_forward():
    out = impute_counterfactual("eta_gdid", y0=np.array([2.0, 3.0]),
                                mu1_w0=np.array([5.0, 5.0]),
                                mu0_wm1=np.array([5.0, 5.0]))
    np.testing.assert_allclose(out, [2.0, 3.0])


def test_impute_eta_cdid_zero_trend():
    out = impute_counterfactual("eta_cdid", y0=np.array([1.0, -1.0]),
                                delta=np.zeros(2))
    np.testing.assert_allclose(out, [1.0, -1.0])


def test_impute_eta_gdid_hand_values(hand_dataset, hand_fits):
    # eta^gdid = Y0 + mu1(W0) - mu0(W-1) per unit
    out = impute_counterfactual("eta_gdid", y0=hand_dataset.outcome_at(0),
                                mu1_w0=hand_fits.mu1_hat,
                                mu0_wm1=hand_fits.mu0_hat)
    np.testing.assert_allclose(out, [2.5, 1.5, 4.5, 0.5])


def test_impute_missing_component():
    with pytest.raises(MissingComponentError):
        impute_counterfactual("eta_ign")
    with pytest.raises(MissingComponentError):
        impute_counterfactual("eta_gdid", y0=np.zeros(2), mu1_w0=np.zeros(2))


# ---------------------------------------------------------------------------
# invariance properties
# ---------------------------------------------------------------------------

def _random_problem(seed, n=20):
    rng = np.random.default_rng(seed)
    y = rng.standard_normal((n, 3))
    x = rng.standard_normal((n, 2))
    a = np.zeros(n, dtype=int)
    a[rng.permutation(n)[:n // 2]] = 1
    if a.sum() in (0, n):
        a[0], a[-1] = 1, 0
    ds = PanelDataset(unit_ids=tuple(map(str, range(n))), times=(-1, 0, 1),
                      outcomes=y, covariates=x, treatment=a)
    cond0 = build_conditioning(ds, 0, 1)
    cond_m1 = build_conditioning(ds, -1, 1)
    fits = NuisanceFits(
        mu1_hat=rng.standard_normal(n), mu0_hat=rng.standard_normal(n),
        pi_hat=rng.uniform(0.05, 0.9, n), pi0_hat=rng.uniform(0.05, 0.9, n),
        plan="no-split", lag_depth=1, cond0=cond0, cond_m1=cond_m1)
    return ds, fits


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_unit_permutation_leaves_estimates_unchanged(seed):
    ds, fits = _random_problem(seed)
    perm = np.random.default_rng(seed + 1).permutation(ds.n_units)
    ds_p = PanelDataset(unit_ids=tuple(ds.unit_ids[i] for i in perm),
                        times=ds.times, outcomes=ds.outcomes[perm],
                        covariates=ds.covariates[perm],
                        treatment=ds.treatment[perm])
    cond0 = build_conditioning(ds_p, 0, 1)
    cond_m1 = build_conditioning(ds_p, -1, 1)
    fits_p = NuisanceFits(
        mu1_hat=fits.mu1_hat[perm], mu0_hat=fits.mu0_hat[perm],
        pi_hat=fits.pi_hat[perm], pi0_hat=fits.pi0_hat[perm],
        plan="no-split", lag_depth=1, cond0=cond0, cond_m1=cond_m1)
    assert estimate_gdid(ds_p, fits_p).tau_hat == pytest.approx(
        estimate_gdid(ds, fits).tau_hat, abs=1e-10)
    assert estimate_did(ds_p).tau_hat == pytest.approx(
        estimate_did(ds).tau_hat, abs=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31 - 1),
       st.floats(-50, 50, allow_nan=False, allow_infinity=False))
def test_location_invariance_of_difference_estimators(seed, shift):
    ds, fits = _random_problem(seed)
    shifted = PanelDataset(unit_ids=ds.unit_ids, times=ds.times,
                           outcomes=ds.outcomes + shift,
                           covariates=ds.covariates, treatment=ds.treatment)
    # gdid/did are invariant when both periods (and the level-fits) shift by c
    fits_s = NuisanceFits(
        mu1_hat=fits.mu1_hat + shift, mu0_hat=fits.mu0_hat + shift,
        pi_hat=fits.pi_hat, pi0_hat=fits.pi0_hat,
        plan="no-split", lag_depth=1, cond0=fits.cond0, cond_m1=fits.cond_m1)
    assert estimate_did(shifted).tau_hat == pytest.approx(
        estimate_did(ds).tau_hat, abs=1e-9)
    assert estimate_gdid(shifted, fits_s).tau_hat == pytest.approx(
        estimate_gdid(ds, fits).tau_hat, abs=1e-9)
