"""Variance estimation and confidence intervals from influence contributions.

Three routes: the plug-in estimator (mean squared centered summand over the
treated count, with se = sigma_hat / sqrt(n1)), the multiplier bootstrap
(mean-1 variance-1 weights applied to the uncentered summands), and the
parametric sandwich for the no-split linear+logistic path, which stacks the
nuisance score equations with the estimating equation of the point estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import (
    EmptyInfluenceError,
    NotParametricPathError,
    SingularJacobianError,
)
from .estimators import AttEstimate
from .learners import LinearModel, LogisticModel, NuisanceFits

WEIGHT_DISTRIBUTIONS = ("exponential", "mammen_twopoint", "normal_mean1")


@dataclass
class VarianceEstimate:
    sigma2_hat: float
    method: str
    scale_note: str
    se: float

    def __post_init__(self):
        if self.sigma2_hat < 0:
            raise ValueError("variance cannot be negative")


@dataclass(frozen=True)
class BootstrapConfig:
    n_replicates: int = 1000
    weight_dist: str = "exponential"
    seed: int = 0

    def __post_init__(self):
        if self.n_replicates < 100:
            raise ValueError("multiplier bootstrap needs at least 100 replicates")
        if self.weight_dist not in WEIGHT_DISTRIBUTIONS:
            raise ValueError(f"unknown weight distribution {self.weight_dist!r}")


@dataclass
class ConfidenceInterval:
    lower: float
    upper: float
    level: float
    method: str

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise ValueError("interval bounds out of order")

    @property
    def length(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper


def plugin_variance(estimate: AttEstimate) -> VarianceEstimate:
    """Mean squared centered summand over the normalizer (the plug-in sigma^2)."""
    phi = estimate.influence
    if phi.size == 0:
        raise EmptyInfluenceError("estimate carries no influence values")
    centered = estimate.centered_influence()
    m = estimate.normalizer
    sigma2 = float(np.sum(centered ** 2) / m)
    se = float(np.sqrt(sigma2 / m))
    return VarianceEstimate(
        sigma2_hat=sigma2, method="plugin", se=se,
        scale_note=(f"sigma2 = sum((phi_i - center)^2) / m with m = {m:g}; "
                    "se = sqrt(sigma2 / m)"))


def draw_multipliers(rng: np.random.Generator, size, dist: str) -> np.ndarray:
    """Mean-1, variance-1 multiplier weights."""
    if dist == "exponential":
        return rng.standard_exponential(size)
    if dist == "normal_mean1":
        return 1.0 + rng.standard_normal(size)
    if dist == "mammen_twopoint":
        sqrt5 = np.sqrt(5.0)
        lo, hi = 1.0 - (sqrt5 - 1.0) / 2.0, 1.0 + (sqrt5 + 1.0) / 2.0
        p_lo = (sqrt5 + 1.0) / (2.0 * sqrt5)
        u = rng.uniform(size=size)
        return np.where(u < p_lo, lo, hi)
    raise ValueError(f"unknown weight distribution {dist!r}")


def multiplier_bootstrap(estimate: AttEstimate, config: BootstrapConfig,
                         level: float = 0.95):
    """Reweight uncentered summands with iid mean-1 variance-1 multipliers.

    Returns (VarianceEstimate, ConfidenceInterval); the CI uses type-7
    empirical quantiles of the replicates, the variance their sample variance.
    """
    phi = estimate.influence
    if phi.size == 0:
        raise EmptyInfluenceError("estimate carries no influence values")
    rng = np.random.default_rng(config.seed)
    B, n = config.n_replicates, phi.size
    taus = np.empty(B)
    chunk = max(1, min(B, int(4e6) // max(n, 1)))
    for start in range(0, B, chunk):
        stop = min(B, start + chunk)
        G = draw_multipliers(rng, (stop - start, n), config.weight_dist)
        taus[start:stop] = G @ phi / estimate.normalizer
    var = float(np.var(taus, ddof=1))
    se = float(np.sqrt(var))
    alpha = 1.0 - level
    lo, hi = np.quantile(taus, [alpha / 2.0, 1.0 - alpha / 2.0])
    ci = ConfidenceInterval(lower=float(lo), upper=float(hi), level=level,
                            method="multiplier_bootstrap")
    return (VarianceEstimate(sigma2_hat=var, method="multiplier_bootstrap",
                             se=se,
                             scale_note="sigma2 = sample variance of the "
                                        "replicates; already on the tau scale"),
            ci)


def confidence_interval(tau_hat: float, variance: VarianceEstimate,
                        n_treated: int | float | None = None,
                        level: float = 0.95) -> ConfidenceInterval:
    """Normal-quantile interval tau_hat +/- z * se at the variance's scale."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    if variance.se is not None:
        se = variance.se
    elif variance.method == "plugin":
        if not n_treated:
            raise ValueError("plugin variance needs the normalizer to form se")
        se = float(np.sqrt(variance.sigma2_hat / n_treated))
    else:
        se = float(np.sqrt(variance.sigma2_hat))
    z = float(stats.norm.ppf(0.5 + level / 2.0))
    return ConfidenceInterval(lower=tau_hat - z * se, upper=tau_hat + z * se,
                              level=level, method=variance.method)


# ---------------------------------------------------------------------------
# parametric sandwich (no-split linear + logistic path)
# ---------------------------------------------------------------------------

def _design(X: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((X.shape[0], 1)), X])


def sandwich_variance(dataset, fits: NuisanceFits,
                      estimate: AttEstimate) -> VarianceEstimate:
    """Stacked estimating-equations variance for the parametric no-split path.

    The moment vector stacks the two weighted-least-squares score equations
    (control units only), the two logistic score equations, and the estimating
    equation of the point estimate, phi_i = s_i - A_i * tau. The variance of
    tau_hat is the (tau, tau) entry of A^{-1} B A^{-T} / n with A the Jacobian
    of the stacked moments and B their outer-product mean.
    """
    if not fits.is_no_split:
        raise NotParametricPathError("sandwich variance requires no-split fits")
    models = fits.models
    needed = ("mu1", "mu0", "pi", "pi0")
    if not all(isinstance(models.get(k), (LinearModel, LogisticModel))
               for k in needed):
        raise NotParametricPathError(
            "sandwich variance requires linear outcome models and logistic "
            "propensity models fitted on the full data")
    if estimate.estimand not in ("gdid", "cdid"):
        raise NotParametricPathError(
            f"sandwich variance implemented for the generalized estimator, "
            f"not {estimate.estimand!r}")

    a = dataset.treatment.astype(float)
    y1, y0 = dataset.outcome_at(1), dataset.outcome_at(0)
    Z0 = _design(fits.cond0.features)
    Zm = _design(fits.cond_m1.features)
    n = dataset.n_units
    d0, dm = Z0.shape[1], Zm.shape[1]
    trim = estimate.trim_eps

    b_mu1, b_mu0 = models["mu1"].beta, models["mu0"].beta
    b_pi, b_pi0 = models["pi"].beta, models["pi0"].beta
    mu1, mu0 = Z0 @ b_mu1, Zm @ b_mu0
    pi_raw = 1.0 / (1.0 + np.exp(-np.clip(Z0 @ b_pi, -35, 35)))
    pi0_raw = 1.0 / (1.0 + np.exp(-np.clip(Zm @ b_pi0, -35, 35)))
    # clipping is inactive almost surely under correct specification; treat the
    # clipped region as flat (zero derivative through pi there)
    pi = np.minimum(pi_raw, 1.0 - trim)
    pi0 = np.minimum(pi0_raw, 1.0 - trim)
    act = (pi_raw < 1.0 - trim).astype(float)
    act0 = (pi0_raw < 1.0 - trim).astype(float)

    ctrl = 1.0 - a
    s1 = y1 * a - ((ctrl * pi * y1 + (a - pi) * mu1) / (1.0 - pi))
    s0 = y0 * a - ((ctrl * pi0 * y0 + (a - pi0) * mu0) / (1.0 - pi0))
    phi = s1 - s0 - a * estimate.tau_hat

    # stacked moments per unit: m_mu1 | m_mu0 | m_pi | m_pi0 | phi
    dim = 2 * d0 + 2 * dm + 1
    moments = np.empty((n, dim))
    moments[:, :d0] = (ctrl * (y1 - mu1))[:, None] * Z0
    moments[:, d0:d0 + dm] = (ctrl * (y0 - mu0))[:, None] * Zm
    moments[:, d0 + dm:2 * d0 + dm] = (a - pi_raw)[:, None] * Z0
    moments[:, 2 * d0 + dm:2 * d0 + 2 * dm] = (a - pi0_raw)[:, None] * Zm
    moments[:, -1] = phi

    A = np.zeros((dim, dim))
    sl_mu1 = slice(0, d0)
    sl_mu0 = slice(d0, d0 + dm)
    sl_pi = slice(d0 + dm, 2 * d0 + dm)
    sl_pi0 = slice(2 * d0 + dm, 2 * d0 + 2 * dm)
    A[sl_mu1, sl_mu1] = -(Z0 * ctrl[:, None]).T @ Z0 / n
    A[sl_mu0, sl_mu0] = -(Zm * ctrl[:, None]).T @ Zm / n
    w_pi = pi_raw * (1.0 - pi_raw)
    w_pi0 = pi0_raw * (1.0 - pi0_raw)
    A[sl_pi, sl_pi] = -(Z0 * w_pi[:, None]).T @ Z0 / n
    A[sl_pi0, sl_pi0] = -(Zm * w_pi0[:, None]).T @ Zm / n

    # ds/dmu = -(A - pi)/(1 - pi) for the post period, + for the pre period
    dphi_dmu1 = -((a - pi) / (1.0 - pi))[:, None] * Z0
    dphi_dmu0 = (((a - pi0) / (1.0 - pi0)))[:, None] * Zm
    # d/dpi of the weighting bracket: [(N'(pi)(1-pi) + N(pi)] / (1-pi)^2
    num1 = ctrl * pi * y1 + (a - pi) * mu1
    dnum1 = ctrl * y1 - mu1
    dbr1 = (dnum1 * (1.0 - pi) + num1) / (1.0 - pi) ** 2
    num0 = ctrl * pi0 * y0 + (a - pi0) * mu0
    dnum0 = ctrl * y0 - mu0
    dbr0 = (dnum0 * (1.0 - pi0) + num0) / (1.0 - pi0) ** 2
    dphi_dbpi = (-dbr1 * act * w_pi)[:, None] * Z0
    dphi_dbpi0 = (dbr0 * act0 * w_pi0)[:, None] * Zm
    A[-1, sl_mu1] = dphi_dmu1.mean(axis=0)
    A[-1, sl_mu0] = dphi_dmu0.mean(axis=0)
    A[-1, sl_pi] = dphi_dbpi.mean(axis=0)
    A[-1, sl_pi0] = dphi_dbpi0.mean(axis=0)
    A[-1, -1] = -a.mean()

    B = moments.T @ moments / n
    try:
        Ainv = np.linalg.inv(A)
    except np.linalg.LinAlgError as exc:
        raise SingularJacobianError("stacked Jacobian is singular") from exc
    V = Ainv @ B @ Ainv.T / n
    var_tau = float(max(V[-1, -1], 0.0))
    se = float(np.sqrt(var_tau))
    return VarianceEstimate(sigma2_hat=var_tau * n, method="sandwich", se=se,
                            scale_note="sigma2 = n * Var(tau_hat) from the "
                                       "stacked sandwich; se = sqrt(sigma2/n)")
