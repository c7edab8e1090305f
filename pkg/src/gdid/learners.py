"""Nuisance-function learners and cross-fitting.

Four nuisance functions back every estimator: two outcome regressions fit on
control units (post-period mu1 on the t=0 conditioning set, pre-period mu0 on
the t=-1 set) and two propensity scores fit on all units (pi on the t=0 set,
pi0 on the t=-1 set). Candidate learners are linear/logistic models, k-nearest
neighbors, and gradient-boosted stumps; a stacked ensemble combines them with
simplex-constrained weights chosen to minimize cross-validated squared error.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    FoldWithoutControlsError,
    NotEnoughNeighborsError,
    SeparationWarning,
    SingularDesignError,
)
from .panel_data import ConditioningSet, PanelDataset

NO_SPLIT = "no-split"

_KINDS = ("linear", "logistic", "knn", "boosted_stumps", "ensemble")


@dataclass(frozen=True)
class LearnerSpec:
    """Declarative learner choice, serializable to a TOML table."""

    kind: str
    k: int = 10                     # knn neighbor count
    rounds: int = 100               # boosting rounds
    shrinkage: float = 0.1          # boosting learning rate in (0, 1]
    candidates: tuple["LearnerSpec", ...] = ()

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown learner kind {self.kind!r}")
        if self.kind == "knn" and self.k < 1:
            raise ValueError("knn requires k >= 1")
        if self.kind == "boosted_stumps":
            if self.rounds < 1:
                raise ValueError("boosted_stumps requires rounds >= 1")
            if not 0 < self.shrinkage <= 1:
                raise ValueError("shrinkage must lie in (0, 1]")
        if self.kind == "ensemble":
            if not self.candidates:
                raise ValueError("ensemble requires a non-empty candidate list")
            if any(c.kind == "ensemble" for c in self.candidates):
                raise ValueError("ensembles cannot be nested")
        elif self.candidates:
            raise ValueError("only ensembles take candidates")

    def to_dict(self) -> dict:
        if self.kind == "ensemble":
            return {"kind": "ensemble",
                    "candidates": [c.to_dict() for c in self.candidates]}
        out = {"kind": self.kind}
        if self.kind == "knn":
            out["k"] = self.k
        if self.kind == "boosted_stumps":
            out.update(rounds=self.rounds, shrinkage=self.shrinkage)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "LearnerSpec":
        data = dict(data)
        kind = data.pop("kind")
        if kind == "ensemble":
            cands = tuple(cls.from_dict(c) for c in data.pop("candidates"))
            return cls(kind="ensemble", candidates=cands)
        return cls(kind=kind, **data)


def default_regression_spec() -> LearnerSpec:
    return LearnerSpec(kind="ensemble", candidates=(
        LearnerSpec(kind="linear"),
        LearnerSpec(kind="knn", k=10),
        LearnerSpec(kind="boosted_stumps", rounds=100, shrinkage=0.1),
    ))


def default_propensity_spec() -> LearnerSpec:
    return LearnerSpec(kind="ensemble", candidates=(
        LearnerSpec(kind="logistic"),
        LearnerSpec(kind="knn", k=10),
        LearnerSpec(kind="boosted_stumps", rounds=100, shrinkage=0.1),
    ))


# ---------------------------------------------------------------------------
# individual learners
# ---------------------------------------------------------------------------

def _design(X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.hstack([np.ones((X.shape[0], 1)), X])


@dataclass
class LinearModel:
    beta: np.ndarray
    ridge_used: bool = False

    def predict(self, X):
        return _design(X) @ self.beta


@dataclass
class LogisticModel:
    beta: np.ndarray
    separation_flagged: bool = False
    n_iter: int = 0

    def predict(self, X):
        eta = np.clip(_design(X) @ self.beta, -35.0, 35.0)
        return 1.0 / (1.0 + np.exp(-eta))


@dataclass
class KnnModel:
    X_train: np.ndarray
    y_train: np.ndarray
    k: int
    scale: np.ndarray

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float)) / self.scale
        Xt = self.X_train / self.scale
        # squared Euclidean distances, (m, n_train)
        d2 = (np.sum(X * X, axis=1)[:, None] - 2.0 * X @ Xt.T
              + np.sum(Xt * Xt, axis=1)[None, :])
        if self.k >= Xt.shape[0]:
            idx = np.broadcast_to(np.arange(Xt.shape[0]), d2.shape)
        elif self.k == 1:
            idx = np.argmin(d2, axis=1)[:, None]
        else:
            idx = np.argpartition(d2, self.k - 1, axis=1)[:, :self.k]
        return self.y_train[idx].mean(axis=1)


@dataclass
class BoostedStumpsModel:
    init: float
    feat: np.ndarray        # (rounds,) feature index
    threshold: np.ndarray   # (rounds,)
    left: np.ndarray        # prediction for x <= threshold
    right: np.ndarray
    shrinkage: float
    clip01: bool = False

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        vals = np.where(X[:, self.feat] <= self.threshold[None, :],
                        self.left[None, :], self.right[None, :])
        pred = self.init + self.shrinkage * vals.sum(axis=1)
        return np.clip(pred, 0.0, 1.0) if self.clip01 else pred


@dataclass
class ProbabilityClip:
    """Wraps a real-valued model so predictions land in [0, 1]."""

    inner: object
    separation_flagged: bool = False

    def predict(self, X):
        return np.clip(self.inner.predict(X), 0.0, 1.0)


@dataclass
class EnsembleWeights:
    weights: np.ndarray
    cv_risk: float
    candidate_risks: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if (w < -1e-12).any():
            raise ValueError("ensemble weights must be non-negative")
        if abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("ensemble weights must sum to 1")
        self.weights = np.clip(w, 0.0, None)


@dataclass
class EnsembleModel:
    models: list
    weights: np.ndarray
    clip01: bool = False

    def predict(self, X):
        pred = sum(w * m.predict(X) for w, m in zip(self.weights, self.models)
                   if w > 0.0)
        return np.clip(pred, 0.0, 1.0) if self.clip01 else pred


def _fit_linear(X, y, ridge=0.0):
    Z = _design(X)
    if ridge > 0.0:
        scale = np.concatenate([[0.0], np.var(np.atleast_2d(X), axis=0)])
        gram = Z.T @ Z + ridge * np.diag(np.maximum(scale, 1.0))
        beta = np.linalg.solve(gram, Z.T @ y)
        return LinearModel(beta=beta, ridge_used=True)
    beta, _, rank, _ = np.linalg.lstsq(Z, y, rcond=None)
    if rank < Z.shape[1]:
        # rank-deficient design: retry with a small variance-scaled ridge
        scale = np.concatenate([[1.0], np.maximum(np.var(np.atleast_2d(X), axis=0), 1.0)])
        gram = Z.T @ Z + 1e-6 * np.diag(scale)
        try:
            beta = np.linalg.solve(gram, Z.T @ y)
        except np.linalg.LinAlgError as exc:
            raise SingularDesignError("design matrix is singular even after "
                                      "ridge fallback") from exc
        return LinearModel(beta=beta, ridge_used=True)
    return LinearModel(beta=beta)


_IRLS_MAX_ITER = 50
_IRLS_TOL = 1e-8


def _fit_logistic(X, y, ridge=0.0):
    """IRLS with deviance-based stopping and variance-scaled ridge fallback.

    Returns (model, reason) where reason is None on a clean fit, "singular"
    when the weighted design is rank deficient (collinearity), and
    "separation" when the likelihood diverges (perfect class separation). The
    model is None whenever reason is set and no ridge was applied.
    """
    Z = _design(X)
    n, d = Z.shape
    y = np.asarray(y, dtype=float)
    penalty = 0.0
    if ridge > 0.0:
        scale = np.concatenate([[0.0], np.maximum(np.var(np.atleast_2d(X), axis=0), 1.0)])
        penalty = ridge * np.diag(scale)
    beta = np.zeros(d)
    deviance = np.inf
    n_iter = 0
    for n_iter in range(1, _IRLS_MAX_ITER + 1):
        eta = np.clip(Z @ beta, -35.0, 35.0)
        mu = 1.0 / (1.0 + np.exp(-eta))
        w = np.maximum(mu * (1.0 - mu), 1e-10)
        z = eta + (y - mu) / w
        gram = Z.T @ (Z * w[:, None])
        if ridge > 0.0:
            gram = gram + penalty
        try:
            beta_new = np.linalg.solve(gram, Z.T @ (w * z))
        except np.linalg.LinAlgError:
            if ridge > 0.0:
                raise SingularDesignError("weighted design singular despite ridge")
            return None, "singular"
        if not np.isfinite(beta_new).all():
            return (None, "singular") if ridge == 0.0 else (None, "separation")
        eta_new = np.clip(Z @ beta_new, -35.0, 35.0)
        mu_new = np.clip(1.0 / (1.0 + np.exp(-eta_new)), 1e-12, 1 - 1e-12)
        dev_new = -2.0 * float(np.sum(y * np.log(mu_new) + (1 - y) * np.log(1 - mu_new)))
        beta = beta_new
        if abs(deviance - dev_new) < _IRLS_TOL:
            deviance = dev_new
            break
        deviance = dev_new
        if ridge == 0.0 and np.abs(beta).max() > 1e8:
            return None, "separation"
    # collinear but finite designs: lstsq inside solve succeeded numerically,
    # detect via huge condition number is unnecessary; rely on the solve above
    model = LogisticModel(beta=beta, n_iter=n_iter)
    fitted = model.predict(X)
    if ridge == 0.0 and (np.abs(beta).max() > 1e3
                         or fitted.min() < 1e-10 or fitted.max() > 1 - 1e-10):
        return None, "separation"
    return model, None


_RIDGE_FALLBACK = 1e-6


def _fit_knn(X, y, k):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if k > X.shape[0]:
        raise NotEnoughNeighborsError(f"knn k={k} exceeds {X.shape[0]} training rows")
    scale = np.std(X, axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return KnnModel(X_train=X.copy(), y_train=np.asarray(y, dtype=float).copy(),
                    k=k, scale=scale)


def _fit_boosted_stumps(X, y, rounds, shrinkage):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    init = float(y.mean()) if n else 0.0
    if n < 2 or p == 0:
        z = np.zeros(0, dtype=int)
        return BoostedStumpsModel(init, z, z.astype(float), z.astype(float),
                                  z.astype(float), shrinkage)
    order = np.argsort(X, axis=0, kind="stable")          # (n, p)
    x_sorted = np.take_along_axis(X, order, axis=0)
    valid = x_sorted[:-1] != x_sorted[1:]                 # split between distinct values
    thresholds = 0.5 * (x_sorted[:-1] + x_sorted[1:])
    left_counts = np.arange(1, n, dtype=float)[:, None]
    right_counts = n - left_counts
    resid = y - init
    feat = np.empty(rounds, dtype=np.int64)
    thr = np.empty(rounds)
    left_val = np.empty(rounds)
    right_val = np.empty(rounds)
    any_valid = valid.any()
    for r in range(rounds):
        if not any_valid:
            feat[r], thr[r], left_val[r], right_val[r] = 0, np.inf, 0.0, 0.0
            continue
        rs = resid[order]                                  # (n, p) gathered
        csum = np.cumsum(rs, axis=0)[:-1]                  # left sums per split
        total = csum[-1] + rs[-1]
        gain = csum ** 2 / left_counts + (total - csum) ** 2 / right_counts
        gain[~valid] = -np.inf
        flat = int(np.argmax(gain))
        i, j = divmod(flat, p)
        feat[r] = j
        thr[r] = thresholds[i, j]
        lv = csum[i, j] / (i + 1)
        rv = (total[j] - csum[i, j]) / (n - i - 1)
        left_val[r] = lv
        right_val[r] = rv
        resid = resid - shrinkage * np.where(X[:, j] <= thr[r], lv, rv)
    return BoostedStumpsModel(init, feat, thr, left_val, right_val, shrinkage)


def best_single_stump(X, y):
    """One-round, unshrunk stump; exposed for oracle comparisons in tests."""
    model = _fit_boosted_stumps(X, y, rounds=1, shrinkage=1.0)
    return model


def _as_features(features) -> np.ndarray:
    if isinstance(features, ConditioningSet):
        return features.features
    return np.atleast_2d(np.asarray(features, dtype=float))


def fit_regression(features, targets, spec: LearnerSpec, rng=None):
    """Fit a real-valued model (control-unit outcome regressions)."""
    X = _as_features(features)
    y = np.asarray(targets, dtype=float)
    if X.shape[0] < 2:
        raise SingularDesignError("need at least 2 rows to fit a regression")
    if spec.kind == "linear":
        return _fit_linear(X, y)
    if spec.kind == "knn":
        return _fit_knn(X, y, spec.k)
    if spec.kind == "boosted_stumps":
        return _fit_boosted_stumps(X, y, spec.rounds, spec.shrinkage)
    if spec.kind == "ensemble":
        _, model = fit_ensemble(spec.candidates, X, y, task="regression", rng=rng)
        return model
    raise ValueError(f"spec kind {spec.kind!r} is not a regression learner")


def fit_propensity(features, treatment, spec: LearnerSpec, rng=None):
    """Fit a probability model for treatment; predictions always in [0, 1]."""
    X = _as_features(features)
    a = np.asarray(treatment, dtype=float)
    if not ((a == 0).any() and (a == 1).any()):
        raise FoldWithoutControlsError("propensity fit requires both classes")
    if spec.kind == "logistic":
        model, reason = _fit_logistic(X, a)
        if model is None:
            if reason == "separation":
                warnings.warn("separation detected; refitting with ridge penalty",
                              SeparationWarning, stacklevel=2)
            model, _ = _fit_logistic(X, a, ridge=_RIDGE_FALLBACK)
            model.separation_flagged = reason == "separation"
        return model
    if spec.kind == "knn":
        return ProbabilityClip(_fit_knn(X, a, spec.k))
    if spec.kind == "boosted_stumps":
        model = _fit_boosted_stumps(X, a, spec.rounds, spec.shrinkage)
        model.clip01 = True
        return model
    if spec.kind == "ensemble":
        _, model = fit_ensemble(spec.candidates, X, a, task="propensity", rng=rng)
        return model
    raise ValueError(f"spec kind {spec.kind!r} is not a propensity learner")


# ---------------------------------------------------------------------------
# stacking
# ---------------------------------------------------------------------------

def _simplex_lstsq(P: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Exact argmin of ||P w - y||^2 over the probability simplex.

    Solved by support enumeration: for every candidate support, solve the
    sum-to-one equality-constrained least squares via its KKT system and keep
    the best feasible solution. Vertices are always feasible, so the optimum
    never exceeds the best single candidate.
    """
    m = P.shape[1]
    gram = P.T @ P
    cross = P.T @ y
    best_w, best_obj = None, np.inf
    for mask in range(1, 2 ** m):
        idx = np.array([j for j in range(m) if mask >> j & 1])
        k = len(idx)
        kkt = np.zeros((k + 1, k + 1))
        kkt[:k, :k] = 2.0 * gram[np.ix_(idx, idx)]
        kkt[:k, k] = 1.0
        kkt[k, :k] = 1.0
        rhs = np.concatenate([2.0 * cross[idx], [1.0]])
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
        w_s = sol[:k]
        if (w_s < -1e-10).any():
            continue
        w = np.zeros(m)
        w[idx] = np.clip(w_s, 0.0, None)
        w /= w.sum()
        obj = float(np.sum((P @ w - y) ** 2))
        if obj < best_obj - 1e-15:
            best_obj, best_w = obj, w
    if best_w is None:   # all supports infeasible (cannot happen: singletons are feasible)
        best_w = np.full(m, 1.0 / m)
    return best_w


def _stacking_folds(n: int, folds: int, rng: np.random.Generator,
                    stratify: np.ndarray | None = None) -> np.ndarray:
    assign = np.empty(n, dtype=np.int64)
    if stratify is not None:
        order = np.concatenate([rng.permutation(np.flatnonzero(stratify == 1)),
                                rng.permutation(np.flatnonzero(stratify == 0))])
    else:
        order = rng.permutation(n)
    assign[order] = np.arange(n) % folds
    return assign


def fit_ensemble(candidates, features, targets_or_treatment, folds: int = 5,
                 task: str = "regression", rng=None):
    """Stack candidate learners with simplex weights minimizing CV squared error.

    Returns (EnsembleWeights, EnsembleModel). A candidate whose fit raises is
    dropped with weight 0 and a warning; with a single surviving candidate the
    weight vector is (1,).
    """
    X = _as_features(features)
    y = np.asarray(targets_or_treatment, dtype=float)
    candidates = tuple(candidates)
    if not candidates:
        raise ValueError("ensemble requires at least one candidate")
    if rng is None:
        rng = np.random.default_rng(0)
    fitter = fit_propensity if task == "propensity" else fit_regression
    n = X.shape[0]
    folds = max(2, min(folds, n))
    stratify = y if task == "propensity" else None
    assign = _stacking_folds(n, folds, rng, stratify)
    oof = np.full((n, len(candidates)), np.nan)
    alive = np.ones(len(candidates), dtype=bool)
    for f in range(folds):
        holdout = assign == f
        if holdout.all() or not holdout.any():
            continue
        Xtr, ytr = X[~holdout], y[~holdout]
        for j, cand in enumerate(candidates):
            if not alive[j]:
                continue
            try:
                model = fitter(Xtr, ytr, cand)
                oof[holdout, j] = model.predict(X[holdout])
            except Exception as exc:  # noqa: BLE001 - candidate failure is survivable
                alive[j] = False
                warnings.warn(f"ensemble candidate {cand.kind} failed ({exc}); "
                              "weight set to 0", stacklevel=2)
    final_models: list = []
    for j, cand in enumerate(candidates):
        if not alive[j]:
            final_models.append(None)
            continue
        try:
            final_models.append(fitter(X, y, cand))
        except Exception as exc:  # noqa: BLE001
            alive[j] = False
            final_models.append(None)
            warnings.warn(f"ensemble candidate {cand.kind} failed on the full "
                          f"data ({exc}); weight set to 0", stacklevel=2)
    if not alive.any():
        raise SingularDesignError("every ensemble candidate failed")
    live_idx = np.flatnonzero(alive)
    P = oof[:, live_idx]
    keep_rows = ~np.isnan(P).any(axis=1)
    P, yk = P[keep_rows], y[keep_rows]
    if task == "propensity":
        P = np.clip(P, 0.0, 1.0)
    w_live = (_simplex_lstsq(P, yk) if len(live_idx) > 1
              else np.array([1.0]))
    weights = np.zeros(len(candidates))
    weights[live_idx] = w_live
    cand_risks = np.full(len(candidates), np.nan)
    for pos, j in enumerate(live_idx):
        cand_risks[j] = float(np.mean((P[:, pos] - yk) ** 2))
    ens_risk = float(np.mean((P @ w_live - yk) ** 2))
    ew = EnsembleWeights(weights=weights, cv_risk=ens_risk,
                         candidate_risks=cand_risks)
    model = EnsembleModel(models=[m for m in final_models if m is not None],
                          weights=w_live, clip01=(task == "propensity"))
    return ew, model


# ---------------------------------------------------------------------------
# cross-fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CrossFitPlan:
    """Fold assignment for K-fold cross-fitting, reproducible from its seed."""

    n_folds: int
    fold_of: np.ndarray
    seed: int

    def __post_init__(self):
        if self.n_folds < 2:
            raise ValueError("cross-fitting requires K >= 2")
        fold_of = np.asarray(self.fold_of, dtype=np.int64)
        counts = np.bincount(fold_of, minlength=self.n_folds)
        if counts.max() - counts.min() > 1:
            raise ValueError("fold sizes must differ by at most one")
        arr = fold_of.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "fold_of", arr)

    @classmethod
    def stratified(cls, treatment, n_folds: int, seed: int) -> "CrossFitPlan":
        """Deal shuffled treated units, then shuffled controls, round-robin."""
        a = np.asarray(treatment)
        rng = np.random.default_rng(seed)
        order = np.concatenate([rng.permutation(np.flatnonzero(a == 1)),
                                rng.permutation(np.flatnonzero(a == 0))])
        fold_of = np.empty(a.shape[0], dtype=np.int64)
        fold_of[order] = np.arange(a.shape[0]) % n_folds
        return cls(n_folds=n_folds, fold_of=fold_of, seed=seed)


@dataclass
class NuisanceFits:
    """Cross-fitted per-unit nuisance predictions plus provenance metadata."""

    mu1_hat: np.ndarray
    mu0_hat: np.ndarray
    pi_hat: np.ndarray
    pi0_hat: np.ndarray
    plan: CrossFitPlan | str
    lag_depth: int
    cond0: ConditioningSet
    cond_m1: ConditioningSet
    trained_units: list | None = None    # per fold, unit indices used to train
    mu1_treated: np.ndarray | None = None
    mu0_treated: np.ndarray | None = None
    models: dict = field(default_factory=dict)   # no-split parametric internals

    @property
    def is_no_split(self) -> bool:
        return isinstance(self.plan, str) and self.plan == NO_SPLIT

    def audit_honesty(self) -> int:
        """Number of units whose prediction depended on their own fold."""
        if self.is_no_split or self.trained_units is None:
            return 0
        violations = 0
        for i, f in enumerate(self.plan.fold_of):
            if i in set(self.trained_units[f]):
                violations += 1
        return violations


def _spec_pair(spec):
    """Resolve a spec (or pair) into (regression spec, propensity spec)."""
    if isinstance(spec, LearnerSpec):
        if spec.kind == "linear":
            return spec, LearnerSpec(kind="logistic")
        if spec.kind == "logistic":
            return LearnerSpec(kind="linear"), spec
        return spec, spec
    reg, prop = spec
    return reg, prop


def cross_fit_nuisances(dataset: PanelDataset, cond0: ConditioningSet,
                        cond_m1: ConditioningSet, spec=None,
                        plan: CrossFitPlan | str = NO_SPLIT,
                        include_treated_arm: bool = False) -> NuisanceFits:
    """Fit mu1, mu0 on control units and pi, pi0 on all units, out-of-fold.

    ``spec`` is a LearnerSpec applied to both tasks, or a (regression,
    propensity) pair; None selects the default stacked ensembles. ``plan`` is a
    CrossFitPlan or the "no-split" marker for the parametric full-data path.
    """
    if spec is None:
        spec = (default_regression_spec(), default_propensity_spec())
    reg_spec, prop_spec = _spec_pair(spec)
    a = dataset.treatment
    y1 = dataset.outcome_at(1)
    y0 = dataset.outcome_at(0)
    n = dataset.n_units
    controls = np.flatnonzero(a == 0)
    if controls.size == 0:
        raise FoldWithoutControlsError("dataset has no control units")

    mu1 = np.empty(n)
    mu0 = np.empty(n)
    pi = np.empty(n)
    pi0 = np.empty(n)
    mu1t = np.empty(n) if include_treated_arm else None
    mu0t = np.empty(n) if include_treated_arm else None
    X0, Xm1 = cond0.features, cond_m1.features

    if isinstance(plan, str):
        if plan != NO_SPLIT:
            raise ValueError(f"unknown plan marker {plan!r}")
        models = _fit_block(X0, Xm1, y1, y0, a, np.arange(n), np.arange(n),
                            reg_spec, prop_spec, include_treated_arm, seed=0)
        mu1[:], mu0[:], pi[:], pi0[:] = (models["mu1"].predict(X0),
                                         models["mu0"].predict(Xm1),
                                         models["pi"].predict(X0),
                                         models["pi0"].predict(Xm1))
        if include_treated_arm:
            mu1t[:] = models["mu1_treated"].predict(X0)
            mu0t[:] = models["mu0_treated"].predict(Xm1)
        return NuisanceFits(mu1_hat=mu1, mu0_hat=mu0, pi_hat=pi, pi0_hat=pi0,
                            plan=NO_SPLIT, lag_depth=cond0.lag_depth,
                            cond0=cond0, cond_m1=cond_m1,
                            mu1_treated=mu1t, mu0_treated=mu0t, models=models)

    trained_units: list = []
    for f in range(plan.n_folds):
        holdout = plan.fold_of == f
        train = np.flatnonzero(~holdout)
        hold = np.flatnonzero(holdout)
        if (a[train] == 0).sum() == 0:
            raise FoldWithoutControlsError(
                f"training complement of fold {f} has no control units")
        if include_treated_arm and (a[train] == 1).sum() == 0:
            raise FoldWithoutControlsError(
                f"training complement of fold {f} has no treated units")
        models = _fit_block(X0, Xm1, y1, y0, a, train, hold, reg_spec,
                            prop_spec, include_treated_arm,
                            seed=plan.seed + 1000003 * (f + 1))
        mu1[hold] = models["mu1"].predict(X0[hold])
        mu0[hold] = models["mu0"].predict(Xm1[hold])
        pi[hold] = models["pi"].predict(X0[hold])
        pi0[hold] = models["pi0"].predict(Xm1[hold])
        if include_treated_arm:
            mu1t[hold] = models["mu1_treated"].predict(X0[hold])
            mu0t[hold] = models["mu0_treated"].predict(Xm1[hold])
        trained_units.append(train)
    return NuisanceFits(mu1_hat=mu1, mu0_hat=mu0, pi_hat=pi, pi0_hat=pi0,
                        plan=plan, lag_depth=cond0.lag_depth,
                        cond0=cond0, cond_m1=cond_m1, trained_units=trained_units,
                        mu1_treated=mu1t, mu0_treated=mu0t)


def _fit_block(X0, Xm1, y1, y0, a, train, hold, reg_spec, prop_spec,
               include_treated_arm, seed):
    del hold  # predictions happen at the caller; kept for signature clarity
    tr_controls = train[a[train] == 0]
    rng = np.random.default_rng(seed)
    models = {
        "mu1": fit_regression(X0[tr_controls], y1[tr_controls], reg_spec,
                              rng=np.random.default_rng(rng.integers(2 ** 63))),
        "mu0": fit_regression(Xm1[tr_controls], y0[tr_controls], reg_spec,
                              rng=np.random.default_rng(rng.integers(2 ** 63))),
        "pi": fit_propensity(X0[train], a[train], prop_spec,
                             rng=np.random.default_rng(rng.integers(2 ** 63))),
        "pi0": fit_propensity(Xm1[train], a[train], prop_spec,
                              rng=np.random.default_rng(rng.integers(2 ** 63))),
    }
    if include_treated_arm:
        tr_treated = train[a[train] == 1]
        models["mu1_treated"] = fit_regression(
            X0[tr_treated], y1[tr_treated], reg_spec,
            rng=np.random.default_rng(rng.integers(2 ** 63)))
        models["mu0_treated"] = fit_regression(
            Xm1[tr_treated], y0[tr_treated], reg_spec,
            rng=np.random.default_rng(rng.integers(2 ** 63)))
    return models
