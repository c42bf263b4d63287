"""Regression-based active-set selectors.

Each selector maps (predictor matrix, response, row subset) to the set of
predictor columns retained by a sparse fit, validated on a held-out split of
the same rows. Active sets are the empirical surrogate for conditional
(in)dependence used everywhere downstream, so the selectors must be
deterministic in (seed, rows, data).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from sklearn.ensemble import GradientBoostingRegressor
from sklearn.linear_model import lasso_path


class SelectionError(ValueError):
    """Raised on unusable inputs (too few rows, constant response, ...)."""


@dataclass(frozen=True)
class SelectorSpec:
    """Configuration of one active-set selector.

    train_fraction splits the supplied rows into fit and validation parts
    (4:1 by default). Lasso fits a descending grid of ``n_lambdas`` penalties
    from the smallest all-zero penalty down to ``lambda_min_ratio`` times it,
    then picks the penalty by ``lambda_rule``: the validation-error minimum,
    or the sparsest penalty within one standard error of it. The boosted
    selector grows depth-limited trees until validation loss stops improving
    for ``patience`` rounds, rolls back to the earliest round within
    ``rollback_margin`` (relative to the baseline loss) of the best round,
    and keeps the features whose split-gain share exceeds ``gain_share_min``.
    """

    method: str = "lasso"  # "lasso" | "gbm" | "ztest"
    train_fraction: float = 0.8
    seed: int = 0
    # per-coefficient testing ("ztest"): no sparse search among covariates
    z_alpha: float = 0.05
    # lasso
    n_lambdas: int = 100
    lambda_min_ratio: float = 1e-3
    cd_tol: float = 1e-6
    lambda_rule: str = "se"  # "se" | "min"
    se_factor: float = 0.25  # sparsification strength of the "se" rule
    # gradient boosting
    max_trees: int = 3500
    patience: int = 10
    max_depth: int = 3
    learning_rate: float = 0.1
    rollback_margin: float = 0.02
    gain_share_min: float = 0.01

    def __post_init__(self):
        if self.method not in ("lasso", "gbm", "ztest"):
            raise SelectionError(f"unknown selector method {self.method!r}")
        if not 0.0 < self.train_fraction < 1.0:
            raise SelectionError("train_fraction must lie in (0, 1)")
        if self.n_lambdas < 2 or self.max_trees < 1 or self.patience < 1:
            raise SelectionError("selector size caps must be positive")
        if self.lambda_rule not in ("se", "min"):
            raise SelectionError(f"unknown lambda rule {self.lambda_rule!r}")
        if self.se_factor < 0:
            raise SelectionError("se_factor must be nonnegative")
        if not 0.0 < self.z_alpha < 1.0:
            raise SelectionError("z_alpha must lie in (0, 1)")

    def with_seed(self, seed: int) -> "SelectorSpec":
        return replace(self, seed=int(seed))


@dataclass(frozen=True)
class ActiveSet:
    """Columns retained by one fit, plus its held-out validation error."""

    selected: frozenset[int]
    fit_score: float

    def __contains__(self, col: int) -> bool:
        return col in self.selected

    def __len__(self) -> int:
        return len(self.selected)


def _split_rows(rows: np.ndarray, spec: SelectorSpec) -> tuple[np.ndarray, np.ndarray]:
    rows = np.asarray(rows, dtype=np.intp)
    if rows.ndim != 1 or rows.size < 20:
        raise SelectionError("need at least 20 rows to fit and validate")
    rng = np.random.default_rng(np.random.SeedSequence([0x5E1EC7, int(spec.seed) & 0xFFFFFFFF]))
    perm = rng.permutation(rows.size)
    n_train = int(round(spec.train_fraction * rows.size))
    n_train = min(max(n_train, 2), rows.size - 1)
    return rows[perm[:n_train]], rows[perm[n_train:]]


def _choose_lambda(sq_errors: np.ndarray, rule: str, se_factor: float) -> int:
    """Index into the (descending) penalty grid given per-sample squared errors.

    "min" takes the smallest validation MSE (ties toward the sparser end);
    "se" takes the sparsest penalty whose MSE is within ``se_factor`` standard
    errors of that minimum, the usual guard against the flat tail of the
    validation curve when the fit is used for selection rather than
    prediction.
    """
    val_mse = sq_errors.mean(axis=0)
    best = int(np.argmin(val_mse))
    if rule == "min":
        return best
    n_val = sq_errors.shape[0]
    se = float(sq_errors[:, best].std(ddof=1) / np.sqrt(n_val)) if n_val > 1 else 0.0
    return int(np.argmax(val_mse <= val_mse[best] + se_factor * se))


def lasso_active_set(
    xmat: np.ndarray, y: np.ndarray, rows: Sequence[int], spec: SelectorSpec
) -> ActiveSet:
    """L1 path fit with held-out penalty choice.

    Columns are standardized on the training rows; constant columns are
    excluded outright and can never be selected. The intercept is always fit
    (response centered) and never part of the active set.
    """
    xmat = np.asarray(xmat, dtype=float)
    y = np.asarray(y, dtype=float)
    train, val = _split_rows(np.asarray(rows), spec)
    if train.size < 2:
        raise SelectionError("need at least two training rows")

    xt = xmat[train]
    mu = xt.mean(axis=0)
    sd = xt.std(axis=0)
    live = sd > 0.0
    y_mean = y[train].mean()
    yc = y[train] - y_mean

    if not live.any():
        resid = y[val] - y_mean
        return ActiveSet(frozenset(), float(np.mean(resid**2)))

    xs = (xt[:, live] - mu[live]) / sd[live]
    lam_max = float(np.max(np.abs(xs.T @ yc)) / train.size)
    if lam_max <= 0.0:
        resid = y[val] - y_mean
        return ActiveSet(frozenset(), float(np.mean(resid**2)))
    lambdas = np.geomspace(lam_max, lam_max * spec.lambda_min_ratio, spec.n_lambdas)

    _, coefs, _ = lasso_path(
        xs, yc, alphas=lambdas, tol=spec.cd_tol, max_iter=100_000
    )
    # lasso_path returns coefficients ordered by descending penalty
    xv = (xmat[val][:, live] - mu[live]) / sd[live]
    sq_errors = (xv @ coefs + y_mean - y[val][:, None]) ** 2
    best = _choose_lambda(sq_errors, spec.lambda_rule, spec.se_factor)

    live_idx = np.flatnonzero(live)
    selected = frozenset(int(c) for c in live_idx[np.abs(coefs[:, best]) > 0.0])
    return ActiveSet(selected, float(sq_errors.mean(axis=0)[best]))


def lasso_path_fit(
    xmat: np.ndarray, y: np.ndarray, rows: Sequence[int], spec: SelectorSpec
) -> dict:
    """Same fit as :func:`lasso_active_set` but exposing the path internals.

    Returns the standardized training design, centered response, penalty grid,
    coefficient path and chosen index; used to verify optimality conditions.
    """
    xmat = np.asarray(xmat, dtype=float)
    y = np.asarray(y, dtype=float)
    train, val = _split_rows(np.asarray(rows), spec)
    xt = xmat[train]
    mu, sd = xt.mean(axis=0), xt.std(axis=0)
    live = sd > 0.0
    y_mean = y[train].mean()
    yc = y[train] - y_mean
    xs = (xt[:, live] - mu[live]) / sd[live]
    lam_max = float(np.max(np.abs(xs.T @ yc)) / train.size)
    lambdas = np.geomspace(lam_max, lam_max * spec.lambda_min_ratio, spec.n_lambdas)
    _, coefs, _ = lasso_path(xs, yc, alphas=lambdas, tol=spec.cd_tol, max_iter=100_000)
    xv = (xmat[val][:, live] - mu[live]) / sd[live]
    sq_errors = (xv @ coefs + y_mean - y[val][:, None]) ** 2
    best = _choose_lambda(sq_errors, spec.lambda_rule, spec.se_factor)
    return {
        "x_std": xs,
        "y_centered": yc,
        "lambdas": lambdas,
        "coefs": coefs,
        "best_index": best,
        "live_columns": np.flatnonzero(live),
    }


def gbm_active_set(
    xmat: np.ndarray, y: np.ndarray, rows: Sequence[int], spec: SelectorSpec
) -> ActiveSet:
    """Boosted-tree fit with early stopping; active set = features that carry
    split gain in the kept rounds.

    The rows are split 4:1; trees grow on the fit part until the held-out loss
    fails to improve for ``patience`` rounds (or the tree cap is hit). The
    model is then rolled back to the earliest round whose validation loss is
    within ``rollback_margin`` of the best round, measured relative to the
    baseline loss; a run whose best improvement is below that margin keeps
    zero trees. Features are ranked by their share of total split gain and
    kept above ``gain_share_min``, which discards incidental splits that fit
    residual noise.
    """
    xmat = np.asarray(xmat, dtype=float)
    y = np.asarray(y, dtype=float)
    train, val = _split_rows(np.asarray(rows), spec)
    x_train, y_train = xmat[train], y[train]
    x_val, y_val = xmat[val], y[val]

    losses = [float(np.mean((y_val - y_train.mean()) ** 2))]
    val_pred = np.full(val.size, y_train.mean())
    state = {"best": 0.0 + losses[0], "best_iter": 0, "stale": 0}

    def monitor(i, booster, _locals) -> bool:
        nonlocal val_pred
        val_pred = val_pred + spec.learning_rate * booster.estimators_[i, 0].predict(x_val)
        loss = float(np.mean((y_val - val_pred) ** 2))
        losses.append(loss)
        if loss < state["best"]:
            state["best"] = loss
            state["best_iter"] = i + 1
            state["stale"] = 0
        else:
            state["stale"] += 1
        return state["stale"] >= spec.patience

    model = GradientBoostingRegressor(
        n_estimators=spec.max_trees,
        max_depth=spec.max_depth,
        learning_rate=spec.learning_rate,
        random_state=int(spec.seed) & 0xFFFFFFFF,
    )
    model.fit(x_train, y_train, monitor=monitor)

    curve = np.asarray(losses)
    margin = spec.rollback_margin * curve[0]
    if curve.min() >= curve[0] - margin:
        n_keep = 0
    else:
        n_keep = int(np.argmax(curve <= curve.min() + margin))
    fit_score = float(curve[n_keep])

    if n_keep == 0:
        return ActiveSet(frozenset(), fit_score)

    gains = np.zeros(xmat.shape[1])
    for tree in model.estimators_[:n_keep, 0]:
        gains += tree.tree_.compute_feature_importances(normalize=False)
    total = gains.sum()
    if total <= 0:
        return ActiveSet(frozenset(), fit_score)
    selected = frozenset(int(c) for c in np.flatnonzero(gains > spec.gain_share_min * total))
    return ActiveSet(selected, fit_score)


def ztest_active_set(
    xmat: np.ndarray, y: np.ndarray, rows: Sequence[int], spec: SelectorSpec
) -> ActiveSet:
    """Individualized per-covariate testing: one least-squares fit, keep the
    columns whose coefficient z-statistic clears the two-sided critical value.

    No sparse search happens among the other covariates, so each column's
    membership is judged against the full conditioning set. Requires more
    training rows than columns.
    """
    from scipy.stats import norm

    xmat = np.asarray(xmat, dtype=float)
    y = np.asarray(y, dtype=float)
    train, val = _split_rows(np.asarray(rows), spec)
    xt = xmat[train]
    mu, sd = xt.mean(axis=0), xt.std(axis=0)
    live = sd > 0.0
    y_mean = y[train].mean()
    yc = y[train] - y_mean
    p = int(live.sum())
    if train.size <= p + 1:
        raise SelectionError(f"z-test selection needs more rows than columns ({train.size} vs {p})")
    if p == 0:
        resid = y[val] - y_mean
        return ActiveSet(frozenset(), float(np.mean(resid**2)))

    xs = (xt[:, live] - mu[live]) / sd[live]
    gram = xs.T @ xs
    coef = np.linalg.solve(gram, xs.T @ yc)
    resid = yc - xs @ coef
    dof = train.size - p - 1
    sigma2 = float(resid @ resid) / dof
    cov = sigma2 * np.linalg.inv(gram)
    z_scores = coef / np.sqrt(np.diag(cov))
    crit = norm.ppf(1.0 - spec.z_alpha / 2.0)

    xv = (xmat[val][:, live] - mu[live]) / sd[live]
    val_mse = float(np.mean((xv @ coef + y_mean - y[val]) ** 2))
    live_idx = np.flatnonzero(live)
    selected = frozenset(int(c) for c in live_idx[np.abs(z_scores) >= crit])
    return ActiveSet(selected, val_mse)


def select(spec: SelectorSpec, xmat: np.ndarray, y: np.ndarray, rows: Sequence[int]) -> ActiveSet:
    """Dispatch to the configured selector."""
    if spec.method == "lasso":
        return lasso_active_set(xmat, y, rows, spec)
    if spec.method == "gbm":
        return gbm_active_set(xmat, y, rows, spec)
    if spec.method == "ztest":
        return ztest_active_set(xmat, y, rows, spec)
    raise SelectionError(f"unknown selector method {spec.method!r}")
