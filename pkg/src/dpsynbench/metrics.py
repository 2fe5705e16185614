"""Quality measures for synthetic tabular data.

General measures compare whole distributions: per-column 1-Wasserstein (or
total-variation for nominal columns) ratio scores against a randomization
null, and the propensity-score MSE ratio with a from-scratch CART
discriminator. Specific measures target the reference regression analysis:
coefficient bias, variance ratios, confidence-interval coverage and width,
and out-of-sample prediction RMSE.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .tabular import CATEGORICAL, Dataset, OneHotEncoder

# ---------------------------------------------------------------------------
# distribution distances


def wasserstein_1d(a, b) -> float:
    """1-Wasserstein distance between two empirical distributions, via the
    sorted-sample quantile formula. Symmetric; zero iff the empirical
    distributions coincide."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise ValueError("wasserstein_1d needs non-empty samples")
    pooled = np.sort(np.concatenate([a, b]))
    gaps = np.diff(pooled)
    cdf_a = np.searchsorted(a, pooled[:-1], side="right") / a.size
    cdf_b = np.searchsorted(b, pooled[:-1], side="right") / b.size
    return float(np.sum(np.abs(cdf_a - cdf_b) * gaps))


def tv_distance(a, b, levels: int) -> float:
    """Total-variation distance between empirical level distributions."""
    a = np.asarray(a, dtype=np.intp)
    b = np.asarray(b, dtype=np.intp)
    if a.size == 0 or b.size == 0:
        raise ValueError("tv_distance needs non-empty samples")
    pa = np.bincount(a, minlength=levels) / a.size
    pb = np.bincount(b, minlength=levels) / b.size
    return float(0.5 * np.abs(pa - pb).sum())


def _numeric_null_distances(pooled: np.ndarray, n_first: int, iters: int,
                            rng: np.random.Generator) -> np.ndarray:
    """Wasserstein distances for ``iters`` random splits of the pooled sample
    into sizes (n_first, rest). Works on the sorted pooled array: a split is
    a random 0/1 assignment, and the distance is the CDF-gap integral, so no
    per-iteration sorting is needed."""
    pooled = np.sort(pooled)
    n = pooled.size
    n_second = n - n_first
    gaps = np.diff(pooled)
    scale = 1.0 / n_first + 1.0 / n_second
    ranks = np.arange(1, n) / n_second
    base = np.zeros(n, dtype=np.uint8)
    base[:n_first] = 1
    out = np.empty(iters)
    chunk = max(1, 4_000_000 // n)
    pos = 0
    while pos < iters:
        k = min(chunk, iters - pos)
        picks = np.tile(base, (k, 1))
        rng.permuted(picks, axis=1, out=picks)
        cum = np.cumsum(picks[:, :-1], axis=1, dtype=np.float64)
        np.abs(cum * scale - ranks, out=cum)
        out[pos:pos + k] = cum @ gaps
        pos += k
    return out


def _categorical_null_distances(pooled_counts: np.ndarray, n_first: int,
                                iters: int, rng: np.random.Generator) -> np.ndarray:
    """TV distances for random splits; per-level counts in the first part of a
    uniform split follow a multivariate hypergeometric draw."""
    n_second = int(pooled_counts.sum()) - n_first
    first = rng.multivariate_hypergeometric(pooled_counts.astype(np.int64),
                                            n_first, size=iters)
    p1 = first / n_first
    p2 = (pooled_counts - first) / n_second
    return 0.5 * np.abs(p1 - p2).sum(axis=1)


def _ratio_from_null(observed: float, null: np.ndarray) -> tuple[float, float]:
    median = float(np.median(null))
    if median == 0.0:
        if observed == 0.0:
            return 0.0, median
        raise ValueError("degenerate randomization null (median distance 0)")
    return observed / median, median


def wasserstein_ratio(real_col, synth_col, iters: int,
                      rng: np.random.Generator) -> float:
    """Observed 1-Wasserstein distance divided by the median of its
    randomization null (``iters`` random re-splits of the pooled values)."""
    if iters < 1:
        raise ValueError("iters must be >= 1")
    real_col = np.asarray(real_col, dtype=np.float64)
    synth_col = np.asarray(synth_col, dtype=np.float64)
    observed = wasserstein_1d(real_col, synth_col)
    null = _numeric_null_distances(np.concatenate([real_col, synth_col]),
                                   real_col.size, iters, rng)
    ratio, _ = _ratio_from_null(observed, null)
    return ratio


@dataclass(frozen=True)
class ColumnDistance:
    name: str
    distance: str  # "wasserstein" or "tv"
    observed: float
    null_median: float
    ratio: float


@dataclass(frozen=True)
class WassersteinReport:
    columns: tuple[ColumnDistance, ...]
    mean_ratio: float


def wasserstein_report(real: Dataset, synth: Dataset, iters: int,
                       rng: np.random.Generator) -> WassersteinReport:
    """Per-column ratio scores for every schema column.

    Continuous and count columns use the raw-scale Wasserstein distance.
    Categorical columns with three or more (nominal) levels use the
    total-variation distance under the same randomization null; for binary
    columns the two statistics coincide exactly, and the TV route is used.
    """
    if real.schema != synth.schema:
        raise ValueError("datasets must share a schema")
    records = []
    for col in real.schema.columns:
        a = real.column(col.name)
        b = synth.column(col.name)
        if col.kind == CATEGORICAL:
            observed = tv_distance(a, b, col.levels)
            pooled = np.bincount(np.concatenate([a, b]).astype(np.intp),
                                 minlength=col.levels)
            null = _categorical_null_distances(pooled, a.size, iters, rng)
            dist = "tv"
        else:
            observed = wasserstein_1d(a, b)
            null = _numeric_null_distances(np.concatenate([a, b]), a.size,
                                           iters, rng)
            dist = "wasserstein"
        ratio, median = _ratio_from_null(observed, null)
        records.append(ColumnDistance(col.name, dist, observed, median, ratio))
    mean_ratio = float(np.mean([r.ratio for r in records]))
    return WassersteinReport(tuple(records), mean_ratio)


# ---------------------------------------------------------------------------
# CART discriminator


@dataclass(frozen=True)
class CartConfig:
    max_depth: int = 10
    min_leaf: int = 20


@dataclass
class CartNode:
    prob: float
    n: int
    feature: int = -1
    threshold: float = 0.0
    levels: tuple[int, ...] | None = None
    left: "CartNode | None" = None
    right: "CartNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass
class CartTree:
    root: CartNode
    config: CartConfig
    n_features: int


def _best_numeric_split(col, y, min_leaf):
    n = col.size
    order = np.argsort(col)
    sv = col[order]
    sy = y[order]
    cut = np.flatnonzero(sv[1:] != sv[:-1])
    if cut.size == 0:
        return None
    n_left = cut + 1.0
    n_right = n - n_left
    valid = (n_left >= min_leaf) & (n_right >= min_leaf)
    if not valid.any():
        return None
    cut = cut[valid]
    n_left, n_right = n_left[valid], n_right[valid]
    pos_left = np.cumsum(sy)[cut]
    pos_right = sy.sum() - pos_left
    pl = pos_left / n_left
    pr = pos_right / n_right
    gini = (n_left * 2.0 * pl * (1.0 - pl) + n_right * 2.0 * pr * (1.0 - pr)) / n
    k = int(np.argmin(gini))  # first minimum: smallest threshold wins ties
    return float(gini[k]), float(0.5 * (sv[cut[k]] + sv[cut[k] + 1]))


def _best_categorical_split(col, y, min_leaf):
    levels = np.unique(col.astype(np.intp))
    if levels.size < 2:
        return None
    n = col.size
    best = None
    # proper subsets, excluding the top level so each split appears once
    for mask in range(1, 1 << (levels.size - 1)):
        subset = tuple(int(lv) for i, lv in enumerate(levels) if mask >> i & 1)
        go_left = np.isin(col, subset)
        nl = int(go_left.sum())
        nr = n - nl
        if nl < min_leaf or nr < min_leaf:
            continue
        pl = y[go_left].mean()
        pr = y[~go_left].mean()
        gini = (nl * 2.0 * pl * (1.0 - pl) + nr * 2.0 * pr * (1.0 - pr)) / n
        if best is None or gini < best[0]:
            best = (float(gini), subset)
    return best


def _grow(X, y, kinds, config, depth):
    n = y.size
    prob = float(y.mean())
    node = CartNode(prob=prob, n=n)
    if depth >= config.max_depth or n < 2 * config.min_leaf or prob in (0.0, 1.0):
        return node
    best_gini = np.inf
    best = None  # (feature, threshold, levels)
    for j in range(X.shape[1]):
        col = X[:, j]
        if kinds[j] == CATEGORICAL:
            cand = _best_categorical_split(col, y, config.min_leaf)
            if cand is not None and cand[0] < best_gini:
                best_gini, best = cand[0], (j, 0.0, cand[1])
        else:
            cand = _best_numeric_split(col, y, config.min_leaf)
            if cand is not None and cand[0] < best_gini:
                best_gini, best = cand[0], (j, cand[1], None)
    if best is None:
        return node
    j, threshold, levels = best
    if levels is None:
        go_left = X[:, j] <= threshold
    else:
        go_left = np.isin(X[:, j], levels)
    node.feature = j
    node.threshold = threshold
    node.levels = levels
    node.left = _grow(X[go_left], y[go_left], kinds, config, depth + 1)
    node.right = _grow(X[~go_left], y[~go_left], kinds, config, depth + 1)
    return node


def cart_fit(X, y, config: CartConfig = CartConfig(),
             kinds: list[str] | None = None) -> CartTree:
    """Greedy Gini-impurity tree for binary labels.

    Features are numeric threshold splits by default; pass ``kinds`` with
    ``tabular.CATEGORICAL`` entries for level-subset splits. Ties between
    equal-impurity splits resolve to the lowest feature index, then the
    smallest threshold, so the tree is invariant to row order.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError("X must be (n, k) and y (n,)")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("labels must be binary")
    if X.shape[0] < 2 * config.min_leaf:
        raise ValueError(
            f"need at least {2 * config.min_leaf} rows, got {X.shape[0]}")
    kinds = ["numeric"] * X.shape[1] if kinds is None else list(kinds)
    root = _grow(X, y, kinds, config, 0)
    return CartTree(root=root, config=config, n_features=X.shape[1])


def cart_predict(tree: CartTree, X) -> np.ndarray:
    """Leaf probability (label mean) for each row of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != tree.n_features:
        raise ValueError(f"expected {tree.n_features} features, got {X.shape[1]}")
    out = np.empty(X.shape[0])

    def descend(node, idx):
        if node.is_leaf:
            out[idx] = node.prob
            return
        col = X[idx, node.feature]
        go_left = col <= node.threshold if node.levels is None \
            else np.isin(col, node.levels)
        descend(node.left, idx[go_left])
        descend(node.right, idx[~go_left])

    descend(tree.root, np.arange(X.shape[0]))
    return out


# ---------------------------------------------------------------------------
# propensity-score MSE


@dataclass(frozen=True)
class PmseReport:
    observed: float
    synthetic_fraction: float
    ratio: float | None = None
    null_mean: float | None = None
    null_median: float | None = None
    null_sd: float | None = None
    null_count: int = 0


def _stacked_features(real: Dataset, synth: Dataset):
    if real.schema != synth.schema:
        raise ValueError("datasets must share a schema")
    enc = OneHotEncoder(real.schema).fit(real)
    X = np.vstack([enc.encode(real), enc.encode(synth)])
    labels = np.concatenate([np.zeros(real.n_rows), np.ones(synth.n_rows)])
    return X, labels


def _pmse_value(X, labels, config) -> float:
    c = labels.mean()
    tree = cart_fit(X, labels, config)
    p = cart_predict(tree, X)
    return float(np.mean((p - c) ** 2))


def pmse(real: Dataset, synth: Dataset, config: CartConfig = CartConfig()) -> PmseReport:
    """Propensity-score MSE: stack real (label 0) and synthetic (label 1)
    rows, fit a CART discriminator on one-hot features, and average
    (predicted probability - synthetic fraction)^2 over all rows."""
    X, labels = _stacked_features(real, synth)
    return PmseReport(observed=_pmse_value(X, labels, config),
                      synthetic_fraction=float(labels.mean()))


def pmse_ratio(real: Dataset, synth: Dataset, config: CartConfig = CartConfig(),
               null_iters: int = 100,
               rng: np.random.Generator | None = None) -> PmseReport:
    """pMSE divided by the mean of its permutation null (labels reshuffled
    over the stacked table, discriminator refit each time)."""
    if null_iters < 1:
        raise ValueError("null_iters must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    X, labels = _stacked_features(real, synth)
    observed = _pmse_value(X, labels, config)
    null = np.empty(null_iters)
    for i in range(null_iters):
        null[i] = _pmse_value(X, rng.permutation(labels), config)
    null_mean = float(null.mean())
    if null_mean == 0.0:
        raise ValueError("degenerate pMSE null (mean 0)")
    return PmseReport(observed=observed, synthetic_fraction=float(labels.mean()),
                      ratio=observed / null_mean, null_mean=null_mean,
                      null_median=float(np.median(null)), null_sd=float(null.std()),
                      null_count=null_iters)


# ---------------------------------------------------------------------------
# the reference regression analysis


class RankDeficiencyError(ValueError):
    def __init__(self, column: str):
        super().__init__(f"design matrix is rank deficient at column {column!r}")
        self.column = column


@dataclass(frozen=True)
class Formula:
    """Linear model with an intercept, main effects, and pairwise products."""

    outcome: str
    mains: tuple[str, ...]
    interactions: tuple[tuple[str, str], ...] = ()

    @property
    def terms(self) -> tuple[str, ...]:
        return ("intercept", *self.mains,
                *(f"{a}:{b}" for a, b in self.interactions))


def design_matrix(d: Dataset, formula: Formula) -> np.ndarray:
    cols = [np.ones(d.n_rows)]
    cols += [d.column(name) for name in formula.mains]
    cols += [d.column(a) * d.column(b) for a, b in formula.interactions]
    return np.column_stack(cols)


@dataclass(frozen=True)
class RegressionFit:
    terms: tuple[str, ...]
    coef: np.ndarray
    cov: np.ndarray
    resid_var: float
    n: int

    @property
    def p(self) -> int:
        return len(self.terms)

    @property
    def df(self) -> int:
        return self.n - self.p

    def std_errors(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))

    def conf_int(self, level: float = 0.90) -> tuple[np.ndarray, np.ndarray]:
        """Per-coefficient Student-t interval at the given level."""
        half = stats.t.ppf(0.5 + level / 2.0, self.df) * self.std_errors()
        return self.coef - half, self.coef + half


def ols_fit(d: Dataset, formula: Formula) -> RegressionFit:
    """Least squares with V = s^2 (X'X)^{-1}, s^2 the unbiased residual
    variance. Raises :class:`RankDeficiencyError` naming the first linearly
    dependent design column."""
    X = design_matrix(d, formula)
    y = d.column(formula.outcome)
    n, p = X.shape
    if n <= p:
        raise ValueError(f"need more rows than parameters ({n} rows, {p} terms)")
    if np.linalg.matrix_rank(X) < p:
        rank = 0
        for j in range(p):
            new_rank = np.linalg.matrix_rank(X[:, :j + 1])
            if new_rank == rank:
                raise RankDeficiencyError(formula.terms[j])
            rank = new_rank
        raise RankDeficiencyError(formula.terms[-1])
    xtx = X.T @ X
    coef = np.linalg.solve(xtx, X.T @ y)
    resid = y - X @ coef
    s2 = float(resid @ resid) / (n - p)
    cov = s2 * np.linalg.inv(xtx)
    return RegressionFit(terms=formula.terms, coef=coef, cov=cov,
                         resid_var=s2, n=n)


_ZERO_TOL = 1e-12


@dataclass(frozen=True)
class TrainingScores:
    bias_pct: float
    variance_ratio: float
    excluded: tuple[str, ...]


def specific_training_scores(fit_synth: RegressionFit,
                             fit_train: RegressionFit) -> TrainingScores:
    """Mean percent coefficient bias of the synthetic fit against the training
    fit, and the mean ratio of coefficient variances. Reference coefficients
    within 1e-12 of zero are excluded from the bias mean (with a warning)."""
    if fit_synth.terms != fit_train.terms:
        raise ValueError("fits must share the same model terms")
    ref = fit_train.coef
    usable = np.abs(ref) > _ZERO_TOL
    excluded = tuple(t for t, u in zip(fit_train.terms, usable) if not u)
    if excluded:
        warnings.warn(f"excluding near-zero reference coefficients from bias: {excluded}")
    if not usable.any():
        raise ValueError("no usable reference coefficients for percent bias")
    bias = float(np.mean(100.0 * np.abs(fit_synth.coef[usable] - ref[usable])
                         / np.abs(ref[usable])))
    ratio = float(np.mean(np.diag(fit_synth.cov) / np.diag(fit_train.cov)))
    return TrainingScores(bias_pct=bias, variance_ratio=ratio, excluded=excluded)


@dataclass(frozen=True)
class GeneralisationScores:
    bias_pct: float
    coverage: float
    width: float
    excluded: tuple[str, ...]


def specific_generalisation_scores(fits: list[RegressionFit], truth: np.ndarray,
                                   level: float = 0.90) -> GeneralisationScores:
    """Scores against the known population coefficients.

    Bias compares the coefficient average across datasets with the truth
    (percent, excluding near-zero true coefficients); coverage is the fraction
    of (dataset, coefficient) pairs whose per-dataset interval contains the
    true value; width is the mean interval width.
    """
    if not fits:
        raise ValueError("need at least one fit")
    truth = np.asarray(truth, dtype=np.float64)
    if any(len(f.terms) != truth.size for f in fits):
        raise ValueError("truth vector does not match the model terms")
    coefs = np.array([f.coef for f in fits])
    theta_bar = coefs.mean(axis=0)
    usable = np.abs(truth) > _ZERO_TOL
    excluded = tuple(t for t, u in zip(fits[0].terms, usable) if not u)
    bias = float(np.mean(100.0 * np.abs(theta_bar[usable] - truth[usable])
                         / np.abs(truth[usable])))
    hits, widths = [], []
    for f in fits:
        lo, hi = f.conf_int(level)
        hits.append((lo <= truth) & (truth <= hi))
        widths.append(hi - lo)
    return GeneralisationScores(bias_pct=bias,
                                coverage=float(np.mean(hits)),
                                width=float(np.mean(widths)),
                                excluded=excluded)


def prediction_rmse(fit: RegressionFit, test: Dataset, formula: Formula) -> float:
    """Root mean squared prediction error on a held-out dataset."""
    X = design_matrix(test, formula)
    resid = test.column(formula.outcome) - X @ fit.coef
    return float(np.sqrt(np.mean(resid ** 2)))


def structural_zero_rate(d: Dataset) -> float:
    """Fraction of rows violating any structural-zero rule."""
    if d.n_rows == 0:
        return 0.0
    bad = np.zeros(d.n_rows, dtype=bool)
    for rule in d.schema.zero_rules:
        guard = d.column(rule.guard_column)
        forced = d.column(rule.forced_column)
        bad |= (guard == rule.guard_level) & (forced != rule.forced_level)
    return float(bad.mean())
