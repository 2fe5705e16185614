"""Combining rules for estimates over multiple synthetic datasets.

The point estimate is the average of the per-dataset estimates; its variance
combines the average within-dataset variance with the between-dataset
variance, u = within + (1 + 1/m) * between, computed per coefficient. The
uncongenial variance doubles u, which is enough to make interval estimates
conservative when the synthesis and analysis models disagree.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .metrics import RegressionFit


@dataclass(frozen=True)
class CombinedEstimate:
    theta_bar: np.ndarray
    within: np.ndarray
    between: np.ndarray
    total: np.ndarray
    uncongenial: np.ndarray
    m: int


def combine(estimates: Sequence[tuple[np.ndarray, np.ndarray]]) -> CombinedEstimate:
    """Combine m >= 2 (coefficients, variance diagonal) pairs.

    theta_bar is the mean estimate, within the mean variance, between the
    sample variance of the estimates (denominator m - 1), total
    within + (1 + 1/m) * between, uncongenial exactly twice that.
    """
    m = len(estimates)
    if m < 2:
        raise ValueError("between-dataset variance needs m >= 2 estimates")
    thetas = np.array([np.asarray(t, dtype=np.float64) for t, _ in estimates])
    variances = np.array([np.asarray(v, dtype=np.float64) for _, v in estimates])
    if thetas.shape != variances.shape:
        raise ValueError("estimates and variances must share the coefficient layout")
    theta_bar = thetas.mean(axis=0)
    within = variances.mean(axis=0)
    between = ((thetas - theta_bar) ** 2).sum(axis=0) / (m - 1)
    total = within + (1.0 + 1.0 / m) * between
    return CombinedEstimate(theta_bar=theta_bar, within=within, between=between,
                            total=total, uncongenial=2.0 * total, m=m)


def combine_fits(fits: Sequence[RegressionFit]) -> CombinedEstimate:
    return combine([(f.coef, np.diag(f.cov)) for f in fits])


@dataclass(frozen=True)
class CombinedInterval:
    lower: np.ndarray
    upper: np.ndarray
    uncongenial_lower: np.ndarray
    uncongenial_upper: np.ndarray
    level: float


def combined_interval(ce: CombinedEstimate, level: float = 0.90) -> CombinedInterval:
    """Normal-quantile intervals around theta_bar, once with the combined
    variance and once with the doubled (uncongenial) variance."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    z = stats.norm.ppf(0.5 + level / 2.0)
    half = z * np.sqrt(ce.total)
    half_uc = z * np.sqrt(ce.uncongenial)
    return CombinedInterval(lower=ce.theta_bar - half, upper=ce.theta_bar + half,
                            uncongenial_lower=ce.theta_bar - half_uc,
                            uncongenial_upper=ce.theta_bar + half_uc,
                            level=level)
