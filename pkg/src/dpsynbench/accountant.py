"""Renyi-DP accounting for the subsampled Gaussian mechanism.

Tracks the cumulative privacy loss of repeated noisy gradient steps and
converts the Renyi ledger to an (epsilon, delta) guarantee. The per-step
divergence is evaluated in the log domain throughout: a binomial sum for
integer orders and a two-sided series with erfc tail factors for fractional
orders, so large orders and small sampling rates do not underflow.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import special

logger = logging.getLogger(__name__)

_LOG_HALF = math.log(0.5)
_MAX_SERIES_TERMS = 5000


@dataclass(frozen=True)
class PrivacyBudget:
    """Target (epsilon, delta). ``default_delta`` applies the 1/(2N) rule."""

    epsilon: float
    delta: float

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must be in (0, 1)")

    @staticmethod
    def default_delta(n_train: int) -> float:
        return 1.0 / (2.0 * n_train)


def default_orders() -> tuple[float, ...]:
    """Order grid: a dense band over [1.1, 10] at step 0.1, plus 1.25 and
    the sparse tail {2, 3, ..., 64, 128, 256}."""
    band = [round(1.1 + 0.1 * i, 10) for i in range(90)]
    sparse = [1.25, 1.5] + [float(a) for a in range(2, 65)] + [128.0, 256.0]
    return tuple(sorted(set(band) | set(sparse)))


def _log_add(a: float, b: float) -> float:
    if a == -math.inf:
        return b
    if b == -math.inf:
        return a
    lo, hi = min(a, b), max(a, b)
    return hi + math.log1p(math.exp(lo - hi))


def _log_comb(n: float, k: int) -> float:
    return float(special.gammaln(n + 1) - special.gammaln(k + 1) - special.gammaln(n - k + 1))


def _log_erfc(x: float) -> float:
    # erfc(x) = 2 * ndtr(-x * sqrt(2)); log_ndtr stays finite far into the tail.
    return math.log(2.0) + float(special.log_ndtr(-x * math.sqrt(2.0)))


def _log_a_int(q: float, sigma: float, alpha: int) -> float:
    """log A_alpha via the exact binomial sum (integer alpha)."""
    log_q, log_1mq = math.log(q), math.log1p(-q)
    inv_2s2 = 1.0 / (2.0 * sigma * sigma)
    total = -math.inf
    for k in range(alpha + 1):
        term = (_log_comb(alpha, k) + k * log_q + (alpha - k) * log_1mq
                + (k * k - k) * inv_2s2)
        total = _log_add(total, term)
    return total


def _log_a_frac(q: float, sigma: float, alpha: float) -> float:
    """log A_alpha for fractional alpha via the split-at-z0 series."""
    log_q, log_1mq = math.log(q), math.log1p(-q)
    inv_2s2 = 1.0 / (2.0 * sigma * sigma)
    z0 = sigma * sigma * math.log(1.0 / q - 1.0) + 0.5
    denom = math.sqrt(2.0) * sigma
    total0 = total1 = -math.inf
    prev0 = prev1 = math.inf
    for k in range(_MAX_SERIES_TERMS):
        j = alpha - k
        log_coef = _log_comb(alpha, k)
        s0 = (log_coef + k * log_q + j * log_1mq + (k * k - k) * inv_2s2
              + _LOG_HALF + _log_erfc((k - z0) / denom))
        s1 = (log_coef + j * log_q + k * log_1mq + (j * j - j) * inv_2s2
              + _LOG_HALF + _log_erfc((z0 - j) / denom))
        total0 = _log_add(total0, s0)
        total1 = _log_add(total1, s1)
        total = _log_add(total0, total1)
        if s0 < prev0 and s1 < prev1 and max(s0, s1) < total - 40.0:
            return total
        prev0, prev1 = s0, s1
    # Non-convergence makes this order unusable; +inf keeps the epsilon
    # conversion conservative (the minimum falls to the remaining orders).
    logger.warning("log A_alpha series did not converge (q=%g, sigma=%g, alpha=%g); "
                   "order excluded", q, sigma, alpha)
    return math.inf


def rdp_step(q: float, sigma: float, alpha: float) -> float:
    """Renyi divergence of order ``alpha`` for one subsampled-Gaussian step.

    Exactly alpha / (2 sigma^2) at q = 1; the subsampled value is never
    larger than that (amplification by subsampling).
    """
    if alpha <= 1:
        raise ValueError(f"order must exceed 1, got {alpha}")
    if sigma <= 0:
        raise ValueError(f"noise multiplier must be positive, got {sigma}")
    if not 0.0 < q <= 1.0:
        raise ValueError(f"sampling rate must be in (0, 1], got {q}")
    if q == 1.0:
        return alpha / (2.0 * sigma * sigma)
    if float(alpha).is_integer():
        log_a = _log_a_int(q, sigma, int(alpha))
    else:
        log_a = _log_a_frac(q, sigma, alpha)
    return max(log_a, 0.0) / (alpha - 1.0)


@dataclass(frozen=True)
class AccountantState:
    """Value object: sampling rate, noise multiplier, steps taken, and the
    per-step RDP over the order grid. The ledger is ``steps`` times the
    per-step value, so composition is exactly linear."""

    q: float
    sigma: float
    steps: int
    orders: tuple[float, ...]
    per_step: tuple[float, ...]

    @property
    def ledger(self) -> dict[float, float]:
        return {a: self.steps * r for a, r in zip(self.orders, self.per_step)}


def fresh(q: float, sigma: float, orders: tuple[float, ...] | None = None) -> AccountantState:
    orders = default_orders() if orders is None else tuple(orders)
    if not orders:
        raise ValueError("order grid must not be empty")
    per_step = tuple(rdp_step(q, sigma, a) for a in orders)
    return AccountantState(q=q, sigma=sigma, steps=0, orders=orders, per_step=per_step)


def compose(state: AccountantState, steps: int) -> AccountantState:
    if steps < 0:
        raise ValueError("steps must be >= 0")
    return replace(state, steps=state.steps + steps)


def to_epsilon(state: AccountantState, delta: float) -> tuple[float, float]:
    """Convert the ledger to epsilon at ``delta``; returns (epsilon, best order)."""
    if not state.orders:
        raise ValueError("empty ledger")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must be in (0, 1)")
    log_inv_delta = math.log(1.0 / delta)
    best_eps, best_order = math.inf, state.orders[0]
    for a, r in zip(state.orders, state.per_step):
        eps = state.steps * r + log_inv_delta / (a - 1.0)
        if eps < best_eps:
            best_eps, best_order = eps, a
    return best_eps, best_order


def calibrate_sigma(target: PrivacyBudget, q: float, steps: int,
                    lo: float = 0.3, hi: float = 100.0,
                    rel_tol: float = 1e-3) -> float:
    """Smallest noise multiplier (within ``rel_tol``) whose composed epsilon
    does not exceed the target. Bisection over [lo, hi]."""
    if target.epsilon <= 0:
        raise ValueError("target epsilon must be positive")

    def eps_at(sigma: float) -> float:
        return to_epsilon(compose(fresh(q, sigma), steps), target.delta)[0]

    if eps_at(hi) > target.epsilon:
        raise ValueError(
            f"target epsilon {target.epsilon} unreachable with sigma <= {hi}")
    if eps_at(lo) <= target.epsilon:
        return lo
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if eps_at(mid) <= target.epsilon:
            hi = mid
        else:
            lo = mid
    return hi


def epsilon_table(qs, sigmas, steps_list, deltas) -> list[dict]:
    """Grid of (q, sigma, steps, delta) -> (epsilon, best order) rows."""
    rows = []
    for q in qs:
        for sigma in sigmas:
            state0 = fresh(q, sigma)
            for steps in steps_list:
                state = compose(state0, steps)
                for delta in deltas:
                    eps, order = to_epsilon(state, delta)
                    rows.append({"q": q, "sigma": sigma, "steps": steps,
                                 "delta": delta, "epsilon": eps, "order": order})
    return rows
