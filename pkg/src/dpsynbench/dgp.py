"""Scenario-1 data generating process with known ground-truth parameters.

Nine columns:

    x1 ~ Normal(5, sd 2)            continuous
    x2 ~ Normal(-3, sd 1)           continuous
    x3 ~ Bernoulli(0.7)             binary
    x4 ~ NegBinomial(p=0.8, r=30)   count (mean r(1-p)/p = 7.5)
    x5 ~ Categorical(0.2, 0.3, 0.5) three levels
    x6 ~ Normal(x3, sd 50)          continuous, mean follows x3
    w1 ~ Bernoulli(0.5)             binary
    w2 ~ Bernoulli(0.3 * w1)        binary, structurally zero when w1 = 0
    y  ~ Normal(x1 + x2 + x3 + x4 + x1*x4, sd 20)

Normal second parameters are standard deviations throughout, and the
negative binomial takes (success probability, size) in that order; both are
fixed conventions of this package.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tabular import (CATEGORICAL, CONTINUOUS, COUNT, Column, Dataset, Schema,
                      StructuralZeroRule)


@dataclass(frozen=True)
class Scenario1Params:
    x1_mean: float = 5.0
    x1_sd: float = 2.0
    x2_mean: float = -3.0
    x2_sd: float = 1.0
    x3_p: float = 0.7
    x4_p: float = 0.8
    x4_size: int = 30
    x5_probs: tuple[float, float, float] = (0.2, 0.3, 0.5)
    x6_sd: float = 50.0
    w1_p: float = 0.5
    w2_scale: float = 0.3
    noise_sd: float = 20.0

    def __post_init__(self):
        if abs(sum(self.x5_probs) - 1.0) > 1e-12:
            raise ValueError("x5 probabilities must sum to 1")
        for p in (self.x3_p, self.x4_p, self.w1_p, self.w2_scale, *self.x5_probs):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability parameter {p} outside [0, 1]")
        for sd in (self.x1_sd, self.x2_sd, self.x6_sd, self.noise_sd):
            if sd <= 0:
                raise ValueError("standard deviations must be positive")


def scenario1_schema() -> Schema:
    return Schema(
        columns=(
            Column("x1", CONTINUOUS),
            Column("x2", CONTINUOUS),
            Column("x3", CATEGORICAL, 2),
            Column("x4", COUNT),
            Column("x5", CATEGORICAL, 3),
            Column("x6", CONTINUOUS),
            Column("w1", CATEGORICAL, 2),
            Column("w2", CATEGORICAL, 2),
            Column("y", CONTINUOUS),
        ),
        zero_rules=(StructuralZeroRule("w1", 0, "w2", 0),),
        outcome="y",
    )


def generate_scenario1(n: int, seed: int,
                       params: Scenario1Params = Scenario1Params()) -> Dataset:
    """Draw ``n`` rows from the Scenario-1 process, deterministic per seed."""
    if n < 0:
        raise ValueError("n must be >= 0")
    rng = np.random.default_rng(seed)
    p = params
    x1 = rng.normal(p.x1_mean, p.x1_sd, n)
    x2 = rng.normal(p.x2_mean, p.x2_sd, n)
    x3 = rng.binomial(1, p.x3_p, n).astype(float)
    x4 = rng.negative_binomial(p.x4_size, p.x4_p, n).astype(float)
    x5 = rng.choice(3, size=n, p=np.asarray(p.x5_probs)).astype(float)
    x6 = rng.normal(x3, p.x6_sd)
    w1 = rng.binomial(1, p.w1_p, n).astype(float)
    w2 = rng.binomial(1, p.w2_scale * w1).astype(float)
    y = rng.normal(x1 + x2 + x3 + x4 + x1 * x4, p.noise_sd)
    values = np.column_stack([x1, x2, x3, x4, x5, x6, w1, w2, y]) if n else \
        np.empty((0, 9))
    return Dataset(scenario1_schema(), values)


def true_params(params: Scenario1Params = Scenario1Params()) -> tuple[np.ndarray, float]:
    """Ground-truth analysis-model coefficients and outcome noise sd.

    Coefficient order matches :func:`analysis_formula`:
    (intercept, x1, x2, x3, x4, x1:x4) = (0, 1, 1, 1, 1, 1).
    """
    return np.array([0.0, 1.0, 1.0, 1.0, 1.0, 1.0]), params.noise_sd


def analysis_formula():
    """The reference analysis model for Scenario 1: y ~ x1 + x2 + x3 + x4 + x1:x4."""
    from .metrics import Formula

    return Formula(outcome="y", mains=("x1", "x2", "x3", "x4"),
                   interactions=(("x1", "x4"),))
