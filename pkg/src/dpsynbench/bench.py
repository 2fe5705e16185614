"""Monte Carlo benchmark orchestrator.

A plan draws l training sets (each with a paired held-out test set of the
same size), fits m synthesizers per training set, samples n releases per
fit, and scores every release on both similarity axes. The (n_train,
epsilon) grid is run as independent sub-plans with delta = 1/(2 n_train).
Everything is keyed off one master seed: per-cell seeds are derived by
hashing (master, l, m, n, stream tag), so any worker count reproduces the
serial results bit for bit.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import dgp, synth
from .accountant import PrivacyBudget
from .metrics import (CartConfig, ols_fit, pmse_ratio, prediction_rmse,
                      specific_generalisation_scores, specific_training_scores,
                      structural_zero_rate, wasserstein_report)
from .synth import DP_GAN, DP_MARGINAL, RESAMPLER, GanConfig, MarginalConfig
from .tabular import validate

logger = logging.getLogger(__name__)


class BenchError(RuntimeError):
    pass


@dataclass(frozen=True)
class BenchPlan:
    synthesizer: str
    master_seed: int
    scenario: int = 1
    l: int = 10
    m: int = 10
    n: int = 10
    n_train: tuple[int, ...] = (500, 10_000, 100_000)
    epsilon: tuple[float, ...] = (0.1, 1.0, 5.0)
    release_size: int | None = None  # defaults to the training size
    wasserstein_null_iters: int = 10_000
    pmse_null_iters: int = 100
    cart: CartConfig = CartConfig()
    gan: GanConfig = GanConfig()
    marginal: MarginalConfig = MarginalConfig()
    max_failure_fraction: float = 0.10

    def __post_init__(self):
        if self.scenario != 1:
            raise ValueError("only scenario 1 is implemented")
        if min(self.l, self.m, self.n) < 1:
            raise ValueError("l, m, n must all be >= 1")
        if self.synthesizer not in (RESAMPLER, DP_MARGINAL, DP_GAN):
            raise ValueError(f"unknown synthesizer {self.synthesizer!r}")


def desk_plan(synthesizer: str, master_seed: int, **overrides) -> BenchPlan:
    """Small-scale profile for continuous-integration runs: 3 x 3 x 3 cells,
    2000 training rows, reduced null iterations."""
    args = dict(synthesizer=synthesizer, master_seed=master_seed,
                l=3, m=3, n=3, n_train=(2000,), epsilon=(1.0,),
                wasserstein_null_iters=1000, pmse_null_iters=50)
    args.update(overrides)
    return BenchPlan(**args)


@dataclass(frozen=True)
class SubPlan:
    n_train: int
    epsilon: float
    delta: float

    @property
    def tag(self) -> str:
        return f"{self.n_train}:{self.epsilon!r}"


def disciplines_grid(plan: BenchPlan) -> list[SubPlan]:
    """Cartesian product of the training-size and privacy-level disciplines."""
    return [SubPlan(n_train=nt, epsilon=eps, delta=PrivacyBudget.default_delta(nt))
            for nt in plan.n_train for eps in plan.epsilon]


def seed_for(master: int, l_idx: int, m_idx: int, n_idx: int, tag: str) -> int:
    """Collision-free deterministic seed for one stream of one cell."""
    key = f"{master}|{l_idx}|{m_idx}|{n_idx}|{tag}".encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "big")


NINE_SCORE_FIELDS = (
    "train_wasserstein_ratio",
    "train_pmse_ratio",
    "gen_wasserstein_ratio",
    "gen_pmse_ratio",
    "gen_coverage",
    "gen_bias_pct",
    "gen_prediction_rmse",
    "train_covariance_ratio",
    "train_bias_pct",
)


@dataclass(frozen=True)
class NineScores:
    train_wasserstein_ratio: float
    train_pmse_ratio: float
    gen_wasserstein_ratio: float
    gen_pmse_ratio: float
    gen_coverage: float
    gen_bias_pct: float
    gen_prediction_rmse: float
    train_covariance_ratio: float
    train_bias_pct: float

    def to_dict(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in NINE_SCORE_FIELDS}


@dataclass
class CellResult:
    l_idx: int
    m_idx: int
    n_idx: int
    metrics: dict = field(default_factory=dict)
    fit_terms: tuple[str, ...] = ()
    coef: np.ndarray | None = None
    realized_epsilon: float | None = None
    zero_violations: int = 0
    error: str | None = None


@dataclass
class SubPlanResult:
    subplan: SubPlan
    cells: list[CellResult]
    scores: NineScores | None
    hierarchical_scores: NineScores | None
    failures: int
    zero_violations: int


@dataclass
class BenchResult:
    plan: BenchPlan
    subresults: list[SubPlanResult]


def _run_fit_task(plan: BenchPlan, sub: SubPlan, l_idx: int, m_idx: int) -> list[CellResult]:
    """Fit one synthesizer and score its n releases. Self-contained: training
    and test sets are regenerated from derived seeds."""
    master = plan.master_seed
    formula = dgp.analysis_formula()
    truth, _ = dgp.true_params()
    train = dgp.generate_scenario1(sub.n_train,
                                   seed_for(master, l_idx, 0, 0, sub.tag + ":train"))
    test = dgp.generate_scenario1(sub.n_train,
                                  seed_for(master, l_idx, 0, 0, sub.tag + ":test"))
    release_size = plan.release_size or sub.n_train

    budget = None
    if plan.synthesizer in (DP_MARGINAL, DP_GAN):
        budget = PrivacyBudget(sub.epsilon, sub.delta)
    spec = synth.SynthesizerSpec(kind=plan.synthesizer,
                                 seed=seed_for(master, l_idx, m_idx, 0, sub.tag + ":fit"),
                                 budget=budget, gan=plan.gan, marginal=plan.marginal)
    cells = []
    try:
        t0 = time.perf_counter()
        model = synth.fit(spec, train)
        fit_train = ols_fit(train, formula)
        logger.info("fit %s l=%d m=%d (n_train=%d eps=%s) in %.1fs",
                    plan.synthesizer, l_idx, m_idx, sub.n_train, sub.epsilon,
                    time.perf_counter() - t0)
    except Exception as exc:  # noqa: BLE001 - cell failures are data
        for n_idx in range(plan.n):
            cells.append(CellResult(l_idx, m_idx, n_idx, error=f"fit: {exc}"))
        return cells

    realized = model.realized_budget.epsilon if model.realized_budget else None
    for n_idx in range(plan.n):
        t0 = time.perf_counter()
        cell = CellResult(l_idx, m_idx, n_idx, realized_epsilon=realized)
        try:
            release = synth.sample(model, release_size,
                                   seed_for(master, l_idx, m_idx, n_idx,
                                            sub.tag + ":sample"))
            cell.zero_violations = len(validate(release))
            metric_rng = {
                name: np.random.default_rng(
                    seed_for(master, l_idx, m_idx, n_idx, sub.tag + ":" + name))
                for name in ("wass_train", "wass_gen", "pmse_train", "pmse_gen")}
            w_train = wasserstein_report(train, release,
                                         plan.wasserstein_null_iters,
                                         metric_rng["wass_train"])
            w_gen = wasserstein_report(test, release, plan.wasserstein_null_iters,
                                       metric_rng["wass_gen"])
            p_train = pmse_ratio(train, release, plan.cart, plan.pmse_null_iters,
                                 metric_rng["pmse_train"])
            p_gen = pmse_ratio(test, release, plan.cart, plan.pmse_null_iters,
                               metric_rng["pmse_gen"])
            fit_synth = ols_fit(release, formula)
            training = specific_training_scores(fit_synth, fit_train)
            general = specific_generalisation_scores([fit_synth], truth)
            cell.metrics = {
                "train_wasserstein_ratio": w_train.mean_ratio,
                "train_pmse_ratio": p_train.ratio,
                "gen_wasserstein_ratio": w_gen.mean_ratio,
                "gen_pmse_ratio": p_gen.ratio,
                "gen_coverage": general.coverage,
                "gen_bias_pct": general.bias_pct,
                "gen_ci_width": general.width,
                "gen_prediction_rmse": prediction_rmse(fit_synth, test, formula),
                "train_covariance_ratio": training.variance_ratio,
                "train_bias_pct": training.bias_pct,
                "zero_violation_rate": structural_zero_rate(release),
            }
            if realized is not None:
                cell.metrics["realized_epsilon"] = realized
            for term, value in zip(fit_synth.terms, fit_synth.coef):
                cell.metrics[f"coef:{term}"] = float(value)
            cell.fit_terms = fit_synth.terms
            cell.coef = fit_synth.coef
        except Exception as exc:  # noqa: BLE001
            cell.error = f"cell: {exc}"
            cell.metrics = {}
        logger.info("cell l=%d m=%d n=%d scored in %.1fs%s", l_idx, m_idx, n_idx,
                    time.perf_counter() - t0,
                    "" if cell.error is None else f" (FAILED: {cell.error})")
        cells.append(cell)
    return cells


def _nanmean(values) -> float:
    return float(np.mean(values)) if len(values) else float("nan")


def _aggregate(plan: BenchPlan, sub: SubPlan, cells: list[CellResult]):
    ok = [c for c in cells if c.error is None]
    failures = len(cells) - len(ok)
    if failures > plan.max_failure_fraction * len(cells):
        raise BenchError(
            f"{failures}/{len(cells)} cells failed for sub-plan {sub.tag}; "
            f"first error: {next(c.error for c in cells if c.error)}")
    if not ok:
        return None, None, failures

    def flat(name):
        return _nanmean([c.metrics[name] for c in ok])

    truth, _ = dgp.true_params()
    coefs = np.array([c.coef for c in ok])
    theta_bar = coefs.mean(axis=0)
    usable = np.abs(truth) > 1e-12
    gen_bias = float(np.mean(100.0 * np.abs(theta_bar[usable] - truth[usable])
                             / np.abs(truth[usable])))
    scores = NineScores(
        train_wasserstein_ratio=flat("train_wasserstein_ratio"),
        train_pmse_ratio=flat("train_pmse_ratio"),
        gen_wasserstein_ratio=flat("gen_wasserstein_ratio"),
        gen_pmse_ratio=flat("gen_pmse_ratio"),
        gen_coverage=flat("gen_coverage"),
        gen_bias_pct=gen_bias,
        gen_prediction_rmse=flat("gen_prediction_rmse"),
        train_covariance_ratio=flat("train_covariance_ratio"),
        train_bias_pct=flat("train_bias_pct"),
    )

    def hier(name):
        l_means = []
        for l_idx in range(plan.l):
            m_means = []
            for m_idx in range(plan.m):
                vals = [c.metrics[name] for c in ok
                        if c.l_idx == l_idx and c.m_idx == m_idx]
                if vals:
                    m_means.append(np.mean(vals))
            if m_means:
                l_means.append(np.mean(m_means))
        return _nanmean(l_means)

    hierarchical = NineScores(**{k: (hier(k) if k != "gen_bias_pct" else gen_bias)
                                 for k in NINE_SCORE_FIELDS})
    return scores, hierarchical, failures


def run_plan(plan: BenchPlan, workers: int = 1) -> BenchResult:
    """Execute the full disciplines grid; deterministic for a fixed master
    seed at any worker count."""
    subresults = []
    for sub in disciplines_grid(plan):
        tasks = [(plan, sub, l_idx, m_idx)
                 for l_idx in range(plan.l) for m_idx in range(plan.m)]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                chunks = list(pool.map(_run_fit_task_star, tasks))
        else:
            chunks = [_run_fit_task(*t) for t in tasks]
        cells = [cell for chunk in chunks for cell in chunk]
        cells.sort(key=lambda c: (c.l_idx, c.m_idx, c.n_idx))
        scores, hierarchical, failures = _aggregate(plan, sub, cells)
        subresults.append(SubPlanResult(
            subplan=sub, cells=cells, scores=scores,
            hierarchical_scores=hierarchical, failures=failures,
            zero_violations=sum(c.zero_violations for c in cells)))
    return BenchResult(plan=plan, subresults=subresults)


def _run_fit_task_star(args):
    return _run_fit_task(*args)


# ---------------------------------------------------------------------------
# artifact emission


def write_cells_csv(result: BenchResult, path) -> None:
    """Flat record per (cell, metric): one row each, deterministic order."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("n_train,epsilon,l,m,n,metric,value\n")
        for sr in result.subresults:
            sub = sr.subplan
            for cell in sr.cells:
                prefix = (f"{sub.n_train},{sub.epsilon!r},"
                          f"{cell.l_idx},{cell.m_idx},{cell.n_idx}")
                if cell.error is not None:
                    fh.write(f"{prefix},failed,1\n")
                    continue
                for name in sorted(cell.metrics):
                    fh.write(f"{prefix},{name},{cell.metrics[name]!r}\n")
                fh.write(f"{prefix},zero_violations,{cell.zero_violations}\n")


def result_summary(result: BenchResult) -> dict:
    out = {"plan": asdict(result.plan), "subplans": []}
    for sr in result.subresults:
        realized = [c.realized_epsilon for c in sr.cells
                    if c.realized_epsilon is not None]
        out["subplans"].append({
            "n_train": sr.subplan.n_train,
            "epsilon": sr.subplan.epsilon,
            "delta": sr.subplan.delta,
            "cells": len(sr.cells),
            "failures": sr.failures,
            "zero_violations": sr.zero_violations,
            "realized_epsilon_min": min(realized) if realized else None,
            "realized_epsilon_max": max(realized) if realized else None,
            "scores": sr.scores.to_dict() if sr.scores else None,
            "hierarchical_scores": (sr.hierarchical_scores.to_dict()
                                    if sr.hierarchical_scores else None),
        })
    return out


def write_scores_json(result: BenchResult, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(result_summary(result), fh, indent=2, sort_keys=True)
        fh.write("\n")
