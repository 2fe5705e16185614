"""Command-line entry points: generate, fit, sample, evaluate, bench, report,
accountant. Every run with identical inputs and seeds is bit-reproducible in
all emitted files; there is no wall-clock seeding anywhere."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import accountant, bench, dgp, metrics, report, synth, tabular
from .accountant import PrivacyBudget


def _cmd_generate(args) -> int:
    d = dgp.generate_scenario1(args.n, args.seed)
    tabular.write_csv(d, args.out)
    if args.schema_out:
        tabular.write_schema(d.schema, args.schema_out)
    print(f"wrote {d.n_rows} rows to {args.out}")
    return 0


def _gan_config(args) -> synth.GanConfig:
    return synth.GanConfig(latent_dim=args.latent_dim, batch_size=args.batch_size,
                           steps=args.steps, learning_rate=args.learning_rate,
                           clip_norm=args.clip_norm, tau=args.tau)


def _cmd_fit(args) -> int:
    schema = tabular.read_schema(args.schema)
    train = tabular.read_csv(args.train, schema)
    budget = None
    if args.kind in (synth.DP_MARGINAL, synth.DP_GAN):
        delta = args.delta if args.delta else PrivacyBudget.default_delta(train.n_rows)
        budget = PrivacyBudget(args.epsilon, delta)
    spec = synth.SynthesizerSpec(kind=args.kind, seed=args.seed, budget=budget,
                                 gan=_gan_config(args),
                                 marginal=synth.MarginalConfig(bins=args.bins))
    model = synth.fit(spec, train)
    synth.save_model(model, args.out)
    realized = model.realized_budget
    if realized is not None:
        print(f"fitted {args.kind}: realized epsilon {realized.epsilon:.4f} "
              f"at delta {realized.delta:g}")
    else:
        print(f"fitted {args.kind} (non-private)")
    print(f"saved model to {args.out}")
    return 0


def _cmd_sample(args) -> int:
    model = synth.load_model(args.model)
    d = synth.sample(model, args.n, args.seed)
    tabular.write_csv(d, args.out)
    print(f"wrote {d.n_rows} synthetic rows to {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    schema = tabular.read_schema(args.schema)
    real = tabular.read_csv(args.real, schema)
    synthetic = tabular.read_csv(args.synth, schema)
    rng = np.random.default_rng(args.seed)
    out: dict = {}

    w = metrics.wasserstein_report(real, synthetic, args.wasserstein_iters, rng)
    out["training_wasserstein"] = {
        "mean_ratio": w.mean_ratio,
        "columns": [{"name": c.name, "distance": c.distance, "observed": c.observed,
                     "null_median": c.null_median, "ratio": c.ratio}
                    for c in w.columns]}
    p = metrics.pmse_ratio(real, synthetic, null_iters=args.pmse_iters, rng=rng)
    out["training_pmse"] = {"observed": p.observed, "ratio": p.ratio,
                            "null_mean": p.null_mean}
    if args.test:
        test = tabular.read_csv(args.test, schema)
        wg = metrics.wasserstein_report(test, synthetic, args.wasserstein_iters, rng)
        pg = metrics.pmse_ratio(test, synthetic, null_iters=args.pmse_iters, rng=rng)
        out["generalisation_wasserstein"] = {"mean_ratio": wg.mean_ratio}
        out["generalisation_pmse"] = {"observed": pg.observed, "ratio": pg.ratio}

    formula = dgp.analysis_formula()
    analysis_cols = {formula.outcome, *formula.mains}
    if analysis_cols.issubset(set(schema.names)):
        fit_real = metrics.ols_fit(real, formula)
        fit_synth = metrics.ols_fit(synthetic, formula)
        ts = metrics.specific_training_scores(fit_synth, fit_real)
        out["training_specific"] = {"bias_pct": ts.bias_pct,
                                    "covariance_ratio": ts.variance_ratio}
        if args.test:
            out["generalisation_prediction_rmse"] = metrics.prediction_rmse(
                fit_synth, test, formula)
    if schema.zero_rules:
        out["zero_violation_rate"] = metrics.structural_zero_rate(synthetic)

    text = json.dumps(out, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


def _load_plan(args) -> tuple[bench.BenchPlan, str, int]:
    with open(args.config, "r", encoding="utf-8") as fh:
        cfg = json.load(fh)
    seed = args.seed if args.seed is not None else cfg.get("seed")
    if seed is None:
        raise ValueError("a master seed is required (config key 'seed' or --seed)")
    synth_cfg = cfg.get("synthesizer", {})
    gan = synth.GanConfig(**{k: tuple(v) if k == "hidden" else v
                             for k, v in synth_cfg.get("gan", {}).items()})
    marginal = synth.MarginalConfig(**synth_cfg.get("marginal", {}))
    plan = bench.BenchPlan(
        synthesizer=synth_cfg.get("kind", cfg.get("synthesizer_kind", "resampler")),
        master_seed=int(seed),
        scenario=cfg.get("scenario", 1),
        l=cfg.get("l", 10), m=cfg.get("m", 10), n=cfg.get("n", 10),
        n_train=tuple(cfg.get("n_train", [500, 10_000, 100_000])),
        epsilon=tuple(cfg.get("epsilon", [0.1, 1.0, 5.0])),
        release_size=cfg.get("release_size"),
        wasserstein_null_iters=cfg.get("wasserstein_null_iters", 10_000),
        pmse_null_iters=cfg.get("pmse_null_iters", 100),
        gan=gan, marginal=marginal)
    out_dir = args.out_dir or cfg.get("out_dir", ".")
    workers = args.workers or cfg.get("workers", 1)
    return plan, out_dir, workers


def _cmd_bench(args) -> int:
    plan, out_dir, workers = _load_plan(args)
    os.makedirs(out_dir, exist_ok=True)
    result = bench.run_plan(plan, workers=workers)
    bench.write_cells_csv(result, os.path.join(out_dir, "cells.csv"))
    bench.write_scores_json(result, os.path.join(out_dir, "scores.json"))
    for sr in result.subresults:
        print(f"n_train={sr.subplan.n_train} epsilon={sr.subplan.epsilon}: "
              f"{len(sr.cells)} cells, {sr.failures} failures, "
              f"{sr.zero_violations} zero violations")
        if sr.scores:
            for key, value in sr.scores.to_dict().items():
                print(f"  {key}: {value:.4f}")
    print(f"wrote {out_dir}/cells.csv and {out_dir}/scores.json")
    return 0


def _scores_from_json(path, index) -> bench.NineScores:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    subplans = payload["subplans"]
    if not 0 <= index < len(subplans):
        raise ValueError(f"sub-plan index {index} out of range (0..{len(subplans) - 1})")
    scores = subplans[index]["scores"]
    if scores is None:
        raise ValueError(f"sub-plan {index} has no scores")
    return bench.NineScores(**scores)


def _cmd_report(args) -> int:
    scores = _scores_from_json(args.scores, args.subplan)
    baseline = None
    if args.baseline:
        baseline = _scores_from_json(args.baseline, args.baseline_subplan)
    spec = report.normalize_scores(scores, baseline, rmse_floor=args.rmse_floor)
    report.render_radar(spec, args.out)
    for axis in spec.axes:
        print(f"{axis.label}: observed {axis.observed:.4g}, radius {axis.radius:.3f}")
    print(f"wrote {args.out}")
    return 0


def _cmd_accountant(args) -> int:
    if args.calibrate is not None:
        budget = PrivacyBudget(args.calibrate, args.delta[0])
        sigma = accountant.calibrate_sigma(budget, args.q[0], args.steps[0])
        state = accountant.compose(accountant.fresh(args.q[0], sigma), args.steps[0])
        eps, order = accountant.to_epsilon(state, args.delta[0])
        print(f"sigma={sigma:.6g} gives epsilon={eps:.6g} at delta={args.delta[0]:g} "
              f"(optimal order {order})")
        return 0
    rows = accountant.epsilon_table(args.q, args.sigma, args.steps, args.delta)
    lines = ["q,sigma,steps,delta,epsilon,order"]
    lines += [f"{r['q']!r},{r['sigma']!r},{r['steps']},{r['delta']!r},"
              f"{r['epsilon']!r},{r['order']!r}" for r in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    return 0


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",")]


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",")]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpsynbench",
        description="Benchmark harness for differentially private data synthesizers")
    parser.add_argument("--verbose", action="store_true", help="log per-cell progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="draw a dataset from the scenario DGP")
    p.add_argument("--scenario", type=int, default=1)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--schema-out")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("fit", help="train one synthesizer on a CSV")
    p.add_argument("--train", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--kind", choices=synth.KINDS, required=True)
    p.add_argument("--epsilon", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--batch-size", type=int, default=100)
    p.add_argument("--latent-dim", type=int, default=32)
    p.add_argument("--clip-norm", type=float, default=1.0)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--bins", type=int, default=32)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("sample", help="sample a release from a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("evaluate", help="score a (real, synthetic) CSV pair")
    p.add_argument("--real", required=True)
    p.add_argument("--synth", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--test", help="held-out CSV for generalisation metrics")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--wasserstein-iters", type=int, default=10_000)
    p.add_argument("--pmse-iters", type=int, default=100)
    p.add_argument("--out", help="write the JSON report here as well")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("bench", help="run a benchmark plan from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, help="master seed (overrides config)")
    p.add_argument("--out-dir")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("report", help="render the radar chart from scores.json")
    p.add_argument("--scores", required=True)
    p.add_argument("--subplan", type=int, default=0)
    p.add_argument("--baseline", help="scores.json anchoring the worst deviations")
    p.add_argument("--baseline-subplan", type=int, default=0)
    p.add_argument("--rmse-floor", type=float, default=report.SCENARIO1_RMSE_FLOOR)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("accountant", help="epsilon tables for the subsampled Gaussian")
    p.add_argument("--q", type=_float_list, required=True)
    p.add_argument("--sigma", type=_float_list, default=[1.0])
    p.add_argument("--steps", type=_int_list, required=True)
    p.add_argument("--delta", type=_float_list, required=True)
    p.add_argument("--calibrate", type=float, default=None, metavar="EPSILON",
                   help="solve for the noise multiplier hitting this epsilon")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_accountant)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - one-line diagnostic per contract
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
