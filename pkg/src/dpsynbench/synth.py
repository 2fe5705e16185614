"""Data synthesizers behind one fit/sample contract.

Three kinds:

* ``resampler``: non-private bootstrap of the training table, the
  calibration baseline.
* ``dp-marginal``: Laplace-noised per-column histograms (structural-zero
  column pairs modeled jointly so the constraint survives the noise).
* ``dp-gan``: generator/discriminator pair where only the discriminator
  touches real data and is trained with clipped, noised per-example
  gradients; the generator inherits privacy by post-processing.

Sampling never touches training data for the DP kinds: all state lives in
noisy histograms or generator weights, so repeated releases spend no
additional budget.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import accountant
from .accountant import PrivacyBudget
from .nn import (AdamState, DpOptimizerConfig, LayerSpec, Mlp, adam_step,
                 clip_noise_aggregate, gumbel_argmax, gumbel_softmax,
                 gumbel_softmax_grad)
from .tabular import (CATEGORICAL, COUNT, Dataset, OneHotEncoder, Schema,
                      StructuralZeroRule, schema_from_text, schema_to_text,
                      validate)

RESAMPLER = "resampler"
DP_MARGINAL = "dp-marginal"
DP_GAN = "dp-gan"
KINDS = (RESAMPLER, DP_MARGINAL, DP_GAN)


@dataclass(frozen=True)
class GanConfig:
    latent_dim: int = 32
    hidden: tuple[int, ...] = (256, 128, 128)
    batch_size: int = 100
    steps: int = 2000
    learning_rate: float = 1e-3
    beta1: float = 0.5
    beta2: float = 0.999
    clip_norm: float = 1.0
    tau: float = 0.5
    dropout: float = 0.5


@dataclass(frozen=True)
class MarginalConfig:
    bins: int = 32


@dataclass(frozen=True)
class SynthesizerSpec:
    kind: str
    seed: int
    budget: PrivacyBudget | None = None
    gan: GanConfig = GanConfig()
    marginal: MarginalConfig = MarginalConfig()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown synthesizer kind {self.kind!r}")
        if self.kind in (DP_MARGINAL, DP_GAN):
            if self.budget is None or self.budget.epsilon <= 0:
                raise ValueError(f"{self.kind} requires a positive privacy budget")


@dataclass(frozen=True)
class MarginalObject:
    """One noisy histogram: a single column, or a (guard, forced) joint."""

    columns: tuple[str, ...]
    edges: np.ndarray | None  # numeric bin edges, None for level histograms
    probs: np.ndarray  # 1-d for single columns, 2-d for joints


@dataclass
class SynthesizerModel:
    kind: str
    schema: Schema
    realized_budget: PrivacyBudget | None
    metadata: dict = field(default_factory=dict)
    table: np.ndarray | None = None
    marginals: list[MarginalObject] | None = None
    generator: Mlp | None = None
    encoder: OneHotEncoder | None = None


def enforce_structural_zeros(d: Dataset,
                             rules: tuple[StructuralZeroRule, ...]) -> Dataset:
    """Overwrite the forced column with the forced level on every
    guard-triggered row; all other cells untouched. Idempotent."""
    values = d.values.copy()
    for rule in rules:
        gj = d.schema.index(rule.guard_column)
        fj = d.schema.index(rule.forced_column)
        mask = values[:, gj] == rule.guard_level
        values[mask, fj] = rule.forced_level
    return Dataset(d.schema, values)


# ---------------------------------------------------------------------------
# fitting


def fit(spec: SynthesizerSpec, train: Dataset) -> SynthesizerModel:
    """Train a synthesizer on a valid, non-empty dataset."""
    if train.n_rows == 0:
        raise ValueError("training data is empty")
    violations = validate(train)
    if violations:
        raise ValueError(f"training data has {len(violations)} validation violations")
    if spec.kind == RESAMPLER:
        return _fit_resampler(spec, train)
    if spec.kind == DP_MARGINAL:
        return _fit_dp_marginal(spec, train)
    return _fit_dp_gan(spec, train)


def _fit_resampler(spec: SynthesizerSpec, train: Dataset) -> SynthesizerModel:
    return SynthesizerModel(kind=RESAMPLER, schema=train.schema,
                            realized_budget=None,
                            metadata={"n_train": train.n_rows},
                            table=train.values.copy())


def _marginal_groups(schema: Schema) -> list[tuple[str, ...]]:
    """Column groups to model: structural-zero pairs jointly, the rest alone."""
    in_rule: dict[str, StructuralZeroRule] = {}
    for rule in schema.zero_rules:
        for name in (rule.guard_column, rule.forced_column):
            if name in in_rule:
                raise ValueError(
                    f"column {name!r} participates in more than one zero rule; "
                    "the marginal synthesizer models one joint per column")
            in_rule[name] = rule
    groups: list[tuple[str, ...]] = []
    seen: set[str] = set()
    for col in schema.columns:
        if col.name in seen:
            continue
        rule = in_rule.get(col.name)
        if rule is None:
            groups.append((col.name,))
            seen.add(col.name)
        else:
            groups.append((rule.guard_column, rule.forced_column))
            seen.update((rule.guard_column, rule.forced_column))
    return groups


def _fit_dp_marginal(spec: SynthesizerSpec, train: Dataset) -> SynthesizerModel:
    schema = train.schema
    cfg = spec.marginal
    groups = _marginal_groups(schema)
    scale = len(groups) / spec.budget.epsilon  # sensitivity 1, equal budget split
    rng = np.random.default_rng(spec.seed)
    objects = []
    for group in groups:
        if len(group) == 2:
            rule = next(r for r in schema.zero_rules
                        if (r.guard_column, r.forced_column) == group)
            ga = train.column(rule.guard_column).astype(np.intp)
            fo = train.column(rule.forced_column).astype(np.intp)
            la = schema.column(rule.guard_column).levels
            lb = schema.column(rule.forced_column).levels
            counts = np.zeros((la, lb))
            np.add.at(counts, (ga, fo), 1.0)
            noisy = np.maximum(counts + rng.laplace(0.0, scale, counts.shape), 0.0)
            invalid = np.zeros((la, lb), dtype=bool)
            invalid[rule.guard_level, :] = True
            invalid[rule.guard_level, rule.forced_level] = False
            noisy[invalid] = 0.0
            if noisy.sum() == 0.0:
                noisy = (~invalid).astype(float)
            objects.append(MarginalObject(group, None, noisy / noisy.sum()))
            continue
        col = schema.column(group[0])
        v = train.column(group[0])
        if col.kind == CATEGORICAL:
            counts = np.bincount(v.astype(np.intp), minlength=col.levels).astype(float)
            edges = None
        else:
            lo, hi = float(v.min()), float(v.max())
            if lo == hi:
                edges = np.array([lo, hi])
                counts = np.array([float(v.size)])
            else:
                counts, edges = np.histogram(v, bins=cfg.bins, range=(lo, hi))
                counts = counts.astype(float)
        noisy = np.maximum(counts + rng.laplace(0.0, scale, counts.shape), 0.0)
        if noisy.sum() == 0.0:
            noisy = np.ones_like(noisy)
        objects.append(MarginalObject(group, edges, noisy / noisy.sum()))
    return SynthesizerModel(kind=DP_MARGINAL, schema=schema,
                            realized_budget=spec.budget,
                            metadata={"n_train": train.n_rows, "bins": cfg.bins,
                                      "laplace_scale": scale,
                                      "objects": len(groups)},
                            marginals=objects)


def _categorical_blocks(encoder: OneHotEncoder) -> list[tuple[int, int]]:
    return [(b.start, b.stop) for b in encoder.blocks if b.kind == CATEGORICAL]


def _relax_categorical(raw: np.ndarray, blocks, tau: float,
                       rng: np.random.Generator):
    """Replace categorical logit blocks with Gumbel-Softmax samples."""
    out = raw.copy()
    softmaxes = []
    for start, stop in blocks:
        y = gumbel_softmax(raw[:, start:stop], tau, rng)
        out[:, start:stop] = y
        softmaxes.append(y)
    return out, softmaxes


def _fit_dp_gan(spec: SynthesizerSpec, train: Dataset) -> SynthesizerModel:
    cfg = spec.gan
    budget = spec.budget
    n = train.n_rows
    batch = cfg.batch_size
    if n < batch:
        raise ValueError(f"training set ({n} rows) smaller than batch size {batch}")
    q = batch / n
    sigma = accountant.calibrate_sigma(budget, q, cfg.steps)

    rng = np.random.default_rng(spec.seed)
    encoder = OneHotEncoder(train.schema).fit(train)
    X = encoder.encode(train)
    width = encoder.width
    blocks = _categorical_blocks(encoder)

    gen = Mlp(cfg.latent_dim,
              [LayerSpec(h, "leaky_relu", cfg.dropout) for h in cfg.hidden]
              + [LayerSpec(width, "identity")], rng)
    disc = Mlp(width,
               [LayerSpec(h, "leaky_relu") for h in cfg.hidden]
               + [LayerSpec(1, "identity")], rng)

    opt = DpOptimizerConfig(learning_rate=cfg.learning_rate, beta1=cfg.beta1,
                            beta2=cfg.beta2, clip_norm=cfg.clip_norm,
                            noise_multiplier=sigma, batch_size=batch)
    d_state = AdamState.zeros(disc.n_params())
    g_state = AdamState.zeros(gen.n_params())

    targets = np.concatenate([np.ones(batch), np.zeros(batch)])[:, None]
    for _ in range(cfg.steps):
        # discriminator: per-example (real, fake) pair gradients, clipped and noised
        idx = rng.choice(n, batch, replace=False)
        z = rng.standard_normal((batch, cfg.latent_dim))
        raw, _ = gen.forward(z, train=True, rng=rng)
        fake, _ = _relax_categorical(raw, blocks, cfg.tau, rng)
        stacked = np.vstack([X[idx], fake])
        logits, cache = disc.forward(stacked, train=True, rng=rng)
        p = 1.0 / (1.0 + np.exp(-logits))
        per_example, _ = disc.backward_per_example(cache, p - targets)
        pair_grads = per_example[:batch] + per_example[batch:]
        grad = clip_noise_aggregate(pair_grads, cfg.clip_norm, sigma, rng)
        disc.set_params_flat(adam_step(disc.params_flat(), grad, d_state, opt))

        # generator: non-saturating loss, plain gradients (post-processing)
        z = rng.standard_normal((batch, cfg.latent_dim))
        raw, g_cache = gen.forward(z, train=True, rng=rng)
        fake, softmaxes = _relax_categorical(raw, blocks, cfg.tau, rng)
        logits, d_cache = disc.forward(fake, train=False)
        p = 1.0 / (1.0 + np.exp(-logits))
        _, grad_fake = disc.backward_per_example(d_cache, (p - 1.0) / batch)
        grad_raw = grad_fake.copy()
        for (start, stop), y in zip(blocks, softmaxes):
            grad_raw[:, start:stop] = gumbel_softmax_grad(y, grad_fake[:, start:stop],
                                                          cfg.tau)
        g_per, _ = gen.backward_per_example(g_cache, grad_raw)
        gen.set_params_flat(adam_step(gen.params_flat(), g_per.sum(axis=0),
                                      g_state, opt))

    state = accountant.compose(accountant.fresh(q, sigma), cfg.steps)
    eps, order = accountant.to_epsilon(state, budget.delta)
    if eps > budget.epsilon + 1e-9:
        raise AssertionError("calibrated sigma exceeded the requested budget")
    realized = PrivacyBudget(eps, budget.delta)
    metadata = {"n_train": n, "steps": cfg.steps, "batch_size": batch,
                "sampling_rate": q, "sigma": sigma, "clip_norm": cfg.clip_norm,
                "latent_dim": cfg.latent_dim, "tau": cfg.tau,
                "optimal_order": order}
    return SynthesizerModel(kind=DP_GAN, schema=train.schema,
                            realized_budget=realized, metadata=metadata,
                            generator=gen, encoder=encoder)


# ---------------------------------------------------------------------------
# sampling

_GEN_CHUNK = 16384


def sample(model: SynthesizerModel, n: int, seed: int) -> Dataset:
    """Draw ``n`` rows from a trained model; deterministic per (model, seed).
    Structural-zero rules are enforced on the output, so released data always
    passes validation."""
    if n < 0:
        raise ValueError("n must be >= 0")
    rng = np.random.default_rng(seed)
    if model.kind == RESAMPLER:
        idx = rng.integers(0, model.table.shape[0], n)
        d = Dataset(model.schema, model.table[idx])
    elif model.kind == DP_MARGINAL:
        d = _sample_dp_marginal(model, n, rng)
    elif model.kind == DP_GAN:
        d = _sample_dp_gan(model, n, rng)
    else:
        raise ValueError(f"unknown model kind {model.kind!r}")
    return enforce_structural_zeros(d, model.schema.zero_rules)


def _sample_dp_marginal(model: SynthesizerModel, n: int,
                        rng: np.random.Generator) -> Dataset:
    schema = model.schema
    values = np.zeros((n, len(schema.columns)))
    for obj in model.marginals:
        if len(obj.columns) == 2:
            la, lb = obj.probs.shape
            flat = rng.choice(la * lb, size=n, p=obj.probs.ravel())
            values[:, schema.index(obj.columns[0])] = flat // lb
            values[:, schema.index(obj.columns[1])] = flat % lb
            continue
        col = schema.column(obj.columns[0])
        j = schema.index(obj.columns[0])
        if obj.edges is None:
            values[:, j] = rng.choice(obj.probs.size, size=n, p=obj.probs)
        else:
            if obj.probs.size == 1:
                v = np.full(n, obj.edges[0])
            else:
                bins = rng.choice(obj.probs.size, size=n, p=obj.probs)
                u = rng.random(n)
                lo = obj.edges[bins]
                v = lo + u * (obj.edges[bins + 1] - lo)
            if col.kind == COUNT:
                v = np.maximum(np.rint(v), 0.0)
            values[:, j] = v
    return Dataset(schema, values)


def _sample_dp_gan(model: SynthesizerModel, n: int,
                   rng: np.random.Generator) -> Dataset:
    enc = model.encoder
    gen = model.generator
    blocks = _categorical_blocks(enc)
    parts = [np.empty((0, enc.width))]
    done = 0
    while done < n:
        k = min(_GEN_CHUNK, n - done)
        z = rng.standard_normal((k, gen.in_dim))
        raw, _ = gen.forward(z, train=False)
        mat = raw.copy()
        for start, stop in blocks:
            levels = gumbel_argmax(raw[:, start:stop], rng)
            block = np.zeros((k, stop - start))
            block[np.arange(k), levels] = 1.0
            mat[:, start:stop] = block
        parts.append(mat)
        done += k
    return enc.decode(np.vstack(parts))


# ---------------------------------------------------------------------------
# checkpoints


def save_model(model: SynthesizerModel, path) -> None:
    """Persist a model as a single ``.npz`` checkpoint (format version 1)."""
    arrays: dict[str, np.ndarray] = {
        "format_version": np.array([1]),
        "kind": np.array([model.kind]),
        "schema_text": np.array([schema_to_text(model.schema)]),
        "metadata_json": np.array([json.dumps(model.metadata, sort_keys=True)]),
    }
    if model.realized_budget is not None:
        arrays["realized_budget"] = np.array([model.realized_budget.epsilon,
                                              model.realized_budget.delta])
    if model.table is not None:
        arrays["table"] = model.table
    if model.marginals is not None:
        arrays["n_marginals"] = np.array([len(model.marginals)])
        for i, obj in enumerate(model.marginals):
            arrays[f"marginal_{i}_columns"] = np.array(obj.columns)
            arrays[f"marginal_{i}_probs"] = obj.probs
            if obj.edges is not None:
                arrays[f"marginal_{i}_edges"] = obj.edges
    if model.generator is not None:
        for key, val in model.generator.to_arrays().items():
            arrays[f"generator_{key}"] = val
        arrays["encoder_means"] = np.array([b.mean for b in model.encoder.blocks])
        arrays["encoder_sds"] = np.array([b.sd for b in model.encoder.blocks])
    np.savez(path, **arrays)


def _rebuild_encoder(schema: Schema, means: np.ndarray, sds: np.ndarray) -> OneHotEncoder:
    enc = OneHotEncoder(schema)
    blocks = []
    pos = 0
    from .tabular import ColumnBlock

    for j, col in enumerate(schema.columns):
        width = col.levels if col.kind == CATEGORICAL else 1
        blocks.append(ColumnBlock(col.name, col.kind, pos, pos + width,
                                  float(means[j]), float(sds[j])))
        pos += width
    enc.blocks = blocks
    return enc


def load_model(path) -> SynthesizerModel:
    with np.load(path, allow_pickle=False) as arrays:
        if int(arrays["format_version"][0]) != 1:
            raise ValueError(f"unsupported checkpoint version {arrays['format_version'][0]}")
        kind = str(arrays["kind"][0])
        schema = schema_from_text(str(arrays["schema_text"][0]))
        metadata = json.loads(str(arrays["metadata_json"][0]))
        budget = None
        if "realized_budget" in arrays:
            eps, delta = arrays["realized_budget"]
            budget = PrivacyBudget(float(eps), float(delta))
        model = SynthesizerModel(kind=kind, schema=schema,
                                 realized_budget=budget, metadata=metadata)
        if "table" in arrays:
            model.table = arrays["table"].copy()
        if "n_marginals" in arrays:
            objs = []
            for i in range(int(arrays["n_marginals"][0])):
                cols = tuple(str(c) for c in arrays[f"marginal_{i}_columns"])
                edges_key = f"marginal_{i}_edges"
                edges = arrays[edges_key].copy() if edges_key in arrays else None
                objs.append(MarginalObject(cols, edges,
                                           arrays[f"marginal_{i}_probs"].copy()))
            model.marginals = objs
        if "generator_params" in arrays:
            gen_arrays = {key[len("generator_"):]: arrays[key]
                          for key in arrays.files if key.startswith("generator_")}
            model.generator = Mlp.from_arrays(gen_arrays)
            model.encoder = _rebuild_encoder(schema, arrays["encoder_means"],
                                             arrays["encoder_sds"])
    return model
