"""Joint training loop, grid search, and multi-seed evaluation.

One training run: shuffle the training sentences each epoch, take batches of
``batch_size`` sentences, minimize L = L_ner + L_rel with AdamW (linear
warmup over the first 10% of all steps, linear decay to zero, global
gradient norm clipping), evaluate validation relation F1 with the full
inference pipeline after every epoch, and keep the checkpoint of the best
epoch (ties resolved toward the earlier epoch).

Randomness is split into independent streams derived from the run seed
(init, shuffle, negative sampling, dropout), so toggling dropout does not
perturb shuffling and reruns are bit-identical.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, fields

import numpy as np

from .configio import parse_bool, parse_optional_float
from .corpus import build_subword_vocab
from .errors import ConfigError, TrainingDiverged
from .evaluation import MetricReport, evaluate, summarize_runs
from .model import JointModel, ModelConfig
from .numerics import AdamW, Tape, derived_rng, zero_grads
from .relations import SentencePrediction, matrix_for


@dataclass
class TrainConfig:
    pooling: str = "bigru"
    decoder: str = "gru_lm"
    label_masking: bool = True
    dropout: float = 0.1
    alpha: float = 0.5
    filter_impossible: bool = True
    filter_overlapping: bool = True
    batch_size: int = 2
    learning_rate: float = 1e-5
    weight_decay: float = 0.01
    grad_norm_cap: float | None = 1.0
    epochs: int = 20
    seed: int = 42
    label_dim: int = 128
    width_dim: int = 25
    max_span_len: int = 30
    n_rel: int = 100
    embed_dim: int = 64
    encoder_layers: int = 2
    min_word_freq: int = 2
    split_ratios: tuple = (0.8, 0.1, 0.1)
    ner_loss_weight: float = 1.0
    rel_loss_weight: float = 1.0

    def model_config(self):
        return ModelConfig(
            embed_dim=self.embed_dim,
            label_dim=self.label_dim,
            width_dim=self.width_dim,
            max_span_len=self.max_span_len,
            pooling=self.pooling,
            decoder=self.decoder,
            label_masking=self.label_masking,
            alpha=self.alpha,
            dropout=self.dropout,
            encoder_layers=self.encoder_layers,
        )

    def as_dict(self):
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "split_ratios":
                value = ",".join(str(v) for v in value)
            out[f.name] = value
        return out

    def as_dict_typed(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def replace(self, **overrides):
        return TrainConfig(**{**self.as_dict_typed(), **overrides})

    @classmethod
    def from_mapping(cls, values):
        config = cls()
        parsers = {
            "pooling": str, "decoder": str,
            "label_masking": parse_bool, "filter_impossible": parse_bool,
            "filter_overlapping": parse_bool,
            "dropout": float, "alpha": float, "learning_rate": float,
            "weight_decay": float, "ner_loss_weight": float, "rel_loss_weight": float,
            "grad_norm_cap": parse_optional_float,
            "batch_size": int, "epochs": int, "seed": int, "label_dim": int,
            "width_dim": int, "max_span_len": int, "n_rel": int, "embed_dim": int,
            "encoder_layers": int, "min_word_freq": int,
            "split_ratios": lambda raw: tuple(float(x) for x in str(raw).split(",")),
        }
        for key, raw in values.items():
            if key not in parsers:
                raise ConfigError(f"unknown training option {key!r}")
            try:
                setattr(config, key, parsers[key](raw))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc
        config.validate()
        return config

    def validate(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if not (0.0 < self.alpha < 1.0):
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.learning_rate < 0:
            raise ConfigError(f"learning rate must be non-negative, got {self.learning_rate}")
        self.model_config().validate()


# Grid axes with their evaluated value sets; the defaults above are the
# best-performing cell of this space.
SEARCH_SPACE = {
    "pooling": ("bigru", "mean", "max"),
    "decoder": ("gru_lm", "crf_lm", "linear"),
    "label_masking": (True, False),
    "dropout": (0.0, 0.1, 0.2, 0.3),
    "alpha": (0.4, 0.5, 0.6),
    "filter_impossible": (True, False),
    "filter_overlapping": (True, False),
    "batch_size": (2, 4, 8),
    "learning_rate": (5e-5, 1e-5, 5e-6),
    "weight_decay": (0.0, 0.01, 0.1),
    "grad_norm_cap": (None, 1.0),
}


@dataclass
class EpochMetrics:
    epoch: int
    ner_loss: float
    rel_loss: float
    val_entity_f1: float
    val_relation_f1: float


@dataclass
class RunResult:
    config: TrainConfig
    seed: int
    epoch_metrics: list = field(default_factory=list)
    best_epoch: int = 0
    best_val_relation_f1: float = 0.0
    test_report: MetricReport | None = None
    model: JointModel | None = None
    best_state: dict | None = None
    steps: int = 0


def _flatten(documents):
    out = []
    for doc in documents:
        for idx, sentence in enumerate(doc.sentences):
            out.append((doc.doc_id, idx, sentence))
    return out


def predict_sentences(model, flat_sentences, config):
    matrix = matrix_for(config.filter_impossible)
    predictions = []
    for doc_id, idx, sentence in flat_sentences:
        entities, rels = model.predict_sentence(
            sentence, matrix, filter_overlapping=config.filter_overlapping
        )
        predictions.append(
            SentencePrediction(doc_id=doc_id, sent_index=idx, entities=entities, relations=rels)
        )
    return predictions


def _evaluate_split(model, flat_sentences, documents, config):
    if not flat_sentences:
        return MetricReport()
    predictions = predict_sentences(model, flat_sentences, config)
    return evaluate(predictions, documents)


def train(config, train_docs, val_docs, test_docs=None, log_fn=None, stop_fn=None):
    """Run one training job; returns a RunResult with the best-epoch model.

    ``log_fn`` receives one EpochMetrics per epoch. ``stop_fn``, if given,
    may end training early after any epoch (metrics -> bool).
    """
    config.validate()
    seed = config.seed
    train_flat = _flatten(train_docs)
    val_flat = _flatten(val_docs)
    if not train_flat:
        raise ConfigError("training split has no sentences")

    vocab = build_subword_vocab(
        (s for _, _, s in train_flat), min_word_freq=config.min_word_freq
    )
    model = JointModel(config.model_config(), vocab, seed)
    params = model.parameters()
    matrix = matrix_for(config.filter_impossible)

    batches_per_epoch = (len(train_flat) + config.batch_size - 1) // config.batch_size
    total_steps = batches_per_epoch * config.epochs
    optimizer = AdamW(
        params,
        peak_lr=config.learning_rate,
        total_steps=total_steps,
        warmup_frac=0.1,
        weight_decay=config.weight_decay,
        grad_clip=config.grad_norm_cap,
    )
    shuffle_rng = derived_rng(seed, "shuffle")
    neg_rng = derived_rng(seed, "negatives")
    dropout_rng = derived_rng(seed, "dropout")

    result = RunResult(config=config, seed=seed, model=model)
    best_f1 = -1.0
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(len(train_flat))
        ner_sum = 0.0
        rel_sum = 0.0
        for lo in range(0, len(order), config.batch_size):
            batch = [train_flat[i][2] for i in order[lo:lo + config.batch_size]]
            zero_grads(params)
            with Tape() as tape:
                loss, ner_part, rel_part = model.batch_loss(
                    batch, matrix, config.n_rel, neg_rng, dropout_rng,
                    ner_weight=config.ner_loss_weight, rel_weight=config.rel_loss_weight,
                )
                if not np.isfinite(loss.data):
                    dump = [train_flat[i][:2] for i in order[lo:lo + config.batch_size]]
                    raise TrainingDiverged(
                        f"non-finite loss at epoch {epoch}, step {optimizer.t}", batch_dump=dump
                    )
                tape.backward(loss)
            optimizer.step()
            ner_sum += ner_part
            rel_sum += rel_part
        val_report = _evaluate_split(model, val_flat, val_docs, config)
        metrics = EpochMetrics(
            epoch=epoch,
            ner_loss=ner_sum / batches_per_epoch,
            rel_loss=rel_sum / batches_per_epoch,
            val_entity_f1=val_report.entity.f1(),
            val_relation_f1=val_report.relation.f1(),
        )
        result.epoch_metrics.append(metrics)
        if log_fn is not None:
            log_fn(metrics)
        if metrics.val_relation_f1 > best_f1:
            best_f1 = metrics.val_relation_f1
            result.best_epoch = epoch
            result.best_val_relation_f1 = metrics.val_relation_f1
            result.best_state = model.state_arrays()
        if stop_fn is not None and stop_fn(metrics):
            break
    result.steps = optimizer.t
    if val_flat and result.best_state is not None:
        model.load_state_arrays(result.best_state)
    else:
        # no validation split: keep the final epoch and snapshot it
        result.best_epoch = result.epoch_metrics[-1].epoch if result.epoch_metrics else 0
        result.best_state = model.state_arrays()
    if test_docs:
        result.test_report = _evaluate_split(model, _flatten(test_docs), test_docs, config)
    return result


def metrics_log_lines(config, result):
    """Deterministic metrics log: config echo header plus one line per epoch."""
    lines = []
    for key, value in sorted(config.as_dict().items()):
        lines.append(f"# {key} = {value}")
    lines.append("epoch\tner_loss\trel_loss\tval_entity_f1\tval_relation_f1")
    for m in result.epoch_metrics:
        lines.append(
            f"{m.epoch}\t{m.ner_loss:.6f}\t{m.rel_loss:.6f}\t{m.val_entity_f1:.6f}\t{m.val_relation_f1:.6f}"
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Grid search

@dataclass
class GridEntry:
    label: str
    overrides: dict
    val_relation_f1: float
    val_entity_f1: float
    best_epoch: int


def grid_search(base_config, axes, train_docs, val_docs, log_fn=None):
    """Train the cartesian product of ``axes`` values; rank by validation
    relation F1 (descending, ties by label for stability)."""
    if not axes:
        raise ConfigError("grid search needs at least one axis")
    for name, values in axes.items():
        if name not in SEARCH_SPACE:
            raise ConfigError(f"unknown grid axis {name!r}; searchable: {sorted(SEARCH_SPACE)}")
        if not values:
            raise ConfigError(f"grid axis {name!r} has no values")
    names = sorted(axes)
    entries = []
    for combo in itertools.product(*(axes[n] for n in names)):
        overrides = dict(zip(names, combo))
        config = base_config.replace(**overrides)
        label = ",".join(f"{n}={v}" for n, v in overrides.items())
        result = train(config, train_docs, val_docs)
        entry = GridEntry(
            label=label,
            overrides=overrides,
            val_relation_f1=result.best_val_relation_f1,
            val_entity_f1=max((m.val_entity_f1 for m in result.epoch_metrics), default=0.0),
            best_epoch=result.best_epoch,
        )
        entries.append(entry)
        if log_fn is not None:
            log_fn(entry)
    entries.sort(key=lambda e: (-e.val_relation_f1, e.label))
    return entries


def grid_table(entries):
    lines = ["configuration\tval_relation_f1\tval_entity_f1\tbest_epoch"]
    for e in entries:
        lines.append(f"{e.label}\t{100 * e.val_relation_f1:.2f}\t{100 * e.val_entity_f1:.2f}\t{e.best_epoch}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Multi-seed evaluation

@dataclass
class MultiSeedResult:
    seeds: list
    reports: list
    mean: dict
    std: dict


def multi_seed(config, train_docs, val_docs, test_docs, seeds=None, n_seeds=10, log_fn=None):
    """Retrain on train+validation for each seed and evaluate on test.

    Reports mean and standard deviation per metric over the seeds. Seeds
    default to base seed + offset.
    """
    if seeds is None:
        seeds = [config.seed + k for k in range(n_seeds)]
    if len(seeds) < 1:
        raise ConfigError("multi-seed evaluation needs at least one seed")
    combined = list(train_docs) + list(val_docs)
    reports = []
    for seed in seeds:
        run_config = config.replace(seed=seed)
        result = train(run_config, combined, [], test_docs=test_docs)
        reports.append(result.test_report)
        if log_fn is not None:
            log_fn(seed, result.test_report)
    mean, std = summarize_runs(reports)
    return MultiSeedResult(seeds=list(seeds), reports=reports, mean=mean, std=std)


def multi_seed_table(result):
    lines = ["metric\tmean\tstd"]
    for column in (
        "entity_precision", "entity_recall", "entity_f1",
        "relation_precision", "relation_recall", "relation_f1",
    ):
        lines.append(f"{column}\t{100 * result.mean[column]:.2f}\t{100 * result.std[column]:.2f}")
    return "\n".join(lines) + "\n"
