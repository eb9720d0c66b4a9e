"""Command-line entry points.

    kpilink generate-corpus --config conf.ini --seed 7 --out corpus.jsonl
    kpilink train           --corpus corpus.jsonl --out-dir runs/base
    kpilink gridsearch      --corpus corpus.jsonl --axes label_masking --out-dir runs/grid
    kpilink multiseed       --corpus corpus.jsonl --seeds 42,43 --out-dir runs/seeds
    kpilink predict         --run-dir runs/base --input corpus.jsonl --out preds.jsonl
    kpilink evaluate        --predictions preds.jsonl --gold corpus.jsonl --out-dir runs/eval
    kpilink validate        --file corpus.jsonl

Every command accepts --config (or the KPILINK_CONFIG environment variable)
and --seed; --set key=value overrides any [train] option so the whole search
space is reachable from the command line. Usage problems exit with 2,
runtime failures with 1 and a single machine-parsable stderr line.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import configio, report
from .corpus import (
    GeneratorConfig,
    Document,
    Sentence,
    generate_synthetic_corpus,
    read_annotations,
    split_corpus,
    tokenize_words,
    write_annotations,
    SubwordVocab,
)
from .errors import ConfigError, KpilinkError
from .evaluation import evaluate, render_report
from .ioutil import atomic_write_text
from .model import JointModel
from .ner import TagInventory
from .numerics import load_checkpoint, save_checkpoint
from .encoder import load_precomputed
from .relations import matrix_for, read_predictions, write_predictions, SentencePrediction
from .training import (
    SEARCH_SPACE,
    TrainConfig,
    grid_search,
    grid_table,
    metrics_log_lines,
    multi_seed,
    multi_seed_table,
    train,
)

CONFIG_ENV = "KPILINK_CONFIG"


def _load_sections(path):
    if path is None:
        path = os.environ.get(CONFIG_ENV)
    if path is None:
        return {}
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    return configio.read_config_file(path)


def _train_config(args):
    sections = _load_sections(args.config)
    values = dict(sections.get(configio.TRAIN_SECTION, {}))
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        values[key.strip()] = value.strip()
    config = TrainConfig.from_mapping(values)
    if args.seed is not None:
        config.seed = args.seed
    return config


def _generator_config(args):
    sections = _load_sections(args.config)
    return configio.generator_config_from(sections.get(configio.GENERATE_SECTION, {}))


def _split(config, documents):
    return split_corpus(documents, config.split_ratios, config.seed)


def _write_run_dir(out_dir, config, result, vocab):
    os.makedirs(out_dir, exist_ok=True)
    echo = config.as_dict()
    chash = configio.config_hash(echo)
    configio.write_config_echo(os.path.join(out_dir, "config.ini"), echo)
    atomic_write_text(os.path.join(out_dir, "metrics.tsv"), metrics_log_lines(config, result))
    report.plot_training_curves(
        result.epoch_metrics, os.path.join(out_dir, "metrics.png"), note=f"config {chash}"
    )
    save_checkpoint(
        os.path.join(out_dir, "checkpoint.ckpt"),
        result.model.parameters(),
        config_hash=chash,
        step_count=result.steps,
    )
    vocab.save(os.path.join(out_dir, "vocab.txt"))
    atomic_write_text(
        os.path.join(out_dir, "tags.json"),
        json.dumps(result.model.inventory.dump(), indent=1, sort_keys=True) + "\n",
    )
    return chash


def _load_run_dir(run_dir, embeddings=None):
    config_path = os.path.join(run_dir, "config.ini")
    if not os.path.exists(config_path):
        raise ConfigError(f"no config.ini in run directory {run_dir}")
    sections = configio.read_config_file(config_path)
    config = TrainConfig.from_mapping(sections.get(configio.TRAIN_SECTION, {}))
    vocab = SubwordVocab.load(os.path.join(run_dir, "vocab.txt"))
    encoder = None
    if embeddings is not None:
        encoder = load_precomputed(embeddings, expected_dim=config.embed_dim)
    model = JointModel(config.model_config(), vocab, config.seed, encoder=encoder)
    _, values = load_checkpoint(os.path.join(run_dir, "checkpoint.ckpt"))
    if encoder is None:
        model.load_state_arrays(values)
    else:
        # frozen external encoder: restore only the trainable decoder stack
        trainable = {p.name for p in model.parameters()}
        model.load_state_arrays({k: v for k, v in values.items() if k in trainable})
    return config, model


# ---------------------------------------------------------------------------
# Commands

def cmd_generate_corpus(args):
    gen_config = _generator_config(args)
    seed = args.seed if args.seed is not None else 42
    documents = generate_synthetic_corpus(gen_config, seed)
    header = {
        "seed": seed,
        "documents": gen_config.documents,
        "sentences_per_document": gen_config.sentences_per_document,
    }
    write_annotations(args.out, documents, header=header)
    total = sum(len(d.sentences) for d in documents)
    print(f"wrote {len(documents)} documents / {total} sentences to {args.out}")
    return 0


def cmd_train(args):
    config = _train_config(args)
    documents = read_annotations(args.corpus)
    train_docs, val_docs, test_docs = _split(config, documents)
    result = train(config, train_docs, val_docs, test_docs=test_docs)
    chash = _write_run_dir(args.out_dir, config, result, result.model.vocab)
    print(f"run directory: {args.out_dir} (config {chash[:12]})")
    print(f"best epoch {result.best_epoch}: validation relation F1 {100 * result.best_val_relation_f1:.2f}")
    if result.test_report is not None:
        row = result.test_report.as_row()
        print(f"test entity F1 {100 * row['entity_f1']:.2f}, relation F1 {100 * row['relation_f1']:.2f}")
    return 0


def cmd_gridsearch(args):
    if args.print_space:
        for name in sorted(SEARCH_SPACE):
            values = ", ".join(str(v) for v in SEARCH_SPACE[name])
            print(f"{name}: {values}")
        return 0
    config = _train_config(args)
    axes = {}
    for name in (args.axes or "").split(","):
        name = name.strip()
        if name:
            axes[name] = SEARCH_SPACE.get(name)
            if axes[name] is None:
                raise ConfigError(f"unknown grid axis {name!r}; searchable: {sorted(SEARCH_SPACE)}")
    documents = read_annotations(args.corpus)
    train_docs, val_docs, _ = _split(config, documents)
    entries = grid_search(config, axes, train_docs, val_docs)
    os.makedirs(args.out_dir, exist_ok=True)
    echo = config.as_dict()
    chash = configio.config_hash(echo)
    configio.write_config_echo(os.path.join(args.out_dir, "config.ini"), echo)
    table = grid_table(entries)
    atomic_write_text(os.path.join(args.out_dir, "grid.tsv"), "# config " + chash + "\n" + table)
    report.plot_grid_results(entries, os.path.join(args.out_dir, "grid.png"), note=f"config {chash}")
    print(table, end="")
    return 0


def cmd_multiseed(args):
    config = _train_config(args)
    if args.seeds:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    else:
        seeds = None
    documents = read_annotations(args.corpus)
    train_docs, val_docs, test_docs = _split(config, documents)
    result = multi_seed(config, train_docs, val_docs, test_docs, seeds=seeds, n_seeds=args.n_seeds)
    os.makedirs(args.out_dir, exist_ok=True)
    echo = config.as_dict()
    chash = configio.config_hash(echo)
    configio.write_config_echo(os.path.join(args.out_dir, "config.ini"), echo)
    table = multi_seed_table(result)
    atomic_write_text(
        os.path.join(args.out_dir, "multiseed.tsv"),
        "# config " + chash + "\n# seeds " + ",".join(str(s) for s in result.seeds) + "\n" + table,
    )
    report.plot_multiseed(result, os.path.join(args.out_dir, "multiseed.png"), note=f"config {chash}")
    print(table, end="")
    return 0


def cmd_predict(args):
    config, model = _load_run_dir(args.run_dir, embeddings=args.embeddings)
    if args.raw_text:
        documents = []
        with open(args.input, encoding="utf-8") as fh:
            sentences = [Sentence(words=tokenize_words(line)) for line in fh if line.strip()]
        documents.append(Document(doc_id=os.path.basename(args.input), sentences=sentences))
    else:
        documents = read_annotations(args.input)
    matrix = matrix_for(config.filter_impossible)
    predictions = []
    for doc in documents:
        for idx, sentence in enumerate(doc.sentences):
            entities, rels = model.predict_sentence(
                sentence, matrix, filter_overlapping=config.filter_overlapping,
                sid=f"{doc.doc_id}#{idx}",
            )
            predictions.append(SentencePrediction(doc.doc_id, idx, entities, rels))
    write_predictions(args.out, predictions, header={"config_hash": configio.config_hash(config.as_dict())})
    print(f"wrote {len(predictions)} sentence predictions to {args.out}")
    return 0


def cmd_evaluate(args):
    predictions = read_predictions(args.predictions)
    gold = read_annotations(args.gold)
    metric_report = evaluate(predictions, gold)
    text = render_report(metric_report)
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        row = metric_report.as_row()
        lines = ["metric\tvalue"]
        lines += [f"{k}\t{100 * v:.2f}" for k, v in row.items()]
        atomic_write_text(os.path.join(args.out_dir, "evaluation.tsv"), "\n".join(lines) + "\n")
        atomic_write_text(os.path.join(args.out_dir, "evaluation.txt"), text)
        report.plot_metric_report(metric_report, os.path.join(args.out_dir, "evaluation.png"))
    print(text, end="")
    return 0


def cmd_validate(args):
    with open(args.file, encoding="utf-8") as fh:
        first = ""
        for line in fh:
            if line.strip():
                first = line
                break
    kind = "annotations"
    if first:
        try:
            record = json.loads(first)
            if "_header" in record and record["_header"].get("format") == "predictions_v1":
                kind = "predictions"
            elif "head_entity" in first or "sent_index" in record:
                kind = "predictions"
        except json.JSONDecodeError:
            pass
    if kind == "predictions":
        records = read_predictions(args.file)
        print(f"valid prediction file: {len(records)} sentence records")
    else:
        documents = read_annotations(args.file)
        total = sum(len(d.sentences) for d in documents)
        print(f"valid annotation file: {len(documents)} documents / {total} sentences")
    return 0


# ---------------------------------------------------------------------------
# Parser

def build_parser():
    parser = argparse.ArgumentParser(
        prog="kpilink",
        description="KPI entity tagging and relation linking: corpus generation, training, search, prediction, evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help=f"INI config file (default: ${CONFIG_ENV})")
        p.add_argument("--seed", type=int, help="override the run seed")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one [train] option (repeatable)")

    p = sub.add_parser("generate-corpus", help="write a synthetic annotated corpus")
    common(p)
    p.add_argument("--out", required=True, help="output annotation file (.jsonl)")
    p.set_defaults(fn=cmd_generate_corpus)

    p = sub.add_parser("train", help="train one model and write a run directory")
    common(p)
    p.add_argument("--corpus", required=True, help="annotation file")
    p.add_argument("--out-dir", required=True, help="run directory for artifacts")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("gridsearch", help="train the cartesian product of grid axes")
    common(p)
    p.add_argument("--corpus", help="annotation file")
    p.add_argument("--axes", help="comma-separated axis names (see --print-space)")
    p.add_argument("--out-dir", help="output directory")
    p.add_argument("--print-space", action="store_true", help="list the search space and exit")
    p.set_defaults(fn=cmd_gridsearch)

    p = sub.add_parser("multiseed", help="retrain on train+validation with several seeds, evaluate on test")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seeds", help="comma-separated explicit seeds")
    p.add_argument("--n-seeds", type=int, default=10, help="number of seeds (base seed + offsets)")
    p.set_defaults(fn=cmd_multiseed)

    p = sub.add_parser("predict", help="run a trained model over annotations or raw text")
    common(p)
    p.add_argument("--run-dir", required=True, help="directory written by train")
    p.add_argument("--input", required=True, help="annotation file, or text with --raw-text")
    p.add_argument("--raw-text", action="store_true", help="treat input as one sentence per line")
    p.add_argument("--embeddings", help="precomputed embedding file replacing the trained encoder")
    p.add_argument("--out", required=True, help="prediction file (.jsonl)")
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("evaluate", help="strict micro scores of predictions against gold")
    common(p)
    p.add_argument("--predictions", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--out-dir", help="where to write evaluation.tsv/.txt/.png")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("validate", help="schema-check an annotation or prediction file")
    common(p)
    p.add_argument("--file", required=True)
    p.set_defaults(fn=cmd_validate)

    return parser


def run(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except KpilinkError as exc:
        kind = type(exc).__name__
        print(f"error: {kind}: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: FileNotFound: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run())
