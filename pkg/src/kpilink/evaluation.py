"""Strict micro-averaged scoring of entities and relations.

An entity is correct only with exact boundaries and type. A relation is
correct only when both endpoint entities are strictly correct and the pair
(in either order) is predicted. Counts are pooled over the whole evaluation
set before computing precision/recall/F1 (micro average); F1 is 0 when both
precision and recall are 0. Duplicated predictions within a sentence are
deduplicated before counting.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import ENTITY_TYPES, iter_sentences
from .errors import AlignmentError


@dataclass
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def add(self, predicted, gold):
        self.tp += len(predicted & gold)
        self.fp += len(predicted - gold)
        self.fn += len(gold - predicted)

    def precision(self):
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    def recall(self):
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    def f1(self):
        p, r = self.precision(), self.recall()
        return 2 * p * r / (p + r) if p + r else 0.0


@dataclass
class MetricReport:
    entity: Counts = field(default_factory=Counts)
    relation: Counts = field(default_factory=Counts)
    per_type: dict = field(default_factory=dict)

    def as_row(self):
        return {
            "entity_precision": self.entity.precision(),
            "entity_recall": self.entity.recall(),
            "entity_f1": self.entity.f1(),
            "relation_precision": self.relation.precision(),
            "relation_recall": self.relation.recall(),
            "relation_f1": self.relation.f1(),
        }


def _gold_index(documents):
    index = {}
    for doc_id, sent_index, sentence in iter_sentences(documents):
        gold_entities = {(e.start, e.end, e.etype) for e in sentence.entities}
        keys = [(e.start, e.end, e.etype) for e in sentence.entities]
        gold_relations = {
            frozenset((keys[r.head], keys[r.tail])) for r in sentence.relations
        }
        index[(doc_id, sent_index)] = (gold_entities, gold_relations)
    return index


def evaluate(predictions, gold_documents):
    """Score SentencePrediction records against gold documents.

    Predictions must reference known (doc_id, sent_index) pairs; gold
    sentences without a prediction record count as empty predictions.
    """
    gold = _gold_index(gold_documents)
    report = MetricReport(per_type={t: Counts() for t in ENTITY_TYPES})
    seen = set()
    for pred in predictions:
        key = (pred.doc_id, pred.sent_index)
        if key not in gold:
            raise AlignmentError(f"prediction for unknown sentence {key[0]}#{key[1]}")
        if key in seen:
            raise AlignmentError(f"duplicate prediction record for sentence {key[0]}#{key[1]}")
        seen.add(key)
        gold_entities, gold_relations = gold[key]
        pred_entities = {(s, e, t) for s, e, t in pred.entities}
        pred_relations = set()
        for h, t, _score in pred.relations:
            if h != t:
                pred_relations.add(frozenset((pred.entities[h], pred.entities[t])))
        report.entity.add(pred_entities, gold_entities)
        report.relation.add(pred_relations, gold_relations)
        for etype in ENTITY_TYPES:
            report.per_type[etype].add(
                {k for k in pred_entities if k[2] == etype},
                {k for k in gold_entities if k[2] == etype},
            )
    for key, (gold_entities, gold_relations) in gold.items():
        if key not in seen:
            report.entity.add(set(), gold_entities)
            report.relation.add(set(), gold_relations)
            for etype in ENTITY_TYPES:
                report.per_type[etype].add(set(), {k for k in gold_entities if k[2] == etype})
    return report


# ---------------------------------------------------------------------------
# Comparison tables

MODEL_ORDER = ("linear", "crf_lm", "gru_lm")
METRIC_COLUMNS = (
    "entity_precision", "entity_recall", "entity_f1",
    "relation_precision", "relation_recall", "relation_f1",
)


def summarize_runs(reports):
    """Mean and population standard deviation per metric over runs."""
    rows = [r.as_row() for r in reports]
    mean = {}
    std = {}
    for column in METRIC_COLUMNS:
        values = np.array([row[column] for row in rows], dtype=np.float64)
        mean[column] = float(values.mean())
        std[column] = float(values.std())
    return mean, std


def compare_runs(reports_per_model):
    """Render a mean (std) comparison table; rows in canonical model order.

    Metrics are shown as percentages with two decimals. Returns (text table,
    machine-readable row dicts).
    """
    names = [m for m in MODEL_ORDER if m in reports_per_model]
    names += sorted(set(reports_per_model) - set(MODEL_ORDER))
    header = (
        "model", "ent_precision", "ent_recall", "ent_f1",
        "rel_precision", "rel_recall", "rel_f1",
    )
    rows = []
    cells = [header]
    for name in names:
        if not reports_per_model[name]:
            continue
        mean, std = summarize_runs(reports_per_model[name])
        row = {"model": name, "mean": mean, "std": std, "runs": len(reports_per_model[name])}
        rows.append(row)
        cells.append(
            (name,) + tuple(
                f"{100 * mean[c]:.2f} ({100 * std[c]:.2f})" for c in METRIC_COLUMNS
            )
        )
    widths = [max(len(line[i]) for line in cells) for i in range(len(header))]
    text_lines = []
    for line in cells:
        text_lines.append("  ".join(cell.ljust(width) for cell, width in zip(line, widths)).rstrip())
    return "\n".join(text_lines) + "\n", rows


def render_report(report):
    """Aligned text rendering of one MetricReport with per-type rows."""
    lines = []
    row = report.as_row()
    lines.append("scope      precision  recall     f1")
    lines.append(
        f"entity     {100 * row['entity_precision']:9.2f}  {100 * row['entity_recall']:9.2f}  {100 * row['entity_f1']:9.2f}"
    )
    lines.append(
        f"relation   {100 * row['relation_precision']:9.2f}  {100 * row['relation_recall']:9.2f}  {100 * row['relation_f1']:9.2f}"
    )
    lines.append("")
    lines.append("per-type entity rows")
    for etype in ENTITY_TYPES:
        counts = report.per_type.get(etype)
        if counts is None or (counts.tp + counts.fp + counts.fn) == 0:
            continue
        lines.append(
            f"  {etype:<10} {100 * counts.precision():8.2f}  {100 * counts.recall():8.2f}  {100 * counts.f1():8.2f}"
        )
    return "\n".join(lines) + "\n"
