"""Matplotlib figures rendered next to the delimited report files.

Each reporting command writes a machine-readable table and a PNG with the
same stem. Figures carry the configuration hash in their PNG metadata so a
plot can be traced back to the run that produced it.
"""

from __future__ import annotations

import os
import tempfile

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .corpus import ENTITY_TYPES


def _save(fig, path, note=None):
    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".png")
    os.close(fd)
    try:
        metadata = {"Description": note} if note else None
        fig.savefig(tmp, format="png", dpi=120, metadata=metadata)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    finally:
        plt.close(fig)


def plot_training_curves(epoch_metrics, path, note=None):
    """Loss curves and validation F1 curves over epochs."""
    epochs = [m.epoch for m in epoch_metrics]
    fig, (ax_loss, ax_f1) = plt.subplots(1, 2, figsize=(10, 4))
    ax_loss.plot(epochs, [m.ner_loss for m in epoch_metrics], marker="o", label="tag loss")
    ax_loss.plot(epochs, [m.rel_loss for m in epoch_metrics], marker="s", label="relation loss")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("training loss")
    ax_loss.legend()
    ax_loss.grid(alpha=0.3)
    ax_f1.plot(epochs, [100 * m.val_entity_f1 for m in epoch_metrics], marker="o", label="entity F1")
    ax_f1.plot(epochs, [100 * m.val_relation_f1 for m in epoch_metrics], marker="s", label="relation F1")
    ax_f1.set_xlabel("epoch")
    ax_f1.set_ylabel("validation F1 (%)")
    ax_f1.set_ylim(0, 101)
    ax_f1.legend()
    ax_f1.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, path, note)


def plot_grid_results(entries, path, note=None):
    """Horizontal bars of validation relation F1 per configuration."""
    labels = [e.label for e in entries]
    scores = [100 * e.val_relation_f1 for e in entries]
    height = max(2.5, 0.45 * len(labels) + 1.2)
    fig, ax = plt.subplots(figsize=(9, height))
    ypos = range(len(labels))[::-1]
    ax.barh(list(ypos), scores, color="#4878a8")
    ax.set_yticks(list(ypos))
    ax.set_yticklabels(labels, fontsize=8)
    ax.set_xlabel("validation relation F1 (%)")
    ax.set_xlim(0, 101)
    ax.grid(axis="x", alpha=0.3)
    fig.tight_layout()
    _save(fig, path, note)


def plot_multiseed(result, path, note=None):
    """Mean with std error bars for each headline metric."""
    columns = (
        "entity_precision", "entity_recall", "entity_f1",
        "relation_precision", "relation_recall", "relation_f1",
    )
    means = [100 * result.mean[c] for c in columns]
    stds = [100 * result.std[c] for c in columns]
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.bar(range(len(columns)), means, yerr=stds, capsize=4, color="#6aa66a")
    ax.set_xticks(range(len(columns)))
    ax.set_xticklabels([c.replace("_", "\n") for c in columns], fontsize=8)
    ax.set_ylabel("score (%)")
    ax.set_ylim(0, 101)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    _save(fig, path, note)


def plot_metric_report(report, path, note=None):
    """Headline bars plus per-type entity F1 bars for one evaluation."""
    fig, (ax_main, ax_types) = plt.subplots(1, 2, figsize=(10, 4))
    row = report.as_row()
    labels = ("entity P", "entity R", "entity F1", "relation P", "relation R", "relation F1")
    values = [
        100 * row["entity_precision"], 100 * row["entity_recall"], 100 * row["entity_f1"],
        100 * row["relation_precision"], 100 * row["relation_recall"], 100 * row["relation_f1"],
    ]
    ax_main.bar(range(6), values, color=["#4878a8"] * 3 + ["#6aa66a"] * 3)
    ax_main.set_xticks(range(6))
    ax_main.set_xticklabels(labels, fontsize=8, rotation=20)
    ax_main.set_ylim(0, 101)
    ax_main.set_ylabel("score (%)")
    ax_main.grid(axis="y", alpha=0.3)
    types = [t for t in ENTITY_TYPES if t in report.per_type and (report.per_type[t].tp + report.per_type[t].fp + report.per_type[t].fn)]
    ax_types.bar(range(len(types)), [100 * report.per_type[t].f1() for t in types], color="#a87848")
    ax_types.set_xticks(range(len(types)))
    ax_types.set_xticklabels(types, fontsize=8, rotation=30)
    ax_types.set_ylim(0, 101)
    ax_types.set_ylabel("entity F1 by type (%)")
    ax_types.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    _save(fig, path, note)
