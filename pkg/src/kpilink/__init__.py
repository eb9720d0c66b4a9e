"""kpilink: joint KPI entity tagging and relation linking for financial text."""

from .corpus import (
    Document,
    EntityAnn,
    GeneratorConfig,
    RelationAnn,
    Sentence,
    SubwordVocab,
    generate_synthetic_corpus,
    read_annotations,
    split_corpus,
    tokenize_words,
    write_annotations,
)
from .errors import KpilinkError
from .evaluation import MetricReport, compare_runs, evaluate
from .model import JointModel, ModelConfig
from .numerics import AdamW, GruCell, Parameter, Tape, Tensor, derived_rng
from .training import RunResult, TrainConfig, grid_search, multi_seed, train

__version__ = "0.1.0"

__all__ = [
    "AdamW",
    "Document",
    "EntityAnn",
    "GeneratorConfig",
    "GruCell",
    "JointModel",
    "KpilinkError",
    "MetricReport",
    "ModelConfig",
    "Parameter",
    "RelationAnn",
    "RunResult",
    "Sentence",
    "SubwordVocab",
    "Tape",
    "Tensor",
    "TrainConfig",
    "compare_runs",
    "derived_rng",
    "evaluate",
    "generate_synthetic_corpus",
    "grid_search",
    "multi_seed",
    "read_annotations",
    "split_corpus",
    "tokenize_words",
    "train",
    "write_annotations",
]
