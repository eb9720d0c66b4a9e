"""Pooling of an embedding subsequence into one fixed-size vector.

Three kinds: elementwise mean, elementwise max (ties resolved toward the
lowest index so the backward pass is deterministic), and a trainable
bidirectional GRU whose final forward/backward states are concatenated.
The same pooler instance is shared across every call site of its kind; its
output always has the input dimension, regardless of sequence length.
"""

from __future__ import annotations

from .errors import ConfigError, ContractError
from .numerics import GruCell, add_n, concat, elementwise_max, scale, zeros

POOLING_KINDS = ("mean", "max", "bigru")


class MeanPooler:
    kind = "mean"

    def __init__(self, dim):
        self.dim = dim

    def parameters(self):
        return []

    def __call__(self, seq):
        if not seq:
            raise ContractError("cannot pool an empty sequence")
        return scale(add_n(seq), 1.0 / len(seq))


class MaxPooler:
    kind = "max"

    def __init__(self, dim):
        self.dim = dim

    def parameters(self):
        return []

    def __call__(self, seq):
        if not seq:
            raise ContractError("cannot pool an empty sequence")
        return elementwise_max(seq)


class BiGruPooler:
    """Runs a forward and a backward GRU (hidden size dim/2 each, zero initial
    state) over the sequence and concatenates the two final states."""

    kind = "bigru"

    def __init__(self, dim, rng, name):
        if dim % 2:
            raise ConfigError(f"bigru pooling needs an even dimension, got {dim}")
        self.dim = dim
        half = dim // 2
        self.fwd = GruCell(dim, half, rng, f"{name}.fwd")
        self.bwd = GruCell(dim, half, rng, f"{name}.bwd")

    def parameters(self):
        return self.fwd.parameters() + self.bwd.parameters()

    def __call__(self, seq):
        if not seq:
            raise ContractError("cannot pool an empty sequence")
        half = self.dim // 2
        h = zeros(half)
        for vec in seq:
            h = self.fwd.step(vec, h)
        h_fwd = h
        h = zeros(half)
        for vec in reversed(seq):
            h = self.bwd.step(vec, h)
        return concat([h_fwd, h])


def make_pooler(kind, dim, rng=None, name="pool"):
    if kind == "mean":
        return MeanPooler(dim)
    if kind == "max":
        return MaxPooler(dim)
    if kind == "bigru":
        if rng is None:
            raise ConfigError("bigru pooling needs an rng for parameter init")
        return BiGruPooler(dim, rng, name)
    raise ConfigError(f"unknown pooling kind {kind!r}; expected one of {POOLING_KINDS}")


def pool(pooler, seq):
    return pooler(seq)
