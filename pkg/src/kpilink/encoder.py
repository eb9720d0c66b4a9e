"""Sentence encoders producing a context vector and per-subword embeddings.

Two interchangeable providers sit behind the same ``encode_sentence``
interface: a trainable stand-in (embedding table + stacked bidirectional GRU)
and a reader for precomputed embeddings dumped by an external encoder.

Precomputed embedding file layout (little-endian):

    magic  8 bytes  b"KPLEMB01"
    d      uint32   embedding dimension
    count  uint32   number of sentences
    per sentence:
        id_len uint16, id utf-8 bytes
        n      uint32   subword count
        t      n*d float32 (row-major, one row per subword)
        c      d float32

Values are stored in single precision (external encoders typically emit
float32) and upcast to float64 on load.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, DataError, FormatError, ShapeError
from .ioutil import atomic_open
from .numerics import INIT_STD, GruCell, Tensor, add, concat, init_param, row, scale, zeros

EMBEDDING_MAGIC = b"KPLEMB01"


@dataclass
class EncoderConfig:
    embed_dim: int = 64   # 768 mirrors the usual pretrained transformer width
    layers: int = 2

    def validate(self):
        if self.embed_dim <= 0 or self.embed_dim % 2:
            raise ConfigError(f"embedding dim must be positive and even, got {self.embed_dim}")
        if self.layers < 1:
            raise ConfigError(f"encoder needs at least one layer, got {self.layers}")


@dataclass
class EncodedSentence:
    c: Tensor          # sentence context vector, dim d
    t: list            # one Tensor of dim d per subword


class StandInEncoder:
    """Trainable replacement for a pretrained transformer encoder.

    Subword ids are embedded from a table, scaled by 1/init_std so lookups
    start at unit scale (a pretrained encoder hands its consumers O(1)
    vectors; downstream modules assume that), and contextualized by stacked
    bidirectional GRUs (hidden size d/2 per direction) with a residual
    connection around each layer. The sentence vector ``c`` concatenates the
    final forward and backward states of the top layer. Everything
    participates in the tape, so the joint loss reaches the embedding table.
    """

    def __init__(self, vocab_size, config, rng):
        config.validate()
        self.config = config
        d = config.embed_dim
        half = d // 2
        self.embedding = init_param(rng, (vocab_size, d), "encoder.embedding")
        self.embedding_scale = 1.0 / INIT_STD
        self.layers = [
            (GruCell(d, half, rng, f"encoder.l{i}.fwd"), GruCell(d, half, rng, f"encoder.l{i}.bwd"))
            for i in range(config.layers)
        ]

    def parameters(self):
        params = [self.embedding]
        for fwd, bwd in self.layers:
            params.extend(fwd.parameters())
            params.extend(bwd.parameters())
        return params

    @property
    def trainable(self):
        return True

    def encode_sentence(self, subword_ids, sid=None):
        if not subword_ids:
            raise ContractError("cannot encode an empty sentence")
        half = self.config.embed_dim // 2
        seq = [scale(row(self.embedding, i), self.embedding_scale) for i in subword_ids]
        final_fwd = final_bwd = None
        for fwd, bwd in self.layers:
            h = zeros(half)
            fwd_states = []
            for vec in seq:
                h = fwd.step(vec, h)
                fwd_states.append(h)
            h = zeros(half)
            bwd_states = [None] * len(seq)
            for i in range(len(seq) - 1, -1, -1):
                h = bwd.step(seq[i], h)
                bwd_states[i] = h
            final_fwd, final_bwd = fwd_states[-1], bwd_states[0]
            seq = [add(x, concat([f, b])) for x, f, b in zip(seq, fwd_states, bwd_states)]
        return EncodedSentence(c=concat([final_fwd, final_bwd]), t=seq)


class PrecomputedEncodings:
    """Frozen per-sentence encodings keyed by sentence id."""

    def __init__(self, embed_dim, table):
        self.embed_dim = int(embed_dim)
        self._table = table

    def parameters(self):
        return []

    @property
    def trainable(self):
        return False

    def __contains__(self, sid):
        return sid in self._table

    def encode_sentence(self, subword_ids, sid=None):
        if sid is None or sid not in self._table:
            raise DataError(f"no precomputed encoding for sentence id {sid!r}")
        c_arr, t_arr = self._table[sid]
        if subword_ids and len(subword_ids) != t_arr.shape[0]:
            raise DataError(
                f"sentence {sid!r} has {t_arr.shape[0]} stored subword vectors, expected {len(subword_ids)}"
            )
        return EncodedSentence(
            c=Tensor(c_arr.copy()),
            t=[Tensor(t_arr[i].copy()) for i in range(t_arr.shape[0])],
        )


def write_encodings(path, embed_dim, items):
    """Dump (sid, c, t) triples; arrays are stored as little-endian float32."""
    items = list(items)
    with atomic_open(path, "wb") as fh:
        fh.write(EMBEDDING_MAGIC)
        fh.write(struct.pack("<II", int(embed_dim), len(items)))
        for sid, c_arr, t_arr in items:
            c_arr = np.asarray(c_arr, dtype=np.float64)
            t_arr = np.asarray(t_arr, dtype=np.float64)
            if c_arr.shape != (embed_dim,) or t_arr.ndim != 2 or t_arr.shape[1] != embed_dim:
                raise ShapeError(
                    f"encoding for {sid!r} has shapes c={c_arr.shape}, t={t_arr.shape}, expected dim {embed_dim}"
                )
            sid_bytes = str(sid).encode("utf-8")
            fh.write(struct.pack("<H", len(sid_bytes)))
            fh.write(sid_bytes)
            fh.write(struct.pack("<I", t_arr.shape[0]))
            fh.write(t_arr.astype("<f4").tobytes())
            fh.write(c_arr.astype("<f4").tobytes())


def load_precomputed(path, expected_dim=None):
    with open(path, "rb") as fh:
        if fh.read(8) != EMBEDDING_MAGIC:
            raise FormatError("not an embedding file (bad magic)", path=path)
        header = fh.read(8)
        if len(header) != 8:
            raise FormatError("truncated embedding header", path=path)
        embed_dim, count = struct.unpack("<II", header)
        if expected_dim is not None and embed_dim != expected_dim:
            raise ShapeError(f"embedding file has dim {embed_dim}, configuration expects {expected_dim}")
        table = {}
        for _ in range(count):
            raw = fh.read(2)
            if len(raw) != 2:
                raise FormatError("truncated embedding record", path=path)
            (id_len,) = struct.unpack("<H", raw)
            sid = fh.read(id_len).decode("utf-8")
            raw = fh.read(4)
            (n,) = struct.unpack("<I", raw)
            t_bytes = fh.read(4 * n * embed_dim)
            c_bytes = fh.read(4 * embed_dim)
            if len(t_bytes) != 4 * n * embed_dim or len(c_bytes) != 4 * embed_dim:
                raise FormatError("truncated embedding payload", path=path, field=sid)
            t_arr = np.frombuffer(t_bytes, dtype="<f4").astype(np.float64).reshape(n, embed_dim)
            c_arr = np.frombuffer(c_bytes, dtype="<f4").astype(np.float64)
            table[sid] = (c_arr, t_arr)
    return PrecomputedEncodings(embed_dim, table)


def quantize_like_file(encoded):
    """Round an in-memory encoding through float32 exactly as the file does."""
    c = np.asarray(encoded.c.data, dtype="<f4").astype(np.float64)
    t = [np.asarray(v.data, dtype="<f4").astype(np.float64) for v in encoded.t]
    return EncodedSentence(c=Tensor(c), t=[Tensor(v) for v in t])
