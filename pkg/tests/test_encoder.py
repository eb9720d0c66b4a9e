import numpy as np
import pytest

from conftest import finite_difference_check
from kpilink.encoder import (
    EncoderConfig,
    StandInEncoder,
    load_precomputed,
    quantize_like_file,
    write_encodings,
)
from kpilink.errors import ConfigError, ContractError, DataError, ShapeError
from kpilink.numerics import Tape, Tensor, derived_rng, dot, zero_grads
from kpilink import ner
from kpilink.pooling import make_pooler


def _encoder(seed=0, vocab_size=12, d=8, layers=2):
    return StandInEncoder(vocab_size, EncoderConfig(d, layers), derived_rng(seed, "enc"))


def test_single_subword_sentence():
    enc = _encoder()
    out = enc.encode_sentence([3])
    assert len(out.t) == 1
    assert out.t[0].data.shape == (8,)
    assert out.c.data.shape == (8,)
    assert np.all(np.isfinite(out.c.data))


def test_empty_sentence_rejected():
    with pytest.raises(ContractError):
        _encoder().encode_sentence([])


def test_odd_dimension_rejected():
    with pytest.raises(ConfigError):
        EncoderConfig(7, 2).validate()


def test_encoding_deterministic_and_per_sentence():
    enc = _encoder(4)
    first = enc.encode_sentence([1, 2, 3])
    # encoding other sentences in between changes nothing
    enc.encode_sentence([5, 5])
    second = enc.encode_sentence([1, 2, 3])
    assert np.array_equal(first.c.data, second.c.data)
    for a, b in zip(first.t, second.t):
        assert np.array_equal(a.data, b.data)


def test_precomputed_round_trip(tmp_path):
    enc = _encoder(7)
    path = tmp_path / "embs.bin"
    sids = ["doc0#0", "doc0#1"]
    sentences = {sid: [1 + i, 2, 3][: 2 + i] for i, sid in enumerate(sids)}
    items = []
    encoded = {}
    for sid, ids in sentences.items():
        out = enc.encode_sentence(ids)
        encoded[sid] = out
        items.append((sid, out.c.data, np.stack([t.data for t in out.t])))
    write_encodings(path, 8, items)
    provider = load_precomputed(path, expected_dim=8)
    for sid, ids in sentences.items():
        loaded = provider.encode_sentence(ids, sid=sid)
        reference = quantize_like_file(encoded[sid])
        assert np.array_equal(loaded.c.data, reference.c.data)
        for a, b in zip(loaded.t, reference.t):
            assert np.array_equal(a.data, b.data)


def test_precomputed_dimension_mismatch(tmp_path):
    path = tmp_path / "embs.bin"
    write_encodings(path, 8, [("s", np.zeros(8), np.zeros((1, 8)))])
    with pytest.raises(ShapeError):
        load_precomputed(path, expected_dim=64)
    provider = load_precomputed(path, expected_dim=8)
    with pytest.raises(DataError):
        provider.encode_sentence([1], sid="missing")


def test_substitutability_bitwise_downstream(tmp_path):
    """A decoder forward from dumped-and-reloaded encodings matches the
    forward from the same encodings quantized in memory, bit for bit."""
    enc = _encoder(9)
    ids = [1, 4, 2, 7]
    out = enc.encode_sentence(ids)
    path = tmp_path / "embs.bin"
    write_encodings(path, 8, [("s#0", out.c.data, np.stack([t.data for t in out.t]))])
    provider = load_precomputed(path)

    inventory = ner.TagInventory(("kpi", "cy"))
    automaton = ner.TagAutomaton(inventory)
    decoder = ner.GruLmDecoder(inventory, automaton, 8, 4, derived_rng(1, "dec"))

    def run(encoded):
        tags, steps = decoder.decode(list(encoded.t))
        return tags, np.stack([s.posterior.data for s in steps])

    tags_a, post_a = run(quantize_like_file(out))
    tags_b, post_b = run(provider.encode_sentence(ids, sid="s#0"))
    assert tags_a == tags_b
    assert np.array_equal(post_a, post_b)


def test_gradients_reach_embedding_table():
    enc = _encoder(11, vocab_size=6, d=6)
    pool = make_pooler("mean", 6)
    weights = Tensor(derived_rng(2, "w").normal(size=6))
    ids = [0, 3, 3, 5]
    params = enc.parameters()
    zero_grads(params)
    with Tape() as tape:
        out = enc.encode_sentence(ids)
        loss = dot(pool(out.t), weights)
        tape.backward(loss)
    table = enc.embedding
    assert np.any(table.grad != 0.0)
    used = {0, 3, 5}
    for row_idx in range(6):
        if row_idx not in used:
            assert np.array_equal(table.grad[row_idx], np.zeros(6))

    def forward():
        out = enc.encode_sentence(ids)
        return float(np.dot(pool(out.t).data, weights.data))

    finite_difference_check(params, forward, sample_per_param=6, rng=derived_rng(3, "s"))
