import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kpilink.errors import ContractError
from kpilink.ner import EntitySpan
from kpilink.numerics import Tape, Tensor, derived_rng, zero_grads
from kpilink.pooling import make_pooler
from kpilink.relations import (
    AllAllowedMatrix,
    DEFAULT_RELATION_MATRIX as MATRIX,
    RelationCandidate,
    RelationClassifier,
    generate_candidates,
    localized_context,
    matrix_for,
    prune_relations,
    rel_loss,
    sample_negative_pairs,
)
from conftest import finite_difference_check
from kpilink.numerics import bce_with_logits, dot


def span(start, end, etype, emb=None):
    return EntitySpan(start=start, end=end, etype=etype, emb=emb, width=end - start + 1)


# ---------------------------------------------------------------------------
# matrix

def test_allowed_pairs_exact():
    allowed = [
        ("kpi", "cy"), ("kpi", "py"), ("kpi", "increase"), ("kpi", "decrease"),
        ("kpi", "davon"), ("davon", "davon-cy"), ("davon", "davon-py"),
    ]
    for a, b in allowed:
        assert MATRIX.allowed(a, b) and MATRIX.allowed(b, a)
    forbidden = [
        ("cy", "py"), ("kpi", "kpi"), ("kpi", "davon-cy"), ("kpi", "davon-py"),
        ("cy", "davon"), ("increase", "decrease"), ("davon", "davon"),
        ("davon-cy", "davon-py"), ("cy", "cy"),
    ]
    for a, b in forbidden:
        assert not MATRIX.allowed(a, b)


def test_all_allowed_matrix_keeps_known_caps():
    loose = AllAllowedMatrix()
    assert loose.allowed("cy", "py")
    assert loose.caps("kpi", "cy") == {"kpi": 1, "cy": 1}
    assert loose.caps("cy", "py") == {}
    assert matrix_for(True) is MATRIX
    assert isinstance(matrix_for(False), AllAllowedMatrix)


# ---------------------------------------------------------------------------
# candidates

def test_candidates_basic():
    spans = [span(0, 0, "kpi"), span(2, 2, "cy")]
    cands = generate_candidates(spans, MATRIX)
    assert len(cands) == 1
    assert (cands[0].s1.etype, cands[0].s2.etype) == ("kpi", "cy")


def test_candidates_forbidden_pair():
    assert generate_candidates([span(0, 0, "cy"), span(2, 2, "py")], MATRIX) == []


def test_candidates_two_kpi_one_cy():
    spans = [span(0, 0, "kpi"), span(2, 2, "kpi"), span(4, 4, "cy")]
    cands = generate_candidates(spans, MATRIX)
    pairs = {(c.s1.start, c.s2.start) for c in cands}
    assert pairs == {(0, 4), (2, 4)}  # never kpi-kpi


def test_candidates_ordered_and_unique():
    spans = [span(4, 4, "cy"), span(0, 1, "kpi")]
    cands = generate_candidates(spans, MATRIX)
    assert len(cands) == 1
    assert cands[0].s1.start == 0  # earlier span first regardless of input order


# ---------------------------------------------------------------------------
# localized context

def _embs(seed, m, d=4):
    rng = derived_rng(seed, "ctx")
    return [Tensor(rng.normal(size=d)) for _ in range(m)]


def test_context_adjacent_spans_zero_vector():
    embs = _embs(0, 5)
    out = localized_context(embs, span(0, 1, "kpi"), span(2, 2, "cy"), make_pooler("mean", 4))
    assert np.array_equal(out.data, np.zeros(4))


def test_context_single_gap_word_is_that_embedding():
    embs = _embs(1, 5)
    out = localized_context(embs, span(0, 0, "kpi"), span(2, 2, "cy"), make_pooler("mean", 4))
    assert np.array_equal(out.data, embs[1].data)


def test_context_order_independence():
    embs = _embs(2, 7)
    pooler = make_pooler("max", 4)
    a = localized_context(embs, span(0, 1, "kpi"), span(4, 5, "cy"), pooler)
    b = localized_context(embs, span(4, 5, "cy"), span(0, 1, "kpi"), pooler)
    assert np.array_equal(a.data, b.data)


def test_context_overlap_rejected():
    embs = _embs(3, 5)
    with pytest.raises(ContractError):
        localized_context(embs, span(0, 2, "kpi"), span(2, 3, "cy"), make_pooler("mean", 4))


# ---------------------------------------------------------------------------
# classifier

def _classifier(seed=0, d=4, v=2, alpha=0.5):
    return RelationClassifier(d, v, alpha, derived_rng(seed, "rel"))


def _candidate_with_embs(seed, d=4, v=2):
    rng = derived_rng(seed, "cand")
    s1 = span(0, 0, "kpi", emb=Tensor(rng.normal(size=d + v)))
    s2 = span(2, 2, "cy", emb=Tensor(rng.normal(size=d + v)))
    return RelationCandidate(s1=s1, s2=s2), _embs(seed, 4, d)


def test_score_is_half_for_zero_parameters():
    clf = _classifier()
    clf.w.data[:] = 0.0
    clf.b.data = np.zeros(())
    cand, embs = _candidate_with_embs(5)
    x_r = clf.input_vector(cand, embs, make_pooler("mean", 4))
    assert clf.score(x_r) == pytest.approx(0.5)
    # boundary rule: score == alpha is negative (strict exceedance)
    assert not clf.is_positive(0.5)
    assert clf.is_positive(0.5000001)


def test_input_dimension_reference_scale():
    clf = RelationClassifier(768, 25, 0.5, derived_rng(1, "big"))
    assert clf.input_dim == 3 * 768 + 2 * 25 == 2354


def test_input_dimension_mismatch_rejected():
    clf = _classifier()
    with pytest.raises(ContractError):
        clf.logit(Tensor(np.zeros(5)))


def test_alpha_range_enforced():
    with pytest.raises(ContractError):
        _classifier(alpha=1.0)


def test_classifier_gradcheck():
    clf = _classifier(7)
    cand, embs = _candidate_with_embs(7)
    pooler = make_pooler("mean", 4)
    params = clf.parameters()
    zero_grads(params)
    with Tape() as tape:
        loss = bce_with_logits(clf.logit(clf.input_vector(cand, embs, pooler)), 1.0)
        tape.backward(loss)

    def forward():
        z = float(np.dot(clf.w.data, clf.input_vector(cand, embs, pooler).data) + clf.b.data)
        return max(z, 0.0) - z * 1.0 + math.log1p(math.exp(-abs(z)))

    finite_difference_check(params, forward)


# ---------------------------------------------------------------------------
# pruning

def rel(s1, s2, score):
    return RelationCandidate(s1=s1, s2=s2, score=score)


def test_prune_two_kpis_one_cy():
    cy = span(4, 4, "cy")
    r1 = rel(span(0, 0, "kpi"), cy, 0.9)
    r2 = rel(span(2, 2, "kpi"), cy, 0.7)
    kept = prune_relations([r2, r1], MATRIX)
    assert kept == [r1]


def test_prune_one_kpi_many_davon_kept():
    kpi = span(0, 0, "kpi")
    r1 = rel(kpi, span(2, 2, "davon"), 0.6)
    r2 = rel(kpi, span(4, 4, "davon"), 0.9)
    kept = prune_relations([r1, r2], MATRIX)
    assert len(kept) == 2


def test_prune_davon_keeps_single_kpi():
    davon = span(4, 4, "davon")
    r1 = rel(span(0, 0, "kpi"), davon, 0.8)
    r2 = rel(span(2, 2, "kpi"), davon, 0.6)
    kept = prune_relations([r1, r2], MATRIX)
    assert kept == [r1]


def _random_instance(rng):
    """Random spans and scored allowed relations for pruning properties."""
    types = ("kpi", "cy", "py", "davon", "davon-cy", "davon-py", "increase", "decrease")
    n_spans = int(rng.integers(2, 8))
    spans = []
    pos = 0
    for _ in range(n_spans):
        length = int(rng.integers(1, 3))
        spans.append(span(pos, pos + length - 1, types[int(rng.integers(0, len(types)))]))
        pos += length + 1
    rels = []
    for i in range(len(spans)):
        for j in range(i + 1, len(spans)):
            if MATRIX.allowed(spans[i].etype, spans[j].etype) and rng.random() < 0.8:
                rels.append(rel(spans[i], spans[j], float(np.round(rng.random(), 3))))
    return rels


def test_prune_idempotent_and_dominance_free():
    rng = derived_rng(31, "prune")
    for _ in range(300):
        rels = _random_instance(rng)
        kept = prune_relations(rels, MATRIX)
        assert prune_relations(kept, MATRIX) == kept
        # no emitted relation violates the matrix
        for r in kept:
            assert MATRIX.allowed(r.s1.etype, r.s2.etype)
        # dominance: every discarded relation conflicts with an accepted one
        # of greater or equal score
        kept_set = {id(r) for r in kept}
        for r in rels:
            if id(r) in kept_set:
                continue
            caps = MATRIX.caps(r.s1.etype, r.s2.etype)
            conflicting = [
                k for k in kept
                if k.pair_key() == r.pair_key()
                and any(
                    caps.get(s.etype) is not None and s.key() in (k.s1.key(), k.s2.key())
                    for s in (r.s1, r.s2)
                )
            ]
            assert conflicting, "discarded relation conflicts with nothing"
            assert max(k.score for k in conflicting) >= r.score


def test_prune_deterministic_tie_break():
    cy = span(6, 6, "cy")
    r_late = rel(span(4, 4, "kpi"), cy, 0.8)
    r_early = rel(span(0, 0, "kpi"), cy, 0.8)
    assert prune_relations([r_late, r_early], MATRIX) == [r_early]


# ---------------------------------------------------------------------------
# loss and negatives

def test_rel_loss_closed_forms():
    z0 = Tensor(0.0)
    assert float(rel_loss([(z0, 1.0), (z0, 0.0)]).data) == pytest.approx(math.log(2.0))
    strong = Tensor(30.0)
    weak = Tensor(-30.0)
    assert float(rel_loss([(strong, 1.0), (weak, 0.0)]).data) == pytest.approx(0.0, abs=1e-12)
    assert float(rel_loss([]).data) == 0.0
    assert float(rel_loss([(z0, 1.0)]).data) == pytest.approx(math.log(2.0))


def test_negative_sampling_pool_and_cap():
    spans = [span(0, 0, "kpi"), span(2, 2, "cy"), span(4, 4, "kpi"), span(6, 6, "py")]
    gold = {frozenset((0, 1))}  # kpi0 - cy
    rng = derived_rng(3, "neg")
    pool = sample_negative_pairs(spans, gold, MATRIX, 100, rng)
    as_types = {(spans[i].etype, spans[j].etype) for i, j in pool}
    assert frozenset((0, 1)) not in {frozenset(p) for p in pool}
    for i, j in pool:
        assert MATRIX.allowed(spans[i].etype, spans[j].etype)
    # kpi0-py, kpi1-cy, kpi1-py are the allowed non-gold pairs
    assert len(pool) == 3
    capped = sample_negative_pairs(spans, gold, MATRIX, 2, rng)
    assert len(capped) == 2


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_prune_never_emits_forbidden(seed):
    rng = derived_rng(seed, "hyp")
    rels = _random_instance(rng)
    for r in prune_relations(rels, MATRIX):
        assert MATRIX.allowed(r.s1.etype, r.s2.etype)
