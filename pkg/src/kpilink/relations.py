"""Relation candidates, localized-context scoring, and uniqueness pruning.

A single symmetric "matches" relation links entity pairs. Domain knowledge
enters twice: the relation matrix whitelists which unordered type pairs may
be linked at all (with a per-type cap used later for pruning), and after
thresholding, overlapping relations are pruned greedily by score so that a
1:1 pair type never links the same entity twice. A kpi may keep many davon
partners but each davon keeps at most one kpi.

Prediction files are JSON lines::

    {"doc_id": "...", "sent_index": 0,
     "entities": [{"start": 1, "end": 3, "type": "kpi"}, ...],
     "relations": [{"head_entity": 0, "tail_entity": 1, "score": 0.93}, ...]}
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .errors import ContractError, FormatError
from .ioutil import atomic_open
from .numerics import Tensor, add, bce_with_logits, concat, dot, dropout, init_param, scale, zeros
from .corpus import ENTITY_TYPES


class RelationMatrix:
    """Allowed unordered type pairs with per-type acceptance caps.

    ``rules`` maps frozenset({a, b}) to {type: cap or None}; a cap of 1 means
    an entity of that type may take part in at most one accepted relation of
    this pair type, None means unlimited.
    """

    def __init__(self, rules):
        self.rules = {frozenset(pair): dict(caps) for pair, caps in rules.items()}

    def allowed(self, type_a, type_b):
        return frozenset((type_a, type_b)) in self.rules

    def caps(self, type_a, type_b):
        return self.rules.get(frozenset((type_a, type_b)), {})


DEFAULT_RELATION_MATRIX = RelationMatrix({
    ("kpi", "cy"): {"kpi": 1, "cy": 1},
    ("kpi", "py"): {"kpi": 1, "py": 1},
    ("kpi", "increase"): {"kpi": 1, "increase": 1},
    ("kpi", "decrease"): {"kpi": 1, "decrease": 1},
    ("kpi", "davon"): {"kpi": None, "davon": 1},
    ("davon", "davon-cy"): {"davon": 1, "davon-cy": 1},
    ("davon", "davon-py"): {"davon": 1, "davon-py": 1},
})


class AllAllowedMatrix(RelationMatrix):
    """Ablation matrix: every type pair passes the allowed check, while the
    pruning caps of the genuinely known pairs are kept."""

    def __init__(self, base=DEFAULT_RELATION_MATRIX):
        super().__init__(base.rules)

    def allowed(self, type_a, type_b):
        return True


def matrix_for(filter_impossible):
    return DEFAULT_RELATION_MATRIX if filter_impossible else AllAllowedMatrix()


# ---------------------------------------------------------------------------
# Candidates

@dataclass
class RelationCandidate:
    s1: object  # EntitySpan appearing earlier in the sentence
    s2: object
    score: float | None = None

    def pair_key(self):
        return frozenset((self.s1.etype, self.s2.etype))


def generate_candidates(spans, matrix):
    """All unordered span pairs with an allowed type combination.

    Spans are ordered by sentence position, s1 is always the earlier span,
    and each unordered pair appears at most once. Same-position pairs and
    self-pairs never become candidates.
    """
    ordered = sorted(spans, key=lambda s: (s.start, s.end, s.etype))
    candidates = []
    for i in range(len(ordered)):
        for j in range(i + 1, len(ordered)):
            s1, s2 = ordered[i], ordered[j]
            if s1.start == s2.start and s1.end == s2.end:
                continue
            if matrix.allowed(s1.etype, s2.etype):
                candidates.append(RelationCandidate(s1=s1, s2=s2))
    return candidates


def localized_context(word_embs, s1, s2, context_pooler):
    """Pool the word embeddings strictly between the two spans.

    An empty gap yields a zero vector (the pooling operation itself rejects
    empty input; this call site defines the convention). Overlapping spans
    are a contract violation.
    """
    first, second = (s1, s2) if s1.start <= s2.start else (s2, s1)
    if second.start <= first.end:
        raise ContractError(
            f"localized context needs disjoint spans, got ({s1.start},{s1.end}) and ({s2.start},{s2.end})"
        )
    gap = word_embs[first.end + 1:second.start]
    if not gap:
        dim = word_embs[0].data.shape[0] if word_embs else 0
        return zeros(dim)
    return context_pooler(gap)


class RelationClassifier:
    """Sigmoid scorer over [e(s1); localized context; e(s2)].

    A pair is predicted positive iff its score strictly exceeds the
    confidence threshold alpha.
    """

    def __init__(self, embed_dim, width_dim, alpha, rng):
        if not (0.0 < alpha < 1.0):
            raise ContractError(f"confidence threshold must lie in (0, 1), got {alpha}")
        self.input_dim = 3 * embed_dim + 2 * width_dim
        self.alpha = float(alpha)
        self.w = init_param(rng, (self.input_dim,), "rel.w")
        self.b = init_param(rng, (), "rel.b")

    def parameters(self):
        return [self.w, self.b]

    def input_vector(self, candidate, word_embs, context_pooler):
        ctx = localized_context(word_embs, candidate.s1, candidate.s2, context_pooler)
        return concat([candidate.s1.emb, ctx, candidate.s2.emb])

    def logit(self, x_r, dropout_p=0.0, dropout_rng=None):
        if x_r.data.shape != (self.input_dim,):
            raise ContractError(f"relation input has dim {x_r.data.shape}, expected ({self.input_dim},)")
        if dropout_p > 0.0 and dropout_rng is not None:
            x_r = dropout(x_r, dropout_p, dropout_rng)
        return add(dot(self.w, x_r), self.b)

    def score(self, x_r):
        z = float(self.logit(x_r).data)
        return 1.0 / (1.0 + math.exp(-z)) if z >= 0 else math.exp(z) / (1.0 + math.exp(z))

    def is_positive(self, score):
        return score > self.alpha


# ---------------------------------------------------------------------------
# Pruning

def _sort_key(rel):
    return (-rel.score, rel.s1.start, rel.s1.end, rel.s2.start, rel.s2.end, rel.s1.etype, rel.s2.etype)


def prune_relations(relations, matrix):
    """Greedy overlap pruning by descending score.

    Relations are visited best first (ties broken by sentence position of
    the earlier span); one is accepted unless an endpoint with a cap for
    this pair type is already saturated by an accepted relation. The result
    is idempotent and dominance-free: no discarded relation outscores an
    accepted one it conflicts with.
    """
    used = {}
    kept = []
    for rel in sorted(relations, key=_sort_key):
        caps = matrix.caps(rel.s1.etype, rel.s2.etype)
        pair = rel.pair_key()
        blocked = False
        for span in (rel.s1, rel.s2):
            cap = caps.get(span.etype)
            if cap is not None and used.get((span.key(), pair), 0) >= cap:
                blocked = True
                break
        if blocked:
            continue
        for span in (rel.s1, rel.s2):
            if caps.get(span.etype) is not None:
                used[(span.key(), pair)] = used.get((span.key(), pair), 0) + 1
        kept.append(rel)
    return kept


# ---------------------------------------------------------------------------
# Training loss

def rel_loss(logits_and_targets):
    """Mean binary cross-entropy over scored candidates; empty input is 0."""
    if not logits_and_targets:
        return Tensor(0.0)
    terms = [bce_with_logits(z, y) for z, y in logits_and_targets]
    if len(terms) == 1:
        return terms[0]
    from .numerics import add_n

    return scale(add_n(terms), 1.0 / len(terms))


def sample_negative_pairs(gold_spans, gold_pairs, matrix, n_rel, rng):
    """Allowed gold-span pairs that are not gold relations, at most n_rel,
    drawn without replacement."""
    pool = []
    ordered = sorted(range(len(gold_spans)), key=lambda i: (gold_spans[i].start, gold_spans[i].end, gold_spans[i].etype))
    for a in range(len(ordered)):
        for b in range(a + 1, len(ordered)):
            i, j = ordered[a], ordered[b]
            s1, s2 = gold_spans[i], gold_spans[j]
            if s1.start == s2.start and s1.end == s2.end:
                continue
            if not matrix.allowed(s1.etype, s2.etype):
                continue
            if frozenset((i, j)) in gold_pairs:
                continue
            pool.append((i, j))
    if len(pool) > n_rel:
        order = rng.permutation(len(pool))[:n_rel]
        pool = [pool[k] for k in sorted(order)]
    return pool


# ---------------------------------------------------------------------------
# Prediction records

@dataclass
class SentencePrediction:
    doc_id: str
    sent_index: int
    entities: list  # (start, end, type) triples
    relations: list  # (head_entity, tail_entity, score)


def write_predictions(path, predictions, header=None):
    with atomic_open(path, "w") as fh:
        if header is not None:
            fh.write(json.dumps({"_header": dict(header, format="predictions_v1")}, ensure_ascii=False) + "\n")
        for pred in predictions:
            record = {
                "doc_id": pred.doc_id,
                "sent_index": pred.sent_index,
                "entities": [{"start": s, "end": e, "type": t} for s, e, t in pred.entities],
                "relations": [
                    {"head_entity": h, "tail_entity": t, "score": round(float(score), 6)}
                    for h, t, score in pred.relations
                ],
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def read_predictions(path):
    predictions = []
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                record = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise FormatError(f"invalid JSON: {exc}", path=path, line=line_no) from exc
            if "_header" in record:
                continue
            try:
                entities = [(int(e["start"]), int(e["end"]), str(e["type"])) for e in record.get("entities", [])]
                for _, _, etype in entities:
                    if etype not in ENTITY_TYPES:
                        raise ValueError(f"unknown entity type {etype!r}")
                relations = []
                for r in record.get("relations", []):
                    h, t = int(r["head_entity"]), int(r["tail_entity"])
                    if not (0 <= h < len(entities)) or not (0 <= t < len(entities)):
                        raise ValueError("relation endpoint outside entity list")
                    relations.append((h, t, float(r.get("score", 1.0))))
                predictions.append(
                    SentencePrediction(
                        doc_id=str(record["doc_id"]),
                        sent_index=int(record["sent_index"]),
                        entities=entities,
                        relations=relations,
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"malformed record: {exc}", path=path, line=line_no) from exc
    return predictions
