"""IOBES tagging: inventory, transition automaton, and three decoders.

The inventory has 4 * (number of entity types) + 1 tags: B/I/E/S per type
plus O. A transition automaton enforces that from O, E-x or S-x the next tag
opens something new (O, any B-y or S-y), while from B-x or I-x the only legal
continuations are I-x and E-x. At the last word the end mask additionally
forbids B-* and I-*, so a constrained decode can never leave a span open.

Decoders:
  * ``GruLmDecoder``: sequential GRU that consumes [word embedding;
    embedding of the previous tag] per step, with conditional label masking
    on the previous (predicted or gold) tag;
  * ``LinearDecoder``: position-independent softmax over all tags;
  * ``CrfDecoder``: emissions plus a trainable transition matrix whose
    forbidden entries are masked, exact Viterbi inference and forward
    algorithm NLL training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import ENTITY_TYPES
from .errors import ConfigError, ContractError, DataError
from .numerics import (
    GruCell,
    Tensor,
    add,
    affine,
    col,
    concat,
    constant,
    dropout,
    init_param,
    masked_logsumexp,
    masked_softmax,
    pick,
    row,
    scale,
    sub,
    zeros,
)

PREFIXES = ("B", "I", "E", "S")


class TagInventory:
    """Tag list and index maps for a given entity type set (O comes first)."""

    def __init__(self, entity_types=ENTITY_TYPES):
        self.entity_types = tuple(entity_types)
        if not self.entity_types:
            raise ConfigError("at least one entity type is required")
        self.tags = ["O"]
        for etype in self.entity_types:
            for prefix in PREFIXES:
                self.tags.append(f"{prefix}-{etype}")
        self.index = {tag: i for i, tag in enumerate(self.tags)}
        self.o_index = 0

    def __len__(self):
        return len(self.tags)

    def prefix(self, idx):
        return "O" if idx == 0 else self.tags[idx][0]

    def etype(self, idx):
        return None if idx == 0 else self.tags[idx][2:]

    def tag_index(self, prefix, etype):
        return self.index[f"{prefix}-{etype}"]

    def dump(self):
        return dict(self.index)


class TagAutomaton:
    """Legal-transition relation over an inventory, plus start and end masks."""

    def __init__(self, inventory):
        self.inventory = inventory
        n = len(inventory)
        allowed = np.zeros((n, n), dtype=bool)
        opens = np.zeros(n, dtype=bool)  # O, B-*, S-*: tags that may follow a closed position
        closed = np.zeros(n, dtype=bool)  # O, E-*, S-*: tags that end or stand outside a span
        opens[0] = True
        closed[0] = True
        for idx in range(1, n):
            prefix = inventory.prefix(idx)
            if prefix in ("B", "S"):
                opens[idx] = True
            if prefix in ("E", "S"):
                closed[idx] = True
        for prev in range(n):
            prefix = inventory.prefix(prev)
            if prefix in ("O", "E", "S"):
                allowed[prev] = opens
            else:  # B-x or I-x: binary choice between I-x and E-x
                etype = inventory.etype(prev)
                allowed[prev, inventory.tag_index("I", etype)] = True
                allowed[prev, inventory.tag_index("E", etype)] = True
        self.allowed = allowed
        self.start_mask = opens.copy()
        self.end_mask = closed.copy()

    def next_mask(self, prev_idx, final):
        mask = self.allowed[prev_idx]
        if final:
            mask = mask & self.end_mask
        return mask

    def initial_mask(self, final):
        mask = self.start_mask
        if final:
            mask = mask & self.end_mask
        return mask

    def is_valid_sequence(self, tag_indices):
        if len(tag_indices) == 0:
            return True
        if not self.start_mask[tag_indices[0]]:
            return False
        for prev, nxt in zip(tag_indices, tag_indices[1:]):
            if not self.allowed[prev, nxt]:
                return False
        return bool(self.end_mask[tag_indices[-1]])


# ---------------------------------------------------------------------------
# Tags <-> spans

def spans_to_tags(entities, n_words, inventory):
    """Gold spans to IOBES tag indices (spans must be disjoint and in bounds)."""
    tags = [inventory.o_index] * n_words
    for ent in entities:
        if not (0 <= ent.start <= ent.end < n_words):
            raise DataError(f"span ({ent.start}, {ent.end}) out of bounds for {n_words} words")
        if ent.start == ent.end:
            tags[ent.start] = inventory.tag_index("S", ent.etype)
        else:
            tags[ent.start] = inventory.tag_index("B", ent.etype)
            for pos in range(ent.start + 1, ent.end):
                tags[pos] = inventory.tag_index("I", ent.etype)
            tags[ent.end] = inventory.tag_index("E", ent.etype)
    return tags


def repair_tags(tag_indices, inventory):
    """Demote tags of malformed runs to O; a no-op on automaton-valid input.

    Dangling B-x/I-x runs that never reach E-x drop to O, as do I-*/E-*
    without a matching open B-*. Never invents or extends spans.
    """
    repaired = list(tag_indices)
    open_start = None
    open_type = None

    def demote(upto):
        nonlocal open_start, open_type
        if open_start is not None:
            for pos in range(open_start, upto):
                repaired[pos] = inventory.o_index
        open_start = None
        open_type = None

    for pos, idx in enumerate(tag_indices):
        prefix = inventory.prefix(idx)
        etype = inventory.etype(idx)
        if open_start is None:
            if prefix == "B":
                open_start, open_type = pos, etype
            elif prefix in ("I", "E"):
                repaired[pos] = inventory.o_index
        else:
            if prefix == "I" and etype == open_type:
                continue
            if prefix == "E" and etype == open_type:
                open_start, open_type = None, None
                continue
            demote(pos)
            if prefix == "B":
                open_start, open_type = pos, etype
            elif prefix in ("I", "E"):
                repaired[pos] = inventory.o_index
    demote(len(tag_indices))
    return repaired


def tags_to_raw_spans(tag_indices, inventory):
    """Valid tag sequence to (start, end, type) triples."""
    spans = []
    pos = 0
    n = len(tag_indices)
    while pos < n:
        idx = tag_indices[pos]
        prefix = inventory.prefix(idx)
        if prefix == "O":
            pos += 1
        elif prefix == "S":
            spans.append((pos, pos, inventory.etype(idx)))
            pos += 1
        elif prefix == "B":
            etype = inventory.etype(idx)
            end = pos + 1
            while end < n and inventory.prefix(tag_indices[end]) == "I":
                end += 1
            if end >= n or inventory.prefix(tag_indices[end]) != "E":
                raise DataError(f"unterminated span starting at word {pos}")
            spans.append((pos, end, etype))
            pos = end + 1
        else:
            raise DataError(f"invalid tag sequence at word {pos}: {inventory.tags[idx]}")
    return spans


# ---------------------------------------------------------------------------
# Span embeddings

@dataclass
class EntitySpan:
    start: int
    end: int  # inclusive
    etype: str
    emb: Tensor | None = None  # [pooled words; width embedding], dim d+v
    width: int = 0

    def key(self):
        return (self.start, self.end, self.etype)


class WidthEmbedding:
    """Learned span-size prior: one v-dimensional row per length 1..l."""

    def __init__(self, max_len, dim, rng):
        if max_len < 1:
            raise ConfigError(f"max span length must be >= 1, got {max_len}")
        self.max_len = max_len
        self.dim = dim
        self.table = init_param(rng, (max_len, dim), "ner.width_table")

    def parameters(self):
        return [self.table]

    def lookup(self, width):
        clamped = min(int(width), self.max_len)
        return row(self.table, clamped - 1)


def build_entity_span(start, end, etype, word_embs, entity_pooler, width_embedding):
    width = end - start + 1
    pooled = entity_pooler(word_embs[start:end + 1])
    emb = concat([pooled, width_embedding.lookup(width)])
    return EntitySpan(start=start, end=end, etype=etype, emb=emb, width=width)


def assemble_spans(tag_indices, word_embs, inventory, entity_pooler, width_embedding):
    """Tag sequence to embedded spans; invalid sequences are repaired first
    (repair is the identity on valid sequences)."""
    repaired = repair_tags(tag_indices, inventory)
    return [
        build_entity_span(start, end, etype, word_embs, entity_pooler, width_embedding)
        for start, end, etype in tags_to_raw_spans(repaired, inventory)
    ]


# ---------------------------------------------------------------------------
# Decoders

@dataclass
class DecodeStep:
    logits: Tensor
    mask: np.ndarray
    posterior: Tensor
    tag: int


def constrained_greedy_path(score_rows, automaton, masking=True):
    """Greedy argmax walk over precomputed per-word scores (fixtures and the
    linear decoder share this with the recurrent decoder's masking logic)."""
    n = len(automaton.inventory)
    tags = []
    steps = []
    m = len(score_rows)
    for j, scores in enumerate(score_rows):
        final = j == m - 1
        if masking:
            mask = automaton.initial_mask(final) if j == 0 else automaton.next_mask(tags[-1], final)
        else:
            mask = np.ones(n, dtype=bool)
        posterior = masked_softmax(scores, mask)
        tag = int(np.argmax(posterior.data))
        steps.append(DecodeStep(logits=scores, mask=mask, posterior=posterior, tag=tag))
        tags.append(tag)
    return tags, steps


class GruLmDecoder:
    """Sequential tagger with conditional label masking.

    Step j consumes [e_j; embedding of the previous tag] (the O embedding
    before the first word), updates a GRU state, classifies, masks
    impossible tags given the previous one, and applies softmax. In greedy
    mode the previous tag is the argmax of the last posterior; in
    teacher-forced mode both the label embedding and the mask come from the
    gold history.
    """

    name = "gru_lm"

    def __init__(self, inventory, automaton, embed_dim, label_dim, rng, masking=True, hidden_dim=None):
        self.inventory = inventory
        self.automaton = automaton
        self.masking = bool(masking)
        self.hidden_dim = hidden_dim or embed_dim
        n = len(inventory)
        self.label_table = init_param(rng, (n, label_dim), "ner.label_table")
        self.cell = GruCell(embed_dim + label_dim, self.hidden_dim, rng, "ner.gru")
        self.w_out = init_param(rng, (n, self.hidden_dim), "ner.w_out")
        self.b_out = init_param(rng, (n,), "ner.b_out")

    def parameters(self):
        return [self.label_table, *self.cell.parameters(), self.w_out, self.b_out]

    def decode(self, word_embs, gold_tags=None, dropout_p=0.0, dropout_rng=None):
        """Returns (tag indices, per-step DecodeStep list).

        ``gold_tags`` switches to teacher forcing: the gold history drives
        both the label embedding and the mask, and it must be automaton
        valid. Greedy mode conditions on the decoder's own predictions.
        """
        if not word_embs:
            raise ContractError("cannot decode an empty sentence")
        teacher = gold_tags is not None
        if teacher and len(gold_tags) != len(word_embs):
            raise DataError(f"{len(gold_tags)} gold tags for {len(word_embs)} words")
        n = len(self.inventory)
        m = len(word_embs)
        h = zeros(self.hidden_dim)
        prev = self.inventory.o_index
        tags = []
        steps = []
        for j, e_j in enumerate(word_embs):
            final = j == m - 1
            z_j = concat([e_j, row(self.label_table, prev)])
            h = self.cell.step(z_j, h)
            classified = h
            if dropout_p > 0.0 and dropout_rng is not None:
                classified = dropout(classified, dropout_p, dropout_rng)
            logits = affine(classified, self.w_out, self.b_out)
            if self.masking:
                mask = self.automaton.initial_mask(final) if j == 0 else self.automaton.next_mask(prev, final)
            else:
                mask = np.ones(n, dtype=bool)
            posterior = masked_softmax(logits, mask)
            if teacher:
                tag = int(gold_tags[j])
                if self.masking and not mask[tag]:
                    raise DataError(
                        f"gold tag {self.inventory.tags[tag]!r} at word {j} violates the transition automaton"
                    )
            else:
                tag = int(np.argmax(posterior.data))
            steps.append(DecodeStep(logits=logits, mask=mask, posterior=posterior, tag=tag))
            tags.append(tag)
            prev = tag
        return tags, steps


class LinearDecoder:
    """Per-word classifier; positions are scored independently, so the raw
    sequence may violate the automaton and is repaired during assembly."""

    name = "linear"

    def __init__(self, inventory, automaton, embed_dim, rng):
        self.inventory = inventory
        self.automaton = automaton
        n = len(inventory)
        self.w_out = init_param(rng, (n, embed_dim), "ner.w_out")
        self.b_out = init_param(rng, (n,), "ner.b_out")

    def parameters(self):
        return [self.w_out, self.b_out]

    def decode(self, word_embs, gold_tags=None, dropout_p=0.0, dropout_rng=None):
        if not word_embs:
            raise ContractError("cannot decode an empty sentence")
        if gold_tags is not None and len(gold_tags) != len(word_embs):
            raise DataError(f"{len(gold_tags)} gold tags for {len(word_embs)} words")
        n = len(self.inventory)
        full = np.ones(n, dtype=bool)
        tags = []
        steps = []
        for j, e_j in enumerate(word_embs):
            classified = e_j
            if dropout_p > 0.0 and dropout_rng is not None:
                classified = dropout(classified, dropout_p, dropout_rng)
            logits = affine(classified, self.w_out, self.b_out)
            posterior = masked_softmax(logits, full)
            tag = int(gold_tags[j]) if gold_tags is not None else int(np.argmax(posterior.data))
            steps.append(DecodeStep(logits=logits, mask=full, posterior=posterior, tag=tag))
            tags.append(tag)
        return tags, steps


def ner_loss(steps, gold_tags):
    """Mean per-word cross-entropy over the masked posterior support.

    Computed from the masked logits as logsumexp - logit[gold], which equals
    -log(posterior[gold]) exactly but stays stable for extreme logits.
    """
    if len(steps) != len(gold_tags):
        raise DataError(f"{len(gold_tags)} gold tags for {len(steps)} decode steps")
    terms = []
    for step, gold in zip(steps, gold_tags):
        gold = int(gold)
        if not step.mask[gold]:
            raise DataError("gold tag is masked out at its own step")
        terms.append(sub(masked_logsumexp(step.logits, step.mask), pick(step.logits, gold)))
    return scale(add_n_safe(terms), 1.0 / len(terms))


def add_n_safe(terms):
    if len(terms) == 1:
        return terms[0]
    from .numerics import add_n

    return add_n(terms)


class CrfDecoder:
    """Linear-chain CRF with automaton-masked trainable transitions.

    The sequence score is the sum of per-word emissions plus transition
    scores; sequences must start in the automaton's start set and end in its
    end set. Inference is exact Viterbi; training minimizes the negative
    log-likelihood with the partition function computed by the forward
    algorithm in log space (only over automaton-legal sequences).
    """

    name = "crf_lm"

    def __init__(self, inventory, automaton, embed_dim, rng):
        self.inventory = inventory
        self.automaton = automaton
        n = len(inventory)
        self.w_emit = init_param(rng, (n, embed_dim), "ner.crf.w_emit")
        self.b_emit = init_param(rng, (n,), "ner.crf.b_emit")
        self.transitions = init_param(rng, (n, n), "ner.crf.transitions")

    def parameters(self):
        return [self.w_emit, self.b_emit, self.transitions]

    def _emissions(self, word_embs, dropout_p=0.0, dropout_rng=None):
        out = []
        for e_j in word_embs:
            classified = e_j
            if dropout_p > 0.0 and dropout_rng is not None:
                classified = dropout(classified, dropout_p, dropout_rng)
            out.append(affine(classified, self.w_emit, self.b_emit))
        return out

    def viterbi(self, word_embs):
        """Exact max-scoring automaton-valid tag sequence (pure numpy)."""
        if not word_embs:
            raise ContractError("cannot decode an empty sentence")
        emissions = np.stack([e.data for e in self._emissions(word_embs)])
        trans = self.transitions.data
        auto = self.automaton
        m, n = emissions.shape
        neg = -np.inf
        score = np.full(n, neg)
        start = auto.initial_mask(final=(m == 1))
        score[start] = emissions[0][start]
        back = np.zeros((m, n), dtype=np.int64)
        for j in range(1, m):
            allowed = auto.allowed.copy()
            if j == m - 1:
                allowed = allowed & auto.end_mask[None, :]
            cand = score[:, None] + np.where(allowed, trans, neg)
            back[j] = np.argmax(cand, axis=0)
            score = np.max(cand, axis=0) + emissions[j]
        last = int(np.argmax(score))
        tags = [last]
        for j in range(m - 1, 0, -1):
            last = int(back[j][last])
            tags.append(last)
        tags.reverse()
        return tags

    def _check_gold(self, gold_tags, m):
        auto = self.automaton
        if len(gold_tags) != m:
            raise DataError(f"{len(gold_tags)} gold tags for {m} words")
        if not auto.is_valid_sequence(gold_tags):
            raise DataError("gold tag sequence violates the transition automaton")

    def nll(self, word_embs, gold_tags, dropout_p=0.0, dropout_rng=None):
        """Negative log-likelihood of the gold sequence, on the tape."""
        if not word_embs:
            raise ContractError("cannot decode an empty sentence")
        m = len(word_embs)
        gold_tags = [int(t) for t in gold_tags]
        self._check_gold(gold_tags, m)
        emissions = self._emissions(word_embs, dropout_p, dropout_rng)
        auto = self.automaton
        n = len(self.inventory)

        gold_terms = [pick(emissions[0], gold_tags[0])]
        for prev, nxt in zip(gold_tags, gold_tags[1:]):
            gold_terms.append(pick(row(self.transitions, prev), nxt))
        for j in range(1, m):
            gold_terms.append(pick(emissions[j], gold_tags[j]))
        gold_score = add_n_safe(gold_terms)

        reach = auto.initial_mask(final=(m == 1)).copy()
        alpha = emissions[0]
        for j in range(1, m):
            final = j == m - 1
            entries = []
            new_reach = np.zeros(n, dtype=bool)
            for t in range(n):
                pmask = auto.allowed[:, t] & reach
                if final and not auto.end_mask[t]:
                    pmask = np.zeros(n, dtype=bool)
                if pmask.any():
                    entries.append(masked_logsumexp(add(alpha, col(self.transitions, t)), pmask))
                    new_reach[t] = True
                else:
                    entries.append(constant(0.0))  # placeholder, masked out downstream
            alpha = add(concat(entries), emissions[j])
            reach = new_reach
        log_z = masked_logsumexp(alpha, reach)
        return sub(log_z, gold_score)
