"""Joint model wiring: encoder, poolers, tag decoder, relation classifier.

Training forward passes are teacher forced (the tag decoder conditions on
gold history, the relation classifier scores gold spans plus sampled
negatives); inference runs the full predicted pipeline: decode tags,
assemble spans, generate allowed candidates, score, threshold, prune.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ner
from .corpus import to_subword_sentence
from .encoder import EncoderConfig, StandInEncoder
from .errors import ConfigError
from .numerics import add, derived_rng, scale
from .pooling import make_pooler
from .relations import (
    RelationCandidate,
    RelationClassifier,
    generate_candidates,
    prune_relations,
    rel_loss,
    sample_negative_pairs,
)


@dataclass
class ModelConfig:
    embed_dim: int = 64
    label_dim: int = 128
    width_dim: int = 25
    max_span_len: int = 30
    pooling: str = "bigru"
    decoder: str = "gru_lm"
    label_masking: bool = True
    alpha: float = 0.5
    dropout: float = 0.1
    encoder_layers: int = 2
    decoder_hidden: int | None = None  # defaults to embed_dim

    def validate(self):
        if self.decoder not in ("gru_lm", "crf_lm", "linear"):
            raise ConfigError(f"unknown decoder {self.decoder!r}")
        EncoderConfig(self.embed_dim, self.encoder_layers).validate()


class JointModel:
    def __init__(self, config, vocab, seed, inventory=None, encoder=None):
        config.validate()
        self.config = config
        self.vocab = vocab
        self.inventory = inventory or ner.TagInventory()
        self.automaton = ner.TagAutomaton(self.inventory)
        rng = derived_rng(seed, "init")
        d = config.embed_dim
        self.encoder = encoder or StandInEncoder(len(vocab), EncoderConfig(d, config.encoder_layers), rng)
        self.pool_word = make_pooler(config.pooling, d, rng, "pool.word")
        self.pool_entity = make_pooler(config.pooling, d, rng, "pool.entity")
        self.pool_context = make_pooler(config.pooling, d, rng, "pool.context")
        self.width = ner.WidthEmbedding(config.max_span_len, config.width_dim, rng)
        if config.decoder == "gru_lm":
            self.decoder = ner.GruLmDecoder(
                self.inventory, self.automaton, d, config.label_dim, rng,
                masking=config.label_masking, hidden_dim=config.decoder_hidden,
            )
        elif config.decoder == "linear":
            self.decoder = ner.LinearDecoder(self.inventory, self.automaton, d, rng)
        else:
            self.decoder = ner.CrfDecoder(self.inventory, self.automaton, d, rng)
        self.rel = RelationClassifier(d, config.width_dim, config.alpha, rng)

    def parameters(self):
        params = list(self.encoder.parameters())
        for pooler in (self.pool_word, self.pool_entity, self.pool_context):
            params.extend(pooler.parameters())
        params.extend(self.width.parameters())
        params.extend(self.decoder.parameters())
        params.extend(self.rel.parameters())
        return params

    # -- shared forward pieces ---------------------------------------------

    def word_embeddings(self, sentence, sid=None):
        """Encode subwords and pool them back to one vector per word."""
        sub = to_subword_sentence(sentence.words, self.vocab)
        encoded = self.encoder.encode_sentence(sub.subword_ids, sid=sid)
        return [self.pool_word(encoded.t[lo:hi]) for lo, hi in sub.word_boundaries]

    def _gold_spans(self, sentence, word_embs):
        return [
            ner.build_entity_span(e.start, e.end, e.etype, word_embs, self.pool_entity, self.width)
            for e in sentence.entities
        ]

    # -- training ------------------------------------------------------------

    def sentence_losses(self, sentence, matrix, n_rel, neg_rng, dropout_rng=None, training=True):
        """Teacher-forced (L_ner, relation logit/target pairs) for one sentence."""
        dropout_p = self.config.dropout if training else 0.0
        drop = dropout_rng if training else None
        word_embs = self.word_embeddings(sentence)
        gold_tags = ner.spans_to_tags(sentence.entities, len(sentence.words), self.inventory)
        if self.config.decoder == "crf_lm":
            loss_ner = self.decoder.nll(word_embs, gold_tags, dropout_p, drop)
        else:
            _, steps = self.decoder.decode(word_embs, gold_tags=gold_tags, dropout_p=dropout_p, dropout_rng=drop)
            loss_ner = ner.ner_loss(steps, gold_tags)

        pairs = []
        if sentence.entities:
            spans = self._gold_spans(sentence, word_embs)
            gold_pairs = {frozenset((r.head, r.tail)) for r in sentence.relations}
            scored = [(h, t, 1.0) for h, t in sorted(tuple(sorted(p)) for p in gold_pairs)]
            negatives = sample_negative_pairs(spans, gold_pairs, matrix, n_rel, neg_rng)
            scored.extend((i, j, 0.0) for i, j in negatives)
            for i, j, target in scored:
                a, b = spans[i], spans[j]
                s1, s2 = (a, b) if a.start <= b.start else (b, a)
                cand = RelationCandidate(s1=s1, s2=s2)
                x_r = self.rel.input_vector(cand, word_embs, self.pool_context)
                pairs.append((self.rel.logit(x_r, dropout_p, drop), target))
        return loss_ner, pairs

    def batch_loss(self, sentences, matrix, n_rel, neg_rng, dropout_rng=None,
                   ner_weight=1.0, rel_weight=1.0):
        """Joint loss over a batch: mean per-sentence tag loss plus mean
        binary cross-entropy over all relation candidates in the batch."""
        ner_losses = []
        all_pairs = []
        for sentence in sentences:
            loss_ner, pairs = self.sentence_losses(sentence, matrix, n_rel, neg_rng, dropout_rng)
            ner_losses.append(loss_ner)
            all_pairs.extend(pairs)
        loss_ner = scale(ner.add_n_safe(ner_losses), 1.0 / len(ner_losses))
        loss_rel = rel_loss(all_pairs)
        total = add(scale(loss_ner, ner_weight), scale(loss_rel, rel_weight))
        return total, float(loss_ner.data), float(loss_rel.data)

    # -- inference -----------------------------------------------------------

    def predict_sentence(self, sentence, matrix, filter_overlapping=True, sid=None):
        """Full pipeline on one sentence; returns (entity triples, relation
        triples) in the prediction file layout."""
        word_embs = self.word_embeddings(sentence, sid=sid)
        if self.config.decoder == "crf_lm":
            tags = self.decoder.viterbi(word_embs)
        else:
            tags, _ = self.decoder.decode(word_embs)
        spans = ner.assemble_spans(tags, word_embs, self.inventory, self.pool_entity, self.width)
        candidates = generate_candidates(spans, matrix)
        positive = []
        for cand in candidates:
            x_r = self.rel.input_vector(cand, word_embs, self.pool_context)
            cand.score = self.rel.score(x_r)
            if self.rel.is_positive(cand.score):
                positive.append(cand)
        if filter_overlapping:
            positive = prune_relations(positive, matrix)
        entities = [span.key() for span in spans]
        index_of = {key: i for i, key in enumerate(entities)}
        rels = [(index_of[c.s1.key()], index_of[c.s2.key()], c.score) for c in positive]
        return entities, rels

    # -- persistence -----------------------------------------------------------

    def state_arrays(self):
        return {p.name: p.data.copy() for p in self.parameters()}

    def load_state_arrays(self, arrays):
        for p in self.parameters():
            if p.name not in arrays:
                raise ConfigError(f"missing parameter {p.name!r} in state")
            if arrays[p.name].shape != p.data.shape:
                raise ConfigError(
                    f"parameter {p.name!r} has shape {arrays[p.name].shape}, expected {p.data.shape}"
                )
            p.data = np.array(arrays[p.name], dtype=np.float64)
