"""Corpus data model, tokenization, monetary tagging, and synthetic data.

Annotation files are UTF-8 JSON lines, one sentence per line:

    {"doc_id": "...", "words": [...],
     "entities": [{"start": 0, "end": 2, "type": "kpi"}, ...],
     "relations": [{"head": 0, "tail": 1}, ...],
     "monetary": [{"index": 7, "scale": "Mio", "unit": "EUR"}, ...]}

``end`` is inclusive, relation ``head``/``tail`` index into ``entities`` and
are unordered. A file may start with a ``{"_header": ...}`` record carrying
the generating configuration; readers skip it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import ConfigError, ContractError, DataError, FormatError
from .ioutil import atomic_open
from .numerics import derived_rng

ENTITY_TYPES = ("kpi", "cy", "py", "increase", "decrease", "davon", "davon-cy", "davon-py")
NONE_TYPE = "none"

# Support counts of each entity class in the reference annotation effort;
# the synthetic generator reproduces these proportions.
REFERENCE_SUPPORT = {
    "kpi": 16849,
    "cy": 11498,
    "py": 5057,
    "increase": 356,
    "decrease": 230,
    "davon": 8827,
    "davon-cy": 8443,
    "davon-py": 4382,
}

SCALE_FACTORS = {"Tsd": 1e3, "Mio": 1e6, "Mrd": 1e9}

# Surface forms that signal a scale or currency next to a number. TEUR means
# "thousand euro", so it contributes both a scale and a unit.
SCALE_WORDS = {
    "Tsd": "Tsd", "Tsd.": "Tsd", "TEUR": "Tsd", "tausend": "Tsd", "thousand": "Tsd",
    "Mio": "Mio", "Mio.": "Mio", "Million": "Mio", "Millionen": "Mio", "million": "Mio",
    "Mrd": "Mrd", "Mrd.": "Mrd", "Milliarde": "Mrd", "Milliarden": "Mrd", "billion": "Mrd",
}
UNIT_WORDS = {
    "€": "EUR", "EUR": "EUR", "Euro": "EUR", "TEUR": "EUR",
    "$": "USD", "USD": "USD", "Dollar": "USD",
}


@dataclass(frozen=True)
class EntityAnn:
    start: int
    end: int  # inclusive
    etype: str


@dataclass(frozen=True)
class RelationAnn:
    head: int
    tail: int


@dataclass(frozen=True)
class MoneyTag:
    scale: str | None  # one of SCALE_FACTORS keys
    unit: str | None   # "EUR" or "USD"


@dataclass
class Sentence:
    words: list[str]
    entities: list[EntityAnn] = field(default_factory=list)
    relations: list[RelationAnn] = field(default_factory=list)
    monetary: dict[int, MoneyTag] = field(default_factory=dict)


@dataclass
class Document:
    doc_id: str
    sentences: list[Sentence]


def iter_sentences(documents):
    """Yield (doc_id, index-within-document, sentence)."""
    for doc in documents:
        for idx, sentence in enumerate(doc.sentences):
            yield doc.doc_id, idx, sentence


def sentence_id(doc_id, index):
    return f"{doc_id}#{index}"


# ---------------------------------------------------------------------------
# Word tokenization

_EDGE_PUNCT = set(".,;:!?()[]{}\"'„“”‚’«»—–-…%&/\\€$§*+=<>|~^")


def tokenize_words(text):
    """Whitespace split plus peeling punctuation off token edges.

    Interior punctuation survives, which keeps decimal commas ("0,0") and
    thousands points ("4.826") inside one token while "(Vj." still splits
    into "(", "Vj", ".".
    """
    tokens = []
    for chunk in text.split():
        left = []
        while chunk and chunk[0] in _EDGE_PUNCT:
            left.append(chunk[0])
            chunk = chunk[1:]
        right = []
        while chunk and chunk[-1] in _EDGE_PUNCT:
            right.append(chunk[-1])
            chunk = chunk[:-1]
        tokens.extend(left)
        if chunk:
            tokens.append(chunk)
        tokens.extend(reversed(right))
    return tokens


# ---------------------------------------------------------------------------
# Subword vocabulary and tokenization

UNK_PIECE = "<unk>"
CONTINUATION = "##"


class SubwordVocab:
    """Greedy longest-match subword segmenter over a fixed piece set.

    Pieces starting a word are stored verbatim; continuation pieces carry the
    ``##`` marker. Characters outside the vocabulary map to ``<unk>``.
    """

    def __init__(self, pieces):
        self.pieces = list(pieces)
        if UNK_PIECE not in self.pieces:
            self.pieces.insert(0, UNK_PIECE)
        self.piece_to_id = {p: i for i, p in enumerate(self.pieces)}
        if len(self.piece_to_id) != len(self.pieces):
            raise ConfigError("duplicate pieces in subword vocabulary")
        self.unk_id = self.piece_to_id[UNK_PIECE]
        self._max_len = max((len(p) for p in self.pieces), default=1)

    def __len__(self):
        return len(self.pieces)

    def tokenize_word(self, word):
        """Greedy longest-match split of one word into pieces."""
        pieces = []
        start = 0
        n = len(word)
        while start < n:
            best = None
            end = min(n, start + self._max_len + 2)
            while end > start:
                candidate = word[start:end]
                if start > 0:
                    candidate = CONTINUATION + candidate
                if candidate in self.piece_to_id:
                    best = candidate
                    break
                end -= 1
            if best is None:
                pieces.append(UNK_PIECE)
                start += 1
            else:
                pieces.append(best)
                start = end
        return pieces

    def ids(self, pieces):
        return [self.piece_to_id.get(p, self.unk_id) for p in pieces]

    def save(self, path):
        with atomic_open(path, "w") as fh:
            for piece in self.pieces:
                fh.write(piece + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            pieces = [line.rstrip("\n") for line in fh if line.rstrip("\n")]
        return cls(pieces)


def tokenize_subwords(word, vocab):
    return vocab.tokenize_word(word)


def build_subword_vocab(sentences, min_word_freq=2, ngram_lengths=(2, 3, 4), min_ngram_freq=25):
    """Vocabulary from training sentences: characters, frequent words, and
    frequent character n-grams (so rare words split into a few pieces rather
    than single characters)."""
    word_counts = {}
    for sentence in sentences:
        for word in sentence.words:
            word_counts[word] = word_counts.get(word, 0) + 1
    pieces = set()
    ngram_counts = {}
    for word, count in word_counts.items():
        for pos, ch in enumerate(word):
            pieces.add(ch if pos == 0 else CONTINUATION + ch)
        if count >= min_word_freq:
            pieces.add(word)
        for n in ngram_lengths:
            for pos in range(0, max(0, len(word) - n + 1)):
                gram = word[pos:pos + n]
                key = gram if pos == 0 else CONTINUATION + gram
                ngram_counts[key] = ngram_counts.get(key, 0) + count
    for key, count in ngram_counts.items():
        if count >= min_ngram_freq:
            pieces.add(key)
    return SubwordVocab([UNK_PIECE] + sorted(pieces))


@dataclass
class SubwordSentence:
    subwords: list[str]
    word_boundaries: list[tuple[int, int]]  # half-open [start, end) per word
    subword_ids: list[int]


def to_subword_sentence(words, vocab):
    subwords = []
    boundaries = []
    for word in words:
        pieces = vocab.tokenize_word(word)
        boundaries.append((len(subwords), len(subwords) + len(pieces)))
        subwords.extend(pieces)
    return SubwordSentence(subwords=subwords, word_boundaries=boundaries, subword_ids=vocab.ids(subwords))


# ---------------------------------------------------------------------------
# Monetary numbers

def is_numeric_token(token):
    """German ("1,2", "4.826", "1.234,56") or plain ("100", "1.2") numbers."""
    if not token or not token[0].isdigit() or not token[-1].isdigit():
        return False
    seen_comma = False
    for ch in token:
        if ch.isdigit():
            continue
        if ch == "," and not seen_comma:
            seen_comma = True
            continue
        if ch == ".":
            continue
        return False
    return True


def _neighbor_hits(words, index, step):
    """Scale/unit words at index+step, chaining one further if the first hits."""
    hits = []
    j = index + step
    if 0 <= j < len(words) and (words[j] in SCALE_WORDS or words[j] in UNIT_WORDS):
        hits.append(words[j])
        j += step
        if 0 <= j < len(words) and (words[j] in SCALE_WORDS or words[j] in UNIT_WORDS):
            hits.append(words[j])
    return hits


def tag_monetary_numbers(sentence):
    """Attach scale/unit tags to numeric tokens based on adjacent words.

    A number is monetary when a scale word (Mio, TEUR, ...) or a currency
    (€, $) sits directly next to it; looking one token further only continues
    an existing match, so a bare year ("2021") never qualifies.
    """
    tags = {}
    words = sentence.words
    for i, word in enumerate(words):
        if not is_numeric_token(word):
            continue
        scale = None
        unit = None
        for hit in _neighbor_hits(words, i, +1) + _neighbor_hits(words, i, -1):
            if scale is None and hit in SCALE_WORDS:
                scale = SCALE_WORDS[hit]
            if unit is None and hit in UNIT_WORDS:
                unit = UNIT_WORDS[hit]
        if scale is not None or unit is not None:
            tags[i] = MoneyTag(scale=scale, unit=unit)
    sentence.monetary = tags
    return sentence


def filter_sentences(document):
    """Keep only sentences that contain at least one monetary number."""
    kept = []
    for sentence in document.sentences:
        if not sentence.monetary:
            tag_monetary_numbers(sentence)
        if sentence.monetary:
            kept.append(sentence)
    return Document(doc_id=document.doc_id, sentences=kept)


# ---------------------------------------------------------------------------
# Splitting

def largest_remainder(total, weights):
    """Integer allocation of ``total`` proportional to ``weights``; sums exactly."""
    weights = [max(0.0, float(w)) for w in weights]
    mass = sum(weights)
    if mass <= 0:
        raise ConfigError("weights must have positive sum")
    raw = [total * w / mass for w in weights]
    counts = [int(r) for r in raw]
    short = total - sum(counts)
    remainders = sorted(range(len(raw)), key=lambda i: (raw[i] - counts[i], -i), reverse=True)
    for i in remainders[:short]:
        counts[i] += 1
    return counts


def split_corpus(documents, ratios, seed):
    """Document-level split into len(ratios) parts, deterministic in seed."""
    ratios = [float(r) for r in ratios]
    if any(r < 0 for r in ratios):
        raise ConfigError("split ratios must be non-negative")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must sum to 1, got {sum(ratios)}")
    positive = sum(1 for r in ratios if r > 0)
    if len(documents) < positive:
        raise ConfigError(f"cannot split {len(documents)} documents into {positive} non-empty parts")
    order = derived_rng(seed, "split").permutation(len(documents))
    counts = largest_remainder(len(documents), ratios)
    parts = []
    offset = 0
    for count in counts:
        chunk = [documents[i] for i in order[offset:offset + count]]
        parts.append(chunk)
        offset += count
    return tuple(parts)


# ---------------------------------------------------------------------------
# Annotation file I/O

def _validate_sentence(words, entities, relations, path=None, line=None):
    m = len(words)
    occupied = [False] * m
    for k, ent in enumerate(entities):
        if ent.etype not in ENTITY_TYPES:
            raise FormatError(f"unknown entity type {ent.etype!r}", path=path, line=line, field=f"entities[{k}].type")
        if not (0 <= ent.start <= ent.end < m):
            raise FormatError(
                f"span ({ent.start}, {ent.end}) out of bounds for {m} words",
                path=path, line=line, field=f"entities[{k}]",
            )
        for pos in range(ent.start, ent.end + 1):
            if occupied[pos]:
                raise FormatError("overlapping entity spans", path=path, line=line, field=f"entities[{k}]")
            occupied[pos] = True
    from .relations import DEFAULT_RELATION_MATRIX  # local import avoids a cycle

    for k, rel in enumerate(relations):
        for side, idx in (("head", rel.head), ("tail", rel.tail)):
            if not (0 <= idx < len(entities)):
                raise FormatError(
                    f"relation {side} index {idx} outside entity list of length {len(entities)}",
                    path=path, line=line, field=f"relations[{k}].{side}",
                )
        if rel.head == rel.tail:
            raise FormatError("relation links an entity to itself", path=path, line=line, field=f"relations[{k}]")
        t1 = entities[rel.head].etype
        t2 = entities[rel.tail].etype
        if not DEFAULT_RELATION_MATRIX.allowed(t1, t2):
            raise FormatError(f"relation pair ({t1}, {t2}) is not allowed", path=path, line=line, field=f"relations[{k}]")


def write_annotations(path, documents, header=None):
    with atomic_open(path, "w") as fh:
        if header is not None:
            fh.write(json.dumps({"_header": dict(header, format="annotations_v1")}, ensure_ascii=False) + "\n")
        for doc in documents:
            for sentence in doc.sentences:
                record = {
                    "doc_id": doc.doc_id,
                    "words": sentence.words,
                    "entities": [{"start": e.start, "end": e.end, "type": e.etype} for e in sentence.entities],
                    "relations": [{"head": r.head, "tail": r.tail} for r in sentence.relations],
                }
                if sentence.monetary:
                    record["monetary"] = [
                        {"index": i, "scale": t.scale, "unit": t.unit}
                        for i, t in sorted(sentence.monetary.items())
                    ]
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def read_annotations(path):
    documents = []
    current = None
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
                doc_id = record["doc_id"]
                words = list(record["words"])
                entities = [EntityAnn(int(e["start"]), int(e["end"]), str(e["type"])) for e in record.get("entities", [])]
                relations = [RelationAnn(int(r["head"]), int(r["tail"])) for r in record.get("relations", [])]
            except (KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"malformed record: {exc}", path=path, line=line_no) from exc
            _validate_sentence(words, entities, relations, path=path, line=line_no)
            monetary = {}
            for entry in record.get("monetary", []):
                monetary[int(entry["index"])] = MoneyTag(scale=entry.get("scale"), unit=entry.get("unit"))
            sentence = Sentence(words=words, entities=entities, relations=relations, monetary=monetary)
            if current is None or current.doc_id != doc_id:
                current = Document(doc_id=doc_id, sentences=[])
                documents.append(current)
            current.sentences.append(sentence)
    return documents


# ---------------------------------------------------------------------------
# Synthetic corpus generation

# Template part kinds: ("w", word) literal, ("alt", (variant, ...)) where each
# variant is a word tuple, ("lex", lexicon key, entity type), ("val", value
# kind, entity type or None). Entity slots are numbered in part order.

_T = {
    "en_clause": {
        "parts": (
            ("w", "In"), ("val", "year", None), ("w", "the"), ("lex", "kpi_en", "kpi"),
            ("alt", (("increased",), ("decreased",), ("amounted",))), ("w", "to"), ("w", "$"),
            ("val", "amount_en", "cy"), ("w", "million"), ("w", "("), ("w", "prior"), ("w", "year"),
            ("w", ":"), ("w", "$"), ("val", "amount_en", "py"), ("w", "million"), ("w", ")"), ("w", "."),
        ),
        "relations": ((0, 1), (0, 2)),
    },
    "en_two_clause": {
        "parts": (
            ("w", "In"), ("val", "year", None), ("w", "the"), ("lex", "kpi_en", "kpi"),
            ("alt", (("increased",), ("decreased",))), ("w", "to"), ("w", "$"),
            ("val", "amount_en", "cy"), ("w", "million"), ("w", "("), ("w", "prior"), ("w", "year"),
            ("w", ":"), ("w", "$"), ("val", "amount_en", "py"), ("w", "million"), ("w", ")"),
            ("w", "while"), ("w", "the"), ("lex", "kpi_en", "kpi"),
            ("alt", (("increased",), ("decreased",))), ("w", "to"), ("w", "$"),
            ("val", "amount_en", "cy"), ("w", "million"), ("w", "("), ("w", "prior"), ("w", "year"),
            ("w", ":"), ("w", "$"), ("val", "amount_en", "py"), ("w", "million"), ("w", ")"), ("w", "."),
        ),
        "relations": ((0, 1), (0, 2), (3, 4), (3, 5)),
    },
    "de_simple": {
        "parts": (
            ("w", "Die"), ("lex", "kpi_de", "kpi"),
            ("alt", (("beliefen", "sich", "auf"), ("betrugen",), ("lagen", "bei"))),
            ("val", "amount_de", "cy"), ("w", "Mio"), ("w", "€"), ("w", "."),
        ),
        "relations": ((0, 1),),
    },
    "de_thereof": {
        "parts": (
            ("w", "Die"), ("lex", "kpi_de", "kpi"), ("w", "enthalten"), ("lex", "davon_de", "davon"),
            ("w", "in"), ("w", "Höhe"), ("w", "von"), ("val", "amount_de", "davon-cy"),
            ("w", "Mio"), ("w", "€"), ("w", "("), ("w", "Vj"), ("w", "."),
            ("val", "amount_de", "davon-py"), ("w", "Mio"), ("w", "€"), ("w", ")"), ("w", "."),
        ),
        "relations": ((0, 1), (1, 2), (1, 3)),
    },
    "de_thereof_short": {
        "parts": (
            ("w", "In"), ("w", "den"), ("lex", "kpi_de", "kpi"), ("w", "sind"), ("w", "TEUR"),
            ("val", "amount_teur", "davon-cy"), ("w", "für"), ("lex", "davon_de", "davon"),
            ("w", "enthalten"), ("w", "."),
        ),
        "relations": ((0, 2), (2, 1)),
    },
    "de_increase": {
        "parts": (
            ("w", "Der"), ("lex", "kpi_de", "kpi"), ("w", "stieg"), ("w", "um"),
            ("val", "amount_de", "increase"), ("w", "Mio"), ("w", "€"), ("w", "auf"),
            ("val", "amount_de", "cy"), ("w", "Mio"), ("w", "€"), ("w", "("), ("w", "Vj"), ("w", "."),
            ("val", "amount_de", "py"), ("w", "Mio"), ("w", "€"), ("w", ")"), ("w", "."),
        ),
        "relations": ((0, 1), (0, 2), (0, 3)),
    },
    "de_decrease": {
        "parts": (
            ("w", "Der"), ("lex", "kpi_de", "kpi"), ("w", "sank"), ("w", "um"),
            ("val", "amount_de", "decrease"), ("w", "Mio"), ("w", "€"), ("w", "auf"),
            ("val", "amount_de", "cy"), ("w", "Mio"), ("w", "€"), ("w", "("), ("w", "Vj"), ("w", "."),
            ("val", "amount_de", "py"), ("w", "Mio"), ("w", "€"), ("w", ")"), ("w", "."),
        ),
        "relations": ((0, 1), (0, 2), (0, 3)),
    },
    "noise": {
        "parts": (
            ("w", "Im"), ("w", "Geschäftsjahr"), ("w", "wurden"), ("w", "insgesamt"),
            ("val", "amount_de", None), ("w", "Mio"), ("w", "€"),
            ("alt", (("investiert",), ("aufgewendet",), ("ausgezahlt",))), ("w", "."),
        ),
        "relations": (),
    },
}

# Weights chosen so the generated entity class distribution tracks
# REFERENCE_SUPPORT; the two-clause template counts double for its classes.
DEFAULT_TEMPLATE_WEIGHTS = {
    "en_clause": 0.171,
    "en_two_clause": 0.021,
    "de_simple": 0.308,
    "de_thereof": 0.209,
    "de_thereof_short": 0.212,
    "de_increase": 0.017,
    "de_decrease": 0.011,
    "noise": 0.051,
}

DEFAULT_LEXICONS = {
    "kpi_en": (
        "revenue", "total costs", "net operating profit", "interest expenses", "net sales",
        "operating income", "research and development expenses", "cost of goods sold",
        "gross profit", "administrative expenses",
    ),
    "kpi_de": (
        "Umsatzerlöse", "sonstigen betrieblichen Erträge", "Materialaufwendungen",
        "Personalaufwendungen", "Zinsaufwendungen", "Zinserträge", "Rückstellungen",
        "Verbindlichkeiten gegenüber Kreditinstituten", "Forderungen aus Lieferungen und Leistungen",
        "immateriellen Vermögensgegenstände", "Sachanlagen", "Vorräte", "Abschreibungen",
        "sonstigen betrieblichen Aufwendungen", "liquiden Mittel", "Umsatzkosten",
    ),
    "davon_de": (
        "Wertberichtigungen", "Entgelte für Factoring-Geschäfte",
        "Aufzinsungen von langfristigen Rückstellungen", "Aufwendungen für Altersversorgung",
        "Erträge aus der Auflösung von Rückstellungen", "Abschreibungen auf Finanzanlagen",
        "Zuführungen zu Pensionsrückstellungen", "Fremdwährungsverluste",
    ),
}


@dataclass
class GeneratorConfig:
    documents: int = 200
    sentences_per_document: int = 10
    template_weights: dict = field(default_factory=lambda: dict(DEFAULT_TEMPLATE_WEIGHTS))
    lexicons: dict = field(default_factory=lambda: {k: tuple(v) for k, v in DEFAULT_LEXICONS.items()})


def _draw_value(kind, rng):
    if kind == "year":
        return str(2015 + int(rng.integers(0, 10)))
    if kind == "amount_en":
        whole = int(rng.integers(1, 500))
        if rng.random() < 0.5:
            return f"{whole}.{int(rng.integers(0, 10))}"
        return str(whole)
    if kind == "amount_de":
        whole = int(rng.integers(0, 200))
        return f"{whole},{int(rng.integers(0, 10))}"
    if kind == "amount_teur":
        if rng.random() < 0.6:
            return f"{int(rng.integers(1, 10))}.{int(rng.integers(0, 1000)):03d}"
        return str(int(rng.integers(10, 1000)))
    raise ConfigError(f"unknown value kind {kind!r}")


def _instantiate(template_name, template, lexicons, rng):
    words = []
    entities = []
    for part in template["parts"]:
        kind = part[0]
        if kind == "w":
            words.append(part[1])
        elif kind == "alt":
            choice = part[1][int(rng.integers(0, len(part[1])))]
            words.extend(choice)
        elif kind == "lex":
            _, lex_key, etype = part
            options = lexicons.get(lex_key) or ()
            if not options:
                raise ConfigError(f"lexicon {lex_key!r} required by template {template_name!r} is empty")
            phrase = options[int(rng.integers(0, len(options)))]
            tokens = phrase.split()
            start = len(words)
            words.extend(tokens)
            entities.append(EntityAnn(start, len(words) - 1, etype))
        elif kind == "val":
            _, value_kind, etype = part
            token = _draw_value(value_kind, rng)
            position = len(words)
            words.append(token)
            if etype is not None:
                entities.append(EntityAnn(position, position, etype))
        else:
            raise ConfigError(f"unknown template part kind {kind!r}")
    relations = [RelationAnn(h, t) for h, t in template["relations"]]
    sentence = Sentence(words=words, entities=entities, relations=relations)
    tag_monetary_numbers(sentence)
    return sentence


def generate_synthetic_corpus(config, seed):
    """Deterministic template corpus with exact gold entities and relations.

    Template counts are allocated by largest remainder over the configured
    weights (so class frequencies are stable even for small corpora), the
    slot order is shuffled once at corpus level, and lexical choices come
    from per-document streams keyed by (seed, doc index).
    """
    names = sorted(config.template_weights)
    for name in names:
        if name not in _T:
            raise ConfigError(f"unknown template {name!r}")
    # Fail fast on lexicons any selected template needs.
    for name in names:
        if config.template_weights[name] <= 0:
            continue
        for part in _T[name]["parts"]:
            if part[0] == "lex" and not config.lexicons.get(part[1]):
                raise ConfigError(f"lexicon {part[1]!r} required by template {name!r} is empty")
    total = config.documents * config.sentences_per_document
    counts = largest_remainder(total, [config.template_weights[n] for n in names])
    slots = []
    for name, count in zip(names, counts):
        slots.extend([name] * count)
    order = derived_rng(seed, "templates").permutation(total)
    slots = [slots[i] for i in order]

    documents = []
    spd = config.sentences_per_document
    for d in range(config.documents):
        rng = derived_rng(seed, "doc", d)
        sentences = [
            _instantiate(name, _T[name], config.lexicons, rng)
            for name in slots[d * spd:(d + 1) * spd]
        ]
        documents.append(Document(doc_id=f"doc{d:05d}", sentences=sentences))
    return documents


def entity_type_counts(documents):
    counts = {t: 0 for t in ENTITY_TYPES}
    for _, _, sentence in iter_sentences(documents):
        for ent in sentence.entities:
            counts[ent.etype] += 1
    return counts
