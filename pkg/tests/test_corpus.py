import numpy as np
import pytest

from kpilink import corpus
from kpilink.corpus import (
    Document,
    EntityAnn,
    GeneratorConfig,
    MoneyTag,
    RelationAnn,
    Sentence,
    SubwordVocab,
    build_subword_vocab,
    entity_type_counts,
    filter_sentences,
    generate_synthetic_corpus,
    largest_remainder,
    read_annotations,
    split_corpus,
    tag_monetary_numbers,
    to_subword_sentence,
    tokenize_words,
    write_annotations,
)
from kpilink.errors import ConfigError, FormatError


# ---------------------------------------------------------------------------
# word tokenization

def test_tokenize_simple_sentence():
    assert tokenize_words("Der Umsatz stieg.") == ["Der", "Umsatz", "stieg", "."]


def test_tokenize_keeps_decimal_comma():
    assert tokenize_words("(Vj. 0,0)") == ["(", "Vj", ".", "0,0", ")"]


def test_tokenize_empty():
    assert tokenize_words("") == []


def test_tokenize_currency_and_thousands():
    assert tokenize_words("TEUR 4.826 wurden gezahlt.") == ["TEUR", "4.826", "wurden", "gezahlt", "."]
    assert tokenize_words("$100 (80€)") == ["$", "100", "(", "80", "€", ")"]


# ---------------------------------------------------------------------------
# subwords

def test_subword_whole_word_identity():
    vocab = SubwordVocab(["<unk>", "Umsatz"] + list("Umsatz") + ["##" + c for c in "msatz"])
    assert vocab.tokenize_word("Umsatz") == ["Umsatz"]


def test_subword_greedy_longest_match():
    pieces = ["Zins", "##aufwend", "##ungen"]
    chars = set()
    for word in ["Zinsaufwendungen"]:
        chars.update(word)
    vocab = SubwordVocab(pieces + sorted(chars) + ["##" + c for c in sorted(chars)])
    assert vocab.tokenize_word("Zinsaufwendungen") == ["Zins", "##aufwend", "##ungen"]


def test_subword_unknown_character():
    vocab = SubwordVocab(["a", "##a"])
    assert vocab.tokenize_word("€") == ["<unk>"]


def test_subword_round_trip_and_boundaries():
    sentences = [Sentence(words=w.split()) for w in [
        "Die Umsatzerlöse stiegen deutlich",
        "Die Zinsaufwendungen enthalten Wertberichtigungen",
        "Umsatzerlöse und Zinsaufwendungen",
    ]]
    vocab = build_subword_vocab(sentences, min_word_freq=2, min_ngram_freq=2)
    for sentence in sentences:
        sub = to_subword_sentence(sentence.words, vocab)
        # boundaries partition [0, n)
        expected_start = 0
        for (lo, hi), word in zip(sub.word_boundaries, sentence.words):
            assert lo == expected_start and hi > lo
            rebuilt = "".join(p[2:] if p.startswith("##") else p for p in sub.subwords[lo:hi])
            assert rebuilt == word
            expected_start = hi
        assert expected_start == len(sub.subwords)


def test_subword_vocab_save_load(tmp_path):
    vocab = build_subword_vocab([Sentence(words=["Umsatz", "Umsatz", "steigt"])])
    path = tmp_path / "vocab.txt"
    vocab.save(path)
    reloaded = SubwordVocab.load(path)
    assert reloaded.pieces == vocab.pieces


# ---------------------------------------------------------------------------
# monetary tagging

def test_monetary_scale_then_unit():
    s = Sentence(words=["stieg", "auf", "1,2", "Mio", "€", "."])
    tag_monetary_numbers(s)
    assert s.monetary == {2: MoneyTag(scale="Mio", unit="EUR")}


def test_monetary_teur_before_number():
    s = Sentence(words=["TEUR", "4.826"])
    tag_monetary_numbers(s)
    assert s.monetary == {1: MoneyTag(scale="Tsd", unit="EUR")}


def test_monetary_bare_year_unannotated():
    s = Sentence(words=["in", "2021", "insgesamt"])
    tag_monetary_numbers(s)
    assert s.monetary == {}


def test_monetary_dollar_million():
    s = Sentence(words=["to", "$", "1.2", "million", "in", "2020", "."])
    tag_monetary_numbers(s)
    assert s.monetary == {2: MoneyTag(scale="Mio", unit="USD")}  # 2020 is not adjacent to a unit


def test_filter_sentences():
    kept = Sentence(words=["Kosten", "von", "100", "Mio", "€"])
    dropped = Sentence(words=["Das", "Jahr", "2021", "war", "gut"])
    doc = filter_sentences(Document(doc_id="d", sentences=[kept, dropped]))
    assert doc.sentences == [kept]
    empty = filter_sentences(Document(doc_id="e", sentences=[dropped]))
    assert empty.doc_id == "e" and empty.sentences == []


# ---------------------------------------------------------------------------
# splitting

def _docs(n):
    return [Document(doc_id=f"d{i}", sentences=[Sentence(words=["w"])]) for i in range(n)]


def test_split_proportions_within_one_document():
    ratios = (0.8987, 0.0533, 0.0480)
    parts = split_corpus(_docs(500), ratios, seed=3)
    for part, ratio in zip(parts, ratios):
        assert abs(len(part) - 500 * ratio) <= 1.0
    assert sum(len(p) for p in parts) == 500


def test_split_degenerate_all_train():
    train, val, test = split_corpus(_docs(10), (1.0, 0.0, 0.0), seed=1)
    assert len(train) == 10 and not val and not test


def test_split_deterministic_and_partition():
    docs = _docs(30)
    a = split_corpus(docs, (0.6, 0.2, 0.2), seed=9)
    b = split_corpus(docs, (0.6, 0.2, 0.2), seed=9)
    assert [[d.doc_id for d in part] for part in a] == [[d.doc_id for d in part] for part in b]
    seen = [d.doc_id for part in a for d in part]
    assert sorted(seen) == sorted(d.doc_id for d in docs)


def test_split_errors():
    with pytest.raises(ConfigError):
        split_corpus(_docs(2), (0.5, 0.3, 0.2), seed=0)  # fewer docs than parts
    with pytest.raises(ConfigError):
        split_corpus(_docs(5), (0.5, 0.4), seed=0)  # does not sum to 1


def test_largest_remainder_sums():
    counts = largest_remainder(7, [0.5, 0.25, 0.25])
    assert sum(counts) == 7


# ---------------------------------------------------------------------------
# generator

def test_generator_deterministic():
    cfg = GeneratorConfig(documents=8, sentences_per_document=5)
    a = generate_synthetic_corpus(cfg, 11)
    b = generate_synthetic_corpus(cfg, 11)
    assert [[s.words for s in d.sentences] for d in a] == [[s.words for s in d.sentences] for d in b]
    c = generate_synthetic_corpus(cfg, 12)
    assert [[s.words for s in d.sentences] for d in a] != [[s.words for s in d.sentences] for d in c]


def test_generator_soundness():
    from kpilink.relations import DEFAULT_RELATION_MATRIX

    docs = generate_synthetic_corpus(GeneratorConfig(documents=30, sentences_per_document=8), 5)
    for _, _, sentence in corpus.iter_sentences(docs):
        occupied = set()
        for ent in sentence.entities:
            assert 0 <= ent.start <= ent.end < len(sentence.words)
            span_positions = set(range(ent.start, ent.end + 1))
            assert not (span_positions & occupied), "overlapping gold spans"
            occupied |= span_positions
        for rel in sentence.relations:
            t1 = sentence.entities[rel.head].etype
            t2 = sentence.entities[rel.tail].etype
            assert DEFAULT_RELATION_MATRIX.allowed(t1, t2)
        assert sentence.monetary or not sentence.entities, "entity sentence without monetary number"


def test_generator_class_frequencies_track_reference():
    docs = generate_synthetic_corpus(GeneratorConfig(documents=100, sentences_per_document=10), 2)
    counts = entity_type_counts(docs)
    total = sum(counts.values())
    ref_total = sum(corpus.REFERENCE_SUPPORT.values())
    for etype, ref in corpus.REFERENCE_SUPPORT.items():
        share = counts[etype] / total
        ref_share = ref / ref_total
        assert abs(share - ref_share) / ref_share < 0.20, (etype, share, ref_share)


def test_generator_clause_relations():
    docs = generate_synthetic_corpus(GeneratorConfig(documents=60, sentences_per_document=5), 6)
    seen_en = seen_davon = False
    for _, _, s in corpus.iter_sentences(docs):
        types = [e.etype for e in s.entities]
        if types == ["kpi", "cy", "py"]:
            seen_en = True
            pairs = {frozenset((types[r.head], types[r.tail])) for r in s.relations}
            assert pairs == {frozenset(("kpi", "cy")), frozenset(("kpi", "py"))}
        if types == ["kpi", "davon", "davon-cy", "davon-py"]:
            seen_davon = True
            pairs = {frozenset((types[r.head], types[r.tail])) for r in s.relations}
            assert pairs == {
                frozenset(("kpi", "davon")),
                frozenset(("davon", "davon-cy")),
                frozenset(("davon", "davon-py")),
            }
    assert seen_en and seen_davon


def test_generator_empty_lexicon_rejected():
    cfg = GeneratorConfig(documents=2, sentences_per_document=2)
    cfg.lexicons["kpi_de"] = ()
    with pytest.raises(ConfigError):
        generate_synthetic_corpus(cfg, 0)


# ---------------------------------------------------------------------------
# annotation files

def _sample_docs():
    s1 = Sentence(
        words=["Die", "Umsatzerlöse", "betrugen", "5,0", "Mio", "€", "."],
        entities=[EntityAnn(1, 1, "kpi"), EntityAnn(3, 3, "cy")],
        relations=[RelationAnn(0, 1)],
    )
    tag_monetary_numbers(s1)
    s2 = Sentence(words=["Kein", "Inhalt", "."])
    return [Document(doc_id="a", sentences=[s1]), Document(doc_id="b", sentences=[s2])]


def test_annotation_round_trip(tmp_path):
    docs = _sample_docs()
    path = tmp_path / "corpus.jsonl"
    write_annotations(path, docs, header={"origin": "test"})
    loaded = read_annotations(path)
    assert len(loaded) == 2
    assert loaded[0].doc_id == "a"
    assert loaded[0].sentences[0].words == docs[0].sentences[0].words
    assert loaded[0].sentences[0].entities == docs[0].sentences[0].entities
    assert loaded[0].sentences[0].relations == docs[0].sentences[0].relations
    assert loaded[0].sentences[0].monetary == docs[0].sentences[0].monetary
    # writing the loaded documents again reproduces identical bytes
    path2 = tmp_path / "again.jsonl"
    write_annotations(path2, loaded, header={"origin": "test"})
    assert path.read_bytes() == path2.read_bytes()


def test_annotation_overlap_rejected_with_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text(
        '{"doc_id": "x", "words": ["a", "b"], "entities": '
        '[{"start": 0, "end": 1, "type": "kpi"}, {"start": 1, "end": 1, "type": "cy"}], "relations": []}\n',
        encoding="utf-8",
    )
    with pytest.raises(FormatError) as err:
        read_annotations(path)
    assert err.value.line == 1
    assert "overlap" in str(err.value)


def test_annotation_dangling_relation_rejected(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text(
        '{"doc_id": "x", "words": ["a"], "entities": [{"start": 0, "end": 0, "type": "kpi"}], '
        '"relations": [{"head": 0, "tail": 3}]}\n',
        encoding="utf-8",
    )
    with pytest.raises(FormatError) as err:
        read_annotations(path)
    assert "3" in str(err.value) and err.value.line == 1


def test_annotation_forbidden_pair_rejected(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text(
        '{"doc_id": "x", "words": ["a", "b"], "entities": '
        '[{"start": 0, "end": 0, "type": "cy"}, {"start": 1, "end": 1, "type": "py"}], '
        '"relations": [{"head": 0, "tail": 1}]}\n',
        encoding="utf-8",
    )
    with pytest.raises(FormatError):
        read_annotations(path)
