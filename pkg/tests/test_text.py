import json

import pytest

from bcm.text import (
    CLS_ID,
    CorpusError,
    Document,
    EntityCorpus,
    PAD_ID,
    SEP_ID,
    UNK_ID,
    Vocabulary,
    build_vocabulary,
    clean_text,
    load_corpus,
    load_pairs,
)


def corpus_from_tokens(entity_id, entity_type, token_lists):
    docs = tuple(Document(f"{entity_id}-d{i}", "news", " ".join(toks), tuple(toks))
                 for i, toks in enumerate(token_lists))
    return EntityCorpus(entity_id, entity_type, docs)


# ---- clean_text ----

def test_clean_basic():
    assert clean_text("Hello, World!") == ["hello", "world"]


def test_clean_stopwords():
    assert clean_text("the cat the", {"the"}) == ["cat"]


def test_clean_empty():
    assert clean_text("") == []


def test_clean_control_chars():
    assert clean_text("a\x00b\tc") == ["a", "b", "c"]


def test_clean_cjk_chars_split():
    assert clean_text("我爱nlp") == ["我", "爱", "nlp"]


def test_clean_idempotent_on_own_output():
    toks = clean_text("Some Sentence, with Punctuation!")
    assert clean_text(" ".join(toks)) == toks


# ---- vocabulary ----

def test_specials_pinned():
    v = Vocabulary(["zebra"])
    assert v.id_to_token[:4] == ["<pad>", "<unk>", "[CLS]", "[SEP]"]
    assert (PAD_ID, UNK_ID, CLS_ID, SEP_ID) == (0, 1, 2, 3)


def test_min_count_filters():
    c = corpus_from_tokens("x", "brand", [["a", "a", "a", "b"]])
    v = build_vocabulary([c], min_count=2)
    assert "a" in v and "b" not in v
    assert v.encode(["b"]) == [UNK_ID]


def test_vocabulary_deterministic():
    c = corpus_from_tokens("x", "brand", [["b", "a", "c", "a"]])
    v1 = build_vocabulary([c])
    v2 = build_vocabulary([c])
    assert v1.id_to_token == v2.id_to_token
    # freq desc then lexicographic
    assert v1.id_to_token[4:] == ["a", "b", "c"]


def test_vocabulary_size_counts_specials():
    c = corpus_from_tokens("x", "celebrity", [["a", "b", "c", "d", "e"]])
    assert len(build_vocabulary([c], min_count=1)) == 5 + 4


def test_empty_vocabulary_is_error():
    c = corpus_from_tokens("x", "brand", [["a"]])
    with pytest.raises(CorpusError, match="empty"):
        build_vocabulary([c], min_count=5)


def test_encode_decode_roundtrip():
    c = corpus_from_tokens("x", "brand", [["red", "green", "blue"]])
    v = build_vocabulary([c])
    toks = ["green", "blue", "red"]
    assert v.decode(v.encode(toks)) == toks


def test_decode_sep():
    v = Vocabulary([])
    assert v.decode([SEP_ID]) == ["[SEP]"]


def test_decode_out_of_range():
    v = Vocabulary(["a"])
    with pytest.raises(ValueError, match="out of range"):
        v.decode([99])


# ---- corpus loading ----

def write_jsonl(path, records):
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8")


def rec(eid, etype, kind, did, text):
    return {"entity_id": eid, "entity_type": etype, "source_kind": kind,
            "doc_id": did, "text": text}


def test_load_groups_by_entity(tmp_path):
    f = tmp_path / "c.jsonl"
    write_jsonl(f, [rec("X", "celebrity", "news", "d1", "one doc"),
                    rec("X", "celebrity", "news", "d2", "two doc")])
    corpora = load_corpus(f)
    assert len(corpora) == 1 and len(corpora[0].documents) == 2


def test_load_unknown_entity_type_names_line(tmp_path):
    f = tmp_path / "c.jsonl"
    write_jsonl(f, [rec("X", "robot", "news", "d1", "beep")])
    with pytest.raises(CorpusError, match=":1:"):
        load_corpus(f)


def test_load_preserves_types_and_counts(tmp_path):
    f = tmp_path / "c.jsonl"
    records = [rec(f"c{i}", "celebrity", "news", f"cd{i}", "celebrity text") for i in range(3)]
    records += [rec(f"b{i}", "brand", "news", f"bd{i}", "brand text") for i in range(2)]
    write_jsonl(f, records)
    corpora = load_corpus(f)
    types = sorted(c.entity_type for c in corpora)
    assert len(corpora) == 5 and types == ["brand"] * 2 + ["celebrity"] * 3


def test_load_orders_encyclopedia_first(tmp_path):
    f = tmp_path / "c.jsonl"
    write_jsonl(f, [rec("X", "brand", "news", "n1", "news one"),
                    rec("X", "brand", "encyclopedia", "e1", "wiki entry"),
                    rec("X", "brand", "news", "n2", "news two")])
    docs = load_corpus(f)[0].documents
    assert [d.doc_id for d in docs] == ["e1", "n1", "n2"]


def test_load_rejects_entity_with_all_empty_docs(tmp_path):
    f = tmp_path / "c.jsonl"
    write_jsonl(f, [rec("X", "brand", "news", "d1", "the of and")])
    with pytest.raises(CorpusError, match="survive cleaning"):
        load_corpus(f, stopwords={"the", "of", "and"})


def test_load_malformed_line_number(tmp_path):
    f = tmp_path / "c.jsonl"
    f.write_text(json.dumps(rec("X", "brand", "news", "d1", "ok")) + "\n{bad\n")
    with pytest.raises(CorpusError, match=":2:"):
        load_corpus(f)


def test_load_stable_order(tmp_path):
    f = tmp_path / "c.jsonl"
    write_jsonl(f, [rec("B", "brand", "news", "d1", "beta text"),
                    rec("A", "celebrity", "news", "d2", "alpha text")])
    first = [(c.entity_id, [d.doc_id for d in c.documents]) for c in load_corpus(f)]
    second = [(c.entity_id, [d.doc_id for d in c.documents]) for c in load_corpus(f)]
    assert first == second


def test_no_stopwords_in_admitted_documents(tmp_path):
    f = tmp_path / "c.jsonl"
    write_jsonl(f, [rec("X", "brand", "news", "d1", "the brand sells the shoes")])
    stops = {"the"}
    corpora = load_corpus(f, stopwords=stops)
    for doc in corpora[0].documents:
        assert not set(doc.tokens) & stops


# ---- pair labels ----

def test_load_pairs(tmp_path):
    f = tmp_path / "p.jsonl"
    f.write_text(json.dumps({"celebrity_id": "c1", "brand_id": "b1", "label": 1}) + "\n")
    pairs = load_pairs(f)
    assert pairs[0].celebrity_id == "c1" and pairs[0].label == 1


def test_load_pairs_bad_label(tmp_path):
    f = tmp_path / "p.jsonl"
    f.write_text(json.dumps({"celebrity_id": "c1", "brand_id": "b1", "label": 2}) + "\n")
    with pytest.raises(CorpusError, match="label"):
        load_pairs(f)
