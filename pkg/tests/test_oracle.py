import pytest
from hypothesis import given, strategies as st

from radaug.corpus import Corpus, Region, Report
from radaug.oracle import (ConstantSource, DuplicateKey, MissingAnswer, ReferenceSource, answer,
                           load_answers, parse_oracle, reference_answer)
from radaug.corpus import MalformedLine
from radaug.triplets import Lexicon, Triplet

Q = Triplet("nodules", "lungs")


def test_reference_match():
    assert reference_answer(Q, [Triplet("cyst", "kidney"), Triplet("nodules", "lungs", True)]) is True


def test_reference_default_false():
    assert reference_answer(Q, []) is False


def test_reference_passthrough_false():
    assert reference_answer(Q, [Triplet("nodules", "lungs", False)]) is False


@given(st.permutations([Triplet("nodules", "lungs", True), Triplet("cyst", "kidney", False),
                        Triplet("", "liver", True)]))
def test_permutation_invariance(refs):
    assert reference_answer(Q, refs) is True
    assert reference_answer(Triplet("cyst", "kidney"), refs) is False


def test_load_answers(write_jsonl):
    src = load_answers(write_jsonl("a.jsonl", [{"id": "r1", "entity": "Nodules", "position": "lungs",
                                                "answer": True}]))
    assert answer(src, "r1", Q) is True
    with pytest.raises(MissingAnswer):
        answer(src, "r2", Q)


def test_duplicate_key(write_jsonl):
    rec = {"id": "r1", "entity": "nodules", "position": "lungs", "answer": True}
    with pytest.raises(DuplicateKey):
        load_answers(write_jsonl("a.jsonl", [rec, {**rec, "answer": False}]))


def test_non_boolean_answer(write_jsonl):
    with pytest.raises(MalformedLine):
        load_answers(write_jsonl("a.jsonl", [{"id": "r1", "entity": "x", "position": "", "answer": "True"}]))


def test_constant():
    assert answer(ConstantSource(False), "any", Q) is False
    assert answer(parse_oracle("const:true"), "any", Q) is True


def test_reference_source_liver():
    lexicon = Lexicon((("low-density lesion", "low-density lesion"),), (("liver", "liver"),))
    corpus = Corpus((Report("r1", {Region.ABDOMEN:
                                   "A nodular low-density lesion is observed in the right lobe of the liver."}),))
    src = ReferenceSource.from_corpus(corpus, lexicon)
    assert answer(src, "r1", Triplet("low-density lesion", "liver")) is True
    assert answer(src, "r1", Triplet("cyst", "liver")) is False


def test_perfect_accuracy_on_own_references(lexicon, cmap):
    text = "Nodules are seen in the lungs. No pleural effusion. A cyst is seen in the kidney."
    corpus = Corpus((Report("r", {Region.CHEST: text}),))
    src = ReferenceSource.from_corpus(corpus, lexicon, cmap)
    refs = src.references["r"]
    assert refs and all(answer(src, "r", Triplet(t.entity, t.position)) == t.exist for t in refs)


def test_bad_selector():
    with pytest.raises(ValueError):
        parse_oracle("model:phi3")
