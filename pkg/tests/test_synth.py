import json

import pytest

from adextract.corpus import EntityType, RelationType, load_corpus, parse_ann
from adextract.rules import Mechanism, RuleConfig, run_rules
from adextract.evaluation import score_relations
from adextract.synth import SynthConfig, SynthError, build_lexicons, corpus_checksum, generate, perturb


def test_same_seed_same_corpus():
    a, b = generate(SynthConfig(seed=9, n_docs=10)), generate(SynthConfig(seed=9, n_docs=10))
    assert a.manifest["checksum"] == b.manifest["checksum"]
    assert generate(SynthConfig(seed=10, n_docs=10)).manifest["checksum"] != a.manifest["checksum"]


def test_documents_are_valid_annotations(small_synth):
    for d in small_synth.documents:
        ents, rels = parse_ann(d.to_ann(), d.text, strict=True)
        assert ents == d.entities and rels == d.relations


def test_sentence_boundaries_are_recovered():
    corpus = generate(SynthConfig(seed=5, n_docs=30, p_cross_sentence=0.0))
    for d in corpus.documents:
        assert d.text.count(".") == len(d.sentences)
        sent = d.entity_sentences
        for r in d.relations.values():
            assert sent[r.attr] == sent[r.drug]


def test_cross_sentence_relations_exist():
    corpus = generate(SynthConfig(seed=5, n_docs=40, p_cross_sentence=1.0))
    cross = sum(
        d.entity_sentences[r.attr] != d.entity_sentences[r.drug]
        for d in corpus.documents for r in d.relations.values()
    )
    assert cross > 0


def test_drug_order_controls():
    corpus = generate(SynthConfig(seed=6, n_docs=40, p_drug_first=0.0, p_multi_drug_sentence=0.0,
                                  p_cross_sentence=0.0))
    for d in corpus.documents:
        for r in d.relations.values():
            assert d.entities[r.drug].start > d.entities[r.attr].start
    right = run_rules(corpus.documents, RuleConfig(Mechanism.RIGHT_ONLY))
    rep = score_relations(corpus.gold, [p for ps in right.values() for p in ps])
    assert rep.micro.f == 1.0


def test_weights_select_types():
    corpus = generate(SynthConfig(seed=1, n_docs=10, weights={"ADE-Drug": 1.0, "Strength-Drug": 0.0,
                                                              "Duration-Drug": 0, "Route-Drug": 0, "Form-Drug": 0,
                                                              "Dosage-Drug": 0, "Reason-Drug": 0,
                                                              "Frequency-Drug": 0}))
    assert {g[3] for g in corpus.gold} == {RelationType.ADE_DRUG}
    assert {e.etype for d in corpus.documents for e in d.entities.values()} == {EntityType.DRUG, EntityType.ADE}


@pytest.mark.parametrize("kwargs", [
    {"p_cross_sentence": 1.5},
    {"p_drug_first": -0.1},
    {"weights": {rt.value: 0.0 for rt in RelationType}},
    {"sentences_per_doc": (3, 2)},
    {"n_docs": -1},
    {"max_attrs_per_drug": 0},
])
def test_config_validation(kwargs):
    with pytest.raises(SynthError):
        SynthConfig(**kwargs)


def test_lexicons():
    import numpy as np

    lex = build_lexicons(np.random.default_rng(0), {et.value: 5 for et in EntityType})
    assert all(len(v) == 5 for v in lex.values())
    with pytest.raises(SynthError):
        build_lexicons(np.random.default_rng(0), {et.value: 0 for et in EntityType})


def test_perturb(deterministic_synth):
    assert perturb(deterministic_synth, 0.0) is deterministic_synth
    noisy = perturb(deterministic_synth, 0.5, seed=2)
    assert noisy.gold == deterministic_synth.gold
    assert noisy.manifest["checksum"] == corpus_checksum(noisy.documents) != deterministic_synth.manifest["checksum"]
    for d in noisy.documents:
        assert parse_ann(d.to_ann(), d.text, strict=True) == (d.entities, d.relations)
    with pytest.raises(SynthError):
        perturb(deterministic_synth, 2.0)


def test_write(tmp_path, small_synth):
    small_synth.write(tmp_path)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["checksum"] == small_synth.manifest["checksum"]
    assert corpus_checksum(load_corpus(tmp_path, strict=True)) == manifest["checksum"]
