import pytest

from adextract.corpus import Document, Entity, EntityType, Relation, RelationType, Span
from adextract.synth import SynthConfig, generate

# filled by test_acceptance.py, printed once at the end of the session
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
    if 10 not in ACCEPTANCE_LINES:
        terminalreporter.write_line(
            "[SKIP] criterion 10: licensed n2c2 corpus not configured "
            "(set ADEXTRACT_N2C2_TRAIN and ADEXTRACT_N2C2_TEST)"
        )


def make_doc(text, entities, relations=(), doc_id="d1"):
    """Build a Document from ``(id, type, surface_or_offsets)`` triples.

    A string locates the first occurrence of that surface in ``text``; a
    ``(start, end)`` tuple is used as is.
    """
    ents = {}
    for eid, etype, where in entities:
        if isinstance(where, str):
            s = text.index(where)
            e = s + len(where)
        else:
            s, e = where
        ents[eid] = Entity(eid, EntityType(etype), (Span(s, e),), text[s:e])
    rels = {}
    for i, (rtype, attr, drug) in enumerate(relations, start=1):
        rels[f"R{i}"] = Relation(f"R{i}", RelationType(rtype), attr, drug)
    return Document(doc_id, text, ents, rels)


@pytest.fixture
def heparin_doc():
    text = "Patient was started on a heparin gtt with coumadin overlap."
    return make_doc(
        text,
        [("T1", "Drug", "heparin"), ("T2", "Route", "gtt"), ("T3", "Drug", "coumadin")],
        [("Route-Drug", "T2", "T1")],
    )


@pytest.fixture(scope="session")
def small_synth():
    return generate(SynthConfig(seed=3, n_docs=12))


@pytest.fixture(scope="session")
def deterministic_synth():
    return generate(SynthConfig(seed=1, n_docs=200, p_drug_first=1.0, p_multi_drug_sentence=0.0, p_cross_sentence=0.0))
