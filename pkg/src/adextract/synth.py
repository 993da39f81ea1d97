"""Seeded generator of synthetic medication notes with exact gold annotations.

Every sentence opens with a capitalized filler word and closes with a period,
so the sentence splitter recovers the intended sentences.  Entity strings
are drawn from per-type lexicons of invented words.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Document, Entity, EntityType, Relation, RelationType, Span, write_corpus

_DRUG_LAST_TYPES = (RelationType.REASON_DRUG, RelationType.ADE_DRUG, RelationType.DURATION_DRUG)

DEFAULT_P_DRUG_FIRST = {rt.value: (0.0 if rt in _DRUG_LAST_TYPES else 1.0) for rt in RelationType}

_ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "dr", "pl", "tr", "st"]
_VOWELS = ["a", "e", "i", "o", "u", "ai", "ou"]
_CODAS = ["", "", "n", "l", "r", "x", "s", "m"]

_OPENERS = ["Started", "Given", "Continue", "Resume", "Patient received", "Discharged on", "She takes", "He takes"]
_FOLLOW_UPS = ["Continue", "Maintain", "Keep"]

# connector words placed between drug and attribute, by relation type
_AFTER = {
    RelationType.DURATION_DRUG: "for",
    RelationType.REASON_DRUG: "for",
    RelationType.ADE_DRUG: "causing",
}
_BEFORE = {
    RelationType.DURATION_DRUG: "of",
    RelationType.REASON_DRUG: "treated with",
    RelationType.ADE_DRUG: "attributed to",
}

# attribute phrases that start with a number
_NUMERIC = {EntityType.STRENGTH, EntityType.DOSAGE, EntityType.DURATION}
_PHRASE_WORDS = {
    EntityType.DRUG: (1, 1),
    EntityType.STRENGTH: (1, 1),
    EntityType.DURATION: (1, 1),
    EntityType.ROUTE: (1, 1),
    EntityType.FORM: (1, 1),
    EntityType.ADE: (1, 2),
    EntityType.DOSAGE: (1, 1),
    EntityType.REASON: (1, 3),
    EntityType.FREQUENCY: (1, 2),
}


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_docs: int = 20
    sentences_per_doc: tuple[int, int] = (3, 8)
    weights: dict[str, float] = field(default_factory=lambda: {rt.value: 1.0 for rt in RelationType})
    p_drug_first: float | dict[str, float] = field(default_factory=lambda: dict(DEFAULT_P_DRUG_FIRST))
    p_multi_drug_sentence: float = 0.3
    p_cross_sentence: float = 0.1
    lexicon_sizes: dict[str, int] = field(default_factory=lambda: {et.value: 25 for et in EntityType})
    max_attrs_per_drug: int = 3

    def __post_init__(self):
        if isinstance(self.p_drug_first, (int, float)):
            object.__setattr__(self, "p_drug_first", {rt.value: float(self.p_drug_first) for rt in RelationType})
        else:
            merged = dict(DEFAULT_P_DRUG_FIRST)
            merged.update({RelationType(k).value: float(v) for k, v in self.p_drug_first.items()})
            object.__setattr__(self, "p_drug_first", merged)
        weights = {rt.value: 0.0 for rt in RelationType}
        weights.update({RelationType(k).value: float(v) for k, v in self.weights.items()})
        object.__setattr__(self, "weights", weights)
        sizes = {et.value: 25 for et in EntityType}
        sizes.update({EntityType(k).value: int(v) for k, v in self.lexicon_sizes.items()})
        object.__setattr__(self, "lexicon_sizes", sizes)
        object.__setattr__(self, "sentences_per_doc", tuple(self.sentences_per_doc))

        probs = [self.p_multi_drug_sentence, self.p_cross_sentence, *self.p_drug_first.values()]
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise SynthError("probabilities must lie in [0, 1]")
        if any(w < 0 for w in weights.values()) or not any(weights.values()):
            raise SynthError("relation weights must be non-negative and not all zero")
        lo, hi = self.sentences_per_doc
        if not 1 <= lo <= hi:
            raise SynthError("sentences_per_doc must satisfy 1 <= min <= max")
        if self.n_docs < 0:
            raise SynthError("n_docs must be non-negative")
        if self.max_attrs_per_drug < 1:
            raise SynthError("max_attrs_per_drug must be at least 1")

    def to_dict(self):
        d = asdict(self)
        d["sentences_per_doc"] = list(self.sentences_per_doc)
        return d


@dataclass(frozen=True)
class GoldCorpus:
    documents: list[Document]
    manifest: dict

    @property
    def gold(self):
        """All gold relations as (doc_id, attr, drug, rtype) triples."""
        return [
            (d.doc_id, r.attr, r.drug, r.rtype) for d in self.documents for r in d.relations.values()
        ]

    def write(self, directory):
        directory = Path(directory)
        write_corpus(self.documents, directory)
        with open(directory / "manifest.json", "w", encoding="utf-8") as f:
            json.dump(self.manifest, f, indent=2, sort_keys=True)
            f.write("\n")


def corpus_checksum(docs) -> str:
    h = hashlib.sha256()
    for d in sorted(docs, key=lambda d: d.doc_id):
        for part in (d.doc_id, d.text, d.to_ann()):
            h.update(part.encode("utf-8"))
            h.update(b"\0")
    return h.hexdigest()


def _word(rng, n_syllables):
    out = ""
    for _ in range(n_syllables):
        out += _ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))]
    return out + _CODAS[rng.integers(len(_CODAS))]


def build_lexicons(rng, sizes) -> dict[EntityType, list[str]]:
    """Distinct invented phrases per entity type; a word never appears in two types."""
    used = set()
    lexicons = {}
    for et in EntityType:
        size = sizes[et.value]
        if size < 1:
            raise SynthError(f"lexicon for {et.value} is empty")
        lo, hi = _PHRASE_WORDS[et]
        phrases = []
        while len(phrases) < size:
            n_words = int(rng.integers(lo, hi + 1))
            words = [_word(rng, int(rng.integers(2, 4))) for _ in range(n_words)]
            if any(w in used for w in words):
                continue
            if et in _NUMERIC:
                words.insert(0, str(int(rng.integers(1, 500))))
            used.update(w for w in words if not w.isdigit())
            phrases.append(" ".join(words))
        lexicons[et] = phrases
    return lexicons


class _DocBuilder:
    def __init__(self, doc_id):
        self.doc_id = doc_id
        self.parts = []
        self.length = 0
        self.entities = {}
        self.relations = {}

    def add(self, text, etype=None):
        start = self.length
        self.parts.append(text)
        self.length += len(text)
        if etype is None:
            return None
        eid = f"T{len(self.entities) + 1}"
        self.entities[eid] = Entity(eid, etype, (Span(start, self.length),), text)
        return eid

    def relate(self, rtype, attr, drug):
        rid = f"R{len(self.relations) + 1}"
        self.relations[rid] = Relation(rid, rtype, attr, drug)

    def build(self):
        return Document(self.doc_id, "".join(self.parts), self.entities, self.relations)


class _Generator:
    def __init__(self, config: SynthConfig):
        self.cfg = config
        self.rng = np.random.default_rng(config.seed)
        self.lex = build_lexicons(self.rng, config.lexicon_sizes)
        self.rtypes = [rt for rt in RelationType if config.weights[rt.value] > 0]
        w = np.array([config.weights[rt.value] for rt in self.rtypes])
        self.rprobs = w / w.sum()

    def pick(self, seq):
        return seq[int(self.rng.integers(len(seq)))]

    def pick_rtypes(self, k):
        k = min(k, len(self.rtypes))
        idx = self.rng.choice(len(self.rtypes), size=k, replace=False, p=self.rprobs)
        return [self.rtypes[i] for i in sorted(idx)]

    def clause(self, b: _DocBuilder, n_attrs):
        """Drug mention with attributes placed before or after it; returns the drug id."""
        rtypes = self.pick_rtypes(n_attrs) if n_attrs else []
        before, after = [], []
        for rt in rtypes:
            first = self.rng.random() < self.cfg.p_drug_first[rt.value]
            (after if first else before).append(rt)
        attr_ids = []
        for rt in before:
            attr_ids.append((rt, b.add(self.pick(self.lex[rt.attr_type]), rt.attr_type)))
            b.add(" " + _BEFORE.get(rt, "of") + " ")
        drug = b.add(self.pick(self.lex[EntityType.DRUG]), EntityType.DRUG)
        for rt in after:
            conn = _AFTER.get(rt)
            b.add(" " + conn + " " if conn else " ")
            attr_ids.append((rt, b.add(self.pick(self.lex[rt.attr_type]), rt.attr_type)))
        for rt, aid in attr_ids:
            b.relate(rt, aid, drug)
        return drug

    def document(self, doc_id):
        b = _DocBuilder(doc_id)
        lo, hi = self.cfg.sentences_per_doc
        n_sent = int(self.rng.integers(lo, hi + 1))
        for s in range(n_sent):
            if s:
                b.add(self.pick([" ", " ", "\n", "\n\n"]))
            b.add(self.pick(_OPENERS) + " ")
            n_attrs = int(self.rng.integers(1, self.cfg.max_attrs_per_drug + 1))
            drug = self.clause(b, n_attrs)
            if self.rng.random() < self.cfg.p_multi_drug_sentence:
                b.add(" and ")
                drug = self.clause(b, int(self.rng.integers(0, self.cfg.max_attrs_per_drug + 1)))
            b.add(".")
            if self.rng.random() < self.cfg.p_cross_sentence:
                rt = self.pick_rtypes(1)[0]
                b.add(" " + self.pick(_FOLLOW_UPS) + " ")
                conn = _AFTER.get(rt)
                if conn:
                    b.add(conn + " ")
                attr = b.add(self.pick(self.lex[rt.attr_type]), rt.attr_type)
                b.relate(rt, attr, drug)
                b.add(".")
        b.add("\n")
        return b.build()


def generate(config: SynthConfig = SynthConfig()) -> GoldCorpus:
    """Generate ``config.n_docs`` documents; identical configs give identical corpora.

    With ``p_cross_sentence=0`` every relation is intra-sentence; with
    ``p_multi_drug_sentence=0`` and ``p_drug_first=1`` each attribute's
    nearest drug to the left is its gold drug.
    """
    gen = _Generator(config)
    width = max(3, len(str(config.n_docs)))
    docs = [gen.document(f"synth{i:0{width}d}") for i in range(config.n_docs)]
    manifest = {
        "generator": "adextract.synth",
        "config": config.to_dict(),
        "n_docs": len(docs),
        "n_entities": sum(len(d.entities) for d in docs),
        "n_relations": sum(len(d.relations) for d in docs),
        "checksum": corpus_checksum(docs),
    }
    return GoldCorpus(docs, manifest)


def perturb(corpus: GoldCorpus, distractor_rate: float, seed: int = 0) -> GoldCorpus:
    """Insert unrelated drug mentions directly before attributes.

    Each non-drug entity independently receives a distractor with probability
    ``distractor_rate``.  Gold relations are untouched, so a left-looking rule
    that picks the distractor loses precision.
    """
    if not 0.0 <= distractor_rate <= 1.0:
        raise SynthError("distractor_rate must lie in [0, 1]")
    if distractor_rate == 0:
        return corpus
    rng = np.random.default_rng([seed, 7])
    used = {w for d in corpus.documents for e in d.entities.values() for w in e.surface.split()}
    distractors = []
    while len(distractors) < 20:
        w = _word(rng, 3)
        if w not in used and w not in distractors:
            distractors.append(w)

    docs = []
    for doc in corpus.documents:
        attrs = sorted((e for e in doc.entities.values() if e.etype != EntityType.DRUG), key=Entity.sort_key)
        inserts = []  # (offset, text)
        for e in attrs:
            if rng.random() < distractor_rate:
                inserts.append((e.start, distractors[int(rng.integers(len(distractors)))]))
        if not inserts:
            docs.append(doc)
            continue

        def shift(pos, is_end):
            return pos + sum(len(t) + 1 for off, t in inserts if (off < pos if is_end else off <= pos))

        pieces, last = [], 0
        for off, t in inserts:
            pieces.append(doc.text[last:off])
            pieces.append(t + " ")
            last = off
        pieces.append(doc.text[last:])
        text = "".join(pieces)

        entities = {}
        for e in doc.entities.values():
            frags = tuple(Span(shift(s.start, False), shift(s.end, True)) for s in e.fragments)
            entities[e.id] = Entity(e.id, e.etype, frags, e.surface)
        next_id = 1 + max(int(eid[1:]) for eid in doc.entities)
        for off, t in inserts:
            start = shift(off, False) - len(t) - 1
            eid = f"T{next_id}"
            next_id += 1
            entities[eid] = Entity(eid, EntityType.DRUG, (Span(start, start + len(t)),), t)
        docs.append(Document(doc.doc_id, text, entities, dict(doc.relations)))

    manifest = dict(corpus.manifest)
    manifest["perturb"] = {"distractor_rate": distractor_rate, "seed": seed, "source_checksum": corpus.manifest.get("checksum")}
    manifest["n_entities"] = sum(len(d.entities) for d in docs)
    manifest["checksum"] = corpus_checksum(docs)
    return GoldCorpus(docs, manifest)
