"""Standoff annotation model, parser/serializer, tokenizer and sentence splitter.

Documents follow the paired ``<id>.txt`` / ``<id>.ann`` layout used by the
n2c2 2018 medication track.  Offsets are Python string indices, i.e. Unicode
code points, so files are always read with ``newline=""`` to keep ``\\r``.
"""

from __future__ import annotations

import bisect
import logging
import re
import string
import unicodedata
import warnings
from collections.abc import Mapping
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path

logger = logging.getLogger(__name__)


class EntityType(str, Enum):
    DRUG = "Drug"
    STRENGTH = "Strength"
    DURATION = "Duration"
    ROUTE = "Route"
    FORM = "Form"
    ADE = "ADE"
    DOSAGE = "Dosage"
    REASON = "Reason"
    FREQUENCY = "Frequency"

    def __str__(self):
        return self.value


class RelationType(str, Enum):
    STRENGTH_DRUG = "Strength-Drug"
    DURATION_DRUG = "Duration-Drug"
    ROUTE_DRUG = "Route-Drug"
    FORM_DRUG = "Form-Drug"
    ADE_DRUG = "ADE-Drug"
    DOSAGE_DRUG = "Dosage-Drug"
    REASON_DRUG = "Reason-Drug"
    FREQUENCY_DRUG = "Frequency-Drug"

    def __str__(self):
        return self.value

    @property
    def attr_type(self) -> EntityType:
        """The non-drug argument type of this relation."""
        return EntityType(self.value.split("-")[0])

    @classmethod
    def for_attr(cls, etype: EntityType) -> "RelationType":
        try:
            return _RTYPE_BY_ATTR[EntityType(etype)]
        except KeyError:
            raise ValueError(f"{etype} is not an attribute type") from None


_RTYPE_BY_ATTR = {rt.attr_type: rt for rt in RelationType}


class AnnotationError(ValueError):
    """Malformed or inconsistent standoff annotation."""

    def __init__(self, message, line_no=None, source=None):
        self.line_no = line_no
        self.source = source
        prefix = ""
        if source is not None:
            prefix += f"{source}:"
        if line_no is not None:
            prefix += f"{line_no}:"
        super().__init__(f"{prefix} {message}" if prefix else message)


class CorpusError(ValueError):
    """Problem with the layout of a corpus directory."""


class AnnotationWarning(UserWarning):
    pass


@dataclass(frozen=True, order=True)
class Span:
    start: int
    end: int

    def __post_init__(self):
        if self.start < 0 or self.end <= self.start:
            raise ValueError(f"invalid span [{self.start}, {self.end})")

    def __len__(self):
        return self.end - self.start

    def overlaps(self, other: "Span") -> bool:
        return self.start < other.end and other.start < self.end

    def gap(self, other: "Span") -> int:
        """Characters between the nearest edges of two spans, 0 if they overlap."""
        return max(0, other.start - self.end, self.start - other.end)


@dataclass(frozen=True)
class Entity:
    id: str
    etype: EntityType
    fragments: tuple[Span, ...]
    surface: str

    @property
    def anchor(self) -> Span:
        """First fragment; ordering and distances are measured from it."""
        return self.fragments[0]

    @property
    def start(self) -> int:
        return self.fragments[0].start

    @property
    def end(self) -> int:
        return self.fragments[-1].end

    @property
    def extent(self) -> Span:
        return Span(self.start, self.end)

    def sort_key(self):
        return (self.start, self.id)


@dataclass(frozen=True)
class Relation:
    id: str
    rtype: RelationType
    attr: str
    drug: str


@dataclass(frozen=True)
class Token:
    text: str
    span: Span

    @property
    def start(self) -> int:
        return self.span.start

    @property
    def end(self) -> int:
        return self.span.end


@dataclass(frozen=True)
class Sentence:
    span: Span
    token_range: range


@dataclass(frozen=True)
class Document:
    """An immutable note with its gold entities and relations.

    ``entities`` and ``relations`` are keyed by annotation id and keep file
    order.  Tokens and sentences are computed lazily and cached.
    """

    doc_id: str
    text: str
    entities: dict[str, Entity] = field(default_factory=dict)
    relations: dict[str, Relation] = field(default_factory=dict)

    @cached_property
    def tokens(self) -> list[Token]:
        return tokenize(self.text)

    @cached_property
    def sentences(self) -> list[Sentence]:
        return split_sentences(self.text, self.tokens)

    @cached_property
    def entity_sentences(self) -> dict[str, int]:
        return entity_sentence_index(self)

    def entities_of(self, etype: EntityType) -> list[Entity]:
        """Entities of one type in document order."""
        return sorted((e for e in self.entities.values() if e.etype == etype), key=Entity.sort_key)

    def to_ann(self) -> str:
        return serialize_ann(self.entities.values(), self.relations.values())


# --------------------------------------------------------------------------
# .ann parsing / serialization

_WS = re.compile(r"\s")
_T_RE = re.compile(r"^(T\d+)\t(\S+) (\d+ \d+(?:;\d+ \d+)*)\t(.*)$")
_R_RE = re.compile(r"^(R\d+)\t(\S+) (Arg1):(\S+) (Arg2):(\S+)$")


def _problem(strict, message, line_no, source):
    if strict:
        raise AnnotationError(message, line_no, source)
    warnings.warn(str(AnnotationError(message, line_no, source)), AnnotationWarning, stacklevel=3)


def parse_ann(ann_text: str, doc_text: str, strict: bool = True, source=None):
    """Parse standoff annotations against their companion note text.

    Returns ``(entities, relations)`` as id-keyed dicts in file order.
    Relation arguments are normalized so that ``attr`` is the non-drug entity
    whichever of Arg1/Arg2 it was written as.

    In lenient mode, surface mismatches, unknown types and type-inconsistent
    relations are downgraded to :class:`AnnotationWarning` and the offending
    annotation is dropped (surface mismatches are kept).  Malformed lines, out
    of range spans and dangling relation arguments always raise.
    """
    entities: dict[str, Entity] = {}
    relations: dict[str, Relation] = {}
    raw_relations = []
    skipped_entities = set()
    n = len(doc_text)

    for line_no, line in enumerate(ann_text.split("\n"), start=1):
        line = line.rstrip("\r")
        if not line.strip():
            continue
        kind = line[0]
        if kind == "T":
            m = _T_RE.match(line)
            if not m:
                raise AnnotationError(f"malformed entity line {line!r}", line_no, source)
            eid, type_name, span_str, surface = m.groups()
            if eid in entities or eid in skipped_entities:
                raise AnnotationError(f"duplicate id {eid}", line_no, source)
            spans = []
            for part in span_str.split(";"):
                start, end = (int(v) for v in part.split(" "))
                if start >= end or end > n:
                    raise AnnotationError(
                        f"span {start} {end} of {eid} outside text of length {n} or empty", line_no, source
                    )
                spans.append(Span(start, end))
            if spans != sorted(spans):
                _problem(strict, f"fragments of {eid} are not sorted", line_no, source)
                spans.sort()
            for a, b in zip(spans, spans[1:]):
                if a.overlaps(b):
                    raise AnnotationError(f"overlapping fragments in {eid}", line_no, source)
            try:
                etype = EntityType(type_name)
            except ValueError:
                _problem(strict, f"unknown entity type {type_name!r}", line_no, source)
                skipped_entities.add(eid)
                continue
            expected = " ".join(doc_text[s.start:s.end] for s in spans)
            # annotation tools write line breaks inside a span as spaces
            if _WS.sub(" ", expected) != _WS.sub(" ", surface):
                _problem(strict, f"surface {surface!r} of {eid} does not match text {expected!r}", line_no, source)
            entities[eid] = Entity(eid, etype, tuple(spans), surface)
        elif kind == "R":
            m = _R_RE.match(line)
            if not m:
                raise AnnotationError(f"malformed relation line {line!r}", line_no, source)
            rid, type_name, _, arg1, _, arg2 = m.groups()
            if rid in relations or any(r[0] == rid for r in raw_relations):
                raise AnnotationError(f"duplicate id {rid}", line_no, source)
            raw_relations.append((rid, type_name, arg1, arg2, line_no))
        elif kind in "ANE#*M":
            _problem(False, f"ignoring unsupported annotation {line.split(chr(9))[0]!r}", line_no, source)
        else:
            raise AnnotationError(f"unrecognized line {line!r}", line_no, source)

    for rid, type_name, arg1, arg2, line_no in raw_relations:
        for arg in (arg1, arg2):
            if arg not in entities and arg not in skipped_entities:
                raise AnnotationError(f"relation {rid} refers to unknown entity {arg}", line_no, source)
        if arg1 in skipped_entities or arg2 in skipped_entities:
            _problem(False, f"dropping relation {rid} on a skipped entity", line_no, source)
            continue
        try:
            rtype = RelationType(type_name)
        except ValueError:
            _problem(strict, f"unknown relation type {type_name!r}", line_no, source)
            continue
        e1, e2 = entities[arg1], entities[arg2]
        if e1.etype == EntityType.DRUG and e2.etype != EntityType.DRUG:
            e1, e2 = e2, e1
        if e1.etype != rtype.attr_type or e2.etype != EntityType.DRUG:
            _problem(
                strict,
                f"relation {rid} of type {rtype} links {e1.etype} and {e2.etype}",
                line_no,
                source,
            )
            continue
        relations[rid] = Relation(rid, rtype, e1.id, e2.id)
    return entities, relations


def format_entity(e: Entity) -> str:
    spans = ";".join(f"{s.start} {s.end}" for s in e.fragments)
    return f"{e.id}\t{e.etype.value} {spans}\t{e.surface}"


def format_relation(r: Relation) -> str:
    return f"{r.id}\t{r.rtype.value} Arg1:{r.attr} Arg2:{r.drug}"


def serialize_ann(entities, relations) -> str:
    """Inverse of :func:`parse_ann`: one line per annotation, entities first.

    Accepts the id-keyed dicts ``parse_ann`` returns or plain iterables.
    """
    if isinstance(entities, Mapping):
        entities = entities.values()
    if isinstance(relations, Mapping):
        relations = relations.values()
    lines = [format_entity(e) for e in entities]
    lines += [format_relation(r) for r in relations]
    return "\n".join(lines)


def parse_relation_lines(ann_text: str, source=None) -> list[tuple[str, RelationType, str, str]]:
    """Read only the ``R`` lines of a file, without resolving arguments.

    Used for prediction files, where entity lines may be absent.  Returns
    ``(id, rtype, arg1, arg2)`` in file order.
    """
    out = []
    for line_no, line in enumerate(ann_text.split("\n"), start=1):
        line = line.rstrip("\r")
        if not line.startswith("R"):
            continue
        m = _R_RE.match(line)
        if not m:
            raise AnnotationError(f"malformed relation line {line!r}", line_no, source)
        rid, type_name, _, arg1, _, arg2 = m.groups()
        try:
            rtype = RelationType(type_name)
        except ValueError:
            raise AnnotationError(f"unknown relation type {type_name!r}", line_no, source) from None
        out.append((rid, rtype, arg1, arg2))
    return out


# --------------------------------------------------------------------------
# corpus directories


def read_text(path) -> str:
    with open(path, encoding="utf-8", newline="") as f:
        return f.read()


def write_text(path, text: str):
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(text)


def load_document(txt_path, ann_path=None, strict=False) -> Document:
    txt_path = Path(txt_path)
    text = read_text(txt_path)
    if ann_path is None:
        return Document(txt_path.stem, text)
    entities, relations = parse_ann(read_text(ann_path), text, strict=strict, source=str(ann_path))
    return Document(txt_path.stem, text, entities, relations)


def load_corpus(directory, strict: bool = False) -> list[Document]:
    """Load every ``<id>.txt``/``<id>.ann`` pair under ``directory``, sorted by id.

    A note without annotations loads as an empty document with a warning; an
    annotation file without its note is an error.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise CorpusError(f"{directory} is not a directory")
    txts = {p.stem: p for p in directory.glob("*.txt")}
    anns = {p.stem: p for p in directory.glob("*.ann")}
    orphans = sorted(set(anns) - set(txts))
    if orphans:
        raise CorpusError(f"annotation files without text in {directory}: {', '.join(orphans)}")
    docs = []
    for doc_id in sorted(txts):
        if doc_id not in anns:
            warnings.warn(f"{txts[doc_id]} has no .ann file; loading without annotations", AnnotationWarning)
            docs.append(load_document(txts[doc_id]))
        else:
            docs.append(load_document(txts[doc_id], anns[doc_id], strict=strict))
    return docs


def write_corpus(docs, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for doc in docs:
        write_text(directory / f"{doc.doc_id}.txt", doc.text)
        ann = doc.to_ann()
        write_text(directory / f"{doc.doc_id}.ann", ann + "\n" if ann else "")


# --------------------------------------------------------------------------
# tokenization and sentences


def _is_punct(ch: str) -> bool:
    return ch in string.punctuation or unicodedata.category(ch).startswith("P")


def tokenize(text: str) -> list[Token]:
    """Whitespace tokenization with leading/trailing punctuation split off.

    Each stripped punctuation character becomes its own token; punctuation
    inside a word ("2.5", "q4h", "b.i.d") stays attached.
    """
    tokens = []
    for m in re.finditer(r"\S+", text):
        start, end = m.span()
        lead = start
        while lead < end and _is_punct(text[lead]):
            lead += 1
        trail = end
        while trail > lead and _is_punct(text[trail - 1]):
            trail -= 1
        for i in range(start, lead):
            tokens.append(Token(text[i], Span(i, i + 1)))
        if lead < trail:
            tokens.append(Token(text[lead:trail], Span(lead, trail)))
        for i in range(trail, end):
            tokens.append(Token(text[i], Span(i, i + 1)))
    return tokens


_BLANK_LINE = re.compile(r"\n[^\S\n]*\n")


def split_sentences(text: str, tokens: list[Token]) -> list[Sentence]:
    """Rule-based sentence boundaries over a token list.

    A sentence ends after a token ending in ``.``, ``!`` or ``?`` when the next
    token starts with an uppercase letter or digit, and at every blank line.
    """
    if not tokens:
        return []
    sentences = []
    first = 0
    for i in range(len(tokens) - 1):
        tok, nxt = tokens[i], tokens[i + 1]
        gap = text[tok.end:nxt.start]
        boundary = bool(_BLANK_LINE.search(gap))
        if not boundary and gap and tok.text[-1] in ".!?":
            c = nxt.text[0]
            boundary = c.isupper() or c.isdigit()
        if boundary:
            sentences.append(Sentence(Span(tokens[first].start, tok.end), range(first, i + 1)))
            first = i + 1
    sentences.append(Sentence(Span(tokens[first].start, tokens[-1].end), range(first, len(tokens))))
    return sentences


def sentence_of(sentences: list[Sentence], offset: int) -> int:
    """Index of the sentence containing ``offset``.

    Offsets in the whitespace between two sentences belong to the following
    one; offsets after the last sentence belong to the last.
    """
    if not sentences:
        return 0
    ends = [s.span.end for s in sentences]
    return min(bisect.bisect_right(ends, offset), len(sentences) - 1)


def entity_sentence_index(doc: Document) -> dict[str, int]:
    sentences = doc.sentences
    return {eid: sentence_of(sentences, e.start) for eid, e in doc.entities.items()}
