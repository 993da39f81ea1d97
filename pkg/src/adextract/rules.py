"""Co-location rule engine: link each attribute to its nearest drug mention."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .corpus import (
    CorpusError,
    Document,
    Entity,
    EntityType,
    Relation,
    RelationType,
    format_entity,
    format_relation,
    parse_relation_lines,
    read_text,
    write_text,
)


class Mechanism(str, Enum):
    LEFT_ONLY = "left-only"
    RIGHT_ONLY = "right-only"
    LEFT_THEN_RIGHT = "left-then-right"
    RIGHT_THEN_LEFT = "right-then-left"

    @property
    def directions(self) -> tuple[str, ...]:
        return {
            Mechanism.LEFT_ONLY: ("left",),
            Mechanism.RIGHT_ONLY: ("right",),
            Mechanism.LEFT_THEN_RIGHT: ("left", "right"),
            Mechanism.RIGHT_THEN_LEFT: ("right", "left"),
        }[self]


class BindingMode(str, Enum):
    BOUNDED = "bounded"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True, order=True)
class PredictedRelation:
    doc_id: str
    attr: str
    drug: str
    rtype: RelationType

    @property
    def key(self):
        return (self.doc_id, self.attr, self.drug, self.rtype)


@dataclass(frozen=True)
class RuleConfig:
    mechanism: Mechanism = Mechanism.LEFT_ONLY
    mode: BindingMode = BindingMode.UNBOUNDED
    relation_types: tuple[RelationType, ...] = tuple(RelationType)
    overrides: dict[RelationType, Mechanism] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "mechanism", Mechanism(self.mechanism))
        object.__setattr__(self, "mode", BindingMode(self.mode))
        object.__setattr__(self, "relation_types", tuple(RelationType(r) for r in self.relation_types))
        object.__setattr__(
            self, "overrides", {RelationType(k): Mechanism(v) for k, v in self.overrides.items()}
        )

    def mechanism_for(self, rtype: RelationType) -> Mechanism:
        return self.overrides.get(rtype, self.mechanism)

    def to_dict(self):
        return {
            "mechanism": self.mechanism.value,
            "mode": self.mode.value,
            "relation_types": [r.value for r in self.relation_types],
            "overrides": {k.value: v.value for k, v in self.overrides.items()},
        }


def nearest_drug(doc: Document, attr: Entity, direction: str) -> str | None:
    """Closest Drug strictly on one side of ``attr``.

    Sides are decided by first-fragment start offsets; distance is the gap
    between first fragments (0 when they overlap), ties go to the smaller id.
    """
    if direction not in ("left", "right"):
        raise ValueError(f"direction must be 'left' or 'right', not {direction!r}")
    best = None
    for e in doc.entities.values():
        if e.etype != EntityType.DRUG:
            continue
        if direction == "left" and not e.start < attr.start:
            continue
        if direction == "right" and not e.start > attr.start:
            continue
        key = (attr.anchor.gap(e.anchor), e.id)
        if best is None or key < best:
            best = key
    return None if best is None else best[1]


def extract_relations(doc: Document, config: RuleConfig = RuleConfig()) -> list[PredictedRelation]:
    wanted = set(config.relation_types)
    attrs = sorted(
        (e for e in doc.entities.values() if e.etype != EntityType.DRUG), key=Entity.sort_key
    )
    used = set()
    out = []
    for attr in attrs:
        rtype = RelationType.for_attr(attr.etype)
        if rtype not in wanted:
            continue
        drug = None
        for direction in config.mechanism_for(rtype).directions:
            drug = nearest_drug(doc, attr, direction)
            if drug is not None:
                break
        if drug is None:
            continue
        if config.mode == BindingMode.BOUNDED:
            if (drug, rtype) in used:
                continue
            used.add((drug, rtype))
        out.append(PredictedRelation(doc.doc_id, attr.id, drug, rtype))
    return out


def _extract_one(args):
    doc, config = args
    return doc.doc_id, extract_relations(doc, config)


def run_rules(corpus, config: RuleConfig = RuleConfig(), jobs: int = 1) -> dict[str, list[PredictedRelation]]:
    if jobs > 1 and len(corpus) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_extract_one, [(d, config) for d in corpus], chunksize=8))
    else:
        results = [_extract_one((d, config)) for d in corpus]
    return dict(results)


def write_predictions(docs, predictions, directory):
    """Write one ``.ann`` per document: its entity lines, then predicted ``R`` lines."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for doc in docs:
        lines = [format_entity(e) for e in doc.entities.values()]
        for i, p in enumerate(predictions.get(doc.doc_id, []), start=1):
            lines.append(format_relation(Relation(f"R{i}", p.rtype, p.attr, p.drug)))
        write_text(directory / f"{doc.doc_id}.ann", "\n".join(lines) + "\n" if lines else "")


def read_predictions(directory) -> dict[str, list[PredictedRelation]]:
    """Read the ``R`` lines of every ``.ann`` file in ``directory``, keyed by doc id."""
    directory = Path(directory)
    if not directory.is_dir():
        raise CorpusError(f"{directory} is not a directory")
    out = {}
    for path in sorted(directory.glob("*.ann")):
        rels = parse_relation_lines(read_text(path), source=str(path))
        out[path.stem] = [PredictedRelation(path.stem, a1, a2, rt) for _, rt, a1, a2 in rels]
    return out
