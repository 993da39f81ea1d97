"""Precision / recall / F1 over relation triples, micro and macro averaged."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

from .corpus import RelationType

MICRO_LABEL = "System (Micro)"
MACRO_LABEL = "System (Macro)"
COLUMNS = ("type", "P", "R", "F", "support")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other):
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    @property
    def support(self) -> int:
        return self.tp + self.fn

    def metrics(self) -> "Metrics":
        p = self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0
        r = self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0
        return Metrics(p, r, harmonic(p, r), self.support)


@dataclass(frozen=True)
class Metrics:
    p: float
    r: float
    f: float
    support: int

    def to_dict(self):
        return {"p": self.p, "r": self.r, "f": self.f, "support": self.support}


def harmonic(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r else 0.0


@dataclass(frozen=True)
class ScoreReport:
    per_type: dict[RelationType, Metrics]
    counts: dict[RelationType, ConfusionCounts]
    micro: Metrics
    macro: Metrics
    dropped_pairs: int = 0

    def to_dict(self):
        return {
            "per_type": {rt.value: m.to_dict() for rt, m in self.per_type.items()},
            "micro": self.micro.to_dict(),
            "macro": self.macro.to_dict(),
            "dropped_pairs": self.dropped_pairs,
        }

    @classmethod
    def from_dict(cls, d):
        per_type = {RelationType(k): Metrics(**v) for k, v in d["per_type"].items()}
        return cls(per_type, {}, Metrics(**d["micro"]), Metrics(**d["macro"]), d.get("dropped_pairs", 0))


def _triple(x):
    if hasattr(x, "key"):
        x = x.key
    doc_id, attr, drug, rtype = x
    return (doc_id, attr, drug, RelationType(rtype))


def score_relations(gold, pred, types=tuple(RelationType), dropped_pairs: int = 0) -> ScoreReport:
    """Score predicted (doc, attr, drug, type) triples against gold ones.

    Inputs may be any iterables of such 4-tuples or of objects with a ``key``
    attribute; duplicates collapse.  The macro average is the unweighted mean
    of per-type P, R and F over ``types``, zero-support types included.
    """
    types = tuple(RelationType(t) for t in types)
    gold_set = {_triple(x) for x in gold}
    pred_set = {_triple(x) for x in pred}
    counts = {}
    for rt in types:
        g = {t for t in gold_set if t[3] == rt}
        p = {t for t in pred_set if t[3] == rt}
        counts[rt] = ConfusionCounts(len(g & p), len(p - g), len(g - p))
    per_type = {rt: c.metrics() for rt, c in counts.items()}
    total = sum(counts.values(), ConfusionCounts())
    micro = total.metrics()
    if per_type:
        k = len(per_type)
        macro = Metrics(
            sum(m.p for m in per_type.values()) / k,
            sum(m.r for m in per_type.values()) / k,
            sum(m.f for m in per_type.values()) / k,
            total.support,
        )
    else:
        macro = Metrics(0.0, 0.0, 0.0, 0)
    return ScoreReport(per_type, counts, micro, macro, dropped_pairs)


@dataclass(frozen=True)
class ClassReport:
    """Per relation type, metrics for the relation and no-relation classes."""

    per_type: dict[RelationType, dict[str, Metrics]] = field(default_factory=dict)

    def to_dict(self):
        return {
            rt.value: {cls: m.to_dict() for cls, m in classes.items()}
            for rt, classes in self.per_type.items()
        }


def class_report(candidates, predictions) -> ClassReport:
    """Treat positive and negative candidates as two classes and score both.

    ``predictions`` maps each candidate key to the predicted label (truthy for
    a relation).  Every candidate needs a prediction and vice versa.
    """
    labels = {c.key: bool(c.label) for c in candidates}
    predictions = {_triple(k): bool(v) for k, v in dict(predictions).items()}
    unknown = set(predictions) - set(labels)
    if unknown:
        raise KeyError(f"predictions for unknown candidates: {sorted(unknown)[:3]}")
    missing = set(labels) - set(predictions)
    if missing:
        raise KeyError(f"candidates without a prediction: {sorted(missing)[:3]}")

    cells: dict[RelationType, list[int]] = {}
    for key, gold in labels.items():
        c = cells.setdefault(key[3], [0, 0, 0, 0])  # tp, fp, fn, tn for the positive class
        pred = predictions[key]
        c[(0 if pred else 2) if gold else (1 if pred else 3)] += 1
    per_type = {}
    for rt in sorted(cells, key=list(RelationType).index):
        tp, fp, fn, tn = cells[rt]
        per_type[rt] = {
            "positive": ConfusionCounts(tp, fp, fn).metrics(),
            "negative": ConfusionCounts(tn, fn, fp).metrics(),
        }
    return ClassReport(per_type)


# --------------------------------------------------------------------------
# rendering


def _rows(report):
    if isinstance(report, ClassReport):
        for rt, classes in report.per_type.items():
            for cls, m in classes.items():
                yield f"{rt.value} ({cls})", m
        return
    if not report.per_type:
        return
    for rt, m in report.per_type.items():
        yield rt.value, m
    yield MICRO_LABEL, report.micro
    yield MACRO_LABEL, report.macro


def render_report(report, fmt: str = "table") -> str:
    """Render a ScoreReport or ClassReport as ``table``, ``json`` or ``tsv``.

    Tables round to two decimals; json and tsv keep full precision.
    """
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=False)
    rows = list(_rows(report))
    if fmt == "tsv":
        buf = io.StringIO()
        buf.write("\t".join(COLUMNS) + "\n")
        for name, m in rows:
            buf.write(f"{name}\t{m.p!r}\t{m.r!r}\t{m.f!r}\t{m.support}\n")
        return buf.getvalue()
    if fmt != "table":
        raise ValueError(f"unknown report format {fmt!r}")
    width = max([len(COLUMNS[0])] + [len(name) for name, _ in rows])
    lines = [f"{COLUMNS[0]:<{width}}  {'P':>5}  {'R':>5}  {'F':>5}  {'support':>7}"]
    for name, m in rows:
        lines.append(f"{name:<{width}}  {m.p:5.2f}  {m.r:5.2f}  {m.f:5.2f}  {m.support:7d}")
    return "\n".join(lines) + "\n"
