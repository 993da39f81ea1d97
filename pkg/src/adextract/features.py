"""Candidate pair generation, five-way segmentation, embeddings and encoding."""

from __future__ import annotations

import bisect
import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Document, Entity, EntityType, RelationType, Span, Token

logger = logging.getLogger(__name__)

PAD = 0
UNK = 1

SEGMENTS = ("preceding", "concept1", "middle", "concept2", "succeeding")
DEFAULT_WINDOW_LEN = 64
DEFAULT_SEGMENT_LENS = (16, 8, 32, 8, 16)


@dataclass(frozen=True)
class CandidatePair:
    doc_id: str
    attr: str
    drug: str
    rtype: RelationType
    label: bool
    window: Span
    window_tokens: tuple[Token, ...]
    attr_spans: tuple[Span, ...]
    drug_spans: tuple[Span, ...]

    @property
    def key(self):
        return (self.doc_id, self.attr, self.drug, self.rtype)


@dataclass(frozen=True)
class SegmentedExample:
    preceding: tuple[Token, ...]
    concept1: tuple[Token, ...]
    middle: tuple[Token, ...]
    concept2: tuple[Token, ...]
    succeeding: tuple[Token, ...]
    drug_first: bool

    @property
    def segments(self):
        return (self.preceding, self.concept1, self.middle, self.concept2, self.succeeding)

    @property
    def tokens(self) -> tuple[Token, ...]:
        return self.preceding + self.concept1 + self.middle + self.concept2 + self.succeeding


def generate_candidates(doc: Document, rtype: RelationType, max_cross_sentences: int = 1):
    """All (attribute, drug) pairs of ``rtype`` at most ``max_cross_sentences`` apart.

    Returns ``(pairs, dropped)`` where ``dropped`` counts gold relations of
    ``rtype`` that were left out because their arguments are too far apart.
    Pairs are ordered by attribute then drug, both in document order.
    """
    rtype = RelationType(rtype)
    sent_of = doc.entity_sentences
    sentences = doc.sentences
    tokens = doc.tokens
    gold = {(r.attr, r.drug) for r in doc.relations.values() if r.rtype == rtype}
    attrs = doc.entities_of(rtype.attr_type)
    drugs = doc.entities_of(EntityType.DRUG)

    dropped = sum(
        1 for a, d in gold if abs(sent_of[a] - sent_of[d]) > max_cross_sentences
    )
    token_starts = [t.start for t in tokens]
    pairs = []
    for a in attrs:
        for d in drugs:
            sa, sd = sent_of[a.id], sent_of[d.id]
            if abs(sa - sd) > max_cross_sentences:
                continue
            lo, hi = min(sa, sd), max(sa, sd)
            start = min(sentences[lo].span.start, a.start, d.start) if sentences else min(a.start, d.start)
            end = max(sentences[hi].span.end, a.end, d.end) if sentences else max(a.end, d.end)
            window = Span(start, end)
            # tokens overlapping the window: those starting before its end and ending after its start
            first = _first_token_ending_after(tokens, start)
            last = bisect.bisect_left(token_starts, end)
            pairs.append(
                CandidatePair(
                    doc.doc_id, a.id, d.id, rtype, (a.id, d.id) in gold, window,
                    tuple(tokens[first:last]), a.fragments, d.fragments,
                )
            )
    return pairs, dropped


def _first_token_ending_after(tokens, offset):
    lo, hi = 0, len(tokens)
    while lo < hi:
        mid = (lo + hi) // 2
        if tokens[mid].end <= offset:
            lo = mid + 1
        else:
            hi = mid
    return lo


def generate_all_candidates(docs, rtype: RelationType, max_cross_sentences: int = 1):
    pairs, dropped = [], 0
    for doc in docs:
        p, d = generate_candidates(doc, rtype, max_cross_sentences)
        pairs.extend(p)
        dropped += d
    return pairs, dropped


def write_candidates_tsv(pairs, path):
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, delimiter="\t", lineterminator="\n")
        w.writerow(["doc_id", "attr_id", "drug_id", "rtype", "label"])
        for p in pairs:
            w.writerow([p.doc_id, p.attr, p.drug, p.rtype.value, "positive" if p.label else "negative"])


def _token_range(tokens, extent: Span):
    """Half-open index range of tokens overlapping ``extent``."""
    idx = [i for i, t in enumerate(tokens) if t.span.overlaps(extent)]
    if idx:
        return idx[0], idx[-1] + 1
    pos = sum(1 for t in tokens if t.end <= extent.start)
    return pos, pos


def segment(pair: CandidatePair) -> SegmentedExample:
    """Split the pair's window into preceding / concept1 / middle / concept2 / succeeding.

    The concept appearing first in the text is concept1.  A token only
    partially covered by an entity still belongs wholly to that concept; when
    the two entities overlap, shared tokens go to concept1.
    """
    tokens = pair.window_tokens
    attr_ext = Span(pair.attr_spans[0].start, pair.attr_spans[-1].end)
    drug_ext = Span(pair.drug_spans[0].start, pair.drug_spans[-1].end)
    drug_first = (drug_ext.start, pair.drug) <= (attr_ext.start, pair.attr)
    first, second = (drug_ext, attr_ext) if drug_first else (attr_ext, drug_ext)

    c1_lo, c1_hi = _token_range(tokens, first)
    c2_lo, c2_hi = _token_range(tokens, second)
    c2_lo = max(c2_lo, c1_hi)
    c2_hi = max(c2_hi, c2_lo)
    return SegmentedExample(
        tokens[:c1_lo], tokens[c1_lo:c1_hi], tokens[c1_hi:c2_lo], tokens[c2_lo:c2_hi], tokens[c2_hi:],
        drug_first,
    )


# --------------------------------------------------------------------------
# embeddings


class EmbeddingFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    """Word vectors with row 0 for padding and row 1 for unknown words."""

    vocab: dict[str, int]
    rows: np.ndarray

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def __len__(self):
        return self.rows.shape[0]

    def index(self, word: str) -> int:
        return self.vocab.get(word.lower(), UNK)

    def words(self) -> list[str]:
        """Vocabulary in row order, starting at row 2."""
        return sorted(self.vocab, key=self.vocab.__getitem__)


def _unk_row(dim, seed):
    return np.random.default_rng(seed).uniform(-0.05, 0.05, size=dim)


def load_embeddings(path, expected_dim: int | None = None, seed: int = 0) -> EmbeddingMatrix:
    """Read a GloVe / word2vec text file (``word v1 ... vd`` per line).

    An optional ``count dim`` header line is recognized and skipped.  When a
    word occurs more than once the first vector wins.
    """
    vocab: dict[str, int] = {}
    vectors = []
    dim = expected_dim
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            parts = line.rstrip("\n").rstrip("\r").split(" ")
            parts = [p for p in parts if p != ""] if line.strip() else []
            if not parts:
                continue
            if line_no == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                header_dim = int(parts[1])
                if dim is not None and header_dim != dim:
                    raise EmbeddingFormatError(f"{path}:1: header dim {header_dim} != expected {dim}")
                dim = header_dim
                continue
            word, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
            if len(values) != dim:
                raise EmbeddingFormatError(f"{path}:{line_no}: expected {dim} values, found {len(values)}")
            try:
                vec = [float(v) for v in values]
            except ValueError as exc:
                raise EmbeddingFormatError(f"{path}:{line_no}: {exc}") from None
            if word in vocab:
                continue
            vocab[word] = len(vocab) + 2
            vectors.append(vec)
    if dim is None or dim == 0:
        raise EmbeddingFormatError(f"{path}: no vectors found")
    rows = np.zeros((len(vocab) + 2, dim))
    rows[UNK] = _unk_row(dim, seed)
    if vectors:
        rows[2:] = np.asarray(vectors, dtype=np.float64)
    logger.info("loaded %d vectors of dim %d from %s", len(vocab), dim, path)
    return EmbeddingMatrix(vocab, rows)


def random_embeddings(words, dim: int = 50, seed: int = 0, scale: float = 0.05) -> EmbeddingMatrix:
    """Seeded uniform embeddings for ``words`` (lowercased, first occurrence order)."""
    vocab: dict[str, int] = {}
    for w in words:
        vocab.setdefault(w.lower(), len(vocab) + 2)
    rng = np.random.default_rng(seed)
    rows = np.zeros((len(vocab) + 2, dim))
    rows[1:] = rng.uniform(-scale, scale, size=(len(vocab) + 1, dim))
    return EmbeddingMatrix(vocab, rows)


def restrict_embeddings(emb: EmbeddingMatrix, words) -> EmbeddingMatrix:
    """Keep only the rows ``encode`` can reach for ``words``; row order is preserved."""
    wanted = {w.lower() for w in words}
    kept = [w for w in emb.words() if w in wanted]
    rows = np.vstack([emb.rows[:2]] + [emb.rows[emb.vocab[w]][None, :] for w in kept])
    return EmbeddingMatrix({w: i + 2 for i, w in enumerate(kept)}, rows)


def embeddings_from_rows(words, rows) -> EmbeddingMatrix:
    rows = np.asarray(rows, dtype=np.float64)
    vocab = {w: i + 2 for i, w in enumerate(words)}
    if rows.shape[0] != len(vocab) + 2:
        raise ValueError("rows must include padding and unknown rows")
    return EmbeddingMatrix(vocab, rows)


# --------------------------------------------------------------------------
# encoding


@dataclass(frozen=True)
class EncodedExample:
    inputs: tuple[np.ndarray, ...]
    label: int


def _pad(ids, length, left=False):
    out = np.zeros(length, dtype=np.int64)
    if left:
        out[length - len(ids):] = ids
    else:
        out[: len(ids)] = ids
    return out


def encode_tokens(tokens, emb: EmbeddingMatrix, max_len: int = DEFAULT_WINDOW_LEN) -> np.ndarray:
    """Index a plain token list: keep the first ``max_len``, pad on the right."""
    ids = [emb.index(t.text) for t in tokens][:max_len]
    return _pad(ids, max_len)


def trim_window(ex: SegmentedExample, max_len: int) -> list[Token]:
    """Whole-window token list cut to ``max_len``, dropping tokens farthest from the concepts.

    Outer context is removed one token at a time from whichever side is
    longer (the succeeding side on ties); if the concepts and middle alone
    are still too long they are cut from the right.
    """
    pre = list(ex.preceding)
    core = list(ex.concept1 + ex.middle + ex.concept2)
    post = list(ex.succeeding)
    excess = len(pre) + len(core) + len(post) - max_len
    if excess > 0:
        drop_post = drop_pre = 0
        while excess > 0 and (drop_pre < len(pre) or drop_post < len(post)):
            if len(post) - drop_post >= len(pre) - drop_pre and drop_post < len(post):
                drop_post += 1
            else:
                drop_pre += 1
            excess -= 1
        pre = pre[drop_pre:]
        post = post[: len(post) - drop_post]
    return (pre + core + post)[:max_len]


def encode(ex, emb: EmbeddingMatrix, kind: str = "segment", max_lens=None, label=0) -> EncodedExample:
    """Turn a segmented example (or a plain token list) into padded index arrays.

    ``kind="sentence"`` gives one whole-window array; ``kind="segment"`` gives
    five arrays.  Preceding tokens keep their right end and are left-padded;
    the other segments keep their left end and are right-padded.
    """
    if kind == "sentence":
        max_len = max_lens if isinstance(max_lens, int) else DEFAULT_WINDOW_LEN
        if isinstance(ex, SegmentedExample):
            toks = trim_window(ex, max_len)
        else:
            toks = list(ex)
        return EncodedExample((encode_tokens(toks, emb, max_len),), int(label))
    if kind != "segment":
        raise ValueError(f"unknown model kind {kind!r}")
    if not isinstance(ex, SegmentedExample):
        raise TypeError("segment encoding needs a SegmentedExample")
    lens = tuple(max_lens) if max_lens is not None else DEFAULT_SEGMENT_LENS
    arrays = []
    for i, (toks, n) in enumerate(zip(ex.segments, lens)):
        ids = [emb.index(t.text) for t in toks]
        if i == 0:
            arrays.append(_pad(ids[-n:] if len(ids) > n else ids, n, left=True))
        else:
            arrays.append(_pad(ids[:n], n))
    return EncodedExample(tuple(arrays), int(label))


def stack(encoded) -> tuple[np.ndarray, ...]:
    """Batch a list of EncodedExample into per-input [batch, length] arrays."""
    n_inputs = len(encoded[0].inputs)
    return tuple(np.stack([e.inputs[i] for e in encoded]) for i in range(n_inputs))


def vocabulary(pairs) -> list[str]:
    """Lowercased window words of ``pairs`` in first-seen order."""
    seen = {}
    for p in pairs:
        for t in p.window_tokens:
            seen.setdefault(t.text.lower(), None)
    return list(seen)


def read_embeddings_or_random(path, pairs, dim=50, seed=0):
    if path:
        return load_embeddings(Path(path), seed=seed)
    return random_embeddings(vocabulary(pairs), dim=dim, seed=seed)
