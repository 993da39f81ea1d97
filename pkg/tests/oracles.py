"""Independent reference implementations used to cross-check the package.

These are deliberately naive: plain loops over lists, no shared helpers
with the code under test.
"""

import math

RELATION_NAMES = [
    "Strength-Drug", "Duration-Drug", "Route-Drug", "Form-Drug",
    "ADE-Drug", "Dosage-Drug", "Reason-Drug", "Frequency-Drug",
]


def brute_force_score(gold, pred, types=RELATION_NAMES):
    """Per-type tp/fp/fn and micro/macro P/R/F by list scans over unique tuples."""
    gold_u, pred_u = [], []
    for g in gold:
        if g not in gold_u:
            gold_u.append(g)
    for p in pred:
        if p not in pred_u:
            pred_u.append(p)

    def prf(tp, fp, fn):
        p = tp / (tp + fp) if tp + fp > 0 else 0.0
        r = tp / (tp + fn) if tp + fn > 0 else 0.0
        f = 2 * p * r / (p + r) if p + r > 0 else 0.0
        return p, r, f

    out = {"per_type": {}, "counts": {}}
    TP = FP = FN = 0
    for t in types:
        tp = fp = fn = 0
        for p in pred_u:
            if p[3] != t:
                continue
            if p in gold_u:
                tp += 1
            else:
                fp += 1
        for g in gold_u:
            if g[3] == t and g not in pred_u:
                fn += 1
        out["counts"][t] = (tp, fp, fn)
        out["per_type"][t] = prf(tp, fp, fn)
        TP, FP, FN = TP + tp, FP + fp, FN + fn
    out["micro"] = prf(TP, FP, FN)
    k = len(types)
    out["macro"] = tuple(sum(out["per_type"][t][i] for t in types) / k for i in range(3)) if k else (0.0, 0.0, 0.0)
    return out


def nearest_drug(drugs, attr_start, direction):
    """drugs: list of (id, start, end) for first fragments; attr given by (start, end).

    Returns the id minimizing (gap, id) strictly on the requested side of the
    attribute's start offset.
    """
    a_start, a_end = attr_start
    best = None
    for did, s, e in drugs:
        if direction == "left" and not s < a_start:
            continue
        if direction == "right" and not s > a_start:
            continue
        if e <= a_start:
            gap = a_start - e
        elif a_end <= s:
            gap = s - a_end
        else:
            gap = 0
        if best is None or (gap, did) < best:
            best = (gap, did)
    return None if best is None else best[1]


def rmsprop_first_step(p, g, lr, rho, eps):
    """A single update from a zero accumulator, written out by hand."""
    return p - lr * g / (math.sqrt((1 - rho) * g ** 2) + eps)


def segments_by_offsets(window_tokens, first_extent, second_extent):
    """Five segments from character extents alone.

    A token belongs to concept1 if it overlaps the first extent, else to
    concept2 if it overlaps the second; the remaining tokens are preceding,
    middle or succeeding according to where they sit.
    """
    def overlaps(tok, ext):
        return tok[0] < ext[1] and ext[0] < tok[1]

    c1 = [i for i, t in enumerate(window_tokens) if overlaps(t, first_extent)]
    c2 = [i for i, t in enumerate(window_tokens) if overlaps(t, second_extent) and i not in c1]
    lo1, hi1 = min(c1), max(c1) + 1
    lo2 = min(c2) if c2 else hi1
    hi2 = max(c2) + 1 if c2 else hi1
    return (
        list(range(0, lo1)),
        list(range(lo1, hi1)),
        list(range(hi1, lo2)),
        list(range(lo2, hi2)),
        list(range(hi2, len(window_tokens))),
    )
