"""Training loop, prediction and finite-difference gradient checking."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from ..features import CandidatePair, EmbeddingMatrix, encode, segment, stack
from ..rules import PredictedRelation
from .model import CNNClassifier, ModelConfig
from .optim import RMSPropConfig, rmsprop_step

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 512
    learning_rate: float = 0.001
    rho: float = 0.9
    epsilon: float = 1e-7
    epochs: int = 15
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")

    @property
    def optimizer(self) -> RMSPropConfig:
        return RMSPropConfig(self.learning_rate, self.rho, self.epsilon)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    loss: float
    f1: float


def encode_pairs(pairs, model_or_emb, kind=None, max_lens=None):
    """Segment and encode candidate pairs into batched index arrays plus labels."""
    if isinstance(model_or_emb, CNNClassifier):
        emb, kind, max_lens = model_or_emb.embeddings, model_or_emb.kind, model_or_emb.config.max_lens
    else:
        emb = model_or_emb
    encoded = [encode(segment(p), emb, kind, max_lens, label=p.label) for p in pairs]
    labels = np.array([e.label for e in encoded], dtype=np.int64)
    return stack(encoded), labels


def binary_f1(labels, predicted) -> float:
    labels = np.asarray(labels, dtype=bool)
    predicted = np.asarray(predicted, dtype=bool)
    tp = int(np.sum(labels & predicted))
    fp = int(np.sum(~labels & predicted))
    fn = int(np.sum(labels & ~predicted))
    return 0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn)


def _batched_proba(model, inputs, batch_size):
    n = inputs[0].shape[0]
    out = np.empty(n)
    for s in range(0, n, batch_size):
        out[s:s + batch_size] = model.forward(tuple(x[s:s + batch_size] for x in inputs))[:, 1]
    return out


def train(
    kind: str,
    candidates: list[CandidatePair],
    embeddings: EmbeddingMatrix,
    cfg: TrainConfig = TrainConfig(),
    model_config: ModelConfig | None = None,
):
    """Train one binary classifier on candidates of a single relation type.

    Returns ``(model, history)`` where ``history`` holds one
    :class:`EpochStats` per epoch: the mean training loss seen during the
    epoch and the training-set F1 after it.  Runs are bit-reproducible for a
    fixed ``cfg.seed``.
    """
    if not candidates:
        raise ValueError("cannot train on an empty candidate set")
    rtypes = {p.rtype for p in candidates}
    if len(rtypes) != 1:
        raise ValueError(f"candidates mix relation types: {sorted(r.value for r in rtypes)}")
    if model_config is None:
        model_config = ModelConfig(kind=kind)
    elif model_config.kind != kind:
        raise ValueError(f"model_config.kind {model_config.kind!r} does not match {kind!r}")

    model = CNNClassifier.create(model_config, embeddings, rtypes.pop(), seed=cfg.seed)
    inputs, labels = encode_pairs(candidates, model)
    n = len(labels)
    rng = np.random.default_rng([cfg.seed, 1])
    state: dict = {}
    history = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        total = 0.0
        for s in range(0, n, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            loss, grads = model.backward(tuple(x[idx] for x in inputs), labels[idx])
            rmsprop_step(model.params, grads, state, cfg.optimizer)
            total += loss * len(idx)
        probs = _batched_proba(model, inputs, cfg.batch_size)
        stats = EpochStats(epoch, total / n, binary_f1(labels, probs > 0.5))
        logger.info("epoch %d loss %.4f f1 %.4f", stats.epoch, stats.loss, stats.f1)
        history.append(stats)
    return model, history


def predict_proba(model: CNNClassifier, candidates, batch_size: int = 512) -> np.ndarray:
    """Probability of the relation class for each candidate."""
    if not candidates:
        return np.empty(0)
    for p in candidates:
        if model.rtype is not None and p.rtype != model.rtype:
            raise ValueError(f"candidate of type {p.rtype} given to a {model.rtype} model")
    inputs, _ = encode_pairs(candidates, model)
    return _batched_proba(model, inputs, batch_size)


def predict(model: CNNClassifier, candidates, threshold: float = 0.5, batch_size: int = 512):
    """Relations for the candidates whose positive probability is strictly above ``threshold``."""
    probs = predict_proba(model, candidates, batch_size)
    return [
        PredictedRelation(p.doc_id, p.attr, p.drug, p.rtype)
        for p, prob in zip(candidates, probs)
        if prob > threshold
    ]


def numerical_gradients(model: CNNClassifier, inputs, labels, eps: float = 1e-5, names=None):
    """Central finite-difference gradients of the mean loss for each trainable parameter."""
    grads = {}
    for name in names or model.params:
        p = model.params[name]
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = model.loss(inputs, labels)
            flat[i] = orig - eps
            down = model.loss(inputs, labels)
            flat[i] = orig
            gflat[i] = (up - down) / (2 * eps)
        grads[name] = g
    return grads


def relative_error(analytic, numeric, floor: float = 1e-8) -> float:
    """max |a - n| / max(|a|, |n|, floor) over all entries."""
    a, n = np.asarray(analytic), np.asarray(numeric)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)))


def gradient_check(model: CNNClassifier, inputs, labels, eps: float = 1e-5) -> dict[str, float]:
    """Per-parameter max relative error between backprop and finite differences."""
    _, analytic = model.backward(inputs, labels)
    numeric = numerical_gradients(model, inputs, labels, eps)
    return {k: relative_error(analytic[k], numeric[k]) for k in analytic}
