"""Sentence-CNN and Segment-CNN in plain numpy, with hand-written backprop.

Shapes: token ids ``[batch, length]``, embedded input ``[batch, length, dim]``,
convolution weights ``[filters, width, dim]``.  Everything is float64.
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..corpus import RelationType
from ..features import DEFAULT_SEGMENT_LENS, DEFAULT_WINDOW_LEN, EmbeddingMatrix

CHECKPOINT_MAGIC = b"ADEXTRACT-CKPT\n"
CHECKPOINT_VERSION = 1
LOG_CLAMP = 1e-12


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "segment"
    widths: tuple[int, ...] = (3, 4, 5)
    n_filters: int = 100
    trainable_embeddings: bool = False
    window_len: int = DEFAULT_WINDOW_LEN
    segment_lens: tuple[int, ...] = DEFAULT_SEGMENT_LENS
    init_scale: float = 0.05

    def __post_init__(self):
        if self.kind not in ("sentence", "segment"):
            raise ValueError(f"model kind must be 'sentence' or 'segment', not {self.kind!r}")
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        object.__setattr__(self, "segment_lens", tuple(int(n) for n in self.segment_lens))
        if len(self.segment_lens) != 5:
            raise ValueError("segment_lens needs five lengths")
        for n in self.input_lens:
            if n < max(self.widths):
                raise ValueError(f"input length {n} is shorter than kernel width {max(self.widths)}")

    @property
    def input_lens(self) -> tuple[int, ...]:
        return (self.window_len,) if self.kind == "sentence" else self.segment_lens

    @property
    def n_units(self) -> int:
        return len(self.input_lens)

    @property
    def unit_features(self) -> int:
        return self.n_filters * len(self.widths)

    @property
    def max_lens(self):
        return self.window_len if self.kind == "sentence" else self.segment_lens


# --------------------------------------------------------------------------
# layers


def conv_forward(x, W, b):
    """Valid 1-D convolution + ReLU + max-pool over time.

    ``x`` is ``[B, L, D]``, ``W`` is ``[F, w, D]``.  Returns pooled ``[B, F]``.
    """
    F, w, D = W.shape
    B, L, _ = x.shape
    T = L - w + 1
    # im2col: cols[b, t] is x[b, t:t+w] flattened
    cols = sliding_window_view(x, w, axis=1).transpose(0, 1, 3, 2).reshape(B, T, w * D)
    pre = (cols.reshape(B * T, w * D) @ W.reshape(F, w * D).T).reshape(B, T, F) + b
    act = np.maximum(pre, 0.0)
    idx = np.argmax(act, axis=1)  # [B, F]
    pooled = np.take_along_axis(act, idx[:, None, :], axis=1)[:, 0, :]
    return pooled, (cols, pre, idx)


def conv_backward(dpooled, cache, W, length):
    cols, pre, idx = cache
    F, w, D = W.shape
    B, T, _ = pre.shape
    dact = np.zeros_like(pre)
    np.put_along_axis(dact, idx[:, None, :], dpooled[:, None, :], axis=1)
    dpre = dact * (pre > 0)
    dW = (dpre.reshape(-1, F).T @ cols.reshape(-1, w * D)).reshape(F, w, D)
    db = dpre.sum(axis=(0, 1))
    dcols = (dpre.reshape(B * T, F) @ W.reshape(F, w * D)).reshape(B, T, w, D)
    dx = np.zeros((B, length, D))
    for k in range(w):
        dx[:, k:k + T, :] += dcols[:, :, k, :]
    return dx, dW, db


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(probs, labels) -> float:
    """Mean negative log-likelihood of integer labels, log input clamped at 1e-12."""
    labels = np.asarray(labels, dtype=np.int64)
    p = probs[np.arange(len(labels)), labels]
    return float(-np.mean(np.log(np.maximum(p, LOG_CLAMP))))


# --------------------------------------------------------------------------
# model


@dataclass(eq=False)
class CNNClassifier:
    """Binary relation classifier for one relation type.

    A sentence model has a single convolution unit over the whole window; a
    segment model has five, one per segment, concatenated in segment order
    before the dense softmax layer.
    """

    config: ModelConfig
    embeddings: EmbeddingMatrix
    rtype: RelationType | None = None
    params: dict[str, np.ndarray] = field(default_factory=dict)
    frozen: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def create(cls, config: ModelConfig, embeddings: EmbeddingMatrix, rtype=None, seed: int = 0):
        rng = np.random.default_rng(seed)
        s = config.init_scale
        params = {}
        for u in range(config.n_units):
            for w in config.widths:
                params[f"unit{u}.W{w}"] = rng.uniform(-s, s, size=(config.n_filters, w, embeddings.dim))
                params[f"unit{u}.b{w}"] = rng.uniform(-s, s, size=config.n_filters)
        hidden = config.n_units * config.unit_features
        params["dense.W"] = rng.uniform(-s, s, size=(hidden, 2))
        params["dense.b"] = rng.uniform(-s, s, size=2)
        table = np.array(embeddings.rows, dtype=np.float64)
        frozen = {}
        if config.trainable_embeddings:
            params["embedding"] = table
        else:
            frozen["embedding"] = table
        return cls(config, embeddings, None if rtype is None else RelationType(rtype), params, frozen)

    @property
    def kind(self) -> str:
        return self.config.kind

    @property
    def table(self) -> np.ndarray:
        return self.params["embedding"] if "embedding" in self.params else self.frozen["embedding"]

    def _check(self, inputs):
        lens = self.config.input_lens
        if len(inputs) != len(lens):
            raise ShapeError(f"expected {len(lens)} input arrays, got {len(inputs)}")
        batch = inputs[0].shape[0]
        for i, (x, n) in enumerate(zip(inputs, lens)):
            if x.ndim != 2:
                raise ShapeError(f"input {i}: expected 2 dimensions [batch, length], got {x.ndim}")
            if x.shape[1] != n:
                raise ShapeError(f"input {i}: length dimension is {x.shape[1]}, model expects {n}")
            if x.shape[0] != batch:
                raise ShapeError(f"input {i}: batch dimension is {x.shape[0]}, expected {batch}")
            if x.size and (x.min() < 0 or x.max() >= self.table.shape[0]):
                raise ShapeError(f"input {i}: token index outside vocabulary of {self.table.shape[0]} rows")

    def _forward(self, inputs):
        inputs = tuple(np.asarray(x, dtype=np.int64) for x in inputs)
        self._check(inputs)
        table = self.table
        feats, caches = [], []
        for u, ids in enumerate(inputs):
            x = table[ids]
            for w in self.config.widths:
                pooled, cache = conv_forward(x, self.params[f"unit{u}.W{w}"], self.params[f"unit{u}.b{w}"])
                feats.append(pooled)
                caches.append((u, w, cache))
        h = np.concatenate(feats, axis=1)
        probs = softmax(h @ self.params["dense.W"] + self.params["dense.b"])
        return probs, (inputs, h, caches)

    def forward(self, inputs) -> np.ndarray:
        """Class probabilities ``[batch, 2]``; column 1 is the relation class."""
        return self._forward(inputs)[0]

    def loss(self, inputs, labels) -> float:
        return cross_entropy(self.forward(inputs), labels)

    def backward(self, inputs, labels):
        """Loss and gradients of the mean cross-entropy for every trainable parameter."""
        labels = np.asarray(labels, dtype=np.int64)
        probs, (inputs, h, caches) = self._forward(inputs)
        B = len(labels)
        p_true = probs[np.arange(B), labels]
        loss = float(-np.mean(np.log(np.maximum(p_true, LOG_CLAMP))))

        dlogits = probs.copy()
        dlogits[np.arange(B), labels] -= 1.0
        dlogits[p_true < LOG_CLAMP] = 0.0  # clamped rows are constant in the loss
        dlogits /= B

        grads = {
            "dense.W": h.T @ dlogits,
            "dense.b": dlogits.sum(axis=0),
        }
        dh = dlogits @ self.params["dense.W"].T
        F = self.config.n_filters
        trainable_emb = "embedding" in self.params
        if trainable_emb:
            grads["embedding"] = np.zeros_like(self.params["embedding"])
        dx_units = {}
        for j, (u, w, cache) in enumerate(caches):
            Wt = self.params[f"unit{u}.W{w}"]
            dx, dW, db = conv_backward(dh[:, j * F:(j + 1) * F], cache, Wt, inputs[u].shape[1])
            grads[f"unit{u}.W{w}"] = dW
            grads[f"unit{u}.b{w}"] = db
            if trainable_emb:
                dx_units[u] = dx_units.get(u, 0.0) + dx
        if trainable_emb:
            for u, dx in dx_units.items():
                np.add.at(grads["embedding"], inputs[u], dx)
        return loss, {k: grads[k] for k in self.params}

    # ----------------------------------------------------------------------
    # checkpoints

    def to_bytes(self) -> bytes:
        """Deterministic self-describing checkpoint: magic, JSON header line, raw float64 data."""
        tensors = [("param", k, v) for k, v in self.params.items()]
        tensors += [("frozen", k, v) for k, v in self.frozen.items()]
        words = self.embeddings.words()
        meta = []
        offset = 0
        for group, name, arr in tensors:
            nbytes = arr.size * 8
            meta.append({"group": group, "name": name, "shape": list(arr.shape), "offset": offset, "nbytes": nbytes})
            offset += nbytes
        header = {
            "format": "adextract-checkpoint",
            "version": CHECKPOINT_VERSION,
            "config": _config_to_dict(self.config),
            "rtype": None if self.rtype is None else self.rtype.value,
            "vocab": words,
            "vocab_sha256": hashlib.sha256("\n".join(words).encode("utf-8")).hexdigest(),
            "dtype": "<f8",
            "tensors": meta,
        }
        buf = io.BytesIO()
        buf.write(CHECKPOINT_MAGIC)
        buf.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for _, _, arr in tensors:
            buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return buf.getvalue()

    def save(self, path):
        with open(path, "wb") as f:
            f.write(self.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes) -> "CNNClassifier":
        if not data.startswith(CHECKPOINT_MAGIC):
            raise ValueError("not an adextract checkpoint")
        rest = data[len(CHECKPOINT_MAGIC):]
        nl = rest.index(b"\n")
        header = json.loads(rest[:nl])
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header.get('version')}")
        body = rest[nl + 1:]
        params, frozen = {}, {}
        for t in header["tensors"]:
            arr = np.frombuffer(body, dtype="<f8", count=t["nbytes"] // 8, offset=t["offset"])
            arr = arr.reshape(t["shape"]).astype(np.float64)
            (params if t["group"] == "param" else frozen)[t["name"]] = arr
        words = header["vocab"]
        if hashlib.sha256("\n".join(words).encode("utf-8")).hexdigest() != header["vocab_sha256"]:
            raise ValueError("checkpoint vocabulary hash mismatch")
        table = params.get("embedding", frozen.get("embedding"))
        emb = EmbeddingMatrix({w: i + 2 for i, w in enumerate(words)}, table)
        config = ModelConfig(**header["config"])
        rtype = None if header["rtype"] is None else RelationType(header["rtype"])
        return cls(config, emb, rtype, params, frozen)

    @classmethod
    def load(cls, path) -> "CNNClassifier":
        with open(path, "rb") as f:
            return cls.from_bytes(f.read())


def _config_to_dict(config: ModelConfig):
    d = asdict(config)
    d["widths"] = list(d["widths"])
    d["segment_lens"] = list(d["segment_lens"])
    return d


def SentenceCNN(embeddings, rtype=None, seed=0, **kwargs) -> CNNClassifier:
    return CNNClassifier.create(ModelConfig(kind="sentence", **kwargs), embeddings, rtype, seed)


def SegmentCNN(embeddings, rtype=None, seed=0, **kwargs) -> CNNClassifier:
    return CNNClassifier.create(ModelConfig(kind="segment", **kwargs), embeddings, rtype, seed)
