"""Question-passage relevance model trained in two stages.

The scorer is a logistic model over hashed question/passage interaction
features: every token present in both texts and every question bigram that
also occurs adjacently in the passage sets one of ``HASH_DIM`` buckets, plus
four dense scalars (unigram overlap, bigram overlap, log passage length,
log question length). Buckets come from 64-bit FNV-1a over the UTF-8 bytes of
the token (``"tok"``) or bigram (``"tok1 tok2"``), modulo ``HASH_DIM``.
"""

from __future__ import annotations

import enum
import json
import math
import re
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import kernels
from .errors import EmptyDataset, EmptyText, LengthMismatch, LossTargetMismatch, QamineError
from .metrics import acc_f1, auc

HASH_DIM = 1 << 18
N_SCALARS = 4
TOKENIZER_VERSION = "alnum-lower-v1"
MODEL_FORMAT = "qamine.relevance/1"
CLIP_EPS = 1e-7

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1
_TOKEN_RE = re.compile(r"[^\W_]+")


def fnv1a_64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


@lru_cache(maxsize=1 << 16)
def bucket(key: str) -> int:
    return fnv1a_64(key.encode("utf-8")) % HASH_DIM


def tokenize(text: str) -> list[str]:
    """Lowercase and split on every run of non-alphanumeric characters."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True, slots=True)
class QAPair:
    qp_id: str
    question: str
    passage: str
    label: bool | None = None


@dataclass(frozen=True, slots=True)
class SparseFeatures:
    indices: np.ndarray
    values: np.ndarray
    scalars: tuple[float, float, float, float]


def _bigrams(tokens: list[str]) -> set[tuple[str, str]]:
    return set(zip(tokens, tokens[1:]))


def featurize(pair: QAPair) -> SparseFeatures:
    q = tokenize(pair.question)
    p = tokenize(pair.passage)
    if not q or not p:
        raise EmptyText(f"pair {pair.qp_id!r} has no tokens after normalization")
    q_set, p_set = set(q), set(p)
    shared = q_set & p_set
    q_bi = _bigrams(q)
    shared_bi = q_bi & _bigrams(p)

    counts: dict[int, float] = {}
    for tok in shared:
        b = bucket(tok)
        counts[b] = counts.get(b, 0.0) + 1.0
    for a, c in shared_bi:
        b = bucket(f"{a} {c}")
        counts[b] = counts.get(b, 0.0) + 1.0
    idx = np.array(sorted(counts), dtype=np.int32)
    val = np.array([counts[i] for i in idx.tolist()], dtype=np.float64)
    scalars = (
        len(shared) / len(q_set),
        len(shared_bi) / len(q_bi) if q_bi else 0.0,
        math.log1p(len(p)) / 10.0,
        math.log1p(len(q)) / 10.0,
    )
    return SparseFeatures(idx, val, scalars)


@dataclass(slots=True)
class EncodedPairs:
    """CSR layout of a featurized pair list."""

    indptr: np.ndarray
    indices: np.ndarray
    values: np.ndarray
    scalars: np.ndarray

    def __len__(self) -> int:
        return self.indptr.shape[0] - 1


def encode(pairs: Sequence[QAPair]) -> EncodedPairs:
    feats = [featurize(p) for p in pairs]
    lens = [f.indices.shape[0] for f in feats]
    indptr = np.zeros(len(feats) + 1, dtype=np.int64)
    np.cumsum(lens, out=indptr[1:])
    if feats:
        indices = np.ascontiguousarray(np.concatenate([f.indices for f in feats]), dtype=np.int32)
        values = np.ascontiguousarray(np.concatenate([f.values for f in feats]), dtype=np.float64)
        scalars = np.array([f.scalars for f in feats], dtype=np.float64)
    else:
        indices = np.zeros(0, dtype=np.int32)
        values = np.zeros(0)
        scalars = np.zeros((0, N_SCALARS))
    return EncodedPairs(indptr, indices, values, scalars)


class Loss(enum.Enum):
    CE = "ce"
    MSE = "mse"


class Stage(enum.Enum):
    UNTRAINED = "untrained"
    PRETRAINED = "pretrained"
    FINETUNED = "finetuned"


@dataclass(frozen=True, slots=True)
class TrainConfig:
    epochs: int = 20
    learning_rate: float = 0.1
    l2: float = 1e-6
    batch_size: int = 32
    seed: int = 0
    loss: Loss = Loss.CE

    def __post_init__(self) -> None:
        if self.epochs < 0 or self.learning_rate < 0 or self.l2 < 0 or self.batch_size < 1:
            raise ValueError("TrainConfig numerics must be non-negative and batch_size >= 1")


PRETRAIN_DEFAULTS = TrainConfig(epochs=5, learning_rate=0.2)
FINETUNE_DEFAULTS = TrainConfig(epochs=20, learning_rate=0.1)


@dataclass
class RelevanceModel:
    weights: np.ndarray = field(default_factory=lambda: np.zeros(HASH_DIM))
    scalar_weights: np.ndarray = field(default_factory=lambda: np.zeros(N_SCALARS))
    bias: float = 0.0
    stage: Stage = Stage.UNTRAINED
    tokenizer: str = TOKENIZER_VERSION
    meta: dict = field(default_factory=dict)

    def copy(self) -> RelevanceModel:
        return RelevanceModel(
            self.weights.copy(), self.scalar_weights.copy(), self.bias, self.stage, self.tokenizer, dict(self.meta)
        )

    def raw_scores(self, enc: EncodedPairs) -> np.ndarray:
        contrib = self.weights[enc.indices] * enc.values
        row = np.repeat(np.arange(len(enc)), np.diff(enc.indptr))
        z = np.full(len(enc), self.bias)
        np.add.at(z, row, contrib)
        return z + enc.scalars @ self.scalar_weights

    def score_encoded(self, enc: EncodedPairs) -> np.ndarray:
        return _sigmoid(self.raw_scores(enc))

    def score(self, pairs: Sequence[QAPair]) -> np.ndarray:
        """Relevance scores strictly inside (0, 1)."""
        return self.score_encoded(encode(pairs))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # same clamp as the training kernels; keeps outputs away from 0 and 1
    z = np.clip(np.asarray(z, dtype=np.float64), -30.0, 30.0)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def ce_loss(labels, outputs) -> float:
    t = np.asarray(labels, dtype=np.float64)
    y = np.asarray(outputs, dtype=np.float64)
    if t.shape != y.shape:
        raise LengthMismatch(f"{t.size} labels vs {y.size} outputs")
    if t.size == 0:
        raise LengthMismatch("empty input")
    y = np.clip(y, CLIP_EPS, 1.0 - CLIP_EPS)
    return float(-np.mean(t * np.log(y) + (1.0 - t) * np.log(1.0 - y)))


def mse_loss(outputs, targets) -> float:
    y = np.asarray(outputs, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if t.shape != y.shape:
        raise LengthMismatch(f"{y.size} outputs vs {t.size} targets")
    if t.size == 0:
        raise LengthMismatch("empty input")
    return float(np.mean((y - t) ** 2))


def objective(model: RelevanceModel, enc: EncodedPairs, targets: np.ndarray, l2: float, loss: Loss = Loss.CE):
    """Regularized training objective over all encoded rows and its gradient.

    ``loss + l2/2 * (||weights||^2 + ||scalar_weights||^2)``; the bias is not
    penalized. Returns ``(value, grad_weights, grad_scalars, grad_bias)``.
    Outputs are not clipped here, so this is the exact smooth objective.
    """
    z = model.raw_scores(enc)
    y = 1.0 / (1.0 + np.exp(-z))
    t = np.asarray(targets, dtype=np.float64)
    n = len(enc)
    if loss is Loss.CE:
        value = float(np.mean(np.logaddexp(0.0, z) - t * z))
        r = y - t
    else:
        value = float(np.mean((y - t) ** 2))
        r = 2.0 * (y - t) * y * (1.0 - y)
    value += 0.5 * l2 * (float(model.weights @ model.weights) + float(model.scalar_weights @ model.scalar_weights))
    row = np.repeat(np.arange(n), np.diff(enc.indptr))
    gw = l2 * model.weights.copy()
    np.add.at(gw, enc.indices, r[row] * enc.values / n)
    gv = enc.scalars.T @ r / n + l2 * model.scalar_weights
    gb = float(r.sum() / n)
    return value, gw, gv, gb


def _targets(pairs: Sequence[QAPair], targets, loss: Loss) -> np.ndarray:
    if targets is None:
        if any(p.label is None for p in pairs):
            raise LossTargetMismatch("pairs without labels need explicit targets")
        t = np.array([float(p.label) for p in pairs])
    else:
        t = np.asarray(targets, dtype=np.float64)
        if t.shape != (len(pairs),):
            raise LengthMismatch(f"{len(pairs)} pairs vs {t.size} targets")
    if loss is Loss.CE and not np.all((t == 0.0) | (t == 1.0)):
        raise LossTargetMismatch("cross-entropy training needs boolean labels")
    if loss is Loss.MSE and not np.all((t >= 0.0) & (t <= 1.0)):
        raise LossTargetMismatch("squared-error training needs targets in [0, 1]")
    return t


def train(
    model: RelevanceModel,
    pairs: Sequence[QAPair] | EncodedPairs,
    cfg: TrainConfig,
    stage: str = "finetune",
    targets=None,
) -> RelevanceModel:
    """Seeded mini-batch SGD from ``model``'s parameters; returns a new model.

    ``stage`` is ``"pretrain"`` or ``"finetune"`` and sets the result's stage
    tag. ``targets`` overrides pair labels (real scores for the MSE loss).
    When ``pairs`` is already encoded, ``targets`` is required.
    """
    if stage not in ("pretrain", "finetune"):
        raise ValueError(f"unknown stage {stage!r}")
    if stage == "pretrain" and model.stage is Stage.FINETUNED:
        raise QamineError("cannot pre-train a fine-tuned model")
    if isinstance(pairs, EncodedPairs):
        enc = pairs
        if targets is None:
            raise LossTargetMismatch("encoded pairs need explicit targets")
        t = np.asarray(targets, dtype=np.float64)
        if t.shape != (len(enc),):
            raise LengthMismatch(f"{len(enc)} pairs vs {t.size} targets")
        _targets([QAPair("", "", "", True)] * len(enc), t, cfg.loss)
    else:
        pairs = list(pairs)
        t = _targets(pairs, targets, cfg.loss)
        enc = encode(pairs)
    if len(enc) == 0:
        raise EmptyDataset("no training pairs")

    out = model.copy()
    rng = np.random.default_rng(cfg.seed)
    bias = np.array([out.bias])
    resid = np.zeros(cfg.batch_size)
    loss_kind = 0 if cfg.loss is Loss.CE else 1
    t = np.ascontiguousarray(t)
    for _ in range(cfg.epochs):
        order = rng.permutation(len(enc)).astype(np.int64)
        kernels.sgd_epoch(
            enc.indptr,
            enc.indices,
            enc.values,
            enc.scalars,
            t,
            order,
            cfg.batch_size,
            cfg.learning_rate,
            cfg.l2,
            loss_kind,
            out.weights,
            out.scalar_weights,
            bias,
            resid,
        )
    out.bias = float(bias[0])
    out.stage = Stage.PRETRAINED if stage == "pretrain" else Stage.FINETUNED
    out.meta = {
        **model.meta,
        stage: {
            "epochs": cfg.epochs,
            "learning_rate": cfg.learning_rate,
            "l2": cfg.l2,
            "batch_size": cfg.batch_size,
            "seed": cfg.seed,
            "loss": cfg.loss.value,
            "n_pairs": len(enc),
        },
    }
    return out


def two_stage(
    pretrain_pairs: Sequence[QAPair],
    finetune_pairs: Sequence[QAPair],
    cfg_pre: TrainConfig = PRETRAIN_DEFAULTS,
    cfg_fine: TrainConfig = FINETUNE_DEFAULTS,
    pretrain_targets=None,
) -> RelevanceModel:
    """Weak pre-training from a fresh model, then gold fine-tuning."""
    if not pretrain_pairs or not finetune_pairs:
        raise EmptyDataset("both training sets must be non-empty")
    pre = train(RelevanceModel(), pretrain_pairs, cfg_pre, "pretrain", pretrain_targets)
    return train(pre, finetune_pairs, cfg_fine, "finetune")


def evaluate(model: RelevanceModel, pairs: Sequence[QAPair], threshold: float = 0.5) -> tuple[float, float]:
    labels = [p.label for p in pairs]
    if any(lab is None for lab in labels):
        raise LossTargetMismatch("evaluation pairs need gold labels")
    scores = model.score(pairs)
    a = auc(scores, labels)
    acc, _ = acc_f1(scores, labels, threshold)
    return a, acc


def model_to_dict(model: RelevanceModel) -> dict:
    nz = np.flatnonzero(model.weights)
    return {
        "format": MODEL_FORMAT,
        "dim": int(model.weights.shape[0]),
        "tokenizer": model.tokenizer,
        "stage": model.stage.value,
        "weights": [[int(i), float(model.weights[i])] for i in nz],
        "scalar_weights": [float(x) for x in model.scalar_weights],
        "bias": model.bias,
        "meta": model.meta,
    }


def model_from_dict(d: dict) -> RelevanceModel:
    if d.get("format") != MODEL_FORMAT:
        raise QamineError(f"unsupported relevance model format {d.get('format')!r}")
    if d.get("tokenizer") != TOKENIZER_VERSION:
        raise QamineError(f"tokenizer {d.get('tokenizer')!r} does not match {TOKENIZER_VERSION!r}")
    w = np.zeros(int(d["dim"]))
    for i, v in d["weights"]:
        w[int(i)] = v
    return RelevanceModel(
        weights=w,
        scalar_weights=np.array(d["scalar_weights"], dtype=np.float64),
        bias=float(d["bias"]),
        stage=Stage(d["stage"]),
        tokenizer=d["tokenizer"],
        meta=d.get("meta", {}),
    )


def dumps_model(model: RelevanceModel) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True, separators=(",", ":")) + "\n"


def loads_model(text: str) -> RelevanceModel:
    return model_from_dict(json.loads(text))


def with_labels(pairs: Sequence[QAPair], labels: Sequence[bool]) -> list[QAPair]:
    return [replace(p, label=bool(lab)) for p, lab in zip(pairs, labels, strict=True)]
