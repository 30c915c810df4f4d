"""Per-domain multi-label narrative classifier.

A linear head over frozen document embeddings, trained with binary focal
loss and AdamW under a warmup-then-linear-decay schedule. Decision
thresholds are tuned per label on validation data to favour recall.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Dataset, encode_labels
from .embedding import Embedder
from .taxonomy import Taxonomy

log = logging.getLogger(__name__)

PROB_EPS = 1e-7
MODEL_FORMAT = "narrlens-classifier/1"


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class FocalLossParams:
    gamma: float = 2.0
    alpha: float = 0.25

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 8
    batch_size: int = 8
    learning_rate: float = 2e-5
    adam_epsilon: float = 1e-8
    weight_decay: float = 0.05
    warmup_fraction: float = 0.10
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    tuning_beta: float = 2.0
    threshold_mode: str = "per_label"  # or "global"

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("epochs, batch_size and learning_rate must be positive")
        if self.adam_epsilon <= 0 or self.weight_decay < 0:
            raise ValueError("adam_epsilon must be positive and weight_decay non-negative")
        if not 0 <= self.warmup_fraction < 1:
            raise ValueError(f"warmup_fraction must be in [0, 1), got {self.warmup_fraction}")
        if self.threshold_mode not in ("per_label", "global"):
            raise ValueError(f"unknown threshold mode {self.threshold_mode!r}")


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))),
                    np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


def focal_loss(probs, targets, params: FocalLossParams = FocalLossParams()) -> float:
    """Mean binary focal loss over labels."""
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {y.shape}")
    p = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    a, g = params.alpha, params.gamma
    per_label = (-a * y * (1 - p) ** g * np.log(p)
                 - (1 - a) * (1 - y) * p ** g * np.log1p(-p))
    return float(per_label.mean())


def focal_loss_gradient(logits, targets, params: FocalLossParams = FocalLossParams()) -> np.ndarray:
    """Gradient of :func:`focal_loss` (applied to ``sigmoid(logits)``) w.r.t. the logits."""
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if z.shape != y.shape:
        raise ValueError(f"length mismatch: {z.shape} vs {y.shape}")
    a, g = params.alpha, params.gamma
    p = sigmoid(z)
    q = sigmoid(-z)  # 1 - p without cancellation
    log_p = -np.logaddexp(0.0, -z)
    log_q = -np.logaddexp(0.0, z)
    pos = a * q ** g * (g * p * log_p - q)
    neg = (1 - a) * p ** g * (p - g * q * log_q)
    return (y * pos + (1 - y) * neg) / z.size


def lr_multiplier(step: int, total_steps: int, warmup_steps: int) -> float:
    """Linear ramp from 0 over ``warmup_steps``, then linear decay to 0."""
    if step < warmup_steps:
        return step / warmup_steps
    return max(0.0, (total_steps - step) / max(1, total_steps - warmup_steps))


@dataclass
class ThresholdVector:
    values: np.ndarray
    tuning_beta: float = 2.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if np.any(self.values <= 0) or np.any(self.values >= 1):
            raise ValueError("thresholds must lie strictly inside (0, 1)")


def f_beta(tp: int, fp: int, fn: int, beta: float) -> float:
    b2 = beta * beta
    denom = (1 + b2) * tp + b2 * fn + fp
    return (1 + b2) * tp / denom if denom else 0.0


def _best_threshold(scores: np.ndarray, gold: np.ndarray, beta: float) -> tuple[float, float]:
    """Sweep the sorted unique scores; lowest threshold wins ties."""
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], gold[order]
    tp_cum = np.cumsum(y)
    fp_cum = np.cumsum(1 - y)
    total_pos = int(y.sum())
    best_f, best_t = -1.0, 0.5
    # Walk unique scores from lowest to highest so ">" keeps the lowest on ties.
    last_of_group = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    for pos in last_of_group[::-1]:
        tp, fp = int(tp_cum[pos]), int(fp_cum[pos])
        f = f_beta(tp, fp, total_pos - tp, beta)
        if f > best_f:
            best_f, best_t = f, float(s[pos])
    return best_t, best_f


def tune_thresholds(val_scores, val_gold, beta: float = 2.0, mode: str = "per_label") -> ThresholdVector:
    scores = np.asarray(val_scores, dtype=np.float64)
    gold = np.asarray(val_gold, dtype=np.int64)
    if scores.shape != gold.shape or scores.ndim != 2:
        raise ValueError(f"shape mismatch: scores {scores.shape} vs gold {gold.shape}")
    n_labels = scores.shape[1]
    if mode == "global":
        if gold.sum() == 0:
            return ThresholdVector(np.full(n_labels, 0.5), beta)
        t, _ = _best_threshold(scores.ravel(), gold.ravel(), beta)
        return ThresholdVector(np.full(n_labels, _open_unit(t)), beta)
    out = np.full(n_labels, 0.5)
    for j in range(n_labels):
        if gold[:, j].sum() == 0:
            continue
        t, _ = _best_threshold(scores[:, j], gold[:, j], beta)
        out[j] = _open_unit(t)
    return ThresholdVector(out, beta)


def _open_unit(t: float) -> float:
    # Sigmoid outputs may saturate to exactly 0 or 1 in float64.
    return min(max(t, np.nextafter(0.0, 1.0)), np.nextafter(1.0, 0.0))


@dataclass
class ClassifierModel:
    domain: str
    vocab: list[str]
    weights: np.ndarray  # (dim, n_labels)
    bias: np.ndarray  # (n_labels,)
    thresholds: ThresholdVector
    config: TrainingConfig = field(default_factory=TrainingConfig)
    loss: FocalLossParams = field(default_factory=FocalLossParams)
    loss_curve: list[float] = field(default_factory=list)

    def __post_init__(self):
        n = len(self.vocab)
        if self.weights.ndim != 2 or self.weights.shape[1] != n:
            raise ModelError(f"weights shape {self.weights.shape} inconsistent with {n} labels")
        if self.bias.shape != (n,) or self.thresholds.values.shape != (n,):
            raise ModelError("bias/threshold dimensions inconsistent with vocabulary")

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    def fingerprint(self) -> str:
        meta = {"domain": self.domain, "vocab": self.vocab, "dim": self.dim,
                "config": asdict(self.config), "loss": asdict(self.loss)}
        return hashlib.sha256(json.dumps(meta, sort_keys=True).encode()).hexdigest()

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "domain": self.domain,
            "vocab": self.vocab,
            "dim": self.dim,
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
            "thresholds": self.thresholds.values.tolist(),
            "tuning_beta": self.thresholds.tuning_beta,
            "config": asdict(self.config),
            "loss": asdict(self.loss),
            "loss_curve": self.loss_curve,
            "fingerprint": self.fingerprint(),
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ClassifierModel":
        path = Path(path)
        if not path.is_file():
            raise ModelError(f"model file not found: {path}")
        raw = json.loads(path.read_text(encoding="utf-8"))
        if raw.get("format") != MODEL_FORMAT:
            raise ModelError(f"{path}: unsupported model format {raw.get('format')!r}")
        model = cls(
            domain=raw["domain"],
            vocab=list(raw["vocab"]),
            weights=np.asarray(raw["weights"], dtype=np.float64).reshape(raw["dim"], len(raw["vocab"])),
            bias=np.asarray(raw["bias"], dtype=np.float64),
            thresholds=ThresholdVector(raw["thresholds"], raw["tuning_beta"]),
            config=TrainingConfig(**raw["config"]),
            loss=FocalLossParams(**raw["loss"]),
            loss_curve=list(raw.get("loss_curve", [])),
        )
        if model.fingerprint() != raw.get("fingerprint"):
            raise ModelError(f"{path}: fingerprint mismatch, file is stale or corrupted")
        return model


def predict_scores(model: ClassifierModel, article_vector: np.ndarray) -> np.ndarray:
    x = np.asarray(article_vector, dtype=np.float64)
    if x.shape != (model.dim,):
        raise ValueError(f"vector dim {x.shape} does not match model dim {model.dim}")
    return sigmoid(x @ model.weights + model.bias)


def predict_labels(model: ClassifierModel, article_vector: np.ndarray) -> list[str]:
    scores = predict_scores(model, article_vector)
    return [lab for lab, s, t in zip(model.vocab, scores, model.thresholds.values) if s >= t]


def candidate_labels(model: ClassifierModel, article_vector: np.ndarray, fallback_k: int = 3) -> list[str]:
    """Labels at or above threshold by descending score, else the top ``fallback_k``."""
    scores = predict_scores(model, article_vector)
    order = sorted(range(len(scores)), key=lambda j: (-scores[j], j))
    above = [model.vocab[j] for j in order if scores[j] >= model.thresholds.values[j]]
    return above or [model.vocab[j] for j in order[:fallback_k]]


def embed_documents(dataset: Dataset, embedder: Embedder) -> np.ndarray:
    vectors = embedder.embed([a.text for a in dataset.articles])
    return np.vstack(vectors) if vectors else np.zeros((0, embedder.dim))


def train(train_set: Dataset, val_set: Dataset, embedder: Embedder, taxonomy: Taxonomy,
          cfg: TrainingConfig = TrainingConfig(),
          loss: FocalLossParams = FocalLossParams()) -> ClassifierModel:
    if len(train_set) == 0:
        raise ModelError("empty training set")
    vocab = taxonomy.narratives
    X = embed_documents(train_set, embedder)
    Y = encode_labels(train_set, vocab, "main").values.astype(np.float64)
    n, dim = X.shape
    n_labels = len(vocab)

    W = np.zeros((dim, n_labels))
    b = np.zeros(n_labels)
    m_W, v_W = np.zeros_like(W), np.zeros_like(W)
    m_b, v_b = np.zeros_like(b), np.zeros_like(b)

    steps_per_epoch = math.ceil(n / cfg.batch_size)
    total = cfg.epochs * steps_per_epoch
    warmup = int(cfg.warmup_fraction * total)
    rng = random.Random(cfg.seed)
    curve = []
    step = 0
    for _ in range(cfg.epochs):
        order = list(range(n))
        rng.shuffle(order)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            xb, yb = X[batch], Y[batch]
            logits = xb @ W + b
            # Batch mean of per-article label-mean loss; the gradient helper
            # already divides by batch * labels.
            epoch_loss += focal_loss(sigmoid(logits), yb, loss) * len(batch)
            G = focal_loss_gradient(logits, yb, loss)
            gW, gb = xb.T @ G, G.sum(axis=0)

            lr = cfg.learning_rate * lr_multiplier(step, total, warmup)
            step += 1
            c1 = 1 - cfg.beta1 ** step
            c2 = 1 - cfg.beta2 ** step
            m_W = cfg.beta1 * m_W + (1 - cfg.beta1) * gW
            v_W = cfg.beta2 * v_W + (1 - cfg.beta2) * gW * gW
            m_b = cfg.beta1 * m_b + (1 - cfg.beta1) * gb
            v_b = cfg.beta2 * v_b + (1 - cfg.beta2) * gb * gb
            W = W * (1 - lr * cfg.weight_decay)
            W = W - lr * (m_W / c1) / (np.sqrt(v_W / c2) + cfg.adam_epsilon)
            b = b - lr * (m_b / c1) / (np.sqrt(v_b / c2) + cfg.adam_epsilon)
        curve.append(epoch_loss / n)
        log.debug("epoch %d loss %.6f", len(curve), curve[-1])

    model = ClassifierModel(taxonomy.domain or "ALL", vocab, W, b,
                            ThresholdVector(np.full(n_labels, 0.5), cfg.tuning_beta),
                            cfg, loss, curve)
    if len(val_set):
        Xv = embed_documents(val_set, embedder)
        scores = sigmoid(Xv @ W + b)
        gold = encode_labels(val_set, vocab, "main").values
        model.thresholds = tune_thresholds(scores, gold, cfg.tuning_beta, cfg.threshold_mode)
    else:
        log.warning("no validation articles; keeping default thresholds of 0.5")
    return model


def score_matrix(model: ClassifierModel, vectors: Sequence[np.ndarray]) -> np.ndarray:
    return np.vstack([predict_scores(model, v) for v in vectors])
