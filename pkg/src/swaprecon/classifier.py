"""Linear edge classifier over fused multi-scale features, plus the
dual-threshold decision rule that combines it with the segmentation score.

The classifier trains jointly with the feature-fusion weights (one scalar
per scale) on a frozen backbone's features.  Candidate edges are heavily
imbalanced toward negatives, so each epoch subsamples negatives to a
configurable ratio before batching.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .optim import Adam
from .segnet import PROB_CLAMP, TrainConfig


@dataclass
class ClassifierParams:
    """Weight vector and bias of the linear head."""

    weights: np.ndarray
    bias: float = 0.0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64).ravel()

    @property
    def parameter_count(self) -> int:
        return self.weights.size + 1

    @classmethod
    def init(cls, dim: int) -> "ClassifierParams":
        return cls(np.zeros(dim), 0.0)


@dataclass(frozen=True)
class DecisionThresholds:
    """Minimum segmentation and classification scores for accepting an edge."""

    seg: float = 0.5
    cls: float = 0.5

    def __post_init__(self):
        for name, value in (("seg", self.seg), ("cls", self.cls)):
            if not (0.0 <= value <= 1.0):
                raise ValueError(f"{name} threshold must be in [0, 1], got {value}")


def _sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def classify(feature: np.ndarray, p: ClassifierParams) -> float:
    """Probability that the edge is real: sigmoid(w . f + b)."""
    feature = np.asarray(feature, dtype=np.float64).ravel()
    if not np.isfinite(feature).all():
        raise ValueError("feature vector contains non-finite values")
    if feature.shape != p.weights.shape:
        raise ValueError(f"feature dim {feature.size} != weights dim {p.weights.size}")
    return float(_sigmoid(np.array([feature @ p.weights + p.bias]))[0])


def classify_batch(features: np.ndarray, p: ClassifierParams) -> np.ndarray:
    """Vectorized classify over rows of a (n, dim) matrix."""
    features = np.asarray(features, dtype=np.float64)
    return _sigmoid(features @ p.weights + p.bias)


def bce_loss(pred, label):
    """Mean binary cross-entropy with probability clamping.

    Returns (loss, grad) where grad is d(loss)/d(pred); the gradient is
    zero where clamping is active.
    """
    pred = np.asarray(pred, dtype=np.float64).ravel()
    label = np.asarray(label, dtype=np.float64).ravel()
    if pred.size == 0:
        raise ValueError("empty prediction list")
    if pred.shape != label.shape:
        raise ValueError(f"{pred.size} predictions vs {label.size} labels")
    clamped = np.clip(pred, PROB_CLAMP, 1.0 - PROB_CLAMP)
    loss = float(
        -(label * np.log(clamped) + (1.0 - label) * np.log1p(-clamped)).mean()
    )
    grad = (clamped - label) / (clamped * (1.0 - clamped)) / pred.size
    grad = np.where((pred > PROB_CLAMP) & (pred < 1.0 - PROB_CLAMP), grad, 0.0)
    return loss, grad


def decide(seg_score: float, cls_score: float, th: DecisionThresholds) -> int:
    """1 iff both scores strictly exceed their thresholds."""
    if not (np.isfinite(seg_score) and np.isfinite(cls_score)):
        raise ValueError("scores must be finite")
    return int(seg_score > th.seg and cls_score > th.cls)


def head_loss_and_grads(stacks: np.ndarray, labels: np.ndarray,
                        weights: np.ndarray, bias: float, fusion: np.ndarray):
    """BCE loss of the fused linear head on a batch, with its gradients.

    stacks is (b, scales, dim).  Returns (loss, grad_weights, grad_bias,
    grad_fusion); this is the analytic step used inside train_classifier.
    """
    fused = np.einsum("s,bsd->bd", fusion, stacks)
    logits = fused @ weights + bias
    pred = _sigmoid(logits)
    loss, grad_pred = bce_loss(pred, labels)
    grad_logits = grad_pred * pred * (1.0 - pred)
    grad_w = fused.T @ grad_logits
    grad_b = float(grad_logits.sum())
    grad_fusion = (stacks @ weights).T @ grad_logits
    return loss, grad_w, grad_b, grad_fusion


def train_classifier(features: np.ndarray, labels: np.ndarray, tcfg: TrainConfig,
                     neg_ratio: float = 3.0):
    """Train fusion weights and the linear head on per-scale feature stacks.

    features has shape (n, scales, dim): one stacked per-scale vector set
    per candidate edge.  labels are {0, 1}.  Each epoch keeps every
    positive and a deterministic subsample of negatives (neg_ratio per
    positive).  Returns (ClassifierParams, fusion_weights, loss_curve).
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64).ravel()
    if features.ndim != 3:
        raise ValueError(f"expected (n, scales, dim) features, got {features.shape}")
    if len(features) != len(labels):
        raise ValueError("feature/label count mismatch")
    pos_idx = np.flatnonzero(labels == 1.0)
    neg_idx = np.flatnonzero(labels == 0.0)
    if len(pos_idx) == 0 or len(neg_idx) == 0:
        raise ValueError("training data must contain both classes")

    n, scales, dim = features.shape
    params = ClassifierParams.init(dim)
    fusion = np.full(scales, 1.0 / scales)
    bias = np.zeros(1)
    rng = np.random.default_rng(tcfg.seed)
    weight_decay = tcfg.decay if tcfg.decay_mode == "weight" else 0.0
    opt = Adam([params.weights.shape, bias.shape, fusion.shape],
               lr=tcfg.lr, weight_decay=weight_decay)
    arrays = [params.weights, bias, fusion]

    keep_negs = min(len(neg_idx), int(round(neg_ratio * len(pos_idx))))
    curve = []
    for epoch in range(tcfg.epochs):
        chosen = rng.choice(neg_idx, size=keep_negs, replace=False)
        epoch_idx = rng.permutation(np.concatenate([pos_idx, chosen]))
        epoch_loss = 0.0
        batches = 0
        for start in range(0, len(epoch_idx), tcfg.batch_size):
            idx = epoch_idx[start:start + tcfg.batch_size]
            loss, grad_w, grad_b, grad_fusion = head_loss_and_grads(
                features[idx], labels[idx], params.weights, bias[0], fusion
            )
            opt.step(arrays, [grad_w, np.array([grad_b]), grad_fusion])
            epoch_loss += loss
            batches += 1
        if tcfg.decay_mode == "lr":
            opt.lr *= 1.0 - tcfg.decay
        curve.append(epoch_loss / batches)
        if tcfg.log_every and (epoch + 1) % tcfg.log_every == 0:
            print(f"classifier epoch {epoch + 1}/{tcfg.epochs}: loss {curve[-1]:.5f}")
    params.bias = float(bias[0])
    return params, fusion, curve
