"""Training objectives as pure functions from score vectors to (loss, grad).

All three losses use overflow-free forms: log-sum-exp with max subtraction
and softplus(x) = max(x, 0) + ln(1 + e^-|x|), stable for scores up to ~1e3
in magnitude.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["LossOutput", "lce", "ranknet", "bce", "softplus", "sigmoid"]


@dataclass(frozen=True)
class LossOutput:
    value: float
    grad: np.ndarray


def softplus(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def lce(scores: np.ndarray) -> LossOutput:
    """Contrastive loss of the positive (index 0) against hard negatives (1..h).

    value = -ln( e^{s_0} / sum_j e^{s_j} ), grad = softmax(s) - onehot(0).
    """
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1 or s.size < 2:
        raise ValueError(f"lce needs >= 2 scores, got shape {s.shape}")
    if not np.all(np.isfinite(s)):
        raise ValueError("lce scores must be finite")
    shifted = s - s.max()
    exp = np.exp(shifted)
    total = exp.sum()
    value = float(np.log(total) - shifted[0])
    grad = exp / total
    grad[0] -= 1.0
    return LossOutput(value, grad)


def ranknet(scores: np.ndarray) -> LossOutput:
    """Pairwise distillation loss against a teacher order.

    Index i carries teacher rank i+1; every pair where the teacher prefers i
    over j contributes softplus(s_j - s_i), penalizing the student for
    scoring the preferred document lower.
    """
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1 or s.size < 2:
        raise ValueError(f"ranknet needs >= 2 scores, got shape {s.shape}")
    if not np.all(np.isfinite(s)):
        raise ValueError("ranknet scores must be finite")
    # diff[i, j] = s_j - s_i; only pairs i < j (teacher rank r_i < r_j) count
    diff = s[None, :] - s[:, None]
    upper = np.triu(np.ones((s.size, s.size), dtype=bool), k=1)
    value = float(softplus(diff[upper]).sum())
    p = np.where(upper, sigmoid(diff), 0.0)
    grad = p.sum(axis=0) - p.sum(axis=1)
    return LossOutput(value, grad)


def bce(score: float, label: int) -> LossOutput:
    """Binary cross-entropy on a sigmoid relevance probability.

    value = softplus(s) - label * s, grad = sigmoid(s) - label.
    """
    if label not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {label!r}")
    s = np.asarray([float(score)])
    if not np.isfinite(s[0]):
        raise ValueError("bce score must be finite")
    value = float(softplus(s)[0]) - label * float(score)
    grad = sigmoid(s) - label
    return LossOutput(value, grad)
