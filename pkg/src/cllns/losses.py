"""Training losses on policy scores, each returning ``(loss, dloss/dscores)``."""
from __future__ import annotations

import numpy as np

BCE_CLAMP = 1e-7


def _as_matrix(actions, n: int) -> np.ndarray:
    if len(actions) == 0:
        return np.zeros((0, n))
    return np.stack([np.asarray(getattr(a, "mask", a), dtype=np.float64) for a in actions])


def info_nce(scores, positives, negatives, tau: float):
    """Contrastive loss of the score vector against positive and negative masks.

    For each positive ``a`` the term is ``-log softmax`` of ``a.scores / tau``
    among ``{a} | negatives``; the loss is the mean over positives.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    if len(positives) == 0:
        raise ValueError("at least one positive sample is required")
    s = np.asarray(scores, dtype=np.float64)
    pos = _as_matrix(positives, s.size)
    neg = _as_matrix(negatives, s.size)
    lp = pos @ s / tau
    ln = neg @ s / tau
    loss = 0.0
    grad = np.zeros_like(s)
    for a, l_a in zip(pos, lp):
        logits = np.concatenate([[l_a], ln])
        top = logits.max()
        ex = np.exp(logits - top)
        z = ex.sum()
        loss += top + np.log(z) - l_a
        prob = ex / z
        grad += ((prob[0] - 1.0) * a + prob[1:] @ neg) / tau
    k = pos.shape[0]
    return float(loss / k), grad / k


def imitation_bce(scores, positives):
    """Mean per-variable binary cross-entropy against the first (best) positive mask."""
    if len(positives) == 0:
        raise ValueError("at least one positive sample is required")
    s = np.asarray(scores, dtype=np.float64)
    y = _as_matrix(positives[:1], s.size)[0]
    sc = np.clip(s, BCE_CLAMP, 1.0 - BCE_CLAMP)
    n = s.size
    loss = -np.mean(y * np.log(sc) + (1.0 - y) * np.log(1.0 - sc))
    inside = (s > BCE_CLAMP) & (s < 1.0 - BCE_CLAMP)
    grad = np.where(inside, (sc - y) / (sc * (1.0 - sc)) / n, 0.0)
    return float(loss), grad
