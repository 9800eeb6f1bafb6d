"""Single-device reference attention and LM-head cross-entropy.

Everything here materializes the full score matrix and full logits; it is the
ground truth that the distributed ring passes and the tiled LM-head fusion are
checked against.  The scaled-dot-product convention: scores carry the 1/sqrt(d)
factor in the forward pass, and the matching factor appears in dQ and dK in
the backward pass.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .masks import MaskSpec, dense_mask, validate_mask
from .numerics import (
    NEG_INF,
    as_matrix,
    exp_shifted,
    matmul,
    row_logsumexp,
    rowsum_hadamard,
)


@dataclass(frozen=True)
class AttentionParams:
    """Square input/output projections for one attention layer."""

    dim: int
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_attn: np.ndarray

    def __post_init__(self):
        for name in ("w_q", "w_k", "w_v", "w_attn"):
            w = getattr(self, name)
            if w.shape != (self.dim, self.dim):
                raise ValueError(
                    f"{name} must be {self.dim}x{self.dim}, got {w.shape}"
                )


@dataclass(frozen=True)
class AttentionResult:
    o: np.ndarray
    lse: np.ndarray


@dataclass(frozen=True)
class AttentionGrads:
    dq: np.ndarray
    dk: np.ndarray
    dv: np.ndarray


def project_qkv(x, params: AttentionParams):
    """(Q, K, V) = (X Wq, X Wk, X Wv)."""
    x = as_matrix(x, "input embeddings")
    if x.shape[1] != params.dim:
        raise ValueError(f"input has {x.shape[1]} columns, params expect {params.dim}")
    return matmul(x, params.w_q), matmul(x, params.w_k), matmul(x, params.w_v)


def masked_scores(q, k, mask: MaskSpec) -> np.ndarray:
    """S = Q K^T / sqrt(d) with masked-out entries replaced by -inf."""
    q = as_matrix(q, "Q")
    k = as_matrix(k, "K")
    if q.shape[1] != k.shape[1]:
        raise ValueError(f"Q has dim {q.shape[1]} but K has dim {k.shape[1]}")
    validate_mask(mask, max(q.shape[0], k.shape[0]))
    s = matmul(q, k.T) / np.sqrt(q.shape[1])
    allowed = dense_mask(mask, q.shape[0], k.shape[0])
    return np.where(allowed, s, NEG_INF)


def attention_forward(q, k, v, mask: MaskSpec) -> AttentionResult:
    """Exact masked attention: O = softmax(QK^T/sqrt(d)) V, plus the row LSE."""
    q = as_matrix(q, "Q")
    k = as_matrix(k, "K")
    v = as_matrix(v, "V")
    if k.shape[0] != v.shape[0]:
        raise ValueError(f"K has {k.shape[0]} rows but V has {v.shape[0]}")
    if q.shape[1] != k.shape[1] or k.shape[1] != v.shape[1]:
        raise ValueError("Q, K, V must share the model dimension")
    s = masked_scores(q, k, mask)
    lse = row_logsumexp(s)
    if np.any(lse == NEG_INF):
        bad = int(np.nonzero(lse == NEG_INF)[0][0])
        raise ValueError(f"query row {bad + 1} has no unmasked key")
    p = exp_shifted(s, lse)
    return AttentionResult(o=matmul(p, v), lse=lse)


def attention_backward(q, k, v, o, lse, do, mask: MaskSpec) -> AttentionGrads:
    """Analytic gradients of sum(O * dO) with respect to Q, K, V.

    dP = dO V^T, D = rowsum(dO * O), dS = P * (dP - D); masked positions have
    P == 0 exactly, so they contribute nothing.
    """
    q = as_matrix(q, "Q")
    k = as_matrix(k, "K")
    v = as_matrix(v, "V")
    do = as_matrix(do, "dO")
    if do.shape != (q.shape[0], v.shape[1]):
        raise ValueError(f"dO must be {q.shape[0]}x{v.shape[1]}, got {do.shape}")
    scale = 1.0 / np.sqrt(q.shape[1])
    s = masked_scores(q, k, mask)
    p = exp_shifted(s, np.asarray(lse, dtype=np.float64))
    dv = matmul(p.T, do)
    dp = matmul(do, v.T)
    d_vec = rowsum_hadamard(do, as_matrix(o, "O"))
    ds = p * (dp - d_vec[:, None])
    dq = matmul(ds, k) * scale
    dk = matmul(ds.T, q) * scale
    return AttentionGrads(dq=dq, dk=dk, dv=dv)


@dataclass(frozen=True)
class LmHeadResult:
    loss: np.ndarray  # per-token nats
    dh: np.ndarray
    dw: np.ndarray


def naive_lmhead_loss(h, w_head, targets) -> LmHeadResult:
    """Full-materialization LM head + cross entropy with analytic gradients.

    loss[i] = -logits[i, y_i] + logsumexp(logits[i]); gradients are those of
    sum(loss): dLogits = softmax(logits) - onehot(y).
    """
    h = as_matrix(h, "H")
    w_head = as_matrix(w_head, "W_head")
    y = np.asarray(targets, dtype=np.int64)
    n, d = h.shape
    v = w_head.shape[0]
    if w_head.shape[1] != d:
        raise ValueError(f"W_head must have {d} columns, got {w_head.shape[1]}")
    if y.shape != (n,):
        raise ValueError(f"targets must have length {n}, got shape {y.shape}")
    if np.any(y < 0) or np.any(y >= v):
        bad = int(np.nonzero((y < 0) | (y >= v))[0][0])
        raise ValueError(f"target index {y[bad]} at row {bad} outside [0, {v})")
    logits = matmul(h, w_head.T)
    lse = row_logsumexp(logits)
    loss = -logits[np.arange(n), y] + lse
    dlogits = exp_shifted(logits, lse)
    dlogits[np.arange(n), y] -= 1.0
    dh = matmul(dlogits, w_head)
    dw = matmul(dlogits.T, h)
    return LmHeadResult(loss=loss, dh=dh, dw=dw)


def finite_diff_check(
    f: Callable[[np.ndarray], float],
    x: np.ndarray,
    analytic_grad: np.ndarray,
    h: float = 1e-6,
) -> float:
    """Max relative error between central differences of f and analytic_grad.

    The relative denominator is max(|analytic|, 1e-8) per entry so that exact
    zeros do not blow up the report.
    """
    if h <= 0:
        raise ValueError(f"step size must be positive, got {h}")
    x = as_matrix(x, "finite-difference point")
    analytic = as_matrix(analytic_grad, "analytic gradient")
    if analytic.shape != x.shape:
        raise ValueError(f"gradient shape {analytic.shape} != point shape {x.shape}")
    worst = 0.0
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            bumped = x.copy()
            bumped[i, j] = x[i, j] + h
            f_plus = float(f(bumped))
            bumped[i, j] = x[i, j] - h
            f_minus = float(f(bumped))
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise ValueError(f"f is non-finite near entry ({i}, {j})")
            numeric = (f_plus - f_minus) / (2.0 * h)
            denom = max(abs(analytic[i, j]), 1e-8)
            worst = max(worst, float(abs(numeric - analytic[i, j]) / denom))
    return worst
