"""Tiled, fused LM-head + cross-entropy with streaming logsumexp.

The hidden states are tiled along the sequence dimension and the vocabulary
weights along the vocab dimension.  Forward streams vocab tiles to build each
row tile's LSE; the backward runs immediately afterwards on the same retained
row-tile logits (no recomputation), turning them into softmax-minus-onehot
gradients in place.  Peak transient storage is therefore one row tile of
logits (rows_per_tile x vocab) instead of the full N x vocab matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import NEG_INF, lse_merge, matmul, row_logsumexp


@dataclass(frozen=True)
class FusionConfig:
    rows_per_tile: int  # sequence tile (B_s)
    vocab_per_tile: int  # vocabulary tile (B_v)

    def __post_init__(self):
        if self.rows_per_tile < 1 or self.vocab_per_tile < 1:
            raise ValueError(
                f"tile sizes must be >= 1, got rows={self.rows_per_tile}, "
                f"vocab={self.vocab_per_tile}"
            )


@dataclass
class FusedLossResult:
    loss: np.ndarray  # per-token nats
    dh: np.ndarray
    dw: np.ndarray
    peak_aux_elements: int


def fused_lmhead_loss(h, w_head, targets, cfg: FusionConfig) -> FusedLossResult:
    """Fused forward+backward; values identical to the naive reference.

    ``peak_aux_elements`` counts the largest live logits-class buffer (the
    retained row-tile of logits that the fusion bounds); per-tile vectors and
    views of the persistent inputs are excluded from the counter.
    """
    h = np.asarray(h, dtype=np.float64)
    w_head = np.asarray(w_head, dtype=np.float64)
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

    loss = np.zeros(n)
    dh = np.zeros_like(h)
    dw = np.zeros_like(w_head)
    peak = 0
    bs, bv = cfg.rows_per_tile, cfg.vocab_per_tile

    for r0 in range(0, n, bs):  # row tiles reduced in fixed order
        r1 = min(r0 + bs, n)
        h_tile = h[r0:r1]
        y_tile = y[r0:r1]
        rows = r1 - r0
        w_target = w_head[y_tile]  # rows x d gather of target embeddings
        logits = np.empty((rows, v))  # retained for this row tile only
        peak = max(peak, rows * v)
        lse = np.full(rows, NEG_INF)
        for c0 in range(0, v, bv):
            c1 = min(c0 + bv, v)
            block = matmul(h_tile, w_head[c0:c1].T)
            logits[:, c0:c1] = block
            lse = lse_merge(lse, row_logsumexp(block))
        loss[r0:r1] = -np.einsum("ij,ij->i", h_tile, w_target, optimize=False) + lse

        # Backward immediately, reusing the stored logits in place.
        for c0 in range(0, v, bv):
            c1 = min(c0 + bv, v)
            block = logits[:, c0:c1]
            np.exp(block - lse[:, None], out=block)
            in_tile = (y_tile >= c0) & (y_tile < c1)
            block[np.nonzero(in_tile)[0], y_tile[in_tile] - c0] -= 1.0
            dh[r0:r1] += matmul(block, w_head[c0:c1])
            dw[c0:c1] += matmul(block.T, h_tile)

    return FusedLossResult(loss=loss, dh=dh, dw=dw, peak_aux_elements=peak)


def memory_footprint(n: int, vocab: int, dim: int, cfg: FusionConfig) -> tuple[int, int]:
    """(naive_elements, fused_peak_elements) of logits-class storage.

    Naive materializes the full N x vocab logits; the fusion holds one row
    tile of min(B_s, N) x vocab at a time.  Hidden/weight tiles are views of
    persistent arrays and do not scale with N, so they are left out of both
    counts; ``dim`` is accepted to document the tile working set
    (B_s*d + B_v*d + O(B_s) extra elements).
    """
    if n < 1 or vocab < 1 or dim < 1:
        raise ValueError("n, vocab, dim must all be >= 1")
    naive = n * vocab
    fused = min(cfg.rows_per_tile, n) * vocab
    return naive, fused


def tile_working_set(n: int, vocab: int, dim: int, cfg: FusionConfig) -> int:
    """Elements of per-tile scratch beyond the retained logits tile."""
    bs = min(cfg.rows_per_tile, n)
    bv = min(cfg.vocab_per_tile, vocab)
    return bs * dim + bv * dim + 4 * bs
