"""Attention mask specifications over 1-based global token positions.

A mask answers one question: may query token q attend to key token k?  The
four supported kinds:

* ``full``            every pair allowed
* ``causal``          k <= q (attend to self and all preceding tokens)
* ``sliding_window``  causal window of w tokens: 0 <= q - k < w
* ``block_sparse``    block-granular 0/1 matrix; pair allowed iff the blocks
                      containing q and k are allowed
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FULL = "full"
CAUSAL = "causal"
SLIDING_WINDOW = "sliding_window"
BLOCK_SPARSE = "block_sparse"

MASK_KINDS = (FULL, CAUSAL, SLIDING_WINDOW, BLOCK_SPARSE)


@dataclass(frozen=True, eq=False)
class MaskSpec:
    kind: str
    window: int | None = None
    block_len: int | None = None
    block_mask: np.ndarray | None = None

    def describe(self) -> str:
        if self.kind == SLIDING_WINDOW:
            return f"sliding_window(w={self.window})"
        if self.kind == BLOCK_SPARSE:
            side = self.block_mask.shape[0] if self.block_mask is not None else 0
            return f"block_sparse(block_len={self.block_len}, blocks={side})"
        return self.kind


def full_mask() -> MaskSpec:
    return MaskSpec(kind=FULL)


def causal_mask() -> MaskSpec:
    return MaskSpec(kind=CAUSAL)


def sliding_window_mask(window: int) -> MaskSpec:
    return MaskSpec(kind=SLIDING_WINDOW, window=int(window))


def block_sparse_mask(block_mask, block_len: int) -> MaskSpec:
    bm = np.asarray(block_mask, dtype=np.int64)
    if bm.ndim != 2 or bm.shape[0] != bm.shape[1]:
        raise ValueError(f"block_mask must be square, got shape {bm.shape}")
    if not np.isin(bm, (0, 1)).all():
        raise ValueError("block_mask entries must be 0 or 1")
    return MaskSpec(kind=BLOCK_SPARSE, block_len=int(block_len), block_mask=bm)


def validate_mask(mask: MaskSpec, seq_len: int) -> None:
    """Check mask parameters against a sequence length; raises ValueError."""
    if mask.kind not in MASK_KINDS:
        raise ValueError(f"unknown mask kind {mask.kind!r}, expected one of {MASK_KINDS}")
    if mask.kind == SLIDING_WINDOW:
        if mask.window is None or not (1 <= mask.window <= seq_len):
            raise ValueError(
                f"sliding_window width must satisfy 1 <= w <= {seq_len}, got {mask.window}"
            )
    if mask.kind == BLOCK_SPARSE:
        if mask.block_len is None or mask.block_len < 1:
            raise ValueError("block_sparse requires block_len >= 1")
        if seq_len % mask.block_len != 0:
            raise ValueError(
                f"block_len {mask.block_len} must divide sequence length {seq_len}"
            )
        side = seq_len // mask.block_len
        if mask.block_mask is None or mask.block_mask.shape != (side, side):
            have = None if mask.block_mask is None else mask.block_mask.shape
            raise ValueError(
                f"block_mask must be {side}x{side} for N={seq_len}, "
                f"block_len={mask.block_len}, got {have}"
            )


def allowed_pairs(mask: MaskSpec, q_ids, k_ids) -> np.ndarray:
    """Boolean matrix of allowed (query, key) pairs for 1-based global ids."""
    q = np.asarray(q_ids, dtype=np.int64).reshape(-1, 1)
    k = np.asarray(k_ids, dtype=np.int64).reshape(1, -1)
    if mask.kind == FULL:
        return np.ones((q.shape[0], k.shape[1]), dtype=bool)
    if mask.kind == CAUSAL:
        return k <= q
    if mask.kind == SLIDING_WINDOW:
        gap = q - k
        return (gap >= 0) & (gap < mask.window)
    if mask.kind == BLOCK_SPARSE:
        qb = (q - 1) // mask.block_len
        kb = (k - 1) // mask.block_len
        return mask.block_mask[qb, kb] == 1
    raise ValueError(f"unknown mask kind {mask.kind!r}")


def dense_mask(mask: MaskSpec, n_q: int, n_k: int | None = None) -> np.ndarray:
    """Full N_q x N_k boolean mask with global positions 1..N."""
    if n_k is None:
        n_k = n_q
    return allowed_pairs(mask, np.arange(1, n_q + 1), np.arange(1, n_k + 1))
