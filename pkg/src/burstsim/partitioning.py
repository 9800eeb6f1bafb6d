"""Token-to-device layouts and exact workload accounting for masked attention.

Token positions are 1-based throughout this module so the zigzag and striped
assignment formulas can be evaluated literally.  Four layouts:

* ``contiguous``    device i owns the i-th block of N/G consecutive tokens
* ``zigzag``        device i owns one front block and the mirrored back block
* ``striped``       device i owns tokens {i, i+G, i+2G, ...}
* ``block_striped`` tokens are striped across devices inside every block of
                    ``block_len`` tokens (block_len a multiple of G)

Causal work under these layouts is what the zigzag/striped schemes balance;
``balance_report`` counts the unmasked (query, key) pairs each device computes
in total and at each ring step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .masks import (
    CAUSAL,
    MaskSpec,
    allowed_pairs,
    block_sparse_mask,
    validate_mask,
)

CONTIGUOUS = "contiguous"
ZIGZAG = "zigzag"
STRIPED = "striped"
BLOCK_STRIPED = "block_striped"

LAYOUT_KINDS = (CONTIGUOUS, ZIGZAG, STRIPED, BLOCK_STRIPED)


@dataclass(frozen=True)
class Shard:
    device: int  # 1-based
    token_ids: tuple[int, ...]  # strictly increasing 1-based global positions


@dataclass(frozen=True)
class ShardLayout:
    kind: str
    seq_len: int
    devices: int
    block_len: int | None = None

    def __post_init__(self):
        if self.kind not in LAYOUT_KINDS:
            raise ValueError(f"unknown layout kind {self.kind!r}, expected {LAYOUT_KINDS}")
        n, g = self.seq_len, self.devices
        if n < 1 or g < 1:
            raise ValueError(f"need seq_len >= 1 and devices >= 1, got N={n}, G={g}")
        if self.kind in (CONTIGUOUS, STRIPED) and n % g != 0:
            raise ValueError(f"{self.kind} layout needs G | N, got N={n}, G={g}")
        if self.kind == ZIGZAG and n % (2 * g) != 0:
            raise ValueError(f"zigzag layout needs 2G | N, got N={n}, G={g}")
        if self.kind == BLOCK_STRIPED:
            if self.block_len is None:
                raise ValueError("block_striped layout needs block_len")
            if self.block_len % g != 0:
                raise ValueError(
                    f"block_striped needs G | block_len, got block_len={self.block_len}, G={g}"
                )
            if n % self.block_len != 0:
                raise ValueError(
                    f"block_striped needs block_len | N, got N={n}, block_len={self.block_len}"
                )

    @property
    def shard_size(self) -> int:
        return self.seq_len // self.devices


def make_layout(kind: str, seq_len: int, devices: int, block_len: int | None = None) -> list[Shard]:
    """Build the per-device shards for a layout; validates divisibility."""
    layout = ShardLayout(kind=kind, seq_len=seq_len, devices=devices, block_len=block_len)
    return layout_shards(layout)


def layout_shards(layout: ShardLayout) -> list[Shard]:
    n, g = layout.seq_len, layout.devices
    shards = []
    if layout.kind == CONTIGUOUS:
        p = n // g
        for i in range(1, g + 1):
            shards.append(Shard(i, tuple(range((i - 1) * p + 1, i * p + 1))))
    elif layout.kind == ZIGZAG:
        p = n // (2 * g)
        for i in range(1, g + 1):
            front = range((i - 1) * p + 1, i * p + 1)
            back = range(n - i * p + 1, n - (i - 1) * p + 1)
            shards.append(Shard(i, tuple(front) + tuple(back)))
    elif layout.kind == STRIPED:
        p = n // g
        for i in range(1, g + 1):
            shards.append(Shard(i, tuple(i + g * m for m in range(p))))
    else:  # block_striped
        bl = layout.block_len
        for i in range(1, g + 1):
            ids = [
                b * bl + pos + 1
                for b in range(n // bl)
                for pos in range(bl)
                if pos % g == i - 1
            ]
            shards.append(Shard(i, tuple(sorted(ids))))
    return shards


def shard_token_arrays(layout: ShardLayout) -> list[np.ndarray]:
    """1-based token id arrays per device, in shard-local row order."""
    return [np.asarray(s.token_ids, dtype=np.int64) for s in layout_shards(layout)]


def local_pair_mask(
    layout: ShardLayout,
    mask: MaskSpec,
    i: int,
    j: int,
    use_closed_form: bool = True,
) -> np.ndarray:
    """Boolean matrix of unmasked (local query, local key) pairs.

    Device ``i`` holds the queries, device ``j`` the keys.  For zigzag+causal
    and striped+causal the published case rules are evaluated directly; for
    every other combination the global mask predicate is applied to the global
    token ids (the two paths agree, which the tests assert).
    """
    g = layout.devices
    if not (1 <= i <= g and 1 <= j <= g):
        raise ValueError(f"device indices must lie in [1, {g}], got i={i}, j={j}")
    validate_mask(mask, layout.seq_len)
    if use_closed_form and mask.kind == CAUSAL:
        if layout.kind == ZIGZAG:
            return _zigzag_causal_mask(layout, i, j)
        if layout.kind == STRIPED:
            return _striped_causal_mask(layout, i, j)
    tokens = shard_token_arrays(layout)
    return allowed_pairs(mask, tokens[i - 1], tokens[j - 1])


def _zigzag_causal_mask(layout: ShardLayout, i: int, j: int) -> np.ndarray:
    # Shard rows: front block first (local 1..P), back block after (P+1..2P).
    p = layout.seq_len // (2 * layout.devices)
    size = 2 * p
    out = np.zeros((size, size), dtype=bool)
    if i == j:
        ids = np.asarray(layout_shards(layout)[i - 1].token_ids)
        return ids[None, :] <= ids[:, None]  # causal on the device's own tokens
    if i < j:
        out[p:, :] = True  # back queries attend everything device j holds
    else:
        out[:, :p] = True  # every query attends device j's front block only
    return out


def _striped_causal_mask(layout: ShardLayout, i: int, j: int) -> np.ndarray:
    # Local causal when i >= j; when i < j drop the first query row and the
    # last key row, i.e. strictly-lower-triangular in local coordinates.
    p = layout.shard_size
    a = np.arange(1, p + 1)
    if i >= j:
        return a[None, :] <= a[:, None]
    return a[None, :] < a[:, None]


def local_pair_set(
    layout: ShardLayout,
    mask: MaskSpec,
    i: int,
    j: int,
    use_closed_form: bool = True,
) -> frozenset[tuple[int, int]]:
    """Unmasked (local query, local key) pairs as 1-based index tuples."""
    m = local_pair_mask(layout, mask, i, j, use_closed_form=use_closed_form)
    qs, ks = np.nonzero(m)
    return frozenset((int(q) + 1, int(k) + 1) for q, k in zip(qs, ks))


@dataclass(frozen=True)
class WorkloadReport:
    per_device_pairs: tuple[int, ...]
    per_step_pairs: tuple[tuple[int, ...], ...]  # [device][ring step]
    total_pairs: int

    @property
    def device_spread(self) -> int:
        return max(self.per_device_pairs) - min(self.per_device_pairs)

    def step_spread(self, step: int) -> int:
        column = [row[step] for row in self.per_step_pairs]
        return max(column) - min(column)

    @property
    def max_step_spread(self) -> int:
        steps = len(self.per_step_pairs[0])
        return max(self.step_spread(t) for t in range(steps))


def balance_report(layout: ShardLayout, mask: MaskSpec) -> WorkloadReport:
    """Per-device and per-ring-step unmasked pair counts.

    Ring step t (0-based) pairs device i with key shard (i - 1 - t) mod G, the
    single-ring rotation that ends on the device's own shard.
    """
    g = layout.devices
    counts = np.zeros((g, g), dtype=np.int64)  # counts[i][j], 0-based devices
    for i in range(1, g + 1):
        for j in range(1, g + 1):
            counts[i - 1, j - 1] = int(local_pair_mask(layout, mask, i, j).sum())
    per_step = []
    for i in range(g):
        row = [int(counts[i, (i - 1 - t) % g]) for t in range(g)]
        per_step.append(tuple(row))
    per_device = tuple(int(c) for c in counts.sum(axis=1))
    return WorkloadReport(
        per_device_pairs=per_device,
        per_step_pairs=tuple(per_step),
        total_pairs=int(counts.sum()),
    )


def global_unmasked_pairs(mask: MaskSpec, seq_len: int) -> int:
    """Total allowed (q, k) pairs under the mask for the whole sequence."""
    validate_mask(mask, seq_len)
    ids = np.arange(1, seq_len + 1)
    return int(allowed_pairs(mask, ids, ids).sum())


def block_mask_from_window(seq_len: int, block_len: int, window: int) -> MaskSpec:
    """Causal sliding-window mask at block granularity.

    block_mask[i, j] = 1 iff 0 <= i - j < window / block_len; ``window`` must
    be a whole number of blocks.
    """
    if block_len < 1 or seq_len % block_len != 0:
        raise ValueError(f"block_len {block_len} must divide seq_len {seq_len}")
    if window < 1 or window % block_len != 0:
        raise ValueError(f"window {window} must be a positive multiple of block_len {block_len}")
    side = seq_len // block_len
    w_blocks = window // block_len
    idx = np.arange(side)
    gap = idx[:, None] - idx[None, :]
    bm = ((gap >= 0) & (gap < w_blocks)).astype(np.int64)
    return block_sparse_mask(bm, block_len)
