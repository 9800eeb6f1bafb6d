"""Checkpointing policies for one attention layer: cost models and a toy run.

Three policies over a layer processing N tokens of width d:

* ``full_recompute``      store only the layer input (N*d); recompute every
                          unmasked attention pair in the backward pass
* ``selective_pp``        also store the attention output (2*N*d total);
                          nothing is recomputed
* ``sequence_selective``  store the input plus the output rows of the second
                          sequence segment; recompute only the first
                          segment's (cheaper) rows

``execute_toy`` actually runs the policy on a small layer and checks that
segment-wise recomputation reproduces the store-everything gradients exactly.
Softmax logits are never stored under any policy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .masks import MaskSpec, allowed_pairs, dense_mask, validate_mask
from .numerics import NEG_INF, exp_shifted, matmul, row_logsumexp, seeded_random_matrix
from .oracle import attention_backward, attention_forward

FULL_RECOMPUTE = "full_recompute"
SELECTIVE_PP = "selective_pp"
SEQUENCE_SELECTIVE = "sequence_selective"

POLICY_KINDS = (FULL_RECOMPUTE, SELECTIVE_PP, SEQUENCE_SELECTIVE)


@dataclass(frozen=True)
class CheckpointPolicy:
    kind: str
    split_fraction: float | None = None  # sequence_selective only

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy {self.kind!r}, expected {POLICY_KINDS}")
        if self.kind == SEQUENCE_SELECTIVE:
            s = self.split_fraction
            if s is None or not (0.0 < s < 1.0):
                raise ValueError(f"split fraction must lie in (0, 1), got {s}")

    def boundary(self, n: int) -> int:
        """Token index of the segment split; must land on a whole token."""
        if self.kind != SEQUENCE_SELECTIVE:
            raise ValueError(f"{self.kind} has no split boundary")
        exact = self.split_fraction * n
        boundary = round(exact)
        if abs(exact - boundary) > 1e-9 or not (0 < boundary < n):
            raise ValueError(
                f"split fraction {self.split_fraction} does not land on a token "
                f"boundary for N={n}"
            )
        return int(boundary)


@dataclass(frozen=True)
class PlanReport:
    policy: str
    stored_elements_per_layer: int
    recompute_pairs: int
    recompute_fraction: float
    attention_extra_elements: int  # stored beyond the layer input


def plan(policy: CheckpointPolicy, n: int, d: int, mask: MaskSpec) -> PlanReport:
    """Storage and recomputation model for one layer under a policy."""
    validate_mask(mask, n)
    ids = np.arange(1, n + 1)
    allowed = allowed_pairs(mask, ids, ids)
    total_pairs = int(allowed.sum())
    if policy.kind == FULL_RECOMPUTE:
        stored = n * d
        recompute = total_pairs
        extra = 0
    elif policy.kind == SELECTIVE_PP:
        stored = 2 * n * d
        recompute = 0
        extra = n * d
    else:
        boundary = policy.boundary(n)
        stored = n * d + (n - boundary) * d
        recompute = int(allowed[:boundary].sum())  # queries in segment one
        extra = (n - boundary) * d
    fraction = recompute / total_pairs if total_pairs else 0.0
    return PlanReport(
        policy=policy.kind,
        stored_elements_per_layer=stored,
        recompute_pairs=recompute,
        recompute_fraction=fraction,
        attention_extra_elements=extra,
    )


@dataclass(frozen=True)
class ToyRunReport:
    policy: str
    recomputed_pairs: int
    stored_elements: int
    max_grad_diff: float
    matches_baseline: bool


def execute_toy(
    policy: CheckpointPolicy,
    n: int,
    d: int,
    mask: MaskSpec,
    seed: int,
    tolerance: float = 1e-10,
) -> ToyRunReport:
    """Run one attention layer under the policy and compare gradients.

    The forward stores only what the policy allows; the backward first
    recomputes the missing (O, Lse) rows from the stored inputs, then runs
    the analytic backward.  Row-sliced recomputation follows the same
    accumulation path as the full forward, so gradients match the
    store-everything baseline.
    """
    if n > 64:
        raise ValueError(f"toy runs are capped at N=64, got {n}")
    q = seeded_random_matrix(n, d, seed)
    k = seeded_random_matrix(n, d, seed + 1)
    v = seeded_random_matrix(n, d, seed + 2)
    do = seeded_random_matrix(n, d, seed + 3)

    baseline = attention_forward(q, k, v, mask)
    base_grads = attention_backward(q, k, v, baseline.o, baseline.lse, do, mask)

    allowed = dense_mask(mask, n)
    if policy.kind == SELECTIVE_PP:
        stored_rows = np.arange(n)
    elif policy.kind == FULL_RECOMPUTE:
        stored_rows = np.arange(0)
    else:
        stored_rows = np.arange(policy.boundary(n), n)
    missing_rows = np.setdiff1d(np.arange(n), stored_rows)

    o = np.zeros((n, d))
    lse = np.full(n, NEG_INF)
    o[stored_rows] = baseline.o[stored_rows]
    lse[stored_rows] = baseline.lse[stored_rows]

    recomputed_pairs = 0
    if missing_rows.size:
        scale = 1.0 / np.sqrt(d)
        rows_allowed = allowed[missing_rows]
        recomputed_pairs = int(rows_allowed.sum())
        s = np.where(rows_allowed, matmul(q[missing_rows], k.T) * scale, NEG_INF)
        lse_rows = row_logsumexp(s)
        o[missing_rows] = matmul(exp_shifted(s, lse_rows), v)
        lse[missing_rows] = lse_rows

    grads = attention_backward(q, k, v, o, lse, do, mask)
    diff = max(
        float(np.max(np.abs(grads.dq - base_grads.dq))),
        float(np.max(np.abs(grads.dk - base_grads.dk))),
        float(np.max(np.abs(grads.dv - base_grads.dv))),
    )
    stored = plan(policy, n, d, mask).stored_elements_per_layer
    return ToyRunReport(
        policy=policy.kind,
        recomputed_pairs=recomputed_pairs,
        stored_elements=stored,
        max_grad_diff=diff,
        matches_baseline=diff <= tolerance,
    )
