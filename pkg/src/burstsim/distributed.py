"""Distributed attention over the simulated ring fabric.

Each device owns one shard of Q, K, V picked by a :class:`ShardLayout`.  The
forward pass circulates (K_j, V_j) and folds each step's partial attention
into a running (O_i, Lse_i) with the online-softmax merge.  Two backward
passes are implemented:

* ring backward: circulates (K_j, V_j, dK_j, dV_j), 4Nd elements per device;
* burst backward: keeps K/V and their gradients resident and circulates
  (Q_j, dQ_j, dO_j, D_j, Lse_j) instead, 3Nd + 2N elements per device, with
  D_j = rowsum(dO_j * O_j) computed once up front.

Both accumulate gradients in ring-step order, so results are deterministic.
Masked-pair selection is delegated to the layout's local pair sets; an empty
local pair set skips the compute but never the communication (the ring is
data-oblivious).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fabric
from .fabric import (
    BURST_BACKWARD,
    FORWARD,
    RING_BACKWARD,
    MessageLog,
    OverlapSchedule,
    RingPlan,
    Timeline,
    Topology,
    build_ring_plan,
    message_log_for,
    simulate_ring,
    single_node_topology,
    step_payload_elements,
)
from .masks import MaskSpec
from .numerics import NEG_INF, exp_gap, exp_shifted, lse_merge, matmul, row_logsumexp, rowsum_hadamard
from .oracle import AttentionGrads, AttentionResult
from .partitioning import ShardLayout, local_pair_mask, shard_token_arrays


@dataclass
class DeviceState:
    """One simulated device's shards and running accumulators."""

    index: int  # 1-based
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    o: np.ndarray | None = None
    lse: np.ndarray | None = None
    d_vec: np.ndarray | None = None
    dq: np.ndarray | None = None
    dk: np.ndarray | None = None
    dv: np.ndarray | None = None


@dataclass
class KvPayload:
    """Key/value shard that travels the ring; gradients ride along backward.

    2(N/G)d elements per step in the forward, 4(N/G)d with the gradient
    accumulators attached.
    """

    k: np.ndarray
    v: np.ndarray
    dk: np.ndarray | None = None
    dv: np.ndarray | None = None

    @property
    def element_count(self) -> int:
        total = self.k.size + self.v.size
        if self.dk is not None:
            total += self.dk.size
        if self.dv is not None:
            total += self.dv.size
        return total


@dataclass
class QPayload:
    """Query-side payload of the communication-optimized backward.

    Carries (Q_j, dQ_j, dO_j, D_j, Lse_j): 3(N/G)d + 2(N/G) elements per step.
    """

    q: np.ndarray
    dq: np.ndarray
    do: np.ndarray
    d_vec: np.ndarray
    lse: np.ndarray

    @property
    def element_count(self) -> int:
        return self.q.size + self.dq.size + self.do.size + self.d_vec.size + self.lse.size


def make_device_states(layout: ShardLayout, q, k, v) -> list[DeviceState]:
    """Shard global N x d matrices into per-device states."""
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if q.shape[0] != layout.seq_len:
        raise ValueError(f"Q has {q.shape[0]} rows, layout expects {layout.seq_len}")
    rows = [np.asarray(ids) - 1 for ids in shard_token_arrays(layout)]
    return [
        DeviceState(index=i + 1, q=q[r], k=k[r], v=v[r])
        for i, r in enumerate(rows)
    ]


def shard_rows(layout: ShardLayout, x: np.ndarray) -> list[np.ndarray]:
    return [x[np.asarray(ids) - 1] for ids in shard_token_arrays(layout)]


def gather_rows(layout: ShardLayout, shard_arrays: list[np.ndarray]) -> np.ndarray:
    """Reassemble per-shard rows into global token order."""
    tokens = shard_token_arrays(layout)
    first = np.asarray(shard_arrays[0])
    shape = (layout.seq_len,) + first.shape[1:]
    out = np.zeros(shape, dtype=np.float64)
    for ids, arr in zip(tokens, shard_arrays):
        out[np.asarray(ids) - 1] = arr
    return out


def _plan_for(layout: ShardLayout, topology: Topology | None) -> RingPlan:
    topo = topology if topology is not None else single_node_topology(layout.devices)
    if topo.total_devices != layout.devices:
        raise ValueError(
            f"topology has {topo.total_devices} devices but layout shards {layout.devices}"
        )
    return build_ring_plan(topo)


def _pair_masks(layout: ShardLayout, mask: MaskSpec) -> dict[tuple[int, int], np.ndarray]:
    g = layout.devices
    return {
        (i, j): local_pair_mask(layout, mask, i, j)
        for i in range(1, g + 1)
        for j in range(1, g + 1)
    }


def distributed_forward(
    states: list[DeviceState],
    layout: ShardLayout,
    mask: MaskSpec,
    topology: Topology | None = None,
    visit_order: list[list[int]] | None = None,
) -> MessageLog:
    """Ring forward pass; fills each state's (o, lse) in place.

    ``visit_order`` overrides the plan's shard visiting order (0-based shard
    ids per device per step); the online-softmax merge makes the result
    independent of that order up to roundoff.
    """
    plan = _plan_for(layout, topology)
    order = visit_order if visit_order is not None else plan.visit
    pair = _pair_masks(layout, mask)
    g = layout.devices
    d = states[0].q.shape[1]
    scale = 1.0 / np.sqrt(d)
    payloads = [KvPayload(k=st.k, v=st.v) for st in states]  # indexed by owner
    for st in states:
        st.o = np.zeros_like(st.q)
        st.lse = np.full(st.q.shape[0], NEG_INF)
    for t in range(g):
        for i, st in enumerate(states):
            j = order[i][t]
            allowed = pair[(i + 1, j + 1)]
            if not allowed.any():
                continue  # compute skipped; the ring step still happens
            src = payloads[j]
            s = np.where(allowed, matmul(st.q, src.k.T) * scale, NEG_INF)
            lse_step = row_logsumexp(s)
            o_step = matmul(exp_shifted(s, lse_step), src.v)
            lse_new = lse_merge(st.lse, lse_step)
            w_step = exp_gap(lse_step, lse_new)
            w_old = exp_gap(st.lse, lse_new)
            st.o = w_step[:, None] * o_step + w_old[:, None] * st.o
            st.lse = lse_new
    for st in states:
        if np.any(st.lse == NEG_INF):
            row = int(np.nonzero(st.lse == NEG_INF)[0][0])
            raise ValueError(
                f"device {st.index} query row {row + 1} has no unmasked key globally"
            )
    return message_log_for(plan, payloads[0].element_count)


def forward_results(states: list[DeviceState]) -> list[AttentionResult]:
    return [AttentionResult(o=st.o, lse=st.lse) for st in states]


def _require_forward(states: list[DeviceState], what: str) -> None:
    if any(st.o is None or st.lse is None for st in states):
        raise RuntimeError(f"{what} requires a completed forward pass (O, Lse missing)")


def ring_backward(
    states: list[DeviceState],
    do_shards: list[np.ndarray],
    layout: ShardLayout,
    mask: MaskSpec,
    topology: Topology | None = None,
) -> MessageLog:
    """Backward pass circulating K, V and their gradient accumulators.

    Per step the query-side device recomputes P from its stored Lse, adds
    into the circulating dK_j / dV_j, and accumulates its own dQ_i.  D_i is
    recomputed every round.
    """
    _require_forward(states, "ring_backward")
    plan = _plan_for(layout, topology)
    pair = _pair_masks(layout, mask)
    g = layout.devices
    d = states[0].q.shape[1]
    scale = 1.0 / np.sqrt(d)
    payloads = [
        KvPayload(k=st.k, v=st.v, dk=np.zeros_like(st.k), dv=np.zeros_like(st.v))
        for st in states
    ]  # indexed by shard owner; dk/dv accumulate in place as the ring turns
    for st in states:
        st.dq = np.zeros_like(st.q)
    for t in range(g):
        for i, st in enumerate(states):
            j = plan.visit[i][t]
            allowed = pair[(i + 1, j + 1)]
            if not allowed.any():
                continue
            src = payloads[j]
            do_i = do_shards[i]
            s = np.where(allowed, matmul(st.q, src.k.T) * scale, NEG_INF)
            p = exp_shifted(s, st.lse)
            src.dv += matmul(p.T, do_i)
            dp = matmul(do_i, src.v.T)
            d_i = rowsum_hadamard(do_i, st.o)  # recomputed each round
            ds = p * (dp - d_i[:, None])
            src.dk += matmul(ds.T, st.q) * scale
            st.dq += matmul(ds, src.k) * scale
    for j, st in enumerate(states):
        # After G steps each payload is back at its owner, fully accumulated.
        st.dk = payloads[j].dk
        st.dv = payloads[j].dv
    return message_log_for(plan, payloads[0].element_count)


def burst_backward(
    states: list[DeviceState],
    do_shards: list[np.ndarray],
    layout: ShardLayout,
    mask: MaskSpec,
    topology: Topology | None = None,
) -> MessageLog:
    """Backward pass keeping K/V resident and circulating the query payload.

    D_j is computed once before the loop and travels with (Q_j, dQ_j, dO_j,
    Lse_j).  The key-side device i accumulates dK_i, dV_i locally and adds
    into the circulating dQ_j; after G steps every dQ_j is back at its owner.
    """
    _require_forward(states, "burst_backward")
    plan = _plan_for(layout, topology)
    pair = _pair_masks(layout, mask)
    g = layout.devices
    d = states[0].q.shape[1]
    scale = 1.0 / np.sqrt(d)
    for st, do_i in zip(states, do_shards):
        st.d_vec = rowsum_hadamard(do_i, st.o)  # once, before the ring loop
        st.dk = np.zeros_like(st.k)
        st.dv = np.zeros_like(st.v)
    payloads = [
        QPayload(q=st.q, dq=np.zeros_like(st.q), do=do_i, d_vec=st.d_vec, lse=st.lse)
        for st, do_i in zip(states, do_shards)
    ]  # indexed by owner; dq accumulates in place as the payload circulates
    for t in range(g):
        for i, st in enumerate(states):
            j = plan.visit[i][t]  # device i currently holds shard j's payload
            allowed = pair[(j + 1, i + 1)]  # queries from j, keys resident on i
            if not allowed.any():
                continue
            src = payloads[j]
            s = np.where(allowed, matmul(src.q, st.k.T) * scale, NEG_INF)
            p = exp_shifted(s, src.lse)
            st.dv += matmul(p.T, src.do)
            dp = matmul(src.do, st.v.T)
            ds = p * (dp - src.d_vec[:, None])
            st.dk += matmul(ds.T, src.q) * scale
            src.dq += matmul(ds, st.k) * scale
    for j, st in enumerate(states):
        # The G-th ring step returns each payload to its owner.
        st.dq = payloads[j].dq
    return message_log_for(plan, payloads[0].element_count)


def backward_grads(states: list[DeviceState]) -> list[AttentionGrads]:
    return [AttentionGrads(dq=st.dq, dk=st.dk, dv=st.dv) for st in states]


@dataclass
class ScheduledRun:
    results: list
    message_log: MessageLog
    timeline: Timeline


def run_with_schedule(
    pass_kind: str,
    layout: ShardLayout,
    mask: MaskSpec,
    q,
    k,
    v,
    do=None,
    topology: Topology | None = None,
    schedule: OverlapSchedule | None = None,
    compute_time_per_step: float = 1e-3,
) -> ScheduledRun:
    """Run a pass and simulate its timeline under an overlap schedule.

    Schedules change timing only: the numeric results are identical to the
    barrier-synchronous pass.  Backward passes internally run the forward
    first to populate (O, Lse).
    """
    if pass_kind not in fabric.PASS_KINDS:
        raise ValueError(f"unknown pass {pass_kind!r}, expected {fabric.PASS_KINDS}")
    topo = topology if topology is not None else single_node_topology(layout.devices)
    schedule = schedule if schedule is not None else OverlapSchedule("none")
    states = make_device_states(layout, q, k, v)
    dim = states[0].q.shape[1]
    distributed_forward(states, layout, mask, topo)
    if pass_kind == FORWARD:
        results: list = forward_results(states)
    else:
        if do is None:
            raise ValueError("backward passes need the output cotangent dO")
        do_shards = shard_rows(layout, np.asarray(do, dtype=np.float64))
        if pass_kind == RING_BACKWARD:
            ring_backward(states, do_shards, layout, mask, topo)
        else:
            burst_backward(states, do_shards, layout, mask, topo)
        results = backward_grads(states)
    payload = step_payload_elements(pass_kind, layout.seq_len, dim, layout.devices)
    log, timeline = simulate_ring(payload, topo, schedule, compute_time_per_step)
    return ScheduledRun(results=results, message_log=log, timeline=timeline)
