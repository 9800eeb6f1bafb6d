"""Scenario-level strategy comparisons: traffic, analytic time, makespans.

A scenario fixes (N, d, topology, strategy) plus optional memory-model knobs
(LM-head tiling and a checkpoint policy).  ``compare`` evaluates each
strategy's closed-form communication time, the per-device element counts, and
the event-simulated makespans for its forward and backward schedules, then
reports ratios against the first scenario.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import fabric
from .checkpointing import SEQUENCE_SELECTIVE, CheckpointPolicy, plan as checkpoint_plan
from .fabric import (
    BURST_BACKWARD,
    FORWARD,
    RING_BACKWARD,
    OverlapSchedule,
    Topology,
    account_attention_comm,
    analytic_comm_time,
    channel_floor_time,
    serialized_pass_time,
    simulate_ring,
    step_payload_elements,
)
from .lmhead import FusionConfig, memory_footprint
from .masks import MaskSpec, full_mask

STRATEGY_BACKWARD = {
    "ring": RING_BACKWARD,
    "double_ring": RING_BACKWARD,  # same traffic; only the ring shape differs
    "burst": BURST_BACKWARD,
}

# Which ring shape and overlap schedule each strategy runs in the simulator.
STRATEGY_STYLE = {"ring": "flat", "double_ring": "auto", "burst": "auto"}
STRATEGY_FWD_SCHEDULE = {"ring": "none", "double_ring": "activation", "burst": "activation"}
STRATEGY_BWD_SCHEDULE = {"ring": "none", "double_ring": "none", "burst": "gradient"}


@dataclass(frozen=True)
class Scenario:
    name: str
    seq_len: int
    dim: int
    topology: Topology
    strategy: str
    mask: MaskSpec | None = None
    checkpoint: CheckpointPolicy | None = None
    lmhead_config: FusionConfig | None = None
    vocab: int | None = None
    compute_time_per_step: float = 1e-3

    def __post_init__(self):
        if self.strategy not in fabric.STRATEGIES:
            raise ValueError(
                f"unknown strategy {self.strategy!r}, expected {fabric.STRATEGIES}"
            )
        g = self.topology.total_devices
        if self.seq_len % g != 0:
            raise ValueError(f"device count {g} must divide seq_len {self.seq_len}")


@dataclass(frozen=True)
class ScenarioRow:
    name: str
    strategy: str
    forward_elements: int
    backward_elements: int
    analytic_seconds: float
    forward_makespan: float
    backward_makespan: float
    serial_seconds: float
    floor_seconds: float
    backward_ratio_vs_ring: float
    lmhead_naive_elements: int | None
    lmhead_fused_elements: int | None
    checkpoint_stored_elements: int | None


@dataclass(frozen=True)
class ComparisonReport:
    rows: tuple[ScenarioRow, ...]


def backward_comm_ratio(dim: int) -> float:
    """Burst vs ring backward traffic: (3d + 2) / (4d)."""
    return (3 * dim + 2) / (4 * dim)


def evaluate(scenario: Scenario) -> ScenarioRow:
    n, d = scenario.seq_len, scenario.dim
    topo = scenario.topology
    g = topo.total_devices
    bwd_kind = STRATEGY_BACKWARD[scenario.strategy]
    fwd_elements = account_attention_comm(FORWARD, n, d, g)
    bwd_elements = account_attention_comm(bwd_kind, n, d, g)
    shard_payload = (n // g) * d
    analytic = analytic_comm_time(scenario.strategy, topo, shard_payload)

    style = STRATEGY_STYLE[scenario.strategy]
    fwd_payload = step_payload_elements(FORWARD, n, d, g)
    bwd_payload = step_payload_elements(bwd_kind, n, d, g)
    t_c = scenario.compute_time_per_step
    fwd_schedule = OverlapSchedule(STRATEGY_FWD_SCHEDULE[scenario.strategy])
    bwd_schedule = OverlapSchedule(STRATEGY_BWD_SCHEDULE[scenario.strategy])
    _, fwd_tl = simulate_ring(fwd_payload, topo, fwd_schedule, t_c, ring_style=style)
    _, bwd_tl = simulate_ring(bwd_payload, topo, bwd_schedule, t_c, ring_style=style)
    serial = serialized_pass_time(topo, fwd_payload, t_c, ring_style=style) + serialized_pass_time(
        topo, bwd_payload, t_c, ring_style=style
    )
    floor = channel_floor_time(topo, fwd_payload, t_c, ring_style=style) + channel_floor_time(
        topo, bwd_payload, t_c, ring_style=style
    )

    lm_naive = lm_fused = None
    if scenario.lmhead_config is not None and scenario.vocab is not None:
        lm_naive, lm_fused = memory_footprint(n, scenario.vocab, d, scenario.lmhead_config)
    ckpt = None
    if scenario.checkpoint is not None:
        mask = scenario.mask if scenario.mask is not None else full_mask()
        ckpt = checkpoint_plan(scenario.checkpoint, n, d, mask).stored_elements_per_layer

    return ScenarioRow(
        name=scenario.name,
        strategy=scenario.strategy,
        forward_elements=fwd_elements,
        backward_elements=bwd_elements,
        analytic_seconds=analytic,
        forward_makespan=fwd_tl.makespan,
        backward_makespan=bwd_tl.makespan,
        serial_seconds=serial,
        floor_seconds=floor,
        backward_ratio_vs_ring=bwd_elements / account_attention_comm(RING_BACKWARD, n, d, g),
        lmhead_naive_elements=lm_naive,
        lmhead_fused_elements=lm_fused,
        checkpoint_stored_elements=ckpt,
    )


def compare(scenarios: list[Scenario]) -> ComparisonReport:
    if not scenarios:
        raise ValueError("need at least one scenario")
    return ComparisonReport(rows=tuple(evaluate(s) for s in scenarios))


def default_scenarios(
    seq_len: int,
    dim: int,
    topology: Topology,
    compute_time_per_step: float = 1e-3,
    vocab: int | None = None,
    rows_per_tile: int | None = None,
) -> list[Scenario]:
    """One scenario per strategy, sharing every other knob."""
    lm_cfg = None
    if vocab is not None and rows_per_tile is not None:
        lm_cfg = FusionConfig(rows_per_tile=rows_per_tile, vocab_per_tile=vocab)
    return [
        Scenario(
            name=strategy,
            seq_len=seq_len,
            dim=dim,
            topology=topology,
            strategy=strategy,
            lmhead_config=lm_cfg,
            vocab=vocab,
            checkpoint=CheckpointPolicy(SEQUENCE_SELECTIVE, split_fraction=0.5),
            compute_time_per_step=compute_time_per_step,
        )
        for strategy in fabric.STRATEGIES
    ]
