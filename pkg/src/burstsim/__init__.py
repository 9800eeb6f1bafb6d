"""Desk-scale simulator and numerical library for ring/burst distributed attention."""

from .checkpointing import CheckpointPolicy, PlanReport, ToyRunReport, execute_toy
from .checkpointing import plan as checkpoint_plan
from .costs import ComparisonReport, Scenario, compare, default_scenarios
from .distributed import (
    DeviceState,
    ScheduledRun,
    burst_backward,
    distributed_forward,
    gather_rows,
    make_device_states,
    ring_backward,
    run_with_schedule,
)
from .fabric import (
    MessageLog,
    OverlapSchedule,
    Timeline,
    TimelineEvent,
    Topology,
    account_attention_comm,
    analytic_comm_time,
    build_double_ring,
    build_ring_plan,
    simulate_ring,
    single_node_topology,
    validate_timeline,
)
from .lmhead import FusedLossResult, FusionConfig, fused_lmhead_loss, memory_footprint
from .masks import (
    MaskSpec,
    block_sparse_mask,
    causal_mask,
    full_mask,
    sliding_window_mask,
)
from .numerics import (
    lse_merge,
    matmul,
    row_logsumexp,
    row_softmax,
    rowsum_hadamard,
    seeded_random_matrix,
)
from .oracle import (
    AttentionGrads,
    AttentionParams,
    AttentionResult,
    attention_backward,
    attention_forward,
    finite_diff_check,
    naive_lmhead_loss,
    project_qkv,
)
from .partitioning import (
    Shard,
    ShardLayout,
    WorkloadReport,
    balance_report,
    block_mask_from_window,
    local_pair_set,
    make_layout,
)

__version__ = "0.1.0"
