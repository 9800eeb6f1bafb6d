"""Deterministic simulated ring fabric over an explicit two-level topology.

A cluster is ``num_nodes`` nodes times ``gpus_per_node`` devices.  Payloads
move around rings in lock-step "conducts"; a transfer on a link costs
``latency + elements / bandwidth``.  Three schedules are modeled:

* ``none``        every transfer and compute strictly serialized
* ``activation``  round-r communication overlaps round-r compute (payloads
                  are read-only, so a shard can be forwarded while in use)
* ``gradient``    a transfer carries the output of a compute step, so each
                  send waits for its compute (warm-up round) and the
                  inter-node hop waits for the node's intra exchange

Schedules change timing only.  The shard visit order (and therefore every
numeric result computed on top of the fabric) is a function of the topology
alone: a single node is one flat ring of G steps; multiple nodes use the
double ring, where each outer round does ``gpus_per_node`` compute steps fed
by ``gpus_per_node - 1`` intra-node transfers, and one inter-node transfer
per round moves the round's seed shard to the next node.  Either way each
device sends exactly G payloads per pass, which is what makes the element
accounting below exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

DEFAULT_LAT_INTRA = 1e-6
DEFAULT_LAT_INTER = 5e-6
DEFAULT_BW_INTRA = 1e9
DEFAULT_BW_INTER = 1e8

INTRA = "intra"
INTER = "inter"

SCHEDULE_KINDS = ("none", "activation", "gradient")

FORWARD = "forward"
RING_BACKWARD = "ring_backward"
BURST_BACKWARD = "burst_backward"
PASS_KINDS = (FORWARD, RING_BACKWARD, BURST_BACKWARD)


@dataclass(frozen=True)
class Topology:
    num_nodes: int
    gpus_per_node: int
    lat_intra: float = DEFAULT_LAT_INTRA
    lat_inter: float = DEFAULT_LAT_INTER
    bw_intra: float = DEFAULT_BW_INTRA
    bw_inter: float = DEFAULT_BW_INTER

    def __post_init__(self):
        if self.num_nodes < 1 or self.gpus_per_node < 1:
            raise ValueError(
                f"need num_nodes >= 1 and gpus_per_node >= 1, "
                f"got {self.num_nodes} x {self.gpus_per_node}"
            )
        for name in ("lat_intra", "lat_inter", "bw_intra", "bw_inter"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")

    @property
    def total_devices(self) -> int:
        return self.num_nodes * self.gpus_per_node

    def link_times(self, payload_elements: float) -> tuple[float, float]:
        """(T_intra, T_inter) = latency + payload / bandwidth."""
        t_a = self.lat_intra + payload_elements / self.bw_intra
        t_e = self.lat_inter + payload_elements / self.bw_inter
        return t_a, t_e


def single_node_topology(devices: int) -> Topology:
    return Topology(num_nodes=1, gpus_per_node=devices)


@dataclass(frozen=True)
class OverlapSchedule:
    kind: str

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule {self.kind!r}, expected {SCHEDULE_KINDS}")

    @property
    def buffer_roles(self) -> tuple[str, str, str]:
        # Three dedicated buffers per device, one role each at any instant.
        return ("compute", "intra_comm", "inter_comm")


@dataclass(frozen=True)
class DoubleRing:
    """Ring decomposition of a topology plus the resulting shard visit order."""

    intra_rings: tuple[tuple[int, ...], ...]  # per node, 1-based device ids
    inter_rings: tuple[tuple[int, ...], ...]  # per slot, 1-based device ids across nodes
    visit_order: tuple[tuple[int, ...], ...]  # [device][step] -> 1-based shard id


def build_double_ring(topology: Topology) -> DoubleRing:
    """Sub-ring per node, per-slot inter-node rings, and the visit order.

    Over ``num_nodes`` outer rounds of ``gpus_per_node`` compute steps, every
    device sees every shard exactly once.  A single node degenerates to one
    flat intra ring (zero inter steps).
    """
    r, m = topology.num_nodes, topology.gpus_per_node
    intra = tuple(
        tuple(n * m + p + 1 for p in range(m)) for n in range(r)
    )
    inter = tuple(
        tuple(n * m + p + 1 for n in range(r)) for p in range(m)
    ) if r > 1 else ()
    visit = tuple(
        tuple(v + 1 for v in _visit_row(topology, g)) for g in range(topology.total_devices)
    )
    return DoubleRing(intra_rings=intra, inter_rings=inter, visit_order=visit)


def _visit_row(topology: Topology, device: int) -> list[int]:
    """0-based shard visit order for one device."""
    g_total = topology.total_devices
    r, m = topology.num_nodes, topology.gpus_per_node
    if g_total == 1:
        return [0]
    if r == 1:
        # Flat ring: receive from the previous device each step; own shard
        # comes back on the final step.
        return [(device - t - 1) % g_total for t in range(g_total)]
    n, p = divmod(device, m)
    order = []
    for i in range(r):
        src_node = (n - i) % r
        for j in range(m):
            src_slot = (p - j) % m
            order.append(src_node * m + src_slot)
    return order


@dataclass(frozen=True)
class TransferStep:
    index: int
    label: str
    channels: tuple[str, ...]  # per device (0-based)
    receiver: tuple[int, ...]  # receiver[g] = device receiving g's payload


@dataclass(frozen=True)
class RingPlan:
    topology: Topology
    style: str  # "single" | "flat" | "double"
    visit: tuple[tuple[int, ...], ...]  # 0-based shard ids, [device][step]
    transfers: tuple[TransferStep, ...]

    @property
    def devices(self) -> int:
        return self.topology.total_devices

    @property
    def steps(self) -> int:
        return self.devices


def build_ring_plan(topology: Topology, style: str = "auto") -> RingPlan:
    """Transfer schedule and visit order for one ring pass.

    ``auto`` picks the double ring for multi-node topologies and the flat
    ring for a single node; ``flat`` forces the flat global ring (used to
    model plain ring attention on a multi-node cluster).
    """
    g = topology.total_devices
    r, m = topology.num_nodes, topology.gpus_per_node
    if style not in ("auto", "flat", "double"):
        raise ValueError(f"unknown ring style {style!r}")
    if g == 1:
        return RingPlan(topology=topology, style="single", visit=((0,),), transfers=())
    if style == "double" and r == 1:
        style = "flat"
    if style == "auto":
        style = "double" if r > 1 else "flat"

    if style == "flat":
        visit = tuple(
            tuple((dev - t - 1) % g for t in range(g)) for dev in range(g)
        )
        transfers = []
        for t in range(g):
            channels = tuple(
                INTRA if (dev // m) == (((dev + 1) % g) // m) else INTER
                for dev in range(g)
            )
            receiver = tuple((dev + 1) % g for dev in range(g))
            transfers.append(
                TransferStep(index=t, label=f"step {t + 1}", channels=channels, receiver=receiver)
            )
        return RingPlan(topology=topology, style="flat", visit=visit, transfers=tuple(transfers))

    # Double ring: per round, m-1 intra transfers plus one inter transfer.
    visit = tuple(tuple(_visit_row(topology, dev)) for dev in range(g))
    transfers = []
    idx = 0
    intra_receiver = tuple((dev // m) * m + (dev % m + 1) % m for dev in range(g))
    inter_receiver = tuple(((dev // m + 1) % r) * m + dev % m for dev in range(g))
    for i in range(r):
        for j in range(m - 1):
            transfers.append(
                TransferStep(
                    index=idx,
                    label=f"round {i + 1} step {j + 1}",
                    channels=(INTRA,) * g,
                    receiver=intra_receiver,
                )
            )
            idx += 1
        transfers.append(
            TransferStep(
                index=idx,
                label=f"round {i + 1} inter",
                channels=(INTER,) * g,
                receiver=inter_receiver,
            )
        )
        idx += 1
    return RingPlan(topology=topology, style="double", visit=visit, transfers=tuple(transfers))


# ---------------------------------------------------------------------------
# Message accounting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StepRecord:
    index: int
    label: str
    channels: tuple[str, ...]
    receiver: tuple[int, ...]  # receiver[g] = 0-based device receiving g's payload
    elements: int


@dataclass
class MessageLog:
    devices: int
    steps: list[StepRecord] = field(default_factory=list)

    def record_plan(self, plan: RingPlan, elements_per_step: int) -> None:
        for t in plan.transfers:
            self.steps.append(
                StepRecord(
                    index=t.index,
                    label=t.label,
                    channels=t.channels,
                    receiver=t.receiver,
                    elements=elements_per_step,
                )
            )

    def sent(self, device: int, channel: str | None = None) -> int:
        """Elements sent by a 1-based device, optionally on one channel."""
        d = device - 1
        return sum(
            s.elements for s in self.steps if channel is None or s.channels[d] == channel
        )

    def received(self, device: int, channel: str | None = None) -> int:
        d = device - 1
        total = 0
        for s in self.steps:
            for g in range(self.devices):
                if s.receiver[g] == d and (channel is None or s.channels[g] == channel):
                    total += s.elements
        return total

    def total_sent(self, device: int) -> int:
        return self.sent(device)

    @property
    def per_device_sent(self) -> tuple[int, ...]:
        return tuple(self.sent(d) for d in range(1, self.devices + 1))

    @property
    def per_device_sent_intra(self) -> tuple[int, ...]:
        return tuple(self.sent(d, INTRA) for d in range(1, self.devices + 1))

    @property
    def per_device_sent_inter(self) -> tuple[int, ...]:
        return tuple(self.sent(d, INTER) for d in range(1, self.devices + 1))

    @property
    def global_sent(self) -> int:
        return sum(self.per_device_sent)

    @property
    def transfer_count(self) -> int:
        return len(self.steps)


def message_log_for(plan: RingPlan, elements_per_step: int) -> MessageLog:
    log = MessageLog(devices=plan.devices)
    log.record_plan(plan, elements_per_step)
    return log


def account_attention_comm(pass_kind: str, seq_len: int, dim: int, devices: int) -> int:
    """Closed-form per-device ring traffic in elements for one pass.

    forward 2Nd, ring backward 4Nd, burst backward 3Nd + 2N; each is the sum
    of G ring steps of the per-step payload (2(N/G)d, 4(N/G)d, and
    3(N/G)d + 2(N/G) respectively).
    """
    if pass_kind not in PASS_KINDS:
        raise ValueError(f"unknown pass {pass_kind!r}, expected {PASS_KINDS}")
    if devices < 1 or seq_len % devices != 0:
        raise ValueError(f"device count {devices} must divide sequence length {seq_len}")
    if pass_kind == FORWARD:
        return 2 * seq_len * dim
    if pass_kind == RING_BACKWARD:
        return 4 * seq_len * dim
    return 3 * seq_len * dim + 2 * seq_len


def step_payload_elements(pass_kind: str, seq_len: int, dim: int, devices: int) -> int:
    """Per-ring-step payload in elements for one pass."""
    total = account_attention_comm(pass_kind, seq_len, dim, devices)
    return total // devices


# ---------------------------------------------------------------------------
# Analytic communication time (closed forms)
# ---------------------------------------------------------------------------

STRATEGIES = ("ring", "double_ring", "burst")


def analytic_comm_time(strategy: str, topology: Topology, payload_elements: float) -> float:
    """Closed-form forward+backward communication time for one layer.

    With T = Lat + P/B per link and G total devices over N_inter nodes:

    * ring         6 * max(G*T_intra, G*T_inter)
    * double_ring  4 * max((G-N_inter)*T_intra, N_inter*T_inter)
                   + 2 * ((G-N_inter)*T_intra + N_inter*T_inter)
    * burst        5 * max((G-N_inter)*T_intra, N_inter*T_inter)
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}, expected {STRATEGIES}")
    t_a, t_e = topology.link_times(payload_elements)
    g = topology.total_devices
    n_inter = topology.num_nodes
    if strategy == "ring":
        return 6.0 * max(g * t_a, g * t_e)
    intra_total = (g - n_inter) * t_a
    inter_total = n_inter * t_e
    if strategy == "double_ring":
        return 4.0 * max(intra_total, inter_total) + 2.0 * (intra_total + inter_total)
    return 5.0 * max(intra_total, inter_total)


# ---------------------------------------------------------------------------
# Event timeline simulation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TimelineEvent:
    device: int  # 1-based
    kind: str  # compute | send_intra | send_inter | recv | buffer_swap
    start: float
    end: float
    label: str


@dataclass
class Timeline:
    events: list[TimelineEvent]
    makespan: float

    def by_kind(self, kind: str) -> list[TimelineEvent]:
        return [e for e in self.events if e.kind == kind]

    def device_events(self, device: int, kind: str | None = None) -> list[TimelineEvent]:
        return [
            e
            for e in self.events
            if e.device == device and (kind is None or e.kind == kind)
        ]


def _sorted_events(events: list[TimelineEvent]) -> list[TimelineEvent]:
    return sorted(events, key=lambda e: (e.start, e.device, e.kind, e.label))


class _DeviceTrace:
    """Per-device uniform event times; replicated across symmetric devices."""

    def __init__(self):
        self.computes: list[tuple[float, float, str, int]] = []  # start, end, label, step
        self.sends: list[tuple[float, float, str, str, int]] = []  # start, end, channel, label, xfer idx
        self.swaps: list[tuple[float, str]] = []


def simulate_ring(
    payload_elements_per_step: int,
    topology: Topology,
    schedule: OverlapSchedule,
    compute_time_per_step: float,
    ring_style: str = "auto",
) -> tuple[MessageLog, Timeline]:
    """Run one ring pass through the event simulator.

    Returns the exact element accounting and an event timeline honoring the
    schedule's dependency structure.  Payload and compute time are uniform
    per step; numeric work is not executed here.
    """
    if payload_elements_per_step <= 0:
        raise ValueError(f"payload must be positive, got {payload_elements_per_step}")
    if compute_time_per_step < 0:
        raise ValueError("compute time must be nonnegative")
    plan = build_ring_plan(topology, ring_style)
    if plan.style == "flat" and topology.num_nodes > 1 and schedule.kind != "none":
        raise ValueError(
            "activation/gradient schedules need the topology-aware (double) ring; "
            "the flat multi-node ring only supports schedule 'none'"
        )
    log = message_log_for(plan, payload_elements_per_step)
    t_a, t_e = topology.link_times(payload_elements_per_step)
    t_c = compute_time_per_step

    if plan.style == "single":
        events = [
            TimelineEvent(device=1, kind="compute", start=0.0, end=t_c, label="step 1 shard 1")
        ]
        return log, Timeline(events=_sorted_events(events), makespan=t_c)

    if schedule.kind == "none":
        timeline = _timeline_none(plan, t_a, t_e, t_c)
    elif plan.style != "double":
        timeline = _timeline_flat_overlap(plan, schedule.kind, t_a, t_c)
    else:
        timeline = _timeline_double_overlap(plan, schedule.kind, t_a, t_e, t_c)
    validate_timeline(timeline)  # causality checked structurally on every run
    return log, timeline


def _emit(plan: RingPlan, trace: _DeviceTrace) -> Timeline:
    """Replicate one symmetric device trace across all devices."""
    events: list[TimelineEvent] = []
    for dev in range(plan.devices):
        for start, end, label, step in trace.computes:
            shard = plan.visit[dev][step] + 1
            events.append(
                TimelineEvent(dev + 1, "compute", start, end, f"{label} shard {shard}")
            )
        for start, end, channel, label, idx in trace.sends:
            events.append(TimelineEvent(dev + 1, f"send_{channel}", start, end, label))
            receiver = plan.transfers[idx].receiver[dev]
            events.append(TimelineEvent(receiver + 1, "recv", start, end, f"recv {label}"))
        for at, label in trace.swaps:
            events.append(TimelineEvent(dev + 1, "buffer_swap", at, at, label))
    makespan = max(e.end for e in events)
    return Timeline(events=_sorted_events(events), makespan=makespan)


def _timeline_none(plan: RingPlan, t_a: float, t_e: float, t_c: float) -> Timeline:
    """Strict serialization of the plan's program order, lock-step barriers."""
    events: list[TimelineEvent] = []
    g = plan.devices
    now = 0.0

    def compute_wave(step: int):
        nonlocal now
        for dev in range(g):
            shard = plan.visit[dev][step] + 1
            label = _compute_label(plan, step)
            events.append(
                TimelineEvent(dev + 1, "compute", now, now + t_c, f"{label} shard {shard}")
            )
        now += t_c

    def transfer_wave(t: TransferStep):
        nonlocal now
        durations = [t_a if t.channels[dev] == INTRA else t_e for dev in range(g)]
        for dev in range(g):
            kind = f"send_{t.channels[dev]}"
            events.append(TimelineEvent(dev + 1, kind, now, now + durations[dev], t.label))
            events.append(
                TimelineEvent(t.receiver[dev] + 1, "recv", now, now + durations[dev], f"recv {t.label}")
            )
        now += max(durations)

    if plan.style == "flat":
        for step in range(g):
            transfer_wave(plan.transfers[step])
            compute_wave(step)
    else:  # double
        r, m = plan.topology.num_nodes, plan.topology.gpus_per_node
        idx = 0
        for i in range(r):
            for j in range(m):
                compute_wave(i * m + j)
                if j < m - 1:
                    transfer_wave(plan.transfers[idx])
                    idx += 1
            transfer_wave(plan.transfers[idx])
            idx += 1
    return Timeline(events=_sorted_events(events), makespan=now)


def _compute_label(plan: RingPlan, step: int) -> str:
    if plan.style == "flat":
        return f"step {step + 1}"
    m = plan.topology.gpus_per_node
    return f"round {step // m + 1} step {step % m + 1}"


def _timeline_flat_overlap(plan: RingPlan, kind: str, t_a: float, t_c: float) -> Timeline:
    """Activation/gradient overlap on the single-node flat ring."""
    g = plan.devices
    trace = _DeviceTrace()
    if kind == "activation":
        # Sends chain at link speed; compute t consumes arrival t.
        send_free = 0.0
        avail = 0.0  # shard to forward: own at t=0, then previous arrival
        compute_free = 0.0
        arrivals = []
        for t in range(g):
            start = max(avail, send_free)
            end = start + t_a
            trace.sends.append((start, end, INTRA, f"step {t + 1}", t))
            send_free = end
            arrivals.append(end)
            avail = end
        for t in range(g):
            start = max(arrivals[t], compute_free)
            end = start + t_c
            trace.computes.append((start, end, f"step {t + 1}", t))
            if t > 0:
                trace.swaps.append((start, f"step {t + 1} intra<->compute"))
            compute_free = end
    else:  # gradient: warm-up compute, each send waits for its compute
        arrival = 0.0  # own payload first
        compute_free = 0.0
        send_free = 0.0
        for t in range(g):
            c_start = max(arrival, compute_free)
            c_end = c_start + t_c
            trace.computes.append((c_start, c_end, f"step {t + 1}", t))
            if t > 0:
                trace.swaps.append((c_start, f"step {t + 1} intra<->compute"))
            compute_free = c_end
            s_start = max(c_end, send_free)
            s_end = s_start + t_a
            trace.sends.append((s_start, s_end, INTRA, f"step {t + 1}", t))
            send_free = s_end
            arrival = s_end
    return _emit(plan, trace)


def _timeline_double_overlap(
    plan: RingPlan, kind: str, t_a: float, t_e: float, t_c: float
) -> Timeline:
    """Activation/gradient overlap on the double ring (symmetric devices)."""
    r, m = plan.topology.num_nodes, plan.topology.gpus_per_node
    trace = _DeviceTrace()
    compute_free = 0.0
    intra_free = 0.0
    inter_free = 0.0
    round_arrival = 0.0  # when the round's seed payload is on the device
    xfer = 0  # transfer index in plan order

    for i in range(r):
        rd = f"round {i + 1}"
        inter_idx = (i + 1) * m - 1  # per round: m-1 intra transfers then inter
        if kind == "activation":
            # Inter send launches at round start, carrying the round seed.
            st = max(round_arrival, inter_free)
            en = st + t_e
            trace.sends.append((st, en, INTER, f"{rd} inter", inter_idx))
            inter_free = en
            next_round_arrival = en
            arrival = round_arrival
            if i > 0:
                trace.swaps.append((round_arrival, f"{rd} inter<->compute"))
            for j in range(m):
                step = i * m + j
                c_start = max(arrival, compute_free)
                c_end = c_start + t_c
                trace.computes.append((c_start, c_end, f"{rd} step {j + 1}", step))
                if j > 0:
                    trace.swaps.append((c_start, f"{rd} step {j + 1} intra<->compute"))
                compute_free = c_end
                if j < m - 1:
                    s_start = max(arrival, intra_free)
                    s_end = s_start + t_a
                    trace.sends.append((s_start, s_end, INTRA, f"{rd} step {j + 1}", xfer))
                    xfer += 1
                    intra_free = s_end
                    arrival = s_end
            xfer += 1  # account for the inter transfer emitted above
            round_arrival = next_round_arrival
        else:  # gradient
            arrival = round_arrival
            if i > 0:
                trace.swaps.append((round_arrival, f"{rd} inter<->compute"))
            last_intra_end = 0.0
            c_end = 0.0
            for j in range(m):
                step = i * m + j
                c_start = max(arrival, compute_free)
                c_end = c_start + t_c
                trace.computes.append((c_start, c_end, f"{rd} step {j + 1}", step))
                if j > 0:
                    trace.swaps.append((c_start, f"{rd} step {j + 1} intra<->compute"))
                compute_free = c_end
                if j < m - 1:
                    # Warm-up rule: the payload goes out only once this step's
                    # compute has folded its contribution in.
                    s_start = max(c_end, intra_free)
                    s_end = s_start + t_a
                    trace.sends.append((s_start, s_end, INTRA, f"{rd} step {j + 1}", xfer))
                    xfer += 1
                    intra_free = s_end
                    arrival = s_end
                    last_intra_end = s_end
            st = max(c_end, last_intra_end, inter_free)
            en = st + t_e
            trace.sends.append((st, en, INTER, f"{rd} inter", xfer))
            xfer += 1
            inter_free = en
            round_arrival = en
    return _emit(plan, trace)


def serialized_pass_time(
    topology: Topology,
    payload_elements_per_step: int,
    compute_time_per_step: float,
    ring_style: str = "auto",
) -> float:
    """Analytic serial sum matching the schedule-'none' makespan."""
    plan = build_ring_plan(topology, ring_style)
    t_a, t_e = topology.link_times(payload_elements_per_step)
    total = plan.steps * compute_time_per_step
    for t in plan.transfers:
        total += max(t_a if c == INTRA else t_e for c in t.channels)
    return total


def channel_floor_time(
    topology: Topology,
    payload_elements_per_step: int,
    compute_time_per_step: float,
    ring_style: str = "auto",
) -> float:
    """Lower bound for any schedule: the busiest single lane."""
    plan = build_ring_plan(topology, ring_style)
    t_a, t_e = topology.link_times(payload_elements_per_step)
    compute_total = plan.steps * compute_time_per_step
    per_device_intra = [0 for _ in range(plan.devices)]
    per_device_inter = [0 for _ in range(plan.devices)]
    for t in plan.transfers:
        for dev, c in enumerate(t.channels):
            if c == INTRA:
                per_device_intra[dev] += 1
            else:
                per_device_inter[dev] += 1
    intra_busy = max(per_device_intra, default=0) * t_a
    inter_busy = max(per_device_inter, default=0) * t_e
    return max(compute_total, intra_busy, inter_busy)


def validate_timeline(timeline: Timeline) -> None:
    """Structural checks: compute lanes never overlap, recvs match sends."""
    by_device: dict[int, list[TimelineEvent]] = {}
    for e in timeline.events:
        if e.end < e.start:
            raise ValueError(f"event ends before it starts: {e}")
        if e.kind == "compute":
            by_device.setdefault(e.device, []).append(e)
    for device, evts in by_device.items():
        evts = sorted(evts, key=lambda e: e.start)
        for prev, cur in zip(evts, evts[1:]):
            if cur.start < prev.end - 1e-12:
                raise ValueError(
                    f"device {device} compute lane overlaps: {prev.label} and {cur.label}"
                )
    sends = {}
    for e in timeline.events:
        if e.kind.startswith("send_"):
            sends.setdefault(e.label, []).append(e)
    for e in timeline.events:
        if e.kind == "recv":
            label = e.label.removeprefix("recv ")
            matches = sends.get(label, [])
            if not any(
                math.isclose(s.start, e.start) and math.isclose(s.end, e.end)
                for s in matches
            ):
                raise ValueError(f"recv without matching send: {e}")
    if timeline.events:
        top = max(ev.end for ev in timeline.events)
        if not math.isclose(top, timeline.makespan, rel_tol=0, abs_tol=1e-12):
            raise ValueError(f"makespan {timeline.makespan} != last event end {top}")
