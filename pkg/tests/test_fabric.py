import numpy as np
import pytest

from burstsim.fabric import (
    BURST_BACKWARD,
    FORWARD,
    RING_BACKWARD,
    OverlapSchedule,
    Topology,
    account_attention_comm,
    analytic_comm_time,
    build_double_ring,
    build_ring_plan,
    channel_floor_time,
    serialized_pass_time,
    simulate_ring,
    step_payload_elements,
    validate_timeline,
)


def fast_topo(nodes, gpn, t_a=1.0, t_e=2.0):
    """Latency-dominated topology: link time == latency to within 1e-12."""
    return Topology(nodes, gpn, lat_intra=t_a, lat_inter=t_e, bw_intra=1e15, bw_inter=1e15)


class TestTopology:
    def test_total_devices(self):
        assert Topology(2, 4).total_devices == 8

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(num_nodes=0, gpus_per_node=2),
            dict(num_nodes=1, gpus_per_node=1, lat_intra=0.0),
            dict(num_nodes=1, gpus_per_node=1, bw_inter=-1.0),
        ],
    )
    def test_validation(self, kwargs):
        base = dict(num_nodes=1, gpus_per_node=1)
        base.update(kwargs)
        with pytest.raises(ValueError):
            Topology(**base)

    def test_link_times(self):
        t = Topology(1, 2, lat_intra=1.0, lat_inter=2.0, bw_intra=10.0, bw_inter=5.0)
        assert t.link_times(10) == (2.0, 4.0)


class TestBuildDoubleRing:
    def test_single_node_is_one_intra_ring(self):
        dr = build_double_ring(Topology(1, 4))
        assert dr.intra_rings == ((1, 2, 3, 4),)
        assert dr.inter_rings == ()  # zero inter steps

    def test_two_by_four_matches_description(self):
        dr = build_double_ring(Topology(2, 4))
        assert dr.intra_rings == ((1, 2, 3, 4), (5, 6, 7, 8))
        assert dr.inter_rings == ((1, 5), (2, 6), (3, 7), (4, 8))
        plan = build_ring_plan(Topology(2, 4))
        # 4 inner steps per outer round, 2 outer rounds
        intra = [t for t in plan.transfers if t.channels[0] == "intra"]
        inter = [t for t in plan.transfers if t.channels[0] == "inter"]
        assert len(intra) == 2 * 3 and len(inter) == 2
        assert len(plan.transfers) == 8  # one send per compute step overall

    @pytest.mark.parametrize("nodes,gpn", [(1, 4), (2, 4), (4, 2), (3, 3), (2, 1)])
    def test_coverage_every_shard_exactly_once(self, nodes, gpn):
        dr = build_double_ring(Topology(nodes, gpn))
        g = nodes * gpn
        for row in dr.visit_order:
            assert sorted(row) == list(range(1, g + 1))

    def test_first_visit_multi_node_is_own_shard(self):
        dr = build_double_ring(Topology(2, 2))
        for dev, row in enumerate(dr.visit_order, start=1):
            assert row[0] == dev


class TestPlan:
    def test_single_device_no_transfers(self):
        plan = build_ring_plan(Topology(1, 1))
        assert plan.style == "single"
        assert plan.transfers == ()

    def test_flat_multi_node_channels(self):
        plan = build_ring_plan(Topology(2, 2), style="flat")
        for t in plan.transfers:
            assert t.channels == ("intra", "inter", "intra", "inter")

    def test_transfer_count_always_g(self):
        for nodes, gpn in ((1, 4), (2, 4), (4, 2)):
            plan = build_ring_plan(Topology(nodes, gpn))
            assert len(plan.transfers) == nodes * gpn


class TestAccounting:
    def test_spec_point_values(self):
        assert account_attention_comm(FORWARD, 8, 4, 2) == 64
        assert account_attention_comm(RING_BACKWARD, 8, 4, 2) == 128
        assert account_attention_comm(BURST_BACKWARD, 8, 4, 2) == 112

    def test_backward_ratio_d128(self):
        ratio = account_attention_comm(BURST_BACKWARD, 256, 128, 2) / account_attention_comm(
            RING_BACKWARD, 256, 128, 2
        )
        assert ratio == (3 * 128 + 2) / (4 * 128)
        assert abs(ratio - 0.754) < 1e-3  # "nearly 25% less"

    def test_per_step_payloads(self):
        assert step_payload_elements(FORWARD, 16, 4, 4) == 2 * 4 * 4
        assert step_payload_elements(RING_BACKWARD, 16, 4, 4) == 4 * 4 * 4
        assert step_payload_elements(BURST_BACKWARD, 16, 4, 4) == 3 * 4 * 4 + 2 * 4

    def test_divisibility(self):
        with pytest.raises(ValueError, match="divide"):
            account_attention_comm(FORWARD, 10, 4, 3)


class TestAnalyticCommTime:
    def test_table_values(self):
        topo = Topology(2, 4, lat_intra=3.0, lat_inter=5.0, bw_intra=1.0, bw_inter=1.0)
        assert analytic_comm_time("ring", topo, 0.0) == 240.0
        assert analytic_comm_time("double_ring", topo, 0.0) == 128.0
        assert analytic_comm_time("burst", topo, 0.0) == 90.0

    def test_single_node_burst_beats_ring(self):
        for g in (2, 4, 8):
            topo = Topology(1, g, lat_intra=1.0, lat_inter=1.0, bw_intra=1e6, bw_inter=1e6)
            assert analytic_comm_time("burst", topo, 100.0) < analytic_comm_time(
                "ring", topo, 100.0
            )

    def test_zero_payload_latency_only(self):
        topo = Topology(2, 2, lat_intra=2.0, lat_inter=7.0, bw_intra=1.0, bw_inter=1.0)
        # ring: 6 * max(4*2, 4*7) = 168; burst: 5 * max(2*2, 2*7) = 70
        assert analytic_comm_time("ring", topo, 0.0) == 168.0
        assert analytic_comm_time("burst", topo, 0.0) == 70.0

    def test_ordering_over_parameter_grid(self):
        rng = np.random.default_rng(2024)
        for _ in range(100):
            nodes = int(rng.integers(1, 5))
            gpn = int(rng.integers(1, 5))
            lat_a = float(rng.uniform(1e-6, 1e-3))
            lat_e = float(rng.uniform(lat_a, 1e-2))
            bw_e = float(rng.uniform(1e6, 1e9))
            bw_a = float(rng.uniform(bw_e, 1e10))  # B_intra >= B_inter
            payload = float(rng.uniform(1.0, 1e6))
            topo = Topology(nodes, gpn, lat_a, lat_e, bw_a, bw_e)
            t_ring = analytic_comm_time("ring", topo, payload)
            t_double = analytic_comm_time("double_ring", topo, payload)
            t_burst = analytic_comm_time("burst", topo, payload)
            assert t_burst <= t_double + 1e-12
            assert t_double <= t_ring + 1e-12


class TestScheduleNone:
    def test_flat_serialized_makespan(self):
        g, t_a, t_c = 8, 1.0, 10.0
        topo = fast_topo(1, g, t_a=t_a)
        _, tl = simulate_ring(1, topo, OverlapSchedule("none"), t_c)
        validate_timeline(tl)
        assert tl.makespan == pytest.approx(g * (t_a + t_c), rel=1e-12)

    def test_double_serialized_makespan(self):
        topo = fast_topo(2, 4, t_a=1.0, t_e=2.0)
        _, tl = simulate_ring(1, topo, OverlapSchedule("none"), 10.0)
        validate_timeline(tl)
        # per round: 4 computes + 3 intra + 1 inter, two rounds
        want = 2 * (4 * 10.0 + 3 * 1.0 + 2.0)
        assert tl.makespan == pytest.approx(want, rel=1e-9)

    def test_matches_serialized_pass_time(self):
        for nodes, gpn in ((1, 4), (2, 4), (4, 2)):
            topo = Topology(nodes, gpn, 1e-4, 5e-4, 1e8, 1e7)
            payload, t_c = 512, 2e-4
            _, tl = simulate_ring(payload, topo, OverlapSchedule("none"), t_c)
            want = serialized_pass_time(topo, payload, t_c)
            assert abs(tl.makespan - want) / want < 1e-9


class TestScheduleActivation:
    def test_flat_compute_dominant_makespan(self):
        # Hand-derived: first compute waits one transfer, then computes
        # chain without stalling: makespan = G*T_c + T_a.
        g, t_a, t_c = 8, 1.0, 10.0
        topo = fast_topo(1, g, t_a=t_a)
        _, tl = simulate_ring(1, topo, OverlapSchedule("activation"), t_c)
        validate_timeline(tl)
        assert tl.makespan == pytest.approx(g * t_c + t_a, rel=1e-12)

    def test_double_compute_dominant_makespan(self):
        # Hand-derived for 2x4, T_c=10, T_a=1, T_e=2: arrivals never stall
        # the compute chain, so makespan = G * T_c = 80.
        topo = fast_topo(2, 4, t_a=1.0, t_e=2.0)
        _, tl = simulate_ring(1, topo, OverlapSchedule("activation"), 10.0)
        validate_timeline(tl)
        assert tl.makespan == pytest.approx(80.0, rel=1e-12)

    def test_round_one_compute_starts_immediately(self):
        topo = fast_topo(2, 4)
        _, tl = simulate_ring(1, topo, OverlapSchedule("activation"), 5.0)
        first = min(e.start for e in tl.device_events(1, "compute"))
        assert first == 0.0

    def test_comm_dominant_lower_than_serial(self):
        topo = Topology(2, 4, lat_intra=1.0, lat_inter=3.0, bw_intra=1e12, bw_inter=1e12)
        payload, t_c = 1, 0.1
        _, tl = simulate_ring(payload, topo, OverlapSchedule("activation"), t_c)
        serial = serialized_pass_time(topo, payload, t_c)
        floor = channel_floor_time(topo, payload, t_c)
        assert floor - 1e-9 <= tl.makespan <= serial + 1e-9
        assert tl.makespan < serial  # overlap must actually help here


class TestScheduleGradient:
    def test_hand_derived_two_by_four(self):
        # Derived step by step for T_c=10, T_a=1, T_e=2 (see design notes):
        # round 1 ends with inter send [43, 45], round 2 computes 45..88,
        # final inter send [88, 90].
        topo = fast_topo(2, 4, t_a=1.0, t_e=2.0)
        _, tl = simulate_ring(1, topo, OverlapSchedule("gradient"), 10.0)
        validate_timeline(tl)
        assert tl.makespan == pytest.approx(90.0, rel=1e-12)
        inter = [e for e in tl.events if e.device == 1 and e.kind == "send_inter"]
        assert [(round(e.start, 9), round(e.end, 9)) for e in sorted(inter, key=lambda e: e.start)] == [
            (43.0, 45.0),
            (88.0, 90.0),
        ]

    def test_warmup_compute_before_any_intra_send(self):
        topo = fast_topo(2, 4)
        _, tl = simulate_ring(1, topo, OverlapSchedule("gradient"), 5.0)
        for dev in range(1, 9):
            computes = tl.device_events(dev, "compute")
            sends = [e for e in tl.events if e.device == dev and e.kind == "send_intra"]
            assert min(e.end for e in computes) <= min(e.start for e in sends) + 1e-12

    def test_inter_sends_after_node_intra_exchange(self):
        topo = fast_topo(2, 4)
        _, tl = simulate_ring(1, topo, OverlapSchedule("gradient"), 5.0)
        for dev in range(1, 9):
            intra = [e for e in tl.events if e.device == dev and e.kind == "send_intra"]
            inter = [e for e in tl.events if e.device == dev and e.kind == "send_inter"]
            for snd in inter:
                tag = snd.label.split(" inter")[0] + " "
                same_round = [e for e in intra if e.label.startswith(tag)]
                if same_round:
                    assert snd.start >= max(e.end for e in same_round) - 1e-12

    def test_flat_gradient_warmup(self):
        topo = fast_topo(1, 4)
        _, tl = simulate_ring(1, topo, OverlapSchedule("gradient"), 5.0)
        validate_timeline(tl)
        computes = tl.device_events(1, "compute")
        sends = [e for e in tl.events if e.device == 1 and e.kind == "send_intra"]
        assert min(e.end for e in computes) <= min(e.start for e in sends) + 1e-12


class TestMessageLog:
    def test_global_sent_equals_received(self):
        for nodes, gpn in ((1, 4), (2, 4), (4, 2)):
            topo = Topology(nodes, gpn)
            log, _ = simulate_ring(100, topo, OverlapSchedule("none"), 1e-3)
            g = nodes * gpn
            total_sent = sum(log.sent(d) for d in range(1, g + 1))
            total_recv = sum(log.received(d) for d in range(1, g + 1))
            assert total_sent == total_recv
            for channel in ("intra", "inter"):
                s = sum(log.sent(d, channel) for d in range(1, g + 1))
                r = sum(log.received(d, channel) for d in range(1, g + 1))
                assert s == r

    def test_per_device_totals(self):
        topo = Topology(2, 4)
        log, _ = simulate_ring(10, topo, OverlapSchedule("none"), 1e-3)
        for d in range(1, 9):
            assert log.sent(d) == 80  # G=8 steps x 10 elements
            assert log.sent(d, "intra") == 60
            assert log.sent(d, "inter") == 20

    def test_single_device_records_nothing(self):
        log, _ = simulate_ring(10, Topology(1, 1), OverlapSchedule("none"), 1e-3)
        assert log.transfer_count == 0
        assert log.sent(1) == 0


class TestTimelineValidation:
    @pytest.mark.parametrize("kind", ["none", "activation", "gradient"])
    @pytest.mark.parametrize("nodes,gpn", [(1, 4), (2, 4), (4, 2), (2, 1)])
    def test_every_schedule_validates(self, kind, nodes, gpn):
        topo = Topology(nodes, gpn, 1e-4, 5e-4, 1e8, 1e7)
        _, tl = simulate_ring(64, topo, OverlapSchedule(kind), 1e-4)
        validate_timeline(tl)

    @pytest.mark.parametrize("kind", ["none", "activation", "gradient"])
    def test_makespan_between_floor_and_serial(self, kind):
        for nodes, gpn in ((1, 8), (2, 4)):
            topo = Topology(nodes, gpn, 1e-4, 5e-4, 1e8, 1e7)
            payload, t_c = 256, 3e-4
            _, tl = simulate_ring(payload, topo, OverlapSchedule(kind), t_c)
            assert tl.makespan <= serialized_pass_time(topo, payload, t_c) + 1e-12
            assert tl.makespan >= channel_floor_time(topo, payload, t_c) - 1e-12

    def test_flat_multinode_rejects_overlap(self):
        with pytest.raises(ValueError, match="topology-aware"):
            simulate_ring(1, Topology(2, 2), OverlapSchedule("activation"), 1.0, ring_style="flat")

    def test_unknown_schedule_rejected(self):
        with pytest.raises(ValueError, match="unknown schedule"):
            OverlapSchedule("later")

    def test_buffer_roles_are_three(self):
        assert OverlapSchedule("activation").buffer_roles == (
            "compute",
            "intra_comm",
            "inter_comm",
        )
