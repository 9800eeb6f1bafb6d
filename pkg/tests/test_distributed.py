import numpy as np
import pytest

from burstsim.distributed import (
    burst_backward,
    distributed_forward,
    gather_rows,
    make_device_states,
    ring_backward,
    run_with_schedule,
    shard_rows,
)
from burstsim.fabric import (
    BURST_BACKWARD,
    FORWARD,
    RING_BACKWARD,
    OverlapSchedule,
    Topology,
)
from burstsim.masks import causal_mask, full_mask, sliding_window_mask
from burstsim.numerics import NEG_INF, seeded_random_matrix
from burstsim.oracle import attention_backward, attention_forward
from burstsim.partitioning import ShardLayout, block_mask_from_window


def qkv(n, d, seed):
    return (
        seeded_random_matrix(n, d, seed),
        seeded_random_matrix(n, d, seed + 1),
        seeded_random_matrix(n, d, seed + 2),
    )


def layouts_for(n, g):
    out = [ShardLayout("contiguous", n, g), ShardLayout("striped", n, g)]
    if n % (2 * g) == 0:
        out.append(ShardLayout("zigzag", n, g))
    if (n // 2) % g == 0:
        out.append(ShardLayout("block_striped", n, g, block_len=n // 2))
    return out


def masks_for(n):
    return [
        full_mask(),
        causal_mask(),
        sliding_window_mask(n // 2 + 1),
        block_mask_from_window(n, n // 4, n // 2),
    ]


class TestDistributedForward:
    def test_single_device_equals_oracle(self):
        n, d = 8, 4
        q, k, v = qkv(n, d, 100)
        layout = ShardLayout("contiguous", n, 1)
        states = make_device_states(layout, q, k, v)
        log = distributed_forward(states, layout, full_mask())
        ref = attention_forward(q, k, v, full_mask())
        assert np.max(np.abs(states[0].o - ref.o)) < 1e-12
        assert np.max(np.abs(states[0].lse - ref.lse)) < 1e-12
        assert log.transfer_count == 0  # degenerate ring sends nothing

    def test_first_step_replaces_neg_inf_state(self):
        # With Lse initialized to -inf, the first merged step must equal the
        # step's own partial output exactly (prior weight is exp(-inf) = 0).
        from burstsim.numerics import exp_gap, lse_merge

        lse0 = np.full(4, NEG_INF)
        lse_step = seeded_random_matrix(1, 4, 110)[0]
        o_step = seeded_random_matrix(4, 3, 111)
        o0 = np.zeros((4, 3))
        lse_new = lse_merge(lse0, lse_step)
        assert np.array_equal(lse_new, lse_step)
        merged = exp_gap(lse_step, lse_new)[:, None] * o_step
        merged += exp_gap(lse0, lse_new)[:, None] * o0
        assert np.array_equal(merged, o_step)

    @pytest.mark.parametrize("g", [2, 4])
    def test_zigzag_causal_matches_oracle(self, g):
        n, d = 16, 4
        q, k, v = qkv(n, d, 120)
        mask = causal_mask()
        ref = attention_forward(q, k, v, mask)
        layout = ShardLayout("zigzag", n, g)
        states = make_device_states(layout, q, k, v)
        distributed_forward(states, layout, mask)
        o = gather_rows(layout, [s.o for s in states])
        lse = gather_rows(layout, [s.lse for s in states])
        assert np.max(np.abs(o - ref.o)) < 1e-10
        assert np.max(np.abs(lse - ref.lse)) < 1e-10

    @pytest.mark.parametrize("g", [1, 2, 4])
    def test_small_grid_all_layouts_masks(self, g):
        n, d = 16, 8
        q, k, v = qkv(n, d, 130)
        for layout in layouts_for(n, g):
            for mask in masks_for(n):
                ref = attention_forward(q, k, v, mask)
                states = make_device_states(layout, q, k, v)
                distributed_forward(states, layout, mask)
                o = gather_rows(layout, [s.o for s in states])
                assert np.max(np.abs(o - ref.o)) < 1e-10

    def test_visit_order_permutation_invariance(self):
        n, d, g = 16, 4, 4
        q, k, v = qkv(n, d, 140)
        mask = causal_mask()
        layout = ShardLayout("striped", n, g)
        states = make_device_states(layout, q, k, v)
        distributed_forward(states, layout, mask)
        base = gather_rows(layout, [s.o for s in states])
        rng = np.random.default_rng(7)
        for _ in range(3):
            order = [list(rng.permutation(g)) for _ in range(g)]
            st2 = make_device_states(layout, q, k, v)
            distributed_forward(st2, layout, mask, visit_order=order)
            alt = gather_rows(layout, [s.o for s in st2])
            assert np.max(np.abs(alt - base)) < 1e-10

    def test_forward_message_log_exact(self):
        n, d, g = 16, 4, 4
        q, k, v = qkv(n, d, 150)
        layout = ShardLayout("contiguous", n, g)
        states = make_device_states(layout, q, k, v)
        log = distributed_forward(states, layout, full_mask())
        for dev in range(1, g + 1):
            assert log.sent(dev) == 2 * n * d

    def test_multi_node_topology_same_answer(self):
        n, d = 16, 4
        q, k, v = qkv(n, d, 160)
        mask = causal_mask()
        layout = ShardLayout("zigzag", n, 4)
        ref = attention_forward(q, k, v, mask)
        states = make_device_states(layout, q, k, v)
        log = distributed_forward(states, layout, mask, topology=Topology(2, 2))
        o = gather_rows(layout, [s.o for s in states])
        assert np.max(np.abs(o - ref.o)) < 1e-10
        assert log.sent(1) == 2 * n * d
        assert log.sent(1, "inter") == 2 * (2 * (n // 4) * d)  # 2 inter rounds

    def test_globally_masked_row_is_error(self):
        from burstsim.masks import block_sparse_mask

        n, g = 8, 2
        bm = block_sparse_mask(np.array([[0, 0], [1, 1]]), 4)
        q, k, v = qkv(n, 4, 170)
        layout = ShardLayout("contiguous", n, g)
        states = make_device_states(layout, q, k, v)
        with pytest.raises(ValueError, match="no unmasked key"):
            distributed_forward(states, layout, bm)

    def test_topology_layout_mismatch(self):
        layout = ShardLayout("contiguous", 8, 2)
        q, k, v = qkv(8, 4, 180)
        states = make_device_states(layout, q, k, v)
        with pytest.raises(ValueError, match="devices"):
            distributed_forward(states, layout, full_mask(), topology=Topology(1, 4))


class TestRingBackward:
    def test_backward_before_forward_errors(self):
        layout = ShardLayout("contiguous", 8, 2)
        q, k, v = qkv(8, 4, 200)
        states = make_device_states(layout, q, k, v)
        with pytest.raises(RuntimeError, match="forward"):
            ring_backward(states, shard_rows(layout, q), layout, full_mask())

    def test_zero_cotangent_zero_grads_full_comm(self):
        n, d, g = 8, 4, 2
        q, k, v = qkv(n, d, 210)
        layout = ShardLayout("contiguous", n, g)
        states = make_device_states(layout, q, k, v)
        distributed_forward(states, layout, full_mask())
        log = ring_backward(states, shard_rows(layout, np.zeros((n, d))), layout, full_mask())
        for st in states:
            assert not st.dq.any() and not st.dk.any() and not st.dv.any()
        assert log.sent(1) == 4 * n * d  # communication is unconditional

    def test_single_device_matches_oracle(self):
        n, d = 8, 4
        q, k, v = qkv(n, d, 220)
        do = seeded_random_matrix(n, d, 223)
        mask = causal_mask()
        layout = ShardLayout("contiguous", n, 1)
        states = make_device_states(layout, q, k, v)
        distributed_forward(states, layout, mask)
        ring_backward(states, [do], layout, mask)
        ref = attention_forward(q, k, v, mask)
        g = attention_backward(q, k, v, ref.o, ref.lse, do, mask)
        assert np.max(np.abs(states[0].dq - g.dq)) < 1e-10
        assert np.max(np.abs(states[0].dk - g.dk)) < 1e-10
        assert np.max(np.abs(states[0].dv - g.dv)) < 1e-10

    def test_full_mask_grid_matches_oracle_and_counts(self):
        n, d, g = 16, 4, 4
        q, k, v = qkv(n, d, 230)
        do = seeded_random_matrix(n, d, 233)
        layout = ShardLayout("contiguous", n, g)
        states = make_device_states(layout, q, k, v)
        distributed_forward(states, layout, full_mask())
        log = ring_backward(states, shard_rows(layout, do), layout, full_mask())
        ref = attention_forward(q, k, v, full_mask())
        want = attention_backward(q, k, v, ref.o, ref.lse, do, full_mask())
        for name in ("dq", "dk", "dv"):
            got = gather_rows(layout, [getattr(s, name) for s in states])
            assert np.max(np.abs(got - getattr(want, name))) < 1e-9
        assert log.sent(1) == 4 * 16 * 4 == 256


class TestBurstBackward:
    def test_equals_ring_backward_across_masks_and_g(self):
        n, d = 16, 4
        q, k, v = qkv(n, d, 300)
        do = seeded_random_matrix(n, d, 303)
        for g in (2, 4):
            for mask in (full_mask(), causal_mask(), sliding_window_mask(5)):
                layout = ShardLayout("contiguous", n, g)
                do_sh = shard_rows(layout, do)
                st_r = make_device_states(layout, q, k, v)
                distributed_forward(st_r, layout, mask)
                ring_backward(st_r, do_sh, layout, mask)
                st_b = make_device_states(layout, q, k, v)
                distributed_forward(st_b, layout, mask)
                burst_backward(st_b, do_sh, layout, mask)
                for name in ("dq", "dk", "dv"):
                    a = gather_rows(layout, [getattr(s, name) for s in st_r])
                    b = gather_rows(layout, [getattr(s, name) for s in st_b])
                    assert np.max(np.abs(a - b)) < 1e-10

    def test_message_log_value(self):
        n, d, g = 16, 4, 4
        q, k, v = qkv(n, d, 310)
        layout = ShardLayout("contiguous", n, g)
        states = make_device_states(layout, q, k, v)
        distributed_forward(states, layout, full_mask())
        log = burst_backward(
            states, shard_rows(layout, seeded_random_matrix(n, d, 313)), layout, full_mask()
        )
        assert log.sent(1) == 3 * 16 * 4 + 2 * 16 == 224

    def test_zero_cotangent(self):
        n, d, g = 8, 4, 2
        q, k, v = qkv(n, d, 320)
        layout = ShardLayout("striped", n, g)
        states = make_device_states(layout, q, k, v)
        distributed_forward(states, layout, causal_mask())
        burst_backward(states, shard_rows(layout, np.zeros((n, d))), layout, causal_mask())
        for st in states:
            assert not st.dq.any() and not st.dk.any() and not st.dv.any()

    def test_backward_before_forward_errors(self):
        layout = ShardLayout("contiguous", 8, 2)
        q, k, v = qkv(8, 4, 330)
        states = make_device_states(layout, q, k, v)
        with pytest.raises(RuntimeError, match="forward"):
            burst_backward(states, shard_rows(layout, q), layout, full_mask())

    def test_payload_element_counts_match_closed_forms(self):
        from burstsim.distributed import KvPayload, QPayload
        from burstsim.fabric import step_payload_elements

        n, d, g = 16, 4, 4
        q, k, v = qkv(n, d, 350)
        layout = ShardLayout("contiguous", n, g)
        states = make_device_states(layout, q, k, v)
        kv_fwd = KvPayload(k=states[0].k, v=states[0].v)
        assert kv_fwd.element_count == step_payload_elements(FORWARD, n, d, g) == 2 * (n // g) * d
        kv_bwd = KvPayload(
            k=states[0].k,
            v=states[0].v,
            dk=np.zeros_like(states[0].k),
            dv=np.zeros_like(states[0].v),
        )
        assert kv_bwd.element_count == step_payload_elements(RING_BACKWARD, n, d, g)
        qp = QPayload(
            q=states[0].q,
            dq=np.zeros_like(states[0].q),
            do=np.zeros_like(states[0].q),
            d_vec=np.zeros(n // g),
            lse=np.zeros(n // g),
        )
        assert qp.element_count == step_payload_elements(BURST_BACKWARD, n, d, g)
        assert qp.element_count == 3 * (n // g) * d + 2 * (n // g)

    def test_d_vector_computed_once_and_shipped(self):
        # D_i must be the rowsum of (dO_i o O_i) from the completed forward.
        n, d, g = 8, 4, 2
        q, k, v = qkv(n, d, 340)
        do = seeded_random_matrix(n, d, 343)
        layout = ShardLayout("contiguous", n, g)
        states = make_device_states(layout, q, k, v)
        distributed_forward(states, layout, full_mask())
        burst_backward(states, shard_rows(layout, do), layout, full_mask())
        do_sh = shard_rows(layout, do)
        for st, do_i in zip(states, do_sh):
            assert np.allclose(st.d_vec, np.sum(do_i * st.o, axis=1), atol=1e-14)


class TestRunWithSchedule:
    def test_forward_schedules_bitwise_identical(self):
        n, d = 16, 4
        q, k, v = qkv(n, d, 400)
        layout = ShardLayout("zigzag", n, 4)
        runs = {
            kind: run_with_schedule(
                FORWARD,
                layout,
                causal_mask(),
                q,
                k,
                v,
                topology=Topology(2, 2),
                schedule=OverlapSchedule(kind),
            )
            for kind in ("none", "activation")
        }
        for a, b in zip(runs["none"].results, runs["activation"].results):
            assert np.array_equal(a.o, b.o)
            assert np.array_equal(a.lse, b.lse)

    def test_gradient_schedule_identical_grads_2x2(self):
        n, d = 16, 4
        q, k, v = qkv(n, d, 410)
        do = seeded_random_matrix(n, d, 413)
        layout = ShardLayout("striped", n, 4)
        base = run_with_schedule(
            BURST_BACKWARD,
            layout,
            causal_mask(),
            q,
            k,
            v,
            do=do,
            topology=Topology(2, 2),
            schedule=OverlapSchedule("none"),
        )
        grad = run_with_schedule(
            BURST_BACKWARD,
            layout,
            causal_mask(),
            q,
            k,
            v,
            do=do,
            topology=Topology(2, 2),
            schedule=OverlapSchedule("gradient"),
        )
        for a, b in zip(base.results, grad.results):
            assert np.max(np.abs(a.dq - b.dq)) < 1e-12
            assert np.max(np.abs(a.dk - b.dk)) < 1e-12
            assert np.max(np.abs(a.dv - b.dv)) < 1e-12

    def test_gradient_timeline_shows_warmup(self):
        n, d = 16, 4
        q, k, v = qkv(n, d, 420)
        layout = ShardLayout("zigzag", n, 4)
        run = run_with_schedule(
            RING_BACKWARD,
            layout,
            causal_mask(),
            q,
            k,
            v,
            do=seeded_random_matrix(n, d, 423),
            topology=Topology(2, 2),
            schedule=OverlapSchedule("gradient"),
        )
        computes = run.timeline.device_events(1, "compute")
        sends = [e for e in run.timeline.events if e.device == 1 and e.kind == "send_intra"]
        assert min(c.end for c in computes) <= min(s.start for s in sends) + 1e-12

    def test_message_log_matches_closed_form(self):
        n, d = 16, 4
        q, k, v = qkv(n, d, 430)
        layout = ShardLayout("contiguous", n, 4)
        run = run_with_schedule(
            BURST_BACKWARD,
            layout,
            full_mask(),
            q,
            k,
            v,
            do=seeded_random_matrix(n, d, 433),
            schedule=OverlapSchedule("none"),
        )
        assert run.message_log.sent(1) == 3 * n * d + 2 * n

    def test_backward_requires_do(self):
        layout = ShardLayout("contiguous", 8, 2)
        q, k, v = qkv(8, 4, 440)
        with pytest.raises(ValueError, match="dO"):
            run_with_schedule(RING_BACKWARD, layout, full_mask(), q, k, v)
