"""The `verify` battery: every module invariant as a seeded pass/fail check.

Each check returns (name, passed, detail).  The run is a pure function of the
seed: the same seed gives byte-identical reports regardless of thread count,
because all numeric paths avoid threaded BLAS.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import distributed as dist
from .checkpointing import (
    FULL_RECOMPUTE,
    SELECTIVE_PP,
    SEQUENCE_SELECTIVE,
    CheckpointPolicy,
    execute_toy,
    plan as checkpoint_plan,
)
from .fabric import (
    BURST_BACKWARD,
    FORWARD,
    RING_BACKWARD,
    OverlapSchedule,
    Topology,
    account_attention_comm,
    analytic_comm_time,
    build_double_ring,
    serialized_pass_time,
    simulate_ring,
    validate_timeline,
)
from .lmhead import FusionConfig, fused_lmhead_loss
from .masks import MaskSpec, causal_mask, full_mask, sliding_window_mask
from .numerics import lse_merge, row_logsumexp, row_softmax, seeded_random_matrix
from .oracle import attention_backward, attention_forward, finite_diff_check, naive_lmhead_loss
from .partitioning import ShardLayout, balance_report, block_mask_from_window, local_pair_set


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _check(name: str, passed: bool, detail: str) -> CheckResult:
    return CheckResult(name=name, passed=bool(passed), detail=detail)


def _max_abs(a, b) -> float:
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def _masks_for(n: int) -> list[tuple[str, MaskSpec]]:
    return [
        ("full", full_mask()),
        ("causal", causal_mask()),
        (f"window{n // 2 + 1}", sliding_window_mask(n // 2 + 1)),
        ("blocksparse", block_mask_from_window(n, n // 4, n // 2)),
    ]


def _layouts_for(n: int, g: int) -> list[ShardLayout]:
    out = [ShardLayout("contiguous", n, g), ShardLayout("striped", n, g)]
    if n % (2 * g) == 0:
        out.append(ShardLayout("zigzag", n, g))
    return out


def check_numerics(seed: int) -> list[CheckResult]:
    results = []
    rng_a = seeded_random_matrix(6, 16, seed)
    lse_a = row_logsumexp(rng_a[:, :8])
    lse_b = row_logsumexp(rng_a[:, 8:])
    whole = row_logsumexp(rng_a)
    merged = lse_merge(lse_a, lse_b)
    results.append(
        _check(
            "numerics.lse_split_merge",
            _max_abs(merged, whole) < 1e-12,
            f"max diff {_max_abs(merged, whole):.3e}",
        )
    )
    sm = row_softmax(rng_a)
    sums = np.abs(sm.sum(axis=1) - 1.0).max()
    results.append(_check("numerics.softmax_rows_sum_to_one", sums < 1e-12, f"max |sum-1| {sums:.3e}"))
    a = seeded_random_matrix(1, 12, seed + 1)[0]
    b = seeded_random_matrix(1, 12, seed + 2)[0]
    c = seeded_random_matrix(1, 12, seed + 3)[0]
    comm = _max_abs(lse_merge(a, b), lse_merge(b, a))
    assoc = _max_abs(lse_merge(lse_merge(a, b), c), lse_merge(a, lse_merge(b, c)))
    results.append(
        _check(
            "numerics.lse_merge_commutative_associative",
            comm < 1e-10 and assoc < 1e-10,
            f"comm {comm:.3e} assoc {assoc:.3e}",
        )
    )
    return results


def check_oracle(seed: int) -> list[CheckResult]:
    import math

    results = []
    n, d = 6, 4
    q = seeded_random_matrix(n, d, seed + 5)
    k = seeded_random_matrix(n, d, seed + 6)
    v = seeded_random_matrix(n, d, seed + 7)
    ref = attention_forward(q, k, v, full_mask())
    worst = 0.0
    for i in range(n):  # explicit per-pair loops, no matrix ops
        scores = [
            sum(q[i, c] * k[j, c] for c in range(d)) / math.sqrt(d) for j in range(n)
        ]
        m = max(scores)
        weights = [math.exp(s - m) for s in scores]
        z = sum(weights)
        for c in range(d):
            want = sum(weights[j] / z * v[j, c] for j in range(n))
            worst = max(worst, abs(ref.o[i, c] - want))
    results.append(
        _check("oracle.full_mask_per_pair_loops", worst < 1e-12, f"worst {worst:.3e}")
    )
    mask = sliding_window_mask(2)
    res = attention_forward(q, k, v, mask)
    do = np.zeros((n, d))
    row = 4
    do[row] = seeded_random_matrix(1, d, seed + 8)[0]
    grads = attention_backward(q, k, v, res.o, res.lse, do, mask)
    leaked = max(
        float(np.max(np.abs(grads.dv[j])))
        for j in range(n)
        if not (0 <= row - j < 2)  # keys the nonzero query row cannot reach
    )
    results.append(
        _check("oracle.gradient_locality", leaked == 0.0, f"masked dV leak {leaked:.3e}")
    )
    return results


def check_forward(seed: int) -> list[CheckResult]:
    n, d = 16, 4
    q = seeded_random_matrix(n, d, seed + 10)
    k = seeded_random_matrix(n, d, seed + 11)
    v = seeded_random_matrix(n, d, seed + 12)
    worst = 0.0
    cases = 0
    for g in (1, 2, 4):
        for layout in _layouts_for(n, g):
            for _, mask in _masks_for(n):
                ref = attention_forward(q, k, v, mask)
                states = dist.make_device_states(layout, q, k, v)
                dist.distributed_forward(states, layout, mask)
                o = dist.gather_rows(layout, [s.o for s in states])
                lse = dist.gather_rows(layout, [s.lse for s in states])
                worst = max(worst, _max_abs(o, ref.o), _max_abs(lse, ref.lse))
                cases += 1
    results = [
        _check(
            "forward.matches_oracle",
            worst < 1e-10,
            f"{cases} cases, worst abs err {worst:.3e}",
        )
    ]
    layout = ShardLayout("striped", n, 4)
    mask = causal_mask()
    states = dist.make_device_states(layout, q, k, v)
    dist.distributed_forward(states, layout, mask)
    base = dist.gather_rows(layout, [s.o for s in states])
    rng = np.random.default_rng(seed + 13)
    worst_perm = 0.0
    for _ in range(3):
        order = [list(rng.permutation(4)) for _ in range(4)]
        st2 = dist.make_device_states(layout, q, k, v)
        dist.distributed_forward(st2, layout, mask, visit_order=order)
        worst_perm = max(worst_perm, _max_abs(dist.gather_rows(layout, [s.o for s in st2]), base))
    results.append(
        _check(
            "forward.visit_order_independence",
            worst_perm < 1e-10,
            f"worst over permuted rings {worst_perm:.3e}",
        )
    )
    return results


def check_backward(seed: int) -> list[CheckResult]:
    n, d = 16, 4
    q = seeded_random_matrix(n, d, seed + 20)
    k = seeded_random_matrix(n, d, seed + 21)
    v = seeded_random_matrix(n, d, seed + 22)
    do = seeded_random_matrix(n, d, seed + 23)
    worst_cross = 0.0
    worst_oracle = 0.0
    for g in (2, 4):
        for layout in _layouts_for(n, g):
            for _, mask in _masks_for(n):
                ref = attention_forward(q, k, v, mask)
                refg = attention_backward(q, k, v, ref.o, ref.lse, do, mask)
                do_shards = dist.shard_rows(layout, do)
                st_r = dist.make_device_states(layout, q, k, v)
                dist.distributed_forward(st_r, layout, mask)
                dist.ring_backward(st_r, do_shards, layout, mask)
                st_b = dist.make_device_states(layout, q, k, v)
                dist.distributed_forward(st_b, layout, mask)
                dist.burst_backward(st_b, do_shards, layout, mask)
                for name in ("dq", "dk", "dv"):
                    ring_g = dist.gather_rows(layout, [getattr(s, name) for s in st_r])
                    burst_g = dist.gather_rows(layout, [getattr(s, name) for s in st_b])
                    worst_cross = max(worst_cross, _max_abs(ring_g, burst_g))
                    worst_oracle = max(worst_oracle, _max_abs(ring_g, getattr(refg, name)))
    out = [
        _check("backward.burst_equals_ring", worst_cross < 1e-10, f"worst {worst_cross:.3e}"),
        _check("backward.matches_oracle", worst_oracle < 1e-9, f"worst {worst_oracle:.3e}"),
    ]
    mask = causal_mask()
    small_n, small_d = 6, 3
    qs = seeded_random_matrix(small_n, small_d, seed + 24)
    ks = seeded_random_matrix(small_n, small_d, seed + 25)
    vs = seeded_random_matrix(small_n, small_d, seed + 26)
    dos = seeded_random_matrix(small_n, small_d, seed + 27)
    ref = attention_forward(qs, ks, vs, mask)
    grads = attention_backward(qs, ks, vs, ref.o, ref.lse, dos, mask)

    def loss_q(x):
        return float(np.sum(attention_forward(x, ks, vs, mask).o * dos))

    err = finite_diff_check(loss_q, qs, grads.dq, h=1e-6)
    out.append(_check("backward.finite_difference", err < 1e-5, f"dQ rel err {err:.3e}"))
    return out


def check_comm(seed: int) -> list[CheckResult]:
    results = []
    exact = True
    detail = ""
    for n in (8, 16, 32):
        for d in (4, 8):
            for g in (2, 4):
                if n % g:
                    continue
                layout = ShardLayout("contiguous", n, g)
                q = seeded_random_matrix(n, d, seed + 30)
                k = seeded_random_matrix(n, d, seed + 31)
                v = seeded_random_matrix(n, d, seed + 32)
                do = seeded_random_matrix(n, d, seed + 33)
                mask = full_mask()
                st = dist.make_device_states(layout, q, k, v)
                log_f = dist.distributed_forward(st, layout, mask)
                log_r = dist.ring_backward(st, dist.shard_rows(layout, do), layout, mask)
                st2 = dist.make_device_states(layout, q, k, v)
                dist.distributed_forward(st2, layout, mask)
                log_b = dist.burst_backward(st2, dist.shard_rows(layout, do), layout, mask)
                want = (
                    account_attention_comm(FORWARD, n, d, g),
                    account_attention_comm(RING_BACKWARD, n, d, g),
                    account_attention_comm(BURST_BACKWARD, n, d, g),
                )
                got = (log_f.sent(1), log_r.sent(1), log_b.sent(1))
                if want != got:
                    exact = False
                    detail = f"N={n} d={d} G={g}: want {want} got {got}"
    results.append(_check("comm.per_device_totals_exact", exact, detail or "all grid points exact"))
    ratio = account_attention_comm(BURST_BACKWARD, 128, 128, 2) / account_attention_comm(
        RING_BACKWARD, 128, 128, 2
    )
    results.append(
        _check(
            "comm.backward_ratio_d128",
            abs(ratio - (3 * 128 + 2) / (4 * 128)) < 1e-15,
            f"ratio {ratio!r}",
        )
    )
    return results


def check_analytic_times(seed: int) -> list[CheckResult]:
    topo = Topology(2, 4, lat_intra=3.0, lat_inter=5.0, bw_intra=1.0, bw_inter=1.0)
    table = tuple(analytic_comm_time(s, topo, 0.0) for s in ("ring", "double_ring", "burst"))
    results = [
        _check(
            "fabric.table_closed_forms",
            table == (240.0, 128.0, 90.0),
            f"ring/double/burst = {table}",
        )
    ]
    ok = True
    rng = np.random.default_rng(seed + 40)
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
        if not (t_burst <= t_double + 1e-12 and t_double <= t_ring + 1e-12):
            ok = False
    results.append(_check("fabric.burst_le_double_le_ring", ok, "100-point parameter grid"))
    cover = True
    for nodes, gpn in ((1, 4), (2, 4), (4, 2)):
        dr = build_double_ring(Topology(nodes, gpn))
        g = nodes * gpn
        for row in dr.visit_order:
            if sorted(row) != list(range(1, g + 1)):
                cover = False
    results.append(_check("fabric.double_ring_coverage", cover, "each device sees every shard once"))
    return results


def check_schedules(seed: int) -> list[CheckResult]:
    results = []
    topo = Topology(2, 4, lat_intra=1e-4, lat_inter=5e-4, bw_intra=1e8, bw_inter=1e7)
    payload = 512
    t_c = 2e-4
    log_n, tl_none = simulate_ring(payload, topo, OverlapSchedule("none"), t_c)
    serial = serialized_pass_time(topo, payload, t_c)
    rel = abs(tl_none.makespan - serial) / serial
    results.append(
        _check("fabric.none_matches_serial_sum", rel < 1e-9, f"rel err {rel:.3e}")
    )
    _, tl_grad = simulate_ring(payload, topo, OverlapSchedule("gradient"), t_c)
    validate_timeline(tl_grad)
    ok_warm = True
    ok_inter = True
    for dev in range(1, topo.total_devices + 1):
        computes = tl_grad.device_events(dev, "compute")
        intra = [e for e in tl_grad.events if e.device == dev and e.kind == "send_intra"]
        inter = [e for e in tl_grad.events if e.device == dev and e.kind == "send_inter"]
        first_compute = min(e.end for e in computes)
        if intra and min(e.start for e in intra) < first_compute - 1e-15:
            ok_warm = False
        for snd in inter:
            round_tag = snd.label.split(" inter")[0]
            same_round_intra = [e for e in intra if e.label.startswith(round_tag + " ")]
            if same_round_intra and snd.start < max(e.end for e in same_round_intra) - 1e-15:
                ok_inter = False
    results.append(_check("fabric.gradient_warmup_before_intra", ok_warm, "warm-up precedes sends"))
    results.append(
        _check("fabric.inter_after_intra_exchange", ok_inter, "inter sends follow intra rounds")
    )

    n, d, g = 16, 4, 4
    layout = ShardLayout("zigzag", n, g)
    mask = causal_mask()
    q = seeded_random_matrix(n, d, seed + 50)
    k = seeded_random_matrix(n, d, seed + 51)
    v = seeded_random_matrix(n, d, seed + 52)
    do = seeded_random_matrix(n, d, seed + 53)
    topo22 = Topology(2, 2)
    base = dist.run_with_schedule(
        BURST_BACKWARD, layout, mask, q, k, v, do=do, topology=topo22, schedule=OverlapSchedule("none")
    )
    identical = True
    for kind in ("activation", "gradient"):
        run = dist.run_with_schedule(
            BURST_BACKWARD, layout, mask, q, k, v, do=do, topology=topo22, schedule=OverlapSchedule(kind)
        )
        for a, b in zip(base.results, run.results):
            if not (
                np.array_equal(a.dq, b.dq)
                and np.array_equal(a.dk, b.dk)
                and np.array_equal(a.dv, b.dv)
            ):
                identical = False
    results.append(
        _check("fabric.schedules_never_change_values", identical, "bitwise identical grads")
    )
    return results


def check_balance(seed: int) -> list[CheckResult]:
    results = []
    mask = causal_mask()
    zz = balance_report(ShardLayout("zigzag", 16, 4), mask)
    zz_equal = len(set(zz.per_device_pairs)) == 1
    zz_spread = zz.max_step_spread <= 16 // (2 * 4)
    results.append(
        _check(
            "balance.zigzag_causal_equal_totals",
            zz_equal and zz_spread,
            f"totals {zz.per_device_pairs}, step spread {zz.max_step_spread}",
        )
    )
    st = balance_report(ShardLayout("striped", 16, 4), mask)
    st_ok = st.device_spread <= (4 - 1) * (16 // 4)
    results.append(
        _check("balance.striped_causal_bounded_spread", st_ok, f"totals {st.per_device_pairs}")
    )
    ct = balance_report(ShardLayout("contiguous", 16, 4), mask)
    ct_ok = ct.per_device_pairs[-1] >= 2 * ct.per_device_pairs[0]
    results.append(
        _check("balance.contiguous_causal_imbalanced", ct_ok, f"totals {ct.per_device_pairs}")
    )
    bm = block_mask_from_window(16, 4, 8)
    bsr = balance_report(ShardLayout("block_striped", 16, 4, block_len=4), bm)
    results.append(
        _check(
            "balance.block_striped_exactly_equal",
            len(set(bsr.per_device_pairs)) == 1,
            f"totals {bsr.per_device_pairs}",
        )
    )
    zz8 = balance_report(ShardLayout("zigzag", 8, 2), mask)
    results.append(
        _check(
            "balance.zigzag_8_2_is_18_18",
            zz8.per_device_pairs == (18, 18),
            f"totals {zz8.per_device_pairs}",
        )
    )
    return results


def check_partition_coverage(seed: int) -> list[CheckResult]:
    from .masks import allowed_pairs
    from .partitioning import layout_shards, shard_token_arrays

    partition_ok = True
    worst_ok = True
    for n, g in ((8, 2), (16, 4)):
        for layout in _layouts_for(n, g) + [ShardLayout("block_striped", n, g, block_len=n // 2)]:
            tokens_flat = [t for s in layout_shards(layout) for t in s.token_ids]
            if sorted(tokens_flat) != list(range(1, n + 1)):
                partition_ok = False
            for _, mask in _masks_for(n):
                tokens = shard_token_arrays(layout)
                seen = set()
                for i in range(1, g + 1):
                    for j in range(1, g + 1):
                        for (a, b) in local_pair_set(layout, mask, i, j):
                            seen.add((int(tokens[i - 1][a - 1]), int(tokens[j - 1][b - 1])))
                dense = allowed_pairs(mask, np.arange(1, n + 1), np.arange(1, n + 1))
                want = {(int(q) + 1, int(k) + 1) for q, k in zip(*np.nonzero(dense))}
                if seen != want:
                    worst_ok = False
    return [
        _check(
            "partition.layouts_partition_tokens_exactly",
            partition_ok,
            "no duplicates, no gaps",
        ),
        _check(
            "partition.local_pairs_cover_global_exactly",
            worst_ok,
            "bijective coverage over layouts x masks",
        ),
    ]


def check_lmhead(seed: int) -> list[CheckResult]:
    results = []
    n, v, d = 12, 19, 5
    h = seeded_random_matrix(n, d, seed + 60)
    w = seeded_random_matrix(v, d, seed + 61)
    rng = np.random.default_rng(seed + 62)
    y = rng.integers(0, v, size=n)
    naive = naive_lmhead_loss(h, w, y)
    worst = 0.0
    peaks_ok = True
    for bs_rows, bs_vocab in ((n, v), (4, 3), (5, 7), (1, 19)):
        cfg = FusionConfig(bs_rows, bs_vocab)
        fused = fused_lmhead_loss(h, w, y, cfg)
        worst = max(
            worst,
            _max_abs(fused.loss, naive.loss),
            _max_abs(fused.dh, naive.dh),
            _max_abs(fused.dw, naive.dw),
        )
        if fused.peak_aux_elements > min(bs_rows, n) * v:
            peaks_ok = False
        if bs_rows < n and fused.peak_aux_elements >= n * v:
            peaks_ok = False
    results.append(_check("lmhead.fused_matches_naive", worst < 1e-10, f"worst {worst:.3e}"))
    results.append(_check("lmhead.peak_storage_bounded", peaks_ok, "peak <= B_s*v and < N*v"))
    logits = h @ w.T
    dlogits = np.exp(logits - row_logsumexp(logits)[:, None])
    dlogits[np.arange(n), y] -= 1.0
    sums = float(np.abs(dlogits.sum(axis=1)).max())
    results.append(_check("lmhead.softmax_minus_onehot_rowsum", sums < 1e-12, f"{sums:.3e}"))

    def loss_h(x):
        return float(np.sum(naive_lmhead_loss(x, w, y).loss))

    fd = finite_diff_check(loss_h, h, naive.dh, h=1e-6)
    results.append(_check("lmhead.finite_difference", fd < 1e-5, f"dH rel err {fd:.3e}"))
    base = fused_lmhead_loss(h, w, y, FusionConfig(4, v))
    worst_bv = 0.0
    for bv in (1, 3, 7, v):
        alt = fused_lmhead_loss(h, w, y, FusionConfig(4, bv))
        worst_bv = max(
            worst_bv,
            _max_abs(alt.loss, base.loss),
            _max_abs(alt.dh, base.dh),
            _max_abs(alt.dw, base.dw),
        )
    results.append(
        _check(
            "lmhead.values_independent_of_vocab_tile",
            worst_bv < 1e-10,
            f"worst across B_v {worst_bv:.3e}",
        )
    )
    return results


def check_checkpoint(seed: int) -> list[CheckResult]:
    results = []
    mask = causal_mask()
    n, d = 16, 4
    all_match = True
    for policy in (
        CheckpointPolicy(FULL_RECOMPUTE),
        CheckpointPolicy(SELECTIVE_PP),
        CheckpointPolicy(SEQUENCE_SELECTIVE, 0.5),
    ):
        rep = execute_toy(policy, n, d, mask, seed + 70)
        if not rep.matches_baseline:
            all_match = False
    results.append(_check("checkpoint.toy_gradients_match", all_match, "all three policies"))
    half = checkpoint_plan(CheckpointPolicy(SEQUENCE_SELECTIVE, 0.5), n, d, mask)
    pp = checkpoint_plan(CheckpointPolicy(SELECTIVE_PP), n, d, mask)
    results.append(
        _check(
            "checkpoint.half_extra_storage",
            half.attention_extra_elements * 2 == pp.attention_extra_elements,
            f"{half.attention_extra_elements} vs {pp.attention_extra_elements}",
        )
    )
    m = n // 2
    want = (m * (m + 1) // 2) / (n * (n + 1) // 2)
    results.append(
        _check(
            "checkpoint.recompute_fraction_exact",
            abs(half.recompute_fraction - want) < 1e-15,
            f"fraction {half.recompute_fraction!r}",
        )
    )
    splits = (0.25, 0.5, 0.75)
    plans = [checkpoint_plan(CheckpointPolicy(SEQUENCE_SELECTIVE, s), n, d, mask) for s in splits]
    monotone = plans[0].recompute_pairs < plans[1].recompute_pairs < plans[2].recompute_pairs
    slope = {
        plans[0].stored_elements_per_layer - plans[1].stored_elements_per_layer,
        plans[1].stored_elements_per_layer - plans[2].stored_elements_per_layer,
    }
    linear = slope == {n * d // 4}  # N*d per unit of (1 - s)
    results.append(
        _check(
            "checkpoint.recompute_monotone_storage_linear",
            monotone and linear,
            f"pairs {[p.recompute_pairs for p in plans]}",
        )
    )
    return results


def check_costs(seed: int) -> list[CheckResult]:
    from .costs import compare, default_scenarios

    topo = Topology(2, 4, lat_intra=1e-4, lat_inter=5e-4, bw_intra=1e8, bw_inter=1e7)
    report = compare(default_scenarios(64, 8, topo, vocab=64, rows_per_tile=8))
    ok = True
    for row in report.rows:
        total = row.forward_makespan + row.backward_makespan
        if not (row.floor_seconds - 1e-12 <= total <= row.serial_seconds + 1e-12):
            ok = False
    ordering = (
        report.rows[2].analytic_seconds
        <= report.rows[1].analytic_seconds
        <= report.rows[0].analytic_seconds
    )
    return [
        _check("costs.makespans_within_bounds", ok, "floor <= simulated <= serial"),
        _check("costs.analytic_ordering", ordering, "burst <= double_ring <= ring"),
    ]


def run_all(seed: int) -> list[CheckResult]:
    checks: list[CheckResult] = []
    checks += check_numerics(seed)
    checks += check_oracle(seed)
    checks += check_forward(seed)
    checks += check_backward(seed)
    checks += check_comm(seed)
    checks += check_analytic_times(seed)
    checks += check_schedules(seed)
    checks += check_balance(seed)
    checks += check_partition_coverage(seed)
    checks += check_lmhead(seed)
    checks += check_checkpoint(seed)
    checks += check_costs(seed)
    return checks
