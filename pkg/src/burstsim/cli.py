"""Command-line entry point.

Subcommands: ``verify`` (full property suite), ``comm`` (traffic accounting
and closed-form times), ``balance`` (workload tables), ``timeline`` (overlap
schedule event simulation), ``lmhead`` (fused vs naive loss), ``checkpoint``
(policy plans and the toy gradient check), ``compare`` (strategy report).

Every run echoes its seed and is exactly reproducible.  Reports go to stdout
or ``--output`` as an aligned table, CSV, or JSON; ``--figures DIR``
additionally renders matplotlib figures next to the delimited output.  A
``--config`` file (INI ``[defaults]`` section) supplies flag defaults;
explicit flags win.  Exit codes: 0 success, 1 verification failure, 2 invalid
configuration.
"""

from __future__ import annotations

import argparse
import configparser
import sys
from pathlib import Path

import numpy as np

from .checkpointing import (
    FULL_RECOMPUTE,
    SELECTIVE_PP,
    SEQUENCE_SELECTIVE,
    CheckpointPolicy,
    execute_toy,
    plan as checkpoint_plan,
)
from .costs import backward_comm_ratio, compare, default_scenarios
from .fabric import (
    BURST_BACKWARD,
    FORWARD,
    RING_BACKWARD,
    SCHEDULE_KINDS,
    STRATEGIES,
    OverlapSchedule,
    Topology,
    account_attention_comm,
    analytic_comm_time,
    simulate_ring,
)
from .lmhead import FusionConfig, fused_lmhead_loss, memory_footprint
from .masks import (
    MASK_KINDS,
    MaskSpec,
    causal_mask,
    full_mask,
    sliding_window_mask,
    validate_mask,
)
from .numerics import seeded_random_matrix
from .oracle import finite_diff_check, naive_lmhead_loss
from .partitioning import (
    LAYOUT_KINDS,
    ShardLayout,
    balance_report,
    block_mask_from_window,
)
from .reporting import Report, render
from .verification import run_all

EXIT_OK = 0
EXIT_SUITE_FAILED = 1
EXIT_BAD_CONFIG = 2


class ConfigError(Exception):
    """Invalid run configuration; carries field-level diagnostics."""

    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI file with a [defaults] section of flag values")
    p.add_argument("--seed", type=int, default=None, help="RNG seed (echoed in the report)")
    p.add_argument("--format", choices=("table", "csv", "json"), default=None, dest="fmt")
    p.add_argument("--output", default=None, help="write the report here instead of stdout")
    p.add_argument("--figures", default=None, help="directory for rendered figure files")


def _add_topology(p: argparse.ArgumentParser) -> None:
    p.add_argument("--gpus", type=int, default=None, help="devices per node")
    p.add_argument("--nodes", type=int, default=None, help="node count")
    p.add_argument("--lat-intra-seconds", type=float, default=None, dest="lat_intra")
    p.add_argument("--lat-inter-seconds", type=float, default=None, dest="lat_inter")
    p.add_argument("--bw-intra-elements-per-s", type=float, default=None, dest="bw_intra")
    p.add_argument("--bw-inter-elements-per-s", type=float, default=None, dest="bw_inter")


def _add_mask(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mask", choices=MASK_KINDS, default=None)
    p.add_argument("--window-tokens", type=int, default=None, dest="window")
    p.add_argument("--block-len-tokens", type=int, default=None, dest="block_len")
    p.add_argument("--block-window-tokens", type=int, default=None, dest="block_window")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="burstsim",
        description="Deterministic desk-scale simulator for ring/burst distributed attention.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="run the full property suite")
    _add_common(p)

    p = sub.add_parser("comm", help="traffic accounting and analytic times")
    _add_common(p)
    p.add_argument("--seq", type=int, default=None, help="sequence length in tokens")
    p.add_argument("--dim", type=int, default=None, help="model dimension")
    _add_topology(p)

    p = sub.add_parser("balance", help="workload balance tables")
    _add_common(p)
    p.add_argument("--seq", type=int, default=None)
    p.add_argument("--gpus", type=int, default=None)
    p.add_argument("--layout", choices=LAYOUT_KINDS, default=None)
    _add_mask(p)

    p = sub.add_parser("timeline", help="event timeline for one ring pass")
    _add_common(p)
    p.add_argument("--schedule", choices=SCHEDULE_KINDS, default=None)
    p.add_argument("--payload-elements", type=int, default=None, dest="payload")
    p.add_argument("--step-compute-seconds", type=float, default=None, dest="compute_seconds")
    _add_topology(p)

    p = sub.add_parser("lmhead", help="fused vs naive LM-head loss")
    _add_common(p)
    p.add_argument("--seq", type=int, default=None)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--vocab", type=int, default=None)
    p.add_argument("--row-tile", type=int, default=None, dest="row_tile")
    p.add_argument("--vocab-tile", type=int, default=None, dest="vocab_tile")

    p = sub.add_parser("checkpoint", help="checkpoint policy plans and toy run")
    _add_common(p)
    p.add_argument("--seq", type=int, default=None)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--checkpoint-split", type=float, default=None, dest="split")
    _add_mask(p)

    p = sub.add_parser("compare", help="strategy comparison report")
    _add_common(p)
    p.add_argument("--seq", type=int, default=None)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--vocab", type=int, default=None)
    p.add_argument("--row-tile", type=int, default=None, dest="row_tile")
    p.add_argument("--step-compute-seconds", type=float, default=None, dest="compute_seconds")
    _add_topology(p)
    return parser


def _apply_config(args: argparse.Namespace) -> None:
    """Fill unset flags from the config file's [defaults] section."""
    if not getattr(args, "config", None):
        return
    path = Path(args.config)
    if not path.exists():
        raise ConfigError([f"config: file not found: {path}"])
    ini = configparser.ConfigParser()
    try:
        ini.read(path)
    except configparser.Error as exc:
        raise ConfigError([f"config: {exc}"]) from exc
    if "defaults" not in ini:
        raise ConfigError([f"config: {path} has no [defaults] section"])
    for key, raw in ini["defaults"].items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest) or getattr(args, dest) is not None:
            continue  # unknown key for this command, or flag already set
        current_type = _CONFIG_TYPES.get(dest, str)
        try:
            setattr(args, dest, current_type(raw))
        except ValueError as exc:
            raise ConfigError([f"config field {key!r}: {exc}"]) from exc


_CONFIG_TYPES = {
    "seed": int,
    "seq": int,
    "dim": int,
    "gpus": int,
    "nodes": int,
    "vocab": int,
    "row_tile": int,
    "vocab_tile": int,
    "window": int,
    "block_len": int,
    "block_window": int,
    "payload": int,
    "lat_intra": float,
    "lat_inter": float,
    "bw_intra": float,
    "bw_inter": float,
    "compute_seconds": float,
    "split": float,
    "fmt": str,
    "format": str,
    "layout": str,
    "mask": str,
    "schedule": str,
    "output": str,
    "figures": str,
}


def _default(args: argparse.Namespace, name: str, value):
    if getattr(args, name, None) is None:
        setattr(args, name, value)


def _topology(args: argparse.Namespace, problems: list[str]) -> Topology | None:
    _default(args, "nodes", 1)
    _default(args, "gpus", 2)
    _default(args, "lat_intra", 1e-6)
    _default(args, "lat_inter", 5e-6)
    _default(args, "bw_intra", 1e9)
    _default(args, "bw_inter", 1e8)
    try:
        return Topology(
            num_nodes=args.nodes,
            gpus_per_node=args.gpus,
            lat_intra=args.lat_intra,
            lat_inter=args.lat_inter,
            bw_intra=args.bw_intra,
            bw_inter=args.bw_inter,
        )
    except ValueError as exc:
        problems.append(f"topology: {exc}")
        return None


def _mask_from_args(args: argparse.Namespace, seq: int, problems: list[str]) -> MaskSpec | None:
    _default(args, "mask", "causal")
    try:
        if args.mask == "full":
            return full_mask()
        if args.mask == "causal":
            return causal_mask()
        if args.mask == "sliding_window":
            _default(args, "window", max(1, seq // 2))
            mask = sliding_window_mask(args.window)
        else:
            _default(args, "block_len", max(1, seq // 4))
            _default(args, "block_window", 2 * args.block_len)
            mask = block_mask_from_window(seq, args.block_len, args.block_window)
        validate_mask(mask, seq)
        return mask
    except ValueError as exc:
        problems.append(f"mask: {exc}")
        return None


def _emit(report: Report, args: argparse.Namespace) -> None:
    _default(args, "fmt", "table")
    text = render(report, args.fmt)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


def _figdir(args: argparse.Namespace) -> Path | None:
    if not getattr(args, "figures", None):
        return None
    path = Path(args.figures)
    path.mkdir(parents=True, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_verify(args) -> int:
    _default(args, "seed", 0)
    checks = run_all(args.seed)
    report = Report(command="verify", seed=args.seed, params={})
    rows = [[c.name, "PASS" if c.passed else "FAIL", c.detail] for c in checks]
    failed = sum(1 for c in checks if not c.passed)
    report.add("checks", ["check", "status", "detail"], rows)
    report.add(
        "summary",
        ["total", "passed", "failed"],
        [[len(checks), len(checks) - failed, failed]],
    )
    _emit(report, args)
    return EXIT_SUITE_FAILED if failed else EXIT_OK


def cmd_comm(args) -> int:
    problems: list[str] = []
    _default(args, "seed", 0)
    _default(args, "seq", 8)
    _default(args, "dim", 4)
    topo = _topology(args, problems)
    g = topo.total_devices if topo else 0
    if topo and args.seq % g != 0:
        problems.append(f"seq: device count {g} must divide sequence length {args.seq}")
    if problems:
        raise ConfigError(problems)
    report = Report(
        command="comm",
        seed=args.seed,
        params={"seq_len_tokens": args.seq, "dim": args.dim, "devices": g, "nodes": args.nodes},
    )
    rows = []
    for pass_kind in (FORWARD, RING_BACKWARD, BURST_BACKWARD):
        total = account_attention_comm(pass_kind, args.seq, args.dim, g)
        rows.append([pass_kind, total, total // g])
    report.add("elements_per_device", ["pass", "total_elements", "per_step_elements"], rows)
    payload = (args.seq // g) * args.dim
    time_rows = [
        [strategy, analytic_comm_time(strategy, topo, payload)] for strategy in STRATEGIES
    ]
    report.add("analytic_seconds", ["strategy", "seconds"], time_rows)
    report.add(
        "ratios",
        ["name", "value"],
        [["burst_vs_ring_backward_elements", backward_comm_ratio(args.dim)]],
    )
    _emit(report, args)
    return EXIT_OK


def cmd_balance(args) -> int:
    problems: list[str] = []
    _default(args, "seed", 0)
    _default(args, "seq", 8)
    _default(args, "gpus", 2)
    _default(args, "layout", "zigzag")
    mask = _mask_from_args(args, args.seq, problems)
    layout = None
    try:
        block_len = None
        if args.layout == "block_striped":
            _default(args, "block_len", max(args.gpus, args.seq // 4))
            block_len = args.block_len
        layout = ShardLayout(args.layout, args.seq, args.gpus, block_len=block_len)
    except ValueError as exc:
        problems.append(f"layout: {exc}")
    if problems or mask is None or layout is None:
        raise ConfigError(problems)
    wr = balance_report(layout, mask)
    report = Report(
        command="balance",
        seed=args.seed,
        params={
            "seq_len_tokens": args.seq,
            "devices": args.gpus,
            "layout": args.layout,
            "mask": mask.describe(),
        },
    )
    report.add(
        "per_device_totals",
        ["device", "unmasked_pairs"],
        [[i + 1, c] for i, c in enumerate(wr.per_device_pairs)],
    )
    step_headers = ["device"] + [f"step_{t + 1}" for t in range(len(wr.per_step_pairs[0]))]
    report.add(
        "per_step_pairs",
        step_headers,
        [[i + 1, *row] for i, row in enumerate(wr.per_step_pairs)],
    )
    report.add(
        "spread",
        ["total_pairs", "device_spread", "max_step_spread"],
        [[wr.total_pairs, wr.device_spread, wr.max_step_spread]],
    )
    _emit(report, args)
    figdir = _figdir(args)
    if figdir:
        from .figures import save_balance_figure

        out = figdir / "balance.png"
        save_balance_figure(wr, str(out))
        sys.stderr.write(f"figure written: {out}\n")
    return EXIT_OK


def cmd_timeline(args) -> int:
    problems: list[str] = []
    _default(args, "seed", 0)
    _default(args, "schedule", "activation")
    _default(args, "payload", 1024)
    _default(args, "compute_seconds", 1e-3)
    topo = _topology(args, problems)
    if args.payload is not None and args.payload <= 0:
        problems.append(f"payload-elements: must be positive, got {args.payload}")
    if args.compute_seconds is not None and args.compute_seconds < 0:
        problems.append("step-compute-seconds: must be nonnegative")
    if problems:
        raise ConfigError(problems)
    try:
        log, timeline = simulate_ring(
            args.payload, topo, OverlapSchedule(args.schedule), args.compute_seconds
        )
    except ValueError as exc:
        raise ConfigError([str(exc)]) from exc
    report = Report(
        command="timeline",
        seed=args.seed,
        params={
            "schedule": args.schedule,
            "payload_elements": args.payload,
            "step_compute_seconds": args.compute_seconds,
            "devices": topo.total_devices,
            "nodes": topo.num_nodes,
            "makespan_seconds": timeline.makespan,
        },
    )
    report.add(
        "events",
        ["device", "kind", "start_seconds", "end_seconds", "label"],
        [[e.device, e.kind, e.start, e.end, e.label] for e in timeline.events],
    )
    report.add(
        "traffic",
        ["device", "sent_intra_elements", "sent_inter_elements", "received_elements"],
        [
            [i, log.sent(i, "intra"), log.sent(i, "inter"), log.received(i)]
            for i in range(1, topo.total_devices + 1)
        ],
    )
    _emit(report, args)
    figdir = _figdir(args)
    if figdir:
        from .figures import save_timeline_figure

        out = figdir / f"timeline_{args.schedule}.png"
        save_timeline_figure(timeline, str(out))
        sys.stderr.write(f"figure written: {out}\n")
    return EXIT_OK


def cmd_lmhead(args) -> int:
    problems: list[str] = []
    _default(args, "seed", 0)
    _default(args, "seq", 8)
    _default(args, "dim", 4)
    _default(args, "vocab", 17)
    _default(args, "row_tile", max(1, args.seq // 2 if args.seq else 4))
    _default(args, "vocab_tile", max(1, (args.vocab or 17) // 3))
    for name in ("seq", "dim", "vocab", "row_tile", "vocab_tile"):
        if getattr(args, name) < 1:
            problems.append(f"{name}: must be >= 1, got {getattr(args, name)}")
    if problems:
        raise ConfigError(problems)
    h = seeded_random_matrix(args.seq, args.dim, args.seed)
    w = seeded_random_matrix(args.vocab, args.dim, args.seed + 1)
    rng = np.random.default_rng(args.seed + 2)
    y = rng.integers(0, args.vocab, size=args.seq)
    cfg = FusionConfig(args.row_tile, args.vocab_tile)
    naive = naive_lmhead_loss(h, w, y)
    fused = fused_lmhead_loss(h, w, y, cfg)
    naive_elems, fused_elems = memory_footprint(args.seq, args.vocab, args.dim, cfg)

    def loss_of_h(x):
        return float(np.sum(naive_lmhead_loss(x, w, y).loss))

    fd_err = finite_diff_check(loss_of_h, h, naive.dh, h=1e-6)
    report = Report(
        command="lmhead",
        seed=args.seed,
        params={
            "seq_len_tokens": args.seq,
            "dim": args.dim,
            "vocab": args.vocab,
            "row_tile": args.row_tile,
            "vocab_tile": args.vocab_tile,
        },
    )
    report.add(
        "equivalence",
        ["metric", "value"],
        [
            ["max_abs_loss_diff", float(np.max(np.abs(fused.loss - naive.loss)))],
            ["max_abs_dh_diff", float(np.max(np.abs(fused.dh - naive.dh)))],
            ["max_abs_dw_diff", float(np.max(np.abs(fused.dw - naive.dw)))],
            ["finite_difference_rel_err", fd_err],
            ["total_loss_nats", float(np.sum(fused.loss))],
        ],
    )
    report.add(
        "footprint_elements",
        ["naive_logits", "fused_peak_model", "fused_peak_instrumented"],
        [[naive_elems, fused_elems, fused.peak_aux_elements]],
    )
    _emit(report, args)
    figdir = _figdir(args)
    if figdir:
        from .figures import save_lmhead_figure

        rows = []
        tile = 1
        while tile <= args.seq:
            nv, fv = memory_footprint(args.seq, args.vocab, args.dim, FusionConfig(tile, args.vocab_tile))
            rows.append((tile, nv, fv))
            tile *= 2
        out = figdir / "lmhead_footprint.png"
        save_lmhead_figure(rows, str(out))
        sys.stderr.write(f"figure written: {out}\n")
    return EXIT_OK


def cmd_checkpoint(args) -> int:
    problems: list[str] = []
    _default(args, "seed", 0)
    _default(args, "seq", 16)
    _default(args, "dim", 4)
    _default(args, "split", 0.5)
    mask = _mask_from_args(args, args.seq, problems)
    if args.seq > 64:
        problems.append(f"seq: toy checkpoint runs are capped at 64 tokens, got {args.seq}")
    if problems or mask is None:
        raise ConfigError(problems)
    policies = [
        CheckpointPolicy(FULL_RECOMPUTE),
        CheckpointPolicy(SELECTIVE_PP),
        CheckpointPolicy(SEQUENCE_SELECTIVE, args.split),
    ]
    report = Report(
        command="checkpoint",
        seed=args.seed,
        params={
            "seq_len_tokens": args.seq,
            "dim": args.dim,
            "mask": mask.describe(),
            "checkpoint_split": args.split,
        },
    )
    rows = []
    toy_rows = []
    try:
        for policy in policies:
            rep = checkpoint_plan(policy, args.seq, args.dim, mask)
            rows.append(
                [
                    policy.kind,
                    rep.stored_elements_per_layer,
                    rep.attention_extra_elements,
                    rep.recompute_pairs,
                    rep.recompute_fraction,
                ]
            )
            toy = execute_toy(policy, args.seq, args.dim, mask, args.seed)
            toy_rows.append(
                [
                    policy.kind,
                    toy.recomputed_pairs,
                    toy.max_grad_diff,
                    "yes" if toy.matches_baseline else "no",
                ]
            )
    except ValueError as exc:
        raise ConfigError([str(exc)]) from exc
    report.add(
        "plan",
        [
            "policy",
            "stored_elements_per_layer",
            "attention_extra_elements",
            "recompute_pairs",
            "recompute_fraction",
        ],
        rows,
    )
    report.add(
        "toy_run",
        ["policy", "recomputed_pairs", "max_grad_diff", "matches_baseline"],
        toy_rows,
    )
    _emit(report, args)
    return EXIT_OK


def cmd_compare(args) -> int:
    problems: list[str] = []
    _default(args, "seed", 0)
    _default(args, "seq", 64)
    _default(args, "dim", 8)
    _default(args, "vocab", 64)
    _default(args, "row_tile", 8)
    _default(args, "compute_seconds", 1e-3)
    topo = _topology(args, problems)
    if topo and args.seq % topo.total_devices != 0:
        problems.append(
            f"seq: device count {topo.total_devices} must divide sequence length {args.seq}"
        )
    if problems:
        raise ConfigError(problems)
    try:
        scenarios = default_scenarios(
            args.seq,
            args.dim,
            topo,
            compute_time_per_step=args.compute_seconds,
            vocab=args.vocab,
            rows_per_tile=args.row_tile,
        )
        result = compare(scenarios)
    except ValueError as exc:
        raise ConfigError([str(exc)]) from exc
    report = Report(
        command="compare",
        seed=args.seed,
        params={
            "seq_len_tokens": args.seq,
            "dim": args.dim,
            "devices": topo.total_devices,
            "nodes": topo.num_nodes,
            "step_compute_seconds": args.compute_seconds,
        },
    )
    report.add(
        "strategies",
        [
            "strategy",
            "forward_elements",
            "backward_elements",
            "backward_ratio_vs_ring",
            "analytic_seconds",
            "forward_makespan_seconds",
            "backward_makespan_seconds",
            "serial_seconds",
            "floor_seconds",
        ],
        [
            [
                r.strategy,
                r.forward_elements,
                r.backward_elements,
                r.backward_ratio_vs_ring,
                r.analytic_seconds,
                r.forward_makespan,
                r.backward_makespan,
                r.serial_seconds,
                r.floor_seconds,
            ]
            for r in result.rows
        ],
    )
    mem_rows = [
        [r.strategy, r.lmhead_naive_elements, r.lmhead_fused_elements, r.checkpoint_stored_elements]
        for r in result.rows
    ]
    report.add(
        "memory_model_elements",
        ["strategy", "lmhead_naive", "lmhead_fused_peak", "checkpoint_stored_per_layer"],
        mem_rows,
    )
    _emit(report, args)
    figdir = _figdir(args)
    if figdir:
        from .figures import save_comparison_figure

        out = figdir / "compare.png"
        save_comparison_figure(result, str(out))
        sys.stderr.write(f"figure written: {out}\n")
    return EXIT_OK


_COMMANDS = {
    "verify": cmd_verify,
    "comm": cmd_comm,
    "balance": cmd_balance,
    "timeline": cmd_timeline,
    "lmhead": cmd_lmhead,
    "checkpoint": cmd_checkpoint,
    "compare": cmd_compare,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config(args)
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        for problem in exc.problems:
            sys.stderr.write(f"error: {problem}\n")
        return EXIT_BAD_CONFIG


if __name__ == "__main__":
    sys.exit(main())
