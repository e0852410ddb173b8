"""Command-line interface.

Subcommands mirror the harness operations: ``simulate`` runs a
campaign, ``paired`` a paired-match series, ``ablate`` a named
ablation, ``selfplay`` the improvement loop, ``gradcheck`` the
finite-difference verification suite, and ``report`` re-renders a
saved transcript stream.  Configuration comes from named profiles
and/or a JSON config file; ``--print-config`` shows the fully resolved
configuration without running anything.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import (
    OUTPUT_DIR_ENV,
    ExperimentConfig,
    config_to_json,
    load_config,
    profile,
    resolve_output_dir,
)
from .harness import (
    AblationKind,
    CampaignReport,
    attempt_failure_split,
    build_policy,
    export_report,
    run_ablation,
    run_campaign,
    run_paired_series,
    seat_table,
    seat_table_csv,
    selfplay_round,
    sft_pretrain,
)
from .losses import (
    LossConfig,
    dpo_loss_grad,
    finite_difference_check,
    grpo_loss_grad,
    sft_nll_grad,
)
from .policy import PolicyParams, TeacherPolicy
from .records import read_jsonl

__all__ = ["main"]


def _resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Profile and/or config file, then command-line overrides."""
    if getattr(args, "config", None):
        cfg = load_config(args.config)
        if getattr(args, "profile", None):
            raise SystemExit("give either --profile or --config, not both "
                             "(a config file may name its own profile)")
    else:
        cfg = profile(getattr(args, "profile", None) or "default")
    overrides = {}
    if getattr(args, "games", None) is not None:
        overrides["games"] = args.games
        overrides["seeds"] = None
    if getattr(args, "seed", None) is not None:
        overrides["base_seed"] = args.seed
        overrides["seeds"] = None
    if getattr(args, "parallelism", None) is not None:
        overrides["parallelism"] = args.parallelism
    if getattr(args, "out", None) is not None:
        overrides["output_dir"] = args.out
    if getattr(args, "traces", False):
        overrides["collect_traces"] = True
    return replace(cfg, **overrides) if overrides else cfg


def _print_config_and_exit(cfg: ExperimentConfig) -> int:
    sys.stdout.write(config_to_json(cfg))
    return 0


def _emit_campaign(report: CampaignReport) -> None:
    table = seat_table(report)
    print(f"campaign {report.config_name}: {report.games} games, "
          f"{report.errors} errors")
    print("  seat table: " + ", ".join(f"{k}={v}" for k, v in table.items()))
    rate = report.autonomous_rate
    print(f"  autonomous completion: {report.autonomous_games}/{report.games}"
          + (f" ({rate:.3f})" if rate is not None else ""))
    print(f"  primitives {report.primitive_count}, grasp attempts "
          f"{report.grasp_attempts}, retries {report.retries}")
    if report.raw_success_rate is not None:
        print(f"  attempt success raw {report.raw_success_rate:.4f}, "
              f"post-recovery {report.recovered_success_rate:.4f}")
    if report.fault_counts:
        print("  faults: " + ", ".join(f"{k}={v}"
                                       for k, v in sorted(report.fault_counts.items())))
    if report.detections:
        parts = [f"{task}: {d['alerts']} alerts ({d['linked']} linked)"
                 for task, d in sorted(report.detections.items())]
        print("  detections: " + "; ".join(parts))


def _cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    if args.print_config:
        return _print_config_and_exit(cfg)
    report, _transcripts = run_campaign(cfg)
    _emit_campaign(report)
    if args.hazard_split is not None:
        split = attempt_failure_split(report, args.hazard_split)
        print(f"  hazard split at {split['t_split']:.0f}s: "
              f"before {split['before_failures']}/{split['before_attempts']} "
              f"({split['before_rate']:.4f}), after "
              f"{split['after_failures']}/{split['after_attempts']} "
              f"({split['after_rate']:.4f}), z={split['z']:.2f} "
              f"p={split['p_value']:.2e}")
    out = resolve_output_dir(cfg)
    if out is not None:
        print(f"  outputs in {out}")
    return 0


def _cmd_paired(args: argparse.Namespace) -> int:
    policy_a = build_policy(args.a)
    policy_b = build_policy(args.b)
    series = run_paired_series(policy_a, policy_b, args.matches, args.seed)
    print(f"paired {args.a} vs {args.b}: {series.matches} matches")
    print(f"  {args.a} wins {series.wins_a}, {args.b} wins {series.wins_b}, "
          f"draws {series.draws}")
    return 0


def _cmd_ablate(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    if args.print_config:
        return _print_config_and_exit(cfg)
    kind = AblationKind(args.kind)
    report = run_ablation(kind, cfg, alpha=args.alpha)
    print(f"ablation {kind.value} over {report.games} games per arm:")
    print(f"  baseline robot wins {report.baseline_wins} "
          f"({report.baseline_rate:.4f})")
    print(f"  ablation robot wins {report.ablation_wins} "
          f"({report.ablation_rate:.4f})")
    print(f"  delta {report.delta:+.4f}, z={report.z:.2f}, "
          f"p={report.p_value:.3e} "
          f"({'significant' if report.significant else 'not significant'} "
          f"at alpha={report.alpha})")
    return 0


def _cmd_selfplay(args: argparse.Namespace) -> int:
    teacher = TeacherPolicy()
    params, sft_stats = sft_pretrain(
        teacher, games=args.sft_games, steps=args.sft_steps,
        lr=args.sft_lr, seed=args.seed)
    print(f"pretraining: {sft_stats['decisions']} decisions, NLL "
          f"{sft_stats['initial_nll']:.3f} -> {sft_stats['final_nll']:.3f}")
    cfg = LossConfig(group_size=args.group_size, dpo_beta=args.beta)
    trained, report = selfplay_round(
        params, teacher, args.rounds, cfg, args.seed,
        groups_per_round=args.groups, dpo_steps=args.dpo_steps,
        lr=args.lr, eval_matches=args.matches)
    for rs in report.round_stats:
        extra = "" if rs["skipped"] else f", final loss {rs['final_loss']:.4f}"
        print(f"  round {rs['round']}: {rs['pairs']} preference pairs"
              f"{' (skipped)' if rs['skipped'] else ''}{extra}")
    print(f"eval vs frozen teacher over {report.eval_matches} paired matches:")
    print(f"  pre-training  wins {report.pre.wins_a} "
          f"({report.pre_rate:.4f})")
    print(f"  post-training wins {report.post.wins_a} "
          f"({report.post_rate:.4f})")
    print(f"  one-sided p = {report.p_value:.4f} "
          f"({'improved' if report.improved else 'no improvement'})")
    if args.save:
        path = Path(args.save)
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez(path, theta=trained.theta,
                 temperature=np.asarray(trained.temperature))
        print(f"  checkpoint saved to {path}")
    return 0 if report.improved else 1


def gradcheck_suite(instances: int, step: float, seed: int) -> dict[str, float]:
    """Worst finite-difference relative error per loss over freshly
    harvested decision views; shared by the CLI and the test suite."""
    from .engine import deal_game, play_game
    from .losses import PreferencePair, composite_reward, group_advantage
    from .policy import decide, view_from_state

    rng = np.random.default_rng(seed)
    teacher = TeacherPolicy()
    views: list = []
    game = 0
    while len(views) < 4 * instances:
        game_rng = np.random.default_rng((seed + 1) * 1000 + game)
        game += 1
        state = deal_game(game_rng)

        def actor(current, seat, legal):
            view = view_from_state(current, seat, legal=legal)
            if len(legal) >= 2:
                views.append(view)
            action, _ = decide(teacher, view, game_rng)
            return action

        play_game(state, [actor] * 4)

    def random_params() -> PolicyParams:
        return PolicyParams(rng.normal(scale=0.3, size=16), 1.0)

    cfg = LossConfig(group_size=4)
    worst = {"sft": 0.0, "grpo": 0.0, "dpo": 0.0}
    for i in range(instances):
        view = views[rng.integers(len(views))]
        action = view.legal[rng.integers(len(view.legal))]
        worst["sft"] = max(worst["sft"], finite_difference_check(
            lambda p: sft_nll_grad(p, [(view, None, action)]),
            random_params(), step))

        group = []
        rewards = []
        for _g in range(cfg.group_size):
            gv = views[rng.integers(len(views))]
            ga = gv.legal[rng.integers(len(gv.legal))]
            group.append((gv, ga))
            rewards.append(composite_reward(bool(rng.integers(2)),
                                            float(rng.uniform())))
        advantages = group_advantage(rewards, cfg)
        items = [(v, a, float(adv)) for (v, a), adv in zip(group, advantages)]
        ref = random_params()
        worst["grpo"] = max(worst["grpo"], finite_difference_check(
            lambda p: grpo_loss_grad(p, ref, items, cfg),
            random_params(), step))

        pv = views[rng.integers(len(views))]
        hi, lo = rng.choice(len(pv.legal), size=2, replace=False)
        pair = PreferencePair(pv, (None, pv.legal[hi]), (None, pv.legal[lo]),
                              float(rng.uniform(0.1, 1.0)))
        ref = random_params()
        worst["dpo"] = max(worst["dpo"], finite_difference_check(
            lambda p: dpo_loss_grad(p, ref, pair, cfg.dpo_beta),
            random_params(), step))
    return worst


def _cmd_gradcheck(args: argparse.Namespace) -> int:
    worst = gradcheck_suite(args.instances, args.step, args.seed)
    ok = True
    for name, err in worst.items():
        status = "ok" if err < args.tolerance else "FAIL"
        ok = ok and err < args.tolerance
        print(f"  {name}: worst relative error {err:.3e}  [{status}]")
    print(f"gradcheck {'passed' if ok else 'FAILED'} at tolerance "
          f"{args.tolerance:g}")
    return 0 if ok else 1


def _cmd_report(args: argparse.Namespace) -> int:
    records = list(read_jsonl(args.transcripts))
    summaries = [r for r in records if r.get("type") == "outcome"]
    headers = [r for r in records if r.get("type") == "header"]
    if not summaries:
        raise SystemExit("no outcome records found in transcript stream")
    name = headers[0]["config"] if headers else "transcripts"
    robot_seat = headers[0]["robot_seat"] if headers else 0
    from .harness import _aggregate
    shim = profile("default")
    shim = replace(shim, name=name, games=len(summaries),
                   robot_seat=robot_seat, seeds=None)
    report = _aggregate(shim, [
        {k: v for k, v in s.items() if k not in ("v", "type")}
        for s in summaries
    ])
    _emit_campaign(report)
    if args.out:
        path = export_report(report, args.format, args.out)
        print(f"  report written to {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tilelab",
        description="Seeded simulation laboratory for a tabletop "
                    "tile-game robot: guarded execution, fault "
                    "injection, violation monitoring, and policy "
                    "improvement.",
        epilog=f"Set {OUTPUT_DIR_ENV} to redirect campaign outputs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("--profile", help="named configuration profile")
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--games", type=int, help="override game count")
        p.add_argument("--seed", type=int, help="override base seed")
        p.add_argument("--parallelism", type=int,
                       help="worker processes for the campaign")
        p.add_argument("--out", help="output directory")
        p.add_argument("--print-config", action="store_true",
                       help="print the resolved config and exit")

    p_sim = sub.add_parser("simulate", help="run a seeded campaign")
    add_config_args(p_sim)
    p_sim.add_argument("--traces", action="store_true",
                       help="include decision traces in transcripts")
    p_sim.add_argument("--hazard-split", type=float, default=None,
                       help="report attempt failure rates before/after "
                            "this session clock time")
    p_sim.set_defaults(func=_cmd_simulate)

    p_pair = sub.add_parser("paired", help="paired matches with seat reversal")
    p_pair.add_argument("--a", default="teacher", help="first policy")
    p_pair.add_argument("--b", default="softmax-zero", help="second policy")
    p_pair.add_argument("--matches", type=int, default=200)
    p_pair.add_argument("--seed", type=int, default=2025)
    p_pair.set_defaults(func=_cmd_paired)

    p_abl = sub.add_parser("ablate", help="run a named ablation")
    add_config_args(p_abl)
    p_abl.add_argument("--kind", required=True,
                       choices=[k.value for k in AblationKind])
    p_abl.add_argument("--alpha", type=float, default=0.01)
    p_abl.set_defaults(func=_cmd_ablate)

    p_sp = sub.add_parser("selfplay", help="preference-mining improvement loop")
    p_sp.add_argument("--rounds", type=int, default=5)
    p_sp.add_argument("--groups", type=int, default=60)
    p_sp.add_argument("--group-size", type=int, default=6)
    p_sp.add_argument("--matches", type=int, default=400)
    p_sp.add_argument("--seed", type=int, default=2025)
    p_sp.add_argument("--sft-games", type=int, default=8)
    p_sp.add_argument("--sft-steps", type=int, default=50)
    p_sp.add_argument("--sft-lr", type=float, default=0.5)
    p_sp.add_argument("--dpo-steps", type=int, default=40)
    p_sp.add_argument("--lr", type=float, default=3.0)
    p_sp.add_argument("--beta", type=float, default=0.1)
    p_sp.add_argument("--save", help="write the trained policy to this .npz")
    p_sp.set_defaults(func=_cmd_selfplay)

    p_gc = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    p_gc.add_argument("--instances", type=int, default=20)
    p_gc.add_argument("--step", type=float, default=1e-5)
    p_gc.add_argument("--tolerance", type=float, default=1e-4)
    p_gc.add_argument("--seed", type=int, default=11)
    p_gc.set_defaults(func=_cmd_gradcheck)

    p_rep = sub.add_parser("report", help="re-render a saved transcript stream")
    p_rep.add_argument("--transcripts", required=True,
                       help="JSONL transcript stream (optionally .gz)")
    p_rep.add_argument("--format", default="structured-records",
                       choices=["structured-records", "comma-separated-table"])
    p_rep.add_argument("--out", help="write the rendered report here")
    p_rep.set_defaults(func=_cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
