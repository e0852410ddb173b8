"""Experiment orchestration: campaigns, paired matches, ablations,
and the self-play improvement loop.

Each simulated game is a pure function of ``(config, seed, game_index)``,
so campaigns produce byte-identical transcripts and reports at any
parallelism level; workers only change wall-clock time.  Games within a
campaign are placed on a shared session clock — game ``i`` starts at
``i * game_duration`` — so slow drifts in the hardware fault model act
across a campaign the way they act across an afternoon of play.

Paired matches replay one deal twice with the two compared policies
swapping seats, cancelling deal luck; a match is decided only when the
same policy wins from both seats.  Ablations run paired campaigns on
shared deal seeds and test the win-rate delta with a one-sided
two-proportion z-test.
"""

from __future__ import annotations

import csv
import io
import multiprocessing
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.stats import norm

from .config import ExperimentConfig, MissingMode, resolve_output_dir
from .driver import DriverConfig, GuardedGameResult, play_guarded_game
from .engine import GameState, deal_game, play_game
from .faults import FaultEventKind
from .guarded import CommitMode, RecoveryPolicy
from .losses import (
    LossConfig,
    dpo_loss_grad_cached,
    precompute_pair_features,
    precompute_sft_features,
    sft_nll_grad_cached,
)
from .monitor import TurnContext, observe
from .policy import (
    Policy,
    PolicyParams,
    SoftmaxPolicy,
    TeacherPolicy,
    UniformRandomPolicy,
    decide,
    policy_actor,
    view_from_state,
)
from .records import versioned, write_jsonl
from .selfplay import build_trie, extract_preference_pairs, play_group
from .tiles import Suit

__all__ = [
    "build_policy",
    "run_game",
    "CampaignReport",
    "run_campaign",
    "seat_table",
    "SEAT_TABLE_COLUMNS",
    "seat_table_csv",
    "parse_seat_table",
    "export_report",
    "one_sided_two_proportion",
    "attempt_failure_split",
    "PairedVerdict",
    "PairedMatchResult",
    "paired_deal",
    "run_paired_match",
    "PairedSeries",
    "run_paired_series",
    "AblationKind",
    "ablated_config",
    "AblationReport",
    "run_ablation",
    "sft_pretrain",
    "SelfplayReport",
    "selfplay_round",
]

_HW_FAILURE_KINDS = (
    FaultEventKind.EXECUTION_FAILURE.value,
    FaultEventKind.HARDWARE_DEGRADATION.value,
)

_PRIMITIVE_FAULT_KINDS = _HW_FAILURE_KINDS + (FaultEventKind.MISDETECTION.value,)


# ---------------------------------------------------------------------------
# Policy registry.


def build_policy(name: str) -> Policy:
    """Resolve a policy name from a config or command line.

    ``teacher`` and ``uniform`` are built in; ``softmax-zero`` is the
    untrained linear policy; ``softmax@PATH`` loads ``theta`` and
    ``temperature`` arrays from an ``.npz`` checkpoint.
    """
    if name == "teacher":
        return TeacherPolicy()
    if name == "uniform":
        return UniformRandomPolicy()
    if name == "softmax-zero":
        return SoftmaxPolicy(PolicyParams.zeros())
    if name.startswith("softmax@"):
        path = name.split("@", 1)[1]
        with np.load(path) as payload:
            theta = np.asarray(payload["theta"], dtype=float)
            temperature = float(payload["temperature"])
        return SoftmaxPolicy(PolicyParams(theta, temperature))
    raise ValueError(f"unknown policy name: {name!r}")


# ---------------------------------------------------------------------------
# Single guarded game -> transcript records + summary.


def _attempt_series(result: GuardedGameResult) -> list[list[float]]:
    """Per-primitive ``[sim_time, attempts, hardware_failures]`` triples.

    Fault events are appended in primitive order, one block per
    primitive, so a sequential walk attributes each hardware failure to
    the primitive whose attempts produced it.
    """
    series: list[list[float]] = []
    cursor = 0
    events = result.fault_events
    for prim, stat in zip(result.primitives, result.attempt_stats):
        block = events[cursor:cursor + stat.failed_attempts]
        cursor += stat.failed_attempts
        hw = sum(1 for e in block if e.kind.value in _HW_FAILURE_KINDS)
        series.append([stat.sim_time, float(prim.attempts), float(hw)])
    if cursor != len(events):
        raise RuntimeError("primitive fault events out of lockstep with attempts")
    return series


def run_game(config: ExperimentConfig, seed: int,
             game_index: int = 0) -> tuple[list[dict], dict]:
    """Play one guarded game and return (transcript records, summary).

    The seed is split into independent streams for the deal, the driver
    (policies and fault sampling), and the violation monitors, so the
    same deal can be replayed under different fault settings.
    """
    children = np.random.SeedSequence(seed).spawn(3)
    state = deal_game(np.random.default_rng(children[0]))
    policies = [build_policy(name) for name in config.policies]
    forced = Suit.CHARACTERS if config.missing_mode is MissingMode.FORCED_CHARACTERS else None
    drv_cfg = DriverConfig(
        robot_seat=config.robot_seat,
        faults=config.faults,
        recovery=config.recovery,
        interventions=config.interventions,
        forced_missing=forced,
        start_clock=game_index * config.game_duration,
        ply_duration=config.ply_duration,
        max_plies=config.max_plies,
        audit_commits=config.audit_commits,
    )
    result = play_guarded_game(
        state, policies, np.random.default_rng(children[1]), drv_cfg,
        collect_traces=config.collect_traces,
    )

    turn_stream = [TurnContext(m.turn_index, m.sim_time) for m in result.turn_marks]
    mon_rng = np.random.default_rng(children[2])
    detections: dict[str, dict] = {}
    detection_records: list[dict] = []
    for spec in config.detectors:
        log = observe(result.interaction_events, turn_stream, spec, mon_rng)
        entries = log.entries
        detections[spec.task.value] = {
            "alerts": len(entries),
            "linked": sum(1 for e in entries if e.linked),
        }
        detection_records.extend(e.to_record() for e in entries)

    truth_violations: dict[str, int] = {}
    for event in result.interaction_events:
        truth_violations[event.kind.value] = truth_violations.get(event.kind.value, 0) + 1
    fault_counts: dict[str, int] = {}
    for event in result.fault_events:
        fault_counts[event.kind.value] = fault_counts.get(event.kind.value, 0) + 1

    series = _attempt_series(result)
    attempts_total = sum(p.attempts for p in result.primitives)
    committed = sum(1 for p in result.primitives
                    if p.outcome in ("committed", "recovered-then-committed"))
    fault_attempts = sum(s.failed_attempts for s in result.attempt_stats)

    summary = {
        "game": game_index,
        "seed": int(seed),
        "winners": list(result.winners),
        "terminal_cause": result.terminal_cause.value if result.terminal_cause else None,
        "robot_won": result.robot_won,
        "flagged": result.flagged,
        "autonomous": not result.flagged,
        "interventions": result.interventions,
        "unrecovered": result.unrecovered,
        "rejected": result.rejected,
        "fallbacks": result.fallbacks,
        "stalls": result.stalls,
        "phantom_claims": result.phantom_claims,
        "primitives": len(result.primitives),
        "committed": committed,
        "attempts": attempts_total,
        "fault_attempts": fault_attempts,
        "attempt_series": series,
        "fault_counts": fault_counts,
        "truth_violations": truth_violations,
        "detections": detections,
        "divergences": len(result.divergences),
        "plies": result.state.ply,
        "end_clock": result.end_clock,
    }

    records: list[dict] = [versioned("header", {
        "config": config.name,
        "game": game_index,
        "seed": int(seed),
        "robot_seat": config.robot_seat,
        "policies": list(config.policies),
        "missing_mode": config.missing_mode.value,
        "start_clock": drv_cfg.start_clock,
    })]
    records.extend(versioned("action", {"n": i, "act": act})
                   for i, act in enumerate(result.actions))
    records.extend(versioned("primitive", {
        "spec": p.spec, "outcome": p.outcome, "attempts": p.attempts,
        "sim_time": p.sim_time, "verify": list(p.verify),
        "consistent": p.consistent,
    }) for p in result.primitives)
    records.extend(versioned("fault", e.to_record())
                   for e in result.fault_events)
    records.extend(versioned("violation", e.to_record())
                   for e in result.interaction_events)
    records.extend(versioned("detection", r) for r in detection_records)
    if config.collect_traces:
        records.extend(versioned("trace", t.to_record()) for t in result.traces)
    records.append(versioned("consistency", {
        "audited": config.audit_commits,
        "divergences": list(result.divergences),
    }))
    records.append(versioned("outcome", summary))
    return records, summary


def _run_game_job(job: tuple[ExperimentConfig, int, int]) -> tuple[list[dict], dict]:
    """Top-level worker so campaign jobs survive pickling.  A game that
    raises is recorded as an error entry rather than killing the pool."""
    config, seed, index = job
    try:
        return run_game(config, seed, index)
    except Exception as exc:  # noqa: BLE001 - campaign must report, not die
        error = {"game": index, "seed": int(seed), "error": f"{type(exc).__name__}: {exc}"}
        return [versioned("game-error", error)], dict(error)


# ---------------------------------------------------------------------------
# Campaign aggregation.

NUM_SEATS = 4


@dataclass(frozen=True)
class CampaignReport:
    """Aggregate of one campaign.  Per-seat win counts include every
    winner of a multi-winner deal; ``draws`` counts exhausted walls."""

    config_name: str
    games: int
    robot_seat: int
    seat_wins: tuple[int, int, int, int]
    draws: int
    errors: int
    autonomous_games: int
    primitive_count: int
    committed_count: int
    grasp_attempts: int
    retries: int
    raw_success_rate: Optional[float]
    recovered_success_rate: Optional[float]
    unrecovered_games: int
    unrecovered_game_wins: int
    interventions: int
    stalls: int
    fallbacks: int
    rejected: int
    phantom_claims: int
    fault_counts: dict
    truth_violations: dict
    detections: dict
    per_game: tuple[dict, ...]

    @property
    def robot_wins(self) -> int:
        return self.seat_wins[self.robot_seat]

    @property
    def robot_win_rate(self) -> float:
        return self.robot_wins / self.games if self.games else 0.0

    @property
    def autonomous_rate(self) -> Optional[float]:
        return self.autonomous_games / self.games if self.games else None

    @property
    def unrecovered_game_win_rate(self) -> Optional[float]:
        if self.unrecovered_games == 0:
            return None
        return self.unrecovered_game_wins / self.unrecovered_games

    def to_dict(self, include_per_game: bool = False) -> dict:
        payload = {
            "config_name": self.config_name,
            "games": self.games,
            "robot_seat": self.robot_seat,
            "seat_wins": list(self.seat_wins),
            "draws": self.draws,
            "errors": self.errors,
            "autonomous_games": self.autonomous_games,
            "autonomous_rate": self.autonomous_rate,
            "robot_wins": self.robot_wins,
            "robot_win_rate": self.robot_win_rate,
            "primitive_count": self.primitive_count,
            "committed_count": self.committed_count,
            "grasp_attempts": self.grasp_attempts,
            "retries": self.retries,
            "raw_success_rate": self.raw_success_rate,
            "recovered_success_rate": self.recovered_success_rate,
            "unrecovered_games": self.unrecovered_games,
            "unrecovered_game_wins": self.unrecovered_game_wins,
            "unrecovered_game_win_rate": self.unrecovered_game_win_rate,
            "interventions": self.interventions,
            "stalls": self.stalls,
            "fallbacks": self.fallbacks,
            "rejected": self.rejected,
            "phantom_claims": self.phantom_claims,
            "fault_counts": dict(self.fault_counts),
            "truth_violations": dict(self.truth_violations),
            "detections": {k: dict(v) for k, v in self.detections.items()},
        }
        if include_per_game:
            payload["per_game"] = list(self.per_game)
        return payload


def _aggregate(config: ExperimentConfig,
               summaries: Sequence[dict]) -> CampaignReport:
    seat_wins = [0, 0, 0, 0]
    draws = errors = autonomous = 0
    primitives = committed = attempts = fault_attempts = 0
    unrecovered_games = unrecovered_wins = 0
    interventions = stalls = fallbacks = rejected = phantom = 0
    fault_counts: dict[str, int] = {}
    truth_violations: dict[str, int] = {}
    detections: dict[str, dict[str, int]] = {}
    for s in summaries:
        if "error" in s:
            errors += 1
            continue
        for seat in s["winners"]:
            seat_wins[seat] += 1
        if not s["winners"]:
            draws += 1
        if s["autonomous"]:
            autonomous += 1
        primitives += s["primitives"]
        committed += s["committed"]
        attempts += s["attempts"]
        fault_attempts += s["fault_attempts"]
        if s["unrecovered"] > 0:
            unrecovered_games += 1
            if s["robot_won"]:
                unrecovered_wins += 1
        interventions += s["interventions"]
        stalls += s["stalls"]
        fallbacks += s["fallbacks"]
        rejected += s["rejected"]
        phantom += s["phantom_claims"]
        for kind, n in s["fault_counts"].items():
            fault_counts[kind] = fault_counts.get(kind, 0) + n
        for kind, n in s["truth_violations"].items():
            truth_violations[kind] = truth_violations.get(kind, 0) + n
        for task, entry in s["detections"].items():
            slot = detections.setdefault(task, {"alerts": 0, "linked": 0})
            slot["alerts"] += entry["alerts"]
            slot["linked"] += entry["linked"]
    raw = (attempts - fault_attempts) / attempts if attempts else None
    recovered = committed / primitives if primitives else None
    return CampaignReport(
        config_name=config.name,
        games=config.games,
        robot_seat=config.robot_seat,
        seat_wins=tuple(seat_wins),
        draws=draws,
        errors=errors,
        autonomous_games=autonomous,
        primitive_count=primitives,
        committed_count=committed,
        grasp_attempts=attempts,
        retries=attempts - primitives,
        raw_success_rate=raw,
        recovered_success_rate=recovered,
        unrecovered_games=unrecovered_games,
        unrecovered_game_wins=unrecovered_wins,
        interventions=interventions,
        stalls=stalls,
        fallbacks=fallbacks,
        rejected=rejected,
        phantom_claims=phantom,
        fault_counts=fault_counts,
        truth_violations=truth_violations,
        detections=detections,
        per_game=tuple(summaries),
    )


def run_campaign(config: ExperimentConfig, *, write: bool = True,
                 ) -> tuple[CampaignReport, list[dict]]:
    """Run every game of a campaign and aggregate.

    Returns ``(report, transcript_records)``.  With ``write`` enabled
    and an output directory resolved from the config or environment,
    the transcript stream and both report renderings are saved there.
    """
    seeds = config.game_seeds()
    jobs = [(config, seeds[i], i) for i in range(config.games)]
    if config.parallelism > 1 and config.games > 1:
        with multiprocessing.Pool(config.parallelism) as pool:
            results = pool.map(_run_game_job, jobs)
    else:
        results = [_run_game_job(job) for job in jobs]
    transcripts: list[dict] = []
    summaries: list[dict] = []
    for game_records, summary in results:
        transcripts.extend(game_records)
        summaries.append(summary)
    report = _aggregate(config, summaries)
    if write:
        out = resolve_output_dir(config)
        if out is not None:
            base = Path(out)
            write_jsonl(base / f"{config.name}-transcripts.jsonl", transcripts)
            export_report(report, "structured-records",
                          base / f"{config.name}-report.jsonl")
            export_report(report, "comma-separated-table",
                          base / f"{config.name}-seats.csv")
    return report, transcripts


# ---------------------------------------------------------------------------
# Report rendering.

SEAT_TABLE_COLUMNS = ("Robot", "Right", "Opp.", "Left", "Draw")


def seat_table(report: CampaignReport) -> dict[str, int]:
    """Win counts keyed by seat relative to the robot, plus draws."""
    r = report.robot_seat
    wins = report.seat_wins
    return {
        "Robot": wins[r],
        "Right": wins[(r + 1) % NUM_SEATS],
        "Opp.": wins[(r + 2) % NUM_SEATS],
        "Left": wins[(r + 3) % NUM_SEATS],
        "Draw": report.draws,
    }


def seat_table_csv(report: CampaignReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SEAT_TABLE_COLUMNS)
    if report.games:
        table = seat_table(report)
        writer.writerow([table[c] for c in SEAT_TABLE_COLUMNS])
    return buf.getvalue()


def parse_seat_table(text: str) -> dict[str, int]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != SEAT_TABLE_COLUMNS:
        raise ValueError("not a seat table")
    if len(rows) == 1:
        return {}
    return {c: int(v) for c, v in zip(rows[0], rows[1])}


def export_report(report: CampaignReport, format: str, path) -> Path:
    """Render a campaign report to disk.

    ``structured-records`` emits one record per line (campaign totals,
    seat table, then per-game summaries); ``comma-separated-table``
    emits the seat table alone.  Re-exports are byte-identical.
    """
    path = Path(path)
    if format == "structured-records":
        records = [versioned("campaign-report", report.to_dict())]
        if report.games:
            records.append(versioned("seat-table", seat_table(report)))
        records.extend(versioned("game-summary", g) for g in report.per_game)
        write_jsonl(path, records)
    elif format == "comma-separated-table":
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(seat_table_csv(report), encoding="utf-8")
    else:
        raise ValueError(f"unknown report format: {format!r}")
    return path


# ---------------------------------------------------------------------------
# Statistics.


def one_sided_two_proportion(wins_hi: int, n_hi: int,
                             wins_lo: int, n_lo: int) -> tuple[float, float]:
    """Pooled z-test of H1: the first group's rate exceeds the second's.

    Returns ``(z, p)``.  A degenerate pooled rate (0 or 1 in both
    groups) carries no evidence either way and reports ``p = 0.5``.
    """
    if min(n_hi, n_lo) < 1:
        raise ValueError("both groups need at least one trial")
    if not (0 <= wins_hi <= n_hi and 0 <= wins_lo <= n_lo):
        raise ValueError("win counts must lie within group sizes")
    p_hi = wins_hi / n_hi
    p_lo = wins_lo / n_lo
    pooled = (wins_hi + wins_lo) / (n_hi + n_lo)
    se = float(np.sqrt(pooled * (1.0 - pooled) * (1.0 / n_hi + 1.0 / n_lo)))
    if se == 0.0:
        return 0.0, 0.5
    z = (p_hi - p_lo) / se
    return float(z), float(norm.sf(z))


def attempt_failure_split(report: CampaignReport, t_split: float) -> dict:
    """Per-attempt hardware failure rates before and after ``t_split``
    on the session clock, with a one-sided test that the late-session
    rate is higher."""
    before = [0, 0]  # attempts, failures
    after = [0, 0]
    for game in report.per_game:
        if "error" in game:
            continue
        for sim_time, attempts, failures in game["attempt_series"]:
            bucket = before if sim_time < t_split else after
            bucket[0] += int(attempts)
            bucket[1] += int(failures)
    if before[0] == 0 or after[0] == 0:
        raise ValueError("both sides of the split need attempts")
    z, p = one_sided_two_proportion(after[1], after[0], before[1], before[0])
    return {
        "t_split": t_split,
        "before_attempts": before[0],
        "before_failures": before[1],
        "before_rate": before[1] / before[0],
        "after_attempts": after[0],
        "after_failures": after[1],
        "after_rate": after[1] / after[0],
        "z": z,
        "p_value": p,
    }


# ---------------------------------------------------------------------------
# Paired matches with seat reversal.


class PairedVerdict(Enum):
    WIN_A = "win-a"
    WIN_B = "win-b"
    DRAW = "draw"


@dataclass(frozen=True)
class PairedMatchResult:
    """One deal, played twice with the compared policies swapping
    seats 0 and 2.  The match is decided only when the same policy wins
    from both seats; everything else — split results, double walls,
    shared wins — is a draw."""

    deal_seed: int
    wall_text: str
    winners_first: tuple[int, ...]
    winners_second: tuple[int, ...]
    verdict: PairedVerdict

    def to_record(self) -> dict:
        return {
            "deal_seed": self.deal_seed,
            "winners_first": list(self.winners_first),
            "winners_second": list(self.winners_second),
            "verdict": self.verdict.value,
        }


def paired_deal(deal_seed: int) -> GameState:
    """The dealt state both games of a paired match start from."""
    child = np.random.SeedSequence(deal_seed).spawn(3)[0]
    return deal_game(np.random.default_rng(child))


def run_paired_match(policy_a: Policy, policy_b: Policy, deal_seed: int,
                     *, filler: Optional[Policy] = None) -> PairedMatchResult:
    children = np.random.SeedSequence(deal_seed).spawn(3)
    state = deal_game(np.random.default_rng(children[0]))
    filler = filler if filler is not None else TeacherPolicy()

    def play(seat0: Policy, seat2: Policy, rng_seed) -> GameState:
        rng = np.random.default_rng(rng_seed)
        actors = [
            policy_actor(seat0, rng),
            policy_actor(filler, rng),
            policy_actor(seat2, rng),
            policy_actor(filler, rng),
        ]
        final, _events = play_game(state, actors)
        return final

    first = play(policy_a, policy_b, children[1])
    second = play(policy_b, policy_a, children[2])
    a_both = (0 in first.winners) and (2 in second.winners)
    b_both = (2 in first.winners) and (0 in second.winners)
    if a_both and not b_both:
        verdict = PairedVerdict.WIN_A
    elif b_both and not a_both:
        verdict = PairedVerdict.WIN_B
    else:
        verdict = PairedVerdict.DRAW
    return PairedMatchResult(
        deal_seed=int(deal_seed),
        wall_text=" ".join(str(t) for t in state.wall.tiles),
        winners_first=first.winners,
        winners_second=second.winners,
        verdict=verdict,
    )


@dataclass(frozen=True)
class PairedSeries:
    matches: int
    wins_a: int
    wins_b: int
    draws: int
    results: tuple[PairedMatchResult, ...] = ()

    @property
    def win_rate_a(self) -> float:
        return self.wins_a / self.matches if self.matches else 0.0

    @property
    def win_rate_b(self) -> float:
        return self.wins_b / self.matches if self.matches else 0.0

    def to_dict(self) -> dict:
        return {
            "matches": self.matches,
            "wins_a": self.wins_a,
            "wins_b": self.wins_b,
            "draws": self.draws,
            "win_rate_a": self.win_rate_a,
            "win_rate_b": self.win_rate_b,
        }


def run_paired_series(policy_a: Policy, policy_b: Policy, matches: int,
                      base_seed: int, *, filler: Optional[Policy] = None,
                      keep_results: bool = False) -> PairedSeries:
    if matches < 1:
        raise ValueError("matches must be positive")
    seeds = np.random.SeedSequence(base_seed).generate_state(matches, dtype=np.uint64)
    wins_a = wins_b = draws = 0
    kept: list[PairedMatchResult] = []
    for seed in seeds:
        result = run_paired_match(policy_a, policy_b, int(seed), filler=filler)
        if result.verdict is PairedVerdict.WIN_A:
            wins_a += 1
        elif result.verdict is PairedVerdict.WIN_B:
            wins_b += 1
        else:
            draws += 1
        if keep_results:
            kept.append(result)
    return PairedSeries(matches, wins_a, wins_b, draws, tuple(kept))


# ---------------------------------------------------------------------------
# Ablations.


class AblationKind(Enum):
    RECOVERY_OFF = "recovery-off"
    COMMIT_BEFORE_VERIFY = "commit-before-verify"
    FORCED_CHARACTERS = "forced-characters"


def ablated_config(base: ExperimentConfig, kind: AblationKind) -> ExperimentConfig:
    """The base config with one safeguard removed or one corruption
    injected; deal seeds stay shared with the base."""
    name = f"{base.name}+{kind.value}"
    if kind is AblationKind.RECOVERY_OFF:
        recovery = RecoveryPolicy(max_retries=0, relocalize=False,
                                  commit_mode=base.recovery.commit_mode)
        return replace(base, name=name, recovery=recovery, interventions=False)
    if kind is AblationKind.COMMIT_BEFORE_VERIFY:
        recovery = replace(base.recovery,
                           commit_mode=CommitMode.COMMIT_BEFORE_VERIFY)
        return replace(base, name=name, recovery=recovery)
    if kind is AblationKind.FORCED_CHARACTERS:
        return replace(base, name=name,
                       missing_mode=MissingMode.FORCED_CHARACTERS)
    raise ValueError(f"unknown ablation: {kind!r}")


@dataclass(frozen=True)
class AblationReport:
    kind: AblationKind
    games: int
    baseline_wins: int
    ablation_wins: int
    z: float
    p_value: float
    alpha: float
    baseline: CampaignReport
    ablation: CampaignReport

    @property
    def baseline_rate(self) -> float:
        return self.baseline_wins / self.games

    @property
    def ablation_rate(self) -> float:
        return self.ablation_wins / self.games

    @property
    def delta(self) -> float:
        return self.baseline_rate - self.ablation_rate

    @property
    def significant(self) -> bool:
        return self.p_value < self.alpha

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "games": self.games,
            "baseline_wins": self.baseline_wins,
            "ablation_wins": self.ablation_wins,
            "baseline_rate": self.baseline_rate,
            "ablation_rate": self.ablation_rate,
            "delta": self.delta,
            "z": self.z,
            "p_value": self.p_value,
            "alpha": self.alpha,
            "significant": self.significant,
        }


def run_ablation(kind: AblationKind, base_config: ExperimentConfig,
                 games: Optional[int] = None, *, alpha: float = 0.01,
                 write: bool = False) -> AblationReport:
    """Paired campaigns on shared deal seeds: the base config against
    its ablated variant, tested one-sided for a baseline advantage."""
    base = base_config if games is None else replace(base_config, games=games, seeds=None)
    ablated = ablated_config(base, kind)
    baseline_report, _ = run_campaign(base, write=write)
    ablation_report, _ = run_campaign(ablated, write=write)
    z, p = one_sided_two_proportion(
        baseline_report.robot_wins, base.games,
        ablation_report.robot_wins, base.games,
    )
    return AblationReport(
        kind=kind,
        games=base.games,
        baseline_wins=baseline_report.robot_wins,
        ablation_wins=ablation_report.robot_wins,
        z=z,
        p_value=p,
        alpha=alpha,
        baseline=baseline_report,
        ablation=ablation_report,
    )


# ---------------------------------------------------------------------------
# Self-play improvement loop.


def _teacher_dataset(teacher: Policy, games: int, seed: int,
                     ) -> list[tuple]:
    """Decision dataset from teacher-vs-teacher games: every consulted
    decision at every seat, as (view, trace, action) triples."""
    dataset: list[tuple] = []
    children = np.random.SeedSequence(seed).spawn(games)
    for child in children:
        rng = np.random.default_rng(child)
        initial = deal_game(rng)

        def actor(current: GameState, seat: int, legal) -> "object":
            view = view_from_state(current, seat, legal=legal)
            action, trace = decide(teacher, view, rng,
                                   timestamp=float(current.ply))
            dataset.append((view, trace, action))
            return action

        play_game(initial, [actor] * 4)
    return dataset


def sft_pretrain(teacher: Optional[Policy] = None, *, games: int = 8,
                 steps: int = 50, lr: float = 0.5, seed: int = 7,
                 temperature: float = 1.0) -> tuple[PolicyParams, dict]:
    """Fit the linear softmax policy to teacher decisions by full-batch
    gradient descent on the mean negative log-likelihood."""
    teacher = teacher if teacher is not None else TeacherPolicy()
    dataset = _teacher_dataset(teacher, games, seed)
    feats = precompute_sft_features(dataset)
    params = PolicyParams.zeros(temperature)
    initial_nll, _ = sft_nll_grad_cached(params, feats)
    nll = initial_nll
    for _step in range(steps):
        nll, grad = sft_nll_grad_cached(params, feats)
        params = PolicyParams(params.theta - lr * grad, temperature)
    final_nll, _ = sft_nll_grad_cached(params, feats)
    stats = {
        "decisions": len(dataset),
        "games": games,
        "steps": steps,
        "lr": lr,
        "initial_nll": initial_nll,
        "final_nll": final_nll,
    }
    return params, stats


@dataclass(frozen=True)
class SelfplayReport:
    """Before/after evaluation of the preference-optimization loop
    against the frozen teacher, with per-round mining statistics."""

    rounds: int
    groups_per_round: int
    group_size: int
    eval_matches: int
    pre: PairedSeries
    post: PairedSeries
    z: float
    p_value: float
    round_stats: tuple[dict, ...]

    @property
    def pre_rate(self) -> float:
        return self.pre.win_rate_a

    @property
    def post_rate(self) -> float:
        return self.post.win_rate_a

    @property
    def improved(self) -> bool:
        return self.post_rate > self.pre_rate

    def to_dict(self) -> dict:
        return {
            "rounds": self.rounds,
            "groups_per_round": self.groups_per_round,
            "group_size": self.group_size,
            "eval_matches": self.eval_matches,
            "pre": self.pre.to_dict(),
            "post": self.post.to_dict(),
            "pre_rate": self.pre_rate,
            "post_rate": self.post_rate,
            "z": self.z,
            "p_value": self.p_value,
            "improved": self.improved,
            "round_stats": list(self.round_stats),
        }


def evaluate_vs_teacher(params: PolicyParams, teacher: Policy,
                        matches: int, seed: int) -> PairedSeries:
    """Paired-match win rate of the policy's greedy play against the
    teacher, with teacher filler seats."""
    contender = SoftmaxPolicy(params, greedy=True)
    return run_paired_series(contender, teacher, matches, seed, filler=teacher)


def selfplay_round(policy: PolicyParams, teacher: Policy, rounds: int,
                   cfg: LossConfig, seed: int, *,
                   groups_per_round: int = 24, dpo_steps: int = 40,
                   lr: float = 1.0, eval_matches: int = 1000,
                   rollout_greedy: bool = False,
                   ) -> tuple[PolicyParams, SelfplayReport]:
    """Iterate preference mining and pairwise optimization.

    Each round freezes the current parameters as the reference, plays
    self-play groups, mines preference pairs where sibling branches of
    the shared-deal trie separated win rates, and takes full-batch
    pairwise-loss steps.  A round that mines no pairs (for example
    under greedy rollouts, which never branch) leaves the parameters
    untouched and is recorded as skipped.  Evaluation plays paired
    matches against the frozen teacher on pre- and post-training seed
    sets drawn from the same root seed.
    """
    if rounds < 1:
        raise ValueError("rounds must be positive")
    if groups_per_round < 1:
        raise ValueError("groups_per_round must be positive")
    root = np.random.SeedSequence(seed)
    eval_pre_seed, eval_post_seed = (int(s) for s in
                                     root.generate_state(2, dtype=np.uint64))
    stream_children = root.spawn(2)
    group_seeds = stream_children[0].generate_state(
        rounds * groups_per_round, dtype=np.uint64)
    mine_rng = np.random.default_rng(stream_children[1])

    pre = evaluate_vs_teacher(policy, teacher, eval_matches, eval_pre_seed)
    params = policy
    round_stats: list[dict] = []
    for r in range(rounds):
        reference = params
        pairs = []
        for g in range(groups_per_round):
            group_seed = int(group_seeds[r * groups_per_round + g])
            group = play_group(params, cfg.group_size, group_seed,
                               greedy=rollout_greedy)
            trie = build_trie(group)
            pairs.extend(extract_preference_pairs(trie, mine_rng))
        stats = {"round": r, "groups": groups_per_round, "pairs": len(pairs),
                 "skipped": not pairs}
        if pairs:
            cached = precompute_pair_features(pairs, reference)
            loss = None
            for _step in range(dpo_steps):
                loss, grad = dpo_loss_grad_cached(params, cached, cfg.dpo_beta)
                params = PolicyParams(params.theta - lr * grad,
                                      params.temperature)
            stats["final_loss"] = loss
        round_stats.append(stats)
    post = evaluate_vs_teacher(params, teacher, eval_matches, eval_post_seed)
    z, p = one_sided_two_proportion(post.wins_a, post.matches,
                                    pre.wins_a, pre.matches)
    report = SelfplayReport(
        rounds=rounds,
        groups_per_round=groups_per_round,
        group_size=cfg.group_size,
        eval_matches=eval_matches,
        pre=pre,
        post=post,
        z=z,
        p_value=p,
        round_stats=tuple(round_stats),
    )
    return params, report
