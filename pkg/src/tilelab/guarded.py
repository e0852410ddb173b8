"""Guarded verify-then-commit execution of physical primitives.

Every robot move runs through a five-step guarded transition:

1. **validate** -- preconditions checked against the robot's internal
   state (never against hidden ground truth); a violation aborts with a
   descriptor and no physical attempt;
2. **ground** -- the target is located perceptually, subject to
   misdetection sampling;
3. **execute** -- the physical manipulation, subject to time-dependent
   failure sampling; only a fully successful attempt changes the world;
4. **verify** -- a postcondition sensor reads the world and classifies
   the attempt, subject to configured confusion rates;
5. **commit** -- only a sensed success mutates internal state, exactly
   once per primitive.

Failed-and-detected attempts trigger bounded recovery: the target is
re-localized (fresh grounding draw) and the attempt repeated, up to
``max_retries`` times.  An exhausted or failed recovery leaves internal
state at its pre-call version and reports ``UNRECOVERED`` so the caller
can flag the game.

``CommitBeforeVerify`` exists only as an ablation: commit happens
unconditionally after the single physical attempt and before the sensor
is consulted, so silent failures corrupt internal state.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .engine import (
    Action,
    ActionKind,
    GameState,
    IllegalActionError,
    KongStyle,
    Phase,
    StepResult,
    apply_action,
    resolve_claims,
)
from .faults import (
    FaultConfig,
    FaultEvent,
    FaultEventKind,
    SensorModel,
    sample_execution_failure_detail,
)
from .hands import MeldKind
from .internal import (
    ExpectedEvent,
    InternalState,
    InternalStateError,
    PrimitiveKind,
    PrimitiveSpec,
    commit,
    with_log_entry,
    with_pending,
)
from .tiles import Tile

__all__ = [
    "CommitMode",
    "RecoveryPolicy",
    "VerifyOutcome",
    "ExecOutcome",
    "PrimitiveResult",
    "postcondition_holds",
    "verify_postcondition",
    "recover",
    "execute_primitive",
    "closed_form_overall_success",
    "default_transition",
]


class CommitMode(Enum):
    VERIFY_THEN_COMMIT = "verify-then-commit"
    COMMIT_BEFORE_VERIFY = "commit-before-verify"


@dataclass(frozen=True, slots=True)
class RecoveryPolicy:
    """Retry budget and commit discipline for guarded execution."""

    max_retries: int = 3
    relocalize: bool = True
    commit_mode: CommitMode = CommitMode.VERIFY_THEN_COMMIT

    def __post_init__(self) -> None:
        if self.max_retries < 0:
            raise ValueError("max_retries must be nonnegative")


class VerifyOutcome(Enum):
    VERIFIED = "verified"
    FAILED_DETECTED = "failed-detected"
    FALSE_NEGATIVE = "false-negative"
    FALSE_POSITIVE = "false-positive"


class ExecOutcome(Enum):
    COMMITTED = "committed"
    RECOVERED_THEN_COMMITTED = "recovered-then-committed"
    UNRECOVERED = "unrecovered"
    REJECTED = "rejected"


@dataclass(frozen=True, slots=True)
class PrimitiveResult:
    """Everything one guarded primitive produced."""

    outcome: ExecOutcome
    attempts: int
    internal: InternalState
    truth: GameState
    verify_trace: tuple[VerifyOutcome, ...] = ()
    fault_events: tuple[FaultEvent, ...] = ()
    violation: Optional[str] = None
    events: tuple = ()  # engine events from the successful truth transition

    @property
    def committed(self) -> bool:
        return self.outcome in (ExecOutcome.COMMITTED, ExecOutcome.RECOVERED_THEN_COMMITTED)


# ---------------------------------------------------------------------------
# Truth-side semantics of a primitive.


def default_transition(spec: PrimitiveSpec, seat: int) -> Callable[[GameState], StepResult]:
    """The ground-truth transition a primitive performs when it succeeds.

    Claimed melds and discard wins resolve a single-claim window; callers
    arbitrating several seats' claims supply their own transition.
    """

    def apply(state: GameState) -> StepResult:
        if spec.kind is PrimitiveKind.DRAW:
            return apply_action(state, Action(ActionKind.DRAW, seat))
        if spec.kind is PrimitiveKind.DISCARD:
            return apply_action(state, Action(ActionKind.DISCARD, seat, spec.target))
        if spec.kind is PrimitiveKind.MELD:
            m = spec.meld_detail
            assert m is not None
            if m.kind is MeldKind.PUNG:
                return resolve_claims(state, {seat: Action(ActionKind.PUNG, seat, m.tile)})
            if m.kind is MeldKind.KONG_EXPOSED:
                return resolve_claims(
                    state,
                    {seat: Action(ActionKind.KONG, seat, m.tile, style=KongStyle.FROM_DISCARD)},
                )
            if m.kind is MeldKind.KONG_CONCEALED:
                return apply_action(
                    state, Action(ActionKind.KONG, seat, m.tile, style=KongStyle.CONCEALED)
                )
            if m.kind is MeldKind.KONG_UPGRADED:
                return apply_action(
                    state, Action(ActionKind.KONG, seat, m.tile, style=KongStyle.UPGRADE)
                )
            raise InternalStateError(f"unhandled meld kind {m.kind!r}")
        if spec.kind is PrimitiveKind.PLACE:
            if state.phase is Phase.AWAITING_CLAIMS:
                return resolve_claims(state, {seat: Action(ActionKind.WIN, seat)})
            return apply_action(state, Action(ActionKind.WIN, seat))
        raise InternalStateError(f"unhandled primitive kind {spec.kind!r}")

    return apply


def postcondition_holds(truth: GameState, spec: PrimitiveSpec, seat: int) -> bool:
    """Whether ground truth already reflects the primitive's effect."""
    if spec.kind is PrimitiveKind.DRAW:
        return (
            truth.phase is Phase.AWAITING_DISCARD
            and truth.current_seat == seat
            and truth.hands[seat].equivalent_size % 3 == 2
        )
    if spec.kind is PrimitiveKind.DISCARD:
        return (
            truth.last_discard == spec.target
            and truth.last_discarder == seat
            and truth.phase in (Phase.AWAITING_CLAIMS, Phase.TERMINAL)
        )
    if spec.kind is PrimitiveKind.MELD:
        return spec.meld_detail in truth.hands[seat].melds
    if spec.kind is PrimitiveKind.PLACE:
        return truth.is_terminal and seat in truth.winners
    raise InternalStateError(f"unhandled primitive kind {spec.kind!r}")


# ---------------------------------------------------------------------------
# The five steps.


def validate_preconditions(internal: InternalState, spec: PrimitiveSpec) -> Optional[str]:
    """Check a primitive against belief.  Returns a violation slug or None."""
    p = internal.perceptual
    i = internal.interaction
    r = internal.seat
    hand_size = len(p.believed_hand) + 3 * len(p.believed_melds)

    def own_turn() -> Optional[str]:
        if i.expected_event is None:
            return "game-believed-over"
        if i.current_turn != r or i.expected_event is not ExpectedEvent.OWN_DRAW:
            return "not-own-turn"
        return None

    if spec.kind is PrimitiveKind.DRAW:
        err = own_turn()
        if err:
            return err
        if hand_size % 3 != 1:
            return "hand-not-awaiting-draw"
        if p.believed_wall_count <= 0:
            return "wall-believed-empty"
        return None

    if spec.kind is PrimitiveKind.DISCARD:
        err = own_turn()
        if err:
            return err
        if hand_size % 3 != 2:
            return "hand-not-awaiting-discard"
        if spec.target is None or spec.target not in p.believed_hand:
            return "tile-not-believed-held"
        return None

    if spec.kind is PrimitiveKind.MELD:
        m = spec.meld_detail
        if m is None:
            return "meld-unspecified"
        held = sum(1 for t in p.believed_hand if t == m.tile)
        if m.kind is MeldKind.PUNG:
            if i.expected_event is not ExpectedEvent.CLAIM_WINDOW:
                return "no-claim-window"
            return None if held >= 2 else "copies-not-believed-held"
        if m.kind is MeldKind.KONG_EXPOSED:
            if i.expected_event is not ExpectedEvent.CLAIM_WINDOW:
                return "no-claim-window"
            if p.believed_wall_count <= 0:
                return "wall-believed-empty"
            return None if held >= 3 else "copies-not-believed-held"
        # Own-turn kongs happen after drawing, with a 14-equivalent hand.
        err = own_turn()
        if err:
            return err
        if hand_size % 3 != 2:
            return "hand-not-awaiting-discard"
        if p.believed_wall_count <= 0:
            return "wall-believed-empty"
        if m.kind is MeldKind.KONG_CONCEALED:
            return None if held >= 4 else "copies-not-believed-held"
        if m.kind is MeldKind.KONG_UPGRADED:
            has_pung = any(
                b.kind is MeldKind.PUNG and b.tile == m.tile for b in p.believed_melds
            )
            if not has_pung:
                return "pung-not-believed-held"
            return None if held >= 1 else "copies-not-believed-held"
        return "meld-unspecified"

    if spec.kind is PrimitiveKind.PLACE:
        if i.expected_event is None:
            return "game-believed-over"
        return None

    return "primitive-unspecified"


def verify_postcondition(
    truth: GameState,
    spec: PrimitiveSpec,
    sensor: SensorModel,
    rng: np.random.Generator,
    *,
    seat: int,
) -> VerifyOutcome:
    """Sensor classification of the attempt just simulated.

    One uniform draw is consumed regardless of the configured confusion
    rates, so rng streams stay aligned across sensor configurations.
    """
    achieved = postcondition_holds(truth, spec, seat)
    u = float(rng.random())
    if achieved:
        return VerifyOutcome.FALSE_POSITIVE if u < sensor.false_positive else VerifyOutcome.VERIFIED
    return VerifyOutcome.FALSE_NEGATIVE if u < sensor.false_negative else VerifyOutcome.FAILED_DETECTED


def recover(
    attempts_used: int,
    policy: RecoveryPolicy,
    faults: FaultConfig,
    rng: np.random.Generator,
) -> bool:
    """Whether a detected failure may be retried.

    Requires retry budget, an enabled re-localization stage, and a
    successful re-localization draw.
    """
    if attempts_used > policy.max_retries:
        return False
    if not policy.relocalize:
        return False
    return float(rng.random()) < faults.relocalize_success


def _wall_top(truth: GameState) -> Optional[Tile]:
    wall = truth.wall
    if wall.remaining <= 0:
        return None
    return wall.tiles[wall.draw_index]


def _needs_drawn_tile(spec: PrimitiveSpec) -> bool:
    if spec.kind is PrimitiveKind.DRAW:
        return True
    return (
        spec.kind is PrimitiveKind.MELD
        and spec.meld_detail is not None
        and spec.meld_detail.kind is not MeldKind.PUNG
    )


def execute_primitive(
    internal: InternalState,
    truth: GameState,
    spec: PrimitiveSpec,
    faults: FaultConfig,
    policy: RecoveryPolicy,
    clock: float,
    rng: np.random.Generator,
    *,
    transition: Optional[Callable[[GameState], StepResult]] = None,
) -> PrimitiveResult:
    """Run one primitive through the guarded pipeline.

    ``transition`` overrides the truth-side semantics of a successful
    attempt (needed when a claimed meld or win must be arbitrated against
    other seats' claims); it must establish the primitive's postcondition.
    """
    seat = internal.seat
    if internal.execution.pending is not None:
        raise InternalStateError("a primitive is already pending")

    violation = validate_preconditions(internal, spec)
    if violation is not None:
        return PrimitiveResult(
            ExecOutcome.REJECTED, 0, internal, truth, violation=violation
        )

    if transition is None:
        transition = default_transition(spec, seat)
    pending = with_pending(internal, spec)
    sensor = faults.sensor_confusion

    truth_cur = truth
    engine_events: tuple = ()
    fault_events: list[FaultEvent] = []
    trace: list[VerifyOutcome] = []
    drawn_hint: Optional[Tile] = None

    def attempt_once() -> None:
        """Steps (ii)+(iii): ground and physically execute, mutating truth_cur."""
        nonlocal truth_cur, engine_events, drawn_hint
        ply = truth_cur.ply
        if float(rng.random()) < faults.misdetection_rate:
            fault_events.append(
                FaultEvent(
                    FaultEventKind.MISDETECTION, clock, ply,
                    detail=f"grounding lost {spec.describe()}",
                )
            )
            return
        failed, degraded = sample_execution_failure_detail(clock, faults, rng)
        if failed:
            kind = (
                FaultEventKind.HARDWARE_DEGRADATION if degraded
                else FaultEventKind.EXECUTION_FAILURE
            )
            fault_events.append(
                FaultEvent(kind, clock, ply, detail=f"attempt on {spec.describe()} failed")
            )
            return
        pre_top = _wall_top(truth_cur)
        try:
            step = transition(truth_cur)
        except IllegalActionError as exc:
            # The believed action is physically impossible on the real
            # table (e.g. the target tile is not actually in the hand).
            fault_events.append(
                FaultEvent(
                    FaultEventKind.EXECUTION_FAILURE, clock, ply,
                    detail=f"{spec.describe()} impossible: {exc.reason}",
                )
            )
            return
        if not postcondition_holds(step.state, spec, seat):
            raise InternalStateError(
                f"transition for {spec.describe()} did not establish its postcondition"
            )
        truth_cur = step.state
        engine_events = step.events
        drawn_hint = pre_top

    def commit_hint() -> Optional[Tile]:
        if not _needs_drawn_tile(spec):
            return None
        if drawn_hint is not None:
            return drawn_hint
        # Phantom commit (sensed success that never happened): the robot
        # believes it drew the tile it would have drawn.
        return _wall_top(truth_cur)

    if policy.commit_mode is CommitMode.COMMIT_BEFORE_VERIFY:
        # Ablation: one attempt, unconditional commit, then a pro forma
        # sensor reading that no longer influences anything.
        if not postcondition_holds(truth_cur, spec, seat):
            attempt_once()
        hint = commit_hint()
        if _needs_drawn_tile(spec) and hint is None:
            return PrimitiveResult(
                ExecOutcome.REJECTED, 1, internal, truth_cur,
                fault_events=tuple(fault_events), violation="wall-empty",
            )
        committed = commit(pending, spec, drawn=hint)
        trace.append(verify_postcondition(truth_cur, spec, sensor, rng, seat=seat))
        committed = with_log_entry(committed, spec, ExecOutcome.COMMITTED.value, 1)
        return PrimitiveResult(
            ExecOutcome.COMMITTED, 1, committed, truth_cur,
            verify_trace=tuple(trace), fault_events=tuple(fault_events),
            events=engine_events,
        )

    attempts = 0
    while True:
        attempts += 1
        if not postcondition_holds(truth_cur, spec, seat):
            attempt_once()
        cls = verify_postcondition(truth_cur, spec, sensor, rng, seat=seat)
        trace.append(cls)
        if cls in (VerifyOutcome.VERIFIED, VerifyOutcome.FALSE_NEGATIVE):
            hint = commit_hint()
            if _needs_drawn_tile(spec) and hint is None:
                break  # nothing drawable to commit; treat as unrecovered
            committed = commit(pending, spec, drawn=hint)
            outcome = (
                ExecOutcome.COMMITTED if attempts == 1
                else ExecOutcome.RECOVERED_THEN_COMMITTED
            )
            committed = with_log_entry(committed, spec, outcome.value, attempts)
            return PrimitiveResult(
                outcome, attempts, committed, truth_cur,
                verify_trace=tuple(trace), fault_events=tuple(fault_events),
                events=engine_events,
            )
        if not recover(attempts, policy, faults, rng):
            break

    unrecovered = with_log_entry(internal, spec, ExecOutcome.UNRECOVERED.value, attempts)
    return PrimitiveResult(
        ExecOutcome.UNRECOVERED, attempts, unrecovered, truth_cur,
        verify_trace=tuple(trace), fault_events=tuple(fault_events),
        events=engine_events,
    )


def closed_form_overall_success(
    attempt_success: float,
    max_retries: int = 3,
    relocalize_success: float = 0.9,
    relocalize: bool = True,
) -> float:
    """Exact overall success probability of the guarded retry scheme.

    ``O(0) = s`` and ``O(k) = s + (1-s) * q * O(k-1)``, where ``s`` is the
    per-attempt success probability and ``q`` the re-localization success:
    a failed attempt is retried only when re-localization succeeds, and at
    most ``max_retries`` times.
    """
    if not 0.0 <= attempt_success <= 1.0:
        raise ValueError("attempt_success must be a probability")
    if not relocalize:
        return attempt_success
    overall = attempt_success
    for _ in range(max_retries):
        overall = attempt_success + (1.0 - attempt_success) * relocalize_success * overall
    return overall
