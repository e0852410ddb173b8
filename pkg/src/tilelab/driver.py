"""One full game with the robot seat driven through guarded execution.

The robot decides from its *belief* (internal state), never from hidden
ground truth: its decision views use the believed hand, believed melds,
and remembered declarations, while public zones are re-read from the
table.  Every physical move it makes runs through the guarded
verify-then-commit pipeline; opponents are simulated humans who act on
ground truth directly.

Belief maintenance during play:

* the robot's own committed primitives update belief at commit;
* opponents' public events are fed to :func:`tilelab.internal.observe_event`;
* events produced by forced completions of the robot's *failed* moves are
  fed to nobody -- that is exactly how belief drift starts.

An ``UNRECOVERED`` primitive flags the game.  A human then completes the
intended move on the table (or any legal move when the intention is
physically impossible), and -- when interventions are enabled -- the
robot re-perceives the table (:func:`tilelab.internal.resync`), which is
what keeps flagged baseline games consistent afterwards.  Ablations that
disable recovery also disable this repair, so drift persists.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .engine import (
    Action,
    ActionKind,
    Event,
    EventKind,
    GameState,
    KongStyle,
    NUM_SEATS,
    Phase,
    TerminalCause,
    apply_action,
    legal_actions,
    resolve_claims,
)
from .faults import FaultConfig, FaultEvent, sample_interaction_event
from .guarded import (
    ExecOutcome,
    PrimitiveResult,
    RecoveryPolicy,
    default_transition,
    execute_primitive,
    postcondition_holds,
)
from .hands import Meld, MeldKind
from .internal import (
    InternalState,
    PrimitiveKind,
    PrimitiveSpec,
    believed_hand_object,
    check_consistency,
    observe_event,
    resync,
    synchronized,
)
from .policy import DecisionTrace, Policy, decide, view_from_state
from .tiles import Suit

__all__ = [
    "DriverConfig",
    "PrimitiveRecord",
    "AttemptStat",
    "TurnMark",
    "GuardedGameResult",
    "play_guarded_game",
]

# A ply is one engine transition; simulated wall-clock seconds per ply.
PLY_DURATION_S = 1.0
# Nominal span reserved per game when scheduling campaign start clocks.
NOMINAL_GAME_DURATION_S = 260.0

_PHYSICAL_EVENT_KINDS = frozenset(
    {
        EventKind.DREW,
        EventKind.DISCARDED,
        EventKind.MELDED_PUNG,
        EventKind.MELDED_KONG,
        EventKind.REPLACEMENT_DREW,
    }
)

_CLAIM_PRECEDENCE = {
    ActionKind.WIN: 0,
    ActionKind.KONG: 1,
    ActionKind.PUNG: 2,
}


@dataclass(frozen=True, slots=True)
class DriverConfig:
    robot_seat: int = 0
    faults: FaultConfig = FaultConfig()
    recovery: RecoveryPolicy = RecoveryPolicy()
    interventions: bool = True
    forced_missing: Optional[Suit] = None
    start_clock: float = 0.0
    ply_duration: float = PLY_DURATION_S
    max_plies: int = 3000
    audit_commits: bool = False


@dataclass(frozen=True, slots=True)
class PrimitiveRecord:
    spec: str
    outcome: str
    attempts: int
    sim_time: float
    verify: tuple[str, ...]
    consistent: Optional[bool] = None


@dataclass(frozen=True, slots=True)
class AttemptStat:
    """Per-primitive physical attempt accounting for hazard analysis."""

    sim_time: float
    failed_attempts: int
    succeeded: bool


@dataclass(frozen=True, slots=True)
class TurnMark:
    sim_time: float
    turn_index: int


@dataclass(slots=True)
class GuardedGameResult:
    state: GameState
    internal: InternalState
    robot_seat: int
    winners: tuple[int, ...]
    terminal_cause: Optional[TerminalCause]
    robot_won: bool
    flagged: bool
    interventions: int
    unrecovered: int
    rejected: int
    fallbacks: int
    stalls: int
    phantom_claims: int
    primitives: tuple[PrimitiveRecord, ...]
    attempt_stats: tuple[AttemptStat, ...]
    fault_events: tuple[FaultEvent, ...]
    interaction_events: tuple[FaultEvent, ...]
    turn_marks: tuple[TurnMark, ...]
    divergences: tuple[str, ...]
    end_clock: float
    traces: tuple[DecisionTrace, ...]
    actions: tuple[str, ...]


class _Driver:
    def __init__(
        self,
        state: GameState,
        policies: Sequence[Policy],
        rng: np.random.Generator,
        cfg: DriverConfig,
        collect_traces: bool,
    ) -> None:
        if len(policies) != NUM_SEATS:
            raise ValueError(f"need {NUM_SEATS} seat policies")
        self.state = state
        self.policies = tuple(policies)
        self.rng = rng
        # Interaction violations are observations, not interventions in
        # play; they draw from a spawned child stream so that enabling
        # them cannot perturb the game itself.
        self.interaction_rng = rng.spawn(1)[0]
        self.cfg = cfg
        self.r = cfg.robot_seat
        self.internal = synchronized(state, self.r)
        self.collect_traces = collect_traces
        self.traces: list[DecisionTrace] = []
        self.actions: list[str] = []
        self.primitives: list[PrimitiveRecord] = []
        self.attempt_stats: list[AttemptStat] = []
        self.fault_events: list[FaultEvent] = []
        self.interaction_events: list[FaultEvent] = []
        self.turn_marks: list[TurnMark] = []
        self.divergences: list[str] = []
        self.interventions = 0
        self.unrecovered = 0
        self.rejected = 0
        self.fallbacks = 0
        self.stalls = 0
        self.phantom_claims = 0
        self.forced_applied = False

    # -- small helpers ----------------------------------------------------

    @property
    def clock(self) -> float:
        return self.cfg.start_clock + self.state.ply * self.cfg.ply_duration

    def _decide(self, seat: int, view) -> Action:
        action, trace = decide(
            self.policies[seat], view, self.rng, timestamp=float(self.state.ply)
        )
        if self.collect_traces:
            self.traces.append(trace)
        return action

    def _belief_view(self, legal: tuple[Action, ...]):
        return view_from_state(
            self.state,
            self.r,
            legal=legal,
            hand=believed_hand_object(self.internal),
            believed_missing=self.internal.perceptual.believed_missing_suits,
        )

    def _belief_legal(self) -> tuple[Action, ...]:
        """Legal actions as the robot's belief sees them.

        After unrepaired drift the believed hand can have a size that
        makes no sense for the current phase (say, fourteen tiles during
        a claim window).  A robot whose internal picture is malformed
        proposes nothing; the caller falls back to passing or to human
        help.
        """
        hand = believed_hand_object(self.internal)
        if self.state.phase is Phase.AWAITING_CLAIMS:
            if hand.equivalent_size != 13:
                return ()
        elif self.state.phase is Phase.AWAITING_DISCARD:
            if hand.equivalent_size not in (13, 14):
                return ()
        synth = self.state.with_hand(self.r, hand)
        return legal_actions(synth, self.r)

    def _ingest(self, events: tuple[Event, ...]) -> None:
        """Feed public events to belief, skipping the robot's own physical ones."""
        for e in events:
            if e.kind in _PHYSICAL_EVENT_KINDS and e.seat == self.r:
                continue
            self.internal = observe_event(self.internal, e)

    def _apply_direct(self, action: Action) -> None:
        step = apply_action(self.state, action)
        self.state = step.state
        self.actions.append(str(action))
        self._ingest(step.events)

    def _intervene(self) -> None:
        """Human intervention: the robot re-perceives the physical table."""
        self.interventions += 1
        self.internal = resync(self.internal, self.state)

    def _maybe_forced_corruption(self) -> None:
        """Once declarations are done, optionally corrupt their memory."""
        if self.cfg.forced_missing is None or self.forced_applied:
            return
        if self.state.phase is Phase.DECLARING:
            return
        forced = (self.cfg.forced_missing,) * NUM_SEATS
        self.internal = replace(
            self.internal,
            perceptual=replace(
                self.internal.perceptual, believed_missing_suits=forced
            ),
        )
        self.forced_applied = True

    def _record_primitive(self, spec: PrimitiveSpec, result: PrimitiveResult) -> None:
        failed = sum(
            1
            for e in result.fault_events
            if e.kind.value in ("misdetection", "execution-failure", "hardware-degradation")
        )
        self.attempt_stats.append(AttemptStat(self.clock, failed, result.committed))
        self.fault_events.extend(result.fault_events)
        consistent: Optional[bool] = None
        if result.committed and self.cfg.audit_commits:
            report = check_consistency(result.internal, result.truth)
            consistent = report.ok
            if not report.ok:
                self.divergences.append(report.describe())
        self.primitives.append(
            PrimitiveRecord(
                spec.describe(),
                result.outcome.value,
                result.attempts,
                self.clock,
                tuple(v.value for v in result.verify_trace),
                consistent,
            )
        )

    # -- fallback paths ---------------------------------------------------

    def _force_complete(self, spec: PrimitiveSpec, transition) -> None:
        """A human completes the robot's failed move on the table.

        The intended move is applied when still physically legal;
        otherwise some legal move is played in its place.  Belief sees
        none of it.
        """
        if postcondition_holds(self.state, spec, self.r):
            return  # the world already reflects the primitive
        try:
            step = transition(self.state)
        except Exception:
            step = None
        if step is None:
            self._random_fallback()
            return
        self.state = step.state
        self.actions.append(f"forced:{spec.describe()}")

    def _random_fallback(self) -> None:
        """Advance the table legally when the robot's move is lost.

        During a claim window the lost move can only be the granted
        claim, so the window simply closes; on a normal turn somebody
        plays a uniformly random legal move for the robot seat.
        """
        self.fallbacks += 1
        if self.state.phase is Phase.AWAITING_CLAIMS:
            step = resolve_claims(self.state, {})
            self.state = step.state
            self.actions.append("fallback:all-pass")
            self._ingest(step.events)
            return
        legal = legal_actions(self.state, self.state.current_seat)
        if not legal:
            raise RuntimeError("no legal action available for fallback")
        action = legal[int(self.rng.integers(len(legal)))]
        step = apply_action(self.state, action)
        self.state = step.state
        self.actions.append(f"fallback:{action}")

    # -- phase handlers ---------------------------------------------------

    def _declaring_step(self) -> None:
        seat = self.state.current_seat
        legal = legal_actions(self.state, seat)
        if seat == self.r:
            view = self._belief_view(self._belief_legal())
        else:
            view = view_from_state(self.state, seat, legal=legal)
        action = self._decide(seat, view)
        # Declaring is verbal, not a guarded physical primitive.
        step = apply_action(self.state, action)
        self.state = step.state
        self.actions.append(str(action))
        for e in step.events:
            self.internal = observe_event(self.internal, e)
        self._maybe_forced_corruption()

    def _action_to_primitive(self, action: Action) -> PrimitiveSpec:
        if action.kind is ActionKind.DRAW:
            return PrimitiveSpec(PrimitiveKind.DRAW)
        if action.kind is ActionKind.DISCARD:
            return PrimitiveSpec(PrimitiveKind.DISCARD, target=action.tile)
        if action.kind is ActionKind.WIN:
            return PrimitiveSpec(PrimitiveKind.PLACE)
        if action.kind is ActionKind.KONG:
            if action.style is KongStyle.CONCEALED:
                meld = Meld(MeldKind.KONG_CONCEALED, action.tile)
            elif action.style is KongStyle.UPGRADE:
                # The upgraded kong keeps the original pung's provenance.
                source = next(
                    (
                        m.claimed_from
                        for m in self.internal.perceptual.believed_melds
                        if m.kind is MeldKind.PUNG and m.tile == action.tile
                    ),
                    None,
                )
                meld = Meld(MeldKind.KONG_UPGRADED, action.tile, claimed_from=source)
            else:
                raise ValueError("discard kongs are claim primitives")
            return PrimitiveSpec(PrimitiveKind.MELD, meld_detail=meld)
        raise ValueError(f"{action.kind.name} is not a physical primitive")

    def _run_primitive(self, spec: PrimitiveSpec, transition=None) -> bool:
        """Execute one guarded primitive; returns True if committed."""
        ply_before = self.state.ply
        result = execute_primitive(
            self.internal,
            self.state,
            spec,
            self.cfg.faults,
            self.cfg.recovery,
            self.clock,
            self.rng,
            transition=transition,
        )
        self._record_primitive(spec, result)
        if result.committed:
            self.internal = result.internal
            self.state = result.truth
            self.actions.append(f"robot:{spec.describe()}")
            self._ingest(result.events)
            if self.state.ply == ply_before:
                # The robot believes the move happened but the table
                # never changed (a silent miss: an unverified commit or
                # a sensor false negative).  The robot does not notice,
                # but the waiting humans do -- someone completes the
                # move so play continues.  Belief stays wrong.
                self.stalls += 1
                self._force_complete(
                    spec,
                    transition
                    if transition is not None
                    else default_transition(spec, self.r),
                )
            return True
        # Rejected (belief refused) or unrecovered (attempts exhausted):
        # flag the game, have a human complete the move, maybe resync.
        if result.outcome is ExecOutcome.REJECTED:
            self.rejected += 1
        else:
            self.unrecovered += 1
            self.internal = result.internal
            self.state = result.truth
        self._force_complete(
            spec,
            transition if transition is not None else default_transition(spec, self.r),
        )
        if self.cfg.interventions:
            self._intervene()
        return False

    def _robot_turn_step(self) -> None:
        legal = self._belief_legal()
        if not legal:
            self._random_fallback()
            if self.cfg.interventions:
                self._intervene()
            return
        if len(legal) == 1:
            action = legal[0]
        else:
            action = self._decide(self.r, self._belief_view(legal))
        spec = self._action_to_primitive(action)
        self._run_primitive(spec)

    def _turn_step(self) -> None:
        seat = self.state.current_seat
        if self.state.hands[seat].equivalent_size % 3 == 1:
            # A draw-turn is starting: sample at most one human violation.
            self.turn_marks.append(TurnMark(self.clock, self.state.ply))
            event = sample_interaction_event(
                self.state,
                self.cfg.faults,
                self.interaction_rng,
                robot_seat=self.r,
                sim_time=self.clock,
            )
            if event is not None:
                self.interaction_events.append(event)
        if seat == self.r:
            self._robot_turn_step()
            return
        legal = legal_actions(self.state, seat)
        if len(legal) == 1:
            action = legal[0]
        else:
            action = self._decide(seat, view_from_state(self.state, seat, legal=legal))
        self._apply_direct(action)

    def _collect_claims(self) -> dict[int, Action]:
        claims: dict[int, Action] = {}
        discarder = self.state.last_discarder
        assert discarder is not None
        for offset in range(1, NUM_SEATS):
            seat = (discarder + offset) % NUM_SEATS
            if seat == self.r:
                legal = self._belief_legal()
            else:
                legal = legal_actions(self.state, seat)
            if len(legal) <= 1:
                continue
            view = (
                self._belief_view(legal)
                if seat == self.r
                else view_from_state(self.state, seat, legal=legal)
            )
            action = self._decide(seat, view)
            if action.kind is not ActionKind.PASS:
                claims[seat] = action
        return claims

    def _claims_step(self) -> None:
        claims = self._collect_claims()

        # A robot claim that is not legal on the real table dies at the
        # announcement: humans object, the claim is void.
        robot_claim = claims.get(self.r)
        if robot_claim is not None and robot_claim not in legal_actions(self.state, self.r):
            del claims[self.r]
            self.phantom_claims += 1
            robot_claim = None

        win_seats = sorted(s for s, a in claims.items() if a.kind is ActionKind.WIN)
        discarder = self.state.last_discarder
        assert discarder is not None
        granted: Optional[int] = None
        if win_seats:
            granted_seats = win_seats
        elif claims:
            granted = min(
                claims,
                key=lambda s: (
                    _CLAIM_PRECEDENCE[claims[s].kind],
                    (s - discarder) % NUM_SEATS,
                ),
            )
            granted_seats = [granted]
        else:
            granted_seats = []

        robot_physical = (self.r in granted_seats) and robot_claim is not None
        if robot_physical:
            if robot_claim.kind is ActionKind.WIN:
                spec = PrimitiveSpec(PrimitiveKind.PLACE)
            else:
                tile = self.state.last_discard
                assert tile is not None
                kind = (
                    MeldKind.PUNG
                    if robot_claim.kind is ActionKind.PUNG
                    else MeldKind.KONG_EXPOSED
                )
                spec = PrimitiveSpec(
                    PrimitiveKind.MELD,
                    meld_detail=Meld(kind, tile, claimed_from=discarder),
                )
            frozen = dict(claims)
            self._run_primitive(spec, transition=lambda st: resolve_claims(st, frozen))
            return

        step = resolve_claims(self.state, claims)
        self.state = step.state
        self.actions.append(
            "claims:" + (",".join(str(claims[s]) for s in sorted(claims)) or "all-pass")
        )
        self._ingest(step.events)

    # -- main loop --------------------------------------------------------

    def run(self) -> GuardedGameResult:
        guard = 0
        while not self.state.is_terminal:
            guard += 1
            if guard > self.cfg.max_plies:
                raise RuntimeError("game exceeded the ply guard")
            if self.state.phase is Phase.DECLARING:
                self._declaring_step()
            elif self.state.phase is Phase.AWAITING_DISCARD:
                self._turn_step()
            else:
                self._claims_step()
        flagged = (
            self.unrecovered > 0
            or self.rejected > 0
            or self.fallbacks > 0
            or self.stalls > 0
        )
        return GuardedGameResult(
            state=self.state,
            internal=self.internal,
            robot_seat=self.r,
            winners=self.state.winners,
            terminal_cause=self.state.terminal_cause,
            robot_won=self.r in self.state.winners,
            flagged=flagged,
            interventions=self.interventions,
            unrecovered=self.unrecovered,
            rejected=self.rejected,
            fallbacks=self.fallbacks,
            stalls=self.stalls,
            phantom_claims=self.phantom_claims,
            primitives=tuple(self.primitives),
            attempt_stats=tuple(self.attempt_stats),
            fault_events=tuple(self.fault_events),
            interaction_events=tuple(self.interaction_events),
            turn_marks=tuple(self.turn_marks),
            divergences=tuple(self.divergences),
            end_clock=self.clock,
            traces=tuple(self.traces),
            actions=tuple(self.actions),
        )


def play_guarded_game(
    state: GameState,
    policies: Sequence[Policy],
    rng: np.random.Generator,
    cfg: Optional[DriverConfig] = None,
    *,
    collect_traces: bool = False,
) -> GuardedGameResult:
    """Play one dealt game to completion with a guarded robot seat."""
    driver = _Driver(state, policies, rng, cfg or DriverConfig(), collect_traces)
    return driver.run()
