"""The robot's maintained internal state and its consistency audit.

The internal state is a triple of views plus a commit counter:

* :class:`PerceptualState` -- what the robot believes about the physical
  table: its own concealed tiles and melds, every seat's discard zone,
  declared missing suits, and the remaining wall count;
* :class:`ExecutionState` -- the pending primitive (at most one) and the
  append-only log of completed primitives;
* :class:`InteractionState` -- whose turn it is and what event the robot
  expects next;
* ``version`` -- increments by exactly one per committed primitive and
  never otherwise.

Belief updates come from two channels: :func:`commit` folds in the
robot's own successfully verified primitives, and :func:`observe_event`
folds in public events caused by other seats.  Both mirror the engine's
ground-truth transitions, so in a fault-free run :func:`check_consistency`
stays empty after every step.

Discard zones follow the physical table: a freshly discarded tile lies
in front of its discarder during the claim window and is removed again
if a meld claims it.  :func:`table_discards` computes the same view from
ground truth for auditing.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

from .engine import (
    DEALER_SEAT,
    Event,
    EventKind,
    GameState,
    NUM_SEATS,
    Phase,
    next_seat,
)
from .hands import Hand, Meld, MeldKind
from .tiles import Suit, Tile

__all__ = [
    "ExpectedEvent",
    "PrimitiveKind",
    "PrimitiveSpec",
    "PerceptualState",
    "ExecutionState",
    "InteractionState",
    "InternalState",
    "ConsistencyClass",
    "ConsistencyEntry",
    "ConsistencyReport",
    "InternalStateError",
    "synchronized",
    "resync",
    "table_discards",
    "expected_event_for",
    "check_consistency",
    "observe_event",
    "commit",
    "with_pending",
    "with_log_entry",
    "believed_hand_object",
]


class InternalStateError(ValueError):
    """Raised when an internal-state operation violates its contract."""


class ExpectedEvent(Enum):
    OPPONENT_DISCARD = "opponent-discard"
    OWN_DRAW = "own-draw"
    CLAIM_WINDOW = "claim-window"
    DECLARATION = "declaration"


class PrimitiveKind(Enum):
    DRAW = "draw"
    PLACE = "place"
    DISCARD = "discard"
    MELD = "meld"


@dataclass(frozen=True, slots=True)
class PrimitiveSpec:
    """An atomic physical action the robot can attempt.

    ``target`` names the tile a discard acts on; ``meld_detail`` carries
    the full meld for ``MELD`` primitives (its ``claimed_from`` field
    distinguishes claimed melds from own-turn kongs).  ``PLACE`` is the
    win reveal: laying the completed hand face up.
    """

    kind: PrimitiveKind
    target: Optional[Tile] = None
    meld_detail: Optional[Meld] = None

    def describe(self) -> str:
        if self.kind is PrimitiveKind.DISCARD:
            return f"discard:{self.target}"
        if self.kind is PrimitiveKind.MELD:
            m = self.meld_detail
            assert m is not None
            origin = "" if m.claimed_from is None else f"@{m.claimed_from}"
            return f"meld:{m.kind.name.lower()}:{m.tile}{origin}"
        return self.kind.value


@dataclass(frozen=True, slots=True)
class PerceptualState:
    believed_hand: tuple[Tile, ...]
    believed_melds: tuple[Meld, ...]
    believed_discards: tuple[tuple[Tile, ...], ...]
    believed_missing_suits: tuple[Optional[Suit], ...]
    believed_wall_count: int
    history: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        if self.believed_wall_count < 0:
            raise InternalStateError("believed_wall_count must be nonnegative")

    def noted(self, source: str, description: str) -> "PerceptualState":
        return replace(self, history=self.history + ((source, description),))


@dataclass(frozen=True, slots=True)
class ExecutionState:
    pending: Optional[PrimitiveSpec] = None
    completed_log: tuple[tuple[PrimitiveSpec, str, int], ...] = ()


@dataclass(frozen=True, slots=True)
class InteractionState:
    current_turn: int
    expected_event: Optional[ExpectedEvent]


@dataclass(frozen=True, slots=True)
class InternalState:
    seat: int
    perceptual: PerceptualState
    execution: ExecutionState
    interaction: InteractionState
    version: int = 0


class ConsistencyClass(Enum):
    PERCEPTUAL = "perceptual"
    EXECUTION = "execution"
    INTERACTION = "interaction"


@dataclass(frozen=True, slots=True)
class ConsistencyEntry:
    klass: ConsistencyClass
    field: str
    believed: object
    actual: object


@dataclass(frozen=True, slots=True)
class ConsistencyReport:
    entries: tuple[ConsistencyEntry, ...]

    @property
    def ok(self) -> bool:
        return not self.entries

    def count(self, klass: ConsistencyClass) -> int:
        return sum(1 for e in self.entries if e.klass is klass)

    def describe(self) -> str:
        if self.ok:
            return "consistent"
        return "; ".join(
            f"{e.klass.value}:{e.field} believed={e.believed!r} actual={e.actual!r}"
            for e in self.entries
        )


def table_discards(truth: GameState) -> tuple[tuple[Tile, ...], ...]:
    """Physical discard zones, counting any in-flight discarded tile.

    A tile under claim (and the winning tile of a discard win) still lies
    in front of its discarder, so it belongs to that seat's zone.
    """
    piles = list(truth.discards)
    if truth.last_discard is not None and truth.last_discarder is not None:
        s = truth.last_discarder
        piles[s] = piles[s] + (truth.last_discard,)
    return tuple(piles)


def expected_event_for(truth: GameState, seat: int) -> Optional[ExpectedEvent]:
    """The event a correctly synchronized seat expects next, or None at end."""
    if truth.phase is Phase.TERMINAL:
        return None
    if truth.phase is Phase.DECLARING:
        return ExpectedEvent.DECLARATION
    if truth.phase is Phase.AWAITING_CLAIMS:
        return ExpectedEvent.CLAIM_WINDOW
    if truth.current_seat == seat:
        return ExpectedEvent.OWN_DRAW
    return ExpectedEvent.OPPONENT_DISCARD


def synchronized(truth: GameState, seat: int) -> InternalState:
    """A fresh internal state perfectly aligned with ground truth."""
    hand = truth.hands[seat]
    perceptual = PerceptualState(
        believed_hand=hand.concealed,
        believed_melds=hand.melds,
        believed_discards=table_discards(truth),
        believed_missing_suits=tuple(h.missing_suit for h in truth.hands),
        believed_wall_count=truth.wall.remaining,
    )
    interaction = InteractionState(
        current_turn=truth.current_seat,
        expected_event=expected_event_for(truth, seat),
    )
    return InternalState(seat, perceptual, ExecutionState(), interaction, version=0)


def resync(internal: InternalState, truth: GameState) -> InternalState:
    """Re-align perception and interaction with truth after an intervention.

    The execution log and the commit counter are preserved: resync is a
    perception refresh, not a committed primitive.  Only *physically
    re-readable* facts are refreshed -- tiles, melds, discard zones, the
    wall.  Spoken declarations leave no trace on the table, so the
    remembered missing suits carry over unchanged.
    """
    hand = truth.hands[internal.seat]
    perceptual = PerceptualState(
        believed_hand=hand.concealed,
        believed_melds=hand.melds,
        believed_discards=table_discards(truth),
        believed_missing_suits=internal.perceptual.believed_missing_suits,
        believed_wall_count=truth.wall.remaining,
        history=internal.perceptual.history + (("resync", "intervention"),),
    )
    interaction = InteractionState(
        current_turn=truth.current_seat,
        expected_event=expected_event_for(truth, internal.seat),
    )
    return InternalState(
        internal.seat,
        perceptual,
        replace(internal.execution, pending=None),
        interaction,
        version=internal.version,
    )


def believed_hand_object(internal: InternalState) -> Hand:
    """The robot's believed hand assembled as an engine ``Hand``."""
    p = internal.perceptual
    return Hand(
        concealed=tuple(sorted(p.believed_hand)),
        melds=p.believed_melds,
        missing_suit=p.believed_missing_suits[internal.seat],
    )


def check_consistency(internal: InternalState, truth: GameState) -> ConsistencyReport:
    """Audit the internal state against ground truth.

    Perceptual fields: own hand multiset, per-seat discard zones, wall
    count, declared missing suits.  Interaction fields: current turn and
    expected event (skipped once the game is over, when no further event
    is defined).  Execution: a still-pending primitive is itself a
    divergence, since audits happen between primitives.
    """
    seat = internal.seat
    p = internal.perceptual
    entries: list[ConsistencyEntry] = []

    believed_hand = tuple(sorted(p.believed_hand))
    actual_hand = truth.hands[seat].concealed
    if believed_hand != actual_hand:
        entries.append(
            ConsistencyEntry(ConsistencyClass.PERCEPTUAL, "hand", believed_hand, actual_hand)
        )

    actual_piles = table_discards(truth)
    for s in range(NUM_SEATS):
        if tuple(sorted(p.believed_discards[s])) != tuple(sorted(actual_piles[s])):
            entries.append(
                ConsistencyEntry(
                    ConsistencyClass.PERCEPTUAL,
                    f"discards[{s}]",
                    p.believed_discards[s],
                    actual_piles[s],
                )
            )

    if p.believed_wall_count != truth.wall.remaining:
        entries.append(
            ConsistencyEntry(
                ConsistencyClass.PERCEPTUAL,
                "wall_count",
                p.believed_wall_count,
                truth.wall.remaining,
            )
        )

    for s in range(NUM_SEATS):
        actual_missing = truth.hands[s].missing_suit
        if p.believed_missing_suits[s] is not actual_missing:
            entries.append(
                ConsistencyEntry(
                    ConsistencyClass.PERCEPTUAL,
                    f"missing_suit[{s}]",
                    p.believed_missing_suits[s],
                    actual_missing,
                )
            )

    if internal.execution.pending is not None:
        entries.append(
            ConsistencyEntry(
                ConsistencyClass.EXECUTION,
                "pending",
                internal.execution.pending.describe(),
                None,
            )
        )

    if not truth.is_terminal:
        i = internal.interaction
        if i.current_turn != truth.current_seat:
            entries.append(
                ConsistencyEntry(
                    ConsistencyClass.INTERACTION,
                    "current_turn",
                    i.current_turn,
                    truth.current_seat,
                )
            )
        expected = expected_event_for(truth, seat)
        if i.expected_event is not expected:
            entries.append(
                ConsistencyEntry(
                    ConsistencyClass.INTERACTION,
                    "expected_event",
                    i.expected_event,
                    expected,
                )
            )

    return ConsistencyReport(tuple(entries))


# ---------------------------------------------------------------------------
# Belief updates


def _seat_expectation(seat: int, robot_seat: int) -> ExpectedEvent:
    return ExpectedEvent.OWN_DRAW if seat == robot_seat else ExpectedEvent.OPPONENT_DISCARD


def _remove_in_flight(
    piles: tuple[tuple[Tile, ...], ...], seat: int, tile: Tile
) -> tuple[tuple[Tile, ...], ...]:
    """Remove the claimed in-flight tile from a believed discard zone."""
    zone = piles[seat]
    if not zone or zone[-1] != tile:
        raise InternalStateError(
            f"no in-flight {tile} at seat {seat}'s discard zone to claim"
        )
    out = list(piles)
    out[seat] = zone[:-1]
    return tuple(out)


def observe_event(internal: InternalState, event: Event) -> InternalState:
    """Fold one public game event into belief.

    Physical events caused by the robot's own committed primitives must
    not be fed here (commit already covers them); declarations are the
    exception, since declaring is not a guarded physical primitive.
    """
    r = internal.seat
    p = internal.perceptual
    i = internal.interaction
    kind = event.kind

    if kind in (
        EventKind.DREW,
        EventKind.DISCARDED,
        EventKind.MELDED_PUNG,
        EventKind.MELDED_KONG,
        EventKind.REPLACEMENT_DREW,
    ) and event.seat == r:
        raise InternalStateError(
            f"own {kind.name} events are folded in at commit, not observed"
        )

    if kind is EventKind.DECLARED_MISSING:
        missing = list(p.believed_missing_suits)
        missing[event.seat] = event.suit
        p = replace(p, believed_missing_suits=tuple(missing))
        if event.seat == NUM_SEATS - 1:
            i = InteractionState(DEALER_SEAT, _seat_expectation(DEALER_SEAT, r))
        else:
            i = InteractionState(event.seat + 1, ExpectedEvent.DECLARATION)
        p = p.noted("observed", f"seat {event.seat} declared {event.suit}")

    elif kind is EventKind.DREW:
        p = replace(p, believed_wall_count=p.believed_wall_count - 1)
        p = p.noted("observed", f"seat {event.seat} drew")

    elif kind is EventKind.REPLACEMENT_DREW:
        p = replace(p, believed_wall_count=p.believed_wall_count - 1)
        p = p.noted("observed", f"seat {event.seat} drew a replacement")

    elif kind is EventKind.DISCARDED:
        piles = list(p.believed_discards)
        piles[event.seat] = piles[event.seat] + (event.tile,)
        p = replace(p, believed_discards=tuple(piles))
        i = InteractionState(event.seat, ExpectedEvent.CLAIM_WINDOW)
        p = p.noted("observed", f"seat {event.seat} discarded {event.tile}")

    elif kind is EventKind.MELDED_PUNG:
        piles = _remove_in_flight(p.believed_discards, event.from_seat, event.tile)
        p = replace(p, believed_discards=piles)
        i = InteractionState(event.seat, _seat_expectation(event.seat, r))
        p = p.noted("observed", f"seat {event.seat} punged {event.tile}")

    elif kind is EventKind.MELDED_KONG:
        if event.from_seat is not None:
            piles = _remove_in_flight(p.believed_discards, event.from_seat, event.tile)
            p = replace(p, believed_discards=piles)
        i = InteractionState(event.seat, _seat_expectation(event.seat, r))
        p = p.noted("observed", f"seat {event.seat} konged {event.tile}")

    elif kind is EventKind.ALL_PASSED:
        # The in-flight tile settles where belief already placed it.
        nxt = next_seat(event.from_seat)
        i = InteractionState(nxt, _seat_expectation(nxt, r))
        p = p.noted("observed", f"claims passed on {event.tile}")

    elif kind is EventKind.WON:
        i = replace(i, expected_event=None)
        p = p.noted("observed", f"seat {event.seat} won")

    elif kind is EventKind.WALL_EXHAUSTED:
        i = replace(i, expected_event=None)
        p = p.noted("observed", "wall exhausted")

    else:  # pragma: no cover - defensive against future event kinds
        raise InternalStateError(f"unhandled event kind {kind!r}")

    return replace(internal, perceptual=p, interaction=i)


def with_pending(internal: InternalState, spec: PrimitiveSpec) -> InternalState:
    if internal.execution.pending is not None:
        raise InternalStateError("a primitive is already pending")
    return replace(internal, execution=replace(internal.execution, pending=spec))


def with_log_entry(
    internal: InternalState, spec: PrimitiveSpec, outcome: str, attempts: int
) -> InternalState:
    execution = replace(
        internal.execution,
        completed_log=internal.execution.completed_log + ((spec, outcome, attempts),),
    )
    return replace(internal, execution=execution)


def _hand_without(hand: tuple[Tile, ...], tiles: tuple[Tile, ...]) -> tuple[Tile, ...]:
    out = list(hand)
    for t in tiles:
        try:
            out.remove(t)
        except ValueError:
            raise InternalStateError(f"believed hand does not contain {t}") from None
    return tuple(out)


def _upgrade_believed_pung(melds: tuple[Meld, ...], tile: Tile) -> tuple[Meld, ...]:
    out: list[Meld] = []
    found = False
    for m in melds:
        if not found and m.kind is MeldKind.PUNG and m.tile == tile:
            out.append(replace(m, kind=MeldKind.KONG_UPGRADED))
            found = True
        else:
            out.append(m)
    if not found:
        raise InternalStateError(f"no believed pung of {tile} to upgrade")
    return tuple(out)


def commit(
    internal: InternalState,
    spec: PrimitiveSpec,
    *,
    drawn: Optional[Tile] = None,
) -> InternalState:
    """Fold a verified primitive into belief and advance the version.

    ``drawn`` names the tile gained from the wall (the drawn tile for
    ``DRAW``, the replacement for kong melds); other primitives ignore it.
    The primitive must be the pending one; committing again is rejected
    because commit clears the pending slot.
    """
    if internal.execution.pending is not spec and internal.execution.pending != spec:
        raise InternalStateError(
            f"commit of {spec.describe()} without a matching pending primitive"
        )
    r = internal.seat
    p = internal.perceptual
    hand = tuple(sorted(p.believed_hand))
    melds = p.believed_melds
    piles = p.believed_discards
    wall = p.believed_wall_count
    interaction = InteractionState(r, ExpectedEvent.OWN_DRAW)

    if spec.kind is PrimitiveKind.DRAW:
        if drawn is None:
            raise InternalStateError("DRAW commit needs the drawn tile identity")
        hand = tuple(sorted(hand + (drawn,)))
        wall -= 1

    elif spec.kind is PrimitiveKind.DISCARD:
        assert spec.target is not None
        hand = _hand_without(hand, (spec.target,))
        piles = list(piles)
        piles[r] = piles[r] + (spec.target,)
        piles = tuple(piles)
        interaction = InteractionState(r, ExpectedEvent.CLAIM_WINDOW)

    elif spec.kind is PrimitiveKind.MELD:
        m = spec.meld_detail
        assert m is not None
        if m.kind in (MeldKind.PUNG, MeldKind.KONG_EXPOSED) and m.claimed_from is None:
            raise InternalStateError(f"claimed {m.kind.name} needs a source seat")
        if m.kind is MeldKind.PUNG:
            hand = _hand_without(hand, (m.tile,) * 2)
            melds = melds + (m,)
            piles = _remove_in_flight(piles, m.claimed_from, m.tile)
        elif m.kind is MeldKind.KONG_EXPOSED:
            hand = _hand_without(hand, (m.tile,) * 3)
            melds = melds + (m,)
            piles = _remove_in_flight(piles, m.claimed_from, m.tile)
        elif m.kind is MeldKind.KONG_CONCEALED:
            hand = _hand_without(hand, (m.tile,) * 4)
            melds = melds + (m,)
        elif m.kind is MeldKind.KONG_UPGRADED:
            hand = _hand_without(hand, (m.tile,))
            melds = _upgrade_believed_pung(melds, m.tile)
        else:  # pragma: no cover
            raise InternalStateError(f"unhandled meld kind {m.kind!r}")
        # Every kong draws a replacement tile.
        if m.kind is not MeldKind.PUNG:
            if drawn is None:
                raise InternalStateError("kong commit needs the replacement tile")
            hand = tuple(sorted(hand + (drawn,)))
            wall -= 1

    elif spec.kind is PrimitiveKind.PLACE:
        # Win reveal: the hand multiset is unchanged, the game is over.
        interaction = InteractionState(r, None)

    else:  # pragma: no cover
        raise InternalStateError(f"unhandled primitive kind {spec.kind!r}")

    if wall < 0:
        raise InternalStateError("committed past an empty believed wall")

    perceptual = replace(
        p,
        believed_hand=hand,
        believed_melds=melds,
        believed_discards=piles,
        believed_wall_count=wall,
    ).noted("commit", spec.describe())
    execution = replace(internal.execution, pending=None)
    return InternalState(
        r, perceptual, execution, interaction, version=internal.version + 1
    )
