"""Four-player missing-suit Mahjong engine.

Pure functional core: ``GameState`` is immutable, ``apply_action`` and
``resolve_claims`` return a new state plus the events the transition emitted.
The rule set is the three-suit game: 108 tiles, no honors, no runs claimed
from discards (no chow), every player declares a missing suit before play and
cannot win while holding tiles of it.

Turn shape: the seat to act draws, then discards (or wins, or declares a
kong and draws a replacement).  Each discard opens a claim window for the
other three seats with precedence Win > Kong > Pung > Pass; ties between
equal claims go to the seat nearest downstream of the discarder.  Several
simultaneous Win claims are all granted and the game ends.  The game also
ends when the wall runs out just as a draw is owed.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum, IntEnum
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .hands import Hand, Meld, MeldKind
from .tiles import FULL_WALL, WALL_SIZE, Suit, Tile

NUM_SEATS = 4
TILES_PER_DEAL = 13
DEALER_SEAT = 0


class Phase(Enum):
    DECLARING = "declaring"
    AWAITING_DISCARD = "awaiting_discard"
    AWAITING_CLAIMS = "awaiting_claims"
    TERMINAL = "terminal"


class TerminalCause(Enum):
    WIN = "win"
    WALL_EXHAUSTED = "wall_exhausted"


class ActionKind(IntEnum):
    """Ordered: the order doubles as the canonical sort rank for actions."""

    DECLARE_MISSING = 0
    DRAW = 1
    DISCARD = 2
    PUNG = 3
    KONG = 4
    WIN = 5
    PASS = 6


class KongStyle(IntEnum):
    CONCEALED = 0
    FROM_DISCARD = 1
    UPGRADE = 2


@dataclass(frozen=True, slots=True)
class Action:
    kind: ActionKind
    seat: int
    tile: Optional[Tile] = None
    suit: Optional[Suit] = None  # DeclareMissing only
    style: Optional[KongStyle] = None  # Kong only

    def sort_key(self) -> tuple[int, int, int, int]:
        return (
            int(self.kind),
            -1 if self.tile is None else self.tile.index,
            -1 if self.suit is None else int(self.suit),
            -1 if self.style is None else int(self.style),
        )

    def __str__(self) -> str:
        parts = [self.kind.name.lower(), f"s{self.seat}"]
        if self.tile is not None:
            parts.append(str(self.tile))
        if self.suit is not None:
            parts.append(self.suit.label)
        if self.style is not None:
            parts.append(self.style.name.lower())
        return ":".join(parts)


class EventKind(Enum):
    DECLARED_MISSING = "declared_missing"
    DREW = "drew"
    DISCARDED = "discarded"
    MELDED_PUNG = "melded_pung"
    MELDED_KONG = "melded_kong"
    REPLACEMENT_DREW = "replacement_drew"
    WON = "won"
    ALL_PASSED = "all_passed"
    WALL_EXHAUSTED = "wall_exhausted"


@dataclass(frozen=True, slots=True)
class Event:
    kind: EventKind
    seat: Optional[int] = None
    tile: Optional[Tile] = None
    suit: Optional[Suit] = None
    from_seat: Optional[int] = None


class IllegalActionError(ValueError):
    """Raised when an action is not legal in the given state.  ``reason`` is
    a short stable slug naming the violated condition."""

    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        super().__init__(f"illegal action [{reason}]{': ' + detail if detail else ''}")


@dataclass(frozen=True, slots=True)
class Wall:
    tiles: tuple[Tile, ...]
    draw_index: int = 0

    @property
    def remaining(self) -> int:
        return len(self.tiles) - self.draw_index

    def draw(self) -> tuple[Tile, "Wall"]:
        if self.remaining <= 0:
            raise IllegalActionError("draw-wall", "wall is exhausted")
        t = self.tiles[self.draw_index]
        return t, replace(self, draw_index=self.draw_index + 1)


@dataclass(frozen=True, slots=True)
class GameState:
    wall: Wall
    hands: tuple[Hand, ...]
    discards: tuple[tuple[Tile, ...], ...]
    current_seat: int
    phase: Phase
    last_discard: Optional[Tile] = None
    last_discarder: Optional[int] = None
    winners: tuple[int, ...] = ()
    terminal_cause: Optional[TerminalCause] = None
    ply: int = 0

    @property
    def is_terminal(self) -> bool:
        return self.phase is Phase.TERMINAL

    def hand(self, seat: int) -> Hand:
        return self.hands[seat]

    def with_hand(self, seat: int, hand: Hand) -> "GameState":
        hands = self.hands[:seat] + (hand,) + self.hands[seat + 1:]
        return replace(self, hands=hands)


@dataclass(frozen=True, slots=True)
class StepResult:
    state: GameState
    events: tuple[Event, ...]


def next_seat(seat: int) -> int:
    return (seat + 1) % NUM_SEATS


def deal_game(rng: np.random.Generator) -> GameState:
    """Shuffle the 108-tile wall and deal 13 tiles to each seat.  Seat 0 is
    the dealer: it declares first and takes the first draw."""
    order = rng.permutation(WALL_SIZE)
    shuffled = tuple(FULL_WALL[i] for i in order)
    hands = tuple(
        Hand.deal(shuffled[s * TILES_PER_DEAL:(s + 1) * TILES_PER_DEAL])
        for s in range(NUM_SEATS)
    )
    wall = Wall(tiles=shuffled, draw_index=NUM_SEATS * TILES_PER_DEAL)
    return GameState(
        wall=wall,
        hands=hands,
        discards=((), (), (), ()),
        current_seat=DEALER_SEAT,
        phase=Phase.DECLARING,
    )


# ---------------------------------------------------------------------------
# Legality.


def legal_actions(state: GameState, seat: int) -> tuple[Action, ...]:
    """All actions ``seat`` may take now, in canonical order.  Empty when it
    is not this seat's moment to act."""
    if state.phase is Phase.TERMINAL:
        return ()
    out: list[Action] = []
    if state.phase is Phase.DECLARING:
        if seat == state.current_seat:
            out = [Action(ActionKind.DECLARE_MISSING, seat, suit=s) for s in Suit]
    elif state.phase is Phase.AWAITING_DISCARD:
        if seat == state.current_seat:
            out = _turn_actions(state, seat)
    elif state.phase is Phase.AWAITING_CLAIMS:
        if seat != state.last_discarder:
            out = _claim_actions(state, seat)
    return tuple(sorted(out, key=Action.sort_key))


def _turn_actions(state: GameState, seat: int) -> list[Action]:
    hand = state.hands[seat]
    out: list[Action] = []
    if hand.equivalent_size == 13:
        if state.wall.remaining > 0:
            out.append(Action(ActionKind.DRAW, seat))
        return out
    # 14-equivalent: discard, or win, or declare a kong (replacement needed).
    for t in sorted(set(hand.concealed)):
        out.append(Action(ActionKind.DISCARD, seat, tile=t))
    if hand.is_winning():
        out.append(Action(ActionKind.WIN, seat))
    if state.wall.remaining > 0:
        counts = hand.counts()
        for t in sorted(set(hand.concealed)):
            if counts[t.index] == 4:
                out.append(Action(ActionKind.KONG, seat, tile=t,
                                  style=KongStyle.CONCEALED))
        pung_tiles = {m.tile for m in hand.melds if m.kind is MeldKind.PUNG}
        for t in sorted(set(hand.concealed) & pung_tiles):
            out.append(Action(ActionKind.KONG, seat, tile=t,
                              style=KongStyle.UPGRADE))
    return out


def _claim_actions(state: GameState, seat: int) -> list[Action]:
    hand = state.hands[seat]
    t = state.last_discard
    assert t is not None
    out = [Action(ActionKind.PASS, seat)]
    copies = hand.count_of(t)
    if copies >= 2:
        out.append(Action(ActionKind.PUNG, seat, tile=t))
    if copies >= 3 and state.wall.remaining > 0:
        out.append(Action(ActionKind.KONG, seat, tile=t,
                          style=KongStyle.FROM_DISCARD))
    if hand.wins_with(t):
        out.append(Action(ActionKind.WIN, seat))
    return out


# ---------------------------------------------------------------------------
# Transitions.


def apply_action(state: GameState, action: Action) -> StepResult:
    """Apply one non-claim action.  Claim-window actions (during
    ``AWAITING_CLAIMS``) must go through :func:`resolve_claims` so precedence
    can be arbitrated; applying one here raises ``IllegalActionError``."""
    if state.phase is Phase.TERMINAL:
        raise IllegalActionError("terminal", "game is over")
    if state.phase is Phase.AWAITING_CLAIMS:
        raise IllegalActionError("claims-pending",
                                 "use resolve_claims during the claim window")
    if action.seat != state.current_seat:
        raise IllegalActionError("turn", f"seat {action.seat} is not to act")

    if action.kind is ActionKind.DECLARE_MISSING:
        return _apply_declare(state, action)
    if state.phase is not Phase.AWAITING_DISCARD:
        raise IllegalActionError("phase", f"{action.kind.name} in {state.phase.name}")
    if action.kind is ActionKind.DRAW:
        return _apply_draw(state, action)
    if action.kind is ActionKind.DISCARD:
        return _apply_discard(state, action)
    if action.kind is ActionKind.KONG:
        return _apply_kong_own_turn(state, action)
    if action.kind is ActionKind.WIN:
        return _apply_self_win(state, action)
    raise IllegalActionError("phase", f"{action.kind.name} is not a turn action")


def _apply_declare(state: GameState, action: Action) -> StepResult:
    if state.phase is not Phase.DECLARING:
        raise IllegalActionError("declare-done", "declarations already made")
    if action.suit is None:
        raise IllegalActionError("declare-suit", "no suit given")
    seat = action.seat
    new = state.with_hand(seat, state.hands[seat].with_missing_suit(action.suit))
    events = (Event(EventKind.DECLARED_MISSING, seat=seat, suit=action.suit),)
    if seat == NUM_SEATS - 1:
        new = replace(new, phase=Phase.AWAITING_DISCARD,
                      current_seat=DEALER_SEAT, ply=state.ply + 1)
    else:
        new = replace(new, current_seat=seat + 1, ply=state.ply + 1)
    return StepResult(new, events)


def _apply_draw(state: GameState, action: Action) -> StepResult:
    hand = state.hands[action.seat]
    if hand.equivalent_size != 13:
        raise IllegalActionError("draw-size", "hand already holds a drawn tile")
    tile, wall = state.wall.draw()
    new = state.with_hand(action.seat, hand.with_drawn(tile))
    new = replace(new, wall=wall, ply=state.ply + 1)
    return StepResult(new, (Event(EventKind.DREW, seat=action.seat, tile=tile),))


def _apply_discard(state: GameState, action: Action) -> StepResult:
    hand = state.hands[action.seat]
    if hand.equivalent_size != 14:
        raise IllegalActionError("discard-size", "nothing to discard yet")
    if action.tile is None or hand.count_of(action.tile) == 0:
        raise IllegalActionError("discard-absent",
                                 f"{action.tile} not in hand")
    new = state.with_hand(action.seat, hand.without((action.tile,)))
    new = replace(new, phase=Phase.AWAITING_CLAIMS, last_discard=action.tile,
                  last_discarder=action.seat, ply=state.ply + 1)
    return StepResult(new, (Event(EventKind.DISCARDED, seat=action.seat,
                                  tile=action.tile),))


def _apply_kong_own_turn(state: GameState, action: Action) -> StepResult:
    seat = action.seat
    hand = state.hands[seat]
    t = action.tile
    if t is None:
        raise IllegalActionError("kong-tile", "no tile given")
    if hand.equivalent_size != 14:
        raise IllegalActionError("kong-size", "kong only after drawing")
    if state.wall.remaining == 0:
        raise IllegalActionError("kong-wall", "no replacement tile available")
    if action.style is KongStyle.CONCEALED:
        if hand.count_of(t) != 4:
            raise IllegalActionError(
                "kong-copies", f"concealed kong needs 4 copies of {t}")
        meld = Meld(MeldKind.KONG_CONCEALED, t)
        new_hand = hand.with_meld(meld, (t,) * 4)
    elif action.style is KongStyle.UPGRADE:
        if hand.count_of(t) < 1 or not any(
                m.kind is MeldKind.PUNG and m.tile == t for m in hand.melds):
            raise IllegalActionError(
                "kong-copies", f"no pung of {t} plus a concealed copy")
        new_hand = hand.upgrade_pung(t)
    else:
        raise IllegalActionError("kong-style",
                                 "discard kongs go through resolve_claims")
    events = [Event(EventKind.MELDED_KONG, seat=seat, tile=t)]
    new = state.with_hand(seat, new_hand)
    rep, wall = new.wall.draw()
    new = new.with_hand(seat, new.hands[seat].with_drawn(rep))
    new = replace(new, wall=wall, ply=state.ply + 1)
    events.append(Event(EventKind.REPLACEMENT_DREW, seat=seat, tile=rep))
    return StepResult(new, tuple(events))


def _apply_self_win(state: GameState, action: Action) -> StepResult:
    hand = state.hands[action.seat]
    if not hand.is_winning():
        raise IllegalActionError("win-shape", "hand does not decompose")
    new = replace(state, phase=Phase.TERMINAL, winners=(action.seat,),
                  terminal_cause=TerminalCause.WIN, ply=state.ply + 1)
    return StepResult(new, (Event(EventKind.WON, seat=action.seat),))


_CLAIM_PRECEDENCE = {
    ActionKind.WIN: 0,
    ActionKind.KONG: 1,
    ActionKind.PUNG: 2,
    ActionKind.PASS: 3,
}


def resolve_claims(state: GameState,
                   claims: Mapping[int, Action]) -> StepResult:
    """Arbitrate the claim window after a discard.

    ``claims`` maps seat to its chosen claim action; omitted seats pass.
    Every submitted claim must be legal for its seat.  Precedence is
    Win > Kong > Pung > Pass, ties broken downstream of the discarder,
    except simultaneous wins: all winning claimants win together.
    """
    if state.phase is not Phase.AWAITING_CLAIMS:
        raise IllegalActionError("phase", "no claim window open")
    discarder = state.last_discarder
    tile = state.last_discard
    assert discarder is not None and tile is not None

    chosen: dict[int, Action] = {}
    for seat, action in claims.items():
        if seat == discarder:
            raise IllegalActionError("claim-self", "discarder cannot claim")
        if action.kind is ActionKind.PASS:
            continue
        legal = legal_actions(state, seat)
        if action not in legal:
            _reject_claim(state, seat, action)
        chosen[seat] = action

    winners = sorted(s for s, a in chosen.items() if a.kind is ActionKind.WIN)
    if winners:
        return _apply_discard_win(state, winners)

    if chosen:
        # Single best claim: precedence, then downstream distance.
        def rank(item: tuple[int, Action]) -> tuple[int, int]:
            seat, action = item
            return (_CLAIM_PRECEDENCE[action.kind],
                    (seat - discarder) % NUM_SEATS)

        seat, action = min(chosen.items(), key=rank)
        if action.kind is ActionKind.KONG:
            return _apply_discard_kong(state, seat, action)
        return _apply_discard_pung(state, seat, action)

    # Everyone passed: the tile settles into the discard pile and the next
    # seat draws -- unless the wall is already empty, which ends the game.
    piles = list(state.discards)
    piles[discarder] = piles[discarder] + (tile,)
    new = replace(state, discards=tuple(piles), last_discard=None,
                  last_discarder=None, ply=state.ply + 1)
    events = [Event(EventKind.ALL_PASSED, tile=tile, from_seat=discarder)]
    if new.wall.remaining == 0:
        new = replace(new, phase=Phase.TERMINAL,
                      terminal_cause=TerminalCause.WALL_EXHAUSTED)
        events.append(Event(EventKind.WALL_EXHAUSTED))
    else:
        new = replace(new, phase=Phase.AWAITING_DISCARD,
                      current_seat=next_seat(discarder))
    return StepResult(new, tuple(events))


def _reject_claim(state: GameState, seat: int, action: Action) -> None:
    """Raise with a reason naming what the claim lacked."""
    hand = state.hands[seat]
    t = state.last_discard
    if action.kind is ActionKind.PUNG:
        if action.tile != t:
            raise IllegalActionError("pung-tile",
                                     f"claim names {action.tile}, discard is {t}")
        raise IllegalActionError(
            "pung-copies",
            f"seat {seat} holds {hand.count_of(t)} of {t}, needs 2")
    if action.kind is ActionKind.KONG:
        if action.tile != t:
            raise IllegalActionError("kong-tile",
                                     f"claim names {action.tile}, discard is {t}")
        if state.wall.remaining == 0:
            raise IllegalActionError("kong-wall", "no replacement tile available")
        raise IllegalActionError(
            "kong-copies",
            f"seat {seat} holds {hand.count_of(t)} of {t}, needs 3")
    if action.kind is ActionKind.WIN:
        raise IllegalActionError("win-shape",
                                 f"{t} does not complete seat {seat}'s hand")
    raise IllegalActionError("claim-kind", f"{action.kind.name} is not a claim")


def _apply_discard_win(state: GameState, winners: list[int]) -> StepResult:
    # The claimed tile stays in ``last_discard`` as the winning-tile record:
    # several simultaneous winners complete off the same physical tile, so
    # it cannot be folded into any single hand.
    tile = state.last_discard
    assert tile is not None
    events = tuple(Event(EventKind.WON, seat=seat, tile=tile,
                         from_seat=state.last_discarder)
                   for seat in winners)
    new = replace(state, phase=Phase.TERMINAL, winners=tuple(winners),
                  terminal_cause=TerminalCause.WIN, ply=state.ply + 1)
    return StepResult(new, events)


def _apply_discard_pung(state: GameState, seat: int,
                        action: Action) -> StepResult:
    tile = state.last_discard
    assert tile is not None
    meld = Meld(MeldKind.PUNG, tile, claimed_from=state.last_discarder)
    hand = state.hands[seat].with_meld(meld, (tile,) * 2)
    new = state.with_hand(seat, hand)
    new = replace(new, phase=Phase.AWAITING_DISCARD, current_seat=seat,
                  last_discard=None, last_discarder=None, ply=state.ply + 1)
    return StepResult(new, (Event(EventKind.MELDED_PUNG, seat=seat, tile=tile,
                                  from_seat=state.last_discarder),))


def _apply_discard_kong(state: GameState, seat: int,
                        action: Action) -> StepResult:
    tile = state.last_discard
    assert tile is not None
    meld = Meld(MeldKind.KONG_EXPOSED, tile, claimed_from=state.last_discarder)
    hand = state.hands[seat].with_meld(meld, (tile,) * 3)
    new = state.with_hand(seat, hand)
    events = [Event(EventKind.MELDED_KONG, seat=seat, tile=tile,
                    from_seat=state.last_discarder)]
    rep, wall = new.wall.draw()
    new = new.with_hand(seat, new.hands[seat].with_drawn(rep))
    new = replace(new, wall=wall, phase=Phase.AWAITING_DISCARD,
                  current_seat=seat, last_discard=None, last_discarder=None,
                  ply=state.ply + 1)
    events.append(Event(EventKind.REPLACEMENT_DREW, seat=seat, tile=rep))
    return StepResult(new, tuple(events))


# ---------------------------------------------------------------------------
# Driver for fault-free games.


Actor = Callable[[GameState, int, tuple[Action, ...]], Action]


def claim_seats(state: GameState) -> tuple[int, ...]:
    """Seats that may act in the open claim window, in downstream order."""
    assert state.phase is Phase.AWAITING_CLAIMS
    d = state.last_discarder
    assert d is not None
    return tuple((d + k) % NUM_SEATS for k in range(1, NUM_SEATS))


def play_game(state: GameState, actors: Sequence[Actor],
              max_plies: int = 2000) -> tuple[GameState, tuple[Event, ...]]:
    """Run a game to its end with one actor per seat and no fault layer.

    Seats whose only legal claim is Pass are never consulted, which keeps
    the common all-pass window cheap.
    """
    log: list[Event] = []
    while not state.is_terminal:
        if state.ply > max_plies:
            raise RuntimeError("game exceeded ply budget")
        if state.phase is Phase.AWAITING_CLAIMS:
            claims: dict[int, Action] = {}
            for seat in claim_seats(state):
                legal = legal_actions(state, seat)
                if len(legal) > 1:
                    claims[seat] = actors[seat](state, seat, legal)
            result = resolve_claims(state, claims)
        else:
            seat = state.current_seat
            legal = legal_actions(state, seat)
            if not legal:
                raise RuntimeError(f"no legal action for seat {seat} in "
                                   f"{state.phase.name}")
            action = legal[0] if len(legal) == 1 else actors[seat](state, seat, legal)
            result = apply_action(state, action)
        state = result.state
        log.extend(result.events)
    return state, tuple(log)
