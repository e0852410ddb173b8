"""Engine state-machine tests: dealing, legality, claims, conservation."""
from __future__ import annotations

from collections import Counter

import numpy as np
import pytest

from tilelab.engine import (
    Action,
    ActionKind,
    EventKind,
    GameState,
    IllegalActionError,
    KongStyle,
    Phase,
    TerminalCause,
    Wall,
    apply_action,
    claim_seats,
    deal_game,
    legal_actions,
    play_game,
    resolve_claims,
)
from tilelab.hands import Hand
from tilelab.tiles import FULL_WALL, Suit, Tile, parse_tiles, tile


def total_tiles(state: GameState) -> Counter:
    c: Counter = Counter()
    c.update(state.wall.tiles[state.wall.draw_index:])
    for hand in state.hands:
        c.update(hand.concealed)
        for m in hand.melds:
            c.update(m.tiles())
    for pile in state.discards:
        c.update(pile)
    if state.last_discard is not None:
        c[state.last_discard] += 1
    return c


def declared(state: GameState, suits=(Suit.DOTS,) * 4) -> GameState:
    for seat, s in enumerate(suits):
        state = apply_action(state, Action(ActionKind.DECLARE_MISSING, seat,
                                           suit=s)).state
    return state


def rigged_state(hand_texts: list[str], wall_text: str,
                 missing=(Suit.DOTS,) * 4) -> GameState:
    """A mid-game state: declared hands, scripted wall, seat 0 to draw."""
    hands = tuple(Hand(parse_tiles(t), missing_suit=m)
                  for t, m in zip(hand_texts, missing))
    used = Counter()
    for h in hands:
        used.update(h.concealed)
    from tilelab.tiles import parse_tile
    wall_tiles = tuple(parse_tile(tok) for tok in wall_text.split())  # ordered
    used.update(wall_tiles)
    over = {t: n for t, n in used.items() if n > 4}
    assert not over, f"fixture uses more than four copies: {over}"
    return GameState(
        wall=Wall(tiles=wall_tiles, draw_index=0),
        hands=hands,
        discards=((), (), (), ()),
        current_seat=0,
        phase=Phase.AWAITING_DISCARD,
    )


class TestDeal:
    def test_deal_shape(self):
        state = deal_game(np.random.default_rng(0))
        assert state.phase is Phase.DECLARING
        assert state.current_seat == 0
        assert all(len(h.concealed) == 13 for h in state.hands)
        assert state.wall.remaining == 108 - 52
        assert total_tiles(state) == Counter(FULL_WALL)

    def test_deal_determinism(self):
        a = deal_game(np.random.default_rng(42))
        b = deal_game(np.random.default_rng(42))
        assert a == b
        c = deal_game(np.random.default_rng(43))
        assert a != c


class TestDeclaring:
    def test_declaration_order_and_phase(self):
        state = deal_game(np.random.default_rng(1))
        assert [a.kind for a in legal_actions(state, 0)] == [
            ActionKind.DECLARE_MISSING] * 3
        assert legal_actions(state, 1) == ()
        state = declared(state, (Suit.DOTS, Suit.BAMBOO, Suit.DOTS,
                                 Suit.CHARACTERS))
        assert state.phase is Phase.AWAITING_DISCARD
        assert state.current_seat == 0
        assert [h.missing_suit for h in state.hands] == [
            Suit.DOTS, Suit.BAMBOO, Suit.DOTS, Suit.CHARACTERS]

    def test_wrong_seat_declaration_rejected(self):
        state = deal_game(np.random.default_rng(1))
        with pytest.raises(IllegalActionError) as e:
            apply_action(state, Action(ActionKind.DECLARE_MISSING, 2,
                                       suit=Suit.DOTS))
        assert e.value.reason == "turn"


class TestTurnFlow:
    def test_draw_then_discard(self):
        state = declared(deal_game(np.random.default_rng(2)))
        legal = legal_actions(state, 0)
        assert [a.kind for a in legal] == [ActionKind.DRAW]
        result = apply_action(state, legal[0])
        assert result.events[0].kind is EventKind.DREW
        state = result.state
        assert len(state.hands[0].concealed) == 14
        discards = [a for a in legal_actions(state, 0)
                    if a.kind is ActionKind.DISCARD]
        assert discards
        state2 = apply_action(state, discards[0]).state
        assert state2.phase is Phase.AWAITING_CLAIMS
        assert state2.last_discarder == 0
        assert total_tiles(state2) == Counter(FULL_WALL)

    def test_all_pass_rotates(self):
        state = declared(deal_game(np.random.default_rng(2)))
        state = apply_action(state, Action(ActionKind.DRAW, 0)).state
        t = state.hands[0].concealed[0]
        state = apply_action(state, Action(ActionKind.DISCARD, 0, tile=t)).state
        assert claim_seats(state) == (1, 2, 3)
        result = resolve_claims(state, {})
        assert result.events[0].kind is EventKind.ALL_PASSED
        state = result.state
        assert state.phase is Phase.AWAITING_DISCARD
        assert state.current_seat == 1
        assert state.discards[0] == (t,)

    def test_cannot_draw_twice(self):
        state = declared(deal_game(np.random.default_rng(2)))
        state = apply_action(state, Action(ActionKind.DRAW, 0)).state
        with pytest.raises(IllegalActionError) as e:
            apply_action(state, Action(ActionKind.DRAW, 0))
        assert e.value.reason == "draw-size"

    def test_discard_absent_tile_rejected(self):
        state = declared(deal_game(np.random.default_rng(2)))
        state = apply_action(state, Action(ActionKind.DRAW, 0)).state
        absent = next(t for t in FULL_WALL
                      if state.hands[0].count_of(t) == 0)
        with pytest.raises(IllegalActionError) as e:
            apply_action(state, Action(ActionKind.DISCARD, 0, tile=absent))
        assert e.value.reason == "discard-absent"


class TestClaims:
    FILLERS = ("1C 1C 1C 2B 2B 2B 3B 3B 3B 4B 4B 4B 5B",
               "6B 6B 6B 7B 7B 7B 8B 8B 8B 9B 9B 9B 5B",
               "1D 1D 1D 2D 2D 2D 3D 3D 3D 7D 7D 7D 8D")

    def setup_discard(self, hand1: str = "", hand2: str = "", hand3: str = ""):
        """Seat 0 draws 9C and discards 5C; other hands as given."""
        texts = ["2C 3C 4C 5C 6C 7C 8C 1D 2D 3D 4D 5D 6D",
                 hand1 or self.FILLERS[0],
                 hand2 or self.FILLERS[1],
                 hand3 or self.FILLERS[2]]
        state = rigged_state(texts, "9C 1C 2C")
        state = apply_action(state, Action(ActionKind.DRAW, 0)).state
        return apply_action(
            state, Action(ActionKind.DISCARD, 0, tile=tile(Suit.CHARACTERS, 5))
        ).state

    def test_pung_claim(self):
        state = self.setup_discard(
            "5C 5C 6C 8C 9C 1B 1B 5B 5B 6B 7B 8B 9B",
            hand2="1D 1D 1D 2D 2D 2D 3D 3D 3D 7D 7D 7D 8D",
            hand3="4D 4D 4D 5D 5D 5D 6D 6D 6D 8D 8D 8D 9D")
        legal = legal_actions(state, 1)
        pungs = [a for a in legal if a.kind is ActionKind.PUNG]
        assert len(pungs) == 1
        result = resolve_claims(state, {1: pungs[0]})
        assert result.events[0].kind is EventKind.MELDED_PUNG
        assert total_tiles(result.state) == total_tiles(state)
        state = result.state
        assert state.current_seat == 1
        assert state.phase is Phase.AWAITING_DISCARD
        assert len(state.hands[1].melds) == 1
        assert state.hands[1].equivalent_size == 14

    def test_pung_without_copies_rejected_by_name(self):
        state = self.setup_discard()
        claim = Action(ActionKind.PUNG, 2, tile=tile(Suit.CHARACTERS, 5))
        assert claim not in legal_actions(state, 2)
        with pytest.raises(IllegalActionError) as e:
            resolve_claims(state, {2: claim})
        assert e.value.reason == "pung-copies"

    def test_explicit_pass_equals_omission(self):
        state = self.setup_discard()
        passes = {seat: Action(ActionKind.PASS, seat)
                  for seat in claim_seats(state)}
        assert resolve_claims(state, passes).state == resolve_claims(state, {}).state

    def test_kong_from_discard_draws_replacement(self):
        state = self.setup_discard(
            "5C 5C 5C 8C 9C 1B 1B 5B 5B 6B 7B 8B 9B",
            hand2="1D 1D 1D 2D 2D 2D 3D 3D 3D 7D 7D 7D 8D",
            hand3="4D 4D 4D 5D 5D 5D 6D 6D 6D 8D 8D 8D 9D")
        kongs = [a for a in legal_actions(state, 1)
                 if a.kind is ActionKind.KONG]
        assert len(kongs) == 1 and kongs[0].style is KongStyle.FROM_DISCARD
        result = resolve_claims(state, {1: kongs[0]})
        kinds = [e.kind for e in result.events]
        assert kinds == [EventKind.MELDED_KONG, EventKind.REPLACEMENT_DREW]
        assert total_tiles(result.state) == total_tiles(state)
        state = result.state
        assert state.hands[1].equivalent_size == 14
        assert state.current_seat == 1

    def test_win_beats_pung(self):
        punger = "5C 5C 6C 8C 9C 1B 1B 5B 5B 6B 7B 8B 9B"
        winner = "5C 2B 3B 4B 2B 3B 4B 2B 3B 4B 2B 3B 4B"
        state = self.setup_discard(
            punger, winner,
            hand3="4D 4D 4D 5D 5D 5D 6D 6D 6D 8D 8D 8D 9D")
        win2 = [a for a in legal_actions(state, 2)
                if a.kind is ActionKind.WIN]
        assert win2
        pung1 = [a for a in legal_actions(state, 1)
                 if a.kind is ActionKind.PUNG][0]
        result = resolve_claims(state, {1: pung1, 2: win2[0]})
        assert total_tiles(result.state) == total_tiles(state)
        state = result.state
        assert state.is_terminal
        assert state.terminal_cause is TerminalCause.WIN
        assert state.winners == (2,)
        assert not state.hands[1].melds

    def test_simultaneous_wins_all_granted(self):
        w2 = "5C 2B 3B 4B 2B 3B 4B 2B 3B 4B 2B 3B 4B"
        w3 = "5C 5B 6B 7B 5B 6B 7B 5B 6B 7B 5B 6B 7B"
        state = self.setup_discard(
            "1C 1C 1C 2C 2C 1D 1D 1D 2D 2D 2D 3D 3D", w2, w3)
        claims = {
            seat: [a for a in legal_actions(state, seat)
                   if a.kind is ActionKind.WIN][0]
            for seat in (2, 3)
        }
        before = total_tiles(state)
        state = resolve_claims(state, claims).state
        assert total_tiles(state) == before
        assert state.is_terminal
        assert state.winners == (2, 3)
        assert state.last_discard == tile(Suit.CHARACTERS, 5)
        for w in (2, 3):
            assert state.hands[w].wins_with(state.last_discard)


class TestKongOnTurn:
    REST = ("1C 1C 1C 2C 2C 2C 1D 1D 1D 2D 2D 2D 3D",
            "9C 9C 9C 8C 8C 8C 4D 4D 4D 5D 5D 5D 6D",
            "7D 7D 7D 8D 8D 8D 9D 9D 9D 6B 6B 6B 7B")

    def test_concealed_kong(self):
        texts = ["5C 5C 5C 6C 7C 8C 1B 1B 2B 2B 3B 3B 4B", *self.REST]
        state = rigged_state(texts, "5C 3C")
        state = apply_action(state, Action(ActionKind.DRAW, 0)).state
        kongs = [a for a in legal_actions(state, 0)
                 if a.kind is ActionKind.KONG]
        assert len(kongs) == 1 and kongs[0].style is KongStyle.CONCEALED
        result = apply_action(state, kongs[0])
        kinds = [e.kind for e in result.events]
        assert kinds == [EventKind.MELDED_KONG, EventKind.REPLACEMENT_DREW]
        assert total_tiles(result.state) == total_tiles(state)
        state = result.state
        assert state.hands[0].equivalent_size == 14
        assert state.hands[0].melds[0].kind.is_kong

    def test_upgrade_kong(self):
        from tilelab.hands import Meld, MeldKind
        texts = ["6C 7C 8C 1B 1B 2B 2B 3B 3B 4B", *self.REST]
        state = rigged_state(texts, "5C 3C")
        pung = Meld(MeldKind.PUNG, tile(Suit.CHARACTERS, 5), claimed_from=1)
        state = state.with_hand(0, state.hands[0].with_meld(pung, ()))
        state = apply_action(state, Action(ActionKind.DRAW, 0)).state
        upgrades = [a for a in legal_actions(state, 0)
                    if a.kind is ActionKind.KONG
                    and a.style is KongStyle.UPGRADE]
        assert len(upgrades) == 1
        state = apply_action(state, upgrades[0]).state
        assert state.hands[0].melds[0].kind is MeldKind.KONG_UPGRADED
        assert state.hands[0].equivalent_size == 14

    def test_self_draw_win(self):
        texts = ["5C 5C 6C 7C 8C 1B 1B 1B 2B 2B 2B 3B 4B", *self.REST]
        state = rigged_state(texts, "2B 3C")
        state = apply_action(state, Action(ActionKind.DRAW, 0)).state
        wins = [a for a in legal_actions(state, 0) if a.kind is ActionKind.WIN]
        assert wins
        state = apply_action(state, wins[0]).state
        assert state.is_terminal and state.winners == (0,)


class TestClosureAndDeterminism:
    @staticmethod
    def random_actor(rng):
        def act(state, seat, legal):
            return legal[int(rng.integers(0, len(legal)))]
        return act

    def test_random_playouts_stay_legal(self):
        for seed in range(6):
            rng = np.random.default_rng(seed)
            state = deal_game(rng)
            actor = self.random_actor(rng)
            final, events = play_game(state, [actor] * 4)
            assert final.is_terminal
            assert final.terminal_cause in (TerminalCause.WIN,
                                            TerminalCause.WALL_EXHAUSTED)
            assert total_tiles(final) == Counter(FULL_WALL)
            if final.terminal_cause is TerminalCause.WIN:
                assert final.winners
                for w in final.winners:
                    if final.last_discard is not None:
                        assert final.hands[w].wins_with(final.last_discard)
                    else:
                        assert final.hands[w].is_winning()
            else:
                assert final.wall.remaining == 0

    def test_playout_determinism(self):
        def run(seed):
            rng = np.random.default_rng(seed)
            state = deal_game(rng)
            return play_game(state, [self.random_actor(rng)] * 4)

        a_state, a_events = run(123)
        b_state, b_events = run(123)
        assert a_state == b_state
        assert a_events == b_events

    def test_every_step_closed_under_legality(self):
        rng = np.random.default_rng(7)
        state = deal_game(rng)
        steps = 0
        while not state.is_terminal and steps < 400:
            if state.phase is Phase.AWAITING_CLAIMS:
                claims = {}
                for seat in claim_seats(state):
                    legal = legal_actions(state, seat)
                    assert legal, "claim seats always have Pass"
                    claims[seat] = legal[int(rng.integers(0, len(legal)))]
                state = resolve_claims(state, claims).state
            else:
                legal = legal_actions(state, state.current_seat)
                assert legal
                choice = legal[int(rng.integers(0, len(legal)))]
                state = apply_action(state, choice).state
            assert total_tiles(state) == Counter(FULL_WALL)
            steps += 1

    def test_terminal_state_accepts_nothing(self):
        rng = np.random.default_rng(3)
        state = deal_game(rng)
        final, _ = play_game(state, [self.random_actor(rng)] * 4)
        assert legal_actions(final, final.current_seat) == ()
        with pytest.raises(IllegalActionError):
            apply_action(final, Action(ActionKind.DRAW, final.current_seat))
