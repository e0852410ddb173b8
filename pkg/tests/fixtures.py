"""Shared rigged-state builders for the execution-layer tests."""
from __future__ import annotations

from collections import Counter

from tilelab.engine import (
    Action,
    ActionKind,
    GameState,
    Phase,
    Wall,
    apply_action,
)
from tilelab.hands import Hand
from tilelab.tiles import Suit, parse_tile, parse_tiles


def rigged_state(hand_texts: list[str], wall_text: str,
                 missing=(Suit.DOTS,) * 4,
                 current_seat: int = 0) -> GameState:
    """A mid-game state: declared hands, scripted wall, ``current_seat``
    to draw.  The wall order is exactly the token order of ``wall_text``."""
    hands = tuple(Hand(parse_tiles(t), missing_suit=m)
                  for t, m in zip(hand_texts, missing))
    used = Counter()
    for h in hands:
        used.update(h.concealed)
        for m in h.melds:
            used.update(m.tiles())
    wall_tiles = tuple(parse_tile(tok) for tok in wall_text.split())
    used.update(wall_tiles)
    over = {t: n for t, n in used.items() if n > 4}
    assert not over, f"fixture uses more than four copies: {over}"
    return GameState(
        wall=Wall(tiles=wall_tiles, draw_index=0),
        hands=hands,
        discards=((), (), (), ()),
        current_seat=current_seat,
        phase=Phase.AWAITING_DISCARD,
    )


# Four quiet 13-tile hands that do not interfere with one another and a
# scripted wall; seat 0 is about to draw.
QUIET_HANDS = [
    "1B 1B 2B 3B 4B 5B 6B 7B 8B 9B 9B 2C 2C",
    "1C 1C 3C 3C 4C 4C 5C 5C 6C 6C 7C 7C 8C",
    "1D 1D 2D 2D 3D 3D 4D 4D 5D 5D 6D 6D 7D",
    "7D 8D 8D 9D 9D 8C 8C 9C 9C 2B 3B 4B 5B",
]


def draw_ready_state(wall_text: str = "6B 7B 8B 6C 7C 1B") -> GameState:
    """Seat 0 one draw away, bamboo-missing declared nowhere relevant."""
    return rigged_state(QUIET_HANDS, wall_text,
                        missing=(Suit.DOTS, Suit.DOTS, Suit.CHARACTERS,
                                 Suit.CHARACTERS))


def discard_ready_state(wall_text: str = "6B 7B 8B 6C 7C 1B") -> GameState:
    """Seat 0 holding fourteen tiles, a discard due."""
    state = draw_ready_state(wall_text)
    return apply_action(state, Action(ActionKind.DRAW, 0)).state


def harvest_decision_views(seed: int, min_actions: int = 2,
                           limit: int | None = None):
    """Decision views (>= ``min_actions`` legal) from one random game.

    Plays a full engine game with uniform-random actors and records the
    acting seat's ground-truth view at every consulted decision point.
    """
    import numpy as np

    from tilelab.engine import deal_game, play_game
    from tilelab.policy import view_from_state

    rng = np.random.default_rng(seed)
    views = []

    def actor(state, seat, legal):
        if len(legal) >= min_actions and (limit is None or len(views) < limit):
            views.append(view_from_state(state, seat, legal=legal))
        return legal[int(rng.integers(len(legal)))]

    play_game(deal_game(rng), [actor] * 4)
    return views if limit is None else views[:limit]
