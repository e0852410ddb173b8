"""Rules-math tests: win decomposition and replacement distance against the
independent oracles."""
from __future__ import annotations

import numpy as np
import pytest

from tilelab.hands import (
    Hand,
    Meld,
    MeldKind,
    distance_to_win,
    is_winning,
    suggest_missing_suit,
)
from tilelab.tiles import NUM_KINDS, Suit, counts_from_tiles, parse_tiles, tile

from .oracles import (
    oracle_distance_bfs,
    oracle_distance_templates,
    oracle_is_winning,
)


def hand_of(text: str, missing: Suit | None = None, melds: int = 0) -> Hand:
    """Build a hand from text; ``melds`` adds that many dummy pungs of 9D
    (9B if Dots is the missing suit)."""
    meld_tile = tile(Suit.BAMBOO, 9) if missing is Suit.DOTS else tile(Suit.DOTS, 9)
    return Hand(
        concealed=parse_tiles(text),
        melds=tuple(Meld(MeldKind.PUNG, meld_tile) for _ in range(melds)),
        missing_suit=missing,
    )


class TestIsWinning:
    def test_plain_win(self):
        h = hand_of("1C 2C 3C 4C 5C 6C 7C 8C 9C 1B 1B 1B 5B 5B",
                    missing=Suit.DOTS)
        assert h.is_winning()

    def test_pair_missing(self):
        h = hand_of("1C 2C 3C 4C 5C 6C 7C 8C 9C 1B 1B 1B 5B 6B",
                    missing=Suit.DOTS)
        assert not h.is_winning()

    def test_missing_suit_tile_blocks_win(self):
        h = hand_of("1C 2C 3C 4C 5C 6C 7C 8C 9C 1B 1B 1B 5D 5D",
                    missing=Suit.DOTS)
        assert not h.is_winning()

    def test_missing_suit_meld_blocks_win(self):
        base = "1C 2C 3C 4C 5C 6C 7C 8C 9C 5B 5B"
        ok = Hand(parse_tiles(base),
                  melds=(Meld(MeldKind.PUNG, tile(Suit.BAMBOO, 9)),),
                  missing_suit=Suit.DOTS)
        assert ok.is_winning()
        bad = Hand(parse_tiles(base),
                   melds=(Meld(MeldKind.PUNG, tile(Suit.DOTS, 9)),),
                   missing_suit=Suit.DOTS)
        assert not bad.is_winning()

    def test_win_with_melds(self):
        h = hand_of("2C 2C 2C 7B 8B 9B 3C 3C", missing=Suit.DOTS, melds=2)
        assert h.is_winning()

    def test_kong_counts_as_one_set(self):
        h = Hand(parse_tiles("1C 2C 3C 5B 5B"),
                 melds=(Meld(MeldKind.KONG_CONCEALED, tile(Suit.CHARACTERS, 9)),
                        Meld(MeldKind.PUNG, tile(Suit.BAMBOO, 1)),
                        Meld(MeldKind.KONG_EXPOSED, tile(Suit.BAMBOO, 2))),
                 missing_suit=Suit.DOTS)
        assert h.equivalent_size == 14
        assert h.is_winning()

    def test_wins_with(self):
        h = hand_of("1C 2C 3C 4C 5C 6C 7C 8C 9C 1B 1B 1B 5B",
                    missing=Suit.DOTS)
        assert h.wins_with(tile(Suit.BAMBOO, 5))
        assert not h.wins_with(tile(Suit.BAMBOO, 4))

    def test_seven_pairs_is_not_a_win(self):
        # This rule set scores only 4 sets + 1 pair.
        h = hand_of("1C 1C 3C 3C 5C 5C 7C 7C 9C 9C 2B 2B 4B 4B",
                    missing=Suit.DOTS)
        assert not h.is_winning()

    @pytest.mark.parametrize("seed", range(4))
    def test_fuzz_against_oracle(self, seed):
        rng = np.random.default_rng(1000 + seed)
        for _ in range(800):
            n_melds = int(rng.integers(0, 3))
            size = 14 - 3 * n_melds
            counts = _random_counts(rng, size)
            missing = Suit(int(rng.integers(0, 3)))
            got = is_winning(counts, n_melds, missing)
            want = oracle_is_winning(counts, n_melds, missing)
            assert got == want, f"{counts} melds={n_melds} miss={missing}"

    def test_fuzz_near_wins(self):
        # Winning hands perturbed by 0-2 swaps: exercises the boundary.
        rng = np.random.default_rng(77)
        for _ in range(400):
            counts, n_melds, missing = _random_near_win(rng)
            got = is_winning(counts, n_melds, missing)
            want = oracle_is_winning(counts, n_melds, missing)
            assert got == want, f"{counts} melds={n_melds} miss={missing}"


class TestDistance:
    def test_winning_hand_distance_zero(self):
        h = hand_of("1C 2C 3C 4C 5C 6C 7C 8C 9C 1B 1B 1B 5B 5B",
                    missing=Suit.DOTS)
        assert h.distance_to_win() == 0

    def test_one_swapped_tile_distance_one(self):
        h = hand_of("1C 2C 3C 4C 5C 6C 7C 8C 9C 1B 1B 1B 5B 9B",
                    missing=Suit.DOTS)
        assert h.distance_to_win() == 1
        assert oracle_distance_bfs(h.counts(), 0, Suit.DOTS) == 1

    def test_tenpai_13_tiles(self):
        h = hand_of("1C 2C 3C 4C 5C 6C 7C 8C 9C 1B 1B 1B 5B",
                    missing=Suit.DOTS)
        assert h.distance_to_win() == 0

    def test_scattered_13_matches_oracle(self):
        h = hand_of("1C 4C 7C 2C 9C 1B 4B 7B 2B 9B 5C 5B 3C",
                    missing=Suit.DOTS)
        assert h.distance_to_win() == oracle_distance_templates(
            h.counts(), 0, Suit.DOTS)

    def test_missing_suit_tiles_are_forced_replacements(self):
        base = hand_of("1C 2C 3C 4C 5C 6C 7C 8C 9C 1B 1B 1B 5B 5B",
                       missing=Suit.DOTS)
        assert base.distance_to_win() == 0
        worse = hand_of("1C 2C 3C 4C 5C 6C 7C 8C 9C 1B 1B 1B 5D 6D",
                        missing=Suit.DOTS)
        assert worse.distance_to_win() == 2

    def test_four_copies_cannot_pair_with_triple(self):
        # Three melds; concealed 1C 1C 1C 1C 5B with Bamboo missing: the
        # spare 1C cannot grow into the pair (no fifth copy exists), so two
        # replacements are needed, not one.
        h = Hand(parse_tiles("1C 1C 1C 1C 5B"),
                 melds=tuple(Meld(MeldKind.PUNG, tile(Suit.DOTS, r))
                             for r in (7, 8, 9)),
                 missing_suit=Suit.BAMBOO)
        assert h.distance_to_win() == oracle_distance_templates(
            h.counts(), 3, Suit.BAMBOO) == 2

    def test_split_four_as_two_pairs_is_unrealizable(self):
        h = Hand(parse_tiles("1C 1C 1C 1C 9D"),
                 melds=tuple(Meld(MeldKind.PUNG, tile(Suit.DOTS, r))
                             for r in (6, 7, 8)),
                 missing_suit=Suit.BAMBOO)
        assert h.distance_to_win() == oracle_distance_templates(
            h.counts(), 3, Suit.BAMBOO) == 1

    def test_distance_bounds(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            counts = _random_counts(rng, 14)
            missing = Suit(int(rng.integers(0, 3)))
            d = distance_to_win(counts, 0, missing)
            assert 0 <= d <= 14

    @pytest.mark.parametrize("seed", range(3))
    def test_fuzz_against_template_oracle(self, seed):
        rng = np.random.default_rng(2000 + seed)
        for _ in range(120):
            n_melds = int(rng.integers(0, 4))
            size = 14 - 3 * n_melds - int(rng.integers(0, 2))
            counts = _random_counts(rng, size)
            missing = Suit(int(rng.integers(0, 3)))
            got = distance_to_win(counts, n_melds, missing)
            want = oracle_distance_templates(counts, n_melds, missing)
            assert got == want, f"{counts} melds={n_melds} miss={missing}"

    def test_fuzz_near_wins_against_template_oracle(self):
        rng = np.random.default_rng(31)
        for _ in range(250):
            counts, n_melds, missing = _random_near_win(rng)
            got = distance_to_win(counts, n_melds, missing)
            want = oracle_distance_templates(counts, n_melds, missing)
            assert got == want, f"{counts} melds={n_melds} miss={missing}"

    def test_bfs_agreement_on_shallow_hands(self):
        rng = np.random.default_rng(9)
        checked = 0
        while checked < 12:
            counts, n_melds, missing = _random_near_win(rng, max_swaps=2)
            if sum(counts) + 3 * n_melds != 14:
                continue
            d_bfs = oracle_distance_bfs(counts, n_melds, missing, max_depth=2)
            d = distance_to_win(counts, n_melds, missing)
            if d_bfs is None:
                assert d > 2
            else:
                assert d == d_bfs
            checked += 1

    def test_draw_never_increases_distance_much(self):
        # Drawing a tile then discarding it restores the hand; the 14-tile
        # distance is at most the 13-tile distance + 1 and at least that
        # distance.
        rng = np.random.default_rng(12)
        for _ in range(60):
            counts = _random_counts(rng, 13)
            missing = Suit(int(rng.integers(0, 3)))
            d13 = distance_to_win(counts, 0, missing)
            for k in range(NUM_KINDS):
                if counts[k] >= 4:
                    continue
                bumped = counts[:k] + (counts[k] + 1,) + counts[k + 1:]
                d14 = distance_to_win(bumped, 0, missing)
                assert d13 <= d14 <= d13 + 1


class TestSuggestMissingSuit:
    def test_picks_rarest(self):
        counts = counts_from_tiles(parse_tiles(
            "1C 2C 3C 4C 5C 6C 1B 2B 3B 4B 1D 2D 3D"))
        assert suggest_missing_suit(counts) is Suit.DOTS

    def test_tie_breaks_by_suit_order(self):
        counts = counts_from_tiles(parse_tiles(
            "1C 2C 3C 4C 5C 1B 2B 3B 4B 1D 2D 3D 4D"))
        assert suggest_missing_suit(counts) is Suit.BAMBOO


# ---------------------------------------------------------------------------
# Random hand generators.


def _random_counts(rng: np.random.Generator, size: int) -> tuple[int, ...]:
    counts = [0] * NUM_KINDS
    placed = 0
    while placed < size:
        k = int(rng.integers(0, NUM_KINDS))
        if counts[k] < 4:
            counts[k] += 1
            placed += 1
    return tuple(counts)


def _random_near_win(rng: np.random.Generator, max_swaps: int = 3):
    """A winning-shape hand perturbed by a few random replacements."""
    n_melds = int(rng.integers(0, 3))
    missing = Suit(int(rng.integers(0, 3)))
    live = [s for s in Suit if s != missing]
    counts = [0] * NUM_KINDS

    def try_add(kind: int, n: int) -> bool:
        if counts[kind] + n > 4:
            return False
        counts[kind] += n
        return True

    made = 0
    while made < 4 - n_melds:
        suit = live[int(rng.integers(0, len(live)))]
        base = suit * 9
        if rng.random() < 0.5:
            if try_add(base + int(rng.integers(0, 9)), 3):
                made += 1
        else:
            r = int(rng.integers(0, 7))
            snapshot = counts[:]
            if (try_add(base + r, 1) and try_add(base + r + 1, 1)
                    and try_add(base + r + 2, 1)):
                made += 1
            else:
                counts[:] = snapshot
    while True:
        suit = live[int(rng.integers(0, len(live)))]
        if try_add(suit * 9 + int(rng.integers(0, 9)), 2):
            break
    for _ in range(int(rng.integers(0, max_swaps + 1))):
        held = [k for k in range(NUM_KINDS) if counts[k] > 0]
        k = held[int(rng.integers(0, len(held)))]
        counts[k] -= 1
        while True:
            j = int(rng.integers(0, NUM_KINDS))
            if counts[j] < 4:
                counts[j] += 1
                break
    if int(rng.integers(0, 2)):  # sometimes drop to 13-equivalent
        held = [k for k in range(NUM_KINDS) if counts[k] > 0]
        counts[held[int(rng.integers(0, len(held)))]] -= 1
    return tuple(counts), n_melds, missing
