"""Hand representation and the rules math for missing-suit play.

Two computations live here and both run on 27-slot count vectors:

* ``is_winning`` -- exact decomposition of a 14-tile-equivalent hand into
  (4 - melds) sets plus one pair, with zero tiles of the declared missing
  suit anywhere in the hand.

* ``distance_to_win`` -- minimum number of tile replacements needed to reach
  a winning hand.  Computed structurally: count the largest sub-multiset of
  the hand that can be kept inside some winning shape, then the distance is
  the number of slots left to fill.  Singles of a live suit always count as
  seeds for future sets (any rank extends to a run or a triple with copies
  from the remaining pool), so the fill term is purely arithmetic.

Per-suit structure tables are memoized: a suit's 9-slot count vector maps to
the achievable (complete sets, partial sets, eye pair) triples, and full
hands just combine three small tables.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from typing import Iterable, Optional

from .tiles import (
    NUM_KINDS,
    NUM_RANKS,
    Suit,
    Tile,
    counts_from_tiles,
    format_tiles,
)

SETS_PER_HAND = 4  # a full hand is 4 sets + 1 pair


class MeldKind(Enum):
    PUNG = "pung"
    KONG_EXPOSED = "kong_exposed"
    KONG_CONCEALED = "kong_concealed"
    KONG_UPGRADED = "kong_upgraded"

    @property
    def is_kong(self) -> bool:
        return self is not MeldKind.PUNG


@dataclass(frozen=True, slots=True)
class Meld:
    """A melded set.  Kongs hold four copies but count as one set of three
    toward hand size; the extra tile is compensated by a replacement draw."""

    kind: MeldKind
    tile: Tile
    claimed_from: Optional[int] = None  # seat the discard came from, if any

    def tiles(self) -> tuple[Tile, ...]:
        n = 4 if self.kind.is_kong else 3
        return (self.tile,) * n


@dataclass(frozen=True, slots=True)
class Hand:
    """One player's holdings.  ``concealed`` is kept sorted."""

    concealed: tuple[Tile, ...] = ()
    melds: tuple[Meld, ...] = ()
    missing_suit: Optional[Suit] = None

    @staticmethod
    def deal(tiles: Iterable[Tile]) -> "Hand":
        return Hand(concealed=tuple(sorted(tiles)))

    @property
    def equivalent_size(self) -> int:
        """Concealed tiles plus three per meld (13 between turns, 14 when a
        discard is owed)."""
        return len(self.concealed) + 3 * len(self.melds)

    def counts(self) -> tuple[int, ...]:
        return counts_from_tiles(self.concealed)

    def count_of(self, t: Tile) -> int:
        return self.concealed.count(t)

    def with_missing_suit(self, suit: Suit) -> "Hand":
        return replace(self, missing_suit=suit)

    def with_drawn(self, t: Tile) -> "Hand":
        return replace(self, concealed=tuple(sorted(self.concealed + (t,))))

    def without(self, tiles: Iterable[Tile]) -> "Hand":
        remaining = list(self.concealed)
        for t in tiles:
            remaining.remove(t)  # raises ValueError if absent
        return replace(self, concealed=tuple(remaining))

    def with_meld(self, meld: Meld, consumed: Iterable[Tile]) -> "Hand":
        stripped = self.without(consumed)
        return replace(stripped, melds=self.melds + (meld,))

    def upgrade_pung(self, t: Tile) -> "Hand":
        """Turn an existing pung of ``t`` into a kong using a concealed copy."""
        out: list[Meld] = []
        found = False
        for m in self.melds:
            if not found and m.kind is MeldKind.PUNG and m.tile == t:
                out.append(replace(m, kind=MeldKind.KONG_UPGRADED))
                found = True
            else:
                out.append(m)
        if not found:
            raise ValueError(f"no pung of {t} to upgrade")
        stripped = self.without((t,))
        return replace(stripped, melds=tuple(out))

    def missing_count(self) -> int:
        if self.missing_suit is None:
            return 0
        return sum(1 for t in self.concealed if t.suit == self.missing_suit)

    def is_winning(self) -> bool:
        return is_winning(self.counts(), len(self.melds), self.missing_suit,
                          meld_suits=tuple(m.tile.suit for m in self.melds))

    def wins_with(self, t: Tile) -> bool:
        """Would adding ``t`` to the concealed tiles complete the hand?"""
        counts = list(self.counts())
        counts[t.index] += 1
        return is_winning(tuple(counts), len(self.melds), self.missing_suit,
                          meld_suits=tuple(m.tile.suit for m in self.melds))

    def distance_to_win(self) -> int:
        return distance_to_win(self.counts(), len(self.melds),
                               self.missing_suit)

    def __str__(self) -> str:
        melds = " ".join(f"[{format_tiles(m.tiles())}]" for m in self.melds)
        miss = f" miss={self.missing_suit.label}" if self.missing_suit else ""
        return f"{format_tiles(self.concealed)} {melds}{miss}".strip()


# ---------------------------------------------------------------------------
# Per-suit decomposition tables.


@lru_cache(maxsize=1 << 16)
def _suit_split_options(counts: tuple[int, ...]) -> frozenset[tuple[int, int]]:
    """All (sets, pairs) decompositions that consume ``counts`` exactly.

    Sets are triples or runs; at most one pair is tracked since a winning
    hand needs exactly one.
    """
    results: set[tuple[int, int]] = set()
    work = list(counts)

    def recurse(start: int, sets: int, pairs: int) -> None:
        i = start
        while i < NUM_RANKS and work[i] == 0:
            i += 1
        if i == NUM_RANKS:
            results.add((sets, pairs))
            return
        if work[i] >= 3:
            work[i] -= 3
            recurse(i, sets + 1, pairs)
            work[i] += 3
        if i + 2 < NUM_RANKS and work[i + 1] >= 1 and work[i + 2] >= 1:
            work[i] -= 1
            work[i + 1] -= 1
            work[i + 2] -= 1
            recurse(i, sets + 1, pairs)
            work[i] += 1
            work[i + 1] += 1
            work[i + 2] += 1
        if work[i] >= 2 and pairs == 0:
            work[i] -= 2
            recurse(i, sets, pairs + 1)
            work[i] += 2

    recurse(0, 0, 0)
    return frozenset(results)


# Structure counts (complete, partial, eye, reserve) are packed into one
# int: ((c*5 + p)*2 + j)*2 + r, and combined through a precomputed capped
# addition table.  Caps lose nothing: a hand never needs more than four
# complete or partial sets, one eye, one reserve.


def _pack(c: int, p: int, j: int, r: int) -> int:
    return ((c * 5 + p) * 2 + j) * 2 + r


def _unpack(code: int) -> tuple[int, int, int, int]:
    r = code & 1
    j = (code >> 1) & 1
    p = (code >> 2) % 5
    c = (code >> 2) // 5
    return c, p, j, r


_PACKED_ADD: list[list[int]] = [
    [
        _pack(min(ca + cb, 4), min(pa + pb, 4), min(ja + jb, 1),
              min(ra + rb, 1))
        for cb in range(5) for pb in range(5) for jb in range(2)
        for rb in range(2)
    ]
    for ca in range(5) for pa in range(5) for ja in range(2)
    for ra in range(2)
]
# _PACKED_ADD is indexed [a][b] because _pack enumerates in the same
# (c, p, j, r) lexicographic order as the comprehensions above.


@lru_cache(maxsize=1 << 16)
def _suit_keep_options(counts: tuple[int, ...]) -> tuple[int, ...]:
    """Maximal achievable (complete, partial, eye, reserve) structure counts
    within one suit, packed.

    ``complete``: full sets (triple or run).  ``partial``: two tiles one
    step from a set (same-kind pair, adjacent, or gapped).  ``eye``: a pair
    held back as the hand's pair.  ``reserve``: a lone tile held back to
    grow into the hand's pair; its kind must not already feed a same-kind
    triple, partial pair, or eye, since the finished hand could not hold
    enough copies.  The same four-copy bound also rules out splitting one
    kind into two pair-like structures.  Tile usage is disjoint; unused
    copies become leftover singles, and any leftover can seed a future set
    because every rank extends to some run.  Feasibility is downward
    closed (dropping a structure frees its tiles), so only the Pareto
    maxima are returned.
    """
    raw: set[tuple[int, int, int, int]] = set()
    work = list(counts)

    def recurse(i: int, c: int, p: int, j: int, r: int,
                heavy_here: bool, paired_here: bool,
                reserved_here: bool) -> None:
        if i == NUM_RANKS:
            raw.add((c, p, j, r))
            return
        if work[i] == 0:
            recurse(i + 1, c, p, j, r, False, False, False)
            return
        # Leave every remaining copy of this rank as leftover singles.
        # Unit skips are redundant: any kept structure can be taken first.
        saved = work[i]
        work[i] = 0
        recurse(i + 1, c, p, j, r, False, False, False)
        work[i] = saved
        if r == 0 and not heavy_here:
            work[i] -= 1
            recurse(i, c, p, j, 1, heavy_here, paired_here, True)
            work[i] += 1
        if c < SETS_PER_HAND:
            if work[i] >= 3 and not reserved_here:
                work[i] -= 3
                recurse(i, c + 1, p, j, r, True, paired_here, reserved_here)
                work[i] += 3
            if i + 2 < NUM_RANKS and work[i + 1] >= 1 and work[i + 2] >= 1:
                work[i] -= 1
                work[i + 1] -= 1
                work[i + 2] -= 1
                recurse(i, c + 1, p, j, r, heavy_here, paired_here,
                        reserved_here)
                work[i] += 1
                work[i + 1] += 1
                work[i + 2] += 1
        if work[i] >= 2 and not paired_here and not reserved_here:
            if p < SETS_PER_HAND:
                work[i] -= 2
                recurse(i, c, p + 1, j, r, True, True, reserved_here)
                work[i] += 2
            if j == 0:
                work[i] -= 2
                recurse(i, c, p, 1, r, True, True, reserved_here)
                work[i] += 2
        if p < SETS_PER_HAND and i + 1 < NUM_RANKS and work[i + 1] >= 1:
            work[i] -= 1
            work[i + 1] -= 1
            recurse(i, c, p + 1, j, r, heavy_here, paired_here, reserved_here)
            work[i] += 1
            work[i + 1] += 1
        if p < SETS_PER_HAND and i + 2 < NUM_RANKS and work[i + 2] >= 1:
            work[i] -= 1
            work[i + 2] -= 1
            recurse(i, c, p + 1, j, r, heavy_here, paired_here, reserved_here)
            work[i] += 1
            work[i + 2] += 1

    recurse(0, 0, 0, 0, 0, False, False, False)
    maxima = [
        a for a in raw
        if not any(b != a and all(x >= y for x, y in zip(b, a)) for b in raw)
    ]
    return tuple(sorted(_pack(*m) for m in maxima))


def _suit_slice(counts: tuple[int, ...], suit: Suit) -> tuple[int, ...]:
    base = suit * NUM_RANKS
    return counts[base:base + NUM_RANKS]


# ---------------------------------------------------------------------------
# Whole-hand queries.


@lru_cache(maxsize=1 << 18)
def is_winning(counts: tuple[int, ...], n_melds: int,
               missing_suit: Optional[Suit],
               meld_suits: tuple[Suit, ...] = ()) -> bool:
    """Exact win test on a count vector plus meld summary.

    Requires a 14-tile equivalent hand decomposing into ``4 - n_melds``
    concealed sets and one pair, with no missing-suit tile concealed or
    melded.
    """
    if len(counts) != NUM_KINDS:
        raise ValueError("expected a 27-slot count vector")
    total = sum(counts)
    if total + 3 * n_melds != 3 * SETS_PER_HAND + 2:
        return False
    if missing_suit is not None:
        if any(_suit_slice(counts, missing_suit)):
            return False
        if any(s == missing_suit for s in meld_suits):
            return False
    need_sets = SETS_PER_HAND - n_melds
    # Combine per-suit (sets, pairs) options; each suit is consumed exactly.
    reachable: set[tuple[int, int]] = {(0, 0)}
    for suit in Suit:
        options = _suit_split_options(_suit_slice(counts, suit))
        if not options:
            return False
        reachable = {
            (s0 + s1, q0 + q1)
            for (s0, q0) in reachable
            for (s1, q1) in options
            if q0 + q1 <= 1 and s0 + s1 <= need_sets
        }
        if not reachable:
            return False
    return (need_sets, 1) in reachable


@lru_cache(maxsize=1 << 18)
def distance_to_win(counts: tuple[int, ...], n_melds: int,
                    missing_suit: Optional[Suit]) -> int:
    """Minimum tile replacements to reach a winning hand.

    A hand needs ``3*(4 - n_melds) + 2`` concealed tiles in winning shape.
    We find the largest keepable sub-multiset: complete sets, partial sets
    (worth two), an eye pair, then leftover live-suit singles fill remaining
    set slots (one each) and finally the pair seat.  A 13-tile-equivalent
    hand gets one free slot for its incoming draw.
    """
    if len(counts) != NUM_KINDS:
        raise ValueError("expected a 27-slot count vector")
    total = sum(counts)
    equiv = total + 3 * n_melds
    if equiv not in (13, 14):
        raise ValueError(f"hand has invalid equivalent size {equiv}")
    free = 1 if equiv == 13 else 0
    need_sets = SETS_PER_HAND - n_melds
    target = 3 * need_sets + 2

    live = [s for s in Suit if s != missing_suit]
    n_live = sum(sum(_suit_slice(counts, s)) for s in live)

    # Minkowski sum of the per-suit structure maxima (packed).
    add = _PACKED_ADD
    states: set[int] = {0}
    for suit in live:
        options = _suit_keep_options(_suit_slice(counts, suit))
        states = {add[a][b] for a in states for b in options}

    # kept = struct + set seeds = min(2c + p + pairval + s, n_live) once the
    # slot caps c' = min(c, s), p' = min(p, s - c') are applied; the formula
    # is monotone, so only Pareto-maximal states matter and reductions never
    # need materializing.  The eye is worth 2 kept tiles, a reserve 1.
    kept_best = 0
    for code in states:
        c, p, j, r = _unpack(code)
        cc = c if c < need_sets else need_sets
        pp = min(p, need_sets - cc)
        pairval = 2 if j else r
        kept = 2 * cc + pp + pairval + need_sets
        if kept > kept_best:
            kept_best = kept
    if kept_best > n_live:
        kept_best = n_live
    return max(0, target - kept_best - free)


def suggest_missing_suit(counts: tuple[int, ...]) -> Suit:
    """The suit with the fewest tiles (ties broken by suit order)."""
    per_suit = [(sum(_suit_slice(counts, s)), s) for s in Suit]
    return min(per_suit)[1]
