"""Tile primitives for a three-suit (no honors) Mahjong set.

The set has 108 tiles: Characters, Bamboo, and Dots, ranks 1-9, four copies
each.  Tiles are small immutable values; most of the package manipulates them
either as sorted tuples (hand storage) or as 27-slot count vectors (rules
math).
"""
from __future__ import annotations

from enum import IntEnum
from typing import Iterable, NamedTuple

NUM_SUITS = 3
NUM_RANKS = 9
NUM_KINDS = NUM_SUITS * NUM_RANKS
COPIES_PER_KIND = 4
WALL_SIZE = NUM_KINDS * COPIES_PER_KIND  # 108


class Suit(IntEnum):
    CHARACTERS = 0
    BAMBOO = 1
    DOTS = 2

    @property
    def label(self) -> str:
        return _SUIT_LABELS[self.value]

    @classmethod
    def from_label(cls, label: str) -> "Suit":
        try:
            return cls(_SUIT_LABELS.index(label.upper()))
        except ValueError:
            raise ValueError(f"unknown suit label: {label!r}") from None


_SUIT_LABELS = ("C", "B", "D")


class Tile(NamedTuple):
    """One tile kind.  Physical copies of a kind are indistinguishable."""

    suit: Suit
    rank: int  # 1..9

    @property
    def index(self) -> int:
        """Dense index in 0..26 (suit-major)."""
        return self.suit * NUM_RANKS + (self.rank - 1)

    def __str__(self) -> str:
        return f"{self.rank}{self.suit.label}"


def tile(suit: Suit | int, rank: int) -> Tile:
    if not 1 <= rank <= NUM_RANKS:
        raise ValueError(f"rank out of range: {rank}")
    return Tile(Suit(suit), rank)


def tile_from_index(index: int) -> Tile:
    if not 0 <= index < NUM_KINDS:
        raise ValueError(f"tile index out of range: {index}")
    return Tile(Suit(index // NUM_RANKS), index % NUM_RANKS + 1)


def parse_tile(text: str) -> Tile:
    """Parse the compact form, e.g. ``"5C"`` -> 5 of Characters."""
    text = text.strip()
    if len(text) != 2 or not text[0].isdigit():
        raise ValueError(f"cannot parse tile: {text!r}")
    return tile(Suit.from_label(text[1]), int(text[0]))


ALL_TILES: tuple[Tile, ...] = tuple(tile_from_index(i) for i in range(NUM_KINDS))

# The full wall as a sorted multiset of 108 tiles.
FULL_WALL: tuple[Tile, ...] = tuple(
    t for t in ALL_TILES for _ in range(COPIES_PER_KIND)
)


def counts_from_tiles(tiles: Iterable[Tile]) -> tuple[int, ...]:
    """27-slot count vector for a tile multiset."""
    counts = [0] * NUM_KINDS
    for t in tiles:
        counts[t.index] += 1
    return tuple(counts)


def tiles_from_counts(counts: Iterable[int]) -> tuple[Tile, ...]:
    """Inverse of :func:`counts_from_tiles`; returns a sorted tuple."""
    out: list[Tile] = []
    for index, n in enumerate(counts):
        if n < 0:
            raise ValueError("negative tile count")
        out.extend([tile_from_index(index)] * n)
    return tuple(out)


def format_tiles(tiles: Iterable[Tile]) -> str:
    return " ".join(str(t) for t in sorted(tiles))


def parse_tiles(text: str) -> tuple[Tile, ...]:
    """Parse a whitespace-separated tile list, e.g. ``"1C 1C 2B"``."""
    return tuple(sorted(parse_tile(tok) for tok in text.split()))
