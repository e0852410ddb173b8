"""Shared-deal self-play groups, trajectory tries, and preference mining.

A *group* is G complete games played from one forced deal with the same
softmax policy at every seat; only the per-game decision sampling
streams differ.  Because the deal is shared, two games evolve
identically until the first recorded decision where their sampled
actions part ways — so the decision sequences of a group assemble into
a prefix trie whose every root-to-leaf path is one complete game.

Node statistics (visits, focal-seat wins) turn the trie into an
empirical value estimate of each decision branch, and nodes whose
children's win rates differ yield contrastive preference pairs for the
pairwise loss.  The focal seat is seat 0 throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from .engine import (
    Action,
    GameState,
    TerminalCause,
    deal_game,
    play_game,
)
from .losses import PreferencePair
from .policy import (
    DecisionTrace,
    PolicyParams,
    SoftmaxPolicy,
    StateView,
    decide,
    view_from_state,
)

__all__ = [
    "FOCAL_SEAT",
    "TrajectoryStep",
    "Trajectory",
    "GameGroup",
    "TrieNode",
    "TrajectoryTrie",
    "play_group",
    "build_trie",
    "extract_preference_pairs",
    "replay_trajectory",
]

FOCAL_SEAT = 0


@dataclass(frozen=True)
class TrajectoryStep:
    """One recorded decision: the acting seat's view, the sampled
    trace, and the action taken.  Forced single-action moves are not
    recorded — they are identical across the group by construction."""

    view: StateView
    trace: Optional[DecisionTrace]
    action: Action


@dataclass(frozen=True)
class Trajectory:
    steps: tuple[TrajectoryStep, ...]
    winners: tuple[int, ...]
    terminal_cause: TerminalCause
    focal_won: bool

    @property
    def actions(self) -> tuple[Action, ...]:
        return tuple(s.action for s in self.steps)

    def to_record(self) -> dict:
        return {
            "actions": [str(a) for a in self.actions],
            "winners": list(self.winners),
            "terminal_cause": self.terminal_cause.value,
            "focal_won": self.focal_won,
        }


@dataclass(frozen=True)
class GameGroup:
    """G games from one forced deal; trajectories differ only by
    decisions."""

    group_size: int
    seed: Optional[int]
    initial_hands: tuple[str, str, str, str]
    trajectories: tuple[Trajectory, ...]

    def __post_init__(self):
        if self.group_size != len(self.trajectories):
            raise ValueError("group_size must match the trajectory count")
        if self.group_size < 2:
            raise ValueError("a group needs at least two games")

    def to_records(self) -> list[dict]:
        return [{"game": i, "seed": self.seed, **t.to_record()}
                for i, t in enumerate(self.trajectories)]


def play_group(policy: PolicyParams, G: int, seed: int, *,
               greedy: bool = False) -> GameGroup:
    """Play ``G`` complete self-play games from one forced deal.

    One seed stream is spawned for the deal and one per game for
    decision sampling, so groups are reproducible and games within a
    group are independent given the deal.  ``greedy`` plays the
    temperature-zero limit, which collapses the group onto one path.
    """
    if G < 2:
        raise ValueError("G must be at least 2")
    children = np.random.SeedSequence(seed).spawn(G + 1)
    initial = deal_game(np.random.default_rng(children[0]))
    actor_policy = SoftmaxPolicy(policy, greedy=greedy)
    trajectories = []
    for g in range(G):
        rng = np.random.default_rng(children[1 + g])
        steps: list[TrajectoryStep] = []

        def actor(state: GameState, seat: int, legal: tuple[Action, ...],
                  ) -> Action:
            view = view_from_state(state, seat, legal=legal)
            action, trace = decide(actor_policy, view, rng,
                                   timestamp=float(state.ply))
            steps.append(TrajectoryStep(view, trace, action))
            return action

        final, _events = play_game(initial, [actor] * 4)
        trajectories.append(Trajectory(
            steps=tuple(steps),
            winners=final.winners,
            terminal_cause=final.terminal_cause,
            focal_won=FOCAL_SEAT in final.winners,
        ))
    hands = tuple(str(h) for h in initial.hands)
    return GameGroup(group_size=G, seed=seed, initial_hands=hands,
                     trajectories=tuple(trajectories))


# ---------------------------------------------------------------------------
# Trajectory trie.


@dataclass
class TrieNode:
    """One decision prefix.  ``view`` is the shared pending-decision
    view of every game that reaches this node (None once games end
    here); ``action_in`` is the edge taken from the parent."""

    depth: int
    path: tuple[str, ...]
    action_in: Optional[Action] = None
    view: Optional[StateView] = None
    visits: int = 0
    focal_wins: int = 0
    games: list[int] = field(default_factory=list)
    children: dict[str, "TrieNode"] = field(default_factory=dict)

    @property
    def win_rate(self) -> float:
        return self.focal_wins / self.visits if self.visits else 0.0

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def to_record(self) -> dict:
        return {
            "depth": self.depth,
            "path": list(self.path),
            "visits": self.visits,
            "focal_wins": self.focal_wins,
            "win_rate": self.win_rate,
            "children": len(self.children),
        }


@dataclass
class TrajectoryTrie:
    root: TrieNode
    group: GameGroup

    def nodes(self) -> Iterator[TrieNode]:
        """Depth-first preorder; children in insertion order."""
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(list(node.children.values())))

    def node_at(self, path: tuple[str, ...]) -> TrieNode:
        node = self.root
        for key in path:
            node = node.children[key]
        return node

    def leaves(self) -> list[TrieNode]:
        return [n for n in self.nodes() if n.is_leaf]

    def to_records(self) -> list[dict]:
        return [n.to_record() for n in self.nodes()]


def build_trie(group: GameGroup) -> TrajectoryTrie:
    """Fold the group's decision sequences into a prefix trie.

    Raises when two games disagree about the shared view at a common
    prefix — that breaks the one-deal invariant the mining relies on.
    """
    root = TrieNode(depth=0, path=())
    for gi, traj in enumerate(group.trajectories):
        node = root
        node.visits += 1
        node.focal_wins += int(traj.focal_won)
        node.games.append(gi)
        for step in traj.steps:
            if node.view is None:
                node.view = step.view
            elif node.view != step.view:
                raise ValueError(
                    "trajectories do not share their deal: divergent views "
                    f"at depth {node.depth}")
            key = str(step.action)
            child = node.children.get(key)
            if child is None:
                child = TrieNode(depth=node.depth + 1,
                                 path=node.path + (key,),
                                 action_in=step.action)
                node.children[key] = child
            child.visits += 1
            child.focal_wins += int(traj.focal_won)
            child.games.append(gi)
            node = child
    return TrajectoryTrie(root=root, group=group)


# ---------------------------------------------------------------------------
# Preference mining.


def _trace_for(group: GameGroup, parent: TrieNode, child: TrieNode,
               rng: np.random.Generator) -> Optional[DecisionTrace]:
    """Sample one recorded trace of the decision ``parent -> child``."""
    game = child.games[int(rng.integers(len(child.games)))]
    step = group.trajectories[game].steps[parent.depth]
    assert str(step.action) == str(child.action_in)
    return step.trace


def extract_preference_pairs(trie: TrajectoryTrie,
                             rng: np.random.Generator,
                             ) -> list[PreferencePair]:
    """Mine contrastive pairs from every node whose children's win
    rates differ.

    At a qualifying node one trace is sampled per child, then one pair
    is emitted per ordered (higher, lower) child combination with a
    strictly positive win-rate gap.  Ties yield nothing: ranking needs
    a strict ordering.
    """
    pairs: list[PreferencePair] = []
    for node in trie.nodes():
        kids = list(node.children.values())
        if len(kids) < 2:
            continue
        rates = [k.win_rate for k in kids]
        if max(rates) - min(rates) <= 0:
            continue
        sampled = {k.path: _trace_for(trie.group, node, k, rng)
                   for k in kids}
        for hi in kids:
            for lo in kids:
                if hi.win_rate <= lo.win_rate:
                    continue
                pairs.append(PreferencePair(
                    view=node.view,
                    preferred=(sampled[hi.path], hi.action_in),
                    dispreferred=(sampled[lo.path], lo.action_in),
                    win_rate_gap=hi.win_rate - lo.win_rate,
                ))
    return pairs


# ---------------------------------------------------------------------------
# Replay.


def replay_trajectory(group: GameGroup, game_index: int) -> GameState:
    """Re-run one game by forcing its recorded decisions through the
    engine from the group's deal; returns the terminal state.

    The replayed game must consume exactly the recorded decisions and
    reach the recorded outcome — the trie's paths are sufficient to
    reconstruct play because undecided moves are forced.
    """
    if group.seed is None:
        raise ValueError("hand-built groups carry no deal seed to replay")
    children = np.random.SeedSequence(group.seed).spawn(group.group_size + 1)
    initial = deal_game(np.random.default_rng(children[0]))
    traj = group.trajectories[game_index]
    pending = list(traj.steps)

    def actor(state: GameState, seat: int, legal: tuple[Action, ...],
              ) -> Action:
        if not pending:
            raise ValueError("replay ran past the recorded decisions")
        step = pending.pop(0)
        if step.action not in legal:
            raise ValueError(f"recorded action {step.action} not legal "
                             "during replay")
        return step.action

    final, _ = play_game(initial, [actor] * 4)
    if pending:
        raise ValueError("replay ended with unused recorded decisions")
    if final.winners != traj.winners or final.terminal_cause is not \
            traj.terminal_cause:
        raise ValueError("replayed outcome disagrees with the record")
    return final
