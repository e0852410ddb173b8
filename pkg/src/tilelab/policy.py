"""Player policies: a rule-based teacher, a trainable linear-softmax policy,
and a uniform-random baseline, all exposing the same distribution interface.

A policy sees a :class:`StateView` -- its own hand, public discards and
melds, the missing suits as believed, and the claim context -- never any
opponent's concealed tiles.  ``action_distribution`` maps a view to a
normalized distribution over exactly the legal actions; ``decide`` samples
from it and records a structured :class:`DecisionTrace`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

import numpy as np
from scipy.special import logsumexp

from .engine import (
    Action,
    ActionKind,
    GameState,
    Phase,
    legal_actions,
)
from .hands import Hand, Meld, MeldKind, distance_to_win
from .tiles import NUM_RANKS, Suit, Tile, counts_from_tiles

WIN_SCORE = 10.0
DECLARE_SCORE = 8.0
MELD_GOOD_SCORE = 2.0
MELD_BAD_SCORE = -4.0
MISSING_DISCARD_BONUS = 3.0
COPIES_WEIGHT = 0.25
DISTANCE_WEIGHT = 0.5
TEACHER_TEMPERATURE = 0.5


class PolicyError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class StateView:
    """One seat's observation.  ``believed_missing`` may disagree with the
    truth when an execution layer supplies corrupted beliefs."""

    seat: int
    hand: Hand
    discards: tuple[tuple[Tile, ...], ...]
    melds: tuple[tuple[Meld, ...], ...]
    believed_missing: tuple[Optional[Suit], ...]
    wall_count: int
    phase: Phase
    last_discard: Optional[Tile]
    last_discarder: Optional[int]
    legal: tuple[Action, ...]

    def summary(self) -> str:
        miss = "".join(m.label if m else "-" for m in self.believed_missing)
        return (f"seat={self.seat} phase={self.phase.value} "
                f"hand=[{self.hand}] wall={self.wall_count} miss={miss} "
                f"pending={self.last_discard}")


def view_from_state(state: GameState, seat: int,
                    legal: Optional[tuple[Action, ...]] = None,
                    hand: Optional[Hand] = None,
                    believed_missing: Optional[tuple[Optional[Suit], ...]] = None,
                    ) -> StateView:
    """The ground-truth view of ``seat``.  ``hand`` / ``believed_missing``
    override the truth when a belief layer provides its own copies."""
    own = hand if hand is not None else state.hands[seat]
    return StateView(
        seat=seat,
        hand=own,
        discards=state.discards,
        melds=tuple(h.melds for h in state.hands),
        believed_missing=(believed_missing if believed_missing is not None
                          else tuple(h.missing_suit for h in state.hands)),
        wall_count=state.wall.remaining,
        phase=state.phase,
        last_discard=state.last_discard,
        last_discarder=state.last_discarder,
        legal=legal if legal is not None else legal_actions(state, seat),
    )


@dataclass(frozen=True)
class ActionDistribution:
    actions: tuple[Action, ...]
    probs: tuple[float, ...]
    scores: tuple[float, ...]
    log_probs: tuple[float, ...]

    def __post_init__(self):
        assert abs(sum(self.probs) - 1.0) < 1e-9
        assert (len(self.actions) == len(self.probs) == len(self.scores)
                == len(self.log_probs))

    def _index(self, action: Action) -> int:
        try:
            return self.actions.index(action)
        except ValueError:
            raise PolicyError(f"action {action} outside support") from None

    def prob(self, action: Action) -> float:
        return self.probs[self._index(action)]

    def log_prob(self, action: Action) -> float:
        return self.log_probs[self._index(action)]

    def sample(self, rng: np.random.Generator) -> Action:
        i = int(rng.choice(len(self.actions), p=np.asarray(self.probs)))
        return self.actions[i]

    def argmax(self) -> Action:
        return self.actions[int(np.argmax(self.probs))]


def uniform_distribution(actions: Sequence[Action]) -> ActionDistribution:
    k = len(actions)
    return ActionDistribution(actions=tuple(actions),
                              probs=(1.0 / k,) * k,
                              scores=(0.0,) * k,
                              log_probs=(-float(np.log(k)),) * k)


def _softmax_distribution(actions: Sequence[Action], raw_scores: np.ndarray,
                          temperature: float, greedy: bool,
                          ) -> ActionDistribution:
    if temperature <= 0:
        raise PolicyError("temperature must be positive")
    z = raw_scores / temperature
    if greedy:
        # The temperature -> 0 limit; scores keep the scaled values so
        # traces stay informative.
        probs = np.zeros(len(actions))
        probs[int(np.argmax(z))] = 1.0
        logp = np.full(len(actions), -np.inf)
        logp[int(np.argmax(z))] = 0.0
    else:
        logp = z - logsumexp(z)
        probs = np.exp(logp)
        probs /= probs.sum()
    return ActionDistribution(actions=tuple(actions),
                              probs=tuple(float(p) for p in probs),
                              scores=tuple(float(s) for s in z),
                              log_probs=tuple(float(l) for l in logp))


@dataclass(frozen=True)
class DecisionTrace:
    """Structured record of one decision: the scored distribution, the
    choice, and rationale tags naming the dominant considerations."""

    policy_id: str
    seat: int
    state_summary: str
    actions: tuple[str, ...]
    scores: tuple[float, ...]
    probs: tuple[float, ...]
    chosen: str
    rationale: tuple[str, ...]
    timestamp: float = 0.0

    def __post_init__(self):
        assert self.chosen in self.actions

    def to_record(self) -> dict:
        return {
            "policy_id": self.policy_id,
            "seat": self.seat,
            "state": self.state_summary,
            "actions": list(self.actions),
            "scores": [round(s, 6) for s in self.scores],
            "probs": [round(p, 6) for p in self.probs],
            "chosen": self.chosen,
            "rationale": list(self.rationale),
            "timestamp": self.timestamp,
        }


class Policy(Protocol):
    policy_id: str

    def action_distribution(self, view: StateView) -> ActionDistribution:
        ...


def decide(policy: "Policy", view: StateView, rng: np.random.Generator,
           timestamp: float = 0.0) -> tuple[Action, DecisionTrace]:
    dist = policy.action_distribution(view)
    action = dist.sample(rng)
    rationale = _rationale_tags(view, dist, action)
    trace = DecisionTrace(
        policy_id=policy.policy_id,
        seat=view.seat,
        state_summary=view.summary(),
        actions=tuple(str(a) for a in dist.actions),
        scores=dist.scores,
        probs=dist.probs,
        chosen=str(action),
        rationale=rationale,
        timestamp=timestamp,
    )
    return action, trace


def _rationale_tags(view: StateView, dist: ActionDistribution,
                    chosen: Action) -> tuple[str, ...]:
    tags = [f"kind:{chosen.kind.name.lower()}"]
    if chosen.kind is ActionKind.WIN:
        tags.append("winning-move")
    elif chosen.kind is ActionKind.DISCARD and chosen.tile is not None:
        if view.hand.missing_suit is not None \
                and chosen.tile.suit == view.hand.missing_suit:
            tags.append("sheds-missing-suit")
        else:
            tags.append("keeps-structure")
    elif chosen.kind in (ActionKind.PUNG, ActionKind.KONG):
        tags.append("meld-claim")
    elif chosen.kind is ActionKind.PASS:
        tags.append("declined-claim")
    if dist.prob(chosen) < max(dist.probs):
        tags.append("explored-offmax")
    return tuple(tags)


# ---------------------------------------------------------------------------
# Missing-suit choice.


def choose_missing_suit(hand: Hand) -> Suit:
    """The suit with the fewest held tiles; ties break Characters < Bamboo
    < Dots."""
    counts = hand.counts()
    totals = [(sum(counts[s * NUM_RANKS:(s + 1) * NUM_RANKS]), int(s), Suit(s))
              for s in Suit]
    return min(totals)[2]


# ---------------------------------------------------------------------------
# Hand-evaluation helpers shared by teacher and featurizer.


def _post_action_hand(view: StateView, action: Action) -> Optional[Hand]:
    """The acting seat's hand right after ``action`` resolves (before any
    replacement draw), or None when no hand change is entailed."""
    hand = view.hand
    if action.kind is ActionKind.DECLARE_MISSING:
        assert action.suit is not None
        return hand.with_missing_suit(action.suit)
    if action.kind is ActionKind.DISCARD:
        assert action.tile is not None
        return hand.without((action.tile,))
    if action.kind is ActionKind.PUNG:
        assert action.tile is not None
        meld = Meld(MeldKind.PUNG, action.tile, claimed_from=view.last_discarder)
        return hand.with_meld(meld, (action.tile,) * 2)
    if action.kind is ActionKind.KONG:
        assert action.tile is not None
        from .engine import KongStyle
        if action.style is KongStyle.FROM_DISCARD:
            meld = Meld(MeldKind.KONG_EXPOSED, action.tile,
                        claimed_from=view.last_discarder)
            return hand.with_meld(meld, (action.tile,) * 3)
        if action.style is KongStyle.CONCEALED:
            meld = Meld(MeldKind.KONG_CONCEALED, action.tile)
            return hand.with_meld(meld, (action.tile,) * 4)
        return hand.upgrade_pung(action.tile)
    return None


def _hand_distance(hand: Hand) -> int:
    return distance_to_win(hand.counts(), len(hand.melds), hand.missing_suit)


def _visible_copies(view: StateView, tile: Tile) -> int:
    n = 0
    for pile in view.discards:
        n += pile.count(tile)
    for melds in view.melds:
        for m in melds:
            n += m.tiles().count(tile)
    return n


# ---------------------------------------------------------------------------
# Teacher.


class TeacherPolicy:
    """Fixed heuristic: take a win; meld only when it strictly lowers the
    replacement distance; shed missing-suit tiles (most copies first); else
    discard whatever leaves the lowest distance.  Scores are softened into a
    distribution at temperature 0.5."""

    def __init__(self, temperature: float = TEACHER_TEMPERATURE,
                 greedy: bool = False, policy_id: str = "teacher"):
        if temperature <= 0:
            raise PolicyError("temperature must be positive")
        self.temperature = temperature
        self.greedy = greedy
        self.policy_id = policy_id

    def action_distribution(self, view: StateView) -> ActionDistribution:
        if not view.legal:
            raise PolicyError("no legal actions")
        scores = np.array([self._score(view, a) for a in view.legal])
        return _softmax_distribution(view.legal, scores, self.temperature,
                                     self.greedy)

    def _score(self, view: StateView, action: Action) -> float:
        hand = view.hand
        if action.kind is ActionKind.WIN:
            return WIN_SCORE
        if action.kind is ActionKind.DECLARE_MISSING:
            return DECLARE_SCORE if action.suit is choose_missing_suit(hand) \
                else 0.0
        if action.kind is ActionKind.DRAW:
            return 0.0
        if action.kind is ActionKind.PASS:
            return 0.0
        if action.kind is ActionKind.DISCARD:
            assert action.tile is not None
            after = _hand_distance(hand.without((action.tile,)))
            if hand.missing_suit is not None \
                    and action.tile.suit == hand.missing_suit:
                copies = hand.count_of(action.tile)
                return (MISSING_DISCARD_BONUS + COPIES_WEIGHT * copies
                        - DISTANCE_WEIGHT * after)
            return -DISTANCE_WEIGHT * after
        # Pung or kong claim / declaration.
        before = _hand_distance(hand)
        melded = _post_action_hand(view, action)
        assert melded is not None
        after = _hand_distance(melded)
        base = MELD_GOOD_SCORE if after < before else MELD_BAD_SCORE
        return base - DISTANCE_WEIGHT * after


# ---------------------------------------------------------------------------
# Uniform baseline.


class UniformRandomPolicy:
    def __init__(self, policy_id: str = "uniform"):
        self.policy_id = policy_id

    def action_distribution(self, view: StateView) -> ActionDistribution:
        if not view.legal:
            raise PolicyError("no legal actions")
        return uniform_distribution(view.legal)


# ---------------------------------------------------------------------------
# Trainable linear-softmax policy.

FEATURE_NAMES = (
    "kind:declare_missing", "kind:draw", "kind:discard", "kind:pung",
    "kind:kong", "kind:win", "kind:pass",
    "after_distance", "distance_delta", "missing_suit_discard",
    "tile_copies", "visible_copies", "wall_fraction", "tile_suit_count",
    "tile_centrality", "bias",
)
FEATURE_DIM = len(FEATURE_NAMES)


def action_features(view: StateView, action: Action) -> np.ndarray:
    """Feature vector for one candidate action (dimension 16)."""
    phi = np.zeros(FEATURE_DIM)
    phi[int(action.kind)] = 1.0
    hand = view.hand
    d_now = _hand_distance(hand)
    after_hand = _post_action_hand(view, action)
    d_after = _hand_distance(after_hand) if after_hand is not None else d_now
    phi[7] = d_after / 4.0
    phi[8] = (d_after - d_now) / 4.0
    if action.tile is not None:
        t = action.tile
        phi[9] = 1.0 if (hand.missing_suit is not None
                         and t.suit == hand.missing_suit) else 0.0
        phi[10] = hand.count_of(t) / 4.0
        phi[11] = _visible_copies(view, t) / 4.0
        counts = hand.counts()
        base = t.suit * NUM_RANKS
        phi[13] = sum(counts[base:base + NUM_RANKS]) / 9.0
        phi[14] = abs(t.rank - 5) / 4.0
    elif action.suit is not None:
        counts = hand.counts()
        base = int(action.suit) * NUM_RANKS
        phi[13] = sum(counts[base:base + NUM_RANKS]) / 9.0
    phi[12] = view.wall_count / 56.0
    phi[15] = 1.0
    return phi


def feature_matrix(view: StateView) -> np.ndarray:
    return np.stack([action_features(view, a) for a in view.legal])


@dataclass(frozen=True)
class PolicyParams:
    """Parameters of the linear-softmax policy."""

    theta: np.ndarray
    temperature: float = 1.0

    def __post_init__(self):
        assert self.theta.shape == (FEATURE_DIM,)
        assert np.isfinite(self.theta).all()
        assert self.temperature > 0

    @staticmethod
    def zeros(temperature: float = 1.0) -> "PolicyParams":
        return PolicyParams(np.zeros(FEATURE_DIM), temperature)


class SoftmaxPolicy:
    def __init__(self, params: PolicyParams, greedy: bool = False,
                 policy_id: str = "softmax"):
        self.params = params
        self.greedy = greedy
        self.policy_id = policy_id

    def action_distribution(self, view: StateView) -> ActionDistribution:
        if not view.legal:
            raise PolicyError("no legal actions")
        raw = feature_matrix(view) @ self.params.theta
        return _softmax_distribution(view.legal, raw, self.params.temperature,
                                     self.greedy)

    def log_probability(self, view: StateView, action: Action) -> float:
        return self.action_distribution(view).log_prob(action)

    def with_params(self, params: PolicyParams) -> "SoftmaxPolicy":
        return SoftmaxPolicy(params, greedy=self.greedy,
                             policy_id=self.policy_id)


def log_probability(policy: Policy, view: StateView, action: Action) -> float:
    """Natural log of the policy's mass on ``action`` (must be legal)."""
    if action not in view.legal:
        raise PolicyError(f"action {action} not legal in view")
    return policy.action_distribution(view).log_prob(action)


# ---------------------------------------------------------------------------
# Adapter for the engine's play loop.


def policy_actor(policy: Policy, rng: np.random.Generator,
                 trace_sink: Optional[list[DecisionTrace]] = None):
    """Wrap a policy as an engine actor.  Views are built from the ground
    truth; the guarded execution layer builds belief views instead."""

    def act(state: GameState, seat: int, legal: tuple[Action, ...]) -> Action:
        view = view_from_state(state, seat, legal=legal)
        action, trace = decide(policy, view, rng, timestamp=float(state.ply))
        if trace_sink is not None:
            trace_sink.append(trace)
        return action

    return act
