"""Parametric fault generators for the simulated robot player.

Four fault families are modeled, each calibrated from the tabletop
deployment this laboratory reproduces:

* **perceptual** -- tile-recognition misdetections during grounding;
* **execution** -- per-attempt manipulation failures (grasp/placement);
* **interaction** -- human rule violations (out-of-turn play, inspection
  of hidden tiles);
* **hardware degradation** -- a time-dependent excess failure rate that
  rises smoothly after sustained operation, modeled as a logistic ramp.

All samplers draw from a caller-supplied :class:`numpy.random.Generator`
so that identical generator state reproduces identical fault streams.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import expit

from .engine import GameState, NUM_SEATS
from .tiles import NUM_KINDS, Tile, tile_from_index

__all__ = [
    "HazardCurve",
    "SensorModel",
    "InteractionRates",
    "FaultConfig",
    "FaultEventKind",
    "FaultEvent",
    "hazard",
    "sample_execution_failure",
    "sample_misdetection",
    "sample_interaction_event",
]


def _check_probability(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must be a probability in [0, 1], got {value!r}")


@dataclass(frozen=True, slots=True)
class HazardCurve:
    """Time-dependent per-attempt failure probability.

    ``hazard(t) = base + excess * logistic((t - onset_t0) / width_tau)``:
    flat at ``base`` early on, rising smoothly around ``onset_t0`` and
    saturating at ``base + excess``.  Monotone nondecreasing in ``t``.
    """

    base: float = 0.0
    excess: float = 0.0
    onset_t0: float = 20_000.0
    width_tau: float = 2_000.0

    def __post_init__(self) -> None:
        _check_probability("base", self.base)
        _check_probability("excess", self.excess)
        if self.base + self.excess > 1.0:
            raise ValueError("base + excess must not exceed 1")
        if self.onset_t0 <= 0.0:
            raise ValueError("onset_t0 must be positive")
        if self.width_tau <= 0.0:
            raise ValueError("width_tau must be positive")


class SensorModel(NamedTuple):
    """Postcondition-sensor confusion rates.

    ``false_negative`` is the probability a true failure goes undetected
    (the sensor reports success); ``false_positive`` is the probability a
    true success raises a spurious failure alarm.  The default models the
    deployed tactile/force check, for which no error was observed.
    """

    false_negative: float = 0.0
    false_positive: float = 0.0


class InteractionRates(NamedTuple):
    """Per-turn probabilities of human interaction violations."""

    out_of_turn: float = 0.0
    inspection: float = 0.0


@dataclass(frozen=True, slots=True)
class FaultConfig:
    """Bundle of fault probabilities used by the guarded executor.

    The zero-argument construction is fault-free (every rate 0, perfect
    sensor, flat hazard); deployment-calibrated values live in the named
    profiles of :mod:`tilelab.config`.
    """

    misdetection_rate: float = 0.0
    execution_base_failure: float = 0.0
    relocalize_success: float = 0.9
    interaction_violation_rates: InteractionRates = InteractionRates()
    sensor_confusion: SensorModel = SensorModel()
    hazard: HazardCurve = field(default_factory=HazardCurve)

    def __post_init__(self) -> None:
        _check_probability("misdetection_rate", self.misdetection_rate)
        _check_probability("execution_base_failure", self.execution_base_failure)
        _check_probability("relocalize_success", self.relocalize_success)
        _check_probability("out_of_turn rate", self.interaction_violation_rates.out_of_turn)
        _check_probability("inspection rate", self.interaction_violation_rates.inspection)
        _check_probability("sensor false_negative", self.sensor_confusion.false_negative)
        _check_probability("sensor false_positive", self.sensor_confusion.false_positive)


class FaultEventKind(Enum):
    MISDETECTION = "misdetection"
    EXECUTION_FAILURE = "execution-failure"
    OUT_OF_TURN = "out-of-turn"
    INSPECTION = "inspection"
    HARDWARE_DEGRADATION = "hardware-degradation"


@dataclass(frozen=True, slots=True)
class FaultEvent:
    """One sampled fault occurrence, tagged with simulated time and turn.

    ``actor`` names the seat that caused the event when one exists
    (interaction violations); hardware faults leave it unset.
    """

    kind: FaultEventKind
    sim_time: float
    turn_index: int
    detail: str = ""
    actor: Optional[int] = None

    def to_record(self) -> dict:
        return {
            "kind": self.kind.value,
            "sim_time": self.sim_time,
            "turn_index": self.turn_index,
            "detail": self.detail,
            "actor": self.actor,
        }


def hazard(t: float, curve: HazardCurve) -> float:
    """Failure probability at operation time ``t`` seconds."""
    if t < 0.0:
        raise ValueError(f"operation time must be nonnegative, got {t!r}")
    return float(curve.base + curve.excess * expit((t - curve.onset_t0) / curve.width_tau))


def execution_failure_probability(t: float, cfg: FaultConfig) -> float:
    """Per-attempt failure probability at time ``t``.

    Hardware degradation dominates the flat base rate: the effective
    probability is ``max(execution_base_failure, hazard(t))``.
    """
    return max(cfg.execution_base_failure, hazard(t, cfg.hazard))


def sample_execution_failure(t: float, cfg: FaultConfig, rng: np.random.Generator) -> bool:
    """Sample whether a single physical attempt at time ``t`` fails."""
    failed, _ = sample_execution_failure_detail(t, cfg, rng)
    return failed


def sample_execution_failure_detail(
    t: float, cfg: FaultConfig, rng: np.random.Generator
) -> tuple[bool, bool]:
    """Like :func:`sample_execution_failure`, also attributing the cause.

    Returns ``(failed, degradation)`` where ``degradation`` is true when
    the failure would not have occurred at the flat base rate alone, i.e.
    it is attributable to the time-dependent hazard excess.
    """
    u = float(rng.random())
    p = execution_failure_probability(t, cfg)
    if u >= p:
        return False, False
    return True, u >= cfg.execution_base_failure


def sample_misdetection(true_tile: Tile, cfg: FaultConfig, rng: np.random.Generator) -> Tile:
    """Recognition outcome for one tile: correct, or a uniformly wrong kind."""
    if rng.random() >= cfg.misdetection_rate:
        return true_tile
    offset = int(rng.integers(NUM_KINDS - 1))
    if offset >= true_tile.index:
        offset += 1
    return tile_from_index(offset)


def sample_interaction_event(
    state: GameState,
    cfg: FaultConfig,
    rng: np.random.Generator,
    *,
    robot_seat: int = 0,
    sim_time: float = 0.0,
) -> Optional[FaultEvent]:
    """Sample at most one human interaction violation for the current turn.

    Out-of-turn play takes precedence: when it fires, no inspection event
    is drawn for the same turn.  The acting seat is always a human seat
    (never ``robot_seat``); an out-of-turn actor is additionally never the
    seat currently to act.
    """
    if state.is_terminal:
        raise ValueError("no interaction events on a terminal state")
    rates = cfg.interaction_violation_rates
    if rng.random() < rates.out_of_turn:
        candidates = [
            s for s in range(NUM_SEATS) if s != robot_seat and s != state.current_seat
        ]
        actor = candidates[int(rng.integers(len(candidates)))]
        return FaultEvent(
            FaultEventKind.OUT_OF_TURN,
            sim_time,
            state.ply,
            detail=f"seat {actor} acted while seat {state.current_seat} was to act",
            actor=actor,
        )
    if rng.random() < rates.inspection:
        humans = [s for s in range(NUM_SEATS) if s != robot_seat]
        actor = humans[int(rng.integers(len(humans)))]
        victims = [s for s in range(NUM_SEATS) if s != actor]
        victim = victims[int(rng.integers(len(victims)))]
        return FaultEvent(
            FaultEventKind.INSPECTION,
            sim_time,
            state.ply,
            detail=f"seat {actor} inspected hidden tiles of seat {victim}",
            actor=actor,
        )
    return None
