"""Simulated interaction-violation detectors with confusion statistics.

Two table conditions are monitored: out-of-turn play and inspection of
hidden tiles.  A detector is parameterized by its per-turn confusion
rates -- true-positive, false-positive, and actor-misattribution -- and
produces an append-only log of detection events.  Alerts are surfaced to
the participants but never interrupt play: rule interpretation stays
with the humans at the table, so the monitor only annotates the game it
watched, it cannot change it.

Scoring treats each turn as one classification instance: a turn is
positive when at least one true violation occurred during it, and
predicted-positive when the detector raised at least one alert for it.
Detectors are configured by (TPR, FPR); the published precision/recall
operating point corresponds to a particular positive base rate, so the
conversion helpers take the base rate as an explicit argument.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .engine import NUM_SEATS
from .faults import FaultEvent, FaultEventKind

__all__ = [
    "DetectorTask",
    "DetectorSpec",
    "TurnContext",
    "DetectionEvent",
    "MonitorLog",
    "DetectionScore",
    "observe",
    "score_detections",
    "misattribution_rate",
    "derived_precision_recall",
    "calibrate_rates",
    "synthetic_violation_stream",
    "export_log",
    "parse_log",
]


class DetectorTask(Enum):
    TURN_VIOLATION = "turn-violation"
    INSPECTION = "inspection"


TASK_FAULT_KIND = {
    DetectorTask.TURN_VIOLATION: FaultEventKind.OUT_OF_TURN,
    DetectorTask.INSPECTION: FaultEventKind.INSPECTION,
}

_MONITORED_KINDS = frozenset(TASK_FAULT_KIND.values())


def _check_probability(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must be a probability in [0, 1], got {value!r}")


@dataclass(frozen=True, slots=True)
class DetectorSpec:
    """Confusion-rate parameterization of one violation detector."""

    task: DetectorTask
    true_positive_rate: float
    false_positive_rate: float
    identity_error_rate: float = 0.0

    def __post_init__(self) -> None:
        _check_probability("true_positive_rate", self.true_positive_rate)
        _check_probability("false_positive_rate", self.false_positive_rate)
        _check_probability("identity_error_rate", self.identity_error_rate)


class TurnContext(NamedTuple):
    """One observed turn of the stream the detector classifies."""

    turn_index: int
    sim_time: float


@dataclass(frozen=True, slots=True)
class DetectionEvent:
    """One raised alert.  ``linked_truth`` points at the ground-truth
    violation when the alert is a true detection; false alarms have no
    link.  Every alert is surfaced to the table, none blocks play."""

    task: DetectorTask
    predicted_actor: int
    sim_time: float
    turn_index: int
    linked_truth: Optional[FaultEvent] = None
    surfaced: bool = True

    @property
    def linked(self) -> bool:
        return self.linked_truth is not None

    def to_record(self) -> dict:
        return {
            "task": self.task.value,
            "predicted_actor": self.predicted_actor,
            "sim_time": self.sim_time,
            "turn_index": self.turn_index,
            "linked": self.linked,
        }


@dataclass(frozen=True, slots=True)
class MonitorLog:
    """Append-only, time-ordered collection of detection events."""

    entries: tuple[DetectionEvent, ...] = ()

    def append(self, event: DetectionEvent) -> "MonitorLog":
        if self.entries and event.sim_time < self.entries[-1].sim_time:
            raise ValueError("monitor log must stay ordered by sim_time")
        return MonitorLog(self.entries + (event,))


def _misattributed_seat(true_actor: int, rng: np.random.Generator) -> int:
    offset = 1 + int(rng.integers(NUM_SEATS - 1))
    return (true_actor + offset) % NUM_SEATS


def _require_time_ordered(name: str, times: Sequence[float]) -> None:
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValueError(f"{name} must be ordered by sim_time")


def observe(
    truth_events: Sequence[FaultEvent],
    turn_stream: Sequence[TurnContext],
    spec: DetectorSpec,
    rng: np.random.Generator,
) -> MonitorLog:
    """Run one detector over a game's turns.

    Each true violation of the detector's task is detected with
    probability TPR (with the actor misattributed at the identity-error
    rate); each turn without one raises a false alarm with probability
    FPR.  Ground truth is only annotated, never altered.
    """
    _require_time_ordered("truth_events", [e.sim_time for e in truth_events])
    _require_time_ordered("turn_stream", [c.sim_time for c in turn_stream])

    wanted = TASK_FAULT_KIND[spec.task]
    by_turn: dict[int, list[FaultEvent]] = {}
    for event in truth_events:
        if event.kind is wanted:
            by_turn.setdefault(event.turn_index, []).append(event)

    log = MonitorLog()
    for ctx in turn_stream:
        here = by_turn.get(ctx.turn_index)
        if here:
            for event in here:
                if float(rng.random()) >= spec.true_positive_rate:
                    continue
                actor = event.actor if event.actor is not None else 0
                if float(rng.random()) < spec.identity_error_rate:
                    actor = _misattributed_seat(actor, rng)
                log = log.append(
                    DetectionEvent(
                        spec.task, actor, ctx.sim_time, ctx.turn_index,
                        linked_truth=event,
                    )
                )
        elif float(rng.random()) < spec.false_positive_rate:
            log = log.append(
                DetectionEvent(
                    spec.task,
                    int(rng.integers(NUM_SEATS)),
                    ctx.sim_time,
                    ctx.turn_index,
                )
            )
    return log


class DetectionScore(NamedTuple):
    """Turn-level confusion statistics.  A ``None`` marks a statistic
    whose denominator is empty (no predicted positives, no true
    positives, and so on) -- never silently reported as zero."""

    precision: Optional[float]
    recall: Optional[float]
    specificity: Optional[float]
    npv: Optional[float]


def _ratio(num: int, den: int) -> Optional[float]:
    return None if den == 0 else num / den


def score_detections(
    log: MonitorLog,
    truth_events: Sequence[FaultEvent],
    total_turns: int,
    *,
    task: Optional[DetectorTask] = None,
) -> DetectionScore:
    """Turn-level precision/recall/specificity/NPV for one detector.

    ``task`` restricts scoring to one violation kind; by default every
    monitored violation counts as a positive and every log entry as a
    predicted positive.
    """
    wanted = _MONITORED_KINDS if task is None else {TASK_FAULT_KIND[task]}
    positive_turns = {
        e.turn_index for e in truth_events if e.kind in wanted
    }
    predicted_turns = {
        e.turn_index for e in log.entries if task is None or e.task is task
    }
    seen = positive_turns | predicted_turns
    if seen and (total_turns <= max(seen) or min(seen) < 0):
        raise ValueError("turn indices fall outside the stated stream length")

    tp = len(positive_turns & predicted_turns)
    fp = len(predicted_turns - positive_turns)
    fn = len(positive_turns - predicted_turns)
    tn = total_turns - tp - fp - fn
    return DetectionScore(
        precision=_ratio(tp, tp + fp),
        recall=_ratio(tp, tp + fn),
        specificity=_ratio(tn, tn + fp),
        npv=_ratio(tn, tn + fn),
    )


def misattribution_rate(log: MonitorLog) -> Optional[float]:
    """Fraction of linked detections naming the wrong actor (cross-identity
    error); ``None`` when the log holds no linked detections."""
    wrong = total = 0
    for event in log.entries:
        truth = event.linked_truth
        if truth is None or truth.actor is None:
            continue
        total += 1
        wrong += event.predicted_actor != truth.actor
    return _ratio(wrong, total)


def derived_precision_recall(
    tpr: float, fpr: float, base_rate: float
) -> tuple[Optional[float], float]:
    """The (precision, recall) operating point implied by confusion rates
    at a given per-turn positive base rate."""
    _check_probability("tpr", tpr)
    _check_probability("fpr", fpr)
    _check_probability("base_rate", base_rate)
    alarms = tpr * base_rate + fpr * (1.0 - base_rate)
    precision = None if alarms == 0.0 else tpr * base_rate / alarms
    return precision, tpr


def calibrate_rates(
    precision: float, recall: float, base_rate: float
) -> tuple[float, float]:
    """Invert :func:`derived_precision_recall`: the (TPR, FPR) pair that
    reproduces a published precision/recall at ``base_rate``."""
    _check_probability("precision", precision)
    _check_probability("recall", recall)
    if not 0.0 < base_rate < 1.0:
        raise ValueError("base_rate must be strictly between 0 and 1")
    if precision == 0.0:
        raise ValueError("precision 0 does not determine a false-positive rate")
    tpr = recall
    fpr = tpr * base_rate * (1.0 - precision) / (precision * (1.0 - base_rate))
    if fpr > 1.0:
        raise ValueError(
            f"no valid false-positive rate: implied fpr={fpr:.4f} exceeds 1"
        )
    return tpr, fpr


def synthetic_violation_stream(
    n_turns: int,
    base_rate: float,
    rng: np.random.Generator,
    *,
    task: DetectorTask = DetectorTask.TURN_VIOLATION,
    robot_seat: int = 0,
    turn_duration: float = 1.0,
) -> tuple[tuple[FaultEvent, ...], tuple[TurnContext, ...]]:
    """A turn stream with violations injected at ``base_rate`` per turn,
    for calibration experiments independent of full game simulation."""
    _check_probability("base_rate", base_rate)
    kind = TASK_FAULT_KIND[task]
    humans = [s for s in range(NUM_SEATS) if s != robot_seat]
    events: list[FaultEvent] = []
    stream: list[TurnContext] = []
    for i in range(n_turns):
        t = i * turn_duration
        stream.append(TurnContext(i, t))
        if float(rng.random()) < base_rate:
            actor = humans[int(rng.integers(len(humans)))]
            events.append(
                FaultEvent(kind, t, i, detail=f"seat {actor} violation", actor=actor)
            )
    return tuple(events), tuple(stream)


def export_log(log: MonitorLog) -> str:
    """Line-delimited records, one per entry, stable field names."""
    if not log.entries:
        return ""
    return "\n".join(
        json.dumps(e.to_record(), sort_keys=True) for e in log.entries
    ) + "\n"


def parse_log(text: str) -> tuple[dict, ...]:
    """Parse an exported log back into its records (order preserved)."""
    return tuple(
        json.loads(line) for line in text.splitlines() if line.strip()
    )
