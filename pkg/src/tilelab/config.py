"""Experiment configuration: validated config objects, named profiles,
and structured-text (JSON) config files.

The central profile is ``paper-2025-deployment``, which encodes the
fault rates measured over the robot's 2025 public deployment:

* per-attempt grasp success 0.992 (flat base failure 0.008), with up to
  three recoveries and a 0.9 re-localization success rate, lifting
  overall primitive success to roughly 0.9992;
* a hardware-degradation hazard that stays at the 0.008 base early on
  and climbs by 0.02 (to 0.028) around 20,000 s of cumulative
  operation, with a ~2,000 s transition width;
* five tile misrecognitions observed across 122 games; simulated games
  average about 25 recognition-grounding cycles each, giving a
  per-recognition rate of 5/3050;
* human interaction violations at 0.006 (out-of-turn) and 0.004
  (inspection) per turn, watched by detectors whose operating points
  were measured at turn-violation precision/recall 0.872/0.867 on a 1%
  base rate and inspection precision/recall 0.967/0.989, with no
  identity misattributions;
* a tactile/force postcondition sensor with no observed confusion;
* a 1 s nominal ply and ~260 s nominal game duration, which ties each
  campaign game's start clock to cumulative operation time.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from typing import Optional

import numpy as np

from .faults import (
    FaultConfig,
    HazardCurve,
    InteractionRates,
    SensorModel,
)
from .guarded import CommitMode, RecoveryPolicy
from .monitor import DetectorSpec, DetectorTask

__all__ = [
    "MissingMode",
    "ExperimentConfig",
    "OUTPUT_DIR_ENV",
    "PROFILES",
    "profile",
    "profile_names",
    "load_config",
    "config_to_json",
    "resolve_output_dir",
]

OUTPUT_DIR_ENV = "TILELAB_OUTPUT_DIR"


class MissingMode(Enum):
    """How the robot's remembered missing-suit declarations are seeded.

    ``FORCED_CHARACTERS`` reproduces the deployment incident in which
    the robot recorded every player's declared suit as Characters and
    played the rest of the game against that belief.
    """

    NORMAL = "normal"
    FORCED_CHARACTERS = "forced-characters"


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a campaign needs; immutable and serializable.

    ``seeds`` may be given explicitly (unique, one per game); when
    omitted they are derived deterministically from ``base_seed``.
    ``policies`` names one decision policy per seat — see
    :func:`tilelab.harness.build_policy` for the registry.
    """

    name: str = "default"
    games: int = 100
    base_seed: int = 2025
    seeds: Optional[tuple[int, ...]] = None
    policies: tuple[str, str, str, str] = ("teacher",) * 4
    robot_seat: int = 0
    faults: FaultConfig = field(default_factory=FaultConfig)
    recovery: RecoveryPolicy = field(default_factory=RecoveryPolicy)
    detectors: tuple[DetectorSpec, ...] = ()
    missing_mode: MissingMode = MissingMode.NORMAL
    interventions: bool = True
    parallelism: int = 1
    ply_duration: float = 1.0
    game_duration: float = 260.0
    max_plies: int = 3000
    collect_traces: bool = False
    audit_commits: bool = False
    output_dir: Optional[str] = None

    def __post_init__(self):
        if self.games < 1:
            raise ValueError("games must be at least 1")
        if len(self.policies) != 4:
            raise ValueError("exactly four seat policy assignments required")
        if not 0 <= self.robot_seat <= 3:
            raise ValueError("robot_seat must be a seat index 0..3")
        if self.parallelism < 1:
            raise ValueError("parallelism must be at least 1")
        if self.ply_duration <= 0 or self.game_duration <= 0:
            raise ValueError("durations must be positive")
        if self.seeds is not None:
            if len(self.seeds) != self.games:
                raise ValueError("seeds must list exactly one seed per game")
            if len(set(self.seeds)) != len(self.seeds):
                raise ValueError("seeds must be unique per game")

    def game_seeds(self) -> tuple[int, ...]:
        """The per-game seeds: explicit, or derived from ``base_seed``."""
        if self.seeds is not None:
            return self.seeds
        state = np.random.SeedSequence(self.base_seed).generate_state(
            self.games, dtype=np.uint64)
        seeds = tuple(int(s) for s in state)
        if len(set(seeds)) != len(seeds):  # pragma: no cover
            raise ValueError("derived seeds collided; choose another base")
        return seeds

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "games": self.games,
            "base_seed": self.base_seed,
            "seeds": list(self.seeds) if self.seeds is not None else None,
            "policies": list(self.policies),
            "robot_seat": self.robot_seat,
            "faults": _faults_to_dict(self.faults),
            "recovery": {
                "max_retries": self.recovery.max_retries,
                "relocalize": self.recovery.relocalize,
                "commit_mode": self.recovery.commit_mode.value,
            },
            "detectors": [
                {
                    "task": d.task.value,
                    "true_positive_rate": d.true_positive_rate,
                    "false_positive_rate": d.false_positive_rate,
                    "identity_error_rate": d.identity_error_rate,
                }
                for d in self.detectors
            ],
            "missing_mode": self.missing_mode.value,
            "interventions": self.interventions,
            "parallelism": self.parallelism,
            "ply_duration": self.ply_duration,
            "game_duration": self.game_duration,
            "max_plies": self.max_plies,
            "collect_traces": self.collect_traces,
            "audit_commits": self.audit_commits,
            "output_dir": self.output_dir,
        }

    @staticmethod
    def from_dict(data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(ExperimentConfig)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(data)
        if "seeds" in kwargs and kwargs["seeds"] is not None:
            kwargs["seeds"] = tuple(int(s) for s in kwargs["seeds"])
        if "policies" in kwargs:
            kwargs["policies"] = tuple(kwargs["policies"])
        if "faults" in kwargs and isinstance(kwargs["faults"], dict):
            kwargs["faults"] = _faults_from_dict(kwargs["faults"])
        if "recovery" in kwargs and isinstance(kwargs["recovery"], dict):
            r = kwargs["recovery"]
            kwargs["recovery"] = RecoveryPolicy(
                max_retries=r.get("max_retries", 3),
                relocalize=r.get("relocalize", True),
                commit_mode=CommitMode(r.get(
                    "commit_mode", CommitMode.VERIFY_THEN_COMMIT.value)),
            )
        if "detectors" in kwargs:
            kwargs["detectors"] = tuple(
                d if isinstance(d, DetectorSpec) else DetectorSpec(
                    task=DetectorTask(d["task"]),
                    true_positive_rate=d["true_positive_rate"],
                    false_positive_rate=d["false_positive_rate"],
                    identity_error_rate=d.get("identity_error_rate", 0.0),
                )
                for d in kwargs["detectors"]
            )
        if "missing_mode" in kwargs and not isinstance(
                kwargs["missing_mode"], MissingMode):
            kwargs["missing_mode"] = MissingMode(kwargs["missing_mode"])
        return ExperimentConfig(**kwargs)


def _faults_to_dict(fc: FaultConfig) -> dict:
    return {
        "misdetection_rate": fc.misdetection_rate,
        "execution_base_failure": fc.execution_base_failure,
        "relocalize_success": fc.relocalize_success,
        "interaction_violation_rates": {
            "out_of_turn": fc.interaction_violation_rates.out_of_turn,
            "inspection": fc.interaction_violation_rates.inspection,
        },
        "sensor_confusion": {
            "false_negative": fc.sensor_confusion.false_negative,
            "false_positive": fc.sensor_confusion.false_positive,
        },
        "hazard": {
            "base": fc.hazard.base,
            "excess": fc.hazard.excess,
            "onset_t0": fc.hazard.onset_t0,
            "width_tau": fc.hazard.width_tau,
        },
    }


def _faults_from_dict(data: dict) -> FaultConfig:
    rates = data.get("interaction_violation_rates", {})
    sensor = data.get("sensor_confusion", {})
    hazard = data.get("hazard", {})
    return FaultConfig(
        misdetection_rate=data.get("misdetection_rate", 0.0),
        execution_base_failure=data.get("execution_base_failure", 0.0),
        relocalize_success=data.get("relocalize_success", 0.9),
        interaction_violation_rates=InteractionRates(
            out_of_turn=rates.get("out_of_turn", 0.0),
            inspection=rates.get("inspection", 0.0),
        ),
        sensor_confusion=SensorModel(
            false_negative=sensor.get("false_negative", 0.0),
            false_positive=sensor.get("false_positive", 0.0),
        ),
        hazard=HazardCurve(
            base=hazard.get("base", 0.0),
            excess=hazard.get("excess", 0.0),
            onset_t0=hazard.get("onset_t0", 20000.0),
            width_tau=hazard.get("width_tau", 2000.0),
        ),
    )


# ---------------------------------------------------------------------------
# Named profiles.

# Deployment-measured fault bundle (see the module docstring for the
# observational basis of each number).
_DEPLOYMENT_FAULTS = FaultConfig(
    # 5 misrecognitions / (122 games x ~25 recognitions per game).
    misdetection_rate=5.0 / (122.0 * 25.0),
    execution_base_failure=0.008,
    relocalize_success=0.9,
    interaction_violation_rates=InteractionRates(
        out_of_turn=0.006, inspection=0.004),
    sensor_confusion=SensorModel(false_negative=0.0, false_positive=0.0),
    hazard=HazardCurve(base=0.008, excess=0.02,
                       onset_t0=20000.0, width_tau=2000.0),
)

# Detector operating points implied by the measured precision/recall at
# the ambient violation base rates (TPR = recall; FPR solves the
# precision identity at the stated base rate).
_DEPLOYMENT_DETECTORS = (
    DetectorSpec(task=DetectorTask.TURN_VIOLATION,
                 true_positive_rate=0.867,
                 false_positive_rate=0.00128545,  # precision 0.872 @ 1%
                 identity_error_rate=0.0),
    DetectorSpec(task=DetectorTask.INSPECTION,
                 true_positive_rate=0.989,
                 false_positive_rate=0.00013555,  # precision 0.967 @ 0.4%
                 identity_error_rate=0.0),
)


def _deployment_profile() -> ExperimentConfig:
    return ExperimentConfig(
        name="paper-2025-deployment",
        games=2000,
        base_seed=2025,
        policies=("teacher",) * 4,
        faults=_DEPLOYMENT_FAULTS,
        recovery=RecoveryPolicy(max_retries=3, relocalize=True),
        detectors=_DEPLOYMENT_DETECTORS,
        ply_duration=1.0,
        game_duration=260.0,
    )


def _fault_free_profile() -> ExperimentConfig:
    return ExperimentConfig(name="fault-free", games=100)


def _default_profile() -> ExperimentConfig:
    # A quick smoke profile: elevated execution faults, flat hazard.
    return ExperimentConfig(
        name="default",
        games=50,
        faults=FaultConfig(execution_base_failure=0.05,
                           relocalize_success=0.9),
    )


PROFILES = {
    "default": _default_profile,
    "fault-free": _fault_free_profile,
    "paper-2025-deployment": _deployment_profile,
}


def profile_names() -> tuple[str, ...]:
    return tuple(sorted(PROFILES))


def profile(name: str, **overrides) -> ExperimentConfig:
    """A named profile, optionally with field overrides."""
    try:
        cfg = PROFILES[name]()
    except KeyError:
        raise ValueError(
            f"unknown profile {name!r}; available: {profile_names()}"
        ) from None
    return replace(cfg, **overrides) if overrides else cfg


def load_config(path: str) -> ExperimentConfig:
    """Read a JSON config file.

    The file may name a ``profile`` to start from; every other key
    overrides that base.  Unknown keys are rejected.
    """
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError("config file must hold a JSON object")
    base_name = data.pop("profile", None)
    if base_name is None:
        return ExperimentConfig.from_dict(data)
    base = profile(base_name).to_dict()
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    base.update(data)
    return ExperimentConfig.from_dict(base)


def config_to_json(config: ExperimentConfig) -> str:
    """Canonical printable form (also valid as a config file)."""
    return json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n"


def resolve_output_dir(config: ExperimentConfig) -> Optional[str]:
    """Explicit config path, else the environment override, else None
    (no files written)."""
    if config.output_dir:
        return config.output_dir
    return os.environ.get(OUTPUT_DIR_ENV) or None
