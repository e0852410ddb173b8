"""Experiment configuration: profiles, validation, files, env override."""

import json

import pytest

from tilelab.config import (
    OUTPUT_DIR_ENV,
    ExperimentConfig,
    MissingMode,
    config_to_json,
    load_config,
    profile,
    resolve_output_dir,
)
from tilelab.faults import HazardCurve
from tilelab.guarded import CommitMode
from tilelab.monitor import DetectorTask


class TestProfiles:
    def test_default_profile_exists(self):
        cfg = profile("default")
        assert cfg.games > 0
        assert len(cfg.policies) == 4

    def test_deployment_profile_fixed_parameters(self):
        cfg = profile("paper-2025-deployment")
        assert cfg.games >= 2000
        f = cfg.faults
        assert f.execution_base_failure == 0.008
        assert f.relocalize_success == 0.9
        assert f.hazard == HazardCurve(0.008, 0.02, 20000.0, 2000.0)
        assert f.interaction_violation_rates.out_of_turn == 0.006
        assert f.interaction_violation_rates.inspection == 0.004
        assert f.sensor_confusion.false_negative == 0.0
        assert f.sensor_confusion.false_positive == 0.0
        assert cfg.recovery.max_retries == 3
        assert cfg.recovery.commit_mode is CommitMode.VERIFY_THEN_COMMIT
        tasks = {d.task for d in cfg.detectors}
        assert tasks == {DetectorTask.TURN_VIOLATION, DetectorTask.INSPECTION}
        assert all(d.identity_error_rate == 0.0 for d in cfg.detectors)
        assert cfg.ply_duration == 1.0
        assert cfg.game_duration == 260.0

    def test_unknown_profile_raises(self):
        with pytest.raises(ValueError):
            profile("nonexistent")

    def test_profile_overrides(self):
        cfg = profile("default", games=7, parallelism=2)
        assert cfg.games == 7
        assert cfg.parallelism == 2


class TestValidation:
    def test_policies_must_be_four(self):
        with pytest.raises(ValueError):
            profile("default", policies=("teacher",) * 3)

    def test_robot_seat_range(self):
        with pytest.raises(ValueError):
            profile("default", robot_seat=4)

    def test_explicit_seeds_must_match_games(self):
        with pytest.raises(ValueError):
            profile("default", games=3, seeds=(1, 2))

    def test_explicit_seeds_must_be_unique(self):
        with pytest.raises(ValueError):
            profile("default", games=3, seeds=(1, 2, 2))

    def test_parallelism_positive(self):
        with pytest.raises(ValueError):
            profile("default", parallelism=0)


class TestGameSeeds:
    def test_derived_seeds_are_deterministic_and_distinct(self):
        cfg = profile("default", games=50)
        s1 = cfg.game_seeds()
        s2 = cfg.game_seeds()
        assert s1 == s2
        assert len(set(s1)) == 50

    def test_explicit_seeds_pass_through(self):
        cfg = profile("default", games=3, seeds=(11, 22, 33))
        assert cfg.game_seeds() == (11, 22, 33)


class TestSerialization:
    def test_dict_round_trip(self):
        cfg = profile("paper-2025-deployment", games=10)
        assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg

    def test_json_round_trip(self):
        cfg = profile("default", missing_mode=MissingMode.FORCED_CHARACTERS)
        again = ExperimentConfig.from_dict(json.loads(config_to_json(cfg)))
        assert again == cfg

    def test_from_dict_rejects_unknown_keys(self):
        payload = profile("default").to_dict()
        payload["mystery"] = 1
        with pytest.raises(ValueError):
            ExperimentConfig.from_dict(payload)

    def test_load_config_file_with_profile_base(self, tmp_path):
        path = tmp_path / "exp.json"
        path.write_text(json.dumps({
            "profile": "paper-2025-deployment",
            "games": 12,
            "name": "mini",
        }))
        cfg = load_config(path)
        assert cfg.games == 12
        assert cfg.name == "mini"
        assert cfg.faults == profile("paper-2025-deployment").faults

    def test_load_config_plain_file(self, tmp_path):
        path = tmp_path / "exp.json"
        path.write_text(config_to_json(profile("default", games=4)))
        assert load_config(path) == profile("default", games=4)

    def test_load_config_rejects_unknown_keys(self, tmp_path):
        path = tmp_path / "exp.json"
        path.write_text(json.dumps({"profile": "default", "wat": True}))
        with pytest.raises(ValueError):
            load_config(path)


class TestOutputDir:
    def test_config_wins_over_env(self, monkeypatch, tmp_path):
        monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path / "env"))
        cfg = profile("default", output_dir=str(tmp_path / "cfg"))
        assert resolve_output_dir(cfg) == str(tmp_path / "cfg")

    def test_env_fallback(self, monkeypatch, tmp_path):
        monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path / "env"))
        assert resolve_output_dir(profile("default")) == str(tmp_path / "env")

    def test_no_dir_resolves_none(self, monkeypatch):
        monkeypatch.delenv(OUTPUT_DIR_ENV, raising=False)
        assert resolve_output_dir(profile("default")) is None
