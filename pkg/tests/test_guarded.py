"""Guarded-execution tests: the validate/ground/execute/verify/commit
pipeline, its recovery loop, and the closed-form success probability."""
from __future__ import annotations

import math

import numpy as np
import pytest

from tilelab.engine import Action, ActionKind, apply_action, resolve_claims
from tilelab.faults import FaultConfig, FaultEventKind, SensorModel
from tilelab.guarded import (
    CommitMode,
    ExecOutcome,
    RecoveryPolicy,
    VerifyOutcome,
    closed_form_overall_success,
    execute_primitive,
    postcondition_holds,
    validate_preconditions,
)
from tilelab.hands import Meld, MeldKind
from tilelab.internal import (
    PrimitiveKind,
    PrimitiveSpec,
    check_consistency,
    observe_event,
    synchronized,
)
from tilelab.tiles import parse_tile

from .fixtures import discard_ready_state, draw_ready_state
from .oracles import oracle_retry_success

T = parse_tile

DRAW = PrimitiveSpec(PrimitiveKind.DRAW)
FAULT_FREE = FaultConfig()
DEFAULT_POLICY = RecoveryPolicy()


def run_draw(faults, policy, seed=0, state=None, internal=None):
    state = state if state is not None else draw_ready_state()
    internal = internal if internal is not None else synchronized(state, 0)
    rng = np.random.default_rng(seed)
    return state, execute_primitive(internal, state, DRAW, faults, policy, 0.0, rng)


class TestPostcondition:
    def test_draw(self):
        state = draw_ready_state()
        assert not postcondition_holds(state, DRAW, 0)
        after = apply_action(state, Action(ActionKind.DRAW, 0)).state
        assert postcondition_holds(after, DRAW, 0)

    def test_discard(self):
        state = discard_ready_state()
        spec = PrimitiveSpec(PrimitiveKind.DISCARD, target=T("2C"))
        assert not postcondition_holds(state, spec, 0)
        after = apply_action(state, Action(ActionKind.DISCARD, 0, T("2C"))).state
        assert postcondition_holds(after, spec, 0)
        other = PrimitiveSpec(PrimitiveKind.DISCARD, target=T("9B"))
        assert not postcondition_holds(after, other, 0)

    def test_meld_and_place(self):
        state = discard_ready_state()
        meld = Meld(MeldKind.PUNG, T("9B"), claimed_from=3)
        spec = PrimitiveSpec(PrimitiveKind.MELD, meld_detail=meld)
        assert not postcondition_holds(state, spec, 0)
        assert not postcondition_holds(state, PrimitiveSpec(PrimitiveKind.PLACE), 0)


class TestValidatePreconditions:
    def test_clean_draw_passes(self):
        internal = synchronized(draw_ready_state(), 0)
        assert validate_preconditions(internal, DRAW) is None

    def test_not_own_turn(self):
        state = draw_ready_state()
        internal = synchronized(state, 1)  # seat 1 believes seat 0 acts
        assert validate_preconditions(internal, DRAW) == "not-own-turn"

    def test_hand_shape_guards(self):
        internal = synchronized(discard_ready_state(), 0)
        assert validate_preconditions(internal, DRAW) == "hand-not-awaiting-draw"
        spec = PrimitiveSpec(PrimitiveKind.DISCARD, target=T("2C"))
        thin = synchronized(draw_ready_state(), 0)
        assert validate_preconditions(thin, spec) == "hand-not-awaiting-discard"

    def test_tile_not_believed_held(self):
        internal = synchronized(discard_ready_state(), 0)
        spec = PrimitiveSpec(PrimitiveKind.DISCARD, target=T("9D"))
        assert validate_preconditions(internal, spec) == "tile-not-believed-held"

    def test_wall_believed_empty(self):
        from dataclasses import replace

        internal = synchronized(draw_ready_state(), 0)
        dry = replace(
            internal,
            perceptual=replace(internal.perceptual, believed_wall_count=0),
        )
        assert validate_preconditions(dry, DRAW) == "wall-believed-empty"

    def test_claim_needs_window(self):
        internal = synchronized(draw_ready_state(), 0)
        meld = Meld(MeldKind.PUNG, T("9B"), claimed_from=3)
        spec = PrimitiveSpec(PrimitiveKind.MELD, meld_detail=meld)
        assert validate_preconditions(internal, spec) == "no-claim-window"

    def test_upgrade_needs_believed_pung(self):
        internal = synchronized(discard_ready_state(), 0)
        meld = Meld(MeldKind.KONG_UPGRADED, T("2C"))
        spec = PrimitiveSpec(PrimitiveKind.MELD, meld_detail=meld)
        assert validate_preconditions(internal, spec) == "pung-not-believed-held"

    def test_game_believed_over(self):
        from dataclasses import replace

        internal = synchronized(draw_ready_state(), 0)
        done = replace(
            internal,
            interaction=replace(internal.interaction, expected_event=None),
        )
        assert validate_preconditions(done, DRAW) == "game-believed-over"
        assert (
            validate_preconditions(done, PrimitiveSpec(PrimitiveKind.PLACE))
            == "game-believed-over"
        )


class TestFaultFreePipeline:
    def test_draw_commits_and_stays_consistent(self):
        state, result = run_draw(FAULT_FREE, DEFAULT_POLICY)
        assert result.outcome is ExecOutcome.COMMITTED
        assert result.attempts == 1
        assert result.verify_trace == (VerifyOutcome.VERIFIED,)
        assert result.fault_events == ()
        assert result.internal.version == 1
        assert T("6B") in result.internal.perceptual.believed_hand  # the wall top
        assert result.truth.ply == state.ply + 1
        assert check_consistency(result.internal, result.truth).ok

    def test_discard_commits(self):
        state = discard_ready_state()
        internal = synchronized(state, 0)
        spec = PrimitiveSpec(PrimitiveKind.DISCARD, target=T("2C"))
        result = execute_primitive(
            internal, state, spec, FAULT_FREE, DEFAULT_POLICY, 0.0,
            np.random.default_rng(0),
        )
        assert result.committed
        assert result.truth.last_discard == T("2C")
        assert check_consistency(result.internal, result.truth).ok
        kinds = [e.kind for e in result.events]
        from tilelab.engine import EventKind

        assert EventKind.DISCARDED in kinds

    def test_rejection_touches_nothing(self):
        state = discard_ready_state()
        internal = synchronized(state, 0)
        spec = PrimitiveSpec(PrimitiveKind.DISCARD, target=T("9D"))
        result = execute_primitive(
            internal, state, spec, FAULT_FREE, DEFAULT_POLICY, 0.0,
            np.random.default_rng(0),
        )
        assert result.outcome is ExecOutcome.REJECTED
        assert result.attempts == 0
        assert result.violation == "tile-not-believed-held"
        assert result.truth is state
        assert result.internal is internal


class TestRecoveryLoop:
    ALWAYS_FAIL = FaultConfig(execution_base_failure=1.0, relocalize_success=1.0)

    def test_exhausted_retries(self):
        state, result = run_draw(self.ALWAYS_FAIL, RecoveryPolicy(max_retries=3))
        assert result.outcome is ExecOutcome.UNRECOVERED
        assert result.attempts == 4  # one initial + three retries
        assert result.verify_trace == (VerifyOutcome.FAILED_DETECTED,) * 4
        assert all(e.kind is FaultEventKind.EXECUTION_FAILURE for e in result.fault_events)
        assert result.truth is state  # failed attempts never touch truth
        assert result.internal.version == 0
        assert result.internal.execution.completed_log[-1][1] == "unrecovered"

    def test_zero_retry_budget(self):
        _, result = run_draw(self.ALWAYS_FAIL, RecoveryPolicy(max_retries=0))
        assert result.outcome is ExecOutcome.UNRECOVERED
        assert result.attempts == 1

    def test_relocalization_disabled(self):
        _, result = run_draw(self.ALWAYS_FAIL, RecoveryPolicy(relocalize=False))
        assert result.attempts == 1

    def test_relocalization_never_succeeds(self):
        faults = FaultConfig(execution_base_failure=1.0, relocalize_success=0.0)
        _, result = run_draw(faults, DEFAULT_POLICY)
        assert result.attempts == 1

    def test_recovered_then_committed(self):
        faults = FaultConfig(execution_base_failure=0.5, relocalize_success=1.0)
        for seed in range(200):
            state, result = run_draw(faults, DEFAULT_POLICY, seed=seed)
            if result.attempts == 2 and result.committed:
                break
        else:
            pytest.fail("no seed produced a single-retry recovery")
        assert result.outcome is ExecOutcome.RECOVERED_THEN_COMMITTED
        assert result.verify_trace == (
            VerifyOutcome.FAILED_DETECTED, VerifyOutcome.VERIFIED,
        )
        assert len(result.fault_events) == 1
        assert result.truth.ply == state.ply + 1  # exactly one transition
        assert check_consistency(result.internal, result.truth).ok

    def test_misdetection_is_a_detected_grounding_failure(self):
        faults = FaultConfig(misdetection_rate=1.0, relocalize_success=1.0)
        _, result = run_draw(faults, DEFAULT_POLICY)
        assert result.outcome is ExecOutcome.UNRECOVERED
        assert all(e.kind is FaultEventKind.MISDETECTION for e in result.fault_events)
        assert len(result.fault_events) == 4


class TestSensorConfusion:
    def test_false_negative_commits_a_phantom(self):
        faults = FaultConfig(
            execution_base_failure=1.0,
            sensor_confusion=SensorModel(false_negative=1.0),
        )
        state, result = run_draw(faults, DEFAULT_POLICY)
        assert result.outcome is ExecOutcome.COMMITTED
        assert result.verify_trace == (VerifyOutcome.FALSE_NEGATIVE,)
        assert result.truth is state  # nothing physically happened
        # ... but belief thinks the wall top was drawn:
        assert T("6B") in result.internal.perceptual.believed_hand
        report = check_consistency(result.internal, result.truth)
        assert not report.ok
        fields = {e.field for e in report.entries}
        assert "hand" in fields and "wall_count" in fields

    def test_false_positive_retries_are_idempotent(self):
        faults = FaultConfig(
            relocalize_success=1.0,
            sensor_confusion=SensorModel(false_positive=1.0),
        )
        state, result = run_draw(faults, DEFAULT_POLICY)
        assert result.outcome is ExecOutcome.UNRECOVERED
        assert result.attempts == 4
        assert result.verify_trace == (VerifyOutcome.FALSE_POSITIVE,) * 4
        # The physical action ran exactly once; retries only re-verified.
        assert result.truth.ply == state.ply + 1
        assert postcondition_holds(result.truth, DRAW, 0)
        assert result.internal.version == 0  # never committed

    def test_false_positive_then_commit_is_clean(self):
        faults = FaultConfig(
            relocalize_success=1.0,
            sensor_confusion=SensorModel(false_positive=0.5),
        )
        for seed in range(200):
            state, result = run_draw(faults, DEFAULT_POLICY, seed=seed)
            if result.committed and result.attempts >= 2:
                break
        else:
            pytest.fail("no seed produced a false-positive retry then commit")
        assert result.outcome is ExecOutcome.RECOVERED_THEN_COMMITTED
        assert result.verify_trace[:-1] == (VerifyOutcome.FALSE_POSITIVE,) * (
            result.attempts - 1
        )
        assert result.verify_trace[-1] is VerifyOutcome.VERIFIED
        assert result.truth.ply == state.ply + 1
        assert check_consistency(result.internal, result.truth).ok

    def test_phantom_draw_on_empty_wall_is_unrecovered(self):
        from dataclasses import replace

        state = draw_ready_state(wall_text="6B")
        state = replace(state, wall=replace(state.wall, draw_index=1))
        assert state.wall.remaining == 0
        internal = synchronized(state, 0)
        believed = replace(
            internal,
            perceptual=replace(internal.perceptual, believed_wall_count=1),
        )
        faults = FaultConfig(
            execution_base_failure=1.0,
            sensor_confusion=SensorModel(false_negative=1.0),
        )
        result = execute_primitive(
            believed, state, DRAW, faults, DEFAULT_POLICY, 0.0,
            np.random.default_rng(0),
        )
        # Sensed success, but there is no tile identity to commit.
        assert result.outcome is ExecOutcome.UNRECOVERED


class TestCommitBeforeVerify:
    CBV = RecoveryPolicy(commit_mode=CommitMode.COMMIT_BEFORE_VERIFY)

    def test_failure_corrupts_committed_state(self):
        faults = FaultConfig(execution_base_failure=1.0)
        state, result = run_draw(faults, self.CBV)
        assert result.outcome is ExecOutcome.COMMITTED
        assert result.attempts == 1
        assert result.truth is state
        assert result.internal.version == 1
        assert not check_consistency(result.internal, result.truth).ok

    def test_fault_free_matches_guarded_commit(self):
        state, guarded = run_draw(FAULT_FREE, DEFAULT_POLICY)
        _, unguarded = run_draw(FAULT_FREE, self.CBV)
        assert unguarded.committed
        assert guarded.truth == unguarded.truth
        assert (
            guarded.internal.perceptual.believed_hand
            == unguarded.internal.perceptual.believed_hand
        )
        assert check_consistency(unguarded.internal, unguarded.truth).ok


class TestClaimTransitionOverride:
    def test_claimed_pung_with_arbitration(self):
        """A granted claim executes with the full claim set resolved:
        seat 2 discards an 8C that the robot at seat 3 holds twice."""
        from .fixtures import QUIET_HANDS, rigged_state
        from tilelab.tiles import Suit

        state = rigged_state(QUIET_HANDS, "8C 7B 8B 6C 7C 1B",
                             missing=(Suit.DOTS, Suit.DOTS,
                                      Suit.CHARACTERS, Suit.CHARACTERS),
                             current_seat=2)
        internal = synchronized(state, 3)  # robot at seat 3 holds 8C 8C
        step = apply_action(state, Action(ActionKind.DRAW, 2))
        state = step.state
        internal = observe_event(internal, step.events[0])
        step = apply_action(state, Action(ActionKind.DISCARD, 2, T("8C")))
        state = step.state
        for e in step.events:
            internal = observe_event(internal, e)

        meld = Meld(MeldKind.PUNG, T("8C"), claimed_from=2)
        spec = PrimitiveSpec(PrimitiveKind.MELD, meld_detail=meld)
        claims = {3: Action(ActionKind.PUNG, 3, T("8C"))}
        result = execute_primitive(
            internal, state, spec, FAULT_FREE, DEFAULT_POLICY, 0.0,
            np.random.default_rng(0),
            transition=lambda st: resolve_claims(st, claims),
        )
        assert result.committed
        assert meld in result.truth.hands[3].melds
        assert check_consistency(result.internal, result.truth).ok


class TestClosedForm:
    def test_matches_geometric_oracle(self):
        for s in (0.0, 0.3, 0.7, 0.95, 1.0):
            for q in (0.0, 0.5, 0.9, 1.0):
                for k in range(5):
                    got = closed_form_overall_success(s, k, q)
                    want = oracle_retry_success(s, q, k)
                    assert got == pytest.approx(want, rel=1e-12), (s, q, k)

    def test_no_relocalization_means_single_shot(self):
        assert closed_form_overall_success(0.6, 3, 0.9, relocalize=False) == 0.6

    def test_monotone_in_retry_budget(self):
        vals = [closed_form_overall_success(0.7, k, 0.9) for k in range(6)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))

    def test_deployment_operating_point(self):
        assert closed_form_overall_success(0.992, 3, 0.9) >= 0.998

    def test_invalid_probability_rejected(self):
        with pytest.raises(ValueError):
            closed_form_overall_success(1.2)


class TestMonteCarloAgreement:
    def test_committed_fraction_matches_closed_form(self):
        faults = FaultConfig(execution_base_failure=0.3, relocalize_success=0.9)
        state = draw_ready_state()
        internal = synchronized(state, 0)
        rng = np.random.default_rng(101)
        n = 8_000
        committed = 0
        for _ in range(n):
            result = execute_primitive(
                internal, state, DRAW, faults, DEFAULT_POLICY, 0.0, rng
            )
            committed += result.committed
        p = closed_form_overall_success(0.7, 3, 0.9)
        sigma = math.sqrt(n * p * (1 - p))
        assert abs(committed - n * p) <= 3 * sigma
