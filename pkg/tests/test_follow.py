"""Person-follower gating, tracking, servo law, and closed-loop episodes."""

from __future__ import annotations

import dataclasses

import pytest

from deskbot.follow import (
    BOX_RATE_LIMIT,
    CENTERING_BAND,
    CONFIDENCE_GATE,
    FollowState,
    ReplayDetections,
    detections_to_jsonl,
    follow_episode,
    select_target,
    servo,
)
from deskbot.simcore import Action, Detection


def det(cx, conf=1.0, *, cy=0.5, w=0.2, h=0.4, kind="person") -> Detection:
    return Detection(cx=cx, cy=cy, w=w, h=h, confidence=conf, kind=kind)


# ----------------------------------------------------------------- gating


def test_confidence_gate_blocks_adoption():
    state = select_target([det(0.5, conf=0.49)], FollowState())
    assert state.target is None


def test_confidence_gate_is_inclusive():
    state = select_target([det(0.5, conf=CONFIDENCE_GATE)], FollowState())
    assert state.target is not None and state.target.confidence == 0.5


def test_confidence_gate_blocks_reassociation():
    state = select_target([det(0.5, conf=0.9)], FollowState())
    state = select_target([det(0.5, conf=0.49)], state)  # same box, low conf
    assert state.age == 1  # treated as a miss, not a match


def test_other_classes_are_invisible():
    state = select_target([det(0.5, conf=0.99, kind="obstacle")], FollowState())
    assert state.target is None


def test_adoption_prefers_highest_confidence():
    state = select_target([det(0.2, conf=0.6), det(0.8, conf=0.9)], FollowState())
    assert state.target.cx == 0.8


# ----------------------------------------------------------- association


def test_association_beats_confidence():
    state = select_target([det(0.3, conf=0.6)], FollowState())
    # A brighter candidate far away must not steal the track.
    state = select_target([det(0.31, conf=0.61), det(0.9, conf=0.99)], state)
    assert state.target.cx == 0.31


def test_low_iou_is_a_miss():
    state = select_target([det(0.2, conf=0.9)], FollowState())
    state = select_target([det(0.75, conf=0.9)], state)  # zero overlap
    assert state.target.cx == 0.2 and state.age == 1


def test_patience_then_fresh_adoption():
    state = FollowState(lost_patience=3)
    state = select_target([det(0.2, conf=0.9)], state)
    for k in range(1, 4):
        state = select_target([], state)
        assert state.target is not None and state.age == k
    # Patience exhausted: the old track dies and a new candidate is adopted.
    state = select_target([det(0.9, conf=0.7)], state)
    assert state.target.cx == 0.9 and state.age == 0 and state.box_rate == (0.0, 0.0, 0.0, 0.0)


def test_patience_exhaustion_without_candidates():
    state = FollowState(lost_patience=2)
    state = select_target([det(0.2, conf=0.9)], state)
    for _ in range(3):
        state = select_target([], state)
    assert state.target is None and state.age == 0


def test_motion_compensated_association_tracks_fast_sweep():
    # Steps of 0.18 in cx per frame exceed what the stale box overlaps
    # (IoU ~ 0.05), but the constant-velocity prediction keeps IoU >= 0.3.
    state = select_target([det(0.10)], FollowState())
    state = select_target([det(0.20)], state)  # establishes box_rate = +0.1
    assert state.box_rate[0] == pytest.approx(0.1)
    stale = dataclasses.replace(state.target)
    nxt = det(0.38)
    assert stale.iou(nxt) < 0.3  # would be lost without prediction
    state = select_target([nxt], state)
    assert state.target.cx == 0.38 and state.age == 0


def test_box_rate_is_clipped():
    state = select_target([det(0.3, w=0.9)], FollowState())
    # Offset 0.3 keeps IoU at 0.5 (still associated) but exceeds the
    # per-frame credit limit, so the stored rate saturates.
    state = select_target([det(0.6, w=0.9)], state)
    assert state.target.cx == 0.6
    assert state.box_rate[0] == BOX_RATE_LIMIT


def test_prediction_spans_missed_frames():
    # Rate 0.1/frame, then two misses: the prediction coasts 3 steps ahead,
    # re-acquiring a box the stale one no longer overlaps.
    state = select_target([det(0.10)], FollowState())
    state = select_target([det(0.20)], state)
    state = select_target([], state)
    state = select_target([], state)
    assert state.age == 2
    state = select_target([det(0.50)], state)
    assert state.target.cx == 0.50 and state.age == 0


# -------------------------------------------------------------------- servo


def test_servo_without_target_is_stationary():
    assert servo(FollowState()) == Action(0.0, 0.0)


def test_servo_pure_centering():
    state = FollowState()
    state.target = det(0.6, h=state.target_height)
    a = servo(state)
    # u = 1.2 * 0.1 = 0.12 split across the wheels; no throttle error.
    assert (a.a_l, a.a_r) == pytest.approx((0.06, -0.06))


def test_servo_pure_throttle():
    state = FollowState()
    state.target = det(0.5, h=0.25)
    a = servo(state)
    assert (a.a_l, a.a_r) == pytest.approx((0.4, 0.4))


def test_servo_throttle_clamps():
    state = FollowState()
    state.target = det(0.5, h=0.9)  # too close: throttle floors at 0
    assert servo(state) == Action(0.0, 0.0)
    state.target = det(0.5, h=1e-9)
    a = servo(state)
    assert a.a_l == a.a_r == pytest.approx(min(1.0, 2.0 * 0.45))


# ------------------------------------------------------------------ replay


def test_replay_roundtrip(tmp_path):
    frames = [[det(0.4, conf=0.8)], [], [det(0.6, conf=0.9), det(0.2, conf=0.7)]]
    path = tmp_path / "dets.jsonl"
    detections_to_jsonl(frames, path)
    replay = ReplayDetections(path)
    out = [replay(None) for _ in range(5)]
    assert out[0] == frames[0]
    assert out[1] == []
    assert out[2] == frames[2]
    assert out[3] == [] and out[4] == []  # exhausted


# ---------------------------------------------------------------- episodes


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_follow_episode_centers_without_collisions(seed):
    result = follow_episode(duration=60.0, seed=seed, keep_trace=False)
    assert result.frames == 1200
    assert result.centering_rate >= 0.95
    assert result.collisions == 0


def test_follow_episode_counts_laps():
    # The person's circuit is 28 m at 0.35 m/s, one lap every 80 s.
    result = follow_episode(duration=90.0, seed=0, keep_trace=False)
    assert result.person_laps == 1


def test_follow_episode_is_deterministic():
    a = follow_episode(duration=10.0, seed=3)
    b = follow_episode(duration=10.0, seed=3)
    assert a.trace == b.trace
    assert a.summary() == b.summary()


def test_follow_episode_trace_and_summary():
    r = follow_episode(duration=2.0, seed=0)
    assert len(r.trace) == 40
    row = r.trace[0]
    assert set(row) == {"t", "cx", "h", "a_l", "a_r"}
    assert set(r.summary()) == {"frames", "centering_rate", "collisions", "person_laps"}
    assert 0.0 <= r.centering_rate <= 1.0
    assert CENTERING_BAND == 0.15
