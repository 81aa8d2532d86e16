"""Session format, noise injection, collection, and dataset loading checks."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from deskbot import datakit
from deskbot.datakit import (
    CONTROL_HZ,
    DataError,
    DemoRecord,
    Dataset,
    NoiseProcess,
    NoiseSchedule,
    RouteDepartureError,
    SessionWriter,
    apply_steering_delta,
    collect,
    dataset_from_sessions,
    dataset_stats,
    load_dataset,
    load_session,
    record_from_json,
    record_to_json,
)
from deskbot.firmware import StatusMsg
from deskbot.simcore import Action, CameraConfig

CAM = CameraConfig(width=64, height=24)


def sample_record(frame_id=0, t=0.0) -> DemoRecord:
    return DemoRecord(
        frame_id=frame_id,
        timestamp=t,
        image_path=f"frames/{frame_id:06d}.png",
        command="straight",
        label_action=(0.62, 0.58),
        applied_action=(0.7, 0.5),
        ticks_l=120,
        ticks_r=118,
        sonar=87,
        battery=11063,
        noise_active=True,
    )


# ------------------------------------------------------------ manifest rows


def test_record_json_roundtrip():
    rec = sample_record()
    assert record_from_json(record_to_json(rec)) == rec


def test_record_rejects_wrong_schema_version():
    line = record_to_json(sample_record()).replace('"v":1', '"v":2', 1)
    with pytest.raises(DataError, match="version"):
        record_from_json(line)


@pytest.mark.parametrize(
    "mutate",
    [
        lambda line: line[:-10],  # truncated JSON
        lambda line: line.replace('"frame_id":0', '"frame_id":"x"'),
        lambda line: line.replace('"label_action":[0.62,0.58]', '"label_action":[0.62]'),
        lambda line: line.replace('"sonar":87,', ""),
    ],
)
def test_record_rejects_malformed(mutate):
    with pytest.raises(DataError):
        record_from_json(mutate(record_to_json(sample_record())))


# ------------------------------------------------------------------ noise


def test_noise_schedule_peak_validation():
    with pytest.raises(ValueError):
        NoiseSchedule(peak_range=(0.5, 1.2))


def test_noise_process_is_deterministic():
    times = np.arange(0, 60, 0.05)
    a = NoiseProcess(NoiseSchedule(), np.random.default_rng(3))
    b = NoiseProcess(NoiseSchedule(), np.random.default_rng(3))
    assert [a.delta(t) for t in times] == [b.delta(t) for t in times]


def test_noise_episodes_are_triangular_and_disjoint():
    sched = NoiseSchedule(mean_interval=2.0)
    proc = NoiseProcess(sched, np.random.default_rng(7))
    dt = 0.01
    deltas = np.array([proc.delta(k * dt) for k in range(20_000)])
    assert np.abs(deltas).max() <= sched.peak_range[1]

    # Carve the timeline into episodes (maximal nonzero runs).
    nz = deltas != 0.0
    edges = np.flatnonzero(np.diff(nz.astype(int)))
    starts = edges[::2] + 1 if nz[0] == 0 else None
    assert starts is not None  # first arrival is exponential, almost surely > 0
    runs = []
    i = 0
    while i < len(deltas):
        if nz[i]:
            j = i
            while j < len(deltas) and nz[j]:
                j += 1
            runs.append((i, j))
            i = j
        else:
            i += 1
    assert len(runs) >= 5
    lo, hi = sched.duration_range
    for i, j in runs[:-1]:  # last run may be clipped by the horizon
        dur = (j - i) * dt
        assert lo - 0.05 <= dur <= hi + 0.05
        episode = np.abs(deltas[i:j])
        peak_idx = int(episode.argmax())
        # Strictly rising to the peak, strictly falling after it.
        assert np.all(np.diff(episode[: peak_idx + 1]) > 0)
        assert np.all(np.diff(episode[peak_idx:]) < 0)
        assert lo_peak(episode.max(), sched)
        # One signed side per episode.
        signs = np.unique(np.sign(deltas[i:j]))
        assert len(signs) == 1


def lo_peak(peak: float, sched: NoiseSchedule) -> bool:
    # The sampled peak is attained mid-episode; the max over a 10 ms grid
    # sits within one step of it.
    return peak <= sched.peak_range[1]


def test_apply_steering_delta_splits_and_clamps():
    a = apply_steering_delta(Action(0.6, 0.6), 0.4)
    assert (a.a_l, a.a_r) == pytest.approx((0.8, 0.4), abs=1e-12)
    b = apply_steering_delta(Action(0.9, 0.1), 0.4)
    assert (b.a_l, b.a_r) == (1.0, 0.0)  # clamped
    c = apply_steering_delta(Action(0.5, 0.5), -0.2)
    assert (c.a_l, c.a_r) == pytest.approx((0.4, 0.6), abs=1e-12)


# ------------------------------------------------------------ session writer


def make_status() -> StatusMsg:
    return StatusMsg(ticks_left=1, ticks_right=2, sonar_cm=50, millivolts=11100)


def test_session_writer_roundtrip(tmp_path):
    meta = {"v": 1, "route": "R1", "seed": 0}
    w = SessionWriter(tmp_path / "s", meta)
    img = np.zeros((4, 6, 3), dtype=np.uint8)
    img[1, 2] = (255, 128, 0)
    w.add(img, 0.0, "straight", Action(0.5, 0.5), Action(0.6, 0.4), make_status(), False)
    w.add(img, 0.05, "left", Action(0.7, 0.3), Action(0.7, 0.3), make_status(), True)
    d = w.finalize(valid=True)
    meta_doc = json.loads((d / "meta.json").read_text())
    assert meta_doc["frames"] == 2 and meta_doc["valid"] is True
    session = load_session(d)
    assert [r.command for r in session.records] == ["straight", "left"]
    stored = np.asarray(Image.open(d / "frames" / "000000.png"))
    np.testing.assert_array_equal(stored, img)


def test_session_writer_validates_inputs(tmp_path):
    w = SessionWriter(tmp_path / "s", {"v": 1})
    img = np.zeros((4, 6, 3), dtype=np.uint8)
    w.add(img, 0.0, "straight", Action(0.5, 0.5), Action(0.5, 0.5), make_status(), False)
    with pytest.raises(ValueError, match="increase"):
        w.add(img, 0.0, "straight", Action(0.5, 0.5), Action(0.5, 0.5), make_status(), False)
    with pytest.raises(ValueError, match="uint8"):
        w.add(img.astype(np.float32), 1.0, "straight", Action(0.5, 0.5), Action(0.5, 0.5),
              make_status(), False)
    w.finalize(valid=False)
    with pytest.raises(DataError, match="invalid"):
        load_session(tmp_path / "s")


# -------------------------------------------------------------- collection


def test_collect_writes_exactly_requested_frames(tmp_path):
    d = collect(tmp_path, "R1", 0.05, noise=True, seed=4, camera=CAM)
    assert d.name == "r1-s0004"
    session = load_session(d)
    assert len(session.records) == round(0.05 * 60 * CONTROL_HZ)
    assert session.meta["route"] == "R1"
    assert session.meta["driver"] == "scripted"
    assert session.meta["camera"]["width"] == 64
    ts = [r.timestamp for r in session.records]
    assert ts == [round(k * 0.05, 3) for k in range(len(ts))]


def test_collect_is_byte_deterministic(tmp_path):
    d1 = collect(tmp_path / "a", "R2", 0.05, noise=True, seed=9, camera=CAM)
    d2 = collect(tmp_path / "b", "R2", 0.05, noise=True, seed=9, camera=CAM)
    assert (d1 / "manifest.jsonl").read_bytes() == (d2 / "manifest.jsonl").read_bytes()
    assert (d1 / "meta.json").read_bytes() == (d2 / "meta.json").read_bytes()
    assert (d1 / "frames" / "000031.png").read_bytes() == (
        d2 / "frames" / "000031.png"
    ).read_bytes()


def test_collect_seed_changes_content(tmp_path):
    d1 = collect(tmp_path / "a", "R2", 0.05, noise=True, seed=1, camera=CAM)
    d2 = collect(tmp_path / "b", "R2", 0.05, noise=True, seed=2, camera=CAM)
    assert (d1 / "manifest.jsonl").read_bytes() != (d2 / "manifest.jsonl").read_bytes()


def test_collect_noise_semantics(tmp_path):
    d = collect(tmp_path, "R1", 0.25, noise=True, seed=11, camera=CAM)
    session = load_session(d)
    noisy = [r for r in session.records if r.noise_active]
    clean = [r for r in session.records if not r.noise_active]
    assert noisy and clean
    # Noise-free steps apply the label verbatim; noisy steps steer away from
    # it anti-symmetrically (up to the [0,1] clamp).
    for r in clean:
        assert r.applied_action == r.label_action
    diffs = [
        (r.applied_action[0] - r.label_action[0], r.applied_action[1] - r.label_action[1])
        for r in noisy
    ]
    unclamped = [
        (dl, dr)
        for (dl, dr), r in zip(diffs, noisy)
        if 0.0 < r.applied_action[0] < 1.0 and 0.0 < r.applied_action[1] < 1.0
    ]
    assert unclamped
    for dl, dr in unclamped:
        assert abs(dl + dr) < 1e-12 and dl != 0.0


def test_collect_noise_off_never_flags(tmp_path):
    d = collect(tmp_path, "R1", 0.05, noise=False, seed=5, camera=CAM)
    session = load_session(d)
    assert session.meta["noise"] is None
    assert all(not r.noise_active for r in session.records)
    assert all(r.applied_action == r.label_action for r in session.records)


def test_collect_departure_voids_session(tmp_path):
    def runaway(world, segment):
        return Action(1.0, 1.0), "straight"  # never turns

    with pytest.raises(RouteDepartureError, match="left the path"):
        collect(tmp_path, "R1", 2.0, noise=False, seed=0, camera=CAM, driver=runaway)
    (bad,) = tmp_path.iterdir()
    meta = json.loads((bad / "meta.json").read_text())
    assert meta["valid"] is False and meta["driver"] == "external"
    with pytest.raises(DataError, match="invalid"):
        load_session(bad)


def test_collect_rejects_bad_minutes(tmp_path):
    with pytest.raises(ValueError):
        collect(tmp_path, "R1", 0.0, camera=CAM)


def test_collect_camera_jitter_perturbs_session(tmp_path):
    base = collect(tmp_path / "a", "R1", 0.05, noise=False, seed=3, camera=CAM)
    jittered = collect(
        tmp_path / "b", "R1", 0.05, noise=False, seed=3, camera=CAM,
        jitter=datakit.CameraJitter(),
    )
    meta = json.loads((jittered / "meta.json").read_text())
    assert meta["camera"]["pitch_deg"] != json.loads((base / "meta.json").read_text())["camera"]["pitch_deg"]
    assert (base / "frames" / "000000.png").read_bytes() != (
        jittered / "frames" / "000000.png"
    ).read_bytes()


# ----------------------------------------------------------------- loading


def write_fake_session(d: Path, timestamps: list[float], valid=True, meta_frames=None):
    (d / "frames").mkdir(parents=True)
    lines = []
    for i, t in enumerate(timestamps):
        rec = sample_record(frame_id=i, t=t)
        lines.append(record_to_json(rec))
        Image.fromarray(np.zeros((2, 2, 3), np.uint8)).save(d / f"frames/{i:06d}.png")
    (d / "manifest.jsonl").write_text("\n".join(lines) + "\n")
    meta = {"v": 1, "valid": valid, "frames": meta_frames if meta_frames is not None else len(lines)}
    (d / "meta.json").write_text(json.dumps(meta))


def test_load_session_rejects_non_session_dir(tmp_path):
    with pytest.raises(DataError, match="not a session directory"):
        load_session(tmp_path)


def test_load_session_rejects_bad_timestamps(tmp_path):
    write_fake_session(tmp_path / "s", [0.1, 0.05])
    with pytest.raises(DataError, match="increasing"):
        load_session(tmp_path / "s")


def test_load_session_rejects_missing_frame(tmp_path):
    write_fake_session(tmp_path / "s", [0.0, 0.05])
    (tmp_path / "s" / "frames" / "000001.png").unlink()
    with pytest.raises(DataError, match="missing frames"):
        load_session(tmp_path / "s")


def test_load_session_rejects_orphan_frame(tmp_path):
    write_fake_session(tmp_path / "s", [0.0, 0.05])
    Image.fromarray(np.zeros((2, 2, 3), np.uint8)).save(tmp_path / "s/frames/000009.png")
    with pytest.raises(DataError, match="without manifest"):
        load_session(tmp_path / "s")


def test_load_session_rejects_count_mismatch(tmp_path):
    write_fake_session(tmp_path / "s", [0.0, 0.05], meta_frames=5)
    with pytest.raises(DataError, match="counts"):
        load_session(tmp_path / "s")


def test_load_session_rejects_wrong_meta_version(tmp_path):
    write_fake_session(tmp_path / "s", [0.0])
    meta = json.loads((tmp_path / "s" / "meta.json").read_text())
    meta["v"] = 99
    (tmp_path / "s" / "meta.json").write_text(json.dumps(meta))
    with pytest.raises(DataError, match="version"):
        load_session(tmp_path / "s")


def test_corrupt_png_fails_materialization(tmp_path):
    write_fake_session(tmp_path / "s", [0.0])
    (tmp_path / "s" / "frames" / "000000.png").write_bytes(b"not a png at all")
    session = load_session(tmp_path / "s")
    with pytest.raises(DataError, match="unreadable"):
        dataset_from_sessions([session])


def test_dataset_materialization_and_steering(tmp_path):
    d = collect(tmp_path, "R1", 0.05, noise=True, seed=8, camera=CAM)
    ds = dataset_from_sessions([load_session(d)])
    n = round(0.05 * 60 * CONTROL_HZ)
    assert ds.images.shape == (n, 24, 64, 3) and ds.images.dtype == np.uint8
    assert ds.commands.shape == (n, 3)
    assert ds.actions.shape == (n, 2) and ds.actions.dtype == np.float32
    np.testing.assert_allclose(ds.steering, ds.actions[:, 0] - ds.actions[:, 1])
    assert ds.sessions == [str(d)]
    imgs, cmds, acts = ds.arrays()
    assert imgs is ds.images and cmds is ds.commands and acts is ds.actions


def test_load_dataset_splits_at_session_level(tmp_path):
    dirs = [
        collect(tmp_path, "R1", 0.02, noise=False, seed=s, camera=CAM,
                session_name=f"s{s}")
        for s in range(5)
    ]
    train, val = load_dataset(dirs, split_seed=0, val_fraction=0.2)
    assert len(train.sessions) == 4 and len(val.sessions) == 1
    assert set(train.sessions) | set(val.sessions) == {str(d) for d in dirs}
    assert not set(train.sessions) & set(val.sessions)
    # Deterministic for a fixed split seed.
    train2, val2 = load_dataset(dirs, split_seed=0, val_fraction=0.2)
    assert train2.sessions == train.sessions and val2.sessions == val.sessions


def test_load_dataset_validation(tmp_path):
    with pytest.raises(ValueError, match="no session"):
        load_dataset([])
    d = collect(tmp_path, "R1", 0.02, noise=False, seed=0, camera=CAM)
    with pytest.raises(ValueError, match="two sessions"):
        load_dataset([d])
    train, val = load_dataset([d], val_fraction=0.0)
    assert len(val) == 0 and len(train) == round(0.02 * 60 * CONTROL_HZ)


def test_dataset_stats(tmp_path):
    d = collect(tmp_path, "R1", 0.05, noise=True, seed=2, camera=CAM)
    ds = dataset_from_sessions([load_session(d)])
    stats = dataset_stats(ds)
    assert stats.size == len(ds)
    assert stats.steering_hist.sum() == len(ds)
    assert sum(stats.command_counts.values()) == len(ds)
    assert 0.0 <= stats.noise_fraction <= 1.0
    with pytest.raises(ValueError):
        dataset_stats(Dataset(
            images=np.zeros((0, 1, 1, 3), np.uint8),
            commands=np.zeros((0, 3), np.float32),
            actions=np.zeros((0, 2), np.float32),
            noise_active=np.zeros(0, bool),
        ))
