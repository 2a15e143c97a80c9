import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seatcount.errors import InvalidInput
from seatcount.motion import (FidgetProcessParams, LandmarkTrack, SpeedProfile,
                              landmarks_to_speeds, pixel_scale_factor, read_landmark_csv,
                              read_profile_csv, synth_fidget_profile, write_landmark_csv,
                              write_profile_csv)


@pytest.mark.parametrize("d_ip, expected", [(63.36, 0.001), (126.72, 0.0005), (31.68, 0.002)])
def test_pixel_scale_factor(d_ip, expected):
    assert pixel_scale_factor(d_ip) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("bad", [0.0, -3.0, float("nan"), float("inf")])
def test_pixel_scale_factor_rejects(bad):
    with pytest.raises(InvalidInput):
        pixel_scale_factor(bad)


def _track(xy, fr=30.0, d_ip=63.36, vis=None):
    xy = np.asarray(xy, dtype=float)
    if xy.ndim == 2:
        xy = xy[None]
    v = np.ones(xy.shape[:2]) if vis is None else np.asarray(vis, dtype=float).reshape(xy.shape[:2])
    return LandmarkTrack(fr, np.concatenate([xy, v[..., None]], axis=2), d_ip)


def test_stationary_joint_has_zero_speed():
    xy = np.tile([[120.0, 80.0]], (90, 1))
    prof = landmarks_to_speeds(_track(xy))
    assert prof.sample_rate == 30.0
    assert np.all(prof.channels == 0)


def test_one_pixel_per_frame_is_three_cm_per_second():
    xy = np.column_stack([np.arange(120.0), np.zeros(120)])
    # a constant passes the low-pass unchanged
    prof = landmarks_to_speeds(_track(xy), lowpass_cutoff_hz=6.0)
    assert prof.channels.shape == (1, 119)
    np.testing.assert_allclose(prof.channels, 0.03, rtol=1e-9)


def test_spike_is_attenuated_by_lowpass():
    xy = np.zeros((200, 2))
    xy[100] = [40.0, 0.0]
    track = _track(xy)
    # unfiltered differencing oracle
    raw = np.linalg.norm(np.diff(xy, axis=0), axis=1) * 30.0 * 0.06336 / 63.36
    assert raw.max() == pytest.approx(1.2)
    filtered = landmarks_to_speeds(track, lowpass_cutoff_hz=2.0).channels.max()
    assert 0 < filtered < raw.max()


def test_low_visibility_frames_contribute_zero():
    xy = np.column_stack([np.arange(60.0) * 3, np.zeros(60)])
    vis = np.ones(60)
    vis[:] = 0.2
    prof = landmarks_to_speeds(_track(xy, vis=vis))
    assert np.all(prof.channels == 0)


@pytest.mark.parametrize("kwargs", [dict(lowpass_cutoff_hz=15.0), dict(lowpass_cutoff_hz=0.0)])
def test_cutoff_outside_band_rejected(kwargs):
    xy = np.zeros((30, 2))
    with pytest.raises(InvalidInput):
        landmarks_to_speeds(_track(xy), **kwargs)


def test_track_needs_two_frames():
    with pytest.raises(InvalidInput):
        _track(np.zeros((1, 2)))


@settings(max_examples=25, deadline=None)
@given(dx=st.floats(-500, 500), dy=st.floats(-500, 500), scale=st.floats(0.25, 4.0),
       seed=st.integers(0, 2**16))
def test_translation_and_scale_invariance(dx, dy, scale, seed):
    rng = np.random.default_rng(seed)
    xy = np.cumsum(rng.normal(0, 2, size=(3, 80, 2)), axis=1) + 200
    base = landmarks_to_speeds(_track(xy))
    shifted = landmarks_to_speeds(_track(xy + [dx, dy]))
    scaled = landmarks_to_speeds(_track(xy * scale, d_ip=63.36 * scale))
    np.testing.assert_allclose(shifted.channels, base.channels, atol=1e-9)
    np.testing.assert_allclose(scaled.channels, base.channels, rtol=1e-9, atol=1e-12)


def test_zero_peak_range_gives_silent_profile():
    p = synth_fidget_profile(FidgetProcessParams(peak_speed_range=(0.0, 0.0), seed=3), 60, 100)
    assert np.all(p.channels == 0)


def test_synth_is_deterministic():
    prm = FidgetProcessParams(seed=11)
    a = synth_fidget_profile(prm, 120, 100)
    b = synth_fidget_profile(prm, 120, 100)
    np.testing.assert_array_equal(a.channels, b.channels)
    c = synth_fidget_profile(FidgetProcessParams(seed=12), 120, 100)
    assert not np.array_equal(a.channels, c.channels)


def test_duty_cycle_one_hour():
    # renewal-reward oracle: long-run busy fraction = fidget / (fidget + silent)
    prm = FidgetProcessParams(silent_mean_s=9.0, fidget_mean_s=1.0, n_body_parts=4, seed=5)
    p = synth_fidget_profile(prm, 3600, 50)
    frac = (p.channels > 0).mean(axis=1)
    assert np.all(np.abs(frac - 0.1) <= 0.02), frac


def test_speed_profile_validation():
    with pytest.raises(InvalidInput):
        SpeedProfile(100, [[0.1, -0.2]])
    with pytest.raises(InvalidInput):
        SpeedProfile(0, [[0.1]])
    with pytest.raises(InvalidInput):
        FidgetProcessParams(peak_speed_range=(0.3, 0.1))


def test_landmark_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    xy = rng.uniform(0, 300, size=(2, 12, 2))
    vis = rng.uniform(0, 1, size=(2, 12))
    track = _track(xy, vis=vis)
    meta = write_landmark_csv(track, tmp_path / "lm.csv")
    back = read_landmark_csv(tmp_path / "lm.csv", meta)
    np.testing.assert_allclose(back.joints, track.joints)
    assert back.frame_rate == track.frame_rate
    header = (tmp_path / "lm.csv").read_text().splitlines()[0]
    assert header == "frame,joint,x_px,y_px,visibility"


def test_profile_csv_roundtrip(tmp_path):
    p = synth_fidget_profile(FidgetProcessParams(seed=1, n_body_parts=2), 5, 100)
    write_profile_csv(p, tmp_path / "p.csv")
    assert (tmp_path / "p.csv").read_text().startswith("t_s,part_0,part_1\n")
    back = read_profile_csv(tmp_path / "p.csv")
    assert back.sample_rate == pytest.approx(100)
    np.testing.assert_allclose(back.channels, p.channels, rtol=1e-9, atol=1e-12)
