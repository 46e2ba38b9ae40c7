import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aomi.onset import (DegenerateReferenceError, OnsetConfig, OnsetResult, _first_run, detect,
                        detect_channels, fuse)

FS = 250.0


def _env(seed=0, n=1500, cue=500):
    env = np.abs(np.random.default_rng(seed).normal(1.0, 0.1, n))
    return env, cue


def test_threshold_from_reference_window():
    env, cue = _env()
    r = detect(env, FS, cue, OnsetConfig(h=3.0))
    ref = env[cue - 500:cue]
    assert r.reference_mean == pytest.approx(ref.mean(), rel=1e-14)
    assert r.reference_sd == pytest.approx(ref.std(ddof=1), rel=1e-14)
    assert r.threshold == pytest.approx(ref.mean() + 3.0 * ref.std(ddof=1), rel=1e-14)


@pytest.mark.parametrize("run,expect", [(5, None), (6, 700), (7, 700)])
def test_run_length_rule(run, expect):
    env, cue = _env()
    env[700:700 + run] = 50.0
    assert detect(env, FS, cue, OnsetConfig(h=10, E=5)).onset_sample == expect


def test_short_burst_at_cue_is_ignored():
    env, cue = _env()
    env[cue:cue + 2] = 80.0                 # too short to count
    env[900:920] = 80.0
    r = detect(env, FS, cue, OnsetConfig(h=10, E=5))
    assert r.onset_sample == 900


def test_no_room_for_reference_and_flat_reference():
    env, _ = _env()
    with pytest.raises(ValueError):
        detect(env, FS, 100)
    with pytest.raises(DegenerateReferenceError):
        detect(np.ones(2000), FS, 600)
    with pytest.raises(ValueError):
        OnsetConfig(h=0)
    with pytest.raises(ValueError):
        OnsetConfig(E=0)


@given(st.lists(st.booleans(), max_size=80), st.integers(1, 10))
def test_first_run_matches_scan(mask, k):
    mask = np.array(mask, dtype=bool)
    expect, run = None, 0
    for i, v in enumerate(mask):
        run = run + 1 if v else 0
        if run == k:
            expect = i - k + 1
            break
    assert _first_run(mask, k) == expect


@given(st.integers(0, 2**31 - 1), st.floats(1e-3, 1e3), st.floats(-50, 50))
def test_onset_invariant_to_affine_gain(seed, scale, shift):
    env, cue = _env(seed)
    env[800:900] += 2.0
    base = detect(env, FS, cue, OnsetConfig(h=5))
    moved = detect(scale * env + shift, FS, cue, OnsetConfig(h=5))
    assert base.onset_sample == moved.onset_sample == 800


@given(st.integers(0, 2**31 - 1), st.floats(2, 20), st.integers(1, 8))
def test_detected_onset_satisfies_rule(seed, h, E):
    rng = np.random.default_rng(seed)
    env = np.abs(rng.normal(0, 1, 1500)) + rng.uniform(0, 5) * (np.arange(1500) > 1000)
    cue = 500
    r = detect(env, FS, cue, OnsetConfig(h=h, E=E))
    above = env > r.threshold
    if r.onset_sample is None:
        assert _first_run(above[cue:], E + 1) is None
    else:
        s = r.onset_sample
        assert s >= cue and above[s:s + E + 1].all()
        assert _first_run(above[cue:s + E], E + 1) in (None, s - cue)


def test_fuse_takes_earliest_channel():
    env, cue = _env()
    e2 = env.copy()
    env[900:950] = 40
    e2[750:800] = 40
    r = detect_channels(np.stack([env, e2, np.abs(env - 0.5) + 0.01]), FS, cue,
                        OnsetConfig(h=10), ["TA_L", "RF_L", "GL_L"])
    assert r.onset_sample == 750 and r.channel == "RF_L"
    assert r.fusion == "earliest" and len(r.per_channel) == 3
    assert [p.onset_sample for p in r.per_channel][:2] == [900, 750]


def test_fuse_without_detection():
    res = [OnsetResult(None, 1.0, 0.5, 0.1, "a"), OnsetResult(None, 2.0, 0.5, 0.1, "b")]
    f = fuse(res)
    assert f.onset_sample is None and f.channel is None and f.per_channel == tuple(res)
    assert fuse([]) is None
