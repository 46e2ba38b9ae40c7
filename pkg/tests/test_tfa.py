import numpy as np
import pytest

from aomi.core import SizeError
from aomi.tfa import ERSPConfig, ersp, morlet_power, morlet_wavelet

FS = 250.0


def test_wavelet_shape_and_normalisation():
    w = morlet_wavelet(10.0, 6.0, FS)
    sd = 6.0 / (2 * np.pi * 10.0)
    assert len(w) == 2 * int(np.ceil(3 * sd * FS)) + 1
    assert np.abs(w).sum() == pytest.approx(1.0)
    assert abs(w[len(w) // 2]) == pytest.approx(np.abs(w).max())


def test_tone_power_is_quarter_amplitude_squared():
    # unit-sum envelope: a cosine of amplitude A gives |A/2| at its own frequency
    cfg = ERSPConfig(freqs_hz=(10.0, 20.0), cycles=(7.0, 7.0), n_out_times=50)
    t = np.arange(int(4 * FS)) / FS
    p = morlet_power(3.0 * np.cos(2 * np.pi * 10 * t), FS, cfg)
    # truncating the envelope at 3 SD leaves a ripple of about 0.1 %
    np.testing.assert_allclose(p.power[0, 0], 9.0 / 4, rtol=2e-3)
    assert p.power[0, 1].max() < 1e-3


def test_cycles_ramp_linearly():
    cfg = ERSPConfig(freqs_hz=(4.0, 22.0, 40.0))
    np.testing.assert_allclose(cfg.cycles_at(np.array(cfg.freqs_hz)), [3.0, 9.0, 15.0])
    assert np.all(ERSPConfig(freqs_hz=(10.0,)).cycles_at(10.0) == 3.0)


def test_output_times_inside_valid_span():
    cfg = ERSPConfig()
    p = morlet_power(np.zeros((2, 1000)), FS, cfg)
    lo, hi = p.valid
    assert p.power.shape == (2, 40, 200)
    assert p.times_idx[0] == lo and p.times_idx[-1] == hi
    with pytest.raises(SizeError):
        morlet_power(np.zeros(100), FS, cfg)


def test_config_validation():
    with pytest.raises(ValueError):
        ERSPConfig(cycles=(0.5, 3.0))
    with pytest.raises(ValueError):
        ERSPConfig(p=1.0)
    with pytest.raises(ValueError):
        ERSPConfig(baseline_s=(0.0, -1.0))


def _noise(n_trials=12, dur=4.0, seed=0):
    return np.random.default_rng(seed).normal(size=(n_trials, int(dur * FS)))


def test_ersp_shapes_and_baseline_zero_mean():
    cfg = ERSPConfig(n_boot=200, n_out_times=80)
    res = ersp(_noise(), FS, cfg, tmin_s=-1.5)
    assert res.power_db.shape == res.significant.shape == (1, 40, 80)
    assert res.null_bounds.shape == (1, 40, 2)
    assert np.all(res.null_bounds[..., 0] < res.null_bounds[..., 1])
    assert res.times_s[0] >= -1.5 and res.times_s[-1] <= 2.5


def test_ersp_scale_invariant_and_seeded():
    x = _noise(seed=1)
    cfg = ERSPConfig(n_boot=200, n_out_times=60, seed=3)
    a = ersp(x, FS, cfg, -1.5)
    b = ersp(1e-6 * x, FS, cfg, -1.5)
    np.testing.assert_allclose(a.power_db, b.power_db, atol=1e-9)
    np.testing.assert_array_equal(a.significant, b.significant)
    c = ersp(x, FS, cfg, -1.5)
    np.testing.assert_array_equal(a.significant, c.significant)


def test_ersp_flags_injected_desynchronisation():
    rng = np.random.default_rng(2)
    t = -1.5 + np.arange(int(4 * FS)) / FS
    gain = np.where(t >= 0.5, 0.25, 1.0)
    x = np.array([gain * np.sin(2 * np.pi * 12 * t + ph) for ph in rng.uniform(0, 6, 20)])
    x += 0.05 * rng.normal(size=x.shape)
    cfg = ERSPConfig(freqs_hz=(12.0, 30.0), n_boot=400, n_out_times=60)
    res = ersp(x, FS, cfg, -1.5)
    late = res.times_s > 1.0
    assert res.power_db[0, 0, late].mean() == pytest.approx(-12.04, abs=0.6)
    assert res.significant[0, 0, late].all()


def test_ersp_errors():
    cfg = ERSPConfig(n_boot=50)
    with pytest.raises(ValueError):
        ersp(_noise(n_trials=1), FS, cfg, -1.5)
    with pytest.raises(SizeError):
        ersp(_noise(), FS, cfg, tmin_s=0.0)      # baseline before the epoch
    with pytest.raises(ValueError):
        ersp(np.zeros((3, 1000)), FS, cfg, -1.5)
