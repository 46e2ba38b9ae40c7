import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import signal

from aomi import dsp
from aomi.core import SizeError


def _oracle(kind, edges, fs, order):
    btype = {"lowpass": "low", "highpass": "high", "bandpass": "bandpass"}[kind]
    return signal.butter(order, edges, btype=btype, fs=fs, output="sos")


@pytest.mark.parametrize("kind,edges,fs,order", [
    ("lowpass", 3.0, 250.0, 2),
    ("lowpass", 40.0, 1200.0, 8),
    ("highpass", 0.05, 250.0, 2),
    ("highpass", 15.0, 250.0, 4),
    ("bandpass", (8.0, 12.0), 250.0, 2),
    ("bandpass", (15.0, 124.0), 250.0, 2),
    ("bandpass", (0.1, 0.5), 250.0, 2),
    ("bandpass", (1.0, 40.0), 1200.0, 3),
])
def test_butter_matches_reference_design(kind, edges, fs, order):
    mine = dsp.butter(kind, edges, fs, order)
    freqs = np.linspace(0.01, fs / 2 * 0.999, 2000)
    _, ref = signal.sosfreqz(_oracle(kind, edges, fs, order), worN=freqs, fs=fs)
    np.testing.assert_allclose(np.abs(mine.response(freqs, fs)), np.abs(ref), atol=1e-8)
    # same transfer function, so the same poles
    ref_p = np.sort_complex(signal.sos2zpk(_oracle(kind, edges, fs, order))[1])
    np.testing.assert_allclose(np.sort_complex(mine.poles()), ref_p, atol=1e-8)


def test_sos_layout_runs_in_scipy():
    c = dsp.butter("bandpass", (8.0, 12.0), 250.0)
    assert c.sos.shape == (c.n_sections, 6)
    assert np.all(c.sos[:, 3] == 1.0)
    x = np.random.default_rng(0).normal(size=500)
    b, a = signal.sos2tf(c.sos)
    np.testing.assert_allclose(signal.sosfilt(c.sos, x), signal.lfilter(b, a, x), atol=1e-10)


def test_notch_matches_reference():
    for fs in (250.0, 1200.0):
        mine = dsp.notch(50.0, fs, 30.0)
        # same biquad family, scipy parametrises the width through tan(bw / 2)
        w0 = 2 * np.pi * 50.0 / fs
        bw = 2 * np.arctan(np.sin(w0) / (2 * 30.0))
        b, a = signal.iirnotch(50.0, w0 / bw, fs)
        freqs = np.linspace(1, fs / 2 - 1, 3000)
        _, ref = signal.freqz(b, a, worN=freqs, fs=fs)
        np.testing.assert_allclose(np.abs(mine.response(freqs, fs)), np.abs(ref), atol=1e-10)
        assert abs(mine.response([50.0], fs)[0]) < 1e-10


@given(st.sampled_from(["lowpass", "highpass", "bandpass"]), st.integers(1, 8),
       st.floats(0.005, 0.9), st.floats(0.01, 0.09), st.sampled_from([250.0, 1200.0]))
def test_designs_are_stable(kind, order, lo, width, fs):
    nyq = fs / 2
    edges = (lo * nyq, (lo + width) * nyq) if kind == "bandpass" else lo * nyq
    c = dsp.butter(kind, edges, fs, order)
    assert np.max(np.abs(c.poles())) < 1 - dsp.POLE_MARGIN


def test_design_errors():
    with pytest.raises(dsp.DesignError):
        dsp.butter("bandpass", (12.0, 8.0), 250.0)
    with pytest.raises(dsp.DesignError):
        dsp.butter("lowpass", 125.0, 250.0)
    with pytest.raises(dsp.DesignError):
        dsp.butter("lowpass", 10.0, 250.0, order=0)
    with pytest.raises(dsp.DesignError):
        dsp.IIRSpec("comb", (1.0,), 250.0)
    with pytest.raises(dsp.DesignError):
        dsp.FilterBank([(4, 8), (120, 130)], 250.0)


def test_filtfilt_zero_phase_and_time_reversal():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(2, 3000))
    c = dsp.butter("bandpass", (8.0, 12.0), 250.0)
    y = dsp.filtfilt(x, c)
    # averaging both pass orders makes the operator commute with time reversal
    np.testing.assert_allclose(dsp.filtfilt(x[:, ::-1], c), y[:, ::-1], atol=1e-12)
    # magnitude is |H|^2 in the interior
    t = np.arange(5000) / 250.0
    s = np.sin(2 * np.pi * 10.5 * t)
    g = abs(c.response([10.5], 250.0)[0]) ** 2
    np.testing.assert_allclose(dsp.filtfilt(s, c)[1000:-1000], g * s[1000:-1000], atol=1e-6)


def test_filtfilt_axis_and_short_input():
    c = dsp.butter("lowpass", 3.0, 250.0)
    x = np.random.default_rng(2).normal(size=(400, 3))
    np.testing.assert_allclose(dsp.filtfilt(x, c, axis=0), dsp.filtfilt(x.T, c).T)
    assert dsp.filtfilt(np.ones(5), c).shape == (5,)
    with pytest.raises(SizeError):
        dsp.filtfilt(np.ones(0), c)
    assert dsp.pad_length(c) == 300


def test_filtfilt_is_linear():
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=(2, 800))
    c = dsp.butter("bandpass", (1.0, 40.0), 250.0)
    np.testing.assert_allclose(dsp.filtfilt(2 * a - 3 * b, c),
                               2 * dsp.filtfilt(a, c) - 3 * dsp.filtfilt(b, c), atol=1e-12)


@pytest.mark.parametrize("fs_from,fs_to", [(1200.0, 250.0), (250.0, 1000.0), (500.0, 250.0)])
def test_resample_length_and_tone(fs_from, fs_to):
    n = int(8 * fs_from)
    t = np.arange(n) / fs_from
    x = np.sin(2 * np.pi * 7.0 * t)
    y = dsp.resample(x, fs_from, fs_to)
    assert len(y) == round(n * fs_to / fs_from)
    t2 = np.arange(len(y)) / fs_to
    mid = slice(len(y) // 8, -len(y) // 8)
    np.testing.assert_allclose(y[mid], np.sin(2 * np.pi * 7.0 * t2)[mid], atol=2e-3)


def test_resample_removes_aliasing_band():
    fs = 1200.0
    t = np.arange(int(10 * fs)) / fs
    x = np.sin(2 * np.pi * 300.0 * t)          # above the 125 Hz target Nyquist
    y = dsp.resample(x, fs, 250.0)
    assert np.sqrt(np.mean(y[250:-250] ** 2)) < 1e-3


def test_resample_identity_and_errors():
    x = np.arange(10.0)
    np.testing.assert_array_equal(dsp.resample(x, 250.0, 250.0), x)
    with pytest.raises(ValueError):
        dsp.resample(x, 0.0, 250.0)
    with pytest.raises(SizeError):
        dsp.resample(np.empty(0), 1200.0, 250.0)


@given(st.floats(0.01, 3.1), st.floats(0, 6.28), st.floats(0.1, 10))
def test_tkeo_sine_identity(omega, phase, amp):
    n = np.arange(64)
    psi = dsp.tkeo(amp * np.sin(omega * n + phase))
    np.testing.assert_allclose(psi, amp**2 * np.sin(omega) ** 2, atol=1e-9 * max(1, amp**2))


@given(st.floats(-1e3, 1e3), st.floats(-10, 10))
def test_tkeo_constant_and_ramp(c, slope):
    n = np.arange(50, dtype=float)
    assert np.max(np.abs(dsp.tkeo(np.full(50, c)))) <= 1e-9 * max(1, c * c)
    np.testing.assert_allclose(dsp.tkeo(c + slope * n), slope**2, atol=1e-9 * max(1, c * c))


def test_tkeo_short_input():
    with pytest.raises(SizeError):
        dsp.tkeo([1.0, 2.0])


def test_envelope_tracks_burst():
    fs = 250.0
    rng = np.random.default_rng(4)
    x = rng.normal(size=(2, 2500))
    x[:, 1250:1750] *= 8
    env = dsp.envelope(x, fs)
    assert env.shape == x.shape
    assert np.all(env[:, 1400:1600].mean(axis=1) > 20 * env[:, 300:900].mean(axis=1))


def test_filter_bank_stacks_bands():
    bank = dsp.FilterBank(dsp.MI_BANDS, 250.0)
    assert len(bank) == 9
    assert bank.bands[0] == (4.0, 8.0) and bank.bands[-1] == (36.0, 40.0)
    y = bank.apply(np.random.default_rng(5).normal(size=(3, 2, 500)))
    assert y.shape == (9, 3, 2, 500)
    assert len(dsp.FilterBank(dsp.ME_BANDS, 250.0)) == 6
