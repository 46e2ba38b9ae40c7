"""IIR design, zero-phase filtering, resampling and EMG envelope extraction.

Filters are Butterworth designs realised as second-order sections in the
``[b0, b1, b2, 1, a1, a2]`` row layout used by :mod:`scipy.signal`.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import signal

from .core import SizeError

KINDS = ("lowpass", "highpass", "bandpass", "notch")
POLE_MARGIN = 1e-8


class DesignError(ValueError):
    """Filter specification cannot be realised as a stable IIR filter."""


@dataclass(frozen=True)
class IIRSpec:
    kind: str
    edges_hz: tuple
    fs: float
    order: int = 2
    q: float = 30.0

    def __post_init__(self):
        edges = tuple(float(e) for e in np.atleast_1d(self.edges_hz))
        object.__setattr__(self, "edges_hz", edges)
        if self.kind not in KINDS:
            raise DesignError(f"unknown filter kind {self.kind!r}")
        if self.order < 1:
            raise DesignError("order must be a positive integer")
        want = 2 if self.kind == "bandpass" else 1
        if len(edges) != want:
            raise DesignError(f"{self.kind} needs {want} edge(s), got {len(edges)}")
        nyq = self.fs / 2.0
        for e in edges:
            if not 0 < e < nyq:
                raise DesignError(f"edge {e} Hz outside (0, {nyq}) Hz at fs={self.fs}")
        if self.kind == "bandpass" and not edges[0] < edges[1]:
            raise DesignError("bandpass edges must be strictly increasing")
        if self.kind == "notch" and not self.q > 0:
            raise DesignError("notch quality factor must be positive")


@dataclass(frozen=True)
class IIRCoefficients:
    """Cascade of second-order sections, one ``(b0, b1, b2, a1, a2)`` per row."""

    sections: tuple

    @property
    def sos(self) -> np.ndarray:
        s = np.asarray(self.sections, dtype=np.float64).reshape(-1, 5)
        return np.column_stack([s[:, :3], np.ones(len(s)), s[:, 3:]])

    @property
    def n_sections(self) -> int:
        return len(self.sections)

    def poles(self) -> np.ndarray:
        return np.concatenate([np.roots([1.0, a1, a2]) for *_, a1, a2 in self.sections])

    def response(self, freqs_hz, fs: float) -> np.ndarray:
        """Complex frequency response evaluated on the unit circle."""
        z = np.exp(1j * 2 * np.pi * np.asarray(freqs_hz, dtype=float) / fs)
        h = np.ones_like(z)
        for b0, b1, b2, a1, a2 in self.sections:
            h *= (b0 + b1 / z + b2 / z**2) / (1 + a1 / z + a2 / z**2)
        return h


def _butter_prototype(order):
    k = np.arange(order)
    return np.exp(1j * np.pi * (2 * k + order + 1) / (2 * order))


def _bilinear(zeros, poles, gain, fs):
    fs2 = 2.0 * fs
    zd = (fs2 + zeros) / (fs2 - zeros)
    pd = (fs2 + poles) / (fs2 - poles)
    # analog zeros at infinity land on z = -1
    zd = np.concatenate([zd, -np.ones(len(poles) - len(zeros))])
    kd = gain * np.real(np.prod(fs2 - zeros) / np.prod(fs2 - poles))
    return zd, pd, kd


def _pair(values):
    """Group roots into conjugate (or real) pairs."""
    values = list(values)
    cplx = sorted((v for v in values if v.imag > 1e-12), key=lambda v: abs(v))
    real = sorted((v.real for v in values if abs(v.imag) <= 1e-12))
    pairs = [(v, np.conj(v)) for v in cplx]
    while len(real) >= 2:
        pairs.append((real.pop(), real.pop()))
    if real:
        pairs.append((real.pop(), None))
    return pairs


def _quad(pair):
    a, b = pair
    if b is None:
        return [1.0, float(-np.real(a)), 0.0]
    return [1.0, float(-np.real(a + b)), float(np.real(a * b))]


def _zpk_to_sections(zd, pd, kd):
    ppairs = _pair(pd)
    # zeros here are only ever at +-1; hand them out two per section
    zsorted = sorted(np.real(zd))
    zpairs = []
    for i in range(len(ppairs)):
        chunk = zsorted[2 * i:2 * i + 2]
        chunk += [None] * (2 - len(chunk))
        zpairs.append(chunk)
    sections = []
    for i, (pp, zz) in enumerate(zip(ppairs, zpairs)):
        a = _quad(pp)
        b = np.array([1.0, 0.0, 0.0])
        for z0 in zz:
            if z0 is not None:
                b = np.convolve(b, [1.0, -z0])[:3]
        if i == 0:
            b = b * kd
        sections.append((b[0], b[1], b[2], a[1], a[2]))
    return sections


def design(spec: IIRSpec) -> IIRCoefficients:
    """Butterworth (or notch) design via the prewarped bilinear transform."""
    fs = spec.fs
    if spec.kind == "notch":
        w0 = 2 * np.pi * spec.edges_hz[0] / fs
        alpha = np.sin(w0) / (2 * spec.q)
        a0 = 1 + alpha
        c = -2 * np.cos(w0)
        sections = [(1 / a0, c / a0, 1 / a0, c / a0, (1 - alpha) / a0)]
    else:
        warped = [2 * fs * np.tan(np.pi * e / fs) for e in spec.edges_hz]
        proto = _butter_prototype(spec.order)
        n = spec.order
        if spec.kind == "lowpass":
            wc = warped[0]
            zeros, poles, gain = np.array([]), wc * proto, wc**n
        elif spec.kind == "highpass":
            wc = warped[0]
            zeros = np.zeros(n)
            poles = wc / proto
            gain = float(np.real(1.0 / np.prod(-proto)))
        else:
            lo, hi = warped
            bw = hi - lo
            w0sq = lo * hi
            half = proto * bw / 2
            root = np.sqrt(half**2 - w0sq + 0j)
            poles = np.concatenate([half + root, half - root])
            zeros = np.zeros(n)
            gain = bw**n
        zd, pd, kd = _bilinear(zeros.astype(complex), poles.astype(complex), gain, fs)
        sections = _zpk_to_sections(zd, pd, kd)
    coeffs = IIRCoefficients(tuple(tuple(float(v) for v in s) for s in sections))
    radius = np.max(np.abs(coeffs.poles()))
    if not radius < 1 - POLE_MARGIN:
        raise DesignError(
            f"{spec.kind} {spec.edges_hz} Hz at fs={fs}: pole radius {radius!r} too close to 1")
    return coeffs


def butter(kind: str, edges_hz, fs: float, order: int = 2) -> IIRCoefficients:
    return design(IIRSpec(kind, edges_hz, fs, order))


def notch(freq_hz: float, fs: float, q: float = 30.0) -> IIRCoefficients:
    return design(IIRSpec("notch", (freq_hz,), fs, q=q))


def pad_length(coeffs: IIRCoefficients) -> int:
    return 3 * max(coeffs.n_sections * 6, 100)


def filtfilt(x, coeffs: IIRCoefficients, axis: int = -1) -> np.ndarray:
    """Zero-phase forward-backward filtering along ``axis``.

    Odd reflection padding of :func:`pad_length` samples (capped to the
    signal length). The forward-backward and backward-forward passes are
    averaged, which makes the operator exactly time-reversal symmetric.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[axis]
    if n == 0:
        raise SizeError("cannot filter an empty signal")
    padlen = min(pad_length(coeffs), n - 1)
    sos = coeffs.sos
    fwd = signal.sosfiltfilt(sos, x, axis=axis, padtype="odd", padlen=padlen)
    rev = np.flip(x, axis=axis)
    bwd = np.flip(signal.sosfiltfilt(sos, rev, axis=axis, padtype="odd", padlen=padlen),
                  axis=axis)
    return 0.5 * (fwd + bwd)


def _ratio(fs_from, fs_to):
    r = Fraction(str(float(fs_to))) / Fraction(str(float(fs_from)))
    return r.numerator, r.denominator


def resample(x, fs_from: float, fs_to: float, axis: int = -1) -> np.ndarray:
    """Rational resampling by ``L/M = fs_to/fs_from`` in lowest terms.

    Zero-stuff by L, zero-phase 8th-order lowpass at 0.9 x the lower Nyquist
    rate, keep every M-th sample. Output length is ``round(n * L / M)``.
    """
    if not (fs_from > 0 and fs_to > 0):
        raise ValueError("sampling rates must be positive")
    x = np.asarray(x, dtype=np.float64)
    if fs_from == fs_to:
        return x.copy()
    x = np.moveaxis(x, axis, -1)
    n = x.shape[-1]
    if n == 0:
        raise SizeError("cannot resample an empty signal")
    up, down = _ratio(fs_from, fs_to)
    n_out = int(round(n * up / down))
    pad = min(n - 1, 200)
    if pad > 0:
        head = 2 * x[..., :1] - x[..., pad:0:-1]
        tail = 2 * x[..., -1:] - x[..., -2:-pad - 2:-1]
        xp = np.concatenate([head, x, tail], axis=-1)
    else:
        xp = x
    stuffed = np.zeros(xp.shape[:-1] + (xp.shape[-1] * up,))
    stuffed[..., ::up] = xp * up
    cutoff = 0.9 * min(fs_from, fs_to) / 2
    lp = butter("lowpass", cutoff, fs_from * up, order=8)
    smooth = filtfilt(stuffed, lp)
    idx = pad * up + np.arange(n_out) * down
    idx = np.minimum(idx, stuffed.shape[-1] - 1)
    return np.moveaxis(smooth[..., idx], -1, axis)


def tkeo(x) -> np.ndarray:
    """Teager-Kaiser energy ``x[n]^2 - x[n-1] x[n+1]`` with replicated endpoints."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] < 3:
        raise SizeError("TKEO needs at least 3 samples")
    out = np.empty_like(x)
    out[..., 1:-1] = x[..., 1:-1] ** 2 - x[..., :-2] * x[..., 2:]
    out[..., 0] = out[..., 1]
    out[..., -1] = out[..., -2]
    return out


def envelope(emg, fs: float, band=(15.0, 124.0), lowpass_hz: float = 3.0,
             order: int = 2) -> np.ndarray:
    """Linear envelope: TKEO, band-pass, full-wave rectification, low-pass.

    All filtering is zero-phase. Low-pass ringing below zero is kept.
    """
    psi = tkeo(emg)
    bp = filtfilt(psi, butter("bandpass", band, fs, order))
    return filtfilt(np.abs(bp), butter("lowpass", lowpass_hz, fs, order))


class FilterBank:
    """Ordered band-pass bank with designed coefficients per band."""

    def __init__(self, bands, fs: float, order: int = 2):
        self.bands = [tuple(float(v) for v in b) for b in bands]
        self.fs = float(fs)
        self.order = order
        self.coeffs = []
        for lo, hi in self.bands:
            try:
                self.coeffs.append(butter("bandpass", (lo, hi), fs, order))
            except DesignError as exc:
                raise DesignError(f"band {lo}-{hi} Hz: {exc}") from exc

    def __len__(self):
        return len(self.bands)

    def apply(self, x, axis: int = -1) -> np.ndarray:
        """Stack of band-filtered copies, band axis first."""
        return np.stack([filtfilt(x, c, axis=axis) for c in self.coeffs])


MI_BANDS = tuple((lo, lo + 4.0) for lo in range(4, 40, 4))
ME_BANDS = ((0.1, 0.5), (0.5, 1.0), (1.0, 1.5), (1.5, 2.0), (2.0, 2.5), (2.5, 3.0))
