"""Synthetic EEG/EOG/EMG recordings with known ground truth.

EEG is pink noise plus two alpha-band sources (central, parietal) whose
amplitude follows the protocol states: parietal desynchronisation during
action observation, central synchronisation during imagery (and
desynchronisation during execution). Execution trials add a slow cortical
potential at movement onset and an EMG burst. Blinks recorded on the EOG
channels leak into the EEG with fixed weights. Ground truth goes to a
separate sidecar so analysis code never sees it.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import dsp
from ..core import (EMG_CHANNELS, EOG_CHANNELS, MONTAGE, TRANSITIONS, ChannelMeta, Event,
                    ProtocolTimeline, Recording, to_index)

SESSIONS = ("MI", "ME")

CENTRAL_WEIGHTS = (0.6, 0.9, 1.0, 0.9, 0.7, 0.8, 0.7, 0.3, 0.3, 0.3, 0.2)
PARIETAL_WEIGHTS = (0.1, 0.2, 0.2, 0.2, 0.5, 0.5, 0.5, 0.9, 1.0, 0.9, 0.9)
MRCP_WEIGHTS = (0.8, 0.6, 1.0, 0.6, 0.4, 0.7, 0.4, 0.2, 0.2, 0.2, 0.1)
BLINK_WEIGHTS = (0.25, 0.12, 0.15, 0.12, 0.06, 0.07, 0.06, 0.03, 0.03, 0.03, 0.02)
EOG2_BLINK = 0.3
N_BACKGROUND = 8
SENSOR_NOISE = 0.1


@dataclass(frozen=True)
class SynthSpec:
    """Generator parameters. Depths are power changes in dB."""

    seed: int
    subjects: int = 1
    trials: int = 15
    eeg_fs: float = 1200.0
    emg_fs: float = 250.0
    band_hz: tuple = (8.0, 12.0)
    erd_depth_db: float = 6.0
    ers_depth_db: float | None = None
    alpha_uv: float = 6.0
    noise_uv: float = 5.0
    mrcp_amp_uv: float = 8.0
    mrcp_lead_s: float = 1.5
    latency_mean_s: float = 0.8
    latency_sd_s: float = 0.1
    emg_noise_uv: float = 3.0
    emg_burst_uv: float = 20.0
    emg_ramp_s: float = 0.2
    emg_burst_s: float = 1.2
    blink_rate_hz: float = 0.2
    blink_amp_uv: float = 100.0
    lead_s: float = 2.0
    tail_s: float = 1.0
    sessions: tuple = SESSIONS
    transitions: tuple = ("sit_to_stand", "stand_to_sit")

    def __post_init__(self):
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)):
            raise ValueError("seed is mandatory and must be an integer")
        for name in ("erd_depth_db", "alpha_uv", "noise_uv", "mrcp_amp_uv"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.ers_depth_db is not None and not math.isfinite(self.ers_depth_db):
            raise ValueError("ers_depth_db must be finite")
        task = 4.0
        lo = self.latency_mean_s - 3 * self.latency_sd_s
        hi = self.latency_mean_s + 3 * self.latency_sd_s
        if self.latency_sd_s < 0 or lo <= 0 or hi >= task:
            raise ValueError("EMG latency distribution must lie inside the 4 s task window")
        if self.subjects < 1 or self.trials < 1:
            raise ValueError("need at least one subject and one trial")
        if self.lead_s < 0 or self.tail_s < 0:
            raise ValueError("lead/tail must be non-negative")
        if not 0 < self.band_hz[0] < self.band_hz[1] < self.eeg_fs / 2:
            raise ValueError("oscillation band must lie below Nyquist")
        if set(self.sessions) - set(SESSIONS):
            raise ValueError(f"sessions must be among {SESSIONS}")
        if set(self.transitions) - set(TRANSITIONS[:2]):
            raise ValueError(f"transitions must be among {TRANSITIONS[:2]}")

    @classmethod
    def from_config(cls, cfg: dict, seed: int | None = None) -> "SynthSpec":
        kw = dict(cfg)
        if seed is not None:
            kw["seed"] = seed
        for key in ("band_hz", "sessions", "transitions"):
            if key in kw:
                v = kw[key]
                kw[key] = tuple(v) if isinstance(v, (list, tuple)) else (v,)
        if "seed" not in kw:
            raise ValueError("seed is mandatory")
        return cls(**kw)


@dataclass
class SynthSet:
    subject: str
    session: str
    transition: str
    eeg: Recording
    emg: Recording
    truth: dict = field(repr=False)

    @property
    def key(self) -> str:
        return f"{self.subject}/{self.session}_{self.transition}"


def pink_noise(rng, n_ch, n):
    """Unit-variance 1/f noise per row."""
    spec = rng.standard_normal((n_ch, n // 2 + 1)) + 1j * rng.standard_normal((n_ch, n // 2 + 1))
    f = np.arange(n // 2 + 1, dtype=float)
    f[0] = 1.0
    spec /= np.sqrt(f)
    spec[:, 0] = 0
    x = np.fft.irfft(spec, n=n, axis=-1)
    return x / x.std(axis=-1, keepdims=True)


def _band_noise(rng, n, fs, band):
    x = dsp.filtfilt(rng.standard_normal(n), dsp.butter("bandpass", band, fs, order=4))
    return x / x.std()


def _smooth(profile, fs, width_s=0.2):
    k = max(1, to_index(width_s, fs))
    w = np.hanning(k + 2)[1:-1]
    pad = np.pad(profile, k, mode="edge")
    return np.convolve(pad, w / w.sum(), mode="same")[k:-k]


def mrcp_template(t, amp, lead=1.5):
    """Slow negativity from -lead to 0 (quadratic), rebound to +amp/2 by
    0.3 s, back to zero by 1 s. ``t`` is seconds from movement onset."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pre = (t >= -lead) & (t < 0)
    out[pre] = -amp * ((t[pre] + lead) / lead) ** 2
    up = (t >= 0) & (t < 0.3)
    out[up] = -amp + 1.5 * amp * 0.5 * (1 - np.cos(np.pi * t[up] / 0.3))
    down = (t >= 0.3) & (t < 1.0)
    out[down] = 0.5 * amp * 0.5 * (1 + np.cos(np.pi * (t[down] - 0.3) / 0.7))
    return out


def _blink(fs):
    n = max(3, to_index(0.3, fs))
    return np.hanning(n)


def _emg_envelope(fs, ramp_s, burst_s, decay_s=0.3):
    """Burst amplitude profile from onset: linear ramp, plateau, linear decay."""
    t = np.arange(to_index(ramp_s + burst_s + decay_s, fs) + 1) / fs
    env = np.clip(t / ramp_s, 0, 1) if ramp_s > 0 else np.ones_like(t)
    return env * np.clip(1 - (t - ramp_s - burst_s) / decay_s, 0, 1)


def _generate(spec: SynthSpec, subject: int, session: str, transition: str) -> SynthSet:
    rng = np.random.default_rng([spec.seed, subject, SESSIONS.index(session),
                                 TRANSITIONS.index(transition)])
    fs, efs = spec.eeg_fs, spec.emg_fs
    timeline = ProtocolTimeline.default(session, transition)
    trial_len = spec.lead_s + timeline.duration + spec.tail_s
    n_tr = spec.trials
    n = to_index(trial_len * n_tr, fs)
    n_emg = to_index(trial_len * n_tr, efs)
    t = np.arange(n) / fs

    g_erd = 10 ** (-spec.erd_depth_db / 20)
    ers = spec.erd_depth_db if spec.ers_depth_db is None else spec.ers_depth_db
    g_task = 10 ** (ers / 20) if session == "MI" else 10 ** (-ers / 20)
    central = np.ones(n)
    parietal = np.ones(n)
    starts = [k * trial_len + spec.lead_s for k in range(n_tr)]
    for s in starts:
        for a, b, state in timeline.intervals:
            sl = slice(to_index(s + a, fs), to_index(s + b, fs))
            if state == "AO":
                parietal[sl] = g_erd
            elif state == "TASK":
                central[sl] = g_task
    central, parietal = _smooth(central, fs), _smooth(parietal, fs)

    # background: fewer pink sources than electrodes through a fixed lead
    # field, plus a little independent sensor noise
    lead = rng.standard_normal((len(MONTAGE), N_BACKGROUND))
    lead /= np.linalg.norm(lead, axis=1, keepdims=True)
    eeg = spec.noise_uv * (lead @ pink_noise(rng, N_BACKGROUND, n))
    eeg += SENSOR_NOISE * spec.noise_uv * rng.standard_normal(eeg.shape)
    src_c = spec.alpha_uv * _band_noise(rng, n, fs, spec.band_hz) * central
    src_p = spec.alpha_uv * _band_noise(rng, n, fs, spec.band_hz) * parietal
    eeg += np.outer(CENTRAL_WEIGHTS, src_c) + np.outer(PARIETAL_WEIGHTS, src_p)

    cue = timeline.onset_of("TASK")
    trials = []
    for k, s in enumerate(starts):
        lat = None
        if session == "ME":
            lat = float(np.clip(rng.normal(spec.latency_mean_s, spec.latency_sd_s),
                                spec.latency_mean_s - 3 * spec.latency_sd_s,
                                spec.latency_mean_s + 3 * spec.latency_sd_s))
        trials.append({"trial": k, "start_s": s, "cue_s": s + cue, "latency_s": lat,
                       "onset_s": None if lat is None else cue + lat})

    if session == "ME":
        for tr in trials:
            t_on = tr["start_s"] + tr["onset_s"]
            lo, hi = to_index(t_on - spec.mrcp_lead_s, fs), min(n, to_index(t_on + 1.0, fs) + 1)
            wave = mrcp_template(t[lo:hi] - t_on, spec.mrcp_amp_uv, spec.mrcp_lead_s)
            eeg[:, lo:hi] += np.outer(MRCP_WEIGHTS, wave)

    # blinks
    blink_times = np.sort(rng.uniform(0, n / fs, rng.poisson(spec.blink_rate_hz * n / fs)))
    blinks = np.zeros(n)
    tpl = _blink(fs)
    for bt in blink_times:
        i = to_index(bt, fs)
        seg = tpl[: max(0, min(len(tpl), n - i))]
        blinks[i:i + len(seg)] += spec.blink_amp_uv * rng.uniform(0.7, 1.3) * seg
    eog = np.vstack([blinks, EOG2_BLINK * blinks]) + 2.0 * rng.standard_normal((2, n))
    eeg += np.outer(BLINK_WEIGHTS, blinks)

    # EMG
    emg = spec.emg_noise_uv * rng.standard_normal((len(EMG_CHANNELS), n_emg))
    if session == "ME":
        gains = rng.uniform(0.6, 1.2, len(EMG_CHANNELS))
        env = _emg_envelope(efs, spec.emg_ramp_s, spec.emg_burst_s)
        for tr in trials:
            i0 = int(np.ceil((tr["start_s"] + tr["onset_s"]) * efs - 1e-9))
            seg = env[:max(0, min(len(env), n_emg - i0))]
            emg[:, i0:i0 + len(seg)] += (spec.emg_burst_uv * gains[:, None] * seg
                                         * rng.standard_normal((len(EMG_CHANNELS), len(seg))))

    def events(rate, n_samples):
        out = []
        for s in starts:
            for label, off in (("trial_start", 0.0), ("rest_onset", 0.0),
                               ("ao_onset", timeline.onset_of("AO")),
                               ("idle_onset", timeline.onset_of("IDLE")),
                               ("audio_cue", cue), ("task_onset", cue)):
                i = to_index(s + off, rate)
                if i < n_samples:
                    out.append(Event(i, label, transition))
        return sorted(out)

    chans = ([ChannelMeta(c, "EEG") for c in MONTAGE]
             + [ChannelMeta(c, "EOG") for c in EOG_CHANNELS])
    eeg_rec = Recording(chans, fs, np.vstack([eeg, eog]), events(fs, n))
    emg_rec = Recording([ChannelMeta(c, "EMG") for c in EMG_CHANNELS], efs, emg,
                        events(efs, n_emg))
    sid = f"S{subject + 1:02d}"
    truth = {
        "subject": sid, "session": session, "transition": transition,
        "trial_length_s": trial_len,
        "trials": [{"trial": tr["trial"], "start_s": tr["start_s"], "cue_s": tr["cue_s"],
                    "latency_s": tr["latency_s"], "onset_s": tr["onset_s"]} for tr in trials],
        "blink_times_s": blink_times.tolist(),
        "blink_mixing": dict(zip(MONTAGE, BLINK_WEIGHTS)),
        "eog2_blink_gain": EOG2_BLINK,
        "background_lead_field": lead.tolist(),
        "alpha_gain": {"AO_parietal": g_erd, "TASK_central": g_task},
        "spec": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(spec).items()},
    }
    return SynthSet(sid, session, transition, eeg_rec, emg_rec, truth)


def synth(spec: SynthSpec, session=None, transition=None, subject=None) -> list[SynthSet]:
    """Generate every (subject, session, transition) set, optionally filtered."""
    out = []
    for s in range(spec.subjects):
        if subject is not None and s != subject:
            continue
        for sess in spec.sessions:
            if session is not None and sess != session:
                continue
            for tr in spec.transitions:
                if transition is not None and tr != transition:
                    continue
                out.append(_generate(spec, s, sess, tr))
    return out
