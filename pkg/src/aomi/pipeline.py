"""Glue between recordings and the analysis modules: preprocessing chains,
trial segmentation, EMG onsets and per-class epochs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dsp, onset
from .evaluation import Decoder
from .core import ANALYSIS_FS, Event, RangeError, Recording, epoch, slide, to_index

TRIAL_S = 13.0

# (anchor event, start_s, end_s) per class and session
EPOCH_WINDOWS = {
    ("MI", "R"): ("rest_onset", 0.0, 4.0),
    ("MI", "AO"): ("ao_onset", 0.0, 4.0),
    ("MI", "MI"): ("task_onset", 0.0, 4.0),
    ("ME", "AO"): ("ao_onset", 0.0, 2.5),
    ("ME", "MRCP"): ("movement_onset", -1.5, 1.0),
}


def preprocess_eeg(rec: Recording, session: str, target_fs: float = ANALYSIS_FS,
                   notch_hz: float = 50.0, q: float = 30.0) -> Recording:
    """EEG/EOG chain: MI = notch, 1-40 Hz band-pass, resample;
    ME = 0.05 Hz high-pass, notch, resample. All filters zero-phase."""
    sub = rec.pick(kinds=("EEG", "EOG"))
    x = sub.data
    fs = sub.fs
    notch = dsp.notch(notch_hz, fs, q) if notch_hz < fs / 2 else None
    if session == "MI":
        if notch is not None:
            x = dsp.filtfilt(x, notch)
        x = dsp.filtfilt(x, dsp.butter("bandpass", (1.0, 40.0), fs))
    elif session == "ME":
        x = dsp.filtfilt(x, dsp.butter("highpass", 0.05, fs))
        if notch is not None:
            x = dsp.filtfilt(x, notch)
    else:
        raise ValueError(f"unknown session {session!r}")
    if fs != target_fs:
        x = dsp.resample(x, fs, target_fs)
        n = x.shape[1]
        events = [Event(min(to_index(e.sample / fs, target_fs), n - 1), e.label, e.transition)
                  for e in sub.events]
        return Recording(sub.channels, target_fs, x, events)
    return sub.with_data(x)


def trial_starts(rec: Recording) -> list[Event]:
    return rec.find_events("trial_start")


def trial_events(rec: Recording) -> list[dict]:
    """Per trial, the first event of each label between consecutive trial starts."""
    starts = [e.sample for e in trial_starts(rec)]
    bounds = starts[1:] + [rec.n_samples]
    out = []
    for s, e in zip(starts, bounds):
        d = {}
        for ev in rec.events:
            if s <= ev.sample < e and ev.label not in d:
                d[ev.label] = ev
        out.append(d)
    return out


def with_onsets(rec: Recording, onset_s: dict) -> Recording:
    """Add movement_onset events given seconds after each trial start."""
    starts = trial_starts(rec)
    extra = []
    for k, t in onset_s.items():
        if t is None:
            continue
        ev = starts[k]
        s = ev.sample + to_index(t, rec.fs)
        if s < rec.n_samples:
            extra.append(Event(s, "movement_onset", ev.transition))
    events = sorted(list(rec.events) + extra, key=lambda e: e.sample)
    return rec.with_data(rec.data, events=events)


def emg_onsets(emg: Recording, config=onset.OnsetConfig(), cue_label="audio_cue",
               search_s: float = 4.0) -> list:
    """Fused onset per trial; the search runs from each cue for ``search_s``."""
    rec = emg.pick(kinds=("EMG",))
    env = dsp.envelope(rec.data, rec.fs)
    results = []
    for k, evs in enumerate(trial_events(rec)):
        cue = evs.get(cue_label)
        if cue is None:
            results.append(None)
            continue
        stop = min(rec.n_samples, cue.sample + to_index(search_s, rec.fs))
        results.append(onset.detect_channels(env[:, :stop], rec.fs, cue.sample, config,
                                             rec.ch_names))
    return results


def onset_seconds(emg: Recording, results) -> dict:
    """Fused onsets as seconds after each trial start (None when absent)."""
    starts = trial_starts(emg)
    return {k: (None if r is None or r.onset_sample is None
                else (r.onset_sample - starts[k].sample) / emg.fs)
            for k, r in enumerate(results)}


@dataclass
class ClassEpochs:
    eeg: np.ndarray
    eog: np.ndarray | None
    trials: list


def class_epochs(rec: Recording, session: str, cls: str, trials=None) -> ClassEpochs:
    """EEG (and EOG) epochs of one class for every trial that has its anchor."""
    anchor, t0, t1 = EPOCH_WINDOWS[(session, cls)]
    eeg_idx = [i for i, c in enumerate(rec.channels) if c.kind == "EEG"]
    eog_idx = [i for i, c in enumerate(rec.channels) if c.kind == "EOG"]
    eeg, eog, kept = [], [], []
    for k, evs in enumerate(trial_events(rec)):
        if trials is not None and k not in trials:
            continue
        if anchor not in evs:
            continue
        ep = epoch(rec, evs[anchor], t0, t1, trial=k)
        eeg.append(ep[eeg_idx])
        if eog_idx:
            eog.append(ep[eog_idx])
        kept.append(k)
    return ClassEpochs(np.array(eeg), np.array(eog) if eog_idx else None, kept)


def paired_epochs(rec: Recording, session: str, classes):
    """Epochs of two classes restricted to trials where both exist."""
    a = class_epochs(rec, session, classes[0])
    b = class_epochs(rec, session, classes[1])
    common = sorted(set(a.trials) & set(b.trials))
    a = class_epochs(rec, session, classes[0], common)
    b = class_epochs(rec, session, classes[1], common)
    return a, b


def trial_segment(rec: Recording, k: int, length_s: float = TRIAL_S, kinds=("EEG",)):
    """Trial ``k`` from its start for ``length_s`` seconds."""
    start = trial_starts(rec)[k]
    sub = rec.pick(kinds=kinds)
    return epoch(sub, start, 0.0, length_s, trial=k)


def baseline_epochs(rec: Recording, tmin: float, tmax: float, kinds=("EEG",)):
    """Epochs around every rest onset, e.g. for ERSP (tmin < 0 reaches back)."""
    sub = rec.pick(kinds=kinds)
    out = []
    for k, evs in enumerate(trial_events(rec)):
        if "rest_onset" not in evs:
            continue
        try:
            out.append(epoch(sub, evs["rest_onset"], tmin, tmax, trial=k))
        except RangeError:
            continue
    return np.array(out)


def task_windows(a: ClassEpochs, b: ClassEpochs, classes, fs, window_s, shift_s, trials=None):
    """Sliding windows of both classes, their labels and source trials."""
    xs, ys, ts = [], [], []
    for ep, cls in ((a, classes[0]), (b, classes[1])):
        for k, e in zip(ep.trials, ep.eeg):
            if trials is not None and k not in trials:
                continue
            w = slide(e, fs, window_s, shift_s)
            xs.append(w)
            ys += [cls] * len(w)
            ts += [k] * len(w)
    return np.concatenate(xs), np.array(ys, dtype=object), np.array(ts)


def fit_decoder(rec: Recording, config, trials=None):
    """Train a decoder for ``config.task`` on the given trials (default all)."""
    a, b = paired_epochs(rec, config.session, config.classes)
    x, y, _ = task_windows(a, b, config.classes, rec.fs, config.window_s, config.shift_s,
                           trials)
    dec = Decoder(config.classes, config.bands, rec.fs, config.m, config.grid,
                  config.select_k, config.shrinkage, config.standardize)
    return dec.fit(x, y)
