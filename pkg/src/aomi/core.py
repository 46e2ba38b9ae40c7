"""Recordings, protocol timelines, epochs and sliding windows.

Every module maps a time ``t`` (seconds) to the sample index ``round(t * fs)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

MONTAGE = ("FCz", "C3", "Cz", "C4", "CP3", "CPz", "CP4", "P3", "Pz", "P4", "POz")
EOG_CHANNELS = ("EOG1", "EOG2")
EMG_CHANNELS = ("RF_L", "TA_L", "GL_L", "RF_R", "TA_R", "GL_R")
EEG_FS = 1200.0
EMG_FS = 250.0
ANALYSIS_FS = 250.0

CHANNEL_KINDS = ("EEG", "EOG", "EMG")
EVENT_LABELS = (
    "trial_start",
    "rest_onset",
    "ao_onset",
    "idle_onset",
    "audio_cue",
    "task_onset",
    "movement_onset",
)
TRANSITIONS = ("sit_to_stand", "stand_to_sit", "none")
CLASS_LABELS = ("R", "AO", "MI", "MRCP")
STATES = ("R", "AO", "IDLE", "TASK")

_WINDOW_EPS = 1e-9


class RangeError(ValueError):
    """An epoch or window falls outside the available samples."""


class SizeError(ValueError):
    """An input is too short (or empty) for the requested operation."""


def to_index(t: float, fs: float) -> int:
    return int(round(t * fs))


@dataclass(frozen=True)
class ChannelMeta:
    name: str
    kind: str
    unit: str = "uV"

    def __post_init__(self):
        if self.kind not in CHANNEL_KINDS:
            raise ValueError(f"unknown channel kind {self.kind!r}")


@dataclass(frozen=True, order=True)
class Event:
    sample: int
    label: str = field(compare=False)
    transition: str = field(default="none", compare=False)

    def __post_init__(self):
        if self.label not in EVENT_LABELS:
            raise ValueError(f"unknown event label {self.label!r}")
        if self.transition not in TRANSITIONS:
            raise ValueError(f"unknown transition {self.transition!r}")


class Recording:
    """Channel-major multichannel recording with an event timeline.

    The sample matrix is copied and made read-only on construction.

    Parameters
    ----------
    channels : sequence of ChannelMeta
    fs : float
        Sampling rate shared by all channels (Hz).
    data : array_like, shape (n_channels, n_samples)
    events : sequence of Event, optional
        Must be sorted by sample and lie within the recording.
    validate_montage : bool
        Restrict EEG channel names to the 11-electrode montage.
    """

    def __init__(self, channels: Sequence[ChannelMeta], fs: float, data,
                 events: Iterable[Event] = (), validate_montage: bool = False):
        fs = float(fs)
        if not fs > 0:
            raise ValueError("fs must be positive")
        data = np.array(data, dtype=np.float64, copy=True)
        if data.ndim != 2:
            raise ValueError("data must be channels x samples")
        channels = tuple(channels)
        if data.shape[0] != len(channels):
            raise ValueError(
                f"{len(channels)} channel descriptors for {data.shape[0]} data rows")
        names = [c.name for c in channels]
        if len(set(names)) != len(names):
            raise ValueError("channel names must be unique")
        if validate_montage:
            bad = [c.name for c in channels if c.kind == "EEG" and c.name not in MONTAGE]
            if bad:
                raise ValueError(f"EEG channels outside montage: {bad}")
        events = tuple(events)
        samples = [e.sample for e in events]
        if samples != sorted(samples):
            raise ValueError("events must be sorted by sample")
        n = data.shape[1]
        if any(s < 0 or s >= n for s in samples):
            raise RangeError("event sample outside recording")
        data.setflags(write=False)
        self.channels = channels
        self.fs = fs
        self.data = data
        self.events = events

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def ch_names(self) -> list[str]:
        return [c.name for c in self.channels]

    def __repr__(self):
        return (f"Recording({len(self.channels)} ch, {self.n_samples} samples, "
                f"fs={self.fs:g}, {len(self.events)} events)")

    def pick(self, kinds=None, names=None) -> "Recording":
        """Sub-recording restricted to channel kinds and/or names (order kept)."""
        idx = [
            i for i, c in enumerate(self.channels)
            if (kinds is None or c.kind in kinds) and (names is None or c.name in names)
        ]
        if not idx:
            raise ValueError("channel selection is empty")
        return Recording([self.channels[i] for i in idx], self.fs, self.data[idx],
                         self.events)

    def find_events(self, label: str) -> list[Event]:
        return [e for e in self.events if e.label == label]

    def with_data(self, data, fs: float | None = None, events=None) -> "Recording":
        """Same channels, new samples (and optionally a new rate/timeline)."""
        return Recording(self.channels, self.fs if fs is None else fs, data,
                         self.events if events is None else events)


@dataclass(frozen=True)
class ProtocolTimeline:
    """Contiguous state intervals of one trial, in seconds from trial start."""

    intervals: tuple[tuple[float, float, str], ...]
    session: str = "MI"
    transition: str = "sit_to_stand"

    def __post_init__(self):
        if not self.intervals:
            raise ValueError("timeline needs at least one interval")
        if self.intervals[0][0] != 0:
            raise ValueError("timeline must start at 0")
        for (s0, e0, st), (s1, _, _) in zip(self.intervals, self.intervals[1:]):
            if not math.isclose(e0, s1):
                raise ValueError("timeline intervals must be contiguous")
        for s, e, st in self.intervals:
            if not e > s:
                raise ValueError("empty timeline interval")
            if st not in STATES:
                raise ValueError(f"unknown state {st!r}")
        if self.session not in ("MI", "ME"):
            raise ValueError("session must be MI or ME")

    @classmethod
    def default(cls, session: str = "MI", transition: str = "sit_to_stand"):
        # R 0-4, AO 4-8, idle 8-9, task 9-13
        return cls(((0.0, 4.0, "R"), (4.0, 8.0, "AO"), (8.0, 9.0, "IDLE"),
                    (9.0, 13.0, "TASK")), session, transition)

    @property
    def duration(self) -> float:
        return self.intervals[-1][1]

    def state_at(self, t: float) -> str:
        for s, e, st in self.intervals:
            if s <= t < e:
                return st
        if math.isclose(t, self.duration):
            return self.intervals[-1][2]
        raise RangeError(f"t={t} outside timeline [0, {self.duration}]")

    def onset_of(self, state: str) -> float:
        for s, _, st in self.intervals:
            if st == state:
                return s
        raise KeyError(state)


def window_count(duration_s: float, window_s: float, shift_s: float) -> int:
    """Number of windows of ``window_s`` stepped by ``shift_s`` over ``duration_s``."""
    if shift_s <= 0:
        raise ValueError("shift must be positive")
    if window_s > duration_s + _WINDOW_EPS:
        raise SizeError(f"window {window_s} s longer than {duration_s} s")
    return int(math.floor((duration_s - window_s) / shift_s + _WINDOW_EPS)) + 1


def epoch(recording: Recording, anchor: Event, start_s: float, end_s: float,
          trial=None) -> np.ndarray:
    """Cut ``[anchor + start_s, anchor + end_s)`` from every channel.

    Returns a channels x samples array with ``round((end_s - start_s) * fs)``
    samples.
    """
    if not end_s > start_s:
        raise SizeError(f"zero-length epoch [{start_s}, {end_s}]")
    fs = recording.fs
    n = to_index(end_s - start_s, fs)
    first = anchor.sample + to_index(start_s, fs)
    if first < 0 or first + n > recording.n_samples:
        raise RangeError(
            f"epoch [{start_s}, {end_s}] s around {anchor.label}@{anchor.sample}"
            f" (trial {trial}) exceeds recording of {recording.n_samples} samples")
    return np.array(recording.data[:, first:first + n])


def slide(x: np.ndarray, fs: float, window_s: float, shift_s: float) -> np.ndarray:
    """Split a channels x samples epoch into windows x channels x samples.

    Window starts are ``round(k * shift_s * fs)``.
    """
    x = np.asarray(x)
    duration = x.shape[-1] / fs
    n_win = window_count(duration, window_s, shift_s)
    wlen = to_index(window_s, fs)
    starts = [to_index(k * shift_s, fs) for k in range(n_win)]
    if starts[-1] + wlen > x.shape[-1]:
        raise SizeError("window runs past the end of the epoch")
    return np.stack([x[..., s:s + wlen] for s in starts])


@dataclass
class EpochSet:
    """Windowed trials: ``tensor`` is trials x windows x channels x samples."""

    tensor: np.ndarray
    labels: list
    fs: float
    window_length_s: float
    window_shift_s: float
    epoch_length_s: float | None = None

    def __post_init__(self):
        self.tensor = np.asarray(self.tensor, dtype=np.float64)
        if self.tensor.ndim != 4:
            raise ValueError("tensor must be trials x windows x channels x samples")
        if len(self.labels) != self.tensor.shape[0]:
            raise ValueError("one label per trial required")
        for lab in self.labels:
            if lab not in CLASS_LABELS:
                raise ValueError(f"unknown class {lab!r}")
        if self.tensor.shape[3] != to_index(self.window_length_s, self.fs):
            raise ValueError("window sample count does not match window length")
        if self.epoch_length_s is not None:
            expect = window_count(self.epoch_length_s, self.window_length_s,
                                  self.window_shift_s)
            if self.tensor.shape[1] != expect:
                raise ValueError(f"expected {expect} windows, got {self.tensor.shape[1]}")

    @classmethod
    def from_epochs(cls, epochs, label: str, fs: float, window_s: float,
                    shift_s: float) -> "EpochSet":
        epochs = np.asarray(epochs, dtype=np.float64)
        tensor = np.stack([slide(e, fs, window_s, shift_s) for e in epochs])
        return cls(tensor, [label] * len(epochs), fs, window_s, shift_s,
                   epochs.shape[-1] / fs)

    @property
    def n_trials(self) -> int:
        return self.tensor.shape[0]

    @property
    def n_windows(self) -> int:
        return self.tensor.shape[1]

    def flat_windows(self, trials=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Windows stacked over trials, with per-window labels and trial index."""
        idx = np.arange(self.n_trials) if trials is None else np.asarray(trials)
        t = self.tensor[idx]
        w = t.reshape(-1, *t.shape[2:])
        labels = np.repeat(np.asarray(self.labels, dtype=object)[idx], self.n_windows)
        trial_of = np.repeat(idx, self.n_windows)
        return w, labels, trial_of
