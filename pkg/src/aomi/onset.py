"""Movement onset detection on EMG linear envelopes (threshold + run length)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DegenerateReferenceError(ValueError):
    """The reference window has zero spread, so no threshold can be formed."""


@dataclass(frozen=True)
class OnsetConfig:
    """``h`` scales the reference SD; a run must be longer than ``E`` samples."""

    h: float = 10.0
    E: int = 5
    reference_window_s: float = 2.0

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("h must be positive")
        if self.E < 1:
            raise ValueError("E must be >= 1")
        if not self.reference_window_s > 0:
            raise ValueError("reference window must be positive")


@dataclass(frozen=True)
class OnsetResult:
    onset_sample: int | None
    threshold: float
    reference_mean: float
    reference_sd: float
    channel: str | None = None
    per_channel: tuple = field(default=())
    fusion: str = "single"


def _first_run(mask, min_len):
    """Index of the first run of at least ``min_len`` True values, or None."""
    if min_len <= 0:
        return 0 if mask.size else None
    m = np.concatenate([[False], mask, [False]]).astype(np.int8)
    d = np.diff(m)
    starts = np.flatnonzero(d == 1)
    ends = np.flatnonzero(d == -1)
    ok = np.flatnonzero(ends - starts >= min_len)
    return int(starts[ok[0]]) if ok.size else None


def detect(env, fs: float, cue_sample: int, config: OnsetConfig = OnsetConfig(),
           channel: str | None = None) -> OnsetResult:
    """Threshold ``T = mu + h * sd`` from the window ending at the cue.

    The reference window is ``[cue - reference_window_s, cue)``; ``sd`` is the
    unbiased estimate. From the cue onward the onset is the first sample of
    the first run of more than ``E`` samples with ``env > T``.
    """
    env = np.asarray(env, dtype=np.float64)
    n_ref = int(round(config.reference_window_s * fs))
    if cue_sample < n_ref:
        raise ValueError(
            f"cue at sample {cue_sample} leaves no room for a {n_ref}-sample reference")
    if cue_sample > env.size:
        raise ValueError("cue past the end of the envelope")
    ref = env[cue_sample - n_ref:cue_sample]
    mu = float(ref.mean())
    sd = float(ref.std(ddof=1))
    if sd == 0:
        raise DegenerateReferenceError("flat reference window (sd = 0)")
    thr = mu + config.h * sd
    start = _first_run(env[cue_sample:] > thr, config.E + 1)
    onset = None if start is None else cue_sample + start
    return OnsetResult(onset, thr, mu, sd, channel)


def fuse(per_channel) -> OnsetResult | None:
    """Earliest per-channel onset; the fused result keeps every channel's result."""
    per_channel = tuple(per_channel)
    if not per_channel:
        return None
    fired = [r for r in per_channel if r.onset_sample is not None]
    if not fired:
        first = per_channel[0]
        return OnsetResult(None, first.threshold, first.reference_mean,
                           first.reference_sd, None, per_channel, "earliest")
    best = min(fired, key=lambda r: r.onset_sample)
    return OnsetResult(best.onset_sample, best.threshold, best.reference_mean,
                       best.reference_sd, best.channel, per_channel, "earliest")


def detect_channels(envelopes, fs, cue_sample, config=OnsetConfig(), names=None):
    """Run :func:`detect` per envelope row and fuse by earliest onset."""
    envelopes = np.atleast_2d(envelopes)
    names = names or [None] * len(envelopes)
    return fuse(detect(e, fs, cue_sample, config, n) for e, n in zip(envelopes, names))
