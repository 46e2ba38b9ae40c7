"""Offline LOOCV, confusion rates, Welch t-tests and pseudo-online streaming."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import special

from . import artifact
from .core import ProtocolTimeline, SizeError, slide, to_index, window_count
from .dsp import ME_BANDS, MI_BANDS, FilterBank
from .features import DEFAULT_SHRINKAGE, FBCSPModel, band_filter, fbcsp_fit, fbcsp_transform
from .model import GridSpec, KernelSpec, SVMClassifier, grid_search

log = logging.getLogger(__name__)

TASKS = {
    "R_vs_AO": ("MI", ("R", "AO")),
    "AO_vs_MI": ("MI", ("AO", "MI")),
    "AO_vs_MRCP": ("ME", ("AO", "MRCP")),
}
TASK_ALIASES = {"r_ao": "R_vs_AO", "ao_mi": "AO_vs_MI", "ao_mrcp": "AO_vs_MRCP"}


class DegenerateError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    session: str = "MI"
    task: str = "AO_vs_MI"
    transition: str = "sit_to_stand"
    bands: tuple | None = None
    m: int = 2
    grid: GridSpec = GridSpec()
    window_s: float | None = None
    shift_s: float | None = None
    select_k: int | None = None
    shrinkage: float = DEFAULT_SHRINKAGE
    ica: bool = True
    ica_threshold: float = 0.7
    seed: int = 0
    standardize: bool = True

    def __post_init__(self):
        task = TASK_ALIASES.get(self.task, self.task)
        object.__setattr__(self, "task", task)
        if task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if TASKS[task][0] != self.session:
            raise ValueError(f"task {task} is not defined for the {self.session} session")
        mi = self.session == "MI"
        if self.bands is None:
            object.__setattr__(self, "bands", MI_BANDS if mi else ME_BANDS)
        if self.window_s is None:
            object.__setattr__(self, "window_s", 2.0 if mi else 1.0)
        if self.shift_s is None:
            object.__setattr__(self, "shift_s", 0.2 if mi else 0.5)

    @property
    def classes(self) -> tuple:
        return TASKS[self.task][1]


# -- decoder -----------------------------------------------------------------

class Decoder:
    """FBCSP features, grid-searched SVM; labels are class names.

    ``classes`` is (negative, positive).
    """

    def __init__(self, classes, bands, fs, m=2, grid=GridSpec(), select_k=None,
                 shrinkage=DEFAULT_SHRINKAGE, standardize=True):
        self.classes = tuple(classes)
        self.bands = [tuple(b) for b in bands]
        self.fs = float(fs)
        self.m = m
        self.grid = grid
        self.select_k = select_k
        self.shrinkage = shrinkage
        self.standardize = standardize
        self.fbcsp: FBCSPModel | None = None
        self.clf: SVMClassifier | None = None
        self.grid_result = None

    def _y(self, labels):
        labels = np.asarray(labels)
        unknown = set(labels.tolist()) - set(self.classes)
        if unknown:
            raise ValueError(f"labels {unknown} not in {self.classes}")
        return np.where(labels == self.classes[1], 1, -1)

    def fit(self, windows, labels, filtered=None):
        y = self._y(labels)
        self.fbcsp, feats = fbcsp_fit(windows, y, self.bands, self.fs, self.m,
                                      self.shrinkage, self.select_k, filtered=filtered,
                                      return_features=True)
        self.grid_result = grid_search(feats, y, self.grid, self.standardize)
        kern, c, g = self.grid_result.best
        self.clf = SVMClassifier(KernelSpec(kern, g), c, self.grid.tol,
                                 self.standardize).fit(feats, y)
        return self

    def decision_function(self, windows=None, filtered=None):
        return self.clf.decision_function(fbcsp_transform(self.fbcsp, windows, filtered))

    def predict(self, windows=None, filtered=None):
        f = np.atleast_1d(self.decision_function(windows, filtered))
        return np.where(f > 0, self.classes[1], self.classes[0])

    def to_dict(self):
        return {"classes": list(self.classes), "fbcsp": self.fbcsp.to_dict(),
                "classifier": self.clf.to_dict(),
                "best": list(self.grid_result.best) if self.grid_result else None,
                "feature_scaling": "zscore" if self.standardize else "none"}

    @classmethod
    def from_dict(cls, d):
        fb = FBCSPModel.from_dict(d["fbcsp"])
        clf = SVMClassifier.from_dict(d["classifier"])
        dec = cls(d["classes"], fb.bands, fb.fs, fb.m, select_k=None,
                  shrinkage=fb.shrinkage, standardize=clf.standardize)
        dec.fbcsp, dec.clf = fb, clf
        return dec


# -- LOOCV ---------------------------------------------------------------------

@dataclass
class FoldResult:
    fold: int
    accuracy: float | None
    n_test: int
    best: tuple | None = None
    rejected_components: tuple = ()
    failed: bool = False
    error: str | None = None


@dataclass
class LoocvReport:
    folds: list
    config: PipelineConfig
    windows_per_trial: int
    feature_scaling: str = "zscore"

    @property
    def accuracies(self) -> np.ndarray:
        return np.array([f.accuracy for f in self.folds if not f.failed], dtype=float)

    @property
    def mean(self) -> float:
        return float(self.accuracies.mean()) if len(self.accuracies) else float("nan")

    @property
    def se(self) -> float:
        a = self.accuracies
        return float(a.std(ddof=1) / math.sqrt(len(a))) if len(a) > 1 else float("nan")

    @property
    def flagged(self) -> list:
        return [f.fold for f in self.folds if f.failed]


def _cleaning_matrix(dec):
    n = dec.mixing.shape[0]
    rej = sorted(dec.rejected)
    if not rej:
        return np.eye(n)
    return np.eye(n) - dec.mixing[:, rej] @ dec.unmixing[rej]


def _fold(filtered, labels, trial_of, train, test, classes, fs, config,
          epochs_eeg=None, epochs_eog=None, train_trials=None):
    """Fit on ``train`` windows, score on ``test`` windows.

    ``filtered`` is the band stack of all windows; per-fold ICA is applied
    as a spatial matrix on it (filtering and spatial mixing commute).
    """
    rejected = ()
    stack = filtered
    if config.ica and epochs_eeg is not None and epochs_eog is not None:
        fit_eeg = np.concatenate([epochs_eeg[i] for i in train_trials], axis=-1)
        fit_eog = np.concatenate([epochs_eog[i] for i in train_trials], axis=-1)
        dec = artifact.remove_ocular(fit_eeg, fit_eog, config.ica_threshold,
                                     seed=config.seed)
        rejected = tuple(sorted(dec.rejected))
        if rejected:
            stack = np.einsum("ij,bnjs->bnis", _cleaning_matrix(dec), filtered)
    model = Decoder(classes, config.bands, fs, config.m, config.grid, config.select_k,
                    config.shrinkage, config.standardize)
    model.fit(None, labels[train], filtered=stack[:, train])
    pred = model.predict(filtered=stack[:, test])
    acc = float(np.mean(pred == labels[test]))
    return acc, model, rejected


def loocv(epochs_a, epochs_b, fs, config: PipelineConfig, eog_a=None, eog_b=None,
          extra_train=None) -> LoocvReport:
    """Leave-one-trial-out evaluation of a two-class task.

    Parameters
    ----------
    epochs_a, epochs_b : array_like, shape (trials, channels, samples)
        Epochs of the negative and positive class; trial ``i`` of each class
        comes from the same protocol trial and is held out together.
    fs : float
    config : PipelineConfig
    eog_a, eog_b : array_like, optional
        Matching EOG epochs; when given (and ``config.ica``) ICA is fitted on
        the training trials of every fold.
    extra_train : dict, optional
        ``{fold: trial}`` extra trial indices appended to that fold's training
        set. Only used to demonstrate the leakage guard.
    """
    epochs_a = np.asarray(epochs_a, dtype=np.float64)
    epochs_b = np.asarray(epochs_b, dtype=np.float64)
    n_trials = len(epochs_a)
    if n_trials < 3 or len(epochs_b) != n_trials:
        raise ValueError("need >= 3 trials, equal per class")
    neg, pos = config.classes
    wa = np.stack([slide(e, fs, config.window_s, config.shift_s) for e in epochs_a])
    wb = np.stack([slide(e, fs, config.window_s, config.shift_s) for e in epochs_b])
    n_win = wa.shape[1]
    windows = np.concatenate([wa.reshape(-1, *wa.shape[2:]), wb.reshape(-1, *wb.shape[2:])])
    labels = np.array([neg] * (n_trials * n_win) + [pos] * (n_trials * n_win), dtype=object)
    trial_of = np.tile(np.repeat(np.arange(n_trials), n_win), 2)
    filtered = band_filter(windows, FilterBank(config.bands, fs))

    eeg_ep = eog_ep = None
    if eog_a is not None and eog_b is not None:
        eeg_ep = [np.concatenate([epochs_a[i], epochs_b[i]], axis=-1) for i in range(n_trials)]
        eog_ep = [np.concatenate([np.asarray(eog_a)[i], np.asarray(eog_b)[i]], axis=-1)
                  for i in range(n_trials)]
    folds = []
    for f in range(n_trials):
        train_trials = [i for i in range(n_trials) if i != f]
        train = trial_of != f
        if extra_train and f in extra_train:
            dup = np.flatnonzero(trial_of == extra_train[f])
            train = np.concatenate([np.flatnonzero(train), dup])
            train_trials = train_trials + [extra_train[f]]
        test = trial_of == f
        try:
            acc, model, rej = _fold(filtered, labels, trial_of, train, test, (neg, pos), fs,
                                    config, eeg_ep, eog_ep, train_trials)
            folds.append(FoldResult(f, acc, int(test.sum()), model.grid_result.best, rej))
        except Exception as exc:  # a failed fold is reported, not fatal
            log.warning("fold %d failed: %s", f, exc)
            folds.append(FoldResult(f, None, int(test.sum()), failed=True, error=str(exc)))
    return LoocvReport(folds, config, n_win,
                       "zscore" if config.standardize else "none")


# -- confusion rates -------------------------------------------------------------

@dataclass(frozen=True)
class ConfusionCounts:
    TP: int = 0
    FP: int = 0
    TN: int = 0
    FN: int = 0

    def __post_init__(self):
        for k in ("TP", "FP", "TN", "FN"):
            v = getattr(self, k)
            if int(v) != v or v < 0:
                raise ValueError(f"{k} must be a nonnegative integer")

    def __add__(self, other):
        return ConfusionCounts(self.TP + other.TP, self.FP + other.FP,
                               self.TN + other.TN, self.FN + other.FN)


@dataclass(frozen=True)
class Rates:
    """Exact rates; ``None`` where the denominator is zero."""

    TPR: Fraction | None
    FPR: Fraction | None
    FNR: Fraction | None

    def as_float(self) -> dict:
        return {k: (None if v is None else float(v))
                for k, v in (("TPR", self.TPR), ("FPR", self.FPR), ("FNR", self.FNR))}


def _ratio(num, den):
    return Fraction(num, den) if den > 0 else None


def metrics(counts: ConfusionCounts) -> Rates:
    return Rates(_ratio(counts.TP, counts.TP + counts.FN),
                 _ratio(counts.FP, counts.FP + counts.TN),
                 _ratio(counts.FN, counts.FN + counts.TP))


# -- statistics ------------------------------------------------------------------

@dataclass(frozen=True)
class TTest:
    t: float
    df: float
    p: float
    n_a: int
    n_b: int


def welch_t(a, b, paired_by=None) -> TTest:
    """Welch two-sample t-test with Welch-Satterthwaite degrees of freedom.

    ``paired_by=(keys_a, keys_b)`` keeps only observations whose key appears
    in both samples, ordered by key; variances are still treated as unequal.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if paired_by is not None:
        ka, kb = (list(k) for k in paired_by)
        common = sorted(set(ka) & set(kb))
        a = np.array([a[ka.index(k)] for k in common])
        b = np.array([b[kb.index(k)] for k in common])
    na, nb = len(a), len(b)
    if na < 2 or nb < 2:
        raise ValueError("need at least two observations per sample")
    va = a.var(ddof=1) / na
    vb = b.var(ddof=1) / nb
    if va == 0 and vb == 0:
        raise DegenerateError("both samples have zero variance")
    se2 = va + vb
    t = (a.mean() - b.mean()) / math.sqrt(se2)
    df = se2 ** 2 / (va ** 2 / (na - 1) + vb ** 2 / (nb - 1))
    p = float(special.betainc(df / 2, 0.5, df / (df + t * t)))
    return TTest(float(t), float(df), min(p, 1.0), na, nb)


# -- streaming -------------------------------------------------------------------

@dataclass
class StreamReport:
    decoded: list
    truth: list
    counts: ConfusionCounts
    switch_index: int | None = None
    start_s: float = 0.0
    window_s: float = 2.0
    shift_s: float = 0.2

    @property
    def rates(self) -> Rates:
        return metrics(self.counts)

    @property
    def n_windows(self) -> int:
        return len(self.decoded)


def window_midpoints(start_s, end_s, window_s, shift_s):
    n = window_count(end_s - start_s, window_s, shift_s)
    return [start_s + k * shift_s + window_s / 2 for k in range(n)]


def score_windows(decoded, midpoints, timeline: ProtocolTimeline, positive: str,
                  idle_as: str = "AO"):
    """Per-window truth from the state at the window midpoint, and the counts."""
    names = {"R": "R", "AO": "AO", "IDLE": idle_as, "TASK": positive}
    truth = [names[timeline.state_at(t)] for t in midpoints]
    tp = fp = tn = fn = 0
    for d, t in zip(decoded, truth):
        pos_true, pos_pred = t == positive, d == positive
        tp += pos_true and pos_pred
        fn += pos_true and not pos_pred
        fp += pos_pred and not pos_true
        tn += not pos_true and not pos_pred
    return truth, ConfusionCounts(tp, fp, tn, fn)


def cascade_decisions(stage1, stage2, arm_count=5, reversible=False):
    """Run the two-stage state machine on per-window predictions.

    ``stage1`` holds R/AO labels and ``stage2`` AO/MI labels for every window.
    Stage 2 takes over after ``arm_count`` consecutive AO decisions; an R
    resets the count. Returns the decoded sequence and the index of the
    window that armed the switch (None if it never armed).
    """
    if arm_count < 1:
        raise ValueError("arm_count must be >= 1")
    decoded, run, armed, switch = [], 0, False, None
    for k in range(len(stage1)):
        if armed and not reversible:
            decoded.append(stage2[k])
            continue
        if reversible and armed:
            if stage1[k] == "R":
                armed, run = False, 0
                decoded.append("R")
            else:
                decoded.append(stage2[k])
            continue
        lab = stage1[k]
        decoded.append(lab)
        run = run + 1 if lab == "AO" else 0
        if run >= arm_count:
            armed = True
            if switch is None:
                switch = k
    return decoded, switch


def _stream_windows(trial, fs, start_s, end_s, window_s, shift_s):
    trial = np.asarray(trial, dtype=np.float64)
    a, b = to_index(start_s, fs), to_index(end_s, fs)
    if b > trial.shape[-1]:
        raise SizeError(f"trial of {trial.shape[-1] / fs:.3f} s ends before {end_s} s")
    return slide(trial[..., a:b], fs, window_s, shift_s)


def _predict(model, windows):
    return list(np.asarray(model.predict(windows)))


def cascade_stream(trial, fs, model_r_ao, model_ao_mi, timeline=None, start_s=0.0,
                   end_s=13.0, window_s=2.0, shift_s=0.2, arm_count=5, reversible=False,
                   idle_as="AO") -> StreamReport:
    """Pseudo-online MI decoding of one trial (channels x samples from t=0).

    ``model_*`` expose ``predict(windows) -> class names``.
    """
    timeline = timeline or ProtocolTimeline.default("MI")
    windows = _stream_windows(trial, fs, start_s, end_s, window_s, shift_s)
    s1 = _predict(model_r_ao, windows)
    s2 = _predict(model_ao_mi, windows)
    decoded, switch = cascade_decisions(s1, s2, arm_count, reversible)
    mids = window_midpoints(start_s, end_s, window_s, shift_s)
    truth, counts = score_windows(decoded, mids, timeline, "MI", idle_as)
    return StreamReport(decoded, truth, counts, switch, start_s, window_s, shift_s)


def me_stream(trial, fs, model_ao_mrcp, timeline=None, start_s=4.0, end_s=13.0,
              window_s=1.0, shift_s=0.5, idle_as="AO") -> StreamReport:
    """Single-stage AO/MRCP streaming; the task state counts as MRCP."""
    timeline = timeline or ProtocolTimeline.default("ME")
    windows = _stream_windows(trial, fs, start_s, end_s, window_s, shift_s)
    decoded = _predict(model_ao_mrcp, windows)
    mids = window_midpoints(start_s, end_s, window_s, shift_s)
    truth, counts = score_windows(decoded, mids, timeline, "MRCP", idle_as)
    return StreamReport(decoded, truth, counts, None, start_s, window_s, shift_s)


# -- grand average -----------------------------------------------------------------

@dataclass
class GrandAverage:
    mean: np.ndarray
    se: np.ndarray | None
    n: int
    se_undefined: bool = False


def grand_average_mrcp(epochs) -> GrandAverage:
    """Pointwise mean and standard error over trials (trials x channels x samples)."""
    x = np.asarray(epochs, dtype=np.float64)
    if x.ndim != 3 or len(x) == 0:
        raise ValueError("expected a non-empty trials x channels x samples array")
    n = len(x)
    if n < 2:
        return GrandAverage(x[0].copy(), None, 1, True)
    return GrandAverage(x.mean(axis=0), x.std(axis=0, ddof=1) / math.sqrt(n), n)
