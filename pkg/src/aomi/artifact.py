"""Ocular artifact removal: deflationary FastICA on EEG, EOG-correlation flagging."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

log = logging.getLogger(__name__)


class DimensionalityError(ValueError):
    """Too few channels/samples, or rank-deficient input."""


class ConvergenceError(RuntimeError):
    def __init__(self, message, n_iter, deltas):
        super().__init__(message)
        self.n_iter = n_iter
        self.deltas = deltas


@dataclass(frozen=True)
class ICADecomposition:
    """Fitted ICA model.

    ``unmixing`` maps centred channels to unit-variance sources and
    ``mixing`` maps them back. ``rotation`` holds the unit-norm weight
    vectors found in the whitened space.
    """

    unmixing: np.ndarray
    mixing: np.ndarray
    mean: np.ndarray
    whitening: np.ndarray
    rotation: np.ndarray
    n_iter: tuple
    converged: tuple
    component_scores: np.ndarray | None = None
    rejected: frozenset = field(default_factory=frozenset)

    @property
    def n_components(self) -> int:
        return self.unmixing.shape[0]

    def sources(self, eeg) -> np.ndarray:
        eeg = np.asarray(eeg, dtype=np.float64)
        if eeg.shape[0] != self.unmixing.shape[1]:
            raise ValueError(
                f"expected {self.unmixing.shape[1]} channels, got {eeg.shape[0]}")
        return self.unmixing @ (eeg - self.mean[:, None])


def _whiten(x, n_components):
    n_ch, n = x.shape
    mean = x.mean(axis=1)
    xc = x - mean[:, None]
    cov = xc @ xc.T / n
    d, e = np.linalg.eigh(cov)
    order = np.argsort(d)[::-1]
    d, e = d[order], e[:, order]
    if d[0] <= 0 or d[n_components - 1] / d[0] < 1e-10:
        raise DimensionalityError(
            f"data rank below {n_components} (eigenvalues {d[:n_components]})")
    d, e = d[:n_components], e[:, :n_components]
    k = (e / np.sqrt(d)).T
    return mean, k, k @ xc


def _logcosh(u):
    g = np.tanh(u)
    return g, 1.0 - g * g


def fastica_fit(eeg, n_components=None, seed=0, max_iter=500, tol=1e-6,
                strict=True) -> ICADecomposition:
    """Deflationary FastICA with the log-cosh contrast.

    Parameters
    ----------
    eeg : array_like, shape (n_channels, n_samples)
        Needs at least two channels and ``n_samples >= 20 * n_channels``.
    n_components : int, optional
        Defaults to the channel count.
    seed : int
        Seeds the initial weight vectors.
    max_iter, tol : int, float
        A component has converged when successive weight vectors differ by
        less than ``tol`` (up to sign).
    strict : bool
        Raise :class:`ConvergenceError` if any component fails to converge.
        Otherwise keep the last iterate and log a warning.

    Returns
    -------
    ICADecomposition
        Components ordered by back-projected variance, largest first.
    """
    x = np.asarray(eeg, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DimensionalityError("ICA needs a channels x samples array with >= 2 channels")
    n_ch, n = x.shape
    if n < 20 * n_ch:
        raise DimensionalityError(f"{n} samples for {n_ch} channels; need >= {20 * n_ch}")
    n_components = n_ch if n_components is None else int(n_components)
    if not 1 <= n_components <= n_ch:
        raise DimensionalityError(f"n_components must be in [1, {n_ch}]")
    mean, k, z = _whiten(x, n_components)

    rng = np.random.default_rng(seed)
    w_all = np.zeros((n_components, n_components))
    iters, conv, deltas = [], [], []
    for p in range(n_components):
        w = rng.standard_normal(n_components)
        w -= w_all[:p].T @ (w_all[:p] @ w)
        w /= np.linalg.norm(w)
        delta = np.inf
        for it in range(1, max_iter + 1):
            g, gp = _logcosh(w @ z)
            w_new = z @ g / n - gp.mean() * w
            w_new -= w_all[:p].T @ (w_all[:p] @ w_new)
            w_new /= np.linalg.norm(w_new)
            delta = min(np.linalg.norm(w_new - w), np.linalg.norm(w_new + w))
            w = w_new
            if delta < tol:
                break
        w_all[p] = w
        iters.append(it)
        conv.append(bool(delta < tol))
        deltas.append(float(delta))
    if not all(conv):
        bad = [i for i, c in enumerate(conv) if not c]
        msg = f"FastICA components {bad} did not converge in {max_iter} iterations"
        if strict:
            raise ConvergenceError(msg, iters, deltas)
        log.warning("%s (final deltas %s)", msg, [deltas[i] for i in bad])

    unmixing = w_all @ k
    mixing = np.linalg.pinv(unmixing)
    order = np.argsort(-np.sum(mixing**2, axis=0), kind="stable")
    return ICADecomposition(
        unmixing=unmixing[order],
        mixing=mixing[:, order],
        mean=mean,
        whitening=k,
        rotation=w_all[order],
        n_iter=tuple(iters[i] for i in order),
        converged=tuple(conv[i] for i in order),
    )


def _pearson(a, b):
    a = a - a.mean()
    b = b - b.mean()
    den = np.sqrt(np.dot(a, a) * np.dot(b, b))
    if den == 0:
        return 0.0
    return float(np.dot(a, b) / den)


def ocular_scores(sources, eog) -> np.ndarray:
    """|Pearson r| of every source against every EOG channel (components x eog)."""
    sources = np.atleast_2d(np.asarray(sources, dtype=np.float64))
    eog = np.atleast_2d(np.asarray(eog, dtype=np.float64))
    if sources.shape[1] != eog.shape[1]:
        raise ValueError("sources and EOG must have equal sample counts")
    return np.array([[abs(_pearson(s, e)) for e in eog] for s in sources])


def flag_ocular(dec: ICADecomposition, sources, eog, threshold: float = 0.7) -> ICADecomposition:
    """Mark components whose max |r| with any EOG channel reaches ``threshold``."""
    scores = ocular_scores(sources, eog)
    rejected = frozenset(int(j) for j in np.flatnonzero(scores.max(axis=1) >= threshold))
    return replace(dec, component_scores=scores, rejected=rejected)


def reconstruct(dec: ICADecomposition, eeg, rejected=None) -> np.ndarray:
    """Subtract the back-projection of rejected components from ``eeg``."""
    eeg = np.asarray(eeg, dtype=np.float64)
    rej = sorted(dec.rejected if rejected is None else rejected)
    if eeg.shape[0] != dec.mixing.shape[0]:
        raise ValueError(
            f"decomposition has {dec.mixing.shape[0]} channels, data has {eeg.shape[0]}")
    if not rej:
        return eeg.copy()
    s = dec.sources(eeg)[rej]
    return eeg - dec.mixing[:, rej] @ s


def remove_ocular(eeg_fit, eog_fit, threshold=0.7, seed=0, strict=False):
    """Fit ICA on ``eeg_fit`` and flag against ``eog_fit``; returns the decomposition."""
    dec = fastica_fit(eeg_fit, seed=seed, strict=strict)
    return flag_ocular(dec, dec.sources(eeg_fit), eog_fit, threshold)
