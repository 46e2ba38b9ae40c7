"""Common spatial patterns and filter-bank CSP log-variance features."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dsp import FilterBank

log = logging.getLogger(__name__)

EPS = np.finfo(np.float64).eps
DEFAULT_SHRINKAGE = 1e-6
FALLBACK_SHRINKAGE = 1e-3
NULL_TOL = 1e-12


class RankError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class CSPFilters:
    """Spatial filters for a two-class problem.

    ``projection`` rows are the top-m then bottom-m generalized eigenvectors;
    ``eigenvalues`` lists every eigenvalue of the whitened class-a covariance
    in descending order, one per dimension of the data's range.
    """

    projection: np.ndarray
    eigenvalues: np.ndarray
    m: int
    shrinkage: float
    composite: np.ndarray

    @property
    def selected_eigenvalues(self) -> np.ndarray:
        ev = self.eigenvalues
        return np.concatenate([ev[:self.m], ev[len(ev) - self.m:]])


def trial_covariances(trials, trace_normalize=True) -> np.ndarray:
    x = np.asarray(trials, dtype=np.float64)
    x = x - x.mean(axis=-1, keepdims=True)
    cov = np.einsum("nis,njs->nij", x, x)
    if trace_normalize:
        tr = np.trace(cov, axis1=1, axis2=2)
        tr = np.where(tr > 0, tr, 1.0)
        cov = cov / tr[:, None, None]
    else:
        cov = cov / x.shape[-1]
    return cov


def _shrink(cov, gamma):
    n = cov.shape[0]
    return (1 - gamma) * cov + gamma * np.trace(cov) / n * np.eye(n)


def _sign_fix(w):
    idx = np.argmax(np.abs(w), axis=1)
    s = np.sign(w[np.arange(len(w)), idx])
    s[s == 0] = 1
    return w * s[:, None]


def _data_subspace(cov_a, cov_b, tol=NULL_TOL):
    """Orthonormal basis of the composite's range (None when full rank).

    Exact null directions (e.g. after removing an ICA component) would
    otherwise be shrunk to an eigenvalue of 0.5 and can be selected as
    zero-variance filters.
    """
    d, e = np.linalg.eigh(cov_a + cov_b)
    keep = d > tol * d[-1]
    return None if keep.all() else e[:, keep]


def csp_from_covariances(cov_a, cov_b, m=2, shrinkage=DEFAULT_SHRINKAGE) -> CSPFilters:
    n_ch = cov_a.shape[0]
    if 2 * m > n_ch or m < 1:
        raise ValueError(f"m={m} pairs need 2m <= {n_ch} channels")
    basis = _data_subspace(cov_a, cov_b)
    if basis is not None:
        r = basis.shape[1]
        if 2 * m > r:
            raise RankError(f"data rank {r} too low for m={m} pairs")
        log.info("composite covariance has rank %d of %d; solving in its range", r, n_ch)
        f = csp_from_covariances(basis.T @ cov_a @ basis, basis.T @ cov_b @ basis, m,
                                 shrinkage)
        return CSPFilters(_sign_fix(f.projection @ basis.T), f.eigenvalues, m, f.shrinkage,
                          cov_a + cov_b)
    for gamma in (shrinkage, max(shrinkage, FALLBACK_SHRINKAGE)):
        sa, sb = _shrink(cov_a, gamma), _shrink(cov_b, gamma)
        comp = sa + sb
        d, e = np.linalg.eigh(comp)
        if d[0] > 1e-10 * d[-1] and d[-1] > 0:
            break
        log.info("composite covariance rank-deficient at shrinkage %g", gamma)
    else:
        raise RankError("composite covariance singular even after shrinkage")
    p = (e / np.sqrt(d)).T
    lam, b = np.linalg.eigh(p @ sa @ p.T)
    order = np.argsort(lam)[::-1]
    lam, b = lam[order], b[:, order]
    w = b.T @ p
    keep = np.r_[np.arange(m), np.arange(n_ch - m, n_ch)]
    return CSPFilters(_sign_fix(w[keep]), lam, m, gamma, comp)


def csp_fit(class_a, class_b, m=2, shrinkage=DEFAULT_SHRINKAGE, trace_normalize=True) -> CSPFilters:
    """Fit CSP filters from trials x channels x samples arrays of two classes."""
    class_a = np.asarray(class_a, dtype=np.float64)
    class_b = np.asarray(class_b, dtype=np.float64)
    if len(class_a) < 2 or len(class_b) < 2:
        raise ValueError("CSP needs at least two trials per class")
    if class_a.shape[1] != class_b.shape[1]:
        raise ValueError("classes disagree on channel count")
    if 2 * m > class_a.shape[1]:
        raise ValueError(f"m={m} pairs need 2m <= {class_a.shape[1]} channels")
    ca = trial_covariances(class_a, trace_normalize).mean(axis=0)
    cb = trial_covariances(class_b, trace_normalize).mean(axis=0)
    return csp_from_covariances(ca, cb, m, shrinkage)


def csp_features(filters: CSPFilters, windows, return_flags=False):
    """Normalised log-variance of the spatially filtered window(s).

    ``windows`` is channels x samples or n x channels x samples. A zero
    variance ratio is clamped to machine epsilon and flagged.
    """
    x = np.asarray(windows, dtype=np.float64)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.shape[1] != filters.projection.shape[1]:
        raise ValueError(
            f"window has {x.shape[1]} channels, filters expect {filters.projection.shape[1]}")
    z = np.einsum("fc,ncs->nfs", filters.projection, x)
    var = z.var(axis=-1)
    total = var.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(total > 0, var / total, 0.0)
    flags = ratio < EPS
    if flags.any():
        log.warning("%d zero-variance CSP projections clamped", int(flags.sum()))
    feats = np.log(np.maximum(ratio, EPS))
    if single:
        feats, flags = feats[0], flags[0]
    return (feats, flags) if return_flags else feats


# -- mutual-information feature selection ----------------------------------

def _parzen_mi(f, y):
    """I(f; y) with Gaussian Parzen densities (Silverman bandwidth)."""
    classes = np.unique(y)
    n = len(f)
    sd = f.std()
    if sd == 0:
        return 0.0
    h = 1.06 * sd * n ** (-0.2)
    dens = np.exp(-0.5 * ((f[:, None] - f[None, :]) / h) ** 2)
    prior = np.array([np.mean(y == c) for c in classes])
    cond = np.stack([dens[:, y == c].mean(axis=1) for c in classes], axis=1)
    joint = cond * prior
    post = joint / joint.sum(axis=1, keepdims=True)
    h_y = -np.sum(prior * np.log(prior))
    with np.errstate(divide="ignore", invalid="ignore"):
        h_y_f = -np.nanmean(np.sum(np.where(post > 0, post * np.log(post), 0.0), axis=1))
    return float(h_y - h_y_f)


def select_features(features, y, k, m, n_bands) -> np.ndarray:
    """Top-k features by mutual information, completed with their CSP partners."""
    features = np.asarray(features)
    mi = np.array([_parzen_mi(features[:, j], np.asarray(y)) for j in range(features.shape[1])])
    top = np.argsort(-mi, kind="stable")[:k]
    chosen = set(int(i) for i in top)
    per_band = 2 * m
    for i in top:
        band, pos = divmod(int(i), per_band)
        chosen.add(band * per_band + (per_band - 1 - pos))
    return np.array(sorted(chosen))


# -- filter bank CSP ---------------------------------------------------------

@dataclass
class FBCSPModel:
    bands: list
    fs: float
    m: int
    filters: list
    bank: FilterBank = field(repr=False)
    shrinkage: float = DEFAULT_SHRINKAGE
    selected: np.ndarray | None = None
    n_channels: int = 0

    @property
    def feature_dim(self) -> int:
        if self.selected is not None:
            return len(self.selected)
        return 2 * self.m * len(self.bands)

    def to_dict(self) -> dict:
        return {
            "bands": [list(b) for b in self.bands],
            "fs": self.fs,
            "m": self.m,
            "order": self.bank.order,
            "shrinkage": self.shrinkage,
            "selected": None if self.selected is None else self.selected.tolist(),
            "n_channels": self.n_channels,
            "filters": [{"projection": f.projection.tolist(),
                         "eigenvalues": f.eigenvalues.tolist(),
                         "shrinkage": f.shrinkage} for f in self.filters],
        }

    @classmethod
    def from_dict(cls, d) -> "FBCSPModel":
        m = d["m"]
        filters = [CSPFilters(np.array(f["projection"]), np.array(f["eigenvalues"]), m,
                              f["shrinkage"], np.empty((0, 0))) for f in d["filters"]]
        sel = None if d["selected"] is None else np.array(d["selected"], dtype=int)
        return cls([tuple(b) for b in d["bands"]], d["fs"], m, filters,
                   FilterBank(d["bands"], d["fs"], d.get("order", 2)),
                   d["shrinkage"], sel, d["n_channels"])


def band_filter(windows, bank: FilterBank) -> np.ndarray:
    """bands x n x channels x samples stack of zero-phase band-passed windows."""
    return bank.apply(np.asarray(windows, dtype=np.float64), axis=-1)


def fbcsp_fit(windows, labels, bands, fs, m=2, shrinkage=DEFAULT_SHRINKAGE,
              select_k=None, order=2, filtered=None, return_features=False):
    """Fit per-band CSP on two-class windows.

    Parameters
    ----------
    windows : array_like, shape (n, channels, samples)
    labels : sequence
        Exactly two distinct values; the first in sorted order is class a.
    bands : sequence of (lo, hi)
    filtered : ndarray, optional
        Precomputed :func:`band_filter` output for ``windows``.
    select_k : int, optional
        Enable mutual-information selection of ``k`` features (plus partners).
    """
    labels = np.asarray(labels)
    classes = sorted(set(labels.tolist()))
    if len(classes) != 2:
        raise ValueError(f"FBCSP needs exactly two classes, got {classes}")
    bank = FilterBank(bands, fs, order)
    if filtered is None:
        filtered = band_filter(windows, bank)
    if filtered.shape[0] != len(bank):
        raise ValueError("filtered stack does not match the band count")
    is_a = labels == classes[0]
    filters = [csp_fit(fb[is_a], fb[~is_a], m, shrinkage) for fb in filtered]
    model = FBCSPModel(list(bank.bands), float(fs), m, filters, bank, shrinkage,
                       None, filtered.shape[2])
    feats = _features(model, filtered)
    if select_k is not None:
        model.selected = select_features(feats, labels, select_k, m, len(bands))
        feats = feats[:, model.selected]
    return (model, feats) if return_features else model


def _features(model, filtered):
    return np.concatenate([csp_features(f, fb) for f, fb in zip(model.filters, filtered)],
                          axis=1)


def fbcsp_transform(model: FBCSPModel, windows=None, filtered=None) -> np.ndarray:
    """Feature matrix (n x feature_dim), or a vector for a single window."""
    single = False
    if filtered is None:
        x = np.asarray(windows, dtype=np.float64)
        single = x.ndim == 2
        if single:
            x = x[None]
        if x.shape[1] != model.n_channels:
            raise ValueError(f"window has {x.shape[1]} channels, model expects {model.n_channels}")
        filtered = band_filter(x, model.bank)
    feats = _features(model, filtered)
    if model.selected is not None:
        feats = feats[:, model.selected]
    return feats[0] if single else feats
