"""Kernel SVM trained by SMO, stratified k-fold and grid search."""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numba
import numpy as np

log = logging.getLogger(__name__)

TAU = 1e-12
ALPHA_EPS = 1e-12
GRID_C = (0.001, 0.01, 0.1, 1, 10, 25, 50, 100, 1000)
GRID_GAMMA = ("auto", 0.01, 0.001, 0.0001, 0.00001)
GRID_KERNELS = ("linear", "rbf", "sigmoid")


class LabelError(ValueError):
    pass


class NonConvergenceError(RuntimeError):
    def __init__(self, message, n_iter, violation):
        super().__init__(message)
        self.n_iter = n_iter
        self.violation = violation


class StratificationError(ValueError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "rbf"
    gamma: float | str = "auto"
    coef0: float = 0.0

    def __post_init__(self):
        if self.kind not in GRID_KERNELS:
            raise ValueError(f"unknown kernel {self.kind!r}")
        if self.gamma != "auto" and not float(self.gamma) > 0:
            raise ValueError("gamma must be positive or 'auto'")

    def resolve(self, n_features: int) -> "KernelSpec":
        if self.gamma == "auto":
            return KernelSpec(self.kind, 1.0 / n_features, self.coef0)
        return self

    def __call__(self, a, b) -> np.ndarray:
        a = np.atleast_2d(a)
        b = np.atleast_2d(b)
        g = 1.0 / a.shape[1] if self.gamma == "auto" else float(self.gamma)
        if self.kind == "linear":
            return a @ b.T
        if self.kind == "rbf":
            sq = (np.sum(a * a, 1)[:, None] + np.sum(b * b, 1)[None, :] - 2 * a @ b.T)
            return np.exp(-g * np.maximum(sq, 0.0))
        return np.tanh(g * (a @ b.T) + self.coef0)


@numba.njit(cache=True)
def _smo(Q, y, C, tol, max_iter, alpha, G, trace):
    n = y.shape[0]
    obj = 0.0
    it = 0
    gap = np.inf
    while it < max_iter:
        gmax = -np.inf
        gmin = np.inf
        i = -1
        j = -1
        for t in range(n):
            v = -y[t] * G[t]
            if (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0):
                if v > gmax:
                    gmax = v
                    i = t
            if (y[t] < 0 and alpha[t] < C) or (y[t] > 0 and alpha[t] > 0):
                if v < gmin:
                    gmin = v
                    j = t
        gap = gmax - gmin
        if i < 0 or j < 0 or gap < tol:
            break
        ai_old = alpha[i]
        aj_old = alpha[j]
        if y[i] != y[j]:
            quad = Q[i, i] + Q[j, j] + 2.0 * Q[i, j]
            if quad <= 0:
                quad = TAU
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            quad = Q[i, i] + Q[j, j] - 2.0 * Q[i, j]
            if quad <= 0:
                quad = TAU
            delta = (G[i] - G[j]) / quad
            s = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if s > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = s - C
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = s
            if s > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = s - C
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = s
        di = alpha[i] - ai_old
        dj = alpha[j] - aj_old
        # change of 0.5 a'Qa - e'a, using the gradient before the update
        obj += (G[i] * di + G[j] * dj
                + 0.5 * (Q[i, i] * di * di + Q[j, j] * dj * dj) + Q[i, j] * di * dj)
        for t in range(n):
            G[t] += Q[t, i] * di + Q[t, j] * dj
        if trace.shape[0] > it:
            trace[it] = -obj
        it += 1
    return it, gap


def _rho(y, G, alpha, C):
    yg = y * G
    upper = alpha >= C
    lower = alpha <= 0
    free = ~upper & ~lower
    if free.any():
        return float(yg[free].mean())
    ub_mask = (upper & (y < 0)) | (lower & (y > 0))
    lb_mask = (upper & (y > 0)) | (lower & (y < 0))
    ub = yg[ub_mask].min() if ub_mask.any() else np.inf
    lb = yg[lb_mask].max() if lb_mask.any() else -np.inf
    return float((ub + lb) / 2)


@dataclass
class SVMModel:
    support_vectors: np.ndarray
    dual_coef: np.ndarray
    bias: float
    kernel: KernelSpec
    C: float
    n_iter: int
    kkt_violation: float
    converged: bool
    support: np.ndarray = field(default=None)
    alpha: np.ndarray = field(default=None, repr=False)
    objective_trace: np.ndarray | None = field(default=None, repr=False)

    def decision_function(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None]
        if X.shape[0] == 0:
            return np.empty(0)
        if X.shape[1] != self.support_vectors.shape[1]:
            raise ValueError(
                f"expected {self.support_vectors.shape[1]} features, got {X.shape[1]}")
        return self.kernel(X, self.support_vectors) @ self.dual_coef + self.bias

    def to_dict(self) -> dict:
        return {
            "kernel": {"kind": self.kernel.kind, "gamma": self.kernel.gamma,
                       "coef0": self.kernel.coef0},
            "C": self.C,
            "bias": self.bias,
            "support_vectors": self.support_vectors.tolist(),
            "dual_coef": self.dual_coef.tolist(),
            "n_iter": self.n_iter,
            "kkt_violation": self.kkt_violation,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, d) -> "SVMModel":
        k = d["kernel"]
        return cls(np.array(d["support_vectors"], dtype=np.float64).reshape(
                       len(d["dual_coef"]), -1),
                   np.array(d["dual_coef"]), d["bias"],
                   KernelSpec(k["kind"], k["gamma"], k["coef0"]), d["C"], d["n_iter"],
                   d["kkt_violation"], d["converged"])


def _check_xy(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be n x d with one label per row")
    if not np.all(np.isfinite(X)):
        raise ValueError("features must be finite")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise LabelError("labels must be +1/-1")
    if len(np.unique(y)) < 2:
        raise LabelError("both classes must be present")
    return X, y


def svm_train(X, y, C=1.0, kernel=KernelSpec(), tol=1e-3, max_iter=None,
              gram=None, record_objective=False) -> SVMModel:
    """Train a binary C-SVM with maximal-violating-pair SMO.

    Parameters
    ----------
    X : array_like, shape (n, d)
    y : array_like of +1/-1
    C : float
    kernel : KernelSpec
        ``gamma='auto'`` resolves to ``1/d``.
    tol : float
        Stop once the maximal KKT violation drops below ``tol``.
    max_iter : int, optional
        Defaults to ``100 * n``. Hitting it with a violation above ``10 * tol``
        raises :class:`NonConvergenceError`.
    gram : ndarray, optional
        Precomputed kernel matrix of ``X``.
    record_objective : bool
        Keep the dual objective after every SMO step.
    """
    X, y = _check_xy(X, y)
    n = len(y)
    kernel = kernel.resolve(X.shape[1])
    K = kernel(X, X) if gram is None else np.asarray(gram, dtype=np.float64)
    Q = K * np.outer(y, y)
    max_iter = 100 * n if max_iter is None else int(max_iter)
    alpha = np.zeros(n)
    G = -np.ones(n)
    trace = np.full(max_iter if record_objective else 0, np.nan)
    n_iter, gap = _smo(Q, y, float(C), float(tol), max_iter, alpha, G, trace)
    converged = gap < tol
    if not converged and gap > 10 * tol:
        raise NonConvergenceError(
            f"SMO stopped after {n_iter} iterations with KKT violation {gap:.3g}",
            n_iter, gap)
    rho = _rho(y, G, alpha, C)
    sv = np.flatnonzero(alpha > ALPHA_EPS)
    return SVMModel(
        support_vectors=X[sv].copy(),
        dual_coef=alpha[sv] * y[sv],
        bias=-rho,
        kernel=kernel,
        C=float(C),
        n_iter=int(n_iter),
        kkt_violation=float(gap),
        converged=bool(converged),
        support=sv,
        alpha=alpha,
        objective_trace=trace[:n_iter] if record_objective else None,
    )


def svm_predict(model: SVMModel, X):
    """Labels (+1/-1, zero goes to -1) and decision values."""
    f = model.decision_function(X)
    return np.where(f > 0, 1, -1), f


def kkt_residuals(model: SVMModel, X, y, tol=1e-3) -> float:
    """Largest breach of the soft-margin KKT conditions on the training set."""
    X, y = _check_xy(X, y)
    a = model.alpha
    yf = y * model.decision_function(X)
    res = np.zeros(len(y))
    at0 = a <= ALPHA_EPS
    atC = a >= model.C - ALPHA_EPS * max(1.0, model.C)
    free = ~at0 & ~atC
    res[at0] = np.maximum(0, 1 - yf[at0])
    res[free] = np.abs(yf[free] - 1)
    res[atC] = np.maximum(0, yf[atC] - 1)
    return float(res.max())


def stratified_kfold(y, k=10, seed=0) -> np.ndarray:
    """Fold index per sample; per-class counts across folds differ by <= 1."""
    y = np.asarray(y)
    if k < 2:
        raise ValueError("k must be >= 2")
    rng = np.random.default_rng(seed)
    folds = np.empty(len(y), dtype=int)
    offset = 0
    for c in sorted(set(y.tolist())):
        idx = np.flatnonzero(y == c)
        if len(idx) < k:
            raise StratificationError(f"class {c!r} has {len(idx)} samples for {k} folds")
        idx = rng.permutation(idx)
        folds[idx] = (offset + np.arange(len(idx))) % k
        offset = (offset + len(idx)) % k
    return folds


@dataclass(frozen=True)
class GridSpec:
    kernels: tuple = GRID_KERNELS
    C: tuple = GRID_C
    gamma: tuple = GRID_GAMMA
    folds: int = 10
    seed: int = 0
    tol: float = 1e-3

    def __post_init__(self):
        if not (self.kernels and self.C and self.gamma):
            raise ValueError("grid lists must be non-empty")
        if self.folds < 2:
            raise ValueError("need at least 2 folds")

    def candidates(self):
        """Canonical order: kernel as listed, C ascending, gamma as listed."""
        out = []
        for kern in self.kernels:
            gammas = ("auto",) if kern == "linear" else self.gamma
            for c, g in itertools.product(sorted(self.C), gammas):
                out.append((kern, float(c), g))
        return out


class Standardizer:
    """Per-dimension z-score fitted on training rows."""

    def __init__(self, mean=None, scale=None):
        self.mean = mean
        self.scale = scale

    def fit(self, X):
        X = np.asarray(X, dtype=np.float64)
        self.mean = X.mean(axis=0)
        sd = X.std(axis=0)
        self.scale = np.where(sd > 0, sd, 1.0)
        return self

    def transform(self, X):
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.scale

    def fit_transform(self, X):
        return self.fit(X).transform(X)


@dataclass
class GridResult:
    best: tuple
    best_score: float
    table: list

    def row(self, kernel, C, gamma):
        for r in self.table:
            if (r["kernel"], r["C"], r["gamma"]) == (kernel, C, gamma):
                return r
        raise KeyError((kernel, C, gamma))


def grid_search(X, y, grid: GridSpec = GridSpec(), standardize=True) -> GridResult:
    """Stratified k-fold CV accuracy for every grid candidate.

    Candidates whose SMO run fails to converge on a fold score 0 on that fold
    and are flagged. Ties resolve to the first candidate in canonical order.
    """
    X, y = _check_xy(X, y)
    folds = stratified_kfold(y, grid.folds, grid.seed)
    cands = grid.candidates()
    scores = np.zeros((len(cands), grid.folds))
    failed = np.zeros((len(cands), grid.folds), dtype=bool)
    for f in range(grid.folds):
        tr, te = folds != f, folds == f
        Xtr, Xte = X[tr], X[te]
        if standardize:
            sc = Standardizer().fit(Xtr)
            Xtr, Xte = sc.transform(Xtr), sc.transform(Xte)
        grams = {}
        for ci, (kern, c, g) in enumerate(cands):
            spec = KernelSpec(kern, g).resolve(X.shape[1])
            key = (kern, spec.gamma)
            if key not in grams:
                grams[key] = (spec(Xtr, Xtr), spec(Xte, Xtr))
            ktr, kte = grams[key]
            try:
                m = svm_train(Xtr, y[tr], c, spec, grid.tol, gram=ktr)
            except NonConvergenceError:
                failed[ci, f] = True
                continue
            pred = np.where(kte[:, m.support] @ m.dual_coef + m.bias > 0, 1, -1)
            scores[ci, f] = np.mean(pred == y[te])
    means = scores.mean(axis=1)
    table = [
        {"kernel": k, "C": c, "gamma": g, "mean_accuracy": float(means[i]),
         "fold_accuracy": scores[i].tolist(), "failed_folds": int(failed[i].sum())}
        for i, (k, c, g) in enumerate(cands)
    ]
    best = int(np.argmax(means))
    return GridResult(cands[best], float(means[best]), table)


@dataclass
class SVMClassifier:
    """Standardise, then a single SVM; the unit fitted inside each CV fold."""

    kernel: KernelSpec = KernelSpec()
    C: float = 1.0
    tol: float = 1e-3
    standardize: bool = True
    scaler: Standardizer | None = None
    svm: SVMModel | None = None

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        if self.standardize:
            self.scaler = Standardizer().fit(X)
            X = self.scaler.transform(X)
        self.svm = svm_train(X, y, self.C, self.kernel, self.tol)
        return self

    def decision_function(self, X):
        X = np.asarray(X, dtype=np.float64)
        if self.scaler is not None:
            X = self.scaler.transform(X)
        return self.svm.decision_function(X)

    def predict(self, X):
        return np.where(self.decision_function(X) > 0, 1, -1)

    def to_dict(self):
        return {
            "standardize": self.standardize,
            "scaler_mean": None if self.scaler is None else self.scaler.mean.tolist(),
            "scaler_scale": None if self.scaler is None else self.scaler.scale.tolist(),
            "svm": self.svm.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        svm = SVMModel.from_dict(d["svm"])
        scaler = None
        if d["scaler_mean"] is not None:
            scaler = Standardizer(np.array(d["scaler_mean"]), np.array(d["scaler_scale"]))
        return cls(svm.kernel, svm.C, standardize=d["standardize"], scaler=scaler, svm=svm)
