import numpy as np
import pytest

from aomi.artifact import (ConvergenceError, DimensionalityError, fastica_fit, flag_ocular,
                           ocular_scores, reconstruct, remove_ocular)


def _mixture(seed=0, n=6000):
    rng = np.random.default_rng(seed)
    t = np.arange(n) / 250.0
    sources = np.stack([
        np.sign(np.sin(2 * np.pi * 1.3 * t)),
        rng.laplace(size=n),
        np.sin(2 * np.pi * 7 * t) ** 3,
        rng.uniform(-1, 1, n),
    ])
    sources = (sources - sources.mean(1, keepdims=True)) / sources.std(1, keepdims=True)
    mix = rng.normal(size=(4, 4)) + 2 * np.eye(4)
    return sources, mix, mix @ sources


def test_fastica_recovers_sources():
    s, _, x = _mixture()
    dec = fastica_fit(x, seed=1)
    est = dec.sources(x)
    corr = np.abs(np.corrcoef(np.vstack([s, est]))[:4, 4:])
    # each true source matched by exactly one component
    assert np.all(corr.max(axis=1) > 0.98)
    assert sorted(corr.argmax(axis=1)) == [0, 1, 2, 3]
    np.testing.assert_allclose(np.cov(est, bias=True), np.eye(4), atol=1e-8)


def test_decomposition_structure():
    _, _, x = _mixture(2)
    dec = fastica_fit(x, seed=0)
    np.testing.assert_allclose(dec.unmixing @ dec.mixing, np.eye(4), atol=1e-8)
    np.testing.assert_allclose(dec.rotation @ dec.rotation.T, np.eye(4), atol=1e-8)
    power = np.sum(dec.mixing**2, axis=0)
    assert np.all(np.diff(power) <= 1e-12)
    assert all(dec.converged)
    np.testing.assert_allclose(reconstruct(dec, x, []), x)
    # removing every component leaves only the channel means
    np.testing.assert_allclose(reconstruct(dec, x, range(4)),
                               np.broadcast_to(dec.mean[:, None], x.shape), atol=1e-8)


def test_fit_is_seed_deterministic():
    _, _, x = _mixture(3)
    a, b = fastica_fit(x, seed=5), fastica_fit(x, seed=5)
    np.testing.assert_array_equal(a.unmixing, b.unmixing)


def test_blink_component_removed():
    rng = np.random.default_rng(4)
    n, fs = 8000, 250.0
    blinks = np.zeros(n)
    for start in rng.choice(n - 100, 12, replace=False):
        blinks[start:start + 75] += 80 * np.hanning(75)
    background = rng.laplace(size=(5, n)) * 5
    lead = np.array([1.0, 0.6, 0.3, 0.1, 0.05])
    eeg = rng.normal(size=(5, 5)) @ background + lead[:, None] * blinks
    eog = np.stack([blinks + rng.normal(0, 2, n), 0.3 * blinks + rng.normal(0, 2, n)])
    dec = remove_ocular(eeg, eog, threshold=0.7, seed=0)
    assert len(dec.rejected) == 1
    j = next(iter(dec.rejected))
    assert dec.component_scores[j].max() >= 0.7
    clean = reconstruct(dec, eeg)
    r_before = abs(np.corrcoef(eeg[0], blinks)[0, 1])
    r_after = abs(np.corrcoef(clean[0], blinks)[0, 1])
    assert r_before > 0.8 and r_after < 0.1


def test_flag_threshold_is_inclusive():
    x = np.random.default_rng(5).normal(size=(2, 500))
    dec = fastica_fit(np.vstack([x, x[0] + x[1]]) + 1e-3 * np.random.default_rng(6).normal(
        size=(3, 500)), seed=0)
    src = dec.sources(np.vstack([x, x[0] + x[1]]))
    scores = ocular_scores(src, x[:1])
    thr = float(scores.max())
    flagged = flag_ocular(dec, src, x[:1], threshold=thr)
    assert int(np.argmax(scores[:, 0])) in flagged.rejected
    assert not flag_ocular(dec, src, x[:1], threshold=np.nextafter(thr, 2)).rejected


def test_ocular_scores_oracle():
    rng = np.random.default_rng(7)
    s, e = rng.normal(size=(3, 400)), rng.normal(size=(2, 400))
    e[0] += 2 * s[1]
    ref = np.abs(np.corrcoef(np.vstack([s, e]))[:3, 3:])
    np.testing.assert_allclose(ocular_scores(s, e), ref, atol=1e-12)
    with pytest.raises(ValueError):
        ocular_scores(s, e[:, :10])


def test_dimensionality_errors():
    rng = np.random.default_rng(8)
    with pytest.raises(DimensionalityError):
        fastica_fit(rng.normal(size=(1, 1000)))
    with pytest.raises(DimensionalityError):
        fastica_fit(rng.normal(size=(4, 50)))
    x = rng.normal(size=(3, 1000))
    with pytest.raises(DimensionalityError):
        fastica_fit(np.vstack([x, x[0] + x[1]]))


def test_convergence_error_when_strict():
    _, _, x = _mixture(9)
    with pytest.raises(ConvergenceError) as info:
        fastica_fit(x, max_iter=1, tol=1e-15)
    assert info.value.n_iter
    dec = fastica_fit(x, max_iter=1, tol=1e-15, strict=False)
    assert not all(dec.converged)
