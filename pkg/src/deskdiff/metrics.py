"""Distribution-match metrics used for evaluation and acceptance."""

from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist, pdist


def median_bandwidth(ref: np.ndarray) -> float:
    """Median pairwise Euclidean distance within ``ref``."""
    ref = np.asarray(ref, dtype=np.float64)
    if ref.shape[0] < 2:
        raise ValueError("median heuristic needs at least two samples")
    return float(np.median(pdist(ref)))


def _kernel(a, b, bandwidth):
    return np.exp(-cdist(a, b, "sqeuclidean") / (2.0 * bandwidth ** 2))


def mmd(x, y, bandwidth: float | None = None, unbiased: bool = True) -> float:
    """Squared maximum mean discrepancy with a Gaussian kernel.

    The unbiased estimate drops every same-index kernel term. For equal set
    sizes that includes the paired cross terms ``k(x_i, y_i)``, which makes
    ``mmd(X, X) == 0``; otherwise the two-sample U-statistic is used. With
    ``bandwidth=None`` the median pairwise distance of ``y`` (the reference)
    is used.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[1] != y.shape[1]:
        raise ValueError("mmd needs two (n, d) arrays of equal width")
    m, n = x.shape[0], y.shape[0]
    if m < 2 or n < 2:
        raise ValueError("mmd needs at least two samples per set")
    if bandwidth is None:
        bandwidth = median_bandwidth(y)
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    kxx = _kernel(x, x, bandwidth)
    kyy = _kernel(y, y, bandwidth)
    kxy = _kernel(x, y, bandwidth)
    if not unbiased:
        return float(kxx.mean() + kyy.mean() - 2.0 * kxy.mean())
    sxx = (kxx.sum() - np.trace(kxx)) / (m * (m - 1))
    syy = (kyy.sum() - np.trace(kyy)) / (n * (n - 1))
    if m == n:
        sxy = (kxy.sum() - np.trace(kxy)) / (m * (m - 1))
    else:
        sxy = kxy.mean()
    return float(sxx + syy - 2.0 * sxy)


def nearest_center(samples, centers) -> np.ndarray:
    samples = np.asarray(samples, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64)
    if samples.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    if samples.shape[1] != centers.shape[1]:
        raise ValueError("samples and centers differ in width")
    return np.argmin(cdist(samples, centers), axis=1)


def mode_coverage(samples, centers, threshold: float) -> int:
    """Number of centers with at least one sample within ``threshold``."""
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    samples = np.asarray(samples, dtype=np.float64).reshape(-1, np.shape(centers)[1])
    centers = np.asarray(centers, dtype=np.float64)
    if samples.shape[0] == 0:
        return 0
    if samples.shape[1] != centers.shape[1]:
        raise ValueError("samples and centers differ in width")
    dist = cdist(centers, samples)
    return int(np.sum(dist.min(axis=1) <= threshold))


def class_purity(samples, centers, requested) -> float:
    """Fraction of samples whose nearest center is the requested class."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.shape[0] == 0:
        return float("nan")
    requested = np.broadcast_to(np.asarray(requested), (samples.shape[0],))
    return float(np.mean(nearest_center(samples, centers) == requested))


def moments(samples) -> dict:
    samples = np.asarray(samples, dtype=np.float64)
    return {"mean": samples.mean(axis=0).tolist(), "var": samples.var(axis=0).tolist()}
