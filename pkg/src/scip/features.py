"""Classifier input feature: running coefficient of variation over IATs.

The CoV (population standard deviation over mean) is scale- and
shift-free, which is what lets one classifier handle periods from
microseconds to seconds. One value is emitted per packet arrival
starting at the third packet; the value after ``n`` packets covers the
first ``n - 1`` IATs.
"""

from __future__ import annotations

import numpy as np

from .errors import InsufficientDataError, OrderingError

__all__ = ["CovAccumulator", "cov_sequence", "cov_from_iats", "cov_matrix"]


class CovAccumulator:
    """O(1)-per-packet streaming CoV over a single stream's IATs.

    Sums are kept relative to the first IAT (shifted-data form) to avoid
    catastrophic cancellation when the variation is tiny compared to the
    mean.
    """

    __slots__ = ("_last_t", "_shift", "_count", "_s1", "_s2")

    def __init__(self):
        self._last_t = None
        self._shift = 0.0
        self._count = 0
        self._s1 = 0.0
        self._s2 = 0.0

    def add(self, timestamp: float) -> float | None:
        """Record an arrival; returns the CoV once two IATs exist, else None."""
        if self._last_t is None:
            self._last_t = timestamp
            return None
        iat = timestamp - self._last_t
        if iat < 0:
            raise OrderingError(f"decreasing timestamp: {timestamp} after {self._last_t}")
        self._last_t = timestamp
        if self._count == 0:
            self._shift = iat
        y = iat - self._shift
        self._count += 1
        self._s1 += y
        self._s2 += y * y
        if self._count < 2:
            return None
        return self.current()

    def current(self) -> float:
        if self._count < 2:
            raise InsufficientDataError("CoV needs at least 2 IATs (3 arrivals)")
        mean = self._shift + self._s1 / self._count
        var = max(0.0, (self._s2 - self._s1 * self._s1 / self._count) / self._count)
        if mean <= 0.0:
            return 0.0
        return float(np.sqrt(var) / mean)

    @property
    def n_iats(self) -> int:
        return self._count


def cov_from_iats(iats: np.ndarray) -> np.ndarray:
    """Prefix CoV values over an IAT vector: entry k covers iats[:k+2]."""
    x = np.asarray(iats, dtype=np.float64)
    if x.size < 2:
        raise InsufficientDataError("CoV sequence needs at least 2 IATs")
    y = x - x[0]
    k = np.arange(1, x.size + 1, dtype=np.float64)
    s1 = np.cumsum(y)
    s2 = np.cumsum(y * y)
    mean = x[0] + s1 / k
    var = np.maximum(0.0, (s2 - s1 * s1 / k) / k)
    cov = np.zeros_like(mean)
    np.divide(np.sqrt(var), mean, out=cov, where=mean > 0)
    return cov[1:]


def cov_sequence(arrivals: np.ndarray) -> np.ndarray:
    """Running CoV per arrival from the third packet on.

    ``arrivals`` must be non-decreasing timestamps with length >= 3; the
    result has length ``len(arrivals) - 2``.
    """
    t = np.asarray(arrivals, dtype=np.float64)
    if t.size < 3:
        raise InsufficientDataError(f"need at least 3 arrivals, got {t.size}")
    iats = np.diff(t)
    if np.any(iats < 0):
        raise OrderingError("arrival timestamps must be non-decreasing")
    return cov_from_iats(iats)


def cov_matrix(iats_2d: np.ndarray) -> np.ndarray:
    """Row-wise prefix CoV for a batch of equal-length IAT vectors.

    Input shape (streams, L); output shape (streams, L - 1).
    """
    x = np.asarray(iats_2d, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] < 2:
        raise InsufficientDataError("need a 2-D batch with at least 2 IATs per row")
    y = x - x[:, :1]
    k = np.arange(1, x.shape[1] + 1, dtype=np.float64)
    s1 = np.cumsum(y, axis=1)
    s2 = np.cumsum(y * y, axis=1)
    mean = x[:, :1] + s1 / k
    var = np.maximum(0.0, (s2 - s1 * s1 / k) / k)
    cov = np.zeros_like(mean)
    np.divide(np.sqrt(var), mean, out=cov, where=mean > 0)
    return cov[:, 1:]
