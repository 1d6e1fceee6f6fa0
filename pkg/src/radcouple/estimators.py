"""Estimators for distance-process statistics, with a scikit-learn interface."""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_consistent_length, check_is_fitted

from .exceptions import PathTooShortError

__all__ = ["BinnedDriftEstimator", "AsymptoticSpeedEstimator"]


def _column(values, name):
    arr = check_array(np.asarray(values, dtype=float).reshape(-1, 1), input_name=name)
    return arr[:, 0]


class BinnedDriftEstimator(BaseEstimator):
    """Binned drift and quadratic-variation rates from one-step increments.

    Samples are pairs ``(rho_k, rho_{k+1} - rho_k)`` taken on a grid of step
    ``dt``.  For every bin of width ``bin_width`` in ``rho``

    * ``drift_`` is ``mean(increment) / dt``,
    * ``qv_`` is ``mean(increment**2) / dt``,

    each with a standard error.  Supports streaming through
    :meth:`partial_fit`, so paths never need to be held in memory.

    Parameters
    ----------
    dt : float
        Time step between samples.
    bin_width : float, optional
        Defaults to ``max(0.05, 5 * sqrt(dt))``.
    origin : float
        Left edge of bin 0.

    Attributes
    ----------
    bin_centers_, counts_, drift_, drift_se_, qv_, qv_se_ : ndarray
        One entry per non-empty bin.
    """

    def __init__(self, dt=1e-3, bin_width=None, origin=0.0):
        self.dt = dt
        self.bin_width = bin_width
        self.origin = origin

    @property
    def width_(self):
        return self.bin_width if self.bin_width is not None else max(0.05, 5 * np.sqrt(self.dt))

    def bin_index(self, rho):
        return np.floor((np.asarray(rho, dtype=float) - self.origin) / self.width_).astype(np.int64)

    def fit(self, X, y):
        self.__dict__.pop("_sums", None)
        return self.partial_fit(X, y)

    def partial_fit(self, X, y):
        rho = _column(X, "X")
        inc = _column(y, "y")
        check_consistent_length(rho, inc)
        idx = self.bin_index(rho)
        if idx.size and idx.min() < 0:
            raise ValueError("distances below the bin origin")
        size = int(idx.max()) + 1 if idx.size else 0
        sums = getattr(self, "_sums", np.zeros((5, 0)))
        if sums.shape[1] < size:
            sums = np.pad(sums, ((0, 0), (0, size - sums.shape[1])))
        sq = inc * inc
        for row, w in enumerate((None, inc, sq, sq * sq, rho)):
            sums[row, :size] += np.bincount(idx, weights=w, minlength=size)
        self._sums = sums
        self._summarise()
        return self

    def _summarise(self):
        count, s1, s2, s4, srho = self._sums
        keep = count > 0
        n = count[keep]
        mean = s1[keep] / n
        msq = s2[keep] / n
        dof = np.maximum(n - 1, 1)
        var1 = np.maximum(msq - mean * mean, 0.0) * n / dof
        var2 = np.maximum(s4[keep] / n - msq * msq, 0.0) * n / dof
        self.bin_index_ = np.flatnonzero(keep)
        self.bin_centers_ = self.origin + (self.bin_index_ + 0.5) * self.width_
        self.bin_mean_rho_ = srho[keep] / n
        self.counts_ = n.astype(np.int64)
        self.drift_ = mean / self.dt
        self.drift_se_ = np.sqrt(var1 / n) / self.dt
        self.qv_ = msq / self.dt
        self.qv_se_ = np.sqrt(var2 / n) / self.dt

    def lookup(self, rho):
        """Index into the fitted arrays of the bin containing ``rho``."""
        check_is_fitted(self, "bin_index_")
        hits = np.flatnonzero(self.bin_index_ == self.bin_index(rho))
        if not hits.size:
            raise KeyError(f"no samples in the bin containing {rho}")
        return int(hits[0])


class AsymptoticSpeedEstimator(RegressorMixin, BaseEstimator):
    """Least-squares slope of ``rho(t)`` after discarding a burn-in fraction.

    Parameters
    ----------
    burn_in_fraction : float
        Leading fraction of the time span to ignore, in ``[0, 0.9]``.
    min_samples : int
        Minimum number of post-burn-in samples.

    Attributes
    ----------
    slope_, intercept_, stderr_ : float
    n_samples_ : int
    """

    def __init__(self, burn_in_fraction=0.5, min_samples=10):
        self.burn_in_fraction = burn_in_fraction
        self.min_samples = min_samples

    def fit(self, X, y):
        if not 0.0 <= self.burn_in_fraction <= 0.9:
            raise ValueError(f"burn_in_fraction must be in [0, 0.9], got {self.burn_in_fraction}")
        t = _column(X, "X")
        rho = _column(y, "y")
        check_consistent_length(t, rho)
        if t.size == 0:
            raise PathTooShortError("empty path")
        cut = t[0] + self.burn_in_fraction * (t[-1] - t[0])
        keep = t >= cut - 1e-12 * max(1.0, abs(cut))
        t, rho = t[keep], rho[keep]
        if t.size < self.min_samples:
            raise PathTooShortError(f"{t.size} samples after burn-in, need {self.min_samples}")
        tc = t - t.mean()
        sxx = tc @ tc
        slope = (tc @ (rho - rho.mean())) / sxx
        intercept = rho.mean() - slope * t.mean()
        resid = rho - (intercept + slope * t)
        self.slope_ = float(slope)
        self.intercept_ = float(intercept)
        self.stderr_ = float(np.sqrt((resid @ resid) / (t.size - 2) / sxx))
        self.n_samples_ = int(t.size)
        return self

    def predict(self, X):
        check_is_fitted(self, "slope_")
        return self.intercept_ + self.slope_ * _column(X, "X")
