"""Sinusoidal tapers, the multitaper spectrum and its bias-corrected logarithm.

Conventions
-----------
For a real series ``x_1..x_N`` the Fourier transform is
``y(f) = sum_m x_m exp(-2 pi i m f)``, evaluated on the ``2N+2`` point grid
``f_j = j * delta`` with ``delta = 1 / (2N + 2)``.  Spectral estimates are
reported on the one-sided part ``j = 0..N+1`` (``f`` in ``[0, 1/2]``); the
transform at negative or wrapped frequencies comes from periodicity, which
is exact for the DFT of a real signal.

With unit-variance white noise the multitaper estimate has expectation 1,
i.e. ``S(f)`` is normalised so that ``Cov[x_j, x_k] = int S(f) e^{2 pi i (j-k) f} df``.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateEstimateError, InvalidArgumentError
from .special import digamma, trigamma

MIN_SERIES_LENGTH = 8


@dataclass(frozen=True)
class TimeSeries:
    """Real, equally spaced samples ``x_1..x_N``.

    ``dt`` is the sampling interval; every frequency in the package is in
    cycles per sample, so ``dt`` only matters to callers converting units.
    """

    samples: np.ndarray
    dt: float = 1.0

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float)
        if x.ndim != 1:
            raise InvalidArgumentError("samples must be one-dimensional")
        if x.size < MIN_SERIES_LENGTH:
            raise InvalidArgumentError(
                f"need at least {MIN_SERIES_LENGTH} samples, got {x.size}"
            )
        if not np.all(np.isfinite(x)):
            raise InvalidArgumentError("samples must all be finite")
        if not self.dt > 0:
            raise InvalidArgumentError("dt must be positive")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)

    @property
    def n(self):
        return self.samples.size


@dataclass(frozen=True)
class TaperSet:
    """``K`` orthonormal taper vectors (rows of ``tapers``) with weights ``mu_k``."""

    tapers: np.ndarray
    weights: np.ndarray

    @property
    def n(self):
        return self.tapers.shape[1]

    @property
    def k(self):
        return self.tapers.shape[0]


@dataclass(frozen=True)
class FrequencyGrid:
    """Uniform grid ``f_j = j * spacing`` for ``j = 0..size-1``."""

    spacing: float
    size: int

    @property
    def frequencies(self):
        return self.spacing * np.arange(self.size)

    @classmethod
    def canonical(cls, n):
        """One-sided grid of ``N + 2`` points with spacing ``1/(2N+2)``."""
        return cls(1.0 / (2 * n + 2), n + 2)


@dataclass(frozen=True)
class SpectralEstimate:
    grid: FrequencyGrid
    values: np.ndarray
    k: int
    n: int

    @property
    def frequencies(self):
        return self.grid.frequencies


@dataclass(frozen=True)
class LogSpectralEstimate:
    """Log-spectral values with the additive correction that was removed.

    ``correction`` is the constant subtracted at interior frequencies;
    ``corrections`` holds the per-point values (they differ at f = 0 and
    f = 1/2, where the tapered transform is real).
    """

    grid: FrequencyGrid
    values: np.ndarray
    k: int
    n: int
    correction: float
    corrections: np.ndarray = field(repr=False, default=None)
    noise_variance: np.ndarray = field(repr=False, default=None)

    @property
    def frequencies(self):
        return self.grid.frequencies


def _as_series(ts):
    return ts if isinstance(ts, TimeSeries) else TimeSeries(np.asarray(ts, dtype=float))


def sinusoidal_tapers(n, k):
    """Sine tapers ``nu_m^(k) = sqrt(2/(N+1)) sin(pi k m / (N+1))``, m = 1..N.

    Parameters
    ----------
    n : int
        Series length.
    k : int
        Number of tapers, ``1 <= k <= n``.

    Returns
    -------
    TaperSet
        Orthonormal rows, equal weights ``1/k``.
    """
    n, k = int(n), int(k)
    if n < 1:
        raise InvalidArgumentError(f"series length must be >= 1, got {n}")
    if not 1 <= k <= n:
        raise InvalidArgumentError(f"need 1 <= K <= N, got K={k}, N={n}")
    m = np.arange(1, n + 1)
    orders = np.arange(1, k + 1)[:, None]
    tapers = np.sqrt(2.0 / (n + 1)) * np.sin(np.pi * orders * m / (n + 1))
    return TaperSet(tapers, np.full(k, 1.0 / k))


def fourier_transform(ts):
    """``y(f_j)`` for ``f_j = j/(2N+2)``, ``j = 0..2N+1`` (complex array)."""
    ts = _as_series(ts)
    n = ts.n
    padded = np.zeros(2 * n + 2)
    padded[1 : n + 1] = ts.samples
    return np.fft.fft(padded)


def multitaper_spectrum(ts, k):
    """Sinusoidal multitaper estimate on the canonical one-sided grid.

    Uses the difference form
    ``S(f) = (delta/K) sum_k |y(f + k delta) - y(f - k delta)|^2``, which is
    algebraically the taper-sum estimate with the sine tapers.
    """
    ts = _as_series(ts)
    n = ts.n
    k = int(k)
    if k < 1 or k >= n:
        raise InvalidArgumentError(f"need 1 <= K < N, got K={k}, N={n}")
    y = fourier_transform(ts)
    size = 2 * n + 2
    j = np.arange(n + 2)
    shifts = np.arange(1, k + 1)[:, None]
    diff = y[(j + shifts) % size] - y[(j - shifts) % size]
    delta = 1.0 / size
    values = (delta / k) * np.sum(diff.real**2 + diff.imag**2, axis=0)
    return SpectralEstimate(FrequencyGrid.canonical(n), values, k, n)


def taper_spectrum(ts, taper_set, frequencies):
    """Direct taper-sum estimate ``sum_k mu_k |sum_n nu_n x_n e^{-2 pi i n f}|^2``.

    O(K N M); intended as an independent check of :func:`multitaper_spectrum`.
    """
    ts = _as_series(ts)
    f = np.atleast_1d(np.asarray(frequencies, dtype=float))
    m = np.arange(1, ts.n + 1)
    phase = np.exp(-2j * np.pi * np.outer(f, m))
    coeffs = (taper_set.tapers * ts.samples) @ phase.T
    return taper_set.weights @ np.abs(coeffs) ** 2


def multitaper_quadratic_matrix(taper_set, f):
    """Hermitian matrix ``Q`` with ``S_MT(f) = x^T Q x`` for real ``x``.

    ``Q_mn = sum_k mu_k nu_m^(k) nu_n^(k) exp(-2 pi i (m - n) f)``.
    """
    m = np.arange(1, taper_set.n + 1)
    outer = np.einsum("k,km,kn->mn", taper_set.weights, taper_set.tapers, taper_set.tapers)
    phase = np.exp(-2j * np.pi * np.subtract.outer(m, m) * f)
    return outer * phase


def log_bias(k):
    """Mean of ``ln(chi^2_{2K} / 2K)``: ``psi(K) - ln K``."""
    return digamma(k) - np.log(k)


def log_variance(k):
    """Variance of ``ln(chi^2_{2K})``: ``psi'(K)``."""
    return trigamma(k)


def variance_reduction_factor(k):
    """Variance of the log of the K-taper average relative to one taper,
    ``K psi'(K) / psi'(1)`` (tends to ``6/pi^2``)."""
    return k * trigamma(k) / trigamma(1.0)


def log_multitaper(est, correction="digamma"):
    """Bias-corrected log-multitaper estimate.

    Parameters
    ----------
    est : SpectralEstimate
    correction : {"digamma", "scaled"}
        ``"digamma"`` subtracts ``psi(K) - ln K`` at interior frequencies and
        ``psi(K/2) + ln(2/K)`` at f = 0 and f = 1/2, where the estimate is
        ``chi^2_K / K`` rather than ``chi^2_{2K} / 2K``.  ``"scaled"``
        subtracts ``(psi(K) - ln K) / K`` everywhere.

    Raises
    ------
    DegenerateEstimateError
        If the estimate is zero (or negative) anywhere.
    """
    values = np.asarray(est.values, dtype=float)
    bad = np.flatnonzero(~(values > 0))
    if bad.size:
        f_bad = est.grid.frequencies[bad[0]]
        raise DegenerateEstimateError(
            f"spectral estimate is zero at f={f_bad:.6g}; log undefined", frequency=f_bad
        )
    k = est.k
    size = values.size
    freqs = est.grid.frequencies
    if correction == "digamma":
        interior = log_bias(k)
        corr = np.full(size, interior)
        var = np.full(size, log_variance(k))
        edges = _edge_mask(freqs)
        corr[edges] = digamma(k / 2.0) + np.log(2.0 / k)
        var[edges] = trigamma(k / 2.0)
    elif correction == "scaled":
        interior = log_bias(k) / k
        corr = np.full(size, interior)
        var = np.full(size, log_variance(k))
    else:
        raise InvalidArgumentError(f"unknown correction {correction!r}")
    return LogSpectralEstimate(
        est.grid, np.log(values) - corr, k, est.n, float(interior), corr, var
    )


def _edge_mask(freqs):
    return np.isclose(freqs, 0.0, atol=1e-14) | np.isclose(freqs, 0.5, atol=1e-14)


def single_taper_log_periodogram(ts, correction="digamma"):
    """First-taper log periodogram on the coarse grid ``f = j/(N+1)``.

    ``ln(|y(f + delta) - y(f - delta)|^2 / (2(N+1)))`` minus the ``K = 1``
    correction, kept at every other point of the canonical grid so that
    neighbouring values are only weakly correlated.  The one-sided part
    of the ``N + 1`` point full-circle grid is returned.
    """
    ts = _as_series(ts)
    est = multitaper_spectrum(ts, 1)
    sub = slice(0, None, 2)
    grid = FrequencyGrid(2 * est.grid.spacing, est.values[sub].size)
    coarse = SpectralEstimate(grid, est.values[sub], 1, ts.n)
    return log_multitaper(coarse, correction=correction)
