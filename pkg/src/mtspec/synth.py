"""Synthetic Gaussian processes with exact spectra, and Monte Carlo error harness."""

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .errors import InvalidArgumentError, MtspecError
from .kernels import interior_kernel, kernel_fourier_coeffs, kernel_smooth
from .tapers import (
    FrequencyGrid,
    TimeSeries,
    log_multitaper,
    multitaper_spectrum,
    sinusoidal_tapers,
)

SCHEMA_VERSION = 1
PROCESS_KINDS = ("white", "ar", "ma", "band")


@dataclass(frozen=True)
class ProcessSpec:
    """Gaussian process description.

    ``kind="ar"``: ``x_t = sum_j a_j x_{t-j} + e_t``; ``kind="ma"``:
    ``x_t = e_t + sum_j b_j e_{t-j}``; ``kind="band"``: piecewise-constant
    spectrum ``levels[0]`` below ``f_disc`` and ``levels[1]`` from ``f_disc`` on.
    """

    kind: str = "white"
    coeffs: tuple = ()
    sigma2: float = 1.0
    f_disc: float = None
    levels: tuple = None

    def __post_init__(self):
        if self.kind not in PROCESS_KINDS:
            raise InvalidArgumentError(f"kind must be one of {PROCESS_KINDS}")
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        if not self.sigma2 > 0:
            raise InvalidArgumentError("innovation variance must be positive")
        if self.kind == "ar" and self.coeffs and pole_radius(self.coeffs) >= 1.0:
            raise InvalidArgumentError(f"AR coefficients {self.coeffs} are not stationary")
        if self.kind == "band":
            if self.f_disc is None or not 0 < self.f_disc < 0.5:
                raise InvalidArgumentError("band process needs 0 < f_disc < 1/2")
            if self.levels is None or len(self.levels) != 2 or min(self.levels) <= 0:
                raise InvalidArgumentError("band process needs two positive levels")
            object.__setattr__(self, "levels", tuple(float(v) for v in self.levels))

    @classmethod
    def white(cls, sigma2=1.0):
        return cls("white", (), sigma2)

    @classmethod
    def ar(cls, coeffs, sigma2=1.0):
        return cls("ar", tuple(coeffs), sigma2)

    @classmethod
    def ma(cls, coeffs, sigma2=1.0):
        return cls("ma", tuple(coeffs), sigma2)

    @classmethod
    def band(cls, f_disc, s_lo, s_hi):
        return cls("band", (), 1.0, float(f_disc), (s_lo, s_hi))

    @classmethod
    def parse(cls, text, sigma2=1.0):
        """Parse ``white``, ``ar:a1,a2,..``, ``ma:b1,..`` or ``band:f_disc,s_lo,s_hi``."""
        kind, _, rest = text.partition(":")
        kind = kind.strip().lower()
        try:
            nums = [float(v) for v in rest.split(",") if v.strip()]
        except ValueError as exc:
            raise InvalidArgumentError(f"malformed process spec {text!r}") from exc
        if kind == "white":
            return cls.white(sigma2)
        if kind in ("ar", "ma"):
            if not nums:
                raise InvalidArgumentError(f"{kind} spec needs coefficients")
            return cls(kind, tuple(nums), sigma2)
        if kind == "band":
            if len(nums) != 3:
                raise InvalidArgumentError("band spec is band:f_disc,s_lo,s_hi")
            return cls.band(*nums)
        raise InvalidArgumentError(f"unknown process kind {kind!r}")

    def describe(self):
        out = {"kind": self.kind, "coeffs": list(self.coeffs), "sigma2": self.sigma2}
        if self.kind == "band":
            out.update(f_disc=self.f_disc, levels=list(self.levels))
        return out


def pole_radius(ar_coeffs):
    """Largest modulus of the roots of ``z^p - a_1 z^(p-1) - ... - a_p``."""
    a = np.asarray(ar_coeffs, dtype=float)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(np.roots(np.concatenate(([1.0], -a))))))


def burn_in_length(spec):
    """``10 / (1 - r)`` samples (r = largest pole modulus), at least 500."""
    if spec.kind == "ar" and spec.coeffs:
        r = pole_radius(spec.coeffs)
        return max(500, int(np.ceil(10.0 / (1.0 - r))))
    return 500


def replication_rng(seed, rep=0):
    """Counter-based Philox generator for replication ``rep`` of run ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(rep)])))


def generate(spec, n, seed, rep=0):
    """Draw a length-``n`` series; identical for identical ``(spec, n, seed, rep)``."""
    n = int(n)
    if n < 8:
        raise InvalidArgumentError("series length must be at least 8")
    rng = replication_rng(seed, rep)
    if spec.kind == "band":
        return TimeSeries(_spectral_synthesis(spec, n, rng))
    burn = burn_in_length(spec) if spec.kind == "ar" else len(spec.coeffs)
    e = rng.standard_normal(n + burn) * np.sqrt(spec.sigma2)
    if spec.kind == "white":
        x = e
    elif spec.kind == "ar":
        x = lfilter([1.0], np.concatenate(([1.0], -np.asarray(spec.coeffs))), e)
    else:
        x = lfilter(np.concatenate(([1.0], spec.coeffs)), [1.0], e)
    return TimeSeries(x[burn:])


def _spectral_synthesis(spec, n, rng):
    # circulant process on 2N+2 points so the spectrum grid matches the analysis grid
    size = 2 * n + 2
    freqs = np.arange(size // 2 + 1) / size
    s = oracle_spectrum(spec, freqs).S
    z = rng.standard_normal(freqs.size) + 1j * rng.standard_normal(freqs.size)
    z /= np.sqrt(2.0)
    z[0] = rng.standard_normal()
    z[-1] = rng.standard_normal()
    c = np.sqrt(size * s) * z
    return np.fft.irfft(c, n=size)[:n]


@dataclass(frozen=True)
class OracleSpectrum:
    f: np.ndarray
    S: np.ndarray
    theta: np.ndarray
    dtheta: np.ndarray
    d2theta: np.ndarray


def oracle_spectrum(spec, f):
    """Exact ``S(f)``, ``theta = ln S`` and its first two derivatives."""
    f = np.atleast_1d(np.asarray(f, dtype=float))
    if np.any(f < -1e-12) or np.any(f > 0.5 + 1e-12):
        raise InvalidArgumentError("oracle frequencies must lie in [0, 1/2]")
    if spec.kind == "white":
        s = np.full_like(f, spec.sigma2)
        zero = np.zeros_like(f)
        return OracleSpectrum(f, s, np.log(s), zero, zero.copy())
    if spec.kind == "band":
        lo, hi = spec.levels
        s = np.where(f < spec.f_disc, lo, hi)
        zero = np.zeros_like(f)
        return OracleSpectrum(f, s, np.log(s), zero, zero.copy())
    j = np.arange(1, len(spec.coeffs) + 1)
    c = np.asarray(spec.coeffs)
    e = np.exp(-2j * np.pi * np.outer(f, j))
    sign = -1.0 if spec.kind == "ar" else 1.0
    # transfer polynomial A(f) = 1 + sign * sum c_j e^{-2 pi i j f}
    a0 = 1.0 + sign * (e @ c)
    a1 = sign * (e @ (c * (-2j * np.pi * j)))
    a2 = sign * (e @ (c * (-2j * np.pi * j) ** 2))
    log_a1 = a1 / a0
    log_a2 = (a2 * a0 - a1**2) / a0**2
    power = 1.0 if spec.kind == "ma" else -1.0
    theta = np.log(spec.sigma2) + power * 2.0 * np.log(np.abs(a0))
    return OracleSpectrum(
        f,
        np.exp(theta),
        theta,
        power * 2.0 * log_a1.real,
        power * 2.0 * log_a2.real,
    )


def smoothed_quadratic_matrix(taper_set, kernel, h, f=0.0):
    """``Q`` of the kernel-smoothed multitaper estimate at frequency ``f``.

    ``Q_mn = khat_{m-n} e^{-2 pi i (m-n) f} sum_k mu_k nu_m^(k) nu_n^(k)``.
    """
    n = taper_set.n
    lags, khat = kernel_fourier_coeffs(kernel, h, n - 1)
    m = np.arange(n)
    diff = np.subtract.outer(m, m)
    kmat = khat[diff + n - 1]
    outer = np.einsum("k,km,kn->mn", taper_set.weights, taper_set.tapers, taper_set.tapers)
    return kmat * outer * np.exp(-2j * np.pi * diff * f)


def quadratic_variance_oracle(q_matrix):
    """``tr(Q Q)``: variance of ``x^H Q x`` over ``S(f)^2`` under local white noise."""
    q_matrix = np.asarray(q_matrix)
    if q_matrix.shape[0] > 256:
        raise InvalidArgumentError("brute-force trace limited to N <= 256")
    return float(np.real(np.einsum("ij,ji->", q_matrix, q_matrix)))


def asymptotic_smoothed_variance(kernel, h, n, k):
    """``||kappa||^2 / ((N+1) h^(2q+1)) * (1 + 1/(2K))`` for the smoothed spectrum."""
    return kernel.norm_sq / ((n + 1) * h ** (2 * kernel.q + 1)) * (1.0 + 0.5 / k)


def asymptotic_log_variance(kernel, h, n, k):
    """``||kappa||^2 / (N h^(2q+1)) * (1 + 1/(2K))^2`` for the smoothed log-spectrum."""
    return kernel.norm_sq / (n * h ** (2 * kernel.q + 1)) * (1.0 + 0.5 / k) ** 2


class FixedBandwidth:
    """Log-multitaper with ``k`` tapers smoothed by a fixed-halfwidth interior kernel."""

    def __init__(self, k, h, q=0, p=2, kind="optimal", correction="digamma"):
        self.k = int(k)
        self.h = float(h)
        self.kernel = interior_kernel(q, p, kind)
        self.correction = correction

    def describe(self):
        return {
            "estimator": "fixed",
            "tapers": self.k,
            "h": self.h,
            "q": self.kernel.q,
            "p": self.kernel.p,
            "kernel": self.kernel.kind,
        }

    def __call__(self, ts, cache=None):
        cache = {} if cache is None else cache
        key = ("logmt", self.k, self.correction)
        if key not in cache:
            cache[key] = log_multitaper(multitaper_spectrum(ts, self.k), self.correction)
        theta = cache[key]
        sm = kernel_smooth(theta, self.kernel, self.h)
        return theta.frequencies, sm.values


class PipelineEstimator:
    """Adaptive estimator wrapped for the Monte Carlo harness."""

    def __init__(self, config=None):
        from .pipeline import PipelineConfig

        self.config = PipelineConfig() if config is None else config

    def describe(self):
        return {"estimator": "pipeline", **self.config.describe()}

    def __call__(self, ts, cache=None):
        from .pipeline import adaptive_estimate

        res = adaptive_estimate(ts, self.config)
        return res.frequencies, res.theta


@dataclass
class EaseReport:
    """Monte Carlo squared-error summary against the exact log-spectrum."""

    frequencies: np.ndarray
    mse: np.ndarray
    mse_se: np.ndarray
    integrated: float
    integrated_se: float
    reps: int
    completed: int
    seed: int
    n: int
    estimator: dict
    process: dict
    failures: list = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    def to_dict(self, per_frequency=True):
        out = {
            "schema_version": self.schema_version,
            "integrated_ease": self.integrated,
            "integrated_se": self.integrated_se,
            "reps": self.reps,
            "completed": self.completed,
            "dropped": self.reps - self.completed,
            "failures": list(self.failures),
            "seed": self.seed,
            "n": self.n,
            "estimator": self.estimator,
            "process": self.process,
        }
        if per_frequency:
            out["frequencies"] = self.frequencies.tolist()
            out["mse"] = self.mse.tolist()
            out["mse_se"] = self.mse_se.tolist()
        return out

    def to_json(self, per_frequency=True):
        return json.dumps(self.to_dict(per_frequency), sort_keys=True, indent=2)


def default_workers():
    """Thread cap from ``MTSPEC_THREADS`` (0 or unset = one per CPU)."""
    raw = os.environ.get("MTSPEC_THREADS", "0").strip() or "0"
    try:
        value = int(raw)
    except ValueError:
        value = 0
    return value if value > 0 else (os.cpu_count() or 1)


def monte_carlo_ease_many(spec, estimators, n, reps, seed, exclude=(), workers=None):
    """Run several estimators on the same replications.

    Parameters
    ----------
    spec : ProcessSpec
    estimators : dict name -> estimator
        Each estimator is a callable ``(ts, cache) -> (frequencies, theta_hat)``
        with a ``describe()`` method.
    n, reps, seed : int
    exclude : sequence of (f_lo, f_hi)
        Frequency intervals left out of the integrated error.
    workers : int, optional
        Thread count (default from ``MTSPEC_THREADS``).

    Returns
    -------
    dict name -> EaseReport
    """
    reps = int(reps)
    if reps < 2:
        raise InvalidArgumentError("need at least 2 replications")
    workers = default_workers() if workers is None else max(1, int(workers))
    names = list(estimators)

    def one(rep):
        ts = generate(spec, n, seed, rep)
        cache = {}
        out = {}
        for name in names:
            try:
                f, est = estimators[name](ts, cache)
                out[name] = (f, (est - oracle_spectrum(spec, f).theta) ** 2)
            except (MtspecError, np.linalg.LinAlgError, FloatingPointError) as exc:
                out[name] = exc
        return out

    if workers == 1:
        results = [one(r) for r in range(reps)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, range(reps)))

    reports = {}
    for name in names:
        sq = []
        failures = []
        freqs = None
        for rep, res in enumerate(results):
            item = res[name]
            if isinstance(item, Exception):
                failures.append({"rep": rep, "error": f"{type(item).__name__}: {item}"})
                continue
            freqs, err = item
            sq.append(err)
        if not sq:
            raise MtspecError(f"estimator {name!r} failed in every replication")
        sq = np.array(sq)
        keep = np.ones(freqs.size, dtype=bool)
        for lo, hi in exclude:
            keep &= ~((freqs >= lo) & (freqs <= hi))
        per_rep = sq[:, keep].mean(axis=1)
        m = sq.shape[0]
        reports[name] = EaseReport(
            frequencies=freqs,
            mse=sq.mean(axis=0),
            mse_se=sq.std(axis=0, ddof=1) / np.sqrt(m) if m > 1 else np.zeros(freqs.size),
            integrated=float(per_rep.mean()),
            integrated_se=float(per_rep.std(ddof=1) / np.sqrt(m)) if m > 1 else 0.0,
            reps=reps,
            completed=m,
            seed=int(seed),
            n=int(n),
            estimator=estimators[name].describe(),
            process=spec.describe(),
            failures=failures,
        )
    return reports


def monte_carlo_ease(spec, estimator, n, reps, seed, exclude=(), workers=None):
    """Monte Carlo EASE of one estimator; see :func:`monte_carlo_ease_many`."""
    return monte_carlo_ease_many(spec, {"est": estimator}, n, reps, seed, exclude, workers)["est"]
