"""Data-adaptive log-spectrum estimator.

Stages
------
0. Log-multitaper estimate ``theta_MT`` and coarse single-taper ``theta_1``.
1. Global (0,4) halfwidth from the Rice criterion on ``theta_1``.
2. ``theta''`` from a (2,4) smooth of ``theta_MT`` at ``h24 = H * h04``.
3. Pointwise optimal (0,2) halfwidth ``h_0(f)``, capped, and the final
   variable-halfwidth smooth of ``theta_MT``.  Before this smooth the
   leading taper bias ``(theta'' + theta'^2) K^2 / (24 N^2)`` is removed,
   using the stage 2 curvature and a (1,3) slope estimate at ``h24``.

Declared discontinuities (and optionally the ends of ``[0, 1/2]``) are never
smoothed across: between a discontinuity and its touch point the estimate
uses one-sided boundary kernels with the fixed halfwidth ``h_0(f_tp)``.
"""

import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .boundary import BoundaryGeometry, boundary_support, solve_boundary_coeffs, touch_point
from .errors import (
    InvalidArgumentError,
    MtspecError,
    NoTouchPointError,
    PipelineStageError,
)
from .kernels import (
    grid_period,
    interior_kernel,
    kernel_smooth,
    optimal_halfwidth,
    reflect_index,
    smooth_at,
)
from .tapers import (
    LogSpectralEstimate,
    log_multitaper,
    multitaper_spectrum,
    single_taper_log_periodogram,
)

SCHEMA_VERSION = 1
DEFAULT_INFLATION = np.pi**2 / 4


def default_taper_count(n):
    """``round(N^(8/15))`` clamped to ``[2, N/10]``."""
    k = int(round(n ** (8.0 / 15.0)))
    return int(max(2, min(k, n // 10)))


@dataclass(frozen=True)
class PipelineConfig:
    """Settings of :func:`adaptive_estimate`.

    ``cap_exponent`` sets the halfwidth cap ``c_reg * h04 * N^cap_exponent``;
    the default -4/45 makes the cap shrink like ``N^(-1/5)``, the rate of the
    optimal (0,2) halfwidth, given that ``h04`` shrinks like ``N^(-1/9)``.
    """

    tapers: int = None
    n_bandwidths: int = 25
    h_min_spacings: float = 4.0
    h_max: float = 0.25
    c_reg: float = 2.0
    cap_exponent: float = -4.0 / 45.0
    discontinuities: tuple = ()
    boundary_at_zero: bool = False
    boundary_at_half: bool = False
    inflation: float = DEFAULT_INFLATION
    kernel_kind: str = "optimal"
    correction: str = "digamma"
    boundary_rule: str = "continuum"
    taper_bias_correction: bool = True

    def __post_init__(self):
        discs = tuple(sorted(float(d) for d in self.discontinuities))
        if any(not 0.0 < d < 0.5 for d in discs):
            raise InvalidArgumentError("declared discontinuities must lie strictly inside (0, 1/2)")
        if len(set(discs)) != len(discs):
            raise InvalidArgumentError("duplicate discontinuities")
        object.__setattr__(self, "discontinuities", discs)
        if self.tapers is not None and int(self.tapers) < 1:
            raise InvalidArgumentError("taper count must be positive")
        if self.n_bandwidths < 2 or not 0 < self.h_min_spacings:
            raise InvalidArgumentError("bandwidth grid needs >= 2 points and a positive minimum")
        if not self.c_reg > 0 or not self.inflation > 0:
            raise InvalidArgumentError("c_reg and inflation must be positive")
        if self.boundary_rule not in ("ease", "continuum"):
            raise InvalidArgumentError(f"unknown boundary rule {self.boundary_rule!r}")

    def taper_count(self, n):
        k = default_taper_count(n) if self.tapers is None else int(self.tapers)
        if k >= n:
            raise InvalidArgumentError(f"need K < N, got K={k}, N={n}")
        return k

    def barriers(self):
        """``[(f, sides)]`` for every declared discontinuity and flagged edge."""
        out = [(0.0, (1,))] if self.boundary_at_zero else []
        out += [(d, (-1, 1)) for d in self.discontinuities]
        if self.boundary_at_half:
            out.append((0.5, (-1,)))
        return out

    def describe(self):
        return {
            "tapers": self.tapers,
            "n_bandwidths": self.n_bandwidths,
            "h_min_spacings": self.h_min_spacings,
            "h_max": self.h_max,
            "c_reg": self.c_reg,
            "cap_exponent": self.cap_exponent,
            "discontinuities": list(self.discontinuities),
            "boundary_at_zero": self.boundary_at_zero,
            "boundary_at_half": self.boundary_at_half,
            "inflation": self.inflation,
            "kernel_kind": self.kernel_kind,
            "correction": self.correction,
            "boundary_rule": self.boundary_rule,
            "taper_bias_correction": self.taper_bias_correction,
        }


@dataclass(frozen=True)
class RiceResult:
    h_grid: np.ndarray
    risk: np.ndarray
    h: float
    at_edge: bool


def bandwidth_grid(spacing, n_points=25, min_spacings=4.0, h_max=0.25):
    """Log-spaced halfwidths from ``min_spacings * spacing`` to ``h_max``."""
    return np.geomspace(min_spacings * spacing, h_max, int(n_points))


def rice_criterion(theta1, kernel, h_grid, barriers=()):
    """Unbiased risk ``R(h) = ASR + (2/M) sum sigma_j^2 w_jj - mean(sigma^2)``.

    ``sigma_j^2`` is the known noise variance of each log-periodogram value.
    With barriers, the halfwidth at each point is truncated to its distance
    from the nearest barrier, and points closer than the smallest grid
    halfwidth are left out, so every ``h`` is scored on the same points.
    """
    vals = np.asarray(theta1.values, dtype=float)
    grid = theta1.grid
    sigma2 = np.asarray(theta1.noise_variance, dtype=float)
    freqs = grid.frequencies
    h_grid = np.asarray(h_grid, dtype=float)
    targets = None
    t = np.arange(vals.size)
    if barriers:
        dist = np.min(np.abs(freqs[:, None] - np.asarray(barriers)[None, :]), axis=1)
        targets = np.flatnonzero(dist >= h_grid.min())
        if targets.size < kernel.p + 1:
            raise InvalidArgumentError("too few points away from the declared barriers")
        t = targets
    risk = np.empty(h_grid.size)
    for i, h in enumerate(h_grid):
        hh = h if targets is None else np.minimum(h, dist[targets])
        sm = kernel_smooth(vals, kernel, hh, targets=targets, grid=grid, self_weights=True)
        asr = np.mean((sm.values - vals[t]) ** 2)
        risk[i] = asr + 2.0 * np.mean(sigma2[t] * sm.self_weights) - np.mean(sigma2[t])
    best = int(np.argmin(risk))
    return RiceResult(np.asarray(h_grid), risk, float(h_grid[best]), best in (0, len(h_grid) - 1))


def rice_global_bandwidth(theta1, k04, h_grid, barriers=()):
    """Halfwidth minimising the Rice criterion; warns when it is a grid edge."""
    res = rice_criterion(theta1, k04, h_grid, barriers)
    if res.at_edge:
        warnings.warn(
            f"Rice criterion minimised at the edge of the search grid (h={res.h:.4g})",
            RuntimeWarning,
            stacklevel=2,
        )
    return res.h


def halfwidth_quotient(k24, k04, inflation=DEFAULT_INFLATION):
    """``H`` with ``h24 = H * h04``.

    ``H = (10 B04^2 ||k24||^2 / (B24^2 ||k04||^2))^(1/9) * inflation^(1/9)``.
    """
    ratio = 10.0 * k04.b**2 * k24.norm_sq / (k24.b**2 * k04.norm_sq)
    return float((ratio * inflation) ** (1.0 / 9.0))


@dataclass(frozen=True)
class BoundaryRegion:
    """Grid stretch between a barrier and its touch point."""

    f_disc: float
    side: int
    f_tp: float
    h: float
    gap: float
    fallback: bool

    def describe(self):
        return {
            "f_disc": self.f_disc,
            "side": self.side,
            "f_tp": self.f_tp,
            "h": self.h,
            "fallback": self.fallback,
        }


def _gap(f, side, positions):
    """Free distance on ``side`` of ``f`` before another barrier or mirror image."""
    if side == 1:
        right = [b for b in positions if b > f]
        return (min(right) - f) if right else (1.0 - 2.0 * f)
    left = [b for b in positions if b < f]
    return (f - max(left)) if left else 2.0 * f


@dataclass
class VariableSmoother:
    """Variable-halfwidth smoother of grid values with barrier handling.

    ``h0`` is the target halfwidth profile on the grid; it is linearly
    interpolated between grid points.
    """

    values: np.ndarray
    grid: object
    kernel: object
    h0: np.ndarray
    barriers: list
    rule: str = "continuum"
    regions: list = field(default_factory=list)
    _supports: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.freqs = self.grid.frequencies
        self.period = grid_period(self.grid)
        self.positions = [b for b, _ in self.barriers]
        spacing = self.grid.spacing
        for f_disc, sides in self.barriers:
            for side in sides:
                gap = _gap(f_disc, side, self.positions)
                if gap < 4 * spacing:
                    raise InvalidArgumentError(
                        f"barrier at {f_disc:.6g} is closer than 4 grid spacings to its neighbour"
                    )
                try:
                    f_tp = touch_point(f_disc, self.h0_at, side, max_span=min(0.5 * gap, 0.25))
                    fallback = False
                except NoTouchPointError:
                    f_tp = f_disc + side * min(0.5 * gap, 0.25)
                    fallback = True
                u = max(side * (f_tp - f_disc), 2 * spacing)
                self.regions.append(BoundaryRegion(f_disc, side, f_tp, u, gap, fallback))

    def h0_at(self, f):
        return float(np.interp(f, self.freqs, self.h0))

    def _region_of(self, f):
        for reg in self.regions:
            dist = reg.side * (f - reg.f_disc)
            owns_disc = reg.side == 1 or all(
                not (r.f_disc == reg.f_disc and r.side == 1) for r in self.regions
            )
            if (0.0 < dist or (dist == 0.0 and owns_disc)) and dist < reg.h * (1 - 1e-12):
                return reg
        return None

    def interior_halfwidth(self, f):
        h = self.h0_at(f)
        if self.positions:
            h = min(h, min(abs(f - b) for b in self.positions))
        return h

    def boundary_value(self, reg, f):
        geom = BoundaryGeometry(reg.f_disc, reg.h, reg.side, self.grid.spacing)
        key = (reg.f_disc, reg.side)
        if key not in self._supports:
            self._supports[key] = boundary_support(geom, self.kernel.q + 2)
        beta = reg.h / self.h0_at(f)
        bk = solve_boundary_coeffs(
            self.kernel.q, geom, geom.ftilde(f), beta=beta, rule=self.rule,
            support=self._supports[key],
        )
        return float(bk.weights() @ self.values[reflect_index(bk.indices, self.period)])

    def at(self, f, branch="auto"):
        """Estimate at any ``f``; ``branch`` forces ``"interior"`` or ``"boundary"``."""
        reg = self._region_of(f)
        if branch == "boundary" or (branch == "auto" and reg is not None):
            if reg is None:
                facing = [r for r in self.regions if r.side * (f - r.f_disc) >= 0]
                reg = min(facing or self.regions, key=lambda r: abs(f - r.f_disc))
            return self.boundary_value(reg, f)
        return smooth_at(self.values, self.grid, f, self.interior_halfwidth(f), self.kernel)

    def smooth(self):
        """Estimates, halfwidths and region labels on the whole grid."""
        size = self.values.size
        out = np.empty(size)
        h_used = np.empty(size)
        labels = np.array(["interior"] * size, dtype=object)
        interior = []
        for j, f in enumerate(self.freqs):
            reg = self._region_of(f)
            if reg is None:
                interior.append(j)
                continue
            out[j] = self.boundary_value(reg, f)
            h_used[j] = reg.h
            labels[j] = "boundary"
        interior = np.asarray(interior, dtype=int)
        if interior.size:
            h_int = np.array([self.interior_halfwidth(f) for f in self.freqs[interior]])
            sm = kernel_smooth(self.values, self.kernel, h_int, targets=interior, grid=self.grid)
            out[interior] = sm.values
            h_used[interior] = h_int
        return out, h_used, labels


def smooth_fixed(theta, kernel, h, barriers=(), rule="continuum"):
    """Fixed-halfwidth smooth of a log-spectral estimate, one-sided near barriers."""
    h0 = np.full(np.asarray(theta.values).size, float(h))
    sm = VariableSmoother(theta.values, theta.grid, kernel, h0, list(barriers), rule)
    values, _, _ = sm.smooth()
    return values


def estimate_curvature(theta_mt, k24, h24, barriers=(), rule="continuum"):
    """``theta''`` on the grid from a (2,4) smooth at fixed halfwidth ``h24``."""
    return smooth_fixed(theta_mt, k24, h24, barriers, rule)


def taper_bias(slope, curvature, n, k):
    """Leading bias of the log-multitaper estimate, ``(theta'' + theta'^2) K^2 / (24 N^2)``."""
    return (np.asarray(curvature) + np.asarray(slope) ** 2) * k**2 / (24.0 * n**2)


@dataclass(frozen=True)
class BandwidthProfile:
    """Per-frequency halfwidths of the final smooth.

    ``h_optimal`` is the uncapped pointwise optimum, ``h0`` the capped profile
    and ``h`` the halfwidth actually used (fixed inside boundary regions).
    """

    frequencies: np.ndarray
    h: np.ndarray
    h0: np.ndarray
    h_optimal: np.ndarray
    h04: float
    h24: float
    cap: float
    touch_points: tuple = ()


def variable_halfwidth(curvature, n, k, k02, h04, c_reg=2.0, cap_exponent=-4.0 / 45.0, floor=0.0):
    """Capped pointwise (0,2) halfwidth.

    Returns
    -------
    h_opt : ndarray
        ``[(1/4) ||k||^2 (1 + 1/(2K))^2 / (B^2 N theta''^2)]^(1/5)`` (inf where theta'' = 0).
    h0 : ndarray
        ``clip(h_opt, floor, c_reg * h04 * N^cap_exponent)``.
    cap : float
    """
    h_opt = optimal_halfwidth(k02, curvature, n, k)
    cap = c_reg * h04 * n**cap_exponent
    return h_opt, np.clip(np.minimum(h_opt, cap), floor, None), float(cap)


@dataclass
class AdaptiveResult:
    """Final estimate with bandwidths and per-stage intermediate results."""

    frequencies: np.ndarray
    theta: np.ndarray
    profile: BandwidthProfile
    labels: np.ndarray
    theta_mt: LogSpectralEstimate
    theta1: LogSpectralEstimate
    curvature: np.ndarray
    rice: RiceResult
    quotient: float
    tapers: int
    n: int
    config: PipelineConfig
    smoother: VariableSmoother = field(repr=False, default=None)
    timings: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def evaluate(self, f, branch="auto"):
        """Final estimate at an arbitrary frequency (see :meth:`VariableSmoother.at`)."""
        return self.smoother.at(f, branch)

    def diagnostics(self):
        """JSON-serialisable record of bandwidths, kernels, touch points and timings."""
        p = self.profile
        return {
            "schema_version": SCHEMA_VERSION,
            "n": self.n,
            "tapers": self.tapers,
            "bandwidths": {
                "h04": p.h04,
                "h24": p.h24,
                "quotient": self.quotient,
                "cap": p.cap,
                "h_min": float(np.min(p.h)),
                "h_max": float(np.max(p.h)),
            },
            "kernels": {
                "pilot": [0, 4],
                "curvature": [2, 4],
                "final": [0, 2],
                "kind": self.config.kernel_kind,
            },
            "rice": {
                "h_grid": self.rice.h_grid.tolist(),
                "risk": [float(r) if np.isfinite(r) else None for r in self.rice.risk],
                "at_edge": self.rice.at_edge,
            },
            "touch_points": [reg.describe() for reg in p.touch_points],
            "config": self.config.describe(),
            "timings": dict(self.timings),
            "warnings": list(self.warnings),
        }


def _stage(name, timings, fn, *args, **kwargs):
    t0 = time.perf_counter()
    try:
        return fn(*args, **kwargs)
    except MtspecError as exc:
        raise PipelineStageError(name, exc) from exc
    except np.linalg.LinAlgError as exc:
        raise PipelineStageError(name, exc) from exc
    finally:
        timings[name] = time.perf_counter() - t0


def _remove_taper_bias(theta_mt, curvature, h24, barriers, cfg):
    k13 = interior_kernel(1, 3, cfg.kernel_kind)
    slope = smooth_fixed(theta_mt, k13, h24, barriers, cfg.boundary_rule)
    shift = taper_bias(slope, curvature, theta_mt.n, theta_mt.k)
    return replace(theta_mt, values=theta_mt.values - shift)


def adaptive_from_estimates(theta1, theta_mt, cfg=None):
    """Stages 1-3 on given log-spectral estimates (``theta_1`` coarse, ``theta_MT`` canonical)."""
    cfg = PipelineConfig() if cfg is None else cfg
    n, k = theta_mt.n, theta_mt.k
    timings = {}
    notes = []
    k04 = interior_kernel(0, 4, cfg.kernel_kind)
    k24 = interior_kernel(2, 4, cfg.kernel_kind)
    k02 = interior_kernel(0, 2, cfg.kernel_kind)
    barriers = cfg.barriers()
    positions = [b for b, _ in barriers]
    spacing = theta_mt.grid.spacing

    h_grid = bandwidth_grid(spacing, cfg.n_bandwidths, cfg.h_min_spacings, cfg.h_max)
    rice = _stage("rice", timings, rice_criterion, theta1, k04, h_grid, positions)
    if rice.at_edge:
        notes.append(f"rice minimum at grid edge h={rice.h:.6g}")
    h04 = rice.h

    quotient = halfwidth_quotient(k24, k04, cfg.inflation)
    h24 = quotient * h04
    curvature = _stage(
        "curvature", timings, estimate_curvature, theta_mt, k24, h24, barriers, cfg.boundary_rule
    )
    h_opt, h0, cap = _stage(
        "halfwidth", timings, variable_halfwidth, curvature, n, k, k02, h04,
        cfg.c_reg, cfg.cap_exponent, cfg.h_min_spacings * spacing,
    )
    target = theta_mt
    if cfg.taper_bias_correction:
        target = _stage(
            "taper_bias", timings, _remove_taper_bias, theta_mt, curvature, h24, barriers, cfg
        )

    def final():
        sm = VariableSmoother(target.values, target.grid, k02, h0, barriers, cfg.boundary_rule)
        return (sm, *sm.smooth())

    smoother, theta, h_used, labels = _stage("final", timings, final)
    notes += [
        f"no touch point right of {r.f_disc:.6g}" if r.side == 1 else f"no touch point left of {r.f_disc:.6g}"
        for r in smoother.regions
        if r.fallback
    ]
    profile = BandwidthProfile(
        theta_mt.frequencies, h_used, h0, h_opt, h04, h24, cap, tuple(smoother.regions)
    )
    return AdaptiveResult(
        theta_mt.frequencies, theta, profile, labels, theta_mt, theta1, curvature, rice,
        quotient, k, n, cfg, smoother, timings, notes,
    )


def adaptive_estimate(ts, cfg=None):
    """Run the full adaptive estimator on a time series.

    Parameters
    ----------
    ts : TimeSeries
    cfg : PipelineConfig, optional

    Returns
    -------
    AdaptiveResult

    Raises
    ------
    PipelineStageError
        Tagged with the failing stage (``"tapers"``, ``"rice"``,
        ``"curvature"``, ``"halfwidth"`` or ``"final"``).
    """
    cfg = PipelineConfig() if cfg is None else cfg
    timings = {}

    def step0():
        k = cfg.taper_count(ts.n)
        mt = log_multitaper(multitaper_spectrum(ts, k), cfg.correction)
        return mt, single_taper_log_periodogram(ts, cfg.correction)

    theta_mt, theta1 = _stage("tapers", timings, step0)
    res = adaptive_from_estimates(theta1, theta_mt, cfg)
    res.timings = {**timings, **res.timings}
    return res
