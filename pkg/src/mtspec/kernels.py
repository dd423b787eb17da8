"""Polynomial smoothing kernels in the Legendre basis and the discrete smoother.

A kernel of order ``(q, p)`` on ``[-1, 1]`` satisfies
``int z^m kappa(z) dz = q! delta_{mq}`` for ``m = 0..p-1``; its ``p``-th
moment is ``p! B_{q,p}``.  Smoothing ``values`` with halfwidth ``h``
estimates the ``q``-th derivative with bias ``B_{q,p} theta^(p) h^(p-q)``.

Two kernel families are provided:

``"optimal"``
    The degree-``p`` polynomial kernel of order ``(q, p)`` that vanishes at
    ``z = +-1``.  For ``p = q + 2`` this is ``gamma_q (P_q - P_{q+2})``
    (Epanechnikov for ``(0, 2)``), the EASE-optimal interior kernel.
``"minimal_norm"``
    The least-``||kappa||^2`` kernel, a polynomial of degree ``p - 1``.
    For ``p = 2`` that is the box ``1/2``, whose jump at ``+-1`` slows the
    Fourier decay to ``O(1/(mh))``; the family uses Epanechnikov there instead.
"""

from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy.signal import fftconvolve
from scipy.special import eval_legendre

from .errors import BandwidthTooSmallError, BoundaryCrossingError, InvalidArgumentError

KERNEL_KINDS = ("optimal", "minimal_norm")
_EDGE_TOL = 1e-12


def legendre(j, z):
    """Legendre polynomial ``P_j(z)``."""
    if j < 0:
        raise InvalidArgumentError("Legendre degree must be >= 0")
    out = eval_legendre(int(j), np.asarray(z, dtype=float))
    return out if np.ndim(out) else float(out)


def legendre_series(coeffs, z):
    """``sum_j coeffs[j] P_j(z)``."""
    return npleg.legval(np.asarray(z, dtype=float), np.asarray(coeffs, dtype=float))


def gamma_q(q):
    """``gamma_q = (1/2) prod_{k=1..q} (2k + 1)``."""
    return 0.5 * float(np.prod([2 * k + 1 for k in range(1, q + 1)]))


@lru_cache(maxsize=None)
def gauss_nodes(n):
    return npleg.leggauss(n)


@dataclass(frozen=True)
class Kernel:
    """Polynomial kernel ``kappa(z) = sum_j coeffs[j] P_j(z)`` on ``[-1, 1]``."""

    q: int
    p: int
    coeffs: tuple
    kind: str = "optimal"

    @property
    def degree(self):
        return len(self.coeffs) - 1

    def _nodes(self, extra_degree=0):
        n = max(2 * self.p + 8, (self.degree + extra_degree) // 2 + 1)
        return gauss_nodes(n)

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        inside = np.abs(z) <= 1.0 + _EDGE_TOL
        return np.where(inside, legendre_series(self.coeffs, z), 0.0)

    def polynomial(self, z):
        """Kernel polynomial without truncation to the support."""
        return legendre_series(self.coeffs, z)

    def moment(self, m):
        """``int_{-1}^{1} z^m kappa(z) dz``."""
        z, w = self._nodes(m)
        return float(np.sum(w * z**m * self.polynomial(z)))

    @property
    def norm_sq(self):
        """``||kappa||^2 = int kappa^2``."""
        z, w = self._nodes(self.degree)
        return float(np.sum(w * self.polynomial(z) ** 2))

    @property
    def b(self):
        """``B_{q,p}``: the ``p``-th moment divided by ``p!``."""
        return self.moment(self.p) / factorial(self.p)

    def sign_changes(self):
        return count_sign_changes(self.coeffs)


def _moment_matrix(p, ncols):
    """``A[m, j] = int z^m P_j(z) dz`` for m < p, j < ncols."""
    z, w = gauss_nodes(p + ncols + 4)
    basis = np.array([legendre(j, z) for j in range(ncols)])
    powers = np.array([z**m for m in range(p)])
    return (powers * w) @ basis.T


def interior_kernel(q, p, kind="optimal"):
    """Kernel of order ``(q, p)`` built by a linear solve in the Legendre basis.

    Parameters
    ----------
    q, p : int
        Derivative order and moment order, ``p > q >= 0`` with ``p - q`` even.
    kind : {"optimal", "minimal_norm"}

    Returns
    -------
    Kernel
    """
    q, p = int(q), int(p)
    if not (p > q >= 0):
        raise InvalidArgumentError(f"need p > q >= 0, got q={q}, p={p}")
    if (p - q) % 2:
        raise InvalidArgumentError(f"p - q must be even, got q={q}, p={p}")
    if kind not in KERNEL_KINDS:
        raise InvalidArgumentError(f"kind must be one of {KERNEL_KINDS}, got {kind!r}")
    target = np.zeros(p)
    target[q] = factorial(q)
    # A is lower triangular: P_j is orthogonal to z^m for m < j
    a = _moment_matrix(p, p)
    low = np.linalg.solve(a, target)
    low[np.abs(low) < 1e-13 * np.max(np.abs(low))] = 0.0
    if kind == "minimal_norm" and p > 2:
        coeffs = low
    else:
        # P_j(1) = 1, so vanishing at z = 1 fixes the P_p coefficient;
        # parity gives z = -1 for free
        coeffs = np.append(low, -np.sum(low))
    return Kernel(q, p, tuple(float(c) for c in coeffs), kind)


def epanechnikov():
    return interior_kernel(0, 2)


def count_sign_changes(coeffs, tol=1e-9):
    """Sign changes of the Legendre series ``coeffs`` on the open interval (-1, 1)."""
    poly = npleg.leg2poly(np.asarray(coeffs, dtype=float))
    poly = np.trim_zeros(poly, "b")
    if poly.size <= 1:
        return 0
    roots = np.roots(poly[::-1])
    real = np.sort(roots[np.abs(roots.imag) < 1e-7].real)
    real = real[(real > -1 + tol) & (real < 1 - tol)]
    if real.size == 0:
        return 0
    probes = np.concatenate(([-1 + tol / 2], 0.5 * (real[1:] + real[:-1]), [1 - tol / 2]))
    signs = np.sign(np.polynomial.polynomial.polyval(probes, poly))
    signs = signs[signs != 0]
    return int(np.sum(signs[1:] != signs[:-1]))


def kernel_fourier_coeffs(kernel, h, m_max):
    """Fourier coefficients of the scaled kernel on the unit frequency circle.

    ``khat_m = h^-(q+1) int kappa(u/h) exp(2 pi i m u) du = h^-q int kappa(z) exp(2 pi i m h z) dz``
    for ``m = -m_max..m_max``.

    Returns
    -------
    lags : ndarray of int
    coeffs : ndarray
        Real when the kernel is even or odd about zero (imaginary part
        dropped for even kernels).
    """
    if not 0 < h <= 0.5:
        raise InvalidArgumentError("need 0 < h <= 1/2")
    m_max = int(m_max)
    lags = np.arange(-m_max, m_max + 1)
    omega_max = 2 * np.pi * m_max * h
    z, w = gauss_nodes(int(omega_max) + 2 * kernel.p + 40)
    vals = kernel.polynomial(z) * w
    phase = np.exp(2j * np.pi * np.outer(lags, z) * h)
    coeffs = (phase @ vals) / h**kernel.q
    if kernel.q % 2 == 0:
        coeffs = coeffs.real
    return lags, coeffs


def variance_scale(n, k=None):
    """Per-unit-frequency noise level ``(1 + 1/(2K))^2 / N`` of the log-multitaper."""
    factor = 1.0 if k is None else (1.0 + 1.0 / (2.0 * k)) ** 2
    return factor / n


def interior_ease(kernel, theta_p, n, h, k=None):
    """Leading-order variance plus squared bias of the smoothed log-multitaper."""
    q, p = kernel.q, kernel.p
    var = kernel.norm_sq * variance_scale(n, k) / h ** (2 * q + 1)
    bias = kernel.b * theta_p * h ** (p - q)
    return var + bias**2


def optimal_halfwidth(kernel, theta_p, n, k=None):
    """EASE-minimising halfwidth for a given ``p``-th derivative of theta.

    ``h_o = [ (2q+1)/(2(p-q)) ||kappa||^2 v / (B^2 theta_p^2) ]^(1/(2p+1))``
    with ``v = (1 + 1/(2K))^2 / N``.
    """
    q, p = kernel.q, kernel.p
    theta_p = np.asarray(theta_p, dtype=float)
    with np.errstate(divide="ignore"):
        inner = (
            (2 * q + 1)
            / (2 * (p - q))
            * kernel.norm_sq
            * variance_scale(n, k)
            / (kernel.b**2 * theta_p**2)
        )
    return inner ** (1.0 / (2 * p + 1))


@dataclass(frozen=True)
class SmoothedEstimate:
    """Kernel-smoothed values with the halfwidth used at each point."""

    grid: object
    values: np.ndarray
    h: np.ndarray
    q: int
    p: int
    kernel: str
    self_weights: np.ndarray = None

    @property
    def frequencies(self):
        return self.grid.frequencies


def grid_period(grid):
    """Number of points in one full period of the (even, periodic) extension."""
    period = 1.0 / grid.spacing
    rounded = int(round(period))
    if abs(period - rounded) > 1e-6:
        raise InvalidArgumentError("grid spacing must divide the unit frequency interval")
    return rounded


def reflect_index(idx, period):
    """Map extended grid indices into the stored one-sided half."""
    i = np.mod(idx, period)
    return np.where(i > period // 2, period - i, i)


def moment_corrected_weights(z, raw, q, p, count_scale):
    """Add a degree ``< p`` polynomial to ``raw`` so discrete moments are exact.

    Works on stacked rows: ``z`` and ``raw`` are ``(rows, npts)`` with zeros
    (and ``z`` masked by ``raw``'s support) outside each row's support.
    Returns ``u`` with ``sum_i u_i z_i^m = count_scale * q! * delta_{mq}``.

    Parameters
    ----------
    z : ndarray (rows, npts)
    raw : ndarray (rows, npts)
    q, p : int
    count_scale : ndarray (rows,)
        ``h / spacing`` for each row.
    """
    mask = np.isfinite(z)
    zz = np.where(mask, z, 0.0)
    powers = [mask.astype(float)]
    for _ in range(1, 2 * p - 1):
        powers.append(powers[-1] * zz)
    power_sums = np.stack([pw.sum(axis=1) for pw in powers], axis=1)
    hankel = np.stack([power_sums[:, m : m + p] for m in range(p)], axis=1)
    raw_mom = np.stack([(raw * powers[m]).sum(axis=1) for m in range(p)], axis=1)
    target = np.zeros_like(raw_mom)
    target[:, q] = factorial(q) * np.asarray(count_scale, dtype=float)
    d = np.linalg.solve(hankel, (target - raw_mom)[..., None])[..., 0]
    corr = np.zeros_like(raw)
    for k in range(p):
        corr += d[:, k : k + 1] * powers[k]
    return np.where(mask, raw + corr, 0.0)


def interior_weights(kernel, h, spacing, f_offset=0.0):
    """Discrete weights of an interior kernel centred at ``f = f_j + f_offset``.

    Returns
    -------
    offsets : ndarray of int
        Grid offsets ``i - j`` of the support points.
    weights : ndarray
        ``w_i`` with ``sum_i w_i (f_i - f)^m = q! delta_{mq}``, m < p.
    """
    lo = int(np.ceil((f_offset - h) / spacing - _EDGE_TOL))
    hi = int(np.floor((f_offset + h) / spacing + _EDGE_TOL))
    offsets = np.arange(lo, hi + 1)
    z = (offsets * spacing - f_offset) / h
    if offsets.size < kernel.p + 1:
        raise BandwidthTooSmallError(
            f"halfwidth {h:.4g} covers {offsets.size} points; need at least {kernel.p + 1}"
        )
    raw = kernel.polynomial(z)
    u = moment_corrected_weights(z[None, :], raw[None, :], kernel.q, kernel.p, [h / spacing])[0]
    return offsets, u * spacing / h ** (kernel.q + 1)


def _image_offsets(idx, m, period):
    """Offsets ``o`` in ``[-m, m]`` with ``reflect(j + o) == j`` for each target ``j``.

    Returns candidate offsets ``(targets, c)`` and a validity mask; each
    image is listed once.
    """
    ks = np.arange(-(m // period) - 1, m // period + 2)
    direct = np.broadcast_to(ks * period, (idx.size, ks.size))
    mirror = ks[None, :] * period - 2 * idx[:, None]
    cand = np.concatenate([direct, mirror], axis=1)
    valid = np.abs(cand) <= m
    # 2j = 0 (mod period): the mirror images coincide with the direct ones
    valid[:, ks.size :] &= ((2 * idx) % period != 0)[:, None]
    return cand, valid


def _check_bandwidth(h, spacing):
    if np.any(~np.isfinite(h)) or np.any(h < 2 * spacing - 1e-15):
        raise BandwidthTooSmallError(
            f"halfwidth must be at least 2 grid spacings ({2 * spacing:.4g}); got min {np.min(h):.4g}"
        )


def _check_boundaries(freqs, h, boundaries):
    for fb in boundaries:
        crossing = np.abs(freqs - fb) < h * (1 - 1e-12)
        if np.any(crossing):
            f_bad = freqs[np.flatnonzero(crossing)[0]]
            raise BoundaryCrossingError(
                f"kernel support at f={f_bad:.6g} reaches the declared boundary at {fb:.6g}"
            )


_SHARED_MIN = 32


def _smooth_constant(vals, kernel, h, idx, spacing, period, self_weights):
    offsets, w = interior_weights(kernel, h, spacing)
    m = offsets[-1]
    ext = vals[reflect_index(np.arange(-m, vals.size + m), period)]
    full = fftconvolve(ext, w[::-1], mode="valid") if w.size > 64 else np.correlate(ext, w, "valid")
    selfw = None
    if self_weights:
        cand, valid = _image_offsets(idx, m, period)
        selfw = np.sum(np.where(valid, w[np.clip(cand + m, 0, 2 * m)], 0.0), axis=1)
    return full[idx], selfw


def _smooth_variable(vals, kernel, h_arr, idx, spacing, period, self_weights):
    out = np.empty(idx.size)
    selfw = np.empty(idx.size) if self_weights else None
    pad = int(np.floor(np.max(h_arr) / spacing + _EDGE_TOL)) + 1
    table = reflect_index(np.arange(-pad, vals.size + pad), period)
    order = np.argsort(h_arr, kind="stable")
    start = 0
    while start < order.size:
        h_lo = h_arr[order[start]]
        width = 2 * int(np.floor(1.5 * h_lo / spacing + _EDGE_TOL)) + 1
        rows = max(1, min(order.size - start, 2_000_000 // width))
        stop = start + rows
        stop = start + max(1, int(np.searchsorted(h_arr[order[start:stop]], 1.5 * h_lo, "right")))
        chunk = order[start:stop]
        m = int(np.floor(h_arr[chunk[-1]] / spacing + _EDGE_TOL))
        offsets = np.arange(-m, m + 1)
        hc = h_arr[chunk]
        z = offsets[None, :] * spacing / hc[:, None]
        z = np.where(np.abs(z) <= 1 + _EDGE_TOL, z, np.nan)
        raw = np.where(np.isfinite(z), kernel.polynomial(np.nan_to_num(z)), 0.0)
        u = moment_corrected_weights(z, raw, kernel.q, kernel.p, hc / spacing)
        w = u * (spacing / hc ** (kernel.q + 1))[:, None]
        ext_idx = table[idx[chunk][:, None] + offsets[None, :] + pad]
        out[chunk] = np.sum(w * vals[ext_idx], axis=1)
        if self_weights:
            cand, valid = _image_offsets(idx[chunk], m, period)
            picked = np.take_along_axis(w, np.clip(cand + m, 0, 2 * m), axis=1)
            selfw[chunk] = np.sum(np.where(valid, picked, 0.0), axis=1)
        start = stop
    return out, selfw


def kernel_smooth(values, kernel, h, targets=None, boundaries=(), grid=None, self_weights=False):
    """Smooth grid values with ``kernel`` at halfwidth ``h`` (scalar or per point).

    Implements ``h^-(q+1) int kappa((f' - f)/h) v(f') df'`` as a Riemann sum
    whose weights are corrected so that the discrete moment conditions hold
    exactly on the grid.  Values outside ``[0, 1/2]`` come from the even,
    periodic extension of the spectrum.

    Parameters
    ----------
    values : SpectralEstimate, LogSpectralEstimate or ndarray
        With a bare array, ``grid`` must be given.
    kernel : Kernel
    h : float or ndarray
        Halfwidth in cycles/sample; an array gives one value per target.
    targets : array of int, optional
        Grid indices to evaluate (default: all).
    boundaries : sequence of float
        Declared discontinuities; a support reaching one raises
        :class:`BoundaryCrossingError`.
    self_weights : bool
        Also return the weight each target puts on its own value
        (reflected images included).

    Returns
    -------
    SmoothedEstimate
    """
    if grid is None:
        grid = values.grid
        vals = np.asarray(values.values, dtype=float)
    else:
        vals = np.asarray(values, dtype=float)
    spacing = grid.spacing
    period = grid_period(grid)
    size = vals.size
    idx = np.arange(size) if targets is None else np.asarray(targets, dtype=int)
    freqs = idx * spacing
    h_arr = np.broadcast_to(np.asarray(h, dtype=float), idx.shape).astype(float)
    _check_bandwidth(h_arr, spacing)
    _check_boundaries(freqs, h_arr, boundaries)

    out = np.empty(idx.size)
    selfw = np.empty(idx.size) if self_weights else None
    # halfwidths shared by many targets go through one full convolution each
    shared, counts = np.unique(h_arr, return_counts=True)
    rest = np.ones(idx.size, dtype=bool)
    for hv in shared[(counts >= _SHARED_MIN) | (shared.size == 1)]:
        sel = h_arr == hv
        rest &= ~sel
        out[sel], sw = _smooth_constant(vals, kernel, hv, idx[sel], spacing, period, self_weights)
        if self_weights:
            selfw[sel] = sw
    if rest.any():
        sel = np.flatnonzero(rest)
        out[sel], sw = _smooth_variable(vals, kernel, h_arr[sel], idx[sel], spacing, period, self_weights)
        if self_weights:
            selfw[sel] = sw
    return SmoothedEstimate(grid, np.asarray(out), h_arr, kernel.q, kernel.p, kernel.kind, selfw)


def smooth_at(values, grid, f, h, kernel):
    """Interior kernel estimate at an arbitrary frequency ``f`` (not necessarily on the grid)."""
    spacing = grid.spacing
    j = int(np.floor(f / spacing))
    offsets, w = interior_weights(kernel, h, spacing, f_offset=f - j * spacing)
    ext = reflect_index(j + offsets, grid_period(grid))
    return float(np.dot(w, np.asarray(values, dtype=float)[ext]))
