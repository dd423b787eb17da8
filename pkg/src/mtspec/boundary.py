"""One-sided kernels at a discontinuity or band edge.

Coordinates (right side; the left side is mirrored): with ``h`` the fixed
halfwidth of the boundary region and ``f_bar = f_disc + h``, the support is
``[f_disc, f_disc + 2h]``, the standardised data positions are
``z_i = (f_i - f_bar)/h`` in ``[-1, 1]`` and the estimation point is
``ft = (f - f_bar)/h`` in ``[-1, 0]``.  ``ft = -1`` is the discontinuity,
``ft = 0`` the touch point where the interior kernel fits exactly.

Kernels are expanded in polynomials orthogonal on the support grid,
``K(f, f_i) = (mu_i / h^q) sum_k b_k P_k(z_i)`` where ``mu_i`` is the
quadrature measure (``spacing/h`` on a uniform grid, Gauss weights in the
continuum).  ``b`` already contains the factor ``gamma_q``.
"""

from dataclasses import dataclass
from math import factorial

import numpy as np

from .errors import GridDegeneracyError, InvalidArgumentError, NoTouchPointError
from .kernels import (
    _EDGE_TOL,
    count_sign_changes,
    gamma_q,
    gauss_nodes,
    interior_kernel,
    legendre,
    legendre_series,
    variance_scale,
)

CONTINUUM_NODES = 48


@dataclass(frozen=True)
class BoundaryGeometry:
    """Support grid of a one-sided kernel.

    ``side = +1`` uses data at ``f >= f_disc`` (estimation to the right of the
    discontinuity); ``side = -1`` mirrors everything.  ``spacing = None``
    selects the continuum limit (Gauss-Legendre nodes).
    """

    f_disc: float
    h: float
    side: int = 1
    spacing: float = None

    def __post_init__(self):
        if self.side not in (1, -1):
            raise InvalidArgumentError("side must be +1 or -1")
        if not self.h > 0:
            raise InvalidArgumentError("halfwidth must be positive")

    @property
    def f_bar(self):
        return self.f_disc + self.side * self.h

    def ftilde(self, f):
        return (self.side * (np.asarray(f, dtype=float) - self.f_disc) - self.h) / self.h

    def frequency(self, ftilde):
        return self.f_disc + self.side * self.h * (1.0 + np.asarray(ftilde, dtype=float))

    def support(self):
        """Grid indices, standardised positions and measure of the support points.

        Indices are into the extended (unfolded) grid ``f_i = i * spacing``.
        """
        if self.spacing is None:
            z, w = gauss_nodes(CONTINUUM_NODES)
            return None, z, w
        s = self.spacing
        if self.side == 1:
            lo = int(np.ceil(self.f_disc / s - _EDGE_TOL))
            hi = int(np.floor((self.f_disc + 2 * self.h) / s + _EDGE_TOL))
        else:
            lo = int(np.ceil((self.f_disc - 2 * self.h) / s - _EDGE_TOL))
            hi = int(np.floor(self.f_disc / s + _EDGE_TOL))
        idx = np.arange(lo, hi + 1)
        z = (self.side * (idx * s - self.f_disc) - self.h) / self.h
        return idx, z, np.full(idx.size, s / self.h)


def grid_orthonormal_polys(z, measure, degree):
    """Polynomials orthogonal under ``<u, v> = sum_i measure_i u(z_i) v(z_i)``.

    ``P_k`` has the leading coefficient of the Legendre polynomial of the
    same degree, so on a dense uniform grid it converges to ``P_k`` itself.

    Returns
    -------
    values : ndarray (degree+1, n)
        ``P_k(z_i)``.
    g : ndarray (degree+1,)
        Normalisations ``<P_k, P_k>`` (``2/(2k+1)`` in the continuum).
    """
    z = np.asarray(z, dtype=float)
    measure = np.asarray(measure, dtype=float)
    if z.size < degree + 1 or np.unique(z).size < degree + 1:
        raise GridDegeneracyError(
            f"{np.unique(z).size} distinct points cannot carry degree {degree}"
        )
    root = np.sqrt(measure)
    basis = np.array([legendre(k, z) for k in range(degree + 1)]).T
    qmat, rmat = np.linalg.qr(root[:, None] * basis)
    diag = np.diag(rmat)
    scale = np.max(np.abs(rmat))
    if np.any(np.abs(diag) < 1e-10 * scale):
        raise GridDegeneracyError("support grid is numerically rank deficient")
    values = (qmat * diag).T / root
    return values, diag**2


def moment_matrix(values, z, ftilde, measure, p):
    """``C_kj = sum_i mu_i P_k(z_i) (z_i - ft)^j / j!`` for j < p+1 (upper triangular)."""
    dz = np.asarray(z) - ftilde
    powers = np.array([dz**j / factorial(j) for j in range(p + 1)])
    c = (values * measure) @ powers.T
    c[np.tril_indices_from(c, -1)] = 0.0
    return c


def continuum_shape_coeff(q, ftilde, beta):
    """Coefficient of ``P_{q+2}`` in the optimal normalised boundary kernel."""
    den = (2 * q + 3) / ((2 * q + 5) * beta ** (2 * q + 5)) + 2.0 / (2 * q + 5)
    return ((2 * q + 3) * ftilde**2 - 1.0) / den


def ease_weight_from_beta(q, beta):
    """Squared-bias weight ``lambda`` for EASE = sum g b^2 + lambda (sum C b)^2.

    Uses the optimal interior kernel's constants:
    ``lambda = beta^(2p+1) (2q+1) ||kappa||^2 / (2 (p-q) B^2)`` with ``p = q+2``.
    """
    k = interior_kernel(q, q + 2)
    p = q + 2
    return beta ** (2 * p + 1) * (2 * q + 1) * k.norm_sq / (2 * (p - q) * k.b**2)


@dataclass(frozen=True)
class BoundaryKernel:
    """Coefficients and derived quantities of a (discrete or continuum) boundary kernel."""

    q: int
    p: int
    ftilde: float
    beta: float
    b: np.ndarray
    g: np.ndarray
    c: np.ndarray
    z: np.ndarray
    measure: np.ndarray
    basis: np.ndarray
    indices: np.ndarray = None
    h: float = None
    side: int = 1

    @property
    def density(self):
        """``sum_k b_k P_k(z_i)``; tends to ``gamma_q G(ft, z_i)``."""
        return self.b @ self.basis

    @property
    def normalized(self):
        """Samples of the normalised kernel ``G(ft, z_i)``."""
        return self.density / gamma_q(self.q)

    def weights(self):
        """Weights ``K(f, f_i)`` in frequency units (needs ``h``)."""
        if self.h is None:
            raise InvalidArgumentError("weights need a halfwidth")
        sign = self.side**self.q
        return sign * self.measure * self.density / self.h**self.q

    def moments(self):
        """``sum_k C_kj b_k`` for j = 0..p (``delta_{qj}`` for j < p)."""
        return self.b @ self.c

    @property
    def variance_factor(self):
        return float(np.sum(self.g * self.b**2))

    @property
    def bias_factor(self):
        return float(self.moments()[self.p])


def boundary_support(geometry, p):
    """Support points of ``geometry`` with their orthogonal basis up to degree ``p``."""
    idx, z, measure = geometry.support()
    basis, g = grid_orthonormal_polys(z, measure, p)
    return idx, z, measure, basis, g


def solve_boundary_coeffs(q, geometry, ftilde, beta=1.0, lam=None, rule="ease", p=None, support=None):
    """Boundary kernel coefficients at standardised position ``ftilde``.

    ``b_0..b_{p-1}`` come from the upper-triangular moment system
    ``sum_k C_kj b_k = delta_{qj}``; ``b_p`` either minimises the discrete
    EASE (``rule="ease"``) or takes the continuum optimum (``rule="continuum"``);
    ``b_k = 0`` for ``k > p``.

    Parameters
    ----------
    q : int
    geometry : BoundaryGeometry
    ftilde : float
        Standardised estimation point in ``[-1, 0]`` (any value is accepted
        for the moment solve).
    beta : float
        ``h / h_0(f)``; converted to the bias weight when ``lam`` is None.
    lam : float, optional
        Squared-bias weight ``theta_p^2 h^(2p+1) / v`` (overrides ``beta``).
    rule : {"ease", "continuum"}
    p : int, optional
        Moment order, default ``q + 2``.  For ``p != q + 2`` only the moment
        solve is performed and ``b_p = 0``.
    support : tuple, optional
        Cached :func:`boundary_support` output for this geometry.
    """
    p = q + 2 if p is None else int(p)
    if p <= q:
        raise InvalidArgumentError("need p > q")
    if support is None:
        support = boundary_support(geometry, p)
    idx, z, measure, basis, g = support
    c = moment_matrix(basis, z, ftilde, measure, p)
    diag = np.diag(c)
    if np.any(np.abs(diag[:p]) < 1e-14):
        raise GridDegeneracyError("singular diagonal in the moment system")
    b = np.zeros(p + 1)
    b[q] = 1.0 / c[q, q]
    for j in range(q + 1, p):
        b[j] = -np.dot(c[q:j, j], b[q:j]) / c[j, j]
    if p == q + 2:
        if rule == "ease":
            lam = ease_weight_from_beta(q, beta) if lam is None else lam
            a = np.dot(c[:p, p], b[:p])
            b[p] = -lam * c[p, p] * a / (g[p] + lam * c[p, p] ** 2)
        elif rule == "continuum":
            b[p] = gamma_q(q) * continuum_shape_coeff(q, ftilde, beta)
        else:
            raise InvalidArgumentError(f"unknown rule {rule!r}")
    return BoundaryKernel(
        q, p, float(ftilde), float(beta), b, g, c, z, measure, basis,
        indices=idx, h=geometry.h, side=geometry.side,
    )


@dataclass(frozen=True)
class NormalizedBoundaryKernel:
    """Closed-form optimal boundary kernel ``G(ft, z)`` as a Legendre series."""

    q: int
    ftilde: float
    beta: float
    coeffs: tuple

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        return np.where(np.abs(z) <= 1 + _EDGE_TOL, legendre_series(self.coeffs, z), 0.0)

    def kernel(self, z, h=1.0):
        """``K = gamma_q / h^(q+1) * G``."""
        return gamma_q(self.q) / h ** (self.q + 1) * self(z)

    def sign_changes(self):
        return count_sign_changes(self.coeffs)


def continuum_boundary_kernel(q, ftilde, beta=1.0):
    """EASE-optimal normalised boundary kernel on support ``[0, 2h]``.

    ``G = P_q + (2q+3) ft P_{q+1} + ((2q+3) ft^2 - 1) / ((2q+3)/((2q+5) beta^(2q+5)) + 2/(2q+5)) P_{q+2}``
    """
    if not -1.0 - 1e-12 <= ftilde <= 1e-12:
        raise InvalidArgumentError(f"ftilde must lie in [-1, 0], got {ftilde}")
    if not beta > 0:
        raise InvalidArgumentError("beta must be positive")
    coeffs = np.zeros(q + 3)
    coeffs[q] = 1.0
    coeffs[q + 1] = (2 * q + 3) * ftilde
    coeffs[q + 2] = continuum_shape_coeff(q, ftilde, beta)
    return NormalizedBoundaryKernel(q, float(ftilde), float(beta), tuple(coeffs))


def touch_point(f_disc, h0, side=1, max_span=0.5, tol=1e-10, damping=0.5, max_iter=500):
    """Solve ``side (f_tp - f_disc) = h0(f_tp)`` for the outermost root.

    ``h0`` is a callable frequency -> halfwidth.  A coarse scan brackets the
    largest root on ``(0, max_span]``; damped fixed-point iteration refines it,
    with bisection when the iteration leaves the bracket or stalls.

    Raises
    ------
    NoTouchPointError
        If ``h0`` exceeds the distance everywhere on the search interval.
    """

    def phi(u):
        return u - float(h0(f_disc + side * u))

    grid = np.linspace(0.0, max_span, 257)[1:]
    vals = np.array([phi(u) for u in grid])
    if vals[-1] <= 0:
        raise NoTouchPointError(
            f"h0 exceeds the distance to {f_disc:.6g} on the whole interval of length {max_span:.4g}"
        )
    neg = np.flatnonzero(vals <= 0)
    lo = 0.0 if neg.size == 0 else grid[neg[-1]]
    hi = grid[neg[-1] + 1] if neg.size else grid[0]

    u = 0.5 * (lo + hi)
    prev_step = None
    for _ in range(max_iter):
        u_new = u - damping * phi(u)
        if not lo <= u_new <= hi:
            break
        step = abs(u_new - u)
        if step == 0.0:
            return f_disc + side * u_new
        if prev_step:
            # remaining error of a linearly converging iteration
            rate = step / prev_step
            if rate >= 1.0:
                break
            if step * rate / (1.0 - rate) < tol:
                return f_disc + side * u_new
        prev_step = step
        u = u_new
    a, b = lo, hi
    while b - a > tol:
        mid = 0.5 * (a + b)
        if phi(mid) <= 0:
            a = mid
        else:
            b = mid
    return f_disc + side * 0.5 * (a + b)


def boundary_ease(bk, theta_p, n, h, k=None):
    """Leading-order EASE of a boundary kernel:
    ``v/h^(2q+1) sum g_k b_k^2 + (theta_p h^(p-q) sum_k C_kp b_k)^2``."""
    var = variance_scale(n, k) / h ** (2 * bk.q + 1) * bk.variance_factor
    bias = theta_p * h ** (bk.p - bk.q) * bk.bias_factor
    return var + bias**2


@dataclass(frozen=True)
class WeightingLine:
    """Linear weighting ``w(z) = intercept + slope * z`` on ``[-1, 1]``."""

    intercept: float
    slope: float

    def __call__(self, z):
        return self.intercept + self.slope * np.asarray(z, dtype=float)


def equivalent_weighting(q, ftilde):
    """Linear LPR weighting equivalent to the optimal boundary kernel (beta = 1).

    Closed form for ``q = 0``:
    ``w ∝ (1 - ft^2) + (ft + sqrt(1 - 3 ft^2 + 3 ft^4)) z``, rewritten as
    ``1 + (1 - 3 ft^2)/(sqrt(1 - 3 ft^2 + 3 ft^4) - ft) z`` to stay regular at
    ``ft = -1``.  Normalised so that the maximum on ``[-1, 1]`` is 1.
    """
    if q != 0:
        raise InvalidArgumentError("the equivalent weighting line is only available for q = 0")
    if not -1.0 - 1e-12 <= ftilde <= 1e-12:
        raise InvalidArgumentError(f"ftilde must lie in [-1, 0], got {ftilde}")
    root = np.sqrt(1.0 - 3.0 * ftilde**2 + 3.0 * ftilde**4)
    slope = (1.0 - 3.0 * ftilde**2) / (root - ftilde)
    norm = 1.0 + abs(slope)
    return WeightingLine(1.0 / norm, slope / norm)


@dataclass(frozen=True)
class LPRResult:
    coeffs: np.ndarray
    estimate: float
    equivalent_kernel: np.ndarray


def lpr_fit(values, x, weights, q, p, x0=0.0, measure=None):
    """Weighted local polynomial regression of order ``p - 1`` about ``x0``.

    Minimises ``sum_i mu_i w_i (sum_j a_j (x_i - x0)^j - values_i)^2``.
    The derivative estimate is ``q! a_q`` and equals
    ``sum_i equivalent_kernel_i * values_i``.

    Parameters
    ----------
    values, x, weights : array_like
    q, p : int
    x0 : float
    measure : array_like, optional
        Quadrature weights ``mu_i`` (default 1); Gauss weights give the
        continuum regression.
    """
    x = np.asarray(x, dtype=float)
    w = np.asarray(weights(x) if callable(weights) else weights, dtype=float)
    mu = np.ones_like(x) if measure is None else np.asarray(measure, dtype=float)
    if np.any(w < 0):
        raise InvalidArgumentError("LPR weights must be nonnegative")
    design = np.vander(x - x0, p, increasing=True)
    ww = mu * w
    gram = design.T @ (ww[:, None] * design)
    if np.count_nonzero(ww > 0) < p or np.linalg.matrix_rank(gram) < p:
        raise GridDegeneracyError("LPR design is rank deficient")
    sel = np.linalg.solve(gram, np.eye(p)[q]) * factorial(q)
    eq_kernel = ww * (design @ sel)
    vals = None if values is None else np.asarray(values, dtype=float)
    coeffs = None
    estimate = None
    if vals is not None:
        coeffs = np.linalg.solve(gram, design.T @ (ww * vals))
        estimate = float(factorial(q) * coeffs[q])
    return LPRResult(coeffs, estimate, eq_kernel)


def lpr_weighting_from_kernel(coeffs, q, p):
    """Nonnegative weight function whose order-``p-1`` LPR reproduces a kernel.

    ``coeffs`` is the Legendre series of a kernel with at most ``p - 1``
    sign changes on ``(-1, 1)``.  Returns ``W(z) = kernel(z) / pi(z)`` where
    ``pi`` is the polynomial vanishing at the sign changes, signed so that
    ``W >= 0``.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    changes = count_sign_changes(coeffs)
    if changes > p - 1:
        raise InvalidArgumentError(
            f"kernel has {changes} sign changes; LPR of order {p - 1} allows at most {p - 1}"
        )
    poly = np.polynomial.legendre.leg2poly(coeffs)
    roots = np.roots(np.trim_zeros(poly, "b")[::-1])
    real = roots[np.abs(roots.imag) < 1e-7].real
    real = np.sort(real[(real > -1 + 1e-9) & (real < 1 - 1e-9)])
    # keep odd-multiplicity roots only
    crossings = []
    for r in real:
        if crossings and abs(r - crossings[-1]) < 1e-6:
            crossings.pop()
        else:
            crossings.append(r)
    divisor = np.poly1d(crossings, r=True) if crossings else np.poly1d([1.0])
    probe = np.linspace(-0.999, 0.999, 2001)
    kvals = legendre_series(coeffs, probe)
    ratio = kvals / divisor(probe)
    sign = 1.0 if np.median(ratio) >= 0 else -1.0

    def weight(z):
        z = np.asarray(z, dtype=float)
        return sign * legendre_series(coeffs, z) / divisor(z)

    return weight
