"""Digamma and trigamma for positive real arguments.

Thin wrappers around :mod:`scipy.special` that reject arguments outside
``x > 0`` instead of returning nan or inf, and return a plain float for
scalar input.
"""

import numpy as np
from scipy import special as _sp

from .errors import InvalidArgumentError

EULER_GAMMA = float(np.euler_gamma)


def _as_positive(x):
    arr = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0):
        raise InvalidArgumentError("digamma/trigamma require finite x > 0")
    return arr


def _shaped(out):
    return out if np.ndim(out) else float(out)


def digamma(x):
    """Logarithmic derivative of the gamma function, psi(x), for x > 0."""
    return _shaped(_sp.digamma(_as_positive(x)))


def trigamma(x):
    """Derivative of the digamma function, psi'(x), for x > 0."""
    return _shaped(_sp.polygamma(1, _as_positive(x)))
