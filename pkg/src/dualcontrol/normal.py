"""Standard normal helpers used by every closed form."""

from __future__ import annotations

import numpy as np
from scipy import special

SQRT_2PI = np.sqrt(2.0 * np.pi)


def cdf(z):
    return special.ndtr(z)


def pdf(z):
    z = np.asarray(z, dtype=float)
    with np.errstate(over="ignore"):
        return np.exp(-0.5 * z * z) / SQRT_2PI


def ppf(p):
    """Inverse normal CDF (``ndtri``; relative accuracy near machine precision)."""
    return special.ndtri(p)


def cdf_diff(a, b):
    """``Phi(b) - Phi(a)`` without cancellation when both arguments are large.

    For ``a > 0`` the difference is taken on the upper tail,
    ``Phi(-a) - Phi(-b)``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    upper = a > 0
    lo = np.where(upper, -b, a)
    hi = np.where(upper, -a, b)
    return special.ndtr(hi) - special.ndtr(lo)


def pdf_times(z):
    """``z * phi(z)``, zero at +-inf."""
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    fin = np.isfinite(z)
    out[fin] = z[fin] * pdf(z[fin])
    return out
