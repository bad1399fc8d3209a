"""Digamma, trigamma and log-gamma for positive real arguments.

All functions accept scalars or arrays and return the same shape.
"""

import math

import numpy as np

from .errors import DomainError

# ln Gamma via Lanczos, g = 7, 9 terms
_LANCZOS_G = 7.0
_LANCZOS_COEF = np.array([
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
])

_SHIFT = 10.0

# Bernoulli numbers B_2 .. B_14
_B2K = np.array([1 / 6, -1 / 30, 1 / 42, -1 / 30, 5 / 66, -691 / 2730, 7 / 6])


def _positive_array(x, name):
    arr = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError(f"{name} requires finite positive arguments")
    return arr


def _unwrap(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


def digamma(x):
    """psi(x) = d/dx ln Gamma(x) for x > 0.

    Upward recurrence ``psi(x) = psi(x + 1) - 1/x`` until ``x >= 10``, then
    the asymptotic series with Bernoulli terms through ``x**-14``.
    """
    z = _positive_array(x, "digamma").copy()
    acc = np.zeros_like(z)
    small = z < _SHIFT
    while np.any(small):
        acc[small] -= 1.0 / z[small]
        z[small] += 1.0
        small = z < _SHIFT
    inv2 = 1.0 / (z * z)
    series = np.zeros_like(z)
    for k in range(len(_B2K), 0, -1):
        series = series * inv2 + _B2K[k - 1] / (2 * k)
    result = acc + np.log(z) - 0.5 / z - series * inv2
    return _unwrap(result, x)


def trigamma(x):
    """psi_1(x) = d^2/dx^2 ln Gamma(x) for x > 0."""
    z = _positive_array(x, "trigamma").copy()
    acc = np.zeros_like(z)
    small = z < _SHIFT
    while np.any(small):
        acc[small] += 1.0 / (z[small] * z[small])
        z[small] += 1.0
        small = z < _SHIFT
    inv = 1.0 / z
    inv2 = inv * inv
    # sum_k B_2k / x^(2k+1)
    series = np.zeros_like(z)
    for k in range(len(_B2K), 0, -1):
        series = series * inv2 + _B2K[k - 1]
    result = acc + inv + 0.5 * inv2 + series * inv2 * inv
    return _unwrap(result, x)


def lngamma(x):
    """ln Gamma(x) for x > 0 (Lanczos approximation)."""
    z = _positive_array(x, "lngamma")
    out = np.empty_like(z)
    refl = z < 0.5
    if np.any(refl):
        zr = z[refl]
        out[refl] = np.log(np.pi / np.abs(np.sin(np.pi * zr))) - _lanczos(1.0 - zr)
    if np.any(~refl):
        out[~refl] = _lanczos(z[~refl])
    return _unwrap(out, x)


def _lanczos(z):
    z = z - 1.0
    s = np.full_like(z, _LANCZOS_COEF[0])
    for i in range(1, len(_LANCZOS_COEF)):
        s = s + _LANCZOS_COEF[i] / (z + i)
    t = z + _LANCZOS_G + 0.5
    return 0.5 * math.log(2 * math.pi) + (z + 0.5) * np.log(t) - t + np.log(s)
