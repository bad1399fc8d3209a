"""Ordinary and bias-reduced kernel density estimation.

The bias-reduced estimator subtracts a plug-in estimate of the leading bias
term of the ordinary estimator,

    fb(x) = f(x) - (h**2 / 2) * f''(x) * mu2(K),

which for the standard Gaussian kernel (``mu2 = 1``) collapses to

    fb(x) = 1 / (2 sqrt(2 pi) n h) * sum_i (3 - u_i**2) exp(-u_i**2 / 2),

with ``u_i = (x - X_i) / h``. Values are not clamped: the estimate can dip
below zero in the tails and callers that need positivity must truncate.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, UnsupportedKernelError

SQRT_2PI = math.sqrt(2.0 * math.pi)


class Kernel(enum.Enum):
    GAUSSIAN = "gaussian"
    EPANECHNIKOV = "epanechnikov"

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if self is Kernel.GAUSSIAN:
            return np.exp(-0.5 * u * u) / SQRT_2PI
        return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)

    def second_derivative(self, u):
        if self is not Kernel.GAUSSIAN:
            raise UnsupportedKernelError(f"no closed-form K'' for {self.value} kernel")
        u = np.asarray(u, dtype=float)
        return (u * u - 1.0) * np.exp(-0.5 * u * u) / SQRT_2PI

    @property
    def second_moment(self):
        return 1.0 if self is Kernel.GAUSSIAN else 0.2


class Variant(enum.Enum):
    ORDINARY = "ordinary"
    BIAS_REDUCED = "bias_reduced"


@dataclass(frozen=True)
class Sample:
    """An ordered sample of real observations.

    Order matters to estimators that use a leading prefix of the data (the
    one-step MLE preliminary), so values are kept exactly as given.
    """

    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        arr = np.array(self.values, dtype=float).ravel()
        if arr.size < 2:
            raise DomainError(f"a sample needs at least 2 observations, got {arr.size}")
        if not np.all(np.isfinite(arr)):
            raise DomainError("sample contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __len__(self):
        return self.values.size

    @property
    def n(self):
        return self.values.size


@dataclass(frozen=True)
class DensityEstimate:
    sample: Sample
    bandwidth: float
    kernel: Kernel = Kernel.GAUSSIAN
    variant: Variant = Variant.ORDINARY

    def __post_init__(self):
        if not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise DomainError(f"bandwidth must be positive, got {self.bandwidth}")
        object.__setattr__(self, "bandwidth", float(self.bandwidth))

    def __call__(self, x):
        if self.variant is Variant.ORDINARY:
            return kde_evaluate(self, x)
        return kde_bias_reduced_evaluate(self, x)


def _nodes(x):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("evaluation points must be finite")
    return arr


def kernel_terms(x, data, h, kernel=Kernel.GAUSSIAN, variant=Variant.ORDINARY):
    """Matrix of per-observation contributions, shape ``(len(x), len(data))``.

    Summing a row and dividing by ``len(data)`` gives the estimate at that
    node; weighting the columns instead gives the estimate for a resample
    that repeats observations (bootstrap counts).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    u = (x[:, None] - np.asarray(data, dtype=float)[None, :]) / h
    if variant is Variant.ORDINARY:
        return kernel(u) / h
    if kernel is not Kernel.GAUSSIAN:
        raise UnsupportedKernelError(
            f"bias-reduced closed form only available for the Gaussian kernel, not {kernel.value}")
    u2 = u * u
    return (3.0 - u2) * np.exp(-0.5 * u2) / (2.0 * SQRT_2PI * h)


def kde_evaluate(est, x):
    """Ordinary kernel density estimate ``(1/nh) sum K((x - X_i)/h)``."""
    xs = _nodes(x)
    vals = kernel_terms(xs.ravel(), est.sample.values, est.bandwidth, est.kernel).mean(axis=1)
    return float(vals[0]) if xs.ndim == 0 else vals.reshape(xs.shape)


def kde_bias_reduced_evaluate(est, x):
    """Bias-reduced estimate; Gaussian kernel only."""
    if est.kernel is not Kernel.GAUSSIAN:
        raise UnsupportedKernelError(
            f"bias-reduced closed form only available for the Gaussian kernel, not {est.kernel.value}")
    xs = _nodes(x)
    vals = kernel_terms(xs.ravel(), est.sample.values, est.bandwidth,
                        est.kernel, Variant.BIAS_REDUCED).mean(axis=1)
    return float(vals[0]) if xs.ndim == 0 else vals.reshape(xs.shape)


def reference_bandwidth(values):
    """Normal-reference rule ``1.06 * sd * n**(-1/5)``."""
    values = np.asarray(values, dtype=float)
    return 1.06 * np.std(values, ddof=1) * values.size ** (-0.2)


def default_grid(sample, size=60, lo=0.05, hi=5.0):
    """Log-spaced search set spanning ``lo`` to ``hi`` times ``sd * n**(-1/5)``."""
    if not (size >= 1 and 0 < lo <= hi):
        raise DomainError("grid needs size >= 1 and 0 < lo <= hi")
    scale = np.std(sample.values, ddof=1) * sample.n ** (-0.2)
    if not scale > 0:
        raise DomainError("cannot build a bandwidth grid for a constant sample")
    return np.geomspace(lo * scale, hi * scale, size)


def cv_scores(sample, grid):
    """Least-squares cross-validation criterion for each bandwidth in ``grid``.

    ``CV(h) = int fhat**2 - (2/n) sum_i fhat_{-i}(X_i)``. The integral uses the
    Gaussian convolution identity: the product of two N(., h^2) kernels
    integrates to an N(0, 2h^2) density of the pairwise difference.
    """
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise DomainError("bandwidth grid is empty")
    if np.any(~np.isfinite(grid)) or np.any(grid <= 0):
        raise DomainError("bandwidth grid entries must be positive")
    # sorting makes the sums order-free, hence exactly permutation invariant
    x = np.sort(sample.values)
    n = x.size
    d2 = (x[:, None] - x[None, :]) ** 2
    off = ~np.eye(n, dtype=bool)
    d2_off = d2[off]
    scores = np.empty(grid.size)
    for k, h in enumerate(grid):
        conv = np.exp(-d2 / (4.0 * h * h)).sum() / (2.0 * math.sqrt(math.pi) * h)
        int_f2 = conv / (n * n)
        loo = np.exp(-d2_off / (2.0 * h * h)).sum() / (SQRT_2PI * h * (n - 1))
        scores[k] = int_f2 - 2.0 * loo / n
    return scores


def cv_bandwidth(sample, grid=None, kernel=Kernel.GAUSSIAN):
    """Bandwidth minimising the cross-validation criterion over ``grid``.

    Ties go to the smaller bandwidth.
    """
    if kernel is not Kernel.GAUSSIAN:
        raise UnsupportedKernelError("cross-validation is implemented for the Gaussian kernel only")
    if grid is None:
        grid = default_grid(sample)
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    scores = cv_scores(sample, grid)
    best = scores.min()
    return float(grid[scores == best].min())
