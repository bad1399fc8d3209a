"""Beta-generated Bregman divergences between densities.

The generator family is

    phi(t) = c1 t**beta / (beta (beta - 1)) + c2 t + c3   (beta not in {0, 1})
    phi(t) = c1 t ln t + c2 t + c3                        (beta = 1)
    phi(t) = -c1 ln t + c2 t + c3                         (beta = 0)

and the divergence between densities f and g is the integral of
``phi(f) - phi(g) - (f - g) phi'(g)``. ``beta = 2, 1, 0`` give squared L2,
Kullback-Leibler and Itakura-Saito respectively.
"""

import math
from dataclasses import dataclass

import numpy as np

from .density import SQRT_2PI, Variant, kernel_terms
from .errors import DegenerateEstimateError, DomainError
from .quadrature import QuadratureSpec, adaptive_simpson

TINY_DENSITY = 1e-300

# sup |k'(u)| for the bias-reduced kernel k(u) = (3 - u^2) phi(u) / 2,
# attained at u^2 = 4 - sqrt(11)
_U2 = 4.0 - math.sqrt(11.0)
SLOPE_BOUND = math.sqrt(_U2) * (5.0 - _U2) * math.exp(-0.5 * _U2) / (2.0 * SQRT_2PI)


@dataclass(frozen=True)
class BregmanGenerator:
    beta: float
    c1: float = 1.0
    c2: float = 0.0
    c3: float = 0.0

    def __post_init__(self):
        for name in ("beta", "c1", "c2", "c3"):
            if not np.isfinite(getattr(self, name)):
                raise DomainError(f"generator {name} must be finite")
        if not self.c1 > 0:
            raise DomainError(f"c1 must be positive for strict convexity, got {self.c1}")

    def phi(self, t):
        t = np.asarray(t, dtype=float)
        b, c1 = self.beta, self.c1
        if b == 1:
            core = c1 * t * np.log(t)
        elif b == 0:
            core = -c1 * np.log(t)
        else:
            core = c1 * t ** b / (b * (b - 1.0))
        return core + self.c2 * t + self.c3

    def phi_prime(self, t):
        t = np.asarray(t, dtype=float)
        b, c1 = self.beta, self.c1
        if b == 1:
            core = c1 * (np.log(t) + 1.0)
        elif b == 0:
            core = -c1 / t
        else:
            core = c1 * t ** (b - 1.0) / (b - 1.0)
        return core + self.c2

    def phi_second(self, t):
        t = np.asarray(t, dtype=float)
        return self.c1 * t ** (self.beta - 2.0)

    def pointwise(self, p, q):
        """Unchecked divergence integrand; ``p, q`` must be positive."""
        return self.phi(p) - self.phi(q) - (p - q) * self.phi_prime(q)


@dataclass(frozen=True)
class TruncationPolicy:
    """Threshold ``gamma_n = c_gamma / n`` on the bias-reduced estimate."""

    c_gamma: float = 0.01

    def __post_init__(self):
        if not (np.isfinite(self.c_gamma) and self.c_gamma > 0):
            raise DomainError("c_gamma must be positive")

    def gamma_n(self, n):
        return self.c_gamma / n


def _positive(t, name):
    arr = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError(f"{name} must be finite and strictly positive")
    return arr


def _out(vals, *like):
    return float(vals) if all(np.ndim(v) == 0 for v in like) else vals


def phi(gen, t):
    return _out(gen.phi(_positive(t, "t")), t)


def bregman_pointwise(gen, p, q):
    """``phi(p) - phi(q) - (p - q) phi'(q)`` for positive ``p`` and ``q``."""
    pa, qa = _positive(p, "p"), _positive(q, "q")
    return _out(gen.pointwise(pa, qa), p, q)


def _beta3_integrand(f, g):
    return (f ** 3 - 3.0 * f * g * g + 2.0 * g ** 3) / 6.0


def _masked(fn, f, g, keep):
    safe_f = np.where(keep, f, 1.0)
    safe_g = np.where(keep, g, 1.0)
    return np.where(keep, fn(safe_f, safe_g), 0.0)


def divergence_exact(gen, f, g, quad=QuadratureSpec()):
    """Divergence between two density callables over the quadrature window.

    Nodes where either density falls below 1e-300 contribute nothing.
    """
    def integrand(x):
        fx, gx = np.asarray(f(x), float), np.asarray(g(x), float)
        keep = (fx >= TINY_DENSITY) & (gx >= TINY_DENSITY)
        return _masked(gen.pointwise, fx, gx, keep)

    return adaptive_simpson(integrand, quad)


def specialized_beta3_exact(f, g, quad=QuadratureSpec()):
    """Closed-form ``beta = 3, c1 = 1`` integrand: ``(f^3 - 3 f g^2 + 2 g^3)/6``."""
    def integrand(x):
        fx, gx = np.asarray(f(x), float), np.asarray(g(x), float)
        keep = (fx >= TINY_DENSITY) & (gx >= TINY_DENSITY)
        return _masked(_beta3_integrand, fx, gx, keep)

    return adaptive_simpson(integrand, quad)


def _slope_terms(x, data, h):
    u = (np.asarray(x, float)[:, None] - data[None, :]) / h
    return u * (u * u - 5.0) * np.exp(-0.5 * u * u) / (2.0 * SQRT_2PI * h * h)


class ResampledKDE:
    """Bias-reduced estimates for ``B`` resamples of one data vector.

    ``weights[i, b]`` is how often observation ``i`` appears in resample
    ``b``; a single column of ones is the original sample.
    """

    def __init__(self, data, bandwidth, weights):
        self.data = np.asarray(data, dtype=float)
        self.bandwidth = float(bandwidth)
        self.weights = np.asarray(weights, dtype=float)
        self.n = self.data.size
        self.columns = self.weights.shape[1]

    def level(self, x):
        t = kernel_terms(x, self.data, self.bandwidth, variant=Variant.BIAS_REDUCED)
        return t @ self.weights / self.n

    def slope(self, x):
        return _slope_terms(x, self.data, self.bandwidth) @ self.weights / self.n

    def level_at(self, x, cols):
        t = kernel_terms(x, self.data, self.bandwidth, variant=Variant.BIAS_REDUCED)
        return np.einsum("rn,nr->r", t, self.weights[:, cols]) / self.n

    def slope_at(self, x, cols):
        t = _slope_terms(x, self.data, self.bandwidth)
        return np.einsum("rn,nr->r", t, self.weights[:, cols]) / self.n


class StackedKDE:
    """Bias-reduced estimates for ``B`` unrelated samples of equal size.

    ``samples`` has shape ``(B, n)``; all columns share one bandwidth.
    """

    _BLOCK = 1 << 22

    def __init__(self, samples, bandwidth):
        self.samples = np.atleast_2d(np.asarray(samples, dtype=float))
        self.bandwidth = float(bandwidth)
        self.columns, self.n = self.samples.shape

    def _reduce(self, x, fn):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty((x.size, self.columns))
        step = max(1, self._BLOCK // self.samples.size)
        for i in range(0, x.size, step):
            u = (x[i:i + step, None, None] - self.samples[None]) / self.bandwidth
            out[i:i + step] = fn(u).sum(axis=2)
        return out

    def _reduce_at(self, x, cols, fn):
        u = (np.asarray(x, float)[:, None] - self.samples[cols]) / self.bandwidth
        return fn(u).sum(axis=1)

    def _level_fn(self, u):
        u2 = u * u
        return (3.0 - u2) * np.exp(-0.5 * u2) / (2.0 * SQRT_2PI * self.bandwidth * self.n)

    def _slope_fn(self, u):
        h = self.bandwidth
        return u * (u * u - 5.0) * np.exp(-0.5 * u * u) / (2.0 * SQRT_2PI * h * h * self.n)

    def level(self, x):
        return self._reduce(x, self._level_fn)

    def slope(self, x):
        return self._reduce(x, self._slope_fn)

    def level_at(self, x, cols):
        return self._reduce_at(x, cols, self._level_fn)

    def slope_at(self, x, cols):
        return self._reduce_at(x, cols, self._slope_fn)


def _bisect(fn, a, b, a_sign, steps=1100):
    """Shrink brackets ``[a, b]`` until adjacent floats; ``fn`` returns signs."""
    for _ in range(steps):
        c = 0.5 * (a + b)
        if np.all((c == a) | (c == b)):
            break
        same = fn(c) == a_sign
        a = np.where(same, c, a)
        b = np.where(same, b, c)
    return a, b


def truncation_segments(kde, threshold, lower, upper):
    """Window pieces on which no column's truncation indicator changes.

    Crossings of the threshold are bracketed on a scan of spacing
    ``bandwidth / 8``. A dip (or bump) narrower than the scan spacing is
    caught through a sign change of the derivative: the extremum is located
    first and, if it lies across the threshold, splits the scan cell into two
    brackets. Each root is then bisected to float resolution and a gap of
    ``1e-9 * bandwidth`` on each side of it is cut from the window; the
    remaining pieces carry a smooth integrand.
    """
    step = kde.bandwidth / 8.0
    m = max(int(np.ceil((upper - lower) / step)), 16)
    xs = np.linspace(lower, upper, m + 1)
    level = kde.level(xs)
    above = level >= threshold
    rising = kde.slope(xs) > 0

    idx, col = np.nonzero(above[1:] != above[:-1])
    brackets = [(xs[idx], xs[idx + 1], above[idx, col], col)]

    # |f'| <= SLOPE_BOUND / h**2, so a cell whose ends are farther than
    # that times its width from the threshold cannot cross it in between
    reach = SLOPE_BOUND * (xs[1] - xs[0]) / kde.bandwidth ** 2
    lo_end = np.minimum(level[1:], level[:-1])
    hi_end = np.maximum(level[1:], level[:-1])
    near = np.where(above[1:], lo_end - reach < threshold, hi_end + reach >= threshold)
    eidx, ecol = np.nonzero((above[1:] == above[:-1]) & (rising[1:] != rising[:-1]) & near)
    if eidx.size:
        # the level is flat at an extremum, so a coarse location suffices
        ea, eb = _bisect(lambda c: kde.slope_at(c, ecol) > 0,
                         xs[eidx], xs[eidx + 1], rising[eidx, ecol], steps=36)
        peak = 0.5 * (ea + eb)
        flips = (kde.level_at(peak, ecol) >= threshold) != above[eidx, ecol]
        if np.any(flips):
            i, c, p = eidx[flips], ecol[flips], peak[flips]
            brackets.append((xs[i], p, above[i, c], c))
            brackets.append((p, xs[i + 1], ~above[i, c], c))

    a = np.concatenate([br[0] for br in brackets])
    if a.size == 0:
        return np.array([[lower, upper]])
    b = np.concatenate([br[1] for br in brackets])
    a_sign = np.concatenate([br[2] for br in brackets])
    cols = np.concatenate([br[3] for br in brackets])
    a, b = _bisect(lambda c: kde.level_at(c, cols) >= threshold, a, b, a_sign)

    eps = 1e-9 * kde.bandwidth
    gaps = np.column_stack([a - eps, b + eps])
    gaps = gaps[np.argsort(gaps[:, 0], kind="stable")]
    starts = np.concatenate([[lower], gaps[:, 1]])
    ends = np.concatenate([gaps[:, 0], [upper]])
    # running max merges overlapping gaps
    starts = np.maximum.accumulate(starts)
    keep = ends > starts
    return np.column_stack([starts[keep], ends[keep]])


def truncated_estimates(pointwise, kde, model_pdfs, threshold, quad):
    """Truncated plug-in divergences for a batch of density estimates.

    Parameters
    ----------
    pointwise : callable
        ``(p, q) -> integrand`` applied where both arguments are admissible.
    kde : ResampledKDE or StackedKDE
        Supplies ``B`` bias-reduced estimates (one per column).
    model_pdfs : callable
        ``x -> ndarray (m, M, B)``: the ``M`` candidate densities fitted to
        each column's data, evaluated at nodes ``x``.
    threshold : float
        Nodes where the bias-reduced estimate is below this are dropped.

    Returns
    -------
    ndarray, shape (M, B)
    """
    seen = np.zeros(kde.columns, dtype=bool)

    def integrand(x):
        fb = kde.level(x)
        g = np.asarray(model_pdfs(x), dtype=float)
        inside = fb >= threshold
        seen[:] |= inside.any(axis=0)
        keep = inside[:, None, :] & (g >= TINY_DENSITY)
        return _masked(pointwise, np.broadcast_to(fb[:, None, :], g.shape), g, keep)

    segments = truncation_segments(kde, threshold, quad.lower, quad.upper)
    result = adaptive_simpson(integrand, quad, segments)
    if not seen.all():
        raise DegenerateEstimateError(
            "bias-reduced estimate never reaches the truncation threshold on the window")
    return result


def _single(est, model_pdf, trunc, quad, pointwise):
    if est.variant is not Variant.BIAS_REDUCED:
        raise DomainError("divergence estimation expects a bias-reduced density estimate")
    data = est.sample.values
    ones = np.ones((data.size, 1))

    def pdfs(x):
        return np.asarray(model_pdf(x), float)[:, None, None]

    kde = ResampledKDE(data, est.bandwidth, ones)
    out = truncated_estimates(pointwise, kde, pdfs, trunc.gamma_n(data.size), quad)
    return float(out[0, 0])


def divergence_estimate(gen, est, model_pdf, trunc=TruncationPolicy(), quad=QuadratureSpec()):
    """Plug-in divergence from a bias-reduced estimate to a model density.

    Only the set where the estimate is at least ``gamma_n`` contributes.
    Its boundary points are located so that the quadrature never straddles
    the jump; inside, nodes are still masked one by one.
    """
    return _single(est, model_pdf, trunc, quad, gen.pointwise)


def specialized_beta3_estimate(est, model_pdf, trunc=TruncationPolicy(), quad=QuadratureSpec()):
    return _single(est, model_pdf, trunc, quad, _beta3_integrand)
