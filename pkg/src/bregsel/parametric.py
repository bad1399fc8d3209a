"""Gamma and log-normal candidate models and their mixture.

Fitting routines come in two flavours: a public per-sample function and a
``*_rows`` variant that fits every row of a 2-D array at once. The per-sample
functions delegate to the row variants so a bootstrap replicate and the
original sample always go through identical arithmetic.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as sps

from .errors import DegenerateFitError, DomainError, StepFailureError
from .special import digamma, lngamma, trigamma

SQRT_2PI = math.sqrt(2.0 * math.pi)


def gamma_pdf_array(x, alpha, eta):
    """Gamma(shape=alpha, rate=eta) density with numpy broadcasting."""
    x, alpha, eta = np.broadcast_arrays(np.asarray(x, float), np.asarray(alpha, float),
                                        np.asarray(eta, float))
    out = np.zeros(x.shape)
    pos = x > 0
    if np.any(pos):
        a, e, xp = alpha[pos], eta[pos], x[pos]
        logf = a * np.log(e) - lngamma(a) + (a - 1.0) * np.log(xp) - e * xp
        out[pos] = np.exp(logf)
    at0 = x == 0
    if np.any(at0):
        # alpha < 1 would be +inf at the origin; a single point carries no mass
        out[at0] = np.where(alpha[at0] == 1.0, eta[at0], 0.0)
    return out


def lognormal_pdf_array(x, mu, sigma):
    x, mu, sigma = np.broadcast_arrays(np.asarray(x, float), np.asarray(mu, float),
                                       np.asarray(sigma, float))
    out = np.zeros(x.shape)
    pos = x > 0
    if np.any(pos):
        xp, m, s = x[pos], mu[pos], sigma[pos]
        z = (np.log(xp) - m) / s
        out[pos] = np.exp(-0.5 * z * z) / (SQRT_2PI * s * xp)
    return out


def _scalar_or_array(vals, x):
    return float(vals) if np.ndim(x) == 0 else vals


@dataclass(frozen=True)
class GammaParams:
    """Gamma distribution with shape ``alpha`` and rate ``eta``."""

    alpha: float
    eta: float
    family = "gamma"

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise DomainError(f"gamma shape must be positive, got {self.alpha}")
        if not (np.isfinite(self.eta) and self.eta > 0):
            raise DomainError(f"gamma rate must be positive, got {self.eta}")

    def pdf(self, x):
        return gamma_pdf(self, x)

    def quantile(self, q):
        return float(sps.gammaincinv(self.alpha, q) / self.eta)

    def mean(self):
        return self.alpha / self.eta

    def sample(self, n, rng):
        return sample_gamma(self, n, rng)

    def as_dict(self):
        return {"alpha": self.alpha, "eta": self.eta}


@dataclass(frozen=True)
class LogNormalParams:
    """Log-normal distribution: ``ln X ~ N(mu, sigma**2)``."""

    mu: float
    sigma: float
    family = "lognormal"

    def __post_init__(self):
        if not np.isfinite(self.mu):
            raise DomainError("log-normal mu must be finite")
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise DomainError(f"log-normal sigma must be positive, got {self.sigma}")

    def pdf(self, x):
        return lognormal_pdf(self, x)

    def quantile(self, q):
        return float(np.exp(self.mu + self.sigma * sps.ndtri(q)))

    def mean(self):
        return math.exp(self.mu + 0.5 * self.sigma ** 2)

    def sample(self, n, rng):
        return sample_lognormal(self, n, rng)

    def as_dict(self):
        return {"mu": self.mu, "sigma": self.sigma}


@dataclass(frozen=True)
class MixtureDGP:
    """``pi * Gamma + (1 - pi) * LogNormal``."""

    pi: float
    gamma: GammaParams
    lognormal: LogNormalParams
    family = "mixture"

    def __post_init__(self):
        if not 0.0 <= self.pi <= 1.0:
            raise DomainError(f"mixing weight must lie in [0, 1], got {self.pi}")

    def pdf(self, x):
        return mixture_pdf(self, x)

    def quantile(self, q):
        return max(self.gamma.quantile(q), self.lognormal.quantile(q))

    def mean(self):
        return self.pi * self.gamma.mean() + (1.0 - self.pi) * self.lognormal.mean()

    def sample(self, n, rng):
        return sample_mixture(self, n, rng)


@dataclass(frozen=True)
class OneStepConfig:
    """The preliminary estimator uses the first ``floor(n**delta)`` observations."""

    delta: float = 0.6

    def __post_init__(self):
        if not 0.5 < self.delta < 1.0:
            raise DomainError(f"delta must lie in (1/2, 1), got {self.delta}")

    def prefix_length(self, n):
        # tiny epsilon so that exact powers (e.g. 32**0.6 == 8) do not floor down
        return int(math.floor(n ** self.delta + 1e-9))


def gamma_pdf(p, x):
    return _scalar_or_array(gamma_pdf_array(x, p.alpha, p.eta), x)


def lognormal_pdf(p, x):
    return _scalar_or_array(lognormal_pdf_array(x, p.mu, p.sigma), x)


def mixture_pdf(dgp, x):
    vals = (dgp.pi * gamma_pdf_array(x, dgp.gamma.alpha, dgp.gamma.eta)
            + (1.0 - dgp.pi) * lognormal_pdf_array(x, dgp.lognormal.mu, dgp.lognormal.sigma))
    return _scalar_or_array(vals, x)


# -- fitting ---------------------------------------------------------------

def _rows(values):
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.shape[1] < 2:
        raise DomainError("fitting needs at least 2 observations")
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError("observations must be finite and strictly positive")
    return arr


def _values(sample):
    return getattr(sample, "values", sample)


def lognormal_mle_rows(values):
    """Closed-form MLE per row; ``sigma`` uses the 1/n divisor."""
    logs = np.log(_rows(values))
    mu = logs.mean(axis=1)
    sigma = np.sqrt(np.mean((logs - mu[:, None]) ** 2, axis=1))
    if np.any(sigma <= 0):
        raise DegenerateFitError("log-normal fit is degenerate: zero spread in log-data")
    return mu, sigma


def lognormal_mle(sample):
    mu, sigma = lognormal_mle_rows(_values(sample))
    return LogNormalParams(float(mu[0]), float(sigma[0]))


def gamma_preliminary_rows(values):
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.shape[1] < 2:
        raise DomainError("the preliminary estimator needs at least 2 observations")
    mean = arr.mean(axis=1)
    var = np.mean((arr - mean[:, None]) ** 2, axis=1)
    if np.any(var <= 0):
        raise DegenerateFitError("gamma preliminary fit is degenerate: zero sample variance")
    return mean * mean / var, mean / var


def gamma_preliminary(sample):
    """Method-of-moments start: ``alpha = mean**2/var``, ``eta = mean/var``."""
    alpha, eta = gamma_preliminary_rows(_values(sample))
    return GammaParams(float(alpha[0]), float(eta[0]))


def gamma_one_step_rows(values, cfg=OneStepConfig(), rate=None):
    """One scoring step from the preliminary estimate, row by row.

    With ``rate=None`` the rate is profiled: the shape score is evaluated at
    ``eta = alpha_bar / mean(X)``. Passing a known ``rate`` gives the
    one-parameter version, where the start is ``rate * mean(X[:N])`` and the
    update is efficient for the shape.
    """
    arr = _rows(values)
    n = arr.shape[1]
    big_n = cfg.prefix_length(n)
    if big_n < 2:
        raise DomainError(f"n = {n} leaves fewer than 2 observations for the preliminary fit")
    mean = arr.mean(axis=1)
    logs = np.log(arr)
    if rate is None:
        a0, _ = gamma_preliminary_rows(arr[:, :big_n])
        eta0 = a0 / mean
    else:
        if not rate > 0:
            raise DomainError("known rate must be positive")
        a0 = rate * arr[:, :big_n].mean(axis=1)
        eta0 = np.full_like(a0, float(rate))
    score = np.mean(np.log(eta0)[:, None] + logs, axis=1) - digamma(a0)
    alpha = a0 + score / trigamma(a0)
    if np.any(~(alpha > 0)):
        raise StepFailureError("one-step update produced a non-positive shape")
    eta = eta0 if rate is not None else alpha / mean
    return alpha, eta


def gamma_one_step_mle(sample, cfg=OneStepConfig(), rate=None):
    """Single Fisher-scoring update of the gamma shape.

    The start is the method-of-moments fit of the first ``floor(n**delta)``
    observations; the update uses the full sample and the information
    ``trigamma(alpha_bar)``. The rate follows as ``alpha / mean(X)`` unless a
    known ``rate`` is supplied.
    """
    alpha, eta = gamma_one_step_rows(_values(sample), cfg, rate)
    return GammaParams(float(alpha[0]), float(eta[0]))


def _mleq_newton(alpha, s, tol=1e-13, max_iter=200):
    """Solve ``ln a - psi(a) = s`` per row by safeguarded Newton.

    The left side is convex and decreasing in ``a``, so Newton steps taken
    from below the root approach it monotonically; a step that would leave
    the positive axis is replaced by halving.
    """
    a = np.array(alpha, dtype=float)
    for _ in range(max_iter):
        g = np.log(a) - digamma(a) - s
        dg = 1.0 / a - trigamma(a)
        step = g / dg
        nxt = a - step
        nxt = np.where(nxt > 0, nxt, 0.5 * a)
        done = np.abs(nxt - a) <= tol * a
        a = nxt
        if np.all(done):
            return a
    raise StepFailureError("Newton iteration on the gamma likelihood equation did not converge")


def gamma_multistep_rows(values, cfg=OneStepConfig()):
    arr = _rows(values)
    mean = arr.mean(axis=1)
    s = np.log(mean) - np.log(arr).mean(axis=1)
    if np.any(s <= 0):
        raise DegenerateFitError("gamma fit is degenerate: constant sample")
    alpha, _ = gamma_one_step_rows(arr, cfg)
    alpha = _mleq_newton(alpha, s)
    return alpha, alpha / mean


def gamma_multistep_mle(sample, cfg=OneStepConfig()):
    """Continue the one-step process until the likelihood equation holds.

    The one-step estimate seeds a Newton iteration on
    ``sum ln(eta X_j) - n psi(alpha) = 0`` with ``eta = alpha / mean(X)``;
    the result is the full maximum likelihood estimate. Unlike the single
    step, it does not depend on how representative the leading prefix is.
    """
    alpha, eta = gamma_multistep_rows(_values(sample), cfg)
    return GammaParams(float(alpha[0]), float(eta[0]))


# -- sampling --------------------------------------------------------------

def _standard_gamma(shape, n, rng):
    """Marsaglia-Tsang squeeze/rejection draws of Gamma(shape, 1)."""
    if shape < 1.0:
        # boost: G(a) = G(a + 1) * U**(1/a)
        g = _standard_gamma(shape + 1.0, n, rng)
        u = rng.random(n)
        return g * u ** (1.0 / shape)
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    out = np.empty(n)
    todo = np.arange(n)
    while todo.size:
        k = todo.size
        z = rng.standard_normal(k)
        u = rng.random(k)
        v = (1.0 + c * z) ** 3
        ok = v > 0
        vs = np.where(ok, v, 1.0)
        accept = ok & ((u < 1.0 - 0.0331 * z ** 4)
                       | (np.log(u) < 0.5 * z * z + d * (1.0 - vs + np.log(vs))))
        out[todo[accept]] = d * vs[accept]
        todo = todo[~accept]
    return out


def sample_gamma(p, n, rng):
    if n < 1:
        raise DomainError("sample size must be at least 1")
    return _standard_gamma(p.alpha, n, rng) / p.eta


def sample_lognormal(p, n, rng):
    if n < 1:
        raise DomainError("sample size must be at least 1")
    return np.exp(p.mu + p.sigma * rng.standard_normal(n))


def sample_mixture(dgp, n, rng):
    """Each observation comes from the gamma component with probability ``pi``."""
    if n < 1:
        raise DomainError("sample size must be at least 1")
    from_gamma = rng.random(n) < dgp.pi
    k = int(from_gamma.sum())
    out = np.empty(n)
    if k:
        out[from_gamma] = sample_gamma(dgp.gamma, k, rng)
    if n - k:
        out[~from_gamma] = sample_lognormal(dgp.lognormal, n - k, rng)
    return out


# -- calibration used throughout the simulations ---------------------------

BALL_BEARING_GAMMA = GammaParams(4.02804, 0.05576722)
BALL_BEARING_LOGNORMAL = LogNormalParams(4.150614, 0.5214847)
