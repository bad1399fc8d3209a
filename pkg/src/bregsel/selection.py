"""Pairwise model selection and goodness of fit with Bregman divergences.

Two fitted candidates are compared through the statistic

    U = sqrt(n) * (D_a - D_b) / kappa,

where ``D_a, D_b`` are truncated plug-in divergences from the bias-reduced
density estimate to each candidate and ``kappa`` is a bootstrap estimate of
the standard deviation of ``sqrt(n) * (D_a - D_b)``. Smaller divergence means
a closer model, so large negative ``U`` favours candidate A.
"""

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special as sps

from .density import Sample, cv_bandwidth, default_grid
from .divergence import (BregmanGenerator, ResampledKDE, StackedKDE, TruncationPolicy,
                         truncated_estimates)
from .errors import DegenerateVarianceError, DomainError
from .parametric import (GammaParams, LogNormalParams, gamma_multistep_rows,
                         gamma_one_step_rows, gamma_pdf_array, lognormal_mle_rows,
                         lognormal_pdf_array, sample_gamma, sample_lognormal)
from .quadrature import QuadratureSpec


# -- candidate families ----------------------------------------------------

@dataclass(frozen=True)
class Family:
    """A parametric family together with the estimator used to fit it.

    ``fit_rows`` maps an array of shape ``(B, n)`` to a tuple of parameter
    vectors; ``pdf`` evaluates the density with numpy broadcasting against
    those vectors; ``make`` builds the scalar parameter object.
    """

    name: str
    method: str
    fit_rows: object
    pdf: object
    make: object
    draw: object

    def fit(self, values):
        return self.make(*(float(p[0]) for p in self.fit_rows(np.asarray(values, float))))

    def unpack(self, model):
        return tuple(np.atleast_1d(float(v)) for v in model.as_dict().values())


def _gamma_draw(model, size, rng):
    return sample_gamma(model, int(np.prod(size)), rng).reshape(size)


def _lognormal_draw(model, size, rng):
    return sample_lognormal(model, int(np.prod(size)), rng).reshape(size)


GAMMA = Family("gamma", "one-step MLE process (scoring step, then Newton to the MLE)",
               gamma_multistep_rows, gamma_pdf_array, GammaParams, _gamma_draw)
GAMMA_ONE_STEP = Family("gamma-onestep", "single scoring step",
                        gamma_one_step_rows, gamma_pdf_array, GammaParams, _gamma_draw)
LOGNORMAL = Family("lognormal", "closed-form MLE",
                   lognormal_mle_rows, lognormal_pdf_array, LogNormalParams, _lognormal_draw)

FAMILIES = {f.name: f for f in (GAMMA, GAMMA_ONE_STEP, LOGNORMAL)}


def get_family(name):
    if isinstance(name, Family):
        return name
    try:
        return FAMILIES[name]
    except KeyError:
        raise DomainError(f"unknown family {name!r}; choose from {sorted(FAMILIES)}") from None


def fixed_family(model, name=None):
    """A 'family' whose fit ignores the data and returns ``model``.

    Useful for comparing pre-specified densities, where refitting inside the
    bootstrap would change what is being compared.
    """
    base = get_family(model.family)
    values = tuple(model.as_dict().values())

    def fit_rows(arr):
        rows = np.atleast_2d(arr).shape[0]
        return tuple(np.full(rows, v) for v in values)

    return Family(name or f"fixed-{base.name}", "fixed", fit_rows, base.pdf,
                  base.make, base.draw)


# -- settings and results --------------------------------------------------

@dataclass(frozen=True)
class SelectionSettings:
    """Numerical settings shared by the selection and goodness-of-fit tests.

    The cross-validation grid has ``grid_size`` log-spaced points from
    ``grid_lo`` to ``grid_hi`` times ``sd * n**(-1/5)`` unless an explicit
    ``grid`` is given. The integration
    window is ``[0, q + 10 h]`` with ``q`` the largest of the candidates'
    ``1 - tail`` quantiles and the sample maximum.
    """

    truncation: TruncationPolicy = field(default_factory=TruncationPolicy)
    grid: tuple = None
    grid_lo: float = 0.05
    grid_hi: float = 5.0
    grid_size: int = 60
    abs_tol: float = 1e-10
    max_depth: int = 40
    initial_panels: int = 64
    tail: float = 1e-5

    def __post_init__(self):
        if not 0 < self.tail < 0.5:
            raise DomainError("tail probability must lie in (0, 0.5)")

    def quadrature(self, upper):
        return QuadratureSpec(0.0, upper, abs_tol=self.abs_tol, max_depth=self.max_depth,
                              initial_panels=self.initial_panels)


def estimation_window(models, bandwidth, data, settings=SelectionSettings()):
    q = max([m.quantile(1.0 - settings.tail) for m in models] + [float(np.max(data))])
    return settings.quadrature(q + 10.0 * bandwidth)


class Decision(enum.Enum):
    PREFER_A = "prefer_a"
    PREFER_B = "prefer_b"
    INDECISIVE = "indecisive"

    def swapped(self):
        return {Decision.PREFER_A: Decision.PREFER_B,
                Decision.PREFER_B: Decision.PREFER_A}.get(self, self)


def critical_value(level):
    if not 0 < level < 1:
        raise DomainError(f"level must lie in (0, 1), got {level}")
    return float(sps.ndtri(1.0 - level / 2.0))


def decide(u, level=0.05):
    z = critical_value(level)
    if u < -z:
        return Decision.PREFER_A
    if u > z:
        return Decision.PREFER_B
    return Decision.INDECISIVE


@dataclass(frozen=True)
class CandidatePair:
    sample: Sample
    family_a: Family
    family_b: Family
    model_a: object
    model_b: object
    generator: BregmanGenerator
    bandwidth: float
    settings: SelectionSettings = field(default_factory=SelectionSettings)

    @property
    def quad(self):
        return estimation_window((self.model_a, self.model_b), self.bandwidth,
                                 self.sample.values, self.settings)

    def swapped(self):
        return CandidatePair(self.sample, self.family_b, self.family_a, self.model_b,
                             self.model_a, self.generator, self.bandwidth, self.settings)


@dataclass(frozen=True)
class SelectionResult:
    d_a: float
    d_b: float
    kappa_hat: float
    u: float
    decision: Decision
    level: float
    n: int
    degenerate: bool = False


@dataclass(frozen=True)
class PowerSpec:
    t_alpha: float
    lambda_phi: float
    d_true: float
    n: int

    def __post_init__(self):
        if not self.lambda_phi > 0:
            raise DomainError("lambda_phi must be positive")
        if self.n < 1:
            raise DomainError("n must be at least 1")
        if self.d_true < 0:
            raise DomainError("d_true must be nonnegative")


@dataclass(frozen=True)
class GofResult:
    t_obs: float
    p_value: float
    model: object
    bandwidth: float
    null_statistics: np.ndarray


# -- operations ------------------------------------------------------------

def _bandwidth(sample, settings):
    if settings.grid is None:
        grid = default_grid(sample, settings.grid_size, settings.grid_lo, settings.grid_hi)
    else:
        grid = settings.grid
    return cv_bandwidth(sample, grid)


def fit_pair(sample, families=("gamma", "lognormal"), generator=None,
             settings=SelectionSettings(), bandwidth=None):
    """Fit both candidates and choose the cross-validated bandwidth.

    The density estimate used by the divergences is always the bias-reduced
    variant; ``bandwidth`` overrides cross-validation when given.
    """
    if not isinstance(sample, Sample):
        sample = Sample(sample)
    fam_a, fam_b = (get_family(f) for f in families)
    gen = generator if generator is not None else BregmanGenerator(3.0)
    model_a = fam_a.fit(sample.values)
    model_b = fam_b.fit(sample.values)
    h = _bandwidth(sample, settings) if bandwidth is None else float(bandwidth)
    return CandidatePair(sample, fam_a, fam_b, model_a, model_b, gen, h, settings)


def _pair_pdfs(fam_a, params_a, fam_b, params_b):
    pa = [p[None, :] for p in params_a]
    pb = [p[None, :] for p in params_b]

    def pdfs(x):
        x = np.asarray(x, float)[:, None]
        return np.stack([fam_a.pdf(x, *pa), fam_b.pdf(x, *pb)], axis=1)

    return pdfs


def _pair_estimates(pair, data, weights, params_a, params_b):
    kde = ResampledKDE(data, pair.bandwidth, weights)
    pdfs = _pair_pdfs(pair.family_a, params_a, pair.family_b, params_b)
    n = data.size
    return truncated_estimates(pair.generator.pointwise, kde, pdfs,
                               pair.settings.truncation.gamma_n(n), pair.quad)


def pair_divergences(pair):
    """``(d_a, d_b)`` on the sample the pair was fitted to."""
    data = pair.sample.values
    est = _pair_estimates(pair, data, np.ones((data.size, 1)),
                          pair.family_a.unpack(pair.model_a),
                          pair.family_b.unpack(pair.model_b))
    return float(est[0, 0]), float(est[1, 0])


def _resample(data, B, rng):
    n = data.size
    idx = rng.integers(0, n, size=(B, n))
    weights = np.zeros((n, B))
    np.add.at(weights, (idx, np.arange(B)[:, None]), 1.0)
    return data[idx], weights


def bootstrap_differences(sample, pair, B, rng):
    """``sqrt(n) * (D_a* - D_b*)`` for ``B`` nonparametric resamples.

    Each resample refits both candidates (in resample order, which matters
    to prefix-based estimators) and reuses the pair's bandwidth.
    """
    if B < 2:
        raise DomainError("need at least 2 bootstrap resamples")
    data = sample.values
    values, weights = _resample(data, B, rng)
    est = _pair_estimates(pair, data, weights,
                          pair.family_a.fit_rows(values), pair.family_b.fit_rows(values))
    return math.sqrt(data.size) * (est[0] - est[1])


def kappa_bootstrap(sample, pair, B=200, rng=None):
    """Bootstrap standard deviation of ``sqrt(n) * (D_a - D_b)``."""
    if B < 50:
        raise DomainError(f"kappa bootstrap needs B >= 50, got {B}")
    rng = np.random.default_rng(rng)
    diffs = bootstrap_differences(sample, pair, B, rng)
    if np.all(diffs == diffs[0]):
        raise DegenerateVarianceError("all bootstrap differences are identical")
    return float(np.std(diffs, ddof=1))


def u_statistic(sample, pair, B=200, rng=None, level=0.05):
    """Divergences, ``kappa``, ``U`` and the three-way decision.

    A degenerate bootstrap (no spread at all) yields ``U = 0`` and an
    indecisive result with ``degenerate=True``.
    """
    critical_value(level)
    d_a, d_b = pair_divergences(pair)
    n = sample.n
    try:
        kappa = kappa_bootstrap(sample, pair, B, rng)
    except DegenerateVarianceError:
        return SelectionResult(d_a, d_b, 0.0, 0.0, Decision.INDECISIVE, level, n, True)
    u = math.sqrt(n) * (d_a - d_b) / kappa
    return SelectionResult(d_a, d_b, kappa, u, decide(u, level), level, n)


def select(sample, families=("gamma", "lognormal"), generator=None, B=200, rng=None,
           level=0.05, settings=SelectionSettings()):
    """Convenience wrapper: fit the pair, then run the U test."""
    if not isinstance(sample, Sample):
        sample = Sample(sample)
    pair = fit_pair(sample, families, generator, settings)
    return pair, u_statistic(sample, pair, B, rng, level)


def _single_estimates(family, generator, kde, params, threshold, quad):
    p = [v[None, :] for v in params]

    def pdfs(x):
        return family.pdf(np.asarray(x, float)[:, None], *p)[:, None, :]

    return truncated_estimates(generator.pointwise, kde, pdfs, threshold, quad)[0]


def gof_statistic(sample, family="gamma", generator=None, settings=SelectionSettings(),
                  M=500, rng=None, bandwidth=None):
    """``T = 2 n D`` against a fitted family, with a parametric-bootstrap p-value.

    The null draws ``M`` samples of size ``n`` from the fitted model, refits
    each and recomputes ``T`` with the original bandwidth;
    ``p = (1 + #{T* >= T}) / (M + 1)``.
    """
    if M < 1:
        raise DomainError(f"need at least one null replicate, got M={M}")
    if not isinstance(sample, Sample):
        sample = Sample(sample)
    fam = get_family(family)
    gen = generator if generator is not None else BregmanGenerator(3.0)
    rng = np.random.default_rng(rng)
    data = sample.values
    n = data.size
    model = fam.fit(data)
    h = _bandwidth(sample, settings) if bandwidth is None else float(bandwidth)
    threshold = settings.truncation.gamma_n(n)

    null = fam.draw(model, (M, n), rng)
    quad = estimation_window((model,), h, np.concatenate([data, null.ravel()]), settings)
    d_obs = _single_estimates(fam, gen, ResampledKDE(data, h, np.ones((n, 1))),
                              fam.unpack(model), threshold, quad)[0]
    d_null = _single_estimates(fam, gen, StackedKDE(null, h), fam.fit_rows(null),
                               threshold, quad)
    t_obs = 2.0 * n * float(d_obs)
    t_null = 2.0 * n * d_null
    p = (1.0 + np.count_nonzero(t_null >= t_obs)) / (M + 1.0)
    return GofResult(t_obs, float(p), model, h, t_null)


def power_estimate(spec):
    """Normal approximation ``1 - Phi((t - 2 n d) / (2 sqrt(n) lambda))``."""
    z = (spec.t_alpha - 2.0 * spec.n * spec.d_true) / (2.0 * math.sqrt(spec.n) * spec.lambda_phi)
    return float(sps.ndtr(-z))


def power_inputs(sample, family="gamma", generator=None, settings=SelectionSettings(),
                 M=500, B=200, level=0.05, rng=None):
    """Plug-in ``(t_alpha, lambda_phi)`` for :func:`power_estimate`.

    ``t_alpha`` is the ``1 - level`` quantile of the parametric-bootstrap
    null of ``T``; ``lambda_phi`` is the nonparametric-bootstrap standard
    deviation of ``sqrt(n) * D``.
    """
    if not isinstance(sample, Sample):
        sample = Sample(sample)
    rng = np.random.default_rng(rng)
    fam = get_family(family)
    gen = generator if generator is not None else BregmanGenerator(3.0)
    gof = gof_statistic(sample, fam, gen, settings, M, rng)
    t_alpha = float(np.quantile(gof.null_statistics, 1.0 - level))
    data = sample.values
    n = data.size
    values, weights = _resample(data, B, rng)
    quad = estimation_window((gof.model,), gof.bandwidth, data, settings)
    d = _single_estimates(fam, gen, ResampledKDE(data, gof.bandwidth, weights),
                          fam.fit_rows(values), settings.truncation.gamma_n(n), quad)
    return t_alpha, float(np.std(math.sqrt(n) * d, ddof=1)), gof
