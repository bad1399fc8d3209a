import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bregsel.density import DensityEstimate, Sample, Variant, cv_bandwidth
from bregsel.divergence import (BregmanGenerator, ResampledKDE, StackedKDE, TruncationPolicy,
                                bregman_pointwise, divergence_estimate, divergence_exact, phi,
                                specialized_beta3_estimate, specialized_beta3_exact,
                                truncation_segments)
from bregsel.errors import DegenerateEstimateError, DomainError
from bregsel.parametric import (BALL_BEARING_GAMMA, BALL_BEARING_LOGNORMAL, GammaParams,
                                LogNormalParams, gamma_multistep_mle, lognormal_mle)
from bregsel.quadrature import QuadratureSpec, adaptive_simpson

CUBIC = BregmanGenerator(3.0)
WINDOW = QuadratureSpec(0.0, 600.0)


def trapezoid_oracle(integrand, lower=0.0, upper=600.0, points=10 ** 6 + 1):
    x = np.linspace(lower, upper, points)
    return np.trapezoid(integrand(x), x) if hasattr(np, "trapezoid") else np.trapz(integrand(x), x)


# -- generator -------------------------------------------------------------

def test_phi_examples():
    assert phi(CUBIC, 2.0) == pytest.approx(8.0 / 6.0, rel=1e-15)
    assert phi(BregmanGenerator(1.0), 1.0) == 0.0
    assert phi(BregmanGenerator(0.0), math.e) == pytest.approx(-1.0, rel=1e-15)


def test_pointwise_examples():
    for gen in (CUBIC, BregmanGenerator(0.0), BregmanGenerator(1.0, 2.0, 1.0, -3.0)):
        assert bregman_pointwise(gen, 0.7, 0.7) == 0.0
    assert bregman_pointwise(CUBIC, 2.0, 1.0) == pytest.approx(2.0 / 3.0, rel=1e-15)
    # phi(t) = c1 t^2 / 2: c1 = 2 is the plain squared distance
    assert bregman_pointwise(BregmanGenerator(2.0, 2.0), 3.0, 1.0) == pytest.approx(4.0)
    assert bregman_pointwise(BregmanGenerator(2.0), 3.0, 1.0) == pytest.approx(2.0)


@pytest.mark.parametrize("p, q", [(0.0, 1.0), (1.0, -1.0), (np.nan, 1.0)])
def test_pointwise_domain(p, q):
    with pytest.raises(DomainError):
        bregman_pointwise(CUBIC, p, q)


def test_phi_domain():
    with pytest.raises(DomainError):
        phi(CUBIC, 0.0)


@pytest.mark.parametrize("kwargs", [dict(beta=2.0, c1=0.0), dict(beta=2.0, c1=-1.0),
                                    dict(beta=np.inf), dict(beta=1.0, c2=np.nan)])
def test_generator_validation(kwargs):
    with pytest.raises(DomainError):
        BregmanGenerator(**kwargs)


def test_phi_strictly_convex_on_grid():
    t = np.geomspace(1e-6, 1e6, 500)
    for beta in (-1.5, 0.0, 0.5, 1.0, 2.0, 3.0, 4.5):
        assert np.all(BregmanGenerator(beta, 0.3).phi_second(t) > 0)


def test_phi_prime_matches_numerical_derivative():
    t = np.linspace(0.2, 5.0, 50)
    eps = 1e-6
    for beta in (0.0, 1.0, 2.0, 3.0, -0.5):
        gen = BregmanGenerator(beta, 1.3, 0.4, 2.0)
        num = (gen.phi(t + eps) - gen.phi(t - eps)) / (2 * eps)
        np.testing.assert_allclose(gen.phi_prime(t), num, rtol=1e-7, atol=1e-8)


def test_nonnegativity_and_reflexivity():
    rng = np.random.default_rng(2024)
    m = 10 ** 4
    p = rng.uniform(0.0, 10.0, m)
    q = rng.uniform(0.0, 10.0, m)
    p[p == 0], q[q == 0] = 10.0, 10.0
    beta = rng.uniform(-2.0, 4.0, m)
    beta[::4] = rng.choice([0.0, 1.0, 2.0, 3.0], beta[::4].size)
    c1 = rng.uniform(0.01, 5.0, m)
    c2 = rng.normal(size=m)
    c3 = rng.normal(size=m)
    for i in range(m):
        gen = BregmanGenerator(beta[i], c1[i], c2[i], c3[i])
        d = bregman_pointwise(gen, p[i], q[i])
        assert d >= -1e-12 * max(1.0, abs(gen.phi(p[i])))
        assert d > 0
        assert abs(bregman_pointwise(gen, p[i], p[i])) <= 1e-12


@settings(max_examples=300, deadline=None)
@given(st.floats(0.01, 10), st.floats(0.01, 10), st.sampled_from([0.0, 1.0, 2.0, 2.5, 3.0]),
       st.floats(-5, 5), st.floats(-5, 5))
def test_affine_part_cancels(p, q, beta, c2, c3):
    base = bregman_pointwise(BregmanGenerator(beta), p, q)
    shifted = bregman_pointwise(BregmanGenerator(beta, 1.0, c2, c3), p, q)
    assert shifted == pytest.approx(base, abs=1e-12 * max(1.0, abs(c2) * 10 + abs(c3)))


@settings(max_examples=500, deadline=None)
@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3), st.floats(1e-3, 1e3),
       st.sampled_from([0.0, 1.0, 2.0]))
def test_homogeneity(p, q, k, beta):
    gen = BregmanGenerator(beta)
    base = bregman_pointwise(gen, p, q)
    scaled = bregman_pointwise(gen, k * p, k * q)
    # relative to the size of the terms that cancel inside the divergence
    scale = (abs(gen.phi(p)) + abs(gen.phi(q)) + abs((p - q) * gen.phi_prime(q)) + 1e-300) * k ** beta
    assert abs(scaled - k ** beta * base) <= 1e-10 * max(abs(k ** beta * base), 1e-2 * scale)


def test_homogeneity_relative_on_separated_pairs():
    rng = np.random.default_rng(5)
    for beta in (0.0, 1.0, 2.0):
        gen = BregmanGenerator(beta)
        p, q = rng.uniform(0.1, 10, 2000), rng.uniform(0.1, 10, 2000)
        keep = np.abs(p - q) > 0.05
        p, q = p[keep], q[keep]
        k = rng.uniform(0.05, 20, p.size)
        np.testing.assert_allclose(gen.pointwise(k * p, k * q), k ** beta * gen.pointwise(p, q),
                                   rtol=1e-10)


def test_truncation_policy():
    pol = TruncationPolicy()
    assert pol.gamma_n(23) == pytest.approx(0.01 / 23)
    assert pol.gamma_n(10 ** 9) < pol.gamma_n(10) and pol.gamma_n(10 ** 9) > 0
    with pytest.raises(DomainError):
        TruncationPolicy(0.0)


# -- exact divergences -----------------------------------------------------

def test_exact_self_divergence_is_zero():
    g = BALL_BEARING_GAMMA
    assert abs(divergence_exact(CUBIC, g.pdf, g.pdf, WINDOW)) <= 1e-10


def test_exact_against_trapezoid_oracle():
    f, g = BALL_BEARING_GAMMA, BALL_BEARING_LOGNORMAL
    oracle = trapezoid_oracle(lambda x: CUBIC.pointwise(np.maximum(f.pdf(x), 1e-300),
                                                        np.maximum(g.pdf(x), 1e-300)))
    assert divergence_exact(CUBIC, f.pdf, g.pdf, WINDOW) == pytest.approx(oracle, abs=1e-8)


def test_exact_kl_branch_against_oracle():
    f, g = BALL_BEARING_GAMMA, BALL_BEARING_LOGNORMAL

    def kl(x):
        fx, gx = f.pdf(x), g.pdf(x)
        ok = (fx > 1e-300) & (gx > 1e-300)
        fx, gx = np.where(ok, fx, 1.0), np.where(ok, gx, 1.0)
        return np.where(ok, fx * np.log(fx / gx) - fx + gx, 0.0)

    val = divergence_exact(BregmanGenerator(1.0), f.pdf, g.pdf, WINDOW)
    assert val == pytest.approx(trapezoid_oracle(kl), abs=1e-8)


def random_pairs(count, seed):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        a = GammaParams(rng.uniform(1.5, 8.0), rng.uniform(0.03, 0.2))
        b = LogNormalParams(rng.uniform(3.0, 4.5), rng.uniform(0.25, 0.8))
        c = GammaParams(rng.uniform(1.5, 8.0), rng.uniform(0.03, 0.2))
        out.append(rng.permutation([a, b, c])[:2])
    return out


def test_specialized_equals_generic_on_random_pairs():
    for f, g in random_pairs(50, 11):
        generic = divergence_exact(CUBIC, f.pdf, g.pdf, WINDOW)
        special = specialized_beta3_exact(f.pdf, g.pdf, WINDOW)
        assert abs(generic - special) <= 1e-10


CLOSED_FORMS = {
    0.0: lambda f, g: f / g - np.log(f / g) - 1.0,
    1.0: lambda f, g: f * np.log(f / g) - f + g,
    2.0: lambda f, g: 0.5 * (f - g) ** 2,
}


def closed_form_integrand(form, f, g):
    def integrand(x):
        fx, gx = f(x), g(x)
        ok = (fx >= 1e-300) & (gx >= 1e-300)
        return np.where(ok, form(np.where(ok, fx, 1.0), np.where(ok, gx, 1.0)), 0.0)
    return integrand


def cosine_sum(rng):
    amp, freq, shift = rng.uniform(0.1, 0.8, 3), rng.integers(1, 6, 3), rng.uniform(0, 6, 3)
    amp *= 0.8 / amp.sum()

    def f(x):
        x = np.asarray(x, float)
        terms = amp * np.cos(np.pi * np.multiply.outer(x, freq) + shift)
        return 1.0 + terms.sum(axis=-1)
    return f


def random_positive_functions(count, seed):
    # smooth pairs bounded in [0.2, 1.8] on [0, 1]
    rng = np.random.default_rng(seed)
    return [(cosine_sum(rng), cosine_sum(rng)) for _ in range(count)]


@pytest.mark.parametrize("beta", sorted(CLOSED_FORMS))
def test_branch_specializations_on_positive_pairs(beta):
    gen = BregmanGenerator(beta)
    window = QuadratureSpec(0.0, 1.0)
    for f, g in random_positive_functions(20, 3):
        oracle = adaptive_simpson(closed_form_integrand(CLOSED_FORMS[beta], f, g), window)
        assert divergence_exact(gen, f, g, window) == pytest.approx(oracle, abs=1e-8)


@pytest.mark.parametrize("beta", [1.0, 2.0])
def test_branch_specializations_on_density_pairs(beta):
    # Itakura-Saito is left out: its integrand f/g explodes in the tails of
    # these pairs, beyond what an absolute tolerance can resolve
    gen = BregmanGenerator(beta)
    for f, g in random_pairs(10, 3):
        oracle = adaptive_simpson(closed_form_integrand(CLOSED_FORMS[beta], f.pdf, g.pdf), WINDOW)
        assert divergence_exact(gen, f.pdf, g.pdf, WINDOW) == pytest.approx(oracle, abs=1e-8)


# -- truncated estimates ---------------------------------------------------

def bearing_estimate(bearings, h=None):
    h = cv_bandwidth(bearings) if h is None else h
    return DensityEstimate(bearings, h, variant=Variant.BIAS_REDUCED)


def test_estimate_specialized_matches_generic(bearings):
    est = bearing_estimate(bearings)
    model = gamma_multistep_mle(bearings)
    quad = QuadratureSpec(0.0, 800.0)
    generic = divergence_estimate(CUBIC, est, model.pdf, quad=quad)
    special = specialized_beta3_estimate(est, model.pdf, quad=quad)
    assert abs(generic - special) <= 1e-10
    assert generic > 0


def test_estimate_rejects_ordinary_variant(bearings):
    est = DensityEstimate(bearings, 10.0)
    with pytest.raises(DomainError):
        divergence_estimate(CUBIC, est, BALL_BEARING_GAMMA.pdf)


def test_estimate_empty_truncation_set(bearings):
    est = bearing_estimate(bearings)
    with pytest.raises(DegenerateEstimateError):
        divergence_estimate(CUBIC, est, BALL_BEARING_GAMMA.pdf, TruncationPolicy(1e6))


def test_estimate_truncation_matches_brute_force_masking(bearings):
    # with a narrow bandwidth the estimate dips below gamma_n between clusters
    est = bearing_estimate(bearings, 3.0)
    model = lognormal_mle(bearings)
    gamma_n = TruncationPolicy().gamma_n(bearings.n)
    x = np.linspace(0.0, 800.0, 4_000_001)
    vals = np.empty_like(x)
    for i in range(0, x.size, 200_000):
        xc = x[i:i + 200_000]
        fb, g = est(xc), model.pdf(xc)
        keep = (fb >= gamma_n) & (g >= 1e-300)
        vals[i:i + 200_000] = np.where(
            keep, CUBIC.pointwise(np.where(keep, fb, 1.0), np.where(keep, g, 1.0)), 0.0)
    oracle = np.trapezoid(vals, x) if hasattr(np, "trapezoid") else np.trapz(vals, x)
    val = divergence_estimate(CUBIC, est, model.pdf, quad=QuadratureSpec(0.0, 800.0))
    # quadrature runs at abs_tol 1e-10; the trapezoid error is far smaller
    assert val == pytest.approx(oracle, abs=2e-10)


def test_self_consistency_large_sample():
    g = BALL_BEARING_GAMMA
    s = Sample(g.sample(5000, np.random.default_rng(8)))
    est = DensityEstimate(s, cv_bandwidth(s), variant=Variant.BIAS_REDUCED)
    assert 0 <= divergence_estimate(CUBIC, est, g.pdf, quad=QuadratureSpec(0.0, 700.0)) <= 1e-5


def test_consistency_trend():
    g = BALL_BEARING_GAMMA
    medians = []
    for n in (100, 400, 1600):
        vals = []
        for seed in range(20):
            s = Sample(g.sample(n, np.random.default_rng([n, seed])))
            est = DensityEstimate(s, cv_bandwidth(s), variant=Variant.BIAS_REDUCED)
            vals.append(divergence_estimate(CUBIC, est, g.pdf, quad=QuadratureSpec(0.0, 700.0)))
        medians.append(np.median(vals))
    assert medians[0] >= medians[1] >= medians[2]


def test_segments_have_constant_indicator(bearings):
    h = 3.0
    rng = np.random.default_rng(0)
    weights = np.stack([np.bincount(rng.integers(0, bearings.n, bearings.n),
                                    minlength=bearings.n) for _ in range(20)], axis=1)
    kde = ResampledKDE(bearings.values, h, weights)
    thr = 0.01 / bearings.n
    segs = truncation_segments(kde, thr, 0.0, 800.0)
    for a, b in segs:
        xs = np.linspace(a, b, 400)
        inside = kde.level(xs) >= thr
        assert np.all(inside == inside[:1])
    covered = np.sum(segs[:, 1] - segs[:, 0])
    assert 800.0 - covered < 1e-6 * len(segs)


def test_stacked_and_resampled_agree(bearings):
    rng = np.random.default_rng(1)
    idx = rng.integers(0, bearings.n, size=(4, bearings.n))
    weights = np.zeros((bearings.n, 4))
    np.add.at(weights, (idx, np.arange(4)[:, None]), 1.0)
    a = ResampledKDE(bearings.values, 9.0, weights)
    b = StackedKDE(bearings.values[idx], 9.0)
    x = np.linspace(0, 250, 301)
    np.testing.assert_allclose(a.level(x), b.level(x), atol=1e-15)
    np.testing.assert_allclose(a.slope(x), b.slope(x), atol=1e-16)
    cols = np.array([0, 3, 1])
    np.testing.assert_allclose(a.level_at(x[:3], cols), b.level_at(x[:3], cols), atol=1e-15)
