import numpy as np
import pytest

from poecal.core import DomainError, Exponents, stream
from poecal.experts import (
    GaussianExpert,
    MixtureExpert,
    ProductPrior,
    analytic_product,
    effective_noise,
)


def random_gaussian(rng, d):
    return GaussianExpert(rng.normal(size=d), rng.uniform(0.3, 2.0, d))


def random_mixture(rng, d, k=2):
    w = rng.uniform(0.2, 1.0, k)
    return MixtureExpert(w / w.sum(), rng.normal(size=(k, d)), rng.uniform(0.3, 2.0, (k, d)))


def fd_score(model, x, sigma, h=1e-5):
    g = np.zeros_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (model.logpdf(xp, sigma) - model.logpdf(xm, sigma)) / (2 * h)
    return g


class TestExpertScore:
    def test_gaussian_score_at_mode(self):
        e = GaussianExpert(np.zeros(3), np.ones(3))
        assert np.array_equal(e.score(np.zeros(3), 0.0), np.zeros(3))

    def test_gaussian_score_shifted(self):
        e = GaussianExpert(np.ones(4), np.ones(4))
        np.testing.assert_allclose(e.score(np.zeros(4), 1.0), np.full(4, 0.5))

    @pytest.mark.parametrize("sigma", [0.0, 0.3, 2.0])
    def test_score_matches_finite_difference(self, sigma):
        rng = stream(11, "fd", int(sigma * 10))
        for model in (random_gaussian(rng, 4), random_mixture(rng, 4)):
            x = rng.normal(size=4)
            np.testing.assert_allclose(
                model.score(x, sigma), fd_score(model, x, sigma), rtol=1e-5, atol=1e-7
            )

    def test_mixture_1d_finite_difference(self):
        rng = stream(3, "mix1d")
        mix = random_mixture(rng, 1, k=2)
        x = rng.normal(size=1)
        np.testing.assert_allclose(mix.score(x, 0.7), fd_score(mix, x, 0.7), rtol=1e-5)

    def test_batched_score(self):
        rng = stream(5, "batch")
        mix = random_mixture(rng, 3)
        xs = rng.normal(size=(6, 3))
        batched = mix.score(xs, 0.5)
        for i in range(6):
            np.testing.assert_allclose(batched[i], mix.score(xs[i], 0.5))


class TestScoreJvp:
    @pytest.mark.parametrize("sigma", [0.1, 1.0])
    def test_jvp_matches_directional_difference(self, sigma):
        rng = stream(17, "jvp", int(sigma * 10))
        for model in (random_gaussian(rng, 5), random_mixture(rng, 5, 3)):
            x = rng.normal(size=5)
            eps = rng.normal(size=5)
            h = 1e-6
            fd = (model.score(x + h * eps, sigma) - model.score(x - h * eps, sigma)) / (2 * h)
            np.testing.assert_allclose(model.score_jvp(x, sigma, eps), fd, rtol=1e-4, atol=1e-6)


class TestProductScore:
    def test_degenerate_weights(self):
        rng = stream(23, "deg")
        e1, e2 = random_gaussian(rng, 4), random_gaussian(rng, 4)
        prior = ProductPrior((e1, e2), Exponents([1.0, 0.0]))
        x = rng.normal(size=4)
        np.testing.assert_array_equal(prior.score(x, 0.4), 1.0 * e1.score(x, 0.4) + 0.0 * e2.score(x, 0.4))

    def test_two_unit_gaussians(self):
        e1 = GaussianExpert([0.0], [1.0])
        e2 = GaussianExpert([1.0], [1.0])
        prior = ProductPrior((e1, e2), Exponents([1.0, 1.0]))
        assert prior.score(np.zeros(1), 0.0)[0] == pytest.approx(1.0)

    def test_identical_experts_convexity(self):
        rng = stream(29, "conv")
        e = random_gaussian(rng, 3)
        prior = ProductPrior((e, e), Exponents([0.5, 0.5]))
        x = rng.normal(size=3)
        np.testing.assert_allclose(prior.score(x, 0.2), e.score(x, 0.2))

    def test_tempering_identity(self):
        rng = stream(31, "temper")
        e = random_gaussian(rng, 3)
        for a in (0.25, 1.0, 3.0):
            prior = ProductPrior((e,), Exponents([a]))
            x = rng.normal(size=3)
            np.testing.assert_array_equal(prior.score(x, 0.3), a * e.score(x, 0.3))


class TestEffectiveNoise:
    def test_values(self):
        assert effective_noise(50.0, Exponents([1.0, 0.0])) == 50.0
        assert effective_noise(2.0, Exponents([2.0, 2.0])) == 1.0
        assert effective_noise(50.0, Exponents([0.5, 0.5])) == 50.0

    def test_domain(self):
        with pytest.raises(DomainError):
            Exponents([0.0, 0.0])


class TestDenoiserMean:
    def test_single_expert_reduces_to_tweedie(self):
        rng = stream(37, "tweedie")
        e = random_gaussian(rng, 4)
        prior = ProductPrior((e,), Exponents([1.0]))
        x = rng.normal(size=4)
        sigma = 0.8
        np.testing.assert_allclose(prior.denoiser_mean(x, sigma), x + sigma**2 * e.score(x, sigma))

    def test_equals_weighted_tweedie_average(self):
        rng = stream(41, "avg")
        e1, e2 = random_gaussian(rng, 5), random_gaussian(rng, 5)
        a = np.array([0.7, 0.4])
        prior = ProductPrior((e1, e2), Exponents(a))
        x = rng.normal(size=5)
        sigma = 1.3
        mus = np.stack([x + sigma**2 * e.score(x, sigma) for e in (e1, e2)])
        expect = (a[:, None] * mus).sum(axis=0) / a.sum()
        np.testing.assert_allclose(prior.denoiser_mean(x, sigma), expect, rtol=1e-12)

    def test_zero_score_fixed_point(self):
        e = GaussianExpert(np.zeros(3), np.ones(3))
        prior = ProductPrior((e,), Exponents([2.0]))
        x = np.zeros(3)
        np.testing.assert_array_equal(prior.denoiser_mean(x, 1.0), x)

    def test_all_equal_experts_any_exponents(self):
        rng = stream(43, "equal")
        e = random_gaussian(rng, 3)
        prior = ProductPrior((e, e, e), Exponents([0.2, 1.1, 0.4]))
        x = rng.normal(size=3)
        sigma = 0.6
        np.testing.assert_allclose(prior.denoiser_mean(x, sigma), x + sigma**2 * e.score(x, sigma))


class TestAnalyticProduct:
    def test_precision_addition(self):
        e1 = GaussianExpert([0.0, 0.0], [1.0, 1.0])
        e2 = GaussianExpert([1.0, 1.0], [1.0, 1.0])
        prod, _ = analytic_product((e1, e2), Exponents([1.0, 1.0]))
        np.testing.assert_allclose(prod.mean, [0.5, 0.5])
        np.testing.assert_allclose(prod.var, [0.5, 0.5])

    def test_degenerate_exponent_is_normalized(self):
        rng = stream(47, "norm")
        e1, e2 = random_gaussian(rng, 3), random_gaussian(rng, 3)
        prod, log_z = analytic_product((e1, e2), Exponents([1.0, 0.0]))
        np.testing.assert_allclose(prod.mean, e1.mean)
        np.testing.assert_allclose(prod.var, e1.var)
        assert log_z == pytest.approx(0.0, abs=1e-12)

    def test_log_normalizer_against_quadrature(self):
        rng = stream(53, "quad")
        e1 = GaussianExpert([rng.normal()], [rng.uniform(0.3, 1.5)])
        e2 = GaussianExpert([rng.normal()], [rng.uniform(0.3, 1.5)])
        a = Exponents([0.8, 0.6])
        _, log_z = analytic_product((e1, e2), a)
        xs = np.linspace(-30, 30, 400001)
        integrand = np.exp(a.a[0] * e1.logpdf(xs[:, None]) + a.a[1] * e2.logpdf(xs[:, None]))
        quad = np.trapezoid(integrand, xs)
        assert log_z == pytest.approx(np.log(quad), abs=1e-8)

    def test_permutation_invariance(self):
        rng = stream(59, "perm")
        e1, e2 = random_gaussian(rng, 4), random_gaussian(rng, 4)
        p1, z1 = analytic_product((e1, e2), Exponents([0.7, 0.4]))
        p2, z2 = analytic_product((e2, e1), Exponents([0.4, 0.7]))
        np.testing.assert_array_equal(p1.mean, p2.mean)
        np.testing.assert_array_equal(p1.var, p2.var)
        assert z1 == z2

    def test_nonpositive_precision_rejected(self):
        e1 = GaussianExpert([0.0], [1.0])
        e2 = GaussianExpert([0.0], [0.5])
        with pytest.raises(DomainError):
            analytic_product((e1, e2), Exponents([1.0, -2.5]))


class TestScoreDensityConsistency:
    def test_product_score_matches_density_gradient(self):
        rng = stream(61, "consistency")
        e1, e2 = random_gaussian(rng, 3), random_gaussian(rng, 3)
        a = Exponents([0.9, 0.7])
        prior = ProductPrior((e1, e2), a)
        prod, _ = analytic_product((e1, e2), a)
        x = rng.normal(size=3)
        for sigma in (0.0, 0.5):
            if sigma == 0.0:
                np.testing.assert_allclose(prior.score(x, 0.0), prod.score(x, 0.0), rtol=1e-10)
            else:
                # At sigma > 0 the product-of-noisy-scores is the mixing score,
                # not the noisy product density; check each expert instead.
                for e in (e1, e2):
                    np.testing.assert_allclose(
                        e.score(x, sigma), fd_score(e, x, sigma), rtol=1e-5, atol=1e-7
                    )
