import numpy as np
import pytest

from poecal.core import Exponents, IntegrationDivergedError, UnsupportedConfigurationError, stream
from poecal.density import DensityConfig, batch_logdensity, exact_logdensity, ode_logdensity
from poecal.experts import GaussianExpert, MixtureExpert, ProductPrior, analytic_product


def toy_gaussian(seed, d, mean_scale=1.0):
    rng = stream(seed, "density-gauss")
    return GaussianExpert(mean_scale * rng.normal(size=d), rng.uniform(0.05, 1.0, d))


class TestExactLogdensity:
    def test_standard_normal_mode(self):
        e = GaussianExpert(np.zeros(2), np.ones(2))
        assert exact_logdensity(e, np.zeros(2)) == pytest.approx(-np.log(2 * np.pi))

    def test_shifted_narrow_gaussian(self):
        e = GaussianExpert([1.0], [0.25])
        assert exact_logdensity(e, np.array([1.0])) == pytest.approx(-0.5 * np.log(2 * np.pi * 0.25))

    def test_mixture_matches_naive_loop(self):
        rng = stream(5, "naive-mix")
        mix = MixtureExpert([0.3, 0.7], rng.normal(size=(2, 3)), rng.uniform(0.2, 1.0, (2, 3)))
        x = rng.normal(size=3)
        terms = []
        for k in range(2):
            quad = sum((x[j] - mix.means[k, j]) ** 2 / mix.vars[k, j] for j in range(3))
            norm = sum(np.log(2 * np.pi * mix.vars[k, j]) for j in range(3))
            terms.append(np.log(mix.weights[k]) - 0.5 * (quad + norm))
        expect = np.logaddexp(terms[0], terms[1])
        assert exact_logdensity(mix, x) == pytest.approx(expect, rel=1e-12)

    def test_product_prior_density(self):
        rng = stream(6, "prod")
        e1, e2 = toy_gaussian(1, 3), toy_gaussian(2, 3)
        a = Exponents([0.7, 0.6])
        prior = ProductPrior((e1, e2), a)
        prod, _ = analytic_product((e1, e2), a)
        x = rng.normal(size=3)
        assert exact_logdensity(prior, x) == pytest.approx(exact_logdensity(prod, x), rel=1e-12)

    def test_unsupported(self):
        with pytest.raises(UnsupportedConfigurationError):
            exact_logdensity(object(), np.zeros(2))


class TestOdeLogdensity:
    def test_standard_normal(self):
        e = GaussianExpert(np.zeros(2), np.ones(2))
        cfg = DensityConfig(integration_steps=200, n_probes=8, probe_seed=0)
        est = ode_logdensity(e, np.zeros(2), cfg)
        assert est == pytest.approx(-np.log(2 * np.pi), abs=2e-3)

    def test_rademacher_divergence_exact_per_probe(self):
        # Diagonal Jacobian: eps^T J eps == tr J whenever eps_i^2 == 1, so the
        # estimate must equal the analytic divergence for every probe count.
        from poecal.density import _divergence, _draw_probes

        e = toy_gaussian(3, 6)
        rng = stream(9, "div")
        x = rng.normal(size=(4, 6))
        sigma = 0.7
        expected = sigma * np.sum(1.0 / (e.var + sigma**2))
        for n_probes in (1, 3, 8):
            cfg = DensityConfig(n_probes=n_probes, probe_seed=4)
            probes = np.stack([_draw_probes(cfg, i, 6) for i in range(4)])
            est = _divergence(e, x, sigma, probes)
            np.testing.assert_allclose(est, expected, rtol=1e-12)

    def test_probe_count_invariance_for_gaussians(self):
        e = toy_gaussian(4, 5)
        x = stream(10, "x").normal(size=5)
        vals = []
        for n_probes in (1, 4, 16):
            cfg = DensityConfig(integration_steps=100, n_probes=n_probes, probe_seed=7)
            vals.append(ode_logdensity(e, x, cfg))
        assert vals[0] == pytest.approx(vals[1], rel=1e-12)
        assert vals[0] == pytest.approx(vals[2], rel=1e-12)

    def test_shared_probe_contract(self):
        from poecal.density import _draw_probes

        cfg = DensityConfig(probe_seed=11)
        p1 = _draw_probes(cfg, 3, 8)
        p2 = _draw_probes(cfg, 3, 8)
        np.testing.assert_array_equal(p1, p2)
        assert not np.array_equal(p1, _draw_probes(cfg, 4, 8))

    def test_discretization_error_shrinks_with_steps(self):
        e = toy_gaussian(12, 20, mean_scale=0.3)
        rng = stream(12, "xs")
        xs = e.mean + np.sqrt(e.var) * rng.standard_normal((6, 20))
        exact = exact_logdensity(e, xs)
        errs = []
        for steps in (50, 100, 200, 400):
            cfg = DensityConfig(integration_steps=steps, n_probes=4, probe_seed=2)
            est = batch_logdensity([e], xs, cfg, "ode")[:, 0]
            errs.append(np.max(np.abs(est - exact)))
        for prev, nxt in zip(errs, errs[1:]):
            assert nxt <= prev * 1.05  # monotone within noise

    def test_diverged_error_reports_step(self):
        class ExplodingExpert:
            dim = 2

            def score(self, x, sigma):
                return np.full_like(np.asarray(x, dtype=float), 1e308)

            def score_jvp(self, x, sigma, eps):
                return np.zeros_like(np.asarray(eps, dtype=float))

        cfg = DensityConfig(integration_steps=10, n_probes=1)
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(IntegrationDivergedError) as err:
                ode_logdensity(ExplodingExpert(), np.zeros(2), cfg)
        assert err.value.step_index >= 0


class TestBatchLogdensity:
    def test_exact_vs_ode_d100(self):
        e1 = toy_gaussian(21, 100, mean_scale=0.5)
        e2 = toy_gaussian(22, 100, mean_scale=0.5)
        rng = stream(23, "batch-xs")
        xs = e1.mean + np.sqrt(e1.var) * rng.standard_normal((8, 100))
        cfg = DensityConfig(integration_steps=200, n_probes=8, probe_seed=3)
        exact = batch_logdensity([e1, e2], xs, cfg, "exact")
        est = batch_logdensity([e1, e2], xs, cfg, "ode")
        rel = np.abs(est - exact) / np.abs(exact)
        assert rel.max() < 0.005

    def test_single_sample_wrapper_equivalence(self):
        e = toy_gaussian(24, 4)
        x = stream(25, "one").normal(size=4)
        cfg = DensityConfig(integration_steps=60, n_probes=2, probe_seed=5)
        batched = batch_logdensity([e], x[None], cfg, "ode")
        assert batched.shape == (1, 1)
        assert batched[0, 0] == pytest.approx(ode_logdensity(e, x, cfg), rel=1e-12)

    def test_empty_batch(self):
        e = toy_gaussian(26, 3)
        cfg = DensityConfig()
        out = batch_logdensity([e], np.zeros((0, 3)), cfg, "ode")
        assert out.shape == (0, 1)

    def test_shared_probes_reduce_difference_variance(self):
        rng = stream(27, "mixtures")
        mix1 = MixtureExpert([0.5, 0.5], rng.normal(size=(2, 4)) * 1.5, rng.uniform(0.2, 0.8, (2, 4)))
        mix2 = MixtureExpert([0.4, 0.6], rng.normal(size=(2, 4)) * 1.5, rng.uniform(0.2, 0.8, (2, 4)))
        x = rng.normal(size=(1, 4))
        shared, unshared = [], []
        for rep in range(10):
            cfg_a = DensityConfig(integration_steps=60, n_probes=1, probe_kind="gaussian", probe_seed=1000 + rep)
            cfg_b = DensityConfig(integration_steps=60, n_probes=1, probe_kind="gaussian", probe_seed=2000 + rep)
            both = batch_logdensity([mix1, mix2], x, cfg_a, "ode")[0]
            shared.append(both[0] - both[1])
            l1 = batch_logdensity([mix1], x, cfg_a, "ode")[0, 0]
            l2 = batch_logdensity([mix2], x, cfg_b, "ode")[0, 0]
            unshared.append(l1 - l2)
        assert np.var(shared) <= np.var(unshared)
