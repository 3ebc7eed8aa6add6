import numpy as np
import pytest

from poecal.core import (
    ConfigurationError,
    DomainError,
    Exponents,
    RunConfig,
    beta_schedule,
    build_schedule,
    derive_seed,
    stream,
)


class TestBuildSchedule:
    def test_endpoints_bit_exact(self):
        sched = build_schedule(50.0, 0.01, 7)
        assert sched.sigma_eff[0] == 50.0
        assert sched.sigma_eff[-1] == 0.01

    def test_midpoint_matches_closed_form(self):
        # ((50^(1/7) + 0.01^(1/7)) / 2)^7, frozen as a regression value
        sched = build_schedule(50.0, 0.01, 3)
        assert sched.sigma_eff[1] == pytest.approx(2.4013154413378768, rel=1e-14)

    @pytest.mark.parametrize("rho", [1.0, 2.0, 7.0, 11.0])
    def test_strictly_decreasing_for_any_rho(self, rho):
        sched = build_schedule(50.0, 0.01, 40, rho)
        assert np.all(np.diff(sched.sigma_eff) < 0)

    def test_interior_formula(self):
        T, rho = 9, 7.0
        sched = build_schedule(50.0, 0.01, T, rho)
        for i in range(T):
            u = i / (T - 1)
            expect = (50.0 ** (1 / rho) + u * (0.01 ** (1 / rho) - 50.0 ** (1 / rho))) ** rho
            assert sched.sigma_eff[i] == pytest.approx(expect, rel=1e-12)

    def test_invalid_inputs(self):
        with pytest.raises(ConfigurationError):
            build_schedule(0.01, 50.0, 10)
        with pytest.raises(ConfigurationError):
            build_schedule(50.0, -1.0, 10)
        with pytest.raises(ConfigurationError):
            build_schedule(50.0, 0.01, 1)


class TestBetaSchedule:
    def test_values(self):
        assert beta_schedule(50.0, 0.005) == pytest.approx(2e-6, rel=1e-12)
        assert beta_schedule(0.01, 0.005) == 1.0
        assert beta_schedule(np.sqrt(0.005), 0.005) == 1.0

    def test_range_and_clamp_region(self):
        for sig in np.geomspace(1e-4, 100, 50):
            b = beta_schedule(sig, 0.005)
            assert 0.0 < b <= 1.0
            if sig <= np.sqrt(0.005):
                assert b == 1.0

    def test_nonincreasing_in_sigma(self):
        sigs = np.geomspace(1e-3, 100, 100)
        betas = [beta_schedule(s, 0.005) for s in sigs]
        assert np.all(np.diff(betas) <= 0)


class TestExponents:
    def test_positive_total_required(self):
        with pytest.raises(DomainError):
            Exponents(np.array([0.5, -0.5]))
        with pytest.raises(DomainError):
            Exponents(np.array([-1.0, 0.2]), "box_01")

    def test_box_bounds(self):
        with pytest.raises(DomainError):
            Exponents(np.array([0.5, 1.2]), "box_01")
        Exponents(np.array([0.0, 1.0]), "box_01")  # boundary values are fine

    def test_sum_to_one_constructor_and_check(self):
        e = Exponents.sum_to_one([0.3, 0.4])
        assert e.a[-1] == 1.0 - (0.3 + 0.4)
        assert e.total == pytest.approx(1.0)
        with pytest.raises(DomainError):
            Exponents(np.array([0.3, 0.4, 0.5]), "sum_to_one")

    def test_single_expert_sum_to_one(self):
        e = Exponents.sum_to_one([])
        assert e.a.tolist() == [1.0]
        assert e.free.size == 0


class TestRunConfig:
    def test_validation(self):
        with pytest.raises(ConfigurationError):
            RunConfig(1, 10, 4, 0)
        with pytest.raises(ConfigurationError):
            RunConfig(10, 0, 4, 0)
        with pytest.raises(ConfigurationError):
            RunConfig(10, 10, 4, 0, langevin_coef=0.0)
        with pytest.raises(ConfigurationError):
            RunConfig(10, 10, 4, 0, jacobian_mode="magic")


class TestStreams:
    def test_deterministic_and_independent(self):
        a1 = stream(7, "x", 0).standard_normal(5)
        a2 = stream(7, "x", 0).standard_normal(5)
        b = stream(7, "x", 1).standard_normal(5)
        c = stream(8, "x", 0).standard_normal(5)
        assert np.array_equal(a1, a2)
        assert not np.array_equal(a1, b)
        assert not np.array_equal(a1, c)

    def test_derive_seed_stable(self):
        s1 = derive_seed(42, "grid", 3, 4)
        s2 = derive_seed(42, "grid", 3, 4)
        s3 = derive_seed(42, "grid", 4, 3)
        assert s1 == s2
        assert s1 != s3
        assert 0 <= s1 < 2**64
