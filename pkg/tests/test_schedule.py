import mpmath
import numpy as np
import pytest

from vgcdm.schedule import (
    cosine_schedule,
    linear_schedule,
    posterior_step_params,
    q_sample,
)


def alpha_bar_oracle(betas, t):
    """High-precision cumulative product, independent of the float64 path."""
    with mpmath.workdps(50):
        prod = mpmath.mpf(1)
        for b in betas[: t + 1]:
            prod *= 1 - mpmath.mpf(float(b))
        return float(prod)


class TestLinearSchedule:
    def test_endpoints(self):
        s = linear_schedule(1000, 1e-4, 0.02)
        assert s.betas[0] == pytest.approx(1e-4, rel=0, abs=0)
        assert s.betas[999] == pytest.approx(0.02, rel=0, abs=1e-18)

    def test_midpoint_interpolation(self):
        s = linear_schedule(1000, 1e-4, 0.02)
        expected = 1e-4 + (0.02 - 1e-4) * 500 / 999
        assert s.betas[500] == pytest.approx(expected, rel=1e-15)

    def test_final_alpha_bar_against_oracle(self):
        s = linear_schedule(1000, 1e-4, 0.02)
        oracle = alpha_bar_oracle(s.betas, 999)
        assert oracle == pytest.approx(4.0e-5, rel=0.02)
        assert s.alpha_bars[999] == pytest.approx(oracle, rel=1e-10)

    def test_arithmetic_progression(self):
        s = linear_schedule(50, 1e-3, 0.01)
        diffs = np.diff(s.betas)
        assert np.all(np.abs(diffs - diffs[0]) < 1e-15)

    def test_alpha_bar_matches_oracle_everywhere(self):
        s = linear_schedule(200, 1e-4, 0.02)
        for t in (0, 1, 57, 123, 199):
            assert s.alpha_bars[t] == pytest.approx(
                alpha_bar_oracle(s.betas, t), rel=1e-10
            )

    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError):
            linear_schedule(1, 1e-4, 0.02)
        with pytest.raises(ValueError):
            linear_schedule(100, 0.02, 1e-4)
        with pytest.raises(ValueError):
            linear_schedule(100, 0.0, 0.02)


class TestCosineSchedule:
    def test_strictly_decreasing(self):
        s = cosine_schedule(1000, 0.008)
        assert np.all(np.diff(s.alpha_bars) < 0)

    def test_less_early_noise_than_linear(self):
        lin = linear_schedule(1000, 1e-4, 0.02)
        cos = cosine_schedule(1000, 0.008)
        mid = slice(300, 700)
        assert np.all(cos.alpha_bars[mid] > lin.alpha_bars[mid])

    def test_first_beta_from_unit_alpha_bar(self):
        # alpha_bar before step 0 is f(0)/f(0) = 1, so beta_0 = 1 - ab_0.
        s = cosine_schedule(1000, 0.008)
        assert s.betas[0] == pytest.approx(1.0 - s.alpha_bars[0], rel=1e-12)

    def test_betas_clipped(self):
        s = cosine_schedule(1000, 0.008)
        assert np.all(s.betas <= 0.999)

    def test_terminal_alpha_bar_small(self):
        for sched in (linear_schedule(1000), cosine_schedule(1000)):
            assert sched.alpha_bars[-1] < 1e-3


class TestQSample:
    def test_zero_noise(self):
        s = linear_schedule(100)
        x0 = np.linspace(-1, 1, 16)
        out = q_sample(x0, 10, np.zeros(16), s)
        assert np.allclose(out, np.sqrt(s.alpha_bars[10]) * x0)

    def test_terminal_step_mostly_noise(self):
        s = linear_schedule(1000, 1e-4, 0.02)
        x0 = np.ones(64)
        eps = np.random.default_rng(0).normal(size=64)
        out = q_sample(x0, 999, eps, s)
        # sqrt(alpha_bar_999) ~ sqrt(4.0e-5) ~ 0.0063
        assert np.linalg.norm(out - eps) < 0.1 * np.linalg.norm(eps)

    def test_out_of_range_t(self):
        s = linear_schedule(10)
        with pytest.raises(IndexError):
            q_sample(np.zeros(4), 10, np.zeros(4), s)

    def test_monte_carlo_moments(self):
        s = linear_schedule(1000, 1e-4, 0.02)
        rng = np.random.default_rng(7)
        x0 = 0.5
        n = 10_000
        for t in (10, 500, 999):
            draws = np.array([
                q_sample(np.array([x0]), t, rng.normal(size=1), s)[0]
                for _ in range(n)
            ])
            want_mean = np.sqrt(s.alpha_bars[t]) * x0
            want_var = 1.0 - s.alpha_bars[t]
            # 3-sigma Monte-Carlo bands
            assert abs(draws.mean() - want_mean) < 3 * np.sqrt(want_var / n)
            assert abs(draws.var() - want_var) < 3 * want_var * np.sqrt(2.0 / n)


class TestPosteriorStep:
    def test_coefficients_direct_arithmetic(self):
        s = linear_schedule(100)
        # Build a step with known beta/alpha_bar by searching the table.
        t = 50
        ps = posterior_step_params(t, s)
        assert ps.mean_scale == pytest.approx(1.0 / np.sqrt(1.0 - s.betas[t]))
        assert ps.eps_coeff == pytest.approx(
            s.betas[t] / np.sqrt(1.0 - s.alpha_bars[t])
        )

    def test_fixed_variance_is_beta(self):
        s = linear_schedule(100)
        for t in range(1, 100, 7):
            assert posterior_step_params(t, s).variance == s.betas[t]

    def test_mean_recipe_consistent_with_forward_pairs(self):
        # Brute-force simulation on a 16-point toy signal: the reverse mean
        # computed from the exact total noise must be unbiased for x_{t-1}.
        s = linear_schedule(50)
        rng = np.random.default_rng(3)
        x0 = rng.normal(size=16)
        t = 20
        n = 20_000
        errs = np.zeros(16)
        for _ in range(n):
            x_prev = q_sample(x0, t - 1, rng.normal(size=16), s)
            eps_step = rng.normal(size=16)
            x_t = np.sqrt(s.alphas[t]) * x_prev + np.sqrt(s.betas[t]) * eps_step
            eps_total = (x_t - np.sqrt(s.alpha_bars[t]) * x0) / np.sqrt(
                1.0 - s.alpha_bars[t]
            )
            ps = posterior_step_params(t, s)
            mean = ps.mean_scale * (x_t - ps.eps_coeff * eps_total)
            errs += mean - x_prev
        assert np.all(np.abs(errs / n) < 5.0 / np.sqrt(n))
