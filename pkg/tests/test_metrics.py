import math

import numpy as np
import pytest

from vgcdm.metrics import (
    MetricConfig,
    MetricError,
    ZeroReferenceError,
    ZeroSpectrumError,
    batch_stats,
    fscs,
    psnr,
    rmse,
)


def rmse_oracle(y, y_hat):
    total = math.fsum((float(a) - float(b)) ** 2 for a, b in zip(y, y_hat))
    return math.sqrt(total / len(y))


def dft_magnitudes_oracle(y):
    """Naive O(n^2) DFT, one-sided magnitudes."""
    n = len(y)
    out = []
    for k in range(n // 2 + 1):
        re = math.fsum(y[j] * math.cos(-2 * math.pi * k * j / n) for j in range(n))
        im = math.fsum(y[j] * math.sin(-2 * math.pi * k * j / n) for j in range(n))
        out.append(math.hypot(re, im))
    return np.array(out)


def fscs_oracle(y, y_hat):
    a = dft_magnitudes_oracle(y)
    b = dft_magnitudes_oracle(y_hat)
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))


class TestRmse:
    def test_identity(self):
        y = np.arange(8.0)
        assert rmse(y, y) == 0.0

    def test_constant_offset(self):
        assert rmse(np.zeros(16), np.ones(16)) == pytest.approx(1.0)

    def test_against_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            y = rng.normal(size=64)
            y_hat = rng.normal(size=64)
            assert rmse(y, y_hat) == pytest.approx(
                rmse_oracle(y, y_hat), abs=1e-12
            )

    def test_metric_axioms_numerically(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            a, b, c = rng.normal(size=(3, 32))
            assert rmse(a, b) == pytest.approx(rmse(b, a), abs=1e-14)
            assert rmse(a, c) <= rmse(a, b) + rmse(b, c) + 1e-12

    def test_length_mismatch(self):
        with pytest.raises(MetricError):
            rmse(np.zeros(4), np.zeros(5))


class TestPsnr:
    def test_twenty_db_case(self):
        # MAX = 1, MSE = 0.01 -> 20 dB
        y = np.array([1.0, -1.0, 0.0, 0.0])
        y_hat = y + 0.1
        assert psnr(y, y_hat) == pytest.approx(20.0, rel=1e-12)

    def test_identical_capped(self):
        y = np.ones(8)
        assert psnr(y, y) == 100.0

    def test_identical_error_policy(self):
        cfg = MetricConfig(psnr_identical_policy="error")
        with pytest.raises(MetricError):
            psnr(np.ones(8), np.ones(8), cfg)

    def test_zero_reference(self):
        with pytest.raises(ZeroReferenceError):
            psnr(np.zeros(8), np.ones(8))

    def test_batch_mean_equals_per_pair_mean(self):
        rng = np.random.default_rng(2)
        pairs = [(rng.uniform(-1, 1, 32), rng.uniform(-1, 1, 32)) for _ in range(3)]
        per_pair = [psnr(y, y_hat) for y, y_hat in pairs]
        mean, _ = batch_stats(per_pair)
        assert mean == pytest.approx(float(np.mean(per_pair)))

    def test_monotone_in_noise(self):
        rng = np.random.default_rng(3)
        y = np.sin(np.linspace(0, 20, 256))
        values = []
        for level in (0.01, 0.05, 0.1, 0.3, 0.6):
            noise = rng.normal(size=256)
            values.append(psnr(y, y + level * noise))
        assert all(a > b for a, b in zip(values, values[1:]))


class TestFscs:
    def test_self_similarity(self):
        y = np.sin(np.linspace(0, 50, 2048))
        assert fscs(y, y) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal_bins(self):
        n = 2048
        t = np.arange(n)
        y = np.sin(2 * np.pi * 8 * t / n)
        y_hat = np.sin(2 * np.pi * 64 * t / n)
        assert fscs(y, y_hat) == pytest.approx(0.0, abs=1e-9)

    def test_circular_shift_invariance(self):
        rng = np.random.default_rng(4)
        y = rng.normal(size=2048)
        assert fscs(y, np.roll(y, 100)) == pytest.approx(1.0, abs=1e-9)

    def test_scale_invariance(self):
        rng = np.random.default_rng(5)
        y = rng.normal(size=512)
        y_hat = rng.normal(size=512)
        assert fscs(y, 3.7 * y_hat) == pytest.approx(fscs(y, y_hat), abs=1e-12)

    def test_bounded(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            v = fscs(rng.normal(size=64), rng.normal(size=64))
            assert 0.0 <= v <= 1.0

    def test_against_naive_dft_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            y = rng.normal(size=64)
            y_hat = rng.normal(size=64)
            assert fscs(y, y_hat) == pytest.approx(
                fscs_oracle(y, y_hat), abs=1e-9
            )

    def test_zero_signal(self):
        with pytest.raises(ZeroSpectrumError):
            fscs(np.zeros(16), np.ones(16))


class TestBatchStats:
    def test_constant(self):
        assert batch_stats([1, 1, 1]) == (1.0, 0.0)

    def test_two_point(self):
        assert batch_stats([0, 2]) == (1.0, 1.0)

    def test_against_two_pass_oracle(self):
        rng = np.random.default_rng(8)
        vals = rng.normal(size=100).tolist()
        mean = math.fsum(vals) / len(vals)
        var = math.fsum((v - mean) ** 2 for v in vals) / len(vals)
        got_mean, got_std = batch_stats(vals)
        assert got_mean == pytest.approx(mean, abs=1e-12)
        assert got_std == pytest.approx(math.sqrt(var), abs=1e-12)

    def test_empty(self):
        with pytest.raises(MetricError):
            batch_stats([])
