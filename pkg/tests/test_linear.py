import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from jitterest.linear import (IllConditionedError, blue_diagnostic, data_variances, expected_H,
                              least_squares, linear_nojitter, linear_unbiased, pseudoinverse)
from jitterest.model import ModelConfig, build_H, generate_samples
from jitterest.quadrature import gauss_hermite_rule, select_rule

from oracles import sinc


class TestExpectedH:
    def test_single_node_is_unjittered_basis(self):
        cfg = ModelConfig(3, 2, 0.2, 0.1)
        assert_allclose(expected_H(cfg, gauss_hermite_rule(1)).EH, build_H(cfg, np.zeros(cfg.N)), rtol=1e-15)

    @pytest.mark.parametrize("sz", [0.08, 0.3])
    def test_monte_carlo_oracle(self, sz):
        cfg = ModelConfig(2, 2, sz, 0.1)
        EH = expected_H(cfg, select_rule(sz, 100)).EH
        z = sz * np.random.default_rng(9).standard_normal(1_000_000)
        for n in range(cfg.N):
            for k in range(cfg.K):
                v = sinc(n / cfg.M + z - k)
                se = v.std() / np.sqrt(len(z))
                assert abs(EH[n, k] - v.mean()) < 3 * se

    def test_even_symmetry(self):
        # n/M - k = -(n'/M - k') for (n, k) = (1, 1) and (n', k') = (3, 1) with M = 2: t = -0.5 and 0.5
        cfg = ModelConfig(3, 2, 0.25, 0.1)
        EH = expected_H(cfg, select_rule(0.25, 80)).EH
        for n in range(cfg.N):
            for k in range(cfg.K):
                t = n / cfg.M - k
                for n2 in range(cfg.N):
                    for k2 in range(cfg.K):
                        if n2 / cfg.M - k2 == -t:
                            assert_allclose(EH[n, k], EH[n2, k2], rtol=1e-12)

    def test_jitter_shrinks_entries(self):
        cfg = ModelConfig(3, 2, 0.3, 0.1)
        EH = expected_H(cfg, select_rule(0.3, 100)).EH
        H0 = build_H(cfg, np.zeros(cfg.N))
        # averaging over jitter lowers the peak of each sinc
        assert np.all(np.abs(np.diag(EH[::cfg.M])) < np.abs(np.diag(H0[::cfg.M])))


class TestLinearUnbiased:
    def test_exact_recovery_identity_system(self):
        cfg = ModelConfig(4, 1, 0.0, 0.1)
        x = np.array([1.0, -2.0, 0.5, 3.0])
        s = generate_samples(cfg, x, 0, add_noise=False)
        assert_allclose(linear_unbiased(cfg, expected_H(cfg, gauss_hermite_rule(5)), s), x, atol=1e-14)

    def test_square_system(self):
        cfg = ModelConfig(3, 1, 0.3, 0.1)
        EH = expected_H(cfg, select_rule(0.3, 50))
        y = np.array([0.2, -0.4, 1.3])
        assert_allclose(EH.EH @ linear_unbiased(cfg, EH, y), y, atol=1e-13)

    def test_unbiased(self):
        cfg = ModelConfig(3, 2, 0.25, 0.1)
        x = np.array([0.7, -1.1, 0.4])
        P = pseudoinverse(expected_H(cfg, select_rule(0.25, 100)).EH)
        rng = np.random.default_rng(4)
        T = 10_000
        Z = 0.25 * rng.standard_normal((T, cfg.N))
        t = np.arange(cfg.N) / cfg.M + Z
        Y = sinc(t[..., None] - np.arange(cfg.K)) @ x + 0.1 * rng.standard_normal((T, cfg.N))
        est = Y @ P.T
        se = est.std(axis=0, ddof=1) / np.sqrt(T)
        assert np.all(np.abs(est.mean(axis=0) - x) < 3 * se)
        # the jitter-free basis is biased in this regime
        P0 = pseudoinverse(build_H(cfg, np.zeros(cfg.N)))
        assert np.any(np.abs((Y @ P0.T).mean(axis=0) - x) > 10 * se)

    def test_accepts_plain_matrix(self):
        cfg = ModelConfig(3, 2, 0.2, 0.1)
        EH = expected_H(cfg, select_rule(0.2, 40))
        y = np.arange(cfg.N, dtype=float)
        assert_array_equal(linear_unbiased(cfg, EH, y), linear_unbiased(cfg, EH.EH, y))

    def test_rank_deficient(self):
        with pytest.raises(IllConditionedError) as info:
            least_squares(np.ones((5, 2)), np.arange(5.0))
        assert info.value.condition > 1e12
        with pytest.raises(IllConditionedError):
            least_squares(np.array([[1.0, np.nan], [0.0, 1.0]]), np.ones(2))


class TestNoJitter:
    def test_equals_unbiased_without_jitter(self):
        cfg = ModelConfig(3, 2, 0.0, 0.1)
        y = generate_samples(cfg, np.ones(3), 1)
        assert_allclose(linear_nojitter(cfg, y), linear_unbiased(cfg, expected_H(cfg, gauss_hermite_rule(9)), y),
                        rtol=1e-14)

    def test_differs_with_jitter(self):
        cfg = ModelConfig(3, 2, 0.25, 0.25)
        y = generate_samples(cfg, np.ones(3), 1)
        diff = linear_nojitter(cfg, y) - linear_unbiased(cfg, expected_H(cfg, select_rule(0.25, 100)), y)
        assert np.abs(diff).max() > 1e-3

    def test_exact_recovery(self):
        cfg = ModelConfig(3, 1, 0.0, 0.1)
        x = np.array([0.3, 2.0, -1.0])
        assert_allclose(linear_nojitter(cfg, generate_samples(cfg, x, 5, add_noise=False)), x, atol=1e-14)


class TestBlue:
    def test_scalar_covariance_matches_unbiased_exactly(self):
        cfg = ModelConfig(3, 2, 0.25, 0.25)
        rule = select_rule(0.25, 100)
        EH = expected_H(cfg, rule)
        y = generate_samples(cfg, np.array([1.0, -0.5, 0.2]), 3)
        assert_array_equal(blue_diagnostic(cfg, np.zeros(3), y, rule, EH), linear_unbiased(cfg, EH, y))

    def test_no_jitter_matches_unbiased(self):
        cfg = ModelConfig(3, 2, 0.0, 0.25)
        rule = gauss_hermite_rule(1)
        y = generate_samples(cfg, np.ones(3), 3)
        assert_array_equal(blue_diagnostic(cfg, np.array([2.0, -1.0, 0.5]), y, rule),
                           linear_unbiased(cfg, expected_H(cfg, rule), y))

    def test_depends_on_assumed_x(self):
        cfg = ModelConfig(3, 2, 0.25, 0.25)
        rule = select_rule(0.25, 100)
        y = generate_samples(cfg, np.array([1.0, -0.5, 0.2]), 3)
        a = blue_diagnostic(cfg, np.zeros(3), y, rule)
        b = blue_diagnostic(cfg, np.array([2.0, 1.0, -2.0]), y, rule)
        assert np.abs(a - b).max() > 1e-3

    def test_variances(self):
        cfg = ModelConfig(2, 2, 0.2, 0.1)
        rule = select_rule(0.2, 100)
        assert_allclose(data_variances(cfg, np.zeros(2), rule), 0.01, rtol=1e-15)
        x = np.array([1.0, 0.5])
        z = 0.2 * np.random.default_rng(1).standard_normal(400_000)
        for n in range(cfg.N):
            v = sinc(n / cfg.M + z[:, None] - np.arange(2)) @ x
            assert_allclose(data_variances(cfg, x, rule)[n], v.var() + 0.01, rtol=2e-2)
