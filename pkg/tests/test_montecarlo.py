import itertools
import math

import numpy as np
import pytest

from wienerchaos import hermite_oracle as ho
from wienerchaos.chaos import evaluate, from_kernel, random_expansion
from wienerchaos.montecarlo import (
    BrownianPath,
    GridBasis,
    PathStream,
    StepKernel,
    chaos_vs_ito_gap,
    expected_gap2,
    iterated_ito_sum,
    kernel_to_tensor,
    map_paths,
    mc_divergence_ito_test,
    mc_isometry_test,
    mc_ito_convergence_test,
    mc_moments_test,
    mc_offdiagonal_exactness_test,
    mc_product_test,
    sample_path,
)
from wienerchaos.symtensor import inner_product


def offdiagonal(values):
    vals = np.array(values, dtype=float)
    idx = np.indices(vals.shape)
    for a, b in itertools.combinations(range(vals.ndim), 2):
        vals[idx[a] == idx[b]] = 0.0
    return StepKernel(vals)


class TestPathStream:
    def test_fixed_seed_is_bit_identical(self):
        a = sample_path(PathStream(7, 16), 3)
        b = sample_path(PathStream(7, 16), 3)
        assert a.increments.tobytes() == b.increments.tobytes()

    def test_paths_are_addressed_by_index(self):
        ps = PathStream(11, 9)
        block = ps.paths(0, 20).increments
        np.testing.assert_array_equal(ps.paths(13, 4).increments, block[13:17])
        np.testing.assert_array_equal(ps.path(5).increments, block[5])

    def test_seeds_and_streams_differ(self):
        base = PathStream(1, 8).path(0).increments
        assert not np.array_equal(base, PathStream(2, 8).path(0).increments)
        assert not np.array_equal(base, PathStream(1, 8, stream=1).path(0).increments)

    def test_parallel_matches_serial(self):
        ps = PathStream(5, 12)
        fn = lambda b: b.terminal
        serial = map_paths(fn, ps, 10_000, chunk=1000)
        parallel = map_paths(fn, ps, 10_000, parallel=True, chunk=1000)
        assert serial.tobytes() == parallel.tobytes()

    def test_increment_moments(self):
        n_paths, N = 100_000, 4
        inc = PathStream(3, N).paths(0, n_paths).increments
        dt = 1.0 / N
        se_mean = math.sqrt(dt / n_paths)
        assert np.all(np.abs(inc.mean(axis=0)) <= 4 * se_mean)
        # Var(ΔW^2) = 2 dt^2
        se_var = math.sqrt(2 * dt * dt / n_paths)
        assert np.all(np.abs((inc ** 2).mean(axis=0) - dt) <= 4 * se_var)

    def test_coordinates_are_uncorrelated(self):
        x = PathStream(9, 6).paths(0, 50_000).coords
        corr = np.corrcoef(x.T)
        off = corr[~np.eye(6, dtype=bool)]
        assert np.max(np.abs(off)) <= 4 / math.sqrt(50_000)

    def test_rejects_negative_seed(self):
        with pytest.raises(ValueError):
            PathStream(-1, 4)


class TestKernelToTensor:
    def test_constant_kernel(self):
        t = kernel_to_tensor(StepKernel.constant(1.0, 4, 1), GridBasis(4))
        np.testing.assert_allclose(t.to_dense(), [0.5] * 4)
        assert t.norm() == pytest.approx(1.0)

    def test_zero_and_indicator(self):
        assert kernel_to_tensor(StepKernel.constant(0.0, 5, 2)).is_zero()
        ind = np.zeros(5)
        ind[2] = 1.0
        t = kernel_to_tensor(StepKernel(ind))
        assert dict(t.entries) == {(3,): pytest.approx(math.sqrt(0.2))}

    @pytest.mark.parametrize("p", [1, 2, 3])
    def test_preserves_inner_products(self, rng, p):
        f, g = StepKernel.random(rng, 6, p), StepKernel.random(rng, 6, p)
        assert inner_product(kernel_to_tensor(f), kernel_to_tensor(g)) == pytest.approx(
            f.l2_inner(g), abs=1e-12)

    def test_grid_mismatch(self):
        with pytest.raises(ValueError):
            kernel_to_tensor(StepKernel.constant(1.0, 4, 1), GridBasis(5))

    def test_asymmetric_kernel_rejected(self):
        with pytest.raises(ValueError):
            StepKernel(np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_from_tensor_dict(self):
        data = {"dim": 3, "order": 2, "entries": [{"index": [1, 2], "value": 2.0}]}
        k = StepKernel.from_tensor_dict(data)
        assert k.values[0, 1] == k.values[1, 0] == 2.0


class TestIteratedSum:
    def test_first_order_constant_is_terminal_value(self):
        path = PathStream(1, 16).path(0)
        assert iterated_ito_sum(StepKernel.constant(1.0, 16, 1), path) == pytest.approx(
            path.terminal, abs=1e-14)

    def test_matches_brute_force_loops(self, rng):
        N = 5
        path = PathStream(2, N).path(0)
        for p in (2, 3, 4):
            f = StepKernel.random(rng, N, p)
            brute = sum(f.values[j] * np.prod(path.increments[list(j)])
                        for j in itertools.combinations(range(N), p))
            assert iterated_ito_sum(f, path) == pytest.approx(math.factorial(p) * brute, abs=1e-13)

    def test_batched_equals_single(self, rng):
        f = StepKernel.random(rng, 6, 3)
        batch = PathStream(4, 6).paths(0, 5)
        out = iterated_ito_sum(f, batch)
        for i in range(5):
            single = BrownianPath(batch.increments[i], batch.dt)
            assert iterated_ito_sum(f, single) == pytest.approx(out[i], abs=1e-14)

    @pytest.mark.parametrize("p", [2, 3])
    def test_offdiagonal_kernel_is_exact(self, rng, p):
        f = offdiagonal(StepKernel.random(rng, 8, p).values)
        batch = PathStream(8, 8).paths(0, 200)
        assert np.max(np.abs(chaos_vs_ito_gap(f, batch))) <= 1e-12

    def test_constant_second_order_kernel(self):
        batch = PathStream(6, 32).paths(0, 100)
        f = StepKernel.constant(1.0, 32, 2)
        ito = iterated_ito_sum(f, batch)
        np.testing.assert_allclose(ito, batch.terminal ** 2 - (batch.increments ** 2).sum(axis=1),
                                   atol=1e-12)
        chaos = evaluate(from_kernel(kernel_to_tensor(f)), batch.coords)
        np.testing.assert_allclose(chaos, batch.terminal ** 2 - 1, atol=1e-12)
        np.testing.assert_allclose(chaos - ito, (batch.increments ** 2 - batch.dt).sum(axis=1),
                                   atol=1e-12)

    def test_order_cap(self):
        with pytest.raises(ValueError):
            iterated_ito_sum(StepKernel.constant(1.0, 2, 5), PathStream(0, 2).path(0))


class TestStatisticalChecks:
    def test_cross_chaos_mean(self, rng):
        f, g = StepKernel.random(rng, 16, 1), StepKernel.random(rng, 16, 2)
        rec = mc_isometry_test(f, g, 20_000, seed=1)
        assert rec.passed and rec.details["target"] == 0.0

    def test_normalized_second_chaos(self, rng):
        f = StepKernel.random(rng, 16, 2)
        f = StepKernel(f.values / math.sqrt(2 * f.l2_inner(f)))
        assert f.l2_inner(f) == pytest.approx(0.5)
        rec = mc_isometry_test(f, f, 50_000, seed=2)
        assert rec.details["target"] == pytest.approx(1.0)
        assert rec.passed

    def test_zero_kernel_is_exact(self, rng):
        zero = StepKernel.constant(0.0, 16, 2)
        rec = mc_isometry_test(zero, StepKernel.random(rng, 16, 2), 1000, seed=3)
        assert rec.error == 0.0 and rec.passed

    def test_zero_paths_rejected(self, rng):
        f = StepKernel.random(rng, 4, 1)
        with pytest.raises(ValueError):
            mc_isometry_test(f, f, 0)

    @pytest.mark.parametrize("p", [1, 2, 3])
    def test_moments(self, rng, p):
        f = StepKernel.random(rng, 12, p)
        assert all(r.passed for r in mc_moments_test(f, 30_000, seed=4))

    def test_expectation_by_monte_carlo(self, rng):
        # third route to E[F], next to the order-0 term and the moment oracle
        F = random_expansion(rng, 3, 4)
        y = map_paths(lambda b: evaluate(F, b.coords), PathStream(12, 3), 100_000)
        se = y.std(ddof=1) / math.sqrt(len(y))
        assert abs(y.mean() - F.mean) <= 4 * se
        assert ho.expectation(ho.chaos_to_monomial(F)) == pytest.approx(F.mean, abs=1e-9)

    def test_product_residual(self, rng):
        f = StepKernel.random(rng, 8, 1)
        assert mc_product_test(f, f, 1000).error <= 1e-12
        a, b = StepKernel.random(rng, 8, 2), StepKernel.random(rng, 8, 2)
        assert mc_product_test(a, b, 10_000).passed
        assert mc_product_test(StepKernel.constant(0.0, 8, 2), b, 100).error == 0.0

    def test_product_order_limit(self, rng):
        f = StepKernel.random(rng, 4, 3)
        with pytest.raises(ValueError):
            mc_product_test(f, f, 10)

    def test_divergence_is_ito_integral(self, rng):
        assert mc_divergence_ito_test(StepKernel.random(rng, 32, 1), 2000).passed


class TestItoConvergence:
    def test_constant_kernel_rate(self):
        rec = mc_ito_convergence_test(n_paths=4000, seed=5)
        assert rec.passed
        assert 0.7 <= rec.details["slope_gap2"] <= 1.3
        for row in rec.details["grids"]:
            assert row["expected_gap2"] == pytest.approx(2.0 / row["n_steps"])

    def test_single_block_variance(self):
        f = StepKernel.constant(1.0, 1, 2)
        assert expected_gap2(f) == 2.0
        gap = map_paths(lambda b: chaos_vs_ito_gap(f, b), PathStream(6, 1), 50_000)
        g2 = gap ** 2
        assert abs(g2.mean() - 2.0) <= 4 * g2.std(ddof=1) / math.sqrt(len(g2))

    def test_degenerate_kernel(self):
        with pytest.raises(ValueError):
            mc_ito_convergence_test(kernel=lambda t, s: 0 * t, n_paths=10)

    def test_offdiagonal_exactness(self, rng):
        f = offdiagonal(StepKernel.random(rng, 16, 2).values)
        assert mc_offdiagonal_exactness_test(f, 500).passed
        with pytest.raises(ValueError):
            mc_offdiagonal_exactness_test(StepKernel.constant(1.0, 4, 2), 10)
