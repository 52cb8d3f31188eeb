"""Ensembles: seed derivation, aggregation, analytic references."""

import math
import random

import numpy as np
import pytest

from coalbins import (EngineConfig, InitialDistributionSpec, KernelSpec,
                      aggregate_realizations, analytic_number,
                      build_geometric_grid, discretize, realization_seed,
                      run, run_ensemble)
from coalbins.rng import splitmix64


def small_setup(total_number=300.0):
    grid = build_geometric_grid(4.19e-12, math.sqrt(2.0), 70)
    spec = InitialDistributionSpec(kind="gamma", mean_mass=4.19e-9,
                                   total_number=total_number)
    state0 = discretize(spec, grid)
    kernel = KernelSpec(kind="golovin_sum", coefficient=1500.0)
    return grid, state0, kernel


class TestAnalyticNumber:
    def test_initial_count(self):
        assert analytic_number(KernelSpec(kind="constant"), 100.0, 1.0, 1.0,
                               0.0) == 100.0
        assert analytic_number(KernelSpec(kind="golovin_sum"), 100.0, 1.0,
                               1.0, 0.0) == 100.0

    def test_sum_kernel_e_folding(self):
        # b * L0 * t / V = 1
        spec = KernelSpec(kind="golovin_sum", coefficient=2.0)
        n = analytic_number(spec, 1000.0, 0.25, 1.0, 2.0)
        assert n == pytest.approx(1000.0 / math.e)

    def test_constant_kernel_halving(self):
        # c * N0 * t / (2 V) = 1
        spec = KernelSpec(kind="constant", coefficient=4.0)
        n = analytic_number(spec, 1000.0, 1.0, 2.0, 1e-3)
        assert n == pytest.approx(500.0)

    def test_vectorized_over_time(self):
        spec = KernelSpec(kind="golovin_sum", coefficient=1.0)
        t = np.array([0.0, 1.0, 2.0])
        out = analytic_number(spec, 10.0, 1.0, 1.0, t)
        np.testing.assert_allclose(out, 10.0 * np.exp(-t))

    def test_unsupported_kernel(self):
        with pytest.raises(ValueError):
            analytic_number(KernelSpec(kind="product"), 1.0, 1.0, 1.0, 1.0)


class TestSeedDerivation:
    def test_distinct_and_deterministic(self):
        seeds = [realization_seed(42, k) for k in range(100)]
        assert len(set(seeds)) == 100
        assert seeds == [realization_seed(42, k) for k in range(100)]

    def test_published_mixing_function(self):
        golden = 0x9E3779B97F4A7C15
        assert realization_seed(7, 3) == splitmix64((7 + 3 * golden)
                                                    % 2 ** 64)

    def test_negative_index_rejected(self):
        with pytest.raises(ValueError):
            realization_seed(1, -1)


class TestRunEnsemble:
    def test_single_member_matches_direct_run(self):
        grid, state0, kernel = small_setup()
        config = EngineConfig(max_events=200, seed=0,
                              snapshot_times=(0.0, 1e-3, 1e-2))
        result = run_ensemble(config, state0, grid, kernel, 1, base_seed=5)
        from dataclasses import replace
        direct = run(replace(config, seed=realization_seed(5, 0)), state0,
                     grid, kernel)
        np.testing.assert_array_equal(result.moment_mean, direct.moment_table)
        assert np.all(result.moment_var == 0.0)

    def test_forced_equal_seeds_have_zero_variance(self):
        grid, state0, kernel = small_setup()
        config = EngineConfig(max_events=150, seed=0,
                              snapshot_times=(0.0, 1e-3))
        result = run_ensemble(config, state0, grid, kernel, 2, base_seed=1,
                              seeds=[99, 99])
        assert np.all(result.moment_var == 0.0)
        assert np.all(result.density_var == 0.0)

    def test_aggregation_is_order_independent(self):
        grid, state0, kernel = small_setup()
        config = EngineConfig(max_events=100, seed=0,
                              snapshot_times=(0.0, 1e-3))
        indexed = []
        for k in range(6):
            from dataclasses import replace
            stats = run(replace(config, seed=realization_seed(3, k)), state0,
                        grid, kernel)
            indexed.append((k, stats))
        ordered = aggregate_realizations(indexed, grid)
        shuffled = list(indexed)
        random.Random(11).shuffle(shuffled)
        scrambled = aggregate_realizations(shuffled, grid)
        np.testing.assert_array_equal(ordered.moment_mean,
                                      scrambled.moment_mean)
        np.testing.assert_array_equal(ordered.moment_var,
                                      scrambled.moment_var)
        np.testing.assert_array_equal(ordered.density_mean,
                                      scrambled.density_mean)
        assert ordered.seeds == scrambled.seeds

    def test_failing_member_is_tagged(self):
        grid, state0, kernel = small_setup()
        wrong_grid = build_geometric_grid(1.0, 2.0, 5)  # mismatched bins
        config = EngineConfig(max_events=10, seed=0)
        with pytest.raises(RuntimeError, match="realization 0"):
            run_ensemble(config, state0, wrong_grid, kernel, 2, base_seed=1)

    def test_mismatched_snapshots_rejected(self):
        grid, state0, kernel = small_setup()
        config = EngineConfig(max_events=50, seed=0, snapshot_times=(0.0,))
        stats_a = run(config, state0, grid, kernel)
        from dataclasses import replace
        stats_b = run(replace(config,
                              snapshot_times=(0.0, 1.0)), state0, grid,
                      kernel)
        with pytest.raises(ValueError, match="snapshot times"):
            aggregate_realizations([(0, stats_a), (1, stats_b)], grid)

    def test_needs_at_least_one_member(self):
        grid, state0, kernel = small_setup()
        config = EngineConfig(max_events=10, seed=0)
        with pytest.raises(ValueError):
            run_ensemble(config, state0, grid, kernel, 0, base_seed=1)

    def test_violation_totals_per_member(self):
        grid, state0, kernel = small_setup()
        config = EngineConfig(mode="legacy", max_events=299, seed=0)
        result = run_ensemble(config, state0, grid, kernel, 4, base_seed=8)
        assert len(result.violation_counts) == 4
        assert result.violation_total == sum(result.violation_counts)

    def test_count_decay_tracks_sum_kernel_solution(self):
        # loose 5-sigma check on a small ensemble; the acceptance suite
        # runs the calibrated version
        grid, state0, kernel = small_setup(total_number=2000.0)
        l0 = state0.total_mass()
        n0 = state0.total_number()
        t_max = 1.0 / (kernel.coefficient * l0)
        times = tuple(np.linspace(t_max / 4, t_max, 4))
        config = EngineConfig(max_time=t_max * 1.01, seed=0,
                              snapshot_times=times)
        result = run_ensemble(config, state0, grid, kernel, 25, base_seed=21)
        expected = analytic_number(kernel, n0, l0, 1.0,
                                   result.snapshot_times)
        stderr = result.moment_stderr(0)
        z = (result.moment_mean[:, 0] - expected) / stderr
        assert np.all(np.abs(z) < 5.0)