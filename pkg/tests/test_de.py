import itertools

import numpy as np
import pytest

from modelfuse.de import DeConfig, optimize, project_to_simplex
from modelfuse.errors import ComputationError, InputError


class TestOptimize:
    def test_recovers_analytic_argmax_1d(self):
        result = optimize(lambda w: -((w[0] - 0.3) ** 2), 1, DeConfig(seed=5))
        assert abs(result.best_vector[0] - 0.3) < 1e-3

    def test_degenerate_bounds_force_value(self):
        config = DeConfig(seed=1, lower_bounds=[1.0], upper_bounds=[1.0])
        result = optimize(lambda w: float(w[0]), 1, config)
        assert result.best_vector[0] == 1.0
        assert result.generations_run == 0  # zero spread converges immediately

    def test_seed_determinism_bit_identical(self):
        objective = lambda w: -float(np.sum((w - 0.4) ** 2))
        a = optimize(objective, 3, DeConfig(seed=99))
        b = optimize(objective, 3, DeConfig(seed=99))
        assert np.array_equal(a.best_vector, b.best_vector)
        assert a.best_fitness == b.best_fitness
        assert a.history == b.history
        assert a.generations_run == b.generations_run

    def test_every_candidate_within_bounds(self):
        lower = np.array([-1.0, 0.5, 2.0])
        upper = np.array([1.0, 0.75, 5.0])

        def instrumented(w):
            assert (w >= lower).all() and (w <= upper).all()
            return -float(np.sum(w**2))

        config = DeConfig(seed=3, max_generations=25, lower_bounds=lower, upper_bounds=upper)
        result = optimize(instrumented, 3, config)
        assert (result.best_vector >= lower).all() and (result.best_vector <= upper).all()

    def test_history_monotone_nondecreasing(self):
        result = optimize(
            lambda w: -float(np.sum((w - 0.2) ** 2)), 4, DeConfig(seed=7, max_generations=50)
        )
        history = np.array(result.history)
        assert (np.diff(history) >= 0).all()
        assert result.best_fitness == history[-1]

    def test_best_fitness_equals_objective_of_best_vector(self):
        objective = lambda w: -float(np.sum((w - 0.7) ** 2))
        result = optimize(objective, 2, DeConfig(seed=11, max_generations=30))
        assert result.best_fitness == objective(result.best_vector)

    def test_non_finite_candidates_are_discarded(self):
        # objective undefined on half the box: those candidates never win
        def objective(w):
            return float("nan") if w[0] > 0.5 else -abs(w[0] - 0.25)

        result = optimize(objective, 1, DeConfig(seed=2, max_generations=60))
        assert result.best_vector[0] <= 0.5
        assert abs(result.best_vector[0] - 0.25) < 1e-2

    def test_all_non_finite_initial_population_aborts(self):
        with pytest.raises(ComputationError, match="non-finite"):
            optimize(lambda w: float("inf"), 2, DeConfig(seed=1))

    def test_convergence_tolerance_stops_early(self):
        result = optimize(lambda w: 1.0, 2, DeConfig(seed=1, convergence_tolerance=1e-7))
        assert result.generations_run == 0

    def test_config_validation(self):
        with pytest.raises(InputError, match="population_size"):
            optimize(lambda w: 0.0, 1, DeConfig(population_size=3))
        with pytest.raises(InputError, match="mutation_factor"):
            optimize(lambda w: 0.0, 1, DeConfig(mutation_factor=0.0))
        with pytest.raises(InputError, match="crossover_rate"):
            optimize(lambda w: 0.0, 1, DeConfig(crossover_rate=1.5))
        with pytest.raises(InputError, match="length"):
            optimize(lambda w: 0.0, 2, DeConfig(lower_bounds=[0.0], upper_bounds=[1.0, 1.0]))
        with pytest.raises(InputError, match="lower bound"):
            optimize(lambda w: 0.0, 1, DeConfig(lower_bounds=[2.0], upper_bounds=[1.0]))

    def test_init_population_seeds_are_used(self):
        # plant the exact optimum in the seeds: best-ever can never be worse
        target = np.array([0.25, 0.75])
        objective = lambda w: -float(np.sum((w - target) ** 2))
        result = optimize(
            objective, 2, DeConfig(seed=4, max_generations=1), init_population=target[None, :]
        )
        assert result.best_fitness >= objective(target)


class TestProjectToSimplex:
    def test_already_on_simplex_unchanged(self):
        v = np.array([0.2, 0.2, 0.6])
        assert np.array_equal(project_to_simplex(v), v)

    def test_k1_forced_to_one(self):
        assert project_to_simplex([-3.7]) == np.array([1.0])
        assert project_to_simplex([42.0]) == np.array([1.0])

    def test_dominant_coordinate(self):
        assert np.array_equal(project_to_simplex([2.0, 0.0, 0.0]), [1.0, 0.0, 0.0])

    def test_output_is_feasible(self, rng):
        for _ in range(200):
            k = int(rng.integers(1, 8))
            v = rng.normal(0, 3, k)
            w = project_to_simplex(v)
            assert (w >= 0).all() and (w <= 1).all()
            assert abs(w.sum() - 1.0) <= 1e-12

    def test_matches_grid_search_oracle(self, rng):
        # independent oracle: argmin ||w - v|| over a fine simplex grid, K <= 3
        m = 100
        grid2 = np.array([[i / m, 1 - i / m] for i in range(m + 1)])
        grid3 = np.array(
            [
                [i / m, j / m, (m - i - j) / m]
                for i, j in itertools.product(range(m + 1), repeat=2)
                if i + j <= m
            ]
        )
        for grid, k in ((grid2, 2), (grid3, 3)):
            for _ in range(20):
                v = rng.normal(0, 2, k)
                w = project_to_simplex(v)
                best = grid[np.argmin(np.sum((grid - v) ** 2, axis=1))]
                assert np.abs(w - best).max() <= 1.5 / m

    def test_idempotent(self, rng):
        for _ in range(100):
            v = rng.normal(0, 2, int(rng.integers(1, 7)))
            w = project_to_simplex(v)
            assert np.abs(project_to_simplex(w) - w).max() <= 1e-12

    def test_non_finite_rejected(self):
        with pytest.raises(InputError):
            project_to_simplex([np.nan, np.inf])
        with pytest.raises(InputError):
            project_to_simplex([0.5, np.inf])
