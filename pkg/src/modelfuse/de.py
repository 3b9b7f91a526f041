"""Bound-constrained differential evolution (rand/1/bin) for maximization.

Classic Storn-Price scheme: for each target vector, mutant = a + F * (b - c)
with distinct random partners a, b, c != target, binomial crossover with one
forced dimension, greedy selection. Trial generation is deferred: all trials
of a generation are built (and all random numbers drawn) before any selection,
so fitness evaluations within a generation are order-independent.

An optional ``repair`` hook maps each candidate onto a feasible subset of the
box before evaluation; the simplex projection below is the repair used for
ensemble-weight search.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ComputationError, InputError


@dataclass
class DeConfig:
    """Differential-evolution hyperparameters.

    ``population_size=None`` resolves to max(15 * dim, 20). Bounds default to
    [0, 1] per dimension.
    """

    population_size: int | None = None
    mutation_factor: float = 0.5
    crossover_rate: float = 0.7
    max_generations: int = 300
    convergence_tolerance: float = 1e-7
    seed: int = 0
    lower_bounds: Sequence[float] | None = None
    upper_bounds: Sequence[float] | None = None

    def resolved(self, dim: int) -> "_ResolvedConfig":
        if dim < 1:
            raise InputError("dimension must be >= 1")
        pop = self.population_size if self.population_size is not None else max(15 * dim, 20)
        if pop < 4:
            raise InputError("population_size must be >= 4 (rand/1 needs three partners)")
        if not self.mutation_factor > 0:
            raise InputError("mutation_factor must be > 0")
        if not 0.0 <= self.crossover_rate <= 1.0:
            raise InputError("crossover_rate must be in [0, 1]")
        if self.max_generations < 1:
            raise InputError("max_generations must be >= 1")
        if self.convergence_tolerance < 0:
            raise InputError("convergence_tolerance must be >= 0")
        lower = np.zeros(dim) if self.lower_bounds is None else np.asarray(self.lower_bounds, float)
        upper = np.ones(dim) if self.upper_bounds is None else np.asarray(self.upper_bounds, float)
        if lower.shape != (dim,) or upper.shape != (dim,):
            raise InputError(f"bounds must have length {dim}")
        if not (np.isfinite(lower).all() and np.isfinite(upper).all()):
            raise InputError("bounds must be finite")
        if (lower > upper).any():
            raise InputError("lower bound exceeds upper bound")
        return _ResolvedConfig(
            population_size=int(pop),
            mutation_factor=float(self.mutation_factor),
            crossover_rate=float(self.crossover_rate),
            max_generations=int(self.max_generations),
            convergence_tolerance=float(self.convergence_tolerance),
            seed=int(self.seed),
            lower=lower,
            upper=upper,
        )


@dataclass(frozen=True)
class _ResolvedConfig:
    population_size: int
    mutation_factor: float
    crossover_rate: float
    max_generations: int
    convergence_tolerance: float
    seed: int
    lower: np.ndarray
    upper: np.ndarray


@dataclass(frozen=True)
class DeResult:
    """Best-ever candidate, its fitness, and the per-generation best trace."""

    best_vector: np.ndarray
    best_fitness: float
    generations_run: int
    history: tuple[float, ...]


def _evaluate(objective, candidates: np.ndarray) -> np.ndarray:
    """Objective per row; non-finite values become -inf (candidate discarded)."""
    fitness = np.empty(len(candidates))
    for i, cand in enumerate(candidates):
        value = objective(cand)
        fitness[i] = value if np.isfinite(value) else -np.inf
    return fitness


def optimize(
    objective: Callable[[np.ndarray], float],
    dim: int,
    config: DeConfig | None = None,
    repair: Callable[[np.ndarray], np.ndarray] | None = None,
    init_population: np.ndarray | None = None,
) -> DeResult:
    """Maximize ``objective`` over the box with rand/1/bin DE.

    Every evaluated candidate lies within bounds (mutants are clipped before
    the optional ``repair``, which must map into the box). ``init_population``
    rows, if given, seed the initial population; the remainder is uniform
    random. Deterministic given the seed. Stops after ``max_generations`` or
    when the population fitness spread drops below ``convergence_tolerance``.
    """
    cfg = (config or DeConfig()).resolved(dim)
    rng = np.random.default_rng(cfg.seed)
    n_pop = cfg.population_size
    span = cfg.upper - cfg.lower

    population = cfg.lower + rng.random((n_pop, dim)) * span
    if init_population is not None:
        seeds = np.atleast_2d(np.asarray(init_population, dtype=float))
        if seeds.shape[1] != dim:
            raise InputError(f"init_population must have {dim} columns")
        if len(seeds) > n_pop:
            raise InputError("init_population larger than population_size")
        population[: len(seeds)] = np.clip(seeds, cfg.lower, cfg.upper)
    if repair is not None:
        population = np.array([repair(row) for row in population])

    fitness = _evaluate(objective, population)
    if np.all(np.isneginf(fitness)):
        raise ComputationError(
            "differential evolution aborted: every initial candidate returned "
            "a non-finite objective value"
        )

    best_idx = int(np.argmax(fitness))  # argmax takes the lowest index on ties
    best_vector = population[best_idx].copy()
    best_fitness = float(fitness[best_idx])
    history = [best_fitness]

    generations = 0
    for _ in range(cfg.max_generations):
        if fitness.max() - fitness.min() < cfg.convergence_tolerance:
            break
        generations += 1

        trials = np.empty_like(population)
        for i in range(n_pop):
            partners = rng.choice(n_pop - 1, size=3, replace=False)
            partners[partners >= i] += 1  # skip the target index
            a, b, c = population[partners]
            mutant = a + cfg.mutation_factor * (b - c)
            np.clip(mutant, cfg.lower, cfg.upper, out=mutant)
            cross = rng.random(dim) < cfg.crossover_rate
            cross[rng.integers(dim)] = True
            trial = np.where(cross, mutant, population[i])
            trials[i] = repair(trial) if repair is not None else trial

        trial_fitness = _evaluate(objective, trials)
        improved = trial_fitness >= fitness
        population[improved] = trials[improved]
        fitness[improved] = trial_fitness[improved]

        best_idx = int(np.argmax(fitness))
        if fitness[best_idx] > best_fitness:
            best_fitness = float(fitness[best_idx])
            best_vector = population[best_idx].copy()
        history.append(best_fitness)

    return DeResult(
        best_vector=best_vector,
        best_fitness=best_fitness,
        generations_run=generations,
        history=tuple(history),
    )


def project_to_simplex(v) -> np.ndarray:
    """Euclidean projection of ``v`` onto the probability simplex.

    Sort-based algorithm (Held et al.); output is in [0, 1]^K and sums to 1
    within 1e-12. O(K log K).
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size < 1:
        raise InputError("simplex projection needs a 1-D vector of length >= 1")
    if not np.isfinite(v).all():
        raise InputError("simplex projection input must be finite")
    u = np.sort(v)[::-1]
    cumulative = np.cumsum(u)
    j = np.arange(1, v.size + 1)
    support = np.flatnonzero(u + (1.0 - cumulative) / j > 0.0)[-1]
    shift = (1.0 - cumulative[support]) / (support + 1.0)
    return np.maximum(v + shift, 0.0)
