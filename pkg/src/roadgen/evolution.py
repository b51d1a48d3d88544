"""Diversity-aware genetic algorithm over Frenet-encoded roads.

Survivors of an epoch are chosen in two stages: the best ``select_f1`` roads
by predicted OOB mass, then the ``select_f2`` most isolated of those by median
curvature-space distance.  Near-duplicates are barred from reproduction, not
from survival.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from roadgen.geometry import (
    BLOCK_SIZE,
    MAP_SIZE,
    STEP,
    RoadGenome,
    distance_matrix,
    is_valid,
    smooth,
)

log = logging.getLogger(__name__)

Scorer = Callable[[Sequence[RoadGenome]], np.ndarray]


class EvolutionError(RuntimeError):
    pass


@dataclass(frozen=True)
class GAConfig:
    p_crossover: float = 0.8
    p_2crossover: float = 0.4
    p_swap: float = 0.4
    p_mutation: float = 0.2
    population_size: int = 300
    select_f1: int = 300
    select_f2: int = 200
    epochs: int = 50
    mutation_range: tuple[float, float] = (-0.7, 0.7)
    mutation_halfwidth: int = 3
    swap_len_range: tuple[int, int] = (5, 15)
    dedup_threshold: float = 0.2
    smoothing_factor: float = 0.01
    init_range: tuple[float, float] = (-0.2, 0.2)
    init_max_mutations: int = 4
    block_size: int = BLOCK_SIZE
    step: float = STEP
    map_size: float = MAP_SIZE
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("p_crossover", "p_2crossover", "p_swap", "p_mutation"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.select_f2 > self.select_f1:
            raise ValueError("select_f2 must not exceed select_f1")
        if self.dedup_threshold <= 0:
            raise ValueError("dedup_threshold must be positive")
        if self.population_size < 1 or self.select_f2 < 1:
            raise ValueError("population sizes must be positive")


@dataclass(frozen=True, eq=False)
class Member:
    genome: RoadGenome
    f1: float
    f2: float = 0.0


@dataclass(frozen=True)
class Population:
    members: tuple[Member, ...]
    epoch: int = 0

    @property
    def genomes(self) -> list[RoadGenome]:
        return [m.genome for m in self.members]

    def __len__(self):
        return len(self.members)


@dataclass
class EpochMetrics:
    epoch: int
    mean_oob_probability: float
    median_pairwise_distance: float
    pool_size: int
    n_invalid_offspring_dropped: int


@dataclass
class RunResult:
    population: Population
    initial: Population
    metrics: list[EpochMetrics] = field(default_factory=list)


# -- operators ---------------------------------------------------------------


def _check_pair(a: RoadGenome, b: RoadGenome):
    if len(a) != len(b):
        raise ValueError("parents must have equal length")


def crossover(a: RoadGenome, b: RoadGenome, rng: np.random.Generator,
              k: Optional[int] = None) -> tuple[RoadGenome, RoadGenome]:
    _check_pair(a, b)
    n = len(a)
    if k is None:
        k = int(rng.integers(1, n))
    ca, cb = a.curvatures, b.curvatures
    return (
        a.with_curvatures(np.concatenate([ca[:k], cb[k:]])),
        a.with_curvatures(np.concatenate([cb[:k], ca[k:]])),
    )


def k_crossover(a: RoadGenome, b: RoadGenome, rng: np.random.Generator,
                cuts: Optional[tuple[int, int]] = None) -> tuple[RoadGenome, RoadGenome]:
    _check_pair(a, b)
    n = len(a)
    if cuts is None:
        cuts = tuple(sorted(int(v) for v in rng.choice(np.arange(1, n), size=2, replace=False)))
    k1, k2 = cuts
    ca, cb = a.curvatures.copy(), b.curvatures.copy()
    ca[k1:k2], cb[k1:k2] = b.curvatures[k1:k2], a.curvatures[k1:k2]
    return a.with_curvatures(ca), a.with_curvatures(cb)


def swap(g: RoadGenome, rng: np.random.Generator, len_range: tuple[int, int] = (5, 15),
         windows: Optional[tuple[int, int, int]] = None) -> RoadGenome:
    """Exchange two non-overlapping curvature windows of equal length.

    ``windows`` fixes ``(length, start_1, start_2)`` for deterministic use.
    """
    n = len(g)
    lo, hi = len_range
    if n < 2 * hi:
        raise ValueError(f"genome of length {n} too short for swap windows up to {hi}")
    if windows is None:
        length = int(rng.integers(lo, hi + 1))
        # place two windows and the free slack around them uniformly
        slack = n - 2 * length
        gaps = np.sort(rng.integers(0, slack + 1, size=2))
        i = int(gaps[0])
        j = int(gaps[1]) + length
    else:
        length, i, j = windows
        if i > j:
            i, j = j, i
        if i < 0 or j + length > n or i + length > j:
            raise ValueError("swap windows overlap or fall outside the genome")
    c = g.curvatures.copy()
    c[i:i + length], c[j:j + length] = g.curvatures[j:j + length], g.curvatures[i:i + length]
    return g.with_curvatures(c)


def mutate(g: RoadGenome, rng: np.random.Generator, value_range: tuple[float, float] = (-0.7, 0.7),
           halfwidth: int = 3, index: Optional[int] = None,
           value: Optional[float] = None) -> RoadGenome:
    """Drop a constant-curvature bend of width ``2 * halfwidth + 1`` onto the road."""
    n = len(g)
    if index is None:
        index = int(rng.integers(0, n))
    if value is None:
        value = float(rng.uniform(*value_range))
    c = g.curvatures.copy()
    c[max(0, index - halfwidth):min(n - 1, index + halfwidth) + 1] = value
    return g.with_curvatures(c)


# -- population --------------------------------------------------------------


def straight(config: GAConfig = GAConfig()) -> RoadGenome:
    return RoadGenome.from_curvatures(np.zeros(config.block_size), config.step)


def random_genome(rng: np.random.Generator, config: GAConfig = GAConfig()) -> RoadGenome:
    """One smoothed random road; may be invalid."""
    g = straight(config)
    for _ in range(int(rng.integers(1, config.init_max_mutations + 1))):
        g = mutate(g, rng, config.init_range, config.mutation_halfwidth)
    return smooth(g, config.smoothing_factor)


def init_random(n: int, rng: np.random.Generator, config: GAConfig = GAConfig()) -> list[RoadGenome]:
    if n < 1:
        raise ValueError("n must be positive")
    out: list[RoadGenome] = []
    while len(out) < n:
        g = random_genome(rng, config)
        if is_valid(g, config.map_size):
            out.append(g)
    return out


def median_distances(genomes: Sequence[RoadGenome]) -> np.ndarray:
    """Median distance of each genome to every other genome of the set."""
    if len(genomes) < 2:
        raise ValueError("need at least two genomes")
    d = distance_matrix(genomes)
    n = d.shape[0]
    off = d[~np.eye(n, dtype=bool)].reshape(n, n - 1)
    return np.median(off, axis=1)


def eligible_parents(members: Sequence[Member], threshold: float) -> list[int]:
    """Greedy near-duplicate filter in f1-descending order (stable on ties)."""
    if not members:
        return []
    order = sorted(range(len(members)), key=lambda i: -members[i].f1)
    c = np.stack([members[i].genome.curvatures for i in order])
    kept: list[int] = []
    kept_rows: list[int] = []
    for row, idx in enumerate(order):
        if kept_rows:
            d = np.linalg.norm(c[kept_rows] - c[row], axis=1)
            if np.any(d < threshold):
                continue
        kept.append(idx)
        kept_rows.append(row)
    return kept


def make_offspring(parents: Sequence[RoadGenome], rng: np.random.Generator,
                   config: GAConfig) -> list[RoadGenome]:
    """Apply each operator independently with its configured probability.

    Every eligible parent is paired with a uniformly drawn partner for each
    crossover operator; swap and mutation act on the parent alone.
    """
    n = len(parents)
    kids: list[RoadGenome] = []
    for i, parent in enumerate(parents):
        if n > 1 and rng.random() < config.p_crossover:
            kids.extend(crossover(parent, parents[int(rng.integers(0, n))], rng))
        if n > 1 and rng.random() < config.p_2crossover:
            kids.extend(k_crossover(parent, parents[int(rng.integers(0, n))], rng))
        if rng.random() < config.p_swap:
            kids.append(swap(parent, rng, config.swap_len_range))
        if rng.random() < config.p_mutation:
            kids.append(mutate(parent, rng, config.mutation_range, config.mutation_halfwidth))
    return kids


def select(genomes: Sequence[RoadGenome], f1: np.ndarray, config: GAConfig) -> list[Member]:
    """Top ``select_f1`` by f1, then top ``select_f2`` of those by f2."""
    f1 = np.asarray(f1, dtype=float)
    by_f1 = np.argsort(-f1, kind="stable")[: config.select_f1]
    subset = [genomes[i] for i in by_f1]
    if len(subset) < 2:
        return [Member(g, float(f1[i]), 0.0) for g, i in zip(subset, by_f1)]
    f2 = median_distances(subset)
    by_f2 = np.argsort(-f2, kind="stable")[: config.select_f2]
    return [Member(subset[j], float(f1[by_f1[j]]), float(f2[j])) for j in by_f2]


def evolve_epoch(pop: Population, scorer: Scorer, config: GAConfig,
                 rng: np.random.Generator) -> tuple[Population, EpochMetrics]:
    if not pop.members:
        raise EvolutionError("population is empty")
    eligible = eligible_parents(pop.members, config.dedup_threshold)
    if not eligible:
        raise EvolutionError("no reproduction-eligible parents")
    parents = [pop.members[i].genome for i in eligible]

    raw = make_offspring(parents, rng, config)
    smoothed = [smooth(g, config.smoothing_factor) for g in raw]
    kids = [g for g in smoothed if is_valid(g, config.map_size)]
    dropped = len(smoothed) - len(kids)

    kid_f1 = np.asarray(scorer(kids), dtype=float) if kids else np.empty(0)
    pool = pop.genomes + kids
    pool_f1 = np.concatenate([[m.f1 for m in pop.members], kid_f1])
    survivors = select(pool, pool_f1, config)
    new = Population(tuple(survivors), pop.epoch + 1)
    metrics = EpochMetrics(
        epoch=new.epoch,
        mean_oob_probability=mean_oob_probability(new, config.block_size),
        median_pairwise_distance=float(np.median([m.f2 for m in survivors])),
        pool_size=len(pool),
        n_invalid_offspring_dropped=dropped,
    )
    log.info("epoch %d: mean p=%.4f median d=%.4f pool=%d dropped=%d", metrics.epoch,
             metrics.mean_oob_probability, metrics.median_pairwise_distance, len(pool), dropped)
    return new, metrics


def mean_oob_probability(pop: Population, block_size: int = BLOCK_SIZE) -> float:
    return float(np.mean([m.f1 for m in pop.members]) / block_size)


def initial_population(scorer: Scorer, config: GAConfig, rng: np.random.Generator) -> Population:
    genomes = init_random(config.population_size, rng, config)
    f1 = np.asarray(scorer(genomes), dtype=float)
    f2 = median_distances(genomes) if len(genomes) > 1 else np.zeros(1)
    return Population(tuple(Member(g, float(a), float(b)) for g, a, b in zip(genomes, f1, f2)), 0)


def run(config: GAConfig, scorer: Scorer,
        on_epoch: Optional[Callable[[Population, EpochMetrics], None]] = None) -> RunResult:
    rng = np.random.default_rng(config.rng_seed)
    pop = initial_population(scorer, config, rng)
    result = RunResult(population=pop, initial=pop)
    for _ in range(config.epochs):
        pop, metrics = evolve_epoch(pop, scorer, config, rng)
        result.metrics.append(metrics)
        if on_epoch is not None:
            on_epoch(pop, metrics)
    result.population = pop
    return result


def with_seed(config: GAConfig, seed: int) -> GAConfig:
    return replace(config, rng_seed=seed)
