from collections import Counter
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import genome_of
from roadgen import discriminator as D
from roadgen.evolution import (
    EvolutionError,
    GAConfig,
    Member,
    Population,
    crossover,
    eligible_parents,
    evolve_epoch,
    init_random,
    initial_population,
    k_crossover,
    median_distances,
    mutate,
    run,
    select,
    swap,
)
from roadgen.geometry import RoadGenome, distance_matrix, genome_distance, is_valid

SMALL = GAConfig(population_size=40, select_f1=40, select_f2=25, epochs=3, rng_seed=3)


@pytest.fixture(scope="module")
def scorer():
    """Untrained small discriminator: cheap, deterministic, genome-sensitive."""
    model = D.build(D.DiscriminatorConfig(d_model=16, n_layers=1, n_heads=2, dropout=0.0, seed=1))
    return model.fitness


def random_pair(seed):
    rng = np.random.default_rng(seed)
    return (RoadGenome.from_curvatures(rng.uniform(-0.1, 0.1, 50)),
            RoadGenome.from_curvatures(rng.uniform(-0.1, 0.1, 50)), rng)


def multiset(*genomes):
    return Counter(v for g in genomes for v in g.curvatures.tolist())


class TestCrossover:
    def test_identical_parents(self, rng):
        a = genome_of(0.05)
        assert crossover(a, a, rng) == (a, a)

    def test_fixed_cut(self, rng):
        o1, o2 = crossover(genome_of(0.1), genome_of(-0.1), rng, k=25)
        np.testing.assert_array_equal(o1.curvatures, [0.1] * 25 + [-0.1] * 25)
        np.testing.assert_array_equal(o2.curvatures, [-0.1] * 25 + [0.1] * 25)
        np.testing.assert_array_equal(o1.arc_lengths, np.arange(1, 51))

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_preserves_multiset_and_length(self, seed):
        a, b, rng = random_pair(seed)
        kids = crossover(a, b, rng)
        assert all(len(k) == 50 for k in kids)
        assert multiset(*kids) == multiset(a, b)

    def test_length_mismatch(self, rng):
        with pytest.raises(ValueError):
            crossover(genome_of(0.0, 50), genome_of(0.0, 40), rng)


class TestKCrossover:
    def test_fixed_cuts(self, rng):
        a, b = genome_of(0.1), genome_of(-0.1)
        o1, o2 = k_crossover(a, b, rng, cuts=(10, 20))
        np.testing.assert_array_equal(o1.curvatures, [0.1] * 10 + [-0.1] * 10 + [0.1] * 30)
        np.testing.assert_array_equal(o2.curvatures, [-0.1] * 10 + [0.1] * 10 + [-0.1] * 30)

    def test_identical_parents(self, rng):
        a = genome_of(0.02)
        assert k_crossover(a, a, rng) == (a, a)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_preserves_multiset(self, seed):
        a, b, rng = random_pair(seed)
        kids = k_crossover(a, b, rng)
        assert all(len(k) == 50 for k in kids)
        assert multiset(*kids) == multiset(a, b)


class TestSwap:
    def test_identical_windows(self, rng):
        g = genome_of(0.03)
        assert swap(g, rng) == g

    def test_fixed_windows(self):
        c = np.arange(50) / 1000
        out = swap(RoadGenome.from_curvatures(c), None, windows=(5, 2, 30)).curvatures
        np.testing.assert_array_equal(out[2:7], c[30:35])
        np.testing.assert_array_equal(out[30:35], c[2:7])
        outside = np.ones(50, dtype=bool)
        outside[2:7] = outside[30:35] = False
        np.testing.assert_array_equal(out[outside], c[outside])

    def test_overlapping_windows_rejected(self):
        with pytest.raises(ValueError):
            swap(genome_of(0.0), None, windows=(10, 0, 5))

    def test_short_genome_rejected(self, rng):
        with pytest.raises(ValueError):
            swap(genome_of(0.0, 20), rng)

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_random_windows(self, seed):
        rng = np.random.default_rng(seed)
        c = rng.permutation(50) / 1000.0  # distinct values reveal the moved windows
        out = swap(RoadGenome.from_curvatures(c), rng).curvatures
        assert len(out) == 50
        assert sorted(out) == sorted(c)
        moved = np.flatnonzero(out != c)
        assert 10 <= moved.size <= 30 and moved.size % 2 == 0


class TestMutate:
    def test_window(self, rng):
        out = mutate(genome_of(0.0), rng, index=25, value=0.5).curvatures
        np.testing.assert_array_equal(np.flatnonzero(out), np.arange(22, 29))
        assert np.all(out[22:29] == 0.5)

    def test_clamped_window(self, rng):
        out = mutate(genome_of(0.0), rng, index=0, value=0.5).curvatures
        np.testing.assert_array_equal(np.flatnonzero(out), np.arange(0, 4))
        out = mutate(genome_of(0.0), rng, index=49, value=0.5).curvatures
        np.testing.assert_array_equal(np.flatnonzero(out), np.arange(46, 50))

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_value_in_range(self, seed):
        rng = np.random.default_rng(seed)
        out = mutate(genome_of(0.0), rng).curvatures
        changed = out[out != 0]
        assert len(out) == 50
        assert changed.size <= 7
        assert np.all((-0.7 <= changed) & (changed <= 0.7))


class TestInit:
    def test_valid_and_deterministic(self):
        a = init_random(20, np.random.default_rng(9))
        b = init_random(20, np.random.default_rng(9))
        assert a == b
        assert all(is_valid(g) for g in a)

    def test_spread(self):
        genomes = init_random(500, np.random.default_rng(0))
        # greedy packing: count genomes pairwise farther than 0.2 apart
        picked = []
        for g in genomes:
            if all(genome_distance(g, p) > 0.2 for p in picked):
                picked.append(g)
        assert len(picked) >= 10

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            init_random(0, np.random.default_rng(0))


class TestConfig:
    @pytest.mark.parametrize("kwargs", [
        {"select_f1": 10, "select_f2": 20},
        {"p_swap": 1.5},
        {"dedup_threshold": 0.0},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            GAConfig(**kwargs)


def members_from(curvature_rows, f1):
    return [Member(RoadGenome.from_curvatures(c), float(f)) for c, f in zip(curvature_rows, f1)]


class TestSelection:
    def test_eligible_greedy(self):
        base = np.zeros(50)
        near = base.copy()
        near[0] = 0.1  # 0.1 from base
        far = base.copy()
        far[0] = 0.5
        members = members_from([base, near, far], [1.0, 2.0, 0.5])
        assert eligible_parents(members, 0.2) == [1, 2]

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_eligible_pairwise_separated(self, seed):
        rng = np.random.default_rng(seed)
        rows = rng.normal(0, 0.03, (40, 50))
        members = members_from(rows, rng.random(40))
        kept = eligible_parents(members, 0.2)
        d = distance_matrix([members[i].genome for i in kept])
        assert np.all(d[~np.eye(len(kept), dtype=bool)] >= 0.2)
        # every excluded member sits near a kept member with higher or equal f1
        for i in set(range(40)) - set(kept):
            assert any(genome_distance(members[i].genome, members[j].genome) < 0.2
                       and members[j].f1 >= members[i].f1 for j in kept)

    def test_select_dominance(self, rng):
        genomes = [RoadGenome.from_curvatures(rng.uniform(-0.1, 0.1, 50)) for _ in range(60)]
        f1 = rng.random(60)
        cfg = GAConfig(select_f1=30, select_f2=10)
        survivors = select(genomes, f1, cfg)
        assert len(survivors) == 10
        cutoff = np.sort(f1)[::-1][29]
        assert all(m.f1 >= cutoff for m in survivors)
        # f2 ranks within the f1 subset
        top = [genomes[i] for i in np.argsort(-f1)[:30]]
        f2 = median_distances(top)
        assert sorted(m.f2 for m in survivors) == pytest.approx(sorted(np.sort(f2)[::-1][:10]))

    def test_median_distances(self):
        gs = [genome_of(0.0), genome_of(0.01), genome_of(0.03)]
        d = median_distances(gs)
        s = np.sqrt(50)
        assert d == pytest.approx([0.02 * s, 0.015 * s, 0.025 * s])


class TestEpoch:
    def test_bounds_and_validity(self, scorer):
        rng = np.random.default_rng(SMALL.rng_seed)
        pop = initial_population(scorer, SMALL, rng)
        new, metrics = evolve_epoch(pop, scorer, SMALL, rng)
        assert len(new) <= SMALL.select_f2
        assert new.epoch == 1
        assert all(is_valid(m.genome) for m in new.members)
        assert metrics.pool_size >= len(pop)

    def test_survivors_beat_random_subset(self, scorer):
        cfg = replace(SMALL, select_f1=30, select_f2=20)
        rng = np.random.default_rng(5)
        pop = initial_population(scorer, replace(cfg, population_size=40), rng)
        state = rng.bit_generator.state
        new, metrics = evolve_epoch(pop, scorer, cfg, rng)
        # rebuild the same pool to draw the random-subset oracle
        rng.bit_generator.state = state
        parents = [pop.members[i].genome for i in eligible_parents(pop.members, cfg.dedup_threshold)]
        from roadgen.evolution import make_offspring
        from roadgen.geometry import smooth
        kids = [k for k in (smooth(g, cfg.smoothing_factor) for g in make_offspring(parents, rng, cfg))
                if is_valid(k)]
        pool_f1 = np.concatenate([[m.f1 for m in pop.members], scorer(kids)])
        assert len(pool_f1) == metrics.pool_size
        oracle = np.random.default_rng(0)
        random_means = [pool_f1[oracle.choice(len(pool_f1), len(new), replace=False)].mean()
                        for _ in range(200)]
        assert np.mean([m.f1 for m in new.members]) >= max(random_means)

    def test_parent_f1_is_kept(self, scorer):
        rng = np.random.default_rng(1)
        pop = initial_population(scorer, SMALL, rng)
        new, _ = evolve_epoch(pop, scorer, SMALL, rng)
        rescored = scorer(new.genomes)
        np.testing.assert_allclose([m.f1 for m in new.members], rescored, rtol=1e-6)

    def test_empty_population(self, scorer):
        with pytest.raises(EvolutionError):
            evolve_epoch(Population(()), scorer, SMALL, np.random.default_rng(0))


class TestRun:
    def test_zero_epochs(self, scorer):
        result = run(replace(SMALL, epochs=0), scorer)
        assert result.population is result.initial
        assert result.metrics == []

    def test_metrics_and_determinism(self, scorer):
        a = run(SMALL, scorer)
        b = run(SMALL, scorer)
        assert len(a.metrics) == SMALL.epochs
        assert a.population.genomes == b.population.genomes
        assert [m.f1 for m in a.population.members] == [m.f1 for m in b.population.members]
        assert a.metrics == b.metrics
        assert all(len(g) == 50 for g in a.population.genomes)
