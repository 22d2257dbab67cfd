import numpy as np
import pytest

from strataudit.population import (
    ConfigurationError,
    ExhaustedStratum,
    PopulationSampler,
    StratifiedPopulation,
    Stratum,
    draw,
    exhausted,
    sample_stream,
    stratum_rngs,
    stratum_weights,
)


def make_stratum(sid, values, counts, u=1.0):
    counts = np.asarray(counts, dtype=np.int64)
    return Stratum(
        sid=sid, size=int(counts.sum()), values=np.asarray(values, float),
        counts=counts, upper_bound=u,
    )


def two_urn_pop(n1=1000, n2=1000):
    return StratifiedPopulation(
        strata=[
            make_stratum(1, [0.0, 1.0], [n1 // 2, n1 - n1 // 2]),
            make_stratum(2, [0.0, 1.0], [n2 // 2, n2 - n2 // 2]),
        ]
    )


class TestWeights:
    def test_equal_strata(self):
        pop = two_urn_pop(1000, 1000)
        assert np.allclose(stratum_weights(pop), [0.5, 0.5])

    def test_pilot_sizes(self):
        pop = two_urn_pop(5294, 22732)
        w = stratum_weights(pop)
        assert w[0] == pytest.approx(5294 / 28026, abs=1e-15)
        assert w[1] == pytest.approx(22732 / 28026, abs=1e-15)
        assert abs(w.sum() - 1.0) < 1e-12

    def test_single_stratum(self):
        pop = StratifiedPopulation(strata=[make_stratum(1, [1.0], [7])])
        assert stratum_weights(pop).tolist() == [1.0]

    def test_empty_stratum_rejected(self):
        with pytest.raises(ConfigurationError):
            make_stratum(1, [1.0], [0])


class TestDraw:
    def test_single_category_always_same(self):
        s = make_stratum(1, [1.0], [5])
        rng = np.random.default_rng(0)
        assert [draw(s, rng) for _ in range(5)] == [1.0] * 5

    def test_two_card_exhaustive(self):
        s = make_stratum(1, [0.0, 2.0], [1, 1], u=2.0)
        rng = np.random.default_rng(3)
        got = sorted(draw(s, rng) for _ in range(2))
        assert got == [0.0, 2.0]
        assert exhausted(s)
        with pytest.raises(ExhaustedStratum):
            draw(s, rng)

    def test_with_replacement_mean(self):
        # law of large numbers: mean of 1e5 draws within 3 SE of 0.96
        s = make_stratum(1, [0.0, 1.0], [40, 960])
        rng = np.random.default_rng(11)
        n = 100_000
        total = sum(draw(s, rng, replacement=True) for _ in range(n))
        se = np.sqrt(0.96 * 0.04 / n)
        assert abs(total / n - 0.96) < 3 * se
        assert not exhausted(s, replacement=True)
        assert s.drawn == n

    def test_exhausted_flags(self):
        s = make_stratum(1, [1.0], [2])
        assert not exhausted(s)
        rng = np.random.default_rng(0)
        draw(s, rng), draw(s, rng)
        assert exhausted(s)

    def test_without_replacement_recovers_multiset(self):
        for seed in range(5):
            s = make_stratum(1, [0.0, 0.5, 1.0], [3, 4, 5])
            rng = np.random.default_rng(seed)
            got = sorted(draw(s, rng) for _ in range(12))
            assert got == sorted([0.0] * 3 + [0.5] * 4 + [1.0] * 5)

    def test_bookkeeping(self):
        s = make_stratum(1, [0.0, 1.0], [5, 5])
        rng = np.random.default_rng(5)
        vals = [draw(s, rng) for _ in range(4)]
        assert s.drawn == 4
        assert s.running_sum == pytest.approx(sum(vals))
        assert int(s.counts.sum()) == 6


class TestDeterminism:
    def test_same_seed_same_stream(self):
        def stream(seed):
            pop = two_urn_pop()
            sampler = PopulationSampler(pop, seed)
            return [sampler.draw(0) for _ in range(50)]

        assert stream(42) == stream(42)
        assert stream(42) != stream(43)

    def test_strata_independent_of_interleaving(self):
        # stratum k's stream is a pure function of (seed, k, index)
        pop1, pop2 = two_urn_pop(), two_urn_pop()
        s1 = PopulationSampler(pop1, 9)
        s2 = PopulationSampler(pop2, 9)
        a1 = [s1.draw(0) for _ in range(30)]
        b1 = [s1.draw(1) for _ in range(30)]
        # interleave the other way round
        b2, a2 = [], []
        for _ in range(30):
            b2.append(s2.draw(1))
            a2.append(s2.draw(0))
        assert a1 == a2
        assert b1 == b2

    def test_sample_stream_matches_urn(self):
        s = make_stratum(1, [0.0, 1.0, 2.0], [10, 20, 5], u=2.0)
        rng = stratum_rngs(4, 1)[0]
        out = sample_stream(s, rng, 35)
        assert sorted(out.tolist()) == sorted([0.0] * 10 + [1.0] * 20 + [2.0] * 5)
        assert s.drawn == 35

    def test_sample_stream_budget_checked(self):
        s = make_stratum(1, [1.0], [3])
        rng = np.random.default_rng(0)
        with pytest.raises(ExhaustedStratum):
            sample_stream(s, rng, 4)


def test_population_copy_is_deep():
    pop = two_urn_pop()
    cp = pop.copy()
    rng = np.random.default_rng(0)
    draw(cp.strata[0], rng)
    assert pop.strata[0].drawn == 0
    assert cp.strata[0].drawn == 1
