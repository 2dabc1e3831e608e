import random

import pytest

from conftest import make_problem
from toolforge.errors import CorpusTooSmallError, EmptySelectionError
from toolforge.sampling import (
    SamplerConfig,
    SamplerState,
    init_sample,
    run_sampler,
    run_sampler_state,
    sample_epoch,
)


def corpus_of(n: int):
    return [make_problem(f"p{i:03d}", f"problem number {i}") for i in range(n)]


def random_sim_matrix(rng: random.Random, ids):
    sims = {}
    for i, a in enumerate(ids):
        for b in ids[i:]:
            value = round(rng.random(), 3)  # coarse values force tie handling
            sims[(a, b)] = value
            sims[(b, a)] = value
    return lambda a, b: sims[(a, b)]


def brute_force_pick(selected, remaining, sims):
    """Exhaustive argmin of max-similarity; ties on ascending id."""
    best_id, best_score = None, None
    for candidate in sorted(remaining):
        score = max(sims(candidate, member) for member in selected)
        if best_score is None or score < best_score:
            best_id, best_score = candidate, score
    return best_id


class TestInitSample:
    def test_exhaustive_draw(self):
        corpus = corpus_of(5)
        state = init_sample(corpus, SamplerConfig(n_init=5, k_per_epoch=1, epochs=0, seed=1))
        assert sorted(state.selected) == [p.id for p in corpus]
        assert state.remaining == set()

    def test_deterministic(self):
        corpus = corpus_of(10)
        cfg = SamplerConfig(n_init=3, k_per_epoch=1, epochs=0, seed=99)
        assert init_sample(corpus, cfg).selected == init_sample(corpus, cfg).selected

    def test_corpus_too_small(self):
        with pytest.raises(CorpusTooSmallError):
            init_sample(corpus_of(2), SamplerConfig(n_init=3, k_per_epoch=1, epochs=0, seed=0))


class TestSampleEpoch:
    def test_moves_least_similar(self):
        sims = {("b", "a"): 0.9, ("c", "a"): 0.1}
        state = SamplerState(selected=["a"], remaining={"b", "c"})
        out = sample_epoch(state, lambda x, y: sims[(x, y)], k=1)
        assert out.selected == ["a", "c"]
        assert out.remaining == {"b"}
        assert out.epoch == 1

    def test_empty_remaining_only_bumps_epoch(self):
        state = SamplerState(selected=["a"], remaining=set(), epoch=3)
        out = sample_epoch(state, lambda x, y: 0.0, k=5)
        assert out.selected == ["a"] and out.epoch == 4

    def test_saturating_k(self):
        state = SamplerState(selected=["a"], remaining={"b", "c"})
        out = sample_epoch(state, lambda x, y: 0.5, k=10)
        assert set(out.selected) == {"a", "b", "c"}

    def test_empty_selection_rejected(self):
        with pytest.raises(EmptySelectionError):
            sample_epoch(SamplerState(selected=[], remaining={"a"}), lambda x, y: 0.0, k=1)

    def test_growth_law(self):
        rng = random.Random(0)
        corpus = corpus_of(9)
        sims = random_sim_matrix(rng, [p.id for p in corpus])
        state = init_sample(corpus, SamplerConfig(n_init=2, k_per_epoch=3, epochs=0, seed=4))
        for _ in range(4):
            expected = len(state.selected) + min(3, len(state.remaining))
            state = sample_epoch(state, sims, k=3)
            assert len(state.selected) == expected
            assert set(state.selected) | state.remaining == {p.id for p in corpus}
            assert not set(state.selected) & state.remaining

    def test_oracle_equivalence_k1(self):
        rng = random.Random(1234)
        for _ in range(100):
            n = rng.randint(2, 12)
            corpus = corpus_of(n)
            ids = [p.id for p in corpus]
            sims = random_sim_matrix(rng, ids)
            n_init = rng.randint(1, n - 1)
            state = init_sample(
                corpus, SamplerConfig(n_init=n_init, k_per_epoch=1, epochs=0, seed=rng.randint(0, 99))
            )
            expected = brute_force_pick(state.selected, state.remaining, sims)
            out = sample_epoch(state, sims, k=1)
            assert out.selected[-1] == expected

    def test_diversity_property(self):
        rng = random.Random(77)
        corpus = corpus_of(10)
        ids = [p.id for p in corpus]
        sims = random_sim_matrix(rng, ids)
        state = init_sample(corpus, SamplerConfig(n_init=4, k_per_epoch=1, epochs=0, seed=3))
        out = sample_epoch(state, sims, k=1)
        added = out.selected[-1]
        added_score = max(sims(added, m) for m in state.selected)
        for other in out.remaining:
            assert added_score <= max(sims(other, m) for m in state.selected)


class TestRunSampler:
    def test_paper_counts_2000(self):
        corpus = corpus_of(2100)
        cfg = SamplerConfig(n_init=1000, k_per_epoch=100, epochs=10, seed=0)
        selected = run_sampler(corpus, cfg, lambda a, b: 0.5)
        assert len(selected) == 2000

    def test_paper_counts_500(self):
        corpus = corpus_of(600)
        cfg = SamplerConfig(n_init=200, k_per_epoch=100, epochs=3, seed=0)
        selected = run_sampler(corpus, cfg, lambda a, b: 0.5)
        assert len(selected) == 500

    def test_zero_epochs_is_initial_draw(self):
        corpus = corpus_of(8)
        cfg = SamplerConfig(n_init=3, k_per_epoch=2, epochs=0, seed=5)
        selected = run_sampler(corpus, cfg, lambda a, b: 0.0)
        assert [p.id for p in selected] == init_sample(corpus, cfg).selected

    def test_incremental_identical(self):
        rng = random.Random(8)
        corpus = corpus_of(40)
        sims = random_sim_matrix(rng, [p.id for p in corpus])
        cfg = SamplerConfig(n_init=6, k_per_epoch=4, epochs=5, seed=21)
        plain = run_sampler(corpus, cfg, sims)
        fast = run_sampler(corpus, cfg, sims, incremental=True)
        assert [p.id for p in plain] == [p.id for p in fast]

    def test_selection_epochs_recorded(self):
        corpus = corpus_of(10)
        cfg = SamplerConfig(n_init=4, k_per_epoch=2, epochs=2, seed=2)
        state = run_sampler_state(corpus, cfg, lambda a, b: 0.5)
        epochs = [state.selection_epoch[pid] for pid in state.selected]
        assert epochs == [0] * 4 + [1] * 2 + [2] * 2
