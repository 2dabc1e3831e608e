"""Iterative min-max problem sampling.

Starting from a random seed set Q, each epoch scores every remaining
problem by its highest similarity to anything already in Q and moves the
k lowest-scoring (most novel) problems in. Ties break on ascending
problem id so the output is independent of corpus order.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .embedding import EmbeddingProvider, cosine_sim
from .errors import CorpusTooSmallError, EmptySelectionError
from .model import Problem

SimOracle = Callable[[str, str], float]


@dataclass(frozen=True)
class SamplerConfig:
    n_init: int = 1000
    k_per_epoch: int = 100
    epochs: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.n_init < 1:
            raise ValueError("n_init must be >= 1")
        if self.k_per_epoch < 1:
            raise ValueError("k_per_epoch must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


@dataclass
class SamplerState:
    selected: list[str]
    remaining: set[str]
    epoch: int = 0
    # epoch in which each selected id entered Q; epoch 0 is the random draw
    selection_epoch: dict[str, int] = field(default_factory=dict)


def init_sample(corpus: Sequence[Problem], cfg: SamplerConfig) -> SamplerState:
    """Draw the initial n_init problems uniformly without replacement."""
    if len(corpus) < cfg.n_init:
        raise CorpusTooSmallError(
            f"corpus has {len(corpus)} problems, need at least {cfg.n_init}"
        )
    ids = [p.id for p in corpus]
    rng = random.Random(cfg.seed)
    selected = rng.sample(ids, cfg.n_init)
    state = SamplerState(selected=selected, remaining=set(ids) - set(selected))
    state.selection_epoch = {pid: 0 for pid in selected}
    return state


def sample_epoch(state: SamplerState, sims: SimOracle, k: int) -> SamplerState:
    """Move the k remaining problems least similar to the selected set.

    Scores are taken against Q frozen at epoch start; equal scores break
    on ascending problem id.
    """
    if not state.selected:
        raise EmptySelectionError("cannot score candidates against an empty selection")
    if k < 1:
        raise ValueError("k must be >= 1")
    new_epoch = state.epoch + 1
    if not state.remaining:
        return SamplerState(
            selected=list(state.selected),
            remaining=set(),
            epoch=new_epoch,
            selection_epoch=dict(state.selection_epoch),
        )
    frozen_q = list(state.selected)
    scored = [
        (max(sims(candidate, member) for member in frozen_q), candidate)
        for candidate in state.remaining
    ]
    scored.sort(key=lambda item: (item[0], item[1]))
    movers = [candidate for _, candidate in scored[: min(k, len(scored))]]

    selection_epoch = dict(state.selection_epoch)
    for pid in movers:
        selection_epoch[pid] = new_epoch
    return SamplerState(
        selected=list(state.selected) + movers,
        remaining=state.remaining - set(movers),
        epoch=new_epoch,
        selection_epoch=selection_epoch,
    )


def _incremental_epoch(
    state: SamplerState, sims: SimOracle, k: int, cache: dict[str, float]
) -> SamplerState:
    # cache holds max-sim-to-Q for every remaining id, kept current as Q grows;
    # output must be identical to the recomputing path.
    scored = sorted((cache[c], c) for c in state.remaining)
    movers = [candidate for _, candidate in scored[: min(k, len(scored))]]
    for moved in movers:
        del cache[moved]
    for candidate in cache:
        best = cache[candidate]
        for moved in movers:
            s = sims(candidate, moved)
            if s > best:
                best = s
        cache[candidate] = best
    selection_epoch = dict(state.selection_epoch)
    for pid in movers:
        selection_epoch[pid] = state.epoch + 1
    return SamplerState(
        selected=list(state.selected) + movers,
        remaining=state.remaining - set(movers),
        epoch=state.epoch + 1,
        selection_epoch=selection_epoch,
    )


def run_sampler(
    corpus: Sequence[Problem],
    cfg: SamplerConfig,
    sims: SimOracle,
    incremental: bool = False,
) -> list[Problem]:
    """Initial random draw followed by cfg.epochs min-max epochs.

    Returns the selected problems in selection order. ``incremental``
    switches to a cached max-score update with identical output.
    """
    state = init_sample(corpus, cfg)
    by_id = {p.id: p for p in corpus}

    if incremental and cfg.epochs > 0 and state.remaining:
        cache = {
            c: max(sims(c, member) for member in state.selected)
            for c in state.remaining
        }
        for _ in range(cfg.epochs):
            if not state.remaining:
                state = SamplerState(
                    list(state.selected), set(), state.epoch + 1, dict(state.selection_epoch)
                )
                continue
            state = _incremental_epoch(state, sims, cfg.k_per_epoch, cache)
    else:
        for _ in range(cfg.epochs):
            state = sample_epoch(state, sims, cfg.k_per_epoch)
    return [by_id[pid] for pid in state.selected]


def run_sampler_state(
    corpus: Sequence[Problem], cfg: SamplerConfig, sims: SimOracle
) -> SamplerState:
    """Like run_sampler but returns the full state (per-id selection epochs)."""
    state = init_sample(corpus, cfg)
    for _ in range(cfg.epochs):
        state = sample_epoch(state, sims, cfg.k_per_epoch)
    return state


def embedding_oracle(corpus: Sequence[Problem], provider: EmbeddingProvider) -> SimOracle:
    """Similarity oracle backed by one embedding per problem, computed once."""
    vectors = {p.id: provider.embed(p.text) for p in corpus}

    def sims(a: str, b: str) -> float:
        return cosine_sim(vectors[a], vectors[b])

    return sims
