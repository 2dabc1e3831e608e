"""Toolset introspection: complexity, similarity graph, community count.

The tool graph connects tools whose docstring embeddings agree above a
threshold; Louvain community detection over it estimates how many
functional classes a toolset covers. Complexity is decision points + 1
per tool.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field

import numpy as np

from .errors import MissingEpochMetaError, SyntaxShapeError
from .model import Toolset
from .snippets import cyclomatic_complexity

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ToolGraph:
    nodes: tuple[str, ...]
    edges: tuple[tuple[str, str, float], ...]  # (u, v, weight), u < v, no self-loops
    threshold: float


@dataclass(frozen=True)
class AnalysisReport:
    n_tools: int
    avg_complexity: float
    n_classes: int
    modularity: float
    per_tool_complexity: dict[str, int] = field(default_factory=dict)


def complexity_stats(ts: Toolset) -> tuple[float, dict[str, int]]:
    """Mean cyclomatic complexity and the per-tool breakdown.

    Unparseable tools are logged and left out of the mean.
    """
    per_tool: dict[str, int] = {}
    for tool in ts:
        try:
            per_tool[tool.id] = cyclomatic_complexity(tool.code)
        except SyntaxShapeError as exc:
            log.warning("tool %s excluded from complexity stats: %s", tool.id, exc)
    avg = sum(per_tool.values()) / len(per_tool) if per_tool else 0.0
    return avg, per_tool


def build_tool_graph(ts: Toolset, threshold: float = 0.7, embedder=None) -> ToolGraph:
    """Edges between tools whose docstring embeddings reach ``threshold``.

    Stored embeddings are used; pass an embedder only to recompute them
    from the docstring texts instead.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must be in (0, 1]")
    ids = [t.id for t in ts]
    if embedder is not None:
        vectors = [embedder.embed(t.docstring) if t.docstring.strip() else None for t in ts]
        vectors = [
            v if v is not None else np.zeros(1) for v in vectors
        ]
        dim = max((len(v) for v in vectors), default=1)
        mat = np.zeros((len(ids), dim))
        for i, v in enumerate(vectors):
            mat[i, : len(v)] = v
    else:
        mat = np.array([t.emb.doc for t in ts], dtype=np.float64)
    edges = []
    if len(ids) > 1:
        sims = mat @ mat.T
        for i in range(len(ids)):
            for j in range(i + 1, len(ids)):
                weight = float(min(1.0, sims[i, j]))
                if weight >= threshold:
                    u, v = sorted((ids[i], ids[j]))
                    edges.append((u, v, weight))
    edges.sort()
    return ToolGraph(nodes=tuple(ids), edges=tuple(edges), threshold=threshold)


def modularity(graph: ToolGraph, communities: dict[str, int]) -> float:
    """Newman modularity of a partition of the (weighted) tool graph."""
    m = sum(w for _, _, w in graph.edges)
    if m == 0:
        return 0.0
    degree: dict[str, float] = {n: 0.0 for n in graph.nodes}
    for u, v, w in graph.edges:
        degree[u] += w
        degree[v] += w
    intra: dict[int, float] = {}
    total: dict[int, float] = {}
    for u, v, w in graph.edges:
        if communities[u] == communities[v]:
            intra[communities[u]] = intra.get(communities[u], 0.0) + w
    for node, k in degree.items():
        c = communities[node]
        total[c] = total.get(c, 0.0) + k
    return sum(
        intra.get(c, 0.0) / m - (total[c] / (2.0 * m)) ** 2 for c in total
    )


@dataclass(frozen=True)
class LouvainResult:
    communities: dict[str, int]
    modularity: float
    pass_modularity: tuple[float, ...]  # after each local-moving pass

    @property
    def n_communities(self) -> int:
        return len(set(self.communities.values())) if self.communities else 0


def louvain(graph: ToolGraph, seed: int = 0) -> LouvainResult:
    """Two-phase Louvain: greedy local moves, then graph aggregation,
    repeated until no move improves modularity.

    Deterministic under a fixed seed: the node visit order is shuffled
    once per level from the seeded RNG, moves happen only on strict
    gains, and gain ties resolve to the smallest community label.
    Isolated nodes stay singletons.
    """
    if not graph.nodes:
        return LouvainResult({}, 0.0, ())

    rng = random.Random(seed)
    # level-0 graph: adjacency with float weights, no self-loops yet
    nodes: list[int] = list(range(len(graph.nodes)))
    index = {name: i for i, name in enumerate(graph.nodes)}
    adj: dict[int, dict[int, float]] = {i: {} for i in nodes}
    loops: dict[int, float] = {i: 0.0 for i in nodes}
    for u, v, w in graph.edges:
        iu, iv = index[u], index[v]
        adj[iu][iv] = adj[iu].get(iv, 0.0) + w
        adj[iv][iu] = adj[iv].get(iu, 0.0) + w

    # maps original node index -> community at the current level
    membership = {i: i for i in nodes}
    pass_history: list[float] = []

    while True:
        degree = {
            i: sum(adj[i].values()) + 2.0 * loops[i] for i in nodes
        }
        m2 = sum(degree.values())
        community = {i: i for i in nodes}
        sigma_tot = {i: degree[i] for i in nodes}

        any_move = False
        if m2 > 0:
            order = sorted(nodes)
            rng.shuffle(order)
            improved = True
            while improved:
                improved = False
                for node in order:
                    home = community[node]
                    k_i = degree[node]
                    # detach, then reinsert wherever the gain is largest;
                    # staying put is the baseline, so only strict gains move
                    sigma_tot[home] -= k_i
                    community[node] = -1
                    weight_to: dict[int, float] = {}
                    for nbr, w in adj[node].items():
                        c = community[nbr]
                        if c != -1:
                            weight_to[c] = weight_to.get(c, 0.0) + w

                    def gain(comm: int) -> float:
                        return weight_to.get(comm, 0.0) - sigma_tot[comm] * k_i / m2

                    best, best_gain = home, gain(home)
                    for comm in sorted(weight_to):
                        if comm == home:
                            continue
                        g = gain(comm)
                        if g > best_gain:
                            best, best_gain = comm, g
                    community[node] = best
                    sigma_tot[best] += k_i
                    if best != home:
                        improved = True
                        any_move = True

        membership = {orig: community[level_node] for orig, level_node in membership.items()}
        by_name = {graph.nodes[orig]: c for orig, c in membership.items()}
        pass_history.append(modularity(graph, by_name))

        if not any_move or len(set(community.values())) == len(nodes):
            break

        # aggregate communities into super-nodes
        comm_ids = sorted(set(community.values()))
        relabel = {c: i for i, c in enumerate(comm_ids)}
        new_nodes = list(range(len(comm_ids)))
        new_adj: dict[int, dict[int, float]] = {i: {} for i in new_nodes}
        new_loops: dict[int, float] = {i: 0.0 for i in new_nodes}
        for i in nodes:
            ci = relabel[community[i]]
            new_loops[ci] += loops[i]
            for j, w in adj[i].items():
                cj = relabel[community[j]]
                if ci == cj:
                    if i < j:
                        new_loops[ci] += w
                else:
                    new_adj[ci][cj] = new_adj[ci].get(cj, 0.0) + w
        nodes, adj, loops = new_nodes, new_adj, new_loops
        membership = {orig: relabel[c] for orig, c in membership.items()}

    # stable labels: 0..C-1 in order of first appearance over sorted node names
    final: dict[str, int] = {}
    relabel2: dict[int, int] = {}
    for name in sorted(graph.nodes):
        c = membership[index[name]]
        if c not in relabel2:
            relabel2[c] = len(relabel2)
        final[name] = relabel2[c]
    return LouvainResult(final, modularity(graph, final), tuple(pass_history))


def scaling_slices(ts: Toolset, epoch_marks: list[int]) -> list[Toolset]:
    """Cumulative sub-toolsets: each mark keeps tools created at epochs
    up to and including it, for scaling studies."""
    epochs = ts.meta.get("tool_epochs")
    if epochs is None:
        raise MissingEpochMetaError("toolset meta has no tool_epochs record")
    missing = [t.id for t in ts if t.id not in epochs]
    if missing:
        raise MissingEpochMetaError(f"no creation epoch recorded for tools {missing[:3]}")
    slices = []
    for mark in epoch_marks:
        kept = [t for t in ts if epochs[t.id] <= mark]
        meta = dict(ts.meta)
        meta["slice_epoch_mark"] = mark
        meta["tool_epochs"] = {t.id: epochs[t.id] for t in kept}
        slices.append(Toolset(kept, meta=meta))
    return slices


def analyze(ts: Toolset, threshold: float = 0.7, seed: int = 7) -> AnalysisReport:
    avg, per_tool = complexity_stats(ts)
    graph = build_tool_graph(ts, threshold=threshold)
    result = louvain(graph, seed=seed)
    return AnalysisReport(
        n_tools=len(ts),
        avg_complexity=avg,
        n_classes=result.n_communities,
        modularity=result.modularity,
        per_tool_complexity=per_tool,
    )
