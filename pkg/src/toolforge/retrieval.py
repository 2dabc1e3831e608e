"""Multi-view tool retrieval plus the single-view and BM25 baselines.

A query is expanded by the LLM into candidate function names and a
docstring; each of the three views (origin problem, name, docstring)
independently returns its top-k tools by cosine similarity, and tools are
then ranked by how many views they appear in. The top three by frequency
survive, minus anything that occurred in only one view. An empty result
is a valid outcome and signals direct code generation without tools.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence

from .embedding import EmbeddingProvider, cosine_sim, tokenize
from .errors import UnknownToolError
from .llm import LlmProvider, build_messages, load_template, render
from .model import RetrievalQuery, RetrievalResult, Toolset

VIEWS = ("problem", "name", "doc")


@dataclass(frozen=True)
class RetrieverConfig:
    k_problem: int = 10
    k_name: int = 5
    k_doc: int = 10
    select_top: int = 3

    def __post_init__(self):
        for name in ("k_problem", "k_name", "k_doc"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 1 <= self.select_top <= 3:
            raise ValueError("select_top must be in [1, 3]")


_NAMES_RE = re.compile(r"The useful functions are:\s*\[(.*?)\]", re.DOTALL)
_ANSWER_RE = re.compile(r"The final answer is:\s*(.+)")
_IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def _clean_name(raw: str) -> str | None:
    name = raw.strip().strip("'\"`").strip().rstrip(".,;:").strip().strip("'\"`")
    if _IDENT_RE.match(name):
        return name
    name = re.sub(r"[^A-Za-z0-9_]", "", name)
    return name if _IDENT_RE.match(name) else None


def parse_expansion(problem_text: str, response: str) -> RetrievalQuery:
    """Parse the `useful functions` list and `final answer` docstring out
    of an expansion reply; missing names flag the expansion as failed."""
    names: list[str] = []
    matches = _NAMES_RE.findall(response)
    if matches:
        for piece in matches[-1].split(","):
            cleaned = _clean_name(piece)
            if cleaned and cleaned not in names:
                names.append(cleaned)
    docstring = ""
    answers = _ANSWER_RE.findall(response)
    if answers:
        docstring = answers[-1].strip().strip("'\"").strip()
    return RetrievalQuery(
        problem_text=problem_text,
        expanded_names=tuple(names),
        expanded_docstring=docstring,
        expansion_failed=not names,
    )


def expand_query(
    problem_text: str,
    llm: LlmProvider,
    family: str = "math",
    context: str | None = None,
    template_dir=None,
) -> RetrievalQuery:
    """Ask the LLM what it needs: function names f_t and a docstring d_t."""
    tpl = load_template(f"retrieve_{family}", template_dir)
    slots = {"query": problem_text}
    if "table" in tpl.required_slots:
        slots["table"] = context or ""
    response = llm.complete(build_messages(render(tpl, slots)), template_id=tpl.template_id)
    return parse_expansion(problem_text, response)


def view_topk(
    query_text: str | Sequence[str],
    view: str,
    ts: Toolset,
    k: int,
    embedder: EmbeddingProvider,
) -> list[str]:
    """Top-k tool ids for one view, descending cosine, ties on id.

    For the name view the query may be several candidate names; each tool
    scores its best match over them.
    """
    if view not in VIEWS:
        raise ValueError(f"view must be one of {VIEWS}")
    if k <= 0 or len(ts) == 0:
        return []
    texts = [query_text] if isinstance(query_text, str) else list(query_text)
    texts = [t for t in texts if t and t.strip()]
    if not texts:
        return []
    query_vecs = [embedder.embed(t) for t in texts]
    scored = sorted(
        (-max(cosine_sim(qv, getattr(tool.emb, view)) for qv in query_vecs), tool.id)
        for tool in ts
    )
    return [tid for _, tid in scored[: min(k, len(scored))]]


def retrieve(
    query: RetrievalQuery,
    ts: Toolset,
    cfg: RetrieverConfig,
    embedder: EmbeddingProvider,
) -> RetrievalResult:
    """Frequency vote over the three view lists.

    Rank by occurrence count across views (descending), break ties by the
    sum of per-view ranks then tool id, keep the top ``select_top``, and
    finally drop anything that appeared in a single view only.
    """
    hits = {
        "problem": view_topk(query.problem_text, "problem", ts, cfg.k_problem, embedder),
        "name": view_topk(query.expanded_names, "name", ts, cfg.k_name, embedder),
        "doc": view_topk(query.expanded_docstring, "doc", ts, cfg.k_doc, embedder),
    }
    frequencies: dict[str, int] = {}
    rank_sum: dict[str, int] = {}
    for ids in hits.values():
        for rank, tid in enumerate(ids):
            frequencies[tid] = frequencies.get(tid, 0) + 1
            rank_sum[tid] = rank_sum.get(tid, 0) + rank
    ordered = sorted(frequencies, key=lambda t: (-frequencies[t], rank_sum[t], t))
    top = ordered[: cfg.select_top]
    selected = tuple(t for t in top if frequencies[t] >= 2)
    return RetrievalResult(
        selected=selected,
        view_hits={view: tuple(ids) for view, ids in hits.items()},
        frequencies=frequencies,
    )


def retrieve_single_view(
    problem_text: str, ts: Toolset, k: int, embedder: EmbeddingProvider
) -> list[str]:
    """Similarity baseline: problem view only."""
    return view_topk(problem_text, "problem", ts, k, embedder)


@dataclass
class Bm25Index:
    """Okapi BM25 index over the tools' origin-problem texts."""

    tool_ids: list[str]
    doc_freq: dict[str, int]
    doc_len: dict[str, int]
    term_freqs: dict[str, dict[str, int]]
    avg_len: float
    k1: float = 1.5
    b: float = 0.75


def build_bm25_index(ts: Toolset, k1: float = 1.5, b: float = 0.75) -> Bm25Index:
    doc_freq: dict[str, int] = {}
    doc_len: dict[str, int] = {}
    term_freqs: dict[str, dict[str, int]] = {}
    for tool in ts:
        tokens = tokenize(tool.origin_problem_text)
        tf: dict[str, int] = {}
        for tok in tokens:
            tf[tok] = tf.get(tok, 0) + 1
        term_freqs[tool.id] = tf
        doc_len[tool.id] = len(tokens)
        for term in tf:
            doc_freq[term] = doc_freq.get(term, 0) + 1
    n = len(doc_len)
    avg_len = (sum(doc_len.values()) / n) if n else 0.0
    return Bm25Index(
        tool_ids=[t.id for t in ts],
        doc_freq=doc_freq,
        doc_len=doc_len,
        term_freqs=term_freqs,
        avg_len=avg_len,
        k1=k1,
        b=b,
    )


def bm25_score(index: Bm25Index, query_tokens: Sequence[str], tool_id: str) -> float:
    if tool_id not in index.doc_len:
        raise UnknownToolError(f"tool {tool_id} is not in the index")
    tf = index.term_freqs[tool_id]
    length = index.doc_len[tool_id]
    n = len(index.doc_len)
    score = 0.0
    for term in query_tokens:
        f = tf.get(term, 0)
        if f == 0:
            continue
        df = index.doc_freq.get(term, 0)
        idf = math.log((n - df + 0.5) / (df + 0.5) + 1.0)
        norm = index.k1 * (1.0 - index.b + index.b * length / index.avg_len)
        score += idf * (f * (index.k1 + 1.0)) / (f + norm)
    return score


def bm25_topk(index: Bm25Index, query_text: str, k: int) -> list[str]:
    """Lexical baseline ranking; descending score, ties on id."""
    if k <= 0:
        return []
    tokens = tokenize(query_text)
    scored = sorted((-bm25_score(index, tokens, tid), tid) for tid in index.tool_ids)
    return [tid for _, tid in scored[: min(k, len(scored))]]
