import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_tool
from toolforge.errors import FormatError, InvariantError
from toolforge.model import (
    Problem,
    RetrievalQuery,
    RetrievalResult,
    Toolset,
    load_corpus,
    load_toolset,
    save_corpus,
    save_toolset,
    tool_id,
)

_WORDS = ["add", "scale", "filter", "rows", "table", "sum", "join", "split"]


def _random_toolset(rng: random.Random, n: int) -> Toolset:
    tools = []
    for i in range(n):
        name = f"{rng.choice(_WORDS)}_{rng.choice(_WORDS)}_{i}"
        tools.append(
            make_tool(
                name=name,
                arity=rng.randint(0, 4),
                doc=" ".join(rng.choices(_WORDS, k=5)) + ".",
                problem_id=f"q{i}",
                problem_text=" ".join(rng.choices(_WORDS, k=6)) + "?",
                suffix=str(rng.random()),
            )
        )
    return Toolset(tools, meta={"origin": "test", "n": n})


class TestProblem:
    def test_requires_id_and_text(self):
        with pytest.raises(InvariantError):
            Problem(id="", text="x")
        with pytest.raises(InvariantError):
            Problem(id="p", text="")

    def test_full_text_appends_context(self):
        p = Problem(id="p", text="How many?", context="a | 1")
        assert p.full_text() == "How many?\na | 1"


class TestPersistence:
    def test_empty_toolset_round_trip(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        ts = Toolset(meta={"note": "empty"})
        save_toolset(ts, path)
        assert path.read_text().count("\n") == 1  # header only
        assert load_toolset(path) == ts

    def test_two_tool_round_trip(self, tmp_path):
        ts = Toolset([make_tool(name="alpha_fn"), make_tool(name="beta_fn", arity=2)])
        path = tmp_path / "ts.jsonl"
        save_toolset(ts, path)
        assert len(path.read_text().splitlines()) == 3
        assert load_toolset(path) == ts

    def test_newlines_in_code_round_trip(self, tmp_path):
        code = 'def f(x):\n    """Doc."""\n    y = "a\\nb"\n    return y\n'
        tool = make_tool(name="f", arity=1, doc="Doc.", code=code)
        ts = Toolset([tool])
        path = tmp_path / "ts.jsonl"
        save_toolset(ts, path)
        loaded = load_toolset(path)
        assert loaded.tools[0].code == code
        assert loaded.tools[0] == tool

    def test_header_schema_checked(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"schema": "other/9", "meta": {}}\n')
        with pytest.raises(FormatError) as err:
            load_toolset(path)
        assert err.value.line == 1

    def test_malformed_line_reports_number(self, tmp_path):
        ts = Toolset([make_tool()])
        path = tmp_path / "ts.jsonl"
        save_toolset(ts, path)
        path.write_text(path.read_text() + '{"id": "truncated...\n')
        with pytest.raises(FormatError) as err:
            load_toolset(path)
        assert err.value.line == 3

    def test_arity_mismatch_rejected_on_load(self, tmp_path):
        ts = Toolset([make_tool(name="f", arity=1)])
        path = tmp_path / "ts.jsonl"
        save_toolset(ts, path)
        wrong = path.read_text().replace('"arity": 1', '"arity": 2')
        path.write_text(wrong)
        with pytest.raises(InvariantError) as err:
            load_toolset(path)
        assert err.value.field == "arity"

    def test_save_is_deterministic(self, tmp_path):
        ts = _random_toolset(random.Random(5), 4)
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        save_toolset(ts, a)
        save_toolset(ts, b)
        assert a.read_bytes() == b.read_bytes()

    @settings(max_examples=25, deadline=None)
    @given(n=st.integers(0, 10), seed=st.integers(0, 2**31 - 1))
    def test_round_trip_property(self, tmp_path_factory, n, seed):
        ts = _random_toolset(random.Random(seed), n)
        path = tmp_path_factory.mktemp("rt") / "ts.jsonl"
        save_toolset(ts, path)
        assert load_toolset(path) == ts


class TestGroupIndex:
    def test_rebuild_matches_incremental(self):
        ts = _random_toolset(random.Random(9), 8)
        assert ts.rebuild_index() == ts.group_index

    def test_groups_collect_same_signature(self):
        a = make_tool(name="dup_fn", arity=2, suffix="a")
        b = make_tool(name="dup_fn", arity=2, suffix="b")
        ts = Toolset([a, b])
        assert ts.group_index[("dup_fn", 2)] == [a.id, b.id]

    def test_tool_id_is_content_hash(self):
        assert tool_id("f", 1, "code") == tool_id("f", 1, "code")
        assert tool_id("f", 1, "code") != tool_id("f", 2, "code")


class TestCorpusIo:
    def test_corpus_round_trip(self, tmp_path):
        problems = [
            Problem(id="a", text="What is 1?", answer="1", task_tag="t"),
            Problem(id="b", text="What is 2?", context="tbl", answer="2", task_tag="t"),
        ]
        path = tmp_path / "corpus.jsonl"
        save_corpus(problems, path)
        assert load_corpus(path) == problems

    def test_duplicate_ids_rejected(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        row = json.dumps({"id": "a", "text": "x", "answer": "1"})
        path.write_text(row + "\n" + row + "\n")
        with pytest.raises(FormatError):
            load_corpus(path)


class TestRetrievalTypes:
    def test_query_requires_flag_for_empty_names(self):
        with pytest.raises(InvariantError):
            RetrievalQuery(problem_text="q", expanded_names=())
        RetrievalQuery(problem_text="q", expanded_names=(), expansion_failed=True)

    def test_result_frequency_floor(self):
        with pytest.raises(InvariantError):
            RetrievalResult(
                selected=("t1",), view_hits={"problem": ("t1",)}, frequencies={"t1": 1}
            )

    def test_result_selected_subset_of_hits(self):
        with pytest.raises(InvariantError):
            RetrievalResult(selected=("t9",), view_hits={"problem": ()}, frequencies={"t9": 2})

    def test_result_cap(self):
        hits = {"problem": ("a", "b", "c", "d"), "name": ("a", "b", "c", "d")}
        freqs = {t: 2 for t in "abcd"}
        with pytest.raises(InvariantError):
            RetrievalResult(selected=("a", "b", "c", "d"), view_hits=hits, frequencies=freqs)


class TestSerializationGuard:
    def test_lone_surrogate_code_rejected(self, tmp_path):
        from toolforge.errors import SerializationError

        tool = make_tool()
        bad = tool.__class__(**{**tool.__dict__, "code": tool.code + "\ud800"})
        with pytest.raises(SerializationError):
            save_toolset(Toolset([bad]), tmp_path / "bad.jsonl")


class TestToolEmbeddingInvariants:
    def test_mixed_dimensions_rejected(self):
        from toolforge.model import ViewEmbeddings, validate_tool

        tool = make_tool()
        short = tuple([1.0] + [0.0] * 7)
        bad = tool.__class__(
            **{**tool.__dict__, "emb": ViewEmbeddings(short, tool.emb.name, tool.emb.doc)}
        )
        with pytest.raises(InvariantError) as err:
            validate_tool(bad)
        assert err.value.field == "emb"

    def test_non_unit_norm_rejected(self):
        from toolforge.model import ViewEmbeddings, validate_tool

        tool = make_tool()
        scaled = tuple(2.0 * x for x in tool.emb.problem)
        bad = tool.__class__(
            **{**tool.__dict__, "emb": ViewEmbeddings(scaled, tool.emb.name, tool.emb.doc)}
        )
        with pytest.raises(InvariantError) as err:
            validate_tool(bad)
        assert err.value.field == "emb"

    def test_query_text_required(self):
        with pytest.raises(InvariantError):
            RetrievalQuery(problem_text="", expanded_names=("f",))
