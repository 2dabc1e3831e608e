import pytest

from conftest import make_problem, make_tool
from toolforge.errors import BudgetExceededError
from toolforge.llm import CallBudget, ReplayProvider, load_template, script_entry
from toolforge.model import Toolset
from toolforge.pipeline import (
    PipelineConfig,
    StageRecord,
    abstract_tool,
    deduplicate,
    extract_invocation,
    forge,
    generate_solutions,
    validate_tool,
)
from toolforge.sampling import SamplerConfig

CFG = PipelineConfig(task_family="math", job_timeout=5.0)

GOOD_SOLUTION = "Simple.\n```python\ndef solve():\n    return 2 + 3\n```\n"
WRONG_SOLUTION = "Simple.\n```python\ndef solve():\n    return 6\n```\n"

ADD_TOOL_REPLY = (
    "Generalizing the operands.\n"
    "```python\n"
    "def add_two_numbers(first_number, second_number):\n"
    '    """Add two numbers and return their sum."""\n'
    "    return first_number + second_number\n"
    "```\n"
)


class TestGenerateSolutions:
    def test_correct_solution_kept(self, sandbox):
        problem = make_problem("g1", "What is 2 + 3?", answer="5")
        provider = ReplayProvider([("generate_math", "*", GOOD_SOLUTION)])
        audit = []
        kept = generate_solutions([problem], provider, sandbox, CFG, audit)
        assert [p.id for p, _ in kept] == ["g1"]
        assert audit[-1].outcome == "kept"

    def test_wrong_answer_discarded(self, sandbox):
        problem = make_problem("g2", "What is 2 + 3?", answer="5")
        provider = ReplayProvider([("generate_math", "*", WRONG_SOLUTION)])
        audit = []
        assert generate_solutions([problem], provider, sandbox, CFG, audit) == []
        assert audit[-1].reason == "wrong-answer"

    def test_no_code_discarded(self, sandbox):
        problem = make_problem("g3", "What is 2 + 3?", answer="5")
        provider = ReplayProvider([("generate_math", "*", "The answer is just five.")])
        audit = []
        assert generate_solutions([problem], provider, sandbox, CFG, audit) == []
        assert audit[-1].reason == "no-code"

    def test_runtime_error_discarded(self, sandbox):
        problem = make_problem("g4", "What is 2 + 3?", answer="5")
        provider = ReplayProvider(
            [("generate_math", "*", "```python\ndef solve():\n    return 1/0\n```")]
        )
        audit = []
        assert generate_solutions([problem], provider, sandbox, CFG, audit) == []
        assert audit[-1].reason == "error"

    def test_order_preserved(self, sandbox):
        problems = [
            make_problem("a", "What is 1 + 4?", answer="5"),
            make_problem("b", "What is 2 + 3?", answer="5"),
        ]
        tpl = load_template("generate_math")
        provider = ReplayProvider([
            script_entry(tpl, {"query": problems[0].text},
                         "```python\ndef solve():\n    return 1 + 4\n```"),
            script_entry(tpl, {"query": problems[1].text},
                         "```python\ndef solve():\n    return 2 + 3\n```"),
        ])
        kept = generate_solutions(problems, provider, sandbox, CFG, [])
        assert [p.id for p, _ in kept] == ["a", "b"]

    def test_budget_exhaustion_aborts(self, sandbox):
        problems = [make_problem("a", "What is 1 + 4?", answer="5")]
        provider = ReplayProvider([("*", "*", GOOD_SOLUTION)], budget=CallBudget(max_calls=0))
        with pytest.raises(BudgetExceededError):
            generate_solutions(problems, provider, sandbox, CFG, [])


class TestAbstractTool:
    def test_scripted_abstraction(self, embedder):
        problem = make_problem("a1", "What is 2 + 3?", answer="5")
        provider = ReplayProvider([("abstract_math", "*", ADD_TOOL_REPLY)])
        tool = abstract_tool(problem, "def solve():\n    return 2 + 3", provider, embedder, CFG, [])
        assert tool.name == "add_two_numbers"
        assert tool.arity == 2
        assert tool.docstring == "Add two numbers and return their sum."
        assert tool.origin_problem_id == "a1"

    def test_prose_reply_discarded(self, embedder):
        problem = make_problem("a2", "What is 2 + 3?", answer="5")
        provider = ReplayProvider([("abstract_math", "*", "Nothing to abstract here.")])
        audit = []
        assert abstract_tool(problem, "code", provider, embedder, CFG, audit) is None
        assert audit[-1].stage == "abstract"
        assert audit[-1].outcome == "discarded"

    def test_missing_docstring_discarded(self, embedder):
        reply = "```python\ndef add(a, b):\n    return a + b\n```"
        provider = ReplayProvider([("abstract_math", "*", reply)])
        audit = []
        problem = make_problem("a3", "What is 2 + 3?", answer="5")
        assert abstract_tool(problem, "code", provider, embedder, CFG, audit) is None
        assert audit[-1].reason == "no-docstring"


class TestExtractInvocation:
    def test_plain_call(self):
        assert extract_invocation("Call add(2, 3) now", "add") == "add(2, 3)"

    def test_last_call_wins(self):
        text = "add(1, 1) then finally add(2, 3)"
        assert extract_invocation(text, "add") == "add(2, 3)"

    def test_nested_parens(self):
        assert extract_invocation("use add(mul(2, 2), 3)", "add") == "add(mul(2, 2), 3)"

    def test_missing(self):
        assert extract_invocation("no call here", "add") is None


class TestValidateTool:
    def _tool(self):
        code = (
            "def add_two_numbers(first_number, second_number):\n"
            '    """Add two numbers and return their sum."""\n'
            "    return first_number + second_number\n"
        )
        return make_tool(name="add_two_numbers", arity=2,
                         doc="Add two numbers and return their sum.", code=code)

    def test_valid_invocation(self, sandbox):
        problem = make_problem("v1", "What is 2 + 3?", answer="5")
        provider = ReplayProvider([("validate", "*", "add_two_numbers(2, 3)")])
        assert validate_tool(self._tool(), problem, provider, sandbox, CFG, []) is True

    def test_wrong_args(self, sandbox):
        problem = make_problem("v2", "What is 2 + 3?", answer="5")
        provider = ReplayProvider([("validate", "*", "add_two_numbers(2, 2)")])
        audit = []
        assert validate_tool(self._tool(), problem, provider, sandbox, CFG, audit) is False
        assert audit[-1].reason == "wrong-answer"

    def test_undefined_name_in_invocation(self, sandbox):
        problem = make_problem("v3", "What is 2 + 3?", answer="5")
        provider = ReplayProvider(
            [("validate", "*", "add_two_numbers(missing_var, 3)")]
        )
        audit = []
        assert validate_tool(self._tool(), problem, provider, sandbox, CFG, audit) is False
        assert audit[-1].reason == "error"


class TestDeduplicate:
    def _group(self, n, name="dup_fn", doc_lens=None):
        tools = []
        for i in range(n):
            doc = ("D" * (doc_lens[i] if doc_lens else 5)) + "."
            tools.append(make_tool(name=name, arity=2, doc=doc, suffix=f"{name}{i}"))
        return tools

    def test_scripted_index_kept(self):
        tools = self._group(2)
        provider = ReplayProvider([("dedup", "*", "1")])
        out = deduplicate(Toolset(tools), provider, CFG, [])
        assert out.ids() == [tools[1].id]

    def test_singleton_untouched(self):
        tools = [make_tool(name="solo_fn")]
        out = deduplicate(Toolset(tools), None, CFG, [])
        assert out.ids() == [tools[0].id]

    def test_garbage_reply_falls_back(self):
        tools = self._group(3, doc_lens=[3, 9, 5])
        provider = ReplayProvider([("dedup", "*", "banana")])
        out = deduplicate(Toolset(tools), provider, CFG, [])
        assert out.ids() == [tools[1].id]  # longest docstring

    def test_out_of_range_index_falls_back(self):
        tools = self._group(2, doc_lens=[4, 8])
        provider = ReplayProvider([("dedup", "*", "7")])
        out = deduplicate(Toolset(tools), provider, CFG, [])
        assert out.ids() == [tools[1].id]

    def test_fallback_deterministic_ten_runs(self):
        tools = self._group(4, doc_lens=[5, 5, 5, 5])
        results = set()
        for _ in range(10):
            out = deduplicate(Toolset(tools), None, CFG, [])
            results.add(tuple(out.ids()))
        assert len(results) == 1

    def test_fuzzed_groups_unique_keys(self):
        import random

        rng = random.Random(6)
        for _ in range(30):
            tools = []
            for g in range(rng.randint(1, 5)):
                name = f"fn_{g}"
                arity = rng.randint(0, 2)
                for m in range(rng.randint(1, 4)):
                    tools.append(
                        make_tool(name=name, arity=arity,
                                  doc="d" * rng.randint(1, 12) + ".",
                                  suffix=f"{g}:{m}")
                    )
            out = deduplicate(Toolset(tools), None, CFG, [])
            keys = [t.group_key for t in out]
            assert len(keys) == len(set(keys))
            assert all(len(ids) == 1 for ids in out.group_index.values())

    def test_llm_free_path_matches_failure_path(self):
        tools = self._group(3, doc_lens=[2, 2, 2])
        silent = deduplicate(Toolset(tools), None, CFG, [])
        noisy = deduplicate(Toolset(tools), ReplayProvider([("dedup", "*", "nope")]), CFG, [])
        assert silent.ids() == noisy.ids()


class TestForge:
    def test_empty_corpus_empty_toolset(self, sandbox, embedder, tmp_path):
        provider = ReplayProvider([("*", "*", "unused")])
        ts = forge(
            [],
            SamplerConfig(n_init=1, k_per_epoch=1, epochs=0, seed=0),
            provider,
            sandbox,
            embedder,
            PipelineConfig(task_family="math", out_path=tmp_path / "ts.jsonl"),
        )
        assert len(ts) == 0
        assert ts.meta["funnel"]["sampled"] == 0
        assert (tmp_path / "ts.jsonl").exists()

    def test_stage_record_shape(self):
        rec = StageRecord("p", "generate", "kept")
        assert rec.to_json()["stage"] == "generate"
