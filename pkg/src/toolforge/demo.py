"""Offline demo fixture: a 20-problem arithmetic corpus with a replay
script that drives the whole pipeline without any network.

The script is built in two passes. Creation-stage replies (generation,
abstraction, validation, deduplication) depend only on the corpus and the
templates, so they are scripted first; the pipeline is then actually run
against them, and the eval-stage replies (query expansion, solving) are
keyed to prompts assembled from the real forged toolset. The resulting
fixture exercises the funnel end to end: three generation failures, two
abstraction failures, one validation failure, and three duplicate groups.

``python -m toolforge.demo OUTDIR`` writes corpus.jsonl, replay_script.json,
toolset.jsonl, audit.jsonl and manifest.json for CLI experiments.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .embedding import HashEmbedding
from .llm import ReplayProvider, extract_code_block, load_template, script_entry
from .model import Problem, Toolset
from .pipeline import PipelineConfig, forge
from .retrieval import RetrieverConfig, parse_expansion, retrieve
from .sampling import SamplerConfig, embedding_oracle, run_sampler_state
from .sandbox import SandboxConfig

SAMPLER = SamplerConfig(n_init=10, k_per_epoch=5, epochs=2, seed=11)

EXPECTED_FUNNEL = {
    "sampled": 20,
    "generated": 17,
    "abstracted": 15,
    "validated": 14,
    "deduped": 10,
}
EXPECTED_EM = {"craft": 1.0, "none": 0.5}


@dataclass(frozen=True)
class _Spec:
    pid: str
    text: str
    answer: str
    solution: str | None  # specific solve() body; None -> generation fails with prose
    tool_name: str | None
    tool_doc: str
    tool_body: str | None  # None -> abstraction fails
    invocation: str | None  # None -> no validation entry needed
    craft_expr: str  # expression for the tool-assisted solve reply
    direct_ok: bool  # whether the no-tool script answers correctly


_DOCS = {
    "add_two_numbers": "Add two numbers and return their sum.",
    "subtract_two_numbers": "Subtract the second number from the first number.",
    "multiply_two_numbers": "Multiply two numbers and return the product.",
    "divide_two_numbers": "Divide the first number by the second number.",
    "raise_to_power": "Raise a base number to the given exponent.",
    "remainder_of_division": "Return the remainder when dividing one number by another.",
    "average_of_numbers": "Compute the average of a list of numbers.",
    "maximum_of_two_numbers": "Return the larger of two numbers.",
    "sum_of_integer_range": "Sum all integers in an inclusive range.",
    "absolute_value": "Return the absolute value of a number.",
    "difference_of_numbers": "Compute the difference between two numbers.",
}


def _tool_fn(name: str, params: str, body: str) -> str:
    return (
        f"def {name}({params}):\n"
        f'    """{_DOCS[name]}"""\n'
        f"{body}"
    )


def _specs() -> list[_Spec]:
    two = "first_number, second_number"
    add_a = _tool_fn("add_two_numbers", two, "    return first_number + second_number\n")
    add_b = _tool_fn(
        "add_two_numbers", two,
        "    total = first_number + second_number\n    return total\n",
    )
    add_c = _tool_fn(
        "add_two_numbers", two,
        "    # combine the two addends\n    return first_number + second_number\n",
    )
    sub_a = _tool_fn("subtract_two_numbers", two, "    return first_number - second_number\n")
    sub_b = _tool_fn(
        "subtract_two_numbers", two,
        "    difference = first_number - second_number\n    return difference\n",
    )
    mul_a = _tool_fn("multiply_two_numbers", two, "    return first_number * second_number\n")
    mul_b = _tool_fn(
        "multiply_two_numbers", two,
        "    product = first_number * second_number\n    return product\n",
    )

    return [
        _Spec("p01", "What is 2 + 3?", "5", "return 2 + 3",
              "add_two_numbers", _DOCS["add_two_numbers"], add_a,
              "add_two_numbers(2, 3)", "add_two_numbers(2, 3)", True),
        _Spec("p02", "What is 10 + 7?", "17", "return 10 + 7",
              "add_two_numbers", _DOCS["add_two_numbers"], add_b,
              "add_two_numbers(10, 7)", "add_two_numbers(10, 7)", True),
        _Spec("p03", "What is 21 + 21?", "42", "return 21 + 21",
              "add_two_numbers", _DOCS["add_two_numbers"], add_c,
              "add_two_numbers(21, 21)", "add_two_numbers(21, 21)", True),
        _Spec("p04", "What is 9 - 4?", "5", "return 9 - 4",
              "subtract_two_numbers", _DOCS["subtract_two_numbers"], sub_a,
              "subtract_two_numbers(9, 4)", "subtract_two_numbers(9, 4)", True),
        _Spec("p05", "What is 30 - 12?", "18", "return 30 - 12",
              "subtract_two_numbers", _DOCS["subtract_two_numbers"], sub_b,
              "subtract_two_numbers(30, 12)", "subtract_two_numbers(30, 12)", True),
        _Spec("p06", "What is 6 * 7?", "42", "return 6 * 7",
              "multiply_two_numbers", _DOCS["multiply_two_numbers"], mul_a,
              "multiply_two_numbers(6, 7)", "multiply_two_numbers(6, 7)", True),
        _Spec("p07", "What is 8 * 5?", "40", "return 8 * 5",
              "multiply_two_numbers", _DOCS["multiply_two_numbers"], mul_b,
              "multiply_two_numbers(8, 5)", "multiply_two_numbers(8, 5)", True),
        _Spec("p08", "What is 84 / 4?", "21", "return 84 / 4",
              "divide_two_numbers", _DOCS["divide_two_numbers"],
              _tool_fn("divide_two_numbers", two, "    return first_number / second_number\n"),
              "divide_two_numbers(84, 4)", "divide_two_numbers(84, 4)", True),
        _Spec("p09", "What is 2 to the power of 8?", "256", "return 2 ** 8",
              "raise_to_power", _DOCS["raise_to_power"],
              _tool_fn("raise_to_power", "base_number, exponent",
                       "    return base_number ** exponent\n"),
              "raise_to_power(2, 8)", "raise_to_power(2, 8)", True),
        _Spec("p10", "What is the remainder when 17 is divided by 5?", "2", "return 17 % 5",
              "remainder_of_division", _DOCS["remainder_of_division"],
              _tool_fn("remainder_of_division", "dividend, divisor",
                       "    return dividend % divisor\n"),
              "remainder_of_division(17, 5)", "remainder_of_division(17, 5)", True),
        _Spec("p11", "What is the average of 4, 8 and 12?", "8",
              "return (4 + 8 + 12) / 3",
              "average_of_numbers", _DOCS["average_of_numbers"],
              _tool_fn("average_of_numbers", "numbers",
                       "    return sum(numbers) / len(numbers)\n"),
              "average_of_numbers([4, 8, 12])", "average_of_numbers([4, 8, 12])", False),
        _Spec("p12", "What is the larger of 14 and 9?", "14",
              "return max(14, 9)",
              "maximum_of_two_numbers", _DOCS["maximum_of_two_numbers"],
              _tool_fn("maximum_of_two_numbers", two,
                       "    if first_number >= second_number:\n"
                       "        return first_number\n    return second_number\n"),
              "maximum_of_two_numbers(14, 9)", "maximum_of_two_numbers(14, 9)", False),
        _Spec("p13", "What is the sum of the integers from 1 to 10?", "55",
              "return sum(range(1, 11))",
              "sum_of_integer_range", _DOCS["sum_of_integer_range"],
              _tool_fn("sum_of_integer_range", "first_integer, last_integer",
                       "    return sum(range(first_integer, last_integer + 1))\n"),
              "sum_of_integer_range(1, 10)", "sum_of_integer_range(1, 10)", False),
        _Spec("p14", "What is the absolute value of -7?", "7",
              "return abs(-7)",
              "absolute_value", _DOCS["absolute_value"],
              _tool_fn("absolute_value", "number", "    return abs(number)\n"),
              "absolute_value(-7)", "absolute_value(-7)", False),
        # generation failures
        _Spec("p15", "What is 5 + 5?", "10", None,
              "add_two_numbers", _DOCS["add_two_numbers"], None,
              None, "add_two_numbers(5, 5)", False),
        _Spec("p16", "What is 7 - 2?", "5", "return 7 - 1",
              "subtract_two_numbers", _DOCS["subtract_two_numbers"], None,
              None, "subtract_two_numbers(7, 2)", False),
        _Spec("p17", "What is 3 * 3?", "9", "return 9 / 0",
              "multiply_two_numbers", _DOCS["multiply_two_numbers"], None,
              None, "multiply_two_numbers(3, 3)", False),
        # abstraction failures
        _Spec("p18", "What is 100 / 5?", "20", "return 100 / 5",
              "divide_two_numbers", _DOCS["divide_two_numbers"], "PROSE",
              None, "divide_two_numbers(100, 5)", False),
        _Spec("p19", "What is 4 + 9?", "13", "return 4 + 9",
              "add_two_numbers", _DOCS["add_two_numbers"], "NO_DOCSTRING",
              None, "add_two_numbers(4, 9)", False),
        # validation failure: tool inverts the operands
        _Spec("p20", "What is 12 - 5?", "7", "return 12 - 5",
              "difference_of_numbers", _DOCS["difference_of_numbers"],
              _tool_fn("difference_of_numbers", two,
                       "    return first_number - second_number\n"),
              "difference_of_numbers(5, 12)", "subtract_two_numbers(12, 5)", False),
    ]


def build_corpus() -> list[Problem]:
    return [
        Problem(id=s.pid, text=s.text, answer=s.answer, task_tag="arithmetic")
        for s in _specs()
    ]


def _generation_reply(spec: _Spec) -> str:
    if spec.solution is None:
        return (
            "This one is easy enough to answer without writing any code: "
            "just add the two numbers in your head."
        )
    return (
        "We compute the value directly.\n"
        "```python\n"
        f"def solve():\n    {spec.solution}\n"
        "```\n"
    )


def _abstraction_reply(spec: _Spec) -> str:
    if spec.tool_body == "PROSE":
        return (
            "The solution is already as general as it can get, so there is "
            "nothing to abstract here."
        )
    if spec.tool_body == "NO_DOCSTRING":
        return (
            "We lift the constants into arguments.\n"
            "```python\n"
            "# The final generic tool with docstring is:\n"
            "def add_two_numbers(first_number, second_number):\n"
            "    return first_number + second_number\n"
            "```\n"
        )
    return (
        "We replace the specific operands with general arguments.\n"
        "```python\n"
        "# The final generic tool with docstring is:\n"
        f"{spec.tool_body}"
        "\n# The example to call the tool is:\n"
        f"# {spec.invocation or spec.craft_expr}\n"
        "```\n"
    )


def _expansion_reply(spec: _Spec) -> str:
    return (
        "Let's think step by step:\n"
        "To solve the problem, we should apply one basic arithmetic operation "
        "to the given values.\n"
        "Considering the naming rules of tool functions, the relevant and useful "
        f"functions could be named as '{spec.tool_name}'.\n"
        "Finally, we can infer that the docstring of the tool function could be "
        f"'{spec.tool_doc}'\n"
        f"The useful functions are: ['{spec.tool_name}'].\n"
        f"The final answer is: {spec.tool_doc}\n"
    )


def _solve_reply(expr: str) -> str:
    return (
        "Using the available tools:\n"
        "```python\n"
        f"def solve():\n    return {expr}\n"
        "```\n"
    )


def _direct_reply(spec: _Spec) -> str:
    if spec.direct_ok:
        value = spec.answer
    else:
        value = str(int(spec.answer) + 1)
    return (
        "Computing directly:\n"
        "```python\n"
        f"def solve():\n    return {value}\n"
        "```\n"
    )


def build_replay_rules(
    template_dir=None, sandbox: SandboxConfig | None = None
) -> tuple[list[Problem], list[tuple[str, str, str]], Toolset]:
    """Build the full replay script; returns (corpus, rules, toolset).

    Needs a sandbox able to execute jobs: the creation-stage rules are
    validated by actually running the pipeline against them before the
    eval-stage rules are keyed to the resulting toolset.
    """
    import tempfile

    specs = {s.pid: s for s in _specs()}
    corpus = build_corpus()
    embedder = HashEmbedding()
    oracle = embedding_oracle(corpus, embedder)
    sampled = run_sampler_state(corpus, SAMPLER, oracle).selected

    gen_tpl = load_template("generate_math", template_dir)
    abs_tpl = load_template("abstract_math", template_dir)
    val_tpl = load_template("validate", template_dir)
    dedup_tpl = load_template("dedup", template_dir)
    ret_tpl = load_template("retrieve_math", template_dir)

    rules: list[tuple[str, str, str]] = []
    validated: list[tuple[_Spec, str]] = []  # (spec, tool code) in sampled order
    for pid in sampled:
        spec = specs[pid]
        gen_reply = _generation_reply(spec)
        rules.append(script_entry(gen_tpl, {"query": spec.text}, gen_reply))
        if spec.solution is None or spec.pid in ("p16", "p17"):
            continue  # discarded in generation
        solution_code = extract_code_block(gen_reply)
        abs_reply = _abstraction_reply(spec)
        rules.append(
            script_entry(abs_tpl, {"query": spec.text, "solution": solution_code}, abs_reply)
        )
        if spec.tool_body in ("PROSE", "NO_DOCSTRING"):
            continue  # discarded in abstraction
        tool_code = extract_code_block(abs_reply)
        rules.append(
            script_entry(
                val_tpl,
                {"tool_code": tool_code, "query": spec.text},
                f"The call is:\n{spec.invocation}\n",
            )
        )
        if spec.pid == "p20":
            continue  # wrong invocation; discarded in validation
        validated.append((spec, tool_code))

    # dedup prompts follow group order of first appearance in validated order
    groups: dict[str, list[str]] = {}
    order: list[str] = []
    for spec, tool_code in validated:
        if spec.tool_name not in groups:
            order.append(spec.tool_name)
        groups.setdefault(spec.tool_name, []).append(tool_code)
    dedup_replies = {"add_two_numbers": "1", "subtract_two_numbers": "banana",
                     "multiply_two_numbers": "0"}
    for name in order:
        codes = groups[name]
        if len(codes) < 2:
            continue
        listing = "\n\n".join(f"No. {i}:\n{code}" for i, code in enumerate(codes))
        rules.append(script_entry(dedup_tpl, {"tools": listing}, dedup_replies[name]))

    # run the real pipeline against the creation rules to get the toolset
    with tempfile.TemporaryDirectory() as tmp:
        ts = forge(
            corpus,
            SAMPLER,
            ReplayProvider(rules),
            sandbox or SandboxConfig(),
            embedder,
            PipelineConfig(
                task_family="math",
                template_dir=template_dir,
                checkpoint_path=Path(tmp) / "checkpoint.json",
            ),
        )

    # eval-stage entries: expansion + tool-assisted solve + no-tool solve
    rcfg = RetrieverConfig()
    by_name = {t.name: t for t in ts}
    for spec in specs.values():
        exp_reply = _expansion_reply(spec)
        rules.append(script_entry(ret_tpl, {"query": spec.text}, exp_reply))
        query = parse_expansion(spec.text, exp_reply)
        result = retrieve(query, ts, rcfg, embedder)
        selected_names = {ts.get(tid).name for tid in result.selected}
        assert result.selected, f"{spec.pid}: craft retrieval came back empty"
        problem = Problem(id=spec.pid, text=spec.text, answer=spec.answer)
        codes = [ts.get(tid).code for tid in result.selected]
        target = spec.craft_expr.split("(")[0]
        if target in selected_names and target in by_name:
            expr = spec.craft_expr
        else:  # tool missing: still answer correctly without it
            expr = spec.answer
        tpl = load_template("solve", template_dir)
        rules.append(script_entry(tpl, {"tools": "\n\n".join(codes),
                                        "query": problem.full_text()}, _solve_reply(expr)))
        direct_tpl = load_template("solve_direct", template_dir)
        rules.append(script_entry(direct_tpl, {"query": problem.full_text()},
                                  _direct_reply(spec)))
    return corpus, rules, ts


def write_fixture(out_dir: str | Path, sandbox: SandboxConfig | None = None) -> None:
    """Write corpus, replay script, toolset, audit and manifest files."""
    from .llm import save_replay_script
    from .model import save_corpus

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corpus, rules, _ = build_replay_rules(sandbox=sandbox)
    save_corpus(corpus, out / "corpus.jsonl")
    save_replay_script(rules, out / "replay_script.json")
    ts = forge(
        corpus,
        SAMPLER,
        ReplayProvider(rules),
        sandbox or SandboxConfig(),
        HashEmbedding(),
        PipelineConfig(
            task_family="math",
            out_path=out / "toolset.jsonl",
            audit_path=out / "audit.jsonl",
            checkpoint_path=out / "checkpoint.json",
        ),
    )
    manifest = {
        "funnel": EXPECTED_FUNNEL,
        "expected_em": EXPECTED_EM,
        "n_tools": len(ts),
        "sampler": {"n_init": SAMPLER.n_init, "k_per_epoch": SAMPLER.k_per_epoch,
                    "epochs": SAMPLER.epochs, "seed": SAMPLER.seed},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1), encoding="utf-8")


if __name__ == "__main__":
    import sys

    write_fixture(sys.argv[1] if len(sys.argv) > 1 else "demo-fixture")
    print("demo fixture written")
