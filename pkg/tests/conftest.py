import numpy as np
import pytest

from toolforge.embedding import EmbeddingProvider, HashEmbedding
from toolforge.model import Problem, Tool, ViewEmbeddings, tool_id
from toolforge.sandbox import SandboxConfig

REPO_ROOT = __import__("pathlib").Path(__file__).resolve().parents[1]
SHIM_PATH = REPO_ROOT / "shim" / "craft_shim.py"
FIXTURES = __import__("pathlib").Path(__file__).resolve().parent / "fixtures"


@pytest.fixture(scope="session")
def sandbox() -> SandboxConfig:
    assert SHIM_PATH.is_file(), "shim script missing from checkout"
    return SandboxConfig(shim_path=str(SHIM_PATH))


@pytest.fixture(scope="session")
def embedder() -> HashEmbedding:
    return HashEmbedding()


class FakeEmbedder(EmbeddingProvider):
    """Embedder returning preassigned unit vectors per exact text."""

    def __init__(self, table: dict[str, np.ndarray]):
        self.provider_id = "fake"
        self.table = dict(table)
        self.dim = len(next(iter(table.values()))) if table else 4

    def embed(self, text: str) -> np.ndarray:
        return self.table[text]


def unit(vec) -> np.ndarray:
    v = np.asarray(vec, dtype=np.float64)
    return v / np.linalg.norm(v)


def random_unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    return unit(rng.normal(size=dim))


def make_tool(
    name: str = "tool_fn",
    arity: int = 1,
    doc: str = "Do the thing.",
    problem_id: str = "q1",
    problem_text: str = "a problem",
    emb: ViewEmbeddings | None = None,
    code: str | None = None,
    suffix: str = "",
) -> Tool:
    params = ", ".join(f"arg{i}" for i in range(arity))
    if code is None:
        body = f"    return 0{('  # ' + suffix) if suffix else ''}\n"
        code = f'def {name}({params}):\n    """{doc}"""\n{body}'
    if emb is None:
        e = HashEmbedding()
        emb = ViewEmbeddings(
            problem=tuple(e.embed(problem_text)),
            name=tuple(e.embed(name)),
            doc=tuple(e.embed(doc)),
        )
    return Tool(
        id=tool_id(name, arity, code),
        origin_problem_id=problem_id,
        origin_problem_text=problem_text,
        name=name,
        docstring=doc,
        arity=arity,
        code=code,
        emb=emb,
    )


def make_problem(pid: str, text: str, answer: str = "", context: str | None = None) -> Problem:
    return Problem(id=pid, text=text, answer=answer, context=context, task_tag="test")
