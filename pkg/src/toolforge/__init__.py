"""toolforge: create, validate, deduplicate and retrieve reusable
code-snippet tools with LLM assistance."""

from .embedding import HashEmbedding, RemoteEmbedding, cosine_sim, embed
from .errors import ToolforgeError
from .llm import (
    CallBudget,
    CallLedger,
    ChatMessage,
    PromptTemplate,
    RemoteChatProvider,
    ReplayProvider,
    extract_code_block,
    load_template,
    render,
)
from .metrics import exact_match, run_benchmark, token_f1
from .model import (
    Problem,
    RetrievalQuery,
    RetrievalResult,
    Tool,
    Toolset,
    load_corpus,
    load_toolset,
    save_toolset,
)
from .pipeline import PipelineConfig, deduplicate, forge
from .retrieval import (
    RetrieverConfig,
    bm25_score,
    bm25_topk,
    build_bm25_index,
    expand_query,
    retrieve,
    retrieve_single_view,
    view_topk,
)
from .sampling import SamplerConfig, init_sample, run_sampler, sample_epoch
from .sandbox import ExecJob, ExecResult, SandboxConfig, answers_match, run_job
from .snippets import count_decision_points, cyclomatic_complexity, parse_function

__version__ = "0.1.0"

__all__ = [
    "CallBudget",
    "CallLedger",
    "ChatMessage",
    "ExecJob",
    "ExecResult",
    "HashEmbedding",
    "PipelineConfig",
    "Problem",
    "PromptTemplate",
    "RemoteChatProvider",
    "RemoteEmbedding",
    "ReplayProvider",
    "RetrievalQuery",
    "RetrievalResult",
    "RetrieverConfig",
    "SamplerConfig",
    "SandboxConfig",
    "Tool",
    "Toolset",
    "ToolforgeError",
    "answers_match",
    "bm25_score",
    "bm25_topk",
    "build_bm25_index",
    "cosine_sim",
    "count_decision_points",
    "cyclomatic_complexity",
    "deduplicate",
    "embed",
    "exact_match",
    "expand_query",
    "extract_code_block",
    "forge",
    "init_sample",
    "load_corpus",
    "load_template",
    "load_toolset",
    "parse_function",
    "render",
    "retrieve",
    "retrieve_single_view",
    "run_benchmark",
    "run_job",
    "run_sampler",
    "sample_epoch",
    "save_toolset",
    "token_f1",
    "view_topk",
]
