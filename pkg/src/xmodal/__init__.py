"""Retrieval-augmented zero-shot classification over precomputed embeddings.

The pipeline: coarse image-to-image candidate search, fine cross-modal
caption rescoring, per-modality class distributions, and a streaming
entropy-weighted ensemble whose argmax is the prediction.
"""

from .config import EngineConfig, IndexConfig, load_config, load_inputs, make_retriever, parse_config, render_config
from .ensemble import EnsembleOutput, EnsembleState, combine, reset, step
from .errors import EngineError
from .evaluation import (
    EvalRun,
    SampleLog,
    SweepRow,
    ablate_adjustment,
    ablate_retrieval,
    analyze_cases,
    analyze_entropy,
    evaluate,
    run_prediction_stream,
    summarize_runs,
    sweep_k,
    sweep_n,
)
from .index import ExactIndex, IvfIndex, SearchResult, build_index, load_ivf, save_ivf
from .inference import (
    InferenceConfig,
    Prediction,
    entropy_nat,
    image_modal_probability,
    prediction_from_probs,
    softmax,
    text_modal_probability,
)
from .retrieval import (
    DEFAULT_K,
    DEFAULT_N,
    RetrievalConfig,
    RetrievedCaption,
    RetrievedCaptions,
    Retriever,
)
from .store import (
    ClassSet,
    Corpus,
    CorpusRecord,
    EmbeddingMatrix,
    EmbeddingSpace,
    QuerySet,
    load_classset,
    load_corpus,
    load_matrix,
    load_queries,
    save_matrix,
    write_classset,
    write_metadata,
)
from .synth import SynthSpec, fixture_config, make_synthetic, write_synthetic

__all__ = [
    "ClassSet",
    "Corpus",
    "CorpusRecord",
    "DEFAULT_K",
    "DEFAULT_N",
    "EmbeddingMatrix",
    "EmbeddingSpace",
    "EngineConfig",
    "EngineError",
    "EnsembleOutput",
    "EnsembleState",
    "EvalRun",
    "ExactIndex",
    "IndexConfig",
    "InferenceConfig",
    "IvfIndex",
    "Prediction",
    "QuerySet",
    "RetrievalConfig",
    "RetrievedCaption",
    "RetrievedCaptions",
    "Retriever",
    "SampleLog",
    "SearchResult",
    "SweepRow",
    "SynthSpec",
    "ablate_adjustment",
    "ablate_retrieval",
    "analyze_cases",
    "analyze_entropy",
    "build_index",
    "combine",
    "entropy_nat",
    "evaluate",
    "fixture_config",
    "image_modal_probability",
    "load_classset",
    "load_config",
    "load_corpus",
    "load_inputs",
    "load_ivf",
    "load_matrix",
    "load_queries",
    "make_retriever",
    "make_synthetic",
    "parse_config",
    "prediction_from_probs",
    "render_config",
    "reset",
    "run_prediction_stream",
    "save_ivf",
    "save_matrix",
    "softmax",
    "step",
    "summarize_runs",
    "sweep_k",
    "sweep_n",
    "text_modal_probability",
    "write_classset",
    "write_metadata",
    "write_synthetic",
]

__version__ = "0.1.0"
