"""Factual-consistency evaluation harness for paraphrased cloze queries."""

from .corpus import (
    Dataset,
    FactTuple,
    Query,
    RelationData,
    RelationSpec,
    Template,
    compute_subject_object_overlap,
    deduplicate,
    load_dataset,
    render_queries,
    save_dataset,
)
from .endpoints import make_endpoint
from .errors import (
    ConfigurationError,
    DigestMismatchError,
    HarnessError,
    ProtocolError,
    TransportError,
    ValidationError,
)
from .metrics import build_pair_set, evaluate, pearson, stratified_consistency
from .protocol import (
    Passage,
    Prediction,
    ScoreRequest,
    ScoreResponse,
    check_free_agreement,
    select_constrained,
)
from .retrieval import (
    frequency_rank,
    plan_intervention,
    random_baseline,
    retriever_pair_metrics,
    run_intervention,
)
from .runner import run_scorer

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "Dataset",
    "DigestMismatchError",
    "FactTuple",
    "HarnessError",
    "Passage",
    "Prediction",
    "ProtocolError",
    "Query",
    "RelationData",
    "RelationSpec",
    "ScoreRequest",
    "ScoreResponse",
    "Template",
    "TransportError",
    "ValidationError",
    "build_pair_set",
    "check_free_agreement",
    "compute_subject_object_overlap",
    "deduplicate",
    "evaluate",
    "frequency_rank",
    "load_dataset",
    "make_endpoint",
    "pearson",
    "plan_intervention",
    "random_baseline",
    "render_queries",
    "retriever_pair_metrics",
    "run_intervention",
    "run_scorer",
    "save_dataset",
    "select_constrained",
    "stratified_consistency",
]
