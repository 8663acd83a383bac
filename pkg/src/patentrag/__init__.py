"""Semantic patent retrieval: corpus normalization, dense MIPS/IVF index,
retrieve-then-generate answering and retrieval evaluation."""

from .corpus import (
    CorpusSplit,
    PatentRecord,
    RejectedRecord,
    RejectReason,
    compose_document_text,
    deduplicate,
    normalize_record,
    parse_records,
    stratified_split,
)
from .embedder import EmbedderConfig, EmbeddingVector, local_hash_embed, make_embedder
from .evalkit import (
    EvalReport,
    LabeledQuery,
    build_index,
    classify_by_knn,
    clustering_purity,
    recall_at_k,
    run_eval,
    top1_accuracy,
)
from .index import SearchHit, VectorIndex
from .ragpipe import GeneratorConfig, RagAnswer, RagPipeline, assemble_context, generate_answer, retrieve

__version__ = "0.1.0"
