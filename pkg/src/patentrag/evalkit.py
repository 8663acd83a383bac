"""
Retrieval evaluation: top-1 accuracy, recall@k, kNN domain classification
and clustering purity, plus report rendering.

Accuracy is the fraction of queries whose rank-1 hit is relevant; recall is
mean |relevant & top-k| / |relevant|. Queries that fail to run are excluded
and counted, not scored as zero.
"""

from __future__ import annotations

import json
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Union

from .corpus import CorpusSplit, PatentRecord, compose_document_text
from .errors import EmptyHits, EmptyIndex, EmptyInput, EmptyRelevantSet, EvalError, PatentRagError
from .index import SearchHit, VectorIndex

log = logging.getLogger(__name__)

# Reported results for context only; not reproducible without the original models and labels.
REFERENCE_ROWS = (
    ("gpt-3.5-turbo", 0.612, 0.804),
    ("gpt-3.5-turbo+RAG", 0.653, 0.867),
    ("gpt-3.5-turbo-0125", 0.628, 0.826),
    ("gpt-3.5-turbo-0125+RAG", 0.805, 0.921),
    ("gpt-4.0", 0.801, 0.913),
)


@dataclass(frozen=True)
class LabeledQuery:
    query_text: str
    relevant_doc_ids: frozenset
    expected_domain: Optional[str] = None

    def __post_init__(self):
        if not self.relevant_doc_ids:
            raise EmptyRelevantSet(f"query {self.query_text!r} has no relevant documents")

    @classmethod
    def from_dict(cls, obj: dict) -> "LabeledQuery":
        return cls(obj["query"], frozenset(obj.get("relevant_ids") or ()), obj.get("domain"))


def load_queries(path: str) -> list[LabeledQuery]:
    queries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                try:
                    queries.append(LabeledQuery.from_dict(json.loads(line)))
                except (ValueError, KeyError, TypeError, EmptyRelevantSet) as exc:
                    raise EvalError(f"{path}:{lineno}: bad query line ({exc})") from exc
    return queries


def _ids(hits: Sequence[Union[SearchHit, str]]) -> list[str]:
    return [h.doc_id if isinstance(h, SearchHit) else h for h in hits]


def recall_at_k(hits: Sequence[Union[SearchHit, str]], relevant: Iterable[str], k: int) -> float:
    relevant = set(relevant)
    if not relevant:
        raise EmptyRelevantSet("relevant set is empty")
    if k < 1:
        raise ValueError("k must be >= 1")
    return len(set(_ids(hits)[:k]) & relevant) / len(relevant)


def top1_accuracy(hits: Sequence[Union[SearchHit, str]], relevant: Iterable[str]) -> float:
    if not hits:
        raise EmptyHits("no hits to score")
    return 1.0 if _ids(hits)[0] in set(relevant) else 0.0


def vote(hits: Sequence[SearchHit], labels: Mapping[str, str]) -> str:
    """Majority label; ties go to the larger summed score, then the smaller label."""
    counts: Counter = Counter()
    mass: dict[str, float] = defaultdict(float)
    for h in hits:
        lab = labels[h.doc_id]
        counts[lab] += 1
        mass[lab] += h.score
    return min(counts, key=lambda lab: (-counts[lab], -mass[lab], lab))


def classify_by_knn(query_vector, index: VectorIndex, records: Mapping[str, Union[PatentRecord, str]],
                    k: int = 5) -> str:
    """Predict a domain label from the ``k`` nearest stored documents.

    ``records`` maps doc_id to a ``PatentRecord`` or directly to a label.
    """
    if index.size == 0:
        raise EmptyIndex("index is empty")
    hits = index.search_exact(query_vector, k)
    labels = {}
    for h in hits:
        rec = records[h.doc_id]
        labels[h.doc_id] = rec.field_of_invention if isinstance(rec, PatentRecord) else rec
    return vote(hits, labels)


def clustering_purity(assignments: Mapping[str, object], labels: Mapping[str, str]) -> float:
    if not assignments:
        raise EmptyInput("no assignments")
    if set(assignments) != set(labels):
        raise ValueError("assignments and labels must cover the same documents")
    clusters: dict = defaultdict(Counter)
    for doc, cluster in assignments.items():
        clusters[cluster][labels[doc]] += 1
    return sum(max(c.values()) for c in clusters.values()) / len(assignments)


@dataclass
class DomainStats:
    accuracy: float
    recall: float
    n_queries: int


@dataclass
class EvalReport:
    model_label: str
    accuracy: float
    recall_at_k: float
    k: int
    n_queries: int
    per_domain: dict[str, DomainStats] = field(default_factory=dict)
    n_failed: int = 0
    failures: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "model_label": self.model_label,
            "accuracy": self.accuracy,
            "recall_at_k": self.recall_at_k,
            "k": self.k,
            "n_queries": self.n_queries,
            "n_failed": self.n_failed,
            "failures": self.failures,
            "per_domain": {
                d: {"accuracy": s.accuracy, "recall": s.recall, "n_queries": s.n_queries}
                for d, s in sorted(self.per_domain.items())
            },
            "reference_rows": [
                {"model_label": m, "accuracy": a, "recall": r} for m, a, r in REFERENCE_ROWS
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)

    def render_table(self) -> str:
        rows = [(f"{self.model_label} (measured)", self.accuracy, self.recall_at_k)]
        rows += [(f"{m} (reported)", a, r) for m, a, r in REFERENCE_ROWS]
        head = ("Model", "Accuracy rate", f"Recall@{self.k}")
        width = max(len(head[0]), *(len(r[0]) for r in rows))
        lines = [f"{head[0]:<{width}}  {head[1]:>13}  {head[2]:>9}"]
        lines.append("-" * len(lines[0]))
        for name, acc, rec in rows:
            lines.append(f"{name:<{width}}  {acc:>13.1%}  {rec:>9.1%}")
        if self.per_domain:
            lines.append("")
            dwidth = max(len("Domain"), *(len(d) for d in self.per_domain))
            lines.append(f"{'Domain':<{dwidth}}  {'Queries':>7}  {'Accuracy rate':>13}  {'Recall':>9}")
            for d, s in sorted(self.per_domain.items()):
                lines.append(f"{d:<{dwidth}}  {s.n_queries:>7}  {s.accuracy:>13.1%}  {s.recall:>9.1%}")
        lines.append("")
        lines.append(f"queries scored: {self.n_queries}, failed: {self.n_failed}")
        return "\n".join(lines)


def _query_domain(q: LabeledQuery, records: Mapping[str, PatentRecord]) -> str:
    if q.expected_domain:
        return q.expected_domain
    first = min(q.relevant_doc_ids)
    return records[first].field_of_invention if first in records else "unknown"


def build_index(records: Sequence[PatentRecord], embedder, nlist: Optional[int] = None,
                seed: int = 0) -> VectorIndex:
    """Embed every record's composed text into a fresh index."""
    ids = [r.application_number for r in records]
    vectors = embedder.embed_batch([compose_document_text(r) for r in records], ids)
    index = VectorIndex(embedder.dimension).add_many(ids, vectors)
    if nlist:
        index.train_ivf(nlist, seed)
    return index


def run_eval(records: Sequence[PatentRecord], split: Optional[CorpusSplit],
             queries: Sequence[LabeledQuery], embedder, k: int = 5,
             model_label: str = "local-hash", index: Optional[VectorIndex] = None,
             nprobe: Optional[int] = None) -> EvalReport:
    """Score ``queries`` against an index over the full corpus.

    When ``split`` is given every relevant id must belong to its test set.
    """
    from .ragpipe import retrieve

    by_id = {r.application_number: r for r in records}
    if split is not None:
        test = set(split.test_ids)
        for q in queries:
            stray = sorted(q.relevant_doc_ids - test)
            if stray:
                raise EvalError(f"query {q.query_text!r} references non-test documents {stray[:3]}")
    if index is None:
        index = build_index(records, embedder)

    scored: list[tuple[str, float, float]] = []
    failures = []
    for i, q in enumerate(queries):
        try:
            hits = retrieve(q.query_text, embedder, index, k, nprobe)
            acc = top1_accuracy(hits, q.relevant_doc_ids)
            rec = recall_at_k(hits, q.relevant_doc_ids, k)
        except PatentRagError as exc:
            log.warning("query %d failed: %s", i, exc)
            failures.append({"query_index": i, "error": type(exc).__name__, "detail": str(exc)})
            continue
        scored.append((_query_domain(q, by_id), acc, rec))

    if not scored:
        raise EvalError(f"no query succeeded ({len(failures)} failed)")
    n = len(scored)
    per_domain: dict[str, DomainStats] = {}
    for dom in sorted({d for d, _, _ in scored}):
        rows = [(a, r) for d, a, r in scored if d == dom]
        per_domain[dom] = DomainStats(
            sum(a for a, _ in rows) / len(rows), sum(r for _, r in rows) / len(rows), len(rows)
        )
    return EvalReport(
        model_label=model_label,
        accuracy=sum(a for _, a, _ in scored) / n,
        recall_at_k=sum(r for _, _, r in scored) / n,
        k=k,
        n_queries=n,
        per_domain=per_domain,
        n_failed=len(failures),
        failures=failures,
    )
