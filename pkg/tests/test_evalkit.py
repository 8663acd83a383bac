import json
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from patentrag.corpus import CorpusSplit
from patentrag.embedder import EmbeddingVector
from patentrag.errors import EmptyHits, EmptyIndex, EmptyInput, EmptyRelevantSet, EmptyText, EvalError
from patentrag.evalkit import (
    REFERENCE_ROWS,
    EvalReport,
    LabeledQuery,
    classify_by_knn,
    clustering_purity,
    load_queries,
    recall_at_k,
    run_eval,
    top1_accuracy,
    vote,
)
from patentrag.index import SearchHit, VectorIndex

from conftest import make_record


class TableEmbedder:
    """Looks queries up in a fixed text -> vector table."""

    def __init__(self, table, dimension):
        self.table = table
        self.dimension = dimension

    def embed(self, text, source_id=None):
        if not text.strip():
            raise EmptyText("empty")
        return EmbeddingVector(np.asarray(self.table[text], dtype=np.float32), source_id)


def basis(i, dim=16):
    v = np.zeros(dim, dtype=np.float32)
    v[i] = 1.0
    return v


# ------------------------------------------------------------------ metrics

def test_recall_examples():
    assert recall_at_k(["a", "b", "c"], {"a"}, 3) == 1.0
    assert recall_at_k(["a", "c", "d"], {"a", "b"}, 3) == 0.5
    assert recall_at_k(["c", "d", "a"], {"a"}, 2) == 0.0


def test_recall_accepts_hits():
    hits = [SearchHit("a", 0.9, 1), SearchHit("b", 0.5, 2)]
    assert recall_at_k(hits, {"b"}, 2) == 1.0


def test_recall_errors():
    with pytest.raises(EmptyRelevantSet):
        recall_at_k(["a"], set(), 1)


def oracle_recall(ranked, relevant, k):
    found = 0
    for doc in relevant:
        for pos, h in enumerate(ranked):
            if pos < k and h == doc:
                found += 1
                break
    return found / len(relevant)


def test_recall_matches_counting_oracle():
    rng = random.Random(3)
    ids = [f"d{i}" for i in range(50)]
    for _ in range(300):
        ranked = rng.sample(ids, 20)
        relevant = set(rng.sample(ids, rng.randint(1, 8)))
        k = rng.randint(1, 20)
        assert recall_at_k(ranked, relevant, k) == oracle_recall(ranked, relevant, k)


@settings(max_examples=100, deadline=None)
@given(st.permutations([f"d{i}" for i in range(12)]), st.sets(st.sampled_from([f"d{i}" for i in range(12)]), min_size=1))
def test_recall_monotone_in_k(ranked, relevant):
    values = [recall_at_k(ranked, relevant, k) for k in range(1, 13)]
    assert values == sorted(values)
    assert values[-1] == 1.0


def test_top1():
    assert top1_accuracy(["a", "b"], {"a"}) == 1.0
    assert top1_accuracy(["b", "a"], {"a"}) == 0.0
    with pytest.raises(EmptyHits):
        top1_accuracy([], {"a"})


def test_top1_planted_fraction():
    rng = random.Random(8)
    flags = [rng.random() < 0.3 for _ in range(200)]
    scores = [top1_accuracy(["hit" if f else "miss", "x"], {"hit"}) for f in flags]
    assert sum(scores) / len(scores) == sum(flags) / len(flags)


# ---------------------------------------------------------- classification

def test_vote_majority():
    hits = [SearchHit(f"d{i}", 1.0, i + 1) for i in range(5)]
    labels = dict(zip([h.doc_id for h in hits], "xxxyy"))
    assert vote(hits, labels) == "x"


def test_vote_ties():
    hits = [SearchHit("a", 0.9, 1), SearchHit("b", 0.8, 2), SearchHit("c", 0.5, 3), SearchHit("d", 0.1, 4)]
    assert vote(hits, {"a": "y", "b": "x", "c": "x", "d": "y"}) == "x"  # 1.3 vs 1.0
    hits = [SearchHit("a", 0.5, 1), SearchHit("b", 0.5, 2)]
    assert vote(hits, {"a": "zeta", "b": "alpha"}) == "alpha"


def test_knn_k1_is_nearest():
    idx = VectorIndex(4).add_many(["a", "b"], [basis(0, 4), basis(1, 4)])
    assert classify_by_knn(basis(1, 4), idx, {"a": "x", "b": "y"}, k=1) == "y"


def test_knn_reads_records():
    idx = VectorIndex(4).add("US1", basis(0, 4))
    assert classify_by_knn(basis(0, 4), idx, {"US1": make_record("US1", domain="optics")}) == "optics"


def test_knn_empty_index():
    with pytest.raises(EmptyIndex):
        classify_by_knn(basis(0, 4), VectorIndex(4), {})


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 1000), st.floats(0.01, 100.0))
def test_knn_scale_invariant(seed, factor):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(30, 6)).astype(np.float32)
    labels = {f"d{i}": "abc"[i % 3] for i in range(30)}
    q = rng.normal(size=6).astype(np.float32)
    a = VectorIndex(6).add_many(list(labels), x)
    b = VectorIndex(6).add_many(list(labels), x * np.float32(factor))
    assert classify_by_knn(q, a, labels, k=5) == classify_by_knn(q, b, labels, k=5)


def test_purity_examples():
    assert clustering_purity({"a": 0, "b": 0, "c": 1}, {"a": "x", "b": "x", "c": "y"}) == 1.0
    assert clustering_purity({"a": 0, "b": 0, "c": 1, "d": 1},
                             {"a": "x", "b": "y", "c": "x", "d": "y"}) == 0.5
    with pytest.raises(EmptyInput):
        clustering_purity({}, {})


# ----------------------------------------------------------------- run_eval

@pytest.fixture
def planted():
    records = [make_record(f"d{i}", f"title {i}", domain="x" if i < 5 else "y") for i in range(10)]
    index = VectorIndex(16).add_many([r.application_number for r in records], [basis(i) for i in range(10)])
    table = {f"q{i}": basis(i) for i in range(10)}
    queries = [
        LabeledQuery("q0", frozenset({"d0"}), "x"),        # top5 d0 d1 d2 d3 d4 -> acc 1, recall 1
        LabeledQuery("q1", frozenset({"d1", "d9"}), "x"),  # top5 d1 d0 d2 d3 d4 -> acc 1, recall 1/2
        LabeledQuery("q2", frozenset({"d5"}), "y"),        # top5 d2 d0 d1 d3 d4 -> acc 0, recall 0
        LabeledQuery("q3", frozenset({"d0", "d1"}), "y"),  # top5 d3 d0 d1 d2 d4 -> acc 0, recall 1
    ]
    return records, index, TableEmbedder(table, 16), queries


def test_run_eval_planted(planted):
    records, index, emb, queries = planted
    report = run_eval(records, None, queries, emb, k=5, index=index)
    assert report.accuracy == 0.5
    assert report.recall_at_k == 0.625
    assert report.n_queries == 4 and report.n_failed == 0
    assert report.per_domain["x"].accuracy == 1.0 and report.per_domain["x"].recall == 0.75
    assert report.per_domain["y"].accuracy == 0.0 and report.per_domain["y"].recall == 0.5


def test_per_domain_recombines(planted):
    records, index, emb, queries = planted
    report = run_eval(records, None, queries, emb, index=index)
    n = sum(s.n_queries for s in report.per_domain.values())
    acc = sum(s.accuracy * s.n_queries for s in report.per_domain.values()) / n
    rec = sum(s.recall * s.n_queries for s in report.per_domain.values()) / n
    assert abs(acc - report.accuracy) < 1e-9 and abs(rec - report.recall_at_k) < 1e-9


def test_domain_falls_back_to_relevant_record(planted):
    records, index, emb, _ = planted
    report = run_eval(records, None, [LabeledQuery("q7", frozenset({"d7"}))], emb, index=index)
    assert list(report.per_domain) == ["y"]


def test_failures_excluded_and_counted(planted):
    records, index, emb, queries = planted
    report = run_eval(records, None, queries + [LabeledQuery(" ", frozenset({"d0"}))], emb, index=index)
    assert report.n_queries == 4 and report.n_failed == 1
    assert report.failures[0]["error"] == "EmptyText"
    assert report.accuracy == 0.5


def test_zero_successes_is_error(planted):
    records, index, emb, _ = planted
    with pytest.raises(EvalError):
        run_eval(records, None, [LabeledQuery(" ", frozenset({"d0"}))], emb, index=index)


def test_split_precondition(planted):
    records, index, emb, queries = planted
    split = CorpusSplit([f"d{i}" for i in range(2, 10)], [], ["d0", "d1"], seed=0)
    with pytest.raises(EvalError):
        run_eval(records, split, queries, emb, index=index)
    ok = run_eval(records, split, queries[:1], emb, index=index)
    assert ok.accuracy == 1.0


def test_accuracy_at_most_recall_single_relevant(planted):
    records, index, emb, _ = planted
    rng = random.Random(2)
    queries = [LabeledQuery(f"q{rng.randrange(10)}", frozenset({f"d{rng.randrange(10)}"})) for _ in range(30)]
    report = run_eval(records, None, queries, emb, index=index)
    assert 0.0 <= report.accuracy <= report.recall_at_k <= 1.0


def test_labeled_query_requires_relevant():
    with pytest.raises(EmptyRelevantSet):
        LabeledQuery("q", frozenset())


def test_load_queries(tmp_path):
    p = tmp_path / "q.jsonl"
    p.write_text(json.dumps({"query": "battery", "relevant_ids": ["US1", "US2"], "domain": "x"}) + "\n\n"
                 + json.dumps({"query": "gear", "relevant_ids": ["US3"]}) + "\n")
    qs = load_queries(str(p))
    assert qs[0] == LabeledQuery("battery", frozenset({"US1", "US2"}), "x")
    assert qs[1].expected_domain is None
    p.write_text('{"query": "x"}\n')
    with pytest.raises(EvalError):
        load_queries(str(p))


# ------------------------------------------------------------------ report

def test_reference_rows_from_reported_results():
    rows = {m: (a, r) for m, a, r in REFERENCE_ROWS}
    assert rows["gpt-3.5-turbo-0125+RAG"] == (0.805, 0.921)
    assert rows["gpt-3.5-turbo"] == (0.612, 0.804)
    assert rows["gpt-4.0"] == (0.801, 0.913)


def test_render_table_and_json(planted):
    records, index, emb, queries = planted
    report = run_eval(records, None, queries, emb, index=index, model_label="local-hash")
    table = report.render_table()
    assert "local-hash (measured)" in table
    line = next(l for l in table.splitlines() if l.startswith("gpt-3.5-turbo-0125+RAG"))
    assert "80.5%" in line and "92.1%" in line
    assert "50.0%" in table and "62.5%" in table
    d = json.loads(report.to_json())
    assert d["accuracy"] == 0.5 and d["recall_at_k"] == 0.625 and d["k"] == 5
    assert {"model_label": "gpt-3.5-turbo-0125+RAG", "accuracy": 0.805, "recall": 0.921} in d["reference_rows"]
    assert isinstance(report, EvalReport)
