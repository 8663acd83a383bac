"""
Scoring retrieval on labeled queries
====================================

Build labeled queries from held-out patents, score top-1 accuracy and
recall@5, then check domain classification and clustering purity.
"""

from patentrag.corpus import compose_document_text, stratified_split
from patentrag.embedder import EmbedderConfig, make_embedder
from patentrag.evalkit import LabeledQuery, build_index, classify_by_knn, clustering_purity, run_eval
from patentrag.synthetic import templated_corpus

records = templated_corpus(60, seed=5)
split = stratified_split(records, (8, 1, 1), seed=0)
by_id = {r.application_number: r for r in records}
embedder = make_embedder(EmbedderConfig(provider="local", dimension=256, seed=7))

# each test patent's title is the query, the patent itself the only relevant hit
queries = [LabeledQuery(by_id[i].title, frozenset({i}), by_id[i].field_of_invention) for i in split.test_ids]
report = run_eval(records, split, queries, embedder, k=5, model_label="local-hash-trigram")
print(report.render_table())

###############################################################################
# kNN domain classification of the test patents against the training set.

train = [by_id[i] for i in split.train_ids]
index = build_index(train, embedder)
labels = {r.application_number: r.field_of_invention for r in train}
test = [by_id[i] for i in split.test_ids]
correct = sum(classify_by_knn(embedder.embed(compose_document_text(r)), index, labels) == r.field_of_invention
              for r in test)
print(f"kNN accuracy {correct}/{len(test)}")

index.train_ivf(4, seed=0)
print("purity", clustering_purity(dict(zip(index.doc_ids, index.assignments.tolist())), labels))
