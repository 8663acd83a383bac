"""
Retrieval-augmented answers
===========================

Embed a corpus with the deterministic hashing embedder, retrieve the top five
patents for a question and let the template generator cite them. Swapping in
a remote embedder or chat model only changes the two config objects.
"""

from patentrag.embedder import EmbedderConfig, make_embedder
from patentrag.evalkit import build_index
from patentrag.ragpipe import GeneratorConfig, RagPipeline
from patentrag.synthetic import templated_corpus

records = templated_corpus(20, seed=3)
embedder = make_embedder(EmbedderConfig(provider="local", dimension=512, seed=0))
index = build_index(records, embedder)
pipeline = RagPipeline(embedder, index, {r.application_number: r for r in records},
                       GeneratorConfig(provider="local_template"), k=5, budget_chars=1200)

question = "Which patents describe cathode and electrolyte improvements?"
for hit in pipeline.retrieve(question):
    print(hit.rank, hit.doc_id, f"{hit.score:.3f}", pipeline.records[hit.doc_id].field_of_invention)

answer = pipeline.answer(question)
print(answer.answer_text)
print(answer.to_json(timings=False))

###############################################################################
# The context handed to a generator is budgeted in characters; each snippet
# gets an equal share of what earlier snippets left unused.

from patentrag.ragpipe import assemble_context, build_messages

ctx = assemble_context(question, pipeline.retrieve(question), pipeline.records, budget_chars=400)
print(len(ctx.rendered), [s.truncated for s in ctx.snippets])
print(build_messages(ctx)[-1]["content"])
