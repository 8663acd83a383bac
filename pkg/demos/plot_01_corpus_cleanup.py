"""
Cleaning a raw patent export
============================

Raw exports mix date formats, IPC separators and noisy text. This walk-through
parses a small JSONL export, normalizes it, drops duplicates and draws an
8:1:1 stratified split.
"""

import json
from collections import Counter

from patentrag import corpus

raw_lines = [
    {"application_no": "us 2016 0001", "title": "Lithium  anode coating!!!",
     "abstract": "A protective\x07 layer for lithium anodes.", "filing_date": "03/04/2016",
     "ipc": "H01M4/04; h01m 10/05", "field_of_invention": "battery chemistry"},
    {"application_no": "US20160001", "title": "Lithium anode coating", "filing_date": "2016-03-04"},
    {"application_no": "US20170002", "title": "Stent graft", "filing_date": "04.05.2017",
     "field_of_invention": "biomedical engineering"},
    {"application_no": "US20180003", "title": "No filing date"},
    {"application_no": "US20190004", "title": "Slashed ISO date", "filing_date": "2019/01/02"},
]
source = "\n".join(json.dumps(r) for r in raw_lines).encode()

raw, parse_errors = corpus.parse_records(source, "jsonl")
accepted, rejected = corpus.normalize_all(raw)
kept, duplicates = corpus.deduplicate(accepted)

# the first occurrence of an application number wins
for rec in kept:
    print(rec.application_number, rec.application_date, rec.ipc_codes, repr(rec.title))
for rej in rejected + duplicates:
    print("rejected:", rej.reason.value, rej.detail)

###############################################################################
# A larger synthetic corpus shows that per-domain proportions survive the split.

from patentrag.synthetic import templated_corpus

records = templated_corpus(50, seed=0)
split = corpus.stratified_split(records, (8, 1, 1), seed=42)
domain = {r.application_number: r.field_of_invention for r in records}
for name, ids in (("train", split.train_ids), ("validation", split.validation_ids), ("test", split.test_ids)):
    print(name, dict(Counter(domain[i] for i in ids)))

print(corpus.compose_document_text(records[0]))
