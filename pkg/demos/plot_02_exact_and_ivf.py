"""
Exact and inverted-file search
==============================

A flat scan ranks every stored vector by inner product. Partitioning the
vectors into k-means cells and scanning only the closest few trades a little
recall for speed.
"""

import time

import numpy as np

from patentrag.index import VectorIndex
from patentrag.synthetic import gaussian_blobs

points, _, _ = gaussian_blobs(20_000, 64, 64, spread=1.5, seed=1)
base, queries = points[:-200], points[-200:]
index = VectorIndex(64).add_many([f"v{i:05d}" for i in range(len(base))], base)

t0 = time.perf_counter()
exact = [{h.doc_id for h in index.search_exact(q, 10)} for q in queries]
print(f"exact: {time.perf_counter() - t0:.2f}s for {len(queries)} queries")

index.train_ivf(64, seed=0)
sizes = np.array([len(l) for l in index.inverted_lists()])
print("list sizes: min", sizes.min(), "median", int(np.median(sizes)), "max", sizes.max())

###############################################################################
# Recall against the flat scan as more cells are probed.

for nprobe in (1, 2, 4, 8, 16, 64):
    t0 = time.perf_counter()
    approx = [{h.doc_id for h in index.search_ivf(q, 10, nprobe)} for q in queries]
    elapsed = time.perf_counter() - t0
    recall = np.mean([len(a & e) / 10 for a, e in zip(approx, exact)])
    print(f"nprobe={nprobe:3d}  recall@10={recall:.3f}  {elapsed:.2f}s")

###############################################################################
# The index persists to a checksummed binary file.

import os
import tempfile

with tempfile.TemporaryDirectory() as d:
    path = os.path.join(d, "blobs.pvix")
    index.save(path)
    again = VectorIndex.load(path)
    print(os.path.getsize(path), "bytes;", again.search_ivf(queries[0], 3, 8) == index.search_ivf(queries[0], 3, 8))
