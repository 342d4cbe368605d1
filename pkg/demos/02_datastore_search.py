"""
Building and querying a token datastore
=======================================

Every training token contributes one (embedding -> tag) entry. Queries run
either exhaustively or through an inverted-file index over k-means
centroids; probing every centroid reproduces the exhaustive result
exactly, while probing a few trades recall for speed.
"""
import time

import numpy as np

from neartag import DatastoreConfig, build_datastore, load_datastore
from neartag.corpus import LabelTag, Sentence, TokenRecord

rng = np.random.default_rng(7)

# twenty well-separated concept clusters standing in for skill types
centers = rng.normal(size=(20, 24)) * 4.0
sentences = []
for _ in range(500):
    which = rng.integers(20, size=10)
    rows = centers[which] + rng.normal(size=(10, 24))
    tokens = [
        TokenRecord(f"tok{j}", LabelTag(int(which[j] % 3)), rows[j], np.array([1.0, 0.0, 0.0]))
        for j in range(10)
    ]
    sentences.append(Sentence(tokens, "jobs"))

store = build_datastore(
    [("jobs", sentences)],
    DatastoreConfig(ncentroids=20, nprobe=4, seed=0),
)
print(f"store: {len(store)} entries, dim {store.dim}, "
      f"{store.centroids.shape[0]} centroids")

query = centers[3] + rng.normal(size=24)

t0 = time.perf_counter()
exact = store.exact_search(query, 5)
t_exact = time.perf_counter() - t0

t0 = time.perf_counter()
approx = store.clustered_search(query, 5)
t_approx = time.perf_counter() - t0

print("exact    :", [(n.entry_index, round(n.distance, 3), n.value.name) for n in exact])
print("clustered:", [(n.entry_index, round(n.distance, 3), n.value.name) for n in approx])
print(f"timing: exhaustive {t_exact * 1e3:.2f} ms, 4-probe {t_approx * 1e3:.2f} ms")

# probing all centroids makes the index a faithful reranking of exact search
full = store.clustered_search(query, 5)
wide_store = build_datastore(
    [("jobs", sentences)], DatastoreConfig(ncentroids=20, nprobe=20, seed=0)
)
full = wide_store.clustered_search(query, 5)
agree = [n.entry_index for n in full] == [n.entry_index for n in exact]
print("full-probe equals exhaustive:", agree)

# persistence: the store file reloads bit-for-bit
store.save("/tmp/demo_store.nds")
again = load_datastore("/tmp/demo_store.nds")
same = np.array_equal(store.keys, again.keys) and np.array_equal(
    store.centroids, again.centroids
)
print("saved and reloaded identically:", same)

# provenance: which source datasets answer the queries
queries = [centers[i] + rng.normal(size=24) for i in range(20)]
print("retrieval provenance:", store.provenance_counts(queries, 8))
