"""
Cross-dataset transfer matrix
=============================

Two synthetic job-posting datasets share only part of their skill
vocabulary. A base tagger trained on one dataset goes blind on the other's
unshared types; blending in retrieval from its own datastore recovers what
the vocabularies have in common. The matrix below scores every
(store, evaluation set) pair with and without retrieval.
"""
from neartag import DatastoreConfig, FusionParams, SynthConfig, build_datastore
from neartag.evaluation import extract_corpus_spans, span_scores
from neartag.fusion import infer_sentence, repair_bio
from neartag.synth import generate_transfer

config = SynthConfig(
    dim=16,
    skill_vocab_size=30,
    zipf_exponent=1.5,
    base_noise=0.2,
    n_train_sentences=600,
    n_test_sentences=150,
    seed=1,
)
corpus = generate_transfer(config, ("boards", "portals"), type_overlap=0.4)
print("datasets:", ", ".join(corpus.datasets))

stores = {
    ds: build_datastore([(ds, corpus.train[ds])], DatastoreConfig(ncentroids=16, nprobe=16))
    for ds in corpus.datasets
}


def span_f1(store, sentences, params):
    pred, gold, txt = [], [], []
    for s in sentences:
        out = infer_sentence(store, s, params)
        pred.append(repair_bio([t for t, _ in out]))
        gold.append([t.gold for t in s.tokens])
        txt.append([t.text for t in s.tokens])
    return span_scores(
        extract_corpus_spans(gold, txt), extract_corpus_spans(pred, txt)
    ).f1


vanilla = FusionParams(k=8, lam=0.0, temperature=1.0)
fused = FusionParams(k=8, lam=0.7, temperature=1.0)

corner = "store \\ eval"
header = f"{corner:<14}" + "".join(f"{ds:>22}" for ds in corpus.datasets)
print()
print(header)
for model_ds in corpus.datasets:
    cells = []
    for eval_ds in corpus.datasets:
        sentences = corpus.test_views[(model_ds, eval_ds)]
        v = span_f1(stores[model_ds], sentences, vanilla)
        f = span_f1(stores[model_ds], sentences, fused)
        mark = "*" if model_ds == eval_ds else " "
        cells.append(f"{v:.3f} -> {f:.3f}{mark}".rjust(22))
    print(f"{model_ds:<14}" + "".join(cells))
print("\neach cell: vanilla F1 -> fused F1 (* marks in-domain evaluation)")
