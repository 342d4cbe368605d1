"""Synthetic corpora: determinism, label validity, frequency shape, geometry."""
from collections import Counter

import numpy as np
import pytest

from neartag.corpus import LabelTag
from neartag.datastore import DatastoreConfig, build_datastore
from neartag.evaluation import (
    extract_corpus_spans,
    frequency_bins,
    span_scores,
)
from neartag.fusion import FusionParams, infer_sentence, repair_bio
from neartag.synth import (
    SynthConfig,
    config_from_mapping,
    generate,
    generate_transfer,
    parse_config_file,
)


def corpus_bytes(sentences):
    parts = []
    for s in sentences:
        for t in s.tokens:
            parts.append(t.text.encode())
            parts.append(bytes([int(t.gold)]))
            parts.append(np.asarray(t.embedding).tobytes())
            parts.append(np.asarray(t.base).tobytes())
    return b"".join(parts)


def test_generation_deterministic():
    cfg = SynthConfig(n_train_sentences=20, n_test_sentences=8, seed=7)
    a_train, a_test = generate(cfg)
    b_train, b_test = generate(cfg)
    assert corpus_bytes(a_train) == corpus_bytes(b_train)
    assert corpus_bytes(a_test) == corpus_bytes(b_test)
    c_train, _ = generate(SynthConfig(n_train_sentences=20, n_test_sentences=8, seed=8))
    assert corpus_bytes(a_train) != corpus_bytes(c_train)


def test_shapes_and_counts():
    cfg = SynthConfig(dim=9, n_train_sentences=15, n_test_sentences=6,
                      tokens_per_sentence=10)
    train, test = generate(cfg)
    assert len(train) == 15 and len(test) == 6
    for s in train + test:
        assert len(s.tokens) == 10
        assert s.dataset_id == "synth"
        for t in s.tokens:
            assert t.embedding.shape == (9,)
            assert t.base.shape == (3,)
            assert t.base.sum() == pytest.approx(1.0, abs=1e-12)
            assert t.text


def test_tags_valid_bio_with_spans():
    train, test = generate(SynthConfig(n_train_sentences=40, n_test_sentences=10))
    for s in train + test:
        tags = [t.gold for t in s.tokens]
        assert repair_bio(tags) == tags    # already valid
        assert LabelTag.B in tags          # every sentence carries a span
        lengths = [e - b + 1 for b, e in
                   ((sp.start, sp.end) for sp in
                    extract_corpus_spans([tags], [[t.text for t in s.tokens]]))]
        assert all(1 <= n <= 3 for n in lengths)


def test_span_surfaces_follow_zipf():
    cfg = SynthConfig(n_train_sentences=800, skill_vocab_size=40, zipf_exponent=1.5)
    train, _ = generate(cfg)
    counts = Counter()
    for s in train:
        tags = [t.gold for t in s.tokens]
        for sp in extract_corpus_spans([tags], [[t.text for t in s.tokens]]):
            counts[sp.surface] += 1
    assert len(counts) <= 40
    ranked = [n for _, n in counts.most_common()]
    # heavy head: the top type clearly outweighs the median type
    assert ranked[0] >= 5 * ranked[len(ranked) // 2]


def test_zero_noise_bases_are_gold_one_hot():
    train, test = generate(SynthConfig(base_noise=0.0, n_train_sentences=10,
                                       n_test_sentences=5))
    for s in train + test:
        for t in s.tokens:
            expect = np.zeros(3)
            expect[int(t.gold)] = 1.0
            assert np.array_equal(t.base, expect)


def test_zero_noise_lambda_zero_perfect_f1():
    cfg = SynthConfig(base_noise=0.0, n_train_sentences=30, n_test_sentences=20)
    train, test = generate(cfg)
    store = build_datastore([("synth", train)], DatastoreConfig(ncentroids=4, nprobe=4))
    params = FusionParams(k=1, lam=0.0, temperature=1.0)
    pred_tags, gold_tags, texts = [], [], []
    for s in test:
        out = infer_sentence(store, s, params)
        pred_tags.append(repair_bio([t for t, _ in out]))
        gold_tags.append([t.gold for t in s.tokens])
        texts.append([t.text for t in s.tokens])
    r = span_scores(extract_corpus_spans(gold_tags, texts),
                    extract_corpus_spans(pred_tags, texts))
    assert r.f1 == 1.0


def test_separable_geometry_pure_retrieval_perfect_f1():
    # fully corrupted bases but near-degenerate clusters: retrieval alone
    # must label the test split perfectly once every test skill token's
    # surface (type and span position) is covered by the training split
    cfg = SynthConfig(
        dim=16,
        n_train_sentences=300,
        n_test_sentences=60,
        cluster_spread=1e-9,
        base_noise=1.0,
        skill_vocab_size=12,
        seed=3,
    )
    train, test = generate(cfg)
    train_surfaces = {t.text for s in train for t in s.tokens if t.gold != LabelTag.O}
    test_surfaces = {t.text for s in test for t in s.tokens if t.gold != LabelTag.O}
    assert test_surfaces <= train_surfaces
    store = build_datastore([("synth", train)], DatastoreConfig(ncentroids=8, nprobe=8))
    params = FusionParams(k=1, lam=1.0, temperature=1.0)
    pred_tags, gold_tags, texts = [], [], []
    for s in test:
        out = infer_sentence(store, s, params)
        pred_tags.append(repair_bio([t for t, _ in out]))
        gold_tags.append([t.gold for t in s.tokens])
        texts.append([t.text for t in s.tokens])
    r = span_scores(extract_corpus_spans(gold_tags, texts),
                    extract_corpus_spans(pred_tags, texts))
    assert r.f1 == 1.0


def test_long_tail_fraction_of_test_spans():
    cfg = SynthConfig(
        n_train_sentences=2000,
        n_test_sentences=400,
        skill_vocab_size=200,
        zipf_exponent=1.5,
        seed=0,
    )
    train, test = generate(cfg)
    train_counts = Counter(
        sp.surface
        for s in train
        for sp in extract_corpus_spans(
            [[t.gold for t in s.tokens]], [[t.text for t in s.tokens]]
        )
    )
    test_spans = extract_corpus_spans(
        [[t.gold for t in s.tokens] for s in test],
        [[t.text for t in s.tokens] for s in test],
    )
    # share of distinct test skill types whose training count is "low"
    test_types = {sp.surface for sp in test_spans}
    low_types = sum(1 for surf in test_types if train_counts[surf] < 4)
    assert low_types / len(test_types) >= 0.30


def test_corrupted_base_mass_is_dyadic():
    train, _ = generate(SynthConfig(base_noise=1.0, n_train_sentences=30, seed=1))
    seen_corrupt = 0
    for s in train:
        for t in s.tokens:
            top = float(np.max(t.base))
            if top == 1.0:
                continue
            seen_corrupt += 1
            assert top == 10 / 16            # exact in binary floating point
            assert sorted(t.base.tolist()) == [3 / 16, 3 / 16, 10 / 16]
            assert int(np.argmax(t.base)) != int(t.gold)
    assert seen_corrupt > 50


def test_transfer_views_share_skeletons():
    cfg = SynthConfig(n_train_sentences=12, n_test_sentences=6,
                      skill_vocab_size=30, seed=5)
    tc = generate_transfer(cfg, ("dsa", "dsb"), type_overlap=0.3)
    assert tc.datasets == ["dsa", "dsb"]
    assert set(tc.train) == {"dsa", "dsb"}
    assert set(tc.test_views) == {("dsa", "dsa"), ("dsa", "dsb"),
                                  ("dsb", "dsa"), ("dsb", "dsb")}
    own = tc.test_views[("dsa", "dsa")]
    cross = tc.test_views[("dsb", "dsa")]
    # same evaluation skeleton underneath: identical words, tags, embeddings
    for sa, sb in zip(own, cross):
        assert [t.text for t in sa.tokens] == [t.text for t in sb.tokens]
        assert [t.gold for t in sa.tokens] == [t.gold for t in sb.tokens]
        for ta, tb in zip(sa.tokens, sb.tokens):
            assert np.array_equal(ta.embedding, tb.embedding)
    assert all(s.dataset_id == "dsa" for s in own)
    assert all(s.dataset_id == "dsb" for s in tc.train["dsb"])


def test_transfer_unseen_types_usually_missed():
    cfg = SynthConfig(n_train_sentences=10, n_test_sentences=150,
                      skill_vocab_size=40, base_noise=0.0, seed=2)
    tc = generate_transfer(cfg, ("dsa", "dsb"), type_overlap=0.25)
    # dsb's vocabulary window misses dsa's most frequent types entirely,
    # so this is the direction where base distributions collapse hardest
    own = tc.test_views[("dsa", "dsa")]
    cross = tc.test_views[("dsb", "dsa")]
    flips = total_span_tokens = 0
    for so, sc in zip(own, cross):
        for to, tci in zip(so.tokens, sc.tokens):
            if int(to.gold) == LabelTag.O:
                continue
            total_span_tokens += 1
            own_says_o = int(np.argmax(to.base)) == LabelTag.O
            cross_says_o = int(np.argmax(tci.base)) == LabelTag.O
            if cross_says_o and not own_says_o:
                flips += 1
    # a large share of span tokens lose their base signal across datasets
    assert flips / total_span_tokens > 0.4


def test_transfer_deterministic():
    cfg = SynthConfig(n_train_sentences=8, n_test_sentences=4, seed=11)
    a = generate_transfer(cfg)
    b = generate_transfer(cfg)
    for key in a.test_views:
        assert corpus_bytes(a.test_views[key]) == corpus_bytes(b.test_views[key])
    for ds in a.train:
        assert corpus_bytes(a.train[ds]) == corpus_bytes(b.train[ds])


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(dim=0)
    with pytest.raises(ValueError):
        SynthConfig(tokens_per_sentence=2)
    with pytest.raises(ValueError):
        SynthConfig(cluster_spread=0.0)
    with pytest.raises(ValueError):
        SynthConfig(base_noise=1.5)
    with pytest.raises(ValueError):
        SynthConfig(zipf_exponent=-1.0)


def test_config_file_parsing(tmp_path):
    p = tmp_path / "synth.cfg"
    p.write_text(
        "# corpus shape\n"
        "dim = 8\n"
        "n_train_sentences=33\n"
        "\n"
        "base_noise = 0.25   \n"
        "dataset_id = demo\n"
    )
    mapping = parse_config_file(p)
    cfg = config_from_mapping(mapping)
    assert cfg.dim == 8
    assert cfg.n_train_sentences == 33
    assert cfg.base_noise == 0.25
    assert cfg.dataset_id == "demo"
    assert cfg.n_test_sentences == SynthConfig().n_test_sentences

    bad = tmp_path / "bad.cfg"
    bad.write_text("dim = 8\nnot a pair\n")
    with pytest.raises(ValueError, match=r"bad\.cfg:2"):
        parse_config_file(bad)

    with pytest.raises(ValueError, match="unknown"):
        config_from_mapping({"no_such_field": "1"})
    with pytest.raises(ValueError):
        config_from_mapping({"dim": "eight"})
