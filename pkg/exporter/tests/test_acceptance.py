"""Acceptance gate: exporter-level guarantees, one pass/fail line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the stage lines.
"""
import time
from contextlib import contextmanager

import numpy as np
import pytest

from conftest import walk_raw
from ets_exporter import CorpusError, ExportConfig, export


@contextmanager
def stage(tag: str, description: str):
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"\n[{tag}] FAIL {description}")
        raise
    else:
        print(f"\n[{tag}] PASS {description} ({time.perf_counter() - start:.1f}s)")


def test_s1_round_trip_through_engine_reader(model_dir, tmp_path):
    with stage("S1", "exported stream parses with matching counts and unit sums"):
        from neartag.stream import read_stream_header, read_token_stream

        corpus = tmp_path / "toy.txt"
        corpus.write_text(
            "write O\n"
            "sql B\n"
            "queries I\n"
            "\n"
            "teamwork B\n"
            "and O\n"
            "database B\n"
            "management I\n"
        )
        out = tmp_path / "toy.ets"
        summary = export(ExportConfig(
            model=model_dir, corpus=str(corpus), out=str(out), dataset_id="toy",
        ))
        assert summary["sentences"] == 2

        back = read_token_stream(out)
        assert len(back) == 2
        assert [len(s) for s in back] == [3, 4]
        assert [s.texts() for s in back] == [
            ["write", "sql", "queries"],
            ["teamwork", "and", "database", "management"],
        ]
        assert [[int(g) for g in s.tags()] for s in back] == [[0, 1, 2], [1, 0, 1, 2]]
        dim, ds, count = read_stream_header(out)
        assert (dim, ds, count) == (summary["dim"], "toy", 2)

        # sums checked on the stored float32 triples, not the reader's view
        _, _, _, raw = walk_raw(out)
        for sentence in raw:
            for _, _, emb, base in sentence:
                assert emb.shape == (dim,) and np.all(np.isfinite(emb))
                assert abs(float(base.sum()) - 1.0) <= 1e-5


def test_s2_tag_mapping_rule(model_dir, tmp_path):
    with stage("S2", "mapped non-BIO tags export; unmapped tag names its line"):
        corpus = tmp_path / "skills.txt"
        corpus.write_text(
            "python SKILL\n"
            "and NONE\n"
            "teamwork SKILL\n"
            "\n"
            "data SKILL\n"
            "cleaning SKILL-CONT\n"
        )
        (tmp_path / "map.txt").write_text("SKILL B\nSKILL-CONT I\nNONE O\n")
        out = tmp_path / "skills.ets"
        summary = export(ExportConfig(
            model=model_dir, corpus=str(corpus), out=str(out),
            tag_map=str(tmp_path / "map.txt"),
        ))
        assert summary == {"sentences": 2, "tokens": 5, "dim": 16}
        _, _, _, raw = walk_raw(out)
        assert [[t[1] for t in s] for s in raw] == [[1, 0, 1], [1, 2]]

        # same corpus without the mapping: the failure points at line 1
        with pytest.raises(CorpusError, match=r"skills\.txt:1: unmapped tag 'SKILL'"):
            export(ExportConfig(
                model=model_dir, corpus=str(corpus), out=str(tmp_path / "x.ets"),
            ))
        assert not (tmp_path / "x.ets").exists()
