"""Span-level evaluation with long-tail frequency slicing.

Spans are maximal B I* runs; matching is by exact position (sentence,
start, end). Precision and recall fall back to 0 when their denominator
is empty. Frequency bins slice spans by how often their normalized surface
occurs in a training multiset; each side of the comparison is binned by
its own surface, and a matched pair can only count inside a bin when both
sides land in it.
"""
from __future__ import annotations

import sys
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence, TextIO

from scipy.stats import binom, chi2

from .corpus import LabelTag
from .errors import UnrepairedSequence

BIN_ORDER = ("low", "mid_low", "mid_high", "high")

# Half-open count ranges; anything at or above the last edge is "high".
_BIN_EDGES = ((0, 4), (4, 7), (7, 10), (10, 16))


@dataclass(frozen=True)
class Span:
    sentence_index: int
    start: int
    end: int            # inclusive
    surface: str


@dataclass(eq=False)
class EvalReport:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    per_bin: dict[str, tuple[float, int]] = field(default_factory=dict)
    provenance: dict[str, int] | None = None


class McNemarResult(NamedTuple):
    statistic: float
    p_value: float
    b: int              # tokens first system got right and second got wrong
    c: int              # the converse
    degenerate: bool    # b + c == 0; p is 1.0 by convention


def normalize_surface(texts: Sequence[str]) -> str:
    return " ".join(" ".join(texts).lower().split())


def extract_spans(
    tags: Sequence[LabelTag | int],
    texts: Sequence[str],
    sentence_index: int = 0,
) -> list[Span]:
    """Maximal B I* runs of a repaired tag sequence.

    Raises UnrepairedSequence when an I opens a span (run repair_bio first).
    """
    if len(tags) != len(texts):
        raise ValueError(f"{len(tags)} tags vs {len(texts)} texts")
    spans: list[Span] = []
    start: int | None = None
    for i, raw in enumerate(tags):
        t = LabelTag(int(raw))
        if t == LabelTag.I and start is None:
            raise UnrepairedSequence(f"dangling I at position {i}")
        if t != LabelTag.I and start is not None:
            spans.append(Span(sentence_index, start, i - 1, normalize_surface(texts[start:i])))
            start = None
        if t == LabelTag.B:
            start = i
    if start is not None:
        spans.append(
            Span(sentence_index, start, len(tags) - 1, normalize_surface(texts[start:]))
        )
    return spans


def extract_corpus_spans(
    tag_seqs: Sequence[Sequence[LabelTag | int]],
    text_seqs: Sequence[Sequence[str]],
) -> list[Span]:
    spans: list[Span] = []
    for i, (tags, texts) in enumerate(zip(tag_seqs, text_seqs)):
        spans.extend(extract_spans(tags, texts, sentence_index=i))
    return spans


def _positions(spans: Iterable[Span]) -> set[tuple[int, int, int]]:
    return {(s.sentence_index, s.start, s.end) for s in spans}


def span_scores(gold: Sequence[Span], pred: Sequence[Span]) -> EvalReport:
    """Exact-position precision / recall / F1 over span sets."""
    gold_pos = _positions(gold)
    pred_pos = _positions(pred)
    tp = len(gold_pos & pred_pos)
    fp = len(pred_pos) - tp
    fn = len(gold_pos) - tp
    precision = tp / len(pred_pos) if pred_pos else 0.0
    recall = tp / len(gold_pos) if gold_pos else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return EvalReport(precision, recall, f1, tp, fp, fn)


def bin_for_count(count: int) -> str:
    if count < 0:
        raise ValueError("count must be non-negative")
    for name, (lo, hi) in zip(BIN_ORDER, _BIN_EDGES):
        if lo <= count < hi:
            return name
    return BIN_ORDER[-1]


def frequency_bins(
    train_surfaces: Counter | Iterable[str],
    spans: Sequence[Span],
) -> dict[Span, str]:
    """Bin each span by its surface's occurrence count in the training multiset."""
    counts = train_surfaces if isinstance(train_surfaces, Counter) else Counter(train_surfaces)
    return {s: bin_for_count(counts[s.surface]) for s in spans}


def per_bin_f1(
    gold: Sequence[Span],
    pred: Sequence[Span],
    bins: Mapping[Span, str],
) -> dict[str, tuple[float, int]]:
    """Span F1 restricted to each frequency bin, as bin -> (f1, pred count).

    All four bins appear in the result even when empty.
    """
    out: dict[str, tuple[float, int]] = {}
    for name in BIN_ORDER:
        g = [s for s in gold if bins[s] == name]
        p = [s for s in pred if bins[s] == name]
        out[name] = (span_scores(g, p).f1, len(p))
    return out


def jaccard(a: Iterable[str], b: Iterable[str]) -> float:
    sa, sb = set(a), set(b)
    union = sa | sb
    if not union:
        return 0.0
    return len(sa & sb) / len(union)


def mcnemar_token(
    tags_a: Sequence[LabelTag | int],
    tags_b: Sequence[LabelTag | int],
    gold: Sequence[LabelTag | int],
) -> McNemarResult:
    """Paired token-level McNemar test between two systems.

    Uses the continuity-corrected statistic (|b - c| - 1)^2 / (b + c) with a
    1-dof chi-squared tail, switching to the exact two-sided binomial when
    the discordant count b + c falls below 25. b + c == 0 yields p = 1.0
    with the degenerate flag rather than an error.
    """
    if not (len(tags_a) == len(tags_b) == len(gold)):
        raise ValueError("tag sequences must have equal length")
    b = c = 0
    for ta, tb, tg in zip(tags_a, tags_b, gold):
        a_ok = int(ta) == int(tg)
        b_ok = int(tb) == int(tg)
        if a_ok and not b_ok:
            b += 1
        elif b_ok and not a_ok:
            c += 1
    n = b + c
    if n == 0:
        return McNemarResult(0.0, 1.0, b, c, True)
    statistic = (abs(b - c) - 1) ** 2 / n
    if n < 25:
        p = min(1.0, 2.0 * float(binom.cdf(min(b, c), n, 0.5)))
    else:
        p = float(chi2.sf(statistic, df=1))
    return McNemarResult(float(statistic), p, b, c, False)


# --- report emission ---

def emit_records(report: EvalReport, fh: TextIO = sys.stdout) -> None:
    """One metric per line: name, slice, value. Field order is stable."""
    def put(name: str, slc: str, value) -> None:
        text = f"{value:.6f}" if isinstance(value, float) else str(value)
        fh.write(f"{name}\t{slc}\t{text}\n")

    put("span_precision", "overall", report.precision)
    put("span_recall", "overall", report.recall)
    put("span_f1", "overall", report.f1)
    put("tp", "overall", report.tp)
    put("fp", "overall", report.fp)
    put("fn", "overall", report.fn)
    for name in BIN_ORDER:
        if name in report.per_bin:
            f1, n_pred = report.per_bin[name]
            put("span_f1", f"bin={name}", f1)
            put("pred_count", f"bin={name}", n_pred)
    if report.provenance is not None:
        for source in sorted(report.provenance):
            put("retrieved", f"source={source}", report.provenance[source])


def format_table(report: EvalReport) -> str:
    lines = [
        f"{'precision':<12}{report.precision:>10.4f}",
        f"{'recall':<12}{report.recall:>10.4f}",
        f"{'span F1':<12}{report.f1:>10.4f}",
        f"{'tp/fp/fn':<12}{report.tp:>4d} /{report.fp:>4d} /{report.fn:>4d}",
    ]
    if report.per_bin:
        lines.append("")
        lines.append(f"{'bin':<10}{'F1':>10}{'pred':>8}")
        for name in BIN_ORDER:
            if name in report.per_bin:
                f1, n_pred = report.per_bin[name]
                lines.append(f"{name:<10}{f1:>10.4f}{n_pred:>8d}")
    if report.provenance is not None:
        lines.append("")
        lines.append(f"{'source':<16}{'retrieved':>10}")
        for source in sorted(report.provenance):
            lines.append(f"{source:<16}{report.provenance[source]:>10d}")
    return "\n".join(lines)
