"""Command-line pipeline: build stores, run fused inference, tune, evaluate.

Subcommands: build, infer, sweep, eval, crossmatrix, synth, provenance.
Outputs are written atomically (temp file + rename), so a nonzero exit
never leaves a partial artifact behind. The NNOSE_THREADS environment
variable caps worker threads for sweep grids and cross-matrix rows
(0 = all cores, unset = 1); results are emitted in canonical order
regardless of scheduling.
"""
from __future__ import annotations

import argparse
import os
import sys
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields

import numpy as np

from .corpus import LabelTag, TAG_CHARS, Sentence, tag_from_char
from .datastore import DatastoreConfig, Datastore, build_datastore, load_datastore
from .errors import EngineError, IoFailure
from .evaluation import (
    EvalReport,
    Span,
    emit_records,
    extract_corpus_spans,
    format_table,
    frequency_bins,
    mcnemar_token,
    per_bin_f1,
    span_scores,
)
from .fusion import FusionParams, infer_sentence, knn_mass_batch, repair_bio
from .stream import read_stream_header, read_token_stream, write_token_stream
from .synth import SynthConfig, config_from_mapping, generate, parse_config_file

DEFAULT_KS = (4, 8, 16, 32, 64, 128)
DEFAULT_LAMBDAS = tuple(i / 100 for i in range(10, 91, 5))
DEFAULT_TEMPERATURES = (0.1, 0.5, 1.0, 2.0, 3.0, 5.0, 10.0)


@dataclass
class SweepSpace:
    ks: tuple = DEFAULT_KS
    lambdas: tuple = DEFAULT_LAMBDAS
    temperatures: tuple = DEFAULT_TEMPERATURES


def thread_count() -> int:
    raw = os.environ.get("NNOSE_THREADS", "").strip()
    if not raw:
        return 1
    n = int(raw)
    if n == 0:
        return os.cpu_count() or 1
    return max(1, n)


def _atomic_write_text(path, text: str) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    try:
        with open(tmp, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except OSError as e:
        raise IoFailure(str(e)) from e
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


# --- prediction files ---

def format_predictions(per_sentence: list[list[tuple[LabelTag, np.ndarray]]]) -> str:
    lines = []
    for si, sent in enumerate(per_sentence):
        for ti, (tag, p) in enumerate(sent):
            lines.append(
                f"{si}\t{ti}\t{TAG_CHARS[int(tag)]}\t{p[0]:.6f}\t{p[1]:.6f}\t{p[2]:.6f}"
            )
    return "\n".join(lines) + ("\n" if lines else "")


def read_predictions(path) -> list[list[tuple[LabelTag, np.ndarray]]]:
    """Parse a prediction file back into per-sentence (tag, probs) lists.

    Lines must enumerate sentences and tokens contiguously from zero.
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = f.read().splitlines()
    except OSError as e:
        raise IoFailure(str(e)) from e
    out: list[list[tuple[LabelTag, np.ndarray]]] = []
    for lineno, line in enumerate(lines, start=1):
        parts = line.split("\t")
        if len(parts) != 6:
            raise EngineError(f"{path}:{lineno}: expected 6 tab-separated fields")
        try:
            si, ti = int(parts[0]), int(parts[1])
            tag = tag_from_char(parts[2])
            probs = np.array([float(parts[3]), float(parts[4]), float(parts[5])])
        except ValueError as e:
            raise EngineError(f"{path}:{lineno}: {e}") from e
        if si == len(out) and ti == 0:
            out.append([])
        if si != len(out) - 1 or ti != len(out[-1]):
            raise EngineError(f"{path}:{lineno}: indices out of order")
        out[-1].append((tag, probs))
    return out


# --- sweep ---

def run_sweep(
    store: Datastore,
    sentences: list[Sentence],
    space: SweepSpace | None = None,
) -> tuple[dict, list[dict]]:
    """Grid-search (k, lambda, temperature) by span F1 over `sentences`.

    Retrieval runs in exact mode once at the largest k; smaller k values
    reuse prefixes of the same neighbor lists. Returns (best row, all rows)
    with rows sorted by (k, lambda, temperature); ties on F1 go to the
    smaller coordinates in that order.
    """
    space = space or SweepSpace()
    ks = sorted(set(int(k) for k in space.ks))
    lambdas = sorted(set(float(l) for l in space.lambdas))
    temps = sorted(set(float(t) for t in space.temperatures))
    if not ks or not lambdas or not temps:
        raise ValueError("sweep space must be non-empty")

    kmax = min(max(ks), len(store))
    n_tokens = sum(len(s) for s in sentences)
    dists = np.empty((n_tokens, kmax), dtype=np.float64)
    labels = np.empty((n_tokens, kmax), dtype=np.intp)
    row = 0
    for sent in sentences:
        for tok in sent.tokens:
            idx, d = store._exact_arrays(tok.embedding, kmax)
            dists[row] = d
            labels[row] = store.values[idx]
            row += 1

    bases = np.vstack([tok.base for sent in sentences for tok in sent.tokens])
    lengths = [len(s) for s in sentences]
    bounds = np.concatenate([[0], np.cumsum(lengths)])
    text_seqs = [s.texts() for s in sentences]
    gold_spans = extract_corpus_spans(
        [repair_bio(s.tags()) for s in sentences], text_seqs
    )

    def score_tags(flat_tags: np.ndarray) -> float:
        tag_seqs = [
            repair_bio(flat_tags[bounds[i]:bounds[i + 1]]) for i in range(len(sentences))
        ]
        pred = extract_corpus_spans(tag_seqs, text_seqs)
        return span_scores(gold_spans, pred).f1

    def eval_block(k: int, temp: float) -> list[dict]:
        kk = min(k, kmax)
        p_knn = knn_mass_batch(dists[:, :kk], labels[:, :kk], temp)
        rows = []
        for lam in lambdas:
            fused = lam * p_knn + (1.0 - lam) * bases
            f1 = score_tags(np.argmax(fused, axis=1))
            rows.append({"k": k, "lambda": lam, "temperature": temp, "f1": f1})
        return rows

    blocks = [(k, t) for k in ks for t in temps]
    workers = thread_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda kt: eval_block(*kt), blocks))
    else:
        results = [eval_block(*kt) for kt in blocks]

    rows = [r for block in results for r in block]
    rows.sort(key=lambda r: (r["k"], r["lambda"], r["temperature"]))
    best = rows[0]
    for r in rows[1:]:
        if r["f1"] > best["f1"]:
            best = r
    return best, rows


# --- infer helpers ---

def _infer_corpus(
    store: Datastore,
    sentences: list[Sentence],
    params: FusionParams,
    mode: str,
) -> list[list[tuple[LabelTag, np.ndarray]]]:
    return [infer_sentence(store, s, params, mode) for s in sentences]


def _check_alignment(gold: list[Sentence], preds: list[list]) -> None:
    if len(preds) != len(gold) or any(
        len(p) != len(g) for p, g in zip(preds, gold)
    ):
        raise EngineError(
            f"prediction file does not align with gold stream "
            f"({len(preds)} vs {len(gold)} sentences)"
        )


# --- subcommands ---

def cmd_build(args) -> int:
    config = DatastoreConfig(
        use_whitening=not args.no_whitening,
        ncentroids=args.centroids,
        nprobe=args.nprobe,
        kmeans_iters=args.kmeans_iters,
        seed=args.seed,
    )
    streams = []
    for path in args.inputs:
        sentences = read_token_stream(path)
        _, dataset_id, _ = read_stream_header(path)
        streams.append((dataset_id, sentences))
    store = build_datastore(streams, config)
    store.save(args.out)
    counts = Counter(
        store.source_table[int(i)] for i in store.source_index
    )
    print(f"built {args.out}: {len(store)} entries, dim {store.dim}")
    print(f"whitening: {'on' if store.whitening is not None else 'off'}")
    print(f"centroids: {store.centroids.shape[0]}")
    for sid in store.source_table:
        print(f"  {sid}: {counts.get(sid, 0)} entries")
    return 0


def cmd_infer(args) -> int:
    store = load_datastore(args.store)
    sentences = read_token_stream(args.input)
    params = FusionParams(k=args.k, lam=args.lam, temperature=args.temperature)
    results = _infer_corpus(store, sentences, params, args.mode)
    _atomic_write_text(args.out, format_predictions(results))
    n = sum(len(r) for r in results)
    print(f"wrote {args.out}: {n} tokens, k={args.k} lambda={args.lam} "
          f"temperature={args.temperature} mode={args.mode}")
    return 0


def cmd_sweep(args) -> int:
    store = load_datastore(args.store)
    sentences = read_token_stream(args.dev)
    space = SweepSpace(
        ks=tuple(int(x) for x in args.ks.split(",")),
        lambdas=tuple(float(x) for x in args.lambdas.split(",")),
        temperatures=tuple(float(x) for x in args.temperatures.split(",")),
    )
    best, rows = run_sweep(store, sentences, space)
    lines = [
        f"dev_span_f1\tk={r['k']},lambda={r['lambda']:.2f},T={r['temperature']:g}\t{r['f1']:.6f}"
        for r in rows
    ]
    grid_text = "\n".join(lines) + "\n"
    if args.grid_out:
        _atomic_write_text(args.grid_out, grid_text)
    else:
        sys.stdout.write(grid_text)
    print(
        f"best k={best['k']} lambda={best['lambda']:.2f} "
        f"temperature={best['temperature']:g} dev_span_f1={best['f1']:.6f}"
    )
    return 0


def _evaluate(
    gold: list[Sentence],
    pred_tags: list[list[LabelTag]],
    train_sentences: list[Sentence] | None,
) -> EvalReport:
    text_seqs = [s.texts() for s in gold]
    gold_spans = extract_corpus_spans([repair_bio(s.tags()) for s in gold], text_seqs)
    pred_spans = extract_corpus_spans([repair_bio(t) for t in pred_tags], text_seqs)
    report = span_scores(gold_spans, pred_spans)
    if train_sentences is not None:
        train_surfaces = Counter(
            s.surface
            for s in extract_corpus_spans(
                [repair_bio(s.tags()) for s in train_sentences],
                [s.texts() for s in train_sentences],
            )
        )
        bins = frequency_bins(train_surfaces, [*gold_spans, *pred_spans])
        report.per_bin = per_bin_f1(gold_spans, pred_spans, bins)
    return report


def cmd_eval(args) -> int:
    gold = read_token_stream(args.gold)
    preds = read_predictions(args.pred)
    _check_alignment(gold, preds)
    pred_tags = [[tag for tag, _ in sent] for sent in preds]
    train = read_token_stream(args.train) if args.train else None
    report = _evaluate(gold, pred_tags, train)
    print(format_table(report))

    mcnemar = None
    if args.baseline_pred:
        baseline = read_predictions(args.baseline_pred)
        _check_alignment(gold, baseline)
        flat_gold = [t.gold for s in gold for t in s.tokens]
        flat_pred = [tag for sent in pred_tags for tag in sent]
        flat_base = [tag for sent in baseline for tag, _ in sent]
        mcnemar = mcnemar_token(flat_pred, flat_base, flat_gold)
        suffix = " (degenerate)" if mcnemar.degenerate else ""
        print(
            f"mcnemar b={mcnemar.b} c={mcnemar.c} "
            f"statistic={mcnemar.statistic:.6f} p={mcnemar.p_value:.6f}{suffix}"
        )

    if args.report:
        import io

        buf = io.StringIO()
        emit_records(report, buf)
        if mcnemar is not None:
            buf.write(f"mcnemar_statistic\toverall\t{mcnemar.statistic:.6f}\n")
            buf.write(f"mcnemar_p\toverall\t{mcnemar.p_value:.6f}\n")
            buf.write(f"mcnemar_degenerate\toverall\t{int(mcnemar.degenerate)}\n")
        _atomic_write_text(args.report, buf.getvalue())
    return 0


def _parse_params_file(path) -> dict[str, str]:
    raw = parse_config_file(path)
    return raw


def _cell_params(params: dict[str, str], source: str) -> FusionParams | None:
    def get(field: str) -> str | None:
        return params.get(f"{source}.{field}", params.get(f"default.{field}"))

    k, lam, temp = get("k"), get("lambda"), get("temperature")
    if k is None or lam is None or temp is None:
        return None
    return FusionParams(k=int(k), lam=float(lam), temperature=float(temp))


def cmd_crossmatrix(args) -> int:
    store_files = sorted(
        f for f in os.listdir(args.stores) if f.endswith(".nds")
    )
    if not store_files:
        raise EngineError(f"no .nds store files in {args.stores}")
    sources = [os.path.splitext(f)[0] for f in store_files]

    dataset_files: dict[str, str] = {}
    dataset_order: list[str] = []
    for path in args.datasets:
        _, ds_id, _ = read_stream_header(path)
        if ds_id in dataset_files:
            raise EngineError(f"duplicate dataset id {ds_id!r} in --datasets")
        dataset_files[ds_id] = path
        dataset_order.append(ds_id)

    params = _parse_params_file(args.params)
    params_dir = os.path.dirname(os.path.abspath(args.params))

    def cell_file(source: str, ds: str) -> str | None:
        override = params.get(f"eval.{source}.{ds}")
        if override is not None:
            return override if os.path.isabs(override) else os.path.join(params_dir, override)
        return dataset_files.get(ds)

    def eval_cell(source: str, store: Datastore, ds: str) -> tuple[float, float] | None:
        fp = _cell_params(params, source)
        path = cell_file(source, ds)
        if fp is None or path is None or not os.path.exists(path):
            return None
        gold = read_token_stream(path)
        vanilla = _infer_corpus(store, gold, FusionParams(k=fp.k, lam=0.0, temperature=fp.temperature), args.mode)
        fused = _infer_corpus(store, gold, fp, args.mode)

        def f1_of(results) -> float:
            tags = [[tag for tag, _ in sent] for sent in results]
            return _evaluate(gold, tags, None).f1

        return f1_of(vanilla), f1_of(fused)

    def eval_row(source: str) -> list[tuple[float, float] | None]:
        store = load_datastore(os.path.join(args.stores, f"{source}.nds"))
        return [eval_cell(source, store, ds) for ds in dataset_order]

    workers = thread_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            matrix = list(pool.map(eval_row, sources))
    else:
        matrix = [eval_row(s) for s in sources]

    width = max(10, *(len(ds) + 2 for ds in dataset_order))

    def block(label: str, pick) -> list[str]:
        lines = [label]
        header = f"{'train/eval':<14}" + "".join(f"{ds:>{width}}" for ds in dataset_order)
        lines.append(header)
        for source, row in zip(sources, matrix):
            cells = []
            for ds, cell in zip(dataset_order, row):
                mark = "*" if source == ds else ""
                cells.append(f"{'--' if cell is None else f'{pick(cell):.4f}'}{mark}".rjust(width))
            lines.append(f"{source:<14}" + "".join(cells))
        return lines

    out_lines = block("vanilla (lambda=0) span F1", lambda c: c[0])
    out_lines.append("")
    out_lines.extend(block("fused span F1", lambda c: c[1]))
    print("\n".join(out_lines))

    if args.report:
        rec = []
        for source, row in zip(sources, matrix):
            for ds, cell in zip(dataset_order, row):
                if cell is None:
                    continue
                rec.append(f"cross_span_f1\tsetting=vanilla,train={source},eval={ds}\t{cell[0]:.6f}")
                rec.append(f"cross_span_f1\tsetting=fused,train={source},eval={ds}\t{cell[1]:.6f}")
        _atomic_write_text(args.report, "\n".join(rec) + "\n")
    return 0


def cmd_synth(args) -> int:
    mapping = parse_config_file(args.config) if args.config else {}
    for f in fields(SynthConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            mapping[f.name] = str(value)
    cfg = config_from_mapping(mapping)
    train, test = generate(cfg)
    write_token_stream(train, args.train_out)
    write_token_stream(test, args.test_out)
    print(
        f"wrote {args.train_out} ({len(train)} sentences) and "
        f"{args.test_out} ({len(test)} sentences), dataset id {cfg.dataset_id!r}"
    )
    return 0


def cmd_provenance(args) -> int:
    store = load_datastore(args.store)
    sentences = read_token_stream(args.input)
    queries = [tok.embedding for s in sentences for tok in s.tokens]
    counts = store.provenance_counts(queries, args.k)
    total = sum(counts.values())
    print(f"{'source':<16}{'retrieved':>10}")
    for sid in sorted(counts):
        print(f"{sid:<16}{counts[sid]:>10d}")
    print(f"{'total':<16}{total:>10d}")
    if args.report:
        lines = [f"retrieved\tsource={sid}\t{counts[sid]}" for sid in sorted(counts)]
        _atomic_write_text(args.report, "\n".join(lines) + "\n")
    return 0


# --- argument parsing ---

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="neartag",
        description="Retrieval-augmented BIO tagging over token-stream files.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="build a datastore from token streams")
    p.add_argument("inputs", nargs="+", help="ETS1 token-stream files, one per dataset")
    p.add_argument("--out", required=True, help="output datastore path (.nds)")
    p.add_argument("--no-whitening", action="store_true")
    p.add_argument("--centroids", type=int, default=4096)
    p.add_argument("--nprobe", type=int, default=32)
    p.add_argument("--kmeans-iters", type=int, default=25)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("infer", help="write fused predictions for a token stream")
    p.add_argument("--store", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--temperature", type=float, required=True)
    p.add_argument("--mode", choices=("exact", "clustered"), default="exact")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("sweep", help="grid-search k, lambda, temperature on a dev stream")
    p.add_argument("--store", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--ks", default=",".join(str(k) for k in DEFAULT_KS))
    p.add_argument("--lambdas", default=",".join(f"{l:.2f}" for l in DEFAULT_LAMBDAS))
    p.add_argument(
        "--temperatures", default=",".join(str(t) for t in DEFAULT_TEMPERATURES)
    )
    p.add_argument("--grid-out", help="write the full grid here instead of stdout")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eval", help="score a prediction file against gold")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--train", help="training stream for frequency binning")
    p.add_argument("--baseline-pred", help="second prediction file for McNemar")
    p.add_argument("--report", help="write line-delimited metric records here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser(
        "crossmatrix", help="vanilla and fused F1 for each (store, dataset) pair"
    )
    p.add_argument("--stores", required=True, help="directory of <source>.nds stores")
    p.add_argument("--datasets", nargs="+", required=True, help="eval token streams")
    p.add_argument("--params", required=True, help="key=value params file")
    p.add_argument("--mode", choices=("exact", "clustered"), default="exact")
    p.add_argument("--report", help="write line-delimited records here")
    p.set_defaults(func=cmd_crossmatrix)

    p = sub.add_parser("synth", help="generate a seeded synthetic corpus")
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--train-out", required=True)
    p.add_argument("--test-out", required=True)
    for f in fields(SynthConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.type == "int":
            p.add_argument(flag, type=int, default=None)
        elif f.type == "float":
            p.add_argument(flag, type=float, default=None)
        else:
            p.add_argument(flag, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("provenance", help="which sources retrieval draws from")
    p.add_argument("--store", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--report", help="write line-delimited records here")
    p.set_defaults(func=cmd_provenance)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (EngineError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
