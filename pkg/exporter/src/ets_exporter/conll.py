"""Two-column CoNLL reading and tag mapping.

The corpus layout is one `token tag` pair per line, whitespace separated,
with blank lines closing sentences. Every parse failure names the file and
the 1-based line it happened on.
"""
from __future__ import annotations


VALID_TAGS = ("O", "B", "I")


class CorpusError(ValueError):
    """A corpus or mapping file failed to parse or validate."""


def read_conll(path) -> list[list[tuple[str, str, int]]]:
    """Sentences of (token, tag, line number). Blank lines split sentences."""
    sentences: list[list[tuple[str, str, int]]] = []
    current: list[tuple[str, str, int]] = []
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise CorpusError(f"cannot read corpus {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            if current:
                sentences.append(current)
                current = []
            continue
        parts = line.split()
        if len(parts) != 2:
            raise CorpusError(
                f"{path}:{lineno}: expected 'token tag', got {len(parts)} fields"
            )
        current.append((parts[0], parts[1], lineno))
    if current:
        sentences.append(current)
    return sentences


def read_tag_map(path) -> dict[str, str]:
    """Two-column `source target` mapping file; # starts a comment line."""
    mapping: dict[str, str] = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise CorpusError(f"cannot read tag map {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise CorpusError(
                f"{path}:{lineno}: expected 'source target', got {len(parts)} fields"
            )
        src, dst = parts
        if dst not in VALID_TAGS:
            raise CorpusError(
                f"{path}:{lineno}: target tag {dst!r} is not one of {VALID_TAGS}"
            )
        if src in mapping and mapping[src] != dst:
            raise CorpusError(f"{path}:{lineno}: conflicting mapping for {src!r}")
        mapping[src] = dst
    return mapping


def map_tags(
    sentences: list[list[tuple[str, str, int]]],
    mapping: dict[str, str] | None,
    corpus_path,
) -> list[list[tuple[str, str, int]]]:
    """Apply the mapping, then require every tag to be O, B, or I."""
    mapping = mapping or {}
    out: list[list[tuple[str, str, int]]] = []
    for sentence in sentences:
        mapped: list[tuple[str, str, int]] = []
        for token, tag, lineno in sentence:
            tag = mapping.get(tag, tag)
            if tag not in VALID_TAGS:
                raise CorpusError(
                    f"{corpus_path}:{lineno}: unmapped tag {tag!r} "
                    f"(expected one of {VALID_TAGS} after mapping)"
                )
            mapped.append((token, tag, lineno))
        out.append(mapped)
    return out
