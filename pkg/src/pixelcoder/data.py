"""Corpus ingestion with strict per-record validation and loss accounting.

Formats: plain text lines, CoNLL-U (columns 1, 2, 7, 8; multiword ranges
and empty nodes skipped), token/BIO-tag TSV with blank-line sentence
breaks, SQuAD-style JSON, and tab-separated text pairs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

FORMATS = ("text_lines", "conllu", "conll_ner", "squad_json", "pair_tsv")


class IngestError(ValueError):
    def __init__(self, record_index, reason):
        self.record_index = record_index
        self.reason = reason
        super().__init__(f"record {record_index}: {reason}")


@dataclass(frozen=True)
class TextRecord:
    text: str


@dataclass(frozen=True)
class TaggedRecord:
    words: tuple
    tags: tuple


@dataclass(frozen=True)
class ParseRecord:
    words: tuple
    heads: tuple  # 0 = root, else 1-based
    relations: tuple


@dataclass(frozen=True)
class PairRecord:
    text_a: str
    text_b: str
    label: str


@dataclass(frozen=True)
class QaRecord:
    question: str
    context: str
    answer_start: int
    answer_text: str


@dataclass
class IngestResult:
    records: list = field(default_factory=list)
    rejected: int = 0
    errors: list = field(default_factory=list)  # (record_index, reason)

    @property
    def accepted(self) -> int:
        return len(self.records)

    @property
    def total(self) -> int:
        return self.accepted + self.rejected


def ingest(path, fmt: str, strict: bool = True) -> IngestResult:
    """Read and validate a dataset file.

    strict=True raises on the first malformed record; strict=False skips
    malformed records and accounts for them in the result.
    """
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}, expected one of {FORMATS}")
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    parser = {
        "text_lines": _iter_text_lines,
        "conllu": _iter_conllu,
        "conll_ner": _iter_conll_ner,
        "squad_json": _iter_squad,
        "pair_tsv": _iter_pair_tsv,
    }[fmt]
    result = IngestResult()
    for index, item in enumerate(parser(path)):
        if isinstance(item, IngestError):
            err = IngestError(index, item.reason)
            if strict:
                raise err
            result.rejected += 1
            result.errors.append((index, item.reason))
        else:
            result.records.append(item)
    return result


def _iter_text_lines(path):
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.strip():
                yield TextRecord(text=line)


def _sentence_blocks(path):
    """Blocks of nonblank lines with line numbers, split on blank lines."""
    block = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                if block:
                    yield block
                    block = []
                continue
            block.append((lineno, line))
    if block:
        yield block


def _parse_conllu_sentence(block):
    words, heads, rels = [], [], []
    for lineno, line in block:
        if line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) < 8:
            return IngestError(-1, f"line {lineno}: {len(cols)} columns, need >= 8")
        token_id = cols[0]
        if "-" in token_id or "." in token_id:
            continue  # multiword range or empty node
        if not token_id.isdigit():
            return IngestError(-1, f"line {lineno}: bad token id {token_id!r}")
        if not cols[1]:
            return IngestError(-1, f"line {lineno}: empty form")
        if not cols[6].isdigit():
            return IngestError(-1, f"line {lineno}: bad head {cols[6]!r}")
        if not cols[7] or cols[7] == "_":
            return IngestError(-1, f"line {lineno}: missing relation")
        words.append(cols[1])
        heads.append(int(cols[6]))
        rels.append(cols[7])
    if not words:
        return IngestError(-1, "sentence has no token lines")
    n = len(words)
    for i, h in enumerate(heads):
        if not 0 <= h <= n:
            return IngestError(-1, f"token {i + 1}: head {h} outside [0, {n}]")
    return ParseRecord(words=tuple(words), heads=tuple(heads), relations=tuple(rels))


def _iter_conllu(path):
    for block in _sentence_blocks(path):
        yield _parse_conllu_sentence(block)


def _parse_ner_sentence(block):
    words, tags = [], []
    for lineno, line in block:
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            return IngestError(-1, f"line {lineno}: need token<TAB>tag")
        words.append(parts[0])
        tags.append(parts[1])
    return TaggedRecord(words=tuple(words), tags=tuple(tags))


def _iter_conll_ner(path):
    for block in _sentence_blocks(path):
        yield _parse_ner_sentence(block)


def _iter_squad(path):
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        yield IngestError(-1, f"not valid JSON: {exc}")
        return
    data = payload.get("data", []) if isinstance(payload, dict) else []
    for article in data:
        for paragraph in article.get("paragraphs", []):
            context = paragraph.get("context", "")
            for qa in paragraph.get("qas", []):
                question = qa.get("question", "")
                answers = qa.get("answers", [])
                if not question or not context:
                    yield IngestError(-1, "missing question or context")
                    continue
                if not answers:
                    yield IngestError(-1, "no answers")
                    continue
                ans = answers[0]
                start = ans.get("answer_start", -1)
                text = ans.get("text", "")
                if not isinstance(start, int) or not text:
                    yield IngestError(-1, "answer missing text or answer_start")
                    continue
                if context[start : start + len(text)] != text:
                    yield IngestError(
                        -1, f"answer_text does not match context at offset {start}"
                    )
                    continue
                yield QaRecord(question=question, context=context, answer_start=start, answer_text=text)


def _iter_pair_tsv(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3 or not parts[2]:
                yield IngestError(-1, f"line {lineno}: need text_a<TAB>text_b<TAB>label")
                continue
            yield PairRecord(text_a=parts[0], text_b=parts[1], label=parts[2])
