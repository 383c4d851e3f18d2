"""Finetuning heads over the encoder: first-patch word classification,
biaffine dependency parsing on mean-pooled word vectors, pooled sequence
classification, and sliding-window extractive span prediction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .model import ModelParameters, encode, patch_embed
from .render import PatchType, RenderedSequence, RendererConfig, char_spans, render_text
from .tensor import (
    Tensor,
    concat,
    cross_entropy,
    dropout,
    gelu,
    masked_softmax,
    matmul,
    rows_max,
    take_rows,
)

IGNORE_INDEX = -100
POOLING_KINDS = ("cls", "mean", "max", "attention")


def _encode_sequence(seq: RenderedSequence, backbone: ModelParameters, train: bool, rng):
    n_valid = int(np.sum(np.array(seq.patch_types) != PatchType.PAD))
    embedded = patch_embed(seq, backbone)
    return encode(embedded, None, backbone, train=train, n_valid=n_valid, rng=rng)


# ---------------------------------------------------------------------------
# word-level classification (POS tagging, NER)


@dataclass
class TokenTaskBatch:
    sequences: list  # word_aligned RenderedSequence
    labels: list | None = None  # per-sequence list of per-word label ids

    def __post_init__(self):
        for i, seq in enumerate(self.sequences):
            if seq.mode != "word_aligned":
                raise ValueError(f"sequence {i} is not word_aligned")
        if self.labels is not None:
            for i, (seq, labs) in enumerate(zip(self.sequences, self.labels)):
                if len(labs) != len(seq.word_to_first_patch):
                    raise ValueError(
                        f"sequence {i}: {len(labs)} labels for {len(seq.word_to_first_patch)} words"
                    )


@dataclass
class TokenTaskResult:
    predictions: list  # per-sequence list of per-word predicted tag ids
    loss_value: float | None = None
    node: Tensor | None = None


def init_token_head(enc_width: int, n_tags: int, rng: np.random.Generator) -> dict:
    w, b = nn.init_linear(enc_width, n_tags, rng)
    return {"token_head.w": w, "token_head.b": b}


def token_classify(
    batch: TokenTaskBatch,
    backbone: ModelParameters,
    head: dict,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> TokenTaskResult:
    """Linear classifier with dropout over patch rows; loss and predictions
    only at each word's first patch (everything else is ignore-indexed)."""
    p_drop = backbone.cfg.dropout if train else 0.0
    predictions = []
    loss_terms = []
    for si, seq in enumerate(batch.sequences):
        enc = _encode_sequence(seq, backbone, train, rng)
        rows = enc.hidden[1:]  # drop CLS, align rows with patches
        rows = dropout(rows, p_drop, rng, train)
        logits = nn.linear(rows, head["token_head.w"], head["token_head.b"])
        firsts = list(seq.word_to_first_patch)
        predictions.append([int(np.argmax(logits.data[p])) for p in firsts])
        if batch.labels is not None:
            labels = np.full(seq.num_patches, IGNORE_INDEX, dtype=np.intp)
            labels[firsts] = batch.labels[si]
            loss_terms.append(cross_entropy(logits, labels, ignore_index=IGNORE_INDEX))
    if not loss_terms:
        return TokenTaskResult(predictions=predictions)
    node = loss_terms[0] * (1.0 / len(loss_terms))
    for term in loss_terms[1:]:
        node = node + term * (1.0 / len(loss_terms))
    return TokenTaskResult(predictions=predictions, loss_value=float(node.data), node=node)


# ---------------------------------------------------------------------------
# biaffine dependency parsing


@dataclass(frozen=True)
class ParseTree:
    heads: tuple  # per word, 0 = artificial root, else 1-based word index
    labels: tuple  # per word, relation label id

    def __post_init__(self):
        n = len(self.heads)
        for i, h in enumerate(self.heads):
            if not 0 <= h <= n:
                raise ValueError(f"head {h} out of range 0..{n}")
            if h == i + 1:
                raise ValueError(f"word {i + 1} attaches to itself")
        if len(self.labels) != n:
            raise ValueError("labels must match word count")


def init_biaffine_head(
    enc_width: int,
    n_labels: int,
    rng: np.random.Generator,
    arc_dim: int = 128,
    label_dim: int = 64,
) -> dict:
    params = {}
    for name, dim in (("arc_dep", arc_dim), ("arc_head", arc_dim), ("lab_dep", label_dim), ("lab_head", label_dim)):
        params[f"biaffine.{name}.w"], params[f"biaffine.{name}.b"] = nn.init_linear(enc_width, dim, rng)
    params["biaffine.arc_u"] = Tensor(nn.trunc_normal((arc_dim, arc_dim), rng), requires_grad=True)
    params["biaffine.arc_bias"] = Tensor(np.zeros((arc_dim, 1), dtype=np.float32), requires_grad=True)
    params["biaffine.lab_u"] = Tensor(
        nn.trunc_normal((label_dim, n_labels * label_dim), rng), requires_grad=True
    )
    params["biaffine.lab_w"], params["biaffine.lab_b"] = nn.init_linear(2 * label_dim, n_labels, rng)
    return params


@dataclass
class ParseScores:
    """Arc scores plus the label-scorer closure over chosen head indices."""

    arc: Tensor  # (n_words, n_words + 1), column 0 is the root
    _dep_lab: Tensor = field(repr=False, default=None)
    _head_lab: Tensor = field(repr=False, default=None)  # (n_words + 1, d), row 0 root
    _head: dict = field(repr=False, default=None)
    n_labels: int = 0

    def label_scores(self, head_indices) -> Tensor:
        """Per-label biaffine scores of each dependent against given heads."""
        idx = np.asarray(head_indices, dtype=np.intp)  # 0 = root, else 1-based
        n = self.arc.shape[0]
        sel = take_rows(self._head_lab, idx)  # (n, d)
        d = self._dep_lab.shape[1]
        bilinear = matmul(self._dep_lab, self._head["biaffine.lab_u"])  # (n, L*d)
        bilinear = bilinear.reshape(n, self.n_labels, d)
        prod = (bilinear * sel.reshape(n, 1, d)).sum(axis=2)  # (n, L)
        pair = concat([self._dep_lab, sel], axis=1)
        linear = nn.linear(pair, self._head["biaffine.lab_w"], self._head["biaffine.lab_b"])
        return prod + linear


def _word_pool_matrix(seq: RenderedSequence, dtype) -> np.ndarray:
    """(words, patches) averaging matrix: mean over each word's patch span."""
    n_words = len(seq.word_to_first_patch)
    pool = np.zeros((n_words, seq.num_patches), dtype=dtype)
    for w, (lo, hi) in enumerate(seq.word_patch_spans):
        pool[w, lo:hi] = 1.0 / (hi - lo)
    return pool


def biaffine_parse_score(
    seq: RenderedSequence,
    backbone: ModelParameters,
    head: dict,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> ParseScores:
    """Score arcs between mean-pooled word vectors; the CLS row stands in
    for the artificial root."""
    if not seq.word_to_first_patch:
        raise ValueError("cannot parse an empty sentence")
    enc = _encode_sequence(seq, backbone, train, rng)
    cls_row = enc.hidden[0:1]
    patch_rows = enc.hidden[1:]
    pool = Tensor(_word_pool_matrix(seq, patch_rows.data.dtype))
    words = matmul(pool, patch_rows)  # (n_words, enc_width)
    p_drop = backbone.cfg.dropout if train else 0.0
    words = dropout(words, p_drop, rng, train)
    candidates = concat([cls_row, words], axis=0)  # root + words as head candidates

    def mlp(x, name):
        return gelu(nn.linear(x, head[f"biaffine.{name}.w"], head[f"biaffine.{name}.b"]))

    dep_arc = mlp(words, "arc_dep")
    head_arc = mlp(candidates, "arc_head")
    dep_lab = mlp(words, "lab_dep")
    head_lab = mlp(candidates, "lab_head")

    arc = matmul(matmul(dep_arc, head["biaffine.arc_u"]), head_arc.transpose(1, 0))
    head_bias = matmul(head_arc, head["biaffine.arc_bias"]).transpose(1, 0)  # (1, n+1)
    arc = arc + head_bias
    n_labels = head["biaffine.lab_b"].shape[0]
    return ParseScores(arc=arc, _dep_lab=dep_lab, _head_lab=head_lab, _head=head, n_labels=n_labels)


def decode_heads(arc_scores: np.ndarray) -> list:
    """Greedy per-dependent argmax over head candidates, self excluded."""
    scores = np.asarray(arc_scores, dtype=np.float64).copy()
    n = scores.shape[0]
    for i in range(n):
        scores[i, i + 1] = -np.inf  # column i+1 is word i itself
    return [int(np.argmax(scores[i])) for i in range(n)]


def parse_decode(arc_scores, label_scores) -> ParseTree:
    """Greedy tree from planted or model scores; label argmax per dependent."""
    heads = decode_heads(np.asarray(arc_scores))
    labels = [int(np.argmax(row)) for row in np.asarray(label_scores)]
    return ParseTree(heads=tuple(heads), labels=tuple(labels))


def parse_sequence(seq, backbone, head) -> ParseTree:
    scores = biaffine_parse_score(seq, backbone, head, train=False)
    heads = decode_heads(scores.arc.data)
    labels = np.argmax(scores.label_scores(heads).data, axis=1)
    return ParseTree(heads=tuple(heads), labels=tuple(int(x) for x in labels))


def parse_loss(seq, gold: ParseTree, backbone, head, train=True, rng=None):
    """Cross-entropy on gold heads plus cross-entropy on labels at gold heads."""
    scores = biaffine_parse_score(seq, backbone, head, train=train, rng=rng)
    arc_loss = cross_entropy(scores.arc, np.asarray(gold.heads, dtype=np.intp))
    lab_scores = scores.label_scores(gold.heads)
    lab_loss = cross_entropy(lab_scores, np.asarray(gold.labels, dtype=np.intp))
    return arc_loss + lab_loss


DISTANCE_BUCKETS = ("1", "2", "3", "4", "5", "6", "7+")


def attachment_metrics(pred: ParseTree, gold: ParseTree) -> dict:
    """UAS/LAS plus LAS bucketed by dependency length |head - dependent|."""
    if len(pred.heads) != len(gold.heads):
        raise ValueError("tree sizes differ")
    n = len(gold.heads)
    correct_head = 0
    correct_both = 0
    by_dist = {b: [0, 0] for b in DISTANCE_BUCKETS}  # bucket -> [correct, total]
    for i in range(n):
        dist = abs(gold.heads[i] - (i + 1))
        bucket = str(dist) if dist <= 6 else "7+"
        by_dist[bucket][1] += 1
        head_ok = pred.heads[i] == gold.heads[i]
        both_ok = head_ok and pred.labels[i] == gold.labels[i]
        correct_head += head_ok
        correct_both += both_ok
        by_dist[bucket][0] += both_ok
    return {
        "uas": correct_head / n,
        "las": correct_both / n,
        "las_by_distance": {
            b: (c / t if t else None) for b, (c, t) in by_dist.items()
        },
        "count": n,
    }


# ---------------------------------------------------------------------------
# sequence classification


def init_sequence_head(enc_width: int, n_classes: int, rng: np.random.Generator, pooling: str = "cls") -> dict:
    if pooling not in POOLING_KINDS:
        raise ValueError(f"unknown pooling {pooling!r}, expected one of {POOLING_KINDS}")
    params = {}
    params["seq_head.w"], params["seq_head.b"] = nn.init_linear(enc_width, n_classes, rng)
    if pooling == "attention":
        params["seq_head.query"] = Tensor(nn.trunc_normal((1, enc_width), rng), requires_grad=True)
    return params


def sequence_classify(
    seq: RenderedSequence,
    pooling: str,
    backbone: ModelParameters,
    head: dict,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Class logits from a pooled sequence representation.

    cls reads encoder row 0; mean/max/attention pool over TEXT patch rows
    only, so separators and padding never contribute.
    """
    if pooling not in POOLING_KINDS:
        raise ValueError(f"unknown pooling {pooling!r}, expected one of {POOLING_KINDS}")
    enc = _encode_sequence(seq, backbone, train, rng)
    if pooling == "cls":
        pooled = enc.hidden[0:1]
    else:
        text_rows = take_rows(enc.hidden, [i + 1 for i in seq.text_patch_indices()])
        if pooling == "mean":
            pooled = text_rows.mean(axis=0, keepdims=True)
        elif pooling == "max":
            pooled = rows_max(text_rows)
        else:  # attention
            scores = matmul(head["seq_head.query"], text_rows.transpose(1, 0))
            weights = masked_softmax(scores, None)
            pooled = matmul(weights, text_rows)
    p_drop = backbone.cfg.dropout if train else 0.0
    pooled = dropout(pooled, p_drop, rng, train)
    return nn.linear(pooled, head["seq_head.w"], head["seq_head.b"])[0]


# ---------------------------------------------------------------------------
# extractive QA with a sliding window over context patches


@dataclass(frozen=True)
class QaConfig:
    max_seq_patches: int = 400
    stride: int = 160
    max_answer_patches: int = 30


class QaError(ValueError):
    pass


@dataclass
class QaWindow:
    seq: RenderedSequence  # question + SEP + context chunk + EOS
    context_patch_start: int  # chunk offset in full-context patch space
    context_row_offset: int  # patch index inside the window where the chunk starts
    n_context_patches: int


@dataclass
class QaAnswer:
    char_start: int
    char_end: int  # exclusive
    text: str
    patch_start: int
    patch_end: int
    score: float


def init_qa_head(enc_width: int, rng: np.random.Generator) -> dict:
    w, b = nn.init_linear(enc_width, 2, rng)
    return {"qa_head.w": w, "qa_head.b": b}


def qa_windows(question: str, context: str, rcfg: RendererConfig, atlas, qa_cfg: QaConfig) -> list:
    """Assemble question ⊕ SEP ⊕ context-chunk windows over patch space.

    Consecutive windows start ``stride`` context patches apart, so they
    overlap by (chunk - stride) patches.
    """
    max_seq = min(qa_cfg.max_seq_patches, rcfg.max_patches)
    ctx_cfg = _unbounded_cfg(rcfg, atlas, context + question)
    full_ctx = render_text(context, ctx_cfg, atlas)
    q_rendered = render_text(question, ctx_cfg, atlas)
    q_patches = q_rendered.num_text_patches
    chunk = max_seq - q_patches - 2  # SEP between segments plus final EOS
    if chunk < 1:
        raise QaError(f"question occupies {q_patches} patches, leaving no room for context")
    n_ctx = full_ctx.num_text_patches
    windows = []
    start = 0
    while True:
        end = min(start + chunk, n_ctx)
        piece = _assemble_window(q_rendered, full_ctx, start, end, rcfg)
        windows.append(
            QaWindow(
                seq=piece,
                context_patch_start=start,
                context_row_offset=q_patches + 1,
                n_context_patches=end - start,
            )
        )
        if end >= n_ctx:
            break
        start += qa_cfg.stride
        if start >= n_ctx:
            break
    return windows


def _unbounded_cfg(rcfg: RendererConfig, atlas, text: str) -> RendererConfig:
    """Renderer config wide enough that `text` never truncates."""
    need = atlas.text_width(text) // rcfg.patch_size + 2
    return RendererConfig(
        patch_size=rcfg.patch_size,
        canvas_height=rcfg.canvas_height,
        channels=rcfg.channels,
        max_patches=max(need, 2),
        mode="continuous",
    )


def _assemble_window(q_rendered, full_ctx, start, end, rcfg) -> RenderedSequence:
    p = rcfg.patch_size
    qp = q_rendered.num_text_patches
    q_body = q_rendered.pixels[:, : qp * p, :]
    chunk_body = full_ctx.pixels[:, start * p : end * p, :]
    sep = np.zeros((rcfg.canvas_height, p, q_body.shape[2]), dtype=np.float32)
    eos = np.zeros_like(sep)
    pixels = np.concatenate([q_body, sep, chunk_body, eos], axis=1)
    types = (
        [PatchType.TEXT] * qp
        + [PatchType.SEP]
        + [PatchType.TEXT] * (end - start)
        + [PatchType.SEP]
    )
    return RenderedSequence(
        pixels=pixels,
        patch_types=tuple(types),
        num_text_patches=qp + (end - start),
        char_to_patch=tuple(q_rendered.char_to_patch),
        source_text=q_rendered.source_text,
        mode="pair",
        pair_boundary=len(q_rendered.source_text),
    )


def qa_window_logits(window: QaWindow, backbone: ModelParameters, head: dict, train=False, rng=None):
    """(start, end) logit tensors over the window's context patch rows."""
    enc = _encode_sequence(window.seq, backbone, train, rng)
    rows = take_rows(
        enc.hidden,
        [1 + window.context_row_offset + i for i in range(window.n_context_patches)],
    )
    p_drop = backbone.cfg.dropout if train else 0.0
    rows = dropout(rows, p_drop, rng, train)
    logits = nn.linear(rows, head["qa_head.w"], head["qa_head.b"])  # (n_ctx, 2)
    return logits


def stitch_window_logits(windows, logit_arrays, n_context_patches: int):
    """Per-patch start/end logits over the full context: each patch takes its
    logit from the maximum-scoring window, earlier window on ties."""
    start = np.full(n_context_patches, -np.inf)
    end = np.full(n_context_patches, -np.inf)
    for window, arr in zip(windows, logit_arrays):
        for i in range(window.n_context_patches):
            g = window.context_patch_start + i
            if arr[i, 0] > start[g]:
                start[g] = arr[i, 0]
            if arr[i, 1] > end[g]:
                end[g] = arr[i, 1]
    return start, end


def best_span(start_logits: np.ndarray, end_logits: np.ndarray, max_len: int):
    """Highest start+end pair with start <= end <= start + max_len."""
    n = len(start_logits)
    best = (-np.inf, 0, 0)
    for s in range(n):
        hi = min(n, s + max_len + 1)
        e_rel = int(np.argmax(end_logits[s:hi]))
        score = float(start_logits[s] + end_logits[s + e_rel])
        if score > best[0]:
            best = (score, s, s + e_rel)
    return best


def qa_extract(
    question: str,
    context: str,
    backbone: ModelParameters,
    head: dict,
    rcfg: RendererConfig,
    atlas,
    qa_cfg: QaConfig = QaConfig(),
) -> QaAnswer:
    """Predict the answer span and return every codepoint overlapping it."""
    windows = qa_windows(question, context, rcfg, atlas, qa_cfg)
    arrays = [qa_window_logits(w, backbone, head).data for w in windows]
    n_ctx = max(w.context_patch_start + w.n_context_patches for w in windows)
    start, end = stitch_window_logits(windows, arrays, n_ctx)
    score, s, e = best_span(start, end, qa_cfg.max_answer_patches)
    spans = char_spans(render_text(context, _unbounded_cfg(rcfg, atlas, context), atlas))
    chars = [i for i, pt in enumerate(spans.char_to_patch) if s <= pt <= e]
    if not chars:
        return QaAnswer(char_start=0, char_end=0, text="", patch_start=s, patch_end=e, score=score)
    lo, hi = min(chars), max(chars) + 1
    return QaAnswer(
        char_start=lo,
        char_end=hi,
        text=context[lo:hi],
        patch_start=s,
        patch_end=e,
        score=score,
    )
