"""Training, evaluation, robustness sweeps, and the renderer benchmark.

All runs are deterministic functions of (config, seed): batches, masks,
dropout, and attack choices all derive from the run seed, and every run
echoes its resolved configuration next to its outputs.
"""

from __future__ import annotations

import csv
import json
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import heads as H
from . import metrics as MET
from .atlas import default_atlas, load_atlas
from .attacks import AttackConfig, Attacker
from .checkpoint import load_checkpoint, save_checkpoint
from .config import WORD_LEVEL_TASKS, ConfigError, RunConfig
from .data import PairRecord, ParseRecord, QaRecord, TaggedRecord, ingest
from .model import ModelParameters, pretrain_step
from .optim import OptimizerState, adamw_step, lr_at
from .render import RendererConfig, RenderOverflow, char_spans, render_pair, render_text, render_words, split_long


def renderer_config(cfg: RunConfig) -> RendererConfig:
    pix = cfg.pixel_config()
    return RendererConfig(
        patch_size=pix.patch_size,
        canvas_height=pix.patch_size,
        channels=pix.channels,
        max_patches=cfg.sequence_budget(),
    )


def resolve_atlas(cfg: RunConfig):
    return load_atlas(cfg.atlas) if cfg.atlas else default_atlas()


# ---------------------------------------------------------------------------
# pretraining


def pack_lines(texts, rcfg: RendererConfig, atlas, min_patches: int = 8) -> list:
    """Greedily concatenate lines into render-sized chunks; lines longer than
    the budget are split first, so nothing is ever truncated."""
    budget_px = (rcfg.max_patches - 1) * rcfg.patch_size
    space = atlas.text_width(" ")

    pieces = []
    for text in texts:
        if atlas.text_width(text) > budget_px:
            pieces.extend(p.source_text.strip() for p in split_long(text, rcfg, atlas))
        else:
            pieces.append(text)

    chunks = []
    current = ""
    width = 0
    for text in pieces:
        w = atlas.text_width(text)
        if current and width + space + w <= budget_px:
            current += " " + text
            width += space + w
        else:
            if current:
                chunks.append(current)
            current, width = text, w
    if current:
        chunks.append(current)
    rendered = [render_text(c, rcfg, atlas) for c in chunks]
    return [r for r in rendered if r.num_text_patches >= min_patches]


def run_pretrain(cfg: RunConfig, out_dir, log_every: int = 1) -> dict:
    if cfg.task != "pretrain":
        raise ConfigError(f"run_pretrain got task {cfg.task!r}")
    if cfg.train_data is None:
        raise ConfigError("pretraining needs train_data")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    atlas = resolve_atlas(cfg)
    rcfg = renderer_config(cfg)
    pix = cfg.pixel_config()
    ocfg = cfg.optimizer_config()
    batch_size = cfg.effective_batch_size()

    texts = [r.text for r in ingest(cfg.train_data, "text_lines").records]
    sequences = pack_lines(texts, rcfg, atlas)
    if not sequences:
        raise ConfigError("no usable training sequences after packing")

    params = ModelParameters.init(pix, np.random.default_rng(cfg.seed))
    state = OptimizerState.for_params(params.named)
    order_rng = np.random.default_rng((cfg.seed, 1))

    log_rows = []
    started = time.time()
    for step in range(ocfg.total_steps):
        idx = order_rng.integers(0, len(sequences), size=batch_size)
        report = pretrain_step([sequences[i] for i in idx], params, state, ocfg, seed=cfg.seed)
        if (step + 1) % log_every == 0 or step == 0:
            log_rows.append((report.step, f"{report.lr:.3e}", f"{report.loss:.6f}"))

    with open(out / "loss_log.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "lr", "loss"])
        writer.writerows(log_rows)
    save_checkpoint(params, state, out / "checkpoint.pxck", step=state.step)
    cfg.write_resolved(out / "resolved.cfg")
    return {
        "steps": ocfg.total_steps,
        "sequences": len(sequences),
        "final_loss": float(log_rows[-1][2]),
        "seconds": time.time() - started,
        "checkpoint": str(out / "checkpoint.pxck"),
    }


# ---------------------------------------------------------------------------
# finetuning


@dataclass
class TaskData:
    """Task examples plus label vocabulary, ready for batching."""

    task: str
    examples: list
    label_names: list = field(default_factory=list)

    @property
    def n_labels(self) -> int:
        return len(self.label_names)


def _render_words_safe(words, rcfg, atlas):
    words = list(words)
    while True:
        try:
            return render_words(words, rcfg, atlas), len(words)
        except RenderOverflow:
            if len(words) <= 1:
                raise
            words = words[: max(1, len(words) * 3 // 4)]


def build_task_data(cfg: RunConfig, records, atlas, label_names=None) -> TaskData:
    """Convert ingested records into rendered examples (labels optional)."""
    rcfg = renderer_config(cfg)
    task = cfg.task
    if task in ("pos_tagging", "ner"):
        if label_names is None:
            label_names = sorted({t for r in records for t in r.tags})
        vocab = {t: i for i, t in enumerate(label_names)}
        examples = []
        for r in records:
            seq, kept = _render_words_safe(r.words, rcfg, atlas)
            tags = r.tags[:kept]
            examples.append((seq, [vocab[t] for t in tags], tags))
        return TaskData(task=task, examples=examples, label_names=label_names)
    if task == "parsing":
        if label_names is None:
            label_names = sorted({rel for r in records for rel in r.relations})
        vocab = {t: i for i, t in enumerate(label_names)}
        examples = []
        for r in records:
            seq, kept = _render_words_safe(r.words, rcfg, atlas)
            if kept < len(r.words):
                continue  # a clipped sentence has dangling heads
            tree = H.ParseTree(heads=r.heads, labels=tuple(vocab[x] for x in r.relations))
            examples.append((seq, tree))
        return TaskData(task=task, examples=examples, label_names=label_names)
    if task == "classification":
        if label_names is None:
            label_names = sorted({r.label for r in records})
        vocab = {t: i for i, t in enumerate(label_names)}
        examples = []
        for r in records:
            if r.text_b:
                seq = render_pair(r.text_a, r.text_b, rcfg, atlas)
            else:
                seq = render_text(r.text_a, rcfg, atlas)
            examples.append((seq, vocab[r.label]))
        return TaskData(task=task, examples=examples, label_names=label_names)
    if task == "qa":
        qa_cfg = H.QaConfig(
            max_seq_patches=cfg.sequence_budget(),
            stride=cfg.stride,
            max_answer_patches=cfg.max_answer_patches,
        )
        examples = []
        for r in records:
            windows = H.qa_windows(r.question, r.context, rcfg, atlas, qa_cfg)
            ctx_render = render_text(r.context, H._unbounded_cfg(rcfg, atlas, r.context), atlas)
            spans = char_spans(ctx_render)
            start_p = spans.char_to_patch[r.answer_start]
            end_p = spans.char_to_patch[r.answer_start + len(r.answer_text) - 1]
            train_windows = [
                w
                for w in windows
                if w.context_patch_start <= start_p
                and end_p < w.context_patch_start + w.n_context_patches
            ]
            examples.append((r, train_windows, (start_p, end_p)))
        return TaskData(task=task, examples=examples, label_names=[])
    raise ConfigError(f"no finetuning path for task {task!r}")


def init_head(cfg: RunConfig, pix, n_labels: int, rng) -> dict:
    task = cfg.task
    if task in ("pos_tagging", "ner"):
        return H.init_token_head(pix.enc_width, n_labels, rng)
    if task == "parsing":
        return H.init_biaffine_head(pix.enc_width, n_labels, rng)
    if task == "classification":
        return H.init_sequence_head(pix.enc_width, n_labels, rng, pooling=cfg.pooling)
    if task == "qa":
        return H.init_qa_head(pix.enc_width, rng)
    raise ConfigError(f"no head for task {task!r}")


def _batch_loss(cfg: RunConfig, task_data: TaskData, idx, backbone, head, rng):
    task = task_data.task
    terms = []
    if task in ("pos_tagging", "ner"):
        batch = H.TokenTaskBatch(
            sequences=[task_data.examples[i][0] for i in idx],
            labels=[task_data.examples[i][1] for i in idx],
        )
        result = H.token_classify(batch, backbone, head, train=True, rng=rng)
        return result.node
    if task == "parsing":
        for i in idx:
            seq, tree = task_data.examples[i]
            terms.append(H.parse_loss(seq, tree, backbone, head, train=True, rng=rng))
    elif task == "classification":
        from .tensor import cross_entropy

        for i in idx:
            seq, label = task_data.examples[i]
            logits = H.sequence_classify(seq, cfg.pooling, backbone, head, train=True, rng=rng)
            terms.append(cross_entropy(logits.reshape(1, -1), np.array([label])))
    elif task == "qa":
        from .tensor import cross_entropy

        for i in idx:
            _, windows, (start_p, end_p) = task_data.examples[i]
            if not windows:
                continue
            w = windows[int(rng.integers(0, len(windows)))] if len(windows) > 1 else windows[0]
            logits = H.qa_window_logits(w, backbone, head, train=True, rng=rng)
            s_rel = start_p - w.context_patch_start
            e_rel = end_p - w.context_patch_start
            start_row = logits[:, 0:1].transpose(1, 0)
            end_row = logits[:, 1:2].transpose(1, 0)
            terms.append(cross_entropy(start_row, np.array([s_rel])) + cross_entropy(end_row, np.array([e_rel])))
    else:
        raise ConfigError(task)
    if not terms:
        return None
    total = terms[0] * (1.0 / len(terms))
    for t in terms[1:]:
        total = total + t * (1.0 / len(terms))
    return total


def evaluate_task(cfg: RunConfig, task_data: TaskData, backbone, head, atlas) -> dict:
    """Deterministic metric report for a finetuning task."""
    task = task_data.task
    if task in ("pos_tagging", "ner"):
        batch = H.TokenTaskBatch(sequences=[e[0] for e in task_data.examples])
        preds = H.token_classify(batch, backbone, head).predictions
        gold_ids = [e[1] for e in task_data.examples]
        report = {"accuracy": MET.tagging_accuracy(preds, gold_ids)}
        if task == "ner":
            names = task_data.label_names
            pred_tags = [[names[i] for i in sent] for sent in preds]
            gold_tags = [list(e[2]) for e in task_data.examples]
            report.update(MET.span_f1(pred_tags, gold_tags))
        report["primary"] = report["f1"] if task == "ner" else report["accuracy"]
        return report
    if task == "parsing":
        pred_trees = [H.parse_sequence(seq, backbone, head) for seq, _ in task_data.examples]
        gold_trees = [tree for _, tree in task_data.examples]
        report = MET.corpus_attachment(pred_trees, gold_trees)
        report["primary"] = report["las"]
        return report
    if task == "classification":
        correct = 0
        for seq, label in task_data.examples:
            logits = H.sequence_classify(seq, cfg.pooling, backbone, head)
            correct += int(np.argmax(logits.data)) == label
        acc = correct / len(task_data.examples) if task_data.examples else 0.0
        return {"accuracy": acc, "primary": acc, "count": len(task_data.examples)}
    if task == "qa":
        rcfg = renderer_config(cfg)
        qa_cfg = H.QaConfig(
            max_seq_patches=cfg.sequence_budget(),
            stride=cfg.stride,
            max_answer_patches=cfg.max_answer_patches,
        )
        preds, golds = [], []
        for record, _, _ in task_data.examples:
            answer = H.qa_extract(record.question, record.context, backbone, head, rcfg, atlas, qa_cfg)
            preds.append(answer.text)
            golds.append(record.answer_text)
        report = MET.qa_metrics(preds, golds)
        report["primary"] = report["f1"]
        return report
    raise ConfigError(task)


TASK_FORMATS = {
    "pos_tagging": "conll_ner",
    "ner": "conll_ner",
    "parsing": "conllu",
    "classification": "pair_tsv",
    "qa": "squad_json",
}


def run_finetune(cfg: RunConfig, out_dir, init_checkpoint=None, train_records=None, eval_records=None) -> dict:
    """Finetune a head (plus backbone) on a task; early stopping on the
    eval metric with the configured patience; best parameters are kept."""
    if cfg.task == "pretrain":
        raise ConfigError("use run_pretrain for the pretraining task")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    atlas = resolve_atlas(cfg)
    fmt = TASK_FORMATS[cfg.task]
    if train_records is None:
        if cfg.train_data is None:
            raise ConfigError("finetuning needs train_data")
        train_records = ingest(cfg.train_data, fmt).records
    if eval_records is None and cfg.eval_data is not None:
        eval_records = ingest(cfg.eval_data, fmt).records

    if init_checkpoint is not None:
        backbone, _, _, _ = load_checkpoint(init_checkpoint)
        pix = backbone.cfg
    else:
        pix = cfg.pixel_config()
        backbone = ModelParameters.init(pix, np.random.default_rng(cfg.seed))
    train_data = build_task_data(cfg, train_records, atlas)
    eval_data = None
    if eval_records is not None:
        eval_data = build_task_data(cfg, eval_records, atlas, label_names=train_data.label_names)

    head = init_head(cfg, pix, max(train_data.n_labels, cfg.n_classes or 0), np.random.default_rng((cfg.seed, 2)))
    merged = dict(backbone.named)
    merged.update(head)
    state = OptimizerState.for_params(merged)
    ocfg = cfg.optimizer_config()
    batch_size = cfg.effective_batch_size()
    eval_every = cfg.eval_steps or max(1, ocfg.total_steps // 10)

    order_rng = np.random.default_rng((cfg.seed, 3))
    best = {"metric": -np.inf, "step": 0, "snapshot": None}
    evals_since_best = 0
    eval_rows = []
    stopped_at = ocfg.total_steps

    for step in range(ocfg.total_steps):
        idx = order_rng.integers(0, len(train_data.examples), size=batch_size)
        drop_rng = np.random.default_rng((cfg.seed, 4, step))
        for p in merged.values():
            p.zero_grad()
        node = _batch_loss(cfg, train_data, idx, backbone, head, drop_rng)
        if node is not None:
            node.backward()
        lr = lr_at(min(state.step + 1, ocfg.total_steps), ocfg)
        adamw_step(merged, state, ocfg, lr)

        if eval_data is not None and (step + 1) % eval_every == 0:
            report = evaluate_task(cfg, eval_data, backbone, head, atlas)
            eval_rows.append((step + 1, f"{report['primary']:.6f}"))
            if report["primary"] > best["metric"]:
                best = {
                    "metric": report["primary"],
                    "step": step + 1,
                    "snapshot": {k: v.data.copy() for k, v in merged.items()},
                }
                evals_since_best = 0
            else:
                evals_since_best += 1
                if cfg.early_stopping and evals_since_best >= cfg.early_stopping_patience:
                    stopped_at = step + 1
                    break

    if best["snapshot"] is not None:
        for name, arr in best["snapshot"].items():
            merged[name].data = arr

    final_params = ModelParameters(pix, merged)
    extra = {
        "task": cfg.task,
        "labels": train_data.label_names,
        "pooling": cfg.pooling,
        "stride": cfg.stride,
        "max_answer_patches": cfg.max_answer_patches,
        "max_sequence_length": cfg.sequence_budget(),
    }
    save_checkpoint(final_params, None, out / "checkpoint.pxck", step=state.step, extra=extra)
    cfg.write_resolved(out / "resolved.cfg")

    train_report = evaluate_task(cfg, train_data, backbone, head, atlas)
    result = {
        "train": train_report,
        "steps_run": stopped_at,
        "best_step": best["step"],
        "checkpoint": str(out / "checkpoint.pxck"),
    }
    if eval_data is not None:
        result["eval"] = evaluate_task(cfg, eval_data, backbone, head, atlas)
        with open(out / "eval_log.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "metric"])
            writer.writerows(eval_rows)
    with open(out / "metrics.json", "w") as fh:
        json.dump(result, fh, indent=2, default=float)
    return result


def split_finetuned_checkpoint(path):
    """Load a finetuned checkpoint into (backbone, head dict, extra)."""
    params, _, _, extra = load_checkpoint(path)
    from .checkpoint import _is_head_name

    head = {k: v for k, v in params.named.items() if _is_head_name(k)}
    backbone_named = {k: v for k, v in params.named.items() if not _is_head_name(k)}
    return ModelParameters(params.cfg, backbone_named), head, extra


def run_evaluate(cfg: RunConfig, checkpoint_path, out_dir=None) -> dict:
    backbone, head, extra = split_finetuned_checkpoint(checkpoint_path)
    if extra.get("task") != cfg.task:
        raise ConfigError(f"checkpoint was finetuned for {extra.get('task')!r}, config says {cfg.task!r}")
    atlas = resolve_atlas(cfg)
    if cfg.eval_data is None:
        raise ConfigError("evaluate needs eval_data")
    records = ingest(cfg.eval_data, TASK_FORMATS[cfg.task]).records
    data = build_task_data(cfg, records, atlas, label_names=list(extra.get("labels", [])))
    report = evaluate_task(cfg, data, backbone, head, atlas)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "metrics.json", "w") as fh:
            json.dump(report, fh, indent=2, default=float)
        cfg.write_resolved(out / "resolved.cfg")
    return report


# ---------------------------------------------------------------------------
# robustness sweeps


def attack_records(records, task: str, attacker: Attacker, seed, split_id: int, level_id: int) -> list:
    """Apply an attack to the text carried by task records, deterministically
    per record."""
    kind_id = zlib.crc32(attacker.cfg.kind.encode())
    out = []
    for ri, record in enumerate(records):
        rng = np.random.default_rng((seed, kind_id, split_id, level_id, ri))
        if isinstance(record, TaggedRecord):
            attacked = attacker(" ".join(record.words), rng).split(" ")
            if len(attacked) != len(record.words):
                raise ValueError("attack changed the token count of a tagged sentence")
            out.append(TaggedRecord(words=tuple(attacked), tags=record.tags))
        elif isinstance(record, ParseRecord):
            attacked = attacker(" ".join(record.words), rng).split(" ")
            if len(attacked) != len(record.words):
                raise ValueError("attack changed the token count of a parsed sentence")
            out.append(ParseRecord(words=tuple(attacked), heads=record.heads, relations=record.relations))
        elif isinstance(record, PairRecord):
            out.append(
                PairRecord(
                    text_a=attacker(record.text_a, rng),
                    text_b=attacker(record.text_b, rng),
                    label=record.label,
                )
            )
        elif isinstance(record, QaRecord):
            out.append(QaRecord(
                question=attacker(record.question, rng),
                context=record.context,  # answers are anchored to the context
                answer_start=record.answer_start,
                answer_text=record.answer_text,
            ))
        else:
            raise ValueError(f"cannot attack record type {type(record).__name__}")
    return out


def robustness_sweep(cfg: RunConfig, kinds, levels, out_dir, init_checkpoint=None) -> list:
    """Finetune + evaluate under each (kind, level); returns CSV-shaped rows.

    The attack is applied to both the finetuning and the evaluation data.
    Word-level tasks skip the segmentation attack (joined words would have
    no defensible tag alignment).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fmt = TASK_FORMATS[cfg.task]
    train_records = ingest(cfg.train_data, fmt).records
    eval_records = ingest(cfg.eval_data, fmt).records
    metric_name = {"pos_tagging": "accuracy", "ner": "f1", "parsing": "las",
                   "classification": "accuracy", "qa": "f1"}[cfg.task]
    rows = []
    for kind in kinds:
        if kind == "segmentation" and cfg.task in WORD_LEVEL_TASKS:
            continue
        for li, level in enumerate(levels):
            attacker = Attacker(AttackConfig(kind=kind, level=level, seed=cfg.seed))
            atk_train = attack_records(train_records, cfg.task, attacker, cfg.seed, 0, li)
            atk_eval = attack_records(eval_records, cfg.task, attacker, cfg.seed, 1, li)
            run_dir = out / f"{kind}_{li}"
            result = run_finetune(
                cfg,
                run_dir,
                init_checkpoint=init_checkpoint,
                train_records=atk_train,
                eval_records=atk_eval,
            )
            rows.append((kind, level, metric_name, result["eval"]["primary"]))
    with open(out / "sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "level", "metric", "value"])
        writer.writerows(rows)
    return rows


# ---------------------------------------------------------------------------
# renderer benchmark


def bench_render(corpus_path, out_dir=None, cfg: RunConfig | None = None) -> dict:
    """Throughput of the renderer vs a whitespace tokenizer on one corpus,
    plus patch-count and token-count histograms."""
    cfg = cfg or RunConfig()
    atlas = resolve_atlas(cfg)
    rcfg = renderer_config(cfg)
    texts = [r.text for r in ingest(corpus_path, "text_lines").records]
    if not texts:
        raise ConfigError(f"empty corpus {corpus_path}")

    started = time.perf_counter()
    patch_counts = [render_text(t, rcfg, atlas).num_text_patches for t in texts]
    render_seconds = time.perf_counter() - started

    started = time.perf_counter()
    token_counts = [len(t.split()) for t in texts]
    tokenize_seconds = time.perf_counter() - started

    def histogram(counts):
        hist = {}
        for c in counts:
            hist[c] = hist.get(c, 0) + 1
        return dict(sorted(hist.items()))

    report = {
        "lines": len(texts),
        "render_examples_per_second": len(texts) / max(render_seconds, 1e-9),
        "tokenize_examples_per_second": len(texts) / max(tokenize_seconds, 1e-9),
        "patch_count_histogram": histogram(patch_counts),
        "token_count_histogram": histogram(token_counts),
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name in ("patch_count_histogram", "token_count_histogram"):
            with open(out / f"{name}.csv", "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["bucket", "count"])
                writer.writerows(report[name].items())
        with open(out / "throughput.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["processor", "examples_per_second"])
            writer.writerow(["renderer", f"{report['render_examples_per_second']:.2f}"])
            writer.writerow(["whitespace_tokenizer", f"{report['tokenize_examples_per_second']:.2f}"])
    return report
