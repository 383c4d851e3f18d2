"""Evaluation metrics: tagging accuracy, corpus UAS/LAS with dependency-length
buckets, BIO entity span F1, and token-overlap QA scores."""

from __future__ import annotations

from collections import Counter

from .heads import DISTANCE_BUCKETS


def tagging_accuracy(predictions, gold) -> float:
    """Word-level accuracy over a corpus of per-sentence tag lists."""
    correct = total = 0
    for pred_sent, gold_sent in zip(predictions, gold, strict=True):
        if len(pred_sent) != len(gold_sent):
            raise ValueError("sentence length mismatch")
        correct += sum(p == g for p, g in zip(pred_sent, gold_sent))
        total += len(gold_sent)
    return correct / total if total else 0.0


def corpus_attachment(pred_trees, gold_trees) -> dict:
    """Micro-averaged UAS/LAS plus LAS per dependency-length bucket."""
    head_ok = both_ok = total = 0
    by_dist = {b: [0, 0] for b in DISTANCE_BUCKETS}
    for pred, gold in zip(pred_trees, gold_trees, strict=True):
        if len(pred.heads) != len(gold.heads):
            raise ValueError("tree sizes differ")
        for i in range(len(gold.heads)):
            dist = abs(gold.heads[i] - (i + 1))
            bucket = str(dist) if dist <= 6 else "7+"
            h = pred.heads[i] == gold.heads[i]
            b = h and pred.labels[i] == gold.labels[i]
            head_ok += h
            both_ok += b
            total += 1
            by_dist[bucket][1] += 1
            by_dist[bucket][0] += b
    return {
        "uas": head_ok / total if total else 0.0,
        "las": both_ok / total if total else 0.0,
        "las_by_distance": {b: (c / t if t else None) for b, (c, t) in by_dist.items()},
        "count": total,
    }


def bio_entity_spans(tags) -> set:
    """(type, start, end) spans from a BIO tag sequence, end exclusive.

    A stray I- tag opens a new span (conventional lenient reading)."""
    spans = set()
    current = None  # (type, start)
    for i, tag in enumerate(tags):
        if tag == "O" or tag is None:
            if current:
                spans.add((current[0], current[1], i))
                current = None
            continue
        prefix, _, etype = tag.partition("-")
        if prefix == "B" or current is None or current[0] != etype:
            if current:
                spans.add((current[0], current[1], i))
            current = (etype, i)
    if current:
        spans.add((current[0], current[1], len(tags)))
    return spans


def span_f1(pred_tag_seqs, gold_tag_seqs) -> dict:
    """Micro entity F1 with exact boundary and type matching."""
    tp = fp = fn = 0
    for pred, gold in zip(pred_tag_seqs, gold_tag_seqs, strict=True):
        p_spans = bio_entity_spans(pred)
        g_spans = bio_entity_spans(gold)
        tp += len(p_spans & g_spans)
        fp += len(p_spans - g_spans)
        fn += len(g_spans - p_spans)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"precision": precision, "recall": recall, "f1": f1}


def qa_token_f1(prediction: str, gold: str) -> float:
    pred_tokens = prediction.split()
    gold_tokens = gold.split()
    if not pred_tokens or not gold_tokens:
        return float(pred_tokens == gold_tokens)
    overlap = sum((Counter(pred_tokens) & Counter(gold_tokens)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_tokens)
    recall = overlap / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def qa_exact_match(prediction: str, gold: str) -> float:
    return float(prediction.strip() == gold.strip())


def qa_metrics(predictions, golds) -> dict:
    ems = [qa_exact_match(p, g) for p, g in zip(predictions, golds, strict=True)]
    f1s = [qa_token_f1(p, g) for p, g in zip(predictions, golds, strict=True)]
    n = len(ems)
    return {
        "exact_match": sum(ems) / n if n else 0.0,
        "f1": sum(f1s) / n if n else 0.0,
        "count": n,
    }
