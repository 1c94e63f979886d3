"""Evaluation: label mapping, macro classification scores, and corpus BLEU.

Generated text is mapped onto a closed label set by exact match after
normalization; anything else scores as wrong everywhere, which reproduces
the all-zero failure mode of format-broken generators. BLEU is corpus-level
with modified n-gram precision, geometric mean over orders, a brevity
penalty, and no smoothing (a zero count zeroes the score).
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .errors import EmptyCorpus, IoFailure, LengthMismatch
from .textproc import normalize_for_matching, tokenize

UNMATCHED = "<unmatched>"


@dataclass(frozen=True)
class ClassScores:
    label: str
    precision: float
    recall: float
    f1: float
    support: int
    predicted: int


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    per_class: tuple[ClassScores, ...]
    unmatched_count: int
    bleu: dict[int, float] = field(default_factory=dict)


def map_text_to_label(text: str, label_set: list[str]) -> str:
    """Exact match after normalization, else the UNMATCHED sentinel."""
    if not label_set:
        raise ValueError("label_set must be non-empty")
    needle = normalize_for_matching(text)
    for label in label_set:
        if normalize_for_matching(label) == needle:
            return label
    return UNMATCHED


def classification_report(
    preds: list[str], golds: list[str], label_set: list[str]
) -> EvalReport:
    """Macro P/R/F1 over the full label set plus exact-match accuracy.

    A class with no predictions or no gold instances contributes 0 to the
    macro means. Unmatched predictions count as wrong for every metric.
    """
    if len(preds) != len(golds):
        raise LengthMismatch(f"{len(preds)} predictions vs {len(golds)} golds")
    if not golds:
        raise LengthMismatch("need at least one prediction/gold pair")
    labels = list(label_set)
    known = set(labels)
    for g in golds:
        if g not in known:
            raise ValueError(f"gold label {g!r} not in label_set")

    tp: Counter[str] = Counter()
    pred_count: Counter[str] = Counter()
    gold_count: Counter[str] = Counter()
    correct = 0
    unmatched = 0
    for p, g in zip(preds, golds):
        gold_count[g] += 1
        if p in known:
            pred_count[p] += 1
        else:
            unmatched += 1
        if p == g:
            tp[p] += 1
            correct += 1

    rows = []
    for label in labels:
        p_den = pred_count[label]
        g_den = gold_count[label]
        precision = tp[label] / p_den if p_den else 0.0
        recall = tp[label] / g_den if g_den else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        rows.append(
            ClassScores(
                label=label,
                precision=precision,
                recall=recall,
                f1=f1,
                support=g_den,
                predicted=p_den,
            )
        )
    n_cls = len(rows)
    return EvalReport(
        accuracy=correct / len(golds),
        macro_precision=sum(r.precision for r in rows) / n_cls,
        macro_recall=sum(r.recall for r in rows) / n_cls,
        macro_f1=sum(r.f1 for r in rows) / n_cls,
        per_class=tuple(rows),
        unmatched_count=unmatched,
    )


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(hypotheses: list[str], references: list[str], max_n: int = 4) -> dict[int, float]:
    """Corpus BLEU with one reference per hypothesis, orders 1..max_n."""
    if len(hypotheses) != len(references):
        raise LengthMismatch(f"{len(hypotheses)} hypotheses vs {len(references)} references")
    if not hypotheses:
        raise EmptyCorpus("BLEU over an empty corpus is undefined")
    if not 1 <= max_n <= 4:
        raise ValueError(f"max_n must be in 1..4, got {max_n}")

    hyp_tokens = [tokenize(h) for h in hypotheses]
    ref_tokens = [tokenize(r) for r in references]
    hyp_len = sum(len(t) for t in hyp_tokens)
    ref_len = sum(len(t) for t in ref_tokens)

    matched = [0] * (max_n + 1)
    total = [0] * (max_n + 1)
    for hyp, ref in zip(hyp_tokens, ref_tokens):
        for n in range(1, max_n + 1):
            hyp_counts = _ngrams(hyp, n)
            ref_counts = _ngrams(ref, n)
            total[n] += sum(hyp_counts.values())
            matched[n] += sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())

    if hyp_len == 0:
        return {n: 0.0 for n in range(1, max_n + 1)}
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    scores: dict[int, float] = {}
    for n in range(1, max_n + 1):
        precisions = []
        for k in range(1, n + 1):
            precisions.append(matched[k] / total[k] if total[k] else 0.0)
        if any(p == 0.0 for p in precisions):
            scores[n] = 0.0
        else:
            scores[n] = bp * math.exp(sum(math.log(p) for p in precisions) / n)
    return scores


def write_report(report: EvalReport, path) -> None:
    """Human-readable text summary plus a flat CSV next to it."""
    path = Path(path)
    lines = [
        f"accuracy {report.accuracy:.6f}",
        f"macro_precision {report.macro_precision:.6f}",
        f"macro_recall {report.macro_recall:.6f}",
        f"macro_f1 {report.macro_f1:.6f}",
        f"unmatched {report.unmatched_count}",
    ]
    for n in sorted(report.bleu):
        lines.append(f"bleu@{n} {report.bleu[n]:.6f}")
    lines.append("")
    for row in report.per_class:
        lines.append(
            f"class {row.label!r}: precision {row.precision:.6f} recall {row.recall:.6f} "
            f"f1 {row.f1:.6f} support {row.support} predicted {row.predicted}"
        )
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("".join(f"{l}\n" for l in lines), encoding="utf-8")
        csv_path = path.with_suffix(".csv")
        with csv_path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["metric", "value"])
            writer.writerow(["accuracy", repr(report.accuracy)])
            writer.writerow(["macro_precision", repr(report.macro_precision)])
            writer.writerow(["macro_recall", repr(report.macro_recall)])
            writer.writerow(["macro_f1", repr(report.macro_f1)])
            writer.writerow(["unmatched_count", report.unmatched_count])
            for n in sorted(report.bleu):
                writer.writerow([f"bleu@{n}", repr(report.bleu[n])])
            for row in report.per_class:
                writer.writerow([f"precision[{row.label}]", repr(row.precision)])
                writer.writerow([f"recall[{row.label}]", repr(row.recall)])
                writer.writerow([f"f1[{row.label}]", repr(row.f1)])
                writer.writerow([f"support[{row.label}]", row.support])
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e
