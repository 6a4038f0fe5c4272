"""Ranking metrics for relation prediction.

Per image, predictions are sorted by descending score (ties broken by lower
predicate index, then subject and object class) and the top K are matched
against the image's ground-truth triples, each prediction consuming at most
one ground truth. Recall@K is micro-averaged over the whole test set (total
hits / total ground truths); mean recall averages the per-predicate
recalls; Mean@K is the arithmetic mean of the two.
"""

from collections import Counter
from dataclasses import dataclass

import numpy as np

DEFAULT_KS = (20, 50, 100)


@dataclass(frozen=True)
class RankedPrediction:
    image_id: int
    subject_class: int
    object_class: int
    predicate: int
    score: float


@dataclass(frozen=True)
class GroundTruth:
    image_id: int
    subject_class: int
    object_class: int
    predicate: int


def _rank_key(pred):
    return (-pred.score, pred.predicate, pred.subject_class, pred.object_class)


def _by_image(items):
    grouped = {}
    for item in items:
        grouped.setdefault(item.image_id, []).append(item)
    return grouped


def _hits_per_class(preds, gts, k, num_classes):
    """Matched ground truths per predicate class among each image's top K."""
    preds_by_image = _by_image(preds)
    hits = np.zeros(num_classes + 1, dtype=np.int64)
    for image_id, image_gts in _by_image(gts).items():
        ranked = sorted(preds_by_image.get(image_id, []), key=_rank_key)[:k]
        top_triples = Counter(
            (p.subject_class, p.object_class, p.predicate) for p in ranked
        )
        gt_triples = Counter(
            (g.subject_class, g.object_class, g.predicate) for g in image_gts
        )
        for triple, gt_count in gt_triples.items():
            hits[triple[2]] += min(top_triples.get(triple, 0), gt_count)
    return hits


def _gts_per_class(gts, num_classes):
    counts = np.zeros(num_classes + 1, dtype=np.int64)
    for gt in gts:
        counts[gt.predicate] += 1
    return counts


def recall_at_k(preds, gts, k):
    """Micro recall: matched ground truths over all ground truths."""
    if k <= 0:
        raise ValueError("K must be positive")
    if not gts:
        raise ValueError("recall needs at least one ground truth")
    num_classes = max(g.predicate for g in gts)
    hits = _hits_per_class(preds, gts, k, num_classes)
    return float(hits.sum()) / len(gts)


def mean_recall_at_k(preds, gts, k, num_predicates):
    """Unweighted mean of per-predicate recalls.

    Returns (mean, per-predicate vector of length num_predicates + 1);
    classes without ground truths hold NaN and are excluded from the mean.
    """
    if k <= 0:
        raise ValueError("K must be positive")
    if not gts:
        raise ValueError("mean recall needs at least one ground truth")
    hits = _hits_per_class(preds, gts, k, num_predicates)
    totals = _gts_per_class(gts, num_predicates)
    per_class = np.full(num_predicates + 1, np.nan)
    present = totals > 0
    per_class[present] = hits[present] / totals[present]
    evaluated = present.copy()
    evaluated[0] = False
    if not evaluated.any():
        raise ValueError("no non-background predicate has ground truths")
    return float(per_class[evaluated].mean()), per_class


def mean_at_k(r, mr):
    """Comprehensive score: the arithmetic mean of recall and mean recall."""
    if not (0.0 <= r <= 1.0 and 0.0 <= mr <= 1.0):
        raise ValueError("recalls must lie in [0, 1]")
    return (r + mr) / 2.0


def group_mean_recall(per_predicate_recalls, groups):
    """Mean per-class recall within each frequency group.

    groups is an iterable of predicate-index collections (many, medium,
    few). A group whose classes were all absent from the ground truths is
    reported as None, not zero.
    """
    results = []
    for group in groups:
        values = [
            per_predicate_recalls[i]
            for i in group
            if not np.isnan(per_predicate_recalls[i])
        ]
        results.append(float(np.mean(values)) if values else None)
    return tuple(results)


@dataclass
class EvalReport:
    """Per-K metrics plus per-predicate and frequency-group recalls."""

    ks: tuple
    r_at_k: dict
    mr_at_k: dict
    m_at_k: dict
    per_predicate: dict
    group_recalls: dict


def compute_report(preds, gts, num_predicates, groups, ks=DEFAULT_KS):
    report = EvalReport(tuple(ks), {}, {}, {}, {}, {})
    for k in ks:
        r = recall_at_k(preds, gts, k)
        mr, per_class = mean_recall_at_k(preds, gts, k, num_predicates)
        report.r_at_k[k] = r
        report.mr_at_k[k] = mr
        report.m_at_k[k] = mean_at_k(r, mr)
        report.per_predicate[k] = per_class
        report.group_recalls[k] = group_mean_recall(per_class, groups)
    return report


def format_report(report, vocab):
    """Text tables: (metric, K, value) rows, then per-predicate recalls
    sorted by descending training frequency."""
    lines = ["metric\tK\tvalue"]
    group_names = ("many", "medium", "few")
    for k in report.ks:
        lines.append(f"r_at_k\t{k}\t{report.r_at_k[k]:.6f}")
        lines.append(f"mr_at_k\t{k}\t{report.mr_at_k[k]:.6f}")
        lines.append(f"m_at_k\t{k}\t{report.m_at_k[k]:.6f}")
        for name, value in zip(group_names, report.group_recalls[k]):
            shown = "absent" if value is None else f"{value:.6f}"
            lines.append(f"{name}_recall\t{k}\t{shown}")
    lines.append("")
    header = "predicate\ttrain_count" + "".join(f"\trecall@{k}" for k in report.ks)
    lines.append(header)
    order = sorted(
        range(1, vocab.num_predicates + 1),
        key=lambda i: (-int(vocab.train_counts[i]), i),
    )
    for i in order:
        row = f"{vocab.names[i]}\t{int(vocab.train_counts[i])}"
        for k in report.ks:
            value = report.per_predicate[k][i]
            row += "\tabsent" if np.isnan(value) else f"\t{value:.6f}"
        lines.append(row)
    return "\n".join(lines) + "\n"
