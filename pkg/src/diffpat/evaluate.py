"""Scoring discovered pattern sets.

Soft precision/recall/F1 relax pattern equality to best-match Jaccard
similarity against the planted ground truth. Without ground truth, pattern
sets are judged by how much of each class partition they cover as the
class-conditional probability threshold sweeps from 0 to 1 (specificity vs
coverage, summarized by the area under that curve) and by average
log-odds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .data import (BinaryDataset, LabeledDataset, Pattern, support,
                   support_in_class, prob_class_given_pattern)
from .extract import DifferentialPatterns
from .synth import GroundTruth


def jaccard(a: frozenset, b: frozenset) -> float:
    union = len(a | b)
    return len(a & b) / union if union else 0.0


@dataclass
class EvalReport:
    pattern_count: int
    mean_pattern_length: float | None
    auc: float
    curve: list[tuple[float, float]]
    soft_precision: float | None = None
    soft_recall: float | None = None
    soft_f1: float | None = None
    per_class_f1: dict[int, float] = field(default_factory=dict)
    mean_log_odds: dict[int, float] = field(default_factory=dict)
    empty_discovery: bool = False

    def to_json(self) -> str:
        obj = {
            "pattern_count": self.pattern_count,
            "mean_pattern_length": self.mean_pattern_length,
            "auc": self.auc,
            "curve": [[t, y] for t, y in self.curve],
            "mean_log_odds": {str(k): v for k, v in self.mean_log_odds.items()},
            "empty_discovery": self.empty_discovery,
        }
        if self.soft_f1 is not None or self.soft_precision is not None:
            obj.update({
                "soft_precision": self.soft_precision,
                "soft_recall": self.soft_recall,
                "soft_f1": self.soft_f1,
                "per_class_f1": {str(k): v for k, v in self.per_class_f1.items()},
            })
        return json.dumps(obj, indent=2)

    def write_curve_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("threshold,coverage\n")
            for t, y in self.curve:
                fh.write(f"{t!r},{y!r}\n")


def soft_f1(P_d: list[Pattern], P_g: list[Pattern]) -> tuple[float, float, float]:
    """Best-match Jaccard precision and recall with their harmonic mean.

    An empty discovery scores (0, 0, 0); an empty ground truth is a usage
    error.
    """
    if not P_g:
        raise ValueError("ground truth pattern set must be nonempty")
    if not P_d:
        return 0.0, 0.0, 0.0
    d_sets = [p.as_set() for p in P_d]
    g_sets = [p.as_set() for p in P_g]
    prec = sum(max(jaccard(d, g) for g in g_sets) for d in d_sets) / len(d_sets)
    rec = sum(max(jaccard(d, g) for d in d_sets) for g in g_sets) / len(g_sets)
    f1 = 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
    return prec, rec, f1


def multiclass_soft_f1(found: DifferentialPatterns, truth: GroundTruth):
    """Unweighted mean of the per-class scores.

    Classes with no discovered patterns score 0 by the empty-discovery
    rule. Returns (precision, recall, f1, per-class f1 dict).
    """
    K = len(truth.class_patterns)
    per_class: dict[int, float] = {}
    precs, recs = [], []
    for k in range(K):
        p, r, f = soft_f1(found.class_patterns(k), truth.class_patterns[k])
        per_class[k] = f
        precs.append(p)
        recs.append(r)
    prec = sum(precs) / K
    rec = sum(recs) / K
    f1 = sum(per_class.values()) / K
    return prec, rec, f1, per_class


def filter_spurious(P: DifferentialPatterns, D: LabeledDataset) -> DifferentialPatterns:
    """Keep (k, p) iff p occurs and P(k|p) >= 1/K + 0.1 (boundary inclusive)."""
    thresh = 1.0 / D.K + 0.1
    kept: dict[int, list[tuple[int, Pattern]]] = {}
    for k, entries in P.per_class.items():
        keep = []
        for i, p in entries:
            if support(p, D.data) == 0:
                continue
            if prob_class_given_pattern(p, D, k) >= thresh:
                keep.append((i, p))
        kept[k] = keep
    return DifferentialPatterns(kept, P.tau_e, P.tau_c, list(P.orphans))


def coverage(P_set: list[Pattern], X: BinaryDataset) -> set[int]:
    """Row ids containing at least one of the patterns."""
    covered: set[int] = set()
    for p in P_set:
        ps = p.as_set()
        covered.update(i for i in range(X.n) if ps <= X.row_set(i))
    return covered


def auc_specificity_coverage(P: DifferentialPatterns, D: LabeledDataset):
    """Mean per-class coverage as a function of the P(k|p) threshold.

    Thresholds sweep the distinct achieved P(k|p) values plus the
    endpoints 0 and 1; a pattern counts at threshold t iff its P(k|p) is
    strictly above t. The curve is a right-continuous step function that
    only drops at the achieved values, so the point listed at t holds on
    [t, next t) and the area is the exact integral of those steps over
    [0, 1]. Expects an already spurious-filtered input.
    """
    entries = []  # (class, P(k|p), rows covered inside the class partition)
    for k, pats in P.per_class.items():
        class_rows = D.class_rows[k]
        for _, p in pats:
            s = support(p, D.data)
            if s == 0:
                continue
            pkp = support_in_class(p, D, k) / s
            ps = p.as_set()
            rows = frozenset(int(i) for i in class_rows if ps <= D.data.row_set(int(i)))
            entries.append((k, pkp, rows))
    if not entries:
        return 0.0, [(0.0, 0.0), (1.0, 0.0)]

    thresholds = sorted({0.0, 1.0} | {pkp for _, pkp, _ in entries})
    curve = []
    for t in thresholds:
        total = 0.0
        for k in range(D.K):
            covered: set = set()
            for kk, pkp, rows in entries:
                if kk == k and pkp > t:
                    covered |= rows
            total += len(covered) / len(D.class_rows[k])
        curve.append((t, total / D.K))
    auc = float(sum(curve[i][1] * (curve[i + 1][0] - curve[i][0])
                    for i in range(len(curve) - 1)))
    return auc, curve


def mean_log_odds(patterns: list[Pattern], D: LabeledDataset, k: int) -> float | None:
    """Average ln(P(p|k) / P(p|not k)), skipping terms with an empty denominator.

    A lower bound on the true average; None when every term is skipped.
    """
    n_k = int(D.class_counts[k])
    n_rest = D.n - n_k
    if n_rest == 0:
        return None
    terms = []
    for p in patterns:
        supp_k = support_in_class(p, D, k)
        supp_rest = support(p, D.data) - supp_k
        if supp_rest == 0:
            continue
        p_in = supp_k / n_k
        p_out = supp_rest / n_rest
        if p_in == 0:
            continue  # ln 0 would be -inf; skip like the empty denominator
        terms.append(math.log(p_in / p_out))
    if not terms:
        return None
    return sum(terms) / len(terms)


def summarize(P: DifferentialPatterns, D: LabeledDataset,
              truth: GroundTruth | None = None) -> EvalReport:
    """Filter spurious patterns and compute every applicable metric."""
    kept = filter_spurious(P, D)
    all_patterns = [p for v in kept.per_class.values() for _, p in v]
    count = len(all_patterns)
    mean_len = (sum(len(p) for p in all_patterns) / count) if count else None
    auc, curve = auc_specificity_coverage(kept, D)
    log_odds = {}
    for k in range(D.K):
        lo = mean_log_odds(kept.class_patterns(k), D, k)
        if lo is not None:
            log_odds[k] = lo
    report = EvalReport(pattern_count=count, mean_pattern_length=mean_len,
                        auc=auc, curve=curve, mean_log_odds=log_odds,
                        empty_discovery=count == 0)
    if truth is not None:
        prec, rec, f1, per_class = multiclass_soft_f1(kept, truth)
        report.soft_precision = prec
        report.soft_recall = rec
        report.soft_f1 = f1
        report.per_class_f1 = per_class
    return report
