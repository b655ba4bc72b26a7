"""Group-wise test statistics and guarantee-bound reports.

All rates condition on classified (non-rejected) points; zero denominators
produce None ("undefined") rather than faults, mirroring how an all-rejected
group has no measurable accuracy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import Decision, GuaranteeBounds, dumps_17g
from .errors import LengthMismatch


@dataclass(frozen=True)
class GroupCounts:
    size: int
    classified: int
    rejected: int
    positives: int  # predicted-1 among classified
    correct: int  # correct among classified


@dataclass(frozen=True)
class GroupMetrics:
    """Per-group rates with their raw counts, plus overall accuracy."""

    acc: tuple  # accuracy among classified, None when no point classified
    clf: tuple  # classified fraction of the group
    pos: tuple  # predicted-positive rate among classified
    counts: tuple  # GroupCounts per group
    overall_acc: Optional[float]  # accuracy among all classified points

    @property
    def K(self) -> int:
        return len(self.clf)

    def pos_overall(self) -> Optional[float]:
        classified = sum(c.classified for c in self.counts)
        if classified == 0:
            return None
        return sum(c.positives for c in self.counts) / classified


def evaluate(
    decisions: Sequence[Decision],
    test: Sequence[tuple],
    K: Optional[int] = None,
) -> GroupMetrics:
    """Count-based statistics of decisions against (group, label) pairs."""
    if len(decisions) != len(test):
        raise LengthMismatch(
            f"{len(decisions)} decisions for {len(test)} test points"
        )
    groups = np.asarray([g for g, _ in test], dtype=np.int64)
    labels = np.asarray([y for _, y in test], dtype=np.int64)
    dec = np.asarray([int(d) for d in decisions], dtype=np.int64)
    if K is None:
        K = int(groups.max()) + 1 if len(groups) else 0

    classified = dec != int(Decision.REJECT)
    correct = classified & (dec == labels)
    acc, clf, pos, counts = [], [], [], []
    for s in range(K):
        in_s = groups == s
        n_s = int(np.sum(in_s))
        n_cls = int(np.sum(in_s & classified))
        n_pos = int(np.sum(in_s & classified & (dec == 1)))
        n_cor = int(np.sum(in_s & correct))
        counts.append(
            GroupCounts(
                size=n_s,
                classified=n_cls,
                rejected=n_s - n_cls,
                positives=n_pos,
                correct=n_cor,
            )
        )
        clf.append(n_cls / n_s if n_s else None)
        acc.append(n_cor / n_cls if n_cls else None)
        pos.append(n_pos / n_cls if n_cls else None)
    total_cls = int(np.sum(classified))
    overall = float(np.sum(correct)) / total_cls if total_cls else None
    return GroupMetrics(
        acc=tuple(acc), clf=tuple(clf), pos=tuple(pos), counts=tuple(counts), overall_acc=overall
    )


@dataclass(frozen=True)
class GuaranteeReport:
    """PASS/FAIL comparison of observed deviations against the bounds."""

    clf_dev: tuple  # |clf_s - alpha_s| per group
    clf_bound: tuple
    clf_pass: tuple
    dp_dev: float  # max_s |pos_s - pos_overall|
    dp_bound: float  # min_s per-group bound (each |pos_s - pos| <= bound_s must hold)
    dp_pass: bool
    dp_dev_s: tuple
    dp_bound_s: tuple
    dp_pass_s: tuple

    @property
    def all_pass(self) -> bool:
        return all(self.clf_pass) and self.dp_pass


def guarantee_report(
    metrics: GroupMetrics, bounds: GuaranteeBounds, alpha: Sequence[float]
) -> GuaranteeReport:
    """Compare |clf_s - alpha_s| and |pos_s - pos| to their bounds.

    An undefined rate (all of a group rejected) counts as a failure for the
    checks that need it.
    """
    K = metrics.K
    clf_dev, clf_pass = [], []
    for s in range(K):
        if metrics.clf[s] is None:
            clf_dev.append(math.nan)
            clf_pass.append(False)
            continue
        dev = abs(metrics.clf[s] - alpha[s])
        clf_dev.append(dev)
        clf_pass.append(dev <= bounds.reject_bound[s])
    pos_all = metrics.pos_overall()
    dp_dev_s, dp_pass_s = [], []
    for s in range(K):
        if metrics.pos[s] is None or pos_all is None:
            dp_dev_s.append(math.nan)
            dp_pass_s.append(False)
            continue
        dev = abs(metrics.pos[s] - pos_all)
        dp_dev_s.append(dev)
        dp_pass_s.append(dev <= bounds.dp_bound[s])
    finite = [d for d in dp_dev_s if not math.isnan(d)]
    return GuaranteeReport(
        clf_dev=tuple(clf_dev),
        clf_bound=tuple(bounds.reject_bound),
        clf_pass=tuple(clf_pass),
        dp_dev=max(finite) if finite and len(finite) == K else math.nan,
        dp_bound=min(bounds.dp_bound),
        dp_pass=all(dp_pass_s),
        dp_dev_s=tuple(dp_dev_s),
        dp_bound_s=tuple(bounds.dp_bound),
        dp_pass_s=tuple(dp_pass_s),
    )


def metrics_to_json(
    metrics: GroupMetrics,
    bounds: Optional[GuaranteeBounds] = None,
    report: Optional[GuaranteeReport] = None,
) -> str:
    """Canonical metrics JSON: {per_group, overall, bounds, pass}."""
    per_group = []
    for s in range(metrics.K):
        c = metrics.counts[s]
        per_group.append(
            {
                "s": s,
                "acc": metrics.acc[s],
                "clf": metrics.clf[s],
                "pos": metrics.pos[s],
                "counts": {
                    "size": c.size,
                    "classified": c.classified,
                    "rejected": c.rejected,
                    "positives": c.positives,
                    "correct": c.correct,
                },
            }
        )
    payload = {
        "per_group": per_group,
        "overall": metrics.overall_acc,
        "bounds": None
        if bounds is None
        else {
            "u": list(bounds.u),
            "reject_bound": list(bounds.reject_bound),
            "dp_bound": list(bounds.dp_bound),
            "risk_slack": bounds.risk_slack,
        },
        "pass": None if report is None else report.all_pass,
    }
    return dumps_17g(payload) + "\n"


def sweep_header(K: int) -> list[str]:
    cols = ["alpha"]
    for s in range(K):
        cols += [f"acc_{s + 1}", f"clf_{s + 1}", f"pos_{s + 1}"]
    return cols


def sweep_row(alpha: float, metrics: GroupMetrics) -> list[str]:
    def fmt(v) -> str:
        return "" if v is None else format(v, ".17g")

    cells = [format(alpha, ".17g")]
    for s in range(metrics.K):
        cells += [fmt(metrics.acc[s]), fmt(metrics.clf[s]), fmt(metrics.pos[s])]
    return cells
