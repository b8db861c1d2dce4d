"""Landmark and face-parsing evaluation metrics.

Landmark error is the mean point-to-point distance normalized by the
outer-eye-corner distance of the ground truth.  Parsing quality is pixel
F1 per class, computed from a full confusion matrix so that merged
super-classes can be recounted exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGroundTruthError, InvalidParameterError
from .semantic import HELEN_MERGE, NUM_CLASSES, SemanticClass

OUTER_EYE_CORNERS = (36, 45)
FAILURE_THRESHOLD = 0.10
# classes averaged into the mean F1: every non-background id up to hair
FOREGROUND = tuple(range(1, int(SemanticClass.HAIR) + 1))


def interocular_distance(gt, corners=OUTER_EYE_CORNERS):
    gt = np.asarray(gt, dtype=np.float64)
    if gt.ndim != 2 or gt.shape[1] < 2 or gt.shape[0] <= max(corners):
        raise InvalidParameterError(f"ground truth must be (L>={max(corners) + 1}, 2) points, got {gt.shape}")
    d = float(np.linalg.norm(gt[corners[0], :2] - gt[corners[1], :2]))
    if not d > 0:
        raise DegenerateGroundTruthError("outer eye corners coincide; inter-ocular distance is zero")
    return d


def nme(pred, gt, corners=OUTER_EYE_CORNERS):
    """Mean point error divided by the inter-ocular distance (a fraction, not percent)."""
    pred = np.asarray(pred, dtype=np.float64)[:, :2]
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape[0] != gt.shape[0]:
        raise InvalidParameterError(f"point count mismatch: {pred.shape[0]} predicted vs {gt.shape[0]} ground truth")
    if not np.all(np.isfinite(pred)):
        raise InvalidParameterError("predicted landmarks must be finite")
    iod = interocular_distance(gt, corners)
    return float(np.linalg.norm(pred - gt[:, :2], axis=1).mean() / iod)


def failure_rate(per_image_nme, threshold=FAILURE_THRESHOLD):
    """Fraction of images whose NME exceeds ``threshold``."""
    values = np.asarray(per_image_nme, dtype=np.float64)
    if values.size == 0:
        raise InvalidParameterError("failure rate of an empty set is undefined")
    return float(np.count_nonzero(values > threshold) / values.size)


@dataclass(frozen=True, eq=False)
class ConfusionCounts:
    """Pixel confusion matrix, rows are ground truth and columns predictions."""

    matrix: np.ndarray  # (C, C) int64

    @property
    def num_classes(self):
        return self.matrix.shape[0]

    @property
    def tp(self):
        return np.diag(self.matrix).copy()

    @property
    def fp(self):
        return self.matrix.sum(axis=0) - np.diag(self.matrix)

    @property
    def fn(self):
        return self.matrix.sum(axis=1) - np.diag(self.matrix)

    def __add__(self, other):
        return ConfusionCounts(self.matrix + other.matrix)

    def merged(self, groups):
        """Counts over super-classes; ``groups`` maps name -> member class ids.

        Returns ``(names, counts)``; every class not in a group goes to a
        trailing "rest" bucket so totals are preserved.
        """
        names = list(groups)
        lookup = np.full(self.num_classes, len(names), dtype=np.int64)
        for g, members in enumerate(groups.values()):
            for c in members:
                lookup[int(c)] = g
        k = len(names) + 1
        out = np.zeros((k, k), dtype=np.int64)
        np.add.at(out, (lookup[:, None], lookup[None, :]), self.matrix)
        return names, ConfusionCounts(out)


def confusion_counts(pred_mask, gt_mask, num_classes=NUM_CLASSES):
    pred = np.asarray(pred_mask)
    gt = np.asarray(gt_mask)
    if pred.shape != gt.shape:
        raise InvalidParameterError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    pred = pred.astype(np.int64).ravel()
    gt = gt.astype(np.int64).ravel()
    if pred.size and (min(pred.min(), gt.min()) < 0 or max(pred.max(), gt.max()) >= num_classes):
        raise InvalidParameterError(f"mask values must lie in [0, {num_classes})")
    flat = np.bincount(gt * num_classes + pred, minlength=num_classes * num_classes)
    return ConfusionCounts(flat.reshape(num_classes, num_classes))


def _f1(tp, fp, fn):
    denom = 2 * tp + fp + fn
    absent = denom == 0
    with np.errstate(invalid="ignore", divide="ignore"):
        f1 = np.where(absent, 1.0, 2.0 * tp / np.where(absent, 1, denom))
    return f1, absent


@dataclass
class F1Summary:
    per_class: np.ndarray
    absent: np.ndarray
    merged: dict = field(default_factory=dict)
    merged_absent: dict = field(default_factory=dict)
    overall: float = float("nan")  # F1 of the union of facial-part super-classes
    mean: float = float("nan")  # mean over foreground classes


# Super-classes pooled into the single "overall" score.
OVERALL_GROUPS = ("brows", "eyes", "nose", "mouth")


def f1_scores(counts, merge_spec=None, foreground=FOREGROUND, overall_groups=OVERALL_GROUPS):
    """Per-class, merged and summary F1 from confusion counts.

    A class absent from both prediction and ground truth scores 1.0 and is
    flagged in ``absent``.
    """
    merge_spec = HELEN_MERGE if merge_spec is None else merge_spec
    per_class, absent = _f1(counts.tp, counts.fp, counts.fn)
    summary = F1Summary(per_class=per_class, absent=absent)
    names, merged = counts.merged(merge_spec)
    m_f1, m_absent = _f1(merged.tp, merged.fp, merged.fn)
    summary.merged = {n: float(m_f1[i]) for i, n in enumerate(names)}
    summary.merged_absent = {n: bool(m_absent[i]) for i, n in enumerate(names)}
    pooled = [c for g in overall_groups for c in merge_spec[g]]
    _, overall = counts.merged({"overall": pooled})
    o_f1, _ = _f1(overall.tp[:1], overall.fp[:1], overall.fn[:1])
    summary.overall = float(o_f1[0])
    fg = [int(c) for c in foreground]
    summary.mean = float(per_class[fg].mean())
    return summary


@dataclass
class MetricsReport:
    """Collected results for one evaluation run."""

    per_image_nme: dict = field(default_factory=dict)
    threshold: float = FAILURE_THRESHOLD
    f1: F1Summary | None = None
    note: str = "NME normalized by outer-eye-corner distance (points 36 and 45)"

    @property
    def mean_nme(self):
        # stable order: sorted by image id
        if not self.per_image_nme:
            return float("nan")
        return float(np.mean([self.per_image_nme[k] for k in sorted(self.per_image_nme)]))

    @property
    def failure_rate(self):
        return failure_rate([self.per_image_nme[k] for k in sorted(self.per_image_nme)], self.threshold)

    def to_dict(self):
        doc = {"note": self.note}
        if self.per_image_nme:
            doc["landmarks"] = {
                "count": len(self.per_image_nme),
                "nme": self.mean_nme,
                "failure_rate": self.failure_rate,
                "threshold": self.threshold,
                "per_image_nme": {k: self.per_image_nme[k] for k in sorted(self.per_image_nme)},
            }
        if self.f1 is not None:
            doc["parsing"] = {
                "per_class": {SemanticClass(i).name.lower(): float(v) for i, v in enumerate(self.f1.per_class)},
                "absent": [SemanticClass(i).name.lower() for i in np.flatnonzero(self.f1.absent)],
                "merged": self.f1.merged,
                "overall": self.f1.overall,
                "mean": self.f1.mean,
            }
        return doc

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_table(self):
        """Aligned plain-text table, values in percent."""
        lines = [f"# {self.note}"]
        if self.per_image_nme:
            lines.append(f"{'images':>8} {'NME':>8} {'FR@' + format(self.threshold * 100, 'g') + '%':>8}")
            lines.append(f"{len(self.per_image_nme):>8d} {self.mean_nme * 100:>8.2f} {self.failure_rate * 100:>8.2f}")
        if self.f1 is not None:
            cols = list(self.f1.merged) + ["overall", "mean"]
            vals = list(self.f1.merged.values()) + [self.f1.overall, self.f1.mean]
            width = max(8, *(len(c) + 1 for c in cols))
            lines.append("".join(f"{c:>{width}}" for c in cols))
            lines.append("".join(f"{v * 100:>{width}.1f}" for v in vals))
        return "\n".join(lines)
