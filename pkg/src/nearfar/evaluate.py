"""Detection average precision and label-coverage metrics."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .detect import Source
from .geom import iou
from .labeler import LabelRecord


@dataclass
class ClassAP:
    ap: float
    tp: int
    fp: int
    fn: int
    n_gt: int
    precision: list[float] = field(default_factory=list, repr=False)
    recall: list[float] = field(default_factory=list, repr=False)


@dataclass
class EvalReport:
    iou_threshold: float
    per_class: dict[int, ClassAP]
    mAP: float
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "iou_threshold": self.iou_threshold,
            "mAP": self.mAP,
            "per_class": {
                str(c): {"ap": v.ap, "tp": v.tp, "fp": v.fp, "fn": v.fn, "n_gt": v.n_gt}
                for c, v in sorted(self.per_class.items())
            },
            "config": self.config,
        }


def _key(r: LabelRecord):
    d = r.detection
    return (r.sequence_id, d.frame_id)


def _pred_order(r: LabelRecord):
    d = r.detection
    return (-d.score, r.sequence_id, d.frame_id, r.track_id, d.box.as_list())


def envelope_ap(tp_flags: Sequence[bool], n_gt: int) -> tuple[float, np.ndarray, np.ndarray]:
    """Area under the precision envelope for score-ordered TP/FP flags.

    Recall grows by exactly ``1/n_gt`` at each true positive, so the area is
    the mean envelope precision taken at the true positives (missed GT
    contributes zero).
    """
    tp = np.asarray(tp_flags, dtype=bool)
    if tp.size == 0 or n_gt == 0:
        return 0.0, np.zeros(0), np.zeros(0)
    ctp = np.cumsum(tp)
    cfp = np.cumsum(~tp)
    precision = ctp / (ctp + cfp)
    recall = ctp / n_gt
    env = np.maximum.accumulate(precision[::-1])[::-1]
    ap = float(np.sum(env[tp])) / n_gt
    return ap, precision, recall


def eval_ap(pred: Iterable[LabelRecord], gt: Iterable[LabelRecord], iou_threshold: float = 0.5) -> EvalReport:
    """Per-class AP with greedy score-ordered matching; mAP over GT classes."""
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError(f"iou_threshold must be in (0, 1), got {iou_threshold}")
    gt = list(gt)
    pred = list(pred)
    if not gt:
        raise ValueError("ground truth is empty")

    gt_by = defaultdict(list)
    for g in sorted(gt, key=lambda r: (_key(r), r.track_id, r.detection.box.as_list())):
        gt_by[(g.detection.class_id,) + _key(g)].append(g)
    classes = sorted({g.detection.class_id for g in gt})

    per_class = {}
    for c in classes:
        n_gt = sum(1 for g in gt if g.detection.class_id == c)
        preds = sorted((p for p in pred if p.detection.class_id == c), key=_pred_order)
        used: set[tuple] = set()
        flags = []
        for p in preds:
            cands = gt_by.get((c,) + _key(p), [])
            best, best_iou = None, -1.0
            for i, g in enumerate(cands):
                if ((c,) + _key(p), i) in used:
                    continue
                v = iou(p.detection.box, g.detection.box)
                if v >= iou_threshold and v > best_iou:
                    best, best_iou = i, v
            if best is None:
                flags.append(False)
            else:
                used.add(((c,) + _key(p), best))
                flags.append(True)
        ap, prec, rec = envelope_ap(flags, n_gt)
        tp = int(sum(flags))
        per_class[c] = ClassAP(ap, tp, len(flags) - tp, n_gt - tp, n_gt,
                               prec.tolist(), rec.tolist())
    m_ap = float(np.mean([v.ap for v in per_class.values()]))
    return EvalReport(iou_threshold, per_class, m_ap)


@dataclass
class CoverageReport:
    n_gt: int
    covered: int
    class_correct: int

    @property
    def recall(self) -> float:
        return self.covered / self.n_gt if self.n_gt else 0.0

    @property
    def class_accuracy(self) -> float:
        return self.class_correct / self.covered if self.covered else 0.0


def label_coverage(pred: Iterable[LabelRecord], gt: Iterable[LabelRecord], keyframes: set,
                   iou_threshold: float = 0.5) -> CoverageReport:
    """How many GT instances on non-key frames got a label at ``iou_threshold``.

    Each GT instance is paired with the highest-IoU label on its frame (class
    ignored); the pair counts toward class accuracy when the classes agree.
    ``keyframes`` holds ``(sequence, frame)`` pairs to exclude.
    """
    by_frame = defaultdict(list)
    for p in pred:
        if p.detection.source is Source.GroundTruth:
            continue
        by_frame[_key(p)].append(p)
    n = covered = correct = 0
    for g in gt:
        k = _key(g)
        if k in keyframes:
            continue
        n += 1
        best, best_iou = None, -1.0
        for p in by_frame.get(k, []):
            v = iou(p.detection.box, g.detection.box)
            if v > best_iou:
                best, best_iou = p, v
        if best is not None and best_iou >= iou_threshold:
            covered += 1
            correct += best.detection.class_id == g.detection.class_id
    return CoverageReport(n, covered, correct)


def restrict_to_labeled_span(gt: Iterable[LabelRecord], pred: Iterable[LabelRecord]) -> list[LabelRecord]:
    """Drop GT on frames after each sequence's last keyframe.

    Keyframes are recognised as frames carrying ground-truth-sourced labels in
    ``pred``; sequences without any keep all their GT.
    """
    last = {}
    for p in pred:
        if p.detection.source is Source.GroundTruth:
            s = p.sequence_id
            last[s] = max(last.get(s, p.detection.frame_id), p.detection.frame_id)
    return [g for g in gt if g.sequence_id not in last or g.detection.frame_id <= last[g.sequence_id]]
