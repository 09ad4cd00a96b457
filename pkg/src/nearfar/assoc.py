"""Detection-to-tracker association: IoU matrix, optimal assignment, threshold."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ConfigError
from .geom import CornerBox, iou_matrix

# two assignments whose totals differ by less than this are treated as tied
_TIE_TOL = 1e-12


@dataclass(frozen=True)
class AssocConfig:
    iou_min: float = 0.3

    def __post_init__(self):
        if not 0.0 <= self.iou_min <= 1.0:
            raise ConfigError(f"assoc.iou_min must be in [0, 1], got {self.iou_min}")


@dataclass
class MatchResult:
    matched: list[tuple[int, int]] = field(default_factory=list)
    unmatched_detections: list[int] = field(default_factory=list)
    unmatched_trackers: list[int] = field(default_factory=list)


def _best_total(scores: np.ndarray, rows: list[int], cols: list[int]) -> float:
    if not rows or not cols:
        return 0.0
    sub = scores[np.ix_(rows, cols)]
    r, c = linear_sum_assignment(sub, maximize=True)
    return float(sub[r, c].sum())


def solve_assignment(scores) -> list[tuple[int, int]]:
    """Maximum-total-score one-to-one assignment with ``min(rows, cols)`` pairs.

    Among optimal assignments the lexicographically smallest list of
    ``(row, col)`` pairs is returned, so the result does not depend on the
    solver's internal pivoting order.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.ndim != 2:
        raise ValueError(f"score matrix must be 2-D, got shape {scores.shape}")
    n_rows, n_cols = scores.shape
    if n_rows == 0 or n_cols == 0:
        return []

    target = _best_total(scores, list(range(n_rows)), list(range(n_cols)))
    free_cols = list(range(n_cols))
    skips_left = max(0, n_rows - n_cols)
    pairs: list[tuple[int, int]] = []
    for i in range(n_rows):
        rest_rows = list(range(i + 1, n_rows))
        chosen = None
        for c in free_cols:
            remaining = [cc for cc in free_cols if cc != c]
            if scores[i, c] + _best_total(scores, rest_rows, remaining) >= target - _TIE_TOL:
                chosen = c
                break
        if chosen is None:
            # only reachable when this row may stay unassigned
            assert skips_left > 0
            skips_left -= 1
            continue
        pairs.append((i, chosen))
        target -= scores[i, chosen]
        free_cols.remove(chosen)
        if not free_cols:
            break
    return pairs


def match_detections(
    dets: Sequence[CornerBox], preds: Sequence[CornerBox], iou_min: float = 0.3
) -> MatchResult:
    """Pair detections with tracker predictions.

    Pairs are chosen by optimal assignment on IoU first; pairs below
    ``iou_min`` are then split back into unmatched detection + unmatched tracker.
    """
    if not 0.0 <= iou_min <= 1.0:
        raise ValueError(f"iou_min must be in [0, 1], got {iou_min}")
    if len(preds) == 0:
        return MatchResult([], list(range(len(dets))), [])
    if len(dets) == 0:
        return MatchResult([], [], list(range(len(preds))))

    m = iou_matrix(dets, preds)
    matched = []
    for d, t in solve_assignment(m):
        if m[d, t] >= iou_min:
            matched.append((d, t))
    used_d = {d for d, _ in matched}
    used_t = {t for _, t in matched}
    return MatchResult(
        matched=matched,
        unmatched_detections=[i for i in range(len(dets)) if i not in used_d],
        unmatched_trackers=[j for j in range(len(preds)) if j not in used_t],
    )
