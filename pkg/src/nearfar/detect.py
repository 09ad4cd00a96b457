"""Detector abstraction driven by region proposals.

A detector receives the Kalman predictions of the active tracks as region
proposals and returns one slot per proposal; a slot is either a
:class:`Detection` or ``None`` (nothing usable there).

Two implementations are provided: :class:`SyntheticDetector`, which perturbs
scene ground truth, and :class:`FileDetector`, which replays stored detector
output.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Mapping, Optional, Protocol, Sequence

import numpy as np

from .errors import ConfigError
from .geom import CornerBox, iou_matrix

CLASS_NAMES = ("car", "pedestrian", "cyclist")
NUM_CLASSES = len(CLASS_NAMES)

LOSS_SCORE_FLOOR = 1e-6


class Source(str, enum.Enum):
    GroundTruth = "gt"
    Detector = "det"
    Corrected = "corrected"


@dataclass(frozen=True)
class Detection:
    frame_id: int
    box: CornerBox
    class_id: int
    score: float
    loss: float
    source: Source = Source.Detector

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must be in [0, 1], got {self.score}")
        if not (math.isfinite(self.loss) and self.loss >= 0):
            raise ValueError(f"loss must be finite and >= 0, got {self.loss}")
        if not 0 <= self.class_id < NUM_CLASSES:
            raise ValueError(f"class_id out of range: {self.class_id}")


def score_to_loss(score: float) -> float:
    """Cross-entropy surrogate ``-ln(score)``, floored so it stays finite."""
    # max() also turns -0.0 (score == 1) into 0.0
    return max(0.0, -math.log(max(score, LOSS_SCORE_FLOOR)))


class DetectorInterface(Protocol):
    def detect(self, frame_id: int, proposals: Sequence[CornerBox]) -> list[Optional[Detection]]:
        ...


@dataclass(frozen=True)
class NoiseConfig:
    hit_min: float = 0.2
    sigma_reg: float = 0.02
    beta: float = 0.5
    a0: float = 2500.0

    def __post_init__(self):
        if not 0.0 <= self.hit_min <= 1.0:
            raise ConfigError(f"detect.hit_min must be in [0, 1], got {self.hit_min}")
        if not (math.isfinite(self.sigma_reg) and self.sigma_reg >= 0):
            raise ConfigError(f"detect.sigma_reg must be >= 0, got {self.sigma_reg}")
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError(f"detect.beta must be in [0, 1], got {self.beta}")
        if not (math.isfinite(self.a0) and self.a0 > 0):
            raise ConfigError(f"detect.a0 must be > 0, got {self.a0}")

    @classmethod
    def zero(cls, hit_min: float = 0.2) -> "NoiseConfig":
        return cls(hit_min=hit_min, sigma_reg=0.0, beta=0.0)


def correct_class_probability(area: float, noise: NoiseConfig) -> float:
    return 1.0 - noise.beta * math.exp(-area / noise.a0)


def _greedy_claims(ious: np.ndarray, hit_min: float, tiebreak: Sequence[float] | None = None):
    """Claim candidates for proposals, each candidate at most once.

    Pairs are visited by descending IoU, then proposal index, then descending
    ``tiebreak`` (e.g. score), then candidate index. Pairs below ``hit_min``
    are never claimed.
    """
    n_prop, n_cand = ious.shape
    pairs = []
    for p in range(n_prop):
        for c in range(n_cand):
            v = ious[p, c]
            if v >= hit_min and v > 0:
                tb = -tiebreak[c] if tiebreak is not None else 0.0
                pairs.append((-v, p, tb, c))
    pairs.sort()
    claim: dict[int, int] = {}
    taken: set[int] = set()
    for _, p, _, c in pairs:
        if p in claim or c in taken:
            continue
        claim[p] = c
        taken.add(c)
    return claim


def synth_detect(
    frame_id: int,
    proposals: Sequence[CornerBox],
    scene_frames: Mapping[int, Sequence],
    noise: NoiseConfig,
    seed: int,
) -> list[Optional[Detection]]:
    """Simulated regression + classification against scene ground truth.

    ``scene_frames`` maps frame id to a list of GT entries with ``box`` and
    ``class_id`` attributes (see :func:`nearfar.simscene.generate_scene`).
    Each GT object answers at most one proposal per call.
    """
    if frame_id not in scene_frames:
        raise KeyError(f"unknown frame_id {frame_id}")
    gts = list(scene_frames[frame_id])
    out: list[Optional[Detection]] = [None] * len(proposals)
    if not proposals or not gts:
        return out

    claims = _greedy_claims(iou_matrix(proposals, [g.box for g in gts]), noise.hit_min)
    for p, g_idx in claims.items():
        gt = gts[g_idx]
        # per-(frame, proposal) stream so call order never matters
        rng = np.random.default_rng([seed, frame_id, p])
        box = _perturb(gt.box, noise.sigma_reg, rng)
        p_correct = correct_class_probability(gt.box.area, noise)
        if rng.random() < p_correct:
            cls, score = gt.class_id, p_correct
        else:
            wrong = [c for c in range(NUM_CLASSES) if c != gt.class_id]
            cls = wrong[int(rng.integers(len(wrong)))]
            score = (1.0 - p_correct) / (NUM_CLASSES - 1)
        out[p] = Detection(frame_id, box, cls, score, score_to_loss(score), Source.Detector)
    return out


def _perturb(box: CornerBox, sigma_reg: float, rng: np.random.Generator) -> CornerBox:
    eps = rng.standard_normal(4)
    if sigma_reg == 0.0:
        return box
    std = sigma_reg * math.sqrt(box.area)
    x1, y1, x2, y2 = (v + std * e for v, e in zip(box.as_list(), eps))
    x1, x2 = min(x1, x2), max(x1, x2)
    y1, y2 = min(y1, y2), max(y1, y2)
    # keep the box non-degenerate under extreme noise draws
    x2 = max(x2, x1 + 1e-3)
    y2 = max(y2, y1 + 1e-3)
    return CornerBox(x1, y1, x2, y2)


class SyntheticDetector:
    """Ground-truth-backed detector for one sequence."""

    def __init__(self, scene_frames: Mapping[int, Sequence], noise: NoiseConfig, seed: int):
        self.scene_frames = scene_frames
        self.noise = noise
        self.seed = int(seed)

    def detect(self, frame_id, proposals):
        return synth_detect(frame_id, proposals, self.scene_frames, self.noise, self.seed)


class DetectionStore:
    """Stored detections indexed by frame, in file order."""

    def __init__(self, detections: Sequence[Detection] = ()):
        self.by_frame: dict[int, list[Detection]] = {}
        for d in detections:
            self.by_frame.setdefault(d.frame_id, []).append(d)

    def __len__(self):
        return sum(len(v) for v in self.by_frame.values())


def file_detect(
    frame_id: int, proposals: Sequence[CornerBox], store: DetectionStore, hit_min: float = 0.2
) -> list[Optional[Detection]]:
    out: list[Optional[Detection]] = [None] * len(proposals)
    cands = store.by_frame.get(frame_id, [])
    if not proposals or not cands:
        return out
    ious = iou_matrix(proposals, [d.box for d in cands])
    claims = _greedy_claims(ious, hit_min, tiebreak=[d.score for d in cands])
    for p, c in claims.items():
        out[p] = replace(cands[c], frame_id=frame_id)
    return out


class FileDetector:
    def __init__(self, store: DetectionStore, hit_min: float = 0.2):
        self.store = store
        self.hit_min = hit_min

    def detect(self, frame_id, proposals):
        return file_detect(frame_id, proposals, self.store, self.hit_min)
