"""Track-back labeling: trackers seeded at keyframes, run in reverse time.

Each keyframe seeds trackers from its ground-truth boxes; trackers then walk
back frame by frame until the previous keyframe. Kalman predictions act as
region proposals for the detector, matched detections update the tracks, and
class labels of small (far) detections are overwritten by the class of the
largest (nearest) detection the track has seen.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

from .assoc import AssocConfig, match_detections
from .detect import Detection, DetectorInterface, Source
from .errors import ConfigError
from .geom import corner_to_state, state_to_corner
from .kalman import KalmanConfig, KalmanState, init_state, predict, update

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LabelerConfig:
    max_misses: int = 3
    loss_threshold: float = 0.0
    allow_unseeded_tracks: bool = True
    near_to_far: bool = True
    kalman: KalmanConfig = field(default_factory=KalmanConfig)
    assoc: AssocConfig = field(default_factory=AssocConfig)

    def __post_init__(self):
        if int(self.max_misses) != self.max_misses or self.max_misses < 0:
            raise ConfigError(f"labeler.max_misses must be an integer >= 0, got {self.max_misses}")
        if not self.loss_threshold >= 0:
            raise ConfigError(f"labeler.loss_threshold must be >= 0, got {self.loss_threshold}")


@dataclass
class Track:
    track_id: int
    state: KalmanState
    canonical_class: Optional[int]
    history: list[tuple[int, Detection]] = field(default_factory=list)
    misses: int = 0
    seeded_from_gt: bool = False
    last_frame: Optional[int] = None

    def append(self, frame_id: int, det: Detection):
        if self.history and frame_id >= self.history[-1][0]:
            raise ValueError(
                f"track {self.track_id}: frame {frame_id} not earlier than {self.history[-1][0]}"
            )
        self.history.append((frame_id, det))
        self.canonical_class = largest_area_class(self.history)


def largest_area_class(history: Sequence[tuple[int, Detection]]) -> Optional[int]:
    """Class of the largest-area detection; earliest entry wins ties."""
    best = None
    for _, d in history:
        if best is None or d.box.area > best.box.area:
            best = d
    return None if best is None else best.class_id


@dataclass(frozen=True)
class LabelRecord:
    detection: Detection
    track_id: int
    sequence_id: str
    saved: bool

    @property
    def frame_id(self) -> int:
        return self.detection.frame_id


def correct_near_to_far(track: Track, det: Detection) -> Detection:
    """Relabel ``det`` with the track's canonical class when they disagree.

    The (possibly relabeled) detection is appended to the track history and
    the canonical class recomputed.
    """
    out = det
    if track.history and track.canonical_class is not None and det.class_id != track.canonical_class:
        out = replace(det, class_id=track.canonical_class, source=Source.Corrected)
    track.append(det.frame_id, out)
    return out


class _Ids:
    def __init__(self):
        self._it = itertools.count()

    def __call__(self) -> int:
        return next(self._it)


def _new_track(track_id: int, det: Detection, frame_id: int, seeded: bool, cfg: KalmanConfig) -> Track:
    t = Track(
        track_id=track_id,
        state=init_state(corner_to_state(det.box), cfg),
        canonical_class=det.class_id,
        seeded_from_gt=seeded,
        last_frame=frame_id,
    )
    t.append(frame_id, det)
    return t


def step_back(
    trackers: list[Track],
    frame_id: int,
    detector: DetectorInterface,
    config: LabelerConfig = LabelerConfig(),
    sequence_id: str = "0",
    new_id=None,
) -> tuple[list[LabelRecord], list[Track]]:
    """One reverse-time step at ``frame_id``. Mutates and returns the tracks."""
    if new_id is None:
        start = max((t.track_id for t in trackers), default=-1) + 1
        counter = itertools.count(start)
        new_id = lambda: next(counter)  # noqa: E731
    for t in trackers:
        if t.last_frame is not None and frame_id >= t.last_frame:
            raise ValueError(
                f"frame ordering: step at {frame_id} but track {t.track_id} is at {t.last_frame}"
            )

    proposals = []
    for t in trackers:
        t.state, sb = predict(t.state, config.kalman)
        t.last_frame = frame_id
        proposals.append(state_to_corner(sb))

    slots = detector.detect(frame_id, proposals)
    if len(slots) != len(proposals):
        raise RuntimeError(f"detector returned {len(slots)} slots for {len(proposals)} proposals")
    dets = [d for d in slots if d is not None]

    res = match_detections([d.box for d in dets], proposals, config.assoc.iou_min)
    records: list[LabelRecord] = []

    def emit(det: Detection, track_id: int):
        records.append(LabelRecord(det, track_id, sequence_id, det.loss > config.loss_threshold))

    for d_idx, t_idx in res.matched:
        t = trackers[t_idx]
        det = replace(dets[d_idx], frame_id=frame_id)
        t.state = update(t.state, corner_to_state(det.box), config.kalman)
        t.misses = 0
        if config.near_to_far:
            det = correct_near_to_far(t, det)
        else:
            t.append(frame_id, det)
        emit(det, t.track_id)

    spawned = []
    for d_idx in res.unmatched_detections:
        det = replace(dets[d_idx], frame_id=frame_id)
        if config.allow_unseeded_tracks:
            t = _new_track(new_id(), det, frame_id, False, config.kalman)
            spawned.append(t)
            emit(det, t.track_id)
        else:
            emit(det, -1)

    survivors = []
    unmatched = set(res.unmatched_trackers)
    for j, t in enumerate(trackers):
        if j in unmatched:
            t.misses += 1
            if t.misses > config.max_misses:
                log.debug("frame %d: dropping track %d after %d misses", frame_id, t.track_id, t.misses)
                continue
        survivors.append(t)
    return records, survivors + spawned


def label_sequence(
    frames: range,
    sparse_gt: Mapping[int, Sequence],
    detector: DetectorInterface,
    config: LabelerConfig = LabelerConfig(),
    sequence_id: str = "0",
) -> list[LabelRecord]:
    """Label every frame reachable by track-back from the keyframes.

    ``sparse_gt`` maps keyframe id to GT entries carrying ``box`` and
    ``class_id``. Frames after the last keyframe are not reachable in reverse
    time and receive no records.
    """
    if not sparse_gt:
        raise ValueError("sparse ground truth is empty")
    keyframes = sorted(sparse_gt)
    for kf in keyframes:
        if kf not in frames:
            raise ValueError(f"keyframe {kf} outside frame range {frames}")

    new_id = _Ids()
    records: list[LabelRecord] = []
    for pos in range(len(keyframes) - 1, -1, -1):
        kf = keyframes[pos]
        stop = keyframes[pos - 1] if pos > 0 else frames.start - 1
        trackers = []
        for gt in sparse_gt[kf]:
            det = Detection(kf, gt.box, gt.class_id, 1.0, 0.0, Source.GroundTruth)
            t = _new_track(new_id(), det, kf, True, config.kalman)
            trackers.append(t)
            records.append(LabelRecord(det, t.track_id, sequence_id, det.loss > config.loss_threshold))
        for f in range(kf - 1, stop, -1):
            step_records, trackers = step_back(trackers, f, detector, config, sequence_id, new_id)
            records.extend(step_records)
    return records
