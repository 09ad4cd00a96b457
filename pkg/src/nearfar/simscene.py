"""Synthetic ground-truth scenes: pinhole projection of approaching objects.

An object at depth ``z(t) = z0 - speed * t`` has box height ``focal * size / z``
and width ``aspect * height``. Its center sits at
``(W/2 + focal * (lateral + drift * t) / z, H/2 + focal * vertical / z)``, so
approaching objects grow monotonically frame over frame.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError
from .geom import CornerBox, iou

Z_MIN = 1.0

# (world height m, width/height) per class: car, pedestrian, cyclist
CLASS_SHAPES = {0: (1.5, 1.6), 1: (1.75, 0.4), 2: (1.7, 0.9)}
CAMERA_HEIGHT = 1.65


@dataclass(frozen=True)
class SceneObject:
    id: int
    class_id: int
    size: float
    z0: float
    speed: float = 0.0
    lateral: float = 0.0
    drift: float = 0.0
    vertical: float = 0.0
    aspect: float = 1.0
    focal: float = 720.0


@dataclass(frozen=True)
class SceneSpec:
    width: float = 1280.0
    height: float = 384.0
    frame_count: int = 100
    objects: tuple[SceneObject, ...] = ()
    seed: int = 0
    min_visible_area: float = 16.0

    def validate(self):
        if self.frame_count < 1:
            raise ConfigError(f"frame_count must be >= 1, got {self.frame_count}")
        if not (self.width > 0 and self.height > 0):
            raise ConfigError("scene width/height must be > 0")
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ConfigError("scene object ids must be unique")
        for o in self.objects:
            if o.size <= 0 or o.aspect <= 0 or o.focal <= 0 or o.speed < 0:
                raise ConfigError(f"object {o.id}: size/aspect/focal must be > 0, speed >= 0")
            if o.z0 - o.speed * (self.frame_count - 1) <= Z_MIN:
                raise ConfigError(f"object {o.id} would pass the camera (z_end <= {Z_MIN})")


@dataclass(frozen=True)
class GTBox:
    object_id: int
    class_id: int
    box: CornerBox


def object_box(o: SceneObject, t: int, spec: SceneSpec) -> CornerBox | None:
    """Clipped box of ``o`` at frame ``t``, or ``None`` when not visible."""
    z = o.z0 - o.speed * t
    h = o.focal * o.size / z
    w = o.aspect * h
    cx = spec.width / 2.0 + o.focal * (o.lateral + o.drift * t) / z
    cy = spec.height / 2.0 + o.focal * o.vertical / z
    x1 = max(0.0, cx - w / 2.0)
    y1 = max(0.0, cy - h / 2.0)
    x2 = min(spec.width, cx + w / 2.0)
    y2 = min(spec.height, cy + h / 2.0)
    if x2 <= x1 or y2 <= y1:
        return None
    if (x2 - x1) * (y2 - y1) < spec.min_visible_area:
        return None
    return CornerBox(x1, y1, x2, y2)


def generate_scene(spec: SceneSpec) -> dict[int, list[GTBox]]:
    spec.validate()
    frames: dict[int, list[GTBox]] = {}
    for t in range(spec.frame_count):
        row = []
        for o in spec.objects:
            b = object_box(o, t, spec)
            if b is not None:
                row.append(GTBox(o.id, o.class_id, b))
        frames[t] = row
    return frames


def sparsify(gt: Mapping[int, Sequence[GTBox]], k: int) -> dict[int, list[GTBox]]:
    """Keep only keyframes (frame id divisible by ``k``)."""
    if k < 1:
        raise ValueError(f"keyframe interval must be >= 1, got {k}")
    return {f: list(boxes) for f, boxes in gt.items() if f % k == 0}


def _fully_inside(o: SceneObject, spec: SceneSpec) -> list[CornerBox] | None:
    boxes = []
    for t in range(spec.frame_count):
        z = o.z0 - o.speed * t
        h = o.focal * o.size / z
        w = o.aspect * h
        cx = spec.width / 2.0 + o.focal * (o.lateral + o.drift * t) / z
        cy = spec.height / 2.0 + o.focal * o.vertical / z
        b = (cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
        if b[0] < 0 or b[1] < 0 or b[2] > spec.width or b[3] > spec.height:
            return None
        if w * h < spec.min_visible_area:
            return None
        boxes.append(CornerBox(*b))
    return boxes


def random_scene(
    seed: int,
    width: float = 1280.0,
    height: float = 384.0,
    frame_count: int = 100,
    n_objects: int = 8,
    min_visible_area: float = 16.0,
    max_tries: int = 20000,
) -> SceneSpec:
    """Draw a scene of approaching objects that stay in view and never overlap.

    The first three objects cover the three classes; the rest are drawn with
    car-heavy class frequencies.
    """
    rng = np.random.default_rng(seed)
    base = SceneSpec(width, height, frame_count, (), seed, min_visible_area)
    placed: list[tuple[SceneObject, list[CornerBox]]] = []
    tries = 0
    while len(placed) < n_objects:
        tries += 1
        if tries > max_tries:
            raise ConfigError(f"could not place {n_objects} non-overlapping objects (seed {seed})")
        oid = len(placed)
        cls = oid if oid < 3 else int(rng.choice(3, p=[0.5, 0.25, 0.25]))
        size, aspect = CLASS_SHAPES[cls]
        size *= rng.uniform(0.9, 1.1)
        z0 = rng.uniform(30.0, 60.0)
        z_end = rng.uniform(14.0, 0.75 * z0)
        speed = (z0 - z_end) / max(frame_count - 1, 1)
        o = SceneObject(
            id=oid,
            class_id=cls,
            size=float(size),
            z0=float(z0),
            speed=float(speed),
            lateral=float(rng.uniform(-11.0, 11.0)),
            drift=float(rng.uniform(-0.02, 0.02)),
            vertical=float(CAMERA_HEIGHT - size / 2.0 + rng.uniform(-0.2, 0.2)),
            aspect=float(aspect),
        )
        boxes = _fully_inside(o, base)
        if boxes is None:
            continue
        if any(iou(a, b) > 0 for _, other in placed for a, b in zip(boxes, other)):
            continue
        placed.append((o, boxes))
    return SceneSpec(width, height, frame_count, tuple(o for o, _ in placed), seed, min_visible_area)
