"""Readers and writers for every on-disk format.

* labels / GT JSONL   -- one :class:`~nearfar.labeler.LabelRecord` per line
* detections JSONL    -- replayable detector output (``FileDetector``)
* KITTI label text    -- import, plus a lossy export
* efficiency CSV, manifest / report JSON, paired-series CSV

Floats are written with Python's shortest round-trip ``repr`` so files are
byte-stable across runs.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .detect import Detection, DetectionStore, Source
from .errors import DataIOError, SchemaError
from .geom import CornerBox
from .labeler import LabelRecord
from .simscene import GTBox

DEFAULT_CLASS_MAP = {"Car": 0, "Pedestrian": 1, "Cyclist": 2}
CLASS_TOKENS = {v: k for k, v in DEFAULT_CLASS_MAP.items()}

LABEL_FIELDS = ("seq", "frame", "track", "class", "bbox", "score", "loss", "source", "saved")
DETECTION_FIELDS = ("frame", "class", "bbox", "score", "loss")


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def _open_read(path):
    try:
        return open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DataIOError(f"cannot read {path}: {exc}") from exc


def _write_text(path, text: str) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise DataIOError(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------- labels

def record_to_dict(rec: LabelRecord) -> dict:
    d = rec.detection
    return {
        "seq": rec.sequence_id,
        "frame": d.frame_id,
        "track": rec.track_id,
        "class": d.class_id,
        "bbox": [float(v) for v in d.box.as_list()],
        "score": float(d.score),
        "loss": float(d.loss),
        "source": d.source.value,
        "saved": bool(rec.saved),
    }


def _require(obj: dict, fields: Sequence[str], where: str) -> None:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected a JSON object")
    for k in fields:
        if k not in obj:
            raise SchemaError(f"{where}: missing field {k!r}")


def _as_int(v, name, where) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise SchemaError(f"{where}: field {name!r} must be an integer")
    return v


def _as_float(v, name, where) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaError(f"{where}: field {name!r} must be a number")
    return float(v)


def _box(v, where) -> CornerBox:
    if not isinstance(v, list) or len(v) != 4:
        raise SchemaError(f"{where}: field 'bbox' must be a list of 4 numbers")
    try:
        return CornerBox.from_seq([_as_float(x, "bbox", where) for x in v])
    except ValueError as exc:
        raise SchemaError(f"{where}: invalid bbox: {exc}") from exc


def record_from_dict(obj: dict, where: str = "record") -> LabelRecord:
    _require(obj, LABEL_FIELDS, where)
    try:
        source = Source(obj["source"])
    except ValueError as exc:
        raise SchemaError(f"{where}: unknown source {obj['source']!r}") from exc
    if not isinstance(obj["seq"], str):
        raise SchemaError(f"{where}: field 'seq' must be a string")
    if not isinstance(obj["saved"], bool):
        raise SchemaError(f"{where}: field 'saved' must be a boolean")
    try:
        det = Detection(
            frame_id=_as_int(obj["frame"], "frame", where),
            box=_box(obj["bbox"], where),
            class_id=_as_int(obj["class"], "class", where),
            score=_as_float(obj["score"], "score", where),
            loss=_as_float(obj["loss"], "loss", where),
            source=source,
        )
    except ValueError as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(f"{where}: {exc}") from exc
    return LabelRecord(det, _as_int(obj["track"], "track", where), obj["seq"], obj["saved"])


def labels_to_text(records: Iterable[LabelRecord]) -> str:
    return "".join(_dumps(record_to_dict(r)) + "\n" for r in records)


def write_labels(path, records: Iterable[LabelRecord]) -> None:
    _write_text(path, labels_to_text(records))


def _iter_jsonl(path):
    with _open_read(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                yield where, json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{where}: malformed JSON ({exc.msg})") from exc


def read_labels(path) -> list[LabelRecord]:
    return [record_from_dict(obj, where) for where, obj in _iter_jsonl(path)]


def sort_records(records: Iterable[LabelRecord]) -> list[LabelRecord]:
    """Canonical output order: sequence, frame, track, then box."""
    return sorted(
        records,
        key=lambda r: (r.sequence_id, r.detection.frame_id, r.track_id, r.detection.box.as_list()),
    )


def gt_records(seq: str, frames: Mapping[int, Sequence[GTBox]]) -> list[LabelRecord]:
    """Scene GT as label records: track = object id, loss 0, saved."""
    out = []
    for f in sorted(frames):
        for g in sorted(frames[f], key=lambda g: g.object_id):
            det = Detection(f, g.box, g.class_id, 1.0, 0.0, Source.GroundTruth)
            out.append(LabelRecord(det, g.object_id, seq, True))
    return out


def records_to_gt_frames(records: Iterable[LabelRecord]) -> dict[int, list[GTBox]]:
    frames: dict[int, list[GTBox]] = {}
    for r in records:
        frames.setdefault(r.detection.frame_id, []).append(
            GTBox(r.track_id, r.detection.class_id, r.detection.box)
        )
    return frames


# ------------------------------------------------------------ detections

def detection_to_dict(d: Detection) -> dict:
    return {
        "frame": d.frame_id,
        "class": d.class_id,
        "bbox": [float(v) for v in d.box.as_list()],
        "score": float(d.score),
        "loss": float(d.loss),
    }


def write_detections(path, dets: Iterable[Detection]) -> None:
    _write_text(path, "".join(_dumps(detection_to_dict(d)) + "\n" for d in dets))


def read_detections(path) -> list[Detection]:
    out = []
    for where, obj in _iter_jsonl(path):
        _require(obj, DETECTION_FIELDS, where)
        try:
            out.append(Detection(
                frame_id=_as_int(obj["frame"], "frame", where),
                box=_box(obj["bbox"], where),
                class_id=_as_int(obj["class"], "class", where),
                score=_as_float(obj["score"], "score", where),
                loss=_as_float(obj["loss"], "loss", where),
                source=Source.Detector,
            ))
        except SchemaError:
            raise
        except ValueError as exc:
            raise SchemaError(f"{where}: {exc}") from exc
    return out


def load_detection_store(path) -> DetectionStore:
    return DetectionStore(read_detections(path))


# ------------------------------------------------------------------ KITTI

@dataclass(frozen=True)
class KittiLabelLine:
    token: str
    truncated: float
    occluded: float
    alpha: float
    bbox: CornerBox


@dataclass
class KittiImport:
    frames: dict[int, list[GTBox]]
    dropped: Counter = field(default_factory=Counter)


def parse_kitti_line(line: str, where: str = "line") -> KittiLabelLine:
    parts = line.split()
    if len(parts) < 8:
        raise SchemaError(f"{where}: expected at least 8 fields, got {len(parts)}")
    try:
        trunc, occ, alpha = float(parts[1]), float(parts[2]), float(parts[3])
        coords = [float(v) for v in parts[4:8]]
    except ValueError as exc:
        raise SchemaError(f"{where}: non-numeric field ({exc})") from exc
    try:
        box = CornerBox(*coords)
    except ValueError as exc:
        raise SchemaError(f"{where}: invalid bbox ({exc})") from exc
    return KittiLabelLine(parts[0], trunc, occ, alpha, box)


def read_kitti_labels(directory, class_map: Mapping[str, int] = DEFAULT_CLASS_MAP) -> KittiImport:
    """Read a directory of per-frame KITTI label files named by frame id."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataIOError(f"not a directory: {directory}")
    result = KittiImport(frames={})
    for path in sorted(directory.glob("*.txt")):
        if not re.fullmatch(r"\d+", path.stem):
            continue
        frame = int(path.stem)
        boxes = result.frames.setdefault(frame, [])
        with _open_read(path) as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                lab = parse_kitti_line(line, f"{path}:{lineno}")
                if lab.token not in class_map:
                    result.dropped[lab.token] += 1
                    continue
                boxes.append(GTBox(len(boxes), class_map[lab.token], lab.bbox))
    return result


def kitti_line(d: Detection, tokens: Mapping[int, str] = CLASS_TOKENS) -> str:
    """KITTI-format line; 3D fields zeroed, score as the trailing field. Loss is lost."""
    b = d.box
    return (f"{tokens[d.class_id]} 0.00 0 0.00 {b.x1:.2f} {b.y1:.2f} {b.x2:.2f} {b.y2:.2f} "
            f"0.00 0.00 0.00 0.00 0.00 0.00 0.00 {d.score:.4f}")


def export_kitti(directory, records: Iterable[LabelRecord]) -> list[Path]:
    """Write one ``%06d.txt`` per (sequence, frame); sequences get subdirectories."""
    by_file: dict[Path, list[str]] = {}
    for r in sort_records(records):
        p = Path(directory) / r.sequence_id / f"{r.detection.frame_id:06d}.txt"
        by_file.setdefault(p, []).append(kitti_line(r.detection))
    for p, lines in by_file.items():
        _write_text(p, "\n".join(lines) + "\n")
    return sorted(by_file)


def split_frames(frames: Sequence[int], counts: Sequence[int], seed: int) -> list[list[int]]:
    """Seeded random split of ``frames`` into consecutive groups of ``counts``."""
    if sum(counts) > len(frames) or any(c < 0 for c in counts):
        raise ValueError("split counts exceed the number of frames")
    perm = np.random.default_rng(seed).permutation(len(frames))
    out, pos = [], 0
    for c in counts:
        out.append(sorted(frames[i] for i in perm[pos:pos + c]))
        pos += c
    return out


# ------------------------------------------------------- curves & tables

def curve_to_csv(points: Iterable[tuple[float, int, float]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["fraction", "M", "R"])
    for frac, m, r in points:
        w.writerow([repr(float(frac)), int(m), repr(float(r))])
    return buf.getvalue()


def write_curve(path, points) -> None:
    _write_text(path, curve_to_csv(points))


def read_curve(path) -> list[tuple[float, int, float]]:
    with _open_read(path) as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["fraction", "M", "R"]:
        raise SchemaError(f"{path}:1: expected header fraction,M,R")
    out = []
    for lineno, row in enumerate(rows[1:], 2):
        try:
            out.append((float(row[0]), int(row[1]), float(row[2])))
        except (ValueError, IndexError) as exc:
            raise SchemaError(f"{path}:{lineno}: bad row ({exc})") from exc
    return out


def read_pairs(path) -> tuple[list[float], list[float]]:
    """Two-column numeric CSV; a non-numeric first row is taken as a header."""
    xs, ys = [], []
    with _open_read(path) as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or not "".join(row).strip():
                continue
            if len(row) < 2:
                raise SchemaError(f"{path}:{lineno}: expected 2 columns")
            try:
                x, y = float(row[0]), float(row[1])
            except ValueError:
                if lineno == 1:
                    continue
                raise SchemaError(f"{path}:{lineno}: non-numeric value") from None
            if not (math.isfinite(x) and math.isfinite(y)):
                raise SchemaError(f"{path}:{lineno}: non-finite value")
            xs.append(x)
            ys.append(y)
    return xs, ys


def write_json(path, obj) -> None:
    _write_text(path, json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


def read_json(path):
    with _open_read(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}:{exc.lineno}: malformed JSON ({exc.msg})") from exc


def meta_path(path) -> Path:
    """Sidecar file carrying the resolved config for a single-file artifact."""
    p = Path(path)
    return p.with_name(p.name + ".meta.json")


def list_sequences(directory) -> list[str]:
    return sorted(p.stem for p in Path(directory).glob("*.jsonl"))

