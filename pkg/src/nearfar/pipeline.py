"""End-to-end stages shared by the CLI, the experiment scripts and the tests.

Stages are plain functions of (inputs, config); the CLI only adds file I/O.
"""

from __future__ import annotations

import os
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import dataio
from .config import PipelineConfig
from .detect import DetectionStore, FileDetector, Source, SyntheticDetector
from .errors import ConfigError, DataIOError, SchemaError
from .labeler import LabelRecord, label_sequence
from .sampler import (
    EfficiencyCurve,
    SamplePlan,
    WeightedItem,
    efficiency_curve,
    m_for_fraction,
    plan_sample,
)
from .simscene import GTBox, SceneObject, SceneSpec, generate_scene, random_scene, sparsify


def worker_count() -> int:
    raw = os.environ.get("NEARFAR_THREADS")
    if raw is None or raw == "":
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"NEARFAR_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("NEARFAR_THREADS must be >= 1")
    return n


def parallel_map(fn: Callable, items: Sequence) -> list:
    """Order-preserving map over a worker pool capped by ``NEARFAR_THREADS``."""
    n = min(worker_count(), max(1, len(items)))
    if n == 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def sequence_id(i: int) -> str:
    return f"seq{i:03d}"


# ------------------------------------------------------------- simulate

@dataclass
class SimSequence:
    seq: str
    spec: SceneSpec
    frames: dict[int, list[GTBox]]

    def sparsify(self, k: int) -> dict[int, list[GTBox]]:
        return sparsify(self.frames, k)


def simulate(config: PipelineConfig) -> list[SimSequence]:
    sc = config.scene

    def one(i: int) -> SimSequence:
        spec = random_scene(
            derive_seed(config.seed, i, 0),
            width=sc.width,
            height=sc.height,
            frame_count=sc.frames,
            n_objects=sc.objects,
            min_visible_area=sc.min_visible_area,
        )
        return SimSequence(sequence_id(i), spec, generate_scene(spec))

    return parallel_map(one, list(range(sc.sequences)))


def scene_to_dict(spec: SceneSpec) -> dict:
    return asdict(spec)


def scene_from_dict(d: Mapping) -> SceneSpec:
    try:
        objs = tuple(SceneObject(**o) for o in d["objects"])
        fields = {k: v for k, v in d.items() if k != "objects"}
        return SceneSpec(objects=objs, **fields)
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"bad scene description in manifest: {exc}") from exc


def write_simulation(out_dir, seqs: Sequence[SimSequence], config: PipelineConfig) -> None:
    out = Path(out_dir)
    k = config.scene.keyframe_interval
    for s in seqs:
        dataio.write_labels(out / "gt" / f"{s.seq}.jsonl", dataio.gt_records(s.seq, s.frames))
        dataio.write_labels(out / "sparse" / f"{s.seq}.jsonl", dataio.gt_records(s.seq, s.sparsify(k)))
    dataio.write_json(out / "manifest.json", {
        "command": "simulate",
        "seed": config.seed,
        "config": config.to_flat(),
        "sequences": [{"id": s.seq, "scene": scene_to_dict(s.spec)} for s in seqs],
    })


def read_simulation(sim_dir) -> tuple[dict, list[SimSequence]]:
    sim_dir = Path(sim_dir)
    manifest = dataio.read_json(sim_dir / "manifest.json")
    seqs = []
    for entry in manifest.get("sequences", []):
        spec = scene_from_dict(entry["scene"])
        seqs.append(SimSequence(entry["id"], spec, generate_scene(spec)))
    return manifest, seqs


# ---------------------------------------------------------------- label

@dataclass
class LabelJob:
    seq: str
    frames: range
    sparse_gt: dict[int, list[GTBox]]
    scene_frames: dict[int, list[GTBox]] | None = None
    store: DetectionStore | None = None


def run_label_job(job: LabelJob, config: PipelineConfig, seq_index: int) -> list[LabelRecord]:
    if config.detect_kind == "synthetic":
        if job.scene_frames is None:
            raise ConfigError("synthetic detector needs scene ground truth (use a simulate directory)")
        detector = SyntheticDetector(job.scene_frames, config.noise, derive_seed(config.seed, seq_index, 1))
    else:
        detector = FileDetector(job.store or DetectionStore(), config.noise.hit_min)
    return label_sequence(job.frames, job.sparse_gt, detector, config.labeler, job.seq)


def label_jobs(jobs: Sequence[LabelJob], config: PipelineConfig) -> list[LabelRecord]:
    results = parallel_map(lambda ij: run_label_job(ij[1], config, ij[0]), list(enumerate(jobs)))
    return dataio.sort_records(r for rs in results for r in rs)


def jobs_from_simulation(seqs: Sequence[SimSequence], config: PipelineConfig,
                         detections: Mapping[str, DetectionStore] | None = None) -> list[LabelJob]:
    k = config.scene.keyframe_interval
    jobs = []
    for s in seqs:
        jobs.append(LabelJob(
            seq=s.seq,
            frames=range(s.spec.frame_count),
            sparse_gt=s.sparsify(k),
            scene_frames=s.frames,
            store=None if detections is None else detections.get(s.seq, DetectionStore()),
        ))
    return jobs


def load_detection_stores(path, seq_ids: Sequence[str]) -> dict[str, DetectionStore]:
    """``path`` is one JSONL (shared by all sequences) or a directory of ``<seq>.jsonl``."""
    p = Path(path)
    if p.is_dir():
        return {s: dataio.load_detection_store(p / f"{s}.jsonl") if (p / f"{s}.jsonl").exists()
                else DetectionStore() for s in seq_ids}
    if not p.exists():
        raise DataIOError(f"detections file not found: {p}")
    store = dataio.load_detection_store(p)
    return {s: store for s in seq_ids}


def job_from_kitti(kitti_dir, store: DetectionStore, seq: str | None = None) -> LabelJob:
    imp = dataio.read_kitti_labels(kitti_dir)
    frames = sorted(imp.frames)
    if not frames:
        raise SchemaError(f"no label files found in {kitti_dir}")
    sparse = {f: boxes for f, boxes in imp.frames.items()}
    last = max(frames)
    if store.by_frame:
        last = max(last, max(store.by_frame))
    return LabelJob(seq or Path(kitti_dir).name, range(min(frames), last + 1), sparse, None, store)


# ---------------------------------------------------------- images/sample

def image_losses(records: Iterable[LabelRecord], aggregate: str = "sum") -> tuple[list[tuple[str, int]], np.ndarray]:
    """Per-image loss over new (non-GT) labels, images ordered by (sequence, frame)."""
    groups: dict[tuple[str, int], list[float]] = defaultdict(list)
    for r in records:
        if r.detection.source is Source.GroundTruth:
            continue
        groups[(r.sequence_id, r.detection.frame_id)].append(r.detection.loss)
    keys = sorted(groups)
    agg = {"sum": np.sum, "mean": np.mean, "max": np.max}[aggregate]
    return keys, np.array([float(agg(groups[k])) for k in keys], dtype=float)


@dataclass
class SampleResult:
    records: list[LabelRecord]
    plan: SamplePlan
    images: list[tuple[str, int]]
    losses: np.ndarray


def sample_records(records: Sequence[LabelRecord], config: PipelineConfig, seed: int,
                   fraction: float | None = None, m: int | None = None,
                   keep_gt: bool = True) -> SampleResult:
    """Subsample new-label images; ground-truth records pass through when ``keep_gt``."""
    keys, losses = image_losses(records, config.sampler.aggregate)
    if not keys:
        raise SchemaError("no non-ground-truth labels to sample from")
    n = len(keys)
    if (fraction is None) == (m is None):
        raise ConfigError("give exactly one of fraction or M")
    if m is None:
        m = m_for_fraction(fraction, n)
    if not 1 <= m <= n:
        raise ConfigError(f"M must be in [1, {n}], got {m}")
    items = [WeightedItem(k, float(v)) for k, v in zip(keys, losses)]
    plan = plan_sample(items, m, seed, config.sampler)
    kept = {it.item_id for it in plan.subset}
    out = []
    for r in records:
        if r.detection.source is Source.GroundTruth:
            if keep_gt:
                out.append(r)
        elif (r.sequence_id, r.detection.frame_id) in kept:
            out.append(r)
    return SampleResult(dataio.sort_records(out), plan, keys, losses)


def efficiency(records: Iterable[LabelRecord], fractions: Sequence[float],
               aggregate: str = "sum") -> EfficiencyCurve:
    _, losses = image_losses(records, aggregate)
    return efficiency_curve(losses, fractions)
