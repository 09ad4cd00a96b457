"""Command-line entry point: ``nearfar <command> [options]``.

Commands: simulate, label, sample, efficiency, eval, analyze.
Exit codes: 0 ok, 1 usage, 2 config, 3 schema/parse, 4 numerical, 5 I/O.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import dataio, pipeline
from .config import PipelineConfig, load_config
from .errors import ConfigError, DataIOError, NearFarError, NumericalError, SchemaError
from .evaluate import eval_ap, label_coverage, restrict_to_labeled_span
from .detect import Source
from .sampler import fraction_grid, paired_series_fit

log = logging.getLogger("nearfar")

EXIT_USAGE = 1


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _meta(command: str, config: PipelineConfig, **extra) -> dict:
    return {"command": command, "seed": config.seed, "config": config.to_flat(), **extra}


def _require_out(args) -> Path:
    if args.out is None:
        raise NearFarError(f"{args.command}: --out is required")
    return Path(args.out)


def _emit(args, obj) -> None:
    if not args.quiet:
        print(json.dumps(obj, indent=2, sort_keys=True))


def cmd_simulate(args, config: PipelineConfig) -> int:
    out = _require_out(args)
    seqs = pipeline.simulate(config)
    pipeline.write_simulation(out, seqs, config)
    n = sum(len(b) for s in seqs for b in s.frames.values())
    log.info("simulated %d sequences, %d GT boxes -> %s", len(seqs), n, out)
    return 0


def cmd_label(args, config: PipelineConfig) -> int:
    out = _require_out(args)
    if (args.gt is None) == (args.kitti is None):
        raise NearFarError("label: give exactly one of --gt (simulate dir) or --kitti (label dir)")
    stores = None
    if args.gt is not None:
        _, seqs = pipeline.read_simulation(args.gt)
        if config.detect_kind == "file":
            if not config.detect_path:
                raise ConfigError("detect.kind=file needs detect.path")
            stores = pipeline.load_detection_stores(config.detect_path, [s.seq for s in seqs])
        jobs = pipeline.jobs_from_simulation(seqs, config, stores)
        inputs = {"gt": str(args.gt)}
    else:
        if config.detect_kind != "file" or not config.detect_path:
            raise ConfigError("labeling KITTI labels needs detect.kind=file and detect.path")
        seq = Path(args.kitti).name
        store = pipeline.load_detection_stores(config.detect_path, [seq])[seq]
        jobs = [pipeline.job_from_kitti(args.kitti, store, seq)]
        inputs = {"kitti": str(args.kitti)}
    records = pipeline.label_jobs(jobs, config)
    dataio.write_labels(out, records)
    saved = sum(r.saved for r in records)
    dataio.write_json(dataio.meta_path(out), _meta("label", config, inputs=inputs,
                                                   records=len(records), saved=saved))
    log.info("wrote %d label records (%d marked saved) -> %s", len(records), saved, out)
    return 0


def cmd_sample(args, config: PipelineConfig) -> int:
    out = _require_out(args)
    if args.fraction is not None and not 0.0 < args.fraction <= 1.0:
        raise ConfigError(f"--fraction must be in (0, 1], got {args.fraction}")
    records = dataio.read_labels(args.input)
    try:
        res = pipeline.sample_records(records, config, config.seed, fraction=args.fraction, m=args.m,
                                      keep_gt=not args.drop_gt)
    except ValueError as exc:
        if isinstance(exc, NearFarError):
            raise
        raise NumericalError(f"sample: {exc}") from exc
    dataio.write_labels(out, res.records)
    kept = len({(r.sequence_id, r.frame_id) for r in res.records if r.detection.source is not Source.GroundTruth})
    dataio.write_json(dataio.meta_path(out), _meta(
        "sample", config, input=str(args.input), images=len(res.images), M=res.plan.m,
        expected_images=float(res.plan.s.sum()), kept_images=kept,
        fraction=args.fraction))
    log.info("kept %d of %d images (M=%d) -> %s", kept, len(res.images), res.plan.m, out)
    return 0


def _parse_grid(text: str) -> list[float]:
    try:
        if ":" in text:
            start, stop, step = (float(v) for v in text.split(":"))
            return fraction_grid(step, start, stop)
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise NearFarError(f"bad --grid {text!r}; use start:stop:step or a comma list") from None


def cmd_efficiency(args, config: PipelineConfig) -> int:
    out = _require_out(args)
    records = dataio.read_labels(args.input)
    grid = _parse_grid(args.grid)
    try:
        curve = pipeline.efficiency(records, grid, config.sampler.aggregate)
    except ValueError as exc:
        raise NumericalError(f"efficiency: {exc}") from exc
    dataio.write_curve(out, curve.points)
    dataio.write_json(dataio.meta_path(out), _meta("efficiency", config, input=str(args.input),
                                                   grid=args.grid, first_r_ge_0_9=curve.first_reaching(0.9)))
    return 0


def _read_gt(path) -> list:
    p = Path(path)
    if p.is_dir():
        src = p / "gt" if (p / "gt").is_dir() else p
        files = sorted(src.glob("*.jsonl"))
        if not files:
            raise DataIOError(f"no GT JSONL files under {p}")
        return [r for f in files for r in dataio.read_labels(f)]
    return dataio.read_labels(p)


def cmd_eval(args, config: PipelineConfig) -> int:
    pred = dataio.read_labels(args.pred)
    gt = _read_gt(args.gt)
    iou_t = args.iou if args.iou is not None else config.eval_iou
    if args.span == "labeled":
        gt = restrict_to_labeled_span(gt, pred)
    try:
        report = eval_ap(pred, gt, iou_t)
    except ValueError as exc:
        raise SchemaError(f"eval: {exc}") from exc
    report.config = config.to_flat()
    keyframes = {(r.sequence_id, r.frame_id) for r in pred if r.detection.source is Source.GroundTruth}
    cov = label_coverage(pred, gt, keyframes, iou_t)
    doc = report.to_dict()
    doc["seed"] = config.seed
    doc["span"] = args.span
    doc["coverage"] = {"gt_unlabeled_frames": cov.n_gt, "covered": cov.covered,
                       "recall": cov.recall, "class_accuracy": cov.class_accuracy}
    if args.out is not None:
        dataio.write_json(args.out, doc)
    _emit(args, doc)
    return 0


def cmd_analyze(args, config: PipelineConfig) -> int:
    xs, ys = dataio.read_pairs(args.pairs)
    try:
        fit = paired_series_fit(xs, ys)
    except ValueError as exc:
        raise SchemaError(f"analyze: {exc}") from exc
    doc = {"slope": fit.slope, "intercept": fit.intercept, "r": fit.r, "n": fit.n}
    if args.out is not None:
        dataio.write_json(args.out, doc)
        dataio.write_json(dataio.meta_path(args.out), _meta("analyze", config, input=str(args.pairs)))
    _emit(args, doc)
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "label": cmd_label,
    "sample": cmd_sample,
    "efficiency": cmd_efficiency,
    "eval": cmd_eval,
    "analyze": cmd_analyze,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat JSON object of dotted config keys")
    common.add_argument("--seed", type=int, help="global seed (overrides the config)")
    common.add_argument("--out", help="output path")
    common.add_argument("--quiet", action="store_true")

    p = _Parser(prog="nearfar", description="Near-to-far track-back auto-labeling and loss-weighted sampling.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("simulate", parents=[common], help="generate synthetic scenes (GT + sparse GT)")

    lab = sub.add_parser("label", parents=[common], help="track back from keyframes and emit labels")
    lab.add_argument("--gt", help="directory written by 'simulate'")
    lab.add_argument("--kitti", help="directory of KITTI label files (keyframes)")

    smp = sub.add_parser("sample", parents=[common], help="importance-sample labeled images")
    smp.add_argument("--in", dest="input", required=True)
    g = smp.add_mutually_exclusive_group(required=True)
    g.add_argument("--fraction", type=float)
    g.add_argument("--m", type=int, help="expected number of images")
    smp.add_argument("--drop-gt", action="store_true", help="do not pass ground-truth records through")

    eff = sub.add_parser("efficiency", parents=[common], help="relative-variance curve as CSV")
    eff.add_argument("--in", dest="input", required=True)
    eff.add_argument("--grid", default="0.05:1.0:0.05", help="start:stop:step or comma list")

    ev = sub.add_parser("eval", parents=[common], help="per-class AP / mAP against GT")
    ev.add_argument("--pred", required=True)
    ev.add_argument("--gt", required=True, help="GT JSONL file or simulate directory")
    ev.add_argument("--iou", type=float)
    ev.add_argument("--span", choices=("labeled", "all"), default="labeled",
                    help="'labeled' drops GT after each sequence's last keyframe")

    an = sub.add_parser("analyze", parents=[common], help="OLS fit + correlation of a paired series")
    an.add_argument("--pairs", required=True, help="two-column CSV")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config, args.seed)
        return COMMANDS[args.command](args, config)
    except NearFarError as exc:
        print(f"nearfar {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
