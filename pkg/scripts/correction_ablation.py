"""Class accuracy of track-back labels with and without near-to-far relabeling.

    python scripts/correction_ablation.py --seeds 0 1 2 3 4
"""

import argparse

from nearfar import dataio, pipeline
from nearfar.config import PipelineConfig
from nearfar.detect import Source
from nearfar.evaluate import label_coverage, restrict_to_labeled_span


def accuracy(seed: int, near_to_far: bool, beta: float):
    config = PipelineConfig.from_flat({"seed": seed, "labeler.near_to_far": near_to_far, "detect.beta": beta})
    seqs = pipeline.simulate(config)
    records = pipeline.label_jobs(pipeline.jobs_from_simulation(seqs, config), config)
    gt = restrict_to_labeled_span([r for s in seqs for r in dataio.gt_records(s.seq, s.frames)], records)
    keys = {(r.sequence_id, r.frame_id) for r in records if r.detection.source is Source.GroundTruth}
    return label_coverage(records, gt, keys, config.eval_iou)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seeds", type=int, nargs="+", default=[42, 0, 1, 2, 3])
    ap.add_argument("--beta", type=float, default=0.5)
    args = ap.parse_args()
    print(f"{'seed':>5} {'recall':>7} {'acc (on)':>9} {'acc (off)':>10}")
    for seed in args.seeds:
        on, off = accuracy(seed, True, args.beta), accuracy(seed, False, args.beta)
        print(f"{seed:5d} {on.recall:7.4f} {on.class_accuracy:9.4f} {off.class_accuracy:10.4f}")


if __name__ == "__main__":
    main()
