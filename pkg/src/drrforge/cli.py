"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 failure rate exceeded.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dataset_io import (
    PipelineConfig,
    generate_dataset,
    read_sample_record,
    render_sample,
    write_sample_record,
)
from .errors import DataFormatError, ForgeError, GenerationFailureRateError, InvalidArgumentError
from .metrics import EvalReport, dice, extract_landmark, landmark_error_mm
from .phantom import PhantomSpec, make_phantom_ct, phantom_alignments, write_alignment_file
from .projector import Image2D, KIND_MASK, KIND_PROBABILITY
from .sampler import SampleConfig
from .volume_io import read_ct, write_metaimage, write_volume

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_FAILURE_RATE = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; we reserve that
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _load_config(path: str | None) -> PipelineConfig:
    return PipelineConfig.from_json(path) if path else PipelineConfig()


def _cmd_phantom(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = PhantomSpec()
    vol = make_phantom_ct(spec)
    if args.format == "mhd":
        path = write_metaimage(vol, out / f"{args.name}.mhd")
    else:
        path = write_volume(vol, out / args.name)
    cfg = _load_config(args.config)
    write_alignment_file(
        phantom_alignments(spec, cfg.cdm.active_length_mm),
        out / f"{args.name}.alignment.json",
    )
    print(f"wrote phantom CT {path} and alignment sidecar")
    return EXIT_OK


def _cmd_generate(args) -> int:
    cfg = _load_config(args.config)
    manifest = generate_dataset(
        cfg,
        args.cts,
        args.out,
        master_seed=args.seed,
        samples_per_femur=args.samples_per_femur,
        workers=args.workers,
    )
    n = len(manifest.train_samples) + len(manifest.val_samples) + len(manifest.test_samples)
    print(
        f"dataset at {args.out}: {n} samples "
        f"({len(manifest.train_samples)} train / {len(manifest.val_samples)} val / "
        f"{len(manifest.test_samples)} test)"
    )
    return EXIT_OK


def _cmd_render_one(args) -> int:
    cfg = _load_config(args.config)
    try:
        theta = json.loads(Path(args.theta_json).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise DataFormatError(f"cannot parse {args.theta_json}: {e}") from e
    scfg = SampleConfig.from_dict(theta)
    ct_path = Path(args.ct)
    ct = read_ct(ct_path)
    from .dataset_io import _load_alignment

    alignment = _load_alignment(ct_path, scfg.femur_side)
    record = render_sample(ct, alignment, cfg, scfg)
    write_sample_record(record, args.out, cfg)
    print(f"wrote sample {scfg.sample_id} to {args.out}")
    return EXIT_OK


def _iter_gt_dirs(gt_root: Path):
    for meta in sorted(gt_root.rglob("meta.json")):
        yield meta.parent


def _cmd_metrics(args) -> int:
    gt_root = Path(args.gt)
    pred_root = Path(args.pred)
    if not gt_root.exists():
        raise DataFormatError(f"ground-truth directory {gt_root} does not exist")
    if not pred_root.exists():
        raise DataFormatError(f"prediction directory {pred_root} does not exist")

    report = EvalReport()
    rows = []
    for gt_dir in _iter_gt_dirs(gt_root):
        record = read_sample_record(gt_dir)
        sid = record.config.sample_id
        pred_dir = pred_root / gt_dir.relative_to(gt_root)
        if not pred_dir.exists():
            pred_dir = pred_root / gt_dir.name
        if not pred_dir.exists():
            logging.warning("no prediction for %s; skipped", sid)
            continue

        shape = record.mask.values.shape
        pred_mask = _read_pred_mask(pred_dir, shape)
        d = dice(pred_mask, record.mask.values)
        errors = []
        for i, gt_pt in enumerate(record.landmarks_px):
            bpath = pred_dir / f"belief_{i}.f32raw"
            if not bpath.exists():
                continue
            belief = np.fromfile(bpath, dtype="<f4").reshape(shape)
            pt = extract_landmark(Image2D(belief.astype(np.float64), 1.0, KIND_PROBABILITY))
            errors.append(landmark_error_mm(pt, gt_pt, record.image.pixel_size_mm))
        report.sample_ids.append(sid)
        report.dice_scores.append(d)
        report.landmark_errors_mm.extend(errors)
        rows.append([sid, d] + errors)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    if args.csv:
        with open(args.csv, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["sample_id", "dice", "landmark_0_mm", "landmark_1_mm"])
            w.writerows(rows)
    print(
        f"evaluated {len(report.dice_scores)} samples: "
        f"dice {report.dice_mean:.4f} +/- {report.dice_std:.4f}, "
        f"landmark {report.landmark_mean_mm:.3f} +/- {report.landmark_std_mm:.3f} mm"
    )
    return EXIT_OK


def _read_pred_mask(pred_dir: Path, shape) -> np.ndarray:
    u8 = pred_dir / "mask.u8raw"
    f32 = pred_dir / "mask.f32raw"
    if u8.exists():
        return np.fromfile(u8, dtype=np.uint8).reshape(shape)
    if f32.exists():
        return np.fromfile(f32, dtype="<f4").reshape(shape)
    raise DataFormatError(f"{pred_dir}: no mask.u8raw or mask.f32raw")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="forge", description=__doc__)
    p.add_argument("--version", action="version", version=f"forge {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("phantom", help="write a synthetic lower-limb CT phantom")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--name", default="phantom", help="base name for the volume files")
    sp.add_argument("--format", choices=("native", "mhd"), default="native")
    sp.add_argument("--config", default=None, help="pipeline config JSON")
    sp.set_defaults(func=_cmd_phantom)

    sp = sub.add_parser("generate", help="generate a full dataset")
    sp.add_argument("--config", default=None, help="pipeline config JSON")
    sp.add_argument("--cts", nargs="+", required=True, help="CT volumes (.mhd/.mha/.json)")
    sp.add_argument("--seed", type=int, default=0, help="master seed")
    sp.add_argument("--out", required=True, help="dataset output directory")
    sp.add_argument("--workers", type=int, default=None, help="parallel workers")
    sp.add_argument("--samples-per-femur", type=int, default=1000)
    sp.set_defaults(func=_cmd_generate)

    sp = sub.add_parser("render-one", help="render a single explicit configuration")
    sp.add_argument("--config", default=None, help="pipeline config JSON")
    sp.add_argument("--ct", required=True, help="CT volume path")
    sp.add_argument("--theta-json", required=True, help="full parameter draw as JSON")
    sp.add_argument("--out", required=True, help="output sample directory")
    sp.set_defaults(func=_cmd_render_one)

    sp = sub.add_parser("metrics", help="score predictions against ground truth")
    sp.add_argument("--pred", required=True, help="prediction directory")
    sp.add_argument("--gt", required=True, help="ground-truth dataset directory")
    sp.add_argument("--out", default="eval_report.json", help="report JSON path")
    sp.add_argument("--csv", default=None, help="optional per-sample CSV path")
    sp.set_defaults(func=_cmd_metrics)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except GenerationFailureRateError as e:
        print(f"forge: {e}", file=sys.stderr)
        return EXIT_FAILURE_RATE
    except (DataFormatError, InvalidArgumentError, FileNotFoundError) as e:
        print(f"forge: {e}", file=sys.stderr)
        return EXIT_DATA
    except ForgeError as e:
        print(f"forge: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
