"""Batch command-line front end.

Subcommands bind the library into a dataset-level workflow:

* eval        per-case Dice / FP / FN volumes + dataset means -> report JSON
* sweep       min-size threshold sweep -> CSV
* postproc    small-component removal on a single mask
* preprocess  resample + clip + Z-score PET/CT case directories
* stats       per-component CSV and size histogram for one mask
* phantom     synthetic PET/CT/gt case generation
* sample      foreground-oversampled patch extraction -> NIfTI + manifest

Case layout: a root directory holding one subdirectory per case, named by
case_id, with fixed file names inside (pred/gt for eval and sweep, pet/ct
for preprocess). Both .nii.gz and .nii are accepted.

Logs go to stderr; data goes only to the requested output files. All
randomness enters through explicit --seed flags. Exit codes: 0 success,
1 I/O or file-format error, 2 usage or case-layout error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import multiprocessing
import os
import sys
from pathlib import Path

from .ccl import DEFAULT_CONNECTIVITY, component_stats, label_components, size_histogram
from .core import Grid3, Mask, Volume, voxel_volume_ml
from .metrics import (
    aggregate,
    evaluate_case,
    format_case_line,
    format_report_summary,
    report_to_json,
)
from .nifti_io import NiftiFormatError, read_mask, read_volume, write_mask, write_volume
from .phantom import PhantomSpec, generate_phantom
from .postproc import SweepRow, filter_min_size, sweep_to_csv
from .preproc import DatasetIntensityStats, compute_dataset_stats, preprocess_case
from .sampler import sample_batch

log = logging.getLogger("lesionkit")


class LayoutError(Exception):
    """The case directory layout is invalid (missing/unpaired files)."""


# ---------------------------------------------------------------------------
# shared helpers


def _parse_triple(text: str, cast, flag: str) -> tuple:
    parts = text.split(",")
    if len(parts) == 1:
        parts = parts * 3
    if len(parts) != 3:
        raise ValueError(f"{flag} expects 1 or 3 comma-separated values, got {text!r}")
    return tuple(cast(p) for p in parts)


def _parse_list(text: str, cast, flag: str) -> list:
    try:
        return [cast(p) for p in text.split(",") if p != ""]
    except ValueError:
        raise ValueError(f"{flag} expects comma-separated values, got {text!r}") from None


def discover_cases(root: Path, filename: str) -> dict[str, Path]:
    """Map case_id -> <root>/<case_id>/<filename>.{nii.gz,nii}.

    Case subdirectories lacking the file are skipped; pairing completeness is
    the caller's concern.
    """
    if not root.is_dir():
        raise LayoutError(f"{root}: not a directory")
    found: dict[str, Path] = {}
    for entry in sorted(root.iterdir()):
        if not entry.is_dir():
            continue
        for suffix in (".nii.gz", ".nii"):
            candidate = entry / (filename + suffix)
            if candidate.is_file():
                found[entry.name] = candidate
                break
    return found


def _paired_cases(
    a_root: str, a_name: str, b_root: str, b_name: str
) -> tuple[list[str], dict[str, Path], dict[str, Path]]:
    """Case ids present in both roots; errors list every unpaired case."""
    a = discover_cases(Path(a_root), a_name)
    b = discover_cases(Path(b_root), b_name)
    if not a:
        raise LayoutError(f"no cases found under {a_root} (looked for <case_id>/{a_name}.nii.gz)")
    if not b:
        raise LayoutError(f"no cases found under {b_root} (looked for <case_id>/{b_name}.nii.gz)")
    unpaired = sorted(set(a) ^ set(b))
    if unpaired:
        raise LayoutError(
            f"unpaired cases (need both {a_name} and {b_name}): " + ", ".join(unpaired)
        )
    return sorted(a), a, b


def _run_pool(func, tasks: list, jobs: int) -> list:
    """Map func over tasks, preserving task order in the result list."""
    jobs = min(max(1, jobs), len(tasks)) if tasks else 1
    if jobs == 1:
        return [func(t) for t in tasks]
    with multiprocessing.Pool(processes=jobs) as pool:
        return pool.map(func, tasks)


def _write_text(path, text: str) -> None:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="\n") as f:
        f.write(text)


def _default_jobs() -> int:
    return os.cpu_count() or 1


# ---------------------------------------------------------------------------
# eval


def _eval_worker(task) -> object:
    case_id, pred_path, gt_path, connectivity, min_size = task
    pred = read_mask(pred_path)
    gt = read_mask(gt_path)
    if min_size > 0:
        pred = filter_min_size(pred, min_size, connectivity)
    return evaluate_case(case_id, pred, gt, connectivity)


def cmd_eval(args) -> int:
    ids, preds, gts = _paired_cases(args.pred, "pred", args.gt, "gt")
    tasks = [
        (cid, str(preds[cid]), str(gts[cid]), args.connectivity, args.min_size) for cid in ids
    ]
    results = _run_pool(_eval_worker, tasks, args.jobs)
    report = aggregate(results)
    for case in report.cases:
        log.info(format_case_line(case))
    log.info(format_report_summary(report))
    _write_text(args.out, report_to_json(report, args.connectivity, args.min_size))
    log.info("report written to %s", args.out)
    return 0


# ---------------------------------------------------------------------------
# sweep


def _sweep_worker(task):
    case_id, pred_path, gt_path, connectivity, threshold = task
    pred = read_mask(pred_path)
    gt = read_mask(gt_path)
    filtered = filter_min_size(pred, threshold, connectivity)
    return threshold, evaluate_case(case_id, filtered, gt, connectivity)


def cmd_sweep(args) -> int:
    ids, preds, gts = _paired_cases(args.pred, "pred", args.gt, "gt")
    thresholds = _parse_list(args.thresholds, int, "--thresholds")
    if not thresholds:
        raise ValueError("--thresholds must name at least one threshold")
    if any(t < 0 for t in thresholds):
        raise ValueError(f"thresholds must be non-negative, got {thresholds}")
    if len(set(thresholds)) != len(thresholds):
        raise ValueError(f"thresholds must be distinct, got {thresholds}")

    thresholds = sorted(thresholds)
    tasks = [
        (cid, str(preds[cid]), str(gts[cid]), args.connectivity, t)
        for t in thresholds
        for cid in ids
    ]
    results = _run_pool(_sweep_worker, tasks, args.jobs)

    rows = []
    for t in thresholds:
        report = aggregate([case for tt, case in results if tt == t])
        rows.append(
            SweepRow(
                threshold_voxels=t,
                dice=report.mean_dice,
                fp_volume_ml=report.mean_fp_volume_ml,
                fn_volume_ml=report.mean_fn_volume_ml,
            )
        )
        log.info(
            "threshold %d: dice %s fp %.3f mL fn %.3f mL",
            t,
            "n/a" if report.mean_dice is None else f"{report.mean_dice:.4f}",
            report.mean_fp_volume_ml,
            report.mean_fn_volume_ml,
        )
    _write_text(args.out, sweep_to_csv(rows))
    log.info("sweep written to %s", args.out)
    return 0


# ---------------------------------------------------------------------------
# postproc


def cmd_postproc(args) -> int:
    if args.min_size_ml is not None and args.min_size:
        raise ValueError("pass either --min-size or --min-size-ml, not both")
    mask = read_mask(args.input)
    min_size = args.min_size
    if args.min_size_ml is not None:
        min_size = math.ceil(args.min_size_ml / voxel_volume_ml(mask.grid))
        log.info("--min-size-ml %g mL -> %d voxels", args.min_size_ml, min_size)
    filtered = filter_min_size(mask, min_size, args.connectivity)
    write_mask(filtered, args.out)
    log.info(
        "%s: kept %d of %d foreground voxels (min size %d voxels); wrote %s",
        args.input,
        filtered.foreground_count,
        mask.foreground_count,
        min_size,
        args.out,
    )
    return 0


# ---------------------------------------------------------------------------
# preprocess


def _preprocess_worker(task) -> str:
    case_id, pet_path, ct_path, stats, out_root = task
    pet = read_volume(pet_path)
    ct = read_volume(ct_path)
    result = preprocess_case(pet, ct, stats)
    case_dir = Path(out_root) / case_id
    case_dir.mkdir(parents=True, exist_ok=True)
    write_volume(result.pet_norm, case_dir / "pet_norm.nii.gz")
    write_volume(result.ct_norm, case_dir / "ct_norm.nii.gz")
    return case_id


def cmd_preprocess(args) -> int:
    ids, pets, cts = _paired_cases(args.cases, "pet", args.cases, "ct")

    if args.compute_stats:
        stats = compute_dataset_stats([str(cts[cid]) for cid in ids], modality="CT")
        _write_text(args.stats, stats.to_json())
        log.info(
            "dataset stats over %d volumes: clip [%g, %g], mean %g, std %g -> %s",
            len(ids),
            stats.clip_lo,
            stats.clip_hi,
            stats.mean,
            stats.std,
            args.stats,
        )
    else:
        stats_path = Path(args.stats)
        if not stats_path.is_file():
            raise LayoutError(
                f"stats file {args.stats} not found; run with --compute-stats to generate it"
            )
        stats = DatasetIntensityStats.from_json(stats_path.read_text())

    tasks = [(cid, str(pets[cid]), str(cts[cid]), stats, args.out) for cid in ids]
    for cid in _run_pool(_preprocess_worker, tasks, args.jobs):
        log.info("%s: wrote pet_norm.nii.gz + ct_norm.nii.gz", cid)
    return 0


# ---------------------------------------------------------------------------
# stats


def _components_csv(stats) -> str:
    lines = ["id,voxels,volume_ml,cx,cy,cz"]
    for s in stats:
        cx, cy, cz = s.centroid_mm
        lines.append(f"{s.id},{s.voxels},{s.volume_ml!r},{cx!r},{cy!r},{cz!r}")
    return "\n".join(lines) + "\n"


def _histogram_csv(bins) -> str:
    lines = ["bin_lo,bin_hi,count"]
    for b in bins:
        lines.append(f"{b.lo!r},{b.hi!r},{b.count}")
    return "\n".join(lines) + "\n"


def cmd_stats(args) -> int:
    mask = read_mask(args.mask)
    labeled = label_components(mask, args.connectivity)
    stats = component_stats(labeled)
    edges = _parse_list(args.bins, float, "--bins")
    bins = size_histogram(stats, edges)

    components_out = args.components_out
    if components_out is None:
        out = Path(args.out)
        components_out = str(out.with_name(out.stem + "_components" + out.suffix))
    _write_text(args.out, _histogram_csv(bins))
    _write_text(components_out, _components_csv(stats))
    log.info(
        "%s: %d components, %d foreground voxels; histogram -> %s, components -> %s",
        args.mask,
        labeled.count,
        mask.foreground_count,
        args.out,
        components_out,
    )
    return 0


# ---------------------------------------------------------------------------
# phantom


def cmd_phantom(args) -> int:
    dims = _parse_triple(args.size, int, "--size")
    spacing = _parse_triple(args.spacing, float, "--spacing")
    radius_range = tuple(_parse_list(args.radius_range, float, "--radius-range"))
    if len(radius_range) != 2:
        raise ValueError(f"--radius-range expects lo,hi - got {args.radius_range!r}")
    if args.cases < 1:
        raise ValueError(f"--cases must be >= 1, got {args.cases}")

    for index in range(args.cases):
        case_id = f"case_{index:04d}"
        spec = PhantomSpec(
            dims=dims,
            spacing=spacing,
            n_lesions=args.lesions,
            lesion_radius_range_mm=radius_range,
            pet_background_level=args.background,
            pet_lesion_uptake=args.uptake,
            noise_sigma=args.noise_sigma,
            seed=args.seed + index,
        )
        case = generate_phantom(spec)
        case_dir = Path(args.out) / case_id
        case_dir.mkdir(parents=True, exist_ok=True)
        write_volume(case.pet, case_dir / "pet.nii.gz")
        write_volume(case.ct, case_dir / "ct.nii.gz")
        write_mask(case.gt, case_dir / "gt.nii.gz")
        payload = {
            "case_id": case_id,
            "seed": spec.seed,
            "n_lesions": spec.n_lesions,
            "lesions": [
                {
                    "center_mm": list(r.center_mm),
                    "radius_mm": list(r.radius_mm),
                    "voxels": r.voxels,
                }
                for r in case.lesion_records
            ],
        }
        _write_text(case_dir / "lesions.json", json.dumps(payload, indent=2) + "\n")
        log.info(
            "%s: %d lesions, %d foreground voxels",
            case_id,
            len(case.lesion_records),
            case.gt.foreground_count,
        )
    return 0


# ---------------------------------------------------------------------------
# sample


def cmd_sample(args) -> int:
    images = [read_volume(p) for p in args.image]
    label = read_mask(args.label)
    patch_size = _parse_triple(args.patch_size, int, "--patch-size")
    batch = sample_batch(
        images if len(images) > 1 else images[0],
        label,
        patch_size,
        args.batch,
        args.oversample,
        args.seed,
    )

    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)
    spacing = label.grid.spacing
    manifest_patches = []
    for index, patch in enumerate(batch.patches):
        origin = tuple(
            label.grid.origin[a] + patch.corner[a] * spacing[a] for a in range(3)
        )
        patch_grid = Grid3(dims=patch_size, spacing=spacing, origin=origin)
        image_names = []
        for c, channel in enumerate(patch.channels):
            name = f"patch_{index:04d}_img{c}.nii.gz"
            write_volume(Volume(patch_grid, channel), out_root / name)
            image_names.append(name)
        label_name = f"patch_{index:04d}_lbl.nii.gz"
        write_mask(Mask(patch_grid, patch.label), out_root / label_name)
        manifest_patches.append(
            {
                "index": index,
                "corner": list(patch.corner),
                "contains_foreground": patch.contains_foreground,
                "images": image_names,
                "label": label_name,
            }
        )
        log.info(
            "patch %04d: corner %s foreground %s",
            index,
            list(patch.corner),
            patch.contains_foreground,
        )

    manifest = {
        "patch_size": list(patch_size),
        "batch_size": args.batch,
        "oversample_fraction": args.oversample,
        "seed": args.seed,
        "patches": manifest_patches,
    }
    _write_text(out_root / "manifest.json", json.dumps(manifest, indent=2) + "\n")
    log.info(
        "%d/%d patches contain foreground; manifest -> %s",
        batch.n_foreground,
        len(batch.patches),
        out_root / "manifest.json",
    )
    return 0


# ---------------------------------------------------------------------------
# parser / entry


def _add_common_eval_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--pred", required=True, help="root directory of <case_id>/pred.nii.gz")
    p.add_argument("--gt", required=True, help="root directory of <case_id>/gt.nii.gz")
    p.add_argument("--connectivity", type=int, default=DEFAULT_CONNECTIVITY, choices=(6, 18, 26))
    p.add_argument("--jobs", type=int, default=_default_jobs(), help="worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lesionkit",
        description="PET/CT lesion segmentation toolkit: evaluation, post-processing, preprocessing, sampling.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="per-case and dataset metrics -> report JSON")
    _add_common_eval_flags(p)
    p.add_argument("--out", required=True, help="output report JSON path")
    p.add_argument("--min-size", type=int, default=0, help="drop predicted components smaller than this many voxels")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="min-size threshold sweep -> CSV")
    _add_common_eval_flags(p)
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--thresholds", default="0,5,10,20,40,80", help="comma-separated voxel thresholds")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("postproc", help="remove small components from one mask")
    p.add_argument("--in", dest="input", required=True, help="input mask NIfTI")
    p.add_argument("--out", required=True, help="output mask NIfTI")
    p.add_argument("--min-size", type=int, default=0, help="minimum surviving component size in voxels")
    p.add_argument("--min-size-ml", type=float, default=None, help="minimum size in mL (rounded up to whole voxels)")
    p.add_argument("--connectivity", type=int, default=DEFAULT_CONNECTIVITY, choices=(6, 18, 26))
    p.set_defaults(func=cmd_postproc)

    p = sub.add_parser("preprocess", help="resample + clip + Z-score PET/CT cases")
    p.add_argument("--cases", required=True, help="root directory of <case_id>/{pet,ct}.nii.gz")
    p.add_argument("--stats", required=True, help="dataset intensity stats JSON (input, or output with --compute-stats)")
    p.add_argument("--out", required=True, help="output root directory")
    p.add_argument("--compute-stats", action="store_true", help="compute stats over the case CTs first")
    p.add_argument("--jobs", type=int, default=_default_jobs(), help="worker processes")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("stats", help="component stats and size histogram for one mask")
    p.add_argument("--mask", required=True, help="input mask NIfTI")
    p.add_argument("--out", required=True, help="output histogram CSV path")
    p.add_argument(
        "--components-out",
        default=None,
        help="output per-component CSV path (default: <out stem>_components.csv)",
    )
    p.add_argument(
        "--bins",
        default="1,10,100,1000,10000,100000,1000000",
        help="comma-separated histogram bin edges in voxels (half-open bins)",
    )
    p.add_argument("--connectivity", type=int, default=DEFAULT_CONNECTIVITY, choices=(6, 18, 26))
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("phantom", help="generate synthetic PET/CT/gt cases")
    p.add_argument("--out", required=True, help="output root directory")
    p.add_argument("--cases", type=int, default=1, help="number of cases (seeds seed, seed+1, ...)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lesions", type=int, default=3, help="lesions per case")
    p.add_argument("--size", default="64", help="grid dims, one value or x,y,z")
    p.add_argument("--spacing", default="2,2,2", help="voxel spacing in mm, one value or x,y,z")
    p.add_argument("--radius-range", default="3,6", help="lesion radius range in mm: lo,hi")
    p.add_argument("--background", type=float, default=1.0, help="PET background level")
    p.add_argument("--uptake", type=float, default=5.0, help="PET lesion uptake added to background")
    p.add_argument("--noise-sigma", type=float, default=0.05, help="PET Gaussian noise sigma")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("sample", help="draw a foreground-oversampled patch batch")
    p.add_argument("--image", action="append", required=True, help="image channel NIfTI (repeatable)")
    p.add_argument("--label", required=True, help="label mask NIfTI")
    p.add_argument("--out", required=True, help="output directory for patches + manifest.json")
    p.add_argument("--patch-size", default="128", help="patch dims, one value or x,y,z")
    p.add_argument("--batch", type=int, default=2, help="batch size")
    p.add_argument("--oversample", type=float, default=0.5, help="foreground-forced fraction of the batch")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_sample)

    return parser


def main(argv=None) -> int:
    if not logging.getLogger().handlers:
        logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        if isinstance(code, int):
            return code
        return 0 if code is None else 2
    try:
        return args.func(args)
    except LayoutError as exc:
        log.error("%s", exc)
        return 2
    except NiftiFormatError as exc:
        log.error("%s", exc)
        return 1
    except OSError as exc:
        log.error("%s", exc)
        return 1
    except ValueError as exc:
        log.error("%s", exc)
        return 2


def entrypoint() -> None:
    sys.exit(main())
