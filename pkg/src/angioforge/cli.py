"""Command-line front end.

Commands: generate, degrade, split, ensemble, evaluate-seg, evaluate-grade,
dump-forest. Set ANGIOFORGE_LOG=DEBUG|INFO|WARNING|ERROR for verbosity.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .dataset import generate_dataset, sample_seed
from .degrade import apply_pipeline
from .ensemble import decode_ordinal, ensemble_reg, ensemble_seg, stratified_kfold
from .errors import AngioforgeError, ConfigError, MissingFile, UndefinedMetric
from .growth import forest_to_text, simulate
from .layout import build_layout
from .metrics import auc_ovr_per_class, confusion_matrix, seg_report, qwk as qwk_score
from .pgm import read_mask, read_pgm, write_pgm
from .raster import CleanImage, GroundTruthMask, ImageSample
from . import report as report_figs

logger = logging.getLogger(__name__)

SEG_CLASSES = ("irma", "na", "nv")


def _load_run_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    cfg.validate()
    return cfg


def cmd_generate(args) -> int:
    cfg = _load_run_config(args)
    rows = generate_dataset(cfg, args.out, jobs=args.jobs)
    print(f"wrote {len(rows)} samples to {args.out}")
    return 0


def cmd_degrade(args) -> int:
    cfg = _load_run_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    in_dir = Path(args.input_dir)
    pairs = sorted(in_dir.glob("img_*.pgm"))
    if not pairs:
        raise MissingFile(f"no img_*.pgm files in {in_dir}")
    log_rows = []
    for index, img_path in enumerate(pairs):
        lbl_path = in_dir / img_path.name.replace("img_", "lbl_")
        if not lbl_path.exists():
            raise MissingFile(f"missing mask for sample {img_path.stem}")
        pixels, _ = read_pgm(img_path)
        sample = ImageSample(
            image=CleanImage(pixels, cfg.mm_per_pixel),
            mask=GroundTruthMask(read_mask(lbl_path), cfg.mm_per_pixel),
        )
        degraded = apply_pipeline(sample, cfg.degrade, sample_seed(cfg.seed, index, 1))
        maxval = 255 if cfg.image.bits == 8 else 65535
        write_pgm(out / img_path.name, degraded.image.pixels, maxval)
        write_pgm(out / lbl_path.name, degraded.mask.values.astype(float), maxval)
        log_rows.append((img_path.stem.replace("img_", ""), ";".join(degraded.metadata["transform_log"])))
    with open(out / "degrade_log.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sample_id", "transform_log"])
        writer.writerows(log_rows)
    print(f"degraded {len(log_rows)} samples into {out}")
    return 0


def _read_label_csv(path) -> tuple[list[str], np.ndarray, list[str]]:
    """Returns (sample ids, label-ish columns as int array, column names)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "sample_id":
            raise ConfigError(f"{path}: first column must be 'sample_id'")
        ids, rows = [], []
        for rec in reader:
            if not rec:
                continue
            ids.append(rec[0])
            rows.append([int(float(x)) for x in rec[1:]])
    return ids, np.asarray(rows, dtype=np.int64), header[1:]


def cmd_split(args) -> int:
    ids, cols, names = _read_label_csv(args.labels_csv)
    if cols.shape[1] == 1:
        labels = cols[:, 0]
        strat_name = names[0]
    else:
        # multi-label presence columns: stratify on the rarest class
        totals = cols.sum(axis=0)
        rarest = int(np.argmin(totals))
        labels = cols[:, rarest]
        strat_name = names[rarest]
        print(f"stratifying on rarest class '{strat_name}' ({totals[rarest]} positives)")
    seed = 0 if args.seed is None else args.seed
    folds = stratified_kfold(labels, args.k, seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    folds_path = out / "folds.csv"
    with open(folds_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sample_id", "fold"])
        for sid, fold in zip(ids, folds.assignment):
            writer.writerow([sid, int(fold)])
    hist: dict[int, dict] = {f: {} for f in range(args.k)}
    for label, fold in zip(labels, folds.assignment):
        hist[int(fold)][int(label)] = hist[int(fold)].get(int(label), 0) + 1
    for fold in range(args.k):
        per = " ".join(f"{cls}:{n}" for cls, n in sorted(hist[fold].items()))
        print(f"fold {fold}: {per}")
    report_figs.save_fold_figure(hist, out / "folds.png")
    print(f"wrote {folds_path} and folds.png")
    return 0


def _mask_path(directory: Path, stem: str, cls: str) -> Path:
    return directory / f"{stem}_{cls}.pgm"


def cmd_evaluate_seg(args) -> int:
    pred_dir = Path(args.pred_dir)
    gt_dir = Path(args.gt_dir)
    stems = sorted(
        {p.name[: -len(f"_{SEG_CLASSES[0]}.pgm")] for p in gt_dir.glob(f"*_{SEG_CLASSES[0]}.pgm")}
    )
    if not stems:
        raise MissingFile(f"no *_{SEG_CLASSES[0]}.pgm ground-truth masks in {gt_dir}")
    preds, gts = [], []
    for stem in stems:
        pred_ch, gt_ch = [], []
        for cls in SEG_CLASSES:
            gt_path = _mask_path(gt_dir, stem, cls)
            pred_path = _mask_path(pred_dir, stem, cls)
            if not gt_path.exists():
                raise MissingFile(f"sample {stem}: missing ground truth {gt_path.name}")
            if not pred_path.exists():
                raise MissingFile(f"sample {stem}: missing prediction {pred_path.name}")
            gt_ch.append(read_mask(gt_path))
            pred_ch.append(read_mask(pred_path))
        preds.append(np.stack(pred_ch))
        gts.append(np.stack(gt_ch))
    report = seg_report(preds, gts, SEG_CLASSES)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report_seg.csv").write_text(report.to_csv(), encoding="utf-8")
    report_figs.save_seg_figure(report, out / "report_seg.png")
    print(report.to_csv(), end="")
    print(f"mDSC {report.mdsc:.4f}  mIoU {report.miou:.4f}  ({len(stems)} samples)")
    return 0


def _read_score_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "sample_id":
            raise ConfigError(f"{path}: first column must be 'sample_id'")
        ids, rows = [], []
        for rec in reader:
            if not rec:
                continue
            ids.append(rec[0])
            rows.append([float(x) for x in rec[1:]])
    return ids, np.asarray(rows, dtype=float)


def cmd_evaluate_grade(args) -> int:
    k = args.classes
    pred_ids, scores = _read_score_csv(args.pred_csv)
    gt_ids, gt_cols = _read_label_csv(args.gt_csv)
    if scores.shape[1] != k:
        raise ConfigError(f"prediction CSV must have {k} score columns")
    gt_map = {sid: int(lbl[0]) for sid, lbl in zip(gt_ids, gt_cols)}
    missing = [sid for sid in pred_ids if sid not in gt_map]
    if missing or len(pred_ids) != len(gt_ids):
        raise MissingFile(f"unmatched sample ids between CSVs (first: {missing[:3]})")
    labels = np.array([gt_map[sid] for sid in pred_ids], dtype=np.int64)
    if np.any((labels < 0) | (labels >= k)):
        raise ConfigError(f"ground-truth labels must lie in [0, {k})")
    totals = scores.sum(axis=1)
    if np.any(totals <= 0):
        raise ConfigError("every prediction row needs a positive score mass")
    ordinal = scores @ np.arange(k) / totals
    decoded = decode_ordinal(ordinal, k)
    kappa = qwk_score(labels, decoded, k)
    per_class = auc_ovr_per_class(scores, labels, k)
    kept = [v for v in per_class if v is not None]
    if not kept:
        raise UndefinedMetric("no class has both positives and negatives")
    auc = float(np.mean(kept))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["metric,value", f"qwk,{kappa:.6f}", f"auc_macro,{auc:.6f}"]
    for c, v in enumerate(per_class):
        lines.append(f"auc_class_{c},{'' if v is None else f'{v:.6f}'}")
    lines.append(f"n,{len(labels)}")
    (out / "report_grade.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    cm = confusion_matrix(labels, decoded, k)
    report_figs.save_grade_figure(cm, per_class, kappa, auc, out / "report_grade.png")
    print(f"QWK {kappa:.4f}  AUC {auc:.4f}  ({len(labels)} samples)")
    return 0


def cmd_ensemble(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.mode == "seg":
        dirs = [Path(p) for p in args.inputs]
        names = sorted(p.name for p in dirs[0].glob("*.pgm"))
        if not names:
            raise MissingFile(f"no .pgm files in {dirs[0]}")
        for d in dirs[1:]:
            other = sorted(p.name for p in d.glob("*.pgm"))
            if other != names:
                raise MissingFile(f"input set {d} does not match {dirs[0]}")
        for name in names:
            probs = [read_pgm(d / name)[0] for d in dirs]
            mask = ensemble_seg(probs, t=args.threshold)
            write_pgm(out / name, mask.astype(float))
        print(f"ensembled {len(names)} masks from {len(dirs)} models into {out}")
    else:
        id_lists, score_arrays = [], []
        for path in args.inputs:
            ids, scores = _read_score_csv(path)
            id_lists.append(ids)
            score_arrays.append(scores)
        if any(ids != id_lists[0] for ids in id_lists[1:]):
            raise MissingFile("regression CSVs must list the same sample ids in order")
        combined = np.stack([ensemble_reg([s[:, c] for s in score_arrays])
                             for c in range(score_arrays[0].shape[1])], axis=1)
        with open(args.inputs[0], newline="", encoding="utf-8") as fh:
            header = next(csv.reader(fh))
        out_path = out / "ensemble.csv"
        with open(out_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for sid, row in zip(id_lists[0], combined):
                writer.writerow([sid] + [f"{v:.6f}" for v in row])
        print(f"wrote {out_path}")
    return 0


def cmd_dump_forest(args) -> int:
    cfg = _load_run_config(args)
    sim = replace(cfg.sim, seed=cfg.seed)
    layout = build_layout(sim)
    forests, _ = simulate(sim, layout)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for layer, forest in forests.items():
        path = out / f"forest_{layer.lower()}.txt"
        path.write_text(forest_to_text(forest), encoding="utf-8")
        print(f"{layer}: {len(forest)} nodes, {forest.leaf_count} terminals -> {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="angioforge",
        description="Synthetic wide-field angiography generator and evaluation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, config=True, seed=True, out=True):
        if config:
            p.add_argument("--config", help="path to a key = value config file")
        if seed:
            p.add_argument("--seed", type=int, default=None, help="master seed override")
        if out:
            p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("generate", help="generate a synthetic dataset")
    add_common(p)
    p.add_argument("--jobs", type=int, default=1, help="parallel sample workers")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("degrade", help="re-run the degradation stack on PGM pairs")
    p.add_argument("input_dir", help="directory with img_*.pgm / lbl_*.pgm pairs")
    add_common(p)
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("split", help="stratified k-fold split of a label CSV")
    p.add_argument("labels_csv")
    p.add_argument("--k", type=int, default=5)
    add_common(p, config=False)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("ensemble", help="combine model outputs")
    p.add_argument("inputs", nargs="+", help="mask directories (seg) or score CSVs (reg)")
    p.add_argument("--mode", choices=("seg", "reg"), required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    add_common(p, config=False, seed=False)
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("evaluate-seg", help="dice/IoU report for mask directories")
    p.add_argument("pred_dir")
    p.add_argument("gt_dir")
    add_common(p, config=False, seed=False)
    p.set_defaults(func=cmd_evaluate_seg)

    p = sub.add_parser("evaluate-grade", help="QWK/AUC report for score CSVs")
    p.add_argument("pred_csv")
    p.add_argument("gt_csv")
    p.add_argument("--classes", type=int, default=3)
    add_common(p, config=False, seed=False)
    p.set_defaults(func=cmd_evaluate_grade)

    p = sub.add_parser("dump-forest", help="write the simulated forests as text")
    add_common(p)
    p.set_defaults(func=cmd_dump_forest)

    return parser


def main(argv=None) -> int:
    level = os.environ.get("ANGIOFORGE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except AngioforgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
