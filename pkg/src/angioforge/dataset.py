"""Dataset generation: simulate, rasterize, degrade, and persist samples.

Every sample is a pure function of (run config, master seed, index), so runs
are resumable and byte-identical when repeated. Files are written through a
temp-and-rename so partially written samples never survive a crash.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import RunConfig, config_hash
from .degrade import apply_pipeline
from .errors import ConfigError
from .growth import simulate
from .layout import build_layout
from .pgm import encode_pgm
from .raster import CleanImage, GroundTruthMask, ImageSample, ImageSpec, draw_forest, ground_truth

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.csv"
RUN_INFO_NAME = "run.json"
MANIFEST_HEADER = ["sample_id", "seed", "vessel_fraction", "transform_log"]


@dataclass(frozen=True)
class ManifestRow:
    sample_id: str
    seed: int
    vessel_fraction: float
    transform_log: str


def sample_seed(master_seed: int, index: int, stream: int) -> int:
    """Stable 64-bit stream seed for (master, sample index, purpose)."""
    ss = np.random.SeedSequence([int(master_seed), int(index), int(stream)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def image_paths(out_dir: Path, index: int) -> tuple[Path, Path]:
    return out_dir / f"img_{index:05d}.pgm", out_dir / f"lbl_{index:05d}.pgm"


def build_sample(config: RunConfig, index: int) -> ImageSample:
    """Generate one degraded sample deterministically from the run config."""
    sim = replace(config.sim, seed=sample_seed(config.seed, index, 0))
    layout = build_layout(sim)
    forests, trace = simulate(sim, layout)
    spec = ImageSpec(
        width=config.image.width,
        height=config.image.height,
        mm_per_pixel=config.mm_per_pixel,
        bits=config.image.bits,
    )
    forest_list = list(forests.values())
    image = draw_forest(forest_list, spec)
    mask = ground_truth(forest_list, spec)
    large = None
    if config.degrade.flow.enabled:
        large = ground_truth(forest_list, spec, min_radius_mm=config.degrade.flow.radius_cutoff_mm)
    fov_px = _fov_pixel_count(layout, spec)
    sample = ImageSample(
        image=image,
        mask=mask,
        large_mask=large,
        metadata={
            "seed": sim.seed,
            "config_hash": config_hash(config),
            "layer_stats": {
                layer: {"terminals": f.leaf_count, "nodes": len(f), "segments": f.n_segments}
                for layer, f in forests.items()
            },
            "vessel_fraction": float(mask.values.sum() / fov_px),
        },
    )
    return apply_pipeline(sample, config.degrade, sample_seed(config.seed, index, 1))


def _fov_pixel_count(layout, spec: ImageSpec) -> int:
    xs = (np.arange(spec.width) + 0.5) * spec.mm_per_pixel
    ys = (np.arange(spec.height) + 0.5) * spec.mm_per_pixel
    X, Y = np.meshgrid(xs, ys)
    inside = layout.contains(np.column_stack([X.ravel(), Y.ravel()]))
    return max(int(inside.sum()), 1)


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _generate_one(config: RunConfig, out_dir: str, index: int) -> ManifestRow:
    sample = build_sample(config, index)
    maxval = 255 if config.image.bits == 8 else 65535
    img_path, lbl_path = image_paths(Path(out_dir), index)
    _atomic_write(img_path, encode_pgm(sample.image.pixels, maxval))
    _atomic_write(lbl_path, encode_pgm(sample.mask.values.astype(float), maxval))
    return ManifestRow(
        sample_id=f"{index:05d}",
        seed=sample.metadata["seed"],
        vessel_fraction=sample.metadata["vessel_fraction"],
        transform_log=";".join(sample.metadata["transform_log"]),
    )


def _read_manifest(path: Path) -> dict[str, ManifestRow]:
    rows: dict[str, ManifestRow] = {}
    if not path.exists():
        return rows
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            rows[rec["sample_id"]] = ManifestRow(
                sample_id=rec["sample_id"],
                seed=int(rec["seed"]),
                vessel_fraction=float(rec["vessel_fraction"]),
                transform_log=rec["transform_log"],
            )
    return rows


def _write_manifest(path: Path, rows: dict[str, ManifestRow]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MANIFEST_HEADER)
    for sid in sorted(rows):
        r = rows[sid]
        writer.writerow([r.sample_id, r.seed, f"{r.vessel_fraction:.6f}", r.transform_log])
    _atomic_write(path, buf.getvalue().encode("utf-8"))


def generate_dataset(config: RunConfig, out_dir, jobs: int = 1) -> list[ManifestRow]:
    """Write img_XXXXX.pgm / lbl_XXXXX.pgm pairs plus a manifest.

    Re-running skips samples that are already complete (files present and a
    manifest row recorded) and refuses to mix configs in one directory.
    """
    config.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    digest = config_hash(config)
    info_path = out / RUN_INFO_NAME
    if info_path.exists():
        info = json.loads(info_path.read_text())
        if info.get("config_hash") != digest:
            raise ConfigError(
                f"output dir {out} was generated with a different config "
                f"({info.get('config_hash')} != {digest})"
            )
    else:
        info_path.write_text(
            json.dumps({"config_hash": digest, "seed": config.seed, "samples": config.samples})
        )

    manifest_path = out / MANIFEST_NAME
    rows = _read_manifest(manifest_path)
    pending = []
    for i in range(config.samples):
        sid = f"{i:05d}"
        img_path, lbl_path = image_paths(out, i)
        complete = (
            sid in rows
            and img_path.exists()
            and lbl_path.exists()
            and img_path.stat().st_size > 0
            and lbl_path.stat().st_size > 0
        )
        if not complete:
            pending.append(i)
    logger.info("generating %d/%d samples into %s", len(pending), config.samples, out)

    if jobs > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for row in pool.map(_generate_one, [config] * len(pending), [str(out)] * len(pending), pending):
                rows[row.sample_id] = row
    else:
        for i in pending:
            row = _generate_one(config, str(out), i)
            rows[row.sample_id] = row
            logger.debug("sample %05d done (vessel fraction %.3f)", i, row.vessel_fraction)
    _write_manifest(manifest_path, rows)
    return [rows[sid] for sid in sorted(rows)]
