"""Scanner-artifact simulation and training-time augmentation.

Every transform maps [0, 1] intensities back into [0, 1] and is driven by an
explicit numpy Generator, so a pipeline run is a pure function of
(sample, config, seed). The pipeline order is fixed: capillary background,
flow ghost, bias fields, motion bands, then geometric/photometric/erasing.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import binary_opening, gaussian_filter, map_coordinates

from .config import DegradeConfig, PhotometricAugment, RandomErasing, SpatialAugment
from .errors import ConfigError, GridMismatch
from .raster import CleanImage, GroundTruthMask, ImageSample


def _new_image(img: CleanImage, pixels: np.ndarray) -> CleanImage:
    return CleanImage(np.clip(pixels, 0.0, 1.0), img.mm_per_pixel)


def capillary_background(
    img: CleanImage, p: float, sigma: float, gain: float, rng: np.random.Generator
) -> CleanImage:
    """Add gain * GaussianBlur(Bernoulli(p) field, sigma), then clamp."""
    if not 0.0 <= p <= 1.0:
        raise ConfigError("background p must be in [0, 1]")
    if sigma <= 0:
        raise ConfigError("background sigma must be > 0")
    if p == 0.0 or gain == 0.0:
        return _new_image(img, img.pixels.copy())
    noise = (rng.random(img.pixels.shape) < p).astype(float)
    return _new_image(img, img.pixels + gain * gaussian_filter(noise, sigma))


def bias_field(
    img: CleanImage,
    count: int,
    radius_range: tuple[float, float],
    strength_range: tuple[float, float],
    rng: np.random.Generator,
) -> CleanImage:
    """Multiply by prod(1 - s_i * exp(-|x - c_i|^2 / 2 rho_i^2)); the spot
    centres are uniform over the whole frame, not just its rim."""
    if count < 0:
        raise ConfigError("bias count must be >= 0")
    out = img.pixels.copy()
    if count == 0:
        return _new_image(img, out)
    rows, cols = out.shape
    Y, X = np.mgrid[0:rows, 0:cols].astype(float)
    for _ in range(count):
        cyx = rng.random(2) * (rows, cols)
        rho = rng.uniform(*radius_range)
        s = rng.uniform(*strength_range)
        d2 = (X - cyx[1]) ** 2 + (Y - cyx[0]) ** 2
        out *= 1.0 - s * np.exp(-d2 / (2.0 * rho * rho))
    return _new_image(img, out)


def motion_artifact(
    img: CleanImage,
    bands: int,
    max_shift: int,
    brightness_range: tuple[float, float],
    rng: np.random.Generator,
) -> CleanImage:
    """Shift random 1-4 px row bands horizontally (edges replicated) and
    rescale their brightness."""
    if bands < 0:
        raise ConfigError("motion bands must be >= 0")
    out = img.pixels.copy()
    rows, cols = out.shape
    for _ in range(bands):
        r0 = int(rng.integers(0, rows))
        height = int(rng.integers(1, 5))
        r1 = min(r0 + height, rows)
        shift = int(rng.integers(-max_shift, max_shift + 1))
        factor = rng.uniform(*brightness_range)
        band = out[r0:r1]
        if shift > 0:
            shifted = np.pad(band, ((0, 0), (shift, 0)), mode="edge")[:, :cols]
        elif shift < 0:
            shifted = np.pad(band, ((0, 0), (0, -shift)), mode="edge")[:, -cols:]
        else:
            shifted = band
        out[r0:r1] = shifted * factor
    return _new_image(img, out)


def flow_projection(
    img: CleanImage,
    large_vessel_mask: GroundTruthMask,
    offset: tuple[int, int],
    attenuation: float,
    sigma: float,
    rng: np.random.Generator,
) -> CleanImage:
    """Add attenuation * GaussianBlur(shifted wide-vessel mask, sigma)."""
    if large_vessel_mask.values.shape != img.pixels.shape:
        raise GridMismatch("flow projection mask must match the image shape")
    if attenuation == 0.0 or not np.any(large_vessel_mask.values):
        return _new_image(img, img.pixels.copy())
    ghost = _shift_zero(large_vessel_mask.values.astype(float), offset)
    ghost = gaussian_filter(ghost, sigma) * attenuation
    return _new_image(img, img.pixels + ghost)


def _shift_zero(a: np.ndarray, offset: tuple[int, int]) -> np.ndarray:
    dy, dx = int(offset[0]), int(offset[1])
    out = np.zeros_like(a)
    rows, cols = a.shape
    ys = slice(max(dy, 0), rows + min(dy, 0))
    xs = slice(max(dx, 0), cols + min(dx, 0))
    ysrc = slice(max(-dy, 0), rows + min(-dy, 0))
    xsrc = slice(max(-dx, 0), cols + min(-dx, 0))
    out[ys, xs] = a[ysrc, xsrc]
    return out


def _spatial(img: np.ndarray, mask: np.ndarray, cfg: SpatialAugment, rng: np.random.Generator):
    """Same spatial transform for image (bilinear) and mask (nearest).

    Flips and 90-degree turns are exact lattice operations; only the jitter,
    scale, and elastic parts resample.
    """
    applied = []
    flip_h = rng.random() < cfg.flip_prob
    flip_v = rng.random() < cfg.flip_prob
    rotate = rng.random() < cfg.rotation_prob
    k = int(rng.integers(0, 4))
    jitter = float(rng.uniform(-cfg.rotation_jitter_deg, cfg.rotation_jitter_deg))
    free_angle = float(rng.uniform(0.0, 360.0))
    scale_on = rng.random() < cfg.scale_prob
    scale = float(rng.uniform(*cfg.scale_range))
    elastic_on = rng.random() < cfg.elastic_prob and cfg.elastic_alpha_px > 0

    if flip_h:
        img = img[:, ::-1]
        mask = mask[:, ::-1]
        applied.append("fliph")
    if flip_v:
        img = img[::-1, :]
        mask = mask[::-1, :]
        applied.append("flipv")
    angle = 0.0
    if rotate:
        if cfg.rotation_mode == "k90_jitter":
            if k:
                img = np.rot90(img, k)
                mask = np.rot90(mask, k)
            angle = jitter
            applied.append(f"rot(k={k} jitter={jitter:.2f})")
        else:
            angle = free_angle
            applied.append(f"rot(angle={angle:.2f})")
    if not scale_on:
        scale = 1.0
    else:
        applied.append(f"scale(s={scale:.4f})")

    if angle != 0.0 or scale != 1.0 or elastic_on:
        rows, cols = img.shape
        cy, cx = (rows - 1) / 2.0, (cols - 1) / 2.0
        Y, X = np.mgrid[0:rows, 0:cols].astype(float)
        xr = (X - cx) / scale
        yr = (Y - cy) / scale
        a = math.radians(angle)
        ca, sa = math.cos(a), math.sin(a)
        xs = ca * xr - sa * yr + cx
        ys = sa * xr + ca * yr + cy
        if elastic_on:
            dfield = []
            for _ in range(2):
                d = gaussian_filter(rng.uniform(-1.0, 1.0, size=img.shape), cfg.elastic_sigma_px)
                d *= cfg.elastic_alpha_px / (3.0 * d.std() + 1e-12)
                dfield.append(d)
            ys = ys + dfield[0]
            xs = xs + dfield[1]
            applied.append(f"elastic(alpha={cfg.elastic_alpha_px:g})")
        img = map_coordinates(img, [ys, xs], order=1, mode="constant", cval=0.0)
        mask = map_coordinates(mask, [ys, xs], order=0, mode="constant", cval=0)
    return np.ascontiguousarray(img), np.ascontiguousarray(mask), applied


def _photometric(img: np.ndarray, cfg: PhotometricAugment, rng: np.random.Generator):
    applied = []
    b = float(rng.uniform(*cfg.brightness))
    c = float(rng.uniform(*cfg.contrast))
    g = float(rng.uniform(*cfg.gamma))
    smooth_on = rng.random() < cfg.smooth_prob
    sigma = float(rng.uniform(*cfg.smooth_sigma_px))
    img = img + b
    mean = img.mean()
    img = (img - mean) * c + mean
    img = np.clip(img, 0.0, 1.0) ** g
    applied.append(f"photo(b={b:.3f} c={c:.3f} g={g:.3f})")
    if smooth_on and sigma > 0:
        img = gaussian_filter(img, sigma)
        applied.append(f"smooth(sigma={sigma:.2f})")
    return np.clip(img, 0.0, 1.0), applied


def _erase(img: np.ndarray, cfg: RandomErasing, rng: np.random.Generator):
    applied = []
    n = int(rng.integers(cfg.count[0], cfg.count[1] + 1))
    rows, cols = img.shape
    for _ in range(n):
        area = rng.uniform(*cfg.area) * rows * cols
        aspect = rng.uniform(*cfg.aspect)
        h = max(1, min(rows, int(round(math.sqrt(area * aspect)))))
        w = max(1, min(cols, int(round(area / h))))
        y0 = int(rng.integers(0, rows - h + 1))
        x0 = int(rng.integers(0, cols - w + 1))
        img[y0 : y0 + h, x0 : x0 + w] = 0.0
    if n:
        applied.append(f"erase(n={n})")
    return img, applied


def geometric_augment(
    img: CleanImage,
    mask: GroundTruthMask,
    config: DegradeConfig,
    rng: np.random.Generator,
) -> tuple[CleanImage, GroundTruthMask]:
    """Spatial chain on image+mask, then photometric and erasing on the image."""
    if img.pixels.shape != mask.values.shape:
        raise GridMismatch("image and mask must share a shape")
    pixels, values, _ = _geometric_stages(img.pixels, mask.values, config, rng)
    return _new_image(img, pixels), GroundTruthMask(values.astype(np.uint8), mask.mm_per_pixel)


def _geometric_stages(pixels, values, config: DegradeConfig, rng):
    log = []
    if config.spatial.enabled and rng.random() < config.spatial.probability:
        pixels, values, applied = _spatial(pixels, values, config.spatial, rng)
        log.extend(applied)
    if config.photometric.enabled and rng.random() < config.photometric.probability:
        pixels, applied = _photometric(pixels, config.photometric, rng)
        log.extend(applied)
    if config.erasing.enabled and rng.random() < config.erasing.probability:
        pixels = pixels.copy()
        pixels, applied = _erase(pixels, config.erasing, rng)
        log.extend(applied)
    return pixels, values, log


def large_vessel_mask_from(mask: GroundTruthMask, min_width_px: int) -> GroundTruthMask:
    """Approximate the wide-vessel subset of a mask by binary opening.

    Used when the exact per-radius mask is unavailable (external files).
    """
    if min_width_px <= 1:
        return GroundTruthMask(mask.values.copy(), mask.mm_per_pixel)
    r = max(1, min_width_px // 2)
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    footprint = (xx * xx + yy * yy) <= r * r
    opened = binary_opening(mask.values.astype(bool), structure=footprint)
    return GroundTruthMask(opened.astype(np.uint8), mask.mm_per_pixel)


def apply_pipeline(sample: ImageSample, config: DegradeConfig, seed: int) -> ImageSample:
    """Run the enabled transforms in the documented fixed order and record a
    transform log in the sample metadata. Deterministic in (config, seed)."""
    config.validate()
    rng = np.random.default_rng(seed)
    img = CleanImage(sample.image.pixels.copy(), sample.image.mm_per_pixel)
    mask = GroundTruthMask(sample.mask.values.copy(), sample.mask.mm_per_pixel)
    log: list[str] = []

    cfg = config.background
    if _gate(cfg, rng):
        img = capillary_background(img, cfg.p, cfg.sigma_px, cfg.gain, rng)
        log.append(f"background(p={cfg.p:g} sigma={cfg.sigma_px:g} gain={cfg.gain:g})")

    cfg = config.flow
    if _gate(cfg, rng):
        large = sample.large_mask
        if large is None:
            cutoff_px = int(round(2 * cfg.radius_cutoff_mm / img.mm_per_pixel))
            large = large_vessel_mask_from(mask, cutoff_px)
        img = flow_projection(img, large, cfg.offset_px, cfg.attenuation, cfg.sigma_px, rng)
        log.append(f"flow(offset={cfg.offset_px[0]};{cfg.offset_px[1]} att={cfg.attenuation:g})")

    cfg = config.bias
    if _gate(cfg, rng):
        n = int(rng.integers(cfg.count[0], cfg.count[1] + 1))
        img = bias_field(img, n, cfg.radius_px, cfg.strength, rng)
        log.append(f"bias(n={n})")

    cfg = config.motion
    if _gate(cfg, rng):
        n = int(rng.integers(cfg.bands[0], cfg.bands[1] + 1))
        img = motion_artifact(img, n, cfg.max_shift_px, cfg.brightness, rng)
        log.append(f"motion(bands={n} max_shift={cfg.max_shift_px})")

    pixels, values, geo_log = _geometric_stages(img.pixels, mask.values, config, rng)
    log.extend(geo_log)

    meta = dict(sample.metadata)
    meta["transform_log"] = log
    return ImageSample(
        image=_new_image(img, pixels),
        mask=GroundTruthMask(values.astype(np.uint8), mask.mm_per_pixel),
        large_mask=sample.large_mask,
        metadata=meta,
    )


def _gate(cfg, rng: np.random.Generator) -> bool:
    # the gate uniform is always consumed so toggling one stage does not
    # reshuffle the decisions of the others
    u = rng.random()
    return cfg.enabled and u < cfg.probability
