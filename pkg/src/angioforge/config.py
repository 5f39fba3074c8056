"""Configuration dataclasses, the flat ``key = value`` parser, and validation.

Per-layer growth parameters resolve in three steps: an explicit ``svc.*`` /
``dvc.*`` override wins, otherwise the DVC falls back to scaled copies of the
base values (denser, thinner vessels), otherwise the base value is used.
The DVC scale factors below are tuning guesses, not measured constants.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import types
import typing
from dataclasses import dataclass, field

from .errors import ConfigError

# DVC defaults relative to the base (SVC-like) parameters.
_DVC_STEP_SCALE = 0.65
_DVC_RADIUS_SCALE = 0.4
_DVC_OXYGEN_SCALE = 0.5
_DVC_TARGET_SCALE = 3.0

_SVC_DEPTH_MM = 0.06
_DVC_DEPTH_MM = 0.18

FOV_SHAPES = ("disc", "square-with-rounded-corners")
ROTATION_MODES = ("k90_jitter", "free")


@dataclass
class LayerOverrides:
    """Optional per-layer deviations from the base growth parameters."""

    step_length_mm: float | None = None
    terminal_radius_mm: float | None = None
    oxygen_radius_mm: float | None = None
    sense_distance_mm: float | None = None
    vegf_threshold: float | None = None
    deactivation_threshold: float | None = None
    branch_probability: float | None = None
    target_terminal_count: int | None = None
    trees: int | None = None
    depth_mm: float | None = None
    max_iterations: int | None = None


@dataclass(frozen=True)
class LayerParams:
    """Fully resolved growth parameters for one vascular layer."""

    layer: str
    step_length_mm: float
    terminal_radius_mm: float
    root_radius_mm: float
    oxygen_radius_mm: float
    sense_distance_mm: float
    vegf_threshold: float
    deactivation_threshold: float
    branch_probability: float
    bifurcation_angle_deg: float
    w_persistence: float
    w_gradient: float
    w_repulsion: float
    murray_exponent: float
    target_terminal_count: int
    trees: int
    depth_mm: float
    max_iterations: int


@dataclass
class SimConfig:
    """Geometry and growth-physics parameters for one simulated eye."""

    # field-of-view geometry
    fov_extent_mm: float = 12.0
    fov_shape: str = "disc"  # one of FOV_SHAPES
    fov_corner_radius_mm: float = 1.5  # only used by the rounded-square FOV
    faz_radius_mm: float = 0.35
    disc_radius_mm: float = 0.75
    disc_offset_fraction: float = 0.38  # nasal offset of the disc, in extents
    ramp_mm: float = 0.25  # linear edge ramp of the suppression masks

    # growth physics (base values; svc/dvc may override)
    grid_resolution: int = 192  # simulation grid cells per side
    step_length_mm: float = 0.09
    terminal_radius_mm: float = 0.02
    root_radius_mm: float = 0.05  # placeholder until radii are assigned
    murray_exponent: float = 3.0
    oxygen_radius_mm: float = 0.22  # Gaussian sigma of the perivascular supply
    sense_distance_mm: float | None = None  # default: 2 x oxygen radius
    vegf_threshold: float = 0.45  # minimum VEGF for a bifurcation
    deactivation_threshold: float = 0.08  # tips below this starve
    branch_probability: float = 0.14  # per step, once above threshold
    bifurcation_angle_deg: float = 75.0  # total opening angle, symmetric split
    w_persistence: float = 1.0
    w_gradient: float = 0.4
    w_repulsion: float = 0.3
    max_iterations: int = 220
    target_terminal_count: int = 250
    trees_per_layer: int = 12
    vessel_fraction_band: tuple[float, float] = (0.04, 0.30)
    seed: int = 0

    svc: LayerOverrides = field(default_factory=LayerOverrides)
    dvc: LayerOverrides = field(default_factory=LayerOverrides)

    def layer_params(self, layer: str) -> LayerParams:
        """Resolve the effective parameters for ``layer`` ("SVC" or "DVC")."""
        tag = layer.upper()
        if tag == "SVC":
            ov = self.svc
            scaled = {
                "step_length_mm": self.step_length_mm,
                "terminal_radius_mm": self.terminal_radius_mm,
                "oxygen_radius_mm": self.oxygen_radius_mm,
                "target_terminal_count": self.target_terminal_count,
                "depth_mm": _SVC_DEPTH_MM,
            }
        elif tag == "DVC":
            ov = self.dvc
            scaled = {
                "step_length_mm": self.step_length_mm * _DVC_STEP_SCALE,
                "terminal_radius_mm": self.terminal_radius_mm * _DVC_RADIUS_SCALE,
                "oxygen_radius_mm": self.oxygen_radius_mm * _DVC_OXYGEN_SCALE,
                "target_terminal_count": round(self.target_terminal_count * _DVC_TARGET_SCALE),
                "depth_mm": _DVC_DEPTH_MM,
            }
        else:
            raise ConfigError(f"unknown layer '{layer}' (expected SVC or DVC)")

        def pick(name: str, base):
            v = getattr(ov, name)
            return base if v is None else v

        oxygen = pick("oxygen_radius_mm", scaled["oxygen_radius_mm"])
        sense = ov.sense_distance_mm
        if sense is None:
            sense = self.sense_distance_mm if self.sense_distance_mm is not None else 2.0 * oxygen
        return LayerParams(
            layer=tag,
            step_length_mm=pick("step_length_mm", scaled["step_length_mm"]),
            terminal_radius_mm=pick("terminal_radius_mm", scaled["terminal_radius_mm"]),
            root_radius_mm=self.root_radius_mm,
            oxygen_radius_mm=oxygen,
            sense_distance_mm=sense,
            vegf_threshold=pick("vegf_threshold", self.vegf_threshold),
            deactivation_threshold=pick("deactivation_threshold", self.deactivation_threshold),
            branch_probability=pick("branch_probability", self.branch_probability),
            bifurcation_angle_deg=self.bifurcation_angle_deg,
            w_persistence=self.w_persistence,
            w_gradient=self.w_gradient,
            w_repulsion=self.w_repulsion,
            murray_exponent=self.murray_exponent,
            target_terminal_count=pick("target_terminal_count", scaled["target_terminal_count"]),
            trees=pick("trees", self.trees_per_layer),
            depth_mm=pick("depth_mm", scaled["depth_mm"]),
            max_iterations=pick("max_iterations", self.max_iterations),
        )

    def validate(self) -> None:
        _require(self.fov_extent_mm > 0, "fov_extent_mm must be > 0")
        _require(self.fov_shape in FOV_SHAPES, f"fov_shape must be one of {FOV_SHAPES}")
        _require(self.fov_corner_radius_mm >= 0, "fov_corner_radius_mm must be >= 0")
        _require(self.faz_radius_mm > 0, "faz_radius_mm must be > 0")
        _require(
            self.faz_radius_mm < self.fov_extent_mm / 4,
            "faz_radius_mm must be < fov_extent_mm / 4",
        )
        _require(self.disc_radius_mm > 0, "disc_radius_mm must be > 0")
        _require(self.ramp_mm >= 0, "ramp_mm must be >= 0")
        _require(self.grid_resolution >= 8, "grid_resolution must be >= 8")
        _require(self.step_length_mm > 0, "step_length_mm must be > 0")
        _require(self.terminal_radius_mm > 0, "terminal_radius_mm must be > 0")
        _require(self.root_radius_mm > 0, "root_radius_mm must be > 0")
        _require(self.murray_exponent >= 1, "murray_exponent must be >= 1")
        _require(self.oxygen_radius_mm > 0, "oxygen_radius_mm must be > 0")
        if self.sense_distance_mm is not None:
            _require(self.sense_distance_mm > 0, "sense_distance_mm must be > 0")
        _require(0 <= self.vegf_threshold <= 1, "vegf_threshold must be in [0, 1]")
        _require(
            0 <= self.deactivation_threshold <= 1,
            "deactivation_threshold must be in [0, 1]",
        )
        _require(0 <= self.branch_probability <= 1, "branch_probability must be in [0, 1]")
        _require(
            0 < self.bifurcation_angle_deg < 180,
            "bifurcation_angle_deg must be in (0, 180)",
        )
        for name in ("w_persistence", "w_gradient", "w_repulsion"):
            _require(getattr(self, name) >= 0, f"{name} must be >= 0")
        _require(
            self.w_persistence + self.w_gradient + self.w_repulsion > 0,
            "direction weights must not all be zero",
        )
        _require(self.max_iterations >= 0, "max_iterations must be >= 0")
        _require(self.target_terminal_count >= 1, "target_terminal_count must be >= 1")
        _require(self.trees_per_layer >= 1, "trees_per_layer must be >= 1")
        lo, hi = self.vessel_fraction_band
        _require(0 <= lo < hi <= 1, "vessel_fraction_band must satisfy 0 <= lo < hi <= 1")
        for tag in ("svc", "dvc"):
            ov = getattr(self, tag)
            for f in dataclasses.fields(ov):
                v = getattr(ov, f.name)
                if v is None:
                    continue
                key = f"{tag}.{f.name}"
                if f.name in ("vegf_threshold", "deactivation_threshold", "branch_probability"):
                    _require(0 <= v <= 1, f"{key} must be in [0, 1]")
                elif f.name == "max_iterations":
                    _require(v >= 0, f"{key} must be >= 0")
                elif f.name in ("target_terminal_count", "trees"):
                    _require(v >= 1, f"{key} must be >= 1")
                else:
                    _require(v > 0, f"{key} must be > 0")


@dataclass
class BackgroundNoise:
    """Capillary background: blurred Bernoulli noise added under the vessels."""

    enabled: bool = True
    probability: float = 1.0
    p: float = 0.1
    sigma_px: float = 1.5
    gain: float = 0.35


@dataclass
class FlowGhost:
    """Displaced, blurred copy of the large-vessel mask added to the image."""

    enabled: bool = True
    probability: float = 0.5
    offset_px: tuple[int, int] = (4, 0)  # (rows, cols)
    attenuation: float = 0.2
    sigma_px: float = 2.0
    radius_cutoff_mm: float = 0.04  # vessels wider than this cast ghosts


@dataclass
class BiasFields:
    """Multiplicative Gaussian shading spots anywhere in the frame."""

    enabled: bool = True
    probability: float = 0.7
    count: tuple[int, int] = (1, 3)
    radius_px: tuple[float, float] = (80.0, 320.0)
    strength: tuple[float, float] = (0.2, 0.7)


@dataclass
class MotionBands:
    """Horizontal row bands shifted and re-exposed to mimic saccades."""

    enabled: bool = True
    probability: float = 0.7
    bands: tuple[int, int] = (1, 3)
    max_shift_px: int = 8
    brightness: tuple[float, float] = (0.7, 1.25)


@dataclass
class SpatialAugment:
    """Flips, lattice rotations with jitter, scaling, and elastic warps."""

    enabled: bool = False
    probability: float = 1.0
    flip_prob: float = 0.5
    rotation_prob: float = 0.75
    rotation_mode: str = "k90_jitter"  # one of ROTATION_MODES
    rotation_jitter_deg: float = 10.0
    scale_prob: float = 0.5
    # keep the range tight so resampling moves mask area by well under 5%
    scale_range: tuple[float, float] = (0.98, 1.02)
    elastic_prob: float = 0.5
    elastic_alpha_px: float = 8.0  # approximate peak displacement
    elastic_sigma_px: float = 32.0


@dataclass
class PhotometricAugment:
    """Brightness, contrast, gamma, and smoothing on the image only."""

    enabled: bool = False
    probability: float = 1.0
    brightness: tuple[float, float] = (-0.1, 0.1)
    contrast: tuple[float, float] = (0.85, 1.2)
    gamma: tuple[float, float] = (0.8, 1.25)
    smooth_prob: float = 0.3
    smooth_sigma_px: tuple[float, float] = (0.4, 1.2)


@dataclass
class RandomErasing:
    """Zeroed rectangles on the image only; the mask is untouched."""

    enabled: bool = False
    probability: float = 0.5
    count: tuple[int, int] = (1, 3)
    area: tuple[float, float] = (0.01, 0.05)  # fraction of the frame
    aspect: tuple[float, float] = (0.4, 2.5)


@dataclass
class DegradeConfig:
    """Switchboard for the degradation and augmentation stack.

    Physical scanner artifacts default to on; train-time augmentations
    (spatial, photometric, erasing) default to off.
    """

    background: BackgroundNoise = field(default_factory=BackgroundNoise)
    flow: FlowGhost = field(default_factory=FlowGhost)
    bias: BiasFields = field(default_factory=BiasFields)
    motion: MotionBands = field(default_factory=MotionBands)
    spatial: SpatialAugment = field(default_factory=SpatialAugment)
    photometric: PhotometricAugment = field(default_factory=PhotometricAugment)
    erasing: RandomErasing = field(default_factory=RandomErasing)

    @classmethod
    def all_disabled(cls) -> "DegradeConfig":
        cfg = cls()
        for sub in dataclasses.fields(cfg):
            getattr(cfg, sub.name).enabled = False
        return cfg

    def validate(self) -> None:
        for sub in dataclasses.fields(self):
            cfg = getattr(self, sub.name)
            prefix = f"degrade.{sub.name}."
            for f in dataclasses.fields(cfg):
                v = getattr(cfg, f.name)
                key = prefix + f.name
                if f.name in ("probability", "flip_prob", "rotation_prob", "scale_prob",
                              "elastic_prob", "smooth_prob", "p"):
                    _require(0 <= v <= 1, f"{key} must be in [0, 1]")
                elif isinstance(v, tuple) and len(v) == 2 and f.name != "offset_px":
                    _require(v[0] <= v[1], f"{key} range must be ordered (lo <= hi)")
        _require(self.background.sigma_px > 0, "degrade.background.sigma_px must be > 0")
        _require(self.background.gain >= 0, "degrade.background.gain must be >= 0")
        _require(self.flow.sigma_px > 0, "degrade.flow.sigma_px must be > 0")
        _require(self.flow.attenuation >= 0, "degrade.flow.attenuation must be >= 0")
        _require(self.flow.radius_cutoff_mm >= 0, "degrade.flow.radius_cutoff_mm must be >= 0")
        _require(self.bias.count[0] >= 0, "degrade.bias.count must be >= 0")
        _require(self.bias.radius_px[0] > 0, "degrade.bias.radius_px must be > 0")
        _require(
            0 <= self.bias.strength[0] and self.bias.strength[1] <= 1,
            "degrade.bias.strength must lie in [0, 1]",
        )
        _require(self.motion.bands[0] >= 0, "degrade.motion.bands must be >= 0")
        _require(self.motion.max_shift_px >= 0, "degrade.motion.max_shift_px must be >= 0")
        _require(self.motion.brightness[0] >= 0, "degrade.motion.brightness must be >= 0")
        _require(
            self.spatial.rotation_mode in ROTATION_MODES,
            f"degrade.spatial.rotation_mode must be one of {ROTATION_MODES}",
        )
        _require(self.spatial.scale_range[0] > 0, "degrade.spatial.scale_range must be > 0")
        _require(self.spatial.elastic_alpha_px >= 0, "degrade.spatial.elastic_alpha_px must be >= 0")
        _require(self.spatial.elastic_sigma_px > 0, "degrade.spatial.elastic_sigma_px must be > 0")
        _require(self.photometric.contrast[0] >= 0, "degrade.photometric.contrast must be >= 0")
        _require(self.photometric.gamma[0] > 0, "degrade.photometric.gamma must be > 0")
        _require(
            self.photometric.smooth_sigma_px[0] >= 0,
            "degrade.photometric.smooth_sigma_px must be >= 0",
        )
        _require(self.erasing.count[0] >= 0, "degrade.erasing.count must be >= 0")
        _require(
            0 < self.erasing.area[0] and self.erasing.area[1] <= 1,
            "degrade.erasing.area must lie in (0, 1]",
        )
        _require(self.erasing.aspect[0] > 0, "degrade.erasing.aspect must be > 0")


@dataclass
class ImageConfig:
    """Output raster geometry; mm_per_pixel derives from the FOV extent."""

    width: int = 1024
    height: int = 1024
    bits: int = 8  # 8 or 16 bit PGM output

    def validate(self) -> None:
        _require(self.width >= 1 and self.height >= 1, "image dimensions must be >= 1")
        _require(self.width == self.height, "image.width must equal image.height")
        _require(self.bits in (8, 16), "image.bits must be 8 or 16")


@dataclass
class RunConfig:
    """Everything one dataset-generation run needs."""

    sim: SimConfig = field(default_factory=SimConfig)
    degrade: DegradeConfig = field(default_factory=DegradeConfig)
    image: ImageConfig = field(default_factory=ImageConfig)
    samples: int = 1
    seed: int = 0  # master seed; per-sample streams derive from (seed, index)

    @property
    def mm_per_pixel(self) -> float:
        return self.sim.fov_extent_mm / self.image.width

    def validate(self) -> None:
        _require(self.samples >= 1, "samples must be >= 1")
        _require(self.seed >= 0, "seed must be >= 0")
        self.sim.validate()
        self.degrade.validate()
        self.image.validate()


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


def _key_table(run: RunConfig) -> dict[str, tuple[object, str, object]]:
    table: dict[str, tuple[object, str, object]] = {}

    def add(prefix: str, obj: object, skip: tuple[str, ...] = ()) -> None:
        hints = typing.get_type_hints(type(obj))
        for f in dataclasses.fields(obj):
            if f.name in skip:
                continue
            table[prefix + f.name] = (obj, f.name, hints[f.name])

    add("", run.sim, skip=("svc", "dvc", "seed"))
    add("svc.", run.sim.svc)
    add("dvc.", run.sim.dvc)
    add("image.", run.image)
    for name in ("background", "flow", "bias", "motion", "spatial", "photometric", "erasing"):
        add(f"degrade.{name}.", getattr(run.degrade, name))
    table["samples"] = (run, "samples", int)
    table["seed"] = (run, "seed", int)
    return table


def _convert(text: str, hint, key: str, lineno: int):
    origin = typing.get_origin(hint)
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(hint) if a is not type(None)]
        hint = args[0]
        origin = typing.get_origin(hint)
    try:
        if origin is tuple:
            elem_types = typing.get_args(hint)
            parts = [p.strip() for p in text.split(",")]
            if len(parts) != len(elem_types):
                raise ValueError(f"expected {len(elem_types)} comma-separated values")
            return tuple(t(p) for t, p in zip(elem_types, parts))
        if hint is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError("expected a boolean")
        if hint is int:
            return int(text)
        if hint is float:
            return float(text)
        if hint is str:
            return text
    except ValueError as exc:
        raise ConfigError(f"line {lineno}: bad value for '{key}': {exc}") from exc
    raise ConfigError(f"line {lineno}: unsupported type for '{key}'")


def parse_config(text: str) -> RunConfig:
    """Parse flat ``key = value`` config text into a validated RunConfig.

    Comments start with ``#``. Unknown keys are hard errors; missing keys
    keep their documented defaults.
    """
    run = RunConfig()
    table = _key_table(run)
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in table:
            raise ConfigError(f"line {lineno}: unknown key '{key}'")
        obj, fname, hint = table[key]
        setattr(obj, fname, _convert(value, hint, key, lineno))
    run.validate()
    return run


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def config_hash(run: RunConfig) -> str:
    """Stable 16-hex-digit digest of a RunConfig (identical configs match)."""
    blob = json.dumps(dataclasses.asdict(run), sort_keys=True, default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]
