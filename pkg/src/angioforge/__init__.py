"""Synthetic wide-field OCTA angiography generation and evaluation toolkit."""

from .config import (
    DegradeConfig,
    ImageConfig,
    LayerOverrides,
    LayerParams,
    RunConfig,
    SimConfig,
    config_hash,
    load_config,
    parse_config,
)
from .ensemble import FoldAssignment, decode_ordinal, ensemble_reg, ensemble_seg, stratified_kfold
from .errors import (
    AngioforgeError,
    ConfigError,
    EmptyForest,
    GridMismatch,
    MissingFile,
    PgmError,
    UndefinedMetric,
)
from .growth import (
    GrowthTrace,
    VesselForest,
    VesselNode,
    assign_radii,
    grow_step,
    init_forest,
    simulate,
    update_oxygen,
    update_vegf,
)
from .layout import GridSpec, RetinaLayout, ScalarField2D, build_layout, grid_for, vegf_suppression
from .metrics import (
    MetricReport,
    auc_ovr,
    bce_loss,
    confusion_matrix,
    dice,
    iou,
    mean_and_se,
    mse_loss,
    qwk,
    seg_report,
    soft_dice_loss,
)
from .raster import CleanImage, GroundTruthMask, ImageSample, ImageSpec, draw_forest, ground_truth
from .degrade import (
    apply_pipeline,
    bias_field,
    capillary_background,
    flow_projection,
    geometric_augment,
    motion_artifact,
)
from .dataset import build_sample, generate_dataset
from .pgm import read_pgm, write_pgm

__version__ = "0.1.0"
