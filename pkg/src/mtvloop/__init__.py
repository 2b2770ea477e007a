"""mtvloop: seamlessly looping, view-consistent 3D video from asynchronous
multi-view clips.

The pipeline trains a dense looping-aware plane volume from per-view
average images (stage 1), culls it into a sparse multi-tile video, then
optimizes the loop tiles against the input clips with a patch-based
looping loss (stage 2). The result renders in real time from textured
atlas tiles.
"""

from .geometry import (
    CameraModel,
    PlaneStack,
    disparity_depths,
    plane_homography,
    warp_bilinear,
)
from .renderer import (
    Mpi,
    LoopableVolume,
    RenderWindow,
    composite_over,
    render_backward,
    render_mpi,
    render_mtv,
)
from .scene_io import (
    DatasetConfig,
    SceneSpec,
    VideoClip,
    ViewRecord,
    average_image,
    load_dataset,
    loopable_mask2d,
    make_synthetic_scene,
)
from .stage1 import (
    AdamState,
    Stage1Config,
    adam_step,
    bce_loss,
    mse_loss,
    sparsity_loss,
    stage1_total,
    train_stage1,
    tv_loss,
)
from .mtv import (
    Mtv,
    Tile,
    TileLabel,
    classify_tile,
    count_params,
    densify,
    lift_and_cull,
    resample_mtv,
    subdivide,
)
from .looping import (
    PatchConfig,
    PatchSet,
    circular_pad,
    extract_temporal_patches,
    looping_loss,
    nss_table,
    select_pnn,
)
from .stage2 import PyramidSchedule, Stage2Config, build_schedule, train_stage2
from .metrics import MetricReport, bds_direction, loopq, stderr_metric
from .atlas import AtlasBundle, pack, unpack

__version__ = "0.1.0"
