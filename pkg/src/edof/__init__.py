"""Extended depth of field for varifocal multiview image grids.

The toolkit aligns a 3x3 grid of views to a benchmark viewpoint, selects the
sharpest sub-images per block, fuses them with a small trained network and
evaluates the result; a built-in synthetic scene generator supplies ground
truth for verification.
"""

from .align import (
    AlignParams,
    AlignedView,
    AlignmentResult,
    Homography,
    align_grid,
    compute_descriptors,
    detect_features,
    estimate_homography,
    fit_homography_dlt,
    match_features,
    modify_homography,
    warp_image,
)
from .blocks import (
    BlockGrid,
    BlockSelection,
    mean_gradient,
    select_sharpest_pair,
    split_blocks,
)
from .errors import (
    AlignmentError,
    ConfigError,
    DegenerateHomographyError,
    EdofError,
    EstimationError,
    FormatError,
    FusionError,
    MetricUndefinedError,
    ParameterError,
    SelectionError,
    TrainingDivergedError,
)
from .features import (
    FeaturePyramid,
    PreservationWeights,
    extract_features,
    information_measure,
    preservation_degrees,
)
from .image import (
    ImageF,
    Kernel2D,
    ViewGrid,
    bilinear_sample,
    convolve2d,
    load_image,
    save_image,
    to_grayscale,
)
from .metrics import MetricsReport, evaluate, information_entropy, local_contrast
from .network import FusionNet, fuse
from .pipeline import FuseOptions, FusionReport, fuse_pipeline, splice_blocks
from .ssim import mse, ssim, ssim_masked
from .synth import (
    CaptureSpec,
    GroundTruth,
    LayerSpec,
    SceneSpec,
    default_capture,
    default_scene,
    render_scene,
)
from .train import TrainConfig, fusion_loss, gradient_check, train

__version__ = "0.1.0"
