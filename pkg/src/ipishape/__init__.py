"""Interferometric speckle imaging of programmable rough pseudo-particles.

Synthesizes speckle interferograms of six planar particle families,
reconstructs particle shapes from single images by error-reduction phase
retrieval, recombines three orthogonal views into a voxel hull, and
mass-produces reproducible (speckle, mask) datasets for learning-based
reconstruction.
"""

__version__ = "0.1.0"

from .shapes import (  # noqa: F401
    ALL_FAMILIES,
    CENTROSYMMETRIC,
    Family,
    GridSpec,
    IDENTITY_POSE,
    Pose,
    ShapeSpec,
    build_volume,
    default_object_grid,
    rasterize_projection,
    sample_pose,
    sample_shape,
    sample_valid_pose,
    silhouette,
)
from .speckle import (  # noqa: F401
    ACMap,
    AsperitySet,
    NoiseConfig,
    OpticsConfig,
    add_noise,
    autocorrelation_map,
    embed_mask,
    sample_asperities,
    synthesize_speckle,
)
from .retrieval import (  # noqa: F401
    ERConfig,
    ERResult,
    ModulusMap,
    binarize,
    clean_autocorrelation,
    error_reduction,
    estimate_support,
    fourier_modulus,
    reconstruct_from_autocorrelation,
    reconstruct_from_speckle,
)
from .tomo import recombine, reproject, visual_hull  # noqa: F401
from .metrics import best_aligned_iou, difference_image, iou, mse  # noqa: F401
from .dataset import DatasetConfig, DatasetManifest, generate_dataset, load_manifest, read_pair, split_manifest  # noqa: F401
