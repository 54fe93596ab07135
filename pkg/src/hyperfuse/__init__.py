"""hyperfuse: hyperspectral + panchromatic image fusion via spectral unmixing.

Pipeline: simulate a scene from a label map and a spectral library, unmix
the low-resolution cube with NMF, segment each PAN superpixel with fuzzy
C-means, match segments to endmembers, and stamp endmember signatures onto
subpixels to build a high-spatial, high-spectral resolution cube with
SAE/PSNR quality reporting.
"""

__version__ = "0.1.0"

from .errors import FormatError, HyperfuseError, ValidationError
from .fuse import (
    Assignment,
    FusionConfig,
    NeighborContext,
    SubpixelMap,
    candidate_assignments,
    fuse_scene,
    fuse_superpixel,
    match_segments,
    reconstruct_hr,
    resolve_ambiguity,
)
from .metrics import evaluate, mse_band, psnr_band, sad, sad_map, sae
from .rasters import (
    LabelMap,
    LibraryMaterial,
    PanImage,
    QualityReport,
    SpectralCube,
    SpectralLibrary,
    read_cube,
    read_labels,
    read_library,
    read_pan,
    read_report,
    write_cube,
    write_labels,
    write_pan,
    write_report,
)
from .segment import FcmConfig, SuperpixelSegmentation, fcm, fcm_objective, segment_superpixel
from .simulate import (
    SimulationConfig,
    downsample,
    resample_signature,
    synthesize_hr_cube,
    synthesize_pan,
)
from .unmix import (
    EndmemberModel,
    NmfConfig,
    active_endmembers,
    canonicalize_scale,
    nmf_cost,
    nmf_unmix,
    normalize_abundances,
    read_endmember_model,
    write_endmember_model,
)

__all__ = [
    "__version__",
    "Assignment",
    "EndmemberModel",
    "FcmConfig",
    "FormatError",
    "FusionConfig",
    "HyperfuseError",
    "LabelMap",
    "LibraryMaterial",
    "NeighborContext",
    "NmfConfig",
    "PanImage",
    "QualityReport",
    "SimulationConfig",
    "SpectralCube",
    "SpectralLibrary",
    "SubpixelMap",
    "SuperpixelSegmentation",
    "ValidationError",
    "active_endmembers",
    "candidate_assignments",
    "canonicalize_scale",
    "downsample",
    "evaluate",
    "fcm",
    "fcm_objective",
    "fuse_scene",
    "fuse_superpixel",
    "match_segments",
    "mse_band",
    "nmf_cost",
    "nmf_unmix",
    "normalize_abundances",
    "psnr_band",
    "read_cube",
    "read_endmember_model",
    "read_labels",
    "read_library",
    "read_pan",
    "read_report",
    "reconstruct_hr",
    "resample_signature",
    "resolve_ambiguity",
    "sad",
    "sad_map",
    "sae",
    "segment_superpixel",
    "synthesize_hr_cube",
    "synthesize_pan",
    "write_cube",
    "write_endmember_model",
    "write_labels",
    "write_pan",
    "write_report",
]
