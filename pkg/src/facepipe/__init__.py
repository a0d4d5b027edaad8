"""FACS-blendshape face toolkit: model, maps, fitting, decimation, lip-sync."""

from .camera import ProjectiveCamera, default_camera, project
from .containers import (
    ContainerFormatError,
    load_clip,
    load_landmarks,
    load_map,
    load_model,
    load_params,
    save_clip,
    save_landmarks,
    save_map,
    save_model,
    save_params,
)
from .decimate import DecimationPlan, decimate_symmetric, expression_quadrics
from .diffusion import (
    BlendshapeClip,
    NoiseSchedule,
    add_noise,
    build_schedule,
    cfg_combine,
    loss_simple,
    loss_smooth,
    loss_velocity,
    sample,
    sync_loss,
)
from .facemodel import (
    FaceModel,
    FaceParams,
    GazeAngles,
    blendshapes_to_gaze,
    constraint_violation,
    evaluate_landmarks,
    evaluate_mesh,
    fuse_mouth,
    gaze_to_blendshapes,
    mouth_blendshape_indices,
)
from .fitting import (
    FitConfig,
    LandmarkTrack,
    fit_sequence,
    gradient_check,
    identity_consistency,
    landmark_loss,
    param_smoothness,
    regularizer,
)
from .audio import MelChunks, mel_chunk
from .maps import RenderMaps, flow_3dmm, render_P, render_maps, render_sketch
from .pipeline import FaceBox, LipsyncJob, delta_cl, lipsync_run, mock_generator
from .raster import Fragments, rasterize
from .rotation import matrix_to_rot6d, rot6d_to_matrix
from .synthetic import import_manifest, make_synthetic_model
from .warp import (
    bilinear_warp,
    composite_blend,
    locality_metric,
    warp_detached,
    warp_stable,
    warp_unstable,
)

__version__ = "0.1.0"
