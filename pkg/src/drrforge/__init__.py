"""drrforge: deterministic synthetic X-ray training data for a notched
continuum manipulator posed inside CT volumes."""

__version__ = "0.1.0"

from .cdm_model import (
    CdmGeometrySpec,
    CdmPosedModel,
    CdmShape,
    build_cdm_meshes,
    forward_kinematics,
    spline_joint_angles,
)
from .errors import ForgeError
from .geometry import (
    CameraPose,
    ProjectionGeometry,
    RigidTransform,
    camera_from_orbit,
    project_point,
    rigid_from_euler,
)
from .metrics import EvalReport, dice, extract_landmark, landmark_error_mm
from .projector import (
    BeliefMapParams,
    Image2D,
    add_poisson_noise,
    belief_map,
    normalize_line_integrals,
    project_mask,
    raycast_line_integrals,
    render_landmarks,
)
from .sampler import (
    SampleConfig,
    SampleRanges,
    SplitManifest,
    make_split,
    sample_configuration,
)
from .voxelizer import (
    VoxelVolume,
    carve_drill,
    hu_to_attenuation,
    resample_occupancy_to_grid,
    voxelize_mesh,
)

__all__ = [
    "__version__",
    "BeliefMapParams",
    "CameraPose",
    "CdmGeometrySpec",
    "CdmPosedModel",
    "CdmShape",
    "EvalReport",
    "ForgeError",
    "Image2D",
    "ProjectionGeometry",
    "RigidTransform",
    "SampleConfig",
    "SampleRanges",
    "SplitManifest",
    "VoxelVolume",
    "add_poisson_noise",
    "belief_map",
    "build_cdm_meshes",
    "camera_from_orbit",
    "carve_drill",
    "dice",
    "extract_landmark",
    "forward_kinematics",
    "hu_to_attenuation",
    "landmark_error_mm",
    "make_split",
    "normalize_line_integrals",
    "project_mask",
    "project_point",
    "raycast_line_integrals",
    "render_landmarks",
    "resample_occupancy_to_grid",
    "rigid_from_euler",
    "sample_configuration",
    "spline_joint_angles",
    "voxelize_mesh",
]
