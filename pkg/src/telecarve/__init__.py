"""telecarve: incremental free-space-carved surface reconstruction with a
simulated sparse-SLAM front end and a local haptic contact loop.

The reconstruction side keeps a Delaunay tetrahedralization of the map
points, labels tets free by walking camera-to-point visibility rays, and
extracts the free/occupied boundary as a versioned triangle mesh.  The
interaction side runs a fixed-rate proximity/contact loop against the
latest mesh snapshot and a discrete-event harness that ties both together
under simulated link latency.
"""

__version__ = "0.1.0"

from .carving import CarvedLabeling, ReconstructionDelta, SurfaceMesh
from .contact import (
    NO_MESH,
    ArmModel,
    ArmState,
    Bvh,
    ContactEvent,
    HapticParams,
    LinkSphere,
    ProximityResult,
    ProxySphere,
    RevoluteJoint,
    build_bvh,
    forward_kinematics,
    haptic_step,
    query_proximity,
)
from .delaunay import DuplicatePoint, IntegrityError, Triangulation, init_bounding
from .evaluation import (
    DEFAULT_TAU_ROOM,
    DEFAULT_TAU_TABLETOP,
    completeness,
    load_surface,
    mesh_stats,
    point_surface_distances,
    precision,
    quality_report,
)
from .frontend import (
    CameraIntrinsics,
    FrontendEvent,
    Keyframe,
    MapPoint,
    NewKeyframe,
    PointRemoval,
    PointUpdate,
    Pose,
    SceneSpec,
    StreamFormatError,
    StreamState,
    load_trajectory,
    orbit_poses,
    save_stream,
    synth_scene,
    windowed_observations,
)
from .harness import (
    CameraPose,
    ContactRecord,
    DelayChannel,
    EndEffectorJog,
    ReconstructionConfig,
    Session,
    SessionConfig,
    SessionMetrics,
    Stop,
    apply_frontend_event,
    carve_stream,
    carving_bounds,
    load_session_config,
    measure_rtf,
    ramp_script,
    run_session,
)
from .mesh_io import (
    NOT_VISIBLE,
    ParsedObj,
    TexturedSubmesh,
    build_textured_submesh,
    export_obj,
    obj_bytes,
    parse_obj,
    project_vertex,
    select_texture_keyframe,
)

__all__ = [
    "ArmModel",
    "ArmState",
    "Bvh",
    "CameraIntrinsics",
    "CameraPose",
    "CarvedLabeling",
    "ContactEvent",
    "ContactRecord",
    "DEFAULT_TAU_ROOM",
    "DEFAULT_TAU_TABLETOP",
    "DelayChannel",
    "DuplicatePoint",
    "EndEffectorJog",
    "FrontendEvent",
    "HapticParams",
    "IntegrityError",
    "Keyframe",
    "LinkSphere",
    "MapPoint",
    "NOT_VISIBLE",
    "NO_MESH",
    "NewKeyframe",
    "ParsedObj",
    "PointRemoval",
    "PointUpdate",
    "Pose",
    "ProximityResult",
    "ProxySphere",
    "ReconstructionConfig",
    "ReconstructionDelta",
    "RevoluteJoint",
    "SceneSpec",
    "Session",
    "SessionConfig",
    "SessionMetrics",
    "Stop",
    "StreamFormatError",
    "StreamState",
    "SurfaceMesh",
    "TexturedSubmesh",
    "Triangulation",
    "apply_frontend_event",
    "build_bvh",
    "build_textured_submesh",
    "carve_stream",
    "carving_bounds",
    "completeness",
    "export_obj",
    "forward_kinematics",
    "haptic_step",
    "init_bounding",
    "load_session_config",
    "load_surface",
    "load_trajectory",
    "measure_rtf",
    "mesh_stats",
    "obj_bytes",
    "orbit_poses",
    "parse_obj",
    "point_surface_distances",
    "precision",
    "project_vertex",
    "quality_report",
    "query_proximity",
    "ramp_script",
    "run_session",
    "save_stream",
    "select_texture_keyframe",
    "synth_scene",
    "windowed_observations",
    "__version__",
]
