"""Contour particles on triangle meshes.

Fronts of linked particles live on mesh edges and slide along the field
gradient until they settle on zero crossings; from there the package
derives silhouettes, shading regions, animations, and parabolic curves.
"""

from .anim import (
    ContourTrack,
    FrameResult,
    FrameSpec,
    build_tracks,
    colocate,
    cut_keyframes,
    track_sequence,
)
from .camera import Camera
from .engine import (
    ConvergedContours,
    EngineConfig,
    EvolutionState,
    Front,
    Snaxel,
    evolve,
    extract_contours,
    init_fronts,
    step,
)
from .errors import (
    ConvergenceError,
    DegenerateInterpolationError,
    DegenerateNormalError,
    EmptyMeshError,
    FieldConfigError,
    ObjParseError,
    RefinementError,
    SceneError,
    SnaxelError,
    TopologyError,
)
from .fields import (
    ContourField,
    GleamField,
    IsophoteField,
    SurfaceSample,
    VisualField,
    field_from_json,
)
from .mesh import AnimatedMeshSequence, Mesh, load_mesh, parse_obj
from .meshgen import bumpy_sphere, grid, icosphere, tetrahedron, torus
from .parabolic import ParabolicResult, detect_parabolic_points, view_directions
from .planar import (
    PlanarMap,
    PlanarPopulation,
    Region,
    RegionClass,
    evolve_planar,
    points_in_polygon,
)
from .scene import SceneConfig
from .service import create_app
from .svg import StyleSheet, emit_animated_svg, emit_svg
from .visibility import VisibilityTester, classify_visibility

__version__ = "0.1.0"

__all__ = [
    "AnimatedMeshSequence",
    "Camera",
    "ContourField",
    "ContourTrack",
    "ConvergedContours",
    "ConvergenceError",
    "DegenerateInterpolationError",
    "DegenerateNormalError",
    "EmptyMeshError",
    "EngineConfig",
    "EvolutionState",
    "FieldConfigError",
    "FrameResult",
    "FrameSpec",
    "Front",
    "GleamField",
    "IsophoteField",
    "Mesh",
    "ObjParseError",
    "ParabolicResult",
    "PlanarMap",
    "PlanarPopulation",
    "RefinementError",
    "Region",
    "RegionClass",
    "SceneConfig",
    "SceneError",
    "Snaxel",
    "SnaxelError",
    "StyleSheet",
    "SurfaceSample",
    "TopologyError",
    "VisibilityTester",
    "VisualField",
    "bumpy_sphere",
    "build_tracks",
    "classify_visibility",
    "colocate",
    "create_app",
    "cut_keyframes",
    "detect_parabolic_points",
    "emit_animated_svg",
    "emit_svg",
    "evolve",
    "evolve_planar",
    "extract_contours",
    "field_from_json",
    "grid",
    "icosphere",
    "init_fronts",
    "load_mesh",
    "parse_obj",
    "points_in_polygon",
    "step",
    "tetrahedron",
    "torus",
    "track_sequence",
    "view_directions",
]
