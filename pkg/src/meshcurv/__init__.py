"""Adaptive multi-scale mean-curvature fields on triangle meshes.

Ball-neighborhood integral invariants with automatic per-vertex radius
selection, curvature-to-density remapping, and density-guided mesh
simplification.
"""

__version__ = "0.1.0"

from .ballvolume import (SphereTemplate, VolumeResult, classify_sphere_vertex,
                         intersection_volume, make_sphere_template,
                         refine_and_collect)
from .colormap import colorize
from .curvature import (CASE_LABELS, CubicFit, CurvatureField,
                        CurvatureProfile, RadiusDecision, ScaleParams,
                        compute_curvature_field, fit_cubic,
                        fixed_radius_field, initial_scale, mean_curvature_at,
                        sample_profile, select_radius, smooth_scales)
from .density import DensityParams, map_density, smooth_field
from .mesh import (Adjacency, Mesh, MeshError, SpatialIndex, build_adjacency,
                   check_orientation, compute_vertex_normals)
from .meshio import MeshIOError, load_mesh, save_mesh
from .patch import SurfacePatch, clip_face, extract_patch
from .shapes import ShapeSpec, analytic_curvature, synth_shape
from .simplify import SimplifyResult, simplify

__all__ = [
    "Adjacency", "CASE_LABELS", "CubicFit", "CurvatureField",
    "CurvatureProfile", "DensityParams", "Mesh", "MeshError", "MeshIOError",
    "RadiusDecision", "ScaleParams", "ShapeSpec", "SimplifyResult",
    "SpatialIndex", "SphereTemplate", "SurfacePatch", "VolumeResult",
    "analytic_curvature", "build_adjacency", "check_orientation",
    "classify_sphere_vertex", "clip_face", "colorize",
    "compute_curvature_field", "compute_vertex_normals", "extract_patch",
    "fit_cubic", "fixed_radius_field", "initial_scale", "intersection_volume",
    "load_mesh", "make_sphere_template", "map_density", "mean_curvature_at",
    "refine_and_collect", "sample_profile", "save_mesh", "select_radius",
    "simplify", "smooth_field", "smooth_scales", "synth_shape",
]
