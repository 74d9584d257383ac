"""Remap of absolute mean curvature to a vertex-importance density field.

Densities sit on a plateau d_min below the lower cutoff, rise along a
sigmoid between the cutoffs, and saturate at d_max above the upper one.
Cutoffs can be absolute curvatures or percentiles of the |H| distribution
("p20"-style), which adapts across meshes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .curvature import smooth_scales
from .mesh import Adjacency


@dataclass
class DensityParams:
    min_cut: float | str = "p20"   # lower cutoff: absolute or "pNN" percentile
    max_cut: float | str = "p95"
    d_min: float = 0.1
    d_max: float = 1.0
    smooth_iters: int = 0
    smooth_lam: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.d_min < self.d_max:
            raise ValueError("need 0 < d_min < d_max")
        if self.smooth_iters < 0:
            raise ValueError("smooth_iters must be >= 0")


def _resolve_cut(cut, h_abs: np.ndarray) -> float:
    if isinstance(cut, str):
        if not cut.startswith("p"):
            raise ValueError(f"bad cutoff spec {cut!r} (number or 'pNN')")
        return float(np.percentile(h_abs, float(cut[1:])))
    return float(cut)


def resolve_cutoffs(h_field: np.ndarray, params: DensityParams) -> tuple[float, float]:
    h_abs = np.abs(np.asarray(h_field, np.float64))
    lo = _resolve_cut(params.min_cut, h_abs)
    hi = _resolve_cut(params.max_cut, h_abs)
    if hi <= lo:
        raise ValueError(f"max cutoff {hi} must exceed min cutoff {lo}")
    return lo, hi


def map_density(h_field: np.ndarray, params: DensityParams | None = None) -> np.ndarray:
    """Per-vertex density from the absolute mean curvature.

    The sigmoid branch is scaled so it meets d_min exactly at the lower
    cutoff and d_max exactly at the upper one.
    """
    params = params or DensityParams()
    x = np.abs(np.asarray(h_field, np.float64))
    lo, hi = resolve_cutoffs(h_field, params)

    s_hi = 1.0 / (1.0 + math.exp(-4.0))
    s_lo = 1.0 / (1.0 + math.exp(4.0))
    d_scale = (params.d_max - params.d_min) / (s_hi - s_lo)

    xn = 2.0 * (x - lo) / (hi - lo) - 1.0
    mid = d_scale * (1.0 / (1.0 + np.exp(-4.0 * xn)) - s_lo) + params.d_min
    out = np.where(x <= lo, params.d_min, np.where(x > hi, params.d_max, mid))
    return out


def smooth_field(field: np.ndarray, adj: Adjacency, iters: int,
                 lam: float) -> np.ndarray:
    """Jacobi smoothing of any per-vertex field (same scheme as the
    radius-scale smoothing)."""
    if iters == 0:
        return np.asarray(field, np.float64).copy()
    return smooth_scales(field, adj, lam, iters)


def write_density_csv(path, density: np.ndarray) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write("vertex_index,density\n")
        for i, d in enumerate(density):
            fh.write("%d,%.9g\n" % (i, d))
