"""Scalar-field-to-vertex-color mapping for visual inspection.

Values are clamped to percentiles before mapping so a few extreme
vertices cannot wash out the ramp; log scaling compresses fields whose
interesting structure spans orders of magnitude (signed fields get a
symmetric log with zero pinned to the diverging midpoint).
"""

from __future__ import annotations

import warnings

import numpy as np
from matplotlib import colormaps

from .mesh import Mesh

RAMP = "ramp"            # perceptual ramp (viridis)
DIVERGING = "diverging"  # signed, zero at the midpoint (coolwarm)
_MPL_NAMES = {RAMP: "viridis", DIVERGING: "coolwarm"}


def colorize(mesh: Mesh, field, colormap: str = RAMP,
             clamp: tuple[float, float] = (1.0, 99.0),
             log_scale: bool = False) -> Mesh:
    """Attach 8-bit vertex colors for a per-vertex scalar field.

    `clamp` gives the low/high percentiles of the field used as the color
    range ends. Returns the mesh (colors set in place).
    """
    values = np.asarray(field, np.float64)
    if len(values) != mesh.n_vertices:
        raise ValueError("field length must match the vertex count")
    if colormap not in _MPL_NAMES:
        raise ValueError(f"colormap must be one of {tuple(_MPL_NAMES)}")
    plo, phi = clamp
    lo = float(np.percentile(values, plo))
    hi = float(np.percentile(values, phi))

    if hi <= lo:
        warnings.warn("degenerate field range; using the mid color")
        x = np.full(len(values), 0.5)
    elif colormap == DIVERGING:
        v = np.clip(values, lo, hi)
        m = max(abs(lo), abs(hi))
        if log_scale:
            s = 0.01 * m
            v = np.sign(v) * np.log1p(np.abs(v) / s)
            m = np.log1p(1.0 / 0.01)
        x = 0.5 + 0.5 * v / m
    else:
        v = np.clip(values, lo, hi)
        if log_scale:
            if lo <= 0.0:
                raise ValueError("log scale needs a positive clamp range; "
                                 "use the diverging colormap for signed data")
            v = np.log(v)
            lo, hi = np.log(lo), np.log(hi)
        x = (v - lo) / (hi - lo)

    rgba = colormaps[_MPL_NAMES[colormap]](np.clip(x, 0.0, 1.0))
    mesh.colors = (rgba[:, :3] * 255.0 + 0.5).astype(np.uint8)
    return mesh
