"""Adaptive multi-scale mean-curvature field.

Per vertex: start from the smoothed 1-ring scale, sample the ball
mean curvature at exponentially growing radii, fit a cubic to the
normalized curvature (dropping outliers from the largest radius down),
then pick the final radius from the shape of the fit: planar plateau,
extremum interpolation, saddle, or interval midpoint.
"""

from __future__ import annotations

import math
import multiprocessing
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ._fastvolume import sphere_side_volume
from .ballvolume import SphereTemplate, assemble_volume, make_sphere_template
from .mesh import Adjacency, Mesh, MeshError, build_adjacency, \
    compute_vertex_normals
from .patch import PatchSampler

CASE_PLANAR = 0
CASE_ONE_EXTREMUM = 1
CASE_TWO_EXTREMA = 2
CASE_SADDLE = 3
CASE_NO_EXTREMA = 4
CASE_LABELS = ("planar", "one-extremum", "two-extrema", "saddle",
               "no-extrema-middle")

# per-sample diagnostic bits
FLAG_OPEN_BOUNDARY = 1
FLAG_ORIENTATION = 2
FLAG_CLAMPED = 4


@dataclass
class ScaleParams:
    """Radius sampling and selection parameters.

    f_inc = 1.3 with n_radii = 8 spans one decade of radii (1.3^8 ~ 8.16);
    t_p is the planar threshold on normalized curvature.
    """

    lam: float = 0.5            # scale smoothing factor, (0, 1]
    n_smooth: int = 3           # scale smoothing iterations
    f_initial: float = 1.0      # starting-radius multiplier, >= 1 for more smoothing
    f_inc: float = 1.3          # radius growth factor
    n_radii: int = 8            # samples = n_radii + 1
    t_p: float = 0.2            # planar threshold on |H_norm|
    f_es: float = 0.5           # edge smoothing factor in [0, 1]
    fit_tol: float = 0.02       # relative cubic fit error bound
    border_depth: int = 6       # sphere border subdivisions
    sphere_subdivisions: int = 2
    planar_signed: bool = False       # planar test on the signed average
    literal_behind_test: bool = False  # normal-dot-normal behind rule

    def __post_init__(self):
        if not 0.0 < self.lam <= 1.0:
            raise ValueError("lam must be in (0, 1]")
        if self.f_inc <= 1.0:
            raise ValueError("f_inc must be > 1")
        if not 0.0 <= self.f_es <= 1.0:
            raise ValueError("f_es must be in [0, 1]")
        if self.n_radii < 0 or self.n_smooth < 0:
            raise ValueError("counts must be non-negative")

    def radii_for(self, scale: float) -> np.ndarray:
        return scale * self.f_initial * self.f_inc ** np.arange(self.n_radii + 1)


@dataclass
class CurvatureProfile:
    """Mean-curvature samples of one vertex over its radius ladder."""

    vertex: int
    radii: np.ndarray
    h: np.ndarray
    h_norm: np.ndarray
    retained: np.ndarray       # bool mask, updated by fit_cubic
    flags: np.ndarray = None   # per-sample FLAG_* bits

    def __post_init__(self):
        if self.flags is None:
            self.flags = np.zeros(len(self.radii), np.uint8)


@dataclass
class CubicFit:
    """Least-squares cubic c3 r^3 + c2 r^2 + c1 r + c0 through the
    retained (radius, H_norm) samples."""

    c0: float
    c1: float
    c2: float
    c3: float
    residual: float          # RMS / max(retained H_norm range, 0.05)
    r_low: float
    r_high: float
    converged: bool

    def evaluate(self, r):
        return ((self.c3 * r + self.c2) * r + self.c1) * r + self.c0


@dataclass
class RadiusDecision:
    radius: float
    case: int
    h: float

    @property
    def case_label(self) -> str:
        return CASE_LABELS[self.case]


def mean_curvature_from_volume(r: float, volume: float) -> float:
    """Ball-neighborhood mean curvature from the intersection volume."""
    return (4.0 / (math.pi * r ** 4)) * ((2.0 * math.pi / 3.0) * r ** 3 - volume)


def initial_scale(mesh: Mesh, adj: Adjacency, v: int) -> float:
    """Mean incident edge length of one vertex."""
    nbrs = adj.neighbors(v)
    if len(nbrs) == 0:
        raise MeshError(f"vertex {v} is isolated")
    return float(np.linalg.norm(mesh.vertices[nbrs] - mesh.vertices[v], axis=1).mean())


def initial_scales(mesh: Mesh, adj: Adjacency) -> np.ndarray:
    """Mean incident edge length per vertex (0 for isolated vertices)."""
    counts = np.diff(adj.neighbor_offsets)
    src = np.repeat(np.arange(mesh.n_vertices), counts)
    elen = np.linalg.norm(mesh.vertices[adj.neighbor_indices] - mesh.vertices[src],
                          axis=1)
    total = np.bincount(src, weights=elen, minlength=mesh.n_vertices)
    out = np.zeros(mesh.n_vertices)
    has = counts > 0
    out[has] = total[has] / counts[has]
    return out


def smooth_scales(scales: np.ndarray, adj: Adjacency, lam: float,
                  n_smooth: int) -> np.ndarray:
    """Synchronous Jacobi smoothing: s += lam * mean_neighbor_difference."""
    if not 0.0 < lam <= 1.0:
        raise ValueError("lam must be in (0, 1]")
    s = np.asarray(scales, np.float64).copy()
    counts = np.diff(adj.neighbor_offsets)
    src = np.repeat(np.arange(len(s)), counts)
    dst = adj.neighbor_indices
    has = counts > 0
    for _ in range(n_smooth):
        diff_sum = np.bincount(src, weights=s[dst] - s[src], minlength=len(s))
        nxt = s.copy()
        nxt[has] += lam * diff_sum[has] / counts[has]
        s = nxt
    return s


# ---------------------------------------------------------------------------
# per-vertex evaluation

def _template(subdivisions: int) -> SphereTemplate:
    tpl = _template_cache.get(subdivisions)
    if tpl is None:
        tpl = make_sphere_template(subdivisions)
        _template_cache[subdivisions] = tpl
    return tpl


_template_cache: dict[int, SphereTemplate] = {}


def mean_curvature_at(mesh: Mesh, adj: Adjacency, v: int, r: float,
                      params: ScaleParams | None = None,
                      sampler: PatchSampler | None = None,
                      template: SphereTemplate | None = None) -> float:
    """Single-radius ball mean curvature at one vertex."""
    params = params or ScaleParams()
    sampler = sampler or PatchSampler(mesh, adj)
    template = template or _template(params.sphere_subdivisions)
    region = sampler.grow(v, r)
    return _curvature_at_radius(sampler, template, region, r, params)[0]


def _curvature_at_radius(sampler, template, region, r, params):
    patch = sampler.patch_at(region, r)
    sphere_vol, behind_cnt, refined = sphere_side_volume(
        template, r, patch, params.border_depth, params.literal_behind_test)
    vol = assemble_volume(patch, sphere_vol, r, behind_cnt, refined)
    flags = (FLAG_OPEN_BOUNDARY * vol.open_boundary
             | FLAG_ORIENTATION * vol.orientation_error
             | FLAG_CLAMPED * vol.clamped)
    return mean_curvature_from_volume(r, vol.volume), flags


def sample_profile(mesh: Mesh, adj: Adjacency, v: int, s: float,
                   params: ScaleParams | None = None,
                   sampler: PatchSampler | None = None,
                   template: SphereTemplate | None = None) -> CurvatureProfile:
    """Mean and normalized curvature of one vertex over the radius ladder
    r_i = s * f_initial * f_inc^i."""
    if s <= 0.0:
        raise ValueError("scale must be positive")
    params = params or ScaleParams()
    sampler = sampler or PatchSampler(mesh, adj)
    template = template or _template(params.sphere_subdivisions)
    radii = params.radii_for(s)
    region = sampler.grow(v, radii[-1])
    h = np.empty(len(radii))
    flags = np.empty(len(radii), np.uint8)
    for i, r in enumerate(radii):
        h[i], flags[i] = _curvature_at_radius(sampler, template, region, r, params)
    return CurvatureProfile(v, radii, h, radii * h,
                            np.ones(len(radii), bool), flags)


def fit_cubic(profile: CurvatureProfile, fit_tol: float = 0.02) -> CubicFit:
    """Cubic least-squares fit of H_norm(r) with outlier removal.

    While the relative residual exceeds `fit_tol` and more than 5 samples
    remain, the largest-radius sample is dropped and the fit repeated.
    Updates profile.retained in place. The fit is computed in the
    scale-free variable r / r_0, so fitted radii and curvatures scale
    exactly with the mesh.
    """
    radii = profile.radii
    h_norm = profile.h_norm
    if profile.retained.sum() < 5:
        raise MeshError("need at least 5 retained samples for a cubic fit")
    retained = profile.retained
    r0 = radii[0]
    u = radii / r0
    while True:
        sel = np.nonzero(retained)[0]
        vand = np.vander(u[sel], 4, increasing=True)
        coef, *_ = np.linalg.lstsq(vand, h_norm[sel], rcond=None)
        resid = vand @ coef - h_norm[sel]
        rms = math.sqrt(float(np.mean(resid * resid)))
        span = float(h_norm[sel].max() - h_norm[sel].min())
        rel = rms / max(span, 0.05)
        if rel <= fit_tol or len(sel) <= 5:
            break
        retained[sel[-1]] = False
    profile.retained = retained
    return CubicFit(
        c0=float(coef[0]),
        c1=float(coef[1] / r0),
        c2=float(coef[2] / r0 ** 2),
        c3=float(coef[3] / r0 ** 3),
        residual=rel,
        r_low=float(radii[sel[0]]),
        r_high=float(radii[sel[-1]]),
        converged=rel <= fit_tol,
    )


def _derivative_roots(fit: CubicFit):
    """Real roots of the fit's derivative, plus a double root when the
    discriminant vanishes to relative 1e-9 (saddle candidate)."""
    a, b, c = 3.0 * fit.c3, 2.0 * fit.c2, fit.c1
    if a == 0.0:
        if b == 0.0:
            return [], None
        return [-c / b], None
    disc = b * b - 4.0 * a * c
    dscale = max(b * b, abs(4.0 * a * c))
    if dscale == 0.0:
        return [], -b / (2.0 * a)
    if abs(disc) <= 1e-9 * dscale:
        return [], -b / (2.0 * a)
    if disc < 0.0:
        return [], None
    sq = math.sqrt(disc)
    q = -(b + math.copysign(sq, b)) / 2.0
    return sorted((q / a, c / q)), None


def select_radius(fit: CubicFit, profile: CurvatureProfile,
                  params: ScaleParams) -> RadiusDecision:
    """Final radius from the fitted normalized-curvature curve."""
    sel = profile.retained
    sel_r = profile.radii[sel]
    sel_h = profile.h_norm[sel]
    r_low, r_high = fit.r_low, fit.r_high

    if params.planar_signed:
        planar_measure = abs(float(np.mean(sel_h)))
    else:
        planar_measure = float(np.mean(np.abs(sel_h)))

    if planar_measure <= params.t_p:
        below = np.abs(sel_h) <= params.t_p
        r_star = float(sel_r[below][-1]) if below.any() else r_low
        case = CASE_PLANAR
    else:
        roots, saddle = _derivative_roots(fit)
        inside = [x for x in roots if r_low < x < r_high]
        if inside:
            case = CASE_ONE_EXTREMUM if len(inside) == 1 else CASE_TWO_EXTREMA
            r_star = r_low + params.f_es * (inside[0] - r_low)
        elif saddle is not None and r_low < saddle < r_high:
            case = CASE_SADDLE
            r_star = r_low + params.f_es * (saddle - r_low)
        else:
            case = CASE_NO_EXTREMA
            r_star = 0.5 * (r_low + r_high)
    return RadiusDecision(r_star, case, fit.evaluate(r_star) / r_star)


# ---------------------------------------------------------------------------
# whole-field computation

@dataclass
class CurvatureField:
    """Per-vertex result of the adaptive pipeline."""

    h: np.ndarray
    radius: np.ndarray
    case: np.ndarray            # CASE_* codes, int
    scales: np.ndarray          # smoothed starting scales
    computed: np.ndarray        # False where filled from the nearest valid vertex
    profiles: list | None = None


@dataclass
class FixedRadiusField:
    """Single-radius baseline: raw ball curvature at one global radius."""

    h: np.ndarray
    planar: np.ndarray
    computed: np.ndarray
    radius: float


class _FieldContext:
    def __init__(self, mesh, adj, scales, valid, params, collect_profiles,
                 fixed_radius):
        self.mesh = mesh
        self.adj = adj
        self.scales = scales
        self.valid = valid
        self.params = params
        self.collect_profiles = collect_profiles
        self.fixed_radius = fixed_radius
        self.sampler = PatchSampler(mesh, adj)
        self.template = make_sphere_template(params.sphere_subdivisions)

    def run(self, start, stop):
        params = self.params
        n = stop - start
        h = np.full(n, np.nan)
        radius = np.full(n, np.nan)
        case = np.full(n, -1, np.int64)
        profiles = [] if self.collect_profiles else None
        for v in range(start, stop):
            if not self.valid[v]:
                continue
            i = v - start
            if self.fixed_radius is not None:
                r = self.fixed_radius
                hv, _ = _curvature_at_radius(
                    self.sampler, self.template,
                    self.sampler.grow(v, r), r, params)
                h[i] = hv
                radius[i] = r
                case[i] = CASE_PLANAR if abs(r * hv) <= params.t_p else CASE_NO_EXTREMA
                continue
            profile = sample_profile(self.mesh, self.adj, v, self.scales[v],
                                     params, self.sampler, self.template)
            fit = fit_cubic(profile, params.fit_tol)
            decision = select_radius(fit, profile, params)
            h[i] = decision.h
            radius[i] = decision.radius
            case[i] = decision.case
            if profiles is not None:
                profiles.append(profile)
        return h, radius, case, profiles


_CTX: _FieldContext | None = None


def _init_worker(payload):
    global _CTX
    _CTX = _FieldContext(*payload)


def _field_chunk(bounds):
    start, stop = bounds
    return start, _CTX.run(start, stop)


def _run_field(mesh, adj, scales, valid, params, workers, collect_profiles,
               fixed_radius):
    payload = (mesh, adj, scales, valid, params, collect_profiles, fixed_radius)
    n = mesh.n_vertices
    if workers <= 1:
        _init_worker(payload)
        results = [_field_chunk((0, n))]
    else:
        size = max(1, -(-n // (workers * 4)))
        chunks = [(s, min(s + size, n)) for s in range(0, n, size)]
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(workers, initializer=_init_worker,
                      initargs=(payload,)) as pool:
            results = pool.map(_field_chunk, chunks)

    h = np.full(n, np.nan)
    radius = np.full(n, np.nan)
    case = np.full(n, -1, np.int64)
    profiles = [] if collect_profiles else None
    for start, (hc, rc, cc, pc) in results:
        stop = start + len(hc)
        h[start:stop] = hc
        radius[start:stop] = rc
        case[start:stop] = cc
        if profiles is not None:
            profiles.extend(pc)
    return h, radius, case, profiles


def _fill_from_nearest(mesh, valid, arrays):
    """Copy values onto excluded vertices from their nearest valid vertex."""
    missing = ~valid
    if not missing.any():
        return
    vidx = np.nonzero(valid)[0]
    tree = cKDTree(mesh.vertices[vidx])
    _, nearest = tree.query(mesh.vertices[missing])
    src = vidx[nearest]
    for arr in arrays:
        arr[missing] = arr[src]


def valid_vertices(mesh: Mesh, adj: Adjacency) -> np.ndarray:
    """Vertices eligible for curvature evaluation: not isolated, not
    all-degenerate, not touching a non-manifold edge."""
    normals = mesh.vertex_normals
    if normals is None:
        normals = compute_vertex_normals(mesh)
    degree = np.diff(adj.neighbor_offsets)
    zero_normal = np.linalg.norm(normals, axis=1) == 0.0
    return (degree > 0) & ~zero_normal & ~adj.nonmanifold


def compute_curvature_field(mesh: Mesh, params: ScaleParams | None = None,
                            workers: int = 1,
                            collect_profiles: bool = False) -> CurvatureField:
    """Adaptive mean-curvature field over all vertices.

    Deterministic for a given mesh and parameters, independent of the
    worker count: every vertex is a pure function of the immutable inputs.
    """
    params = params or ScaleParams()
    if mesh.n_faces == 0:
        raise MeshError("mesh has no faces")
    adj = build_adjacency(mesh)
    compute_vertex_normals(mesh)
    valid = valid_vertices(mesh, adj)
    if not valid.any():
        raise MeshError("no vertex is eligible for curvature evaluation")
    s0 = initial_scales(mesh, adj)
    scales = smooth_scales(s0, adj, params.lam, params.n_smooth)

    h, radius, case, profiles = _run_field(
        mesh, adj, scales, valid, params, workers, collect_profiles, None)
    _fill_from_nearest(mesh, valid, (h, radius, case))
    return CurvatureField(h, radius, case, scales, valid.copy(), profiles)


def fixed_radius_field(mesh: Mesh, r: float, params: ScaleParams | None = None,
                       workers: int = 1) -> FixedRadiusField:
    """Single-scale baseline field at one global radius."""
    params = params or ScaleParams()
    if r <= 0.0:
        raise ValueError("radius must be positive")
    if mesh.n_faces == 0:
        raise MeshError("mesh has no faces")
    adj = build_adjacency(mesh)
    compute_vertex_normals(mesh)
    valid = valid_vertices(mesh, adj)
    if not valid.any():
        raise MeshError("no vertex is eligible for curvature evaluation")
    scales = np.full(mesh.n_vertices, r)

    h, _, case, _ = _run_field(mesh, adj, scales, valid, params, workers,
                               False, r)
    _fill_from_nearest(mesh, valid, (h, case))
    return FixedRadiusField(h, case == CASE_PLANAR, valid.copy(), r)
