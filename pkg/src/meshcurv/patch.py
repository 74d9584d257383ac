"""Circular surface patch extraction by region growing with ball clipping.

Growth starts at a center vertex and admits a face as soon as any of its
vertices is reachable through vertices inside the radius; straddling
faces are clipped against the sphere. One growth pass at the largest
radius of interest serves every smaller radius, so the per-vertex
multi-radius sampling in the curvature pipeline grows each region once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .mesh import Adjacency, Mesh, MeshError

# relative tolerances, all scaled by the ball radius
_EPS_REL = 1e-6
_MIN_NORMAL_REL = 1e-14  # drop clipped slivers with |n| below this * r^2


@dataclass
class SurfacePatch:
    """Clipped mesh surface inside a ball, translated so the center is at
    the origin. Face normals are unnormalized (b-a)x(c-a); vertex normals
    unit length."""

    vertices: np.ndarray
    faces: np.ndarray
    face_normals: np.ndarray
    vertex_normals: np.ndarray
    open_boundary: bool

    @property
    def n_faces(self) -> int:
        return len(self.faces)


def _edge_sphere_t(a: np.ndarray, b: np.ndarray, r: float) -> np.ndarray:
    """Parameter of the sphere crossing on segments a->b (a inside,
    b outside), centered coordinates. Smallest positive root, clipped
    to [0, 1]; rounding near tangency collapses to the vertex test."""
    d = b - a
    qa = np.einsum("ij,ij->i", d, d)
    qb = 2.0 * np.einsum("ij,ij->i", a, d)
    qc = np.einsum("ij,ij->i", a, a) - r * r
    disc = np.maximum(qb * qb - 4.0 * qa * qc, 0.0)
    sq = np.sqrt(disc)
    # qa > 0 (a inside, b outside); qb + sq > 0 whenever qb > 0; the
    # unselected branch may divide by zero, which where() discards
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(qb <= 0.0, (-qb + sq) / (2.0 * qa), -2.0 * qc / (qb + sq))
    return np.clip(t, 0.0, 1.0)


def clip_face(triangle, center, r: float) -> list[np.ndarray]:
    """Clip one triangle against the ball |x - center| <= r.

    Returns 0-2 triangles in the original coordinate frame: the input
    (all inside), two triangles (one vertex outside), one corner triangle
    (two outside), or nothing.
    """
    tri = np.asarray(triangle, dtype=np.float64) - np.asarray(center, dtype=np.float64)
    dist = np.linalg.norm(tri, axis=1)
    inside = dist <= r
    n_in = int(inside.sum())
    if n_in == 3:
        return [tri + center]
    if n_in == 0:
        return []
    if n_in == 1:
        k = int(np.argmax(inside))
        v0, v1, v2 = tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]
        t01 = _edge_sphere_t(v0[None], v1[None], r)[0]
        t02 = _edge_sphere_t(v0[None], v2[None], r)[0]
        p01 = v0 + t01 * (v1 - v0)
        p20 = v0 + t02 * (v2 - v0)
        return [np.stack([v0, p01, p20]) + center]
    # one vertex outside: rotate it into slot 2
    k = int(np.argmax(~inside))
    v0, v1, v2 = tri[(k + 1) % 3], tri[(k + 2) % 3], tri[k]
    t12 = _edge_sphere_t(v1[None], v2[None], r)[0]
    t02 = _edge_sphere_t(v0[None], v2[None], r)[0]
    p12 = v1 + t12 * (v2 - v1)
    p20 = v0 + t02 * (v2 - v0)
    return [np.stack([v0, v1, p12]) + center,
            np.stack([v0, p12, p20]) + center]


@dataclass
class GrownRegion:
    """Result of one growth pass around a center, valid for any radius up
    to `rmax`. Faces are sorted by their admission radius (gate)."""

    center: int
    center_pos: np.ndarray
    rmax: float
    face_ids: np.ndarray        # (K,) source face indices, gate-sorted
    face_gates: np.ndarray      # (K,) admission radii, ascending
    face_verts: np.ndarray      # (K, 3) global vertex ids
    face_coords: np.ndarray     # (K, 3, 3) centered positions
    face_dists: np.ndarray      # (K, 3) vertex distances to the center
    boundary_gates: np.ndarray  # (B,) gate of the face owning each boundary edge
    boundary_dists: np.ndarray  # (B,) point-segment distance to the center


class PatchSampler:
    """Extracts surface patches around mesh vertices.

    Holds the immutable mesh-side arrays plus scratch buffers, so one
    sampler serves many centers (and one grown region serves many radii).
    """

    def __init__(self, mesh: Mesh, adj: Adjacency):
        self.mesh = mesh
        self.adj = adj
        self.positions = mesh.vertices
        self.faces = mesh.faces
        self.tree = cKDTree(mesh.vertices)
        n = mesh.n_vertices
        # scratch: per-vertex gate values, reset after each grow
        self._gate = np.full(n, np.inf)
        self._edge_src, self._edge_dst = self._build_edge_arrays()

    def _build_edge_arrays(self):
        off = self.adj.neighbor_offsets
        counts = np.diff(off)
        src = np.repeat(np.arange(len(counts), dtype=np.int64), counts)
        return src, self.adj.neighbor_indices

    def _csr_take(self, offsets, data, ids):
        counts = offsets[ids + 1] - offsets[ids]
        total = int(counts.sum())
        if total == 0:
            return np.empty(0, np.int64), np.empty(0, np.int64)
        starts = offsets[ids]
        shift = np.concatenate(([0], np.cumsum(counts)[:-1]))
        flat = np.repeat(starts - shift, counts) + np.arange(total)
        return data[flat], np.repeat(ids, counts)

    def grow(self, center: int, rmax: float) -> GrownRegion:
        """Minimax-distance growth: a vertex joins at gate g(v) = the
        smallest radius at which a chain of inside-radius vertices from
        the center reaches it."""
        if rmax <= 0.0:
            raise ValueError("radius must be positive")
        adj = self.adj
        if adj.face_offsets[center + 1] == adj.face_offsets[center]:
            raise MeshError(f"vertex {center} has no incident faces")
        c = self.positions[center]

        cand = self.tree.query_ball_point(c, rmax)
        cand = np.sort(np.asarray(cand, dtype=np.int64))
        dist = np.linalg.norm(self.positions[cand] - c, axis=1)

        # local edge list restricted to candidates
        nbr, src = self._csr_take(adj.neighbor_offsets, adj.neighbor_indices, cand)
        gate = self._gate
        local = np.full(len(gate), -1, np.int64)
        local[cand] = np.arange(len(cand))
        keep = local[nbr] >= 0
        e_src = local[src[keep]]
        e_dst = local[nbr[keep]]

        g = np.full(len(cand), np.inf)
        g[local[center]] = 0.0
        d_dst = dist[e_dst]
        while True:
            relaxed = np.maximum(g[e_src], d_dst)
            before = g.copy()
            np.minimum.at(g, e_dst, relaxed)
            if np.array_equal(g, before):
                break

        reached = np.isfinite(g)
        rv = cand[reached]
        gate[rv] = g[reached]

        # all faces incident to a reached vertex
        f_all, _ = self._csr_take(adj.face_offsets, adj.face_indices, rv)
        f_ids = np.unique(f_all)
        fv = self.faces[f_ids]
        f_gates = gate[fv].min(axis=1)

        order = np.lexsort((f_ids, f_gates))
        f_ids = f_ids[order]
        f_gates = f_gates[order]
        fv = fv[order]
        coords = self.positions[fv] - c
        dists = np.linalg.norm(coords, axis=2)

        # boundary edges owned by region faces, with their admission gates
        bmask = adj.face_boundary_edges[f_ids]
        bf, bk = np.nonzero(bmask)
        if len(bf):
            e0 = coords[bf, bk]
            e1 = coords[bf, (bk + 1) % 3]
            seg = e1 - e0
            denom = np.einsum("ij,ij->i", seg, seg)
            t = np.clip(-np.einsum("ij,ij->i", e0, seg) / np.maximum(denom, 1e-300), 0.0, 1.0)
            bdist = np.linalg.norm(e0 + t[:, None] * seg, axis=1)
            bgates = f_gates[bf]
        else:
            bdist = np.empty(0)
            bgates = np.empty(0)

        gate[rv] = np.inf  # reset scratch
        return GrownRegion(center, c, rmax, f_ids, f_gates, fv, coords, dists,
                           bgates, bdist)

    def patch_at(self, region: GrownRegion, r: float) -> SurfacePatch:
        """Build the clipped patch for one radius from a grown region."""
        if r <= 0.0:
            raise ValueError("radius must be positive")
        if r > region.rmax * (1.0 + 1e-12):
            raise ValueError(f"radius {r} exceeds grown region rmax {region.rmax}")

        k = int(np.searchsorted(region.face_gates, r, side="right"))
        fv = region.face_verts[:k]
        coords = region.face_coords[:k]
        inside = region.face_dists[:k] <= r
        n_in = inside.sum(axis=1)

        full = n_in == 3
        one_out = n_in == 2
        two_out = n_in == 1

        rows1 = np.nonzero(two_out)[0]
        rows2 = np.nonzero(one_out)[0]

        # rotate: two_out -> inside vertex to slot 0; one_out -> outside to slot 2
        k1 = np.argmax(inside[rows1], axis=1)
        perm1 = (k1[:, None] + np.arange(3)) % 3
        ids1 = fv[rows1[:, None], perm1]
        co1 = coords[rows1[:, None], perm1]

        k2 = np.argmax(~inside[rows2], axis=1)
        perm2 = (k2[:, None] + np.array([1, 2, 0])) % 3
        ids2 = fv[rows2[:, None], perm2]
        co2 = coords[rows2[:, None], perm2]

        # sphere crossings; params measured from the inside endpoint
        cross_a = np.concatenate([co1[:, 0], co1[:, 0], co2[:, 1], co2[:, 0]])
        cross_b = np.concatenate([co1[:, 1], co1[:, 2], co2[:, 2], co2[:, 2]])
        key_a = np.concatenate([ids1[:, 0], ids1[:, 0], ids2[:, 1], ids2[:, 0]])
        key_b = np.concatenate([ids1[:, 1], ids1[:, 2], ids2[:, 2], ids2[:, 2]])
        if len(cross_a):
            t = _edge_sphere_t(cross_a, cross_b, r)
            cross_p = cross_a + t[:, None] * (cross_b - cross_a)
        else:
            cross_p = np.empty((0, 3))

        keys = np.stack([np.minimum(key_a, key_b), np.maximum(key_a, key_b)], axis=1)
        uniq_keys, rim_of_cross = (np.unique(keys, axis=0, return_inverse=True)
                                   if len(keys) else (np.empty((0, 2), np.int64),
                                                      np.empty(0, np.int64)))
        rim_points = np.empty((len(uniq_keys), 3))
        rim_points[rim_of_cross] = cross_p

        # original vertices used by the patch
        used_ids = np.concatenate([fv[full].ravel(), ids1[:, 0], ids2[:, 0], ids2[:, 1]])
        orig_ids = np.unique(used_ids)
        n_orig = len(orig_ids)

        def loc(ids):
            return np.searchsorted(orig_ids, ids)

        n1 = len(rows1)
        rim1a = n_orig + rim_of_cross[0:n1]
        rim1b = n_orig + rim_of_cross[n1:2 * n1]
        rim2a = n_orig + rim_of_cross[2 * n1:2 * n1 + len(rows2)]
        rim2b = n_orig + rim_of_cross[2 * n1 + len(rows2):]

        tri_full = loc(fv[full])
        tri_corner = np.stack([loc(ids1[:, 0]), rim1a, rim1b], axis=1)
        tri_quad_a = np.stack([loc(ids2[:, 0]), loc(ids2[:, 1]), rim2a], axis=1)
        tri_quad_b = np.stack([loc(ids2[:, 0]), rim2a, rim2b], axis=1)
        tris = np.concatenate([tri_full.reshape(-1, 3), tri_corner,
                               tri_quad_a, tri_quad_b]).astype(np.int64)

        verts = np.concatenate([self.positions[orig_ids] - region.center_pos,
                                rim_points])

        u = verts[tris[:, 1]] - verts[tris[:, 0]]
        w = verts[tris[:, 2]] - verts[tris[:, 0]]
        fn = np.empty_like(u)
        fn[:, 0] = u[:, 1] * w[:, 2] - u[:, 2] * w[:, 1]
        fn[:, 1] = u[:, 2] * w[:, 0] - u[:, 0] * w[:, 2]
        fn[:, 2] = u[:, 0] * w[:, 1] - u[:, 1] * w[:, 0]
        ok = np.einsum("ij,ij->i", fn, fn) > (_MIN_NORMAL_REL * r * r) ** 2
        tris = tris[ok]
        fn = fn[ok]
        if len(tris) == 0:
            raise MeshError(f"empty patch at vertex {region.center}, radius {r}")

        # drop unreferenced vertices
        ref = np.unique(tris.ravel())
        remap = np.full(len(verts), -1, np.int64)
        remap[ref] = np.arange(len(ref))
        verts = verts[ref]
        tris = remap[tris]

        flat = tris.ravel()
        nv = len(verts)
        vn = np.empty_like(verts)
        for kk in range(3):
            vn[:, kk] = np.bincount(flat, weights=np.repeat(fn[:, kk], 3),
                                    minlength=nv)
        norms = np.sqrt(np.einsum("ij,ij->i", vn, vn))
        good = norms > 0.0
        vn[good] /= norms[good, None]

        open_boundary = bool(np.any((region.boundary_gates <= r)
                                    & (region.boundary_dists < r * (1.0 - _EPS_REL))))
        return SurfacePatch(verts, tris, fn, vn, open_boundary)


def extract_patch(mesh: Mesh, adj: Adjacency, center: int, r: float) -> SurfacePatch:
    """Patch of all mesh surface within Euclidean radius r of a vertex."""
    sampler = PatchSampler(mesh, adj)
    region = sampler.grow(center, r)
    return sampler.patch_at(region, r)
