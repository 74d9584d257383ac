"""Density-guided mesh decimation by edge collapse.

Collapse order is driven by squared edge length times the mean endpoint
density, so the result approaches a uniform vertex spacing modulated by
the prescribed density (an isotropic-remesher stand-in). Quadrics are
kept per vertex and used for placement of the merged vertex; collapses
that would flip a face normal or break the link condition are rejected.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .mesh import Mesh, MeshError, build_adjacency


class CollapseCandidate(NamedTuple):
    """Heap entry for one edge collapse; heap order is (priority, u, v).

    `cost` is the squared edge length; priority = cost * mean endpoint
    density. Entries whose stamps no longer match the endpoints are
    stale and skipped on pop.
    """

    priority: float
    u: int
    v: int
    stamp_u: int
    stamp_v: int
    cost: float
    weight: float


@dataclass
class SimplifyResult:
    mesh: Mesh
    early_stop: bool      # no valid collapse left before reaching the target
    collapses: int


def _vertex_quadrics(mesh: Mesh) -> np.ndarray:
    """Area-weighted fundamental quadrics summed per vertex."""
    a = mesh.vertices[mesh.faces[:, 0]]
    b = mesh.vertices[mesh.faces[:, 1]]
    c = mesh.vertices[mesh.faces[:, 2]]
    n = np.cross(b - a, c - a)
    norm = np.linalg.norm(n, axis=1)
    ok = norm > 0.0
    unit = np.zeros_like(n)
    unit[ok] = n[ok] / norm[ok, None]
    d = -np.einsum("ij,ij->i", unit, a)
    p = np.column_stack([unit, d])
    k = p[:, :, None] * p[:, None, :] * (0.5 * norm)[:, None, None]
    q = np.zeros((mesh.n_vertices, 4, 4))
    for j in range(3):
        np.add.at(q, mesh.faces[:, j], k)
    return q


def _optimal_point(q: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Quadric-minimizing position, midpoint when the system is
    near-singular (relative determinant below 1e-12)."""
    m = q[:3, :3]
    rhs = -q[:3, 3]
    det = np.linalg.det(m)
    scale = np.linalg.norm(m) / math.sqrt(3.0)
    if scale > 0.0 and abs(det) > 1e-12 * scale ** 3:
        return np.linalg.solve(m, rhs)
    return 0.5 * (a + b)


def _optimal_on_segment(q: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Quadric minimum constrained to the segment a-b (boundary edges)."""
    ah = np.append(a, 1.0)
    dh = np.append(b - a, 0.0)
    denom = dh @ q @ dh
    if denom <= 1e-300:
        t = 0.5
    else:
        t = float(np.clip(-(dh @ q @ ah) / denom, 0.0, 1.0))
    return a + t * (b - a)


def simplify(mesh: Mesh, density: np.ndarray | None = None,
             target_vertices: int = 0,
             preserve_boundary: bool = True) -> SimplifyResult:
    """Collapse edges in ascending (length^2 * mean density) order until
    `target_vertices` remain.

    The merged vertex takes the quadric-optimal position and the max of
    the endpoint densities. With `preserve_boundary`, boundary edges only
    collapse along the boundary polyline and interior endpoints snap to
    their boundary partner.
    """
    n = mesh.n_vertices
    if mesh.n_faces == 0:
        raise MeshError("mesh has no faces")
    if not 4 <= target_vertices <= n:
        raise ValueError(f"target_vertices must be in [4, {n}]")
    if density is None:
        density = np.ones(n)
    density = np.asarray(density, np.float64).copy()
    if len(density) != n:
        raise ValueError("density length must match vertex count")

    if target_vertices == n:
        return SimplifyResult(mesh.copy(), False, 0)

    adj = build_adjacency(mesh)
    pos = mesh.vertices.copy()
    faces = mesh.faces.copy()
    quadric = _vertex_quadrics(mesh)
    boundary = adj.boundary.copy()

    alive_v = np.ones(n, bool)
    alive_v[np.diff(adj.neighbor_offsets) == 0] = False  # isolated never counted
    alive_f = np.ones(len(faces), bool)
    nbrs = [set(map(int, adj.neighbors(v))) for v in range(n)]
    vfaces = [set(map(int, adj.vertex_faces(v))) for v in range(n)]
    stamp = np.zeros(n, np.int64)

    heap: list[tuple] = []

    def push(u, v):
        if u > v:
            u, v = v, u
        d2 = float(((pos[u] - pos[v]) ** 2).sum())
        w = 0.5 * (density[u] + density[v])
        heapq.heappush(heap, CollapseCandidate(d2 * w, u, v, int(stamp[u]),
                                               int(stamp[v]), d2, w))

    seen = set()
    for v in range(n):
        for w in nbrs[v]:
            if v < w:
                seen.add((v, w))
    for u, v in sorted(seen):
        push(u, v)

    n_alive = int(alive_v.sum())
    collapses = 0

    while n_alive > target_vertices and heap:
        cand = heapq.heappop(heap)
        u, v, su, sv = cand.u, cand.v, cand.stamp_u, cand.stamp_v
        if not (alive_v[u] and alive_v[v]):
            continue
        if su != stamp[u] or sv != stamp[v]:
            continue
        if v not in nbrs[u]:
            continue

        shared = vfaces[u] & vfaces[v]
        if len(shared) not in (1, 2):
            continue  # non-manifold fan: leave it alone
        opposite = set()
        for f in shared:
            for w in faces[f]:
                w = int(w)
                if w != u and w != v:
                    opposite.add(w)
        if (nbrs[u] & nbrs[v]) != opposite:
            continue  # link condition

        edge_boundary = len(shared) == 1
        bu, bv = bool(boundary[u]), bool(boundary[v])
        if preserve_boundary:
            if bu and bv and not edge_boundary:
                continue
            if edge_boundary:
                point = _optimal_on_segment(quadric[u] + quadric[v], pos[u], pos[v])
            elif bu:
                point = pos[u].copy()
            elif bv:
                point = pos[v].copy()
            else:
                point = _optimal_point(quadric[u] + quadric[v], pos[u], pos[v])
        else:
            point = _optimal_point(quadric[u] + quadric[v], pos[u], pos[v])

        # reject if any surviving face flips or degenerates
        ok = True
        for f in (vfaces[u] | vfaces[v]) - shared:
            tri = faces[f]
            old = np.cross(pos[tri[1]] - pos[tri[0]], pos[tri[2]] - pos[tri[0]])
            coords = [point if int(w) in (u, v) else pos[int(w)] for w in tri]
            new = np.cross(coords[1] - coords[0], coords[2] - coords[0])
            if float(old @ new) <= 0.0:
                ok = False
                break
        if not ok:
            continue

        # commit: v merges into u
        pos[u] = point
        quadric[u] += quadric[v]
        density[u] = max(density[u], density[v])
        boundary[u] = bu or bv
        for f in shared:
            alive_f[f] = False
            for w in faces[f]:
                vfaces[int(w)].discard(f)
        for f in vfaces[v]:
            faces[f][faces[f] == v] = u
            vfaces[u].add(f)
        vfaces[v].clear()
        for w in nbrs[v]:
            if w == u:
                continue
            nbrs[w].discard(v)
            nbrs[w].add(u)
            nbrs[u].add(w)
        nbrs[u].discard(v)
        nbrs[v].clear()
        alive_v[v] = False
        stamp[u] += 1
        stamp[v] += 1
        n_alive -= 1
        collapses += 1
        for w in sorted(nbrs[u]):
            push(u, w)

    keep = np.nonzero(alive_v)[0]
    remap = np.full(n, -1, np.int64)
    remap[keep] = np.arange(len(keep))
    out_faces = remap[faces[alive_f]]
    out = Mesh(pos[keep], out_faces)
    out.scalars["density"] = density[keep]
    return SimplifyResult(out, early_stop=n_alive > target_vertices,
                          collapses=collapses)
