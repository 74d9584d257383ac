"""Fused sphere-side volume kernel (numba).

Single compiled pass per (vertex, radius) evaluation: classify template
vertices, refine border faces level by level, and accumulate the
spherical cone volume of every behind face. Results match the reference
pipeline (`refine_and_collect` + `spherical_cone_volume`) up to
summation order; the kernel is single-threaded and branch-deterministic,
so identical inputs give bitwise-identical outputs in every process.

The nearest-patch-vertex search is exact: a uniform grid over the patch
vertices with a ring-expansion search, ties resolved to the smallest
vertex index (same rule as the brute-force scan). Midpoints shared by
neighboring border faces are classified once per refinement level.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np

_SMALL_PATCH = 64   # below this, a plain scan beats the grid
_VCAP = 65536       # refinement vertex-table capacity
_FCAP = 16384       # mixed faces per level


@nb.njit(cache=True)
def _nearest(qx, qy, qz, pts, starts, counts, order, lox, loy, loz,
             inv_h, ncx, ncy, ncz):
    n = pts.shape[0]
    best = -1
    best_d2 = np.inf
    if n <= _SMALL_PATCH or ncx == 0:
        for i in range(n):
            dx = pts[i, 0] - qx
            dy = pts[i, 1] - qy
            dz = pts[i, 2] - qz
            d2 = dx * dx + dy * dy + dz * dz
            if d2 < best_d2 or (d2 == best_d2 and i < best):
                best_d2 = d2
                best = i
        return best

    # base cell left unclamped: shells outside the grid clamp to empty
    # per-axis ranges and cost nothing
    h = 1.0 / inv_h
    gx = (qx - lox) * inv_h
    gy = (qy - loy) * inv_h
    gz = (qz - loz) * inv_h
    cx = int(math.floor(gx))
    cy = int(math.floor(gy))
    cz = int(math.floor(gz))

    # distance from q to the nearest wall of its cell, in cells
    fx = gx - cx
    if 1.0 - fx < fx:
        fx = 1.0 - fx
    fy = gy - cy
    if 1.0 - fy < fy:
        fy = 1.0 - fy
    fz = gz - cz
    if 1.0 - fz < fz:
        fz = 1.0 - fz
    wall = fx
    if fy < wall:
        wall = fy
    if fz < wall:
        wall = fz
    if wall < 0.0:
        wall = 0.0

    ring_hi = max(cx, ncx - 1 - cx, cy, ncy - 1 - cy, cz, ncz - 1 - cz)
    for ring in range(ring_hi + 1):
        x0, x1 = cx - ring, cx + ring
        y0, y1 = cy - ring, cy + ring
        z0, z1 = cz - ring, cz + ring
        for ix in range(max(x0, 0), min(x1, ncx - 1) + 1):
            on_x = ix == x0 or ix == x1
            for iy in range(max(y0, 0), min(y1, ncy - 1) + 1):
                on_y = iy == y0 or iy == y1
                for iz in range(max(z0, 0), min(z1, ncz - 1) + 1):
                    if ring > 0 and not (on_x or on_y or iz == z0 or iz == z1):
                        continue
                    cell = (ix * ncy + iy) * ncz + iz
                    s = starts[cell]
                    for k in range(s, s + counts[cell]):
                        i = order[k]
                        dx = pts[i, 0] - qx
                        dy = pts[i, 1] - qy
                        dz = pts[i, 2] - qz
                        d2 = dx * dx + dy * dy + dz * dz
                        if d2 < best_d2 or (d2 == best_d2 and i < best):
                            best_d2 = d2
                            best = i
        # any point in an unscanned shell differs from q by at least
        # (ring + wall) * h along some axis
        if best >= 0:
            safe = (ring + wall) * h
            if best_d2 <= safe * safe:
                break
    return best


@nb.njit(cache=True)
def _nearest2(qx, qy, qz, pts, starts, counts, order, lox, loy, loz,
              inv_h, ncx, ncy, ncz):
    """Nearest index plus the distances of the two closest points."""
    n = pts.shape[0]
    best = -1
    d1 = np.inf
    d2 = np.inf
    if n <= _SMALL_PATCH or ncx == 0:
        for i in range(n):
            dx = pts[i, 0] - qx
            dy = pts[i, 1] - qy
            dz = pts[i, 2] - qz
            dd = dx * dx + dy * dy + dz * dz
            if dd < d1 or (dd == d1 and i < best):
                d2 = d1
                d1 = dd
                best = i
            elif dd < d2:
                d2 = dd
        return best, d1, d2

    h = 1.0 / inv_h
    gx = (qx - lox) * inv_h
    gy = (qy - loy) * inv_h
    gz = (qz - loz) * inv_h
    cx = int(math.floor(gx))
    cy = int(math.floor(gy))
    cz = int(math.floor(gz))
    fx = gx - cx
    if 1.0 - fx < fx:
        fx = 1.0 - fx
    fy = gy - cy
    if 1.0 - fy < fy:
        fy = 1.0 - fy
    fz = gz - cz
    if 1.0 - fz < fz:
        fz = 1.0 - fz
    wall = min(fx, fy, fz)
    if wall < 0.0:
        wall = 0.0

    ring_hi = max(cx, ncx - 1 - cx, cy, ncy - 1 - cy, cz, ncz - 1 - cz)
    for ring in range(ring_hi + 1):
        x0, x1 = cx - ring, cx + ring
        y0, y1 = cy - ring, cy + ring
        z0, z1 = cz - ring, cz + ring
        for ix in range(max(x0, 0), min(x1, ncx - 1) + 1):
            on_x = ix == x0 or ix == x1
            for iy in range(max(y0, 0), min(y1, ncy - 1) + 1):
                on_y = iy == y0 or iy == y1
                for iz in range(max(z0, 0), min(z1, ncz - 1) + 1):
                    if ring > 0 and not (on_x or on_y or iz == z0 or iz == z1):
                        continue
                    cell = (ix * ncy + iy) * ncz + iz
                    s = starts[cell]
                    for k in range(s, s + counts[cell]):
                        i = order[k]
                        dx = pts[i, 0] - qx
                        dy = pts[i, 1] - qy
                        dz = pts[i, 2] - qz
                        dd = dx * dx + dy * dy + dz * dz
                        if dd < d1 or (dd == d1 and i < best):
                            d2 = d1
                            d1 = dd
                            best = i
                        elif dd < d2:
                            d2 = dd
        if best >= 0 and np.isfinite(d2):
            safe = (ring + wall) * h
            if d2 <= safe * safe:
                break
    return best, d1, d2


@nb.njit(cache=True, inline="always")
def _behind_idx(qx, qy, qz, w, pts, nrm, literal):
    if literal:
        qn = math.sqrt(qx * qx + qy * qy + qz * qz)
        if qn <= 0.0:
            qn = 1.0
        return (qx * nrm[w, 0] + qy * nrm[w, 1] + qz * nrm[w, 2]) / qn <= 0.0
    return ((qx - pts[w, 0]) * nrm[w, 0] + (qy - pts[w, 1]) * nrm[w, 1]
            + (qz - pts[w, 2]) * nrm[w, 2]) <= 0.0


@nb.njit(cache=True, inline="always")
def _omega(ax, ay, az, bx, by, bz, cx, cy, cz, r):
    triple = (ax * (by * cz - bz * cy) + ay * (bz * cx - bx * cz)
              + az * (bx * cy - by * cx))
    dots = (ax * bx + ay * by + az * bz + ax * cx + ay * cy + az * cz
            + bx * cx + by * cy + bz * cz)
    return 2.0 * math.atan2(triple, r * (r * r + dots))


@nb.njit(cache=True)
def _sphere_side(tpl_verts, tpl_faces, vflags0, r, pts, nrm, depth, literal,
                 starts, counts, order, lox, loy, loz, inv_h,
                 ncx, ncy, ncz, vx, vy, vz, vb, cur, nxt, curl, nxtl,
                 midid, hkey, hval):
    """Returns (omega_sum, behind_count, refined_count, overflow_flag).

    Template-vertex flags are precomputed (vectorized) by the caller; the
    kernel classifies only refinement points, which sit near the border
    and resolve within a grid ring or two. Once a border face provably
    lies inside a single Voronoi cell of the patch vertices (two-minimum
    margin test at its centroid), all its descendants classify with one
    plane dot against that vertex, which is where most of the depth-6
    work lands. All work arrays are caller-provided scratch.
    """
    nv0 = tpl_verts.shape[0]
    for i in range(nv0):
        vx[i] = tpl_verts[i, 0] * r
        vy[i] = tpl_verts[i, 1] * r
        vz[i] = tpl_verts[i, 2] * r
        vb[i] = vflags0[i]
    nverts = nv0

    ncur = 0
    omega = 0.0
    behind_cnt = 0
    refined = 0

    for f in range(tpl_faces.shape[0]):
        a, b, c = tpl_faces[f, 0], tpl_faces[f, 1], tpl_faces[f, 2]
        s = int(vb[a]) + int(vb[b]) + int(vb[c])
        if s == 3:
            omega += _omega(vx[a], vy[a], vz[a], vx[b], vy[b], vz[b],
                            vx[c], vy[c], vz[c], r)
            behind_cnt += 1
        elif s > 0:
            cur[ncur, 0] = a
            cur[ncur, 1] = b
            cur[ncur, 2] = c
            curl[ncur] = -1
            ncur += 1
            if ncur >= _FCAP:
                return omega, behind_cnt, refined, 1

    hmask = hkey.shape[0] - 1
    for level in range(depth):
        if ncur == 0:
            break

        # Voronoi-cell lock: strict margin so no nearest tie is possible
        # anywhere inside the face's spherical triangle
        if level >= 2:
            for i in range(ncur):
                if curl[i] >= 0:
                    continue
                a, b, c = cur[i, 0], cur[i, 1], cur[i, 2]
                ccx = (vx[a] + vx[b] + vx[c]) / 3.0
                ccy = (vy[a] + vy[b] + vy[c]) / 3.0
                ccz = (vz[a] + vz[b] + vz[c]) / 3.0
                rc2 = 0.0
                for k in range(3):
                    idx = cur[i, k]
                    dx = vx[idx] - ccx
                    dy = vy[idx] - ccy
                    dz = vz[idx] - ccz
                    dd = dx * dx + dy * dy + dz * dz
                    if dd > rc2:
                        rc2 = dd
                # every descendant point stays within the spherical-cap
                # bulge over the chord triangle: radius <= circumradius
                # plus (r - distance of the chord plane from the origin)
                e1x, e1y, e1z = vx[b] - vx[a], vy[b] - vy[a], vz[b] - vz[a]
                e2x, e2y, e2z = vx[c] - vx[a], vy[c] - vy[a], vz[c] - vz[a]
                nx_ = e1y * e2z - e1z * e2y
                ny_ = e1z * e2x - e1x * e2z
                nz_ = e1x * e2y - e1y * e2x
                nn = math.sqrt(nx_ * nx_ + ny_ * ny_ + nz_ * nz_)
                if nn <= 0.0:
                    continue
                d_plane = abs(vx[a] * nx_ + vy[a] * ny_ + vz[a] * nz_) / nn
                rho = math.sqrt(rc2) + (r - d_plane)
                w, d1, d2 = _nearest2(ccx, ccy, ccz, pts, starts, counts,
                                      order, lox, loy, loz, inv_h,
                                      ncx, ncy, ncz)
                if np.isfinite(d2) and math.sqrt(d2) - math.sqrt(d1) > 2.0 * rho:
                    curl[i] = w

        # classify each unique edge midpoint once per level; dedup via an
        # open-addressing table keyed by the endpoint id pair
        used = midid  # reused as the list of occupied hash slots
        nused = 0
        for i in range(ncur):
            lock = curl[i]
            for k in range(3):
                a = cur[i, k]
                b = cur[i, (k + 1) % 3] if k < 2 else cur[i, 0]
                if a > b:
                    a, b = b, a
                key = a * _VCAP + b
                hh = (np.uint64(key) * np.uint64(0x9E3779B97F4A7C15)) >> np.uint64(44)
                j = np.int64(hh) & hmask
                while True:
                    kj = hkey[j]
                    if kj == key:
                        break
                    if kj == -1:
                        if nverts >= _VCAP or nused >= midid.shape[0]:
                            return omega, behind_cnt, refined, 1
                        mx = vx[a] + vx[b]
                        my = vy[a] + vy[b]
                        mz = vz[a] + vz[b]
                        sc = r / math.sqrt(mx * mx + my * my + mz * mz)
                        mx *= sc
                        my *= sc
                        mz *= sc
                        if lock >= 0:
                            w = lock
                        else:
                            w = _nearest(mx, my, mz, pts, starts, counts,
                                         order, lox, loy, loz, inv_h,
                                         ncx, ncy, ncz)
                        vx[nverts] = mx
                        vy[nverts] = my
                        vz[nverts] = mz
                        vb[nverts] = _behind_idx(mx, my, mz, w, pts, nrm,
                                                 literal)
                        hkey[j] = key
                        hval[j] = nverts
                        used[nused] = j
                        nused += 1
                        nverts += 1
                        break
                    j = (j + 1) & hmask

        nnxt = 0
        for i in range(ncur):
            a, b, c = cur[i, 0], cur[i, 1], cur[i, 2]
            lock = curl[i]
            overflow = False
            for k in range(3):
                pa = a if k == 0 else (b if k == 1 else c)
                pb = b if k == 0 else (c if k == 1 else a)
                if pa > pb:
                    pa, pb = pb, pa
                key = pa * _VCAP + pb
                hh = (np.uint64(key) * np.uint64(0x9E3779B97F4A7C15)) >> np.uint64(44)
                j = np.int64(hh) & hmask
                while hkey[j] != key:
                    j = (j + 1) & hmask
                if k == 0:
                    m01 = hval[j]
                elif k == 1:
                    m12 = hval[j]
                else:
                    m20 = hval[j]
            for child in range(4):
                if child == 0:
                    p0, p1, p2 = a, m01, m20
                elif child == 1:
                    p0, p1, p2 = m01, b, m12
                elif child == 2:
                    p0, p1, p2 = m20, m12, c
                else:
                    p0, p1, p2 = m01, m12, m20
                s = int(vb[p0]) + int(vb[p1]) + int(vb[p2])
                if s == 3:
                    omega += _omega(vx[p0], vy[p0], vz[p0], vx[p1], vy[p1],
                                    vz[p1], vx[p2], vy[p2], vz[p2], r)
                    behind_cnt += 1
                    refined += 1
                elif s > 0:
                    nxt[nnxt, 0] = p0
                    nxt[nnxt, 1] = p1
                    nxt[nnxt, 2] = p2
                    nxtl[nnxt] = lock
                    nnxt += 1
                    if nnxt >= _FCAP:
                        overflow = True
                        break
            if overflow:
                return omega, behind_cnt, refined, 1
        # clear only the hash slots this level used
        for u in range(nused):
            hkey[used[u]] = -1
        tmp = cur
        cur = nxt
        nxt = tmp
        tmpl = curl
        curl = nxtl
        nxtl = tmpl
        ncur = nnxt

    # leaves still mixed at max depth: keep if the centroid is behind
    for i in range(ncur):
        a, b, c = cur[i, 0], cur[i, 1], cur[i, 2]
        ccx = (vx[a] + vx[b] + vx[c]) / 3.0
        ccy = (vy[a] + vy[b] + vy[c]) / 3.0
        ccz = (vz[a] + vz[b] + vz[c]) / 3.0
        if curl[i] >= 0:
            w = curl[i]
        else:
            w = _nearest(ccx, ccy, ccz, pts, starts, counts, order,
                         lox, loy, loz, inv_h, ncx, ncy, ncz)
        if _behind_idx(ccx, ccy, ccz, w, pts, nrm, literal):
            omega += _omega(vx[a], vy[a], vz[a], vx[b], vy[b], vz[b],
                            vx[c], vy[c], vz[c], r)
            behind_cnt += 1
            refined += 1

    return omega, behind_cnt, refined, 0


_EMPTY_I8 = np.empty(0, np.int64)


def _grid(pts: np.ndarray):
    """Uniform cell grid over the patch vertices (about 1-2 per cell;
    patch vertices sample a surface, so cell count scales with sqrt n)."""
    n = len(pts)
    if n <= _SMALL_PATCH:
        return _EMPTY_I8, _EMPTY_I8, _EMPTY_I8, 0.0, 0.0, 0.0, 1.0, 0, 0, 0
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    span = float((hi - lo).max())
    if span <= 0.0:
        return _EMPTY_I8, _EMPTY_I8, _EMPTY_I8, 0.0, 0.0, 0.0, 1.0, 0, 0, 0
    target = min(24, max(4, int(round(math.sqrt(n / 1.5)))))
    h = span / target
    inv_h = 1.0 / h
    idx = ((pts - lo) * inv_h).astype(np.int64)
    ncx, ncy, ncz = idx.max(axis=0) + 1
    cell = (idx[:, 0] * ncy + idx[:, 1]) * ncz + idx[:, 2]
    order = np.argsort(cell, kind="stable")
    ncells = int(ncx * ncy * ncz)
    counts = np.bincount(cell, minlength=ncells)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    return (starts, counts, order, float(lo[0]), float(lo[1]), float(lo[2]),
            inv_h, int(ncx), int(ncy), int(ncz))


def _template_flags(template, r: float, patch, literal: bool) -> np.ndarray:
    """Behind flags for the scaled template vertices, one BLAS pass."""
    q = template.vertices * r
    pts = patch.vertices
    scores = np.einsum("ij,ij->i", pts, pts)[None, :] - 2.0 * (q @ pts.T)
    idx = np.argmin(scores, axis=1)
    nw = patch.vertex_normals[idx]
    if literal:
        # template vertices are unit length before scaling
        return np.einsum("ij,ij->i", template.vertices, nw) <= 0.0
    return np.einsum("ij,ij->i", q - pts[idx], nw) <= 0.0


_HCAP = 1 << 17


class _Scratch:
    """Per-process kernel work arrays, reused across evaluations."""

    def __init__(self):
        self.vx = np.empty(_VCAP)
        self.vy = np.empty(_VCAP)
        self.vz = np.empty(_VCAP)
        self.vb = np.empty(_VCAP, np.bool_)
        self.cur = np.empty((_FCAP, 3), np.int64)
        self.nxt = np.empty((_FCAP, 3), np.int64)
        self.curl = np.empty(_FCAP, np.int64)
        self.nxtl = np.empty(_FCAP, np.int64)
        self.midid = np.empty(3 * _FCAP, np.int64)
        self.hkey = np.full(_HCAP, -1, np.int64)
        self.hval = np.empty(_HCAP, np.int64)


_scratch: _Scratch | None = None


def sphere_side_volume(template, r: float, patch, max_border_depth: int,
                       literal: bool) -> tuple[float, int, int]:
    """Spherical-cone volume of all behind sphere faces, border-refined.

    Fused equivalent of refine_and_collect + spherical_cone_volume;
    returns (volume, behind_face_count, refined_face_count).
    """
    global _scratch
    if _scratch is None:
        _scratch = _Scratch()
    s = _scratch
    vflags = _template_flags(template, r, patch, literal)
    grid = _grid(patch.vertices)
    omega, behind_cnt, refined, overflow = _sphere_side(
        template.vertices, template.faces, vflags, r, patch.vertices,
        patch.vertex_normals, max_border_depth, literal, *grid,
        s.vx, s.vy, s.vz, s.vb, s.cur, s.nxt, s.curl, s.nxtl,
        s.midid, s.hkey, s.hval)
    if overflow:
        s.hkey[:] = -1  # mid-level bailout leaves stale entries
        raise RuntimeError("border refinement table overflow")
    return omega * r ** 3 / 3.0, behind_cnt, refined
