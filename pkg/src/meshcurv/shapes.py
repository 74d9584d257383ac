"""Synthetic oracle shapes with known analytic mean curvature.

These stand in for real scanned datasets: every generator is
deterministic for a fixed spec (including the noise seed), and the
shapes with closed-form curvature (plane, sphere, cylinder, wedge
sheets) back the accuracy tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .ballvolume import icosahedron_unit, subdivide_midpoint
from .mesh import Mesh, build_adjacency, compute_vertex_normals

KINDS = ("plane-grid", "icosphere", "cylinder", "wedge",
         "multiscale-plane", "bumpy-plane")


@dataclass
class ShapeSpec:
    """Parameters for one synthetic shape; unused fields are ignored.

    `noise` displaces vertices along the clean normals by a seeded
    gaussian with standard deviation noise * (local mean edge length).
    """

    kind: str
    radius: float = 1.0          # icosphere / cylinder radius
    subdivisions: int = 3        # icosphere refinement level
    nx: int = 10                 # grid cells in x
    ny: int = 10                 # grid cells in y (coarse rows for multiscale)
    edge: float = 1.0            # grid edge length (coarse edge for multiscale)
    height: float = 2.0          # cylinder height
    n_around: int = 32
    n_along: int = 8
    caps: bool = True
    angle_deg: float = 90.0      # wedge interior dihedral (90 convex, 270 concave)
    length_cells: int = 60       # wedge cells along the edge line
    width_cells: int = 10        # wedge cells across each sheet
    scale_ratio: float = 10.0    # multiscale coarse/fine edge ratio
    fine_cells: int = 20         # multiscale fine columns
    coarse_cells: int = 12       # multiscale coarse columns
    grade_factor: float = 1.3    # multiscale transition growth per column
    bump_sigma: float = 4.0      # bumpy-plane gaussian width (length units)
    bump_amplitude: float = 8.0
    n_bumps: int = 1
    noise: float = 0.0
    seed: int = 0


def synth_shape(spec: ShapeSpec) -> Mesh:
    builders = {
        "plane-grid": _plane_grid,
        "icosphere": _icosphere,
        "cylinder": _cylinder,
        "wedge": _wedge,
        "multiscale-plane": _multiscale_plane,
        "bumpy-plane": _bumpy_plane,
    }
    if spec.kind not in builders:
        raise ValueError(f"unknown shape kind {spec.kind!r} (choose from {KINDS})")
    mesh = builders[spec.kind](spec)
    if spec.noise > 0.0:
        add_noise(mesh, spec.noise, spec.seed)
    return mesh


def add_noise(mesh: Mesh, amplitude: float, seed: int) -> None:
    """Seeded displacement along the clean vertex normals, uniform in
    [-amplitude, amplitude] times the local mean edge length (noise whose
    scale tracks the tessellation, like reconstruction noise)."""
    adj = build_adjacency(mesh)
    normals = compute_vertex_normals(mesh)
    counts = np.diff(adj.neighbor_offsets)
    src = np.repeat(np.arange(mesh.n_vertices), counts)
    elen = np.linalg.norm(mesh.vertices[adj.neighbor_indices] - mesh.vertices[src], axis=1)
    local = np.zeros(mesh.n_vertices)
    np.add.at(local, src, elen)
    local[counts > 0] /= counts[counts > 0]
    rng = np.random.default_rng(seed)
    disp = rng.uniform(-1.0, 1.0, mesh.n_vertices) * amplitude * local
    mesh.vertices += normals * disp[:, None]


# ---------------------------------------------------------------------------
# builders

def _grid_mesh(xs: np.ndarray, ys: np.ndarray) -> Mesh:
    """Tensor grid in the z=0 plane, split along the (i,j)-(i+1,j+1)
    diagonal, normals +z."""
    nx, ny = len(xs) - 1, len(ys) - 1
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    verts = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)])

    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    a = (j * (nx + 1) + i).ravel()
    b = a + 1
    c = b + nx + 1
    d = a + nx + 1
    faces = np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])
    return Mesh(verts, faces)


def _plane_grid(spec: ShapeSpec) -> Mesh:
    xs = np.arange(spec.nx + 1) * spec.edge
    ys = np.arange(spec.ny + 1) * spec.edge
    return _grid_mesh(xs, ys)


def _bumpy_plane(spec: ShapeSpec) -> Mesh:
    mesh = _plane_grid(spec)
    w = spec.nx * spec.edge
    h = spec.ny * spec.edge
    if spec.n_bumps == 1:
        centers = np.array([[0.5 * w, 0.5 * h]])
    else:
        k = int(math.ceil(math.sqrt(spec.n_bumps)))
        cx = np.linspace(0.25 * w, 0.75 * w, k)
        cy = np.linspace(0.25 * h, 0.75 * h, k)
        centers = np.stack(np.meshgrid(cx, cy), -1).reshape(-1, 2)[:spec.n_bumps]
    xy = mesh.vertices[:, :2]
    z = np.zeros(mesh.n_vertices)
    mask = np.zeros(mesh.n_vertices, bool)
    for c in centers:
        d2 = ((xy - c) ** 2).sum(axis=1)
        z += spec.bump_amplitude * np.exp(-d2 / (2.0 * spec.bump_sigma ** 2))
        mask |= d2 <= (2.5 * spec.bump_sigma) ** 2
    mesh.vertices[:, 2] = z
    mesh.scalars["bump"] = mask.astype(np.float64)
    return mesh


def _icosphere(spec: ShapeSpec) -> Mesh:
    verts, faces = icosahedron_unit()
    for _ in range(spec.subdivisions):
        verts, faces = subdivide_midpoint(verts, faces, project_radius=1.0)
    return Mesh(verts * spec.radius, faces)


def _cylinder(spec: ShapeSpec) -> Mesh:
    na, nl, R, h = spec.n_around, spec.n_along, spec.radius, spec.height
    theta = np.arange(na) * (2.0 * math.pi / na)
    zs = np.linspace(-0.5 * h, 0.5 * h, nl + 1)
    ring = np.stack([R * np.cos(theta), R * np.sin(theta)], axis=1)
    verts = np.concatenate([
        np.column_stack([np.tile(ring, (nl + 1, 1)),
                         np.repeat(zs, na)]).reshape(-1, 3)
    ])
    faces = []
    for j in range(nl):
        base0 = j * na
        base1 = (j + 1) * na
        i = np.arange(na)
        inext = (i + 1) % na
        a, b = base0 + i, base0 + inext
        c, d = base1 + inext, base1 + i
        faces.append(np.stack([a, b, c], 1))
        faces.append(np.stack([a, c, d], 1))
    verts_list = [verts]
    if spec.caps:
        bot = len(verts)
        top = bot + 1
        verts_list.append(np.array([[0.0, 0.0, -0.5 * h], [0.0, 0.0, 0.5 * h]]))
        i = np.arange(na)
        inext = (i + 1) % na
        faces.append(np.stack([np.full(na, bot), inext, i], 1))
        last = nl * na
        faces.append(np.stack([np.full(na, top), last + i, last + inext], 1))
    return Mesh(np.concatenate(verts_list), np.concatenate(faces))


def _sheet(u: np.ndarray, n_len: int, n_wid: int, edge: float,
           edge_ids: np.ndarray, first_id: int):
    """Rectangular sheet hanging off the shared wedge edge line along
    direction u. Column 0 reuses `edge_ids`; returns
    (new_verts, faces, next_id); winding is fixed up by the caller."""
    ys = np.arange(n_len + 1) * edge
    cols = [edge_ids]
    new_verts = []
    nid = first_id
    for i in range(1, n_wid + 1):
        pts = np.tile(u * (i * edge), (n_len + 1, 1))
        pts[:, 1] += ys
        new_verts.append(pts)
        cols.append(np.arange(nid, nid + n_len + 1))
        nid += n_len + 1
    faces = []
    for i in range(n_wid):
        l, r = cols[i], cols[i + 1]
        for j in range(n_len):
            faces.append((l[j], l[j + 1], r[j + 1]))
            faces.append((l[j], r[j + 1], r[j]))
    faces = np.array(faces, np.int64)
    return np.concatenate(new_verts), faces, nid


def _wedge(spec: ShapeSpec) -> Mesh:
    """Two planar sheets meeting along the y-axis with the given interior
    dihedral angle of the solid (90 deg: convex edge, 270 deg: concave)."""
    theta = math.radians(spec.angle_deg)
    e, L, W = spec.edge, spec.length_cells, spec.width_cells
    # solid spans xz-plane angles [pi, pi + theta]
    u_b = np.array([-1.0, 0.0, 0.0])
    n_b = np.array([0.0, 0.0, 1.0])
    phi = math.pi + theta
    u_a = np.array([math.cos(phi), 0.0, math.sin(phi)])
    n_a = np.array([math.cos(phi + math.pi / 2), 0.0, math.sin(phi + math.pi / 2)])

    edge_ids = np.arange(L + 1)
    edge_verts = np.zeros((L + 1, 3))
    edge_verts[:, 1] = np.arange(L + 1) * e

    vb, fb, nid = _sheet(u_b, L, W, e, edge_ids, L + 1)
    va, fa, nid = _sheet(u_a, L, W, e, edge_ids, nid)
    verts = np.concatenate([edge_verts, vb, va])

    def orient(faces, normal):
        a, b, c = verts[faces[:, 0]], verts[faces[:, 1]], verts[faces[:, 2]]
        fn = np.cross(b - a, c - a)
        if float((fn @ normal).mean()) < 0.0:
            return faces[:, [0, 2, 1]]
        return faces

    faces = np.concatenate([orient(fb, n_b), orient(fa, n_a)])
    mesh = Mesh(verts, faces)
    marker = np.zeros(len(verts))
    marker[:L + 1] = 1.0
    mesh.scalars["edge_line"] = marker
    return mesh


def _multiscale_plane(spec: ShapeSpec) -> Mesh:
    """Fine and coarse uniform blocks joined by a geometrically graded
    band; cell heights track the local column width (square-ish cells)."""
    e_c = spec.edge
    e_f = e_c / spec.scale_ratio
    widths = [e_f] * spec.fine_cells
    w = e_f
    while w * spec.grade_factor < e_c:
        w *= spec.grade_factor
        widths.append(w)
    widths += [e_c] * spec.coarse_cells
    widths = np.asarray(widths)
    xs = np.concatenate([[0.0], np.cumsum(widths)])
    height = spec.ny * e_c

    # one vertex line per column boundary; spacing follows the finer side
    lines = []
    for k in range(len(xs)):
        wl = widths[k - 1] if k > 0 else widths[0]
        wr = widths[k] if k < len(widths) else widths[-1]
        rows = max(1, round(height / min(wl, wr)))
        lines.append(np.linspace(0.0, height, rows + 1))

    verts = []
    offsets = []
    nid = 0
    for k, ys in enumerate(lines):
        pts = np.zeros((len(ys), 3))
        pts[:, 0] = xs[k]
        pts[:, 1] = ys
        verts.append(pts)
        offsets.append(nid)
        nid += len(ys)
    verts = np.concatenate(verts)

    faces = []
    for k in range(len(lines) - 1):
        ly, ry = lines[k], lines[k + 1]
        lo, ro = offsets[k], offsets[k + 1]
        i = j = 0
        # merge the two vertex lines bottom-up; each step emits one triangle
        while i < len(ly) - 1 or j < len(ry) - 1:
            if j == len(ry) - 1 or (i < len(ly) - 1 and ly[i + 1] <= ry[j + 1]):
                faces.append((lo + i, ro + j, lo + i + 1))
                i += 1
            else:
                faces.append((lo + i, ro + j, ro + j + 1))
                j += 1
    mesh = Mesh(verts, np.asarray(faces, np.int64))

    x_fine_end = xs[spec.fine_cells]
    x_coarse_start = xs[len(widths) - spec.coarse_cells]
    region = np.ones(len(verts))
    region[verts[:, 0] <= x_fine_end + 1e-9 * e_c] = 0.0
    region[verts[:, 0] >= x_coarse_start - 1e-9 * e_c] = 2.0
    mesh.scalars["region"] = region
    return mesh


# ---------------------------------------------------------------------------
# analytic curvature oracle

def analytic_curvature_field(spec: ShapeSpec, points: np.ndarray):
    """Exact mean curvature at the given positions of a noise-free shape.

    Returns (values, valid); excluded regions (wedge edge line, cylinder
    rims and caps) are marked invalid.
    """
    if spec.noise > 0.0:
        raise ValueError("analytic curvature requires a noise-free spec")
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = len(points)
    values = np.zeros(n)
    valid = np.ones(n, bool)
    if spec.kind in ("plane-grid", "multiscale-plane"):
        pass
    elif spec.kind == "icosphere":
        values[:] = 1.0 / spec.radius
    elif spec.kind == "cylinder":
        values[:] = 1.0 / (2.0 * spec.radius)
        rho = np.linalg.norm(points[:, :2], axis=1)
        lateral = np.abs(rho - spec.radius) <= 1e-6 * spec.radius
        off_rim = np.abs(points[:, 2]) < 0.5 * spec.height * (1.0 - 1e-9)
        valid = lateral & off_rim
    elif spec.kind == "wedge":
        rho = np.hypot(points[:, 0], points[:, 2])
        valid = rho > 1e-9 * spec.edge
    else:
        raise ValueError(f"no analytic curvature for kind {spec.kind!r}")
    return values, valid


def analytic_curvature(spec: ShapeSpec, point) -> float:
    """Scalar oracle; raises for vertices in an excluded region."""
    values, valid = analytic_curvature_field(spec, np.asarray(point).reshape(1, 3))
    if not valid[0]:
        raise ValueError("point lies in a region with no defined oracle value")
    return float(values[0])


def noise_free(spec: ShapeSpec) -> ShapeSpec:
    return replace(spec, noise=0.0)
