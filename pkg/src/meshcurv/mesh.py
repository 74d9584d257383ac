"""Triangle mesh container, adjacency, normals, and spatial index.

The mesh is stored as indexed arrays (positions + face index triples).
Face winding defines orientation: counter-clockwise seen from outside,
so the unnormalized cross product (b-a)x(c-a) points out of the solid.
Nothing here reorients faces automatically; `check_orientation` reports
inconsistencies instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree


class MeshError(ValueError):
    """Invalid mesh data (bad indices, degenerate connectivity)."""


@dataclass
class Mesh:
    """Indexed triangle mesh with optional per-vertex attributes.

    vertices: (n, 3) float64 positions
    faces:    (m, 3) int vertex indices, CCW = outward
    scalars:  named per-vertex float fields, each of length n
    colors:   optional (n, 3) uint8 RGB
    vertex_normals: optional (n, 3) unit normals (filled on demand)
    """

    vertices: np.ndarray
    faces: np.ndarray
    scalars: dict[str, np.ndarray] = field(default_factory=dict)
    colors: np.ndarray | None = None
    vertex_normals: np.ndarray | None = None

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise MeshError(f"vertices must be (n, 3), got {self.vertices.shape}")
        if self.faces.size and (self.faces.ndim != 2 or self.faces.shape[1] != 3):
            raise MeshError(f"faces must be (m, 3), got {self.faces.shape}")
        if self.faces.size == 0:
            self.faces = self.faces.reshape(0, 3)
        validate_faces(self.faces, len(self.vertices))

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_faces(self) -> int:
        return self.faces.shape[0]

    def copy(self) -> "Mesh":
        return Mesh(
            self.vertices.copy(),
            self.faces.copy(),
            {k: v.copy() for k, v in self.scalars.items()},
            None if self.colors is None else self.colors.copy(),
            None if self.vertex_normals is None else self.vertex_normals.copy(),
        )


def validate_faces(faces: np.ndarray, n_vertices: int) -> None:
    if faces.size == 0:
        return
    if faces.min() < 0 or faces.max() >= n_vertices:
        bad = np.where((faces < 0) | (faces >= n_vertices))[0][0]
        raise MeshError(f"face {bad} references out-of-range vertex index")
    repeated = (
        (faces[:, 0] == faces[:, 1])
        | (faces[:, 1] == faces[:, 2])
        | (faces[:, 2] == faces[:, 0])
    )
    if repeated.any():
        bad = np.where(repeated)[0][0]
        raise MeshError(f"face {bad} has two equal vertex indices")


def _face_edges(faces: np.ndarray) -> np.ndarray:
    """Directed edges of all faces, shape (3m, 2): rows (a,b),(b,c),(c,a)."""
    return np.concatenate(
        [faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]], axis=0
    )


@dataclass
class Adjacency:
    """Per-vertex 1-ring topology, CSR-packed.

    neighbors(v) / vertex_faces(v) give the neighbor vertex indices and
    incident face indices. `boundary` flags vertices on a boundary edge
    (edge with exactly one incident face); `nonmanifold` flags vertices
    touching an edge with more than two incident faces.
    """

    neighbor_offsets: np.ndarray
    neighbor_indices: np.ndarray
    face_offsets: np.ndarray
    face_indices: np.ndarray
    boundary: np.ndarray
    nonmanifold: np.ndarray
    # per-face mask, True where edge k of face f (edges (a,b),(b,c),(c,a))
    # lies on the mesh boundary
    face_boundary_edges: np.ndarray

    def neighbors(self, v: int) -> np.ndarray:
        return self.neighbor_indices[self.neighbor_offsets[v]:self.neighbor_offsets[v + 1]]

    def vertex_faces(self, v: int) -> np.ndarray:
        return self.face_indices[self.face_offsets[v]:self.face_offsets[v + 1]]

    def degree(self, v: int) -> int:
        return int(self.neighbor_offsets[v + 1] - self.neighbor_offsets[v])

    @property
    def n_vertices(self) -> int:
        return len(self.neighbor_offsets) - 1


def build_adjacency(mesh: Mesh) -> Adjacency:
    """1-ring neighbor sets, incident faces, boundary and non-manifold flags.

    Isolated vertices get empty neighbor sets.
    """
    n = mesh.n_vertices
    faces = mesh.faces
    m = len(faces)

    if m == 0:
        z = np.zeros(n + 1, dtype=np.int64)
        return Adjacency(z, np.empty(0, np.int64), z.copy(), np.empty(0, np.int64),
                         np.zeros(n, bool), np.zeros(n, bool),
                         np.zeros((0, 3), bool))

    edges = _face_edges(faces)
    und = np.sort(edges, axis=1)
    uniq, inverse, counts = np.unique(und, axis=0, return_inverse=True, return_counts=True)

    edge_count = counts[inverse]  # per directed edge slot, faces sharing it
    boundary_slots = edge_count == 1
    nonmanifold_slots = edge_count > 2

    boundary = np.zeros(n, bool)
    np.add.at(boundary, edges[boundary_slots].ravel(), True)
    nonmanifold = np.zeros(n, bool)
    np.add.at(nonmanifold, edges[nonmanifold_slots].ravel(), True)

    face_boundary_edges = boundary_slots.reshape(3, m).T.copy()

    # neighbor CSR from unique undirected edges (symmetric by construction)
    both = np.concatenate([uniq, uniq[:, ::-1]], axis=0)
    order = np.lexsort((both[:, 1], both[:, 0]))
    src = both[order, 0]
    dst = both[order, 1]
    neighbor_offsets = np.zeros(n + 1, np.int64)
    np.add.at(neighbor_offsets, src + 1, 1)
    np.cumsum(neighbor_offsets, out=neighbor_offsets)

    # incident faces CSR
    fidx = np.repeat(np.arange(m, dtype=np.int64)[None, :], 3, axis=0).ravel()
    vidx = faces.T.ravel()
    order_f = np.lexsort((fidx, vidx))
    face_offsets = np.zeros(n + 1, np.int64)
    np.add.at(face_offsets, vidx + 1, 1)
    np.cumsum(face_offsets, out=face_offsets)

    return Adjacency(
        neighbor_offsets=neighbor_offsets,
        neighbor_indices=dst,
        face_offsets=face_offsets,
        face_indices=fidx[order_f],
        boundary=boundary,
        nonmanifold=nonmanifold,
        face_boundary_edges=face_boundary_edges,
    )


def check_orientation(mesh: Mesh) -> np.ndarray:
    """Interior edges whose two faces traverse them in the same direction.

    Returns the offending undirected edges as an (k, 2) array. A consistently
    wound mesh returns an empty array. Non-manifold edges (>2 faces) are
    reported as violations too.
    """
    if mesh.n_faces == 0:
        return np.empty((0, 2), np.int64)
    edges = _face_edges(mesh.faces)
    und = np.sort(edges, axis=1)
    forward = edges[:, 0] < edges[:, 1]
    uniq, inverse, counts = np.unique(und, axis=0, return_inverse=True, return_counts=True)
    fwd_count = np.zeros(len(uniq), np.int64)
    np.add.at(fwd_count, inverse[forward], 1)
    interior = counts == 2
    ok = interior & (fwd_count == 1)
    bad = (counts > 2) | (interior & ~ok)
    return uniq[bad]


def face_normals(mesh: Mesh) -> np.ndarray:
    """Unnormalized face normals (b-a)x(c-a); length = 2*area."""
    a = mesh.vertices[mesh.faces[:, 0]]
    b = mesh.vertices[mesh.faces[:, 1]]
    c = mesh.vertices[mesh.faces[:, 2]]
    return np.cross(b - a, c - a)


def compute_vertex_normals(mesh: Mesh) -> np.ndarray:
    """Area-weighted vertex normals, unit length.

    The weight is implicit in the unnormalized cross product. Vertices whose
    incident faces are all degenerate get a zero normal; callers exclude them.
    The result is also stored on the mesh.
    """
    normals = np.zeros_like(mesh.vertices)
    fn = face_normals(mesh)
    for k in range(3):
        np.add.at(normals, mesh.faces[:, k], fn)
    norms = np.linalg.norm(normals, axis=1)
    good = norms > 0.0
    normals[good] /= norms[good, None]
    mesh.vertex_normals = normals
    return normals


class SpatialIndex:
    """Balanced k-d tree over a point set with a deterministic tie rule."""

    def __init__(self, points: np.ndarray):
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 3:
            raise ValueError(f"points must be (n, 3), got {points.shape}")
        if len(points) == 0:
            raise ValueError("empty point set")
        self.points = points
        self.tree = cKDTree(points)

    def __len__(self) -> int:
        return len(self.points)

    def nearest(self, q) -> tuple[int, float]:
        """Globally nearest point to q; exact-distance ties break to the
        smallest point index."""
        q = np.asarray(q, dtype=np.float64)
        n = len(self.points)
        k = min(4, n)
        while True:
            d, idx = self.tree.query(q, k=k)
            d = np.atleast_1d(d)
            idx = np.atleast_1d(idx)
            if d[-1] > d[0] or k == n:
                tied = idx[d == d[0]]
                return int(tied.min()), float(d[0])
            k = min(2 * k, n)

    def query(self, qs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Batch nearest query (kd traversal order at exact ties)."""
        d, idx = self.tree.query(qs)
        return idx, d

    def nearest_indices(self, qs: np.ndarray) -> np.ndarray:
        return self.tree.query(qs)[1]


class BruteNearest:
    """Linear-scan nearest neighbor, vectorized over query batches.

    Faster than a k-d tree for the few-hundred-point sets the volume
    evaluation works with; exact ties resolve to the smallest index.
    """

    def __init__(self, points: np.ndarray):
        self.points = points
        self._sq = np.einsum("ij,ij->i", points, points)

    def __len__(self) -> int:
        return len(self.points)

    def nearest_indices(self, qs: np.ndarray) -> np.ndarray:
        # argmin of |p|^2 - 2 q.p (the |q|^2 term is constant per row)
        scores = self._sq[None, :] - 2.0 * (qs @ self.points.T)
        return np.argmin(scores, axis=1)

    def query(self, qs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        idx = self.nearest_indices(qs)
        d = np.linalg.norm(qs - self.points[idx], axis=1)
        return idx, d


def nearest_index_for(points: np.ndarray, brute_limit: int = 2048):
    """Pick the nearest-neighbor backend for a point set: linear scan for
    small sets, k-d tree beyond `brute_limit`."""
    if len(points) <= brute_limit:
        return BruteNearest(points)
    return SpatialIndex(points)
