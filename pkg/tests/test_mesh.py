import numpy as np
import pytest

from meshcurv.mesh import (BruteNearest, Mesh, MeshError, SpatialIndex,
                           build_adjacency, check_orientation,
                           compute_vertex_normals, face_normals)
from meshcurv.shapes import ShapeSpec, synth_shape


def test_mesh_rejects_out_of_range_face():
    with pytest.raises(MeshError, match="out-of-range"):
        Mesh(np.zeros((3, 3)), np.array([[0, 1, 3]]))


def test_mesh_rejects_repeated_vertex():
    with pytest.raises(MeshError, match="equal vertex"):
        Mesh(np.zeros((3, 3)), np.array([[0, 1, 1]]))


def test_single_triangle_adjacency(single_triangle):
    adj = build_adjacency(single_triangle)
    assert set(adj.neighbors(0)) == {1, 2}
    assert set(adj.neighbors(1)) == {0, 2}
    assert adj.boundary.all()
    assert not adj.nonmanifold.any()
    assert adj.face_boundary_edges.all()


def test_tetrahedron_adjacency(tetrahedron):
    adj = build_adjacency(tetrahedron)
    for v in range(4):
        assert adj.degree(v) == 3
    assert not adj.boundary.any()
    assert not adj.face_boundary_edges.any()


def test_grid_interior_vertex_has_six_neighbors(unit_grid):
    adj = build_adjacency(unit_grid)
    interior = 5 * 11 + 5  # middle of an 11x11 vertex grid
    assert adj.degree(interior) == 6


def test_adjacency_symmetry(small_sphere):
    adj = build_adjacency(small_sphere)
    for v in range(small_sphere.n_vertices):
        for w in adj.neighbors(v):
            assert v in adj.neighbors(w)


def test_boundary_flags_match_edge_counting(unit_grid):
    adj = build_adjacency(unit_grid)
    counts = {}
    for f in unit_grid.faces:
        for k in range(3):
            e = tuple(sorted((f[k], f[(k + 1) % 3])))
            counts[e] = counts.get(e, 0) + 1
    expected = np.zeros(unit_grid.n_vertices, bool)
    for (a, b), c in counts.items():
        if c == 1:
            expected[a] = expected[b] = True
    assert np.array_equal(adj.boundary, expected)


def test_nonmanifold_edge_flagging():
    # three faces around one edge (0, 1)
    verts = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1]])
    faces = np.array([[0, 1, 2], [1, 0, 3], [0, 1, 4]])
    adj = build_adjacency(Mesh(verts, faces))
    assert adj.nonmanifold[0] and adj.nonmanifold[1]
    assert not adj.nonmanifold[2:].any()


def test_flat_grid_normals(unit_grid):
    normals = compute_vertex_normals(unit_grid)
    assert np.allclose(normals, [0.0, 0.0, 1.0])


def test_icosphere_normals_radial():
    # angular error shrinks linearly with the edge length; 1e-2 at k=4
    errors = []
    for k in (3, 4):
        mesh = synth_shape(ShapeSpec("icosphere", radius=1.0, subdivisions=k))
        normals = compute_vertex_normals(mesh)
        radial = mesh.vertices / np.linalg.norm(mesh.vertices, axis=1,
                                                keepdims=True)
        dots = np.clip(np.einsum("ij,ij->i", normals, radial), -1, 1)
        errors.append(np.arccos(dots).max())
    assert errors[-1] < 1e-2
    assert errors[1] < 0.6 * errors[0]


def test_zero_normal_for_degenerate_star():
    # two opposite coplanar faces with opposite winding cancel exactly
    verts = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]])
    faces = np.array([[0, 1, 2], [0, 2, 1]])
    normals = compute_vertex_normals(Mesh(verts, faces))
    assert np.allclose(normals, 0.0)


def test_check_orientation_consistent(small_sphere, tetrahedron):
    assert len(check_orientation(small_sphere)) == 0
    assert len(check_orientation(tetrahedron)) == 0


def test_check_orientation_reports_flipped_face(small_sphere):
    faces = small_sphere.faces.copy()
    faces[0] = faces[0, ::-1]
    bad = check_orientation(Mesh(small_sphere.vertices, faces))
    assert len(bad) == 3  # the three edges of the flipped face


def test_face_normals_outward_on_sphere(small_sphere):
    fn = face_normals(small_sphere)
    centroids = small_sphere.vertices[small_sphere.faces].mean(axis=1)
    assert (np.einsum("ij,ij->i", fn, centroids) > 0).all()


def test_nearest_simple_and_ties():
    idx = SpatialIndex(np.array([[0.0, 0, 0], [1, 0, 0]]))
    i, d = idx.nearest([0.4, 0, 0])
    assert i == 0 and d == pytest.approx(0.4)
    i, d = idx.nearest([0.5, 0, 0])  # exact tie -> smaller index
    assert i == 0 and d == pytest.approx(0.5)


def test_nearest_matches_linear_scan():
    rng = np.random.default_rng(42)
    points = rng.uniform(-1, 1, (1000, 3))
    index = SpatialIndex(points)
    queries = rng.uniform(-1.2, 1.2, (100, 3))
    for q in queries:
        i, d = index.nearest(q)
        dists = np.linalg.norm(points - q, axis=1)
        assert i == int(np.argmin(dists))
        assert d == pytest.approx(dists.min(), rel=1e-12)


def test_brute_nearest_matches_kdtree():
    rng = np.random.default_rng(3)
    points = rng.uniform(-1, 1, (200, 3))
    queries = rng.uniform(-1, 1, (50, 3))
    brute = BruteNearest(points)
    tree = SpatialIndex(points)
    assert np.array_equal(brute.nearest_indices(queries),
                          tree.nearest_indices(queries))


def test_empty_index_rejected():
    with pytest.raises(ValueError):
        SpatialIndex(np.empty((0, 3)))
