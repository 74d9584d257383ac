import math

import numpy as np
import pytest

from meshcurv.mesh import Mesh, MeshError, build_adjacency, \
    compute_vertex_normals
from meshcurv.patch import PatchSampler, clip_face, extract_patch
from meshcurv.shapes import ShapeSpec, synth_shape


def tri_area(t):
    return 0.5 * np.linalg.norm(np.cross(t[1] - t[0], t[2] - t[0]))


def patch_area(patch):
    tris = patch.vertices[patch.faces]
    return 0.5 * np.linalg.norm(
        np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0]),
        axis=1).sum()


def disk_triangle_quadrature(tri2d, r, n=3000):
    """Grid quadrature of the area of triangle-intersect-disk (disk at
    the origin); the independent clipping oracle."""
    lo = tri2d.min(axis=0) - 0.01
    hi = tri2d.max(axis=0) + 0.01
    xs = np.linspace(lo[0], hi[0], n)
    ys = np.linspace(lo[1], hi[1], n)
    X, Y = np.meshgrid(xs, ys)
    p = np.stack([X.ravel(), Y.ravel()], 1)

    def side(a, b):
        return (b[0] - a[0]) * (p[:, 1] - a[1]) - (b[1] - a[1]) * (p[:, 0] - a[0])

    inside = (side(tri2d[0], tri2d[1]) >= 0) & (side(tri2d[1], tri2d[2]) >= 0) \
        & (side(tri2d[2], tri2d[0]) >= 0) & (p[:, 0] ** 2 + p[:, 1] ** 2 <= r * r)
    cell = (xs[1] - xs[0]) * (ys[1] - ys[0])
    return inside.sum() * cell


class TestClipFace:
    tri = np.array([[0.0, 0, 0], [2, 0, 0], [0, 2, 0]])

    def test_all_inside_unchanged(self):
        out = clip_face(self.tri, [0.5, 0.5, 0], 10.0)
        assert len(out) == 1
        assert np.allclose(out[0], self.tri)

    def test_one_outside_two_triangles(self):
        out = clip_face(self.tri, [0.0, 0.0, 0.0], 1.5)  # only (2,0,0)... both far
        # center at origin: distances 0, 2, 2 -> two outside
        assert len(out) == 1
        out = clip_face(self.tri, [0.2, 0.9, 0.0], 1.3)
        dists = np.linalg.norm(self.tri - np.array([0.2, 0.9, 0.0]), axis=1)
        assert (dists > 1.3).sum() == 1
        assert len(out) == 2
        assert sum(tri_area(t) for t in out) < tri_area(self.tri)

    def test_two_outside_one_triangle(self):
        out = clip_face(self.tri, [0.0, 0.0, 0.0], 1.0)
        assert len(out) == 1
        assert tri_area(out[0]) == pytest.approx(0.5, rel=1e-12)

    def test_all_outside_nothing(self):
        out = clip_face(self.tri, [10.0, 10, 0], 1.0)
        assert out == []

    def test_intersections_on_sphere(self):
        center = np.array([0.1, 0.2, 0.0])
        r = 1.1
        for t in clip_face(self.tri, center, r):
            d = np.linalg.norm(t - center, axis=1)
            assert (d <= r * (1 + 1e-9)).all()

    def test_orientation_preserved(self):
        for center, r in ([0.2, 0.9, 0.0], 1.3), ([0.0, 0.0, 0.0], 1.0):
            for t in clip_face(self.tri, center, r):
                n = np.cross(t[1] - t[0], t[2] - t[0])
                assert n[2] > 0

    def test_fully_inside_matches_disk_intersection(self):
        # triangle entirely inside the disk: clipped area equals the
        # exact triangle area, which is the full disk-triangle overlap
        tri = np.array([[1.0, 0, 0],
                        [math.cos(2 * math.pi / 3), math.sin(2 * math.pi / 3), 0],
                        [math.cos(4 * math.pi / 3), math.sin(4 * math.pi / 3), 0]])
        out = clip_face(tri, np.zeros(3), 1.2)
        assert len(out) == 1
        area = tri_area(out[0])
        assert area == pytest.approx(tri_area(tri), rel=1e-12)
        quad = disk_triangle_quadrature(tri[:, :2], 1.2)
        assert area == pytest.approx(quad, rel=2e-3)

    def test_clipped_quad_within_chord_deficit_of_exact(self):
        # one corner outside: the straight-chord quad undershoots the
        # true disk overlap by at most the circular-segment area
        center = np.array([0.2, 0.9, 0.0])
        r = 1.3
        out = clip_face(self.tri, center, r)
        area = sum(tri_area(t) for t in out)
        tri2d = self.tri[:, :2] - center[:2]
        exact = disk_triangle_quadrature(tri2d, r)
        assert area <= exact * (1 + 1e-3)
        # chord c subtends a segment of area <= c^3 / (12 * ... ) bound via c and r
        # crude but sufficient: segment area < 0.5 * c * sagitta
        pts = np.concatenate(out)
        on_circle = pts[np.abs(np.linalg.norm(pts - center, axis=1) - r) < 1e-9]
        c = max(np.linalg.norm(on_circle[0] - q) for q in on_circle)
        sagitta = r - math.sqrt(max(r * r - 0.25 * c * c, 0.0))
        assert exact - area <= 0.7 * c * sagitta + 2e-3 * exact


class TestExtractPatch:
    def test_unit_grid_half_radius_fan_area(self, unit_grid):
        # r = 0.5 keeps one clipped corner triangle per 1-ring face:
        # area = sum of (1/2) r^2 sin(angle) = 0.125 (2 sqrt2 + 2)
        adj = build_adjacency(unit_grid)
        compute_vertex_normals(unit_grid)
        patch = extract_patch(unit_grid, adj, 5 * 11 + 5, 0.5)
        expected = 0.125 * (2.0 * math.sqrt(2.0) + 2.0)
        assert patch_area(patch) == pytest.approx(expected, rel=1e-12)
        assert not patch.open_boundary

    def test_multi_ring_radius_close_to_disk(self):
        mesh = synth_shape(ShapeSpec("plane-grid", nx=20, ny=20))
        adj = build_adjacency(mesh)
        compute_vertex_normals(mesh)
        patch = extract_patch(mesh, adj, 10 * 21 + 10, 3.0)
        ratio = patch_area(patch) / (math.pi * 9.0)
        assert 0.95 <= ratio <= 1.0

    def test_patch_vertices_inside_ball(self, unit_grid):
        adj = build_adjacency(unit_grid)
        compute_vertex_normals(unit_grid)
        for r in (0.5, 1.7, 3.2):
            patch = extract_patch(unit_grid, adj, 5 * 11 + 5, r)
            assert (np.linalg.norm(patch.vertices, axis=1)
                    <= r * (1 + 1e-6)).all()
            areas = 0.5 * np.linalg.norm(patch.face_normals, axis=1)
            assert (areas > 0).all()

    def test_saturating_radius_covers_tetrahedron(self, tetrahedron):
        adj = build_adjacency(tetrahedron)
        compute_vertex_normals(tetrahedron)
        diameter = 2 * math.sqrt(3)
        patch = extract_patch(tetrahedron, adj, 0, 10 * diameter)
        assert patch.n_faces == 4
        tris = tetrahedron.vertices[tetrahedron.faces]
        total = 0.5 * np.linalg.norm(np.cross(tris[:, 1] - tris[:, 0],
                                              tris[:, 2] - tris[:, 0]), axis=1).sum()
        assert patch_area(patch) == pytest.approx(total, rel=1e-12)

    def test_open_boundary_flag_near_hole(self):
        mesh = synth_shape(ShapeSpec("plane-grid", nx=14, ny=14))
        hole_vertex = 7 * 15 + 7
        adj = build_adjacency(mesh)
        keep = ~np.isin(np.arange(mesh.n_faces),
                        adj.vertex_faces(hole_vertex))
        holed = Mesh(mesh.vertices, mesh.faces[keep])
        adj2 = build_adjacency(holed)
        compute_vertex_normals(holed)
        center = 7 * 15 + 5  # two columns away from the hole
        dist_to_hole = 1.0  # hole rim is one edge away
        patch = extract_patch(holed, adj2, center, 1.8)
        assert patch.open_boundary
        patch_small = extract_patch(holed, adj2, center, 0.6)
        assert not patch_small.open_boundary

    def test_area_monotone_in_radius(self, small_sphere):
        adj = build_adjacency(small_sphere)
        compute_vertex_normals(small_sphere)
        sampler = PatchSampler(small_sphere, adj)
        region = sampler.grow(0, 2.0)
        areas = [patch_area(sampler.patch_at(region, r))
                 for r in np.linspace(0.3, 2.0, 9)]
        assert all(a2 >= a1 * (1 - 1e-12) for a1, a2 in zip(areas, areas[1:]))

    def test_chord_error_shrinks_with_refinement(self):
        ratios = []
        for n, edge in ((10, 1.0), (20, 0.5), (40, 0.25)):
            mesh = synth_shape(ShapeSpec("plane-grid", nx=n, ny=n, edge=edge))
            adj = build_adjacency(mesh)
            compute_vertex_normals(mesh)
            center = (n // 2) * (n + 1) + n // 2
            patch = extract_patch(mesh, adj, center, 2.0)
            ratios.append(patch_area(patch) / (math.pi * 4.0))
        errs = [1 - r for r in ratios]
        assert errs[2] < errs[1] < errs[0]
        assert errs[2] < 0.25 * errs[0] * 1.5  # ~O(chord^2)

    def test_visited_once(self, small_sphere):
        adj = build_adjacency(small_sphere)
        compute_vertex_normals(small_sphere)
        patch = extract_patch(small_sphere, adj, 0, 5.0)  # covers everything
        assert patch.n_faces == small_sphere.n_faces

    def test_isolated_center_rejected(self):
        mesh = Mesh(np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [5, 5, 5]]),
                    np.array([[0, 1, 2]]))
        adj = build_adjacency(mesh)
        compute_vertex_normals(mesh)
        with pytest.raises(MeshError, match="no incident faces"):
            extract_patch(mesh, adj, 3, 1.0)

    def test_nonpositive_radius_rejected(self, unit_grid):
        adj = build_adjacency(unit_grid)
        with pytest.raises(ValueError):
            extract_patch(unit_grid, adj, 0, 0.0)

    def test_patch_normals_up_on_grid(self, unit_grid):
        adj = build_adjacency(unit_grid)
        compute_vertex_normals(unit_grid)
        patch = extract_patch(unit_grid, adj, 5 * 11 + 5, 2.0)
        assert (patch.face_normals[:, 2] > 0).all()
        assert np.allclose(patch.vertex_normals, [0, 0, 1.0])
