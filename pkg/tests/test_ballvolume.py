import math

import numpy as np
import pytest

from meshcurv._fastvolume import sphere_side_volume
from meshcurv.ballvolume import (classify_sphere_vertex, icosahedron_unit,
                                 intersection_volume, make_sphere_template,
                                 refine_and_collect, signed_tet_sum,
                                 spherical_cone_volume, subdivide_midpoint)
from meshcurv.mesh import (SpatialIndex, build_adjacency,
                           compute_vertex_normals)
from meshcurv.patch import PatchSampler, SurfacePatch, extract_patch
from meshcurv.shapes import ShapeSpec, synth_shape

FULL = lambda r: (4.0 / 3.0) * math.pi * r ** 3


def grid_patch(n=30, r=3.0, center=None):
    mesh = synth_shape(ShapeSpec("plane-grid", nx=n, ny=n))
    adj = build_adjacency(mesh)
    compute_vertex_normals(mesh)
    if center is None:
        center = (n // 2) * (n + 1) + n // 2
    return extract_patch(mesh, adj, center, r)


class TestTemplate:
    def test_icosahedron_counts(self):
        tpl = make_sphere_template(0)
        assert len(tpl.vertices) == 12 and len(tpl.faces) == 20

    def test_two_subdivision_counts(self):
        tpl = make_sphere_template(2)
        assert len(tpl.faces) == 320  # 20 * 4^k
        assert len(tpl.vertices) == 162  # 2 + F/2 by Euler

    def test_vertices_unit(self):
        tpl = make_sphere_template(2)
        assert np.abs(np.linalg.norm(tpl.vertices, axis=1) - 1.0).max() < 1e-12

    def test_face_neighbors_closed_and_symmetric(self):
        tpl = make_sphere_template(2)
        assert (tpl.face_neighbors >= 0).all()
        for f in range(len(tpl.faces)):
            for nb in tpl.face_neighbors[f]:
                assert f in tpl.face_neighbors[nb]

    def test_polyhedral_volume_converges_from_below(self):
        vols = []
        for k in range(4):
            tpl = make_sphere_template(k)
            vols.append(signed_tet_sum(tpl.vertices[tpl.faces]) / 6.0)
        target = FULL(1.0)
        assert all(v < target for v in vols)
        assert vols == sorted(vols)
        # frozen value of the k=2 polyhedron (3.4% below the ball)
        assert vols[2] == pytest.approx(4.047044679978849, abs=1e-12)
        assert 0.0 < 1.0 - vols[2] / target < 0.04

    def test_subdivide_projects_new_vertices(self):
        verts, faces = icosahedron_unit()
        verts2, faces2 = subdivide_midpoint(verts, faces, project_radius=1.0)
        assert len(faces2) == 80
        assert np.abs(np.linalg.norm(verts2, axis=1) - 1.0).max() < 1e-12

    def test_negative_subdivisions_rejected(self):
        with pytest.raises(ValueError):
            make_sphere_template(-1)


class TestClassify:
    def test_flat_patch_sides(self):
        patch = grid_patch(10, 1.5)
        index = SpatialIndex(patch.vertices)
        assert classify_sphere_vertex([0, 0, -0.75], patch, index) == "behind"
        assert classify_sphere_vertex([0, 0, +0.75], patch, index) == "front"

    def test_in_plane_tie_is_behind(self):
        patch = grid_patch(10, 1.5)
        index = SpatialIndex(patch.vertices)
        assert classify_sphere_vertex([1.5, 0.0, 0.0], patch, index) == "behind"


class TestRefineAndCollect:
    def test_hemisphere_coverage(self):
        tpl = make_sphere_template(2)
        r = 3.0
        patch = grid_patch(30, r)
        index = SpatialIndex(patch.vertices)
        behind, refined = refine_and_collect(tpl, r, patch, index, 6)
        areas = 0.5 * np.linalg.norm(
            np.cross(behind[:, 1] - behind[:, 0], behind[:, 2] - behind[:, 0]),
            axis=1)
        # flat-facet hemisphere area, ~1.7% inscribed deficit
        assert areas.sum() == pytest.approx(2 * math.pi * r * r, rel=0.02)
        assert refined > 0

    def test_all_behind_no_refinement(self):
        # patch far above the whole sphere, normals up: everything behind
        pts = np.array([[0.0, 0.0, 10.0], [1.0, 0.0, 10.0], [0.0, 1.0, 10.0]])
        patch = SurfacePatch(pts, np.array([[0, 1, 2]]),
                             np.array([[0.0, 0.0, 1.0]]),
                             np.tile([0.0, 0.0, 1.0], (3, 1)), False)
        tpl = make_sphere_template(2)
        index = SpatialIndex(patch.vertices)
        behind, refined = refine_and_collect(tpl, 1.0, patch, index, 6)
        assert len(behind) == 320 and refined == 0

    def test_all_front_empty(self):
        pts = np.array([[0.0, 0.0, -10.0], [1.0, 0.0, -10.0], [0.0, 1.0, -10.0]])
        patch = SurfacePatch(pts, np.array([[0, 1, 2]]),
                             np.array([[0.0, 0.0, 1.0]]),
                             np.tile([0.0, 0.0, 1.0], (3, 1)), False)
        tpl = make_sphere_template(2)
        index = SpatialIndex(patch.vertices)
        behind, refined = refine_and_collect(tpl, 1.0, patch, index, 6)
        assert len(behind) == 0 and refined == 0


class TestIntersectionVolume:
    def test_plane_through_center_half_ball(self):
        tpl = make_sphere_template(2)
        r = 3.0
        patch = grid_patch(30, r)
        index = SpatialIndex(patch.vertices)
        behind, refined = refine_and_collect(tpl, r, patch, index, 6)
        res = intersection_volume(patch, behind, r, refined)
        assert res.volume == pytest.approx(0.5 * FULL(r), rel=0.02)
        assert not res.orientation_error and not res.clamped

    @pytest.mark.parametrize("r", [0.2, 0.5, 1.0])
    def test_sphere_lens(self, r):
        mesh = synth_shape(ShapeSpec("icosphere", radius=1.0, subdivisions=4))
        adj = build_adjacency(mesh)
        compute_vertex_normals(mesh)
        tpl = make_sphere_template(2)
        patch = extract_patch(mesh, adj, 0, r)
        index = SpatialIndex(patch.vertices)
        behind, refined = refine_and_collect(tpl, r, patch, index, 6)
        res = intersection_volume(patch, behind, r, refined)
        lens = math.pi * r * r * (8.0 * r - 3.0 * r * r) / 12.0
        assert res.volume == pytest.approx(lens, rel=0.02)

    def test_lens_formula_against_monte_carlo(self):
        # independent check of the oracle itself: count ball points that
        # fall inside the unit sphere when the ball sits on its surface
        rng = np.random.default_rng(99)
        r, R = 0.6, 1.0
        center = np.array([0.0, 0.0, R])
        n = 400_000
        pts = rng.uniform(-r, r, (n, 3))
        inside_ball = np.einsum("ij,ij->i", pts, pts) <= r * r
        pts = pts[inside_ball] + center
        frac = (np.einsum("ij,ij->i", pts, pts) <= R * R).mean()
        mc = frac * FULL(r)
        lens = math.pi * r * r * (8.0 * R * r - 3.0 * r * r) / (12.0 * R)
        assert mc == pytest.approx(lens, rel=0.01)

    @pytest.mark.parametrize("angle,factor", [(90.0, 0.25), (270.0, 0.75)])
    def test_wedge_fractions(self, angle, factor):
        mesh = synth_shape(ShapeSpec("wedge", angle_deg=angle,
                                     length_cells=40, width_cells=12))
        adj = build_adjacency(mesh)
        compute_vertex_normals(mesh)
        tpl = make_sphere_template(2)
        r = 4.0
        patch = extract_patch(mesh, adj, 20, r)
        index = SpatialIndex(patch.vertices)
        behind, refined = refine_and_collect(tpl, r, patch, index, 6)
        res = intersection_volume(patch, behind, r, refined)
        assert res.volume == pytest.approx(factor * FULL(r), rel=0.03)

    def test_depth_convergence_on_plane(self):
        tpl = make_sphere_template(2)
        r = 3.0
        patch = grid_patch(30, r)
        index = SpatialIndex(patch.vertices)
        vols = {}
        for depth in (4, 6):
            behind, refined = refine_and_collect(tpl, r, patch, index, depth)
            vols[depth] = intersection_volume(patch, behind, r, refined).volume
        assert abs(vols[6] - vols[4]) / vols[6] < 0.005

    def test_reflection_symmetry(self):
        # mirrored plane patch (normals down) keeps the complementary part
        tpl = make_sphere_template(2)
        r = 3.0
        patch = grid_patch(30, r)
        mirrored = SurfacePatch(
            patch.vertices * np.array([1.0, 1.0, -1.0]),
            patch.faces[:, ::-1].copy(),
            patch.face_normals * np.array([1.0, 1.0, -1.0]),
            patch.vertex_normals * np.array([1.0, 1.0, -1.0]),
            patch.open_boundary)
        index = SpatialIndex(patch.vertices)
        index_m = SpatialIndex(mirrored.vertices)
        b1, r1 = refine_and_collect(tpl, r, patch, index, 6)
        b2, r2 = refine_and_collect(tpl, r, mirrored, index_m, 6)
        v1 = intersection_volume(patch, b1, r, r1).volume
        v2 = intersection_volume(mirrored, b2, r, r2).volume
        assert v1 + v2 == pytest.approx(FULL(r), rel=0.02)

    def test_scale_equivariance_power_of_two(self):
        tpl = make_sphere_template(2)
        r = 1.5
        patch = grid_patch(20, r)
        scaled = SurfacePatch(patch.vertices * 2.0, patch.faces,
                              patch.face_normals * 4.0, patch.vertex_normals,
                              patch.open_boundary)
        i1 = SpatialIndex(patch.vertices)
        i2 = SpatialIndex(scaled.vertices)
        b1, c1 = refine_and_collect(tpl, r, patch, i1, 6)
        b2, c2 = refine_and_collect(tpl, 2 * r, scaled, i2, 6)
        assert len(b1) == len(b2) and c1 == c2
        v1 = intersection_volume(patch, b1, r, c1).volume
        v2 = intersection_volume(scaled, b2, 2 * r, c2).volume
        assert v2 == pytest.approx(8.0 * v1, rel=1e-12)

    def test_orientation_error_flagged(self):
        # a large wrongly-wound sheet above the center: the patch flux
        # goes negative and dominates the small behind cap
        tpl = make_sphere_template(2)
        r = 1.0
        s = 2.0 * r
        z = 0.75 * r
        pts = np.array([[-s, -s, z], [s, -s, z], [s, s, z], [-s, s, z]])
        faces = np.array([[0, 2, 1], [0, 3, 2]])  # wound so normals point -z
        fn = np.cross(pts[faces[:, 1]] - pts[faces[:, 0]],
                      pts[faces[:, 2]] - pts[faces[:, 0]])
        assert (fn[:, 2] < 0).all()
        patch = SurfacePatch(pts, faces, fn,
                             np.tile([0.0, 0.0, -1.0], (4, 1)), False)
        index = SpatialIndex(patch.vertices)
        behind, refined = refine_and_collect(tpl, r, patch, index, 6)
        res = intersection_volume(patch, behind, r, refined)
        assert res.orientation_error
        assert 0.0 <= res.volume <= FULL(r) * (1 + 1e-9)

    def test_volume_clamped_range(self):
        tpl = make_sphere_template(2)
        for r in (0.8, 2.2):
            patch = grid_patch(20, r, center=5 * 21 + 5)
            index = SpatialIndex(patch.vertices)
            behind, refined = refine_and_collect(tpl, r, patch, index, 6)
            res = intersection_volume(patch, behind, r, refined)
            assert 0.0 <= res.volume <= FULL(r) * (1 + 1e-12)


class TestFusedKernel:
    def test_matches_reference_path(self, small_sphere):
        adj = build_adjacency(small_sphere)
        compute_vertex_normals(small_sphere)
        sampler = PatchSampler(small_sphere, adj)
        tpl = make_sphere_template(2)
        for vid, r in ((0, 0.4), (40, 0.9), (100, 1.6)):
            region = sampler.grow(vid, r)
            patch = sampler.patch_at(region, r)
            fused_v, fused_b, fused_r = sphere_side_volume(tpl, r, patch, 6,
                                                           False)
            index = SpatialIndex(patch.vertices)
            behind, refined = refine_and_collect(tpl, r, patch, index, 6)
            ref_v = spherical_cone_volume(behind, r)
            assert fused_v == pytest.approx(ref_v, rel=1e-9)
            assert fused_b == len(behind) and fused_r == refined

    def test_literal_rule_differs_from_sided(self):
        tpl = make_sphere_template(2)
        r = 1.0
        mesh = synth_shape(ShapeSpec("icosphere", radius=1.0, subdivisions=3))
        adj = build_adjacency(mesh)
        compute_vertex_normals(mesh)
        patch = extract_patch(mesh, adj, 0, r)
        v_sided, _, _ = sphere_side_volume(tpl, r, patch, 6, False)
        v_literal, _, _ = sphere_side_volume(tpl, r, patch, 6, True)
        # the orientation-only rule cannot see which side the point is on
        assert abs(v_literal - v_sided) / v_sided > 0.01
