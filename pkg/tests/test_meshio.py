import numpy as np
import pytest

from meshcurv.mesh import Mesh, MeshError
from meshcurv.meshio import (OBJ, PLY_ASCII, PLY_BINARY, MeshIOError,
                             detect_format, load_mesh, save_mesh)


def random_mesh(seed=0):
    rng = np.random.default_rng(seed)
    mesh = Mesh(rng.uniform(-1, 1, (12, 3)),
                np.array([[0, 1, 2], [3, 4, 5], [6, 7, 8], [9, 10, 11]]))
    mesh.scalars["quality"] = rng.uniform(0, 1, 12)
    mesh.colors = rng.integers(0, 256, (12, 3)).astype(np.uint8)
    return mesh


def test_binary_round_trip_bitwise(tmp_path):
    mesh = random_mesh()
    path = tmp_path / "m.ply"
    save_mesh(mesh, path, PLY_BINARY, fields=("quality",))
    back = load_mesh(path)
    assert np.array_equal(back.vertices, mesh.vertices)
    assert np.array_equal(back.faces, mesh.faces)
    assert np.array_equal(back.scalars["quality"], mesh.scalars["quality"])
    assert np.array_equal(back.colors, mesh.colors)


def test_ascii_round_trip_nine_digits(tmp_path):
    mesh = random_mesh(1)
    path = tmp_path / "m_ascii.ply"
    save_mesh(mesh, path, PLY_ASCII, fields=("quality",))
    back = load_mesh(path)
    assert np.allclose(back.vertices, mesh.vertices, rtol=1e-8, atol=0)
    assert np.array_equal(back.faces, mesh.faces)
    assert np.allclose(back.scalars["quality"], mesh.scalars["quality"], rtol=1e-8)


def test_normals_round_trip(tmp_path):
    mesh = random_mesh(2)
    mesh.vertex_normals = np.tile([0.0, 0.0, 1.0], (12, 1))
    path = tmp_path / "n.ply"
    save_mesh(mesh, path, PLY_BINARY)
    back = load_mesh(path)
    assert np.array_equal(back.vertex_normals, mesh.vertex_normals)


def test_obj_round_trip(tmp_path, tetrahedron):
    path = tmp_path / "t.obj"
    save_mesh(tetrahedron, path, OBJ)
    back = load_mesh(path)
    assert np.allclose(back.vertices, tetrahedron.vertices)
    assert np.array_equal(back.faces, tetrahedron.faces)
    assert detect_format(path) == OBJ


def test_obj_quad_rejected(tmp_path):
    path = tmp_path / "quad.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    with pytest.raises(MeshIOError, match="non-triangular"):
        load_mesh(path)
    try:
        load_mesh(path)
    except MeshIOError as exc:
        assert exc.line == 5


def test_obj_slash_indices_and_negative(tmp_path):
    path = tmp_path / "slash.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1 2/2 -1\n")
    mesh = load_mesh(path)
    assert np.array_equal(mesh.faces, [[0, 1, 2]])


def test_ascii_ply_with_quality_property(tmp_path):
    text = """ply
format ascii 1.0
element vertex 4
property float x
property float y
property float z
property float quality
element face 2
property list uchar int vertex_indices
end_header
0 0 0 0.5
1 0 0 0.25
1 1 0 0.125
0 1 0 1.0
3 0 1 2
3 0 2 3
"""
    path = tmp_path / "q.ply"
    path.write_text(text)
    mesh = load_mesh(path)
    assert mesh.n_vertices == 4 and mesh.n_faces == 2
    assert np.allclose(mesh.scalars["quality"], [0.5, 0.25, 0.125, 1.0])


def test_ply_non_triangular_face_rejected(tmp_path):
    text = ("ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\n"
            "property float y\nproperty float z\nelement face 1\n"
            "property list uchar int vertex_indices\nend_header\n"
            "0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n")
    path = tmp_path / "quad.ply"
    path.write_text(text)
    with pytest.raises(MeshIOError, match="non-triangular"):
        load_mesh(path)


def test_ply_out_of_range_index(tmp_path):
    text = ("ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\n"
            "property float y\nproperty float z\nelement face 1\n"
            "property list uchar int vertex_indices\nend_header\n"
            "0 0 0\n1 0 0\n1 1 0\n3 0 1 7\n")
    path = tmp_path / "bad.ply"
    path.write_text(text)
    with pytest.raises(MeshIOError, match="out-of-range"):
        load_mesh(path)


def test_truncated_binary_reports_offset(tmp_path):
    mesh = random_mesh(3)
    path = tmp_path / "trunc.ply"
    save_mesh(mesh, path, PLY_BINARY)
    data = path.read_bytes()
    path.write_bytes(data[:-40])
    with pytest.raises(MeshIOError, match="byte"):
        load_mesh(path)


def test_malformed_ascii_reports_line(tmp_path):
    text = ("ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\n"
            "property float y\nproperty float z\nelement face 0\n"
            "property list uchar int vertex_indices\nend_header\n"
            "0 0 0\n1 oops 0\n")
    path = tmp_path / "bad_line.ply"
    path.write_text(text)
    with pytest.raises(MeshIOError, match=":11"):
        load_mesh(path)


def test_missing_file():
    with pytest.raises(MeshIOError, match="not found"):
        load_mesh("/nonexistent/mesh.ply")


def test_unknown_field_on_save(tmp_path, tetrahedron):
    with pytest.raises(MeshError, match="unknown scalar field"):
        save_mesh(tetrahedron, tmp_path / "x.ply", fields=("nope",))


def test_obj_cannot_carry_fields(tmp_path):
    mesh = random_mesh(4)
    with pytest.raises(MeshError, match="OBJ"):
        save_mesh(mesh, tmp_path / "x.obj", OBJ, fields=("quality",))


def test_format_autodetect(tmp_path, tetrahedron):
    p1 = tmp_path / "a.ply"
    save_mesh(tetrahedron, p1, PLY_ASCII)
    assert detect_format(p1) == PLY_ASCII
    p2 = tmp_path / "b.ply"
    save_mesh(tetrahedron, p2, PLY_BINARY)
    assert detect_format(p2) == PLY_BINARY
    assert load_mesh(p1).n_faces == load_mesh(p2).n_faces == 4
