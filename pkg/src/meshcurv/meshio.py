"""PLY (ascii / binary little-endian) and OBJ readers and writers.

Vertex layout on write: x y z [nx ny nz] [red green blue] [named fields].
Positions, normals and scalar fields are written as doubles in binary
files so a save/load round-trip is exact; ascii files carry 9 significant
digits. Faces must be triangles; anything else is an error, never a
silent triangulation.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .mesh import Mesh, MeshError

PLY_ASCII = "ply-ascii"
PLY_BINARY = "ply-binary-little-endian"
OBJ = "obj"
FORMATS = (PLY_ASCII, PLY_BINARY, OBJ)


class MeshIOError(IOError):
    """Unreadable or malformed mesh file.

    `line` (1-based, ascii) or `offset` (bytes, binary) locate the problem.
    """

    def __init__(self, path, message, line=None, offset=None):
        where = str(path)
        if line is not None:
            where += f":{line}"
        if offset is not None:
            where += f" @byte {offset}"
        super().__init__(f"{where}: {message}")
        self.path = str(path)
        self.line = line
        self.offset = offset


_PLY_SCALAR = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}
_FLOAT_TYPES = {"f4", "f8"}
_POSITION_PROPS = ("x", "y", "z")
_NORMAL_PROPS = ("nx", "ny", "nz")
_COLOR_PROPS = ("red", "green", "blue")


def detect_format(path) -> str:
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head[:3] == b"ply":
        with open(path, "rb") as fh:
            for raw in fh:
                line = raw.decode("ascii", errors="replace").strip()
                if line.startswith("format"):
                    if "binary_little_endian" in line:
                        return PLY_BINARY
                    if "ascii" in line:
                        return PLY_ASCII
                    raise MeshIOError(path, f"unsupported PLY format line: {line!r}")
                if line == "end_header":
                    break
        raise MeshIOError(path, "PLY header has no format line")
    return OBJ


def load_mesh(path, format: str | None = None) -> Mesh:
    """Read a mesh; `format` is auto-detected when None.

    Recognized vertex properties: x/y/z (positions), nx/ny/nz (normals),
    red/green/blue uchar (colors). Any other float property becomes a
    named scalar field.
    """
    if not os.path.exists(path):
        raise MeshIOError(path, "file not found")
    if format is None:
        format = detect_format(path)
    if format in (PLY_ASCII, PLY_BINARY):
        return _load_ply(path)
    if format == OBJ:
        return _load_obj(path)
    raise MeshIOError(path, f"unknown format {format!r}")


def save_mesh(mesh: Mesh, path, format: str | None = None, fields=()) -> None:
    """Write a mesh; `format` defaults to binary PLY (.obj paths get OBJ).

    `fields` lists the scalar fields to embed as extra vertex properties.
    Normals and colors are written whenever the mesh carries them.
    """
    if format is None:
        format = OBJ if str(path).lower().endswith(".obj") else PLY_BINARY
    for name in fields:
        if name not in mesh.scalars:
            raise MeshError(f"unknown scalar field {name!r}")
    if format == OBJ:
        if fields:
            raise MeshError("OBJ cannot carry scalar fields")
        _save_obj(mesh, path)
    elif format in (PLY_ASCII, PLY_BINARY):
        _save_ply(mesh, path, binary=(format == PLY_BINARY), fields=tuple(fields))
    else:
        raise MeshError(f"unknown format {format!r}")


# ---------------------------------------------------------------------------
# PLY

def _parse_ply_header(fh, path):
    """Returns (elements, binary, header_end_offset, n_header_lines).

    elements: list of (name, count, props); props is a list of either
    ("scalar", name, np_type) or ("list", count_type, item_type, name).
    """
    elements = []
    binary = None
    lineno = 0

    def next_line():
        nonlocal lineno
        raw = fh.readline()
        if not raw:
            raise MeshIOError(path, "unexpected end of header", line=lineno)
        lineno += 1
        return raw.decode("ascii", errors="replace").strip()

    if next_line() != "ply":
        raise MeshIOError(path, "missing 'ply' magic", line=1)
    while True:
        line = next_line()
        if line == "end_header":
            break
        tokens = line.split()
        if not tokens or tokens[0] == "comment" or tokens[0] == "obj_info":
            continue
        if tokens[0] == "format":
            if tokens[1] == "ascii":
                binary = False
            elif tokens[1] == "binary_little_endian":
                binary = True
            else:
                raise MeshIOError(path, f"unsupported format {tokens[1]!r}", line=lineno)
        elif tokens[0] == "element":
            try:
                elements.append((tokens[1], int(tokens[2]), []))
            except (IndexError, ValueError):
                raise MeshIOError(path, f"bad element line {line!r}", line=lineno)
        elif tokens[0] == "property":
            if not elements:
                raise MeshIOError(path, "property before element", line=lineno)
            props = elements[-1][2]
            if tokens[1] == "list":
                try:
                    props.append(("list", _PLY_SCALAR[tokens[2]], _PLY_SCALAR[tokens[3]], tokens[4]))
                except (KeyError, IndexError):
                    raise MeshIOError(path, f"bad list property {line!r}", line=lineno)
            else:
                try:
                    props.append(("scalar", tokens[2], _PLY_SCALAR[tokens[1]]))
                except (KeyError, IndexError):
                    raise MeshIOError(path, f"bad property {line!r}", line=lineno)
        else:
            raise MeshIOError(path, f"unknown header keyword {tokens[0]!r}", line=lineno)
    if binary is None:
        raise MeshIOError(path, "PLY header has no format line")
    return elements, binary, fh.tell(), lineno


def _load_ply(path) -> Mesh:
    with open(path, "rb") as fh:
        elements, binary, data_start, header_lines = _parse_ply_header(fh, path)
        if binary:
            data = fh.read()
            columns, faces = _read_ply_binary(path, elements, data, data_start)
        else:
            text = fh.read().decode("ascii", errors="replace")
            columns, faces = _read_ply_ascii(path, elements, text, header_lines)
    return _assemble_ply_mesh(path, columns, faces)


def _read_ply_binary(path, elements, data, data_start):
    offset = 0
    columns = {}
    faces = None
    for name, count, props in elements:
        if all(p[0] == "scalar" for p in props):
            dt = np.dtype([(p[1], "<" + p[2]) for p in props])
            need = dt.itemsize * count
            if len(data) - offset < need:
                raise MeshIOError(path, f"truncated element {name!r}",
                                  offset=data_start + offset)
            rows = np.frombuffer(data, dtype=dt, count=count, offset=offset)
            offset += need
            if name == "vertex":
                for p in props:
                    columns[p[1]] = (rows[p[1]], p[2])
        elif name == "face" and len(props) == 1 and props[0][0] == "list":
            _, ctype, itype, _ = props[0]
            csize = np.dtype(ctype).itemsize
            isize = np.dtype(itype).itemsize
            dt = np.dtype([("n", "<" + ctype), ("v", "<" + itype, (3,))])
            need = dt.itemsize * count
            if len(data) - offset >= need:
                rows = np.frombuffer(data, dtype=dt, count=count, offset=offset)
                if count == 0 or (rows["n"] == 3).all():
                    faces = rows["v"].astype(np.int64)
                    offset += need
                    continue
            # slow scan to locate the first non-triangle / truncation
            pos = offset
            for i in range(count):
                if len(data) - pos < csize:
                    raise MeshIOError(path, f"truncated face {i}", offset=data_start + pos)
                n = int(np.frombuffer(data, dtype="<" + ctype, count=1, offset=pos)[0])
                if n != 3:
                    raise MeshIOError(path, f"non-triangular face ({n} vertices)",
                                      offset=data_start + pos)
                pos += csize + n * isize
            raise MeshIOError(path, f"truncated element {name!r}", offset=data_start + offset)
        else:
            # element with list properties we do not model: must still skip it
            raise MeshIOError(path, f"unsupported element layout for {name!r}",
                              offset=data_start + offset)
    return columns, faces


def _read_ply_ascii(path, elements, text, header_lines):
    lines = text.splitlines()
    li = 0
    columns = {}
    faces = None

    def grab_line(what):
        nonlocal li
        while li < len(lines) and not lines[li].strip():
            li += 1
        if li >= len(lines):
            raise MeshIOError(path, f"unexpected end of file reading {what}",
                              line=header_lines + li + 1)
        li += 1
        return lines[li - 1].split(), header_lines + li

    for name, count, props in elements:
        if name == "vertex" and all(p[0] == "scalar" for p in props):
            raw = np.empty((count, len(props)), dtype=np.float64)
            for i in range(count):
                tokens, lno = grab_line(f"vertex {i}")
                if len(tokens) != len(props):
                    raise MeshIOError(path, f"expected {len(props)} values, got {len(tokens)}",
                                      line=lno)
                try:
                    raw[i] = [float(t) for t in tokens]
                except ValueError:
                    raise MeshIOError(path, f"bad number in {tokens!r}", line=lno)
            for j, p in enumerate(props):
                columns[p[1]] = (raw[:, j], p[2])
        elif name == "face":
            faces = np.empty((count, 3), dtype=np.int64)
            for i in range(count):
                tokens, lno = grab_line(f"face {i}")
                try:
                    n = int(tokens[0])
                except (ValueError, IndexError):
                    raise MeshIOError(path, f"bad face line {tokens!r}", line=lno)
                if n != 3:
                    raise MeshIOError(path, f"non-triangular face ({n} vertices)", line=lno)
                if len(tokens) != 4:
                    raise MeshIOError(path, f"expected 4 tokens, got {len(tokens)}", line=lno)
                faces[i] = [int(t) for t in tokens[1:4]]
        else:
            for i in range(count):
                grab_line(f"{name} {i}")  # skip unmodeled elements
    return columns, faces


def _assemble_ply_mesh(path, columns, faces) -> Mesh:
    for p in _POSITION_PROPS:
        if p not in columns:
            raise MeshIOError(path, f"vertex element lacks property {p!r}")
    n = len(columns["x"][0])
    positions = np.column_stack([np.asarray(columns[p][0], np.float64)
                                 for p in _POSITION_PROPS])
    normals = None
    if all(p in columns for p in _NORMAL_PROPS):
        normals = np.column_stack([np.asarray(columns[p][0], np.float64)
                                   for p in _NORMAL_PROPS])
    colors = None
    if all(p in columns for p in _COLOR_PROPS):
        colors = np.column_stack([np.asarray(columns[p][0]).astype(np.uint8)
                                  for p in _COLOR_PROPS])
    scalars = {}
    skip = set(_POSITION_PROPS) | set(_NORMAL_PROPS) | set(_COLOR_PROPS) | {"alpha"}
    for name, (values, ptype) in columns.items():
        if name in skip or ptype not in _FLOAT_TYPES:
            continue
        scalars[name] = np.asarray(values, np.float64).copy()
    if faces is None:
        faces = np.empty((0, 3), np.int64)
    try:
        return Mesh(positions, faces, scalars=scalars, colors=colors,
                    vertex_normals=normals)
    except MeshError as exc:
        raise MeshIOError(path, str(exc))


def _save_ply(mesh: Mesh, path, binary: bool, fields) -> None:
    props = [("x", "f8"), ("y", "f8"), ("z", "f8")]
    arrays = [mesh.vertices[:, 0], mesh.vertices[:, 1], mesh.vertices[:, 2]]
    if mesh.vertex_normals is not None:
        props += [("nx", "f8"), ("ny", "f8"), ("nz", "f8")]
        arrays += [mesh.vertex_normals[:, k] for k in range(3)]
    if mesh.colors is not None:
        props += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
        arrays += [mesh.colors[:, k] for k in range(3)]
    for name in fields:
        props.append((name, "f8"))
        arrays.append(np.asarray(mesh.scalars[name], np.float64))

    type_names = {"f8": "double", "u1": "uchar"}
    header = ["ply",
              "format binary_little_endian 1.0" if binary else "format ascii 1.0",
              f"element vertex {mesh.n_vertices}"]
    header += [f"property {type_names[t]} {n}" for n, t in props]
    header += [f"element face {mesh.n_faces}",
               "property list uchar int vertex_indices",
               "end_header"]

    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            vdt = np.dtype([(n, "<" + t) for n, t in props])
            rows = np.empty(mesh.n_vertices, dtype=vdt)
            for (n, _), arr in zip(props, arrays):
                rows[n] = arr
            fh.write(rows.tobytes())
            fdt = np.dtype([("n", "u1"), ("v", "<i4", (3,))])
            frows = np.empty(mesh.n_faces, dtype=fdt)
            frows["n"] = 3
            frows["v"] = mesh.faces
            fh.write(frows.tobytes())
        else:
            fmt_one = {"f8": "%.9g", "u1": "%d"}
            fmts = [fmt_one[t] for _, t in props]
            out = []
            cols = [a if a.dtype != np.uint8 else a.astype(np.int64) for a in arrays]
            for i in range(mesh.n_vertices):
                out.append(" ".join(f % c[i] for f, c in zip(fmts, cols)))
            for f in mesh.faces:
                out.append(f"3 {f[0]} {f[1]} {f[2]}")
            fh.write(("\n".join(out) + "\n").encode("ascii") if out else b"")


# ---------------------------------------------------------------------------
# OBJ

def _load_obj(path) -> Mesh:
    positions = []
    faces = []
    with open(path, "rb") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.decode("utf-8", errors="replace").strip()
            if not line or line.startswith("#"):
                continue
            tokens = line.split()
            if tokens[0] == "v":
                if len(tokens) < 4:
                    raise MeshIOError(path, f"bad vertex line {line!r}", line=lineno)
                try:
                    positions.append([float(t) for t in tokens[1:4]])
                except ValueError:
                    raise MeshIOError(path, f"bad number in {line!r}", line=lineno)
            elif tokens[0] == "f":
                if len(tokens) != 4:
                    raise MeshIOError(path, f"non-triangular face ({len(tokens) - 1} vertices)",
                                      line=lineno)
                idx = []
                for t in tokens[1:]:
                    try:
                        i = int(t.split("/")[0])
                    except ValueError:
                        raise MeshIOError(path, f"bad face index {t!r}", line=lineno)
                    if i == 0:
                        raise MeshIOError(path, "face index 0 (OBJ is 1-based)", line=lineno)
                    idx.append(i - 1 if i > 0 else len(positions) + i)
                faces.append(idx)
            # vn/vt/o/g/s/usemtl/mtllib are ignored
    try:
        return Mesh(np.asarray(positions, np.float64).reshape(-1, 3),
                    np.asarray(faces, np.int64).reshape(-1, 3))
    except MeshError as exc:
        raise MeshIOError(path, str(exc))


def _save_obj(mesh: Mesh, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for v in mesh.vertices:
            fh.write("v %.9g %.9g %.9g\n" % (v[0], v[1], v[2]))
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")
