"""PLY ingestion and serialization (ascii and binary little-endian).

The parser accepts arbitrary scalar/list vertex properties, interprets the
x/y/z coordinates plus optional uchar red/green/blue, and fan-triangulates
polygonal faces. Vertices with NaN/Inf coordinates are dropped at parse time
(with a count reported), which keeps every downstream consumer free of
invalid-return handling.

Writers emit double-precision coordinates in binary mode, so a binary
round-trip reproduces the input bit for bit; ascii mode emits float32
properties at 9 significant digits, which round-trips the float32 values
exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import BadFaceIndex, BodyTruncated, HeaderMalformed, PlyError
from .geometry import PointCloud, TriangleMesh

_SCALAR_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}

_MAX_ELEMENT_COUNT = 100_000_000


@dataclass
class _Property:
    name: str
    dtype: str                 # numpy dtype code, little-endian applied later
    count_dtype: str | None = None   # set for list properties

    @property
    def is_list(self) -> bool:
        return self.count_dtype is not None


@dataclass
class _Element:
    name: str
    count: int
    properties: list


@dataclass
class _Header:
    format: str                # "ascii" or "binary_little_endian"
    elements: list
    body_offset: int


@dataclass
class PlyParseResult:
    """Parsed geometry plus ingestion diagnostics."""

    geometry: PointCloud | TriangleMesh
    dropped_vertices: int = 0


def _parse_header(data: bytes) -> _Header:
    end = data.find(b"end_header")
    if end < 0:
        raise HeaderMalformed("missing end_header")
    newline = data.find(b"\n", end)
    if newline < 0:
        raise HeaderMalformed("no newline after end_header")
    try:
        text = data[:newline].decode("ascii")
    except UnicodeDecodeError as exc:
        raise HeaderMalformed(f"non-ascii header: {exc}") from None

    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "ply":
        raise HeaderMalformed("file does not start with 'ply'")

    fmt = None
    elements: list[_Element] = []
    for line in lines[1:]:
        parts = line.split()
        keyword = parts[0]
        if keyword == "format":
            if len(parts) != 3 or parts[2] != "1.0":
                raise HeaderMalformed(f"bad format line: {line!r}")
            if parts[1] not in ("ascii", "binary_little_endian"):
                raise HeaderMalformed(f"unsupported format {parts[1]!r}")
            fmt = parts[1]
        elif keyword == "element":
            if len(parts) != 3:
                raise HeaderMalformed(f"bad element line: {line!r}")
            try:
                count = int(parts[2])
            except ValueError:
                raise HeaderMalformed(f"bad element count: {line!r}") from None
            if count < 0 or count > _MAX_ELEMENT_COUNT:
                raise HeaderMalformed(f"element count out of range: {count}")
            elements.append(_Element(parts[1], count, []))
        elif keyword == "property":
            if not elements:
                raise HeaderMalformed("property before any element")
            if len(parts) >= 2 and parts[1] == "list":
                if len(parts) != 5:
                    raise HeaderMalformed(f"bad list property: {line!r}")
                count_t, item_t, name = parts[2], parts[3], parts[4]
                if count_t not in _SCALAR_TYPES or item_t not in _SCALAR_TYPES:
                    raise HeaderMalformed(f"unknown property type in {line!r}")
                elements[-1].properties.append(
                    _Property(name, _SCALAR_TYPES[item_t], _SCALAR_TYPES[count_t])
                )
            else:
                if len(parts) != 3:
                    raise HeaderMalformed(f"bad property line: {line!r}")
                ptype, name = parts[1], parts[2]
                if ptype not in _SCALAR_TYPES:
                    raise HeaderMalformed(f"unknown property type {ptype!r}")
                elements[-1].properties.append(_Property(name, _SCALAR_TYPES[ptype]))
        elif keyword in ("comment", "obj_info", "end_header"):
            continue
        else:
            raise HeaderMalformed(f"unknown header keyword {keyword!r}")

    if fmt is None:
        raise HeaderMalformed("missing format line")
    for element in elements:
        if element.count > 0 and not element.properties:
            raise HeaderMalformed(f"element {element.name!r} has no properties")
    return _Header(fmt, elements, newline + 1)


class _BinaryReader:
    def __init__(self, data: bytes, offset: int):
        self.data = data
        self.offset = offset

    def read_array(self, dtype: np.dtype, count: int) -> np.ndarray:
        nbytes = dtype.itemsize * count
        if self.offset + nbytes > len(self.data):
            raise BodyTruncated(
                f"need {nbytes} bytes at offset {self.offset}, have {len(self.data) - self.offset}"
            )
        out = np.frombuffer(self.data, dtype=dtype, count=count, offset=self.offset)
        self.offset += nbytes
        return out

    def read_scalar(self, code: str) -> float:
        return self.read_array(np.dtype("<" + code), 1)[0]


class _AsciiReader:
    def __init__(self, data: bytes, offset: int):
        try:
            text = data[offset:].decode("ascii")
        except UnicodeDecodeError as exc:
            raise BodyTruncated(f"non-ascii body: {exc}") from None
        self.tokens = text.split()
        self.pos = 0

    def take(self, n: int) -> list:
        if self.pos + n > len(self.tokens):
            raise BodyTruncated(
                f"need {n} tokens at position {self.pos}, have {len(self.tokens) - self.pos}"
            )
        out = self.tokens[self.pos:self.pos + n]
        self.pos += n
        return out

    def read_scalar(self, code: str) -> float:
        token = self.take(1)[0]
        try:
            if code in ("f4", "f8"):
                return float(token)
            return int(token)
        except ValueError:
            raise BodyTruncated(f"bad numeric token {token!r}") from None


def _read_element_binary(reader: _BinaryReader, element: _Element) -> dict:
    columns: dict[str, np.ndarray | list] = {}
    if all(not p.is_list for p in element.properties):
        row = np.dtype([(p.name, "<" + p.dtype) for p in element.properties])
        table = reader.read_array(row, element.count)
        for p in element.properties:
            columns[p.name] = table[p.name]
        return columns
    rows: dict[str, list] = {p.name: [] for p in element.properties}
    for _ in range(element.count):
        for p in element.properties:
            if p.is_list:
                n = int(reader.read_scalar(p.count_dtype))
                if n < 0 or n > 1_000_000:
                    raise BodyTruncated(f"list count {n} out of range")
                rows[p.name].append(reader.read_array(np.dtype("<" + p.dtype), n))
            else:
                rows[p.name].append(reader.read_scalar(p.dtype))
    return rows


def _read_element_ascii(reader: _AsciiReader, element: _Element) -> dict:
    rows: dict[str, list] = {p.name: [] for p in element.properties}
    for _ in range(element.count):
        for p in element.properties:
            if p.is_list:
                n = int(reader.read_scalar(p.count_dtype))
                if n < 0 or n > 1_000_000:
                    raise BodyTruncated(f"list count {n} out of range")
                values = [reader.read_scalar(p.dtype) for _ in range(n)]
                rows[p.name].append(np.array(values))
            else:
                rows[p.name].append(reader.read_scalar(p.dtype))
    scalar_only = {p.name for p in element.properties if not p.is_list}
    return {
        name: (np.array(vals) if name in scalar_only else vals)
        for name, vals in rows.items()
    }


def parse_ply(data: bytes) -> PlyParseResult:
    """Parse PLY bytes into a PointCloud or TriangleMesh.

    A TriangleMesh is returned whenever the file declares a face element;
    otherwise the vertices form a PointCloud. Any malformed input raises a
    PlyError subclass; the parser never lets a raw exception escape.
    """
    if not isinstance(data, (bytes, bytearray, memoryview)):
        raise TypeError("parse_ply expects bytes")
    data = bytes(data)
    header = _parse_header(data)
    try:
        return _parse_body(data, header)
    except PlyError:
        raise
    except (ValueError, struct.error, OverflowError, MemoryError,
            IndexError, KeyError, TypeError) as exc:
        raise BodyTruncated(f"malformed body: {exc}") from None


def _parse_body(data: bytes, header: _Header) -> PlyParseResult:
    reader = (
        _AsciiReader(data, header.body_offset)
        if header.format == "ascii"
        else _BinaryReader(data, header.body_offset)
    )
    read_element = (
        _read_element_ascii if header.format == "ascii" else _read_element_binary
    )

    tables: dict[str, dict] = {}
    for element in header.elements:
        tables[element.name] = read_element(reader, element)

    vertex_element = next((e for e in header.elements if e.name == "vertex"), None)
    if vertex_element is None:
        raise HeaderMalformed("missing vertex element")
    vertex = tables["vertex"]
    for axis in ("x", "y", "z"):
        if axis not in vertex:
            raise HeaderMalformed(f"vertex element lacks property {axis!r}")
        if isinstance(vertex[axis], list):
            raise HeaderMalformed(f"vertex property {axis!r} must be scalar")

    xyz = np.column_stack([
        np.asarray(vertex["x"], dtype=np.float64),
        np.asarray(vertex["y"], dtype=np.float64),
        np.asarray(vertex["z"], dtype=np.float64),
    ]) if vertex_element.count else np.zeros((0, 3))

    colors = None
    if all(c in vertex and not isinstance(vertex[c], list) for c in ("red", "green", "blue")):
        colors = np.column_stack([
            np.asarray(vertex["red"]), np.asarray(vertex["green"]), np.asarray(vertex["blue"]),
        ]).astype(np.uint8) if vertex_element.count else None

    valid = np.all(np.isfinite(xyz), axis=1)
    dropped = int(len(xyz) - valid.sum())

    face_element = next((e for e in header.elements if e.name == "face"), None)
    if face_element is not None:
        face_lists = []
        if face_element.count > 0:
            list_name = next(
                (p.name for p in face_element.properties
                 if p.is_list and p.name in ("vertex_indices", "vertex_index")),
                None,
            )
            if list_name is None:
                raise HeaderMalformed("face element lacks a vertex_indices list property")
            face_lists = tables["face"][list_name]
        triangles = []
        for indices in face_lists:
            indices = np.asarray(indices, dtype=np.int64)
            if np.any(indices < 0) or np.any(indices >= len(xyz)):
                raise BadFaceIndex(
                    f"face references vertex outside [0, {len(xyz)})"
                )
            for k in range(1, len(indices) - 1):
                triangles.append((indices[0], indices[k], indices[k + 1]))
        faces = np.array(triangles, dtype=np.int64).reshape(-1, 3)
        if dropped:
            remap = np.full(len(xyz), -1, dtype=np.int64)
            remap[valid] = np.arange(int(valid.sum()))
            faces = remap[faces]
            faces = faces[np.all(faces >= 0, axis=1)]
        mesh = TriangleMesh(xyz[valid], faces)
        return PlyParseResult(mesh, dropped)

    cloud_colors = colors[valid] if colors is not None else None
    return PlyParseResult(PointCloud(xyz[valid], cloud_colors), dropped)


def _header_lines(fmt: str, n_vertices: int, vertex_props: list[str],
                  n_faces: int | None) -> bytes:
    lines = ["ply", f"format {fmt} 1.0", f"element vertex {n_vertices}"]
    lines += vertex_props
    if n_faces is not None:
        lines.append(f"element face {n_faces}")
        lines.append("property list uchar int vertex_indices")
    lines.append("end_header")
    return ("\n".join(lines) + "\n").encode("ascii")


def write_ply(geometry: PointCloud | TriangleMesh, format: str = "binary") -> bytes:
    """Serialize a cloud or mesh; format is "binary" (little-endian) or "ascii"."""
    if format not in ("binary", "ascii"):
        raise ValueError(f"format must be 'binary' or 'ascii', got {format!r}")

    if isinstance(geometry, TriangleMesh):
        points = geometry.vertices
        faces = geometry.faces
        colors = None
    elif isinstance(geometry, PointCloud):
        points = geometry.points
        faces = None
        colors = geometry.colors
    else:
        raise TypeError(f"cannot serialize {type(geometry)!r}")

    if format == "binary":
        coord_type = "double"
        coord_dtype = "<f8"
    else:
        coord_type = "float"
        coord_dtype = "<f4"

    props = [f"property {coord_type} {axis}" for axis in "xyz"]
    if colors is not None:
        props += [f"property uchar {c}" for c in ("red", "green", "blue")]
    header = _header_lines(
        "binary_little_endian" if format == "binary" else "ascii",
        len(points), props, len(faces) if faces is not None else None,
    )

    out = bytearray(header)
    if format == "binary":
        if colors is not None:
            row = np.zeros(len(points), dtype=[("xyz", "<f8", 3), ("rgb", "u1", 3)])
            row["xyz"] = points
            row["rgb"] = colors
            out += row.tobytes()
        else:
            out += np.ascontiguousarray(points, dtype=coord_dtype).tobytes()
        if faces is not None:
            row = np.zeros(len(faces), dtype=[("n", "u1"), ("idx", "<i4", 3)])
            row["n"] = 3
            row["idx"] = faces
            out += row.tobytes()
    else:
        f32 = points.astype(np.float32)
        for i in range(len(points)):
            coords = " ".join(f"{float(v):.9g}" for v in f32[i])
            if colors is not None:
                coords += " " + " ".join(str(int(c)) for c in colors[i])
            out += (coords + "\n").encode("ascii")
        if faces is not None:
            for face in faces:
                out += f"3 {face[0]} {face[1]} {face[2]}\n".encode("ascii")
    return bytes(out)


def load_ply(path) -> PlyParseResult:
    with open(path, "rb") as fh:
        return parse_ply(fh.read())


def save_ply(path, geometry, format: str = "binary") -> None:
    with open(path, "wb") as fh:
        fh.write(write_ply(geometry, format))
