"""Readers and writers: PLY (ascii / binary_little_endian), XYZ text,
"PWNF" network weights, feature-matrix dumps and JSON reports."""

from __future__ import annotations

import json
import logging
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import PointCloud
from .errors import BimcloudError, FormatError, ShapeError, UnsupportedFormatError

logger = logging.getLogger(__name__)

PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}

WEIGHTS_MAGIC = b"PWNF"


@dataclass
class CloudDocument:
    """A parsed cloud plus what the file declared about it."""

    cloud: PointCloud
    source_format: str = "memory"
    property_names: tuple = ()
    skipped_properties: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.property_names)) != len(self.property_names):
            raise FormatError(f"duplicate property names: {self.property_names}")
        for name, values in self.extra.items():
            if len(values) != len(self.cloud):
                raise ShapeError(f"extra property {name!r} has {len(values)} values for {len(self.cloud)} points")


@dataclass
class _Element:
    name: str
    count: int
    props: list  # (name, dtype code or None for list, (count code, item code) for lists)


def _parse_header(data: bytes):
    if not data.startswith(b"ply\n") and not data.startswith(b"ply\r\n"):
        raise FormatError("missing 'ply' magic line")
    m = re.search(rb"end_header\r?\n", data)
    if m is None:
        raise FormatError("missing end_header")
    try:
        text = data[: m.start()].decode("ascii")
    except UnicodeDecodeError as exc:
        raise FormatError(f"non-ASCII header byte at offset {exc.start}") from None
    encoding = None
    elements: list[_Element] = []
    for lineno, line in enumerate(text.splitlines()[1:], start=2):
        tok = line.split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            if len(tok) != 3:
                raise FormatError(f"header line {lineno}: malformed format line")
            if tok[2] != "1.0":
                raise UnsupportedFormatError(f"PLY version {tok[2]} not supported")
            if tok[1] == "binary_big_endian":
                raise UnsupportedFormatError("binary_big_endian PLY is not supported")
            if tok[1] not in ("ascii", "binary_little_endian"):
                raise UnsupportedFormatError(f"unknown PLY encoding {tok[1]!r}")
            encoding = tok[1]
        elif tok[0] == "element":
            if len(tok) != 3 or not tok[2].isdigit():
                raise FormatError(f"header line {lineno}: malformed element line")
            elements.append(_Element(tok[1], int(tok[2]), []))
        elif tok[0] == "property":
            if not elements:
                raise FormatError(f"header line {lineno}: property before any element")
            if len(tok) == 5 and tok[1] == "list":
                if tok[2] not in PLY_TYPES or tok[3] not in PLY_TYPES:
                    raise FormatError(f"header line {lineno}: unknown list type")
                elements[-1].props.append((tok[4], None, (PLY_TYPES[tok[2]], PLY_TYPES[tok[3]])))
            elif len(tok) == 3 and tok[1] in PLY_TYPES:
                elements[-1].props.append((tok[2], PLY_TYPES[tok[1]], None))
            else:
                raise FormatError(f"header line {lineno}: malformed property line")
        else:
            raise FormatError(f"header line {lineno}: unexpected keyword {tok[0]!r}")
    if encoding is None:
        raise FormatError("missing format line")
    return encoding, elements, m.end()


def _skip_binary_element(data: bytes, offset: int, el: _Element) -> int:
    if all(p[2] is None for p in el.props):
        size = sum(np.dtype(p[1]).itemsize for p in el.props) * el.count
        if offset + size > len(data):
            raise FormatError(f"truncated {el.name} data at byte offset {len(data)} (needed {offset + size})")
        return offset + size
    for _ in range(el.count):
        for _, code, lst in el.props:
            if lst is None:
                offset += np.dtype(code).itemsize
                continue
            cnt_t, item_t = np.dtype("<" + lst[0]), np.dtype(lst[1])
            if offset + cnt_t.itemsize > len(data):
                raise FormatError(f"truncated {el.name} data at byte offset {len(data)}")
            cnt = int(np.frombuffer(data, cnt_t, 1, offset)[0])
            if cnt < 0:
                raise FormatError(f"negative list length at byte offset {offset}")
            offset += cnt_t.itemsize + cnt * item_t.itemsize
        if offset > len(data):
            raise FormatError(f"truncated {el.name} data at byte offset {len(data)}")
    return offset


def _vertex_columns(el: _Element, columns: dict, doc_format: str) -> CloudDocument:
    names = [p[0] for p in el.props]
    types = {p[0]: p[1] for p in el.props}
    for axis in "xyz":
        if axis not in columns:
            raise FormatError(f"vertex element lacks required property {axis!r}")
        if types[axis] not in ("f4", "f8"):
            raise FormatError(f"property {axis!r} must be a 32- or 64-bit real, got {types[axis]}")
    used = {"x", "y", "z"}
    skipped = 0
    # signaling NaNs warn on the float32 -> float64 cast; PointCloud rejects them below
    with np.errstate(invalid="ignore"):
        points = np.column_stack([columns[a].astype(np.float64) for a in "xyz"]) if el.count else np.zeros((0, 3))

    colors = None
    if all(c in columns for c in ("red", "green", "blue")):
        if all(types[c][0] in "iu" for c in ("red", "green", "blue")):
            rgb = np.column_stack([columns[c].astype(np.int64) for c in ("red", "green", "blue")])
            if rgb.size and (rgb.min() < 0 or rgb.max() > 255):
                raise FormatError("color values outside 0..255")
            colors = rgb.astype(np.uint8).reshape(-1, 3)
            used.update(("red", "green", "blue"))

    intensities = None
    for name in ("intensity", "scalar_intensity"):
        if name in columns and intensities is None:
            with np.errstate(invalid="ignore"):
                intensities = columns[name].astype(np.float64)
            used.add(name)

    labels = None
    for name in ("label", "scalar_label"):
        if name in columns and labels is None and types[name][0] in "iu":
            labels = columns[name].astype(np.int64)
            used.add(name)

    for name in names:
        if name not in used:
            skipped += 1
    if skipped:
        logger.warning("skipped %d unknown vertex properties", skipped)
    try:
        cloud = PointCloud(points, colors, intensities, labels)
    except BimcloudError as exc:
        raise FormatError(str(exc)) from None
    return CloudDocument(cloud, doc_format, tuple(names), skipped)


def _read_ply_bytes(data: bytes) -> CloudDocument:
    encoding, elements, offset = _parse_header(data)
    vertex = next((e for e in elements if e.name == "vertex"), None)
    if vertex is None:
        raise FormatError("no vertex element")
    names = [p[0] for p in vertex.props]
    if len(set(names)) != len(names):
        raise FormatError("duplicate vertex property names")
    if any(p[2] is not None for p in vertex.props):
        raise FormatError("list properties on vertices are not supported")
    doc_format = f"ply-{encoding}"

    if encoding == "binary_little_endian":
        for el in elements:
            if el is vertex:
                break
            offset = _skip_binary_element(data, offset, el)
        dtype = np.dtype([(p[0], "<" + p[1]) for p in vertex.props])
        need = dtype.itemsize * vertex.count
        if offset + need > len(data):
            raise FormatError(
                f"truncated vertex data: {vertex.count} vertices need bytes {offset}..{offset + need}, "
                f"file ends at byte offset {len(data)}"
            )
        arr = np.frombuffer(data, dtype, vertex.count, offset)
        columns = {name: arr[name] for name in names}
        return _vertex_columns(vertex, columns, doc_format)

    # ascii: one element instance per line
    body = data[offset:]
    try:
        text = body.decode("ascii")
    except UnicodeDecodeError as exc:
        raise FormatError(f"non-ASCII byte at offset {offset + exc.start}") from None
    lines = text.splitlines()
    # drop blank lines but remember where the text ends for error offsets
    lines = [ln for ln in lines if ln.strip()]
    pos = 0
    for el in elements:
        if el is vertex:
            break
        pos += el.count
    if pos + vertex.count > len(lines):
        raise FormatError(
            f"truncated vertex data: expected {vertex.count} vertex lines, found {max(0, len(lines) - pos)}; "
            f"body ends at byte offset {len(data)}"
        )
    rows = lines[pos: pos + vertex.count]
    width = len(names)
    table = np.empty((vertex.count, width), dtype=np.float64)
    for i, row in enumerate(rows):
        tok = row.split()
        if len(tok) != width:
            raise FormatError(f"vertex line {i + 1}: expected {width} values, got {len(tok)}")
        try:
            table[i] = [float(t) for t in tok]
        except ValueError:
            raise FormatError(f"vertex line {i + 1}: unparsable number in {row!r}") from None
    columns = {}
    for j, (name, code, _) in enumerate(vertex.props):
        col = table[:, j]
        if code[0] in "iu":
            if not np.all(np.isfinite(col)) or np.any(col != np.round(col)):
                raise FormatError(f"integer property {name!r} holds non-integer values")
        columns[name] = col
    return _vertex_columns(vertex, columns, doc_format)


def read_ply(path) -> CloudDocument:
    """Parse a PLY 1.0 file (``ascii`` or ``binary_little_endian``).

    Only the vertex element is kept; other elements such as faces are ignored.
    Malformed input always surfaces as :class:`FormatError`.
    """
    data = Path(path).read_bytes()
    return parse_ply(data)


def parse_ply(data: bytes) -> CloudDocument:
    try:
        return _read_ply_bytes(data)
    except FormatError:
        raise
    except (ValueError, IndexError, TypeError, OverflowError, MemoryError, struct.error) as exc:
        raise FormatError(f"malformed PLY: {exc}") from None


def write_ply(doc, path, encoding: str = "binary_little_endian") -> None:
    """Write a cloud (or CloudDocument) as PLY.

    Coordinates and intensities are written as doubles, colors as uchar,
    labels and any ``doc.extra`` columns as int.
    """
    if isinstance(doc, PointCloud):
        doc = CloudDocument(doc)
    if encoding not in ("ascii", "binary_little_endian"):
        raise UnsupportedFormatError(f"cannot write PLY encoding {encoding!r}")
    cloud = doc.cloud
    n = len(cloud)
    fields = [("x", "<f8"), ("y", "<f8"), ("z", "<f8")]
    if cloud.colors is not None:
        fields += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
    if cloud.intensities is not None:
        fields.append(("intensity", "<f8"))
    if cloud.labels is not None:
        fields.append(("label", "<i4"))
    for name in doc.extra:
        fields.append((name, "<i4"))
    names = {"<f8": "double", "u1": "uchar", "<i4": "int"}

    arr = np.zeros(n, dtype=fields)
    arr["x"], arr["y"], arr["z"] = cloud.points.T if n else (0, 0, 0)
    if cloud.colors is not None:
        arr["red"], arr["green"], arr["blue"] = cloud.colors.T if n else (0, 0, 0)
    if cloud.intensities is not None:
        arr["intensity"] = cloud.intensities
    if cloud.labels is not None:
        arr["label"] = cloud.labels
    for name, values in doc.extra.items():
        arr[name] = np.asarray(values)

    header = ["ply", f"format {encoding} 1.0", f"element vertex {n}"]
    header += [f"property {names[t]} {name}" for name, t in fields]
    header.append("end_header")
    head = ("\n".join(header) + "\n").encode("ascii")

    with open(path, "wb") as fh:
        fh.write(head)
        if encoding == "binary_little_endian":
            fh.write(arr.tobytes())
        else:
            fmts = ["%.17g" if t == "<f8" else "%d" for _, t in fields]
            for row in arr:
                fh.write((" ".join(f % v for f, v in zip(fmts, row.tolist())) + "\n").encode("ascii"))


def read_xyz(path) -> CloudDocument:
    """Whitespace-separated text: xyz, xyz+rgb, or xyz+rgb+intensity per row."""
    rows, width, first_line = [], None, None
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            tok = s.split()
            if len(tok) not in (3, 6, 7):
                raise FormatError(f"line {lineno}: expected 3, 6 or 7 columns, got {len(tok)}")
            if width is None:
                width, first_line = len(tok), lineno
            elif len(tok) != width:
                raise FormatError(f"line {lineno}: {len(tok)} columns, but line {first_line} had {width}")
            try:
                rows.append([float(t) for t in tok])
            except ValueError:
                raise FormatError(f"line {lineno}: unparsable number in {s!r}") from None
    table = np.array(rows, dtype=np.float64).reshape(-1, width or 3)
    names = ("x", "y", "z", "red", "green", "blue", "intensity")[: table.shape[1]]
    colors = intensities = None
    if table.shape[1] >= 6:
        rgb = table[:, 3:6]
        if np.any(rgb != np.round(rgb)) or (rgb.size and (rgb.min() < 0 or rgb.max() > 255)):
            raise FormatError("color columns must be integers in 0..255")
        colors = rgb.astype(np.uint8)
    if table.shape[1] == 7:
        intensities = table[:, 6]
    try:
        cloud = PointCloud(table[:, :3], colors, intensities)
    except BimcloudError as exc:
        raise FormatError(str(exc)) from None
    return CloudDocument(cloud, "xyz", names)


def write_xyz(doc, path) -> None:
    cloud = doc.cloud if isinstance(doc, CloudDocument) else doc
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(len(cloud)):
            parts = ["%.17g" % v for v in cloud.points[i]]
            if cloud.colors is not None:
                parts += ["%d" % v for v in cloud.colors[i]]
                if cloud.intensities is not None:
                    parts.append("%.17g" % cloud.intensities[i])
            fh.write(" ".join(parts) + "\n")


def read_cloud(path) -> CloudDocument:
    """Dispatch on file extension (.ply or .xyz/.txt)."""
    suffix = Path(path).suffix.lower()
    if suffix == ".ply":
        return read_ply(path)
    if suffix in (".xyz", ".txt"):
        return read_xyz(path)
    raise UnsupportedFormatError(f"unknown point-cloud extension {suffix!r}")


# -- network weights -------------------------------------------------------

@dataclass
class WeightsFile:
    """Ordered affine layers; ``layers[i] = (matrix (rows, cols), bias (rows,))``."""

    layers: list

    def __post_init__(self):
        for i, (w, b) in enumerate(self.layers):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ShapeError(f"layer {i}: matrix {w.shape} incompatible with bias {b.shape}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise FormatError(f"layer {i}: non-finite entries")

    @property
    def shapes(self) -> list:
        return [tuple(w.shape) for w, _ in self.layers]


def encode_weights(w: WeightsFile) -> bytes:
    out = [WEIGHTS_MAGIC, struct.pack("<I", len(w.layers))]
    for mat, bias in w.layers:
        rows, cols = mat.shape
        out.append(struct.pack("<II", rows, cols))
        out.append(np.ascontiguousarray(mat, dtype="<f4").tobytes())
        out.append(np.ascontiguousarray(bias, dtype="<f4").tobytes())
    return b"".join(out)


def decode_weights(data: bytes, expected: Optional[Sequence] = None) -> WeightsFile:
    if data[:4] != WEIGHTS_MAGIC:
        raise FormatError(f"bad weights magic {data[:4]!r}, expected {WEIGHTS_MAGIC!r}")
    if len(data) < 8:
        raise FormatError("truncated weights header")
    (count,) = struct.unpack_from("<I", data, 4)
    offset = 8
    layers = []
    for i in range(count):
        if offset + 8 > len(data):
            raise FormatError(f"truncated weights file at layer {i} (byte offset {offset})")
        rows, cols = struct.unpack_from("<II", data, offset)
        offset += 8
        need = 4 * (rows * cols + rows)
        if offset + need > len(data):
            raise FormatError(f"truncated weights file in layer {i} (byte offset {offset})")
        mat = np.frombuffer(data, "<f4", rows * cols, offset).reshape(rows, cols).copy()
        offset += 4 * rows * cols
        bias = np.frombuffer(data, "<f4", rows, offset).copy()
        offset += 4 * rows
        layers.append((mat, bias))
    if offset != len(data):
        raise FormatError(f"{len(data) - offset} trailing bytes after last layer")
    found = [(w.shape[0], w.shape[1]) for w, _ in layers]
    if expected is not None:
        expected = [tuple(s) for s in expected]
        if found != expected:
            raise ShapeError(f"weights layer plan mismatch: expected {expected}, found {found}")
    return WeightsFile(layers)


def read_weights(path, expected: Optional[Sequence] = None) -> WeightsFile:
    """Read a "PWNF" weights file, optionally checking it against a layer plan of (rows, cols)."""
    return decode_weights(Path(path).read_bytes(), expected)


def write_weights(w: WeightsFile, path) -> None:
    Path(path).write_bytes(encode_weights(w))


# -- feature dumps ---------------------------------------------------------

def write_feature_matrix(values: np.ndarray, path) -> None:
    values = np.asarray(values)
    if values.ndim != 2:
        raise ShapeError(f"feature matrix must be 2-D, got shape {values.shape}")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", *values.shape))
        fh.write(np.ascontiguousarray(values, dtype="<f4").tobytes())


def read_feature_matrix(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 8:
        raise FormatError("truncated feature matrix header")
    rows, cols = struct.unpack_from("<II", data, 0)
    if len(data) != 8 + 4 * rows * cols:
        raise FormatError(f"feature matrix body has {len(data) - 8} bytes, expected {4 * rows * cols}")
    return np.frombuffer(data, "<f4", rows * cols, 8).reshape(rows, cols).copy()


# -- reports ---------------------------------------------------------------

def report_to_json(report) -> str:
    payload = report.to_dict() if hasattr(report, "to_dict") else report
    return json.dumps(payload, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def write_report_json(report, path) -> None:
    """Serialize a report (anything with ``to_dict()`` or a plain dict) as UTF-8 JSON.

    Keys keep the report's own insertion order so repeated runs are byte-identical.
    """
    Path(path).write_text(report_to_json(report), encoding="utf-8")


def read_report_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
