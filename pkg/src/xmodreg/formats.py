"""On-disk interchange formats.

Binary containers (all little-endian, see FORMATS.md for byte-level examples):

* ``FRGD``: a raw depth map, float32 meters, 0.0 = invalid pixel;
* ``FRGF``: per-layer feature tensors from one modality;
* ``FRGP``: a point set with per-point feature vectors.

Text formats: a 4x4 row-major homogeneous pose, a correspondence table with
a versioned header, camera intrinsics as JSON, and PLY point clouds (ASCII
or binary little-endian).  Every reader validates exhaustively and raises
:class:`FormatError` with a byte offset; malformed input never escapes as a
stray exception.
"""

from __future__ import annotations

import json

import numpy as np

from .depth import DepthMap
from .errors import FormatError, InvalidInputError
from .features import FeatureLayer, FeatureMap
from .geometry import CameraIntrinsics, PointCloud, Pose
from .matching import CorrespondenceSet

FRGD_MAGIC = b"FRGD"
FRGF_MAGIC = b"FRGF"
FRGP_MAGIC = b"FRGP"
FORMAT_VERSION = 1
CORR_HEADER = "# xmodreg-corr v1"

_MODALITY_CODE = {"rgb": 0, "depth": 1}
_MODALITY_NAME = {v: k for k, v in _MODALITY_CODE.items()}

_MAX_DIM = 65535
_MAX_LAYERS = 64
_MAX_POINTS = 100_000_000


class _Cursor:
    """Sequential byte reader that reports the offset of every failure."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"truncated while reading {what}", self.pos)
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]

    def u32(self, what: str) -> int:
        return int.from_bytes(self.take(4, what), "little")

    def f32_array(self, count: int, what: str) -> np.ndarray:
        start = self.pos
        raw = self.take(4 * count, what)
        arr = np.frombuffer(raw, dtype="<f4")
        if not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise FormatError(f"non-finite value in {what}", start + 4 * bad)

        return arr

    def expect_end(self, what: str) -> None:
        if self.pos != len(self.data):
            raise FormatError(f"{what}: trailing bytes after payload", self.pos)


def _read_bytes(path) -> bytes:
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc


def _check_magic(cur: _Cursor, magic: bytes, name: str) -> None:
    got = cur.take(4, f"{name} magic")
    if got != magic:
        raise FormatError(f"not a {name} file (magic {got!r})", 0)
    version = cur.u32(f"{name} version")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported {name} version {version}", 4)


def _check_dim(value: int, what: str, offset: int, upper: int = _MAX_DIM) -> int:
    if not (1 <= value <= upper):
        raise FormatError(f"{what} out of range: {value}", offset)
    return value


# ---------------------------------------------------------------------------
# FRGD (raw depth)


def write_frgd(path, depth: DepthMap) -> None:
    with open(path, "wb") as fh:
        fh.write(FRGD_MAGIC)
        fh.write(FORMAT_VERSION.to_bytes(4, "little"))
        fh.write(int(depth.height).to_bytes(4, "little"))
        fh.write(int(depth.width).to_bytes(4, "little"))
        fh.write(np.ascontiguousarray(depth.data, dtype="<f4").tobytes())


def read_frgd(path) -> DepthMap:
    cur = _Cursor(_read_bytes(path))
    _check_magic(cur, FRGD_MAGIC, "FRGD")
    off = cur.pos
    h = _check_dim(cur.u32("height"), "height", off)
    off = cur.pos
    w = _check_dim(cur.u32("width"), "width", off)
    payload_at = cur.pos
    arr = cur.f32_array(h * w, "depth payload")
    cur.expect_end("FRGD")
    if np.any(arr < 0.0):
        bad = int(np.flatnonzero(arr < 0.0)[0])
        raise FormatError("negative depth value", payload_at + 4 * bad)
    return DepthMap(arr.reshape(h, w))


# ---------------------------------------------------------------------------
# FRGF (layer tensors)


def write_frgf(path, fm: FeatureMap) -> None:
    with open(path, "wb") as fh:
        fh.write(FRGF_MAGIC)
        fh.write(FORMAT_VERSION.to_bytes(4, "little"))
        fh.write(bytes([_MODALITY_CODE[fm.modality]]))
        fh.write(len(fm.layers).to_bytes(4, "little"))
        for layer in fm.layers:
            c, h, w = layer.data.shape
            fh.write(int(layer.layer_id).to_bytes(4, "little"))
            fh.write(c.to_bytes(4, "little"))
            fh.write(h.to_bytes(4, "little"))
            fh.write(w.to_bytes(4, "little"))
            fh.write(np.ascontiguousarray(layer.data, dtype="<f4").tobytes())


def read_frgf(path, grid=None) -> FeatureMap:
    cur = _Cursor(_read_bytes(path))
    _check_magic(cur, FRGF_MAGIC, "FRGF")
    off = cur.pos
    mod = cur.u8("modality")
    if mod not in _MODALITY_NAME:
        raise FormatError(f"unknown modality code {mod}", off)
    off = cur.pos
    n_layers = cur.u32("layer count")
    if not (1 <= n_layers <= _MAX_LAYERS):
        raise FormatError(f"layer count out of range: {n_layers}", off)

    layers = []
    last_id = -1
    for i in range(n_layers):
        off = cur.pos
        lid = cur.u32(f"layer {i} id")
        if lid <= last_id:
            raise FormatError(f"layer ids must be strictly increasing (got {lid})", off)
        last_id = lid
        c = _check_dim(cur.u32(f"layer {lid} channels"), "channels", cur.pos - 4)
        h = _check_dim(cur.u32(f"layer {lid} height"), "height", cur.pos - 4)
        w = _check_dim(cur.u32(f"layer {lid} width"), "width", cur.pos - 4)
        arr = cur.f32_array(c * h * w, f"layer {lid} payload")
        layers.append(FeatureLayer(lid, arr.reshape(c, h, w)))
    cur.expect_end("FRGF")
    return FeatureMap(tuple(layers), _MODALITY_NAME[mod], grid)


# ---------------------------------------------------------------------------
# FRGP (points with per-point features)


def write_frgp(path, cloud: PointCloud, vectors: np.ndarray) -> None:
    vec = np.asarray(vectors, dtype=np.float64)
    if vec.ndim != 2 or vec.shape[0] != len(cloud):
        raise InvalidInputError("vectors must be (N, dim) aligned with the cloud")
    if vec.shape[1] < 1:
        raise InvalidInputError("feature dimension must be >= 1")
    with open(path, "wb") as fh:
        fh.write(FRGP_MAGIC)
        fh.write(FORMAT_VERSION.to_bytes(4, "little"))
        fh.write(len(cloud).to_bytes(4, "little"))
        fh.write(int(vec.shape[1]).to_bytes(4, "little"))
        fh.write(np.ascontiguousarray(cloud.points, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(vec, dtype="<f4").tobytes())


def read_frgp(path):
    cur = _Cursor(_read_bytes(path))
    _check_magic(cur, FRGP_MAGIC, "FRGP")
    off = cur.pos
    count = cur.u32("point count")
    if count > _MAX_POINTS:
        raise FormatError(f"point count out of range: {count}", off)
    dim = _check_dim(cur.u32("feature dim"), "feature dim", cur.pos - 4)
    pts = cur.f32_array(count * 3, "points").reshape(count, 3)
    vec = cur.f32_array(count * dim, "vectors").reshape(count, dim)
    cur.expect_end("FRGP")
    return PointCloud(pts.astype(np.float64)), vec.astype(np.float64)


# ---------------------------------------------------------------------------
# PLY


def write_ply(path, cloud: PointCloud, binary: bool = True) -> None:
    n = len(cloud)
    header = (
        "ply\n"
        f"format {'binary_little_endian' if binary else 'ascii'} 1.0\n"
        f"element vertex {n}\n"
        "property float x\n"
        "property float y\n"
        "property float z\n"
        "end_header\n"
    )
    pts32 = cloud.points.astype("<f4")
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        if binary:
            fh.write(np.ascontiguousarray(pts32).tobytes())
        else:
            body = "\n".join(
                " ".join(format(float(v), ".9g") for v in row) for row in pts32
            )
            fh.write((body + "\n" if n else "").encode("ascii"))


_PLY_SCALAR = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def read_ply(path) -> PointCloud:
    data = _read_bytes(path)
    end = data.find(b"end_header\n")
    if end < 0:
        raise FormatError("no end_header", 0)
    body_at = end + len(b"end_header\n")
    try:
        header = data[:end].decode("ascii")
    except UnicodeDecodeError as exc:
        raise FormatError("header is not ASCII", 0) from exc

    lines = [l.strip() for l in header.replace("\r\n", "\n").split("\n") if l.strip()]
    if not lines or lines[0] != "ply":
        raise FormatError("missing ply magic line", 0)

    fmt = None
    n_vertices = None
    props: list[tuple[str, str]] = []
    current_element = None
    for line in lines[1:]:
        parts = line.split()
        if parts[0] == "comment":
            continue
        if parts[0] == "format":
            if len(parts) != 3 or parts[1] not in ("ascii", "binary_little_endian"):
                raise FormatError(f"unsupported format line: {line!r}", 0)
            fmt = parts[1]
        elif parts[0] == "element":
            if len(parts) != 3:
                raise FormatError(f"bad element line: {line!r}", 0)
            if parts[1] == "vertex":
                if n_vertices is not None:
                    raise FormatError("duplicate vertex element", 0)
                try:
                    n_vertices = int(parts[2])
                except ValueError as exc:
                    raise FormatError(f"bad vertex count {parts[2]!r}", 0) from exc
                if n_vertices < 0 or n_vertices > _MAX_POINTS:
                    raise FormatError(f"vertex count out of range: {n_vertices}", 0)
            elif n_vertices is None:
                raise FormatError("elements before vertex are not supported", 0)
            current_element = parts[1]
        elif parts[0] == "property":
            if current_element != "vertex":
                continue  # properties of trailing elements are irrelevant
            if parts[1] == "list":
                raise FormatError("list property in vertex element is not supported", 0)
            if len(parts) != 3:
                raise FormatError(f"bad property line: {line!r}", 0)
            props.append((parts[1], parts[2]))
        elif parts[0] in ("obj_info",):
            continue
        else:
            raise FormatError(f"unknown header line: {line!r}", 0)

    if fmt is None:
        raise FormatError("missing format line", 0)
    if n_vertices is None:
        raise FormatError("missing vertex element", 0)
    names = [name for _, name in props]
    for coord in ("x", "y", "z"):
        if coord not in names:
            raise FormatError(f"vertex has no {coord!r} property", 0)
        ptype = props[names.index(coord)][0]
        if ptype not in ("float", "float32", "double", "float64"):
            raise FormatError(f"{coord!r} must be float typed, got {ptype!r}", 0)
    for ptype, name in props:
        if ptype not in _PLY_SCALAR:
            raise FormatError(f"unknown property type {ptype!r}", 0)
    if len(set(names)) != len(names):
        raise FormatError("duplicate vertex property names", 0)

    if fmt == "binary_little_endian":
        dtype = np.dtype([(name, "<" + _PLY_SCALAR[ptype]) for ptype, name in props])
        need = dtype.itemsize * n_vertices
        if len(data) - body_at < need:
            raise FormatError(
                f"vertex data truncated: need {need} bytes", body_at + (len(data) - body_at)
            )
        table = np.frombuffer(data, dtype=dtype, count=n_vertices, offset=body_at)
        # signaling NaNs in a corrupt payload would trip the FPU invalid flag
        # during the widening cast; the finite check below rejects them anyway
        with np.errstate(invalid="ignore"):
            pts = np.stack(
                [table["x"].astype(np.float64), table["y"].astype(np.float64),
                 table["z"].astype(np.float64)], axis=1,
            )
    else:
        try:
            text = data[body_at:].decode("ascii")
        except UnicodeDecodeError as exc:
            raise FormatError("ascii body contains non-ascii bytes", body_at) from exc
        rows = text.splitlines()
        if len(rows) < n_vertices:
            raise FormatError(
                f"expected {n_vertices} vertex lines, found {len(rows)}", body_at
            )
        ix, iy, iz = names.index("x"), names.index("y"), names.index("z")
        pts = np.zeros((n_vertices, 3))
        for i in range(n_vertices):
            cols = rows[i].split()
            if len(cols) < len(props):
                raise FormatError(f"vertex line {i} has too few columns", body_at)
            try:
                pts[i] = (float(cols[ix]), float(cols[iy]), float(cols[iz]))
            except ValueError as exc:
                raise FormatError(f"vertex line {i}: bad number", body_at) from exc

    if not np.all(np.isfinite(pts)):
        raise FormatError("non-finite vertex coordinate", body_at)
    return PointCloud(pts)


# ---------------------------------------------------------------------------
# Pose text


def write_pose_text(path, pose: Pose) -> None:
    m = pose.as_matrix()
    with open(path, "w", encoding="ascii") as fh:
        for row in m:
            fh.write(" ".join(format(v, ".17g") for v in row) + "\n")


def read_pose_text(path) -> Pose:
    try:
        with open(path, "r", encoding="ascii") as fh:
            text = fh.read()
    except (OSError, UnicodeDecodeError) as exc:
        raise FormatError(f"cannot read pose file: {exc}") from exc
    rows = [l for l in text.splitlines() if l.strip()]
    if len(rows) != 4:
        raise FormatError(f"pose file must have 4 lines, found {len(rows)}")
    m = np.zeros((4, 4))
    for i, line in enumerate(rows):
        cols = line.split()
        if len(cols) != 4:
            raise FormatError(f"pose line {i} must have 4 values, found {len(cols)}")
        try:
            m[i] = [float(c) for c in cols]
        except ValueError as exc:
            raise FormatError(f"pose line {i}: bad number") from exc
    if not np.all(np.isfinite(m)):
        raise FormatError("pose contains non-finite values")
    try:
        return Pose.from_matrix(m)
    except InvalidInputError as exc:
        raise FormatError(f"not a rigid pose: {exc}") from exc


# ---------------------------------------------------------------------------
# Correspondence text


def write_correspondences(path, corrs: CorrespondenceSet) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(CORR_HEADER + "\n")
        for i in range(len(corrs)):
            ip = corrs.img_pixels[i]
            dp = corrs.depth_pixels[i]
            q = corrs.points[i]
            fh.write(
                f"{ip[0]} {ip[1]} {dp[0]} {dp[1]} "
                f"{q[0]:.17g} {q[1]:.17g} {q[2]:.17g} {corrs.distances[i]:.17g}\n"
            )


def read_correspondences(path) -> CorrespondenceSet:
    try:
        with open(path, "r", encoding="ascii") as fh:
            text = fh.read()
    except (OSError, UnicodeDecodeError) as exc:
        raise FormatError(f"cannot read correspondence file: {exc}") from exc
    lines = text.splitlines()
    if not lines or lines[0].strip() != CORR_HEADER:
        raise FormatError(f"missing header line {CORR_HEADER!r}")
    ips, dps, qs, ds = [], [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cols = line.split()
        if len(cols) != 8:
            raise FormatError(f"line {lineno}: expected 8 columns, found {len(cols)}")
        try:
            ips.append((int(cols[0]), int(cols[1])))
            dps.append((int(cols[2]), int(cols[3])))
            qs.append((float(cols[4]), float(cols[5]), float(cols[6])))
            ds.append(float(cols[7]))
        except ValueError as exc:
            raise FormatError(f"line {lineno}: bad number") from exc
    try:
        return CorrespondenceSet(
            np.array(ips, dtype=np.int64).reshape(-1, 2),
            np.array(dps, dtype=np.int64).reshape(-1, 2),
            np.array(qs, dtype=np.float64).reshape(-1, 3),
            np.array(ds, dtype=np.float64),
        )
    except InvalidInputError as exc:
        raise FormatError(f"invalid correspondence content: {exc}") from exc


# ---------------------------------------------------------------------------
# Intrinsics JSON


def write_intrinsics_json(path, intr: CameraIntrinsics) -> None:
    payload = {
        "fx": intr.fx, "fy": intr.fy, "cx": intr.cx, "cy": intr.cy,
        "width": intr.width, "height": intr.height,
    }
    with open(path, "w", encoding="ascii") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def read_intrinsics_json(path) -> CameraIntrinsics:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot parse intrinsics: {exc}") from exc
    if not isinstance(payload, dict):
        raise FormatError("intrinsics JSON must be an object")
    try:
        intr = CameraIntrinsics(
            fx=float(payload["fx"]), fy=float(payload["fy"]),
            cx=float(payload["cx"]), cy=float(payload["cy"]),
            width=int(payload["width"]), height=int(payload["height"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad intrinsics fields: {exc}") from exc
    except InvalidInputError as exc:
        raise FormatError(f"invalid intrinsics: {exc}") from exc
    return intr


# ---------------------------------------------------------------------------
# 16-bit PNG depth


def write_depth_png(path, depth: DepthMap, scale: float = 1000.0) -> None:
    """Quantize to 16-bit integers at ``scale`` units per meter."""
    from PIL import Image

    if not (scale > 0.0):
        raise InvalidInputError("scale must be positive")
    q = np.clip(np.round(depth.data.astype(np.float64) * scale), 0, 65535)
    img = Image.fromarray(q.astype(np.uint16))
    img.save(path, format="PNG")


def read_depth_png(path, scale: float = 1000.0) -> DepthMap:
    from PIL import Image

    if not (scale > 0.0):
        raise InvalidInputError("scale must be positive")
    try:
        with Image.open(path) as img:
            arr = np.asarray(img)
    except Exception as exc:  # PIL raises a small zoo; keep the boundary tight
        raise FormatError(f"cannot decode PNG: {exc}") from exc
    if arr.ndim != 2 or arr.dtype not in (np.uint16, np.int32, np.uint8):
        raise FormatError(f"expected a single-channel integer PNG, got {arr.dtype} {arr.shape}")
    if arr.dtype == np.int32 and (arr.min() < 0 or arr.max() > 65535):
        raise FormatError("PNG values exceed the 16-bit range")
    return DepthMap(arr.astype(np.float32) / np.float32(scale))
