"""File formats: PLY point clouds, camera JSON, PNG images, checkpoints, configs."""

import json
import struct
import zlib
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
from PIL import Image

from .camera import Camera, check_rotation
from .errors import (
    FormatError,
    IntegrityError,
    InvalidParameterError,
    MagicMismatchError,
    MissingPropertyError,
    TruncatedFileError,
    UnsupportedDepthError,
    UnsupportedVersionError,
    ValidationError,
)
from .losses import LossConfig
from .rasterizer import RasterConfig
from .scene import GaussianSet, PointCloud, SHInitConfig
from .sh import num_coeffs
from .trainer import LearningRates, OptimizerState, TrainConfig

# -- PLY ---------------------------------------------------------------------

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def _parse_ply_header(data):
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise FormatError("malformed PLY header")
    body_start = data.index(b"\n", end) + 1
    lines = data[:end].decode("ascii", errors="replace").splitlines()
    fmt = None
    elements = []
    for line in lines[1:]:
        tok = line.split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            fmt = tok[1]
        elif tok[0] == "element":
            elements.append((tok[1], int(tok[2]), []))
        elif tok[0] == "property":
            if not elements:
                raise FormatError("PLY property before any element")
            if tok[1] == "list":
                elements[-1][2].append((tok[4], None))
            elif tok[1] in _PLY_TYPES:
                elements[-1][2].append((tok[2], _PLY_TYPES[tok[1]]))
            else:
                raise FormatError(f"unknown PLY type {tok[1]!r}")
        else:
            raise FormatError(f"unexpected PLY header line {line!r}")
    if fmt not in ("ascii", "binary_little_endian"):
        raise FormatError(f"unsupported PLY format {fmt!r}")
    return fmt, elements, body_start


def load_ply(path):
    """Read vertex positions and 8-bit colours from an ASCII or binary-LE PLY."""
    data = Path(path).read_bytes()
    fmt, elements, start = _parse_ply_header(data)
    offset = start
    vertex = None
    skip_rows = 0
    for name, count, props in elements:
        if name == "vertex":
            vertex = (count, props)
            break
        if any(t is None for _, t in props):
            raise FormatError("list properties before the vertex element are not supported")
        if fmt == "ascii":
            skip_rows += count
        else:
            offset += count * np.dtype([(p, "<" + t) for p, t in props]).itemsize
    if vertex is None:
        raise MissingPropertyError("PLY has no vertex element")
    count, props = vertex
    names = [p for p, _ in props]
    for req in ("x", "y", "z", "red", "green", "blue"):
        if req not in names:
            raise MissingPropertyError(f"PLY vertex lacks property {req!r}")
    if any(t is None for _, t in props):
        raise FormatError("list properties on vertices are not supported")

    if fmt == "binary_little_endian":
        dtype = np.dtype([(p, "<" + t) for p, t in props])
        need = count * dtype.itemsize
        if len(data) - offset < need:
            raise TruncatedFileError(f"PLY body holds fewer than {count} vertices")
        table = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
        cols = {p: table[p].astype(np.float64) for p in names}
        types = dict(props)
    else:
        rows = data[start:].decode("ascii").split("\n")[skip_rows:]
        rows = [r.split() for r in rows if r.strip()][:count]
        if len(rows) < count or any(len(r) < len(names) for r in rows):
            raise TruncatedFileError(f"PLY body holds fewer than {count} vertices")
        arr = np.array([[float(v) for v in r[: len(names)]] for r in rows]).reshape(count, len(names))
        cols = {p: arr[:, i] for i, p in enumerate(names)}
        types = dict(props)

    positions = np.stack([cols["x"], cols["y"], cols["z"]], axis=-1)
    colors = np.stack([cols["red"], cols["green"], cols["blue"]], axis=-1)
    if types["red"].startswith("u1") or types["red"] in ("u1",):
        colors = colors / 255.0
    return PointCloud(positions, colors)


def save_ply(path, cloud, binary=True):
    """Write a point cloud with float xyz and uchar rgb."""
    n = cloud.count
    rgb = np.clip(np.floor(cloud.colors * 255.0 + 0.5), 0, 255).astype(np.uint8)
    header = (
        "ply\n"
        f"format {'binary_little_endian' if binary else 'ascii'} 1.0\n"
        f"element vertex {n}\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        "end_header\n"
    ).encode("ascii")
    if binary:
        dtype = np.dtype([("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
                          ("red", "u1"), ("green", "u1"), ("blue", "u1")])
        table = np.empty(n, dtype=dtype)
        for i, k in enumerate("xyz"):
            table[k] = cloud.positions[:, i]
        for i, k in enumerate(("red", "green", "blue")):
            table[k] = rgb[:, i]
        body = table.tobytes()
    else:
        pos = cloud.positions.astype(np.float32)
        body = "".join(
            f"{repr(float(p[0]))} {repr(float(p[1]))} {repr(float(p[2]))} {c[0]} {c[1]} {c[2]}\n"
            for p, c in zip(pos, rgb)
        ).encode("ascii")
    Path(path).write_bytes(header + body)


# -- cameras -----------------------------------------------------------------

@dataclass
class CameraEntry:
    id: object
    camera: Camera
    image: Path


_CAMERA_FIELDS = ("id", "width", "height", "fx", "fy", "cx", "cy", "R", "t", "image")


def load_cameras(path):
    """Parse a camera JSON array; image paths resolve against the file's folder."""
    path = Path(path)
    try:
        items = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValidationError(f"camera file is not valid JSON: {e}") from None
    if not isinstance(items, list):
        raise ValidationError("camera file must hold a JSON array")
    out = []
    for k, item in enumerate(items):
        missing = [f for f in _CAMERA_FIELDS if f not in item]
        if missing:
            raise ValidationError(f"camera {k} lacks fields {missing}")
        R = np.asarray(item["R"], dtype=np.float64)
        if R.size != 9:
            raise ValidationError(f"camera {k}: R needs 9 values")
        R = R.reshape(3, 3)
        try:
            check_rotation(R, 1e-4)
        except InvalidParameterError as e:
            raise ValidationError(f"camera {k}: {e}") from None
        # snap to the nearest rotation so downstream checks hold tightly
        u, _, vt = np.linalg.svd(R)
        R = u @ vt
        t = np.asarray(item["t"], dtype=np.float64)
        if t.size != 3:
            raise ValidationError(f"camera {k}: t needs 3 values")
        cam = Camera(int(item["width"]), int(item["height"]), float(item["fx"]),
                     float(item["fy"]), float(item["cx"]), float(item["cy"]), R, t,
                     float(item.get("near", 0.01)))
        out.append(CameraEntry(item["id"], cam, (path.parent / item["image"]).resolve()))
    return out


def save_cameras(path, cameras, image_names, ids=None):
    ids = list(range(len(cameras))) if ids is None else ids
    items = [
        {"id": i, "width": c.width, "height": c.height, "fx": c.fx, "fy": c.fy,
         "cx": c.cx, "cy": c.cy, "R": c.R.reshape(-1).tolist(), "t": c.t.tolist(),
         "near": c.near, "image": str(name)}
        for i, c, name in zip(ids, cameras, image_names)
    ]
    Path(path).write_text(json.dumps(items, indent=2), encoding="utf-8")


# -- images ------------------------------------------------------------------

_PNG_SIG = b"\x89PNG\r\n\x1a\n"


def load_image(path):
    """8-bit PNG to an (H, W, 3) float image, byte / 255, no gamma."""
    path = Path(path)
    head = path.read_bytes()[:33]
    if head[:8] != _PNG_SIG or head[12:16] != b"IHDR":
        raise FormatError(f"{path} is not a PNG")
    depth = head[24]
    if depth != 8:
        raise UnsupportedDepthError(f"{path}: {depth}-bit PNG, only 8-bit is supported")
    with Image.open(path) as im:
        im = im.convert("RGB")
        arr = np.asarray(im, dtype=np.float64)
    return arr / 255.0


def to_bytes(img):
    img = np.asarray(img, dtype=np.float64)
    return np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def save_image(path, img):
    """Quantise to 8 bits (round half up, clamp) and write a PNG."""
    arr = to_bytes(img)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[..., 0]
    Image.fromarray(arr).save(path, format="PNG")


# -- configs -----------------------------------------------------------------

_SECTIONS = {
    "loss": LossConfig,
    "sh_init": SHInitConfig,
    "raster": RasterConfig,
    "learning_rates": LearningRates,
}
_ALIASES = {"lambda": "lambda_", "M": "max_degree"}


def _build(cls, values, where):
    names = {f.name for f in fields(cls)}
    kwargs = {}
    for key, val in values.items():
        key = _ALIASES.get(key, key)
        if key not in names:
            raise ValidationError(f"unknown {where} setting {key!r}")
        kwargs[key] = tuple(val) if isinstance(val, list) else val
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ValidationError(f"bad {where} settings: {e}") from None


def config_from_dict(d):
    """TrainConfig from nested sections plus top-level training fields."""
    d = dict(d)
    sections = {k: _build(cls, d.pop(k, {}) or {}, k) for k, cls in _SECTIONS.items()}
    return _build(TrainConfig, {**d, **sections}, "train")


def config_to_dict(cfg):
    out = asdict(cfg)
    out["loss"]["lambda"] = out["loss"].pop("lambda_")
    out["raster"]["background"] = list(out["raster"]["background"])
    return out


def load_config(path):
    """Read a TOML or JSON training config; missing fields keep their defaults."""
    path = Path(path)
    text = path.read_bytes()
    if path.suffix.lower() == ".json":
        d = json.loads(text)
    else:
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        d = tomllib.loads(text.decode("utf-8"))
    return config_from_dict(d)


# -- checkpoints -------------------------------------------------------------

CKPT_MAGIC = b"SGS1"
CKPT_VERSION = 1


@dataclass
class Checkpoint:
    iteration: int
    gaussians: GaussianSet
    optimizer: OptimizerState
    config: dict
    version: int = CKPT_VERSION


def _f32(a):
    return np.ascontiguousarray(a, dtype="<f4").tobytes()


def dumps_checkpoint(ckpt):
    g = ckpt.gaussians
    n, M = len(g), g.max_degree
    opt = ckpt.optimizer or OptimizerState.for_scene(g)
    buf = bytearray(CKPT_MAGIC)
    buf += struct.pack("<IQII", CKPT_VERSION, ckpt.iteration, n, M)
    for name in GaussianSet.PARAM_FIELDS[:4]:
        buf += _f32(getattr(g, name))
    buf += _f32(g.sh_degrees)
    buf += _f32(g.sh_coeffs)
    buf += struct.pack("<Q", opt.step)
    for name in GaussianSet.PARAM_FIELDS:
        buf += _f32(opt.m[name]) + _f32(opt.v[name])
    meta = dict(ckpt.config or {})
    meta["optimizer"] = {"beta1": opt.beta1, "beta2": opt.beta2, "eps": opt.eps}
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    buf += struct.pack("<I", len(blob)) + blob
    buf += struct.pack("<I", zlib.crc32(bytes(buf)))
    return bytes(buf)


def save_checkpoint(path, ckpt):
    Path(path).write_bytes(dumps_checkpoint(ckpt))


def loads_checkpoint(data):
    data = bytes(data)
    if data[:4] != CKPT_MAGIC:
        raise MagicMismatchError("not a splatlab checkpoint")
    if len(data) < 4 + 20 + 4:
        raise TruncatedFileError("checkpoint header is incomplete")
    version, iteration, n, M = struct.unpack_from("<IQII", data, 4)
    if version > CKPT_VERSION:
        raise UnsupportedVersionError(f"checkpoint version {version} > {CKPT_VERSION}")
    (crc,) = struct.unpack("<I", data[-4:])
    if crc != zlib.crc32(data[:-4]):
        raise IntegrityError("checkpoint checksum mismatch")
    pos = 24
    nu = num_coeffs(M)

    def take(count, shape):
        nonlocal pos
        end = pos + 4 * count
        if end > len(data) - 4:
            raise TruncatedFileError("checkpoint ends inside an array")
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=pos).astype(np.float64)
        pos = end
        return arr.reshape(shape)

    shapes = {"positions": (n, 3), "log_scales": (n, 3), "rotations": (n, 4),
              "opacity_logits": (n,), "sh_coeffs": (n, nu, 3)}
    arrays = {k: take(int(np.prod(shapes[k])), shapes[k]) for k in GaussianSet.PARAM_FIELDS[:4]}
    degrees = take(n, (n,)).astype(np.int64)
    arrays["sh_coeffs"] = take(n * nu * 3, shapes["sh_coeffs"])
    gaussians = GaussianSet(sh_degrees=degrees, max_degree=M, **arrays)
    if pos + 8 > len(data) - 4:
        raise TruncatedFileError("checkpoint ends before optimizer state")
    (step,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    m, v = {}, {}
    for name in GaussianSet.PARAM_FIELDS:
        m[name] = take(int(np.prod(shapes[name])), shapes[name])
        v[name] = take(int(np.prod(shapes[name])), shapes[name])
    (length,) = struct.unpack_from("<I", data, pos)
    pos += 4
    if pos + length != len(data) - 4:
        raise ValidationError("checkpoint config block has the wrong length")
    meta = json.loads(data[pos:pos + length].decode("utf-8"))
    consts = meta.pop("optimizer", {})
    opt = OptimizerState(m, v, step, **consts)
    return Checkpoint(iteration, gaussians, opt, meta, version)


def load_checkpoint(path):
    return loads_checkpoint(Path(path).read_bytes())
