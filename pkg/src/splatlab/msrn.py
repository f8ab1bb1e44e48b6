"""Inference-only multi-scale residual super-resolution network.

Feature maps are (C, H, W) float32 arrays.  The network is

    head 3x3 -> K multi-scale residual blocks -> 1x1 fusion over
    [M_0, ..., M_K] -> 3x3 conv to 3*r*r channels -> pixel shuffle(r)
    -> 3x3 conv to RGB -> clamp to [0, 1]

Weights are never learned here; they come from a ``.msrn`` file or from
``random_model`` for tests.
"""

import struct
import zlib
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import (
    IntegrityError,
    MagicMismatchError,
    ShapeMismatchError,
    TruncatedFileError,
    UnsupportedVersionError,
    ValidationError,
)

MAGIC = b"MSRNW1"
VERSION = 1
BLOCK_CONVS = ("conv3_1", "conv5_1", "conv3_2", "conv5_2", "fuse")


@dataclass
class ConvLayer:
    weights: np.ndarray  # (out, in, k, k)
    bias: np.ndarray  # (out,)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float32)
        self.bias = np.asarray(self.bias, dtype=np.float32)

    @property
    def out_channels(self):
        return self.weights.shape[0]

    @property
    def in_channels(self):
        return self.weights.shape[1]

    @property
    def kernel(self):
        return self.weights.shape[2]

    def check(self, name, in_ch, out_ch, kernel):
        w = self.weights
        if w.ndim != 4 or w.shape[2] != w.shape[3] or w.shape[2] % 2 == 0:
            raise ValidationError(f"{name}: weights must be out x in x k x k with odd k")
        if w.shape != (out_ch, in_ch, kernel, kernel):
            raise ValidationError(
                f"{name}: expected {(out_ch, in_ch, kernel, kernel)}, got {w.shape}"
            )
        if self.bias.shape != (out_ch,):
            raise ValidationError(f"{name}: bias shape {self.bias.shape} != ({out_ch},)")


@dataclass
class MSRBWeights:
    conv3_1: ConvLayer
    conv5_1: ConvLayer
    conv3_2: ConvLayer
    conv5_2: ConvLayer
    fuse: ConvLayer


@dataclass
class MSRNModel:
    scale: int
    head: ConvLayer
    blocks: list
    hffs: ConvLayer
    tail: ConvLayer
    final: ConvLayer
    version: int = VERSION

    @property
    def n_blocks(self):
        return len(self.blocks)

    @property
    def feature_width(self):
        return self.head.out_channels

    def validate(self):
        fw, K, r = self.feature_width, self.n_blocks, self.scale
        if r < 1:
            raise ValidationError("scale factor must be >= 1")
        self.head.check("head", 3, fw, 3)
        for k, b in enumerate(self.blocks):
            b.conv3_1.check(f"blocks.{k}.conv3_1", fw, fw, 3)
            b.conv5_1.check(f"blocks.{k}.conv5_1", fw, fw, 5)
            b.conv3_2.check(f"blocks.{k}.conv3_2", 2 * fw, 2 * fw, 3)
            b.conv5_2.check(f"blocks.{k}.conv5_2", 2 * fw, 2 * fw, 5)
            b.fuse.check(f"blocks.{k}.fuse", 4 * fw, fw, 1)
        if self.hffs.in_channels != (K + 1) * fw:
            raise ValidationError(
                f"hffs takes {self.hffs.in_channels} channels, expected (K+1)*fw = {(K + 1) * fw}"
            )
        self.hffs.check("hffs", (K + 1) * fw, fw, 1)
        if self.tail.out_channels % (r * r):
            raise ValidationError("tail output channels not divisible by r^2")
        self.tail.check("tail", fw, 3 * r * r, 3)
        self.final.check("final", 3, 3, 3)
        return self

    def named_layers(self):
        yield "head", self.head
        for k, b in enumerate(self.blocks):
            for name in BLOCK_CONVS:
                yield f"blocks.{k}.{name}", getattr(b, name)
        yield "hffs", self.hffs
        yield "tail", self.tail
        yield "final", self.final


def conv2d(x, layer):
    """Same-size convolution with zero padding (k-1)/2, plus bias."""
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 3 or x.shape[0] != layer.in_channels:
        raise ShapeMismatchError(
            f"conv expects {layer.in_channels} input channels, got {x.shape}"
        )
    k = layer.kernel
    p = (k - 1) // 2
    if p:
        x = np.pad(x, ((0, 0), (p, p), (p, p)))
    cols = sliding_window_view(x, (k, k), axis=(1, 2))  # (C, H, W, k, k)
    out = np.tensordot(layer.weights, cols, axes=([1, 2, 3], [0, 3, 4]))
    return out + layer.bias[:, None, None]


def relu(x):
    return np.maximum(x, 0)


def msrb_forward(m_prev, block):
    """One multi-scale residual block: fused dual-path features plus the input."""
    s1 = relu(conv2d(m_prev, block.conv3_1))
    p1 = relu(conv2d(m_prev, block.conv5_1))
    mid = np.concatenate([s1, p1])
    s2 = relu(conv2d(mid, block.conv3_2))
    p2 = relu(conv2d(mid, block.conv5_2))
    S = conv2d(np.concatenate([s2, p2]), block.fuse)
    return S + m_prev


def hffs(outputs, layer):
    """1x1 fusion over the channel concatenation of every block output."""
    shapes = {o.shape[1:] for o in outputs}
    if len(shapes) != 1:
        raise ShapeMismatchError(f"feature maps differ in spatial size: {sorted(shapes)}")
    return conv2d(np.concatenate(outputs), layer)


def pixel_shuffle(x, r):
    """(C*r*r, H, W) -> (C, H*r, W*r) channel-to-space rearrangement."""
    x = np.asarray(x)
    c, h, w = x.shape
    if r < 1 or c % (r * r):
        raise ShapeMismatchError(f"{c} channels not divisible by r^2 = {r * r}")
    out_c = c // (r * r)
    return x.reshape(out_c, r, r, h, w).transpose(0, 3, 1, 4, 2).reshape(out_c, h * r, w * r)


def pixel_unshuffle(x, r):
    c, H, W = x.shape
    h, w = H // r, W // r
    return x.reshape(c, h, r, w, r).transpose(0, 2, 4, 1, 3).reshape(c * r * r, h, w)


def msrn_forward(lr, model):
    """Super-resolve an (H, W, 3) image to (H*r, W*r, 3)."""
    lr = np.asarray(lr)
    if lr.ndim != 3 or lr.shape[2] != 3:
        raise ShapeMismatchError(f"expected an (H, W, 3) image, got {lr.shape}")
    x = np.ascontiguousarray(lr.transpose(2, 0, 1), dtype=np.float32)
    feats = [conv2d(x, model.head)]
    for block in model.blocks:
        feats.append(msrb_forward(feats[-1], block))
    fused = hffs(feats, model.hffs)
    up = pixel_shuffle(conv2d(fused, model.tail), model.scale)
    out = conv2d(up, model.final)
    return np.clip(out.transpose(1, 2, 0).astype(np.float64), 0.0, 1.0)


def _conv(rng, out_ch, in_ch, k, zero=False):
    if zero:
        return ConvLayer(np.zeros((out_ch, in_ch, k, k)), np.zeros(out_ch))
    std = np.sqrt(2.0 / (in_ch * k * k))
    return ConvLayer(rng.normal(0.0, std, (out_ch, in_ch, k, k)),
                     rng.normal(0.0, 0.01, out_ch))


def zero_block(fw):
    return MSRBWeights(
        _conv(None, fw, fw, 3, True), _conv(None, fw, fw, 5, True),
        _conv(None, 2 * fw, 2 * fw, 3, True), _conv(None, 2 * fw, 2 * fw, 5, True),
        _conv(None, fw, 4 * fw, 1, True),
    )


def random_model(scale=2, n_blocks=2, feature_width=8, seed=0, zero_blocks=False):
    """Randomly initialised model for tests and demos (not a trained network)."""
    rng = np.random.default_rng(seed)
    fw = feature_width
    blocks = []
    for _ in range(n_blocks):
        if zero_blocks:
            blocks.append(zero_block(fw))
            continue
        blocks.append(MSRBWeights(
            _conv(rng, fw, fw, 3), _conv(rng, fw, fw, 5),
            _conv(rng, 2 * fw, 2 * fw, 3), _conv(rng, 2 * fw, 2 * fw, 5),
            # keep the residual branch small so stacked blocks stay well scaled
            ConvLayer(_conv(rng, fw, 4 * fw, 1).weights * 0.1, np.zeros(fw)),
        ))
    model = MSRNModel(
        scale,
        _conv(rng, fw, 3, 3),
        blocks,
        _conv(rng, fw, (n_blocks + 1) * fw, 1),
        _conv(rng, 3 * scale * scale, fw, 3),
        _conv(rng, 3, 3, 3),
    )
    return model.validate()


# -- weight file -------------------------------------------------------------

def _pack_tensor(name, arr):
    arr = np.ascontiguousarray(arr, dtype="<f4")
    raw = name.encode("utf-8")
    out = struct.pack("<I", len(raw)) + raw + struct.pack("<I", arr.ndim)
    out += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return out + arr.tobytes()


def dumps_weights(model):
    """Serialise to the ``MSRNW1`` byte layout (little endian, CRC32 trailer)."""
    buf = bytearray(MAGIC)
    buf += struct.pack("<4I", VERSION, model.scale, model.n_blocks, model.feature_width)
    for name, layer in model.named_layers():
        buf += _pack_tensor(name + ".weight", layer.weights)
        buf += _pack_tensor(name + ".bias", layer.bias)
    buf += struct.pack("<I", zlib.crc32(bytes(buf)))
    return bytes(buf)


def save_weights(model, path):
    with open(path, "wb") as f:
        f.write(dumps_weights(model))


class _Reader:
    def __init__(self, data, end):
        self.data = data
        self.end = end
        self.pos = 0

    def take(self, n):
        if self.pos + n > self.end:
            raise TruncatedFileError("weight file ends inside a tensor record")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32s(self, count):
        return struct.unpack(f"<{count}I", self.take(4 * count))

    def u32(self):
        return self.u32s(1)[0]


def _expected_names(n_blocks):
    names = ["head"]
    names += [f"blocks.{k}.{c}" for k in range(n_blocks) for c in BLOCK_CONVS]
    return names + ["hffs", "tail", "final"]


def loads_weights(data):
    data = bytes(data)
    if data[: len(MAGIC)] != MAGIC:
        raise MagicMismatchError("not an MSRN weight file")
    if len(data) < len(MAGIC) + 16 + 4:
        raise TruncatedFileError("weight file header is incomplete")
    # the CRC trailer is located after parsing; read against the full length
    r = _Reader(data, len(data))
    r.take(len(MAGIC))
    version, scale, n_blocks, fw = r.u32s(4)
    if version > VERSION:
        raise UnsupportedVersionError(f"weight file version {version} > {VERSION}")
    layers = {}
    for base in _expected_names(n_blocks):
        parts = []
        for suffix in (".weight", ".bias"):
            name = r.take(r.u32()).decode("utf-8", errors="replace")
            if name != base + suffix:
                raise ValidationError(f"expected tensor {base + suffix!r}, found {name!r}")
            dims = r.u32s(r.u32())
            count = int(np.prod(dims))
            parts.append(np.frombuffer(r.take(4 * count), dtype="<f4").reshape(dims))
        layers[base] = ConvLayer(*parts)
    remaining = len(data) - r.pos
    if remaining < 4:
        raise TruncatedFileError("weight file is missing its checksum")
    if remaining > 4:
        raise ValidationError(f"{remaining - 4} unexpected trailing bytes")
    (crc,) = struct.unpack("<I", data[-4:])
    if crc != zlib.crc32(data[:-4]):
        raise IntegrityError("weight file checksum mismatch")
    blocks = [
        MSRBWeights(*(layers[f"blocks.{k}.{c}"] for c in BLOCK_CONVS)) for k in range(n_blocks)
    ]
    model = MSRNModel(scale, layers["head"], blocks, layers["hffs"], layers["tail"],
                      layers["final"], version)
    if model.feature_width != fw:
        raise ValidationError(f"header feature width {fw} != head output {model.feature_width}")
    return model.validate()


def load_weights(path):
    with open(path, "rb") as f:
        return loads_weights(f.read())
