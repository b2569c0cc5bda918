"""1D U-Net encoder and its checkpoint file format.

Layer wiring (``c = base_channels``, input ``(batch, 1, T)``)::

    pool2 = AvgPool(input, 2)                    (1,  T/2)
    pool4 = AvgPool(input, 4)                    (1,  T/4)
    h0 = block(input)                            (c,  T)
    h1 = down(h0)                                (2c, T/2)
    h2 = down(concat[h1, pool2])                 (3c, T/4)
    h3 = down(concat[h2, pool4])                 (4c, T/8)
    h4 = block(concat[up(h3), h2])               (3c, T/4)
    h5 = block(concat[up(h4), h1])               (2c, T/2)
    h6 = block(concat[up(h5), h0])               (c,  T)
    out = tanh(conv(h6))                         (1,  T)

``block`` is conv(k=3) -> batch norm -> ReLU, ``down`` is a block followed
by 2x average pooling and ``up`` is 2x nearest-neighbour upsampling.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff_nn as nn
from .errors import BadLength, BadMagic, CorruptCheckpoint, UnsupportedVersion

__all__ = ["UNetConfig", "UNet1D", "unet_forward", "save_checkpoint", "load_checkpoint", "count_parameters"]

MAGIC = b"PDM1"
FORMAT_VERSION = 1

# (name, input channels, output channels) in units of base_channels; "+1" marks the raw-input skip
_LAYERS = (
    ("conv0", (0, 1), (1, 0)),
    ("down1", (1, 0), (2, 0)),
    ("down2", (2, 1), (3, 0)),
    ("down3", (3, 1), (4, 0)),
    ("up4", (7, 0), (3, 0)),
    ("up5", (5, 0), (2, 0)),
    ("up6", (3, 0), (1, 0)),
    ("out", (1, 0), (0, 1)),
)


@dataclass(frozen=True)
class UNetConfig:
    base_channels: int = 32
    depth: int = 3
    kernel: int = 3

    def __post_init__(self):
        if self.base_channels < 1:
            raise ValueError("base_channels must be positive")
        if self.depth != 3:
            raise ValueError("only the 3-stage layout is supported")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ValueError("kernel must be a positive odd integer")

    def layer_shapes(self):
        """``{layer: (in_ch, out_ch)}`` for every convolution."""
        c = self.base_channels
        return {name: (a * c + b, p * c + q) for name, (a, b), (p, q) in _LAYERS}

    def param_shapes(self):
        shapes = {}
        for name, (cin, cout) in self.layer_shapes().items():
            shapes[f"{name}.weight"] = (cout, cin, self.kernel)
            shapes[f"{name}.bias"] = (cout,)
            if name != "out":
                shapes[f"{name}.bn.gamma"] = (cout,)
                shapes[f"{name}.bn.beta"] = (cout,)
        return shapes

    def buffer_shapes(self):
        return {
            f"{name}.bn.{stat}": (cout,)
            for name, (cin, cout) in self.layer_shapes().items()
            if name != "out"
            for stat in ("running_mean", "running_var")
        }


def count_parameters(cfg):
    return sum(int(np.prod(s)) for s in cfg.param_shapes().values())


class UNet1D:
    """The U-Net learner; call it on a ``(batch, 1, T)`` array."""

    def __init__(self, cfg=UNetConfig(), seed=0, dtype=np.float32):
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        self.params = {}
        for name, shape in cfg.param_shapes().items():
            if name.endswith(".weight"):
                fan_in = shape[1] * shape[2]
                bound = np.sqrt(6.0 / fan_in)
                value = rng.uniform(-bound, bound, size=shape)
            elif name.endswith(".gamma"):
                value = np.ones(shape)
            else:
                value = np.zeros(shape)
            self.params[name] = nn.Param(value.astype(self.dtype), name)
        self.bn = {}
        for name, (cin, cout) in cfg.layer_shapes().items():
            if name != "out":
                self.bn[name] = nn.BatchNormState.fresh(cout, self.dtype)

    def parameters(self):
        return list(self.params.values())

    def astype(self, dtype):
        """A copy of the model with parameters and buffers cast to ``dtype``."""
        other = UNet1D.__new__(UNet1D)
        other.cfg = self.cfg
        other.dtype = np.dtype(dtype)
        other.params = {k: nn.Param(p.data.astype(dtype), k) for k, p in self.params.items()}
        other.bn = {
            k: nn.BatchNormState(s.running_mean.astype(dtype), s.running_var.astype(dtype), s.momentum)
            for k, s in self.bn.items()
        }
        return other

    def state_dict(self):
        """Copies of every parameter and running statistic, keyed by name."""
        out = {k: p.data.copy() for k, p in self.params.items()}
        for k, s in self.bn.items():
            out[f"{k}.bn.running_mean"] = s.running_mean.copy()
            out[f"{k}.bn.running_var"] = s.running_var.copy()
        return out

    def load_state_dict(self, state):
        for k, p in self.params.items():
            p.data = np.array(state[k], dtype=self.dtype)
        for k, s in self.bn.items():
            s.running_mean = np.array(state[f"{k}.bn.running_mean"], dtype=self.dtype)
            s.running_var = np.array(state[f"{k}.bn.running_var"], dtype=self.dtype)

    def _block(self, name, x, mode):
        p = self.params
        h = nn.conv1d_same(x, p[f"{name}.weight"], p[f"{name}.bias"])
        h = nn.batchnorm1d(h, p[f"{name}.bn.gamma"], p[f"{name}.bn.beta"], self.bn[name], mode)
        return nn.relu(h)

    def forward(self, x, mode="eval"):
        """Run the network and return the output :class:`Tensor` (graph recorded)."""
        x = x if isinstance(x, nn.Tensor) else nn.Tensor(np.asarray(x, dtype=self.dtype))
        if x.data.ndim != 3 or x.data.shape[1] != 1:
            raise BadLength(f"expected input of shape (batch, 1, T), got {x.data.shape}")
        t = x.data.shape[2]
        if t % 8 != 0 or t < 16:
            raise BadLength(f"input length {t} must be a multiple of 8 and at least 16")
        pool2 = nn.avgpool1d(x, 2)
        pool4 = nn.avgpool1d(x, 4)
        h0 = self._block("conv0", x, mode)
        h1 = nn.avgpool1d(self._block("down1", h0, mode), 2)
        h2 = nn.avgpool1d(self._block("down2", nn.concat_channels(h1, pool2), mode), 2)
        h3 = nn.avgpool1d(self._block("down3", nn.concat_channels(h2, pool4), mode), 2)
        h4 = self._block("up4", nn.concat_channels(nn.upsample_nearest(h3, 2), h2), mode)
        h5 = self._block("up5", nn.concat_channels(nn.upsample_nearest(h4, 2), h1), mode)
        h6 = self._block("up6", nn.concat_channels(nn.upsample_nearest(h5, 2), h0), mode)
        p = self.params
        return nn.tanh(nn.conv1d_same(h6, p["out.weight"], p["out.bias"]))

    def __call__(self, x):
        """Eval-mode output as a plain array of the same shape as ``x``."""
        return self.forward(x, mode="eval").data


def unet_forward(model, x):
    return model(x)


def _pack_str(buf, s):
    b = s.encode("utf-8")
    buf.write(struct.pack("<I", len(b)))
    buf.write(b)


def checkpoint_bytes(model, metadata=None):
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<H", FORMAT_VERSION))
    _pack_str(buf, json.dumps(asdict(model.cfg), sort_keys=True))
    _pack_str(buf, json.dumps(metadata or {}, sort_keys=True))
    tensors = model.state_dict()
    buf.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        nb = name.encode("utf-8")
        buf.write(struct.pack("<H", len(nb)))
        buf.write(nb)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return buf.getvalue()


def save_checkpoint(model, path, metadata=None):
    """Write ``model`` (and optional JSON-serialisable metadata) to ``path``.

    Layout, all integers little-endian::

        b"PDM1" | u16 version | u32 len + config JSON | u32 len + metadata JSON
        | u32 tensor count | per tensor: u16 len + name, u8 ndim, ndim x u32 dims,
          float32 values (row-major)
    """
    data = checkpoint_bytes(model, metadata)
    with open(path, "wb") as f:
        f.write(data)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise CorruptCheckpoint(f"checkpoint truncated at byte {self.pos} (needed {n} more)")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self):
        (n,) = self.unpack("<I")
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError as e:
            raise CorruptCheckpoint("string field is not valid UTF-8") from e


def load_checkpoint(path, with_metadata=False):
    """Read a checkpoint written by :func:`save_checkpoint`.

    Returns the model, or ``(model, metadata)`` when ``with_metadata`` is set.
    """
    with open(path, "rb") as f:
        data = f.read()
    r = _Reader(data)
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagic(f"{path}: not a PDM1 checkpoint")
    r.take(4)
    (version,) = r.unpack("<H")
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(f"checkpoint version {version} is not supported")
    try:
        cfg = UNetConfig(**json.loads(r.string()))
        metadata = json.loads(r.string())
    except (TypeError, ValueError) as e:
        if isinstance(e, CorruptCheckpoint):
            raise
        raise CorruptCheckpoint(f"bad config/metadata block: {e}") from e
    (count,) = r.unpack("<I")
    expected = {**cfg.param_shapes(), **cfg.buffer_shapes()}
    state = {}
    for _ in range(count):
        (nlen,) = r.unpack("<H")
        name = r.take(nlen).decode("utf-8", errors="replace")
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I")
        if name not in expected or name in state:
            raise CorruptCheckpoint(f"unexpected or duplicate tensor {name!r}")
        if tuple(shape) != tuple(expected[name]):
            raise CorruptCheckpoint(f"tensor {name!r} has shape {shape}, expected {expected[name]}")
        n = int(np.prod(shape))
        state[name] = np.frombuffer(r.take(4 * n), dtype="<f4").reshape(shape).astype(np.float32)
    missing = set(expected) - set(state)
    if missing:
        raise CorruptCheckpoint(f"missing tensors: {sorted(missing)}")
    if r.pos != len(data):
        raise CorruptCheckpoint("trailing bytes after the last tensor")
    model = UNet1D(cfg, dtype=np.float32)
    model.load_state_dict(state)
    return (model, metadata) if with_metadata else model
