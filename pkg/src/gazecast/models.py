"""LSTM and TSMixer predictors mapping a fused ``p x (F + 4)`` window to ``q x 2`` offsets.

Graph builders take a batch ``x`` of shape ``(m, p, C)`` and return a Value
of shape ``(m, 2q)`` whose columns are ``az_1, el_1, ..., az_q, el_q``.

Checkpoint layout (all integers little-endian uint32)::

    b"GZCK" | version | header_len | header (UTF-8 JSON) | tensor bytes

The header lists ``arch``, ``dims``, ``meta`` and the ordered ``tensors``
(``name``, ``shape``); tensor bytes follow in that order as little-endian
float32, row-major.
"""

from __future__ import annotations

import json
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Value
from .errors import DataError, DomainError

ARCHS = ("lstm", "tsmixer")
CKPT_MAGIC = b"GZCK"
CKPT_VERSION = 1


@dataclass
class ModelParameters:
    arch: str
    dims: dict
    params: "OrderedDict[str, Value]"
    meta: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.params[name]

    def values(self):
        return list(self.params.values())

    @property
    def p(self):
        return self.dims["p"]

    @property
    def q(self):
        return self.dims["q"]

    @property
    def input_dim(self):
        return self.dims["input_dim"]

    def copy(self):
        params = OrderedDict((k, Value(v.data.copy(), name=k)) for k, v in self.params.items())
        return ModelParameters(self.arch, dict(self.dims), params, json.loads(json.dumps(self.meta)))

    def astype(self, dtype):
        params = OrderedDict((k, Value(v.data.astype(dtype), name=k)) for k, v in self.params.items())
        return ModelParameters(self.arch, dict(self.dims), params, dict(self.meta))


def default_dims(arch, input_dim, p=15, q=10, hidden_dim=128, n_blocks=2):
    dims = {"input_dim": input_dim, "hidden_dim": hidden_dim, "p": p, "q": q}
    if arch == "tsmixer":
        dims["n_blocks"] = n_blocks
    return dims


def _shapes(arch, dims):
    c, h, p, q = dims["input_dim"], dims["hidden_dim"], dims["p"], dims["q"]
    if arch == "lstm":
        # (shape, fan_in)
        return OrderedDict([
            ("W_x", ((c, 4 * h), c)),
            ("W_h", ((h, 4 * h), h)),
            ("b", ((1, 4 * h), h)),
            ("W_out", ((h, 2 * q), h)),
            ("b_out", ((1, 2 * q), h)),
        ])
    if arch == "tsmixer":
        shapes = OrderedDict()
        for k in range(dims["n_blocks"]):
            shapes[f"blk{k}.ln1_g"] = ((1, c), None)
            shapes[f"blk{k}.ln1_b"] = ((1, c), None)
            shapes[f"blk{k}.W_time"] = ((p, p), p)
            shapes[f"blk{k}.b_time"] = ((1, p), p)
            shapes[f"blk{k}.ln2_g"] = ((1, c), None)
            shapes[f"blk{k}.ln2_b"] = ((1, c), None)
            shapes[f"blk{k}.W_f1"] = ((c, h), c)
            shapes[f"blk{k}.b_f1"] = ((1, h), c)
            shapes[f"blk{k}.W_f2"] = ((h, c), h)
            shapes[f"blk{k}.b_f2"] = ((1, c), h)
        shapes["W_proj"] = ((p, q), p)
        shapes["b_proj"] = ((1, q), p)
        shapes["W_out"] = ((c, 2), c)
        shapes["b_out"] = ((1, 2), c)
        return shapes
    raise DomainError(f"unknown architecture {arch!r}; choose from {ARCHS}")


def init_params(arch, dims, seed=0, dtype=np.float32) -> ModelParameters:
    """Uniform ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]`` init; LSTM forget bias 1, norm gains 1."""
    for key in ("input_dim", "hidden_dim", "p", "q"):
        if int(dims.get(key, 0)) < 1:
            raise DomainError(f"dims[{key!r}] must be a positive integer")
    rng = np.random.default_rng(seed)
    params = OrderedDict()
    for name, (shape, fan_in) in _shapes(arch, dims).items():
        if fan_in is None:
            fill = 1.0 if name.endswith("_g") else 0.0
            arr = np.full(shape, fill)
        else:
            bound = 1.0 / np.sqrt(fan_in)
            arr = rng.uniform(-bound, bound, size=shape)
        params[name] = Value(arr.astype(dtype), name=name)
    if arch == "lstm":
        h = dims["hidden_dim"]
        params["b"].data[:, h:2 * h] = 1.0
    return ModelParameters(arch, dict(dims), params)


def _check_window(mp, x):
    x = np.asarray(x)
    if x.ndim != 3 or x.shape[1:] != (mp.p, mp.input_dim):
        raise DomainError(
            f"window batch shape {x.shape} does not match (m, {mp.p}, {mp.input_dim})"
        )
    return x


def lstm_graph(mp: ModelParameters, x) -> Value:
    x = _check_window(mp, x).astype(mp["W_x"].dtype, copy=False)
    m = x.shape[0]
    hd = mp.dims["hidden_dim"]
    dt = x.dtype
    h = Value(np.zeros((m, hd), dt))
    c = Value(np.zeros((m, hd), dt))
    W_x, W_h, b = mp["W_x"], mp["W_h"], mp["b"]
    for t in range(mp.p):
        z = Value(x[:, t, :]) @ W_x + h @ W_h + b
        hc = ad.lstm_cell(z, c)
        h = ad.slice_cols(hc, 0, hd)
        c = ad.slice_cols(hc, hd, 2 * hd)
    return h @ mp["W_out"] + mp["b_out"]


def tsmixer_graph(mp: ModelParameters, x) -> Value:
    x = _check_window(mp, x).astype(mp["W_out"].dtype, copy=False)
    m, p, c = x.shape
    q = mp.q
    z = Value(x.reshape(m * p, c))
    for k in range(mp.dims["n_blocks"]):
        pre = f"blk{k}."
        y = ad.layer_norm(z) * mp[pre + "ln1_g"] + mp[pre + "ln1_b"]
        y = ad.block_transpose(y, m)
        y = ad.relu(y @ mp[pre + "W_time"] + mp[pre + "b_time"])
        z = z + ad.block_transpose(y, m)
        y = ad.layer_norm(z) * mp[pre + "ln2_g"] + mp[pre + "ln2_b"]
        y = ad.relu(y @ mp[pre + "W_f1"] + mp[pre + "b_f1"])
        z = z + (y @ mp[pre + "W_f2"] + mp[pre + "b_f2"])
    y = ad.block_transpose(z, m) @ mp["W_proj"] + mp["b_proj"]
    y = ad.block_transpose(y, m) @ mp["W_out"] + mp["b_out"]
    return ad.reshape(y, m, 2 * q)


def forward_graph(mp: ModelParameters, x) -> Value:
    if mp.arch == "lstm":
        return lstm_graph(mp, x)
    if mp.arch == "tsmixer":
        return tsmixer_graph(mp, x)
    raise DomainError(f"unknown architecture {mp.arch!r}")


def predict(mp: ModelParameters, x, batch_size=256) -> np.ndarray:
    """Predictions for a ``(m, p, C)`` batch (or one ``(p, C)`` window) as ``(m, q, 2)``."""
    x = np.asarray(x)
    single = x.ndim == 2
    if single:
        x = x[None]
    outs = [forward_graph(mp, x[i:i + batch_size]).data for i in range(0, len(x), batch_size)]
    y = np.concatenate(outs, axis=0).astype(np.float64).reshape(len(x), mp.q, 2)
    return y[0] if single else y


def lstm_forward(mp: ModelParameters, window) -> np.ndarray:
    if mp.arch != "lstm":
        raise DomainError(f"expected lstm parameters, got {mp.arch}")
    return predict(mp, window)


def tsmixer_forward(mp: ModelParameters, window) -> np.ndarray:
    if mp.arch != "tsmixer":
        raise DomainError(f"expected tsmixer parameters, got {mp.arch}")
    return predict(mp, window)


def save_checkpoint(mp: ModelParameters, path) -> None:
    header = {
        "arch": mp.arch,
        "dims": mp.dims,
        "meta": mp.meta,
        "tensors": [{"name": k, "shape": list(v.shape)} for k, v in mp.params.items()],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<II", CKPT_VERSION, len(blob)))
        fh.write(blob)
        for v in mp.params.values():
            fh.write(np.ascontiguousarray(v.data, dtype="<f4").tobytes())


def load_checkpoint(path) -> ModelParameters:
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    if raw[:4] != CKPT_MAGIC:
        raise DataError(f"{path}: not a gazecast checkpoint")
    version, hlen = struct.unpack_from("<II", raw, 4)
    if version != CKPT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    try:
        header = json.loads(raw[12:12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: corrupt header ({exc})") from None
    offset = 12 + hlen
    params = OrderedDict()
    for spec in header["tensors"]:
        shape = tuple(spec["shape"])
        n = int(np.prod(shape))
        chunk = raw[offset:offset + 4 * n]
        if len(chunk) != 4 * n:
            raise DataError(f"{path}: truncated tensor {spec['name']}")
        params[spec["name"]] = Value(
            np.frombuffer(chunk, dtype="<f4").reshape(shape).astype(np.float32), name=spec["name"]
        )
        offset += 4 * n
    if offset != len(raw):
        raise DataError(f"{path}: {len(raw) - offset} trailing bytes")
    mp = ModelParameters(header["arch"], header["dims"], params, header.get("meta", {}))
    expected = _shapes(mp.arch, mp.dims)
    if list(expected) != list(params) or any(expected[k][0] != params[k].shape for k in expected):
        raise DataError(f"{path}: tensors do not match a {mp.arch} model with dims {mp.dims}")
    return mp
