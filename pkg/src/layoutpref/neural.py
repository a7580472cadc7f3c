"""Minimal differentiable building blocks on top of numpy.

Layers: Conv (cross-correlation, im2col), ReLU, MaxPool (ties break toward
the smallest flat window index), Flatten, Dense, Sigmoid. Every backward
pass is checked against central finite differences in the test suite.
Float64 everywhere; identical inputs give bitwise identical outputs.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, StructuralError, TrainingError, ValidationError

BCE_EPS = 1e-7

PARAMS_FORMAT = "layoutpref-params"
PARAMS_VERSION = 1


@dataclass(frozen=True)
class Conv:
    out_channels: int
    kernel: int
    stride: int = 1
    padding: int = 0


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class MaxPool:
    kernel: int
    stride: int


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class Dense:
    out_dim: int


@dataclass(frozen=True)
class Sigmoid:
    pass


LayerSpec = Conv | ReLU | MaxPool | Flatten | Dense | Sigmoid


@dataclass(frozen=True)
class NetworkSpec:
    input_shape: tuple[int, int, int]  # (channels, height, width)
    layers: tuple[LayerSpec, ...]
    init_seed: int = 0


def _conv_out(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def layer_shapes(spec: NetworkSpec) -> list[tuple]:
    """Per-layer output shapes (excluding batch); raises naming the layer."""
    shape: tuple = spec.input_shape
    shapes = [shape]
    for i, layer in enumerate(spec.layers):
        name = f"layer {i} ({type(layer).__name__})"
        if isinstance(layer, Conv):
            if len(shape) != 3:
                raise StructuralError(f"{name}: needs (c, h, w) input, got {shape}")
            c, h, w = shape
            oh = _conv_out(h, layer.kernel, layer.stride, layer.padding)
            ow = _conv_out(w, layer.kernel, layer.stride, layer.padding)
            if oh <= 0 or ow <= 0:
                raise StructuralError(f"{name}: kernel {layer.kernel} does not fit input {shape}")
            shape = (layer.out_channels, oh, ow)
        elif isinstance(layer, MaxPool):
            if len(shape) != 3:
                raise StructuralError(f"{name}: needs (c, h, w) input, got {shape}")
            c, h, w = shape
            oh = _conv_out(h, layer.kernel, layer.stride, 0)
            ow = _conv_out(w, layer.kernel, layer.stride, 0)
            if oh <= 0 or ow <= 0:
                raise StructuralError(f"{name}: kernel {layer.kernel} does not fit input {shape}")
            shape = (c, oh, ow)
        elif isinstance(layer, Flatten):
            shape = (int(np.prod(shape)),)
        elif isinstance(layer, Dense):
            if len(shape) != 1:
                raise StructuralError(f"{name}: needs a flat input, got {shape}")
            shape = (layer.out_dim,)
        elif isinstance(layer, (ReLU, Sigmoid)):
            pass
        else:  # pragma: no cover
            raise StructuralError(f"{name}: unknown layer type")
        shapes.append(shape)
    return shapes


def output_shape(spec: NetworkSpec) -> tuple:
    return layer_shapes(spec)[-1]


def feature_dim(spec: NetworkSpec) -> int:
    shape = output_shape(spec)
    if len(shape) != 1:
        raise StructuralError(f"network output {shape} is not a flat feature vector")
    return shape[0]


def spec_digest(spec: NetworkSpec) -> str:
    """Architecture digest; the init seed does not affect compatibility."""
    doc = {
        "input_shape": list(spec.input_shape),
        "layers": [
            [type(l).__name__] + [getattr(l, f.name) for f in l.__dataclass_fields__.values()]
            for l in spec.layers
        ],
    }
    return hashlib.sha256(json.dumps(doc, separators=(",", ":")).encode()).hexdigest()


def init_params(spec: NetworkSpec) -> list[dict[str, np.ndarray]]:
    """He-uniform weights, zero biases, seeded per layer."""
    shapes = layer_shapes(spec)
    params: list[dict[str, np.ndarray]] = []
    for i, layer in enumerate(spec.layers):
        rng = np.random.default_rng(np.random.SeedSequence([int(spec.init_seed), i]))
        if isinstance(layer, Conv):
            c_in = shapes[i][0]
            fan_in = c_in * layer.kernel * layer.kernel
            limit = math.sqrt(6.0 / fan_in)
            w = rng.uniform(-limit, limit, size=(layer.out_channels, c_in, layer.kernel, layer.kernel))
            params.append({"w": w, "b": np.zeros(layer.out_channels)})
        elif isinstance(layer, Dense):
            d_in = shapes[i][0]
            limit = math.sqrt(6.0 / d_in)
            w = rng.uniform(-limit, limit, size=(d_in, layer.out_dim))
            params.append({"w": w, "b": np.zeros(layer.out_dim)})
        else:
            params.append({})
    return params


def _windows(xp: np.ndarray, kernel: int, stride: int, oh: int, ow: int) -> np.ndarray:
    n, c, _, _ = xp.shape
    sn, sc, sh, sw = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, c, oh, ow, kernel, kernel),
        strides=(sn, sc, sh * stride, sw * stride, sh, sw),
        writeable=False,
    )


def _col2im(dcols: np.ndarray, x_shape: tuple, kernel: int, stride: int, padding: int) -> np.ndarray:
    n, c, h, w = x_shape
    oh, ow = dcols.shape[2], dcols.shape[3]
    dxp = np.zeros((n, c, h + 2 * padding, w + 2 * padding))
    for i in range(kernel):
        for j in range(kernel):
            dxp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += dcols[:, :, :, :, i, j]
    if padding:
        return dxp[:, :, padding : padding + h, padding : padding + w]
    return dxp


def forward(spec: NetworkSpec, params: list[dict], x: np.ndarray) -> tuple[np.ndarray, list]:
    """Run the network; returns (output, cache for backward)."""
    if x.ndim != 4 or x.shape[1:] != tuple(spec.input_shape):
        raise StructuralError(
            f"input shape {x.shape} does not match network input {('batch',) + tuple(spec.input_shape)}"
        )
    if len(params) != len(spec.layers):
        raise StructuralError("parameter list does not match the layer list")
    caches: list = []
    out = np.asarray(x, dtype=np.float64)
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Conv):
            p = layer.padding
            xp = np.pad(out, ((0, 0), (0, 0), (p, p), (p, p))) if p else out
            oh = _conv_out(out.shape[2], layer.kernel, layer.stride, p)
            ow = _conv_out(out.shape[3], layer.kernel, layer.stride, p)
            win = _windows(xp, layer.kernel, layer.stride, oh, ow)
            y = np.einsum("nchwij,ocij->nohw", win, params[i]["w"], optimize=True)
            y += params[i]["b"][None, :, None, None]
            caches.append((out.shape, win))
            out = y
        elif isinstance(layer, ReLU):
            mask = out > 0
            caches.append(mask)
            out = out * mask
        elif isinstance(layer, MaxPool):
            n, c, h, w = out.shape
            oh = _conv_out(h, layer.kernel, layer.stride, 0)
            ow = _conv_out(w, layer.kernel, layer.stride, 0)
            win = _windows(out, layer.kernel, layer.stride, oh, ow)
            flat = win.reshape(n, c, oh, ow, layer.kernel * layer.kernel)
            arg = flat.argmax(axis=-1)  # first max: smallest flat index
            caches.append((out.shape, arg))
            out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
        elif isinstance(layer, Flatten):
            caches.append(out.shape)
            out = out.reshape(out.shape[0], -1)
        elif isinstance(layer, Dense):
            caches.append(out)
            out = out @ params[i]["w"] + params[i]["b"]
        elif isinstance(layer, Sigmoid):
            y = 0.5 * (1.0 + np.tanh(0.5 * out))
            caches.append(y)
            out = y
    if not np.all(np.isfinite(out)):
        raise TrainingError("non-finite values in forward pass output")
    return out, caches


def backward(
    spec: NetworkSpec, params: list[dict], caches: list, upstream: np.ndarray
) -> tuple[list[dict[str, np.ndarray]], np.ndarray]:
    """Exact gradients of the composition; returns (per-layer grads, dx)."""
    if len(caches) != len(spec.layers):
        raise StructuralError("cache does not match the layer list; rerun forward")
    grads: list[dict[str, np.ndarray]] = [{} for _ in spec.layers]
    dy = np.asarray(upstream, dtype=np.float64)
    for i in range(len(spec.layers) - 1, -1, -1):
        layer = spec.layers[i]
        cache = caches[i]
        if isinstance(layer, Conv):
            x_shape, win = cache
            grads[i]["w"] = np.einsum("nchwij,nohw->ocij", win, dy, optimize=True)
            grads[i]["b"] = dy.sum(axis=(0, 2, 3))
            dcols = np.einsum("nohw,ocij->nchwij", dy, params[i]["w"], optimize=True)
            dy = _col2im(dcols, x_shape, layer.kernel, layer.stride, layer.padding)
        elif isinstance(layer, ReLU):
            dy = dy * cache
        elif isinstance(layer, MaxPool):
            x_shape, arg = cache
            n, c, h, w = x_shape
            oh, ow = arg.shape[2], arg.shape[3]
            dcols = np.zeros((n, c, oh, ow, layer.kernel * layer.kernel))
            np.put_along_axis(dcols, arg[..., None], dy[..., None], axis=-1)
            dcols = dcols.reshape(n, c, oh, ow, layer.kernel, layer.kernel)
            dy = _col2im(dcols, x_shape, layer.kernel, layer.stride, 0)
        elif isinstance(layer, Flatten):
            dy = dy.reshape(cache)
        elif isinstance(layer, Dense):
            x = cache
            grads[i]["w"] = x.T @ dy
            grads[i]["b"] = dy.sum(axis=0)
            dy = dy @ params[i]["w"].T
        elif isinstance(layer, Sigmoid):
            y = cache
            dy = dy * y * (1.0 - y)
    return grads, dy


def bce_loss(y_hat: float, y: int) -> tuple[float, float]:
    """Binary cross-entropy and its derivative w.r.t. the prediction.

    The prediction is clamped into [eps, 1-eps] before the logs."""
    if y not in (0, 1):
        raise ParameterError(f"target must be 0 or 1, got {y!r}")
    p = min(max(float(y_hat), BCE_EPS), 1.0 - BCE_EPS)
    loss = -(y * math.log(p) + (1 - y) * math.log(1.0 - p))
    grad = (p - y) / (p * (1.0 - p))
    return loss, grad


def bce_loss_batch(y_hat: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean BCE over a batch and the gradient w.r.t. each prediction."""
    p = np.clip(np.asarray(y_hat, dtype=np.float64), BCE_EPS, 1.0 - BCE_EPS)
    t = np.asarray(y, dtype=np.float64)
    losses = -(t * np.log(p) + (1.0 - t) * np.log(1.0 - p))
    grad = (p - t) / (p * (1.0 - p)) / len(p)
    return float(losses.mean()), grad


@dataclass
class AdamHyper:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


class AdamState:
    """First/second moment accumulators, keyed like the parameter list."""

    def __init__(self, params: list[dict]):
        self.step = 0
        self.m = [{k: np.zeros_like(v) for k, v in layer.items()} for layer in params]
        self.v = [{k: np.zeros_like(v) for k, v in layer.items()} for layer in params]


def adam_step(params: list[dict], grads: list[dict], state: AdamState, hyper: AdamHyper) -> None:
    """In-place Adam update with bias correction."""
    state.step += 1
    t = state.step
    for i, layer in enumerate(params):
        for key, value in layer.items():
            g = grads[i].get(key)
            if g is None:
                raise StructuralError(f"missing gradient for layer {i} parameter {key!r}")
            if not np.all(np.isfinite(g)):
                raise TrainingError(f"non-finite gradient in layer {i} parameter {key!r}")
            m = state.m[i][key]
            v = state.v[i][key]
            m *= hyper.beta1
            m += (1.0 - hyper.beta1) * g
            v *= hyper.beta2
            v += (1.0 - hyper.beta2) * (g * g)
            m_hat = m / (1.0 - hyper.beta1**t)
            v_hat = v / (1.0 - hyper.beta2**t)
            value -= hyper.lr * m_hat / (np.sqrt(v_hat) + hyper.eps)


def save_params(path, spec: NetworkSpec, params: list[dict], extra: dict | None = None) -> None:
    """Deterministic container: a JSON header line plus raw float64 bytes."""
    entries = []
    blobs = []
    for i, layer in enumerate(params):
        for key in sorted(layer):
            arr = np.ascontiguousarray(layer[key], dtype=np.float64)
            entries.append({"layer": i, "name": key, "shape": list(arr.shape)})
            blobs.append(arr.tobytes())
    header = {
        "format": PARAMS_FORMAT,
        "version": PARAMS_VERSION,
        "spec_digest": spec_digest(spec),
        "layer_count": len(params),
        "arrays": entries,
    }
    if extra:
        header["extra"] = extra
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")).encode() + b"\n")
        for blob in blobs:
            fh.write(blob)


def load_params(path, spec: NetworkSpec) -> tuple[list[dict[str, np.ndarray]], dict]:
    """Load a parameter container, rejecting any spec mismatch."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: bad parameter container header: {exc}")
        if header.get("format") != PARAMS_FORMAT or header.get("version") != PARAMS_VERSION:
            raise ValidationError(f"{path}: unsupported container format/version")
        if header.get("spec_digest") != spec_digest(spec):
            raise ValidationError(f"{path}: parameter container was trained for a different network spec")
        params: list[dict[str, np.ndarray]] = [{} for _ in range(header["layer_count"])]
        for entry in header["arrays"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            blob = fh.read(count * 8)
            if len(blob) != count * 8:
                raise ValidationError(f"{path}: truncated parameter container")
            params[entry["layer"]][entry["name"]] = np.frombuffer(blob, dtype=np.float64).reshape(shape).copy()
    return params, header.get("extra", {})
