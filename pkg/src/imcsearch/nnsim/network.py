"""Minimal reference networks: layers, ideal forward/backward, training.

Supports what the desk-scale fixtures need and nothing more: 3x3 (or 1x1)
convolutions, dense layers, batchnorm, ReLU and 2x2 average pooling.
Weights serialize to a small binary container (JSON shape header followed
by little-endian float32 data).
"""

from __future__ import annotations

import copy
import json
import struct
from dataclasses import dataclass, field

import numpy as np


class TrainingDiverged(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass
class TensorBatch:
    """A data batch: N x C x H x W (or N x F) values with optional labels."""

    data: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=float)
        if not np.all(np.isfinite(self.data)):
            raise ValueError("batch data must be finite")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape[0] != self.data.shape[0]:
                raise ValueError("labels must match batch size")

    def __len__(self) -> int:
        return self.data.shape[0]


# ---------------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------------

def im2col(x: np.ndarray, kernel: int, stride: int,
           pad: int) -> tuple[np.ndarray, tuple[int, int]]:
    """(N, C, H, W) -> (N * outH * outW, C * k * k) patch matrix."""
    n, c, h, w = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out_h = (h + 2 * pad - kernel) // stride + 1
    out_w = (w + 2 * pad - kernel) // stride + 1
    cols = np.empty((n, c, kernel, kernel, out_h, out_w), dtype=x.dtype)
    for i in range(kernel):
        for j in range(kernel):
            cols[:, :, i, j] = x[:, :, i:i + stride * out_h:stride,
                                 j:j + stride * out_w:stride]
    cols = cols.transpose(0, 4, 5, 1, 2, 3).reshape(n * out_h * out_w, -1)
    return cols, (out_h, out_w)


def col2im(cols: np.ndarray, x_shape: tuple[int, ...], kernel: int,
           stride: int, pad: int) -> np.ndarray:
    """Adjoint of im2col (scatter-add of patch gradients)."""
    n, c, h, w = x_shape
    out_h = (h + 2 * pad - kernel) // stride + 1
    out_w = (w + 2 * pad - kernel) // stride + 1
    cols = cols.reshape(n, out_h, out_w, c, kernel, kernel)
    cols = cols.transpose(0, 3, 4, 5, 1, 2)
    x = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(kernel):
        for j in range(kernel):
            x[:, :, i:i + stride * out_h:stride, j:j + stride * out_w:stride] \
                += cols[:, :, i, j]
    return x[:, :, pad:pad + h, pad:pad + w] if pad else x


class Layer:
    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> list[np.ndarray]:
        return []

    def grads(self) -> list[np.ndarray]:
        return []

    def spec(self) -> dict:
        raise NotImplementedError


class Conv2D(Layer):
    """Same-padded convolution; bias-free (a batchnorm usually follows)."""

    def __init__(self, c_in: int, c_out: int, kernel: int = 3, stride: int = 1):
        self.c_in, self.c_out, self.kernel, self.stride = c_in, c_out, kernel, stride
        self.weight = np.zeros((c_out, c_in, kernel, kernel))
        self.dweight = np.zeros_like(self.weight)
        self._cache = None

    @property
    def pad(self) -> int:
        return self.kernel // 2

    def init_weights(self, rng: np.random.Generator) -> None:
        fan_in = self.c_in * self.kernel ** 2
        self.weight = rng.standard_normal(self.weight.shape) * np.sqrt(2.0 / fan_in)

    def weight_matrix(self) -> np.ndarray:
        """(C_in * k * k, C_out) layout used by the crossbar path."""
        return self.weight.reshape(self.c_out, -1).T

    def forward(self, x, train=False):
        cols, (oh, ow) = im2col(x, self.kernel, self.stride, self.pad)
        out = cols @ self.weight_matrix()
        n = x.shape[0]
        if train:
            self._cache = (cols, x.shape)
        return out.reshape(n, oh, ow, self.c_out).transpose(0, 3, 1, 2)

    def backward(self, dout):
        cols, x_shape = self._cache
        n, _, oh, ow = dout.shape
        dmat = dout.transpose(0, 2, 3, 1).reshape(n * oh * ow, self.c_out)
        dw = (cols.T @ dmat).T.reshape(self.weight.shape)
        self.dweight = dw
        dcols = dmat @ self.weight_matrix().T
        return col2im(dcols, x_shape, self.kernel, self.stride, self.pad)

    def params(self):
        return [self.weight]

    def grads(self):
        return [self.dweight]

    def spec(self):
        return {"kind": "conv", "c_in": self.c_in, "c_out": self.c_out,
                "kernel": self.kernel, "stride": self.stride}


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int):
        self.n_in, self.n_out = n_in, n_out
        self.weight = np.zeros((n_in, n_out))
        self.bias = np.zeros(n_out)
        self.dweight = np.zeros_like(self.weight)
        self.dbias = np.zeros_like(self.bias)
        self._cache = None

    def init_weights(self, rng: np.random.Generator) -> None:
        self.weight = rng.standard_normal(self.weight.shape) * np.sqrt(2.0 / self.n_in)
        self.bias = np.zeros(self.n_out)

    def forward(self, x, train=False):
        if train:
            self._cache = x
        return x @ self.weight + self.bias

    def backward(self, dout):
        x = self._cache
        self.dweight = x.T @ dout
        self.dbias = dout.sum(axis=0)
        return dout @ self.weight.T

    def params(self):
        return [self.weight, self.bias]

    def grads(self):
        return [self.dweight, self.dbias]

    def spec(self):
        return {"kind": "dense", "n_in": self.n_in, "n_out": self.n_out}


class BatchNorm(Layer):
    """Per-channel (4-D input) or per-feature (2-D input) normalization."""

    def __init__(self, num_features: int, momentum: float = 0.1,
                 eps: float = 1e-5):
        self.num_features = num_features
        self.momentum = momentum
        self.eps = eps
        self.gamma = np.ones(num_features)
        self.beta = np.zeros(num_features)
        self.running_mean = np.zeros(num_features)
        self.running_var = np.ones(num_features)
        self.dgamma = np.zeros_like(self.gamma)
        self.dbeta = np.zeros_like(self.beta)
        self._cache = None

    @staticmethod
    def _axes(x: np.ndarray) -> tuple[int, ...]:
        return (0, 2, 3) if x.ndim == 4 else (0,)

    def _shape(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        return v.reshape(1, -1, 1, 1) if x.ndim == 4 else v

    def batch_stats(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        axes = self._axes(x)
        return x.mean(axis=axes), x.var(axis=axes)

    def update_running(self, mean: np.ndarray, var: np.ndarray,
                       momentum: float | None = None) -> None:
        m = self.momentum if momentum is None else momentum
        self.running_mean = (1 - m) * self.running_mean + m * mean
        self.running_var = (1 - m) * self.running_var + m * var

    def normalize(self, x: np.ndarray, mean: np.ndarray,
                  var: np.ndarray) -> np.ndarray:
        xhat = (x - self._shape(x, mean)) / np.sqrt(self._shape(x, var) + self.eps)
        return self._shape(x, self.gamma) * xhat + self._shape(x, self.beta)

    def forward(self, x, train=False):
        if train:
            mean, var = self.batch_stats(x)
            self.update_running(mean, var)
            xhat = (x - self._shape(x, mean)) / np.sqrt(self._shape(x, var) + self.eps)
            self._cache = (xhat, var, x.shape)
            return self._shape(x, self.gamma) * xhat + self._shape(x, self.beta)
        return self.normalize(x, self.running_mean, self.running_var)

    def backward(self, dout):
        xhat, var, x_shape = self._cache
        axes = self._axes(dout)
        m = dout.size / self.num_features
        self.dgamma = (dout * xhat).sum(axis=axes)
        self.dbeta = dout.sum(axis=axes)
        g = self._shape(dout, self.gamma)
        inv_std = self._shape(dout, 1.0 / np.sqrt(var + self.eps))
        dxhat = dout * g
        dx = (dxhat - self._shape(dout, dxhat.sum(axis=axes)) / m
              - xhat * self._shape(dout, (dxhat * xhat).sum(axes)) / m) * inv_std
        return dx

    def params(self):
        return [self.gamma, self.beta]

    def grads(self):
        return [self.dgamma, self.dbeta]

    def spec(self):
        return {"kind": "bn", "num_features": self.num_features,
                "momentum": self.momentum, "eps": self.eps}


class ReLU(Layer):
    def __init__(self):
        self._mask = None

    def forward(self, x, train=False):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dout):
        return dout * self._mask

    def spec(self):
        return {"kind": "relu"}


class AvgPool2D(Layer):
    def __init__(self, size: int = 2):
        self.size = size
        self._in_shape = None

    def forward(self, x, train=False):
        n, c, h, w = x.shape
        s = self.size
        if h % s or w % s:
            raise ValueError(f"spatial dims {(h, w)} not divisible by pool {s}")
        self._in_shape = x.shape
        return x.reshape(n, c, h // s, s, w // s, s).mean(axis=(3, 5))

    def backward(self, dout):
        n, c, h, w = self._in_shape
        s = self.size
        up = np.repeat(np.repeat(dout, s, axis=2), s, axis=3)
        return up / (s * s)

    def spec(self):
        return {"kind": "avgpool", "size": self.size}


class Flatten(Layer):
    def __init__(self):
        self._in_shape = None

    def forward(self, x, train=False):
        self._in_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._in_shape)

    def spec(self):
        return {"kind": "flatten"}


class GlobalAvgPool(Layer):
    """Collapse remaining spatial extent to 1x1 before the classifier."""

    def __init__(self):
        self._in_shape = None

    def forward(self, x, train=False):
        self._in_shape = x.shape
        return x.mean(axis=(2, 3))

    def backward(self, dout):
        n, c, h, w = self._in_shape
        return np.broadcast_to(dout[:, :, None, None] / (h * w),
                               self._in_shape).copy()

    def spec(self):
        return {"kind": "gap"}


_LAYER_KINDS = {
    "conv": lambda s: Conv2D(s["c_in"], s["c_out"], s["kernel"], s["stride"]),
    "dense": lambda s: Dense(s["n_in"], s["n_out"]),
    "bn": lambda s: BatchNorm(s["num_features"], s["momentum"], s["eps"]),
    "relu": lambda s: ReLU(),
    "avgpool": lambda s: AvgPool2D(s["size"]),
    "flatten": lambda s: Flatten(),
    "gap": lambda s: GlobalAvgPool(),
}


# ---------------------------------------------------------------------------
# the network
# ---------------------------------------------------------------------------

@dataclass
class RefNet:
    layers: list[Layer]
    class_count: int
    train_accuracy: float | None = None

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x, train=train)
        return x

    def forward_with_codes(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Forward pass that also collects the binary ReLU activation codes."""
        codes = []
        for layer in self.layers:
            if isinstance(layer, ReLU):
                codes.append((x > 0).reshape(x.shape[0], -1))
            x = layer.forward(x)
        if not codes:
            raise ValueError("network has no ReLU layers to encode")
        return x, np.concatenate(codes, axis=1)

    def quantizable(self) -> list[Conv2D | Dense]:
        return [l for l in self.layers if isinstance(l, (Conv2D, Dense))]

    def batchnorms(self) -> list[BatchNorm]:
        return [l for l in self.layers if isinstance(l, BatchNorm)]

    def init_weights(self, rng: np.random.Generator) -> None:
        for layer in self.layers:
            if isinstance(layer, (Conv2D, Dense)):
                layer.init_weights(rng)
            elif isinstance(layer, BatchNorm):
                layer.gamma = np.ones(layer.num_features)
                layer.beta = np.zeros(layer.num_features)
                layer.running_mean = np.zeros(layer.num_features)
                layer.running_var = np.ones(layer.num_features)

    def clone(self) -> "RefNet":
        return copy.deepcopy(self)


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log softmax probability of the true class."""
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    if np.any(labels < 0) or np.any(labels >= logits.shape[1]):
        raise ValueError("labels out of range")
    z = logits - logits.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-log_probs[np.arange(len(labels)), labels].mean())


def cross_entropy_grad(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    probs = np.exp(z)
    probs /= probs.sum(axis=1, keepdims=True)
    probs[np.arange(len(labels)), labels] -= 1.0
    return probs / len(labels)


def accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    return float((logits.argmax(axis=1) == labels).mean())


def train_tiny(net: RefNet, dataset: TensorBatch, epochs: int, lr: float,
               batch_size: int = 32, seed: int = 0) -> RefNet:
    """Plain minibatch SGD on cross-entropy over the ideal forward pass.

    Mutates and returns ``net`` with its final training accuracy recorded.
    Raises ``TrainingDiverged`` on a non-finite loss.
    """
    if dataset.labels is None:
        raise ValueError("train_tiny needs a labeled dataset")
    rng = np.random.default_rng(seed)
    n = len(dataset)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            x, y = dataset.data[idx], dataset.labels[idx]
            logits = net.forward(x, train=True)
            loss = cross_entropy(logits, y)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"loss became non-finite ({loss})")
            if lr == 0:
                continue
            dout = cross_entropy_grad(logits, y)
            for layer in reversed(net.layers):
                dout = layer.backward(dout)
            for layer in net.layers:
                for p, g in zip(layer.params(), layer.grads()):
                    p -= lr * g
    logits = net.forward(dataset.data)
    net.train_accuracy = accuracy(logits, dataset.labels)
    return net


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def make_mlp(widths: list[int], seed: int = 0) -> RefNet:
    """Dense-BN-ReLU stack ending in a linear classifier."""
    if len(widths) < 2:
        raise ValueError("need at least an input and an output width")
    layers: list[Layer] = []
    for i in range(len(widths) - 2):
        layers += [Dense(widths[i], widths[i + 1]),
                   BatchNorm(widths[i + 1]), ReLU()]
    layers.append(Dense(widths[-2], widths[-1]))
    net = RefNet(layers=layers, class_count=widths[-1])
    net.init_weights(np.random.default_rng(seed))
    return net


def build_refnet(model, class_count: int, seed: int = 0) -> RefNet:
    """Reference network matching a candidate's layer widths.

    Convolution layers become conv-BN-ReLU blocks (with an average pool
    wherever the candidate's fixed shapes halve the spatial extent); the
    final fully-connected layer becomes the classifier after a global
    average pool.  The candidate's last layer must produce ``class_count``
    channels.
    """
    layers: list[Layer] = []
    prev_cd = model.input_channels
    entries = list(model.layers)
    last = len(entries) - 1
    for idx, (shape, choice) in enumerate(entries):
        if shape.is_fc:
            if idx != last:
                layers += [Dense(prev_cd, choice.cd_out),
                           BatchNorm(choice.cd_out), ReLU()]
            else:
                layers.append(Dense(prev_cd, choice.cd_out))
        else:
            layers += [Conv2D(prev_cd, choice.cd_out, shape.kernel, shape.stride),
                       BatchNorm(choice.cd_out), ReLU()]
            out_sp = shape.out_spatial()
            next_sp = None
            if idx < last and not entries[idx + 1][0].is_fc:
                next_sp = entries[idx + 1][0].in_spatial
            if next_sp is not None and next_sp[0] < out_sp[0]:
                if out_sp[0] % next_sp[0]:
                    raise ValueError(f"layer {idx}: cannot pool {out_sp} to {next_sp}")
                layers.append(AvgPool2D(out_sp[0] // next_sp[0]))
            if idx < last and entries[idx + 1][0].is_fc:
                layers.append(GlobalAvgPool())
        prev_cd = choice.cd_out
    if prev_cd != class_count:
        raise ValueError(f"candidate's last layer yields {prev_cd} outputs, "
                         f"expected {class_count} classes")
    net = RefNet(layers=layers, class_count=class_count)
    net.init_weights(np.random.default_rng(seed))
    return net


# ---------------------------------------------------------------------------
# serialization: magic, version, JSON spec header, little-endian f32 arrays
# ---------------------------------------------------------------------------

_MAGIC = b"IMCN"
_FORMAT_VERSION = 1


def _named_arrays(net: RefNet) -> list[tuple[str, np.ndarray]]:
    out = []
    for i, layer in enumerate(net.layers):
        if isinstance(layer, Conv2D):
            out.append((f"layers.{i}.weight", layer.weight))
        elif isinstance(layer, Dense):
            out.append((f"layers.{i}.weight", layer.weight))
            out.append((f"layers.{i}.bias", layer.bias))
        elif isinstance(layer, BatchNorm):
            out.append((f"layers.{i}.gamma", layer.gamma))
            out.append((f"layers.{i}.beta", layer.beta))
            out.append((f"layers.{i}.running_mean", layer.running_mean))
            out.append((f"layers.{i}.running_var", layer.running_var))
    return out


def save_net(net: RefNet, path) -> None:
    arrays = _named_arrays(net)
    header = {
        "format_version": _FORMAT_VERSION,
        "class_count": net.class_count,
        "layers": [layer.spec() for layer in net.layers],
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in arrays],
        "dtype": "<f4",
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<II", _FORMAT_VERSION, len(blob)))
        f.write(blob)
        for _, a in arrays:
            f.write(np.ascontiguousarray(a, dtype="<f4").tobytes())


def load_net(path) -> RefNet:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a network container (magic {magic!r})")
        version, hlen = struct.unpack("<II", f.read(8))
        if version != _FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported container version {version}")
        header = json.loads(f.read(hlen).decode("utf-8"))
        layers = [_LAYER_KINDS[s["kind"]](s) for s in header["layers"]]
        net = RefNet(layers=layers, class_count=header["class_count"])
        arrays = _named_arrays(net)
        specs = header["arrays"]
        if [s["name"] for s in specs] != [n for n, _ in arrays]:
            raise ValueError(f"{path}: array manifest does not match layer stack")
        for spec, (_, target) in zip(specs, arrays):
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(f.read(4 * count), dtype="<f4").reshape(shape)
            target[...] = data.astype(float)
    return net
