"""Dense ReLU networks with hand-written backprop and Adam.

Weights are stored as (out, in) matrices so a batch ``x`` of shape
(batch, in) maps to ``x @ W.T + b``. Everything is float64.
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, List, Sequence, Tuple

import numpy as np

from .errors import InvalidArgument, InvalidState, NumericError, ShapeError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

NET_MAGIC = b"AQENET\x00\x00"
NET_FORMAT_VERSION = 1

Grads = List[Tuple[np.ndarray, np.ndarray]]


@dataclass
class NetworkParams:
    layer_sizes: List[int]
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    adam_m: List[np.ndarray]
    adam_v: List[np.ndarray]
    adam_t: int = 0
    # bumped on every in-place mutation so stale caches can be detected
    version: int = field(default=0, compare=False)

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    def arrays(self) -> List[np.ndarray]:
        """Parameters in declaration order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def num_params(self) -> int:
        return sum(a.size for a in self.arrays())

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            list(self.layer_sizes),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            [m.copy() for m in self.adam_m],
            [v.copy() for v in self.adam_v],
            self.adam_t,
        )

    def touch(self) -> None:
        self.version += 1

    def same_values(self, other: "NetworkParams") -> bool:
        """Bitwise equality of sizes, parameters and optimizer state."""
        if self.layer_sizes != other.layer_sizes or self.adam_t != other.adam_t:
            return False
        mine = self.arrays() + self.adam_m + self.adam_v
        theirs = other.arrays() + other.adam_m + other.adam_v
        return all(np.array_equal(a, b) for a, b in zip(mine, theirs))


@dataclass
class ForwardCache:
    inputs: List[np.ndarray]  # input to each layer (post-activation of previous)
    pre: List[np.ndarray]  # pre-activation of each layer
    params_id: int
    params_version: int


def _check_sizes(layer_sizes: Sequence[int]) -> List[int]:
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2:
        raise InvalidArgument(f"need at least 2 layer sizes, got {sizes}")
    if any(s <= 0 for s in sizes):
        raise InvalidArgument(f"layer sizes must be positive, got {sizes}")
    return sizes


def init_network(layer_sizes: Sequence[int], rng_seed) -> NetworkParams:
    """Fan-in scaled uniform weights in +-1/sqrt(fan_in), zero biases.

    ``rng_seed`` may be an int, a SeedSequence or a Generator.
    """
    sizes = _check_sizes(layer_sizes)
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return NetworkParams(
        sizes,
        weights,
        biases,
        [np.zeros_like(a) for a in _interleave(weights, biases)],
        [np.zeros_like(a) for a in _interleave(weights, biases)],
        0,
    )


def _interleave(weights, biases):
    out = []
    for w, b in zip(weights, biases):
        out.extend((w, b))
    return out


def forward(params: NetworkParams, x: np.ndarray) -> Tuple[np.ndarray, ForwardCache]:
    """ReLU on hidden layers, identity on the output layer.

    Accepts a single vector or a (batch, in) matrix. Each row goes through
    its own vector-matrix product, so a row's output never depends on the
    other rows in the batch (a plain batched GEMM picks different kernels
    for different batch sizes and breaks bitwise agreement).
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.layer_sizes[0]:
        raise ShapeError(f"expected input width {params.layer_sizes[0]}, got shape {x.shape}")
    inputs, pres = [], []
    h = x
    last = params.num_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        z = np.matmul(h[:, None, :], w.T)[:, 0, :] + b
        pres.append(z)
        h = z if i == last else np.maximum(z, 0.0)
    cache = ForwardCache(inputs, pres, id(params), params.version)
    return (h[0] if single else h), cache


def backward(
    params: NetworkParams,
    cache: ForwardCache,
    output_grad: np.ndarray,
    need_param_grads: bool = True,
) -> Tuple[Grads | None, np.ndarray]:
    """Reverse-mode gradients of sum(output * output_grad).

    Returns ``([(dW, db) per layer], d_input)``; the parameter gradients are
    ``None`` when ``need_param_grads`` is false.
    """
    if cache.params_id != id(params) or cache.params_version != params.version:
        raise InvalidState("forward cache does not belong to the current parameters")
    g = np.asarray(output_grad, dtype=np.float64)
    if g.ndim == 1:
        g = g[None, :]
    if g.shape != cache.pre[-1].shape:
        raise ShapeError(f"output_grad shape {g.shape} != output shape {cache.pre[-1].shape}")
    grads: Grads = [None] * params.num_layers  # type: ignore[list-item]
    last = params.num_layers - 1
    for i in range(last, -1, -1):
        if i != last:
            g = g * (cache.pre[i] > 0.0)
        if need_param_grads:
            grads[i] = (g.T @ cache.inputs[i], g.sum(axis=0))
        g = g @ params.weights[i]
    if np.asarray(output_grad).ndim == 1:
        g = g[0]
    return (grads if need_param_grads else None), g


def adam_update(arrays, grads, ms, vs, t: int, lr: float) -> None:
    """In-place bias-corrected Adam step for step number ``t`` (1-based)."""
    c1 = 1.0 - ADAM_BETA1**t
    c2 = 1.0 - ADAM_BETA2**t
    for p, g, m, v in zip(arrays, grads, ms, vs):
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)


def adam_step(params: NetworkParams, param_grads: Grads, learning_rate: float) -> NetworkParams:
    """One Adam descent step, applied in place. Returns ``params``."""
    flat = []
    for (dw, db), w, b in zip(param_grads, params.weights, params.biases):
        if dw.shape != w.shape or db.shape != b.shape:
            raise ShapeError("gradient shapes do not match parameters")
        flat.extend((dw, db))
    if not all(np.all(np.isfinite(g)) for g in flat):
        raise NumericError("non-finite gradient; Adam step aborted")
    params.adam_t += 1
    adam_update(params.arrays(), flat, params.adam_m, params.adam_v, params.adam_t, learning_rate)
    params.touch()
    return params


# ---------------------------------------------------------------------------
# serialization
#
# record := magic(8) | u32 version | u32 n_sizes | u32 sizes[n_sizes] | u64 adam_t
#           | f64 params[...] | f64 adam_m[...] | f64 adam_v[...]
# All integers and floats little-endian; arrays in W0, b0, W1, b1, ... order,
# weight matrices row-major with shape (out, in).


def write_network(params: NetworkParams, fh: BinaryIO) -> None:
    sizes = params.layer_sizes
    fh.write(NET_MAGIC)
    fh.write(struct.pack("<II", NET_FORMAT_VERSION, len(sizes)))
    fh.write(struct.pack(f"<{len(sizes)}I", *sizes))
    fh.write(struct.pack("<Q", params.adam_t))
    for group in (params.arrays(), params.adam_m, params.adam_v):
        for a in group:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def _read_exact(fh: BinaryIO, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise InvalidState("truncated network record")
    return data


def read_network(fh: BinaryIO) -> NetworkParams:
    if _read_exact(fh, 8) != NET_MAGIC:
        raise InvalidState("bad network record magic")
    version, n = struct.unpack("<II", _read_exact(fh, 8))
    if version != NET_FORMAT_VERSION:
        raise InvalidState(f"unsupported network format version {version}")
    sizes = list(struct.unpack(f"<{n}I", _read_exact(fh, 4 * n)))
    (adam_t,) = struct.unpack("<Q", _read_exact(fh, 8))
    shapes = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        shapes.extend(((fan_out, fan_in), (fan_out,)))

    def read_group():
        out = []
        for shape in shapes:
            count = int(np.prod(shape))
            buf = _read_exact(fh, 8 * count)
            out.append(np.frombuffer(buf, dtype="<f8").astype(np.float64).reshape(shape))
        return out

    params = read_group()
    m = read_group()
    v = read_group()
    return NetworkParams(sizes, params[0::2], params[1::2], m, v, adam_t)


def network_to_bytes(params: NetworkParams) -> bytes:
    buf = io.BytesIO()
    write_network(params, buf)
    return buf.getvalue()


def network_from_bytes(data: bytes) -> NetworkParams:
    return read_network(io.BytesIO(data))
