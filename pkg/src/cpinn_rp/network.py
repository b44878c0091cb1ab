"""Fully connected tanh networks: parameters, Xavier init, evaluation, checkpoints."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence

import numpy as np

from .autodiff import Var
from .exceptions import ConfigError, StructuralError

ROLES = ("NetU", "NetG", "NetU-RP")

# role -> (hidden_layers, hidden_width)
DEFAULT_ARCH = {"NetU": (3, 30), "NetG": (8, 20), "NetU-RP": (3, 30)}

MAGIC = b"CPNNPRM1"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class NetSpec:
    role: str = "NetU"
    hidden_layers: int = 3
    hidden_width: int = 30
    input_dim: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.role not in ROLES:
            raise ConfigError(f"unknown network role {self.role!r}; expected one of {ROLES}")
        if self.hidden_layers < 1 or self.hidden_width < 1:
            raise ConfigError("hidden_layers and hidden_width must be >= 1")
        if self.input_dim < 2:
            raise ConfigError("input_dim must be >= 2 (x and t come first)")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")

    @classmethod
    def default(cls, role, seed=0, input_dim=2):
        layers, width = DEFAULT_ARCH[role]
        return cls(role, layers, width, input_dim, seed)

    @property
    def layer_sizes(self):
        return [self.input_dim] + [self.hidden_width] * self.hidden_layers + [1]


@dataclass
class MlpParams:
    """Weights and biases of one MLP.

    ``weights[i]`` has shape ``(layer_sizes[i+1], layer_sizes[i])``.  Hidden
    layers use tanh, the output layer is linear.
    """

    layer_sizes: List[int]
    weights: list
    biases: list = field(default_factory=list)

    def __post_init__(self):
        self.layer_sizes = [int(s) for s in self.layer_sizes]
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise StructuralError(f"invalid layer sizes {self.layer_sizes}")
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise StructuralError("need exactly one weight matrix and bias per layer")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            rows, cols = self.layer_sizes[i + 1], self.layer_sizes[i]
            if W.shape != (rows, cols) or b.shape != (rows,):
                raise StructuralError(
                    f"layer {i}: expected W {(rows, cols)} and b {(rows,)}, got {W.shape} and {b.shape}"
                )

    @property
    def n_params(self):
        return sum(o * (i + 1) for i, o in zip(self.layer_sizes[:-1], self.layer_sizes[1:]))

    def flatten(self) -> np.ndarray:
        """Parameters as one vector: per layer, W row-major then b."""
        parts = []
        for W, b in zip(self.weights, self.biases):
            parts.append(np.asarray(W, dtype=np.float64).ravel())
            parts.append(np.asarray(b, dtype=np.float64).ravel())
        return np.concatenate(parts)

    def with_flat(self, theta) -> "MlpParams":
        return MlpParams.unflatten(self.layer_sizes, theta)

    @classmethod
    def unflatten(cls, layer_sizes: Sequence[int], theta) -> "MlpParams":
        theta = np.asarray(theta, dtype=np.float64)
        sizes = [int(s) for s in layer_sizes]
        expected = sum(o * (i + 1) for i, o in zip(sizes[:-1], sizes[1:]))
        if theta.shape != (expected,):
            raise StructuralError(f"expected {expected} parameters, got {theta.shape}")
        weights, biases, pos = [], [], 0
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            weights.append(theta[pos : pos + fan_in * fan_out].reshape(fan_out, fan_in).copy())
            pos += fan_in * fan_out
            biases.append(theta[pos : pos + fan_out].copy())
            pos += fan_out
        return cls(sizes, weights, biases)

    def traced(self) -> "MlpParams":
        """Copy whose weights and biases are fresh tape leaves."""
        out = object.__new__(MlpParams)
        out.layer_sizes = list(self.layer_sizes)
        out.weights = [Var(W) for W in self.weights]
        out.biases = [Var(b) for b in self.biases]
        return out

    def copy(self) -> "MlpParams":
        return MlpParams(list(self.layer_sizes), [W.copy() for W in self.weights], [b.copy() for b in self.biases])

    def equals(self, other) -> bool:
        return self.layer_sizes == other.layer_sizes and np.array_equal(self.flatten(), other.flatten())

    def __call__(self, inputs):
        return forward(self, inputs)


def init_xavier(spec: NetSpec) -> MlpParams:
    """Xavier-uniform weights, zero biases, reproducible from ``spec.seed``."""
    rng = np.random.default_rng(int(spec.seed))
    sizes = spec.layer_sizes
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(sizes, weights, biases)


def forward(params: MlpParams, inputs) -> np.ndarray:
    """Plain MLP evaluation.

    ``inputs`` is one input vector (returns a float) or an ``(n, d)`` batch
    (returns an ``(n,)`` array).
    """
    a = np.asarray(inputs, dtype=np.float64)
    single = a.ndim == 1
    a = np.atleast_2d(a)
    if a.shape[1] != params.layer_sizes[0]:
        raise StructuralError(f"network expects {params.layer_sizes[0]} inputs, got {a.shape[1]}")
    last = len(params.weights) - 1
    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        a = a @ W.T + b
        if i < last:
            a = np.tanh(a)
    out = a[:, 0]
    return float(out[0]) if single else out


def save(params: MlpParams, path) -> None:
    """Write a self-describing little-endian checkpoint."""
    sizes = params.layer_sizes
    header = MAGIC + struct.pack("<II", FORMAT_VERSION, len(sizes)) + struct.pack(f"<{len(sizes)}I", *sizes)
    payload = params.flatten().astype("<f8").tobytes()
    Path(path).write_bytes(header + payload)


def load(path) -> MlpParams:
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) + 8 or not data.startswith(MAGIC):
        raise StructuralError(f"{path}: not a network checkpoint")
    pos = len(MAGIC)
    version, n_sizes = struct.unpack_from("<II", data, pos)
    pos += 8
    if version != FORMAT_VERSION:
        raise StructuralError(f"{path}: unsupported checkpoint version {version}")
    if n_sizes < 2 or len(data) < pos + 4 * n_sizes:
        raise StructuralError(f"{path}: truncated header")
    sizes = list(struct.unpack_from(f"<{n_sizes}I", data, pos))
    pos += 4 * n_sizes
    if min(sizes) < 1:
        raise StructuralError(f"{path}: invalid layer sizes {sizes}")
    n = sum(o * (i + 1) for i, o in zip(sizes[:-1], sizes[1:]))
    body = data[pos:]
    if len(body) != 8 * n:
        raise StructuralError(
            f"{path}: header declares {n} parameters but payload holds {len(body) / 8:g}"
        )
    theta = np.frombuffer(body, dtype="<f8").astype(np.float64)
    return MlpParams.unflatten(sizes, theta)
