"""Dense Q-network with hand-written backpropagation and Adam.

Weights are stored as ``(fan_in, fan_out)`` matrices so a batch ``X`` of
shape ``(n, fan_in)`` maps to ``X @ W + b``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, TextIO

import numpy as np

from . import kernels

HIDDEN = (64, 32, 32)
MAGIC = "baasmec-densenet"
FORMAT_VERSION = 1


class TrainingDiverged(FloatingPointError):
    pass


class DenseNet:
    """ReLU multi-layer perceptron with a linear or logistic output layer."""

    def __init__(self, sizes: Sequence[int], output: str = "linear",
                 rng: Optional[np.random.Generator] = None, seed: Optional[int] = None):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if output not in ("linear", "sigmoid"):
            raise ValueError(f"unknown output activation {output!r}")
        self.sizes = tuple(int(s) for s in sizes)
        self.output = output
        rng = rng if rng is not None else np.random.default_rng(seed)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            self.weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    @classmethod
    def q_network(cls, input_dim: int, n_actions: int, **kw) -> "DenseNet":
        return cls((input_dim, *HIDDEN, n_actions), **kw)

    # -- evaluation ---------------------------------------------------------

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.sizes[0]:
            raise ValueError(f"input width {x.shape[-1]} != {self.sizes[0]}")
        return x

    def forward(self, x) -> np.ndarray:
        x = self._check(x)
        if x.ndim == 1:
            return kernels.mlp_forward_vec(x, self.weights, self.biases, self.output == "sigmoid")
        out, _ = self.forward_train(x)
        return out

    def forward_train(self, X) -> tuple[np.ndarray, list]:
        """Batched forward pass that keeps what ``backward`` needs."""
        h = self._check(X)
        if h.ndim == 1:
            h = h[None, :]
        cache = []
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W + b
            cache.append((h, z))
            h = np.maximum(z, 0.0) if i < last else z
        if self.output == "sigmoid":
            h = 1.0 / (1.0 + np.exp(-h))
        cache.append(h)
        return h, cache

    def backward(self, cache: list, dout: np.ndarray) -> tuple[list, list]:
        """Gradients of a scalar loss given dL/d(output) for the cached batch."""
        delta = np.asarray(dout, dtype=np.float64)
        if delta.ndim == 1:
            delta = delta[None, :]
        if self.output == "sigmoid":
            y = cache[-1]
            delta = delta * y * (1.0 - y)
        gW = [None] * len(self.weights)
        gb = [None] * len(self.weights)
        for i in range(len(self.weights) - 1, -1, -1):
            h, _ = cache[i]
            gW[i] = h.T @ delta
            gb[i] = delta.sum(axis=0)
            if i > 0:
                _, z_prev = cache[i - 1]
                delta = (delta @ self.weights[i].T) * (z_prev > 0)
        return gW, gb

    # -- parameter plumbing -------------------------------------------------

    def params(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def copy(self) -> "DenseNet":
        twin = DenseNet.__new__(DenseNet)
        twin.sizes = self.sizes
        twin.output = self.output
        twin.weights = [W.copy() for W in self.weights]
        twin.biases = [b.copy() for b in self.biases]
        return twin

    def load_state(self, other: "DenseNet") -> None:
        if other.sizes != self.sizes:
            raise ValueError("layer sizes differ")
        for dst, src in zip(self.params(), other.params()):
            dst[...] = src

    def same_params(self, other: "DenseNet") -> bool:
        return self.sizes == other.sizes and all(
            a.tobytes() == b.tobytes() for a, b in zip(self.params(), other.params()))

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params())


def flatten_grads(gW: list, gb: list) -> list[np.ndarray]:
    out = []
    for a, b in zip(gW, gb):
        out += [a, b]
    return out


@dataclass
class AdamState:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(net: DenseNet, grads: list[np.ndarray], state: AdamState) -> None:
    """Bias-corrected Adam update of ``net`` in place."""
    params = net.params()
    if len(grads) != len(params):
        raise ValueError("gradient list does not match parameters")
    for p, g in zip(params, grads):
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged("non-finite gradient")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def mse_loss(predicted, targets) -> tuple[float, np.ndarray]:
    """Mean squared residual and its gradient w.r.t. ``predicted``."""
    q = np.asarray(predicted, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if q.shape != y.shape:
        raise ValueError("predictions and targets differ in length")
    if q.size == 0:
        raise ValueError("empty batch")
    diff = q - y
    return float(np.mean(diff * diff)), 2.0 * diff / q.size


# -- checkpoint format ------------------------------------------------------
#
#   baasmec-densenet 1
#   output <linear|sigmoid>
#   sizes <n0> <n1> ... <nk>
#   meta <key> <value>            (zero or more)
#   W <layer> <rows> <cols>
#   <rows*cols floats, row-major, one line>
#   b <layer> <n>
#   <n floats, one line>
#   end


def _floats(arr: np.ndarray) -> str:
    return " ".join(repr(float(x)) for x in arr.ravel())


def save_params(net: DenseNet, fh: TextIO, meta: Optional[dict] = None) -> None:
    fh.write(f"{MAGIC} {FORMAT_VERSION}\n")
    fh.write(f"output {net.output}\n")
    fh.write("sizes " + " ".join(str(s) for s in net.sizes) + "\n")
    for k, v in (meta or {}).items():
        fh.write(f"meta {k} {v!r}\n" if isinstance(v, float) else f"meta {k} {v}\n")
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        fh.write(f"W {i} {W.shape[0]} {W.shape[1]}\n{_floats(W)}\n")
        fh.write(f"b {i} {b.shape[0]}\n{_floats(b)}\n")
    fh.write("end\n")


def load_params(fh: TextIO) -> tuple[DenseNet, dict]:
    """Read one network record; leaves ``fh`` positioned after its ``end`` line."""
    def line() -> str:
        text = fh.readline()
        if not text:
            raise ValueError("truncated network checkpoint")
        return text.rstrip("\n")

    if line().split() != [MAGIC, str(FORMAT_VERSION)]:
        raise ValueError("not a baasmec network checkpoint")
    output = line().split()[1]
    sizes = [int(s) for s in line().split()[1:]]
    net = DenseNet(sizes, output=output, seed=0)
    meta = {}
    while True:
        tag, *rest = line().split(" ", 1)
        if tag == "end":
            break
        if tag == "meta":
            k, v = rest[0].split(" ", 1)
            meta[k] = v
        elif tag in ("W", "b"):
            dims = [int(x) for x in rest[0].split()]
            vals = np.array([float(x) for x in line().split()], dtype=np.float64)
            layer, shape = dims[0], tuple(dims[1:])
            target = net.weights[layer] if tag == "W" else net.biases[layer]
            if target.shape != shape or vals.size != target.size:
                raise ValueError(f"shape mismatch in {tag} {layer}")
            target[...] = vals.reshape(shape)
        else:
            raise ValueError(f"unexpected record {tag!r}")
    return net, meta
