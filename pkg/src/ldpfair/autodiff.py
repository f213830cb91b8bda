"""Minimal dense reverse-mode automatic differentiation on float64 arrays.

Define-by-run: every op builds a fresh graph node holding its parents and
a closure that accumulates parent gradients.  Tensors wrap numpy arrays of
up to 3 axes; parameters persist across steps while the graph is rebuilt
each forward pass.  A graph is single-owner and single-threaded;
independent graphs may run in parallel.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionMismatchError, PreconditionError

CHECKPOINT_VERSION = 1


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad=False, parents=(), backward_fn=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents if self.requires_grad else ()
        self._backward_fn = backward_fn if self.requires_grad else None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={'set' if self.grad is not None else 'none'})"

    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __truediv__(self, other):
        return div(self, _as_tensor(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, _as_tensor(-1.0))


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, rng=None) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient down to the shape it was broadcast from."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64)
    else:
        t.grad = t.grad + g


# -- forward ops -------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data, parents=(a, b))

    def bw(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g, b.data.shape))

    out._backward_fn = bw if out.requires_grad else None
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data - b.data, parents=(a, b))

    def bw(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(-g, b.data.shape))

    out._backward_fn = bw if out.requires_grad else None
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data * b.data, parents=(a, b))

    def bw(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * a.data, b.data.shape))

    out._backward_fn = bw if out.requires_grad else None
    return out


def div(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data / b.data, parents=(a, b))

    def bw(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g / b.data, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    out._backward_fn = bw if out.requires_grad else None
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape[-1] != b.data.shape[0]:
        raise DimensionMismatchError(
            f"matmul: {a.data.shape} @ {b.data.shape}"
        )
    out = Tensor(a.data @ b.data, parents=(a, b))

    def bw(g):
        if a.requires_grad:
            _accum(a, g @ b.data.T)
        if b.requires_grad:
            _accum(b, a.data.T @ g)

    out._backward_fn = bw if out.requires_grad else None
    return out


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise PreconditionError(f"log of non-positive value (min {a.data.min():g})")
    out = Tensor(np.log(a.data), parents=(a,))

    def bw(g):
        _accum(a, g / a.data)

    out._backward_fn = bw if out.requires_grad else None
    return out


def exp(a: Tensor) -> Tensor:
    out = Tensor(np.exp(a.data), parents=(a,))

    def bw(g):
        _accum(a, g * out.data)

    out._backward_fn = bw if out.requires_grad else None
    return out


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0.0), parents=(a,))

    def bw(g):
        _accum(a, g * (a.data > 0))

    out._backward_fn = bw if out.requires_grad else None
    return out


def relu6(a: Tensor) -> Tensor:
    out = Tensor(np.clip(a.data, 0.0, 6.0), parents=(a,))

    def bw(g):
        _accum(a, g * ((a.data > 0) & (a.data < 6)))

    out._backward_fn = bw if out.requires_grad else None
    return out


def tanh(a: Tensor) -> Tensor:
    out = Tensor(np.tanh(a.data), parents=(a,))

    def bw(g):
        _accum(a, g * (1.0 - out.data * out.data))

    out._backward_fn = bw if out.requires_grad else None
    return out


def sigmoid(a: Tensor) -> Tensor:
    out = Tensor(1.0 / (1.0 + np.exp(-a.data)), parents=(a,))

    def bw(g):
        _accum(a, g * out.data * (1.0 - out.data))

    out._backward_fn = bw if out.requires_grad else None
    return out


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(p, parents=(a,))

    def bw(g):
        dot = (g * p).sum(axis=axis, keepdims=True)
        _accum(a, p * (g - dot))

    out._backward_fn = bw if out.requires_grad else None
    return out


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = Tensor(shifted - lse, parents=(a,))

    def bw(g):
        p = np.exp(out.data)
        _accum(a, g - p * g.sum(axis=axis, keepdims=True))

    out._backward_fn = bw if out.requires_grad else None
    return out


def mean(a: Tensor) -> Tensor:
    out = Tensor(a.data.mean(), parents=(a,))

    def bw(g):
        _accum(a, np.full_like(a.data, float(g) / a.data.size))

    out._backward_fn = bw if out.requires_grad else None
    return out


def tsum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims), parents=(a,))

    def bw(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.data.shape).copy())

    out._backward_fn = bw if out.requires_grad else None
    return out


def concat(parts: list[Tensor], axis: int = -1) -> Tensor:
    out = Tensor(np.concatenate([p.data for p in parts], axis=axis), parents=tuple(parts))
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                _accum(p, g[tuple(sl)])

    out._backward_fn = bw if out.requires_grad else None
    return out


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    out = Tensor(np.clip(a.data, lo, hi), parents=(a,))

    def bw(g):
        _accum(a, g * ((a.data >= lo) & (a.data <= hi)))

    out._backward_fn = bw if out.requires_grad else None
    return out


def stopgradient(a: Tensor) -> Tensor:
    """Pass values through, block all gradient flow."""
    return Tensor(a.data)


def square(a: Tensor) -> Tensor:
    out = Tensor(a.data * a.data, parents=(a,))

    def bw(g):
        _accum(a, 2.0 * g * a.data)

    out._backward_fn = bw if out.requires_grad else None
    return out


def reshape(a: Tensor, shape) -> Tensor:
    out = Tensor(a.data.reshape(shape), parents=(a,))

    def bw(g):
        _accum(a, g.reshape(a.data.shape))

    out._backward_fn = bw if out.requires_grad else None
    return out


def gather_rows(a: Tensor, indices: np.ndarray) -> Tensor:
    """Select rows of a matrix; the embedding-lookup primitive."""
    idx = np.asarray(indices, dtype=np.intp)
    out = Tensor(a.data[idx], parents=(a,))

    def bw(g):
        acc = np.zeros_like(a.data)
        np.add.at(acc, idx, g)
        _accum(a, acc)

    out._backward_fn = bw if out.requires_grad else None
    return out


def pick(a: Tensor, indices: np.ndarray) -> Tensor:
    """Per-row element selection a[i, indices[i]]; the NLL primitive."""
    idx = np.asarray(indices, dtype=np.intp)
    rows = np.arange(a.data.shape[0])
    out = Tensor(a.data[rows, idx], parents=(a,))

    def bw(g):
        acc = np.zeros_like(a.data)
        acc[rows, idx] = g
        _accum(a, acc)

    out._backward_fn = bw if out.requires_grad else None
    return out


# -- reverse pass ------------------------------------------------------------


def backward(loss: Tensor) -> None:
    """Populate .grad on every reachable tensor with requires_grad."""
    if loss.data.ndim != 0:
        raise PreconditionError(f"backward expects a scalar loss, got shape {loss.data.shape}")
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward_fn is not None and node.grad is not None:
            node._backward_fn(node.grad)


def zero_grad(params) -> None:
    for p in params:
        p.grad = None


# -- MLP building blocks -----------------------------------------------------

ACTIVATIONS = {
    "relu": relu,
    "relu6": relu6,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "softmax": softmax,
    "identity": lambda t: t,
}


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths (input first) and one activation per affine layer."""

    widths: tuple[int, ...]
    activations: tuple[str, ...]

    def __post_init__(self):
        if len(self.widths) < 2:
            raise PreconditionError("MlpSpec needs at least input and output widths")
        if len(self.activations) != len(self.widths) - 1:
            raise PreconditionError(
                f"{len(self.widths) - 1} layers need {len(self.widths) - 1} activations, "
                f"got {len(self.activations)}"
            )
        if any(w <= 0 for w in self.widths):
            raise PreconditionError("layer widths must be positive")
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise PreconditionError(f"unknown activation {a!r}")


class Mlp:
    """Fully-connected network with Glorot-uniform init and zero biases."""

    def __init__(self, spec: MlpSpec, rng: np.random.Generator):
        self.spec = spec
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        for fan_in, fan_out in zip(spec.widths[:-1], spec.widths[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(parameter(rng.uniform(-bound, bound, size=(fan_in, fan_out))))
            self.biases.append(parameter(np.zeros(fan_out)))

    def __call__(self, x: Tensor) -> Tensor:
        h = x
        for w, b, act in zip(self.weights, self.biases, self.spec.activations):
            h = ACTIVATIONS[act](add(matmul(h, w), b))
        return h

    def parameters(self) -> list[Tensor]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out


# -- Adam --------------------------------------------------------------------


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params: list[Tensor], state: AdamState, grads=None) -> None:
    """Standard Adam update in place; grads default to each param's .grad."""
    if grads is None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    if len(grads) != len(params) or any(g.shape != p.data.shape for g, p in zip(grads, params)):
        raise DimensionMismatchError("adam_step: gradient shapes do not match parameters")
    state.step += 1
    t = state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * g * g
        mhat = m / (1 - state.beta1**t)
        vhat = v / (1 - state.beta2**t)
        p.data -= state.lr * mhat / (np.sqrt(vhat) + state.eps)


# -- checkpointing -----------------------------------------------------------


def save_checkpoint(path: str | Path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    """Versioned checkpoint: JSON header plus named row-major weight arrays."""
    header = dict(meta)
    header["checkpoint_version"] = CHECKPOINT_VERSION
    np.savez(path, __meta__=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8), **arrays)


def load_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    with np.load(path) as f:
        meta = json.loads(bytes(f["__meta__"]).decode())
        if meta.get("checkpoint_version") != CHECKPOINT_VERSION:
            raise PreconditionError(
                f"unsupported checkpoint version {meta.get('checkpoint_version')!r}"
            )
        arrays = {k: f[k] for k in f.files if k != "__meta__"}
    return meta, arrays
