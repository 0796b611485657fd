"""Dense float64 tensors with reverse-mode differentiation.

The graph is built eagerly per forward pass and discarded after
``backward``; arrays are plain numpy.  This is sized for dense stacks at
desk scale: no convolutions, no views, no GPU.  Also hosts the Adam
update, a finite-difference gradient audit, and the binary checkpoint
format used for model snapshots.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, NumericError, ParseError

# tanh and sigmoid round to exactly +-1.0 / 0.0 / 1.0 under saturation;
# outputs are nudged to stay strictly inside the open interval so latent
# bounds hold for any input.
_ONE_IN = np.nextafter(1.0, 0.0)
_ZERO_IN = np.nextafter(0.0, 1.0)


class Tensor:
    """n-d float64 array with an optional accumulated-gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- graph traversal ------------------------------------------------

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's .grad."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
        if not self.requires_grad:
            raise ValueError("output does not depend on any differentiable tensor")
        order = _topo_order(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                node.grad = None  # interior buffers are not part of the API

    # -- operator sugar -------------------------------------------------

    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None):
        return tensor_sum(self, axis)

    def mean(self, axis=None):
        return tensor_mean(self, axis)


def _lift(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _topo_order(root: Tensor) -> list[Tensor]:
    """Iterative post-order: parents appear before dependents."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _make(data, parents, backward) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum g down to the given operand shape after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_check(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError:
        raise DimensionError(f"{op}: cannot broadcast {a.data.shape} with {b.data.shape}") from None


# -- elementwise and linear operations ----------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_check(a, b, "add")

    def backward(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _make(a.data + b.data, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_check(a, b, "sub")

    def backward(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))

    return _make(a.data - b.data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_check(a, b, "mul")

    def backward(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(a.data * b.data, (a, b), backward)


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)

    def backward(g):
        _accum(x, g * c)

    return _make(x.data * c, (x,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(f"matmul: {a.data.shape} incompatible with {b.data.shape}")

    def backward(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _make(a.data @ b.data, (a, b), backward)


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b for a batch of row vectors; b is a 1 x units bias row."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
        raise DimensionError(f"affine: input {x.data.shape} incompatible with weights {w.data.shape}")
    if b.data.shape != (1, w.data.shape[1]):
        raise DimensionError(f"affine: bias {b.data.shape} must be (1, {w.data.shape[1]})")

    def backward(g):
        _accum(x, g @ w.data.T)
        _accum(w, x.data.T @ g)
        _accum(b, g.sum(axis=0, keepdims=True))

    return _make(x.data @ w.data + b.data, (x, w, b), backward)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    np.clip(y, -_ONE_IN, _ONE_IN, out=y)

    def backward(g):
        _accum(x, g * (1.0 - y * y))

    return _make(y, (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    xd = x.data
    y = np.empty_like(xd)
    pos = xd >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
    e = np.exp(xd[~pos])
    y[~pos] = e / (1.0 + e)
    np.clip(y, _ZERO_IN, _ONE_IN, out=y)

    def backward(g):
        _accum(x, g * y * (1.0 - y))

    return _make(y, (x,), backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def backward(g):
        _accum(x, g * mask)

    return _make(np.where(mask, x.data, 0.0), (x,), backward)


def square(x: Tensor) -> Tensor:
    def backward(g):
        _accum(x, g * (2.0 * x.data))

    return _make(x.data * x.data, (x,), backward)


def tensor_sum(x: Tensor, axis=None) -> Tensor:
    out = np.asarray(x.data.sum(axis=axis))

    def backward(g):
        if axis is None:
            _accum(x, np.broadcast_to(g, x.data.shape).copy())
        else:
            _accum(x, np.broadcast_to(np.expand_dims(g, axis), x.data.shape).copy())

    return _make(out, (x,), backward)


def tensor_mean(x: Tensor, axis=None) -> Tensor:
    count = x.data.size if axis is None else x.data.shape[axis]
    factor = 1.0 / count
    out = np.asarray(x.data.mean(axis=axis))

    def backward(g):
        if axis is None:
            _accum(x, np.broadcast_to(g * factor, x.data.shape).copy())
        else:
            _accum(x, np.broadcast_to(np.expand_dims(g * factor, axis), x.data.shape).copy())

    return _make(out, (x,), backward)


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy of integer labels under softmax(logits)."""
    z = logits.data
    labels = np.asarray(labels, dtype=np.int64)
    if z.ndim != 2 or labels.shape != (z.shape[0],):
        raise DimensionError(f"softmax_cross_entropy: logits {z.shape} vs labels {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= z.shape[1]):
        raise ValueError("softmax_cross_entropy: label outside [0, n_classes)")
    zmax = z.max(axis=1, keepdims=True)
    ez = np.exp(z - zmax)
    log_norm = np.log(ez.sum(axis=1, keepdims=True)) + zmax
    n = z.shape[0]
    rows = np.arange(n)
    loss = float((log_norm[:, 0] - z[rows, labels]).mean())

    def backward(g):
        d = ez / ez.sum(axis=1, keepdims=True)
        d[rows, labels] -= 1.0
        _accum(logits, (float(g) / n) * d)

    return _make(np.asarray(loss), (logits,), backward)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax of a plain array; rows sum to 1."""
    z = np.asarray(logits, dtype=np.float64)
    zmax = z.max(axis=1, keepdims=True)
    ez = np.exp(z - zmax)
    return ez / ez.sum(axis=1, keepdims=True)


def sq_euclidean(a, b) -> float:
    """Squared Euclidean distance between two vectors of equal length."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"sq_euclidean: {a.shape} vs {b.shape}")
    d = (a - b).ravel()
    return float(np.dot(d, d))


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def assert_finite(array: np.ndarray, context: str) -> None:
    if not np.isfinite(array).all():
        raise NumericError(f"non-finite values in {context}")


# -- Adam ----------------------------------------------------------------


@dataclass
class AdamState:
    """Moment buffers and step counter for one parameter tensor."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_param(cls, param: Tensor, learning_rate: float = 1e-3,
                  beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8) -> "AdamState":
        return cls(np.zeros_like(param.data), np.zeros_like(param.data), 0,
                   learning_rate, beta1, beta2, epsilon)


def adam_step(param: Tensor, state: AdamState) -> None:
    """Bias-corrected Adam update in place; clears the grad buffer."""
    if param.grad is None:
        raise ValueError("adam_step: parameter has no accumulated gradient")
    if state.first_moment.shape != param.data.shape:
        raise DimensionError(
            f"adam_step: state shape {state.first_moment.shape} vs param {param.data.shape}")
    g = param.grad
    state.step_count += 1
    state.first_moment *= state.beta1
    state.first_moment += (1.0 - state.beta1) * g
    state.second_moment *= state.beta2
    state.second_moment += (1.0 - state.beta2) * (g * g)
    m_hat = state.first_moment / (1.0 - state.beta1 ** state.step_count)
    v_hat = state.second_moment / (1.0 - state.beta2 ** state.step_count)
    param.data -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    param.grad = None


class Adam:
    """Adam over a parameter list; parameters without grads are skipped."""

    def __init__(self, params: list[Tensor], learning_rate: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        self.params = [p for p in params if p.requires_grad]
        self.states = [AdamState.for_param(p, learning_rate, beta1, beta2, epsilon)
                       for p in self.params]

    def step(self) -> None:
        for param, state in zip(self.params, self.states):
            if param.grad is not None:
                adam_step(param, state)

    def zero_grad(self) -> None:
        for param in self.params:
            param.grad = None


# -- gradient audit -------------------------------------------------------


def finite_diff_check(f, params: list[Tensor], h: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    f is a nullary callable returning a scalar Tensor built from params.
    Relative error per coordinate is |analytic - numeric| / max(1, |numeric|).
    """
    if not 1e-6 <= h <= 1e-4:
        raise ValueError(f"finite_diff_check: step {h} outside [1e-6, 1e-4]")
    for p in params:
        p.grad = None
    out = f()
    if not np.isfinite(out.data).all():
        raise NumericError("finite_diff_check: objective is not finite")
    out.backward()
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params]
    for p in params:
        p.grad = None

    worst = 0.0
    for p, grads in zip(params, analytic):
        flat = p.data.reshape(-1)
        gflat = grads.reshape(-1)
        for i in range(flat.size):
            kept = flat[i]
            flat[i] = kept + h
            f_plus = float(f().data)
            flat[i] = kept - h
            f_minus = float(f().data)
            flat[i] = kept
            numeric = (f_plus - f_minus) / (2.0 * h)
            rel = abs(gflat[i] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, rel)
    return worst


# -- binary checkpoint format ---------------------------------------------

_CKPT_MAGIC = b"MALN1"


def save_tensors(path, named: dict[str, np.ndarray]) -> None:
    """Write named float64 arrays: magic, count, then per-tensor records.

    Record layout (little-endian): u16 name length, UTF-8 name, u8 rank,
    u32 per dimension, raw float64 values row-major.  Entries are sorted
    by name so identical parameter sets serialize identically.
    """
    blob = bytearray(_CKPT_MAGIC)
    items = sorted(named.items())
    blob += struct.pack("<I", len(items))
    for name, arr in items:
        a = np.asarray(arr, dtype="<f8")
        if a.ndim and not a.flags["C_CONTIGUOUS"]:
            a = np.ascontiguousarray(a)
        encoded = name.encode("utf-8")
        blob += struct.pack("<H", len(encoded))
        blob += encoded
        blob += struct.pack("<B", a.ndim)
        blob += struct.pack(f"<{a.ndim}I", *a.shape)
        blob += a.tobytes()
    Path(path).write_bytes(bytes(blob))


def load_tensors(path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    offset = 0

    def take(n: int, what: str) -> bytes:
        nonlocal offset
        if offset + n > len(data):
            raise ParseError(f"{path}: truncated while reading {what} at byte {offset}")
        chunk = data[offset:offset + n]
        offset += n
        return chunk

    if take(5, "magic") != _CKPT_MAGIC:
        raise ParseError(f"{path}: bad magic at byte 0, expected {_CKPT_MAGIC!r}")
    (count,) = struct.unpack("<I", take(4, "tensor count"))
    out: dict[str, np.ndarray] = {}
    for i in range(count):
        (name_len,) = struct.unpack("<H", take(2, f"name length of tensor {i}"))
        name = take(name_len, f"name of tensor {i}").decode("utf-8")
        (rank,) = struct.unpack("<B", take(1, f"rank of '{name}'"))
        dims = struct.unpack(f"<{rank}I", take(4 * rank, f"dims of '{name}'"))
        n_values = int(np.prod(dims, dtype=np.int64)) if rank else 1
        raw = take(8 * n_values, f"values of '{name}'")
        out[name] = np.frombuffer(raw, dtype="<f8").reshape(dims).astype(np.float64)
    if offset != len(data):
        raise ParseError(f"{path}: {len(data) - offset} trailing bytes at byte {offset}")
    return out
