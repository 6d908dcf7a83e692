"""Minimal reverse-mode autodiff over dense numpy tensors.

Every operation records its parents and a vector-Jacobian closure on the
output tensor; `grads` walks the recorded graph in reverse topological
order.  The closures are themselves written with tensor ops, so running
them with `create_graph=True` extends the graph and a second backward
pass yields exact second-order derivatives (no Hessian is ever formed).
64-bit floats are the default; 32-bit is an opt-in for speed.
"""

from __future__ import annotations

import struct
from contextlib import contextmanager

import numpy as np

_DEFAULT_DTYPE = np.float64
_GRAD_ENABLED = True
_DEBUG_CHECKS = False


class ShapeError(ValueError):
    """Operands with incompatible shapes; names the op and the shapes."""


def set_default_dtype(dtype) -> None:
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float64), np.dtype(np.float32)):
        raise ValueError(f"supported dtypes are float64 and float32, got {dtype}")
    _DEFAULT_DTYPE = dtype.type


def get_default_dtype():
    return _DEFAULT_DTYPE


def set_debug_checks(enabled: bool) -> None:
    """When on, every forward op asserts its output is finite."""
    global _DEBUG_CHECKS
    _DEBUG_CHECKS = bool(enabled)


@contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


@contextmanager
def _grad_mode(enabled: bool):
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = enabled
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "op", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=_DEFAULT_DTYPE)
        self.requires_grad = requires_grad
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._vjp = None

    @classmethod
    def _from_op(cls, data, parents, vjp, op: str) -> "Tensor":
        out = cls(data)
        out.op = op
        if _DEBUG_CHECKS and not np.isfinite(out.data).all():
            raise FloatingPointError(f"non-finite values out of op {op!r}")
        if _GRAD_ENABLED and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._vjp = vjp
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    # --- elementwise arithmetic (numpy broadcasting rules) ---

    def __add__(self, other):
        a, b = self, _as_tensor(other)
        try:
            data = a.data + b.data
        except ValueError:
            raise ShapeError(f"add: {a.shape} + {b.shape}") from None

        def vjp(g):
            return (
                _unbroadcast(g, a.shape) if a.requires_grad else None,
                _unbroadcast(g, b.shape) if b.requires_grad else None,
            )

        return Tensor._from_op(data, (a, b), vjp, "add")

    __radd__ = __add__

    def __mul__(self, other):
        a, b = self, _as_tensor(other)
        try:
            data = a.data * b.data
        except ValueError:
            raise ShapeError(f"mul: {a.shape} * {b.shape}") from None

        def vjp(g):
            return (
                _unbroadcast(g * b, a.shape) if a.requires_grad else None,
                _unbroadcast(g * a, b.shape) if b.requires_grad else None,
            )

        return Tensor._from_op(data, (a, b), vjp, "mul")

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-_as_tensor(other))

    def __rsub__(self, other):
        return _as_tensor(other) + (-self)

    def __truediv__(self, other):
        return self * _as_tensor(other).pow(-1.0)

    def __rtruediv__(self, other):
        return _as_tensor(other) * self.pow(-1.0)

    def pow(self, p: float):
        x = self
        data = x.data**p

        def vjp(g):
            return (g * (p * x.pow(p - 1.0)),)

        return Tensor._from_op(data, (x,), vjp, f"pow{p}")

    # --- nonlinearities ---

    def relu(self):
        x = self
        mask = Tensor((x.data > 0).astype(x.data.dtype))

        def vjp(g):
            return (g * mask,)

        return Tensor._from_op(x.data * mask.data, (x,), vjp, "relu")

    def sigmoid(self):
        x = self
        out = Tensor._from_op(
            1.0 / (1.0 + np.exp(-x.data)), (x,), None, "sigmoid"
        )

        def vjp(g):
            return (g * out * (1.0 - out),)

        out._vjp = vjp if out._parents else None
        return out

    def tanh(self):
        x = self
        out = Tensor._from_op(np.tanh(x.data), (x,), None, "tanh")

        def vjp(g):
            return (g * (1.0 - out * out),)

        out._vjp = vjp if out._parents else None
        return out

    def exp(self):
        x = self
        out = Tensor._from_op(np.exp(x.data), (x,), None, "exp")

        def vjp(g):
            return (g * out,)

        out._vjp = vjp if out._parents else None
        return out

    def log(self):
        x = self

        def vjp(g):
            return (g * x.pow(-1.0),)

        return Tensor._from_op(np.log(x.data), (x,), vjp, "log")

    # --- shape manipulation ---

    def reshape(self, *shape):
        x = self
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = x.shape

        def vjp(g):
            return (g.reshape(old),)

        return Tensor._from_op(x.data.reshape(shape), (x,), vjp, "reshape")

    def transpose(self):
        x = self
        if x.ndim != 2:
            raise ShapeError(f"transpose: expected 2-D tensor, got {x.shape}")

        def vjp(g):
            return (g.transpose(),)

        return Tensor._from_op(x.data.T, (x,), vjp, "transpose")

    @property
    def T(self):
        return self.transpose()

    def take(self, indices, axis: int = 0):
        """Gather slices along an axis (repeats allowed)."""
        x = self
        idx = np.asarray(indices, dtype=np.intp)
        shape = x.shape

        def vjp(g):
            return (put(g, idx, shape, axis),)

        return Tensor._from_op(np.take(x.data, idx, axis=axis), (x,), vjp, "take")

    # --- reductions ---

    def sum(self, axis=None, keepdims: bool = False):
        x = self
        shape = x.shape

        def vjp(g):
            if axis is None:
                full = g.reshape((1,) * len(shape))
            elif keepdims:
                full = g
            else:
                axes = axis if isinstance(axis, tuple) else (axis,)
                axes = tuple(a % len(shape) for a in axes)
                kd = tuple(1 if i in axes else s for i, s in enumerate(shape))
                full = g.reshape(kd)
            return (full + Tensor(np.zeros(shape, dtype=x.data.dtype)),)

        return Tensor._from_op(
            x.data.sum(axis=axis, keepdims=keepdims), (x,), vjp, "sum"
        )

    def mean(self, axis=None, keepdims: bool = False):
        if axis is None:
            n = self.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            n = int(np.prod([self.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # --- linear algebra ---

    def matmul(self, other):
        a, b = self, _as_tensor(other)
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul: {a.shape} @ {b.shape}")

        def vjp(g):
            return (
                g.matmul(b.transpose()) if a.requires_grad else None,
                a.transpose().matmul(g) if b.requires_grad else None,
            )

        return Tensor._from_op(a.data @ b.data, (a, b), vjp, "matmul")

    __matmul__ = matmul


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: Tensor, shape) -> Tensor:
    """Sum a broadcast gradient back down to the operand's shape."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def put(g: Tensor, indices, shape, axis: int = 0) -> Tensor:
    """Scatter-add slices of g into a zero tensor of `shape` (dual of take)."""
    idx = np.asarray(indices, dtype=np.intp)

    def vjp(gg):
        return (gg.take(idx, axis=axis),)

    out = np.zeros(shape, dtype=g.data.dtype)
    np.add.at(out, (slice(None),) * (axis % len(shape)) + (idx,), g.data)
    return Tensor._from_op(out, (g,), vjp, "put")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(
            f"concat: {[t.shape for t in tensors]} along axis {axis}"
        ) from None
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        return tuple(
            g.take(np.arange(offsets[i], offsets[i + 1]), axis=axis)
            if t.requires_grad
            else None
            for i, t in enumerate(tensors)
        )

    return Tensor._from_op(data, tuple(tensors), vjp, "concat")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    m = Tensor(x.data.max(axis=axis, keepdims=True))
    z = (x - m).exp()
    return z * z.sum(axis=axis, keepdims=True).pow(-1.0)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    m = Tensor(x.data.max(axis=axis, keepdims=True))
    y = x - m
    return y - y.exp().sum(axis=axis, keepdims=True).log()


def conv1d_windows(length: int, kernel_width: int, n_sequences: int = 1) -> np.ndarray:
    """Row indices of all valid sliding windows over stacked sequences.

    For n_sequences sequences of `length` rows stacked along axis 0,
    returns indices of shape ((length - kernel_width + 1) * n_sequences
    * kernel_width,); windows never cross sequence boundaries.
    """
    if length < kernel_width:
        raise ShapeError(
            f"conv1d: input length {length} shorter than kernel width {kernel_width}"
        )
    t_out = length - kernel_width + 1
    base = np.arange(t_out)[:, None] + np.arange(kernel_width)[None, :]
    seq = np.arange(n_sequences)[:, None, None] * length
    return (seq + base[None, :, :]).reshape(-1)


def conv1d(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Valid-padding 1-D convolution (sliding dot product, no kernel flip).

    x: (T, C_in); w: (K, C_in, C_out); b: (C_out,).  Output is
    (T - K + 1, C_out).
    """
    if x.ndim != 2 or w.ndim != 3 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv1d: input {x.shape} with kernel {w.shape}")
    k, c_in, c_out = w.shape
    idx = conv1d_windows(x.shape[0], k)
    windows = x.take(idx, axis=0).reshape(x.shape[0] - k + 1, k * c_in)
    out = windows @ w.reshape(k * c_in, c_out)
    if b is not None:
        out = out + b
    return out


def grads(loss: Tensor, wrt, create_graph: bool = False) -> list[Tensor]:
    """Gradients of a scalar loss with respect to each tensor in `wrt`.

    Accumulation follows the reverse of the recorded topological order,
    so identical graphs give bit-identical gradients.  Tensors the loss
    does not depend on receive exact zeros.
    """
    if loss.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.shape}")
    wrt = list(wrt)

    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited or not node.requires_grad:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            stack.append((parent, False))

    grad_map: dict[int, Tensor] = {id(loss): Tensor(np.ones_like(loss.data))}
    with _grad_mode(create_graph):
        for node in reversed(topo):
            g = grad_map.get(id(node))
            if g is None or node._vjp is None:
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                held = grad_map.get(id(parent))
                grad_map[id(parent)] = pg if held is None else held + pg
    return [
        grad_map.get(id(w), Tensor(np.zeros_like(w.data))) for w in wrt
    ]


class ParamSet:
    """Named parameter tensors with a fixed, deterministic order."""

    def __init__(self, tensors: dict[str, Tensor]):
        self._tensors = dict(tensors)
        if len(self._tensors) != len(tensors):
            raise ValueError("duplicate parameter names")

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self):
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self) -> list[str]:
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def values(self):
        return self._tensors.values()

    def replace(self, updates: dict[str, Tensor]) -> "ParamSet":
        unknown = set(updates) - set(self._tensors)
        if unknown:
            raise KeyError(f"unknown parameter names: {sorted(unknown)}")
        merged = dict(self._tensors)
        merged.update(updates)
        return ParamSet(merged)

    def detached(self) -> "ParamSet":
        out = {}
        for name, t in self.items():
            leaf = Tensor(t.data.copy(), requires_grad=t.requires_grad)
            out[name] = leaf
        return ParamSet(out)

    def flatten(self) -> np.ndarray:
        return np.concatenate([t.data.reshape(-1) for t in self.values()])

    def unflatten(self, vec: np.ndarray) -> "ParamSet":
        vec = np.asarray(vec)
        expected = sum(t.size for t in self.values())
        if vec.shape != (expected,):
            raise ValueError(f"expected vector of length {expected}, got {vec.shape}")
        out, offset = {}, 0
        for name, t in self.items():
            chunk = vec[offset : offset + t.size].reshape(t.shape)
            out[name] = Tensor(chunk.copy(), requires_grad=t.requires_grad)
            offset += t.size
        return ParamSet(out)


def backward(loss: Tensor, params: ParamSet, create_graph: bool = False) -> ParamSet:
    """Gradient of a scalar loss for every named parameter."""
    gs = grads(loss, list(params.values()), create_graph=create_graph)
    return ParamSet({name: g for name, g in zip(params, gs)})


def grad_through_update(
    params: ParamSet,
    inner_grads: ParamSet,
    alpha: float,
    first_order: bool = False,
) -> ParamSet:
    """One recorded gradient step: theta' = theta - alpha * grad.

    The update is itself made of graph nodes, so a later backward pass
    differentiates through the inner gradients (second order) unless
    `first_order` detaches them.
    """
    if alpha < 0:
        raise ValueError(f"step size must be non-negative, got {alpha}")
    updated = {}
    for name, p in params.items():
        g = inner_grads[name]
        if first_order:
            g = g.detach()
        updated[name] = p + (-alpha) * g
    return ParamSet(updated)


def finite_diff_check(loss_fn, params: ParamSet, eps: float = 1e-3) -> float:
    """Max relative error of autodiff gradients vs central differences.

    loss_fn must be a deterministic map from the ParamSet to a scalar
    Tensor.  The relative error per coordinate is
    |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|).
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    loss = loss_fn(params)
    ad = grads(loss, list(params.values()))
    worst = 0.0
    with no_grad():
        for t, g in zip(params.values(), ad):
            g_flat = g.data.reshape(-1)
            for i in range(t.data.size):
                orig = t.data.flat[i]
                t.data.flat[i] = orig + eps
                f_plus = float(loss_fn(params).data)
                t.data.flat[i] = orig - eps
                f_minus = float(loss_fn(params).data)
                t.data.flat[i] = orig
                g_fd = (f_plus - f_minus) / (2.0 * eps)
                denom = max(1e-8, abs(g_flat[i]) + abs(g_fd))
                worst = max(worst, abs(g_flat[i] - g_fd) / denom)
    return worst


_CHECKPOINT_MAGIC = b"FMCK"
_CHECKPOINT_VERSION = 1
_DTYPE_CODES = {np.dtype(np.float64): 0, np.dtype(np.float32): 1}
_CODE_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<f4")}


def checkpoint_bytes(params: ParamSet) -> bytes:
    """Self-describing binary container: header, then per-tensor entries
    of (name, shape, dtype, little-endian raw values)."""
    chunks = [_CHECKPOINT_MAGIC, struct.pack("<II", _CHECKPOINT_VERSION, len(params))]
    for name, t in params.items():
        encoded = name.encode("utf-8")
        code = _DTYPE_CODES[t.data.dtype]
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<BB", code, t.data.ndim))
        chunks.append(struct.pack(f"<{t.data.ndim}I", *t.data.shape))
        chunks.append(np.ascontiguousarray(t.data, dtype=_CODE_DTYPES[code]).tobytes())
    return b"".join(chunks)


def save_checkpoint(path, params: ParamSet) -> None:
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(params))


def load_checkpoint(path) -> ParamSet:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a parameter checkpoint")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != _CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    offset = 12
    out = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        name = blob[offset : offset + name_len].decode("utf-8")
        offset += name_len
        code, ndim = struct.unpack_from("<BB", blob, offset)
        offset += 2
        shape = struct.unpack_from(f"<{ndim}I", blob, offset)
        offset += 4 * ndim
        dtype = _CODE_DTYPES[code]
        nbytes = int(np.prod(shape)) * dtype.itemsize if ndim else dtype.itemsize
        data = np.frombuffer(blob[offset : offset + nbytes], dtype=dtype).reshape(shape)
        offset += nbytes
        out[name] = Tensor(data.astype(dtype.newbyteorder("=")), requires_grad=True)
    return ParamSet(out)
