"""Reverse-mode autodiff over a small fixed op vocabulary.

Values are float64 numpy arrays recorded on a tape of `Tensor` nodes.
Every op validates that its output is finite; NaN/Inf anywhere is a bug
in the caller, not something we propagate.
"""

from __future__ import annotations

import numpy as np


class NonFiniteError(ValueError):
    """An op produced (or was fed) NaN or Inf."""


def _as_array(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    return arr


def _check_finite(arr: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values produced by op '{op}'")
    return arr


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A node on the autodiff tape.

    `value` is a float64 ndarray; `grad` is lazily allocated with the same
    shape. Leaf tensors created with requires_grad=True are parameters.
    """

    def __init__(self, value, requires_grad: bool = False, _parents=(), _backward=None, name: str | None = None):
        self.value = _check_finite(_as_array(value), name or "tensor")
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in _parents)
        self._parents = tuple(_parents)
        self._backward = _backward
        self.name = name

    # -- basic introspection ------------------------------------------------

    @property
    def shape(self):
        return self.value.shape

    @property
    def size(self):
        return self.value.size

    def item(self) -> float:
        return float(self.value)

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, grad: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += grad

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        other = _lift(other)

        def back(g, a=self, b=other):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.value.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g, b.value.shape))

        return Tensor(self.value + other.value, _parents=(self, other), _backward=back, name="add")

    __radd__ = __add__

    def __neg__(self):
        def back(g, a=self):
            if a.requires_grad:
                a._accumulate(-g)

        return Tensor(-self.value, _parents=(self,), _backward=back, name="neg")

    def __sub__(self, other):
        return self + (-_lift(other))

    def __rsub__(self, other):
        return _lift(other) + (-self)

    def __mul__(self, other):
        other = _lift(other)

        def back(g, a=self, b=other):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g * b.value, a.value.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g * a.value, b.value.shape))

        return Tensor(self.value * other.value, _parents=(self, other), _backward=back, name="mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return self * other.reciprocal()
        return self * (1.0 / float(other))

    def reciprocal(self):
        out_val = 1.0 / self.value

        def back(g, a=self, ov=out_val):
            if a.requires_grad:
                a._accumulate(-g * ov * ov)

        return Tensor(out_val, _parents=(self,), _backward=back, name="reciprocal")

    def __matmul__(self, other):
        other = _lift(other)

        def back(g, a=self, b=other):
            av, bv = a.value, b.value
            g = np.asarray(g)
            if a.requires_grad:
                if av.ndim == 1 and bv.ndim == 2:
                    a._accumulate(bv @ g)
                elif av.ndim == 2 and bv.ndim == 1:
                    a._accumulate(np.outer(g, bv))
                else:
                    a._accumulate(g @ bv.T)
            if b.requires_grad:
                if av.ndim == 1 and bv.ndim == 2:
                    b._accumulate(np.outer(av, g))
                elif av.ndim == 2 and bv.ndim == 1:
                    b._accumulate(av.T @ g)
                else:
                    b._accumulate(av.T @ g)

        return Tensor(self.value @ other.value, _parents=(self, other), _backward=back, name="matmul")

    def __getitem__(self, idx):
        def back(g, a=self, idx=idx):
            if a.requires_grad:
                full = np.zeros_like(a.value)
                np.add.at(full, idx, g)
                a._accumulate(full)

        return Tensor(self.value[idx], _parents=(self,), _backward=back, name="index")

    # -- reductions ---------------------------------------------------------

    def sum(self):
        def back(g, a=self):
            if a.requires_grad:
                a._accumulate(np.full_like(a.value, float(g)))

        return Tensor(self.value.sum(), _parents=(self,), _backward=back, name="sum")

    def mean(self):
        n = self.value.size

        def back(g, a=self, n=n):
            if a.requires_grad:
                a._accumulate(np.full_like(a.value, float(g) / n))

        return Tensor(self.value.mean(), _parents=(self,), _backward=back, name="mean")

    def mean_rows(self):
        """Mean over the leading axis of a rank-2 tensor."""
        n = self.value.shape[0]

        def back(g, a=self, n=n):
            if a.requires_grad:
                a._accumulate(np.broadcast_to(g / n, a.value.shape).copy())

        return Tensor(self.value.mean(axis=0), _parents=(self,), _backward=back, name="mean_rows")

    # -- nonlinearities -----------------------------------------------------

    def relu(self):
        mask = self.value > 0

        def back(g, a=self, mask=mask):
            if a.requires_grad:
                a._accumulate(g * mask)

        return Tensor(np.maximum(self.value, 0.0), _parents=(self,), _backward=back, name="relu")

    def sigmoid(self):
        out_val = stable_sigmoid(self.value)

        def back(g, a=self, ov=out_val):
            if a.requires_grad:
                a._accumulate(g * ov * (1.0 - ov))

        return Tensor(out_val, _parents=(self,), _backward=back, name="sigmoid")

    def square(self):
        def back(g, a=self):
            if a.requires_grad:
                a._accumulate(g * 2.0 * a.value)

        return Tensor(self.value ** 2, _parents=(self,), _backward=back, name="square")

    def sqrt(self):
        out_val = np.sqrt(self.value)

        def back(g, a=self, ov=out_val):
            if a.requires_grad:
                a._accumulate(g * 0.5 / ov)

        return Tensor(out_val, _parents=(self,), _backward=back, name="sqrt")

    def exp(self):
        out_val = np.exp(self.value)

        def back(g, a=self, ov=out_val):
            if a.requires_grad:
                a._accumulate(g * ov)

        return Tensor(out_val, _parents=(self,), _backward=back, name="exp")

    def log(self):
        def back(g, a=self):
            if a.requires_grad:
                a._accumulate(g / a.value)

        with np.errstate(divide="ignore", invalid="ignore"):
            out_val = np.log(self.value)
        return Tensor(out_val, _parents=(self,), _backward=back, name="log")

    def softmax(self, axis: int = -1):
        shifted = self.value - self.value.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        out_val = e / e.sum(axis=axis, keepdims=True)

        def back(g, a=self, ov=out_val, axis=axis):
            if a.requires_grad:
                dot = (g * ov).sum(axis=axis, keepdims=True)
                a._accumulate(ov * (g - dot))

        return Tensor(out_val, _parents=(self,), _backward=back, name="softmax")

    @property
    def T(self) -> "Tensor":
        def back(g, a=self):
            if a.requires_grad:
                a._accumulate(g.T)

        return Tensor(self.value.T, _parents=(self,), _backward=back, name="transpose")

    def dot(self, other: "Tensor") -> "Tensor":
        return (self * other).sum()

    def norm(self) -> "Tensor":
        return self.square().sum().sqrt()

    def detach(self) -> "Tensor":
        return Tensor(self.value.copy())

    # -- backward -----------------------------------------------------------

    def backward(self):
        if self.value.ndim != 0:
            raise ValueError("backward requires a scalar loss node")
        if not np.isfinite(self.value):
            raise NonFiniteError("loss is not finite")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))
        self._accumulate(np.array(1.0))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def stable_sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic; exact to float64 for |x| up to ~700."""
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def concat(tensors: list[Tensor]) -> Tensor:
    """Concatenate 1-D tensors along their only axis."""
    tensors = [_lift(t) for t in tensors]
    sizes = [t.value.size for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def back(g, ts=tensors, offs=offsets):
        for t, lo, hi in zip(ts, offs[:-1], offs[1:]):
            if t.requires_grad:
                t._accumulate(g[lo:hi].reshape(t.value.shape))

    value = np.concatenate([t.value.ravel() for t in tensors])
    return Tensor(value, _parents=tuple(tensors), _backward=back, name="concat")


def stack(tensors: list[Tensor]) -> Tensor:
    """Stack same-shape tensors into a new leading axis."""
    tensors = [_lift(t) for t in tensors]

    def back(g, ts=tensors):
        for k, t in enumerate(ts):
            if t.requires_grad:
                t._accumulate(g[k])

    value = np.stack([t.value for t in tensors])
    return Tensor(value, _parents=tuple(tensors), _backward=back, name="stack")
