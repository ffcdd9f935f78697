"""Reverse-mode automatic differentiation over numpy float64 arrays.

A small tape engine: :class:`Tensor` wraps an ndarray and records its
parents plus a backward closure.  All values are kept in float64 so that
finite-difference verification of gradients is stable.  Complex signals are
carried as (re, im) pairs of real tensors (:class:`ComplexTensor`); since
every trainable parameter is real, this sidesteps complex differentials
entirely.

Ops raise :class:`NonFiniteError` naming the operation as soon as they
produce a non-finite value, so a diverging training run fails at the op
that caused it instead of propagating NaNs.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

__all__ = [
    "Tensor",
    "ComplexTensor",
    "NonFiniteError",
    "as_tensor",
    "concat",
    "cos",
    "exp",
    "log",
    "relu",
    "sigmoid",
    "sin",
    "softmax",
    "softplus",
    "sqrt",
    "take",
    "windowed_sum",
    "xlogx",
]


class NonFiniteError(FloatingPointError):
    """An operation produced inf or NaN."""

    def __init__(self, op: str):
        super().__init__(f"non-finite value produced by op '{op}'")
        self.op = op


class Tensor:
    """Node of the computation graph holding a float64 ndarray."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    # -- graph plumbing ----------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def item(self) -> float:
        return float(self.data)

    def backward(self) -> None:
        """Accumulate gradients of this (scalar) tensor into the leaves."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if not node.requires_grad:
                continue
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        return _add(self, as_tensor(other))

    __radd__ = __add__

    def __neg__(self):
        return _make(-self.data, "neg", (self,), lambda g: (-g,))

    def __sub__(self, other):
        return _add(self, -as_tensor(other))

    def __rsub__(self, other):
        return _add(-self, as_tensor(other))

    def __mul__(self, other):
        return _mul(self, as_tensor(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return _div(self, as_tensor(other))

    def __rtruediv__(self, other):
        return _div(as_tensor(other), self)

    def __pow__(self, p):
        if not np.isscalar(p):
            raise TypeError("only scalar exponents are supported")
        out = self.data**p
        return _make(out, "pow", (self,), lambda g: (g * p * self.data ** (p - 1),))

    def __matmul__(self, other):
        other = as_tensor(other)
        if self.data.ndim != 2 or other.data.ndim != 2:
            raise ValueError("matmul supports 2-D operands only")
        with np.errstate(invalid="ignore", over="ignore"):
            out = self.data @ other.data

        def back(g):
            return g @ other.data.T, self.data.T @ g

        return _make(out, "matmul", (self, other), back)

    def __getitem__(self, key):
        if not isinstance(key, (int, np.integer, slice)):
            raise TypeError("only int / slice indexing on axis 0 is supported")
        out = self.data[key]

        def back(g):
            gp = np.zeros_like(self.data)
            gp[key] = g
            return (gp,)

        return _make(out, "getitem", (self,), back)

    def reshape(self, *shape):
        out = self.data.reshape(*shape)
        return _make(out, "reshape", (self,), lambda g: (g.reshape(self.data.shape),))

    def sum(self, axis=None, keepdims: bool = False):
        out = self.data.sum(axis=axis, keepdims=keepdims)

        def back(g):
            g = np.asarray(g)
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, self.data.shape).copy(),)

        return _make(out, "sum", (self,), back)

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Reduce gradient ``g`` back to ``shape`` after numpy broadcasting."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _make(data, op, parents, backward):
    """Wire a new graph node; checks finiteness and prunes dead branches."""
    data = np.asarray(data, dtype=np.float64)
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(op)
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(p for p in parents if p.requires_grad)

        def run(g):
            grads = backward(g)
            for p, gp in zip(parents, grads):
                if p.requires_grad and gp is not None:
                    gp = _unbroadcast(np.asarray(gp), p.data.shape)
                    if p.grad is None:
                        p.grad = gp.copy() if gp.base is not None else gp
                    else:
                        p.grad = p.grad + gp

        out._backward = run
    return out


def _add(a: Tensor, b: Tensor) -> Tensor:
    return _make(a.data + b.data, "add", (a, b), lambda g: (g, g))


def _mul(a: Tensor, b: Tensor) -> Tensor:
    return _make(a.data * b.data, "mul", (a, b), lambda g: (g * b.data, g * a.data))


def _div(a: Tensor, b: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.data / b.data

    def back(g):
        return g / b.data, -g * out / b.data

    return _make(out, "div", (a, b), back)


# -- elementwise functions --------------------------------------------------


def exp(x) -> Tensor:
    x = as_tensor(x)
    with np.errstate(over="ignore"):
        out = np.exp(x.data)
    return _make(out, "exp", (x,), lambda g: (g * out,))


def log(x) -> Tensor:
    x = as_tensor(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(x.data)
    return _make(out, "log", (x,), lambda g: (g / x.data,))


def sqrt(x) -> Tensor:
    x = as_tensor(x)
    with np.errstate(invalid="ignore"):
        out = np.sqrt(x.data)
    return _make(out, "sqrt", (x,), lambda g: (g / (2.0 * out),))


def sin(x) -> Tensor:
    x = as_tensor(x)
    return _make(np.sin(x.data), "sin", (x,), lambda g: (g * np.cos(x.data),))


def cos(x) -> Tensor:
    x = as_tensor(x)
    return _make(np.cos(x.data), "cos", (x,), lambda g: (-g * np.sin(x.data),))


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0.0
    return _make(np.where(mask, x.data, 0.0), "relu", (x,), lambda g: (g * mask,))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    out = expit(x.data)
    return _make(out, "sigmoid", (x,), lambda g: (g * out * (1.0 - out),))


def softplus(x) -> Tensor:
    """ln(1 + e^x), overflow-safe (linear branch for large x)."""
    x = as_tensor(x)
    out = np.logaddexp(0.0, x.data)
    return _make(out, "softplus", (x,), lambda g: (g * expit(x.data),))


def xlogx(x) -> Tensor:
    """x·ln(x) with the 0·ln0 := 0 convention (subgradient 0 at x = 0)."""
    x = as_tensor(x)
    pos = x.data > 0.0
    safe = np.where(pos, x.data, 1.0)
    out = np.where(pos, x.data * np.log(safe), 0.0)
    return _make(out, "xlogx", (x,), lambda g: (g * np.where(pos, np.log(safe) + 1.0, 0.0),))


def softmax(x, axis: int = -1) -> Tensor:
    """Shift-invariant softmax along ``axis`` with max-subtraction."""
    x = as_tensor(x)
    shift = x - np.max(x.data, axis=axis, keepdims=True)
    e = exp(shift)
    return e / e.sum(axis=axis, keepdims=True)


# -- structural ops ----------------------------------------------------------


def concat(parts, axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(out, "concat", tuple(parts), back)


def take(x, idx) -> Tensor:
    """Gather rows ``x[idx]`` of a 1-D tensor; idx may have any shape."""
    x = as_tensor(x)
    if x.data.ndim != 1:
        raise ValueError("take expects a 1-D tensor")
    idx = np.asarray(idx)

    def back(g):
        gp = np.bincount(idx.ravel(), weights=np.asarray(g).ravel(), minlength=x.data.size)
        return (gp,)

    return _make(x.data[idx], "take", (x,), back)


def _window_sum_data(x: np.ndarray, n: int) -> np.ndarray:
    if n == 0:
        return x.copy()
    K = x.shape[0]
    c = np.cumsum(x, axis=0)
    hi = np.minimum(np.arange(K) + n, K - 1)
    lo = np.arange(K) - n
    out = c[hi]
    mask = lo >= 1
    out[mask] -= c[lo[mask] - 1]
    return out


def windowed_sum(x, n: int) -> Tensor:
    """Sliding sum over axis 0 with window [k-n, k+n], truncated at edges.

    The operator is a symmetric band matrix, so the adjoint is the same
    windowed sum applied to the incoming gradient.
    """
    x = as_tensor(x)
    if n < 0:
        raise ValueError("window half-length must be >= 0")
    out = _window_sum_data(x.data, n)
    return _make(out, "windowed_sum", (x,), lambda g: (_window_sum_data(np.asarray(g), n),))


# -- complex pairs ------------------------------------------------------------


class ComplexTensor:
    """Complex array carried as a pair of real tensors."""

    __slots__ = ("re", "im")

    def __init__(self, re, im):
        self.re = as_tensor(re)
        self.im = as_tensor(im)

    @classmethod
    def from_complex(cls, z) -> "ComplexTensor":
        z = np.asarray(z, dtype=np.complex128)
        return cls(z.real.copy(), z.imag.copy())

    @property
    def data(self) -> np.ndarray:
        return self.re.data + 1j * self.im.data

    @property
    def shape(self):
        return self.re.data.shape

    def __add__(self, other):
        other = _as_complex(other)
        return ComplexTensor(self.re + other.re, self.im + other.im)

    __radd__ = __add__

    def __sub__(self, other):
        other = _as_complex(other)
        return ComplexTensor(self.re - other.re, self.im - other.im)

    def __mul__(self, other):
        other = _as_complex(other)
        return ComplexTensor(
            self.re * other.re - self.im * other.im,
            self.re * other.im + self.im * other.re,
        )

    __rmul__ = __mul__

    def __getitem__(self, key):
        return ComplexTensor(self.re[key], self.im[key])

    def conj(self) -> "ComplexTensor":
        return ComplexTensor(self.re, -self.im)

    def abs2(self) -> Tensor:
        return self.re * self.re + self.im * self.im

    def scale(self, s) -> "ComplexTensor":
        """Multiply by a real scalar/array (tensor or constant)."""
        return ComplexTensor(self.re * s, self.im * s)

    def rotate(self, phi) -> "ComplexTensor":
        """Multiply by e^{j phi}; phi may be a Tensor or ndarray."""
        if isinstance(phi, Tensor):
            c, s = cos(phi), sin(phi)
        else:
            phi = np.asarray(phi, dtype=np.float64)
            c, s = np.cos(phi), np.sin(phi)
        return ComplexTensor(self.re * c - self.im * s, self.re * s + self.im * c)

    def take(self, idx) -> "ComplexTensor":
        return ComplexTensor(take(self.re, idx), take(self.im, idx))


def _as_complex(x) -> ComplexTensor:
    if isinstance(x, ComplexTensor):
        return x
    if isinstance(x, Tensor):
        return ComplexTensor(x, np.zeros_like(x.data))
    z = np.asarray(x)
    if np.iscomplexobj(z):
        return ComplexTensor.from_complex(z)
    return ComplexTensor(z, np.zeros_like(z, dtype=np.float64))
