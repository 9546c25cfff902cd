"""Minimal reverse-mode differentiation over dense float64 arrays.

A :class:`Var` records the operation that produced it and a closure mapping
the output adjoint to input adjoints. Supported primitives are the ones the
log marginal likelihood and the kernel networks need: elementwise
arithmetic, ``tanh``/``relu``/``exp``/``cos``/``sin``/``log``, ``matmul``,
``sum``, ``trace``, ``cholesky``, ``solve_psd`` and ``logdet``, plus the
structural ops ``reshape``, ``transpose``, ``concat`` and indexing.

Every module-level function accepts plain ndarrays too and then returns a
plain ndarray, so model code can be written once and run with or without a
graph. Any other NumPy function applied to a ``Var`` raises
:class:`~fedbnr.errors.UnsupportedPrimitive`.
"""

import numpy as np
import scipy.linalg as la

from . import linalg
from .errors import LayoutMismatch, UnsupportedPrimitive


class Var:
    __array_priority__ = 1000.0

    def __init__(self, value, parents=(), backward=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = parents
        self.backward = backward

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def T(self):
        return transpose(self)

    def __repr__(self):
        return f"Var(shape={self.value.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, negative(other))

    def __rsub__(self, other):
        return add(other, negative(self))

    def __mul__(self, other):
        return multiply(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return divide(self, other)

    def __rtruediv__(self, other):
        return divide(other, self)

    def __neg__(self):
        return negative(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return take(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return reshape(self, shape)

    def sum(self, axis=None):
        return sum_(self, axis)

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        fn = _UFUNCS.get(ufunc)
        if method != "__call__" or fn is None or kwargs:
            raise UnsupportedPrimitive(f"ufunc {ufunc.__name__!r} is not differentiable here")
        return fn(*inputs)

    def __array_function__(self, func, types, args, kwargs):
        fn = _FUNCTIONS.get(func)
        if fn is None:
            raise UnsupportedPrimitive(f"{func.__module__}.{func.__name__} is not a supported primitive")
        return fn(*args, **kwargs)


def _is_var(x):
    return isinstance(x, Var)


def _value(x):
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _node(value, inputs, backward):
    """Build a Var if any input is a Var, otherwise return the plain value."""
    if not any(_is_var(x) for x in inputs):
        return value
    parents = tuple(x if _is_var(x) else None for x in inputs)
    return Var(value, parents, backward)


# -- elementwise ---------------------------------------------------------

def add(a, b):
    av, bv = _value(a), _value(b)
    return _node(av + bv, (a, b),
                 lambda g: (_unbroadcast(g, av.shape), _unbroadcast(g, bv.shape)))


def negative(a):
    return _node(-_value(a), (a,), lambda g: (-g,))


def multiply(a, b):
    av, bv = _value(a), _value(b)
    return _node(av * bv, (a, b),
                 lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))


def divide(a, b):
    av, bv = _value(a), _value(b)
    out = av / bv
    return _node(out, (a, b),
                 lambda g: (_unbroadcast(g / bv, av.shape),
                            _unbroadcast(-g * out / bv, bv.shape)))


def power(a, exponent):
    if _is_var(exponent):
        raise UnsupportedPrimitive("only constant exponents are supported")
    av = _value(a)
    p = float(exponent)
    return _node(av ** p, (a,), lambda g: (g * p * av ** (p - 1.0),))


def tanh(a):
    out = np.tanh(_value(a))
    return _node(out, (a,), lambda g: (g * (1.0 - out * out),))


def relu(a):
    av = _value(a)
    return _node(np.maximum(av, 0.0), (a,), lambda g: (g * (av > 0.0),))


def exp(a):
    out = np.exp(_value(a))
    return _node(out, (a,), lambda g: (g * out,))


def log(a):
    av = _value(a)
    return _node(np.log(av), (a,), lambda g: (g / av,))


def cos(a):
    av = _value(a)
    return _node(np.cos(av), (a,), lambda g: (-g * np.sin(av),))


def sin(a):
    av = _value(a)
    return _node(np.sin(av), (a,), lambda g: (g * np.cos(av),))


# -- reductions and structure -------------------------------------------

def matmul(a, b):
    av, bv = _value(a), _value(b)

    def backward(g):
        A = av if av.ndim > 1 else av[None, :]
        B = bv if bv.ndim > 1 else bv[:, None]
        G = g
        if av.ndim == 1:
            G = np.expand_dims(G, -2)
        if bv.ndim == 1:
            G = np.expand_dims(G, -1)
        ga = _unbroadcast(G @ np.swapaxes(B, -1, -2), A.shape).reshape(av.shape)
        gb = _unbroadcast(np.swapaxes(A, -1, -2) @ G, B.shape).reshape(bv.shape)
        return ga, gb

    return _node(av @ bv, (a, b), backward)


def sum_(a, axis=None, keepdims=False):
    av = _value(a)
    out = np.sum(av, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, av.shape).copy(),)

    return _node(out, (a,), backward)


def mean(a, axis=None):
    av = _value(a)
    count = av.size if axis is None else av.shape[axis]
    return divide(sum_(a, axis), float(count))


def trace(a):
    av = _value(a)
    if av.ndim != 2:
        raise UnsupportedPrimitive("trace is defined for 2-D arrays only")
    return _node(np.trace(av), (a,), lambda g: (g * np.eye(*av.shape),))


def reshape(a, shape):
    av = _value(a)
    return _node(av.reshape(shape), (a,), lambda g: (g.reshape(av.shape),))


def transpose(a, axes=None):
    av = _value(a)
    out = np.transpose(av, axes)
    inverse = None if axes is None else np.argsort(axes)
    return _node(out, (a,), lambda g: (np.transpose(g, inverse),))


def swapaxes(a, axis1, axis2):
    av = _value(a)
    return _node(np.swapaxes(av, axis1, axis2), (a,),
                 lambda g: (np.swapaxes(g, axis1, axis2),))


def take(a, index):
    av = _value(a)

    def backward(g):
        full = np.zeros_like(av)
        np.add.at(full, index, g)
        return (full,)

    return _node(av[index], (a,), backward)


def concat(arrays, axis=0):
    values = [_value(x) for x in arrays]
    sizes = np.cumsum([v.shape[axis] for v in values])[:-1]
    return _node(np.concatenate(values, axis=axis), tuple(arrays),
                 lambda g: tuple(np.split(g, sizes, axis=axis)))


def stack(arrays, axis=0):
    expanded = []
    for x in arrays:
        shape = list(_value(x).shape)
        ax = axis if axis >= 0 else len(shape) + 1 + axis
        shape.insert(ax, 1)
        expanded.append(reshape(x, tuple(shape)))
    return concat(expanded, axis=axis)


# -- Cholesky family -----------------------------------------------------

def cholesky(a):
    """Differentiable Cholesky factor; the input is assumed symmetric."""
    l = linalg.cholesky(_value(a))

    def backward(lbar):
        p = np.tril(l.T @ np.tril(lbar))
        p[np.diag_indices_from(p)] *= 0.5
        # L^{-T} P L^{-1}
        x = la.solve_triangular(l, p, lower=True, trans="T")
        abar = la.solve_triangular(l, x.T, lower=True, trans="T").T
        return (0.5 * (abar + abar.T),)

    return _node(l, (a,), backward)


def solve_psd(l, b):
    """Differentiable solve of ``(L L^T) x = b`` given a Cholesky factor."""
    lv, bv = _value(l), _value(b)
    x = linalg.solve_psd(lv, bv)

    def backward(g):
        bbar = linalg.solve_psd(lv, g)
        b2 = bbar if bbar.ndim == 2 else bbar[:, None]
        x2 = x if x.ndim == 2 else x[:, None]
        abar = -b2 @ x2.T
        lbar = (abar + abar.T) @ lv
        return lbar, bbar

    return _node(x, (l, b), backward)


def logdet(l):
    """``log|L L^T|`` from a Cholesky factor."""
    lv = _value(l)
    d = np.diag(lv)
    return _node(2.0 * np.sum(np.log(d)), (l,), lambda g: (np.diag(2.0 * g / d),))


_UFUNCS = {
    np.add: add,
    np.subtract: lambda a, b: add(a, negative(b)),
    np.multiply: multiply,
    np.true_divide: divide,
    np.negative: negative,
    np.tanh: tanh,
    np.exp: exp,
    np.log: log,
    np.cos: cos,
    np.sin: sin,
    np.matmul: matmul,
}

_FUNCTIONS = {
    np.sum: lambda a, axis=None, keepdims=False: sum_(a, axis, keepdims),
    np.mean: lambda a, axis=None: mean(a, axis),
    np.trace: trace,
    np.reshape: reshape,
    np.transpose: transpose,
    np.swapaxes: swapaxes,
    np.concatenate: lambda arrays, axis=0: concat(arrays, axis),
    np.stack: lambda arrays, axis=0: stack(arrays, axis),
}


def backprop(output):
    """Adjoints of every Var reachable from the scalar ``output``, keyed by id."""
    if np.ndim(output.value) != 0:
        raise ValueError("backprop needs a scalar output")
    order, seen = [], set()
    stack_ = [(output, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for parent in node.parents:
            if parent is not None and id(parent) not in seen:
                stack_.append((parent, False))

    grads = {id(output): np.ones(())}
    for node in reversed(order):
        g = grads.get(id(node))
        if g is None or node.backward is None:
            continue
        for parent, pg in zip(node.parents, node.backward(g)):
            if parent is None:
                continue
            pg = np.asarray(pg, dtype=np.float64).reshape(parent.value.shape)
            if id(parent) in grads:
                grads[id(parent)] = grads[id(parent)] + pg
            else:
                grads[id(parent)] = pg
    return grads


# -- flat parameter vectors ---------------------------------------------

class ParamVector:
    """Flat float64 array with a name -> (offset, shape) layout.

    Blocks are contiguous and cover the array exactly once.
    """

    def __init__(self, data, layout):
        self.data = np.asarray(data, dtype=np.float64)
        self.layout = dict(layout)
        total = sum(int(np.prod(shape)) for _, shape in self.layout.values())
        if total != self.data.size or self.data.ndim != 1:
            raise LayoutMismatch(f"layout covers {total} entries, data has {self.data.size}")

    @classmethod
    def from_blocks(cls, blocks):
        layout, offset, parts = {}, 0, []
        for name, value in blocks.items():
            value = np.asarray(value, dtype=np.float64)
            layout[name] = (offset, value.shape)
            offset += value.size
            parts.append(value.ravel())
        data = np.concatenate(parts) if parts else np.zeros(0)
        return cls(data, layout)

    def __len__(self):
        return self.data.size

    def __contains__(self, name):
        return name in self.layout

    def __getitem__(self, name):
        offset, shape = self.layout[name]
        return self.data[offset:offset + int(np.prod(shape))].reshape(shape)

    def names(self):
        return list(self.layout)

    def blocks(self):
        return {name: self[name] for name in self.layout}

    def with_data(self, data):
        return ParamVector(np.array(data, dtype=np.float64), self.layout)

    def replace(self, **blocks):
        data = self.data.copy()
        for name, value in blocks.items():
            offset, shape = self.layout[name]
            data[offset:offset + int(np.prod(shape))] = np.asarray(value, dtype=np.float64).ravel()
        return ParamVector(data, self.layout)

    def same_layout(self, other):
        return self.layout == other.layout

    def __repr__(self):
        return f"ParamVector({len(self)} params, blocks={self.names()})"


def evaluate_with_gradient(loss, params):
    """Value and exact reverse-mode gradient of ``loss(blocks)``.

    ``loss`` receives a dict of :class:`Var` blocks shaped per the layout
    and must return a scalar built from supported primitives.
    """
    leaves = {name: Var(params[name].copy()) for name in params.layout}
    out = loss(leaves)
    if not _is_var(out):
        return float(out), params.with_data(np.zeros(len(params)))
    grads = backprop(out)
    flat = np.zeros(len(params))
    for name, leaf in leaves.items():
        g = grads.get(id(leaf))
        if g is not None:
            offset, shape = params.layout[name]
            flat[offset:offset + int(np.prod(shape))] = g.ravel()
    return float(out.value), params.with_data(flat)


def evaluate(loss, params):
    """Value of ``loss`` without building a graph."""
    return float(loss(params.blocks()))


def finite_difference_gradient(loss, params, step=1e-5):
    """Central finite differences ``(f(p+h) - f(p-h)) / 2h`` per coordinate."""
    if step <= 0:
        raise ValueError("step must be positive")
    grad = np.zeros(len(params))
    for i in range(len(params)):
        up = params.data.copy()
        down = params.data.copy()
        up[i] += step
        down[i] -= step
        grad[i] = (evaluate(loss, params.with_data(up))
                   - evaluate(loss, params.with_data(down))) / (2.0 * step)
    return params.with_data(grad)
