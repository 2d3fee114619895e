"""Dense tensors with tape-based reverse-mode differentiation.

Operations record themselves on the innermost active :class:`Tape` when at
least one input is tracked (a ``requires_grad`` leaf or an earlier recorded
node). Outside a tape everything evaluates eagerly with no bookkeeping, which
is the inference path.
"""

import numpy as np

from dbae import kernels
from dbae.errors import ContractError, ShapeError

_TAPES = []


def active_tape():
    return _TAPES[-1] if _TAPES else None


class Tape:
    """Ordered record of primitive ops; creation order is a topological order."""

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _TAPES.append(self)
        return self

    def __exit__(self, *exc):
        _TAPES.remove(self)
        return False

    def gradient(self, loss, params):
        """Gradients of a scalar ``loss`` w.r.t. ``params`` (name -> Tensor).

        Unreachable parameters get zeros.
        """
        if not isinstance(loss, Tensor):
            raise ContractError("loss must be a Tensor")
        if loss.data.size != 1:
            raise ContractError(f"loss must be scalar, got shape {loss.shape}")
        grads = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.tracked:
                    continue
                key = id(parent)
                grads[key] = grads[key] + pg if key in grads else pg
        return {name: np.asarray(grads.get(id(t), np.zeros_like(t.data)), dtype=t.data.dtype)
                for name, t in params.items()}


def backward(loss, params, tape=None):
    """Convenience wrapper around :meth:`Tape.gradient` on the active tape."""
    tape = tape or active_tape()
    if tape is None:
        return {name: np.zeros_like(t.data) for name, t in params.items()}
    return tape.gradient(loss, params)


def _unbroadcast(g, shape):
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


class Tensor:
    __array_ufunc__ = None  # make numpy defer to our reflected operators

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data)
        self.requires_grad = requires_grad
        self.tracked = requires_grad
        self.name = name
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def __repr__(self):
        return f"Tensor({self.data!r}{', tracked' if self.tracked else ''})"

    def __len__(self):
        return len(self.data)

    def _lift(self, other):
        if isinstance(other, Tensor):
            return other
        arr = np.asarray(other)
        if arr.dtype.kind in "fiub":
            arr = arr.astype(self.data.dtype, copy=False)
        return Tensor(arr)

    def __add__(self, other):
        return add(self, self._lift(other))

    def __radd__(self, other):
        return add(self._lift(other), self)

    def __sub__(self, other):
        return sub(self, self._lift(other))

    def __rsub__(self, other):
        return sub(self._lift(other), self)

    def __mul__(self, other):
        return mul(self, self._lift(other))

    def __rmul__(self, other):
        return mul(self._lift(other), self)

    def __truediv__(self, other):
        return div(self, self._lift(other))

    def __rtruediv__(self, other):
        return div(self._lift(other), self)

    def __neg__(self):
        return _record(-self.data, (self,), lambda g: (-g,))

    def __matmul__(self, other):
        return matmul(self, self._lift(other))

    def __rmatmul__(self, other):
        return matmul(self._lift(other), self)

    def __getitem__(self, idx):
        shape = self.data.shape

        fancy = any(isinstance(i, (list, np.ndarray)) for i in (idx if isinstance(idx, tuple) else (idx,)))

        def bw(g):
            full = np.zeros(shape, dtype=g.dtype)
            if fancy:
                np.add.at(full, idx, g)
            else:
                full[idx] += g
            return (full,)

        return _record(self.data[idx], (self,), bw)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)

    def reshape(self, *shape):
        old = self.data.shape
        return _record(self.data.reshape(*shape), (self,), lambda g: (g.reshape(old),))


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _record(data, parents, backward_fn):
    out = Tensor(data)
    tape = active_tape()
    if tape is not None and any(p.tracked for p in parents):
        out.tracked = True
        out._parents = parents
        out._backward = backward_fn
        tape.nodes.append(out)
    return out


def add(a, b):
    return _record(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    return _record(a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    return _record(a.data * b.data, (a, b),
                   lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a, b):
    out = a.data / b.data
    return _record(out, (a, b),
                   lambda g: (_unbroadcast(g / b.data, a.shape),
                              _unbroadcast(-g * out / b.data, b.shape)))


def matmul(a, b):
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes {a.shape} @ {b.shape}")
    return _record(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def tsum(a, axis=None, keepdims=False):
    shape = a.shape

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _record(a.data.sum(axis=axis, keepdims=keepdims), (a,), bw)


def tmean(a, axis=None, keepdims=False):
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return tsum(a, axis, keepdims) * (1.0 / n)


def exp(a):
    out = np.exp(a.data)
    return _record(out, (a,), lambda g: (g * out,))


def log(a):
    return _record(np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a):
    out = np.sqrt(a.data)
    return _record(out, (a,), lambda g: (g * 0.5 / out,))


def square(a):
    return _record(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,))


def tabs(a):
    return _record(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def softplus(a):
    x = a.data
    out = np.logaddexp(0.0, x).astype(x.dtype, copy=False)
    return _record(out, (a,), lambda g: (g / (1.0 + np.exp(-x)),))


def silu(a):
    a = as_tensor(a)
    out, sig = kernels.silu(a.data)
    return _record(out, (a,), lambda g: (kernels.silu_grad(g, a.data, sig),))


def logsumexp(a, axis=-1):
    m = np.max(a.data, axis=axis, keepdims=True)
    shifted = np.exp(a.data - m)
    total = shifted.sum(axis=axis, keepdims=True)
    out = np.squeeze(m + np.log(total), axis=axis)
    soft = shifted / total
    return _record(out, (a,), lambda g: (np.expand_dims(g, axis) * soft,))


def concat(xs, axis=-1):
    xs = [as_tensor(x) for x in xs]
    dtype = np.result_type(*[x.data for x in xs])
    datas = [x.data.astype(dtype, copy=False) for x in xs]
    try:
        out = np.concatenate(datas, axis=axis)
    except ValueError as err:
        raise ShapeError(str(err)) from None
    splits = np.cumsum([d.shape[axis] for d in datas])[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return _record(out, tuple(xs), bw)


def linear(x, W, b=None):
    """``x @ W + b`` for x (batch, in), W (in, out), b (out,)."""
    x, W = as_tensor(x), as_tensor(W)
    if x.ndim != 2 or W.ndim != 2 or x.shape[1] != W.shape[0]:
        raise ShapeError(f"linear: x {x.shape} incompatible with W {W.shape}")
    out = matmul(x, W)
    if b is not None:
        b = as_tensor(b)
        if b.shape != (W.shape[1],):
            raise ShapeError(f"linear: bias {b.shape} vs {W.shape[1]} outputs")
        out = add(out, b)
    return out


def mse(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"mse shapes {a.shape} vs {b.shape}")
    return tmean(square(a - b))


def pairwise_gauss_logpdf(z, mu, logsig):
    """Tensor of log N(z[i, k]; mu[j, k], exp(logsig[j, k])^2), shape (B, B', l)."""
    z, mu, logsig = as_tensor(z), as_tensor(mu), as_tensor(logsig)
    out = kernels.pairwise_gauss_logpdf(z.data, mu.data, logsig.data).astype(z.dtype, copy=False)
    inv_var = np.exp(-2.0 * logsig.data)[None, :, :]
    diff = z.data[:, None, :] - mu.data[None, :, :]

    def bw(g):
        gd = g * diff * inv_var
        return (-gd.sum(axis=1), gd.sum(axis=0), (g * (diff * diff * inv_var - 1.0)).sum(axis=0))

    return _record(out, (z, mu, logsig), bw)
