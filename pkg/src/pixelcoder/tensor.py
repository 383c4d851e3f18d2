"""Dense tensors with reverse-mode automatic differentiation.

The whole model runs on this engine: a Tensor wraps a numpy array and,
when an operation involves a tensor that requires gradients, records a
backward closure linking it to its parents. ``Tensor.backward()`` on a
scalar loss walks the recorded graph once, in a fixed topological order,
so gradient accumulation is deterministic.

Values are float32 by default (the storage and checkpoint contract);
float64 graphs are supported so tests can run finite-difference checks
at full precision.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "tensor",
    "concat",
    "take_rows",
    "scatter_rows",
    "broadcast_rows",
    "rows_max",
    "matmul",
    "gelu",
    "layer_norm",
    "masked_softmax",
    "dropout",
    "cross_entropy",
]


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=np.float32):
        self.data = np.asarray(data, dtype=dtype)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None

    # -- graph construction -------------------------------------------------

    @classmethod
    def _node(cls, data, parents, backward):
        """Internal: wrap an op result, keeping the graph only where needed."""
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        return out

    def _accumulate(self, grad):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def zero_grad(self):
        self.grad = None

    # -- properties ----------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Tensor):
            out_data = self.data + other.data

            def backward(out):
                if self.requires_grad:
                    self._accumulate(_unbroadcast(out.grad, self.data.shape))
                if other.requires_grad:
                    other._accumulate(_unbroadcast(out.grad, other.data.shape))

            return Tensor._node(out_data, (self, other), backward)
        out_data = self.data + np.asarray(other, dtype=self.data.dtype)

        def backward(out):
            self._accumulate(_unbroadcast(out.grad, self.data.shape))

        return Tensor._node(out_data, (self,), backward)

    __radd__ = __add__

    def __neg__(self):
        def backward(out):
            self._accumulate(-out.grad)

        return Tensor._node(-self.data, (self,), backward)

    def __sub__(self, other):
        if isinstance(other, Tensor):
            out_data = self.data - other.data

            def backward(out):
                if self.requires_grad:
                    self._accumulate(_unbroadcast(out.grad, self.data.shape))
                if other.requires_grad:
                    other._accumulate(-_unbroadcast(out.grad, other.data.shape))

            return Tensor._node(out_data, (self, other), backward)
        return self + (-np.asarray(other, dtype=self.data.dtype))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Tensor):
            out_data = self.data * other.data

            def backward(out):
                if self.requires_grad:
                    self._accumulate(_unbroadcast(out.grad * other.data, self.data.shape))
                if other.requires_grad:
                    other._accumulate(_unbroadcast(out.grad * self.data, other.data.shape))

            return Tensor._node(out_data, (self, other), backward)
        const = np.asarray(other, dtype=self.data.dtype)
        out_data = self.data * const

        def backward(out):
            self._accumulate(_unbroadcast(out.grad * const, self.data.shape))

        return Tensor._node(out_data, (self,), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            out_data = self.data / other.data

            def backward(out):
                if self.requires_grad:
                    self._accumulate(_unbroadcast(out.grad / other.data, self.data.shape))
                if other.requires_grad:
                    other._accumulate(
                        _unbroadcast(-out.grad * self.data / (other.data * other.data), other.data.shape)
                    )

            return Tensor._node(out_data, (self, other), backward)
        return self * (1.0 / float(other))

    def __matmul__(self, other):
        return matmul(self, other)

    # -- shape ops -----------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old_shape = self.data.shape
        out_data = self.data.reshape(shape)

        def backward(out):
            self._accumulate(out.grad.reshape(old_shape))

        return Tensor._node(out_data, (self,), backward)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.data.ndim)))
        inv = np.argsort(axes)
        out_data = self.data.transpose(axes)

        def backward(out):
            self._accumulate(out.grad.transpose(inv))

        return Tensor._node(out_data, (self,), backward)

    def __getitem__(self, key):
        out_data = self.data[key]

        def backward(out):
            if self.grad is None:
                self.grad = np.zeros_like(self.data)
            self.grad[key] += out.grad

        return Tensor._node(out_data, (self,), backward)

    # -- reductions ----------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        out_data = self.data.sum(axis=axis, keepdims=keepdims)

        def backward(out):
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(g, self.data.shape).copy())

        return Tensor._node(out_data, (self,), backward)

    def mean(self, axis=None, keepdims=False):
        if axis is None:
            count = self.data.size
        else:
            count = self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # -- elementwise transcendentals ------------------------------------------

    def exp(self):
        out_data = np.exp(self.data)

        def backward(out):
            self._accumulate(out.grad * out_data)

        return Tensor._node(out_data, (self,), backward)

    def log(self):
        out_data = np.log(self.data)

        def backward(out):
            self._accumulate(out.grad / self.data)

        return Tensor._node(out_data, (self,), backward)

    def tanh(self):
        out_data = np.tanh(self.data)

        def backward(out):
            self._accumulate(out.grad * (1.0 - out_data * out_data))

        return Tensor._node(out_data, (self,), backward)

    def sqrt(self):
        out_data = np.sqrt(self.data)

        def backward(out):
            self._accumulate(out.grad * (0.5 / out_data))

        return Tensor._node(out_data, (self,), backward)

    # -- backprop -------------------------------------------------------------

    def backward(self):
        """Fill ``.grad`` of every reachable tensor with d(self)/d(tensor).

        The loss must be a scalar. Traversal order is a fixed depth-first
        topological sort, so repeated calls on identically built graphs
        accumulate bitwise-identical gradients.
        """
        if self.data.size != 1:
            raise ValueError(f"backward() requires a scalar loss, got shape {self.data.shape}")
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node)


def tensor(data, requires_grad=False, dtype=np.float32):
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


def _unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to the original operand shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; supports 2-D operands and equally stacked 3-D operands."""
    out_data = np.matmul(a.data, b.data)

    def backward(out):
        if a.requires_grad:
            a._accumulate(np.matmul(out.grad, np.swapaxes(b.data, -1, -2)))
        if b.requires_grad:
            b._accumulate(np.matmul(np.swapaxes(a.data, -1, -2), out.grad))

    return Tensor._node(out_data, (a, b), backward)


def concat(tensors, axis=0):
    parts = tuple(tensors)
    out_data = np.concatenate([t.data for t in parts], axis=axis)
    offsets = np.cumsum([0] + [t.data.shape[axis] for t in parts])

    def backward(out):
        for t, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * out.grad.ndim
                idx[axis] = slice(lo, hi)
                t._accumulate(out.grad[tuple(idx)])

    return Tensor._node(out_data, parts, backward)


def take_rows(t: Tensor, indices) -> Tensor:
    """Select rows along axis 0 by integer index (gather)."""
    idx = np.asarray(indices, dtype=np.intp)
    out_data = t.data[idx]

    def backward(out):
        if t.grad is None:
            t.grad = np.zeros_like(t.data)
        np.add.at(t.grad, idx, out.grad)

    return Tensor._node(out_data, (t,), backward)


def scatter_rows(t: Tensor, indices, length: int) -> Tensor:
    """Place rows of ``t`` at ``indices`` of a zero matrix with ``length`` rows."""
    idx = np.asarray(indices, dtype=np.intp)
    out_data = np.zeros((length,) + t.data.shape[1:], dtype=t.data.dtype)
    out_data[idx] = t.data

    def backward(out):
        if t.requires_grad:
            t._accumulate(out.grad[idx])

    return Tensor._node(out_data, (t,), backward)


def broadcast_rows(t: Tensor, n: int) -> Tensor:
    """Repeat a (1, d) row tensor into an (n, d) block."""
    out_data = np.broadcast_to(t.data, (n,) + t.data.shape[1:]).copy()

    def backward(out):
        t._accumulate(out.grad.sum(axis=0, keepdims=True))

    return Tensor._node(out_data, (t,), backward)


def rows_max(t: Tensor) -> Tensor:
    """Columnwise max over rows of a 2-D tensor; gradient flows to the
    first row attaining each maximum."""
    arg = t.data.argmax(axis=0)
    cols = np.arange(t.data.shape[1])
    out_data = t.data[arg, cols][None, :]

    def backward(out):
        if t.grad is None:
            t.grad = np.zeros_like(t.data)
        t.grad[arg, cols] += out.grad[0]

    return Tensor._node(out_data, (t,), backward)


_GELU_C = float(np.sqrt(2.0 / np.pi))
_GELU_A = 0.044715


def gelu(x: Tensor) -> Tensor:
    """GELU activation, tanh approximation."""
    xd = x.data
    inner = _GELU_C * (xd + _GELU_A * xd * xd * xd)
    t = np.tanh(inner)
    out_data = 0.5 * xd * (1.0 + t)

    def backward(out):
        sech2 = 1.0 - t * t
        local = 0.5 * (1.0 + t) + 0.5 * xd * sech2 * _GELU_C * (1.0 + 3.0 * _GELU_A * xd * xd)
        x._accumulate(out.grad * local.astype(xd.dtype))

    return Tensor._node(out_data.astype(xd.dtype), (x,), backward)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-12) -> Tensor:
    """Normalize each row over the last axis to zero mean / unit variance, then affine."""
    if gamma.data.shape[-1] != x.data.shape[-1] or beta.data.shape[-1] != x.data.shape[-1]:
        raise ValueError(
            f"layer_norm affine shape {gamma.data.shape}/{beta.data.shape} "
            f"does not match last axis of {x.data.shape}"
        )
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out_data = xhat * gamma.data + beta.data

    def backward(out):
        g = out.grad
        if gamma.requires_grad:
            gamma._accumulate(_unbroadcast(g * xhat, gamma.data.shape))
        if beta.requires_grad:
            beta._accumulate(_unbroadcast(g, beta.data.shape))
        if x.requires_grad:
            gx = g * gamma.data
            dx = inv * (gx - gx.mean(axis=-1, keepdims=True) - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
            x._accumulate(dx.astype(xd.dtype))

    return Tensor._node(out_data.astype(xd.dtype), (x, gamma, beta), backward)


def masked_softmax(x: Tensor, valid_len=None) -> Tensor:
    """Softmax over the last axis restricted to the first ``valid_len`` entries.

    Entries at or beyond ``valid_len`` get weight exactly 0 and contribute
    nothing to the normalizer, so content there can never leak into valid
    positions. ``valid_len=None`` is a plain softmax.
    """
    xd = x.data
    n = xd.shape[-1]
    if valid_len is None or valid_len >= n:
        valid = n
    else:
        valid = int(valid_len)
        if valid < 1:
            raise ValueError("masked_softmax needs at least one valid position")
    sub = xd[..., :valid]
    shifted = sub - sub.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=-1, keepdims=True)
    out_data = np.zeros_like(xd)
    out_data[..., :valid] = probs

    def backward(out):
        g = out.grad[..., :valid]
        dot = (g * probs).sum(axis=-1, keepdims=True)
        dx = np.zeros_like(xd)
        dx[..., :valid] = probs * (g - dot)
        x._accumulate(dx)

    return Tensor._node(out_data, (x,), backward)


def dropout(x: Tensor, p: float, rng: np.random.Generator, train: bool) -> Tensor:
    """Inverted dropout: scales kept activations by 1/(1-p); identity in eval."""
    if not train or p <= 0.0:
        return x
    keep = (rng.random(x.data.shape) >= p).astype(x.data.dtype) / (1.0 - p)
    out_data = x.data * keep

    def backward(out):
        x._accumulate(out.grad * keep)

    return Tensor._node(out_data, (x,), backward)


def cross_entropy(logits: Tensor, labels, ignore_index: int = -100) -> Tensor:
    """Mean negative log-likelihood over rows whose label is not ignored.

    logits: (n, k); labels: (n,) ints. Rows labelled ``ignore_index`` carry
    exactly zero gradient.
    """
    lab = np.asarray(labels, dtype=np.intp)
    ld = logits.data
    if lab.shape[0] != ld.shape[0]:
        raise ValueError(f"{lab.shape[0]} labels for {ld.shape[0]} logit rows")
    counted = lab != ignore_index
    n_counted = int(counted.sum())
    if n_counted == 0:
        raise ValueError("cross_entropy: every label is ignore_index")
    shifted = ld - ld.max(axis=-1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    logp = shifted - logz
    rows = np.nonzero(counted)[0]
    nll = -logp[rows, lab[rows]]
    out_data = np.asarray(nll.sum() / n_counted, dtype=ld.dtype)

    def backward(out):
        probs = np.exp(logp)
        dx = np.zeros_like(ld)
        dx[rows] = probs[rows]
        dx[rows, lab[rows]] -= 1.0
        logits._accumulate(dx * (out.grad / n_counted))

    return Tensor._node(out_data, (logits,), backward)
