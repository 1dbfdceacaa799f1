"""Dense float64 tensors with tape-based reverse-mode differentiation.

Deliberately small: every array is a float64 numpy ndarray, shapes are
checked strictly (no broadcasting beyond scalar*tensor), and gradients come
from replaying a linear tape of recorded operations in reverse. Forward math
is plain single-threaded numpy, so identical inputs give bit-identical
outputs.

A tape and the intermediate tensors it produced must only ever be touched by
one thread; leaf tensors holding frozen parameter values may be shared
read-only across threads.
"""

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes do not satisfy an operation's contract."""


class Tensor:
    """A dense float64 array with an optional gradient buffer.

    ``grad`` is allocated lazily by the backward pass and accumulates across
    backward calls until ``zero_grad``.
    """

    __slots__ = ("data", "grad", "name")

    def __init__(self, data, name=None):
        self.data = np.array(data, dtype=np.float64)
        self.grad = None
        self.name = name

    @classmethod
    def _wrap(cls, arr):
        # internal: adopt a freshly computed float64 array without copying
        obj = cls.__new__(cls)
        obj.data = arr
        obj.grad = None
        obj.name = None
        return obj

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def values(self):
        """The values as a flat row-major array."""
        return self.data.ravel()

    def item(self):
        if self.data.size != 1:
            raise ShapeError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape})"


def zeros(shape):
    return Tensor._wrap(np.zeros(shape, dtype=np.float64))


def _stable_sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Tape:
    """Linear record of differentiable operations.

    Each op appends its backward rule in execution order and ``backward``
    replays the rules exactly once in reverse. ``Tape(record=False)`` runs
    the same forward math without recording; finite-difference probes and
    inference use that mode.
    """

    def __init__(self, record=True):
        self.record = record
        self._ops = []

    def __len__(self):
        return len(self._ops)

    def record_backward(self, fn):
        """Append a backward rule. Extension point for custom ops."""
        if self.record:
            self._ops.append(fn)

    def backward(self, loss):
        """Accumulate d(loss)/d(t) into ``t.grad`` for every tensor the
        scalar ``loss`` depends on. Grads add up across calls; the caller
        zeroes them between optimizer steps."""
        if loss.data.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        loss.accumulate_grad(np.ones_like(loss.data))
        for fn in reversed(self._ops):
            fn()

    # ------------------------------------------------------------------ ops

    def matmul(self, a, b):
        """Matrix product for 1-D/2-D operands; inner dimensions must match."""
        ad, bd = a.data, b.data
        if ad.ndim not in (1, 2) or bd.ndim not in (1, 2):
            raise ShapeError(f"matmul takes 1-D or 2-D tensors, got {ad.shape} and {bd.shape}")
        if ad.shape[-1] != bd.shape[0]:
            raise ShapeError(f"matmul inner dimensions differ: {ad.shape} vs {bd.shape}")
        out = Tensor._wrap(ad @ bd)
        if self.record:
            def bwd():
                g = out.grad
                if g is None:
                    return
                if ad.ndim == 2 and bd.ndim == 2:
                    a.accumulate_grad(g @ bd.T)
                    b.accumulate_grad(ad.T @ g)
                elif ad.ndim == 2 and bd.ndim == 1:
                    a.accumulate_grad(np.outer(g, bd))
                    b.accumulate_grad(ad.T @ g)
                elif ad.ndim == 1 and bd.ndim == 2:
                    a.accumulate_grad(bd @ g)
                    b.accumulate_grad(np.outer(ad, g))
                else:
                    a.accumulate_grad(g * bd)
                    b.accumulate_grad(g * ad)
            self._ops.append(bwd)
        return out

    def add(self, a, b):
        """Elementwise sum; shapes must be identical."""
        if a.shape != b.shape:
            raise ShapeError(f"add shapes differ: {a.shape} vs {b.shape}")
        out = Tensor._wrap(a.data + b.data)
        if self.record:
            def bwd():
                g = out.grad
                if g is None:
                    return
                a.accumulate_grad(g)
                b.accumulate_grad(g)
            self._ops.append(bwd)
        return out

    def mul(self, a, b):
        """Elementwise product; shapes must be identical."""
        if a.shape != b.shape:
            raise ShapeError(f"mul shapes differ: {a.shape} vs {b.shape}")
        out = Tensor._wrap(a.data * b.data)
        if self.record:
            def bwd():
                g = out.grad
                if g is None:
                    return
                a.accumulate_grad(g * b.data)
                b.accumulate_grad(g * a.data)
            self._ops.append(bwd)
        return out

    def sigmoid(self, x):
        out = Tensor._wrap(_stable_sigmoid(x.data))
        if self.record:
            def bwd():
                g = out.grad
                if g is None:
                    return
                y = out.data
                x.accumulate_grad(g * y * (1.0 - y))
            self._ops.append(bwd)
        return out

    def tanh(self, x):
        out = Tensor._wrap(np.tanh(x.data))
        if self.record:
            def bwd():
                g = out.grad
                if g is None:
                    return
                y = out.data
                x.accumulate_grad(g * (1.0 - y * y))
            self._ops.append(bwd)
        return out

    def concat(self, a, b, axis=0):
        """Concatenate along ``axis``; shapes must agree everywhere else."""
        ad, bd = a.data, b.data
        if ad.ndim != bd.ndim:
            raise ShapeError(f"concat ranks differ: {ad.shape} vs {bd.shape}")
        if not 0 <= axis < max(ad.ndim, 1):
            raise ShapeError(f"concat axis {axis} invalid for shape {ad.shape}")
        for d in range(ad.ndim):
            if d != axis and ad.shape[d] != bd.shape[d]:
                raise ShapeError(f"concat shapes differ off axis {axis}: {ad.shape} vs {bd.shape}")
        out = Tensor._wrap(np.concatenate([ad, bd], axis=axis))
        if self.record:
            split = ad.shape[axis]
            def bwd():
                g = out.grad
                if g is None:
                    return
                idx_a = tuple(slice(None) if d != axis else slice(0, split) for d in range(g.ndim))
                idx_b = tuple(slice(None) if d != axis else slice(split, None) for d in range(g.ndim))
                a.accumulate_grad(g[idx_a])
                b.accumulate_grad(g[idx_b])
            self._ops.append(bwd)
        return out

    def narrow(self, x, start, length):
        """Contiguous segment ``x[start:start+length]`` of a 1-D tensor."""
        if x.data.ndim != 1:
            raise ShapeError(f"narrow takes a 1-D tensor, got shape {x.shape}")
        if start < 0 or length < 1 or start + length > x.data.shape[0]:
            raise ShapeError(f"narrow [{start}:{start + length}] out of range for shape {x.shape}")
        out = Tensor._wrap(x.data[start:start + length].copy())
        if self.record:
            def bwd():
                g = out.grad
                if g is None:
                    return
                if x.grad is None:
                    x.grad = np.zeros_like(x.data)
                x.grad[start:start + length] += g
            self._ops.append(bwd)
        return out

    def row(self, e, index):
        """Row ``index`` of a 2-D tensor (embedding lookup)."""
        if e.data.ndim != 2:
            raise ShapeError(f"row takes a 2-D tensor, got shape {e.shape}")
        n_rows = e.data.shape[0]
        if not 0 <= index < n_rows:
            raise IndexError(f"row index {index} out of range for {n_rows} rows")
        out = Tensor._wrap(e.data[index].copy())
        if self.record:
            def bwd():
                g = out.grad
                if g is None:
                    return
                if e.grad is None:
                    e.grad = np.zeros_like(e.data)
                e.grad[index] += g
            self._ops.append(bwd)
        return out

    def stack(self, tensors):
        """Stack equally sized 1-D tensors into a 2-D tensor, one per row."""
        tensors = list(tensors)
        if not tensors:
            raise ShapeError("stack of zero tensors")
        width = tensors[0].data.shape
        for t in tensors:
            if t.data.ndim != 1 or t.data.shape != width:
                raise ShapeError(f"stack needs equal 1-D shapes, got {t.shape} vs {width}")
        out = Tensor._wrap(np.stack([t.data for t in tensors]))
        if self.record:
            def bwd():
                g = out.grad
                if g is None:
                    return
                for i, t in enumerate(tensors):
                    t.accumulate_grad(g[i])
            self._ops.append(bwd)
        return out

    def softmax(self, x):
        """Probability simplex projection of a 1-D tensor, computed with
        max-subtraction so large inputs cannot overflow."""
        if x.data.ndim != 1:
            raise ShapeError(f"softmax takes a 1-D tensor, got shape {x.shape}")
        if x.data.shape[0] < 1:
            raise ShapeError("softmax of an empty tensor")
        shifted = x.data - x.data.max()
        ex = np.exp(shifted)
        out = Tensor._wrap(ex / ex.sum())
        if self.record:
            def bwd():
                g = out.grad
                if g is None:
                    return
                y = out.data
                x.accumulate_grad(y * (g - float(g @ y)))
            self._ops.append(bwd)
        return out

    def cross_entropy(self, logits, target):
        """Negative log softmax probability of ``target``, fused for
        stability. Backward is softmax(logits) minus the target one-hot."""
        if logits.data.ndim != 1:
            raise ShapeError(f"cross_entropy takes 1-D logits, got shape {logits.shape}")
        n = logits.data.shape[0]
        if not 0 <= target < n:
            raise IndexError(f"cross_entropy target {target} out of range for {n} classes")
        shifted = logits.data - logits.data.max()
        lse = float(np.log(np.exp(shifted).sum()))
        out = Tensor._wrap(np.asarray(lse - shifted[target]))
        if self.record:
            def bwd():
                g = out.grad
                if g is None:
                    return
                p = np.exp(shifted)
                p /= p.sum()
                p[target] -= 1.0
                logits.accumulate_grad(p * float(g))
            self._ops.append(bwd)
        return out

    def sum(self, x):
        """Sum of all entries, as a scalar tensor."""
        out = Tensor._wrap(np.asarray(x.data.sum()))
        if self.record:
            def bwd():
                g = out.grad
                if g is None:
                    return
                x.accumulate_grad(np.full_like(x.data, float(g)))
            self._ops.append(bwd)
        return out

    def scale(self, x, c):
        """Multiply by a plain python float."""
        c = float(c)
        out = Tensor._wrap(x.data * c)
        if self.record:
            def bwd():
                g = out.grad
                if g is None:
                    return
                x.accumulate_grad(g * c)
            self._ops.append(bwd)
        return out

    def smul(self, x, s):
        """Multiply a tensor by a scalar tensor."""
        if s.data.size != 1:
            raise ShapeError(f"smul scalar has shape {s.shape}")
        sval = float(s.data.reshape(()))
        out = Tensor._wrap(x.data * sval)
        if self.record:
            def bwd():
                g = out.grad
                if g is None:
                    return
                x.accumulate_grad(g * sval)
                s.accumulate_grad(np.asarray((x.data * g).sum()).reshape(s.data.shape))
            self._ops.append(bwd)
        return out

    def reciprocal(self, s):
        """1/s for a scalar tensor."""
        if s.data.size != 1:
            raise ShapeError(f"reciprocal takes a scalar, got shape {s.shape}")
        sval = float(s.data.reshape(()))
        out = Tensor._wrap(np.asarray(1.0 / sval).reshape(s.data.shape))
        if self.record:
            def bwd():
                g = out.grad
                if g is None:
                    return
                s.accumulate_grad(-g / (sval * sval))
            self._ops.append(bwd)
        return out
