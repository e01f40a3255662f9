"""Reverse-mode automatic differentiation over dense float64 arrays.

A ``Tape`` records every operation of a forward pass in execution order and
replays exact vector-Jacobian products in reverse.  The op set is exactly what
the attention-network forward pass needs: dense matmul, pointwise
nonlinearities, per-neighborhood (segmented) softmax and weighted sum, head
concatenation, mean pooling and cross-entropy.

``backward`` accepts a mode: in ``"guided"`` mode the backward rule of every
pointwise nonlinearity additionally zeroes negative upstream gradients, which
is what guided backpropagation needs.  Gradients accumulate with ``+=`` so a
single forward tape supports several backward passes; call ``zero_grads``
between them.
"""

from __future__ import annotations

import numpy as np

MODES = ("standard", "guided")


class Tensor:
    """A dense float64 array plus an optional gradient buffer."""

    __slots__ = ("values", "requires_grad", "grad")

    def __init__(self, values, requires_grad=False):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.values.shape

    def _accum(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        self.grad += g

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Ordered operation record; one tape per forward pass, one per thread."""

    def __init__(self):
        self._nodes = []   # (out_tensor, backward_fn(grad, mode), op name)
        self._tensors = []

    def tensor(self, values, requires_grad=False):
        t = Tensor(values, requires_grad)
        self._tensors.append(t)
        return t

    def _record(self, out, backward_fn, name):
        self._tensors.append(out)
        self._nodes.append((out, backward_fn, name))
        return out

    def zero_grads(self):
        for t in self._tensors:
            t.grad = None

    # ---- ops ----------------------------------------------------------

    def matmul(self, a, b):
        if a.values.ndim != 2 or b.values.ndim != 2 or a.values.shape[1] != b.values.shape[0]:
            raise ValueError(f"matmul shape mismatch: {a.values.shape} @ {b.values.shape}")
        out = Tensor(a.values @ b.values)

        def backward(g, mode):
            a._accum(g @ b.values.T)
            b._accum(a.values.T @ g)

        return self._record(out, backward, "matmul")

    def add(self, a, b):
        """Elementwise add; also supports a row-broadcast 1-D bias as ``b``."""
        av, bv = a.values, b.values
        if av.shape != bv.shape and not (av.ndim == 2 and bv.ndim == 1 and av.shape[1] == bv.shape[0]):
            raise ValueError(f"add shape mismatch: {av.shape} + {bv.shape}")
        out = Tensor(av + bv)

        def backward(g, mode):
            a._accum(g)
            b._accum(g if bv.shape == g.shape else g.sum(axis=0))

        return self._record(out, backward, "add")

    def relu(self, x):
        mask = x.values > 0
        out = Tensor(np.where(mask, x.values, 0.0))

        def backward(g, mode):
            if mode == "guided":
                g = np.where(g > 0, g, 0.0)
            x._accum(np.where(mask, g, 0.0))

        return self._record(out, backward, "relu")

    def elu(self, x):
        neg_exp = np.exp(np.minimum(x.values, 0.0))
        pos = x.values > 0
        out = Tensor(np.where(pos, x.values, neg_exp - 1.0))

        def backward(g, mode):
            if mode == "guided":
                g = np.where(g > 0, g, 0.0)
            x._accum(g * np.where(pos, 1.0, neg_exp))

        return self._record(out, backward, "elu")

    def gather_rows(self, x, index):
        index = np.asarray(index, dtype=np.intp)
        if index.size and (index.min() < 0 or index.max() >= x.values.shape[0]):
            raise IndexError("gather_rows index out of range")
        out = Tensor(x.values[index])

        def backward(g, mode):
            buf = np.zeros_like(x.values)
            np.add.at(buf, index, g)
            x._accum(buf)

        return self._record(out, backward, "gather_rows")

    def reshape(self, x, shape):
        out = Tensor(x.values.reshape(shape))

        def backward(g, mode):
            x._accum(g.reshape(x.values.shape))

        return self._record(out, backward, "reshape")

    def segment_softmax(self, scores, targets, n_nodes):
        """Softmax among entries sharing a target node, max-stabilized."""
        targets = np.asarray(targets, dtype=np.intp)
        if targets.size and (targets.min() < 0 or targets.max() >= n_nodes):
            raise IndexError("segment_softmax target out of range")
        s = scores.values
        if s.ndim != 1 or s.shape[0] != targets.shape[0]:
            raise ValueError("segment_softmax expects 1-D scores, one target per entry")
        gmax = np.full(n_nodes, -np.inf)
        np.maximum.at(gmax, targets, s)
        ex = np.exp(s - gmax[targets])
        denom = np.bincount(targets, weights=ex, minlength=n_nodes)
        out = Tensor(ex / denom[targets])

        def backward(g, mode):
            gdot = np.bincount(targets, weights=out.values * g, minlength=n_nodes)
            scores._accum(out.values * (g - gdot[targets]))

        return self._record(out, backward, "segment_softmax")

    def segment_weighted_sum(self, values, weights, targets, n_nodes):
        """Row i of the output is the weight-scaled sum of entries targeting i."""
        targets = np.asarray(targets, dtype=np.intp)
        if targets.size and (targets.min() < 0 or targets.max() >= n_nodes):
            raise IndexError("segment_weighted_sum target out of range")
        v, w = values.values, weights.values
        if v.ndim != 2 or w.ndim != 1 or v.shape[0] != w.shape[0] or v.shape[0] != targets.shape[0]:
            raise ValueError("segment_weighted_sum shape mismatch")
        acc = np.zeros((n_nodes, v.shape[1]))
        np.add.at(acc, targets, w[:, None] * v)
        out = Tensor(acc)

        def backward(g, mode):
            gt = g[targets]
            values._accum(w[:, None] * gt)
            weights._accum((v * gt).sum(axis=1))

        return self._record(out, backward, "segment_weighted_sum")

    def concat_cols(self, parts):
        """Rowwise concatenation of per-head outputs, in head order."""
        n = parts[0].values.shape[0]
        if any(p.values.ndim != 2 or p.values.shape[0] != n for p in parts):
            raise ValueError("concat_cols parts must be 2-D with equal row counts")
        out = Tensor(np.concatenate([p.values for p in parts], axis=1))
        widths = [p.values.shape[1] for p in parts]

        def backward(g, mode):
            off = 0
            for p, w in zip(parts, widths):
                p._accum(g[:, off:off + w])
                off += w

        return self._record(out, backward, "concat_cols")

    def global_mean_pool(self, x):
        if x.values.ndim != 2 or x.values.shape[0] == 0:
            raise ValueError("global_mean_pool expects a nonempty 2-D input")
        n = x.values.shape[0]
        out = Tensor(x.values.mean(axis=0))

        def backward(g, mode):
            x._accum(np.broadcast_to(g / n, x.values.shape).copy())

        return self._record(out, backward, "global_mean_pool")

    def pick(self, x, index):
        """Scalar entry of a 1-D tensor."""
        if x.values.ndim != 1:
            raise ValueError("pick expects a 1-D input")
        if not 0 <= index < x.values.shape[0]:
            raise IndexError("pick index out of range")
        out = Tensor(x.values[index])

        def backward(g, mode):
            buf = np.zeros_like(x.values)
            buf[index] = g
            x._accum(buf)

        return self._record(out, backward, "pick")

    def sum(self, x):
        out = Tensor(x.values.sum())

        def backward(g, mode):
            x._accum(np.full_like(x.values, g))

        return self._record(out, backward, "sum")

    def cross_entropy(self, logits, target):
        """Negative log-softmax of the target class, log-sum-exp stabilized."""
        lv = logits.values
        if lv.ndim != 1:
            raise ValueError("cross_entropy expects a 1-D logit vector")
        if not 0 <= target < lv.shape[0]:
            raise IndexError("cross_entropy target out of range")
        m = lv.max()
        lse = m + np.log(np.exp(lv - m).sum())
        out = Tensor(lse - lv[target])
        softmax = np.exp(lv - lse)

        def backward(g, mode):
            grad = softmax.copy()
            grad[target] -= 1.0
            logits._accum(g * grad)

        return self._record(out, backward, "cross_entropy")

    # ---- reverse pass -------------------------------------------------

    def backward(self, root, mode="standard"):
        """Populate grads of every tensor reachable from the scalar ``root``."""
        if mode not in MODES:
            raise ValueError(f"unknown backward mode {mode!r}")
        if root.values.shape != ():
            raise ValueError("backward root must be a scalar tensor")
        root._accum(np.float64(1.0))
        for out, backward_fn, _name in reversed(self._nodes):
            if out.grad is not None:
                backward_fn(out.grad, mode)
