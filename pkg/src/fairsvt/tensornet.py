"""Minimal reverse-mode autodiff core.

A small fixed operator set over float64 numpy arrays, enough to express the
transcription networks, the attribute adversary, and their losses.  Every
operator carries an exact analytic backward pass; `grad_check` verifies any
composed scalar loss against central finite differences.  Keeping the core
tiny (one file, no graph compilation) makes the gradient story auditable.

Tensors are either leaves (parameters or constants) or op outputs.  Gradients
accumulate into `.grad` of leaf tensors with ``requires_grad=True`` only;
intermediate adjoints live in a per-backward scratch dict, so repeated
backward passes over a shared graph never see stale state.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Tensor:
    """A float64 array plus optional gradient bookkeeping."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor holds non-finite values")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._vjp = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        """Same values, cut off from the graph (no gradient flows through)."""
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.grad = None
        out.requires_grad = False
        out._parents = ()
        out._vjp = None
        return out

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's `.grad`.

        Only valid on scalar outputs.  Adjoints of interior nodes are local
        to this call; leaves with ``requires_grad`` accumulate (so gradients
        of several losses can be combined by calling backward per loss).
        """
        if self.data.shape != ():
            raise ValueError("backward() requires a scalar tensor")
        order = _topo_order(self)
        adjoint = {id(self): np.ones(())}
        for node in reversed(order):
            a = adjoint.pop(id(node), None)
            if a is None:
                continue
            if node._vjp is None:
                if node.requires_grad:
                    node.grad = a if node.grad is None else node.grad + a
                continue
            for parent, pa in zip(node._parents, node._vjp(a)):
                if pa is None or not parent.requires_grad:
                    continue
                prev = adjoint.get(id(parent))
                adjoint[id(parent)] = pa if prev is None else prev + pa
        for node in order:
            if node._vjp is None and node.requires_grad and node.grad is None:
                node.grad = np.zeros_like(node.data)

    # scalar/elementwise arithmetic used to compose losses
    def __add__(self, other):
        return _add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return _add(self, _scale(_as_tensor(other), -1.0))

    def __rsub__(self, other):
        return _add(_as_tensor(other), _scale(self, -1.0))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor*tensor products go through the op set; * takes a scalar")
        return _scale(self, float(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return _scale(self, 1.0 / float(other))

    def __neg__(self):
        return _scale(self, -1.0)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"


def _topo_order(root: Tensor):
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _node(data: np.ndarray, parents, vjp) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise FloatingPointError("non-finite intermediate value")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = any(p.requires_grad for p in parents)
    out._parents = tuple(parents)
    out._vjp = vjp if out.requires_grad else None
    return out


def _add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape and a.shape != () and b.shape != ():
        raise ValueError(f"add shape mismatch {a.shape} vs {b.shape}")
    data = a.data + b.data

    def vjp(g):
        ga = g if a.shape == data.shape else np.sum(g)
        gb = g if b.shape == data.shape else np.sum(g)
        return ga, gb

    return _node(data, (a, b), vjp)


def _scale(x: Tensor, c: float) -> Tensor:
    return _node(x.data * c, (x,), lambda g: (g * c,))


# ---------------------------------------------------------------------------
# operator set
# ---------------------------------------------------------------------------

def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Affine map over the last dim: (..., Din) @ (Din, Dout) + (Dout,)."""
    if x.shape[-1] != w.shape[0]:
        raise ValueError(f"linear shape mismatch: x {x.shape} vs w {w.shape}")
    data = x.data @ w.data
    if b is not None:
        if b.shape != (w.shape[1],):
            raise ValueError(f"bias shape {b.shape} incompatible with w {w.shape}")
        data = data + b.data

    def vjp(g):
        gf = g.reshape(-1, w.shape[1])
        xf = x.data.reshape(-1, w.shape[0])
        gx = (gf @ w.data.T).reshape(x.shape)
        gw = xf.T @ gf
        gb = gf.sum(axis=0) if b is not None else None
        return (gx, gw, gb) if b is not None else (gx, gw)

    parents = (x, w) if b is None else (x, w, b)
    return _node(data, parents, vjp)


def conv1d(x: Tensor, kernel: Tensor, b: Tensor | None = None) -> Tensor:
    """Temporal convolution, stride 1, same padding.

    ``x`` is (T, Cin) or (B, T, Cin); ``kernel`` is (k, Cin, Cout).
    """
    if kernel.ndim != 3:
        raise ValueError("conv1d kernel must be (k, c_in, c_out)")
    k, cin, cout = kernel.shape
    if x.shape[-1] != cin:
        raise ValueError(f"conv1d channel mismatch: x {x.shape} vs kernel {kernel.shape}")
    squeeze = x.ndim == 2
    x3 = x.data[None] if squeeze else x.data
    if x3.ndim != 3:
        raise ValueError("conv1d input must be (T, C) or (B, T, C)")
    t = x3.shape[1]
    lo, hi = (k - 1) // 2, k // 2
    xp = np.pad(x3, ((0, 0), (lo, hi), (0, 0)))
    win = sliding_window_view(xp, k, axis=1)  # (B, T, Cin, k)
    data = np.einsum("btck,kco->bto", win, kernel.data, optimize=True)
    if b is not None:
        if b.shape != (cout,):
            raise ValueError(f"bias shape {b.shape} incompatible with kernel {kernel.shape}")
        data = data + b.data
    if squeeze:
        data = data[0]

    def vjp(g):
        g3 = g[None] if squeeze else g
        gk = np.einsum("btck,bto->kco", win, g3, optimize=True)
        gxp = np.zeros_like(xp)
        for j in range(k):
            gxp[:, j:j + t] += g3 @ kernel.data[j].T
        gx = gxp[:, lo:lo + t]
        if squeeze:
            gx = gx[0]
        gb = g3.sum(axis=(0, 1)) if b is not None else None
        return (gx, gk, gb) if b is not None else (gx, gk)

    parents = (x, kernel) if b is None else (x, kernel, b)
    return _node(data, parents, vjp)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0.0  # derivative at 0 is 0
    return _node(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(x: Tensor) -> Tensor:
    s = _sigmoid(x.data)
    return _node(s, (x,), lambda g: (g * s * (1.0 - s),))


def _softmax(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last dim."""
    s = _softmax(x.data)

    def vjp(g):
        dot = (g * s).sum(axis=-1, keepdims=True)
        return (s * (g - dot),)

    return _node(s, (x,), vjp)


def concat(parts, axis: int = -1) -> Tensor:
    """Concatenate along the last dim."""
    if axis != -1:
        raise ValueError("concat supports the last dim only")
    parts = [_as_tensor(p) for p in parts]
    widths = [p.shape[-1] for p in parts]
    data = np.concatenate([p.data for p in parts], axis=-1)

    def vjp(g):
        outs, start = [], 0
        for w in widths:
            outs.append(g[..., start:start + w])
            start += w
        return tuple(outs)

    return _node(data, parents=tuple(parts), vjp=vjp)


def slice_last(x: Tensor, start: int, stop: int) -> Tensor:
    """Take columns [start, stop) of the last dim (inverse of concat)."""
    if not (0 <= start < stop <= x.shape[-1]):
        raise ValueError(f"slice [{start}:{stop}) out of range for width {x.shape[-1]}")
    data = x.data[..., start:stop]

    def vjp(g):
        gx = np.zeros_like(x.data)
        gx[..., start:stop] = g
        return (gx,)

    return _node(data, (x,), vjp)


def temporal_mean(x: Tensor) -> Tensor:
    """Mean over the time axis: (..., T, D) -> (..., D)."""
    if x.ndim < 2:
        raise ValueError("temporal_mean needs a (..., T, D) tensor")
    t = x.shape[-2]
    data = x.data.mean(axis=-2)

    def vjp(g):
        return (np.broadcast_to(np.expand_dims(g, -2) / t, x.shape).copy(),)

    return _node(data, (x,), vjp)


def bce_with_logits(logits: Tensor, targets) -> Tensor:
    """Mean binary cross-entropy of logits against targets in [0, 1]."""
    t = np.asarray(targets, dtype=np.float64)
    t = np.broadcast_to(t, logits.shape)
    if np.any((t < 0.0) | (t > 1.0)):
        raise ValueError("bce targets must lie in [0, 1]")
    x = logits.data
    elem = np.maximum(x, 0.0) - x * t + np.log1p(np.exp(-np.abs(x)))
    n = max(x.size, 1)
    data = np.asarray(elem.sum() / n)

    def vjp(g):
        return (g * (_sigmoid(x) - t) / n,)

    return _node(data, (logits,), vjp)


def ce_with_logits(logits: Tensor, labels) -> Tensor:
    """Mean categorical cross-entropy; logits (..., C), integer labels (...)."""
    y = np.asarray(labels)
    if y.shape != logits.shape[:-1]:
        raise ValueError(f"labels shape {y.shape} incompatible with logits {logits.shape}")
    c = logits.shape[-1]
    yf = y.reshape(-1).astype(np.int64)
    if yf.size and (yf.min() < 0 or yf.max() >= c):
        raise ValueError(f"label class out of range [0, {c})")
    xf = logits.data.reshape(-1, c)
    m = xf.max(axis=-1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(xf - m).sum(axis=-1))
    n = max(yf.size, 1)
    data = np.asarray((lse - xf[np.arange(yf.size), yf]).sum() / n)

    def vjp(g):
        p = _softmax(xf)
        p[np.arange(yf.size), yf] -= 1.0
        return (g * p.reshape(logits.shape) / n,)

    return _node(data, (logits,), vjp)


def grad_reverse(x: Tensor, lam: float) -> Tensor:
    """Identity in the forward pass; backward multiplies the gradient by -lam."""
    if lam < 0:
        raise ValueError("grad_reverse scale must be >= 0")
    return _node(x.data, (x,), lambda g: (g * (-lam),))


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

def grad_check(fn, params, h: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``fn`` is a zero-argument callable that rebuilds the scalar loss from the
    current values of ``params`` (leaf tensors with requires_grad).  Relative
    error per element is |a - n| / max(1e-8, |a| + |n|).
    """
    if h <= 0:
        raise ValueError("h must be positive")
    for p in params:
        p.zero_grad()
    out = fn()
    if out.data.shape != ():
        raise ValueError("grad_check target must be scalar")
    out.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    worst = 0.0
    for p, ga in zip(params, analytic):
        for idx in np.ndindex(p.data.shape):
            orig = p.data[idx]
            p.data[idx] = orig + h
            fp = float(fn().data)
            p.data[idx] = orig - h
            fm = float(fn().data)
            p.data[idx] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise FloatingPointError("non-finite loss during grad check")
            num = (fp - fm) / (2.0 * h)
            a = ga[idx]
            err = abs(a - num) / max(1e-8, abs(a) + abs(num))
            worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# optimizers
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    """Per-parameter-group Adam accumulators (deterministic, bias-corrected)."""
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_init(params, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    return AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps,
                     m=[np.zeros_like(p.data) for p in params],
                     v=[np.zeros_like(p.data) for p in params])


def adam_step(params, grads, state: AdamState) -> AdamState:
    """One Adam update; mutates param data and state in place."""
    if not (len(params) == len(grads) == len(state.m)):
        raise ValueError("params/grads/state length mismatch")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape {g.shape} != param shape {p.data.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return state


def sgd_step(params, grads, lr: float) -> None:
    for p, g in zip(params, grads):
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape {g.shape} != param shape {p.data.shape}")
        p.data -= lr * g


# ---------------------------------------------------------------------------
# checkpoint file: magic, version, then (name, shape, float64 LE data) records
# ---------------------------------------------------------------------------

CHECKPOINT_MAGIC = b"TNETCKPT"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, named_arrays) -> None:
    """Write an ordered list of (name, float64 array) records."""
    items = list(named_arrays)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(items)))
        for name, arr in items:
            arr = np.ascontiguousarray(arr, dtype="<f8")
            nb = name.encode("utf-8")
            fh.write(struct.pack("<I", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path):
    """Read records written by `save_checkpoint`, order preserved."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"not a checkpoint file: bad magic {magic!r}")
        version, count = struct.unpack("<II", fh.read(8))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        items = []
        for _ in range(count):
            (nlen,) = struct.unpack("<I", fh.read(4))
            name = fh.read(nlen).decode("utf-8")
            (ndim,) = struct.unpack("<I", fh.read(4))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim)) if ndim else ()
            n = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(8 * n), dtype="<f8").reshape(shape)
            items.append((name, data.astype(np.float64)))
    return items
