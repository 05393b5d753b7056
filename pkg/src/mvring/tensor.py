"""Minimal dense-tensor substrate with reverse-mode autodiff.

Tensors wrap numpy arrays (float64 by default, float32 supported) and record
a dynamic graph over a closed primitive set: matmul, elementwise arithmetic,
exp/log/sqrt/sigmoid/softplus, softmax, layer norm, reductions,
reshape/transpose/concat, basic slicing, row gather, zero padding, 3x3
unfolding, average pooling, bilinear upsampling and a first-order linear
recurrence. `backward` replays the graph in a fixed topological order, so
repeated backward passes are bit-identical.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "GradCheckReport",
    "MvtError",
    "concat",
    "matmul",
    "softmax",
    "layer_norm",
    "avg_pool2d",
    "bilinear_upsample2d",
    "pad2d",
    "unfold3x3",
    "take_rows",
    "linear_recurrence",
    "grad_check",
    "save_mvt",
    "load_mvt",
]

_FLOAT_DTYPES = (np.float32, np.float64)


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _acc(node, g):
    """Accumulate a gradient contribution, borrowing the first array."""
    if node.grad is None:
        node.grad = g
        node._grad_borrowed = True
    elif node._grad_borrowed:
        node.grad = node.grad + g
        node._grad_borrowed = False
    else:
        node.grad += g


def _owned_grad(node):
    """Gradient buffer that is safe to scatter into in place."""
    if node.grad is None:
        node.grad = np.zeros_like(node.data)
    elif node._grad_borrowed:
        node.grad = node.grad.copy()
    node._grad_borrowed = False
    return node.grad


class Tensor:
    """A dense N-d array node in a dynamic autodiff graph."""

    __slots__ = ("data", "grad", "requires_grad", "_grad_borrowed",
                 "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=np.float64,
                 _parents=(), _backward=None):
        if isinstance(data, Tensor):
            raise TypeError("wrap raw array data, not another Tensor")
        if isinstance(data, np.ndarray) and data.dtype in _FLOAT_DTYPES:
            self.data = data
        else:
            self.data = np.asarray(data, dtype=dtype)
        self.grad = None
        self._grad_borrowed = False
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents if self.requires_grad else ()
        self._backward = _backward if self.requires_grad else None

    # -- basic introspection -------------------------------------------------

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
        return float(self.data)

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"

    # -- graph machinery -----------------------------------------------------

    def _toposort(self):
        order, seen, stack = [], set(), [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            # reversed so parents are visited left-to-right (fixed order)
            for p in reversed(node._parents):
                if id(p) not in seen:
                    stack.append((p, False))
        return order

    def backward(self, seed=None):
        """Accumulate gradients of this (scalar) tensor into the graph."""
        if not self.requires_grad:
            raise RuntimeError("backward on a tensor that requires no grad")
        if seed is None:
            if self.data.size != 1:
                raise RuntimeError("backward without seed needs a scalar output")
            seed = np.ones_like(self.data)
        order = self._toposort()
        _acc(self, np.asarray(seed, dtype=self.data.dtype))
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)

    def zero_grad(self):
        self.grad = None
        self._grad_borrowed = False

    def grad_array(self):
        """Gradient as an array, zeros if this leaf was never reached."""
        return self.grad if self.grad is not None else np.zeros_like(self.data)

    # -- elementwise arithmetic ----------------------------------------------

    def _coerce(self, other):
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.data.dtype))

    def __add__(self, other):
        other = self._coerce(other)
        out = Tensor(self.data + other.data, _parents=(self, other))

        def backward(g):
            if self.requires_grad:
                _acc(self, _unbroadcast(g, self.data.shape))
            if other.requires_grad:
                _acc(other, _unbroadcast(g, other.data.shape))

        out._backward = backward if out.requires_grad else None
        return out

    __radd__ = __add__

    def __mul__(self, other):
        other = self._coerce(other)
        out = Tensor(self.data * other.data, _parents=(self, other))

        def backward(g):
            if self.requires_grad:
                _acc(self, _unbroadcast(g * other.data, self.data.shape))
            if other.requires_grad:
                _acc(other, _unbroadcast(g * self.data, other.data.shape))

        out._backward = backward if out.requires_grad else None
        return out

    __rmul__ = __mul__

    def __neg__(self):
        return self * (-1.0)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) + (-self)

    def __truediv__(self, other):
        other = self._coerce(other)
        out = Tensor(self.data / other.data, _parents=(self, other))

        def backward(g):
            if self.requires_grad:
                _acc(self, _unbroadcast(g / other.data, self.data.shape))
            if other.requires_grad:
                _acc(other, _unbroadcast(-g * self.data / (other.data * other.data),
                                         other.data.shape))

        out._backward = backward if out.requires_grad else None
        return out

    def __matmul__(self, other):
        return matmul(self, other)

    # -- elementwise nonlinearities -------------------------------------------

    def exp(self):
        out = Tensor(np.exp(self.data), _parents=(self,))

        def backward(g):
            _acc(self, g * out.data)

        out._backward = backward if out.requires_grad else None
        return out

    def log(self):
        out = Tensor(np.log(self.data), _parents=(self,))

        def backward(g):
            _acc(self, g / self.data)

        out._backward = backward if out.requires_grad else None
        return out

    def sqrt(self):
        out = Tensor(np.sqrt(self.data), _parents=(self,))

        def backward(g):
            _acc(self, g * (0.5 / out.data))

        out._backward = backward if out.requires_grad else None
        return out

    def sigmoid(self):
        x = self.data
        y = np.empty_like(x)
        pos = x >= 0
        y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        y[~pos] = ex / (1.0 + ex)
        out = Tensor(y, _parents=(self,))

        def backward(g):
            _acc(self, g * (out.data * (1.0 - out.data)))

        out._backward = backward if out.requires_grad else None
        return out

    def softplus(self):
        x = self.data
        out = Tensor(np.logaddexp(0.0, x), _parents=(self,))

        def backward(g):
            pos = x >= 0
            s = np.empty_like(x)
            s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
            ex = np.exp(x[~pos])
            s[~pos] = ex / (1.0 + ex)
            _acc(self, g * s)

        out._backward = backward if out.requires_grad else None
        return out

    def silu(self):
        x = self.data
        pos = x >= 0
        sig = np.empty_like(x)
        sig[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        sig[~pos] = ex / (1.0 + ex)
        out = Tensor(x * sig, _parents=(self,))

        def backward(g):
            _acc(self, g * (sig * (1.0 + x * (1.0 - sig))))

        out._backward = backward if out.requires_grad else None
        return out

    # -- reductions ------------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims), _parents=(self,))

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            _acc(self, np.broadcast_to(g, self.data.shape).copy())

        out._backward = backward if out.requires_grad else None
        return out

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else np.prod(
            [self.data.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))

    # -- shape ops ---------------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src_shape = self.data.shape
        out = Tensor(self.data.reshape(shape), _parents=(self,))

        def backward(g):
            _acc(self, g.reshape(src_shape))

        out._backward = backward if out.requires_grad else None
        return out

    def transpose(self, axes):
        axes = tuple(axes)
        inv = tuple(np.argsort(axes))
        out = Tensor(self.data.transpose(axes), _parents=(self,))

        def backward(g):
            _acc(self, g.transpose(inv))

        out._backward = backward if out.requires_grad else None
        return out

    def swap_last2(self):
        axes = list(range(self.ndim))
        axes[-1], axes[-2] = axes[-2], axes[-1]
        return self.transpose(axes)

    def __getitem__(self, idx):
        """Basic slicing only; fancy gathers go through take_rows."""
        out = Tensor(self.data[idx], _parents=(self,))

        def backward(g):
            _owned_grad(self)[idx] += g

        out._backward = backward if out.requires_grad else None
        return out


# -- construction helpers ------------------------------------------------------


def concat(tensors, axis=0):
    tensors = list(tensors)
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis),
                 _parents=tuple(tensors))
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                _acc(t, g[tuple(sl)])

    out._backward = backward if out.requires_grad else None
    return out


def matmul(a, b):
    """a[..., m, k] @ b[..., k, n]; batch dims must match, or either side 2-D."""
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ValueError(
            f"matmul inner dims differ: {a.data.shape} @ {b.data.shape}")
    if a.ndim > 2 and b.ndim > 2 and a.data.shape[:-2] != b.data.shape[:-2]:
        raise ValueError("matmul batch dims must match unless one side is 2-D")
    out = Tensor(np.matmul(a.data, b.data), _parents=(a, b))

    def backward(g):
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            if ga.ndim > a.ndim:
                ga = ga.sum(axis=tuple(range(ga.ndim - a.ndim)))
            _acc(a, ga)
        if b.requires_grad:
            if b.ndim == 2 and a.ndim > 2:
                k = a.data.shape[-1]
                n = g.shape[-1]
                gb = np.matmul(a.data.reshape(-1, k).T, g.reshape(-1, n))
            else:
                gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
                if gb.ndim > b.ndim:
                    gb = gb.sum(axis=tuple(range(gb.ndim - b.ndim)))
            _acc(b, gb)

    out._backward = backward if out.requires_grad else None
    return out


def softmax(x, axis=-1):
    """Numerically stable softmax along `axis`; rows sum to 1."""
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y, _parents=(x,))

    def backward(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        _acc(x, y * (g - dot))

    out._backward = backward if out.requires_grad else None
    return out


def layer_norm(x, gain, bias, axis=-1, eps=1e-5):
    """(x - mean) / sqrt(var + eps) * gain + bias along one axis."""
    mu = x.data.mean(axis=axis, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = Tensor(xhat * gain.data + bias.data, _parents=(x, gain, bias))

    def backward(g):
        if gain.requires_grad:
            _acc(gain, _unbroadcast(g * xhat, gain.data.shape))
        if bias.requires_grad:
            _acc(bias, _unbroadcast(g, bias.data.shape))
        if x.requires_grad:
            gx = g * gain.data
            m1 = gx.mean(axis=axis, keepdims=True)
            m2 = (gx * xhat).mean(axis=axis, keepdims=True)
            _acc(x, inv * (gx - m1 - xhat * m2))

    out._backward = backward if out.requires_grad else None
    return out


def avg_pool2d(x, stride):
    """Non-overlapping stride x stride window means over the last two dims."""
    if stride < 1 or int(stride) != stride:
        raise ValueError(f"pool stride must be a positive integer, got {stride}")
    stride = int(stride)
    h, w = x.data.shape[-2:]
    if h % stride or w % stride:
        raise ValueError(f"pool stride {stride} does not divide dims {h}x{w}")
    if stride == 1:
        return x + 0.0
    lead = x.data.shape[:-2]
    hh, ww = h // stride, w // stride
    blk = x.data.reshape(lead + (hh, stride, ww, stride))
    out = Tensor(blk.mean(axis=(-3, -1)), _parents=(x,))

    def backward(g):
        gg = g[..., :, None, :, None] * (1.0 / (stride * stride))
        _acc(x, np.broadcast_to(gg, lead + (hh, stride, ww, stride)).reshape(
            x.data.shape).copy())

    out._backward = backward if out.requires_grad else None
    return out


def _upsample_matrix(n, s, dtype):
    """Interpolation matrix (n*s, n): half-pixel centers, edges clamped."""
    src = (np.arange(n * s, dtype=np.float64) + 0.5) / s - 0.5
    src = np.clip(src, 0.0, n - 1.0)
    i0 = np.floor(src).astype(np.int64)
    i0 = np.minimum(i0, n - 2) if n > 1 else i0
    w = src - i0
    mat = np.zeros((n * s, n), dtype=np.float64)
    rows = np.arange(n * s)
    if n == 1:
        mat[:, 0] = 1.0
    else:
        mat[rows, i0] = 1.0 - w
        mat[rows, i0 + 1] += w
    return mat.astype(dtype)


def bilinear_upsample2d(x, factor):
    """Bilinear upsample of the last two dims by an integer factor."""
    if factor < 1 or int(factor) != factor:
        raise ValueError(f"upsample factor must be a positive integer, got {factor}")
    factor = int(factor)
    if factor == 1:
        return x + 0.0
    h, w = x.data.shape[-2:]
    uh = _upsample_matrix(h, factor, x.data.dtype)
    uw = _upsample_matrix(w, factor, x.data.dtype)
    y = np.matmul(uh, np.matmul(x.data, uw.T))
    out = Tensor(y, _parents=(x,))

    def backward(g):
        _acc(x, np.matmul(uh.T, np.matmul(g, uw)))

    out._backward = backward if out.requires_grad else None
    return out


def pad2d(x, pad):
    """Zero-pad the last two dims by `pad` on every side."""
    widths = [(0, 0)] * (x.ndim - 2) + [(pad, pad), (pad, pad)]
    out = Tensor(np.pad(x.data, widths), _parents=(x,))

    def backward(g):
        sl = (Ellipsis, slice(pad, -pad), slice(pad, -pad))
        _acc(x, g[sl])

    out._backward = backward if out.requires_grad else None
    return out


def unfold3x3(x):
    """Stack the 9 same-padded 3x3 shifts of [..., C, H, W] along channels.

    Output channel block k*C..(k+1)*C holds shift (dy, dx) = (k//3, k%3) of
    the zero-padded input; a matmul against [9C, Cout] completes a 3x3 conv.
    """
    *lead, c, h, w = x.data.shape
    xp = np.pad(x.data, [(0, 0)] * len(lead) + [(0, 0), (1, 1), (1, 1)])
    views = [xp[..., dy:dy + h, dx:dx + w]
             for dy in (0, 1, 2) for dx in (0, 1, 2)]
    out = Tensor(np.concatenate(views, axis=-3), _parents=(x,))

    def backward(g):
        gp = np.zeros_like(xp)
        for k, (dy, dx) in enumerate((dy, dx) for dy in (0, 1, 2)
                                     for dx in (0, 1, 2)):
            gp[..., dy:dy + h, dx:dx + w] += g[..., k * c:(k + 1) * c, :, :]
        _acc(x, gp[..., 1:-1, 1:-1])

    out._backward = backward if out.requires_grad else None
    return out


def scatter_plan(idx):
    """Precomputed segment-sum plan for repeated take_rows backward passes."""
    flat = np.asarray(idx).ravel()
    order = np.argsort(flat, kind="stable")
    sorted_idx = flat[order]
    starts = np.concatenate([[0], np.flatnonzero(np.diff(sorted_idx)) + 1])
    return order, starts, sorted_idx[starts]


def take_rows(x, idx, inverse=None, plan=None):
    """Gather rows of x along axis 0 with an integer index array.

    Output shape is idx.shape + x.shape[1:]. The backward pass scatter-adds;
    pass `inverse` when idx is a permutation (backward becomes a gather) or a
    cached `plan` from scatter_plan for a fast segment-sum scatter.
    """
    idx = np.asarray(idx)
    out = Tensor(x.data[idx], _parents=(x,))

    def backward(g):
        if inverse is not None:
            _acc(x, g[inverse])
        elif plan is not None:
            order, starts, uniq = plan
            tail = x.data.shape[1:]
            gflat = g.reshape(-1, int(np.prod(tail, dtype=np.int64)) or 1)
            sums = np.add.reduceat(gflat[order], starts, axis=0)
            buf = _owned_grad(x)
            buf.reshape(buf.shape[0], -1)[uniq] += sums
        else:
            np.add.at(_owned_grad(x), idx, g)

    out._backward = backward if out.requires_grad else None
    return out


def linear_recurrence(a, u, chunk=None):
    """h[0] = u[0]; h[l] = a[l] * h[l-1] + u[l], elementwise over trailing dims.

    The workhorse beneath the selective scan. Dispatches to the compiled
    kernel when available; `chunk` batches the work without changing results.
    """
    from ._kernel import linrec_array  # late import avoids a cycle

    if a.data.shape != u.data.shape:
        raise ValueError(f"recurrence shapes differ: {a.data.shape} vs {u.data.shape}")
    h = linrec_array(a.data, u.data, chunk=chunk)
    out = Tensor(h, _parents=(a, u))

    def backward(g):
        # reverse-time recurrence: gh[l] = g[l] + a[l+1] * gh[l+1]
        a_rev = np.concatenate([np.ones_like(a.data[:1]), a.data[:0:-1]], axis=0)
        gh = linrec_array(a_rev, g[::-1], chunk=chunk)[::-1]
        if u.requires_grad:
            _acc(u, gh)
        if a.requires_grad:
            h_prev = np.concatenate([np.zeros_like(h[:1]), h[:-1]], axis=0)
            _acc(a, gh * h_prev)

    out._backward = backward if out.requires_grad else None
    return out


# -- parameter tape ---------------------------------------------------------------


class Tape:
    """Parameter registry with a seeded RNG for reproducible initialisation."""

    def __init__(self, seed=0, dtype=np.float64):
        self.rng = np.random.default_rng(seed)
        self.dtype = dtype
        self.params = {}

    def param(self, name, array):
        if name in self.params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(array, dtype=self.dtype), requires_grad=True)
        self.params[name] = t
        return t

    def normal(self, name, shape, scale=1.0):
        return self.param(name, self.rng.standard_normal(shape) * scale)

    def zeros(self, name, shape):
        return self.param(name, np.zeros(shape))

    def full(self, name, shape, value):
        return self.param(name, np.full(shape, value, dtype=np.float64))

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def tensors(self):
        return list(self.params.values())

    def named(self):
        return dict(self.params)


# -- gradient checking ---------------------------------------------------------------


@dataclass
class GradCheckReport:
    max_rel_err: float
    tol: float
    n_checked: int
    worst: tuple = ()
    per_param: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.max_rel_err <= self.tol


def grad_check(f, params, eps=1e-5, tol=1e-4, max_entries=None, rng=None):
    """Compare tape gradients of scalar `f()` against central finite differences.

    `params` is a list of requires_grad tensors read by `f`. Relative error is
    |a - fd| / max(1, |a|, |fd|), so near-zero gradients compare absolutely.
    `max_entries` caps the number of coordinates checked per parameter
    (deterministically subsampled when `rng` is given, else a strided subset).
    """
    params = list(params)
    for p in params:
        p.zero_grad()
    out = f()
    if not np.isfinite(out.data).all():
        raise ValueError("grad_check: function value is not finite")
    out.backward()
    analytic = [p.grad_array().copy() for p in params]

    max_rel = 0.0
    worst = ()
    n_checked = 0
    per_param = {}
    for k, p in enumerate(params):
        flat = p.data.reshape(-1)
        n = flat.size
        if max_entries is not None and n > max_entries:
            if rng is not None:
                sel = np.sort(rng.choice(n, size=max_entries, replace=False))
            else:
                sel = np.linspace(0, n - 1, max_entries).astype(np.int64)
        else:
            sel = np.arange(n)
        p_max = 0.0
        for i in sel:
            old = flat[i]
            flat[i] = old + eps
            fp = float(f().data)
            flat[i] = old - eps
            fm = float(f().data)
            flat[i] = old
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise ValueError("grad_check: perturbed function value is not finite")
            fd = (fp - fm) / (2.0 * eps)
            a = float(analytic[k].reshape(-1)[i])
            rel = abs(a - fd) / max(1.0, abs(a), abs(fd))
            n_checked += 1
            if rel > p_max:
                p_max = rel
            if rel > max_rel:
                max_rel = rel
                worst = (k, int(i), a, fd)
        per_param[k] = p_max
    return GradCheckReport(max_rel_err=max_rel, tol=tol, n_checked=n_checked,
                           worst=worst, per_param=per_param)


# -- .mvt binary tensor files ---------------------------------------------------------


class MvtError(ValueError):
    """Malformed or truncated .mvt tensor file."""


_MVT_MAGIC = b"MVT1"
_DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODE_FOR = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


def save_mvt(path, array):
    """Write an array as MVT1: magic, dtype code, ndim, u32 extents, payload."""
    arr = np.asarray(array)
    if arr.dtype not in _CODE_FOR:
        raise MvtError(f"unsupported dtype {arr.dtype} for {path}")
    code = _CODE_FOR[arr.dtype]
    with open(path, "wb") as fh:
        fh.write(_MVT_MAGIC)
        fh.write(struct.pack("<BB", code, arr.ndim))
        for extent in arr.shape:
            fh.write(struct.pack("<I", extent))
        fh.write(np.ascontiguousarray(arr, dtype=_DTYPE_CODES[code]).tobytes())


def load_mvt(path):
    with open(path, "rb") as fh:
        head = fh.read(6)
        if len(head) < 6 or head[:4] != _MVT_MAGIC:
            raise MvtError(f"{path}: bad magic, not an MVT1 file")
        code, ndim = head[4], head[5]
        if code not in _DTYPE_CODES:
            raise MvtError(f"{path}: unknown dtype code {code}")
        raw = fh.read(4 * ndim)
        if len(raw) < 4 * ndim:
            raise MvtError(f"{path}: truncated header")
        shape = struct.unpack(f"<{ndim}I", raw) if ndim else ()
        if any(s < 1 for s in shape):
            raise MvtError(f"{path}: zero extent in shape {shape}")
        dtype = _DTYPE_CODES[code]
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        payload = fh.read(count * dtype.itemsize + 1)
        if len(payload) != count * dtype.itemsize:
            raise MvtError(f"{path}: corrupt payload "
                           f"({len(payload)} bytes for {count} values)")
    return np.frombuffer(payload, dtype=dtype).reshape(shape).copy()
