"""A small reverse-mode autodiff engine over numpy arrays.

Only the operations the vocoder stack needs are provided. Every op records a
closure that maps the output gradient to one gradient per parent; ``backward``
walks the graph in reverse topological order and accumulates (``+=``) into
``Tensor.grad`` for every reachable tensor that requires grad.

Broadcasting is deliberately narrow: two tensors must have identical shapes,
or one of them must hold a single element.
"""

import contextlib
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels as K

_GRAD_ENABLED = True
_DEFAULT_DTYPE = np.dtype(np.float64)


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible for an op."""


def get_default_dtype():
    return _DEFAULT_DTYPE


def set_default_dtype(dtype):
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported dtype {dtype}; use float32 or float64")
    _DEFAULT_DTYPE = dtype


@contextlib.contextmanager
def default_dtype(dtype):
    previous = _DEFAULT_DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(previous)


def is_grad_enabled():
    return _GRAD_ENABLED


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


class Tensor:
    """n-dimensional real array with optional gradient and graph linkage."""

    __array_priority__ = 1000

    def __init__(self, data, requires_grad=False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            dtype = _DEFAULT_DTYPE
        self.data = np.asarray(data, dtype=dtype)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple = ()
        self._live: tuple = ()
        self._backward: Optional[Callable] = None

    # -- basic properties -------------------------------------------------
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

    @property
    def graph_node(self):
        return self._backward

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def detach(self):
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self):
        return len(self.data)

    # -- operators --------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return scale(self, 1.0 / other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def sum(self, axis=None):
        return sum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def make_node(data, parents: Sequence[Tensor], backward_fn):
    """Wrap ``data`` as the output of an op over ``parents``.

    ``backward_fn(grad)`` must return one gradient (or ``None``) per parent.
    The graph link is only recorded when grad mode is on and some parent
    requires grad. Which parents required grad is fixed here, at forward
    time, so un-freezing a module before ``backward()`` does not route
    gradient into it.
    """
    out = Tensor(data, dtype=data.dtype)
    live = tuple(p.requires_grad for p in parents)
    if _GRAD_ENABLED and any(live):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._live = live
        out._backward = backward_fn
    return out


def _topo_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p, live in zip(node._parents, node._live):
            if live and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor):
    """Accumulate d(loss)/d(t) into ``t.grad`` for every reachable tensor."""
    if loss.size != 1:
        raise ShapeError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise RuntimeError("loss does not require grad; nothing to differentiate")
    order = _topo_order(loss)
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.get(id(node))
        if g is None or node._backward is None:
            continue
        for parent, live, pg in zip(node._parents, node._live, node._backward(g)):
            if pg is None or not live:
                continue
            # keep gradients in the parent's precision so float32 graphs stay float32
            if pg.dtype != parent.data.dtype:
                pg = pg.astype(parent.data.dtype)
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    for node in order:
        g = grads.get(id(node))
        if g is None:
            continue
        if g.shape != node.data.shape:
            g = np.broadcast_to(g, node.data.shape)
        if not g.flags.writeable:
            g = np.array(g)
        node.grad = g if node.grad is None else node.grad + g


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def _check_pair(a: Tensor, b: Tensor, op):
    if a.shape != b.shape and a.size != 1 and b.size != 1:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not match "
                         "(only scalar broadcasting is supported)")


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    return np.asarray(g.sum()).reshape(shape)


def add(a, b):
    if not isinstance(b, Tensor):
        return shift(as_tensor(a), b)
    if not isinstance(a, Tensor):
        return shift(b, a)
    _check_pair(a, b, "add")
    return make_node(a.data + b.data, (a, b),
                     lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    if not isinstance(b, Tensor):
        return shift(as_tensor(a), -b)
    a = as_tensor(a)
    _check_pair(a, b, "sub")
    return make_node(a.data - b.data, (a, b),
                     lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    if not isinstance(b, Tensor):
        return scale(as_tensor(a), b)
    if not isinstance(a, Tensor):
        return scale(b, a)
    _check_pair(a, b, "mul")
    return make_node(a.data * b.data, (a, b),
                     lambda g: (_unbroadcast(g * b.data, a.shape),
                                _unbroadcast(g * a.data, b.shape)))


def scale(x: Tensor, c: float):
    return make_node(x.data * c, (x,), lambda g: (g * c,))


def shift(x: Tensor, c: float):
    return make_node(x.data + c, (x,), lambda g: (g,))


def neg(x: Tensor):
    return make_node(-x.data, (x,), lambda g: (-g,))


def tanh(x: Tensor):
    y = np.tanh(x.data)
    return make_node(y, (x,), lambda g: (g * (1.0 - y * y),))


def leaky_relu(x: Tensor, slope: float = 0.1):
    if not 0.0 < slope < 1.0:
        raise ValueError(f"leaky_relu slope must lie in (0, 1), got {slope}")
    y = np.maximum(x.data, x.data * slope)

    def bw(g):
        return (np.where(x.data > 0, g, g * slope),)
    return make_node(y, (x,), bw)


def log(x: Tensor):
    return make_node(np.log(x.data), (x,), lambda g: (g / x.data,))


def exp(x: Tensor):
    y = np.exp(x.data)
    return make_node(y, (x,), lambda g: (g * y,))


def abs(x: Tensor):  # noqa: A001 - mirrors numpy naming
    return make_node(np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


def square(x: Tensor):
    return make_node(x.data * x.data, (x,), lambda g: (2.0 * g * x.data,))


def clamp_min(x: Tensor, floor: float):
    keep = x.data >= floor
    return make_node(np.maximum(x.data, floor), (x,), lambda g: (g * keep,))


# ---------------------------------------------------------------------------
# reductions and shape ops
# ---------------------------------------------------------------------------

def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum(x: Tensor, axis=None):  # noqa: A001
    axes = _norm_axes(axis, x.ndim)
    y = x.data.sum(axis=axes)

    def bw(g):
        return (np.broadcast_to(np.expand_dims(g, axes), x.shape),)
    return make_node(np.asarray(y), (x,), bw)


def mean(x: Tensor, axis=None):
    axes = _norm_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    y = x.data.mean(axis=axes)

    def bw(g):
        return (np.broadcast_to(np.expand_dims(g / count, axes), x.shape),)
    return make_node(np.asarray(y), (x,), bw)


def reshape(x: Tensor, shape):
    return make_node(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes=None):
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    return make_node(np.ascontiguousarray(x.data.transpose(axes)), (x,),
                     lambda g: (g.transpose(inverse),))


def _is_basic_index(key):
    items = key if isinstance(key, tuple) else (key,)
    return all(isinstance(k, (slice, int, type(Ellipsis))) or k is None for k in items)


def getitem(x: Tensor, key):
    if not _is_basic_index(key):
        raise TypeError("only basic (slice/int) indexing is differentiable; use take()")
    y = np.array(x.data[key])

    def bw(g):
        gx = np.zeros_like(x.data)
        gx[key] = g
        return (gx,)
    return make_node(y, (x,), bw)


def take(x: Tensor, index):
    """Gather along the last axis: ``out[..., *i] = x[..., index[*i]]``."""
    index = np.asarray(index, dtype=np.intp)
    y = x.data[..., index]
    length = x.shape[-1]

    def bw(g):
        lead = x.shape[:-1]
        rows = int(np.prod(lead)) if lead else 1
        g2 = g.reshape(rows, index.size)
        flat = (np.arange(rows)[:, None] * length + index.reshape(1, -1)).ravel()
        gx = np.bincount(flat, weights=g2.ravel(), minlength=rows * length)
        return (gx.reshape(x.shape).astype(x.dtype, copy=False),)
    return make_node(y, (x,), bw)


def concat(tensors: Sequence[Tensor], axis=0):
    tensors = list(tensors)
    y = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))
    return make_node(y, tensors, bw)


def stack(tensors: Sequence[Tensor], axis=0):
    return concat([reshape(t, t.shape[:axis] + (1,) + t.shape[axis:]) for t in tensors], axis)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor):
    if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    y = np.matmul(a.data, b.data)

    def bw(g):
        ga = gb = None
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            if ga.shape != a.shape:
                ga = ga.reshape(-1, *a.shape).sum(0)
        if b.requires_grad:
            if b.ndim == 2 and a.ndim > 2:
                gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
                if gb.shape != b.shape:
                    gb = gb.reshape(-1, *b.shape).sum(0)
        return ga, gb
    return make_node(y, (a, b), bw)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None):
    """Affine map over the last axis: ``x @ weight.T + bias``."""
    if x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"linear: input features {x.shape[-1]} != weight in-dim {weight.shape[1]}")
    y = x.data @ weight.data.T
    if bias is not None:
        y = y + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def bw(g):
        g2 = g.reshape(-1, g.shape[-1])
        out = [g @ weight.data if x.requires_grad else None,
               g2.T @ x.data.reshape(-1, x.shape[-1]) if weight.requires_grad else None]
        if bias is not None:
            out.append(g2.sum(0))
        return out
    return make_node(y, parents, bw)


# ---------------------------------------------------------------------------
# convolutions and pooling
# ---------------------------------------------------------------------------

def conv1d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None,
           stride=1, padding=0, dilation=1, groups=1):
    """Cross-correlation over ``[B, C_in, L]`` with weight ``[C_out, C_in/groups, K]``."""
    if x.ndim != 3 or weight.ndim != 3:
        raise ShapeError(f"conv1d expects 3-D input and weight, got {x.shape} and {weight.shape}")
    bsz, cin, length = x.shape
    cout, cpg, ksize = weight.shape
    if cin % groups or cout % groups:
        raise ShapeError(f"conv1d: channels ({cin} in, {cout} out) not divisible by groups={groups}")
    if cpg * groups != cin:
        raise ShapeError(f"conv1d: weight expects {cpg * groups} input channels, input has {cin}")
    if bias is not None and bias.shape != (cout,):
        raise ShapeError(f"conv1d: bias shape {bias.shape} != ({cout},)")
    if stride < 1 or dilation < 1 or padding < 0:
        raise ValueError("conv1d: stride and dilation must be >= 1, padding >= 0")
    if length + 2 * padding < dilation * (ksize - 1) + 1:
        raise ShapeError(f"conv1d: padded length {length + 2 * padding} shorter than "
                         f"dilated kernel extent {dilation * (ksize - 1) + 1}")
    y = K.conv1d_forward(x.data, weight.data, None if bias is None else bias.data,
                         stride, padding, dilation, groups)

    def bw(g):
        gx, gw = K.conv1d_backward(g, x.data, weight.data, stride, padding, dilation, groups,
                                   need_x=x.requires_grad, need_w=weight.requires_grad)
        out = [gx, gw]
        if bias is not None:
            out.append(g.sum(axis=(0, 2)) if bias.requires_grad else None)
        return out
    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_node(y, parents, bw)


def conv_transpose1d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None,
                     stride=1, padding=0):
    """Adjoint of :func:`conv1d`; weight is ``[C_in, C_out, K]``."""
    if x.ndim != 3 or weight.ndim != 3:
        raise ShapeError(f"conv_transpose1d expects 3-D input and weight, got {x.shape} and {weight.shape}")
    if x.shape[1] != weight.shape[0]:
        raise ShapeError(f"conv_transpose1d: input has {x.shape[1]} channels, weight expects {weight.shape[0]}")
    if stride < 1:
        raise ValueError("conv_transpose1d: stride must be >= 1")
    out_len = K.conv_transpose_out_len(x.shape[2], weight.shape[2], stride, padding)
    if out_len < 1:
        raise ShapeError(f"conv_transpose1d: padding {padding} leaves no output samples")
    if bias is not None and bias.shape != (weight.shape[1],):
        raise ShapeError(f"conv_transpose1d: bias shape {bias.shape} != ({weight.shape[1]},)")
    y = K.conv_transpose1d_forward(x.data, weight.data, None if bias is None else bias.data,
                                   stride, padding)

    def bw(g):
        gx, gw = K.conv_transpose1d_backward(g, x.data, weight.data, stride, padding,
                                             need_x=x.requires_grad, need_w=weight.requires_grad)
        out = [gx, gw]
        if bias is not None:
            out.append(g.sum(axis=(0, 2)) if bias.requires_grad else None)
        return out
    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_node(y, parents, bw)


def conv2d_kx1(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None,
               stride=1, padding=0):
    """2-D convolution whose kernel spans exactly one column.

    Input ``[B, C_in, H, W]``, weight ``[C_out, C_in, K, 1]``. Each of the W
    columns is convolved independently along H with the same weights.
    """
    if x.ndim != 4:
        raise ShapeError(f"conv2d_kx1 expects [B, C, H, W] input, got {x.shape}")
    if weight.ndim != 4 or weight.shape[3] != 1:
        raise ShapeError(f"conv2d_kx1 needs a [C_out, C_in, K, 1] kernel, got {weight.shape}")
    bsz, cin, height, width = x.shape
    if weight.shape[1] != cin:
        raise ShapeError(f"conv2d_kx1: input has {cin} channels, weight expects {weight.shape[1]}")
    if height + 2 * padding < weight.shape[2]:
        raise ShapeError(f"conv2d_kx1: padded height {height + 2 * padding} < kernel {weight.shape[2]}")
    cols = np.ascontiguousarray(x.data.transpose(0, 3, 1, 2)).reshape(bsz * width, cin, height)
    w3 = weight.data[..., 0]
    y3 = K.conv1d_forward(cols, w3, None if bias is None else bias.data, stride, padding, 1, 1)
    cout, hout = y3.shape[1], y3.shape[2]
    y = np.ascontiguousarray(y3.reshape(bsz, width, cout, hout).transpose(0, 2, 3, 1))

    def bw(g):
        g3 = np.ascontiguousarray(g.transpose(0, 3, 1, 2)).reshape(bsz * width, cout, hout)
        gx3, gw3 = K.conv1d_backward(g3, cols, w3, stride, padding, 1, 1,
                                     need_x=x.requires_grad, need_w=weight.requires_grad)
        gx = None
        if gx3 is not None:
            gx = gx3.reshape(bsz, width, cin, height).transpose(0, 2, 3, 1)
        out = [gx, None if gw3 is None else gw3[..., None]]
        if bias is not None:
            out.append(g.sum(axis=(0, 2, 3)) if bias.requires_grad else None)
        return out
    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_node(y, parents, bw)


def avg_pool1d(x: Tensor, kernel: int, stride: Optional[int] = None, padding: int = 0):
    """Windowed mean; zero padding counts toward the divisor."""
    if kernel < 1:
        raise ValueError("avg_pool1d: kernel must be >= 1")
    stride = kernel if stride is None else stride
    if x.ndim != 3:
        raise ShapeError(f"avg_pool1d expects [B, C, L] input, got {x.shape}")
    y = K.avg_pool1d_forward(x.data, kernel, stride, padding)
    return make_node(y, (x,), lambda g: (K.avg_pool1d_backward(g, x.shape, kernel, stride, padding),))


# ---------------------------------------------------------------------------
# weight reparameterisations
# ---------------------------------------------------------------------------

def weight_norm(v: Tensor, g: Tensor, axis: int = 0):
    """``w = g * v / ||v||`` with one norm and one gain per slice along ``axis``."""
    if g.shape != (v.shape[axis],):
        raise ShapeError(f"weight_norm: gain shape {g.shape} != ({v.shape[axis]},)")
    other = tuple(i for i in range(v.ndim) if i != axis)
    bshape = [1] * v.ndim
    bshape[axis] = v.shape[axis]
    norm = np.sqrt((v.data * v.data).sum(axis=other))
    if np.any(norm == 0):
        raise ValueError("weight_norm: direction tensor has a zero-norm slice")
    n_b = norm.reshape(bshape)
    g_b = g.data.reshape(bshape)
    w = v.data * (g_b / n_b)

    def bw(gw):
        dot = (gw * v.data).sum(axis=other)
        grad_g = dot / norm
        grad_v = None
        if v.requires_grad:
            # (g / n) * (gw - (dot / n^2) * v)
            grad_v = v.data * (-dot / norm ** 2).reshape(bshape)
            grad_v += gw
            grad_v *= g_b / n_b
        return grad_v, grad_g
    return make_node(w, (v, g), bw)


def _normalize(x, eps=1e-12):
    return x / max(np.linalg.norm(x), eps)


def spectral_norm_apply(weight: Tensor, u_state: np.ndarray, n_iters: int = 1):
    """Divide ``weight`` by a power-iteration estimate of its top singular value.

    The weight is viewed as ``[C_out, rest]``. Returns the normalised weight and
    the updated left singular vector estimate. The singular vectors are held
    constant in the backward pass; sigma = u^T W v still depends on W.
    """
    wm = weight.data.reshape(weight.shape[0], -1)
    u = np.asarray(u_state, dtype=wm.dtype).reshape(-1)
    if u.shape[0] != wm.shape[0]:
        raise ShapeError(f"spectral_norm: u has {u.shape[0]} entries, weight has {wm.shape[0]} rows")
    v = _normalize(wm.T @ u)
    for _ in range(n_iters):
        u = _normalize(wm @ v)
        v = _normalize(wm.T @ u)
    sigma = float(u @ wm @ v)
    if not sigma > 0:
        raise ValueError("spectral_norm: weight has no positive singular value estimate")
    y = weight.data / sigma
    outer = np.outer(u, v).reshape(weight.shape)

    def bw(g):
        return (g / sigma - (np.sum(g * weight.data) / sigma ** 2) * outer,)
    return make_node(y, (weight,), bw), u


# ---------------------------------------------------------------------------
# distances
# ---------------------------------------------------------------------------

def l1_distance(a: Tensor, b) -> Tensor:
    """Mean absolute difference."""
    b = b if isinstance(b, Tensor) else Tensor(np.full(a.shape, b, dtype=a.dtype))
    if a.shape != b.shape:
        raise ShapeError(f"l1_distance: shapes {a.shape} and {b.shape} differ")
    d = a.data - b.data
    n = d.size
    val = np.asarray(np.abs(d).mean())

    def bw(g):
        s = np.sign(d) * (g / n)
        return s, -s
    return make_node(val, (a, b), bw)


def squared_error(a: Tensor, b) -> Tensor:
    """Mean squared difference; ``b`` may be a python scalar target."""
    b = b if isinstance(b, Tensor) else Tensor(np.full(a.shape, b, dtype=a.dtype))
    if a.shape != b.shape:
        raise ShapeError(f"squared_error: shapes {a.shape} and {b.shape} differ")
    d = a.data - b.data
    n = d.size
    val = np.asarray((d * d).mean())

    def bw(g):
        s = d * (2.0 * g / n)
        return s, -s
    return make_node(val, (a, b), bw)
