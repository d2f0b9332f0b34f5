"""Parameter containers and normalised convolution layers."""

import contextlib
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from . import tensor as T
from .tensor import Tensor

INIT_STD = 0.01


class Parameter(Tensor):
    """A leaf tensor that always requires grad."""

    def __init__(self, data, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)


class Module:
    """Minimal module tree.

    Children are discovered from attributes: a ``Parameter``, a ``Module`` or a
    list of modules. List entries are named ``<attr><index>`` so a generator
    parameter reads like ``gen.mrf0.res1.conv0.v``. Non-trainable state lives
    in ``self.buffers`` and is checkpointed alongside parameters.
    """

    def __init__(self):
        self.training = True
        self.buffers: Dict[str, np.ndarray] = {}

    def _children(self) -> Iterator[Tuple[str, object]]:
        for key, value in vars(self).items():
            if isinstance(value, Parameter) or isinstance(value, Module):
                yield key, value
            elif isinstance(value, list) and value and isinstance(value[0], Module):
                for i, item in enumerate(value):
                    yield f"{key}{i}", item

    def named_parameters(self, prefix="") -> List[Tuple[str, Parameter]]:
        out = []
        for key, value in self._children():
            name = f"{prefix}.{key}" if prefix else key
            if isinstance(value, Parameter):
                out.append((name, value))
            else:
                out.extend(value.named_parameters(name))
        return out

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix="") -> List[Tuple[str, np.ndarray]]:
        out = [(f"{prefix}.{k}" if prefix else k, v) for k, v in self.buffers.items()]
        for key, value in self._children():
            if isinstance(value, Module):
                out.extend(value.named_buffers(f"{prefix}.{key}" if prefix else key))
        return out

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, value in self._children():
            if isinstance(value, Module):
                yield from value.modules()

    def state_dict(self, prefix="") -> Dict[str, np.ndarray]:
        state = {name: p.data for name, p in self.named_parameters(prefix)}
        state.update(dict(self.named_buffers(prefix)))
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray], prefix=""):
        own = self.state_dict(prefix)
        unknown = sorted(set(state) - set(own))
        missing = sorted(set(own) - set(state))
        if unknown:
            raise KeyError(f"unknown entries in state: {unknown[:5]}")
        if missing:
            raise KeyError(f"state is missing entries: {missing[:5]}")
        params = dict(self.named_parameters(prefix))
        for name, value in state.items():
            if own[name].shape != np.shape(value):
                raise ValueError(f"shape mismatch for {name}: model {own[name].shape}, "
                                 f"state {np.shape(value)}")
            if name in params:
                params[name].data = np.array(value, dtype=params[name].dtype)
        for mod_prefix, mod in self._named_modules(prefix):
            for key in mod.buffers:
                full = f"{mod_prefix}.{key}" if mod_prefix else key
                mod.buffers[key] = np.array(state[full], dtype=mod.buffers[key].dtype)

    def _named_modules(self, prefix=""):
        yield prefix, self
        for key, value in self._children():
            if isinstance(value, Module):
                yield from value._named_modules(f"{prefix}.{key}" if prefix else key)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def train(self, mode=True):
        for m in self.modules():
            m.training = mode
            if mode and getattr(m, "folded", None) is not None:
                m.folded = None
        return self

    def eval(self):
        return self.train(False)

    def astype(self, dtype):
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        for m in self.modules():
            for k in m.buffers:
                m.buffers[k] = m.buffers[k].astype(dtype)
        return self

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def param_count(model: Module) -> int:
    """Exact number of trainable scalars, weight-norm gains and biases included."""
    return int(sum(p.size for p in model.parameters()))


@contextlib.contextmanager
def frozen(*modules: Module):
    """Temporarily stop gradients from reaching the parameters of ``modules``."""
    params = [p for m in modules for p in m.parameters()]
    for p in params:
        p.requires_grad = False
    try:
        yield
    finally:
        for p in params:
            p.requires_grad = True


def fold_weights(model: Module) -> Module:
    """Switch ``model`` to eval mode and cache every normalised kernel.

    Inference then skips the per-call weight-norm arithmetic. The cache is a
    snapshot: calling ``train()`` drops it, and it must be rebuilt after any
    parameter change.
    """
    model.eval()
    with T.no_grad():
        for m in model.modules():
            if isinstance(m, _NormedConv):
                m.folded = None
                m.folded = m.weight().data.copy()
    return model


def _normal(rng, shape):
    return rng.normal(0.0, INIT_STD, size=shape)


class _NormedConv(Module):
    """Base for conv layers whose kernel sits under weight norm, spectral norm, or none."""

    def _init_kernel(self, shape, norm, out_axis, rng):
        if norm not in ("weight", "spectral", None):
            raise ValueError(f"unknown norm {norm!r}")
        self.norm = norm
        self.out_axis = out_axis
        init = _normal(rng, shape)
        if norm == "weight":
            self.v = Parameter(init)
            other = tuple(i for i in range(len(shape)) if i != out_axis)
            self.g = Parameter(np.sqrt((init ** 2).sum(axis=other)))
        else:
            self.w = Parameter(init)
        if norm == "spectral":
            u = rng.normal(size=shape[0])
            self.buffers["u"] = (u / np.linalg.norm(u)).astype(self.w.dtype)

    def weight(self) -> Tensor:
        folded = getattr(self, "folded", None)
        if folded is not None:
            return Tensor(folded, dtype=folded.dtype)
        if self.norm == "weight":
            return T.weight_norm(self.v, self.g, axis=self.out_axis)
        if self.norm == "spectral":
            iters = 1 if self.training else 0
            w, u = T.spectral_norm_apply(self.w, self.buffers["u"], iters)
            if self.training and T.is_grad_enabled():
                self.buffers["u"] = u.astype(self.w.dtype)
            return w
        return self.w


class Conv1d(_NormedConv):
    def __init__(self, cin, cout, kernel, stride=1, padding=0, dilation=1, groups=1,
                 norm="weight", bias=True, rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng()
        self.stride, self.padding, self.dilation, self.groups = stride, padding, dilation, groups
        self._init_kernel((cout, cin // groups, kernel), norm, 0, rng)
        if bias:
            self.b = Parameter(np.zeros(cout))

    def forward(self, x):
        return T.conv1d(x, self.weight(), getattr(self, "b", None),
                        self.stride, self.padding, self.dilation, self.groups)


class ConvTranspose1d(_NormedConv):
    def __init__(self, cin, cout, kernel, stride=1, padding=0, norm="weight", bias=True, rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng()
        self.stride, self.padding = stride, padding
        # gains sit on the output-channel axis of the [C_in, C_out, K] kernel
        self._init_kernel((cin, cout, kernel), norm, 1, rng)
        if bias:
            self.b = Parameter(np.zeros(cout))

    def forward(self, x):
        return T.conv_transpose1d(x, self.weight(), getattr(self, "b", None),
                                  self.stride, self.padding)


class Conv2dKx1(_NormedConv):
    def __init__(self, cin, cout, kernel, stride=1, padding=0, norm="weight", bias=True, rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng()
        self.stride, self.padding = stride, padding
        self._init_kernel((cout, cin, kernel, 1), norm, 0, rng)
        if bias:
            self.b = Parameter(np.zeros(cout))

    def forward(self, x):
        return T.conv2d_kx1(x, self.weight(), getattr(self, "b", None),
                            self.stride, self.padding)


class Linear(Module):
    def __init__(self, fan_in, fan_out, rng=None, std: Optional[float] = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng()
        std = np.sqrt(2.0 / fan_in) if std is None else std
        self.w = Parameter(rng.normal(0.0, std, size=(fan_out, fan_in)))
        self.b = Parameter(np.zeros(fan_out))

    def forward(self, x):
        return T.linear(x, self.w, self.b)
