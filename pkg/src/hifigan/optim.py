"""AdamW with decoupled weight decay and the per-epoch exponential lr schedule."""

from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .nn import Parameter


def lr_schedule(epoch: int, initial_lr: float = 2e-4, decay: float = 0.999) -> float:
    # closed form so the value after e epochs never drifts from repeated multiplies
    return initial_lr * decay ** epoch


@dataclass
class OptimState:
    lr: float = 2e-4
    beta1: float = 0.8
    beta2: float = 0.99
    weight_decay: float = 0.01
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adamw_step(named_params: Sequence[Tuple[str, Parameter]], state: OptimState):
    """One in-place AdamW update from each parameter's ``.grad``."""
    for name, p in named_params:
        if p.grad is None:
            raise ValueError(f"parameter {name} has no gradient; run backward() first")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for name, p in named_params:
        g = p.grad
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        if state.weight_decay:
            p.data *= 1.0 - state.lr * state.weight_decay
        tmp = np.multiply(g, 1.0 - b1)
        m *= b1
        m += tmp
        np.multiply(g, g, out=tmp)
        tmp *= 1.0 - b2
        v *= b2
        v += tmp
        # p -= (lr / bc1) * m / (sqrt(v / bc2) + eps), evaluated in place
        np.divide(v, bc2, out=tmp)
        np.sqrt(tmp, out=tmp)
        tmp += state.eps
        np.divide(m, tmp, out=tmp)
        tmp *= state.lr / bc1
        p.data -= tmp


class AdamW:
    def __init__(self, named_params: Sequence[Tuple[str, Parameter]], lr=2e-4,
                 betas=(0.8, 0.99), weight_decay=0.01, eps=1e-8):
        self.params: List[Tuple[str, Parameter]] = list(named_params)
        self.state = OptimState(lr=lr, beta1=betas[0], beta2=betas[1],
                                weight_decay=weight_decay, eps=eps)

    @property
    def lr(self):
        return self.state.lr

    @lr.setter
    def lr(self, value):
        self.state.lr = float(value)

    def zero_grad(self):
        for _, p in self.params:
            p.grad = None

    def step(self):
        adamw_step(self.params, self.state)

    def state_dict(self, prefix: str) -> Dict[str, np.ndarray]:
        out = {f"{prefix}.step": np.asarray(self.state.step, dtype=np.float64)}
        for name, _ in self.params:
            if name in self.state.m:
                out[f"{prefix}.m.{name}"] = self.state.m[name]
                out[f"{prefix}.v.{name}"] = self.state.v[name]
        return out

    def load_state_dict(self, state: Dict[str, np.ndarray], prefix: str):
        self.state.step = int(state[f"{prefix}.step"])
        shapes = {name: p.shape for name, p in self.params}
        dtypes = {name: p.dtype for name, p in self.params}
        self.state.m.clear()
        self.state.v.clear()
        for key, value in state.items():
            for slot, store in (("m", self.state.m), ("v", self.state.v)):
                head = f"{prefix}.{slot}."
                if key.startswith(head):
                    name = key[len(head):]
                    if name not in shapes:
                        raise KeyError(f"optimizer state for unknown parameter {name}")
                    if shapes[name] != value.shape:
                        raise ValueError(f"optimizer state shape mismatch for {name}")
                    store[name] = np.array(value, dtype=dtypes[name])
