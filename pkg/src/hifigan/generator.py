"""Mel-to-waveform generator: transposed-conv upsampling interleaved with MRF stacks."""

import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import tensor as T
from .nn import Conv1d, ConvTranspose1d, Module, param_count
from .tensor import Tensor

LRELU_SLOPE = 0.1
PRE_POST_KERNEL = 7


@dataclass(frozen=True)
class GeneratorConfig:
    """Upsampling width ``h_u``, upsampling kernels ``k_u``, and MRF kernels/dilations.

    ``d_r[n]`` lists the residual units of block ``n``; each unit is the list of
    dilations of the convolutions applied before its residual add.
    """

    variant: str = "custom"
    h_u: int = 512
    k_u: tuple = (16, 16, 4, 4)
    k_r: tuple = (3, 7, 11)
    d_r: tuple = (((1, 1), (3, 1), (5, 1)),) * 3
    input_mels: int = 80
    hop: int = 256

    def __post_init__(self):
        # normalise nested lists to tuples so configs hash and compare by value
        object.__setattr__(self, "k_u", tuple(int(k) for k in self.k_u))
        object.__setattr__(self, "k_r", tuple(int(k) for k in self.k_r))
        object.__setattr__(self, "d_r", tuple(tuple(tuple(int(d) for d in unit) for unit in block)
                                              for block in self.d_r))
        self.validate()

    @property
    def strides(self):
        return tuple(k // 2 for k in self.k_u)

    def validate(self):
        if not self.k_u:
            raise ValueError("k_u must name at least one upsampling layer")
        for k in self.k_u:
            if k < 2 or k % 2:
                raise ValueError(f"upsampling kernel {k} must be even and >= 2 (stride is k/2)")
            if (k - k // 2) % 2:
                raise ValueError(f"upsampling kernel {k}: k - k/2 must be even for symmetric padding")
        if int(np.prod(self.strides)) != self.hop:
            raise ValueError(f"product of strides {self.strides} = {int(np.prod(self.strides))}, "
                             f"must equal hop {self.hop}")
        if len(self.k_r) != len(self.d_r):
            raise ValueError(f"|k_r|={len(self.k_r)} but |D_r|={len(self.d_r)}")
        if not self.k_r:
            raise ValueError("MRF needs at least one residual block")
        for k in self.k_r:
            if k < 1 or k % 2 == 0:
                raise ValueError(f"residual kernel {k} must be odd")
        for block in self.d_r:
            if not block or any(not unit or any(d < 1 for d in unit) for unit in block):
                raise ValueError(f"invalid dilation block {block}")
        if self.h_u % (2 ** len(self.k_u)) or self.h_u < 2 ** len(self.k_u):
            raise ValueError(f"h_u={self.h_u} cannot be halved {len(self.k_u)} times")
        if self.input_mels < 1:
            raise ValueError("input_mels must be >= 1")

    def single_block(self) -> "GeneratorConfig":
        """Keep only the residual block with the widest receptive field in each MRF."""
        spans = [block_span(k, d) for k, d in zip(self.k_r, self.d_r)]
        n = int(np.argmax(spans))
        return dataclasses.replace(self, variant=f"{self.variant}-single",
                                   k_r=(self.k_r[n],), d_r=(self.d_r[n],))


V1 = GeneratorConfig("v1", 512, (16, 16, 4, 4), (3, 7, 11), (((1, 1), (3, 1), (5, 1)),) * 3)
V2 = GeneratorConfig("v2", 128, (16, 16, 4, 4), (3, 7, 11), (((1, 1), (3, 1), (5, 1)),) * 3)
V3 = GeneratorConfig("v3", 256, (16, 16, 8), (3, 5, 7),
                     (((1,), (2,)), ((2,), (6,)), ((3,), (12,))))
PRESETS = {"v1": V1, "v2": V2, "v3": V3}


def same_padding(kernel, dilation=1):
    return dilation * (kernel - 1) // 2


class ResBlock(Module):
    """Stack of residual units; each unit is ``[lrelu -> dilated conv]*`` plus a skip."""

    def __init__(self, channels, kernel, units, rng=None):
        super().__init__()
        self.units = [tuple(u) for u in units]
        self.conv = [Conv1d(channels, channels, kernel, dilation=d,
                            padding=same_padding(kernel, d), rng=rng)
                     for unit in self.units for d in unit]

    def forward(self, x: Tensor) -> Tensor:
        i = 0
        for unit in self.units:
            h = x
            for _ in unit:
                h = self.conv[i](T.leaky_relu(h, LRELU_SLOPE))
                i += 1
            x = x + h
        return x


class MRF(Module):
    """Multi-receptive-field fusion: mean of parallel residual blocks."""

    def __init__(self, channels, k_r, d_r, rng=None):
        super().__init__()
        self.res = [ResBlock(channels, k, d, rng=rng) for k, d in zip(k_r, d_r)]

    def forward(self, x: Tensor) -> Tensor:
        out = self.res[0](x)
        for block in self.res[1:]:
            out = out + block(x)
        return out / len(self.res)


class Generator(Module):
    def __init__(self, cfg: GeneratorConfig, rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng()
        self.cfg = cfg
        ch = cfg.h_u
        self.pre = Conv1d(cfg.input_mels, ch, PRE_POST_KERNEL,
                          padding=same_padding(PRE_POST_KERNEL), rng=rng)
        self.up, self.mrf = [], []
        for k in cfg.k_u:
            stride = k // 2
            self.up.append(ConvTranspose1d(ch, ch // 2, k, stride=stride,
                                           padding=(k - stride) // 2, rng=rng))
            ch //= 2
            self.mrf.append(MRF(ch, cfg.k_r, cfg.d_r, rng=rng))
        self.post = Conv1d(ch, 1, PRE_POST_KERNEL, padding=same_padding(PRE_POST_KERNEL), rng=rng)

    def forward(self, mel: Tensor) -> Tensor:
        """``[B, n_mels, N]`` log-mel -> ``[B, 1, hop * N]`` waveform in (-1, 1)."""
        if mel.ndim == 2:
            mel = T.reshape(mel, (1,) + mel.shape)
        if mel.ndim != 3 or mel.shape[1] != self.cfg.input_mels:
            raise T.ShapeError(f"generator expects [B, {self.cfg.input_mels}, frames] input, "
                               f"got {mel.shape}")
        x = self.pre(mel)
        for up, mrf in zip(self.up, self.mrf):
            x = mrf(up(T.leaky_relu(x, LRELU_SLOPE)))
        x = self.post(T.leaky_relu(x, LRELU_SLOPE))
        return T.tanh(x)


def build_generator(cfg: GeneratorConfig, seed: Optional[int] = None) -> Generator:
    return Generator(cfg, rng=np.random.default_rng(seed))


def synthesize(gen: Generator, mel) -> np.ndarray:
    """Inference helper: MelSpec or ``[n_mels, N]`` array -> 1-D waveform."""
    values = getattr(mel, "values", mel)
    values = np.asarray(values)
    if values.ndim != 2:
        raise T.ShapeError(f"expected a [n_mels, frames] spectrogram, got shape {values.shape}")
    dtype = gen.pre.v.dtype
    with T.no_grad():
        out = gen(Tensor(values[None], dtype=dtype))
    return out.data[0, 0]


# ---------------------------------------------------------------------------
# receptive field
# ---------------------------------------------------------------------------

def block_span(kernel, units):
    """Extra samples one residual block adds to the receptive field at its own rate."""
    return sum((kernel - 1) * d for unit in units for d in unit)


def receptive_field(cfg: GeneratorConfig) -> int:
    """Receptive field of the full stack, measured in output samples.

    Uses ``r = 1 + sum((k_eff - 1) * jump)`` where ``jump`` is the number of
    output samples one step at a layer's input rate spans. Parallel MRF
    branches contribute their widest block; a transposed convolution with
    kernel K and stride s reaches ``ceil(K / s)`` input steps.
    """
    r = 1 + (PRE_POST_KERNEL - 1)  # post conv at output rate
    jump = 1
    for k, s in reversed(list(zip(cfg.k_u, cfg.strides))):
        r += max(block_span(kr, dr) for kr, dr in zip(cfg.k_r, cfg.d_r)) * jump
        jump *= s
        r += (-(-k // s) - 1) * jump
    r += (PRE_POST_KERNEL - 1) * jump
    return r


def receptive_field_frames(cfg: GeneratorConfig) -> int:
    """Worst-case number of input mel frames that influence one output sample."""
    r = 1 + (PRE_POST_KERNEL - 1)
    for k, s in reversed(list(zip(cfg.k_u, cfg.strides))):
        r += max(block_span(kr, dr) for kr, dr in zip(cfg.k_r, cfg.d_r))
        r = (r + k - 2) // s + 1
    return r + PRE_POST_KERNEL - 1


__all__ = [
    "GeneratorConfig", "Generator", "ResBlock", "MRF", "V1", "V2", "V3", "PRESETS",
    "build_generator", "synthesize", "receptive_field", "receptive_field_frames",
    "param_count", "same_padding",
]
