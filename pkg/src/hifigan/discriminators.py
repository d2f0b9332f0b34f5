"""Multi-period (MPD) and multi-scale (MSD) discriminators.

Every sub-discriminator returns its raw score map (no pooling, one score per
window) together with the ordered list of intermediate activations used by
the feature-matching loss. The score map itself is the last feature.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from . import tensor as T
from .nn import Conv1d, Conv2dKx1, Module
from .tensor import Tensor

LRELU_SLOPE = 0.1


@dataclass
class DiscriminatorOutput:
    score_map: Tensor
    features: List[Tensor]


@dataclass(frozen=True)
class MPDConfig:
    periods: tuple = (2, 3, 5, 7, 11)
    channels: tuple = (32, 128, 512, 1024, 1024)
    kernel: int = 5
    stride: int = 3

    def __post_init__(self):
        object.__setattr__(self, "periods", tuple(int(p) for p in self.periods))
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        if not self.periods or any(p < 1 for p in self.periods):
            raise ValueError(f"periods must be positive, got {self.periods}")
        if any(b <= a for a, b in zip(self.periods, self.periods[1:])):
            raise ValueError(f"periods must be strictly increasing, got {self.periods}")
        if len(self.channels) < 2 or any(c < 1 for c in self.channels):
            raise ValueError(f"invalid MPD channel ladder {self.channels}")


@dataclass(frozen=True)
class MSDConfig:
    channels: tuple = (128, 128, 256, 512, 1024, 1024, 1024)
    kernels: tuple = (15, 41, 41, 41, 41, 41, 5)
    strides: tuple = (1, 2, 2, 4, 4, 1, 1)
    groups: tuple = (1, 4, 16, 16, 16, 16, 1)
    n_scales: int = 3

    def __post_init__(self):
        for name in ("channels", "kernels", "strides", "groups"):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))
        n = len(self.channels)
        if not (len(self.kernels) == len(self.strides) == len(self.groups) == n):
            raise ValueError("MSD ladder lists must have equal length")
        cin = 1
        for c, g in zip(self.channels, self.groups):
            if cin % g or c % g:
                raise ValueError(f"MSD layer {cin}->{c} not divisible by groups={g}")
            cin = c
        if self.n_scales < 1:
            raise ValueError("n_scales must be >= 1")


def scaled_mpd(width: float, periods=(2, 3, 5, 7, 11)) -> MPDConfig:
    """MPD with every channel count multiplied by ``width`` (at least 1)."""
    base = MPDConfig()
    return MPDConfig(periods=tuple(periods),
                     channels=tuple(max(1, int(round(c * width))) for c in base.channels))


def scaled_msd(width: float) -> MSDConfig:
    base = MSDConfig()
    chans, groups, cin = [], [], 1
    for c, g in zip(base.channels, base.groups):
        c = max(1, int(round(c * width)))
        g = int(np.gcd(np.gcd(g, c), cin))
        chans.append(c)
        groups.append(g)
        cin = c
    return MSDConfig(channels=tuple(chans), kernels=base.kernels, strides=base.strides,
                     groups=tuple(groups))


# ---------------------------------------------------------------------------
# period reshape
# ---------------------------------------------------------------------------

def period_index(length: int, p: int) -> np.ndarray:
    """Sample index for each ``[row, column]`` cell of the period view.

    The tail is reflect-padded up to the next multiple of ``p``.
    """
    if p < 1:
        raise ValueError(f"period must be >= 1, got {p}")
    if length < 1:
        raise ValueError("cannot reshape an empty signal")
    rows = -(-length // p)
    idx = np.arange(length)
    if rows * p != length:
        idx = np.pad(idx, (0, rows * p - length), mode="reflect")
    return idx.reshape(rows, p)


def period_reshape(audio: Tensor, p: int) -> Tensor:
    """``[B, 1, T]`` -> ``[B, 1, ceil(T / p), p]``; cell (r, c) holds sample ``r*p + c``."""
    if audio.ndim != 3 or audio.shape[1] != 1:
        raise T.ShapeError(f"period_reshape expects [B, 1, T] audio, got {audio.shape}")
    return T.take(audio, period_index(audio.shape[-1], p))


class PeriodDiscriminator(Module):
    def __init__(self, period: int, cfg: MPDConfig = MPDConfig(), rng=None):
        super().__init__()
        self.period = period
        pad = (cfg.kernel - 1) // 2
        chans = (1,) + cfg.channels
        n = len(cfg.channels)
        self.conv = [Conv2dKx1(chans[i], chans[i + 1], cfg.kernel,
                               stride=cfg.stride if i < n - 1 else 1, padding=pad, rng=rng)
                     for i in range(n)]
        self.post = Conv2dKx1(chans[-1], 1, 3, stride=1, padding=1, rng=rng)

    def forward(self, audio: Tensor) -> DiscriminatorOutput:
        x = period_reshape(audio, self.period)
        feats = []
        for conv in self.conv:
            x = T.leaky_relu(conv(x), LRELU_SLOPE)
            feats.append(x)
        x = self.post(x)
        feats.append(x)
        return DiscriminatorOutput(x, feats)


class MultiPeriodDiscriminator(Module):
    def __init__(self, cfg: MPDConfig = MPDConfig(), rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng()
        self.cfg = cfg
        self.sub = [PeriodDiscriminator(p, cfg, rng=rng) for p in cfg.periods]

    def forward(self, audio: Tensor) -> List[DiscriminatorOutput]:
        return [d(audio) for d in self.sub]


# ---------------------------------------------------------------------------
# multi-scale
# ---------------------------------------------------------------------------

POOL_KERNEL, POOL_STRIDE, POOL_PAD = 4, 2, 2


def pool_audio(audio: Tensor) -> Tensor:
    return T.avg_pool1d(audio, POOL_KERNEL, POOL_STRIDE, POOL_PAD)


class ScaleDiscriminator(Module):
    def __init__(self, cfg: MSDConfig = MSDConfig(), norm="weight", rng=None):
        super().__init__()
        chans = (1,) + cfg.channels
        self.conv = [Conv1d(chans[i], chans[i + 1], k, stride=s, padding=(k - 1) // 2,
                            groups=g, norm=norm, rng=rng)
                     for i, (k, s, g) in enumerate(zip(cfg.kernels, cfg.strides, cfg.groups))]
        self.post = Conv1d(chans[-1], 1, 3, padding=1, norm=norm, rng=rng)

    def forward(self, audio: Tensor) -> DiscriminatorOutput:
        x = audio
        feats = []
        for conv in self.conv:
            x = T.leaky_relu(conv(x), LRELU_SLOPE)
            feats.append(x)
        x = self.post(x)
        feats.append(x)
        return DiscriminatorOutput(x, feats)


class MultiScaleDiscriminator(Module):
    """Sub-discriminators on raw, x2- and x4-pooled audio.

    The raw-audio branch uses spectral normalisation, the others weight norm.
    """

    def __init__(self, cfg: MSDConfig = MSDConfig(), rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng()
        self.cfg = cfg
        self.sub = [ScaleDiscriminator(cfg, norm="spectral" if i == 0 else "weight", rng=rng)
                    for i in range(cfg.n_scales)]

    def forward(self, audio: Tensor) -> List[DiscriminatorOutput]:
        outs = []
        x = audio
        for i, d in enumerate(self.sub):
            if i > 0:
                x = pool_audio(x)
            outs.append(d(x))
        return outs


def mpd_forward(mpd: MultiPeriodDiscriminator, audio: Tensor) -> List[DiscriminatorOutput]:
    return mpd(audio)


def msd_forward(msd: MultiScaleDiscriminator, audio: Tensor) -> List[DiscriminatorOutput]:
    return msd(audio)


def run_all(discriminators: Sequence[Module], audio: Tensor) -> List[DiscriminatorOutput]:
    """Concatenate the outputs of several multi-discriminators (MPD then MSD)."""
    outs: List[DiscriminatorOutput] = []
    for d in discriminators:
        outs.extend(d(audio))
    return outs
