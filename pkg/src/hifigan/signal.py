"""STFT, mel filterbank and the log-mel transform used as conditioning and loss."""

import dataclasses
import struct
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from . import fft as F
from . import tensor as T
from .checkpoint import atomic_write
from .tensor import Tensor

LOG_FLOOR = 1e-5


@dataclass(frozen=True)
class MelConfig:
    sample_rate: int = 22050
    n_fft: int = 1024
    win_size: int = 1024
    hop: int = 256
    n_mels: int = 80
    fmin: float = 0.0
    fmax: float = 8000.0
    # None means full band (sample_rate / 2) for the loss-side transform
    fmax_loss: Optional[float] = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not (0 < self.hop <= self.win_size <= self.n_fft):
            raise ValueError(f"need 0 < hop <= win_size <= n_fft, got hop={self.hop}, "
                             f"win_size={self.win_size}, n_fft={self.n_fft}")
        if (self.n_fft - self.hop) % 2:
            raise ValueError("n_fft - hop must be even so padding splits evenly")
        if self.n_mels < 1:
            raise ValueError("n_mels must be >= 1")
        nyquist = self.sample_rate / 2
        if not (0 <= self.fmin < self.fmax <= nyquist):
            raise ValueError(f"need 0 <= fmin < fmax <= {nyquist}, got fmin={self.fmin}, fmax={self.fmax}")
        if self.fmax_loss is not None and not (self.fmin < self.fmax_loss <= nyquist):
            raise ValueError(f"fmax_loss must lie in ({self.fmin}, {nyquist}]")

    def for_loss(self) -> "MelConfig":
        """The band used inside the mel-spectrogram loss."""
        fmax = self.sample_rate / 2 if self.fmax_loss is None else self.fmax_loss
        return dataclasses.replace(self, fmax=fmax)


@dataclass
class MelSpec:
    values: np.ndarray  # [n_mels, frames], natural-log amplitude
    config: MelConfig

    @property
    def n_mels(self):
        return self.values.shape[0]

    @property
    def frames(self):
        return self.values.shape[1]


# ---------------------------------------------------------------------------
# mel scale (Slaney: linear below 1 kHz, logarithmic above)
# ---------------------------------------------------------------------------

_F_SP = 200.0 / 3
_MIN_LOG_HZ = 1000.0
_MIN_LOG_MEL = _MIN_LOG_HZ / _F_SP
_LOGSTEP = np.log(6.4) / 27.0


def hz_to_mel(hz):
    hz = np.asarray(hz, dtype=np.float64)
    lin = hz / _F_SP
    logpart = _MIN_LOG_MEL + np.log(np.maximum(hz, _MIN_LOG_HZ) / _MIN_LOG_HZ) / _LOGSTEP
    return np.where(hz >= _MIN_LOG_HZ, logpart, lin)


def mel_to_hz(mel):
    mel = np.asarray(mel, dtype=np.float64)
    lin = mel * _F_SP
    logpart = _MIN_LOG_HZ * np.exp(_LOGSTEP * (mel - _MIN_LOG_MEL))
    return np.where(mel >= _MIN_LOG_MEL, logpart, lin)


@lru_cache(maxsize=16)
def _filterbank(sample_rate, n_fft, n_mels, fmin, fmax):
    bins = np.linspace(0.0, sample_rate / 2, n_fft // 2 + 1)
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    widths = np.diff(edges)
    ramps = edges[:, None] - bins[None, :]
    lower = -ramps[:-2] / widths[:-1, None]
    upper = ramps[2:] / widths[1:, None]
    weights = np.maximum(0.0, np.minimum(lower, upper))
    weights *= (2.0 / (edges[2:] - edges[:-2]))[:, None]
    weights.setflags(write=False)
    return weights


def mel_filterbank(cfg: MelConfig) -> np.ndarray:
    """Area-normalised triangular filters, shape ``[n_mels, n_fft // 2 + 1]``."""
    return _filterbank(cfg.sample_rate, cfg.n_fft, cfg.n_mels, float(cfg.fmin), float(cfg.fmax))


# ---------------------------------------------------------------------------
# framing and STFT
# ---------------------------------------------------------------------------

@lru_cache(maxsize=8)
def hann_window(win_size, n_fft):
    """Periodic Hann window of ``win_size`` centred in ``n_fft`` samples."""
    w = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(win_size) / win_size)
    out = np.zeros(n_fft)
    left = (n_fft - win_size) // 2
    out[left:left + win_size] = w
    out.setflags(write=False)
    return out


def n_frames(length, hop):
    return -(-length // hop)


def frame_index(length: int, cfg: MelConfig) -> np.ndarray:
    """Sample index (into the unpadded signal) for each ``[frame, tap]`` position.

    The signal is reflect-padded by ``(n_fft - hop) / 2`` on both sides and the
    right side is extended further up to the next hop multiple, so the frame
    count is ``ceil(length / hop)`` and exactly ``length / hop`` when aligned.
    """
    if length < 1:
        raise ValueError("cannot frame an empty signal")
    frames = n_frames(length, cfg.hop)
    left = (cfg.n_fft - cfg.hop) // 2
    right = left + frames * cfg.hop - length
    padded = np.pad(np.arange(length), (left, right), mode="reflect")
    starts = np.arange(frames) * cfg.hop
    return padded[starts[:, None] + np.arange(cfg.n_fft)[None, :]]


def _samples(audio):
    if hasattr(audio, "samples"):
        audio = audio.samples
    if isinstance(audio, Tensor):
        audio = audio.data
    return np.asarray(audio, dtype=np.float64)


def stft(audio, cfg: MelConfig) -> np.ndarray:
    """Complex spectrogram ``[n_fft // 2 + 1, frames]`` (Hann window, reflect padding)."""
    x = _samples(audio)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("stft needs a non-empty 1-D signal")
    frames = x[frame_index(x.size, cfg)] * hann_window(cfg.win_size, cfg.n_fft)
    return F.rfft(frames).T


def _windowed_frames(x: Tensor, cfg: MelConfig) -> Tensor:
    idx = frame_index(x.shape[-1], cfg)
    window = hann_window(cfg.win_size, cfg.n_fft).astype(x.dtype)
    frames = T.take(x, idx)
    return T.make_node(frames.data * window, (frames,), lambda g: (g * window,))


def spectral_magnitude(frames: Tensor) -> Tensor:
    """``|rfft(frames)|`` over the last axis, differentiable w.r.t. the frames."""
    n = frames.shape[-1]
    spec = F.rfft(frames.data)
    mag = np.abs(spec)

    def bw(g):
        safe = np.where(mag > 0, mag, 1.0)
        gc = np.where(mag > 0, g * spec / safe, 0.0)
        full = np.zeros(gc.shape[:-1] + (n,), dtype=np.complex128)
        full[..., : gc.shape[-1]] = gc
        return (np.real(F.fft(np.conj(full))).astype(frames.dtype),)
    return T.make_node(mag.astype(frames.dtype), (frames,), bw)


def log_mel(x: Tensor, cfg: MelConfig) -> Tensor:
    """Differentiable log-mel transform.

    Accepts ``[T]``, ``[B, T]`` or ``[B, 1, T]`` and returns
    ``[n_mels, frames]`` or ``[B, n_mels, frames]``.
    """
    if x.ndim == 3:
        if x.shape[1] != 1:
            raise T.ShapeError(f"log_mel expects a mono [B, 1, T] signal, got {x.shape}")
        x = T.reshape(x, (x.shape[0], x.shape[2]))
    mag = spectral_magnitude(_windowed_frames(x, cfg))
    fb = Tensor(mel_filterbank(cfg).T, dtype=x.dtype)
    mel = T.matmul(mag, fb)
    out = T.log(T.clamp_min(mel, LOG_FLOOR))
    axes = tuple(range(out.ndim - 2)) + (out.ndim - 1, out.ndim - 2)
    return T.transpose(out, axes)


def mel_spectrogram(audio, cfg: MelConfig) -> MelSpec:
    """Log-mel spectrogram of a mono clip (conditioning band of ``cfg``)."""
    x = _samples(audio)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("mel_spectrogram needs a non-empty 1-D signal")
    with T.no_grad():
        values = log_mel(Tensor(x, dtype=np.float64), cfg).data
    return MelSpec(values, cfg)


# ---------------------------------------------------------------------------
# analysis helpers
# ---------------------------------------------------------------------------

def frequency_response(signal) -> np.ndarray:
    """Magnitude of the DFT over the first half-spectrum (``N // 2 + 1`` bins)."""
    x = np.asarray(signal, dtype=np.float64)
    if x.size == 0:
        raise ValueError("frequency_response of an empty signal")
    return np.abs(F.rfft(x))


def decimate(signal, p: int, phase: int = 0) -> np.ndarray:
    """Every ``p``-th sample starting at ``phase`` (no anti-alias filter)."""
    if p < 1 or not 0 <= phase < p:
        raise ValueError(f"need p >= 1 and 0 <= phase < p, got p={p}, phase={phase}")
    return np.asarray(signal)[..., phase::p]


# ---------------------------------------------------------------------------
# MELS file format
# ---------------------------------------------------------------------------

MEL_MAGIC = b"MELS"
MEL_VERSION = 1
_MEL_HEADER = struct.Struct("<4sIIIfI")


def save_mel(path, mel: MelSpec):
    values = np.ascontiguousarray(mel.values, dtype="<f4")
    header = _MEL_HEADER.pack(MEL_MAGIC, MEL_VERSION, mel.n_mels, mel.frames,
                              float(mel.config.sample_rate), mel.config.hop)
    atomic_write(path, header + values.tobytes())


def load_mel(path, cfg: Optional[MelConfig] = None) -> MelSpec:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _MEL_HEADER.size:
        raise ValueError(f"{path}: too short for a MELS header")
    magic, version, n_mels, frames, sr, hop = _MEL_HEADER.unpack_from(raw)
    if magic != MEL_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != MEL_VERSION:
        raise ValueError(f"{path}: unsupported MELS version {version}")
    expected = _MEL_HEADER.size + 4 * n_mels * frames
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    values = np.frombuffer(raw, dtype="<f4", offset=_MEL_HEADER.size).reshape(n_mels, frames)
    if cfg is None:
        cfg = MelConfig(sample_rate=int(round(sr)), hop=hop, n_mels=n_mels,
                        fmax=min(8000.0, sr / 2))
    elif cfg.n_mels != n_mels or cfg.hop != hop:
        raise ValueError(f"{path}: file has n_mels={n_mels}, hop={hop}; config expects "
                         f"n_mels={cfg.n_mels}, hop={cfg.hop}")
    return MelSpec(values.astype(np.float64), cfg)
