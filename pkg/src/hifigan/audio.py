"""16-bit PCM mono WAV reading and writing."""

import io
import os
import wave
from dataclasses import dataclass

import numpy as np

from .checkpoint import atomic_write

SUPPORTED_RATES = (16000, 22050, 44100)
PCM_SCALE = 32768.0


class WavError(ValueError):
    pass


@dataclass
class AudioClip:
    sample_rate: int
    samples: np.ndarray

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError(f"AudioClip holds mono audio; got shape {self.samples.shape}")
        if self.sample_rate not in SUPPORTED_RATES:
            raise ValueError(f"unsupported sample rate {self.sample_rate}; "
                             f"expected one of {SUPPORTED_RATES}")

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


def to_pcm16(samples: np.ndarray) -> np.ndarray:
    """Scale by 32768, round half away from zero, clamp to the int16 range."""
    scaled = np.asarray(samples, dtype=np.float64) * PCM_SCALE
    rounded = np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)
    return np.clip(rounded, -32768, 32767).astype("<i2")


def from_pcm16(pcm: np.ndarray) -> np.ndarray:
    return pcm.astype(np.float64) / PCM_SCALE


def wav_decode(raw: bytes, source="<bytes>") -> AudioClip:
    try:
        with wave.open(io.BytesIO(raw), "rb") as w:
            channels, width, rate = w.getnchannels(), w.getsampwidth(), w.getframerate()
            frames = w.readframes(w.getnframes())
    except (wave.Error, EOFError) as err:
        raise WavError(f"{source}: not a readable PCM WAV file ({err})") from None
    if channels != 1:
        raise WavError(f"{source}: {channels}-channel audio; only mono is supported")
    if width != 2:
        raise WavError(f"{source}: {8 * width}-bit samples; only 16-bit PCM is supported")
    pcm = np.frombuffer(frames, dtype="<i2")
    try:
        return AudioClip(rate, from_pcm16(pcm))
    except ValueError as err:
        raise WavError(f"{source}: {err}") from None


def wav_encode(clip: AudioClip) -> bytes:
    buf = io.BytesIO()
    with wave.open(buf, "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(clip.sample_rate)
        w.writeframes(to_pcm16(clip.samples).tobytes())
    return buf.getvalue()


def wav_read(path) -> AudioClip:
    if not os.path.exists(path):
        raise WavError(f"no such file: {path}")
    with open(path, "rb") as fh:
        return wav_decode(fh.read(), source=str(path))


def wav_write(path, clip: AudioClip):
    atomic_write(path, wav_encode(clip))
