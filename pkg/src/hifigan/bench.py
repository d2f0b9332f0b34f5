"""Synthesis-speed benchmark: generated samples per wall-clock second."""

import math
import time
from dataclasses import dataclass, field
from typing import List

import numpy as np
from threadpoolctl import threadpool_limits

from . import tensor as T
from .generator import Generator
from .nn import fold_weights
from .tensor import Tensor

CV_LIMIT = 0.10


@dataclass
class BenchReport:
    variant: str
    frames: int
    samples: int
    sample_rate: int
    threads: int
    warmup: int
    seconds: List[float] = field(default_factory=list)

    @property
    def mean_seconds(self) -> float:
        return float(np.mean(self.seconds))

    @property
    def khz(self) -> float:
        return self.samples / self.mean_seconds / 1000.0

    @property
    def rtf(self) -> float:
        """Real-time factor: 1.0 means one second of audio per second of compute."""
        return self.khz * 1000.0 / self.sample_rate

    @property
    def cv(self) -> float:
        s = np.asarray(self.seconds)
        return float(s.std() / s.mean()) if len(s) > 1 else 0.0

    @property
    def stable(self) -> bool:
        return self.cv < CV_LIMIT

    def format(self) -> str:
        flag = "" if self.stable else f"  [UNSTABLE: cv >= {CV_LIMIT:.0%}]"
        return "\n".join([
            f"variant        {self.variant}",
            f"method         32-bit float, {self.threads} thread(s), {self.warmup} warm-up "
            f"+ {len(self.seconds)} timed runs; mel input prepared beforehand, no file I/O",
            f"input          {self.frames} frames -> {self.samples} samples "
            f"({self.samples / self.sample_rate:.2f} s at {self.sample_rate} Hz)",
            f"runs (s)       " + " ".join(f"{t:.4f}" for t in self.seconds),
            f"speed          {self.khz:.2f} kHz  (x{self.rtf:.2f} real time)",
            f"variation      cv {self.cv:.1%}{flag}",
        ])


def bench_generator(gen: Generator, seconds_of_audio: float = 1.0, repeats: int = 5,
                    warmup: int = 1, threads: int = 1, sample_rate: int = 22050,
                    seed: int = 0) -> BenchReport:
    """Time synthesis of ``seconds_of_audio`` of audio from a random log-mel input.

    Weights are folded once up front so the timed region is the forward pass
    alone.
    """
    if repeats < 1 or warmup < 0:
        raise ValueError("need repeats >= 1 and warmup >= 0")
    hop = gen.cfg.hop
    frames = max(1, math.ceil(seconds_of_audio * sample_rate / hop))
    rng = np.random.default_rng(seed)
    mel = rng.normal(-5.0, 2.0, size=(1, gen.cfg.input_mels, frames))
    gen.astype(np.float32)
    fold_weights(gen)
    x = Tensor(mel, dtype=np.float32)
    report = BenchReport(getattr(gen.cfg, "variant", "custom"), frames, frames * hop,
                         sample_rate, threads, warmup)
    with threadpool_limits(threads), T.no_grad():
        for _ in range(warmup):
            gen(x)
        for _ in range(repeats):
            t0 = time.perf_counter()
            out = gen(x)
            report.seconds.append(time.perf_counter() - t0)
    if out.shape[-1] != report.samples:
        raise RuntimeError(f"generator produced {out.shape[-1]} samples, expected {report.samples}")
    return report


def compare(reports: List[BenchReport]) -> str:
    """Side-by-side kHz table with ratios to the slowest entry."""
    slowest = min(r.khz for r in reports)
    lines = [f"{'variant':<10}{'kHz':>10}{'xRT':>9}{'vs slowest':>12}{'cv':>8}"]
    for r in reports:
        lines.append(f"{r.variant:<10}{r.khz:>10.2f}{r.rtf:>9.2f}{r.khz / slowest:>12.2f}"
                     f"{r.cv:>8.1%}")
    return "\n".join(lines)

