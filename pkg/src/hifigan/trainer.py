"""Adversarial training loop: segment sampling, alternating D/G updates, metrics, resume."""

import json
import math
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import tensor as T
from .audio import AudioClip
from .checkpoint import load_models, save_models
from .discriminators import DiscriminatorOutput, MPDConfig, MSDConfig, MultiPeriodDiscriminator, \
    MultiScaleDiscriminator, run_all
from .generator import Generator, GeneratorConfig
from .losses import LossWeights, combine_generator_terms, generator_terms, total_d_loss
from .nn import frozen
from .optim import AdamW, lr_schedule
from .signal import MelConfig, MelSpec, mel_spectrogram
from .tensor import Tensor


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    initial_lr: float = 2e-4
    lr_decay: float = 0.999
    beta1: float = 0.8
    beta2: float = 0.99
    weight_decay: float = 0.01
    eps: float = 1e-8
    segment_length: int = 8192
    batch_size: int = 4
    steps: int = 1000
    seed: int = 1234
    use_mpd: bool = True
    use_msd: bool = True
    mrf_single_block: bool = False
    log_every: int = 1

    def __post_init__(self):
        if self.segment_length <= 0 or self.segment_length % 256:
            raise ValueError(f"segment_length must be a positive multiple of 256, "
                             f"got {self.segment_length}")
        if self.batch_size < 1 or self.steps < 0:
            raise ValueError("batch_size must be >= 1 and steps >= 0")
        if not 0 < self.lr_decay <= 1 or self.initial_lr <= 0:
            raise ValueError("need initial_lr > 0 and 0 < lr_decay <= 1")


def sample_segment(clip: AudioClip, segment_length: int, rng: np.random.Generator,
                   mel_cfg: MelConfig = MelConfig()) -> Tuple[np.ndarray, MelSpec]:
    """Hop-aligned random crop (zero-padded on the right if the clip is short) and its mel."""
    hop = mel_cfg.hop
    if segment_length % hop:
        raise ValueError(f"segment_length {segment_length} is not a multiple of hop {hop}")
    x = clip.samples
    if len(x) < segment_length:
        seg = np.zeros(segment_length)
        seg[:len(x)] = x
    else:
        start = int(rng.integers(0, (len(x) - segment_length) // hop + 1)) * hop
        seg = x[start:start + segment_length].copy()
    return seg, mel_spectrogram(seg, mel_cfg)


def _finite(value: float) -> bool:
    return math.isfinite(value)


class Trainer:
    """Owns the generator, the active discriminators and both optimizers."""

    def __init__(self, gen_cfg: GeneratorConfig, train_cfg: TrainConfig = TrainConfig(),
                 mel_cfg: MelConfig = MelConfig(), mpd_cfg: MPDConfig = MPDConfig(),
                 msd_cfg: MSDConfig = MSDConfig(), weights: LossWeights = LossWeights(),
                 dtype=np.float32):
        if train_cfg.mrf_single_block:
            gen_cfg = gen_cfg.single_block()
        if gen_cfg.hop != mel_cfg.hop or gen_cfg.input_mels != mel_cfg.n_mels:
            raise ValueError("generator hop/input_mels must match the mel configuration")
        self.gen_cfg, self.cfg, self.mel_cfg, self.weights = gen_cfg, train_cfg, mel_cfg, weights
        self.dtype = np.dtype(dtype)
        seeds = np.random.SeedSequence(train_cfg.seed).spawn(4)
        with T.default_dtype(self.dtype):
            self.gen = Generator(gen_cfg, rng=np.random.default_rng(seeds[0]))
            self.mpd = (MultiPeriodDiscriminator(mpd_cfg, rng=np.random.default_rng(seeds[1]))
                        if train_cfg.use_mpd else None)
            self.msd = (MultiScaleDiscriminator(msd_cfg, rng=np.random.default_rng(seeds[2]))
                        if train_cfg.use_msd else None)
        self.data_rng = np.random.default_rng(seeds[3])
        opt_kw = dict(lr=train_cfg.initial_lr, betas=(train_cfg.beta1, train_cfg.beta2),
                      weight_decay=train_cfg.weight_decay, eps=train_cfg.eps)
        self.opt_g = AdamW(self.gen.named_parameters("gen"), **opt_kw)
        d_params = []
        for name, d in self.named_discriminators().items():
            d_params.extend(d.named_parameters(name))
        self.opt_d = AdamW(d_params, **opt_kw) if d_params else None
        self.step = 0
        self.epoch = 0

    def named_discriminators(self) -> Dict[str, object]:
        out = {}
        if self.mpd is not None:
            out["mpd"] = self.mpd
        if self.msd is not None:
            out["msd"] = self.msd
        return out

    @property
    def discriminators(self):
        return list(self.named_discriminators().values())

    def n_subdiscriminators(self) -> int:
        return sum(len(d.sub) for d in self.discriminators)

    def current_lr(self) -> float:
        return lr_schedule(self.epoch, self.cfg.initial_lr, self.cfg.lr_decay)

    # ------------------------------------------------------------------
    def _check(self, name: str, value: float):
        if not _finite(value):
            raise TrainingDiverged(f"non-finite {name} ({value}) at step {self.step}")

    def train_step(self, audio: np.ndarray, mel: np.ndarray) -> Dict[str, float]:
        """One D update followed by one G update on a batch.

        ``audio`` is ``[B, segment]`` and ``mel`` the matching ``[B, n_mels, frames]``.
        """
        audio = np.asarray(audio)
        mel = np.asarray(mel)
        if audio.ndim != 2 or mel.ndim != 3 or audio.shape[0] != mel.shape[0]:
            raise T.ShapeError(f"batch shapes disagree: audio {audio.shape}, mel {mel.shape}")
        if audio.shape[1] != mel.shape[2] * self.mel_cfg.hop:
            raise T.ShapeError(f"audio length {audio.shape[1]} != hop * frames "
                               f"({self.mel_cfg.hop} * {mel.shape[2]})")
        t0 = time.perf_counter()
        lr = self.current_lr()
        self.opt_g.lr = lr
        x = Tensor(audio[:, None, :], dtype=self.dtype)
        s = Tensor(mel, dtype=self.dtype)
        discs = self.discriminators

        # (1) generator forward
        x_hat = self.gen(s)

        # (2) discriminator update on real and detached fake
        loss_d_value = 0.0
        if discs:
            self.opt_d.lr = lr
            # one pass over [real; fake] stacked on the batch axis
            bsz = audio.shape[0]
            both = run_all(discs, T.concat([x, x_hat.detach()], axis=0))
            real_out = [DiscriminatorOutput(o.score_map[:bsz], []) for o in both]
            fake_out = [DiscriminatorOutput(o.score_map[bsz:], []) for o in both]
            loss_d = total_d_loss(real_out, fake_out)
            loss_d_value = loss_d.item()
            self._check("loss_d", loss_d_value)
            self.opt_d.zero_grad()
            loss_d.backward()
            self.opt_d.step()

        # (3) generator update against a fresh, frozen discriminator pass
        with frozen(*discs):
            with T.no_grad():
                real_out = run_all(discs, x)
            fake_out = run_all(discs, x_hat)
            terms = generator_terms(fake_out, real_out, x, x_hat, self.mel_cfg)
            loss_g = combine_generator_terms(terms, self.weights)
            values = {k: v.item() for k, v in terms.items()}
            for k, v in values.items():
                self._check(f"generator {k} loss", v)
            loss_g_value = loss_g.item()
            self._check("loss_g", loss_g_value)
            self.opt_g.zero_grad()
            # still frozen, so the kernels skip discriminator weight gradients
            loss_g.backward()
        self.opt_g.step()

        self.step += 1
        return {
            "step": self.step,
            "loss_d": loss_d_value,
            "loss_g": loss_g_value,
            "loss_mel": values["mel"],
            "loss_fm": values.get("fm", 0.0),
            "lr": lr,
            "wall_ms": (time.perf_counter() - t0) * 1000.0,
        }

    # ------------------------------------------------------------------
    def batches_per_epoch(self, n_clips: int) -> int:
        return max(1, -(-n_clips // self.cfg.batch_size))

    def sample_batch(self, clips: Sequence[AudioClip], order: np.ndarray, k: int):
        b = self.cfg.batch_size
        idx = [order[(k * b + i) % len(order)] for i in range(b)]
        audio, mel = [], []
        for i in idx:
            seg, m = sample_segment(clips[i], self.cfg.segment_length, self.data_rng, self.mel_cfg)
            audio.append(seg)
            mel.append(m.values)
        return np.stack(audio), np.stack(mel)

    def fit(self, clips: Sequence[AudioClip], steps: Optional[int] = None,
            sink: Optional[Callable[[str], None]] = None) -> List[Dict[str, float]]:
        """Run ``steps`` training steps; one epoch is one pass over ``clips`` in batches.

        Each metrics record is passed to ``sink`` as a JSON line.
        """
        if not clips:
            raise ValueError("no training clips")
        steps = self.cfg.steps if steps is None else steps
        per_epoch = self.batches_per_epoch(len(clips))
        history = []
        order = None
        for _ in range(steps):
            k = self.step % per_epoch
            self.epoch = self.step // per_epoch
            if order is None or k == 0:
                order = self.data_rng.permutation(len(clips))
            audio, mel = self.sample_batch(clips, order, k)
            rec = self.train_step(audio, mel)
            rec["epoch"] = self.epoch
            history.append(rec)
            if sink is not None and (rec["step"] % self.cfg.log_every == 0):
                sink(metrics_line(rec))
        return history

    # ------------------------------------------------------------------
    def save(self, path):
        extra = {"trainer.step": np.asarray(self.step, dtype=np.float64),
                 "trainer.epoch": np.asarray(self.epoch, dtype=np.float64)}
        extra.update(self.opt_g.state_dict("opt_g"))
        if self.opt_d is not None:
            extra.update(self.opt_d.state_dict("opt_d"))
        models = {"gen": self.gen}
        models.update(self.named_discriminators())
        save_models(path, models, extra)

    def load(self, path):
        models = {"gen": self.gen}
        models.update(self.named_discriminators())
        rest = load_models(path, models, strict=False)
        allowed = ("trainer.", "opt_g.", "opt_d.")
        unknown = [k for k in rest if not k.startswith(allowed)]
        if unknown:
            raise ValueError(f"{path}: unknown checkpoint entries {unknown[:5]}")
        if "trainer.step" in rest:
            self.step = int(rest["trainer.step"])
            self.epoch = int(rest["trainer.epoch"])
        if "opt_g.step" in rest:
            self.opt_g.load_state_dict(rest, "opt_g")
        if self.opt_d is not None and "opt_d.step" in rest:
            self.opt_d.load_state_dict(rest, "opt_d")


def metrics_line(record: Dict[str, float]) -> str:
    keys = ("step", "epoch", "loss_d", "loss_g", "loss_mel", "loss_fm", "lr", "wall_ms")
    return json.dumps({k: record[k] for k in keys if k in record})
