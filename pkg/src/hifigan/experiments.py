"""Toy experiments contrasting period-based and scale-based discriminators.

``run_b1`` trains each discriminator family, topped with a scalar projection,
as a binary classifier of pure tones where a small set of frequencies is
labelled false. ``run_b2`` fits a free-parameter generator to a sinc pulse
with small feed-forward discriminators that see either period-decimated or
average-pooled views of the signal.
"""

import json
import os
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import tensor as T
from .discriminators import (MultiPeriodDiscriminator, MultiScaleDiscriminator, period_reshape,
                             pool_audio, scaled_mpd, scaled_msd)
from .checkpoint import atomic_write
from .nn import Linear, Module, Parameter, frozen
from .optim import AdamW
from .signal import frequency_response
from .tensor import Tensor

TRUE_RATIOS = (0.99, 0.995, 0.999)
KINDS = ("msd", "mpd")


# ---------------------------------------------------------------------------
# periodic-signal discrimination
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class B1Config:
    n_train: int = 40000
    n_eval: int = 8000
    sample_rate: int = 22050
    clip_length: int = 8192
    f_min: int = 1
    f_max: int = 8000
    width: float = 1.0          # discriminator channel multiplier
    steps: int = 3000
    batch_size: int = 16
    lr: float = 2e-4
    repeats: int = 5
    balanced: bool = True       # draw half of every batch from each class
    n_freqs: Optional[int] = None  # evenly spaced candidate tones; None means every integer Hz

    def __post_init__(self):
        if self.n_eval % 2:
            raise ValueError("n_eval must be even for a 50:50 evaluation split")
        if not 1 <= self.f_min < self.f_max <= self.sample_rate / 2:
            raise ValueError("need 1 <= f_min < f_max <= sample_rate / 2")
        if self.batch_size < 2 or self.steps < 1 or self.repeats < 1:
            raise ValueError("need batch_size >= 2, steps >= 1, repeats >= 1")
        if self.n_freqs is not None and self.n_freqs < 2:
            raise ValueError("n_freqs must be >= 2")


B1_FULL = B1Config()
# Reduced run: 1000 candidate tones (8 Hz apart, the fewest that leave one false
# tone at 99.9%) on 4096-sample clips, whose 5.4 Hz bins resolve that spacing.
B1_FAST = B1Config(n_train=4000, n_eval=800, clip_length=4096, width=1 / 16, steps=400,
                   batch_size=16, lr=2e-3, repeats=1, n_freqs=1000)


class SinusoidDataset:
    """Pure tones from a fixed frequency grid; a random subset of the grid is labelled false.

    The grid is every integer Hz in ``[f_min, f_max]`` unless ``n_freqs``
    asks for that many evenly spaced tones instead.

    Clips are described by (frequency, amplitude, phase) and rendered on
    demand, so even the full-size set costs a few hundred kilobytes.
    """

    def __init__(self, true_ratio: float, n_train=40000, n_eval=8000, sample_rate=22050,
                 clip_length=8192, seed=0, f_min=1, f_max=8000, n_freqs=None):
        if not 0 < true_ratio < 1:
            raise ValueError(f"true_ratio must lie in (0, 1), got {true_ratio}")
        if n_eval % 2:
            raise ValueError("n_eval must be even")
        rng = np.random.default_rng(seed)
        self.sample_rate, self.clip_length = sample_rate, clip_length
        if n_freqs is None:
            self.freqs = np.arange(f_min, f_max + 1).astype(np.float64)
        else:
            self.freqs = np.linspace(f_min, f_max, n_freqs)
        n = self.freqs.size
        n_false = n - int(round(true_ratio * n))
        if n_false < 1 or n_false >= n:
            raise ValueError(f"ratio {true_ratio} leaves no frequencies in one class")
        self.false_freqs = np.sort(rng.choice(self.freqs, n_false, replace=False))
        self.true_freqs = np.setdiff1d(self.freqs, self.false_freqs)
        self.true_ratio = true_ratio

        f = rng.choice(self.freqs, n_train)
        self.train = self._params(f, rng)
        half = n_eval // 2
        f_eval = np.concatenate([rng.choice(self.true_freqs, half), rng.choice(self.false_freqs, half)])
        f_eval = f_eval[rng.permutation(n_eval)]
        self.eval = self._params(f_eval, rng)

    def _params(self, f, rng):
        return {
            "freq": f.astype(np.float64),
            "amp": rng.uniform(0.1, 1.0, f.size),
            "phase": rng.uniform(0.0, 2 * np.pi, f.size),
            "label": np.isin(f, self.true_freqs).astype(np.float64),
        }

    def render(self, split: str, idx) -> np.ndarray:
        p = getattr(self, split)
        idx = np.asarray(idx)
        t = np.arange(self.clip_length) / self.sample_rate
        arg = 2 * np.pi * p["freq"][idx, None] * t[None, :] + p["phase"][idx, None]
        return p["amp"][idx, None] * np.sin(arg)

    def labels(self, split: str, idx=None) -> np.ndarray:
        lab = getattr(self, split)["label"]
        return lab if idx is None else lab[np.asarray(idx)]


class ProjectedDiscriminator(Module):
    """MPD or MSD whose score maps are averaged, summed over sub-discriminators,
    and passed through a scalar affine head."""

    def __init__(self, kind: str, width: float = 1.0, rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng()
        if kind == "mpd":
            self.body = MultiPeriodDiscriminator(scaled_mpd(width), rng=rng)
        elif kind == "msd":
            self.body = MultiScaleDiscriminator(scaled_msd(width), rng=rng)
        else:
            raise ValueError(f"kind must be 'mpd' or 'msd', got {kind!r}")
        self.kind = kind
        self.head = Linear(1, 1, rng=rng, std=1.0)

    def forward(self, audio: Tensor) -> Tensor:
        """``[B, 1, T]`` -> ``[B]`` scores."""
        total = None
        for out in self.body(audio):
            s = out.score_map
            pooled = T.mean(s, axis=tuple(range(1, s.ndim)))
            total = pooled if total is None else total + pooled
        return T.reshape(self.head(T.reshape(total, (-1, 1))), (-1,))


def _predict(model: ProjectedDiscriminator, data: SinusoidDataset, split: str,
             batch=64, dtype=np.float32) -> np.ndarray:
    n = data.labels(split).size
    out = []
    model.eval()
    with T.no_grad():
        for i in range(0, n, batch):
            idx = np.arange(i, min(n, i + batch))
            x = Tensor(data.render(split, idx)[:, None, :], dtype=dtype)
            out.append(model(x).data.astype(np.float64))
    model.train()
    return np.concatenate(out)


def train_classifier(kind: str, data: SinusoidDataset, cfg: B1Config, seed: int,
                     log=None, dtype=np.float32) -> Dict[str, object]:
    rng = np.random.default_rng(seed)
    with T.default_dtype(dtype):
        model = ProjectedDiscriminator(kind, cfg.width, rng=rng)
    opt = AdamW(model.named_parameters(kind), lr=cfg.lr)
    labels = data.labels("train")
    pos, neg = np.flatnonzero(labels == 1), np.flatnonzero(labels == 0)
    half = cfg.batch_size // 2
    t0 = time.perf_counter()
    losses = []
    for step in range(cfg.steps):
        if cfg.balanced and neg.size:
            idx = np.concatenate([rng.choice(pos, cfg.batch_size - half), rng.choice(neg, half)])
        else:
            idx = rng.choice(labels.size, cfg.batch_size)
        x = Tensor(data.render("train", idx)[:, None, :], dtype=dtype)
        target = Tensor(labels[idx], dtype=dtype)
        loss = T.squared_error(model(x), target)
        opt.zero_grad()
        loss.backward()
        opt.step()
        losses.append(loss.item())
        if log is not None and (step + 1) % max(1, cfg.steps // 10) == 0:
            log(f"  [{kind}] step {step + 1}/{cfg.steps} loss {np.mean(losses[-50:]):.4f}")
    scores = _predict(model, data, "eval", dtype=dtype)
    truth = data.labels("eval")
    acc = float(np.mean((scores > 0.5) == (truth > 0.5)))
    return {"kind": kind, "accuracy": acc, "final_loss": float(np.mean(losses[-50:])),
            "train_seconds": time.perf_counter() - t0}


@dataclass
class B1Row:
    ratio: float
    accuracy: Dict[str, float]
    per_repeat: Dict[str, List[float]] = field(default_factory=dict)
    config: Optional[B1Config] = None
    seed: int = 0

    def record(self) -> str:
        body = {"experiment": "b1", "ratio": self.ratio, "seed": self.seed,
                "accuracy": self.accuracy, "per_repeat": self.per_repeat,
                "config": asdict(self.config) if self.config else None}
        return json.dumps(body)


def run_b1(ratio: float, cfg: B1Config = B1_FULL, seed: int = 0, kinds: Sequence[str] = KINDS,
           log=None) -> B1Row:
    """Mean eval accuracy of each discriminator family over ``cfg.repeats`` repeats.

    Every repeat draws a fresh dataset (new false-frequency set) and fresh
    model initialisations; both families see the same dataset in a repeat.
    """
    per_repeat: Dict[str, List[float]] = {k: [] for k in kinds}
    seeds = np.random.SeedSequence([seed, int(round(ratio * 1e4))]).spawn(cfg.repeats)
    for r, ss in enumerate(seeds):
        data_seed, *model_seeds = ss.generate_state(1 + len(kinds))
        data = SinusoidDataset(ratio, cfg.n_train, cfg.n_eval, cfg.sample_rate, cfg.clip_length,
                               seed=int(data_seed), f_min=cfg.f_min, f_max=cfg.f_max,
                               n_freqs=cfg.n_freqs)
        for kind, ms in zip(kinds, model_seeds):
            res = train_classifier(kind, data, cfg, int(ms), log=log)
            per_repeat[kind].append(res["accuracy"])
            if log is not None:
                log(f"ratio {ratio:.3f} repeat {r + 1}/{cfg.repeats} {kind}: "
                    f"accuracy {res['accuracy']:.4f} ({res['train_seconds']:.0f} s)")
    acc = {k: float(np.mean(v)) for k, v in per_repeat.items()}
    return B1Row(ratio, acc, per_repeat, cfg, seed)


def format_table(rows: Sequence[B1Row]) -> str:
    """Models as rows, true-label ratios as columns, accuracies in percent."""
    kinds = [k for k in KINDS if all(k in r.accuracy for r in rows)]
    head = f"{'Model':<8}" + "".join(f"{r.ratio * 100:>10.1f}%" for r in rows)
    lines = [f"{'':<8}{'True Label Ratio':^{11 * len(rows)}}", head]
    for k in kinds:
        lines.append(f"{k.upper():<8}" + "".join(f"{r.accuracy[k] * 100:>10.2f}%" for r in rows))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# sinc toy with frequency-response analysis
# ---------------------------------------------------------------------------

B2_PERIODS = (1, 2, 4)


@dataclass(frozen=True)
class B2Config:
    n_points: int = 1000
    extent: float = 200.0
    hidden: int = 256
    steps: int = 10000
    lr: float = 1e-3
    init_std: float = 0.01


class SincTarget:
    """Normalised sinc on ``n`` evenly spaced points of ``[-extent, extent]``.

    The grid is built as odd multiples of half a step, so point ``i`` and
    point ``n - 1 - i`` are exact negatives and the values are exactly symmetric.
    """

    def __init__(self, n_points=1000, extent=200.0):
        if n_points < 2:
            raise ValueError("need at least two points")
        step = 2 * extent / (n_points - 1)
        k = 2 * np.arange(n_points) - (n_points - 1)
        self.x = k * (step / 2)
        self.values = np.sinc(self.x)


class FeedForward(Module):
    """Three affine layers with leaky ReLU between them; one score per input row."""

    def __init__(self, n_in, hidden=256, rng=None):
        super().__init__()
        self.fc = [Linear(n_in, hidden, rng=rng), Linear(hidden, hidden, rng=rng),
                   Linear(hidden, 1, rng=rng)]

    def forward(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.fc):
            x = layer(x)
            if i < len(self.fc) - 1:
                x = T.leaky_relu(x, 0.1)
        return x


def views(signal: Tensor, kind: str) -> List[Tensor]:
    """Inputs of the three toy sub-discriminators for a ``[n]`` signal.

    ``mpd``: the ``p`` phase streams of period ``p`` as rows of a ``[p, n/p]``
    matrix (rows share the sub-discriminator weights). ``msd``: raw, x2- and
    x4-average-pooled signals as single rows.
    """
    x = T.reshape(signal, (1, 1, -1))
    out = []
    if kind == "mpd":
        for p in B2_PERIODS:
            folded = period_reshape(x, p)                 # [1, 1, rows, p]
            rows = folded.shape[2]
            out.append(T.transpose(T.reshape(folded, (rows, p)), (1, 0)))
    elif kind == "msd":
        for i in range(3):
            if i:
                x = pool_audio(x)
            out.append(T.reshape(x, (1, -1)))
    else:
        raise ValueError(f"kind must be 'mpd' or 'msd', got {kind!r}")
    return out


def view_arrays(signal: np.ndarray, kind: str) -> List[np.ndarray]:
    with T.no_grad():
        return [v.data for v in views(Tensor(signal, dtype=np.float64), kind)]


def band_power(x: np.ndarray, lo: float, hi: float) -> float:
    """Per-sample power of ``x`` in the band ``[lo, hi)`` cycles/sample (one-sided)."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    spec = frequency_response(x) ** 2
    f = np.arange(spec.size) / n
    weight = np.where((f > 0) & (f < 0.5), 2.0, 1.0)  # fold negative frequencies in
    sel = (f >= lo) & (f < hi) if hi < 0.5 else (f >= lo) & (f <= hi)
    return float((spec[sel] * weight[sel]).sum() / n ** 2)


def high_band_retention(target: np.ndarray, kind: str) -> List[float]:
    """For each sub-discriminator view, power in the top half of the coarsest view's band.

    The band is fixed in absolute terms: ``[1/16, 1/8]`` cycles per original
    sample, the upper half of what a x4-downsampled view can represent. Each
    view's power there is divided by the raw signal's.
    """
    raw = band_power(target, 1 / 16, 1 / 8)
    out = []
    for v, factor in zip(view_arrays(target, kind), (1, 2, 4)):
        rows = np.atleast_2d(v)
        # a view at rate 1/factor represents original frequency f at f * factor
        powers = [band_power(r, factor / 16, factor / 8) for r in rows]
        out.append(float(np.mean(powers)) / raw)
    return out


@dataclass
class B2Result:
    kind: str
    seed: int
    signal: np.ndarray
    rel_l2: float
    final_loss_d: float
    final_loss_g: float
    target_views: List[np.ndarray]
    learned_views: List[np.ndarray]

    def responses(self, which="learned") -> List[np.ndarray]:
        src = self.learned_views if which == "learned" else self.target_views
        return [np.mean([frequency_response(r) for r in np.atleast_2d(v)], axis=0) for v in src]

    def record(self) -> str:
        return json.dumps({"experiment": "b2", "kind": self.kind, "seed": self.seed,
                           "rel_l2": self.rel_l2, "final_loss_d": self.final_loss_d,
                           "final_loss_g": self.final_loss_g})


def run_b2(kind: str, seed: int = 0, cfg: B2Config = B2Config(), log=None) -> B2Result:
    """Fit ``cfg.n_points`` free parameters to the sinc target with adversarial losses only."""
    if kind not in KINDS:
        raise ValueError(f"kind must be 'mpd' or 'msd', got {kind!r}")
    rng = np.random.default_rng(seed)
    target = SincTarget(cfg.n_points, cfg.extent)
    with T.default_dtype(np.float64):
        theta = Parameter(rng.normal(0.0, cfg.init_std, cfg.n_points))
        real_views = views(Tensor(target.values), kind)
        discs = [FeedForward(v.shape[1], cfg.hidden, rng=rng) for v in real_views]
    opt_g = AdamW([("theta", theta)], lr=cfg.lr)
    d_params = []
    for i, d in enumerate(discs):
        d_params.extend(d.named_parameters(f"d{i}"))
    opt_d = AdamW(d_params, lr=cfg.lr)
    loss_d = loss_g = None
    for step in range(cfg.steps):
        fake_views = views(theta.detach(), kind)
        ld = None
        for d, rv, fv in zip(discs, real_views, fake_views):
            term = T.squared_error(d(rv), 1.0) + T.squared_error(d(fv), 0.0)
            ld = term if ld is None else ld + term
        opt_d.zero_grad()
        ld.backward()
        opt_d.step()

        lg = None
        with frozen(*discs):
            for d, fv in zip(discs, views(theta, kind)):
                term = T.squared_error(d(fv), 1.0)
                lg = term if lg is None else lg + term
            opt_g.zero_grad()
            lg.backward()
        opt_g.step()
        loss_d, loss_g = ld.item(), lg.item()
        if log is not None and (step + 1) % max(1, cfg.steps // 10) == 0:
            log(f"  [{kind} seed {seed}] step {step + 1}/{cfg.steps} "
                f"loss_d {loss_d:.4f} loss_g {loss_g:.4f}")
    signal = theta.data.copy()
    rel = float(np.linalg.norm(signal - target.values) / np.linalg.norm(target.values))
    return B2Result(kind, seed, signal, rel, loss_d, loss_g,
                    view_arrays(target.values, kind), view_arrays(signal, kind))


def write_b2_columns(result: B2Result, directory) -> List[str]:
    """Write signals, views and their frequency responses as whitespace-separated columns."""
    os.makedirs(directory, exist_ok=True)
    written = []
    target = SincTarget(result.signal.size)

    def put(name, header, cols):
        n = max(len(c) for c in cols)
        rows = [header]
        for i in range(n):
            rows.append(" ".join(f"{c[i]:.9g}" if i < len(c) else "nan" for c in cols))
        path = os.path.join(directory, f"{result.kind}_seed{result.seed}_{name}.txt")
        atomic_write(path, ("\n".join(rows) + "\n").encode())
        written.append(path)

    put("signal", "# x target learned", [target.x, target.values, result.signal])
    for i, (tv, lv) in enumerate(zip(result.target_views, result.learned_views)):
        t_rows, l_rows = np.atleast_2d(tv), np.atleast_2d(lv)
        put(f"view{i}", "# index target_row0 learned_row0", [np.arange(t_rows.shape[1]),
                                                              t_rows[0], l_rows[0]])
    pairs = zip(result.target_views, result.responses("target"), result.responses("learned"))
    for i, (view, tr, lr) in enumerate(pairs):
        n = np.atleast_2d(view).shape[1]
        put(f"response{i}", "# cycles_per_sample target_mag learned_mag",
            [np.arange(tr.size) / n, tr, lr])
    return written


__all__ = [
    "TRUE_RATIOS", "B1Config", "B1_FULL", "B1_FAST", "SinusoidDataset", "ProjectedDiscriminator",
    "train_classifier", "run_b1", "B1Row", "format_table", "B2Config", "SincTarget", "FeedForward",
    "views", "view_arrays", "band_power", "high_band_retention", "run_b2", "B2Result",
    "write_b2_columns",
]
