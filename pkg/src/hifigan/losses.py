"""Least-squares adversarial, mel-spectrogram and feature-matching objectives.

Expectations are realised as element means over the batch and the score or
feature map, so magnitudes do not depend on segment length or channel width.
"""

from dataclasses import dataclass
from typing import Dict, Sequence

from . import tensor as T
from .discriminators import DiscriminatorOutput
from .signal import MelConfig, log_mel
from .tensor import Tensor


@dataclass(frozen=True)
class LossWeights:
    lambda_fm: float = 2.0
    lambda_mel: float = 45.0

    def __post_init__(self):
        if self.lambda_fm < 0 or self.lambda_mel < 0:
            raise ValueError("loss weights must be non-negative")


def adv_d_loss(real_scores: Tensor, fake_scores: Tensor) -> Tensor:
    """mean((D(x) - 1)^2) + mean(D(G(s))^2) for one sub-discriminator."""
    return T.squared_error(real_scores, 1.0) + T.squared_error(fake_scores, 0.0)


def adv_g_loss(fake_scores: Tensor) -> Tensor:
    return T.squared_error(fake_scores, 1.0)


def mel_loss(x: Tensor, x_hat: Tensor, cfg: MelConfig) -> Tensor:
    """Mean L1 between log-mels of target and estimate over the loss band.

    Gradients flow only into ``x_hat``.
    """
    if x.shape != x_hat.shape:
        raise T.ShapeError(f"mel_loss: waveform shapes {x.shape} and {x_hat.shape} differ")
    band = cfg.for_loss()
    with T.no_grad():
        target = log_mel(x.detach(), band)
    return T.l1_distance(log_mel(x_hat, band), target)


def fm_loss(real_features: Sequence[Tensor], fake_features: Sequence[Tensor]) -> Tensor:
    """Sum over layers of the mean absolute feature difference (positional pairing)."""
    if len(real_features) != len(fake_features):
        raise ValueError(f"feature lists differ in length: {len(real_features)} vs "
                         f"{len(fake_features)}")
    total = None
    for real, fake in zip(real_features, fake_features):
        term = T.l1_distance(fake, real.detach())
        total = term if total is None else total + term
    return total


def _sum(terms):
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total


def generator_terms(fake_outputs: Sequence[DiscriminatorOutput],
                    real_outputs: Sequence[DiscriminatorOutput],
                    x: Tensor, x_hat: Tensor, mel_cfg: MelConfig) -> Dict[str, Tensor]:
    """Unweighted pieces of the generator objective summed over sub-discriminators."""
    if len(fake_outputs) != len(real_outputs):
        raise ValueError("real and fake outputs must come from the same sub-discriminators")
    out = {"mel": mel_loss(x, x_hat, mel_cfg)}
    if fake_outputs:
        out["adv"] = _sum([adv_g_loss(f.score_map) for f in fake_outputs])
        out["fm"] = _sum([fm_loss(r.features, f.features)
                          for r, f in zip(real_outputs, fake_outputs)])
    return out


def combine_generator_terms(terms: Dict[str, Tensor], w: LossWeights) -> Tensor:
    total = T.scale(terms["mel"], w.lambda_mel)
    if "adv" in terms:
        total = total + terms["adv"] + T.scale(terms["fm"], w.lambda_fm)
    return total


def total_g_loss(fake_outputs, real_outputs, x, x_hat, w: LossWeights = LossWeights(),
                 mel_cfg: MelConfig = MelConfig()) -> Tensor:
    """sum_k [adv_g + lambda_fm * fm] + lambda_mel * mel."""
    return combine_generator_terms(generator_terms(fake_outputs, real_outputs, x, x_hat, mel_cfg), w)


def total_d_loss(real_outputs: Sequence[DiscriminatorOutput],
                 fake_outputs: Sequence[DiscriminatorOutput]) -> Tensor:
    if len(real_outputs) != len(fake_outputs) or not real_outputs:
        raise ValueError("need matching, non-empty real and fake output lists")
    return _sum([adv_d_loss(r.score_map, f.score_map) for r, f in zip(real_outputs, fake_outputs)])
