"""GAN mel-spectrogram vocoder on a small numpy autodiff engine.

The generator upsamples log-mel frames to a waveform with transposed
convolutions and multi-receptive-field residual stacks; training pits it
against multi-period and multi-scale discriminators.
"""

from .audio import AudioClip, wav_read, wav_write
from .checkpoint import load_models, load_state, save_models, save_state
from .config import RunConfig, load_config, parse_config, preset, save_config, serialize_config
from .discriminators import (DiscriminatorOutput, MPDConfig, MSDConfig, MultiPeriodDiscriminator,
                             MultiScaleDiscriminator, period_reshape)
from .generator import (PRESETS, V1, V2, V3, Generator, GeneratorConfig, build_generator,
                        receptive_field, synthesize)
from .losses import LossWeights, total_d_loss, total_g_loss
from .nn import param_count
from .optim import AdamW, lr_schedule
from .signal import MelConfig, MelSpec, load_mel, mel_spectrogram, save_mel
from .tensor import Tensor, no_grad
from .trainer import TrainConfig, Trainer, sample_segment

__version__ = "0.1.0"
