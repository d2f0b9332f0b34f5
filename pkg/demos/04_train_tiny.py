"""A few adversarial training steps on a synthetic chord with a narrow model.

Prints the JSON metrics stream, then saves and reloads a checkpoint.

Run: python demos/04_train_tiny.py [steps]
"""

import dataclasses
import os
import sys
import tempfile

import numpy as np

from hifigan.audio import AudioClip
from hifigan.discriminators import scaled_mpd, scaled_msd
from hifigan.generator import V3
from hifigan.trainer import TrainConfig, Trainer


def main(steps=20):
    t = np.arange(8192) / 22050
    clip = AudioClip(22050, sum(0.25 * np.sin(2 * np.pi * f * t) for f in (220.0, 330.0, 440.0)))
    gen_cfg = dataclasses.replace(V3, variant="v3-narrow", h_u=32)
    cfg = TrainConfig(segment_length=4096, batch_size=1, steps=steps, initial_lr=1e-3, seed=0)
    trainer = Trainer(gen_cfg, cfg, mpd_cfg=scaled_mpd(1 / 8), msd_cfg=scaled_msd(1 / 8))
    print(f"{trainer.n_subdiscriminators()} sub-discriminators")
    hist = trainer.fit([clip], sink=print)
    print(f"mel loss {hist[0]['loss_mel']:.3f} -> {hist[-1]['loss_mel']:.3f}")

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "demo.hfgc")
        trainer.save(path)
        again = Trainer(gen_cfg, cfg, mpd_cfg=scaled_mpd(1 / 8), msd_cfg=scaled_msd(1 / 8))
        again.load(path)
        print(f"checkpoint {os.path.getsize(path)} bytes, resumed at step {again.step}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 20)
