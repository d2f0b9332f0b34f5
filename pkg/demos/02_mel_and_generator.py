"""From a waveform to a mel-spectrogram and back through an untrained generator.

Shows the frame convention (hop-aligned audio gives exactly len/256 frames),
the generator's length law, and the parameter counts of the three presets.

Run: python demos/02_mel_and_generator.py
"""

import numpy as np

from hifigan.generator import PRESETS, build_generator, receptive_field, synthesize
from hifigan.nn import param_count
from hifigan.signal import MelConfig, mel_spectrogram


def main():
    cfg = MelConfig()
    t = np.arange(8192) / cfg.sample_rate
    wave = 0.3 * np.sin(2 * np.pi * 440 * t) + 0.1 * np.sin(2 * np.pi * 1320 * t)
    mel = mel_spectrogram(wave, cfg)
    print(f"{wave.size} samples -> mel {mel.values.shape} (n_mels, frames)")
    loudest = mel.values.mean(axis=1).argsort()[-3:][::-1]
    print("loudest mel bands:", loudest.tolist())

    for name, gcfg in PRESETS.items():
        gen = build_generator(gcfg, seed=0)
        print(f"{name}: {param_count(gen) / 1e6:.2f}M parameters, "
              f"receptive field {receptive_field(gcfg)} samples")

    gen = build_generator(PRESETS["v3"], seed=0).astype(np.float32)
    audio = synthesize(gen, mel)
    print(f"v3 synthesis: {mel.frames} frames -> {audio.size} samples "
          f"(256 x {mel.frames} = {256 * mel.frames}), peak {np.abs(audio).max():.4f}")


if __name__ == "__main__":
    main()
