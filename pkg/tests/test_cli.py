import json

import numpy as np
import pytest

from hifigan.audio import AudioClip, wav_read, wav_write
from hifigan.cli import main
from hifigan.signal import MelConfig, mel_spectrogram, save_mel

TINY_CFG = """variant = v3
gen.h_u = 8
train.segment_length = 2048
train.batch_size = 1
train.steps = 2
"""


def tone(n=4096, f=440.0):
    return AudioClip(22050, 0.3 * np.sin(2 * np.pi * f * np.arange(n) / 22050))


@pytest.fixture
def workspace(tmp_path):
    (tmp_path / "data").mkdir()
    wav_write(tmp_path / "data" / "a.wav", tone())
    wav_write(tmp_path / "data" / "b.wav", tone(3000, 660.0))
    (tmp_path / "tiny.cfg").write_text(TINY_CFG)
    return tmp_path


def test_params_reports_total(capsys):
    assert main(["params", "--variant", "v3"]) == 0
    out = capsys.readouterr().out
    assert "generator v3" in out and "(1.46M)" in out


def test_train_then_synth(workspace, capsys):
    w = workspace
    rc = main(["train", str(w / "data"), str(w / "run"), "--config", str(w / "tiny.cfg"), "--fast",
               "--seed", "3"])
    assert rc == 0
    lines = [json.loads(s) for s in capsys.readouterr().out.splitlines() if s.startswith("{")]
    assert [r["step"] for r in lines] == [1, 2]
    assert all(np.isfinite(r["loss_g"]) for r in lines)
    stored = (w / "run" / "metrics.jsonl").read_text().splitlines()
    assert [json.loads(s)["step"] for s in stored] == [1, 2]

    ckpt = str(w / "run" / "checkpoint.hfgc")
    rc = main(["synth", str(w / "data" / "a.wav"), str(w / "out.wav"), "--config", str(w / "tiny.cfg"),
               "--checkpoint", ckpt])
    assert rc == 0
    out = wav_read(w / "out.wav")
    assert out.sample_rate == 22050 and len(out) == 4096

    # resume continues the step count
    rc = main(["train", str(w / "data"), str(w / "run"), "--config", str(w / "tiny.cfg"), "--fast",
               "--checkpoint", ckpt, "--steps", "1"])
    assert rc == 0
    resumed = [json.loads(s) for s in capsys.readouterr().out.splitlines() if s.startswith("{")]
    assert [r["step"] for r in resumed] == [3]


def test_synth_from_mel_file(tmp_path, capsys):
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text(TINY_CFG)
    save_mel(tmp_path / "x.mel", mel_spectrogram(tone(1280).samples, MelConfig()))
    assert main(["synth", str(tmp_path / "x.mel"), str(tmp_path / "y.wav"), "--config", str(cfg)]) == 0
    assert len(wav_read(tmp_path / "y.wav")) == 1280


def test_melcmp_of_own_mel_is_zero(tmp_path, capsys):
    wav_write(tmp_path / "a.wav", tone())
    clip = wav_read(tmp_path / "a.wav")
    save_mel(tmp_path / "a.mel", mel_spectrogram(clip.samples, MelConfig()))
    assert main(["melcmp", str(tmp_path / "a.wav"), str(tmp_path / "a.mel")]) == 0
    # the file stores 32-bit floats, so only rounding separates the two
    assert float(capsys.readouterr().out) < 1e-6


@pytest.mark.parametrize("argv", [
    ["synth", "in.wav", "out.wav", "--checkpoint", "missing.hfgc"],
    ["synth", "missing.wav", "out.wav"],
    ["train", "no_such_dir", "out"],
    ["params", "--config", "missing.cfg"],
])
def test_user_errors_exit_2(argv, tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    wav_write(tmp_path / "in.wav", tone())
    assert main(argv) == 2
    err = capsys.readouterr().err
    assert err.startswith("error:") and "Traceback" not in err


def test_bad_checkpoint_exit_2(tmp_path, capsys):
    (tmp_path / "bad.hfgc").write_bytes(b"HFGC\x01")
    wav_write(tmp_path / "in.wav", tone())
    assert main(["synth", str(tmp_path / "in.wav"), str(tmp_path / "o.wav"),
                 "--checkpoint", str(tmp_path / "bad.hfgc")]) == 2
    assert "truncated" in capsys.readouterr().err


def test_bench_prints_speed(capsys):
    assert main(["bench", "--variant", "v3", "--seconds", "0.05", "--repeats", "1"]) == 0
    assert "kHz" in capsys.readouterr().out
