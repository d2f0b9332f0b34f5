import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hifigan import fft as F
from hifigan import tensor as T
from hifigan.signal import (LOG_FLOOR, MelConfig, MelSpec, decimate, frame_index,
                            frequency_response, hann_window, hz_to_mel, load_mel, log_mel,
                            mel_filterbank, mel_spectrogram, mel_to_hz, save_mel, stft)
from hifigan.tensor import Tensor

from oracles import dft, gradcheck

CFG = MelConfig()


# ---------------------------------------------------------------------------
# FFT
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("n", [1, 2, 3, 7, 8, 13, 64, 100, 127, 1000, 1024])
def test_fft_matches_direct_dft(n, rng):
    x = rng.normal(size=(2, n)) + 1j * rng.normal(size=(2, n))
    np.testing.assert_allclose(F.fft(x), dft(x), atol=1e-9 * n)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 300), st.integers(0, 2**31 - 1))
def test_fft_inverse_round_trip(n, seed):
    x = np.random.default_rng(seed).normal(size=n)
    np.testing.assert_allclose(F.ifft(F.fft(x)).real, x, atol=1e-10)


def test_rfft_is_half_spectrum(rng):
    x = rng.normal(size=37)
    np.testing.assert_allclose(F.rfft(x), dft(x)[:19], atol=1e-10)


def test_fft_empty_raises():
    with pytest.raises(ValueError):
        F.fft(np.zeros(0))


# ---------------------------------------------------------------------------
# mel scale and filterbank
# ---------------------------------------------------------------------------

def test_slaney_mel_scale_reference_points():
    # linear at 200/3 Hz per mel up to 1 kHz, then 27 mels per factor 6.4
    assert hz_to_mel(1000.0) == pytest.approx(15.0)
    assert hz_to_mel(500.0) == pytest.approx(7.5)
    assert hz_to_mel(6400.0) == pytest.approx(42.0)
    np.testing.assert_allclose(mel_to_hz(hz_to_mel(np.linspace(0, 11025, 50))),
                               np.linspace(0, 11025, 50), rtol=1e-12, atol=1e-9)


def test_filterbank_rows_positive_and_centres_increase():
    fb = mel_filterbank(CFG)
    assert fb.shape == (80, 513)
    assert (fb.sum(axis=1) > 0).all()
    centres = fb.argmax(axis=1)
    assert (np.diff(centres) >= 0).all()
    bins = np.linspace(0, CFG.sample_rate / 2, 513)
    assert not fb[:, bins > CFG.fmax].any()


def test_single_filter_spans_the_band():
    cfg = MelConfig(n_mels=1, fmin=300.0, fmax=8000.0)
    row = mel_filterbank(cfg)[0]
    bins = np.linspace(0, cfg.sample_rate / 2, cfg.n_fft // 2 + 1)
    support = bins[row > 0]
    centre = mel_to_hz((hz_to_mel(300.0) + hz_to_mel(8000.0)) / 2)
    assert support.min() >= 300.0 and support.max() <= 8000.0
    assert abs(bins[row.argmax()] - centre) <= bins[1]
    # area normalisation: peak height 2 / (upper edge - lower edge)
    expected_peak = 2.0 / (8000.0 - 300.0)
    assert row.max() == pytest.approx(expected_peak, rel=0.05)


def test_config_validation():
    with pytest.raises(ValueError):
        MelConfig(hop=2048)
    with pytest.raises(ValueError):
        MelConfig(fmax=20000.0)
    with pytest.raises(ValueError):
        MelConfig(n_mels=0)


# ---------------------------------------------------------------------------
# framing, STFT and mel spectrogram
# ---------------------------------------------------------------------------

def test_hop_aligned_frame_count():
    for n in (1, 2, 5, 32, 87):
        assert frame_index(256 * n, CFG).shape == (n, 1024)
    assert mel_spectrogram(np.zeros(22050), CFG).frames == 87


def test_stft_frame_matches_direct_dft(rng):
    x = rng.normal(size=2048)
    spec = stft(x, CFG)
    idx = frame_index(2048, CFG)
    ref = dft(x[idx[3]] * hann_window(1024, 1024))[:513]
    np.testing.assert_allclose(spec[:, 3], ref, atol=1e-8)


def test_stft_cosine_peaks_at_its_bin():
    k = 40
    n = np.arange(4096)
    spec = np.abs(stft(np.cos(2 * np.pi * k * n / 1024), CFG))
    assert (spec.argmax(axis=0) == k).all()


def test_stft_of_silence_is_zero():
    assert not np.abs(stft(np.zeros(1024), CFG)).any()


def test_mel_of_silence_is_log_floor():
    m = mel_spectrogram(np.zeros(4096), CFG)
    np.testing.assert_array_equal(m.values, np.log(LOG_FLOOR))


def test_mel_is_deterministic(rng):
    x = rng.normal(size=3000) * 0.1
    a, b = mel_spectrogram(x, CFG), mel_spectrogram(x.copy(), CFG)
    assert a.values.tobytes() == b.values.tobytes()
    assert a.frames == 12 and a.n_mels == 80


def test_log_mel_batch_shapes(rng):
    x = Tensor(rng.normal(size=(3, 1, 1024)))
    assert log_mel(x, CFG).shape == (3, 80, 4)
    assert log_mel(Tensor(rng.normal(size=1024)), CFG).shape == (80, 4)


def test_log_mel_gradient_matches_finite_differences(rng):
    x = rng.normal(size=1024) * 0.3
    gradcheck(lambda a: log_mel(a, CFG.for_loss()), [x], rtol=1e-3)


def test_spectral_magnitude_gradient(rng):
    from hifigan.signal import spectral_magnitude
    gradcheck(spectral_magnitude, [rng.normal(size=(2, 12))])
    gradcheck(spectral_magnitude, [rng.normal(size=(16,))])


# ---------------------------------------------------------------------------
# analysis helpers
# ---------------------------------------------------------------------------

def test_frequency_response_properties(rng):
    r = frequency_response(np.full(64, 0.5))
    assert r[0] == pytest.approx(32.0) and np.abs(r[1:]).max() < 1e-12
    n = np.arange(100)
    assert frequency_response(np.cos(2 * np.pi * 7 * n / 100)).argmax() == 7
    x = rng.normal(size=128)
    full = np.abs(F.fft(x)) ** 2
    assert full.sum() == pytest.approx(128 * (x ** 2).sum())


def test_decimate_examples():
    x = np.arange(1, 7)
    assert decimate(x, 3).tolist() == [1, 4]
    assert decimate(x, 1).tolist() == x.tolist()
    assert decimate(x, 2, 1).tolist() == [2, 4, 6]
    with pytest.raises(ValueError):
        decimate(x, 2, 2)


# ---------------------------------------------------------------------------
# MELS files
# ---------------------------------------------------------------------------

def test_mel_file_round_trip(tmp_path, rng):
    m = mel_spectrogram(rng.normal(size=2560) * 0.1, CFG)
    save_mel(tmp_path / "a.mel", m)
    back = load_mel(tmp_path / "a.mel")
    np.testing.assert_array_equal(back.values, m.values.astype(np.float32))
    assert back.config.hop == 256 and back.config.sample_rate == 22050


def test_mel_file_errors(tmp_path, rng):
    m = MelSpec(rng.normal(size=(80, 3)), CFG)
    path = tmp_path / "a.mel"
    save_mel(path, m)
    raw = path.read_bytes()
    (tmp_path / "short.mel").write_bytes(raw[:-4])
    (tmp_path / "magic.mel").write_bytes(b"XXXX" + raw[4:])
    for name in ("short.mel", "magic.mel"):
        with pytest.raises(ValueError):
            load_mel(tmp_path / name)
    with pytest.raises(ValueError):
        load_mel(path, MelConfig(n_mels=40))


def test_float32_log_mel_dtype(rng):
    with T.default_dtype(np.float32):
        y = log_mel(Tensor(rng.normal(size=(1, 1024))), CFG)
    assert y.dtype == np.float32
