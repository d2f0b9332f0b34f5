"""Discrete Fourier transforms along the last axis.

Power-of-two lengths use an iterative radix-2 decimation-in-time transform,
vectorised over all leading axes. Other lengths go through Bluestein's chirp-z
identity, which re-expresses the DFT as a power-of-two circular convolution.
"""

from functools import lru_cache

import numpy as np


def _is_pow2(n):
    return n > 0 and n & (n - 1) == 0


@lru_cache(maxsize=32)
def _bit_reverse(n):
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=64)
def _twiddles(m):
    return np.exp(-2j * np.pi * np.arange(m // 2) / m)


def _fft_pow2(x):
    n = x.shape[-1]
    lead = x.shape[:-1]
    y = x[..., _bit_reverse(n)].astype(np.complex128)
    m = 2
    while m <= n:
        half = m // 2
        y = y.reshape(*lead, n // m, m)
        top = y[..., :half]
        bot = y[..., half:] * _twiddles(m)
        y = np.concatenate([top + bot, top - bot], axis=-1)
        m *= 2
    return y.reshape(*lead, n)


@lru_cache(maxsize=16)
def _bluestein_plan(n):
    k = np.arange(n)
    chirp = np.exp(-1j * np.pi * (k * k % (2 * n)) / n)
    size = 1 << (2 * n - 1).bit_length()
    kernel = np.zeros(size, dtype=np.complex128)
    kernel[:n] = np.conj(chirp)
    kernel[size - n + 1:] = np.conj(chirp[1:][::-1])
    return chirp, size, _fft_pow2(kernel)


def _fft_bluestein(x):
    n = x.shape[-1]
    chirp, size, kernel_f = _bluestein_plan(n)
    a = np.zeros(x.shape[:-1] + (size,), dtype=np.complex128)
    a[..., :n] = x * chirp
    conv = ifft(_fft_pow2(a) * kernel_f)
    return conv[..., :n] * chirp


def fft(x):
    """Complex DFT over the last axis: ``X[k] = sum_n x[n] exp(-2 pi i k n / N)``."""
    x = np.asarray(x)
    n = x.shape[-1]
    if n == 0:
        raise ValueError("fft of an empty signal")
    if n == 1:
        return x.astype(np.complex128)
    if _is_pow2(n):
        return _fft_pow2(x)
    return _fft_bluestein(x)


def ifft(x):
    x = np.asarray(x)
    return np.conj(fft(np.conj(x))) / x.shape[-1]


def rfft(x):
    """Non-negative-frequency half of :func:`fft` for real input (``N//2 + 1`` bins)."""
    x = np.asarray(x)
    return fft(x)[..., : x.shape[-1] // 2 + 1]
