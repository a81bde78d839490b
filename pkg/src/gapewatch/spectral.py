"""Exact-length Fourier transforms, amplitude spectra and band power.

The transform length always equals the signal length: power-of-two lengths
go through an iterative radix-2 decimation-in-time FFT and every other length
through Bluestein's chirp-z reduction onto a power-of-two convolution. No
zero padding reaches the caller, so the bin spacing is exactly ``Fs / N``.

Spectra follow the usual amplitude normalisation::

    P2[k] = |X[k]| / N                   (two-sided)
    P1[k] = 2 * P2[k], 0 < k < N/2       (single-sided; DC and Nyquist not doubled)

and the band statistic is the mean of the single-sided periodogram PSD
``|X[k]|^2 / (Fs * N)`` (interior bins doubled) over an inclusive band.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyBandError, InvalidArgumentError, NyquistError

NAIVE_MAX_N = 8192
# relative slack on band edges so k*Fs/N that should equal an edge still counts
_EDGE_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class ComplexSpectrum:
    """DFT bins ``X[0..n-1]`` of a real signal sampled at ``sample_rate_hz``."""

    bins: np.ndarray
    n: int
    sample_rate_hz: float

    def __post_init__(self):
        bins = np.asarray(self.bins, dtype=np.complex128)
        if bins.shape != (self.n,):
            raise InvalidArgumentError(f"expected {self.n} bins, got shape {bins.shape}")
        if not np.all(np.isfinite(bins)):
            raise InvalidArgumentError("spectrum contains non-finite bins")
        if not self.sample_rate_hz > 0:
            raise InvalidArgumentError("sample_rate_hz must be positive")
        bins.setflags(write=False)
        object.__setattr__(self, "bins", bins)

    @property
    def resolution_hz(self) -> float:
        return self.sample_rate_hz / self.n

    def frequencies(self) -> np.ndarray:
        """Non-negative frequency axis ``k * Fs / N`` for ``k = 0..N//2``."""
        return np.arange(self.n // 2 + 1) * self.sample_rate_hz / self.n


@dataclass(frozen=True, eq=False)
class SingleSidedSpectrum:
    freqs_hz: np.ndarray
    amplitudes: np.ndarray
    n: int
    sample_rate_hz: float

    def __len__(self) -> int:
        return self.freqs_hz.size

    def peak(self) -> tuple[float, float]:
        """(frequency, amplitude) of the largest non-DC bin, or DC if that is all there is."""
        k = 0 if self.amplitudes.size == 1 else 1 + int(np.argmax(self.amplitudes[1:]))
        return float(self.freqs_hz[k]), float(self.amplitudes[k])


@dataclass(frozen=True)
class BandPower:
    f_lo_hz: float
    f_hi_hz: float
    bin_count: int
    mean_power: float


def _as_signal(signal) -> np.ndarray:
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1:
        x = x.reshape(-1)
    if x.size == 0:
        raise InvalidArgumentError("signal must contain at least one sample")
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError("signal contains non-finite samples")
    return x


def _check_rate(sample_rate_hz: float) -> float:
    fs = float(sample_rate_hz)
    if not (fs > 0 and math.isfinite(fs)):
        raise InvalidArgumentError("sample_rate_hz must be positive and finite")
    return fs


def dft_naive(signal, sample_rate_hz: float = 10.0) -> ComplexSpectrum:
    """Direct O(N^2) DFT, kept as an independent reference for :func:`fft`.

    Twiddles are looked up by ``(k * n) mod N`` from one table so large ``k*n``
    products do not lose phase accuracy.
    """
    x = _as_signal(signal)
    fs = _check_rate(sample_rate_hz)
    n = x.size
    if n > NAIVE_MAX_N:
        raise InvalidArgumentError(f"dft_naive is limited to N <= {NAIVE_MAX_N}")
    table = np.exp(-2j * np.pi * np.arange(n) / n)
    idx = np.arange(n, dtype=np.int64)
    out = np.empty(n, dtype=np.complex128)
    rows = max(1, (1 << 21) // n)
    for k0 in range(0, n, rows):
        ks = idx[k0 : k0 + rows, None]
        out[k0 : k0 + rows] = table[(ks * idx[None, :]) % n] @ x
    return ComplexSpectrum(out, n, fs)


def _bit_reverse_permutation(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def _radix2(x: np.ndarray) -> np.ndarray:
    """Iterative radix-2 DIT FFT along the last axis (length must be a power of two)."""
    n = x.shape[-1]
    batch = x.shape[:-1]
    y = x[..., _bit_reverse_permutation(n)]
    m = 1
    while m < n:
        twiddle = np.exp(-1j * np.pi * np.arange(m) / m)
        y = y.reshape(*batch, n // (2 * m), 2, m)
        even = y[..., 0, :]
        odd = y[..., 1, :] * twiddle
        y = np.concatenate((even + odd, even - odd), axis=-1)
        m *= 2
    return y.reshape(*batch, n)


def _bluestein(x: np.ndarray) -> np.ndarray:
    """Chirp-z DFT of arbitrary length along the last axis."""
    n = x.shape[-1]
    m = 1 << (2 * n - 2).bit_length()
    k = np.arange(n, dtype=np.int64)
    # n^2 mod 2N keeps the chirp phase exact for large n
    chirp = np.exp(-1j * np.pi * ((k * k) % (2 * n)) / n)
    a = np.zeros(x.shape[:-1] + (m,), dtype=np.complex128)
    a[..., :n] = x * chirp
    b = np.zeros(m, dtype=np.complex128)
    b[:n] = np.conj(chirp)
    b[m - n + 1 :] = np.conj(chirp[1:])[::-1]
    conv = _ifft_pow2(_radix2(a) * _radix2(b))
    return conv[..., :n] * chirp


def _ifft_pow2(X: np.ndarray) -> np.ndarray:
    return np.conj(_radix2(np.conj(X))) / X.shape[-1]


def fft_array(x) -> np.ndarray:
    """Exact-length DFT of real or complex data along the last axis.

    Accepts batches (any leading shape), which the detector uses to transform
    many windows at once.
    """
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    if n == 0:
        raise InvalidArgumentError("signal must contain at least one sample")
    if n == 1:
        return x.copy()
    if n & (n - 1) == 0:
        return _radix2(x)
    return _bluestein(x)


def fft(signal, sample_rate_hz: float = 10.0) -> ComplexSpectrum:
    """Fast DFT with the same contract as :func:`dft_naive`, for any N >= 1."""
    x = _as_signal(signal)
    fs = _check_rate(sample_rate_hz)
    return ComplexSpectrum(fft_array(x), x.size, fs)


def two_sided_spectrum(spec: ComplexSpectrum) -> np.ndarray:
    return np.abs(spec.bins) / spec.n


def _single_sided_scale(n: int) -> np.ndarray:
    """Per-bin doubling factors for bins 0..n//2."""
    scale = np.full(n // 2 + 1, 2.0)
    scale[0] = 1.0
    if n % 2 == 0:
        scale[-1] = 1.0
    return scale


def single_sided_spectrum(spec: ComplexSpectrum) -> SingleSidedSpectrum:
    p2 = two_sided_spectrum(spec)
    half = spec.n // 2 + 1
    p1 = p2[:half] * _single_sided_scale(spec.n)
    return SingleSidedSpectrum(
        freqs_hz=spec.frequencies(),
        amplitudes=p1,
        n=spec.n,
        sample_rate_hz=spec.sample_rate_hz,
    )


def periodogram(spec: ComplexSpectrum) -> tuple[np.ndarray, np.ndarray]:
    """Single-sided periodogram PSD (units of signal^2 / Hz) and its frequency axis."""
    half = spec.n // 2 + 1
    mag2 = np.abs(spec.bins[:half]) ** 2
    pxx = mag2 * _single_sided_scale(spec.n) / (spec.sample_rate_hz * spec.n)
    return spec.frequencies(), pxx


def band_bins(n: int, sample_rate_hz: float, f_lo_hz: float, f_hi_hz: float) -> np.ndarray:
    """Indices k with ``f_lo <= k*Fs/N <= f_hi`` (both edges inclusive)."""
    if not (0 <= f_lo_hz < f_hi_hz):
        raise InvalidArgumentError(f"need 0 <= f_lo < f_hi, got [{f_lo_hz}, {f_hi_hz}]")
    if f_hi_hz > sample_rate_hz / 2.0:
        raise NyquistError(sample_rate_hz, f_hi_hz)
    df = sample_rate_hz / n
    freqs = np.arange(n // 2 + 1) * sample_rate_hz / n
    tol = _EDGE_RTOL * df
    ks = np.flatnonzero((freqs >= f_lo_hz - tol) & (freqs <= f_hi_hz + tol))
    if ks.size == 0:
        raise EmptyBandError(
            f"no bin of a {n}-point transform at {sample_rate_hz:g} Hz lies in "
            f"[{f_lo_hz:g}, {f_hi_hz:g}] Hz"
        )
    return ks


def band_average_power(spec: ComplexSpectrum, f_lo_hz: float, f_hi_hz: float) -> BandPower:
    """Mean single-sided PSD over the bins inside ``[f_lo_hz, f_hi_hz]``."""
    ks = band_bins(spec.n, spec.sample_rate_hz, f_lo_hz, f_hi_hz)
    _, pxx = periodogram(spec)
    return BandPower(
        f_lo_hz=float(f_lo_hz),
        f_hi_hz=float(f_hi_hz),
        bin_count=int(ks.size),
        mean_power=float(pxx[ks].mean()),
    )


def to_db(power: float) -> float:
    """``10 * log10(power)``; power must be strictly positive."""
    p = float(power)
    if not p > 0 or not math.isfinite(p):
        raise InvalidArgumentError(f"to_db needs a positive finite power, got {power!r}")
    return 10.0 * math.log10(p)
