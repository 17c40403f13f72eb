"""Zero-time windowing and the HNGD spectrum.

Each analysis instant (the *anchor*) starts a short segment that is weighted by
a heavily decaying window ``w1**2 * w2``. The numerator of the group delay
(NGD) of that segment is differenced twice along frequency, and the Hilbert
envelope of the result (HNGD) gives an instantaneous spectrum with sharp
resonance peaks.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Iterator

import numpy as np
from scipy import fft as sfft

from .signal_io import SampledSignal

REFERENCE_DFT = 1024  # at 16 kHz
DEFAULT_BLOCK = 2048


@dataclass(frozen=True)
class ZtwConfig:
    """Zero-time windowing parameters.

    ``dft_size=None`` derives the size from the sample rate (1024 at 16 kHz).
    ``epsilon`` only guards log displays; the window itself needs no guard.
    ``diff_passes`` is the number of second-order frequency differences
    applied to the NGD (1 = the twice-differenced NGD).
    """

    window_len_ms: float = 4.0
    dft_size: int | None = None
    hop_samples: int = 1
    epsilon: float = 1e-10
    diff_passes: int = 1

    def __post_init__(self):
        if not 1.0 <= self.window_len_ms <= 20.0:
            raise ValueError(f"window_len_ms must be in [1, 20], got {self.window_len_ms}")
        if self.hop_samples < 1:
            raise ValueError("hop_samples must be >= 1")
        if self.dft_size is not None and (self.dft_size < 2 or self.dft_size & (self.dft_size - 1)):
            raise ValueError(f"dft_size must be a power of two, got {self.dft_size}")
        if self.diff_passes < 1:
            raise ValueError("diff_passes must be >= 1")

    def window_len(self, sample_rate: int) -> int:
        return max(2, int(round(self.window_len_ms * sample_rate / 1000.0)))

    def dft_len(self, sample_rate: int) -> int:
        n = self.window_len(sample_rate)
        if self.dft_size is not None:
            if self.dft_size < 2 * n:
                raise ValueError(
                    f"dft_size {self.dft_size} is smaller than twice the window ({n} samples)"
                )
            return self.dft_size
        k = REFERENCE_DFT * sample_rate / 16000.0
        k = 1 << int(np.ceil(np.log2(max(k, 2 * n))))
        return k

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class HngdSlice:
    anchor_sample: int
    freqs: np.ndarray
    mags: np.ndarray

    def peak_bin(self, lo_hz: float = 0.0, hi_hz: float | None = None) -> int:
        hi_hz = self.freqs[-1] if hi_hz is None else hi_hz
        band = np.flatnonzero((self.freqs >= lo_hz) & (self.freqs <= hi_hz))
        return int(band[np.argmax(self.mags[band])])


@dataclass(eq=False)
class Spectrogram:
    """Time-ordered spectral slices on a shared frequency axis.

    ``mags`` has one row per anchor. ``kind`` is ``"hngd"`` or ``"stft"``.
    """

    anchors: np.ndarray
    freqs: np.ndarray
    mags: np.ndarray
    sample_rate: int
    hop_samples: int
    window_len: int
    kind: str = "hngd"
    config: ZtwConfig | None = None

    def __len__(self) -> int:
        return self.anchors.shape[0]

    def __getitem__(self, i: int) -> HngdSlice:
        return HngdSlice(int(self.anchors[i]), self.freqs, self.mags[i])

    def __iter__(self) -> Iterator[HngdSlice]:
        for i in range(len(self)):
            yield self[i]

    @property
    def slices(self) -> list[HngdSlice]:
        return list(self)

    @property
    def times_s(self) -> np.ndarray:
        return self.anchors / self.sample_rate

    def axis_metadata(self) -> dict:
        meta = {
            "kind": self.kind,
            "sample_rate": self.sample_rate,
            "first_anchor": int(self.anchors[0]) if len(self) else 0,
            "hop_samples": self.hop_samples,
            "n_slices": len(self),
            "window_len_samples": self.window_len,
            "n_bins": int(self.freqs.shape[0]),
            "bin_hz": float(self.freqs[1] - self.freqs[0]) if self.freqs.shape[0] > 1 else 0.0,
            "anchor_convention": "anchor is the first sample of the analysis window (zero time)",
        }
        if self.config is not None:
            meta["config"] = self.config.to_dict()
        return meta


def make_w1(N: int) -> np.ndarray:
    """Heavily decaying window: 0 at n=0, then 1 / (4 sin^2(pi n / 2N))."""
    if N < 2:
        raise ValueError("window length N must be >= 2")
    n = np.arange(1, N)
    w1 = np.zeros(N)
    w1[1:] = 1.0 / (4.0 * np.sin(np.pi * n / (2.0 * N)) ** 2)
    return w1


def make_w2(N: int) -> np.ndarray:
    """Truncation taper 4 cos^2(pi n / 2N)."""
    if N < 2:
        raise ValueError("window length N must be >= 2")
    n = np.arange(N)
    return 4.0 * np.cos(np.pi * n / (2.0 * N)) ** 2


@lru_cache(maxsize=32)
def _ztw_window(N: int) -> np.ndarray:
    w = make_w1(N) ** 2 * make_w2(N)
    w.setflags(write=False)
    return w


def ztw_window(N: int) -> np.ndarray:
    """The composite window ``w1**2 * w2`` (read-only, cached)."""
    return _ztw_window(int(N))


def window_segment(signal: SampledSignal, anchor: int, config: ZtwConfig) -> np.ndarray:
    N = config.window_len(signal.sample_rate)
    if anchor < 0 or anchor + N > len(signal):
        raise IndexError(f"anchor {anchor} out of range for window {N} and signal length {len(signal)}")
    return signal.samples[anchor:anchor + N] * ztw_window(N)


def ngd(x: np.ndarray, dft_size: int, workers: int | None = None) -> np.ndarray:
    """Numerator of the group delay, ``Re(X) Re(Y) + Im(X) Im(Y)`` on bins 0..K/2.

    ``x`` may be 2-D (one segment per row). ``Y`` is the transform of ``n x[n]``.
    """
    x = np.asarray(x, dtype=np.float64)
    N = x.shape[-1]
    if N > dft_size:
        raise ValueError(f"segment length {N} exceeds dft_size {dft_size}")
    X = sfft.rfft(x, dft_size, axis=-1, workers=workers)
    Y = sfft.rfft(x * np.arange(N), dft_size, axis=-1, workers=workers)
    return X.real * Y.real + X.imag * Y.imag


def _full_circle(half: np.ndarray, dft_size: int) -> np.ndarray:
    # even extension of bins 0..K/2 onto the full DFT circle
    return np.concatenate([half, half[..., dft_size // 2 - 1:0:-1]], axis=-1)


def second_difference(tau: np.ndarray, dft_size: int) -> np.ndarray:
    """Negated centred second difference along frequency, with mirrored edges."""
    full = _full_circle(tau, dft_size)
    d = -(np.roll(full, -1, axis=-1) - 2.0 * full + np.roll(full, 1, axis=-1))
    return d[..., : dft_size // 2 + 1]


def hilbert_envelope(seq_half: np.ndarray, dft_size: int, workers: int | None = None) -> np.ndarray:
    """Hilbert envelope of an even bin sequence, computed on the full circle."""
    full = _full_circle(seq_half, dft_size)
    K = dft_size
    h = np.zeros(K)
    h[0] = 1.0
    h[1:K // 2] = 2.0
    h[K // 2] = 1.0
    analytic = sfft.ifft(sfft.fft(full, axis=-1, workers=workers) * h, axis=-1, workers=workers)
    return np.abs(analytic[..., : K // 2 + 1])


def even_lag_ngd(segments: np.ndarray) -> np.ndarray:
    """Even part of the lag sequence whose DFT is the NGD, for lags 0..N-1.

    ``e[m] = 1/2 sum_i (2i + m) x[i] x[i+m]``. Its DFT equals :func:`ngd` on
    every bin once the DFT holds both lag signs.
    """
    x = np.atleast_2d(np.asarray(segments, dtype=np.float64))
    N = x.shape[-1]
    i2 = 2.0 * np.arange(N)
    e = np.empty(x.shape[:-1] + (N,))
    for m in range(N):
        e[..., m] = 0.5 * np.einsum("...i,...i,i->...", x[..., : N - m], x[..., m:], i2[: N - m] + m)
    return e


def hngd_from_segments(
    segments: np.ndarray, dft_size: int, diff_passes: int = 1, workers: int | None = None
) -> np.ndarray:
    """HNGD of each row of ``segments`` (already windowed).

    Evaluated in the lag domain: differencing twice along frequency multiplies
    lag m by ``4 sin^2(pi m / K)``, and the Hilbert envelope of the even
    sequence is the magnitude of the one-sided lag sequence's DFT. This equals
    ``hilbert_envelope(second_difference(ngd(x)))`` but avoids the cancellation
    of differencing a smooth spectrum, so results stay accurate to ~1e-14.
    """
    N = segments.shape[-1]
    if 2 * N > dft_size:
        raise ValueError(f"dft_size {dft_size} must be at least twice the segment length {N}")
    m = np.arange(N)
    w = (4.0 * np.sin(np.pi * m / dft_size) ** 2) ** diff_passes
    w[1:] *= 2.0  # one-sided analytic weighting; N <= K/2 so lag K/2 never occurs
    return np.abs(sfft.rfft(even_lag_ngd(segments) * w, dft_size, axis=-1, workers=workers))


def rfft_freqs(dft_size: int, sample_rate: int) -> np.ndarray:
    return np.arange(dft_size // 2 + 1) * (sample_rate / dft_size)


def hngd_slice(signal: SampledSignal, anchor: int, config: ZtwConfig = ZtwConfig()) -> HngdSlice:
    x = window_segment(signal, anchor, config)
    K = config.dft_len(signal.sample_rate)
    mags = hngd_from_segments(x[None, :], K, config.diff_passes)[0]
    return HngdSlice(int(anchor), rfft_freqs(K, signal.sample_rate), mags)


def anchor_range(n_samples: int, N: int, hop: int, start: int = 0, stop: int | None = None) -> np.ndarray:
    last = n_samples - N
    stop = last + 1 if stop is None else min(stop, last + 1)
    return np.arange(max(0, start), stop, hop)


def iter_hngd_blocks(
    signal: SampledSignal,
    config: ZtwConfig = ZtwConfig(),
    anchors: np.ndarray | None = None,
    block: int = DEFAULT_BLOCK,
    workers: int | None = None,
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield ``(anchors, mags)`` blocks in anchor order.

    Blocks are independent, so ``workers`` threads inside the FFTs never change
    the assembled result.
    """
    fs = signal.sample_rate
    N = config.window_len(fs)
    K = config.dft_len(fs)
    if len(signal) < N:
        raise ValueError(
            f"signal ({len(signal)} samples) shorter than the analysis window ({N} samples)"
        )
    if anchors is None:
        anchors = anchor_range(len(signal), N, config.hop_samples)
    frames = np.lib.stride_tricks.sliding_window_view(signal.samples, N)
    w = ztw_window(N)
    for i in range(0, anchors.shape[0], block):
        a = anchors[i:i + block]
        yield a, hngd_from_segments(frames[a] * w, K, config.diff_passes, workers)


def hngd_spectrogram(
    signal: SampledSignal,
    config: ZtwConfig = ZtwConfig(),
    workers: int | None = None,
    dtype=np.float64,
    anchors: np.ndarray | None = None,
) -> Spectrogram:
    """HNGD slice at every ``hop_samples`` anchor covering ``[0, len - N]``, or at ``anchors``."""
    fs = signal.sample_rate
    N = config.window_len(fs)
    K = config.dft_len(fs)
    parts, rows = [np.zeros(0, np.int64)], [np.zeros((0, K // 2 + 1), dtype)]
    for a, m in iter_hngd_blocks(signal, config, anchors=anchors, workers=workers):
        parts.append(a)
        rows.append(m.astype(dtype, copy=False))
    return Spectrogram(
        anchors=np.concatenate(parts),
        freqs=rfft_freqs(K, fs),
        mags=np.concatenate(rows, axis=0),
        sample_rate=fs,
        hop_samples=config.hop_samples,
        window_len=N,
        kind="hngd",
        config=config,
    )
