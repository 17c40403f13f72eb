"""STFT spectrogram and the A1-P0 nasalization correlate.

A1 is the level of the harmonic closest to F1 and P0 the level of the
strongest low-frequency harmonic (where the nasal pole lives). Oral vowels
have A1 well above P0; nasalization raises P0 and damps A1, so A1-P0 turns
negative.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import fft as sfft
from scipy.signal import get_window

from .signal_io import SampledSignal
from .ztw import Spectrogram, ZtwConfig, anchor_range, rfft_freqs

P0_BAND = (150.0, 450.0)
F1_BAND = (250.0, 1200.0)
FRAME_MS = 20.0
A1P0_DFT_AT_16K = 4096


def stft_spectrogram(
    signal: SampledSignal,
    config: ZtwConfig = ZtwConfig(),
    anchors: np.ndarray | None = None,
    workers: int | None = None,
    dtype=np.float64,
) -> Spectrogram:
    """Hann-windowed magnitude spectrogram on exactly the HNGD axes.

    Window length, DFT size, hop and anchor convention (window starts at the
    anchor) all come from ``config``, so rows line up with
    :func:`~nasalztw.ztw.hngd_spectrogram` for the same configuration.
    """
    fs = signal.sample_rate
    N = config.window_len(fs)
    K = config.dft_len(fs)
    if len(signal) < N:
        raise ValueError(f"signal ({len(signal)} samples) shorter than the analysis window ({N} samples)")
    if anchors is None:
        anchors = anchor_range(len(signal), N, config.hop_samples)
    w = get_window("hann", N)
    frames = np.lib.stride_tricks.sliding_window_view(signal.samples, N)
    rows = []
    for i in range(0, anchors.shape[0], 2048):
        a = anchors[i:i + 2048]
        rows.append(np.abs(sfft.rfft(frames[a] * w, K, axis=-1, workers=workers)).astype(dtype, copy=False))
    mags = np.concatenate(rows, axis=0) if rows else np.zeros((0, K // 2 + 1), dtype)
    return Spectrogram(np.asarray(anchors), rfft_freqs(K, fs), mags, fs, config.hop_samples, N, "stft", config)


@dataclass(frozen=True)
class A1P0Result:
    frame_center_s: float
    a1_db: float
    p0_db: float
    a1_hz: float
    p0_hz: float

    @property
    def a1_minus_p0_db(self) -> float:
        return self.a1_db - self.p0_db


def log_spectrum(frame: np.ndarray, dft_size: int, window: str = "hamming") -> np.ndarray:
    """Peak-normalized log magnitude (dB, maximum 0) of one windowed frame."""
    x = frame * get_window(window, frame.shape[0], fftbins=False)
    mag = np.abs(sfft.rfft(x, dft_size))
    top = mag.max()
    if top == 0.0:
        raise ValueError("silent frame: spectrum is identically zero")
    return 20.0 * np.log10(np.maximum(mag / top, 1e-12))


def _interp_peak(db: np.ndarray, i: int, bin_hz: float) -> tuple[float, float]:
    if i <= 0 or i >= db.shape[0] - 1:
        return i * bin_hz, float(db[i])
    ym, y0, yp = db[i - 1], db[i], db[i + 1]
    den = ym - 2.0 * y0 + yp
    d = 0.5 * (ym - yp) / den if den < 0 else 0.0
    return (i + d) * bin_hz, float(y0 - 0.25 * (ym - yp) * d)


def harmonic_peaks(db: np.ndarray, bin_hz: float, f0_hz: float, fmax_hz: float) -> list[tuple[float, float]]:
    """``(hz, dB)`` of the strongest local maximum within f0/4 of each harmonic."""
    is_max = np.zeros(db.shape[0], bool)
    is_max[1:-1] = (db[1:-1] > db[:-2]) & (db[1:-1] >= db[2:])
    peaks = np.flatnonzero(is_max)
    out = []
    for k in range(1, int(fmax_hz // f0_hz) + 1):
        h = k * f0_hz
        near = peaks[np.abs(peaks * bin_hz - h) <= f0_hz / 4.0]
        if near.size:
            out.append(_interp_peak(db, int(near[np.argmax(db[near])]), bin_hz))
    return out


def _pick_near(db: np.ndarray, bin_hz: float, hz: float, tol: float) -> tuple[float, float]:
    lo = max(1, int(np.floor((hz - tol) / bin_hz)))
    hi = min(db.shape[0] - 2, int(np.ceil((hz + tol) / bin_hz)))
    i = lo + int(np.argmax(db[lo:hi + 1]))
    return _interp_peak(db, i, bin_hz)


def a1_p0(
    signal: SampledSignal,
    frame_center_s: float,
    f0_hz: float,
    f1_est_hz: float,
    frame_ms: float = FRAME_MS,
    p0_band: tuple[float, float] = P0_BAND,
    a1_hz: float | None = None,
    p0_hz: float | None = None,
    window: str = "hamming",
) -> A1P0Result:
    """A1 and P0 (dB of the normalized log spectrum) of one frame.

    Peaks are constrained to the harmonic grid of ``f0_hz``. ``a1_hz`` /
    ``p0_hz`` override the automatic choice: the strongest bin within f0/4
    of the given frequency is used instead.
    """
    if not np.isfinite(f0_hz) or f0_hz <= 0:
        raise ValueError("unvoiced frame: f0 is not available")
    fs = signal.sample_rate
    n = int(round(frame_ms * fs / 1000.0))
    c = int(round(frame_center_s * fs))
    a, b = c - n // 2, c - n // 2 + n
    if a < 0 or b > len(signal):
        raise ValueError(f"{frame_ms} ms frame at {frame_center_s:.4f} s runs outside the signal")
    K = max(A1P0_DFT_AT_16K * fs // 16000, 1 << int(np.ceil(np.log2(4 * n))))
    K = 1 << int(np.ceil(np.log2(K)))
    db = log_spectrum(signal.samples[a:b], K, window)
    bin_hz = fs / K
    tol = f0_hz / 4.0
    peaks = harmonic_peaks(db, bin_hz, f0_hz, min(fs / 2.0, max(F1_BAND[1], f1_est_hz) + f0_hz))
    if a1_hz is not None:
        a1 = _pick_near(db, bin_hz, a1_hz, tol)
    else:
        cand = [p for p in peaks if F1_BAND[0] <= p[0] <= F1_BAND[1]]
        if not cand:
            raise ValueError("no harmonic peak resolvable near F1")
        a1 = min(cand, key=lambda p: abs(p[0] - f1_est_hz))
    if p0_hz is not None:
        p0 = _pick_near(db, bin_hz, p0_hz, tol)
    else:
        cand = [p for p in peaks if p0_band[0] <= p[0] <= p0_band[1]]
        if not cand:
            raise ValueError(f"no harmonic peak resolvable in {p0_band[0]:.0f}-{p0_band[1]:.0f} Hz")
        p0 = max(cand, key=lambda p: p[1])
    return A1P0Result(frame_center_s, a1[1], p0[1], a1[0], p0[0])


@dataclass(frozen=True)
class ScatterRecord:
    a1_minus_p0_db: float
    sigma_d_hz: float
    label: str
    source: str = ""


@dataclass(frozen=True)
class ScatterDataset:
    """Paired (A1-P0, sigma_D) records with oriented cluster gaps.

    ``gap_a1p0_db`` = min over oral minus max over nasalized; ``gap_sigma_hz`` =
    min over nasalized minus max over oral. Positive gaps mean the clusters
    separate along that axis in the expected direction. Gaps are None when
    either class has fewer than two records.
    """

    records: tuple[ScatterRecord, ...]
    gap_a1p0_db: float | None
    gap_sigma_hz: float | None

    @property
    def separated(self) -> bool | None:
        """Clusters do not overlap in the plane (separated along at least one axis)."""
        if self.gap_a1p0_db is None:
            return None
        return self.gap_a1p0_db > 0 or self.gap_sigma_hz > 0


def correlate_sigma(
    records: Iterable[ScatterRecord], oral: str = "OV", nasalized: str = "NV"
) -> ScatterDataset:
    recs = tuple(records)
    ov = [r for r in recs if r.label == oral]
    nv = [r for r in recs if r.label == nasalized]
    if len(ov) < 2 or len(nv) < 2:
        return ScatterDataset(recs, None, None)
    gap_a = min(r.a1_minus_p0_db for r in ov) - max(r.a1_minus_p0_db for r in nv)
    gap_s = min(r.sigma_d_hz for r in nv) - max(r.sigma_d_hz for r in ov)
    return ScatterDataset(recs, float(gap_a), float(gap_s))


def scatter_records(pairs: Sequence[tuple[A1P0Result, float, str]], source: str = "") -> list[ScatterRecord]:
    return [ScatterRecord(r.a1_minus_p0_db, float(s), lab, source) for r, s, lab in pairs]
