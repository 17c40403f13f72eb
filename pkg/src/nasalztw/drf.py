"""Dominant resonance frequency (DRF) contours and per-cycle statistics.

DRF is the strongest spectral peak of each HNGD slice inside a low-frequency
search band; DRF2 is the strongest remaining peak at least
``min_separation_hz`` away. Peak positions and amplitudes are refined by
parabolic interpolation on log magnitude.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .signal_io import SampledSignal
from .ztw import Spectrogram, ZtwConfig, iter_hngd_blocks, rfft_freqs
from .zff import EpochTrack

SEARCH_BAND = (150.0, 1500.0)
MIN_SEPARATION_HZ = 100.0
MIN_CYCLE_POINTS = 4
_TINY = 1e-300


@dataclass(frozen=True)
class DrfPoint:
    anchor_sample: int
    drf_hz: float
    drf_amp: float
    drf2_hz: float | None = None
    drf2_amp: float | None = None

    @property
    def alpha(self) -> float | None:
        if self.drf2_amp is None:
            return None
        return alpha(self.drf_amp, self.drf2_amp)


def alpha(a1: float, a2: float) -> float:
    """Relative strength of the secondary resonance, ``|1 - a2/a1|``."""
    if not a1 > 0:
        raise ValueError(f"a1 must be positive, got {a1}")
    return abs(1.0 - a2 / a1)


def _band_bins(freqs: np.ndarray, band: tuple[float, float]) -> tuple[int, int]:
    lo = int(np.searchsorted(freqs, band[0], side="left"))
    hi = int(np.searchsorted(freqs, band[1], side="right")) - 1
    # candidates need both neighbours
    return max(lo, 1), min(hi, freqs.shape[0] - 2)


def peak_candidates(mags: np.ndarray, freqs: np.ndarray, band: tuple[float, float] = SEARCH_BAND):
    """Interpolated local maxima of each row inside ``band``.

    Returns ``(hz, amp)`` arrays of shape ``(rows, bins_in_band)``; entries that
    are not local maxima hold NaN frequency and ``-inf`` amplitude.
    """
    m = np.atleast_2d(np.asarray(mags, dtype=np.float64))
    lo, hi = _band_bins(freqs, band)
    rows = m.shape[0]
    if hi < lo:
        return np.full((rows, 0), np.nan), np.full((rows, 0), -np.inf)
    c = m[:, lo:hi + 1]
    left = m[:, lo - 1:hi]
    right = m[:, lo + 1:hi + 2]
    is_max = (c > left) & (c >= right) & (c > 0)
    y0 = np.log(np.maximum(c, _TINY))
    ym = np.log(np.maximum(left, _TINY))
    yp = np.log(np.maximum(right, _TINY))
    den = ym - 2.0 * y0 + yp
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = np.where(den < 0, 0.5 * (ym - yp) / den, 0.0)
    delta = np.clip(delta, -0.5, 0.5)
    amp = np.exp(y0 - 0.25 * (ym - yp) * delta)
    step = freqs[1] - freqs[0]
    hz = (np.arange(lo, hi + 1) + delta) * step
    hz = np.where(is_max, hz, np.nan)
    amp = np.where(is_max, amp, -np.inf)
    return hz, amp


def extract_block(
    mags: np.ndarray,
    freqs: np.ndarray,
    band: tuple[float, float] = SEARCH_BAND,
    min_separation_hz: float = MIN_SEPARATION_HZ,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """DRF and DRF2 (``hz1, amp1, hz2, amp2``) for every row; absent values are NaN."""
    hz, amp = peak_candidates(mags, freqs, band)
    rows = hz.shape[0]
    nan = np.full(rows, np.nan)
    if hz.shape[1] == 0:
        return nan, nan.copy(), nan.copy(), nan.copy()
    r = np.arange(rows)
    i1 = np.argmax(amp, axis=1)
    a1 = amp[r, i1]
    ok1 = np.isfinite(a1)
    h1 = np.where(ok1, hz[r, i1], np.nan)
    a1 = np.where(ok1, a1, np.nan)
    far = np.abs(hz - h1[:, None]) >= min_separation_hz
    amp2 = np.where(far, amp, -np.inf)
    i2 = np.argmax(amp2, axis=1)
    a2 = amp2[r, i2]
    ok2 = ok1 & np.isfinite(a2)
    h2 = np.where(ok2, hz[r, i2], np.nan)
    a2 = np.where(ok2, a2, np.nan)
    return h1, a1, h2, a2


HALF_POWER = 2.0 ** -0.5


def peak_width_hz(mags: np.ndarray, freqs: np.ndarray, peak_hz: float, level: float = HALF_POWER) -> float:
    """Width of the peak nearest ``peak_hz`` where magnitude drops to ``level`` times its top.

    The default level is the -3 dB (half-power) point of a magnitude spectrum.
    Crossings are linearly interpolated between bins.
    """
    m = np.asarray(mags, dtype=np.float64)
    step = freqs[1] - freqs[0]
    i = int(np.clip(round(peak_hz / step), 1, m.shape[0] - 2))
    # climb to the local maximum
    while 0 < i < m.shape[0] - 1 and not (m[i] >= m[i - 1] and m[i] >= m[i + 1]):
        i += 1 if m[i + 1] > m[i] else -1
    lev = m[i] * level
    lft = i
    while lft > 0 and m[lft] > lev:
        lft -= 1
    rgt = i
    while rgt < m.shape[0] - 1 and m[rgt] > lev:
        rgt += 1
    fl = freqs[lft] + (lev - m[lft]) / (m[lft + 1] - m[lft]) * step if m[lft] <= lev else freqs[lft]
    fr = freqs[rgt - 1] + (m[rgt - 1] - lev) / (m[rgt - 1] - m[rgt]) * step if m[rgt] <= lev else freqs[rgt]
    return float(fr - fl)


def extract_drf(slice_, band: tuple[float, float] = SEARCH_BAND) -> tuple[float, float] | None:
    """``(drf_hz, drf_amp)`` of one slice, or None when the band holds no peak."""
    h1, a1, _, _ = extract_block(slice_.mags[None, :], slice_.freqs, band)
    if np.isnan(h1[0]):
        return None
    return float(h1[0]), float(a1[0])


def extract_drf2(
    slice_,
    drf_hz: float,
    band: tuple[float, float] = SEARCH_BAND,
    min_separation_hz: float = MIN_SEPARATION_HZ,
) -> tuple[float, float] | None:
    """Strongest peak at least ``min_separation_hz`` from ``drf_hz``, or None."""
    hz, amp = peak_candidates(slice_.mags[None, :], slice_.freqs, band)
    amp = np.where(np.abs(hz - drf_hz) >= min_separation_hz, amp, -np.inf)[0]
    if amp.size == 0 or not np.isfinite(amp.max()):
        return None
    i = int(np.argmax(amp))
    return float(hz[0, i]), float(amp[i])


@dataclass(eq=False)
class DrfTrack:
    """DRF/DRF2 contour, one entry per analysis anchor (NaN = absent)."""

    anchors: np.ndarray
    drf_hz: np.ndarray
    drf_amp: np.ndarray
    drf2_hz: np.ndarray
    drf2_amp: np.ndarray
    sample_rate: int

    def __len__(self) -> int:
        return self.anchors.shape[0]

    @property
    def alpha(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            a = np.abs(1.0 - self.drf2_amp / self.drf_amp)
        return np.where(np.isfinite(self.drf2_amp) & (self.drf_amp > 0), a, np.nan)

    @property
    def times_s(self) -> np.ndarray:
        return self.anchors / self.sample_rate

    def between(self, start: int, end: int) -> np.ndarray:
        """Index range (as a slice-able array) of anchors in ``[start, end)``."""
        a = np.searchsorted(self.anchors, start, side="left")
        b = np.searchsorted(self.anchors, end, side="left")
        return np.arange(a, b)

    def point(self, i: int) -> DrfPoint:
        def opt(v):
            return None if np.isnan(v) else float(v)

        return DrfPoint(int(self.anchors[i]), float(self.drf_hz[i]), float(self.drf_amp[i]),
                        opt(self.drf2_hz[i]), opt(self.drf2_amp[i]))

    def points(self) -> Iterator[DrfPoint]:
        """Present points only (anchors with a DRF)."""
        for i in np.flatnonzero(np.isfinite(self.drf_hz)):
            yield self.point(int(i))

    @classmethod
    def concat(cls, parts: Sequence["DrfTrack"]) -> "DrfTrack":
        return cls(*(np.concatenate([getattr(p, k) for p in parts]) for k in
                     ("anchors", "drf_hz", "drf_amp", "drf2_hz", "drf2_amp")), parts[0].sample_rate)


def track_drf(
    spec: Spectrogram,
    band: tuple[float, float] = SEARCH_BAND,
    min_separation_hz: float = MIN_SEPARATION_HZ,
) -> DrfTrack:
    h1, a1, h2, a2 = extract_block(spec.mags, spec.freqs, band, min_separation_hz)
    return DrfTrack(spec.anchors.copy(), h1, a1, h2, a2, spec.sample_rate)


def track_signal(
    signal: SampledSignal,
    config: ZtwConfig = ZtwConfig(),
    band: tuple[float, float] = SEARCH_BAND,
    min_separation_hz: float = MIN_SEPARATION_HZ,
    anchors: np.ndarray | None = None,
    workers: int | None = None,
) -> DrfTrack:
    """DRF contour computed block by block, without keeping the spectrogram."""
    freqs = rfft_freqs(config.dft_len(signal.sample_rate), signal.sample_rate)
    parts = []
    for a, m in iter_hngd_blocks(signal, config, anchors=anchors, workers=workers):
        h1, a1, h2, a2 = extract_block(m, freqs, band, min_separation_hz)
        parts.append(DrfTrack(a, h1, a1, h2, a2, signal.sample_rate))
    if not parts:
        e = np.zeros(0)
        return DrfTrack(np.zeros(0, np.int64), e, e, e, e, signal.sample_rate)
    return DrfTrack.concat(parts)


# ---------------------------------------------------------------- cycles


@dataclass(frozen=True)
class CycleStats:
    cycle_start: int
    cycle_end: int
    mu_d: float
    sigma_d: float
    n_points: int
    sample_rate: int
    mean_alpha: float = float("nan")

    @property
    def start_s(self) -> float:
        return self.cycle_start / self.sample_rate

    @property
    def end_s(self) -> float:
        return self.cycle_end / self.sample_rate

    @property
    def mid_s(self) -> float:
        return 0.5 * (self.start_s + self.end_s)


def cycle_points(track: DrfTrack, start: int, end: int) -> np.ndarray:
    """Indices of present DRF points with ``start <= anchor < end``."""
    idx = track.between(start, end)
    return idx[np.isfinite(track.drf_hz[idx])]


def cycle_stats(
    track: DrfTrack, epochs: EpochTrack | Iterable[tuple[int, int]], min_points: int = MIN_CYCLE_POINTS
) -> list[CycleStats]:
    """Mean and population standard deviation of DRF over every glottal cycle.

    Cycles with fewer than ``min_points`` DRF points are dropped.
    """
    cycles = epochs.cycles() if isinstance(epochs, EpochTrack) else list(epochs)
    al = track.alpha
    out = []
    for a, b in cycles:
        idx = cycle_points(track, a, b)
        if idx.size < min_points:
            continue
        d = track.drf_hz[idx]
        aa = al[idx]
        aa = aa[np.isfinite(aa)]
        out.append(
            CycleStats(int(a), int(b), float(d.mean()), float(d.std()), int(idx.size), track.sample_rate,
                       float(aa.mean()) if aa.size else float("nan"))
        )
    return out


def boundary_average(
    stats: Sequence[CycleStats], boundary_s: float, n_cycles: int = 5, vowel_side: str = "before"
) -> tuple[float, float]:
    """Mean of mu_D and sigma_D over the ``n_cycles`` vowel-side cycles nearest a boundary.

    ``vowel_side`` is ``"before"`` for a vowel-consonant transition and
    ``"after"`` for consonant-vowel. A cycle belongs to a side by its midpoint.
    """
    if vowel_side == "before":
        side = [s for s in stats if s.mid_s < boundary_s][-n_cycles:]
    elif vowel_side == "after":
        side = [s for s in stats if s.mid_s >= boundary_s][:n_cycles]
    else:
        raise ValueError(f"vowel_side must be 'before' or 'after', got {vowel_side!r}")
    if len(side) < n_cycles:
        raise ValueError(
            f"need {n_cycles} valid cycles {vowel_side} the boundary at {boundary_s:.4f} s, found {len(side)}"
        )
    return float(np.mean([s.mu_d for s in side])), float(np.mean([s.sigma_d for s in side]))
