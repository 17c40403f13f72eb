"""Audio ingestion, normalization and phone annotations.

Everything downstream consumes a :class:`SampledSignal`. Window lengths and
DFT sizes are always derived from ``sample_rate`` rather than fixed sample
counts, so the reference rate of 16 kHz is only a default for resampling.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

REFERENCE_RATE = 16000
PEAK_LEVEL = 0.95
# below this every analysis band (up to ~850 Hz plus margin) aliases
MIN_ANALYSIS_RATE = 2000


class AudioError(ValueError):
    """Raised for unreadable, unsupported or empty audio input."""


@dataclass(frozen=True, eq=False)
class SampledSignal:
    """Mono audio samples with their sample rate.

    Args:
        samples: 1-D array of real amplitudes.
        sample_rate: sampling rate in Hz.
        source_id: optional provenance string (file name, fixture name).
    """

    samples: np.ndarray
    sample_rate: int
    source_id: str | None = None

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim != 1:
            raise ValueError(f"mono samples required, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("samples contain NaN or inf")
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be a positive integer, got {self.sample_rate}")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate

    def peak(self) -> float:
        return float(np.max(np.abs(self.samples))) if len(self) else 0.0

    def with_samples(self, samples: np.ndarray) -> "SampledSignal":
        return SampledSignal(samples, self.sample_rate, self.source_id)

    def scaled(self, c: float) -> "SampledSignal":
        return self.with_samples(self.samples * c)

    def shifted(self, k: int) -> "SampledSignal":
        """Delay by ``k`` samples (zeros prepended, length grows by ``k``)."""
        if k < 0:
            raise ValueError("shift must be non-negative")
        return self.with_samples(np.concatenate([np.zeros(k), self.samples]))

    def segment(self, start_s: float, end_s: float) -> "SampledSignal":
        a = max(0, int(round(start_s * self.sample_rate)))
        b = min(len(self), int(round(end_s * self.sample_rate)))
        return self.with_samples(self.samples[a:b])


def normalize_peak(signal: SampledSignal, level: float = PEAK_LEVEL) -> SampledSignal:
    """Scale so the absolute peak equals ``level``; all-zero input is returned as is."""
    peak = signal.peak()
    if peak == 0.0:
        return signal
    return signal.with_samples(signal.samples * (level / peak))


def _pcm_to_float(data: np.ndarray) -> np.ndarray:
    if data.dtype == np.uint8:
        return (data.astype(np.float64) - 128.0) / 128.0
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0
    if data.dtype == np.int32:
        # 24-bit PCM arrives left-justified in int32
        return data.astype(np.float64) / 2147483648.0
    if data.dtype in (np.float32, np.float64):
        return data.astype(np.float64)
    raise AudioError(f"unsupported sample encoding {data.dtype}")


def load_wav(path: str | Path, normalize: bool = True) -> SampledSignal:
    """Read a RIFF WAV file into a mono, peak-normalized signal.

    Multichannel files keep channel 0 and emit a ``UserWarning``.
    """
    path = Path(path)
    if not path.is_file():
        raise AudioError(f"{path}: no such file")
    try:
        with warnings.catch_warnings():
            # scipy complains about unknown chunks (LIST, bext ...); harmless
            warnings.simplefilter("ignore", wavfile.WavFileWarning)
            rate, data = wavfile.read(path)
    except (ValueError, OSError, EOFError) as exc:
        raise AudioError(f"{path}: cannot read WAV ({exc})") from exc
    if data.ndim == 2:
        if data.shape[1] > 1:
            warnings.warn(
                f"{path.name}: {data.shape[1]} channels, analysing channel 0 only",
                UserWarning,
                stacklevel=2,
            )
        data = data[:, 0]
    if data.shape[0] == 0:
        raise AudioError(f"{path}: zero-length audio")
    sig = SampledSignal(_pcm_to_float(data), int(rate), source_id=path.name)
    return normalize_peak(sig) if normalize else sig


def write_wav(path: str | Path, signal: SampledSignal, subtype: str = "PCM_16") -> None:
    """Write ``signal`` as 16-bit PCM (default) or 32-bit float WAV."""
    x = np.clip(signal.samples, -1.0, 1.0)
    if subtype == "PCM_16":
        data = np.round(x * 32767.0).astype("<i2")
    elif subtype == "FLOAT":
        data = x.astype("<f4")
    else:
        raise ValueError(f"unknown subtype {subtype!r}")
    wavfile.write(Path(path), signal.sample_rate, data)


def resample(signal: SampledSignal, target_rate: int) -> SampledSignal:
    """Band-limited rational-factor resampling (polyphase, Kaiser window)."""
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    if target_rate < MIN_ANALYSIS_RATE:
        raise ValueError(
            f"target_rate {target_rate} Hz would alias every analysis band; "
            f"use at least {MIN_ANALYSIS_RATE} Hz"
        )
    if target_rate == signal.sample_rate:
        return signal
    ratio = Fraction(int(target_rate), signal.sample_rate)
    y = resample_poly(signal.samples, ratio.numerator, ratio.denominator)
    return SampledSignal(y, int(target_rate), signal.source_id)


@dataclass(frozen=True)
class PhoneAnnotation:
    label: str
    start_s: float
    end_s: float

    def __post_init__(self):
        if not (0.0 <= self.start_s < self.end_s):
            raise ValueError(f"bad annotation interval [{self.start_s}, {self.end_s}) for {self.label!r}")

    def contains(self, t: float) -> bool:
        return self.start_s <= t < self.end_s


@dataclass
class AnnotationTrack:
    """Time-ordered, non-overlapping phone annotations."""

    phones: list[PhoneAnnotation] = field(default_factory=list)

    def __post_init__(self):
        for a, b in zip(self.phones, self.phones[1:]):
            if b.start_s < a.end_s - 1e-9:
                raise ValueError(f"annotations overlap or are unordered: {a} / {b}")

    def __iter__(self):
        return iter(self.phones)

    def __len__(self) -> int:
        return len(self.phones)

    def __getitem__(self, i):
        return self.phones[i]

    def at(self, t: float) -> PhoneAnnotation | None:
        for p in self.phones:
            if p.contains(t):
                return p
        return None

    def check_duration(self, duration_s: float, tol: float = 1e-6) -> None:
        if self.phones and self.phones[-1].end_s > duration_s + tol:
            raise ValueError(
                f"annotation ends at {self.phones[-1].end_s:.4f} s, beyond signal duration {duration_s:.4f} s"
            )


def parse_annotations(lines: Iterable[str], source: str = "<annotations>") -> AnnotationTrack:
    """Parse ``start_s<TAB>end_s<TAB>label`` records; blank lines and ``#`` comments skipped."""
    phones = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"{source}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
        try:
            start, end = float(parts[0]), float(parts[1])
        except ValueError as exc:
            raise ValueError(f"{source}:{lineno}: {exc}") from exc
        phones.append(PhoneAnnotation(parts[2].strip(), start, end))
    return AnnotationTrack(phones)


def load_annotations(path: str | Path) -> AnnotationTrack:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        return parse_annotations(fh, source=str(path))


def save_annotations(path: str | Path, track: Iterable[PhoneAnnotation]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for p in track:
            fh.write(f"{p.start_s:.6f}\t{p.end_s:.6f}\t{p.label}\n")


def from_timit_phn(lines: Sequence[str], sample_rate: int = REFERENCE_RATE) -> AnnotationTrack:
    """Convert TIMIT ``.phn`` records (``start end label`` in samples)."""
    phones = []
    for raw in lines:
        parts = raw.split()
        if len(parts) != 3:
            continue
        a, b, lab = int(parts[0]), int(parts[1]), parts[2]
        if b > a:
            phones.append(PhoneAnnotation(lab, a / sample_rate, b / sample_rate))
    return AnnotationTrack(phones)
