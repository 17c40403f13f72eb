"""End-to-end analysis: ZFF epochs, HNGD DRF track, cycle statistics, labels.

Also the boundary measurements used for corpus work: averages of the cycles
next to a vowel/consonant boundary and the A1-P0 value of the frame there.
"""
from __future__ import annotations

import fnmatch
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .baseline import A1P0Result, a1_p0
from .classify import (
    BandConfig,
    Label,
    SegmentLabel,
    SegmentRun,
    is_vowel,
    label_track,
    segment_runs,
)
from .drf import MIN_SEPARATION_HZ, SEARCH_BAND, CycleStats, DrfTrack, boundary_average, cycle_stats, track_signal
from .signal_io import AnnotationTrack, SampledSignal, from_timit_phn, load_annotations, load_wav, resample
from .zff import EpochTrack, check_window, epochs
from .ztw import ZtwConfig

log = logging.getLogger(__name__)

BOUNDARY_CYCLES = 5


@dataclass(eq=False)
class AnalysisResult:
    signal: SampledSignal
    epochs: EpochTrack
    track: DrfTrack
    stats: list[CycleStats]
    labels: list[SegmentLabel]
    runs: list[SegmentRun]
    ztw: ZtwConfig
    bands: BandConfig

    def summary(self) -> dict:
        counts = {lab.value: 0 for lab in Label}
        for s in self.labels:
            counts[s.label.value] += 1
        mp = self.epochs.mean_pitch_s
        return {
            "version": __version__,
            "source": self.signal.source_id or "",
            "sample_rate": self.signal.sample_rate,
            "duration_s": round(self.signal.duration_s, 6),
            "n_gcis": len(self.epochs),
            "mean_pitch_s": round(mp, 9) if np.isfinite(mp) else None,
            "n_cycles": len(self.labels),
            "label_counts": counts,
            "nv_runs": sum(r.label == Label.NV for r in self.runs),
            "runs": [r.to_dict() for r in self.runs],
            "config": {"ztw": self.ztw.to_dict(), "bands": self.bands.to_dict()},
        }

    def f1_estimate(self) -> float | None:
        """Median DRF over oral-vowel cycles, else over cycles whose mean DRF sits in B_V."""
        ov = [s.cycle.mu_d for s in self.labels if s.label == Label.OV]
        if ov:
            return float(np.median(ov))
        bv = [s.mu_d for s in self.stats if self.bands.b_v[0] <= s.mu_d <= self.bands.b_v[1]]
        return float(np.median(bv)) if bv else None


def analyze(
    signal: SampledSignal,
    ztw: ZtwConfig = ZtwConfig(),
    bands: BandConfig = BandConfig(),
    annotations: AnnotationTrack | None = None,
    search_band: tuple[float, float] = SEARCH_BAND,
    min_separation_hz: float = MIN_SEPARATION_HZ,
    workers: int | None = None,
) -> AnalysisResult:
    """Run the full chain on one utterance.

    Unvoiced-only input is not an error: the result has no cycles and a single
    UNVOICED run, and a ``UserWarning`` is emitted.
    """
    ep = epochs(signal)
    if len(ep) >= 2:
        check_window(ztw.window_len_ms, ep)
    track = track_signal(signal, ztw, search_band, min_separation_hz, workers=workers)
    stats = cycle_stats(track, ep) if len(ep) >= 2 else []
    if not stats:
        warnings.warn(f"{signal.source_id or 'input'}: no voiced cycles found", UserWarning, stacklevel=2)
    labels = label_track(stats, track, bands, annotations)
    runs = segment_runs(labels, signal.duration_s)
    return AnalysisResult(signal, ep, track, stats, labels, runs, ztw, bands)


# ---------------------------------------------------------------- boundaries


@dataclass(frozen=True)
class PhonePair:
    vowel: str
    neighbour: str
    boundary_s: float
    vowel_side: str  # "before" (VC) or "after" (CV)


def _match(pattern: str, label: str) -> bool:
    return fnmatch.fnmatchcase(label, pattern)


def find_pairs(annotations: AnnotationTrack, pair_filter: str = "*:*", gap_tol_s: float = 0.002) -> list[PhonePair]:
    """Vowel/non-vowel neighbours matching ``"left:right"`` patterns (comma-separated).

    Patterns use shell wildcards, e.g. ``"ae:m"`` for /ae/ before /m/ or
    ``"m,n:ae"``-style lists given as ``"ae:m,ae:n"``.
    """
    filters = []
    for part in pair_filter.split(","):
        if part.count(":") != 1:
            raise ValueError(f"pair filter must look like 'left:right', got {part!r}")
        filters.append(tuple(p.strip() for p in part.split(":")))
    out = []
    for a, b in zip(annotations.phones, annotations.phones[1:]):
        if abs(b.start_s - a.end_s) > gap_tol_s:
            continue
        va, vb = is_vowel(a.label), is_vowel(b.label)
        if va == vb:
            continue
        if not any(_match(fl, a.label) and _match(fr, b.label) for fl, fr in filters):
            continue
        if va:
            out.append(PhonePair(a.label, b.label, a.end_s, "before"))
        else:
            out.append(PhonePair(b.label, a.label, b.start_s, "after"))
    return out


@dataclass(frozen=True)
class BoundaryMeasure:
    source: str
    vowel: str
    neighbour: str
    boundary_s: float
    vowel_side: str
    mu_avg: float
    sigma_avg: float
    mu_dev: float
    sigma_dev: float
    n_cycles: int
    label: str
    a1p0: A1P0Result | None = None


def boundary_cycles(stats: Sequence[CycleStats], boundary_s: float, n: int, side: str) -> list[CycleStats]:
    if side == "before":
        return [s for s in stats if s.mid_s < boundary_s][-n:]
    return [s for s in stats if s.mid_s >= boundary_s][:n]


def measure_boundary(
    result: AnalysisResult,
    pair: PhonePair,
    n_cycles: int = BOUNDARY_CYCLES,
    with_a1p0: bool = False,
    f1_est_hz: float | None = None,
    a1_hz: float | None = None,
    p0_hz: float | None = None,
) -> BoundaryMeasure:
    """Averages over the ``n_cycles`` vowel-side cycles at one boundary.

    The deviations are the spreads (population std) of mu_D and sigma_D over
    those cycles, the error bars of a per-instance plot. A1-P0 uses a 20 ms
    frame that ends (VC) or starts (CV) at the boundary.
    """
    mu, sg = boundary_average(result.stats, pair.boundary_s, n_cycles, pair.vowel_side)
    cyc = boundary_cycles(result.stats, pair.boundary_s, n_cycles, pair.vowel_side)
    ids = {(c.cycle_start, c.cycle_end) for c in cyc}
    labs = [s.label.value for s in result.labels if (s.cycle.cycle_start, s.cycle.cycle_end) in ids]
    label = max(sorted(set(labs)), key=labs.count) if labs else Label.UNVOICED.value
    res = None
    if with_a1p0:
        f1 = f1_est_hz if f1_est_hz is not None else result.f1_estimate()
        if f1 is None:
            raise ValueError("no F1 estimate: no oral-vowel cycles and no cycles in B_V")
        f0 = result.signal.sample_rate / float(np.median([c.cycle_end - c.cycle_start for c in cyc]))
        half = 0.01
        centre = pair.boundary_s - half if pair.vowel_side == "before" else pair.boundary_s + half
        res = a1_p0(result.signal, centre, f0, f1, a1_hz=a1_hz, p0_hz=p0_hz)
    return BoundaryMeasure(
        result.signal.source_id or "",
        pair.vowel,
        pair.neighbour,
        pair.boundary_s,
        pair.vowel_side,
        mu,
        sg,
        float(np.std([c.mu_d for c in cyc])),
        float(np.std([c.sigma_d for c in cyc])),
        len(cyc),
        label,
        res,
    )


# ---------------------------------------------------------------- corpus


def find_annotation(wav: Path) -> Path | None:
    for ext in (".lab", ".phn", ".PHN"):
        p = wav.with_suffix(ext)
        if p.is_file():
            return p
    return None


def read_annotation(path: Path, sample_rate: int) -> AnnotationTrack:
    if path.suffix.lower() == ".phn":
        return from_timit_phn(path.read_text("utf-8").splitlines(), sample_rate)
    return load_annotations(path)


@dataclass
class CorpusItem:
    source: str
    measures: list[BoundaryMeasure] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)


def process_utterance(
    wav: Path,
    ztw: ZtwConfig,
    bands: BandConfig,
    pair_filter: str,
    with_a1p0: bool = False,
    sample_rate: int | None = None,
    n_cycles: int = BOUNDARY_CYCLES,
    a1_hz: float | None = None,
    p0_hz: float | None = None,
) -> CorpusItem:
    item = CorpusItem(wav.name)
    ann_path = find_annotation(wav)
    if ann_path is None:
        item.errors.append(f"{wav.name}: no .lab/.phn annotation next to the audio")
        return item
    sig = load_wav(wav)
    ann = read_annotation(ann_path, sig.sample_rate)
    if sample_rate is not None:
        sig = resample(sig, sample_rate)
    pairs = find_pairs(ann, pair_filter)
    if not pairs:
        return item
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        result = analyze(sig, ztw, bands, ann)
    for p in pairs:
        try:
            item.measures.append(measure_boundary(result, p, n_cycles, with_a1p0, a1_hz=a1_hz, p0_hz=p0_hz))
        except ValueError as exc:
            item.errors.append(f"{wav.name} @ {p.boundary_s:.3f} s: {exc}")
    return item


def process_corpus(
    directory: Path,
    ztw: ZtwConfig = ZtwConfig(),
    bands: BandConfig = BandConfig(),
    pair_filter: str = "*:*",
    with_a1p0: bool = False,
    sample_rate: int | None = None,
    jobs: int = 1,
    n_cycles: int = BOUNDARY_CYCLES,
    a1_hz: float | None = None,
    p0_hz: float | None = None,
) -> list[CorpusItem]:
    """Boundary measurements for every annotated WAV in ``directory``.

    Utterances run concurrently when ``jobs > 1``; results come back in file
    name order regardless.
    """
    wavs = sorted(p for p in Path(directory).iterdir() if p.suffix.lower() == ".wav")

    def one(w: Path) -> CorpusItem:
        return process_utterance(w, ztw, bands, pair_filter, with_a1p0, sample_rate, n_cycles, a1_hz, p0_hz)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(one, wavs))
    return [one(w) for w in wavs]
