"""Per-cycle labelling: oral vowel, nasalized vowel, nasal consonant, unvoiced.

A cycle's label comes from how its DRF points occupy the nasal band B_N and
the vowel band B_V. DRF fluctuating between both bands inside one cycle is
the signature of partial nasalization; DRF settled in B_N while DRF2 sits in
B_V (or inside a vowel annotation) marks full coupling.
"""
from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .drf import CycleStats, DrfTrack, cycle_points
from .signal_io import AnnotationTrack

CLOSED_PHASE = (0.0, 0.3)
OPEN_PHASE = (0.4, 0.9)

TIMIT_VOWELS = {
    "iy", "ih", "eh", "ey", "ae", "aa", "aw", "ay", "ah", "ao", "oy", "ow",
    "uh", "uw", "ux", "er", "ax", "ix", "axr", "ax-h",
}
IPA_VOWELS = set("aeiouyæɑɒɔəɛɪʊʌɜɚøœɐɨʉɯɤ")
VOWELS = TIMIT_VOWELS | IPA_VOWELS
NASALS = {"m", "n", "ng", "em", "en", "eng", "nx", "ŋ", "ɲ", "ɱ"}


def is_vowel(label: str) -> bool:
    lab = label.strip().lower().rstrip("0123456789ː:")
    return lab in VOWELS or (len(lab) > 0 and all(c in IPA_VOWELS or c in "̃ː" for c in lab))


class Label(str, enum.Enum):
    OV = "OV"
    NV = "NV"
    NC = "NC"
    UNVOICED = "UNVOICED"


class Extent(str, enum.Enum):
    NONE = "none"
    PARTIAL = "partial"
    FULL = "full"


@dataclass(frozen=True)
class BandConfig:
    """Nasal and vowel DRF bands (Hz) and the occupancy decision thresholds."""

    b_n: tuple[float, float] = (300.0, 400.0)
    b_v: tuple[float, float] = (450.0, 850.0)
    hysteresis_hz: float = 25.0
    pure: float = 0.8
    fluctuation: float = 0.2
    drf2_full: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "b_n", tuple(map(float, self.b_n)))
        object.__setattr__(self, "b_v", tuple(map(float, self.b_v)))
        for name, (lo, hi) in (("b_n", self.b_n), ("b_v", self.b_v)):
            if not 0 <= lo < hi:
                raise ValueError(f"{name} must satisfy 0 <= lo < hi, got {lo}:{hi}")
        if self.b_n[1] >= self.b_v[0]:
            raise ValueError(f"b_n ({self.b_n}) must lie entirely below b_v ({self.b_v})")
        if self.hysteresis_hz < 0:
            raise ValueError("hysteresis_hz must be non-negative")
        if not 0 < self.fluctuation <= self.pure <= 1:
            raise ValueError("thresholds must satisfy 0 < fluctuation <= pure <= 1")

    @property
    def _margin(self) -> float:
        # never let the widened bands overlap
        return min(self.hysteresis_hz, 0.5 * (self.b_v[0] - self.b_n[1]))

    @property
    def b_n_wide(self) -> tuple[float, float]:
        return self.b_n[0] - self._margin, self.b_n[1] + self._margin

    @property
    def b_v_wide(self) -> tuple[float, float]:
        return self.b_v[0] - self._margin, self.b_v[1] + self._margin

    def in_n(self, hz: np.ndarray) -> np.ndarray:
        lo, hi = self.b_n_wide
        return (hz >= lo) & (hz < hi)

    def in_v(self, hz: np.ndarray) -> np.ndarray:
        lo, hi = self.b_v_wide
        return (hz >= lo) & (hz <= hi)

    def nearest(self, hz: float) -> str:
        """``"B_N"`` or ``"B_V"``, whichever band interval is closer to ``hz``."""
        dn = max(self.b_n[0] - hz, 0.0, hz - self.b_n[1])
        dv = max(self.b_v[0] - hz, 0.0, hz - self.b_v[1])
        return "B_N" if dn < dv else "B_V"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["b_n"], d["b_v"] = list(self.b_n), list(self.b_v)
        return d


def parse_bands(text: str, base: BandConfig = BandConfig()) -> BandConfig:
    """Parse ``"280:420,470:900"`` (B_N then B_V) into a :class:`BandConfig`."""
    try:
        n, v = text.split(",")
        bn = tuple(float(x) for x in n.split(":"))
        bv = tuple(float(x) for x in v.split(":"))
        if len(bn) != 2 or len(bv) != 2:
            raise ValueError
    except ValueError:
        raise ValueError(f"bands must look like 'lo:hi,lo:hi' (B_N then B_V), got {text!r}") from None
    return BandConfig(bn, bv, base.hysteresis_hz, base.pure, base.fluctuation, base.drf2_full)


@dataclass(frozen=True)
class SegmentLabel:
    """Label of one glottal cycle; ``extent`` is none unless the label is NV."""

    cycle: CycleStats
    label: Label
    extent: Extent
    confidence: float
    p_n: float = 0.0
    p_v: float = 0.0

    def __post_init__(self):
        if (self.label == Label.NV) == (self.extent == Extent.NONE):
            raise ValueError(f"extent {self.extent.value} inconsistent with label {self.label.value}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must be in [0, 1]")

    @property
    def mean_alpha(self) -> float:
        return self.cycle.mean_alpha

    def relabel(self, label: Label, extent: Extent) -> "SegmentLabel":
        return SegmentLabel(self.cycle, label, extent, self.confidence, self.p_n, self.p_v)


def occupancy(drf_hz: np.ndarray, bands: BandConfig) -> tuple[float, float]:
    d = np.asarray(drf_hz, dtype=float)
    d = d[np.isfinite(d)]
    if d.size == 0:
        return 0.0, 0.0
    return float(bands.in_n(d).mean()), float(bands.in_v(d).mean())


def classify_cycle(
    stats: CycleStats,
    drf_hz: np.ndarray,
    drf2_hz: np.ndarray | None = None,
    bands: BandConfig = BandConfig(),
    vowel_context: bool = False,
) -> SegmentLabel:
    """Label one cycle from its in-cycle DRF (and DRF2) points.

    Nasal-dominant cycles are graded NV-full when they sit in a vowel
    annotation or DRF2 occupies B_V for at least ``bands.drf2_full`` of the
    points; otherwise NC. Cycles matching no occupancy rule take the band
    nearest their mean DRF with halved confidence.
    """
    p_n, p_v = occupancy(drf_hz, bands)

    def nasal_dominant(conf: float) -> SegmentLabel:
        full = vowel_context
        if not full and drf2_hz is not None:
            d2 = np.asarray(drf2_hz, dtype=float)
            full = d2.size > 0 and float(np.mean(np.isfinite(d2) & bands.in_v(np.nan_to_num(d2)))) >= bands.drf2_full
        if full:
            return SegmentLabel(stats, Label.NV, Extent.FULL, conf, p_n, p_v)
        return SegmentLabel(stats, Label.NC, Extent.NONE, conf, p_n, p_v)

    if p_n >= bands.pure:
        return nasal_dominant(p_n)
    if p_v >= bands.pure:
        return SegmentLabel(stats, Label.OV, Extent.NONE, p_v, p_n, p_v)
    if p_n >= bands.fluctuation and p_v >= bands.fluctuation:
        return SegmentLabel(stats, Label.NV, Extent.PARTIAL, min(1.0, min(p_n, p_v) / 0.5), p_n, p_v)
    conf = 0.5 * max(p_n, p_v)
    if bands.nearest(stats.mu_d) == "B_N":
        return nasal_dominant(conf)
    return SegmentLabel(stats, Label.OV, Extent.NONE, conf, p_n, p_v)


def _adjacent(a: CycleStats, b: CycleStats, slack: float = 0.5) -> bool:
    # consecutive cycles share a GCI; tolerate one dropped short cycle
    return b.cycle_start - a.cycle_end <= slack * (a.cycle_end - a.cycle_start)


def _alpha_rising(window: Sequence[SegmentLabel]) -> bool:
    a = np.array([s.mean_alpha for s in window], dtype=float)
    if np.isnan(a).any():
        return False
    return float(np.polyfit(np.arange(a.size), a, 1)[0]) > 0


def smooth_labels(labels: Sequence[SegmentLabel]) -> list[SegmentLabel]:
    """3-cycle majority smoothing of isolated labels.

    An isolated NV cycle survives when mean alpha rises across its 3-cycle
    window, which is how coupling onsets look.
    """
    out = list(labels)
    for i in range(1, len(labels) - 1):
        prev, cur, nxt = labels[i - 1], labels[i], labels[i + 1]
        if not (_adjacent(prev.cycle, cur.cycle) and _adjacent(cur.cycle, nxt.cycle)):
            continue
        if prev.label != nxt.label or prev.label == cur.label:
            continue
        if cur.label == Label.NV and prev.label == Label.OV and _alpha_rising(labels[i - 1:i + 2]):
            continue
        out[i] = cur.relabel(prev.label, prev.extent)
    return out


def label_track(
    stats: Sequence[CycleStats],
    track: DrfTrack,
    bands: BandConfig = BandConfig(),
    annotations: AnnotationTrack | None = None,
    smooth: bool = True,
) -> list[SegmentLabel]:
    """Label every valid cycle, then smooth; vowel annotations promote NC to NV-full."""
    raw = []
    for s in stats:
        idx = cycle_points(track, s.cycle_start, s.cycle_end)
        ctx = False
        if annotations is not None:
            ph = annotations.at(s.mid_s)
            ctx = ph is not None and is_vowel(ph.label)
        raw.append(classify_cycle(s, track.drf_hz[idx], track.drf2_hz[idx], bands, ctx))
    labels = smooth_labels(raw) if smooth else raw
    if annotations is not None:
        for i, lab in enumerate(labels):
            ph = annotations.at(lab.cycle.mid_s)
            if lab.label == Label.NC and ph is not None and is_vowel(ph.label):
                labels[i] = lab.relabel(Label.NV, Extent.FULL)
    return labels


def phase_profile(
    track: DrfTrack,
    cycle: tuple[int, int] | CycleStats,
    bands: BandConfig = BandConfig(),
    min_points: int = 8,
    closed: tuple[float, float] = CLOSED_PHASE,
    open_: tuple[float, float] = OPEN_PHASE,
) -> tuple[str | None, str | None]:
    """Majority DRF band in the open-phase and closed-phase proxies of a cycle.

    The phases are fixed fractions of the cycle measured from its GCI, a stand-in
    for true open/closed phase landmarks. Returns ``(open_band, closed_band)``
    with each entry ``"B_N"``, ``"B_V"`` or None (no in-band points or a tie).
    """
    if isinstance(cycle, CycleStats):
        a, b = cycle.cycle_start, cycle.cycle_end
    else:
        a, b = cycle
    idx = cycle_points(track, a, b)
    if idx.size < min_points:
        raise ValueError(f"cycle [{a}, {b}) has {idx.size} DRF points, need {min_points}")
    frac = (track.anchors[idx] - a) / (b - a)
    d = track.drf_hz[idx]

    def majority(lo: float, hi: float) -> str | None:
        sel = d[(frac >= lo) & (frac < hi)]
        n, v = int(bands.in_n(sel).sum()), int(bands.in_v(sel).sum())
        if n == v:
            return None
        return "B_N" if n > v else "B_V"

    return majority(*open_), majority(*closed)


@dataclass(frozen=True)
class AlphaTrend:
    slope: float
    intercept: float
    n_cycles: int

    @property
    def rising(self) -> bool:
        return self.slope > 0


def extent_trend(labels: Sequence[SegmentLabel], min_cycles: int = 3) -> AlphaTrend:
    """Least-squares slope of per-cycle mean alpha against cycle index."""
    a = np.array([s.mean_alpha for s in labels], dtype=float)
    keep = np.isfinite(a)
    if keep.sum() < min_cycles:
        raise ValueError(f"alpha trend needs {min_cycles} cycles with alpha, got {int(keep.sum())}")
    x = np.arange(a.size, dtype=float)[keep]
    slope, intercept = np.polyfit(x, a[keep], 1)
    return AlphaTrend(float(slope), float(intercept), int(keep.sum()))


@dataclass
class SegmentRun:
    label: Label
    extent: Extent
    start_s: float
    end_s: float
    n_cycles: int
    mean_confidence: float
    cycles: list[SegmentLabel] = field(default_factory=list, repr=False)

    @property
    def alpha_trend(self) -> AlphaTrend | None:
        if self.label != Label.NV:
            return None
        try:
            return extent_trend(self.cycles)
        except ValueError:
            return None

    def to_dict(self) -> dict:
        tr = self.alpha_trend
        return {
            "label": self.label.value,
            "extent": self.extent.value,
            "start_s": round(self.start_s, 6),
            "end_s": round(self.end_s, 6),
            "n_cycles": self.n_cycles,
            "mean_confidence": round(self.mean_confidence, 6),
            "alpha_slope": None if tr is None else round(tr.slope, 9),
            "alpha_rising": None if tr is None else bool(tr.rising),
        }


def segment_runs(labels: Sequence[SegmentLabel], duration_s: float | None = None) -> list[SegmentRun]:
    """Group consecutive same-label cycles into runs; gaps become UNVOICED runs.

    Consecutive NV cycles of different extent stay in one NV run whose extent
    is the majority extent, since extent may grow inside a nasalized vowel.
    """
    groups: list[list[SegmentLabel]] = []
    for lab in labels:
        if groups and lab.label == groups[-1][-1].label and _adjacent(groups[-1][-1].cycle, lab.cycle):
            groups[-1].append(lab)
        else:
            groups.append([lab])
    runs: list[SegmentRun] = []
    t = 0.0
    prev: SegmentLabel | None = None
    for g in groups:
        start = g[0].cycle.start_s
        if prev is None or not _adjacent(prev.cycle, g[0].cycle):
            if start - t > 1e-9:
                runs.append(SegmentRun(Label.UNVOICED, Extent.NONE, t, start, 0, 1.0))
        else:
            start = prev.cycle.end_s
        ext = Extent.NONE
        if g[0].label == Label.NV:
            n_full = sum(c.extent == Extent.FULL for c in g)
            ext = Extent.FULL if n_full * 2 > len(g) else Extent.PARTIAL
        runs.append(SegmentRun(g[0].label, ext, start, g[-1].cycle.end_s, len(g),
                               float(np.mean([c.confidence for c in g])), list(g)))
        t = g[-1].cycle.end_s
        prev = g[-1]
    if duration_s is not None and duration_s - t > 1e-9:
        runs.append(SegmentRun(Label.UNVOICED, Extent.NONE, t, duration_s, 0, 1.0))
    return runs
