"""Synthetic speech with ground truth: the verification oracle for the pipeline.

An impulse train (negative impulses, the usual polarity of the glottal
excitation in recorded speech) drives two parallel branches:

* oral: cascade of second-order resonators, one per formant;
* nasal: resonator at the nasal pole followed by an anti-resonator at the
  nasal zero, scaled by the coupling gain.

With ``phase_modulation`` on, the oral branch is attenuated during the open
part of each glottal cycle in proportion to the coupling, so a partially
coupled vowel has oral dominance after closure and nasal dominance later in
the cycle.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import jsonschema
import numpy as np
from scipy.signal import lfilter

from .signal_io import (
    PEAK_LEVEL,
    REFERENCE_RATE,
    AnnotationTrack,
    PhoneAnnotation,
    SampledSignal,
    normalize_peak,
)
from .zff import EpochTrack

WARMUP_S = 0.03


class ScriptError(ValueError):
    """Fixture script failed validation; the message names the offending field."""


@dataclass(frozen=True)
class Resonance:
    freq_hz: float
    bandwidth_hz: float
    gain: float = 1.0

    def __post_init__(self):
        if self.bandwidth_hz <= 0:
            raise ValueError(f"bandwidth must be positive (got {self.bandwidth_hz} Hz at {self.freq_hz} Hz)")
        if self.freq_hz <= 0:
            raise ValueError(f"resonance frequency must be positive, got {self.freq_hz}")

    @classmethod
    def parse(cls, v) -> "Resonance":
        if isinstance(v, Resonance):
            return v
        if isinstance(v, dict):
            return cls(float(v["freq_hz"]), float(v["bandwidth_hz"]), float(v.get("gain", 1.0)))
        return cls(*map(float, v))


@dataclass(frozen=True)
class VowelSpec:
    """Parameters of one steady (or coupling-ramped) voiced section.

    ``coupling_end`` ramps the coupling linearly across the section when set.
    Formant gains multiply into the oral branch level (the branch is a cascade).
    During the open phase the oral gain is ``1 - open_phase_attenuation * coupling``
    clipped at 0, so attenuations above 1 silence the oral branch before full coupling.
    """

    f0_hz: float
    formants: tuple[Resonance, ...] = ()
    nasal_pole: Resonance | None = None
    nasal_zero: Resonance | None = None
    coupling: float = 0.0
    duration_s: float = 0.3
    open_quotient: float = 0.6
    phase_modulation: bool = True
    open_phase_attenuation: float = 1.0
    coupling_end: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "formants", tuple(Resonance.parse(f) for f in self.formants))
        if self.nasal_pole is not None:
            object.__setattr__(self, "nasal_pole", Resonance.parse(self.nasal_pole))
        if self.nasal_zero is not None:
            object.__setattr__(self, "nasal_zero", Resonance.parse(self.nasal_zero))
        if not MIN_F0 <= self.f0_hz <= MAX_F0:
            raise ValueError(f"f0 {self.f0_hz} Hz outside [{MIN_F0}, {MAX_F0}]")
        for c in (self.coupling, self.coupling_end):
            if c is not None and not 0.0 <= c <= 1.0:
                raise ValueError(f"coupling must be in [0, 1], got {c}")
        if not 0.0 <= self.open_quotient <= 1.0:
            raise ValueError("open_quotient must be in [0, 1]")
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")
        if not 0.0 <= self.open_phase_attenuation <= 2.0:
            raise ValueError("open_phase_attenuation must be in [0, 2]")

    def check_rate(self, sample_rate: int) -> None:
        nyq = sample_rate / 2.0
        for r in (*self.formants, self.nasal_pole, self.nasal_zero):
            if r is not None and r.freq_hz >= nyq:
                raise ValueError(f"resonance at {r.freq_hz} Hz is not below Nyquist ({nyq} Hz)")


MIN_F0, MAX_F0 = 50.0, 500.0


def resonator(freq_hz: float, bandwidth_hz: float, sample_rate: int) -> tuple[np.ndarray, np.ndarray]:
    """Two-pole resonator with unity gain at DC, as ``(b, a)``."""
    if bandwidth_hz <= 0:
        raise ValueError("unstable resonator: bandwidth must be positive")
    r = np.exp(-np.pi * bandwidth_hz / sample_rate)
    theta = 2.0 * np.pi * freq_hz / sample_rate
    a = np.array([1.0, -2.0 * r * np.cos(theta), r * r])
    return np.array([a.sum()]), a


def antiresonator(freq_hz: float, bandwidth_hz: float, sample_rate: int) -> tuple[np.ndarray, np.ndarray]:
    """Two-zero notch, the inverse of :func:`resonator`."""
    b, a = resonator(freq_hz, bandwidth_hz, sample_rate)
    return a / a.sum(), np.array([1.0])


def _raised_cos(n: int) -> np.ndarray:
    """Rising half-cosine of ``n`` samples from 0 to 1 (exclusive of both ends)."""
    if n <= 0:
        return np.zeros(0)
    return 0.5 - 0.5 * np.cos(np.pi * (np.arange(n) + 0.5) / n)


def open_phase_gain(
    gcis: np.ndarray, n: int, open_quotient: float, oral_open_gain: np.ndarray, sample_rate: int
) -> np.ndarray:
    """Per-sample oral-branch gain: 1 in the closed phase, ``oral_open_gain`` when open.

    Transitions are raised-cosine ramps (1 ms down at open-phase onset, 0.5 ms
    back up just before the next closure) so the gain steps do not add
    broadband clicks.
    """
    g = np.ones(n)
    if gcis.size == 0:
        return g
    period = int(np.median(np.diff(gcis))) if gcis.size > 1 else int(0.008 * sample_rate)
    bounds = list(gcis) + [gcis[-1] + period]
    for a, b in zip(bounds[:-1], bounds[1:]):
        L = b - a
        if L <= 2:
            continue
        start = a + int(round((1.0 - open_quotient) * L))
        down = min(int(0.001 * sample_rate), max(1, (b - start) // 3))
        up = min(int(0.0005 * sample_rate), max(1, (b - start) // 4))
        lo_end = min(b, n)
        if start >= lo_end:
            continue
        seg = np.arange(start, lo_end)
        target = oral_open_gain[np.clip(seg, 0, n - 1)]
        w = np.ones(seg.size)
        r = _raised_cos(down)[: seg.size]
        w[: r.size] = r
        tail = b - up
        if tail < lo_end:
            k0 = max(tail - start, 0)
            ramp = _raised_cos(up)[::-1]
            m = min(lo_end - start - k0, ramp.size)
            w[k0:k0 + m] = np.minimum(w[k0:k0 + m], ramp[-m:] if tail < start else ramp[:m])
        g[seg] = 1.0 - w * (1.0 - target)
    return g


def _coupling_profile(spec: VowelSpec, n: int, offset: int, span: int) -> np.ndarray:
    if spec.coupling_end is None or span <= 1:
        return np.full(n, spec.coupling)
    t = (np.arange(n) - offset) / (span - 1)
    return np.clip(spec.coupling + (spec.coupling_end - spec.coupling) * t, 0.0, 1.0)


def render_voiced(
    spec: VowelSpec,
    sample_rate: int,
    n: int,
    gcis: np.ndarray,
    coupling: np.ndarray | None = None,
) -> np.ndarray:
    """Filter a negative impulse train at ``gcis`` through the oral/nasal branches."""
    spec.check_rate(sample_rate)
    e = np.zeros(n)
    g = gcis[(gcis >= 0) & (gcis < n)]
    e[g] = -1.0
    oral = e
    level = 1.0
    for f in spec.formants:
        b, a = resonator(f.freq_hz, f.bandwidth_hz, sample_rate)
        oral = lfilter(b, a, oral)
        level *= f.gain
    if level != 1.0:
        oral = oral * level
    c = np.full(n, spec.coupling) if coupling is None else coupling
    if not np.any(c > 0):
        return oral
    if spec.phase_modulation:
        oral = oral * open_phase_gain(
            g, n, spec.open_quotient, np.clip(1.0 - spec.open_phase_attenuation * c, 0.0, 1.0), sample_rate
        )
    if spec.nasal_pole is None:
        return oral
    p = spec.nasal_pole
    b, a = resonator(p.freq_hz, p.bandwidth_hz, sample_rate)
    nasal = lfilter(b, a, e) * p.gain
    if spec.nasal_zero is not None:
        z = spec.nasal_zero
        b, a = antiresonator(z.freq_hz, z.bandwidth_hz, sample_rate)
        nasal = lfilter(b, a, nasal)
    return oral + c * nasal


def impulse_times(f0_hz: float, start: float, end: float) -> np.ndarray:
    """Excitation instants (seconds) ``start, start + 1/f0, ...`` below ``end``."""
    k = np.arange(int(np.ceil((end - start) * f0_hz)) + 1)
    t = start + k / f0_hz
    return t[t < end - 1e-12]


def synth_vowel(spec: VowelSpec, sample_rate: int = REFERENCE_RATE) -> tuple[SampledSignal, EpochTrack]:
    """Render one vowel; the impulse instants are the exact ground-truth GCIs."""
    n = int(round(spec.duration_s * sample_rate))
    gcis = np.unique(np.round(impulse_times(spec.f0_hz, 0.0, spec.duration_s) * sample_rate).astype(np.int64))
    gcis = gcis[gcis < n]
    coupling = _coupling_profile(spec, n, 0, n)
    y = render_voiced(spec, sample_rate, n, gcis, coupling)
    voicing = np.zeros(n, bool)
    if gcis.size:
        voicing[gcis[0]:gcis[-1] + 1] = True
    truth = EpochTrack(gcis, voicing, 1.0 / spec.f0_hz, sample_rate)
    return SampledSignal(y, sample_rate, "synth_vowel"), truth


# ---------------------------------------------------------------- scripts


@dataclass(frozen=True)
class Section:
    """One fixture section: ``kind`` is ``vowel``, ``silence`` or ``noise``."""

    kind: str
    duration_s: float
    label: str = ""
    extent: str = "none"
    vowel: VowelSpec | None = None
    level: float = 0.05
    phone: str = ""

    def __post_init__(self):
        if self.kind not in ("vowel", "silence", "noise"):
            raise ValueError(f"unknown section kind {self.kind!r}")
        if self.duration_s <= 0:
            raise ValueError("section duration must be positive")
        if self.kind == "vowel" and self.vowel is None:
            raise ValueError("vowel section needs a VowelSpec")


@dataclass(frozen=True)
class FixtureScript:
    sections: tuple[Section, ...]
    sample_rate: int = REFERENCE_RATE
    seed: int = 0
    crossfade_ms: float = 5.0
    name: str = ""

    def __post_init__(self):
        if not self.sections:
            raise ValueError("fixture script has no sections")
        object.__setattr__(self, "sections", tuple(self.sections))

    @property
    def boundaries_s(self) -> list[float]:
        """Section start times followed by the total duration."""
        t = [0.0]
        for s in self.sections:
            t.append(t[-1] + s.duration_s)
        return t

    @property
    def duration_s(self) -> float:
        return self.boundaries_s[-1]


DEFAULT_PHONES = {"OV": "ae", "NV": "ae", "NC": "m", "UNVOICED": "h#"}


@dataclass(frozen=True)
class TruthSection:
    label: str
    extent: str
    kind: str
    start_s: float
    end_s: float
    phone: str = ""


@dataclass(eq=False)
class RenderedFixture:
    signal: SampledSignal
    epochs: EpochTrack
    sections: list[TruthSection] = field(default_factory=list)
    script: FixtureScript | None = None

    def section_at(self, t: float) -> TruthSection | None:
        for s in self.sections:
            if s.start_s <= t < s.end_s:
                return s
        return None

    def phone_annotations(self) -> AnnotationTrack:
        """Phone-level annotation (vowel or nasal, never the coupling); repeated phones merge."""
        merged: list[list] = []
        for s in self.sections:
            if merged and merged[-1][0] == s.phone:
                merged[-1][2] = s.end_s
            else:
                merged.append([s.phone, s.start_s, s.end_s])
        return AnnotationTrack([PhoneAnnotation(p, a, b) for p, a, b in merged])


def render_script(script: FixtureScript, normalize: bool = True) -> RenderedFixture:
    """Concatenate sections with raised-cosine crossfades centred on each boundary.

    Adjacent vowel sections share one continuous excitation schedule, so the
    crossfade regions carry no spurious extra pulses.
    """
    fs = script.sample_rate
    bounds = script.boundaries_s
    n_total = int(round(bounds[-1] * fs))
    half = int(round(script.crossfade_ms * fs / 2000.0))
    warm = int(round(WARMUP_S * fs))

    # global excitation schedule
    gci_by_section: list[np.ndarray] = []
    last_t = None
    for i, sec in enumerate(script.sections):
        a, b = bounds[i], bounds[i + 1]
        if sec.kind != "vowel":
            gci_by_section.append(np.zeros(0, np.int64))
            last_t = None
            continue
        start = a if last_t is None else max(a, last_t + 1.0 / sec.vowel.f0_hz)
        t = impulse_times(sec.vowel.f0_hz, start, b)
        if t.size:
            last_t = float(t[-1])
        gci_by_section.append(np.round(t * fs).astype(np.int64))
    all_gcis = np.unique(np.concatenate(gci_by_section)) if gci_by_section else np.zeros(0, np.int64)
    all_gcis = all_gcis[all_gcis < n_total]

    out = np.zeros(n_total)
    for i, sec in enumerate(script.sections):
        s0 = int(round(bounds[i] * fs))
        s1 = int(round(bounds[i + 1] * fs))
        lo = 0 if i == 0 else max(0, s0 - half)
        hi = n_total if i == len(script.sections) - 1 else min(n_total, s1 + half)
        w = np.ones(hi - lo)
        if i > 0:
            r = _raised_cos(s0 + half - lo)
            w[: r.size] = r
        if i < len(script.sections) - 1:
            r = _raised_cos(hi - (s1 - half))[::-1]
            w[w.size - r.size:] = r
        if sec.kind == "silence":
            continue
        if sec.kind == "noise":
            rng = np.random.default_rng([script.seed, i])
            out[lo:hi] += w * sec.level * rng.standard_normal(hi - lo)
            continue
        wlo = max(0, lo - warm)
        m = hi - wlo
        g = all_gcis[(all_gcis >= wlo) & (all_gcis < hi)] - wlo
        coupling = _coupling_profile(sec.vowel, m, s0 - wlo, s1 - s0)
        y = render_voiced(sec.vowel, fs, m, g, coupling)
        out[lo:hi] += w * y[lo - wlo:]

    voicing = np.zeros(n_total, bool)
    truth_gcis = []
    sections = []
    for i, sec in enumerate(script.sections):
        label = sec.label or {"vowel": "OV", "silence": "UNVOICED", "noise": "UNVOICED"}[sec.kind]
        phone = sec.phone or DEFAULT_PHONES[label]
        sections.append(TruthSection(label, sec.extent, sec.kind, bounds[i], bounds[i + 1], phone))
        g = gci_by_section[i]
        if g.size:
            truth_gcis.append(g)
            voicing[g[0]:min(g[-1] + 1, n_total)] = True
    gt = np.concatenate(truth_gcis) if truth_gcis else np.zeros(0, np.int64)
    gt = gt[gt < n_total]
    periods = [1.0 / s.vowel.f0_hz for s in script.sections if s.kind == "vowel"]
    truth = EpochTrack(gt, voicing, float(np.median(periods)) if periods else float("nan"), fs)
    sig = SampledSignal(out, fs, script.name or None)
    if normalize:
        sig = normalize_peak(sig, PEAK_LEVEL)
    return RenderedFixture(sig, truth, sections, script)


# ---------------------------------------------------------------- JSON form


def script_schema() -> dict:
    text = resources.files("nasalztw").joinpath("schemas/fixture_script.schema.json").read_text("utf-8")
    return json.loads(text)


def _field_path(err: jsonschema.ValidationError) -> str:
    path = ""
    for p in err.absolute_path:
        path += f"[{p}]" if isinstance(p, int) else (f".{p}" if path else str(p))
    return path or "<root>"


def script_from_dict(doc: Any, name: str = "") -> FixtureScript:
    """Validate a JSON document and build a :class:`FixtureScript`."""
    validator = jsonschema.Draft202012Validator(script_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ScriptError(f"{_field_path(e)}: {e.message}")
    sections = []
    for i, s in enumerate(doc["sections"]):
        try:
            vowel = None
            if s["kind"] == "vowel":
                vowel = VowelSpec(
                    f0_hz=s["f0_hz"],
                    formants=tuple(Resonance.parse(f) for f in s.get("formants", [])),
                    nasal_pole=Resonance.parse(s["nasal_pole"]) if s.get("nasal_pole") else None,
                    nasal_zero=Resonance.parse(s["nasal_zero"]) if s.get("nasal_zero") else None,
                    coupling=s.get("coupling", 0.0),
                    coupling_end=s.get("coupling_end"),
                    duration_s=s["duration_s"],
                    open_quotient=s.get("open_quotient", 0.6),
                    phase_modulation=s.get("phase_modulation", True),
                    open_phase_attenuation=s.get("open_phase_attenuation", 1.0),
                )
                vowel.check_rate(doc.get("sample_rate", REFERENCE_RATE))
            sections.append(
                Section(
                    kind=s["kind"],
                    duration_s=s["duration_s"],
                    label=s.get("label", ""),
                    extent=s.get("extent", "none"),
                    vowel=vowel,
                    level=s.get("level", 0.05),
                    phone=s.get("phone", ""),
                )
            )
        except ValueError as exc:
            raise ScriptError(f"sections[{i}]: {exc}") from exc
    return FixtureScript(
        tuple(sections),
        sample_rate=doc.get("sample_rate", REFERENCE_RATE),
        seed=doc.get("seed", 0),
        crossfade_ms=doc.get("crossfade_ms", 5.0),
        name=doc.get("name", name),
    )


def script_to_dict(script: FixtureScript) -> dict:
    secs = []
    for s in script.sections:
        d: dict[str, Any] = {"kind": s.kind, "duration_s": s.duration_s}
        if s.label:
            d["label"] = s.label
        if s.extent != "none":
            d["extent"] = s.extent
        if s.kind == "noise":
            d["level"] = s.level
        if s.phone:
            d["phone"] = s.phone
        if s.vowel is not None:
            v = s.vowel
            d.update(
                f0_hz=v.f0_hz,
                formants=[[f.freq_hz, f.bandwidth_hz, f.gain] for f in v.formants],
                coupling=v.coupling,
                open_quotient=v.open_quotient,
                phase_modulation=v.phase_modulation,
                open_phase_attenuation=v.open_phase_attenuation,
            )
            if v.nasal_pole is not None:
                p = v.nasal_pole
                d["nasal_pole"] = [p.freq_hz, p.bandwidth_hz, p.gain]
            if v.nasal_zero is not None:
                d["nasal_zero"] = [v.nasal_zero.freq_hz, v.nasal_zero.bandwidth_hz]
            if v.coupling_end is not None:
                d["coupling_end"] = v.coupling_end
        secs.append(d)
    doc = {
        "sample_rate": script.sample_rate,
        "seed": script.seed,
        "crossfade_ms": script.crossfade_ms,
        "sections": secs,
    }
    if script.name:
        doc["name"] = script.name
    return doc


def load_script(path: str | Path) -> FixtureScript:
    path = Path(path)
    try:
        doc = json.loads(path.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise ScriptError(f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return script_from_dict(doc, name=path.stem)


def fixture_names() -> list[str]:
    d = resources.files("nasalztw").joinpath("fixtures")
    return sorted(p.name[:-5] for p in d.iterdir() if p.name.endswith(".json"))


def load_fixture(name: str) -> FixtureScript:
    """Load one of the bundled fixture scripts by stem name."""
    p = resources.files("nasalztw").joinpath(f"fixtures/{name}.json")
    if not p.is_file():
        raise KeyError(f"no bundled fixture {name!r}; available: {', '.join(fixture_names())}")
    return script_from_dict(json.loads(p.read_text("utf-8")), name=name)


def vowel_script(sections: Sequence[tuple[str, VowelSpec | None, float]], **kw) -> FixtureScript:
    """Shorthand for tests: ``(label, spec_or_None, duration)`` triples; None = silence."""
    secs = []
    for label, spec, dur in sections:
        if spec is None:
            secs.append(Section("silence", dur, label=label or "UNVOICED"))
        else:
            extent = {"NV": "partial"}.get(label, "none")
            if label.startswith("NV-"):
                label, extent = "NV", label[3:]
            secs.append(Section("vowel", dur, label=label, extent=extent, vowel=_with_duration(spec, dur)))
    return FixtureScript(tuple(secs), **kw)


def _with_duration(spec: VowelSpec, dur: float) -> VowelSpec:
    return replace(spec, duration_s=dur)
