"""Matplotlib figures for completed analyses (PNG, non-interactive backend)."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .baseline import ScatterRecord  # noqa: E402
from .classify import BandConfig  # noqa: E402
from .ztw import Spectrogram  # noqa: E402

DPI = 120
_LABEL_COLOURS = {"OV": "tab:blue", "NV": "tab:red", "NC": "tab:green", "UNVOICED": "0.6"}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=DPI, metadata={"Software": None})
    plt.close(fig)
    return path


def _db_image(spec: Spectrogram, max_hz: float, dynamic_range_db: float = 60.0):
    nb = int(np.searchsorted(spec.freqs, max_hz, side="right"))
    m = spec.mags[:, :nb].astype(np.float64)
    ref = m.max(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        db = 20.0 * np.log10(np.where(ref > 0, m / ref, 0.0))
    return np.clip(np.nan_to_num(db, nan=-dynamic_range_db, neginf=-dynamic_range_db), -dynamic_range_db, 0.0), nb


def plot_spectrogram(path, spec: Spectrogram, max_hz: float = 4000.0, title: str | None = None) -> Path:
    """Per-slice normalized dB heatmap."""
    db, nb = _db_image(spec, max_hz)
    t = spec.times_s
    fig, ax = plt.subplots(figsize=(8, 4))
    extent = (t[0] if t.size else 0.0, t[-1] if t.size else 1.0, 0.0, float(spec.freqs[nb - 1]))
    ax.imshow(db.T, origin="lower", aspect="auto", extent=extent, cmap="magma")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("frequency (Hz)")
    ax.set_title(title or f"{spec.kind.upper()} spectrogram")
    fig.tight_layout()
    return _save(fig, path)


def plot_analysis(path, result, max_hz: float = 1500.0) -> Path:
    """Waveform with GCIs, DRF/DRF2 contours with the bands, per-cycle mu_D +- sigma_D."""
    sig, track, bands = result.signal, result.track, result.bands
    fig, axes = plt.subplots(3, 1, figsize=(9, 7), sharex=True)
    t = np.arange(len(sig)) / sig.sample_rate
    axes[0].plot(t, sig.samples, lw=0.5, color="k")
    for g in result.epochs.gci_seconds:
        axes[0].axvline(g, color="tab:orange", lw=0.4, alpha=0.6)
    axes[0].set_ylabel("amplitude")

    ax = axes[1]
    _band_spans(ax, bands)
    ax.plot(track.times_s, track.drf2_hz, ".", ms=1, color="tab:cyan", label="DRF2")
    ax.plot(track.times_s, track.drf_hz, ".", ms=1, color="tab:red", label="DRF")
    ax.set_ylim(0, max_hz)
    ax.set_ylabel("Hz")
    ax.legend(loc="upper right", markerscale=6, fontsize=7)

    ax = axes[2]
    _band_spans(ax, bands)
    for lab in result.labels:
        c = lab.cycle
        ax.errorbar(c.mid_s, c.mu_d, yerr=c.sigma_d, fmt="o", ms=2, lw=0.7,
                    color=_LABEL_COLOURS[lab.label.value])
    for name, col in _LABEL_COLOURS.items():
        ax.plot([], [], "o", color=col, label=name)
    ax.set_ylim(0, max_hz)
    ax.set_ylabel("mu_D +- sigma_D (Hz)")
    ax.set_xlabel("time (s)")
    ax.legend(loc="upper right", fontsize=7, ncol=4)
    fig.tight_layout()
    return _save(fig, path)


def _band_spans(ax, bands: BandConfig) -> None:
    ax.axhspan(*bands.b_n, color="tab:green", alpha=0.12, lw=0)
    ax.axhspan(*bands.b_v, color="tab:blue", alpha=0.12, lw=0)


def plot_boundaries(path, measures: Sequence) -> Path:
    """Per-instance mean +- deviation of mu_D and sigma_D at the selected boundaries."""
    fig, (a, b) = plt.subplots(2, 1, figsize=(8, 5), sharex=True)
    x = np.arange(len(measures))
    cols = [_LABEL_COLOURS.get(m.label, "k") for m in measures]
    for i, m in enumerate(measures):
        a.errorbar(i, m.mu_avg, yerr=m.mu_dev, fmt="o", color=cols[i], ms=3)
        b.errorbar(i, m.sigma_avg, yerr=m.sigma_dev, fmt="s", color=cols[i], ms=3)
    a.set_ylabel("mu_D (Hz)")
    b.set_ylabel("sigma_D (Hz)")
    b.set_xlabel("instance")
    b.set_xticks(x)
    b.set_xticklabels([f"{m.vowel}/{m.neighbour}" for m in measures], rotation=60, fontsize=6)
    fig.tight_layout()
    return _save(fig, path)


def plot_scatter(path, records: Sequence[ScatterRecord]) -> Path:
    """A1-P0 against sigma_D, one colour per label."""
    fig, ax = plt.subplots(figsize=(5, 4))
    for lab in sorted({r.label for r in records}):
        pts = [r for r in records if r.label == lab]
        ax.scatter([r.a1_minus_p0_db for r in pts], [r.sigma_d_hz for r in pts], s=14,
                   color=_LABEL_COLOURS.get(lab, "k"), label=lab)
    ax.axvline(0.0, color="0.5", lw=0.6)
    ax.set_xlabel("A1-P0 (dB)")
    ax.set_ylabel("sigma_D (Hz)")
    if records:
        ax.legend(fontsize=7)
    fig.tight_layout()
    return _save(fig, path)

