"""File formats: CSV tables, a binary spectrogram matrix, PGM/PPM images.

All CSVs are UTF-8 with a header row, ``.`` as decimal separator and an empty
field for absent values. Numbers are written with fixed precision so outputs
are byte-stable across runs.

Binary matrix layout (little-endian)::

    offset  size  field
    0       8     magic  b"NZTWSPEC"
    8       4     uint32 format version (1)
    12      8     kind, ASCII, NUL padded ("hngd" / "stft")
    20      4     uint32 sample_rate (Hz)
    24      4     uint32 hop_samples
    28      8     uint64 first_anchor (sample index)
    36      4     uint32 n_slices (rows)
    40      4     uint32 n_bins (columns)
    44      8     float64 bin_hz
    52      4     uint32 window_len (samples)
    56      ...   float32 magnitudes, row-major (slice by slice)
"""
from __future__ import annotations

import csv
import io
import json
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .baseline import ScatterRecord
from .classify import SegmentLabel
from .drf import CycleStats, DrfTrack
from .pipeline import BoundaryMeasure
from .zff import EpochTrack
from .ztw import Spectrogram

MAGIC = b"NZTWSPEC"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sI8sIIQIIdI")
DYNAMIC_RANGE_DB = 60.0


def _fmt(v, digits: int = 6) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    v = float(v)
    if not np.isfinite(v):
        return ""
    s = f"{v:.{digits}f}"
    return "0." + "0" * digits if s == "-0." + "0" * digits else s


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


# ---------------------------------------------------------------- tables


def write_epochs(path, track: EpochTrack) -> None:
    g = track.gci_samples
    write_csv(path, ["gci_sample", "gci_seconds", "voiced_flag"],
              ((int(s), s / track.sample_rate, bool(track.voicing[s]) if s < track.voicing.size else True) for s in g))


def write_drf_track(path, track: DrfTrack) -> None:
    al = track.alpha
    write_csv(
        path,
        ["anchor_sample", "drf_hz", "drf_amp", "drf2_hz", "drf2_amp", "alpha"],
        (
            (int(a), h1, _amp(a1), h2, _amp(a2), x)
            for a, h1, a1, h2, a2, x in zip(track.anchors, track.drf_hz, track.drf_amp, track.drf2_hz, track.drf2_amp, al)
        ),
    )


def _amp(v: float) -> str:
    # amplitudes span many decades; keep significant digits, not decimals
    return "" if not np.isfinite(v) else f"{v:.9e}"


def write_cycles(path, stats: Sequence[CycleStats]) -> None:
    write_csv(path, ["cycle_start_s", "cycle_end_s", "mu_d", "sigma_d", "n_points"],
              ((s.start_s, s.end_s, s.mu_d, s.sigma_d, s.n_points) for s in stats))


LABEL_HEADER = ["cycle_start_s", "cycle_end_s", "label", "extent", "confidence", "mu_d", "sigma_d", "mean_alpha"]


def write_labels(path, labels: Sequence[SegmentLabel]) -> None:
    write_csv(
        path,
        LABEL_HEADER,
        ((s.cycle.start_s, s.cycle.end_s, s.label.value, s.extent.value, s.confidence, s.cycle.mu_d,
          s.cycle.sigma_d, s.cycle.mean_alpha) for s in labels),
    )


def write_scatter(path, records: Sequence[ScatterRecord]) -> None:
    write_csv(path, ["a1_minus_p0_db", "sigma_d_hz", "label", "source"],
              ((r.a1_minus_p0_db, r.sigma_d_hz, r.label, r.source) for r in records))


BOUNDARY_HEADER = [
    "source", "vowel", "neighbour", "boundary_s", "vowel_side", "n_cycles", "label",
    "mu_avg", "mu_dev", "sigma_avg", "sigma_dev", "a1_db", "p0_db", "a1_hz", "p0_hz", "a1_minus_p0_db",
]


def write_boundaries(path, measures: Sequence[BoundaryMeasure]) -> None:
    def row(m: BoundaryMeasure):
        r = m.a1p0
        tail = (None,) * 5 if r is None else (r.a1_db, r.p0_db, r.a1_hz, r.p0_hz, r.a1_minus_p0_db)
        return (m.source, m.vowel, m.neighbour, m.boundary_s, m.vowel_side, m.n_cycles, m.label,
                m.mu_avg, m.mu_dev, m.sigma_avg, m.sigma_dev, *tail)

    write_csv(path, BOUNDARY_HEADER, (row(m) for m in measures))


# ---------------------------------------------------------------- spectrograms


def write_spectrogram_csv(path, spec: Spectrogram) -> None:
    """One row per anchor: ``anchor_sample`` then one magnitude column per bin."""
    header = ["anchor_sample"] + [f"{f:.3f}" for f in spec.freqs]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        buf = io.StringIO()
        for a, row in zip(spec.anchors, spec.mags):
            buf.write(str(int(a)))
            buf.write(",")
            buf.write(",".join(f"{v:.6e}" for v in row))
            buf.write("\n")
            if buf.tell() > 1 << 20:
                fh.write(buf.getvalue())
                buf = io.StringIO()
        fh.write(buf.getvalue())


def write_matrix(path, spec: Spectrogram) -> None:
    """Binary matrix (see the module docstring for the header layout)."""
    if len(spec) > 1 and np.any(np.diff(spec.anchors) != spec.hop_samples):
        raise ValueError("binary matrix needs evenly spaced anchors")
    first = int(spec.anchors[0]) if len(spec) else 0
    bin_hz = float(spec.freqs[1] - spec.freqs[0]) if spec.freqs.size > 1 else 0.0
    head = _HEADER.pack(MAGIC, FORMAT_VERSION, spec.kind.encode("ascii")[:8], spec.sample_rate, spec.hop_samples,
                        first, len(spec), spec.freqs.size, bin_hz, spec.window_len)
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(np.ascontiguousarray(spec.mags, dtype="<f4").tobytes())


def read_matrix(path) -> Spectrogram:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, ver, kind, fs, hop, first, rows, cols, bin_hz, wlen = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a spectrogram matrix (bad magic)")
    if ver != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {ver}")
    mags = np.frombuffer(data, dtype="<f4", offset=_HEADER.size)
    if mags.size != rows * cols:
        raise ValueError(f"{path}: expected {rows}x{cols} values, found {mags.size}")
    return Spectrogram(
        anchors=first + hop * np.arange(rows, dtype=np.int64),
        freqs=np.arange(cols) * bin_hz,
        mags=mags.reshape(rows, cols).astype(np.float64),
        sample_rate=fs,
        hop_samples=hop,
        window_len=wlen,
        kind=kind.rstrip(b"\0").decode("ascii"),
    )


# ---------------------------------------------------------------- images


def _columns(n: int, max_width: int) -> np.ndarray:
    step = max(1, int(np.ceil(n / max_width)))
    return np.arange(0, n, step)


def image_matrix(
    spec: Spectrogram,
    max_hz: float | None = None,
    per_column: bool = True,
    max_width: int = 4000,
    dynamic_range_db: float = DYNAMIC_RANGE_DB,
) -> tuple[np.ndarray, np.ndarray, int]:
    """8-bit log-magnitude image, low frequencies at the bottom.

    Returns ``(pixels, column_indices, n_bins_shown)``. Long spectrograms are
    decimated to at most ``max_width`` columns by taking every k-th slice.
    """
    cols = _columns(len(spec), max_width)
    nb = spec.freqs.size if max_hz is None else int(np.searchsorted(spec.freqs, max_hz, side="right"))
    m = spec.mags[cols, :nb].astype(np.float64).T
    ref = m.max(axis=0, keepdims=True) if per_column else np.full((1, 1), m.max() if m.size else 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        db = 20.0 * np.log10(np.where(ref > 0, m / ref, 0.0))
    db = np.nan_to_num(db, nan=-np.inf)
    px = np.clip((db + dynamic_range_db) / dynamic_range_db, 0.0, 1.0)
    return np.round(255.0 * px[::-1]).astype(np.uint8), cols, nb


def write_pgm(path, pixels: np.ndarray) -> None:
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(pixels, dtype=np.uint8).tobytes())


def write_ppm(path, rgb: np.ndarray) -> None:
    h, w, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(rgb, dtype=np.uint8).tobytes())


def read_pnm(path) -> np.ndarray:
    """Read a binary PGM (P5) or PPM (P6) written by this module."""
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    kind, w, h, maxv = parts[0], int(parts[1]), int(parts[2]), int(parts[3])
    if maxv != 255 or kind not in (b"P5", b"P6"):
        raise ValueError(f"{path}: unsupported PNM")
    ch = 1 if kind == b"P5" else 3
    body = data[len(data) - w * h * ch:]
    arr = np.frombuffer(body, np.uint8)
    return arr.reshape(h, w) if ch == 1 else arr.reshape(h, w, 3)


def write_spectrogram_image(path, spec: Spectrogram, max_hz: float | None = None, per_column: bool = True) -> dict:
    px, cols, nb = image_matrix(spec, max_hz, per_column)
    write_pgm(path, px)
    return _image_meta(spec, cols, nb, per_column)


def write_overlay(
    path, spec: Spectrogram, track: DrfTrack, max_hz: float | None = 2000.0, per_column: bool = True
) -> dict:
    """Spectrogram PPM with DRF as full-red and DRF2 as full-cyan pixels."""
    px, cols, nb = image_matrix(spec, max_hz, per_column)
    rgb = np.repeat(px[:, :, None], 3, axis=2)
    h = px.shape[0]
    bin_hz = spec.freqs[1] - spec.freqs[0]
    anchors = spec.anchors[cols]
    idx = np.searchsorted(track.anchors, anchors)
    ok = (idx < len(track)) & (track.anchors[np.minimum(idx, len(track) - 1)] == anchors) if len(track) else np.zeros(0, bool)
    for hz_arr, colour in ((track.drf2_hz, (0, 255, 255)), (track.drf_hz, (255, 0, 0))):
        for x in np.flatnonzero(ok):
            hz = hz_arr[idx[x]]
            if not np.isfinite(hz):
                continue
            row = int(round(hz / bin_hz))
            if 0 <= row < nb:
                rgb[h - 1 - row, x] = colour
    write_ppm(path, rgb)
    return _image_meta(spec, cols, nb, per_column)


def _image_meta(spec: Spectrogram, cols: np.ndarray, nb: int, per_column: bool) -> dict:
    return {
        "width": int(cols.size),
        "height": int(nb),
        "column_stride": int(cols[1] - cols[0]) if cols.size > 1 else 1,
        "max_hz": float(spec.freqs[nb - 1]) if nb else 0.0,
        "per_column_normalization": per_column,
        "dynamic_range_db": DYNAMIC_RANGE_DB,
        "row_0": "highest frequency (image is bottom-up in frequency)",
    }


def write_sidecar(path, meta: dict) -> None:
    Path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
