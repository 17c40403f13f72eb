"""Command-line front end: ``nasalztw {spectrogram,gci,analyze,corpus,synth}``.

Settings come from three layers, later ones winning: built-in defaults, a
flat JSON config file (``--config``, same keys as the long flags with
underscores), then the flags actually given on the command line.

Exit codes: 0 when the analysis completed (whatever it found), 1 for input or
configuration errors, 2 for internal invariant violations.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from dataclasses import asdict, dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Sequence

import jsonschema
import numpy as np

from . import __version__, export
from .baseline import ScatterRecord, correlate_sigma, stft_spectrogram
from .classify import BandConfig, parse_bands
from .pipeline import analyze, find_annotation, process_corpus, read_annotation
from .signal_io import SampledSignal, load_wav, resample, save_annotations, write_wav
from .synth import ScriptError, fixture_names, load_fixture, load_script, render_script
from .zff import epochs
from .ztw import ZtwConfig, hngd_spectrogram

log = logging.getLogger("nasalztw")

EXIT_OK, EXIT_INPUT, EXIT_INVARIANT = 0, 1, 2
IMAGE_MAX_WIDTH = 4000
FORMATS = ("csv", "bin", "pgm", "png")


class InvariantError(RuntimeError):
    """An output failed a self-check (schema, shape); this is a bug, not bad input."""


def _bands_text(b: BandConfig) -> str:
    return f"{b.b_n[0]:g}:{b.b_n[1]:g},{b.b_v[0]:g}:{b.b_v[1]:g}"


@dataclass
class RunConfig:
    """Everything a run needs, in the flat form used by config files."""

    input: str | None = None
    annotations: str | None = None
    out_dir: str = "."
    sample_rate: int | None = None
    l_ms: float = 4.0
    dft_size: int | None = None
    hop: int = 1
    bands: str = _bands_text(BandConfig())
    formats: str = "csv,pgm,png"
    stft: bool = False
    per_column: bool = True
    figures: bool = True
    pairs: str = "*:*"
    a1p0: bool = False
    a1_hz: float | None = None
    p0_hz: float | None = None
    jobs: int = 1
    n_cycles: int = 5

    def __post_init__(self):
        self.ztw_config()
        self.band_config()
        bad = set(self.format_list) - set(FORMATS)
        if bad:
            raise ValueError(f"unknown format(s) {sorted(bad)}; choose from {', '.join(FORMATS)}")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        if self.sample_rate is not None and self.sample_rate < 2000:
            raise ValueError("sample_rate must be >= 2000")

    @property
    def format_list(self) -> list[str]:
        return [f.strip() for f in self.formats.split(",") if f.strip()]

    def ztw_config(self) -> ZtwConfig:
        return ZtwConfig(window_len_ms=self.l_ms, dft_size=self.dft_size, hop_samples=self.hop)

    def band_config(self) -> BandConfig:
        return parse_bands(self.bands)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict, source: str = "<config>") -> "RunConfig":
        if not isinstance(doc, dict):
            raise ValueError(f"{source}: config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ValueError(f"{source}: unknown config key(s): {', '.join(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text("utf-8"))
        except OSError as exc:
            raise ValueError(f"{path}: cannot read config ({exc.strerror or exc})") from exc
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: line {exc.lineno} col {exc.colno}: {exc.msg}") from exc
        return cls.from_dict(doc, str(path))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def merged(self, overrides: dict) -> "RunConfig":
        d = self.to_dict()
        d.update(overrides)
        return RunConfig(**d)


# ---------------------------------------------------------------- helpers


def _out_dir(cfg: RunConfig) -> Path:
    p = Path(cfg.out_dir)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ValueError(f"{p}: cannot create output directory ({exc.strerror or exc})") from exc
    return p


def _input(cfg: RunConfig) -> Path:
    if not cfg.input:
        raise ValueError("no input given (positional argument or 'input' in the config file)")
    return Path(cfg.input)


def _load_signal(cfg: RunConfig) -> SampledSignal:
    sig = load_wav(_input(cfg))
    if cfg.sample_rate is not None and cfg.sample_rate != sig.sample_rate:
        log.info("resampling %s from %d Hz to %d Hz", sig.source_id, sig.sample_rate, cfg.sample_rate)
        sig = resample(sig, cfg.sample_rate)
    return sig


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def summary_schema() -> dict:
    return json.loads(resources.files("nasalztw").joinpath("schemas/summary.schema.json").read_text("utf-8"))


def validate_summary(doc: dict) -> None:
    try:
        jsonschema.validate(doc, summary_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise InvariantError(f"summary.json fails its schema at {where}: {exc.message}") from exc


def _spectrogram_products(out: Path, stem: str, spec, cfg: RunConfig, meta: dict) -> list[Path]:
    written = []
    fm = cfg.format_list
    if "csv" in fm:
        written.append(out / f"{stem}.csv")
        export.write_spectrogram_csv(written[-1], spec)
    if "bin" in fm:
        written.append(out / f"{stem}.bin")
        export.write_matrix(written[-1], spec)
    if "pgm" in fm:
        written.append(out / f"{stem}.pgm")
        meta["image"] = export.write_spectrogram_image(written[-1], spec, per_column=cfg.per_column)
    if "png" in fm and cfg.figures:
        from .plots import plot_spectrogram

        written.append(plot_spectrogram(out / f"{stem}.png", spec))
    written.append(out / f"{stem}.json")
    export.write_sidecar(written[-1], meta)
    return written


# ---------------------------------------------------------------- commands


def cmd_spectrogram(cfg: RunConfig) -> int:
    sig = _load_signal(cfg)
    out = _out_dir(cfg)
    zc = cfg.ztw_config()
    specs = [("hngd", hngd_spectrogram(sig, zc, dtype=np.float32))]
    if cfg.stft:
        specs.append(("stft", stft_spectrogram(sig, zc, dtype=np.float32)))
    for stem, spec in specs:
        meta = spec.axis_metadata()
        meta["source"] = sig.source_id or ""
        for p in _spectrogram_products(out, stem, spec, cfg, meta):
            log.info("wrote %s", p)
    return EXIT_OK


def cmd_gci(cfg: RunConfig) -> int:
    sig = _load_signal(cfg)
    out = _out_dir(cfg)
    ep = epochs(sig)
    export.write_epochs(out / "epochs.csv", ep)
    print(f"{sig.source_id}: {len(ep)} GCIs, mean pitch period "
          f"{ep.mean_pitch_s * 1000:.2f} ms" if np.isfinite(ep.mean_pitch_s) else f"{sig.source_id}: no voicing")
    return EXIT_OK


def cmd_analyze(cfg: RunConfig) -> int:
    sig = _load_signal(cfg)
    out = _out_dir(cfg)
    ann = None
    ann_path = Path(cfg.annotations) if cfg.annotations else find_annotation(_input(cfg))
    if ann_path is not None:
        ann = read_annotation(ann_path, sig.sample_rate)
        log.info("using annotations %s", ann_path)
    zc = cfg.ztw_config()
    result = analyze(sig, zc, cfg.band_config(), ann)
    export.write_epochs(out / "epochs.csv", result.epochs)
    export.write_drf_track(out / "drf_track.csv", result.track)
    export.write_cycles(out / "cycles.csv", result.stats)
    export.write_labels(out / "labels.csv", result.labels)
    summary = result.summary()
    validate_summary(summary)
    _write_json(out / "summary.json", summary)

    # overlay on a decimated spectrogram so long inputs stay cheap
    anchors = result.track.anchors
    step = max(1, int(np.ceil(anchors.size / IMAGE_MAX_WIDTH)))
    spec = hngd_spectrogram(sig, zc, dtype=np.float32, anchors=anchors[::step])
    meta = spec.axis_metadata()
    meta["image"] = export.write_overlay(out / "overlay.ppm", spec, result.track, per_column=cfg.per_column)
    meta["image"]["column_stride"] *= step
    export.write_sidecar(out / "overlay.json", meta)
    if cfg.figures:
        from .plots import plot_analysis, plot_spectrogram

        plot_analysis(out / "analysis.png", result)
        plot_spectrogram(out / "hngd.png", spec)
    nv = summary["nv_runs"]
    print(f"{sig.source_id}: {summary['n_cycles']} cycles, {nv} NV run{'s' if nv != 1 else ''}")
    return EXIT_OK


def cmd_corpus(cfg: RunConfig) -> int:
    root = _input(cfg)
    if not root.is_dir():
        raise ValueError(f"{root}: not a directory")
    out = _out_dir(cfg)
    items = process_corpus(root, cfg.ztw_config(), cfg.band_config(), cfg.pairs, cfg.a1p0,
                           cfg.sample_rate, cfg.jobs, cfg.n_cycles, cfg.a1_hz, cfg.p0_hz)
    measures = [m for it in items for m in it.measures]
    for it in items:
        for e in it.errors:
            log.warning(e)
    if not measures:
        log.warning("no boundary matched the pair filter %r in %s", cfg.pairs, root)
    export.write_boundaries(out / "boundaries.csv", measures)
    if cfg.a1p0:
        recs = [ScatterRecord(m.a1p0.a1_minus_p0_db, m.sigma_avg, m.label, m.source)
                for m in measures if m.a1p0 is not None]
        export.write_scatter(out / "scatter.csv", recs)
        ds = correlate_sigma(recs)
        if ds.separated is not None:
            log.info("A1-P0 gap %.2f dB, sigma_D gap %.1f Hz", ds.gap_a1p0_db, ds.gap_sigma_hz)
    if cfg.figures and measures:
        from .plots import plot_boundaries, plot_scatter

        plot_boundaries(out / "boundaries.png", measures)
        if cfg.a1p0:
            plot_scatter(out / "scatter.png", recs)
    print(f"{len(items)} utterances, {len(measures)} boundary measurements")
    return EXIT_OK


def cmd_synth(cfg: RunConfig) -> int:
    src = _input(cfg)
    if not src.is_file() and str(src) in fixture_names():
        script = load_fixture(str(src))
    else:
        script = load_script(src)
    out = _out_dir(cfg)
    fx = render_script(script)
    stem = script.name or src.stem
    write_wav(out / f"{stem}.wav", fx.signal)
    export.write_epochs(out / "gci.csv", fx.epochs)
    rows = []
    for a, b in fx.epochs.cycles():
        sec = fx.section_at(a / fx.signal.sample_rate)
        if sec is None or sec.kind != "vowel":
            continue
        rows.append([a / fx.signal.sample_rate, b / fx.signal.sample_rate, sec.label, sec.extent, 1.0, None, None, None])
    export.write_csv(out / "labels.csv", export.LABEL_HEADER, rows)
    export.write_csv(out / "sections.csv", ["start_s", "end_s", "kind", "label", "extent", "phone"],
                     [[s.start_s, s.end_s, s.kind, s.label, s.extent, s.phone] for s in fx.sections])
    save_annotations(out / f"{stem}.lab", fx.phone_annotations())
    print(f"{stem}: {fx.signal.duration_s:.3f} s, {len(fx.epochs)} GCIs")
    return EXIT_OK


COMMANDS = {
    "spectrogram": cmd_spectrogram,
    "gci": cmd_gci,
    "analyze": cmd_analyze,
    "corpus": cmd_corpus,
    "synth": cmd_synth,
}


# ---------------------------------------------------------------- parsing


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    common = argparse.ArgumentParser(add_help=False, argument_default=S)
    g = common.add_argument_group("global options")
    g.add_argument("--config", help="flat JSON config file; flags override its values")
    g.add_argument("--sample-rate", type=int, help="resample input to this rate (Hz)")
    g.add_argument("--l-ms", type=float, help="zero-time window length in ms (default 4)")
    g.add_argument("--dft-size", type=int, help="DFT size (default 1024 at 16 kHz, scaled with rate)")
    g.add_argument("--hop", type=int, help="anchor hop in samples (default 1)")
    g.add_argument("--bands", help="B_N and B_V as 'lo:hi,lo:hi' (default 300:400,450:850)")
    g.add_argument("--out-dir", help="output directory (default .)")
    g.add_argument("--no-figures", dest="figures", action="store_false", help="skip PNG figures")
    g.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    ap = argparse.ArgumentParser(prog="nasalztw", description="Vowel nasalization analysis with zero-time windowing.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrogram", parents=[common], help="HNGD (and STFT) spectrogram exports")
    p.add_argument("input", nargs="?", help="WAV file")
    p.add_argument("--stft", action="store_true", help="also export the STFT on identical axes")
    p.add_argument("--formats", help=f"comma list from {','.join(FORMATS)} (default csv,pgm,png)")
    p.add_argument("--per-column", action=argparse.BooleanOptionalAction,
                   help="normalize image columns individually (default on)")

    p = sub.add_parser("gci", parents=[common], help="glottal closure instants to epochs.csv")
    p.add_argument("input", nargs="?", help="WAV file")

    p = sub.add_parser("analyze", parents=[common], help="full pipeline on one utterance")
    p.add_argument("input", nargs="?", help="WAV file")
    p.add_argument("--annotations", help="phone annotation (.lab or TIMIT .phn); default: next to the WAV")
    p.add_argument("--per-column", action=argparse.BooleanOptionalAction, help="overlay column normalization")

    p = sub.add_parser("corpus", parents=[common], help="boundary statistics over a directory of WAV + .lab/.phn")
    p.add_argument("input", nargs="?", help="corpus directory")
    p.add_argument("--pairs", help="'left:right' phone patterns, comma separated, shell wildcards (default *:*)")
    p.add_argument("--a1p0", action="store_true", help="add A1-P0 and the scatter dataset")
    p.add_argument("--a1-hz", type=float, help="manual A1 frequency")
    p.add_argument("--p0-hz", type=float, help="manual P0 frequency")
    p.add_argument("--jobs", type=int, help="utterances processed concurrently (default 1)")
    p.add_argument("--n-cycles", type=int, help="vowel-side cycles averaged per boundary (default 5)")

    p = sub.add_parser("synth", parents=[common], help="render a fixture script to WAV + ground truth")
    p.add_argument("input", nargs="?", help="script JSON, or the name of a bundled fixture")
    return ap


def resolve_config(ns: argparse.Namespace) -> RunConfig:
    flags = vars(ns).copy()
    flags.pop("command", None)
    flags.pop("verbose", None)
    cfg = RunConfig.load(flags.pop("config")) if "config" in flags else RunConfig()
    return cfg.merged({k: v for k, v in flags.items() if v is not None})


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    ns = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(ns, "verbose", False) else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    logging.captureWarnings(True)
    try:
        cfg = resolve_config(ns)
        with warnings.catch_warnings():
            warnings.simplefilter("always", UserWarning)
            return COMMANDS[ns.command](cfg)
    except InvariantError as exc:
        print(f"nasalztw: internal error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ValueError, OSError, ScriptError) as exc:
        print(f"nasalztw: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - anything else is a bug
        log.debug("unexpected failure", exc_info=True)
        print(f"nasalztw: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
