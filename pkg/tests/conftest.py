import functools
import warnings

import pytest

from nasalztw.pipeline import analyze
from nasalztw.signal_io import save_annotations, write_wav
from nasalztw.synth import load_fixture, render_script

ACCEPTANCE: list[tuple[str, bool, str]] = []


@functools.lru_cache(maxsize=None)
def rendered(name):
    return render_script(load_fixture(name))


@functools.lru_cache(maxsize=None)
def analyzed(name, annotated=True):
    fx = rendered(name)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return analyze(fx.signal, annotations=fx.phone_annotations() if annotated else None)


@pytest.fixture
def record():
    """Log an acceptance verdict; all verdicts are printed at the end of the run."""

    def _record(cid, ok, detail):
        ACCEPTANCE.append((cid, bool(ok), detail))
        print(f"{'PASS' if ok else 'FAIL'} {cid}: {detail}")
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid, ok, detail in sorted(ACCEPTANCE, key=lambda r: int(r[0][1:])):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {cid}: {detail}")


CORPUS = ("nasalized_ae", "nasalized_aa", "nasalized_eh", "oral_ae", "oral_aa", "oral_eh")


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    """Six rendered utterances with .lab annotations next to each WAV."""
    d = tmp_path_factory.mktemp("corpus")
    for name in CORPUS:
        fx = rendered(name)
        write_wav(d / f"{name}.wav", fx.signal)
        save_annotations(d / f"{name}.lab", fx.phone_annotations())
    return d
