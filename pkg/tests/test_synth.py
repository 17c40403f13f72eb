import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.signal import freqz, lfilter

from nasalztw.synth import (
    Resonance,
    ScriptError,
    VowelSpec,
    antiresonator,
    fixture_names,
    impulse_times,
    load_fixture,
    load_script,
    open_phase_gain,
    render_script,
    render_voiced,
    resonator,
    script_from_dict,
    script_to_dict,
    synth_vowel,
    vowel_script,
)

FS = 16000
AE = VowelSpec(120.0, formants=((730, 90), (1090, 110), (2440, 170)), nasal_pole=(350, 60, 3), coupling=0.5)


@given(st.floats(100, 6000), st.floats(20, 400))
def test_resonator_unity_dc(f, bw):
    b, a = resonator(f, bw, FS)
    _, h = freqz(b, a, worN=[0.0])
    assert abs(h[0]) == pytest.approx(1.0, rel=1e-9)


@given(st.floats(100, 6000), st.floats(20, 400))
@settings(max_examples=30)
def test_antiresonator_inverts_resonator(f, bw):
    x = np.random.default_rng(0).standard_normal(256)
    y = lfilter(*antiresonator(f, bw, FS), lfilter(*resonator(f, bw, FS), x))
    assert np.allclose(y, x, atol=1e-9)


def test_resonator_peak_near_centre():
    w, h = freqz(*resonator(800, 50, FS), worN=4096, fs=FS)
    assert abs(w[np.argmax(np.abs(h))] - 800) < 10


def test_resonator_rejects_bad_bandwidth():
    with pytest.raises(ValueError):
        resonator(500, 0, FS)


def test_open_phase_gain_ranges():
    gcis = np.arange(0, 1600, 133)
    target = np.full(1600, 0.25)
    g = open_phase_gain(gcis, 1600, 0.6, target, FS)
    assert g.min() == pytest.approx(0.25) and g.max() == 1.0
    # closed phase right after each closure keeps the full oral gain
    assert np.all(g[gcis[:-1] + 5] == 1.0)


def test_render_voiced_without_coupling_is_oral():
    spec = VowelSpec(120.0, formants=((730, 90),), nasal_pole=(350, 60, 3), coupling=0.0)
    gcis = np.arange(0, 3200, 133)
    y = render_voiced(spec, FS, 3200, gcis)
    e = np.zeros(3200)
    e[gcis] = -1.0
    assert np.allclose(y, lfilter(*resonator(730, 90, FS), e))


def test_render_voiced_rejects_above_nyquist():
    with pytest.raises(ValueError, match="Nyquist"):
        render_voiced(VowelSpec(120.0, formants=((9000, 90),)), FS, 100, np.array([0]))


def test_impulse_times():
    t = impulse_times(100.0, 0.0, 0.05)
    assert np.allclose(t, [0.0, 0.01, 0.02, 0.03, 0.04])


def test_synth_vowel_gcis_are_impulses():
    sig, truth = synth_vowel(AE)
    assert sig.sample_rate == FS and len(sig) == int(0.3 * FS)
    assert np.all(np.abs(np.diff(truth.gci_samples) - FS / 120) <= 1)
    assert truth.voicing[truth.gci_samples].all()


def test_vowel_spec_validation():
    with pytest.raises(ValueError):
        VowelSpec(30.0)
    with pytest.raises(ValueError):
        VowelSpec(120.0, coupling=1.5)
    with pytest.raises(ValueError):
        Resonance(500, -1)


def _doc():
    return {"sections": [{"kind": "vowel", "duration_s": 0.2, "f0_hz": 120, "formants": [[730, 90]]}]}


def test_schema_error_names_field():
    doc = _doc()
    doc["sections"][0]["duration_s"] = 0
    with pytest.raises(ScriptError, match=r"sections\[0\]\.duration_s"):
        script_from_dict(doc)


def test_schema_rejects_unknown_field():
    doc = _doc()
    doc["sections"][0]["colour"] = "red"
    with pytest.raises(ScriptError, match=r"sections\[0\]"):
        script_from_dict(doc)


def test_schema_rejects_bad_label():
    doc = _doc()
    doc["sections"][0]["label"] = "XX"
    with pytest.raises(ScriptError, match="label"):
        script_from_dict(doc)


def test_malformed_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"sections": [\n  {"kind": }\n]}')
    with pytest.raises(ScriptError, match="line 2 column"):
        load_script(p)


def test_load_script_uses_stem_name(tmp_path):
    p = tmp_path / "mine.json"
    p.write_text(json.dumps(_doc()))
    assert load_script(p).name == "mine"


@pytest.mark.parametrize("name", fixture_names())
def test_fixture_round_trip(name):
    s = load_fixture(name)
    assert script_from_dict(json.loads(json.dumps(script_to_dict(s)))) == s


def test_unknown_fixture():
    with pytest.raises(KeyError, match="available"):
        load_fixture("no_such_fixture")


def test_render_deterministic_and_normalized():
    s = load_fixture("voicing_mix")
    a, b = render_script(s), render_script(s)
    assert np.array_equal(a.signal.samples, b.signal.samples)
    assert np.max(np.abs(a.signal.samples)) == pytest.approx(0.95)


def test_render_truth_sections_tile_duration():
    r = render_script(load_fixture("three_section"))
    assert r.sections[0].start_s == 0.0
    assert all(x.end_s == pytest.approx(y.start_s) for x, y in zip(r.sections, r.sections[1:]))
    assert r.sections[-1].end_s == pytest.approx(r.signal.duration_s)


def test_adjacent_vowels_share_excitation():
    oral = VowelSpec(120.0, formants=((730, 90),))
    nas = VowelSpec(120.0, formants=((730, 90),), nasal_pole=(350, 60, 3), coupling=0.6)
    r = render_script(vowel_script([("OV", oral, 0.2), ("NV", nas, 0.2)]))
    d = np.diff(r.epochs.gci_samples)
    assert np.all(np.abs(d - FS / 120) <= 1)


def test_phone_annotations_merge_repeated_phones():
    oral = VowelSpec(120.0, formants=((730, 90),))
    nas = VowelSpec(120.0, formants=((730, 90),), nasal_pole=(350, 60, 3), coupling=0.6)
    r = render_script(vowel_script([("OV", oral, 0.2), ("NV", nas, 0.2), ("UNVOICED", None, 0.1)]))
    ann = r.phone_annotations()
    assert [p.label for p in ann] == ["ae", "h#"]
    assert ann[0].end_s == pytest.approx(0.4)


def test_vowel_script_full_extent():
    s = vowel_script([("NV-full", AE, 0.2)])
    assert s.sections[0].label == "NV" and s.sections[0].extent == "full"
    assert s.sections[0].vowel.duration_s == 0.2
