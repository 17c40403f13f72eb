import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nasalztw.signal_io import (
    AnnotationTrack,
    AudioError,
    PhoneAnnotation,
    SampledSignal,
    from_timit_phn,
    load_annotations,
    load_wav,
    normalize_peak,
    parse_annotations,
    resample,
    save_annotations,
    write_wav,
)


def test_signal_rejects_bad_input():
    with pytest.raises(ValueError):
        SampledSignal(np.zeros((2, 3)), 16000)
    with pytest.raises(ValueError):
        SampledSignal(np.array([0.0, np.nan]), 16000)
    with pytest.raises(ValueError):
        SampledSignal(np.zeros(4), 0)


def test_samples_are_read_only():
    s = SampledSignal(np.zeros(8), 8000)
    with pytest.raises(ValueError):
        s.samples[0] = 1.0


def test_shift_prepends_zeros():
    s = SampledSignal(np.arange(1.0, 4.0), 8000).shifted(2)
    assert s.samples.tolist() == [0.0, 0.0, 1.0, 2.0, 3.0]
    with pytest.raises(ValueError):
        s.shifted(-1)


def test_normalize_peak_and_silence():
    s = normalize_peak(SampledSignal(np.array([0.1, -0.5, 0.2]), 8000))
    assert s.peak() == pytest.approx(0.95)
    z = SampledSignal(np.zeros(5), 8000)
    assert normalize_peak(z) is z


def test_wav_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    x = 0.5 * rng.uniform(-1, 1, 800)
    p = tmp_path / "a.wav"
    write_wav(p, SampledSignal(x, 16000))
    back = load_wav(p, normalize=False)
    assert back.sample_rate == 16000 and back.source_id == "a.wav"
    assert np.max(np.abs(back.samples - x)) <= 1.0 / 32767
    write_wav(p, SampledSignal(x, 16000), subtype="FLOAT")
    assert np.allclose(load_wav(p, normalize=False).samples, x, atol=1e-7)


def test_load_wav_errors(tmp_path):
    with pytest.raises(AudioError, match="no such file"):
        load_wav(tmp_path / "missing.wav")
    bad = tmp_path / "bad.wav"
    bad.write_bytes(b"not a wav file at all")
    with pytest.raises(AudioError, match="cannot read"):
        load_wav(bad)


def test_stereo_keeps_first_channel(tmp_path):
    from scipy.io import wavfile

    data = np.stack([np.full(100, 1000, np.int16), np.full(100, -2000, np.int16)], axis=1)
    wavfile.write(tmp_path / "s.wav", 8000, data)
    with pytest.warns(UserWarning, match="channel 0"):
        s = load_wav(tmp_path / "s.wav", normalize=False)
    assert np.all(s.samples == 1000 / 32768)


def test_resample_keeps_tone():
    t = np.arange(16000) / 16000
    s = SampledSignal(np.sin(2 * np.pi * 440 * t), 16000)
    r = resample(s, 8000)
    assert r.sample_rate == 8000 and len(r) == 8000
    spec = np.abs(np.fft.rfft(r.samples))
    assert np.argmax(spec) == 440
    with pytest.raises(ValueError, match="alias"):
        resample(s, 1000)


def test_annotation_parse_and_save(tmp_path):
    track = parse_annotations(["# header", "0.0\t0.1\tae", "", "0.1\t0.25\tm"])
    assert [p.label for p in track] == ["ae", "m"]
    assert track.at(0.15).label == "m" and track.at(0.3) is None
    save_annotations(tmp_path / "x.lab", track)
    assert load_annotations(tmp_path / "x.lab").phones == track.phones


def test_annotation_errors():
    with pytest.raises(ValueError, match=":1: expected 3"):
        parse_annotations(["0.0 0.1 ae"])
    with pytest.raises(ValueError, match="overlap"):
        AnnotationTrack([PhoneAnnotation("a", 0.0, 0.2), PhoneAnnotation("b", 0.1, 0.3)])
    with pytest.raises(ValueError):
        PhoneAnnotation("a", 0.2, 0.2)
    with pytest.raises(ValueError, match="beyond signal duration"):
        parse_annotations(["0\t1.5\tae"]).check_duration(1.0)


def test_timit_phn_conversion():
    track = from_timit_phn(["0 3200 h#", "3200 4800 ae", "4800 6400 m", "junk"], 16000)
    assert [(p.label, p.start_s, p.end_s) for p in track] == [("h#", 0.0, 0.2), ("ae", 0.2, 0.3), ("m", 0.3, 0.4)]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=1, max_size=200), st.floats(0.01, 100))
def test_normalize_is_scale_free(xs, c):
    x = np.array(xs)
    if not np.any(x):
        return
    a = normalize_peak(SampledSignal(x, 8000)).samples
    b = normalize_peak(SampledSignal(x * c, 8000)).samples
    assert np.allclose(a, b, rtol=1e-12, atol=1e-15)
