import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nasalztw.signal_io import SampledSignal
from nasalztw.ztw import (
    ZtwConfig,
    anchor_range,
    hilbert_envelope,
    hngd_from_segments,
    hngd_slice,
    hngd_spectrogram,
    iter_hngd_blocks,
    make_w1,
    make_w2,
    ngd,
    rfft_freqs,
    second_difference,
    ztw_window,
)

finite = st.floats(-1.0, 1.0, allow_nan=False, allow_infinity=False)


def test_w1_hand_value():
    # 1 / (4 sin^2(pi/8)) = 1 + 1/sqrt(2)
    assert make_w1(4)[1] == pytest.approx(1.70711, abs=1e-5)
    assert make_w1(4)[0] == 0.0


def test_window_shapes():
    w1, w2 = make_w1(64), make_w2(64)
    assert np.all(np.diff(w1[1:]) < 0)  # heavily decaying after n = 0
    assert w2[0] == 4.0 and np.all(np.diff(w2) < 0)
    w = ztw_window(64)
    assert np.array_equal(w, w1 ** 2 * w2)
    with pytest.raises(ValueError):
        w[0] = 1.0
    with pytest.raises(ValueError):
        make_w1(1)


def test_config_validation_and_dft_len():
    assert ZtwConfig().dft_len(16000) == 1024
    assert ZtwConfig().dft_len(8000) == 512
    assert ZtwConfig().window_len(16000) == 64
    assert ZtwConfig(dft_size=256).dft_len(16000) == 256
    with pytest.raises(ValueError, match="twice the window"):
        ZtwConfig(dft_size=64).dft_len(16000)
    for bad in ({"window_len_ms": 0.5}, {"hop_samples": 0}, {"dft_size": 1000}, {"diff_passes": 0}):
        with pytest.raises(ValueError):
            ZtwConfig(**bad)


def _ngd_direct(x, K):
    n = np.arange(x.size)
    k = np.arange(K // 2 + 1)[:, None]
    E = np.exp(-2j * np.pi * k * n / K)
    X, Y = E @ x, E @ (n * x)
    return X.real * Y.real + X.imag * Y.imag


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.integers(2, 64), elements=finite))
def test_ngd_matches_dtft(x):
    ref = _ngd_direct(x, 128)
    scale = max(np.max(np.abs(ref)), 1e-300)
    assert np.max(np.abs(ngd(x, 128) - ref)) <= 1e-10 * scale + 1e-300


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.integers(4, 64), elements=finite), st.integers(1, 2))
def test_lag_domain_hngd_equals_spectral_chain(x, passes):
    K = 256
    d = ngd(x, K)
    # scale by the NGD itself: a constant NGD (single impulse) differences to exactly zero
    scale = max(np.abs(d).max(), 1e-300)
    for _ in range(passes):
        d = second_difference(d, K)
    ref = hilbert_envelope(d, K)
    got = hngd_from_segments(x[None, :], K, passes)[0]
    assert np.allclose(got, ref, rtol=0, atol=1e-9 * scale)


def test_second_difference_of_quadratic_is_constant():
    K = 64
    k = np.arange(K // 2 + 1, dtype=float)
    d = second_difference(-(k - 16.0) ** 2, K)
    assert np.allclose(d[1:-1], 2.0)


def test_hilbert_envelope_of_cosine_is_flat():
    K = 128
    k = np.arange(K // 2 + 1)
    env = hilbert_envelope(np.cos(2 * np.pi * 5 * k / K), K)
    assert np.allclose(env, 1.0)


def test_hngd_peak_at_resonance():
    fs = 16000
    n = np.arange(400)
    x = np.exp(-np.pi * 80 * n / fs) * np.sin(2 * np.pi * 700 * n / fs)
    sl = hngd_slice(SampledSignal(x, fs), 0)
    f = sl.freqs[sl.peak_bin(150, 1500)]
    assert abs(f - 700) <= 2 * (fs / 1024)


def test_blocks_do_not_change_results():
    rng = np.random.default_rng(1)
    s = SampledSignal(rng.standard_normal(3000), 16000)
    cfg = ZtwConfig()
    a = np.concatenate([m for _, m in iter_hngd_blocks(s, cfg, block=97)])
    b = np.concatenate([m for _, m in iter_hngd_blocks(s, cfg, block=4096)])
    assert np.array_equal(a, b)


def test_spectrogram_axes():
    s = SampledSignal(np.random.default_rng(3).standard_normal(1000), 16000)
    spec = hngd_spectrogram(s, ZtwConfig(hop_samples=10))
    assert spec.anchors.tolist() == list(range(0, 1000 - 64 + 1, 10))
    assert spec.mags.shape == (len(spec.anchors), 513)
    assert np.array_equal(spec.freqs, rfft_freqs(1024, 16000))
    meta = spec.axis_metadata()
    assert meta["bin_hz"] == 15.625 and meta["n_slices"] == len(spec) and meta["kind"] == "hngd"
    sub = hngd_spectrogram(s, anchors=np.array([5, 50]))
    assert np.array_equal(sub.mags[1], hngd_slice(s, 50).mags)


def test_anchor_range_and_short_signal():
    assert anchor_range(10, 4, 3).tolist() == [0, 3, 6]
    with pytest.raises(ValueError, match="shorter than the analysis window"):
        hngd_spectrogram(SampledSignal(np.ones(10), 16000))


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, 64, elements=finite), st.sampled_from([0.25, 0.5, 2.0, 8.0]))
def test_hngd_is_quadratic_in_amplitude(x, c):
    a = hngd_from_segments(x[None] * ztw_window(64), 1024)
    b = hngd_from_segments(c * x[None] * ztw_window(64), 1024)
    # power-of-two scaling is exact in floating point
    assert np.array_equal(b, c * c * a)
