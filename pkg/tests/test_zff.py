import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import rendered
from nasalztw.signal_io import SampledSignal
from nasalztw.zff import (
    EpochTrack,
    NoVoicingError,
    active_span,
    bootstrap_period,
    check_window,
    epochs,
    gci_scores,
    mean_pitch_window,
    trend_window,
    zff_filter,
)


@pytest.mark.parametrize("f0", [100, 150, 220])
def test_clean_fixture_gcis(f0):
    fx = rendered(f"clean_f0_{f0}")
    ep = epochs(fx.signal)
    p, r = gci_scores(fx.epochs.gci_samples, ep.gci_samples, 4)
    assert p == 1.0 and r >= 0.98
    assert ep.mean_pitch_s == pytest.approx(1.0 / f0, rel=0.02)


def test_noise_is_unvoiced():
    x = np.random.default_rng(5).standard_normal(8000)
    ep = epochs(SampledSignal(x, 16000))
    assert len(ep) == 0 and not ep.voicing.any()
    with pytest.raises(NoVoicingError):
        mean_pitch_window(SampledSignal(x, 16000))


def test_silence_and_short_input():
    assert len(epochs(SampledSignal(np.zeros(4000), 16000))) == 0
    assert len(epochs(SampledSignal(np.ones(10), 16000))) == 0
    with pytest.raises(ValueError, match="too short"):
        zff_filter(SampledSignal(np.ones(10), 16000))


def test_voicing_mix_keeps_gaps_unvoiced():
    fx = rendered("voicing_mix")
    ep = epochs(fx.signal)
    fs = fx.signal.sample_rate
    noise = slice(0, int(0.15 * fs))
    silence = slice(int(0.37 * fs), int(0.44 * fs))
    assert not ep.voicing[noise].any() and not ep.voicing[silence].any()
    p, r = gci_scores(fx.epochs.gci_samples, ep.gci_samples, 4)
    assert p >= 0.95 and r >= 0.9


def test_bootstrap_period_and_trend_window():
    fx = rendered("clean_f0_150")
    assert bootstrap_period(fx.signal) == pytest.approx(1 / 150, rel=0.03)
    assert trend_window(0.01, 16000) == 241
    assert trend_window(0.01, 16000) % 2 == 1


def test_check_window_warns():
    ep = epochs(rendered("clean_f0_220").signal)
    with pytest.warns(UserWarning, match="exceeds the mean pitch period"):
        assert not check_window(5.0, ep)
    assert check_window(4.0, ep)


def test_cycles_respect_voicing():
    v = np.ones(1000, bool)
    v[450:500] = False
    tr = EpochTrack(np.array([100, 200, 300, 400, 520, 620]), v, 0.00625, 16000)
    assert tr.cycles() == [(100, 200), (200, 300), (300, 400), (520, 620)]
    with pytest.raises(ValueError):
        EpochTrack(np.array([5, 5]), v, 0.01, 16000)


def test_gci_scores():
    assert gci_scores([10, 20, 30], [11, 29], 2) == (1.0, pytest.approx(2 / 3))
    # one estimate can match one reference only
    assert gci_scores([10, 12], [11], 2) == (1.0, 0.5)
    assert gci_scores([], [], 2) == (1.0, 1.0)
    assert gci_scores([10], [], 2) == (1.0, 0.0)


def test_active_span():
    assert active_span(np.array([0.0, 0.0, 1.0, 0.0, 2.0, 0.0])) == (2, 5)
    assert active_span(np.zeros(3)) == (0, 0)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 400))
def test_gcis_shift_with_padding(k):
    sig = rendered("clean_f0_150").signal
    base = epochs(sig)
    moved = epochs(sig.shifted(k))
    assert np.array_equal(moved.gci_samples, base.gci_samples + k)
    assert np.array_equal(moved.voicing[k:], base.voicing)


@settings(max_examples=10, deadline=None)
@given(st.floats(1e-3, 1e3))
def test_gcis_scale_free(c):
    sig = rendered("clean_f0_100").signal
    assert np.array_equal(epochs(sig.scaled(c)).gci_samples, epochs(sig).gci_samples)
