import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spoofcues.errors import ClipTooShort, NoVoicedContent
from spoofcues.pitch import YIN_FRAMING, PitchTrack, mark_cycles, segment_voicing, yin_f0

from conftest import clip, sine

SR = 16000


def bump_train(marks_s, sr=SR, n=None, amps=None, width=12):
    """Smooth positive pulses (Hann bumps) centred on the given times."""
    n = n or int(round((marks_s[-1] + 0.02) * sr))
    x = np.zeros(n)
    w = np.hanning(2 * width + 1)
    for i, t in enumerate(marks_s):
        c = int(round(t * sr))
        a = 1.0 if amps is None else amps[i]
        x[c - width : c + width + 1] += a * w
    return x


def track_from_flags(flags, f0=100.0, hop_s=0.01, sr=SR):
    v = np.array(flags, dtype=bool)
    return PitchTrack(np.where(v, f0, np.nan), np.where(v, 0.05, 0.6), v, YIN_FRAMING, sr,
                      int(round(hop_s * sr)), 65.0, 500.0, 0.15)


def test_sine_220():
    tr = yin_f0(clip(sine(220, SR, 1.0)))
    inner = tr.f0_hz[5:-5]
    assert tr.voiced[5:-5].all()
    assert np.all(np.abs(inner - 220) <= 1.0)


def test_white_noise_unvoiced():
    x = np.random.default_rng(0).standard_normal(SR)
    tr = yin_f0(clip(x))
    assert np.mean(~tr.voiced) >= 0.9


def _acf_oracle(x, sr, fmin, fmax):
    lags = np.arange(int(sr / fmax), int(sr / fmin) + 1)
    r = np.array([np.dot(x[:-l], x[l:]) / (x.size - l) for l in lags])
    return sr / lags[np.argmax(r)]


def test_sawtooth_110_not_harmonic():
    t = np.arange(SR) / SR
    x = 0.5 * (2 * ((110 * t) % 1.0) - 1)
    tr = yin_f0(clip(x))
    oracle = _acf_oracle(x, SR, 65, 500)
    inner = tr.f0_hz[5:-5]
    assert abs(oracle - 110) <= 1.0
    assert np.all(np.abs(inner - oracle) <= 1.0)


def test_yin_invariants_and_determinism(rng):
    x = sine(150, SR, 0.6) + 0.05 * rng.standard_normal(int(0.6 * SR))
    a = yin_f0(clip(x))
    b = yin_f0(clip(x))
    assert np.array_equal(a.f0_hz, b.f0_hz, equal_nan=True)
    assert np.array_equal(~np.isnan(a.f0_hz), a.voiced)
    f = a.f0_hz[a.voiced]
    assert np.all((f >= 65) & (f <= 500))
    assert np.all(a.aperiodicity[a.voiced] < 0.15)
    c = yin_f0(clip(3.0 * x))
    assert np.array_equal(a.voiced, c.voiced)
    assert np.allclose(a.f0_hz, c.f0_hz, equal_nan=True, rtol=1e-9)


def test_yin_too_short():
    with pytest.raises(ClipTooShort):
        yin_f0(clip(np.zeros(100)))


def test_segments_all_voiced_and_unvoiced():
    s = segment_voicing(track_from_flags([1] * 50))
    assert len(s.segments) == 1 and s.total_unvoiced_s == pytest.approx(0.0, abs=1e-12)
    s = segment_voicing(track_from_flags([0] * 50))
    assert s.segments == () and s.total_voiced_s == 0.0


def test_segments_hand_runlength():
    s = segment_voicing(track_from_flags([1, 1, 1, 0, 0, 1, 1, 1, 1]), 30.0)
    durs = [b - a for a, b in s.segments]
    assert durs == pytest.approx([0.03, 0.04], abs=1e-12)
    assert s.segments[0][1] <= s.segments[1][0]


def test_short_runs_discarded():
    s = segment_voicing(track_from_flags([1, 1, 0, 0, 1, 1, 1, 1, 0]), 30.0)
    assert len(s.segments) == 1 and s.total_voiced_s == pytest.approx(0.04)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.booleans(), min_size=1, max_size=80))
def test_segmentation_conserves_time(flags):
    tr = track_from_flags(flags)
    s = segment_voicing(tr)
    assert s.total_voiced_s + s.total_unvoiced_s == pytest.approx(tr.n_frames * tr.hop_s, abs=tr.hop_s)
    for (a, b), (c, d) in zip(s.segments, s.segments[1:]):
        assert b <= c
    assert all(b - a >= 0.03 - 1e-12 for a, b in s.segments)


def test_periodic_train_periods_exact():
    marks = 0.02 + 0.01 * np.arange(60)
    x = bump_train(marks)
    c = clip(x)
    m = mark_cycles(c, yin_f0(c))
    assert len(m) > 20
    assert np.allclose(m.periods_s, 0.010, atol=1e-6)
    assert np.allclose(m.peak_amps, m.peak_amps[0], rtol=1e-6)


def test_am_sine_separates_jitter_from_shimmer():
    t = np.arange(SR) / SR
    x = 0.5 * (1 + 0.1 * np.sin(2 * np.pi * 2 * t)) * np.sin(2 * np.pi * 200 * t)
    c = clip(x)
    m = mark_cycles(c, yin_f0(c))
    assert np.allclose(m.periods_s, 0.005, atol=2e-6)
    rel = m.peak_amps / m.peak_amps.mean()
    assert 0.88 < rel.min() < 0.92 and 1.08 < rel.max() < 1.12


def test_alternating_periods_recovered():
    periods = np.tile([0.010, 0.011], 30)
    marks = 0.02 + np.concatenate([[0], np.cumsum(periods)])
    x = bump_train(marks)
    # the local F0 guide is the mean rate; each cycle is then located on the waveform
    n_frames = x.size // 160 + 1
    t = np.arange(n_frames) * 0.01
    v = (t >= marks[0]) & (t <= marks[-1])
    tr = PitchTrack(np.where(v, 1 / 0.0105, np.nan), np.where(v, 0.05, 0.6), v,
                    YIN_FRAMING, SR, 160, 65.0, 500.0, 0.15)
    m = mark_cycles(clip(x), tr)
    p = m.periods_s
    assert len(p) >= 40
    assert np.allclose(np.abs(np.diff(p)), 0.001, atol=2e-5)
    assert set(np.round(p, 4)) == {0.010, 0.011}


def test_cycle_invariants_and_gain():
    marks = 0.02 + 0.008 * np.arange(80)
    x = bump_train(marks, amps=1 + 0.1 * np.sin(np.arange(80)))
    c = clip(x)
    m = mark_cycles(c, yin_f0(c))
    assert m.periods_s.size == m.peak_amps.size
    assert np.all(m.periods_s >= 1 / 500 - 1e-12) and np.all(m.periods_s <= 1 / 65 + 1e-12)
    assert np.all(m.peak_amps > 0)
    c2 = clip(2.5 * x)
    m2 = mark_cycles(c2, yin_f0(c2))
    assert np.allclose(m2.periods_s, m.periods_s, rtol=1e-9)
    assert np.allclose(m2.peak_amps, 2.5 * m.peak_amps, rtol=1e-9)


def test_no_voiced_content():
    x = np.random.default_rng(1).standard_normal(SR)
    c = clip(x)
    with pytest.raises(NoVoicedContent):
        mark_cycles(c, track_from_flags([0] * 100))
