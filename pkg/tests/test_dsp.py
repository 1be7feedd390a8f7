import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spoofcues import dsp
from spoofcues.dsp import FramingParams
from spoofcues.errors import ClipTooShort, TooFewBins

from conftest import clip, fabricated_spec, sine


def _onesided_energy(mags):
    w = np.full(mags.shape[1], 2.0)
    w[0] = w[-1] = 1.0
    return (mags ** 2) * w


def test_fft_sizes():
    for sr, n in ((44100, 2048), (16000, 512)):
        s = dsp.stft(clip(np.zeros(sr), sr))
        assert s.fft_size == n
        assert s.magnitudes.shape[1] == n // 2 + 1
        assert s.bin_freqs[0] == 0 and s.bin_freqs[-1] == sr / 2
        assert np.all(np.diff(s.bin_freqs) > 0)


@pytest.mark.parametrize("sr", [16000, 44100])
def test_dc_energy_in_bin0_mainlobe(sr):
    # zero padding to the next power of two widens the Hann main lobe beyond bin 0,
    # so the check is the peak location plus main-lobe energy concentration
    s = dsp.stft(clip(np.full(sr, 0.25), sr))
    assert np.all(np.argmax(s.magnitudes, axis=1) == 0)
    win = s.framing.lengths(sr)[0]
    e = _onesided_energy(s.magnitudes)
    lobe = s.bin_freqs < 2.0 * sr / win
    assert np.all(e[:, lobe].sum(1) / e.sum(1) > 0.999)


def test_tone_argmax_and_centroid():
    sr = 44100
    s = dsp.stft(clip(sine(1000, sr, 0.5), sr))
    bw = s.bin_width
    win = s.framing.lengths(sr)[0]
    peak = s.bin_freqs[np.argmax(s.magnitudes, axis=1)]
    assert np.all(np.abs(peak - 1000) <= bw)
    c = dsp.spectral_centroid(s).values
    assert np.all(np.abs(c - 1000) <= bw)
    # a windowed tone spreads over the Hann main lobe; bound by its half-width
    assert np.all(dsp.spectral_bandwidth(s).values <= 2.0 * sr / win)
    # zero padding widens the Hann main lobe to several bins, so the 85% energy
    # point sits just above the tone; it stays inside the main lobe
    assert np.all(np.abs(dsp.spectral_rolloff(s).values - 1000) <= 2.0 * sr / win)
    assert np.all(dsp.spectral_rolloff(s).values >= peak)


def test_parseval():
    rng = np.random.default_rng(0)
    sr = 16000
    x = rng.standard_normal(sr // 2)
    s = dsp.stft(clip(x, sr))
    win, hop = s.framing.lengths(sr)
    frames = dsp.frame_signal(x, win, hop) * dsp.hann(win)
    lhs = np.sum(frames ** 2, axis=1)
    rhs = _onesided_energy(s.magnitudes).sum(1) / s.fft_size
    assert np.max(np.abs(lhs - rhs) / lhs) < 1e-9


def test_frame_t_covers_hop_offset():
    sr = 16000
    x = np.zeros(2000)
    x[800] = 1.0  # sample 800 = 5 hops of 160
    r = dsp.rms_track(clip(x, sr)).values
    win, hop = FramingParams().lengths(sr)
    expected = [t for t in range(r.size) if t * hop <= 800 < t * hop + win]
    assert list(np.flatnonzero(r > 0)) == expected


def test_rms_examples():
    sr = 16000
    assert np.allclose(dsp.rms_track(clip(np.full(sr, 0.5), sr)).values, 0.5)
    assert np.all(dsp.rms_track(clip(np.zeros(sr), sr)).values == 0)
    r = dsp.rms_track(clip(sine(1000, sr, 1.0, amp=1.0), sr)).values
    assert np.all(np.abs(r - 1 / np.sqrt(2)) < 1e-3)


def test_too_short():
    with pytest.raises(ClipTooShort):
        dsp.stft(clip(np.zeros(100), 16000))
    with pytest.raises(ClipTooShort):
        dsp.rms_track(clip(np.zeros(100), 16000))


def test_fabricated_centroid_bandwidth():
    s = fabricated_spec([[0, 1, 2, 1]], [0, 100, 200, 300])
    assert dsp.spectral_centroid(s).values[0] == pytest.approx(200.0, abs=1e-12)
    assert dsp.spectral_bandwidth(s).values[0] == pytest.approx(np.sqrt(2e4 / 4), abs=1e-9)


def test_point_mass_bandwidth_zero():
    s = fabricated_spec([[0, 0, 3, 0]], [0, 100, 200, 300])
    assert dsp.spectral_bandwidth(s).values[0] == 0.0
    assert dsp.spectral_centroid(s).values[0] == 200.0
    assert dsp.spectral_rolloff(s).values[0] == 200.0


def test_two_tones():
    sr = 16000
    x = sine(500, sr, 0.5) + sine(1500, sr, 0.5)
    s = dsp.stft(clip(x, sr))
    c = dsp.spectral_centroid(s).values
    b = dsp.spectral_bandwidth(s).values
    assert np.all(np.abs(c - 1000) < s.bin_width)
    assert np.all(np.abs(b - 500) < s.bin_width)


@pytest.mark.parametrize("n", [9, 19, 100])
def test_rolloff_flat(n):
    freqs = np.arange(n + 1) * 10.0
    s = fabricated_spec([np.ones(n + 1)], freqs)
    k = int(np.ceil(0.85 * (n + 1))) - 1
    assert dsp.spectral_rolloff(s, 0.85).values[0] == freqs[k]


def test_rolloff_pct_bounds():
    s = fabricated_spec([[1, 1]], [0, 10])
    for pct in (1.0, 0.0):
        with pytest.raises(ValueError):
            dsp.spectral_rolloff(s, pct)


def test_contrast_hand_value():
    m = np.arange(1, 11, dtype=float)[None, :]
    assert dsp.band_contrast(m)[0] == pytest.approx(np.log(9.5 + 1e-10) - np.log(1.5 + 1e-10), abs=1e-12)
    assert dsp.band_contrast(m)[0] == pytest.approx(1.8458, abs=1e-4)


def test_contrast_flat_and_peaky():
    sr = 16000
    freqs = np.fft.rfftfreq(512, 1 / sr)
    s = fabricated_spec([np.ones(freqs.size)], freqs, sr)
    vals = [b.values[0] for b in dsp.spectral_contrast(s)]
    assert np.allclose(vals, 0.0, atol=1e-12)
    out = []
    for peak in (10.0, 100.0, 1000.0):
        m = np.full(freqs.size, 1e-10)
        for idx in dsp.octave_bands(s):
            m[idx[len(idx) // 2]] = peak
        out.append([b.values[0] for b in dsp.spectral_contrast(fabricated_spec([m], freqs, sr))])
    out = np.array(out)
    assert np.all(out > 5) and np.all(np.diff(out, axis=0) > 0)


def test_contrast_too_few_bins():
    s = fabricated_spec([[1.0] * 5], [0, 50, 100, 150, 200], 400)
    with pytest.raises(TooFewBins):
        dsp.spectral_contrast(s)


def test_silent_frames_missing():
    sr = 16000
    x = np.concatenate([np.zeros(4000), sine(700, sr, 0.5)])
    s = dsp.stft(clip(x, sr))
    c = dsp.spectral_centroid(s).values
    assert np.isnan(c[0]) and np.isfinite(c[-1])
    for series in (dsp.spectral_bandwidth(s), dsp.spectral_rolloff(s), dsp.mean_contrast(dsp.spectral_contrast(s))):
        assert len(series) == s.n_frames and np.isnan(series.values[0])


@settings(max_examples=25, deadline=None)
@given(st.floats(0.01, 100.0), st.integers(0, 2 ** 31))
def test_descriptor_ranges_and_gain_invariance(k, seed):
    rng = np.random.default_rng(seed)
    sr = 16000
    x = rng.standard_normal(4000) * np.linspace(0.1, 1, 4000)
    a, b = dsp.stft(clip(x, sr)), dsp.stft(clip(k * x, sr))
    nyq = sr / 2
    for f in (dsp.spectral_centroid, dsp.spectral_bandwidth, dsp.spectral_rolloff):
        va, vb = f(a).values, f(b).values
        assert np.all((va >= 0) & (va <= nyq))
        assert np.allclose(va, vb, rtol=1e-9, atol=1e-9)
    ca = dsp.mean_contrast(dsp.spectral_contrast(a)).values
    cb = dsp.mean_contrast(dsp.spectral_contrast(b)).values
    assert np.allclose(ca, cb, rtol=1e-6, atol=1e-6)
    ra, rb = dsp.rms_track(clip(x, sr)).values, dsp.rms_track(clip(k * x, sr)).values
    assert np.allclose(rb, k * ra, rtol=1e-12)
