import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import signal

from spoofcues import features as F
from spoofcues.dsp import FrameSeries, FramingParams
from spoofcues.errors import AllSilent, EmptySeries, TooFewCycles
from spoofcues.pitch import YIN_FRAMING, CycleMarks, PitchTrack, VoicedSegments
from spoofcues.synthetic import SynthConfig, synth_clip

from conftest import clip

RMS_SCALED = {"rms_mean", "rms_std", "rms_range", "rms_iqr"}


def test_schema():
    assert len(F.FEATURE_NAMES) == 32 and len(set(F.FEATURE_NAMES)) == 32
    assert F.FEATURE_NAMES[0] == "f0_mean_v" and F.FEATURE_NAMES[-1] == "spec_contrast_iqr"


def test_summarize_examples():
    s = F.summarize([5, 5, 5, 5])
    assert (s["mean"], s["std"], s["range"], s["cv"]) == (5, 0, 0, 0)
    s = F.summarize([1, 2, 3, 4])
    assert s["mean"] == 2.5 and s["range"] == 3
    assert s["iqr"] == pytest.approx(1.5) and s["p10"] == pytest.approx(1.3)
    with pytest.raises(EmptySeries):
        F.summarize([np.nan, np.nan])


def test_summarize_cv_missing_for_zero_mean():
    assert np.isnan(F.summarize([-1.0, 1.0])["cv"])


@settings(max_examples=80, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=60))
def test_summary_invariants(v):
    s = F.summarize(v)
    assert s["std"] >= 0
    assert s["range"] >= s["iqr"] - 1e-9 * max(1.0, abs(s["range"])) and s["iqr"] >= -1e-9


def _track(f0, hop_s=0.01, sr=16000):
    f0 = np.asarray(f0, dtype=float)
    v = ~np.isnan(f0)
    return PitchTrack(f0, np.where(v, 0.05, 0.6), v, YIN_FRAMING, sr, int(hop_s * sr), 65.0, 500.0, 0.15)


def _segs_from_runs(runs, n, hop_s=0.01):
    segs = tuple((a * hop_s, (b + 1) * hop_s) for a, b in runs)
    voiced = sum(b - a for a, b in segs)
    return VoicedSegments(segs, tuple(runs), voiced, n * hop_s - voiced)


def test_prosodic_constant():
    n = 200
    p = F.prosodic_features(_track(np.full(n, 200.0)), _segs_from_runs([(0, n - 1)], n), 2.0)
    assert p["f0_mean_v"] == 200 and p["f0_std_v"] == 0
    assert p["voice_pct"] == pytest.approx(1.0) and p["pause_ratio"] == pytest.approx(0.0, abs=1e-12)
    assert p["f0_slope_hz_per_s"] == pytest.approx(0.0, abs=1e-9)


def test_prosodic_slope():
    n = 200
    t = np.arange(n) * 0.01
    p = F.prosodic_features(_track(100 + 50 * t), _segs_from_runs([(0, n - 1)], n), 2.0)
    assert p["f0_slope_hz_per_s"] == pytest.approx(50.0, abs=0.5)


def test_prosodic_three_segments():
    n = 200
    runs = [(10, 49), (80, 119), (150, 189)]  # 3 x 400 ms
    f0 = np.full(n, np.nan)
    for a, b in runs:
        f0[a : b + 1] = 150.0
    p = F.prosodic_features(_track(f0), _segs_from_runs(runs, n), 2.0)
    assert p["voice_pct"] == pytest.approx(0.6)
    assert p["n_voiced_seg_per_s"] == pytest.approx(1.5)
    assert p["mean_voiced_seg_ms"] == pytest.approx(400.0)
    assert p["pause_ratio"] == pytest.approx(0.8 / 1.2)


def test_prosodic_unvoiced_all_missing():
    n = 50
    p = F.prosodic_features(_track(np.full(n, np.nan)), _segs_from_runs([], n), 0.5)
    assert np.isnan(p["f0_mean_v"]) and np.isnan(p["pause_ratio"]) and np.isnan(p["f0_slope_hz_per_s"])


def _marks(periods, amps):
    return CycleMarks(np.asarray(periods, float), np.asarray(amps, float), np.zeros(len(periods), int))


def test_voice_quality_examples():
    assert F.voice_quality_features(_marks([0.01] * 8, [1.0] * 8)) == (0.0, 0.0)
    j, s = F.voice_quality_features(_marks([0.010, 0.011] * 6, [1.0] * 12))
    assert j == pytest.approx(1 / 10.5) and s == 0
    j, s = F.voice_quality_features(_marks([0.01] * 12, [1.0, 0.8] * 6))
    assert j == 0 and s == pytest.approx(0.2 / 0.9)


def test_voice_quality_pairs_within_segment_only():
    m = CycleMarks(np.array([0.01, 0.01, 0.02, 0.02]), np.ones(4), np.array([0, 0, 1, 1]))
    assert F.voice_quality_features(m)[0] == 0.0
    with pytest.raises(TooFewCycles):
        F.voice_quality_features(CycleMarks(np.array([0.01, 0.02]), np.ones(2), np.array([0, 1])))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(0.002, 0.015), st.floats(0.05, 1.0)), min_size=2, max_size=40))
def test_voice_quality_time_reversal(pairs):
    p, a = map(np.array, zip(*pairs))
    fwd = F.voice_quality_features(_marks(p, a))
    rev = F.voice_quality_features(_marks(p[::-1], a[::-1]))
    assert fwd == pytest.approx(rev, rel=1e-12, abs=1e-15)


def _fs(v):
    return FrameSeries(np.asarray(v, float), "x", FramingParams())


def test_spectral_features_examples():
    const = {k: _fs([3.0] * 5) for k in ("centroid", "bandwidth", "rolloff", "contrast")}
    out = F.spectral_features(const, _fs([0.1, 0.3]))
    assert out["spec_centroid_mean"] == 3.0 and out["spec_centroid_std"] == 0 and out["spec_rolloff_iqr"] == 0
    assert out["rms_mean"] == pytest.approx(0.2) and out["rms_range"] == pytest.approx(0.2)
    assert out["rms_cv"] == pytest.approx(0.5)
    silent = {k: _fs([np.nan] * 5) for k in const}
    out = F.spectral_features(silent, _fs([0.0] * 5))
    assert np.isnan(out["spec_centroid_mean"])
    fv = F.assemble(out)
    assert fv.values.size == 32


def test_infinities_become_missing():
    v = np.zeros(32)
    v[3] = np.inf
    assert np.isnan(F.FeatureVector(v).values[3])


def _real_clip(seed=7):
    return synth_clip(np.random.default_rng(seed), fake=False, cfg=SynthConfig())


def test_real_like_clip_directional():
    x = _real_clip()
    lp = signal.sosfilt(signal.butter(6, 3000, fs=16000, output="sos"), x)
    a = F.extract_clip_features(clip(x))
    b = F.extract_clip_features(clip(lp))
    assert a["f0_std_v"] > 0
    assert a["spec_centroid_mean"] > b["spec_centroid_mean"]


def test_silence_rejected():
    with pytest.raises(AllSilent):
        F.extract_clip_features(clip(np.zeros(32000)))


def test_extraction_deterministic():
    c = clip(_real_clip(3))
    a = F.extract_clip_features(c)
    b = F.extract_clip_features(c)
    assert np.array_equal(a.values, b.values, equal_nan=True)


def test_gain_invariance():
    x = _real_clip(11)
    a = F.extract_clip_features(clip(x)).as_dict()
    b = F.extract_clip_features(clip(2 * x)).as_dict()
    for name in F.FEATURE_NAMES:
        if name in RMS_SCALED:
            assert b[name] == pytest.approx(2 * a[name], rel=1e-9)
        else:
            assert b[name] == pytest.approx(a[name], rel=1e-9, abs=1e-9), name


def test_feature_csv_roundtrip():
    from spoofcues.audio import ClipLabel, SplitTag
    v = np.arange(32, dtype=float)
    v[5] = np.nan
    fv = F.FeatureVector(v, "a/b.wav", ClipLabel.FAKE, SplitTag.TEST)
    text = F.write_feature_csv([fv], header_comment="config_hash=abc stage=extract")
    assert text.splitlines()[1] == "clip,label,split," + ",".join(F.FEATURE_NAMES)
    back, meta = F.read_feature_csv(text)
    assert meta["config_hash"] == "abc"
    assert np.array_equal(back[0].values, fv.values, equal_nan=True)
    assert back[0].label is ClipLabel.FAKE and back[0].clip_ref == "a/b.wav"
