"""Clip-level feature vectors built from frame tracks."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass

import numpy as np

from . import dsp, pitch
from .audio import AudioClip, ClipLabel, SplitTag, trim_silence
from .errors import DataError, EmptySeries, NoVoicedContent, TooFewCycles

log = logging.getLogger(__name__)

FEATURE_NAMES = (
    "f0_mean_v", "f0_std_v", "f0_range_v", "f0_iqr_v", "f0_cv_v", "f0_p10_v", "f0_p90_v",
    "dur_s", "voice_pct", "n_voiced_seg_per_s", "mean_voiced_seg_ms", "pause_ratio",
    "f0_slope_hz_per_s", "jitter_local", "shimmer_local",
    "rms_mean", "rms_std", "rms_range", "rms_iqr", "rms_cv",
    "spec_centroid_mean", "spec_centroid_std", "spec_centroid_iqr",
    "spec_bandwidth_mean", "spec_bandwidth_std", "spec_bandwidth_iqr",
    "spec_rolloff_mean", "spec_rolloff_std", "spec_rolloff_iqr",
    "spec_contrast_mean", "spec_contrast_std", "spec_contrast_iqr",
)

STAT_FIELDS = ("mean", "std", "range", "iqr", "cv", "p10", "p90")


@dataclass(frozen=True)
class ExtractionParams:
    """Every knob of the per-clip pipeline (all defaults as documented in the README)."""

    trim_db: float = -40.0
    framing: dsp.FramingParams = dsp.FramingParams()
    yin_framing: dsp.FramingParams = pitch.YIN_FRAMING
    fmin: float = 65.0
    fmax: float = 500.0
    yin_threshold: float = 0.15
    min_seg_ms: float = 30.0
    rolloff_pct: float = 0.85
    contrast_bands: int = 6


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray  # aligned with FEATURE_NAMES, nan = missing
    clip_ref: str = ""
    label: ClipLabel | None = None
    split: SplitTag | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.shape != (len(FEATURE_NAMES),):
            raise ValueError(f"expected {len(FEATURE_NAMES)} values, got {v.shape}")
        v[np.isinf(v)] = np.nan
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def as_dict(self) -> dict:
        return dict(zip(FEATURE_NAMES, self.values.tolist()))

    def __getitem__(self, name: str) -> float:
        return float(self.values[FEATURE_NAMES.index(name)])


def summarize(values, which=STAT_FIELDS) -> dict:
    """Summary statistics over the non-missing entries of ``values``.

    Standard deviation uses the population (1/n) divisor; percentiles use linear
    interpolation at rank ``p*(n-1)``. ``std``/``cv`` need two values and ``cv``
    is missing when ``|mean| < 1e-12``.
    """
    if isinstance(values, dsp.FrameSeries):
        values = values.values
    v = np.asarray(values, dtype=np.float64)
    v = v[~np.isnan(v)]
    if v.size == 0:
        raise EmptySeries("no non-missing values")
    out = {}
    mean = float(np.mean(v))
    std = float(np.std(v)) if v.size >= 2 else np.nan
    for key in which:
        if key == "mean":
            out[key] = mean
        elif key == "std":
            out[key] = std
        elif key == "range":
            out[key] = float(v.max() - v.min())
        elif key == "iqr":
            q1, q3 = np.percentile(v, [25, 75])
            out[key] = float(q3 - q1)
        elif key == "cv":
            out[key] = std / mean if abs(mean) >= 1e-12 and not np.isnan(std) else np.nan
        elif key == "p10":
            out[key] = float(np.percentile(v, 10))
        elif key == "p90":
            out[key] = float(np.percentile(v, 90))
        else:
            raise KeyError(key)
    return out


def _summarize_or_missing(values, which) -> dict:
    try:
        return summarize(values, which)
    except EmptySeries:
        return {k: np.nan for k in which}


def prosodic_features(track: pitch.PitchTrack, segs: pitch.VoicedSegments, dur_s: float) -> dict:
    if dur_s <= 0:
        raise ValueError("dur_s must be positive")
    out = {}
    # frames in discarded short runs count as unvoiced here too
    in_seg = np.zeros(track.n_frames, dtype=bool)
    for a, b in segs.frame_runs:
        in_seg[a : b + 1] = True
    f0 = np.where(in_seg, track.f0_hz, np.nan)
    stats = _summarize_or_missing(f0, STAT_FIELDS)
    for k in STAT_FIELDS:
        out[f"f0_{k}_v"] = stats[k]
    out["dur_s"] = dur_s
    # centred frames cover up to one hop more than the clip itself
    voiced_s = min(segs.total_voiced_s, dur_s)
    out["voice_pct"] = voiced_s / dur_s
    out["n_voiced_seg_per_s"] = len(segs.segments) / dur_s
    if segs.segments:
        out["mean_voiced_seg_ms"] = 1000.0 * segs.total_voiced_s / len(segs.segments)
    else:
        out["mean_voiced_seg_ms"] = np.nan
    if voiced_s > 0:
        out["pause_ratio"] = (dur_s - voiced_s) / voiced_s
    else:
        out["pause_ratio"] = np.nan
    voiced = ~np.isnan(f0)
    if voiced.sum() >= 2:
        t = track.times[voiced]
        y = f0[voiced]
        tc = t - t.mean()
        out["f0_slope_hz_per_s"] = float(np.dot(tc, y - y.mean()) / np.dot(tc, tc))
    else:
        out["f0_slope_hz_per_s"] = np.nan
    return out


def voice_quality_features(marks: pitch.CycleMarks) -> tuple[float, float]:
    """Local jitter and shimmer: mean absolute consecutive difference over the mean.

    Consecutive pairs are only formed inside one voiced segment.
    """
    same = marks.segment[1:] == marks.segment[:-1]
    if not same.any():
        raise TooFewCycles("need two consecutive cycles within a voiced segment")
    dp = np.abs(np.diff(marks.periods_s))[same]
    da = np.abs(np.diff(marks.peak_amps))[same]
    jitter = float(dp.mean() / marks.periods_s.mean())
    shimmer = float(da.mean() / marks.peak_amps.mean())
    return jitter, shimmer


def spectral_features(descriptors: dict, rms: dsp.FrameSeries) -> dict:
    """``descriptors`` maps ``centroid|bandwidth|rolloff|contrast`` to frame series."""
    out = {}
    stats = _summarize_or_missing(rms, ("mean", "std", "range", "iqr", "cv"))
    for k, v in stats.items():
        out[f"rms_{k}"] = v
    for name in ("centroid", "bandwidth", "rolloff", "contrast"):
        stats = _summarize_or_missing(descriptors[name], ("mean", "std", "iqr"))
        for k, v in stats.items():
            out[f"spec_{name}_{k}"] = v
    return out


def assemble(parts: dict, clip_ref="", label=None, split=None) -> FeatureVector:
    values = [parts.get(n, np.nan) for n in FEATURE_NAMES]
    return FeatureVector(np.array(values, dtype=np.float64), clip_ref, label, split)


def extract_clip_features(clip: AudioClip, params: ExtractionParams = ExtractionParams()) -> FeatureVector:
    """Trim, analyse and summarise one clip into the 32-slot schema.

    Raises a ``DataError`` subclass when the clip is unusable (silent, too
    short); optional voice-quality stages degrade to missing values instead.
    """
    trimmed = trim_silence(clip, params.trim_db, params.framing.window_ms, params.framing.hop_ms)
    dur_s = trimmed.duration_s

    spec = dsp.stft(trimmed, params.framing)
    rms = dsp.rms_track(trimmed, params.framing)
    descriptors = {
        "centroid": dsp.spectral_centroid(spec),
        "bandwidth": dsp.spectral_bandwidth(spec),
        "rolloff": dsp.spectral_rolloff(spec, params.rolloff_pct),
        "contrast": dsp.mean_contrast(dsp.spectral_contrast(spec, params.contrast_bands)),
    }
    track = pitch.yin_f0(trimmed, params.fmin, params.fmax, params.yin_framing, params.yin_threshold)
    segs = pitch.segment_voicing(track, params.min_seg_ms)

    parts = prosodic_features(track, segs, dur_s)
    parts.update(spectral_features(descriptors, rms))
    try:
        marks = pitch.mark_cycles(trimmed, track, segs)
        parts["jitter_local"], parts["shimmer_local"] = voice_quality_features(marks)
    except (NoVoicedContent, TooFewCycles) as exc:
        log.debug("%s: no voice-quality features (%s)", clip.source_path, exc)
    return assemble(parts, clip.source_path, clip.label, clip.split)


# --------------------------------------------------------------------------
# feature table files


def _fmt(v: float) -> str:
    return "" if np.isnan(v) else repr(float(v))


def write_feature_csv(vectors, names=FEATURE_NAMES, header_comment: str | None = None) -> str:
    buf = io.StringIO()
    if header_comment:
        buf.write(f"# {header_comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["clip", "label", "split", *names])
    for fv in vectors:
        w.writerow([fv.clip_ref, fv.label.value, fv.split.value, *(_fmt(v) for v in fv.values)])
    return buf.getvalue()


def read_feature_csv(text: str) -> tuple[list[FeatureVector], dict]:
    """Parse a feature table; returns the vectors and any ``# key=value`` header comments."""
    meta = {}
    lines = text.splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            for item in line[1:].split():
                if "=" in item:
                    k, v = item.split("=", 1)
                    meta[k] = v
        else:
            body.append(line)
    rows = list(csv.reader(body))
    if not rows:
        raise DataError("empty feature table")
    header = rows[0]
    if tuple(header[3:]) != FEATURE_NAMES or header[:3] != ["clip", "label", "split"]:
        raise DataError("feature table header does not match the feature schema")
    out = []
    for row in rows[1:]:
        if not row:
            continue
        vals = [float(c) if c != "" else np.nan for c in row[3:]]
        out.append(FeatureVector(np.array(vals), row[0], ClipLabel.parse(row[1]), SplitTag.parse(row[2])))
    return out, meta
