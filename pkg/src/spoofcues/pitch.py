"""YIN pitch tracking, voiced-segment detection and glottal-cycle marking."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .audio import AudioClip
from .dsp import FramingParams, next_pow2
from .errors import ClipTooShort, NoVoicedContent

YIN_FRAMING = FramingParams(window_ms=50.0, hop_ms=10.0)


@dataclass(frozen=True)
class PitchTrack:
    f0_hz: np.ndarray  # nan where unvoiced
    aperiodicity: np.ndarray
    voiced: np.ndarray
    framing: FramingParams
    sample_rate: int
    hop: int  # samples; frame t is centred on sample t*hop
    fmin: float
    fmax: float
    threshold: float

    @property
    def n_frames(self) -> int:
        return self.voiced.size

    @property
    def hop_s(self) -> float:
        return self.hop / self.sample_rate

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_frames) * self.hop_s

    def to_csv(self) -> str:
        lines = ["t_s,f0_hz,dprime,voiced"]
        for t, f, d, v in zip(self.times, self.f0_hz, self.aperiodicity, self.voiced):
            lines.append(f"{t!r},{'' if np.isnan(f) else repr(float(f))},{float(d)!r},{int(v)}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class VoicedSegments:
    segments: tuple  # ((start_s, end_s), ...)
    frame_runs: tuple  # ((first_frame, last_frame), ...) inclusive
    total_voiced_s: float
    total_unvoiced_s: float


@dataclass(frozen=True)
class CycleMarks:
    periods_s: np.ndarray
    peak_amps: np.ndarray
    segment: np.ndarray  # voiced-segment index of each cycle

    def __len__(self):
        return self.periods_s.size


def difference_function(frames: np.ndarray, max_lag: int) -> np.ndarray:
    """YIN difference d(tau) = sum_{j<W} (x_j - x_{j+tau})**2 for tau in [0, max_lag].

    ``frames`` has shape ``(n, L)``; the integration window is ``W = L - max_lag``.
    """
    n, length = frames.shape
    w = length - max_lag
    if w <= 0:
        raise ClipTooShort("analysis frame shorter than the lag range")
    size = next_pow2(length + w)
    head = np.fft.rfft(frames[:, :w], n=size, axis=1)
    full = np.fft.rfft(frames, n=size, axis=1)
    cross = np.fft.irfft(np.conj(head) * full, n=size, axis=1)[:, : max_lag + 1]
    sq = np.concatenate([np.zeros((n, 1)), np.cumsum(frames * frames, axis=1)], axis=1)
    energy_head = sq[:, w][:, None]
    lags = np.arange(max_lag + 1)
    energy_shift = sq[:, w + lags] - sq[:, lags]
    d = energy_head + energy_shift - 2.0 * cross
    d[:, 0] = 0.0
    return np.maximum(d, 0.0)


def cmnd(d: np.ndarray) -> np.ndarray:
    """Cumulative-mean-normalised difference d'(tau); d'(0) = 1, and 1 wherever undefined."""
    out = np.ones_like(d)
    cum = np.cumsum(d[:, 1:], axis=1)
    tau = np.arange(1, d.shape[1])
    with np.errstate(invalid="ignore", divide="ignore"):
        r = d[:, 1:] * tau / cum
    out[:, 1:] = np.where(cum > 0, r, 1.0)
    return out


def _parabolic(y0: float, y1: float, y2: float) -> float:
    den = y0 - 2.0 * y1 + y2
    if den <= 0:
        return 0.0
    return float(np.clip(0.5 * (y0 - y2) / den, -0.5, 0.5))


def yin_f0(clip: AudioClip, fmin: float = 65.0, fmax: float = 500.0,
           params: FramingParams = YIN_FRAMING, threshold: float = 0.15) -> PitchTrack:
    """Frame-wise YIN F0 with centred frames (zero padding of half a window at each end)."""
    sr = clip.sample_rate
    win, hop = params.lengths(sr)
    tau_min = max(2, int(math.floor(sr / fmax)))
    tau_max = int(math.ceil(sr / fmin))
    if win < 2.0 * sr / fmin:
        raise ValueError("YIN window must span at least two periods of fmin")
    x = clip.samples
    if x.size < win:
        raise ClipTooShort(f"{x.size} samples < one {win}-sample YIN window")
    pad = win // 2
    xp = np.concatenate([np.zeros(pad), x, np.zeros(win - pad)])
    n_frames = 1 + x.size // hop
    frames = np.lib.stride_tricks.sliding_window_view(xp, win)[::hop][:n_frames]

    dprime = cmnd(difference_function(frames, tau_max + 1))
    f0 = np.full(n_frames, np.nan)
    aper = np.ones(n_frames)
    voiced = np.zeros(n_frames, dtype=bool)
    lo_hz, hi_hz = float(fmin), float(fmax)
    for t in range(n_frames):
        dp = dprime[t]
        seg = dp[tau_min : tau_max + 1]
        below = np.flatnonzero(seg < threshold)
        if below.size:
            tau = tau_min + below[0]
            while tau + 1 <= tau_max and dp[tau + 1] < dp[tau]:
                tau += 1
        else:
            tau = tau_min + int(np.argmin(seg))
        aper[t] = dp[tau]
        if dp[tau] < threshold:
            shift = _parabolic(dp[tau - 1], dp[tau], dp[tau + 1])
            f0[t] = min(max(sr / (tau + shift), lo_hz), hi_hz)
            voiced[t] = True
    return PitchTrack(f0, aper, voiced, params, sr, hop, lo_hz, hi_hz, threshold)


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    m = np.concatenate([[False], mask.astype(bool), [False]])
    edges = np.flatnonzero(np.diff(m.astype(np.int8)))
    return [(int(a), int(b) - 1) for a, b in zip(edges[::2], edges[1::2])]


def segment_voicing(track: PitchTrack, min_seg_ms: float = 30.0) -> VoicedSegments:
    """Maximal voiced runs as time intervals; runs shorter than ``min_seg_ms`` become unvoiced.

    Each frame owns one hop of time centred on its centre, so a run of n frames
    lasts ``n * hop_s``.
    """
    if track.n_frames == 0:
        raise ValueError("empty pitch track")
    hop_s = track.hop_s
    runs = _runs(track.voiced)
    merged: list[list[int]] = []
    for a, b in runs:
        if merged and (a - merged[-1][1] - 1) * hop_s < hop_s - 1e-12:
            merged[-1][1] = b
        else:
            merged.append([a, b])
    kept = [(a, b) for a, b in merged if (b - a + 1) * hop_s >= min_seg_ms / 1000.0 - 1e-9]
    segs = tuple(((a - 0.5) * hop_s, (b + 0.5) * hop_s) for a, b in kept)
    voiced_s = sum((b - a + 1) for a, b in kept) * hop_s
    total = track.n_frames * hop_s
    return VoicedSegments(segs, tuple(kept), voiced_s, total - voiced_s)


def mark_cycles(clip: AudioClip, track: PitchTrack, segments: VoicedSegments | None = None) -> CycleMarks:
    """Peak-to-peak cycle marks inside each voiced segment.

    From each anchor peak the next anchor is the waveform maximum in
    ``[0.8, 1.25]`` local periods ahead; peak times are refined by parabolic
    interpolation. Periods never pair across segments.
    """
    if int(track.voiced.sum()) < 2:
        raise NoVoicedContent("fewer than two voiced frames")
    if segments is None:
        segments = segment_voicing(track)
    x = clip.samples
    sr = clip.sample_rate
    times = track.times
    vt = times[track.voiced]
    vf = track.f0_hz[track.voiced]
    periods, amps, seg_ids = [], [], []

    def local_period(sample: float) -> float:
        return sr / float(np.interp(sample / sr, vt, vf))

    def refine(i: int) -> float:
        if 0 < i < x.size - 1:
            return i + _parabolic(-x[i - 1], -x[i], -x[i + 1])
        return float(i)

    for k, (start_s, end_s) in enumerate(segments.segments):
        s0 = max(0, int(round(start_s * sr)))
        s1 = min(x.size, int(round(end_s * sr)))
        if s1 - s0 < 2:
            continue
        first_len = int(math.ceil(local_period(s0)))
        anchor = s0 + int(np.argmax(x[s0 : min(s1, s0 + first_len)]))
        peaks = [anchor]
        while True:
            per = local_period(anchor)
            lo = anchor + int(math.ceil(max(0.8 * per, sr / track.fmax)))
            hi = anchor + int(math.floor(min(1.25 * per, sr / track.fmin))) + 1
            if hi > s1:
                break
            anchor = lo + int(np.argmax(x[lo:hi]))
            peaks.append(anchor)
        if len(peaks) < 2:
            continue
        pos = np.array([refine(p) for p in peaks])
        periods.extend(np.diff(pos) / sr)
        amps.extend(np.abs(x[peaks[:-1]]))
        seg_ids.extend([k] * (len(peaks) - 1))
    if not periods:
        raise NoVoicedContent("no complete glottal cycle found")
    return CycleMarks(np.asarray(periods), np.asarray(amps), np.asarray(seg_ids, dtype=int))
