"""Short-time analysis: framing, STFT, RMS and per-frame spectral descriptors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import AudioClip, frame_params
from .errors import ClipTooShort, TooFewBins

SILENT_MAGNITUDE = 1e-10
EPS = 1e-10


@dataclass(frozen=True)
class FramingParams:
    window_ms: float = 25.0
    hop_ms: float = 10.0
    window_shape: str = "hann"

    def __post_init__(self):
        if self.window_ms <= 0 or self.hop_ms <= 0:
            raise ValueError("window and hop must be positive")
        if self.hop_ms > self.window_ms:
            raise ValueError("hop must not exceed window")
        if self.window_shape != "hann":
            raise ValueError(f"unsupported window {self.window_shape!r}")

    def lengths(self, sample_rate: int) -> tuple[int, int]:
        return frame_params(sample_rate, self.window_ms, self.hop_ms)


@dataclass(frozen=True)
class Spectrogram:
    magnitudes: np.ndarray  # (n_frames, n_bins)
    bin_freqs: np.ndarray
    framing: FramingParams
    sample_rate: int
    fft_size: int

    @property
    def n_frames(self) -> int:
        return self.magnitudes.shape[0]

    @property
    def bin_width(self) -> float:
        return self.sample_rate / self.fft_size


@dataclass(frozen=True)
class FrameSeries:
    """Per-frame scalar track; ``nan`` marks a missing frame."""

    values: np.ndarray
    name: str
    framing: FramingParams

    def __len__(self):
        return self.values.size

    @property
    def present(self) -> np.ndarray:
        return self.values[~np.isnan(self.values)]


def hann(n: int) -> np.ndarray:
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def next_pow2(n: int) -> int:
    return 1 << (int(n) - 1).bit_length()


def frame_signal(x: np.ndarray, win: int, hop: int) -> np.ndarray:
    """Frame t covers samples ``[t*hop, t*hop + win)``; trailing partial frames are dropped."""
    if x.size < win:
        raise ClipTooShort(f"{x.size} samples < one {win}-sample window")
    n = 1 + (x.size - win) // hop
    return np.lib.stride_tricks.sliding_window_view(x, win)[:: hop][:n]


def stft(clip: AudioClip, params: FramingParams = FramingParams()) -> Spectrogram:
    win, hop = params.lengths(clip.sample_rate)
    frames = frame_signal(clip.samples, win, hop) * hann(win)
    nfft = next_pow2(win)
    mags = np.abs(np.fft.rfft(frames, n=nfft, axis=1))
    freqs = np.fft.rfftfreq(nfft, d=1.0 / clip.sample_rate)
    return Spectrogram(mags, freqs, params, clip.sample_rate, nfft)


def rms_track(clip: AudioClip, params: FramingParams = FramingParams()) -> FrameSeries:
    win, hop = params.lengths(clip.sample_rate)
    frames = frame_signal(clip.samples, win, hop)
    return FrameSeries(np.sqrt(np.mean(frames * frames, axis=1)), "rms", params)


def _silent(spec: Spectrogram) -> np.ndarray:
    return spec.magnitudes.sum(axis=1) < SILENT_MAGNITUDE


def spectral_centroid(spec: Spectrogram) -> FrameSeries:
    m = spec.magnitudes
    total = m.sum(axis=1)
    silent = _silent(spec)
    with np.errstate(invalid="ignore", divide="ignore"):
        c = m @ spec.bin_freqs / total
    c[silent] = np.nan
    return FrameSeries(c, "spec_centroid", spec.framing)


def spectral_bandwidth(spec: Spectrogram) -> FrameSeries:
    m = spec.magnitudes
    total = m.sum(axis=1)
    silent = _silent(spec)
    with np.errstate(invalid="ignore", divide="ignore"):
        c = m @ spec.bin_freqs / total
        dev = (spec.bin_freqs[None, :] - c[:, None]) ** 2
        bw = np.sqrt(np.sum(m * dev, axis=1) / total)
    bw[silent] = np.nan
    return FrameSeries(bw, "spec_bandwidth", spec.framing)


def spectral_rolloff(spec: Spectrogram, pct: float = 0.85) -> FrameSeries:
    """Lowest bin frequency below which ``pct`` of the frame's energy (squared magnitude) lies."""
    if not 0.0 < pct < 1.0:
        raise ValueError("pct must lie strictly between 0 and 1")
    energy = spec.magnitudes ** 2
    cum = np.cumsum(energy, axis=1)
    target = pct * cum[:, -1:]
    idx = np.argmax(cum >= target * (1.0 - 1e-12), axis=1)
    r = spec.bin_freqs[idx].astype(np.float64)
    r[_silent(spec)] = np.nan
    return FrameSeries(r, "spec_rolloff", spec.framing)


def octave_bands(spec: Spectrogram, n_bands: int = 6, fmin: float = 200.0) -> list[np.ndarray]:
    """Bin index arrays for bands ``[fmin*2**b, fmin*2**(b+1))`` capped at Nyquist."""
    if n_bands < 1:
        raise ValueError("n_bands must be >= 1")
    nyq = spec.sample_rate / 2.0
    f = spec.bin_freqs
    bands = []
    for b in range(n_bands):
        lo, hi = fmin * 2 ** b, fmin * 2 ** (b + 1)
        if b == n_bands - 1 or hi > nyq:
            idx = np.flatnonzero((f >= lo) & (f <= min(hi, nyq)))
        else:
            idx = np.flatnonzero((f >= lo) & (f < hi))
        if idx.size == 0:
            raise TooFewBins(f"band {b} [{lo:.0f}, {min(hi, nyq):.0f}) Hz holds no bins")
        bands.append(idx)
    return bands


def band_contrast(mags: np.ndarray, ref=1.0) -> np.ndarray:
    """Peak-minus-valley log contrast of each row of a single band's magnitudes.

    The guard ``EPS * ref`` scales with the per-frame reference level so that
    the contrast does not change when the signal gain does.
    """
    n = mags.shape[-1]
    q = max(1, n // 5)
    s = np.sort(mags, axis=-1)
    valley = s[..., :q].mean(axis=-1)
    peak = s[..., -q:].mean(axis=-1)
    eps = EPS * np.asarray(ref, dtype=np.float64)
    return np.log(peak + eps) - np.log(valley + eps)


def spectral_contrast(spec: Spectrogram, n_bands: int = 6) -> list[FrameSeries]:
    silent = _silent(spec)
    ref = np.where(silent, 1.0, spec.magnitudes.mean(axis=1))
    out = []
    for b, idx in enumerate(octave_bands(spec, n_bands)):
        v = band_contrast(spec.magnitudes[:, idx], ref)
        v[silent] = np.nan
        out.append(FrameSeries(v, f"spec_contrast_band{b}", spec.framing))
    return out


def mean_contrast(bands: list[FrameSeries]) -> FrameSeries:
    """Across-band mean per frame (the series summarised as ``spec_contrast_*``)."""
    v = np.mean(np.stack([b.values for b in bands]), axis=0)
    return FrameSeries(v, "spec_contrast", bands[0].framing)


def spectrogram_csv(spec: Spectrogram) -> str:
    lines = ["frame," + ",".join(f"{f:.6g}" for f in spec.bin_freqs)]
    for t, row in enumerate(spec.magnitudes):
        lines.append(f"{t}," + ",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"
