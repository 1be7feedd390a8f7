"""Synthetic real/fake speech-like corpus for desk-scale experiments.

"Real" clips are formant-filtered glottal pulse trains with intonation,
vibrato, cycle-to-cycle period jitter and a broadband noise floor, spoken in
one of two pitch bands whose vocal-tract (formant) scale matches the band.
"Fake" clips share the articulation model but have a much flatter F0, no
jitter, a lowpassed spectrum and a lower noise floor, and most of them pair a
pitch band with the other band's formant scale. That pairing is invisible to
any single feature and only shows up jointly in pitch and spectral shape.
Both classes draw per-cycle amplitude perturbations, with ranges set so that
measured shimmer carries no class information.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal

from .audio import encode_wav


@dataclass(frozen=True)
class SynthConfig:
    sample_rate: int = 16000
    duration_s: float = 2.0
    # two pitch bands (Hz) as (mean, sd) with per-class mixing weights
    real_bands: tuple = ((110.0, 10.0), (220.0, 15.0))
    real_band_weights: tuple = (0.5, 0.5)
    fake_band_weights: tuple = (0.3, 0.7)
    # formant scale per band; real speakers always match their band, fake
    # voices take the other band's scale with probability fake_mismatch
    formant_scales: tuple = (0.85, 1.4)
    fake_mismatch: float = 0.95
    vibrato_rate: tuple = (4.0, 7.0)
    real_vibrato_depth: tuple = (0.0, 0.03)
    fake_vibrato_depth: tuple = (0.0, 0.01)
    real_contour_st: tuple = (0.0, 2.5)   # semitone swing of the phrase contour
    fake_contour_st: tuple = (0.0, 1.5)
    real_jitter: tuple = (0.0, 0.009)
    fake_jitter: tuple = (0.0, 0.0)
    # per-cycle amplitude sd; the fake range is offset to cancel the shimmer
    # that jitter and noise add to real clips
    real_shimmer: tuple = (0.02, 0.12)
    fake_shimmer: tuple = (0.0205, 0.1205)
    real_noise_db: tuple = (-55.0, -30.0)  # noise floor relative to the voiced RMS
    fake_noise_db: tuple = (-65.0, -40.0)
    fake_cutoff_hz: tuple = (5500.0, 7500.0)
    fake_order: int = 4
    real_tilt: tuple = (0.9, 0.94)          # one-pole pre-filter coefficient
    fake_tilt: tuple = (0.9, 0.94)
    syllable_s: tuple = (0.15, 0.45)
    pause_s: tuple = (0.04, 0.25)


def _u(rng, lohi):
    lo, hi = lohi
    return float(rng.uniform(lo, hi)) if hi > lo else float(lo)


_VOWELS = ((700, 1200, 2600), (400, 2000, 2550), (300, 870, 2250), (500, 1500, 2500), (600, 1000, 2400),
           (350, 2300, 3000))


def _formant_filter(x, sr, formants, bandwidths):
    y = x
    for f, bw in zip(formants, bandwidths):
        if f >= sr / 2:
            continue
        r = np.exp(-np.pi * bw / sr)
        a = [1.0, -2.0 * r * np.cos(2 * np.pi * f / sr), r * r]
        y = signal.lfilter([1.0 - r], a, y)
    return y


def _pulse_train(rng, f0_of_t, n, sr, jitter_sd, shimmer_sd, t0, t1):
    """Impulses at jittered cycle boundaries between t0 and t1 (seconds)."""
    x = np.zeros(n)
    t = t0
    while t < t1:
        T = 1.0 / f0_of_t(t)
        T *= 1.0 + jitter_sd * rng.standard_normal()
        amp = 1.0 + shimmer_sd * rng.standard_normal()
        pos = t * sr
        i = int(pos)
        frac = pos - i
        # split the impulse across two samples for sub-sample timing
        if 0 <= i < n - 1:
            x[i] += amp * (1.0 - frac)
            x[i + 1] += amp * frac
        t += max(T, 0.5 / f0_of_t(t))
    return x


def synth_clip(rng: np.random.Generator, fake: bool, cfg: SynthConfig = SynthConfig()) -> np.ndarray:
    sr = cfg.sample_rate
    n = int(round(cfg.duration_s * sr))
    if fake:
        band = int(rng.choice(len(cfg.real_bands), p=cfg.fake_band_weights))
        # the voice's vocal-tract scale is chosen independently of its pitch band
        if rng.uniform() < cfg.fake_mismatch:
            scale_band = 1 - band
        else:
            scale_band = band
    else:
        band = int(rng.choice(len(cfg.real_bands), p=cfg.real_band_weights))
        scale_band = band
    mu, sd = cfg.real_bands[band]
    scale = cfg.formant_scales[scale_band] * (1.0 + 0.02 * rng.standard_normal())
    base = float(np.clip(mu + sd * rng.standard_normal(), 80.0, 400.0))
    vib_rate = _u(rng, cfg.vibrato_rate)
    vib_depth = _u(rng, cfg.fake_vibrato_depth if fake else cfg.real_vibrato_depth)
    swing = _u(rng, cfg.fake_contour_st if fake else cfg.real_contour_st)
    phase = float(rng.uniform(0, 2 * np.pi))
    # phrase contour: a rise-fall with random peak position, in semitones
    peak = float(rng.uniform(0.2, 0.8)) * cfg.duration_s
    decl = float(rng.uniform(-1.0, 1.0)) * swing

    def f0_of_t(t):
        contour = swing * np.exp(-0.5 * ((t - peak) / 0.35) ** 2) + decl * (t / cfg.duration_s - 0.5)
        return base * 2.0 ** (contour / 12.0) * (1.0 + vib_depth * np.sin(2 * np.pi * vib_rate * t + phase))

    jitter = _u(rng, cfg.fake_jitter if fake else cfg.real_jitter)
    shimmer = _u(rng, cfg.fake_shimmer if fake else cfg.real_shimmer)
    tilt = _u(rng, cfg.fake_tilt if fake else cfg.real_tilt)

    out = np.zeros(n)
    voiced_mask = np.zeros(n, dtype=bool)
    t = _u(rng, (0.05, 0.2))
    while t < cfg.duration_s - 0.1:
        dur = _u(rng, cfg.syllable_s)
        t1 = min(t + dur, cfg.duration_s - 0.05)
        src = _pulse_train(rng, f0_of_t, n, sr, jitter, shimmer, t, t1)
        src = signal.lfilter([1.0], [1.0, -tilt], src)
        v = _VOWELS[int(rng.integers(len(_VOWELS)))]
        formants = [f * float(rng.uniform(0.92, 1.08)) * scale for f in v]
        formants.append(3500.0 * scale * float(rng.uniform(0.95, 1.05)))
        seg = _formant_filter(src, sr, formants, (80.0, 100.0, 140.0, 200.0))
        a, b = int(t * sr), int(t1 * sr)
        ramp = min(int(0.01 * sr), (b - a) // 4)
        env = np.ones(b - a)
        if ramp > 0:
            env[:ramp] = np.linspace(0, 1, ramp)
            env[-ramp:] = np.linspace(1, 0, ramp)
        out[a:b] += seg[a:b] * env
        voiced_mask[a:b] = True
        t = t1 + _u(rng, cfg.pause_s)

    level = float(np.sqrt(np.mean(out[voiced_mask] ** 2))) if voiced_mask.any() else 1.0
    out /= level
    if fake:
        cutoff = _u(rng, cfg.fake_cutoff_hz)
        sos = signal.butter(cfg.fake_order, min(cutoff, 0.45 * sr), btype="low", fs=sr, output="sos")
        out = signal.sosfilt(sos, out)
    # noise floor goes in after the lowpass so no spectral region is empty
    noise_db = _u(rng, cfg.fake_noise_db if fake else cfg.real_noise_db)
    out += 10 ** (noise_db / 20.0) * rng.standard_normal(n)
    gain = 10 ** (float(rng.uniform(-18.0, -6.0)) / 20.0)
    out *= gain / max(1e-12, float(np.max(np.abs(out))))
    return out


def write_corpus(root, n_train: int = 200, n_test: int = 100, seed: int = 0,
                 cfg: SynthConfig = SynthConfig()) -> Path:
    """Write ``<root>/{training,testing}/{real,fake}/*.wav``; counts are per class."""
    root = Path(root)
    ss = np.random.SeedSequence(seed)
    jobs = [(split, lab, i) for split, cnt in (("training", n_train), ("testing", n_test))
            for lab in ("real", "fake") for i in range(cnt)]
    children = ss.spawn(len(jobs))
    for (split, lab, i), child in zip(jobs, children):
        d = root / split / lab
        d.mkdir(parents=True, exist_ok=True)
        rng = np.random.default_rng(child)
        x = synth_clip(rng, lab == "fake", cfg)
        (d / f"{lab}_{i:04d}.wav").write_bytes(encode_wav(x, cfg.sample_rate, "pcm16"))
    return root
