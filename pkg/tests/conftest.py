import numpy as np
import pytest

from spoofcues.audio import AudioClip
from spoofcues.dsp import FramingParams, Spectrogram


def sine(freq, sr=16000, dur=1.0, amp=0.5, phase=0.0):
    t = np.arange(int(round(dur * sr))) / sr
    return amp * np.sin(2 * np.pi * freq * t + phase)


def clip(x, sr=16000, **kw):
    return AudioClip(np.asarray(x, dtype=np.float64), sr, **kw)


def fabricated_spec(mags, freqs, sr=None):
    """A Spectrogram built directly from given magnitudes (frames x bins)."""
    mags = np.atleast_2d(np.asarray(mags, dtype=np.float64))
    freqs = np.asarray(freqs, dtype=np.float64)
    sr = sr or int(2 * freqs[-1])
    return Spectrogram(mags, freqs, FramingParams(), sr, 2 * (freqs.size - 1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
