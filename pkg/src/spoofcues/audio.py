"""WAV decoding, silence trimming and dataset manifests."""

from __future__ import annotations

import csv
import enum
import io
import os
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (
    AllSilent,
    ClipTooShort,
    DataError,
    DuplicatePath,
    EmptyClass,
    MalformedWav,
    UnsupportedEncoding,
)

STANDARD_RATES = (16000, 44100)

_PCM = 0x0001
_FLOAT = 0x0003
_EXTENSIBLE = 0xFFFE


class ClipLabel(enum.Enum):
    REAL = "real"
    FAKE = "fake"

    @classmethod
    def parse(cls, text: str) -> "ClipLabel":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise DataError(f"unknown label {text!r}") from None

    @property
    def positive(self) -> int:
        """1 for Fake (the detection target), 0 for Real."""
        return int(self is ClipLabel.FAKE)


class SplitTag(enum.Enum):
    TRAIN = "train"
    TEST = "test"

    @classmethod
    def parse(cls, text: str) -> "SplitTag":
        t = text.strip().lower()
        t = {"training": "train", "testing": "test"}.get(t, t)
        try:
            return cls(t)
        except ValueError:
            raise DataError(f"unknown split {text!r}") from None


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int
    source_path: str = ""
    label: ClipLabel | None = None
    split: SplitTag | None = None
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1 or s.size == 0:
            raise DataError("clip must hold a nonempty mono sample vector")
        if not np.all(np.isfinite(s)):
            raise DataError("clip contains non-finite samples")
        if self.sample_rate <= 0:
            raise DataError("sample_rate must be positive")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        if self.sample_rate not in STANDARD_RATES:
            self.metadata.setdefault("nonstandard_rate", True)

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate


# --------------------------------------------------------------------------
# WAV


def _iter_chunks(data: bytes):
    pos = 12
    while pos + 8 <= len(data):
        cid, size = struct.unpack_from("<4sI", data, pos)
        body = data[pos + 8 : pos + 8 + size]
        yield cid, body, len(body) < size
        pos += 8 + size + (size & 1)


def decode_wav(data: bytes, source_path: str = "") -> AudioClip:
    """Decode a RIFF/WAVE byte string (PCM16, PCM24 or float32) to a mono clip."""
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedWav("missing RIFF/WAVE header")

    fmt = None
    payload = None
    for cid, body, truncated in _iter_chunks(data):
        if cid == b"fmt ":
            if len(body) < 16:
                raise MalformedWav("fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
            if fmt[0] == _EXTENSIBLE:
                if len(body) < 40:
                    raise MalformedWav("extensible fmt chunk too short")
                sub = struct.unpack_from("<H", body, 24)[0]
                fmt = (sub,) + fmt[1:]
        elif cid == b"data":
            if truncated:
                raise MalformedWav("data chunk truncated")
            payload = body
            break
    if fmt is None or payload is None:
        raise MalformedWav("fmt or data chunk missing")

    tag, channels, rate, _, block_align, bits = fmt
    if channels < 1 or channels > 2:
        raise UnsupportedEncoding(f"{channels} channels")
    if tag == _PCM and bits == 16:
        x = np.frombuffer(payload, dtype="<i2", count=len(payload) // 2)
        x = x.astype(np.float64) / 32768.0
    elif tag == _PCM and bits == 24:
        raw = np.frombuffer(payload, dtype=np.uint8, count=len(payload) // 3 * 3)
        raw = raw.reshape(-1, 3).astype(np.int32)
        v = raw[:, 0] | (raw[:, 1] << 8) | (raw[:, 2] << 16)
        v = np.where(v >= 1 << 23, v - (1 << 24), v)
        x = v.astype(np.float64) / float(1 << 23)
    elif tag == _FLOAT and bits == 32:
        x = np.frombuffer(payload, dtype="<f4", count=len(payload) // 4).astype(np.float64)
    else:
        raise UnsupportedEncoding(f"format tag {tag:#x} with {bits} bits")

    if x.size % channels:
        raise MalformedWav("sample count not a multiple of channel count")
    if channels > 1:
        x = x.reshape(-1, channels).mean(axis=1)
    if x.size == 0:
        raise MalformedWav("no samples")
    if not np.all(np.isfinite(x)):
        raise MalformedWav("non-finite float samples")
    return AudioClip(x, int(rate), source_path=source_path)


def encode_wav(samples, sample_rate: int, encoding: str = "pcm16") -> bytes:
    """Encode samples to WAV bytes.

    ``samples`` is 1-D (mono) or 2-D ``(n, channels)``. ``encoding`` is one of
    ``pcm16``, ``pcm24`` or ``float32``.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    channels = x.shape[1]
    flat = x.reshape(-1)
    if encoding == "pcm16":
        q = np.clip(np.round(flat * 32768.0), -32768, 32767).astype("<i2")
        payload, tag, bits = q.tobytes(), _PCM, 16
    elif encoding == "pcm24":
        q = np.clip(np.round(flat * (1 << 23)), -(1 << 23), (1 << 23) - 1).astype(np.int32)
        u = (q & 0xFFFFFF).astype(np.uint32)
        b = np.stack([u & 0xFF, (u >> 8) & 0xFF, (u >> 16) & 0xFF], axis=1).astype(np.uint8)
        payload, tag, bits = b.tobytes(), _PCM, 24
    elif encoding == "float32":
        payload, tag, bits = flat.astype("<f4").tobytes(), _FLOAT, 32
    else:
        raise ValueError(f"unknown encoding {encoding!r}")
    block = channels * bits // 8
    fmt = struct.pack("<HHIIHH", tag, channels, sample_rate, sample_rate * block, block, bits)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        body += b"\x00"
    return b"RIFF" + struct.pack("<I", len(body)) + body


def read_wav(path, **clip_fields) -> AudioClip:
    with open(path, "rb") as fh:
        clip = decode_wav(fh.read(), source_path=str(path))
    return replace(clip, **clip_fields) if clip_fields else clip


# --------------------------------------------------------------------------
# trimming


def frame_params(sample_rate: int, window_ms: float = 25.0, hop_ms: float = 10.0) -> tuple[int, int]:
    """Window and hop lengths in samples (half-up rounding: 25 ms @ 44.1 kHz -> 1103)."""
    win = int(np.floor(window_ms * sample_rate / 1000.0 + 0.5))
    hop = int(np.floor(hop_ms * sample_rate / 1000.0 + 0.5))
    return win, hop


def trim_silence(clip: AudioClip, threshold_db: float = -40.0,
                 window_ms: float = 25.0, hop_ms: float = 10.0) -> AudioClip:
    """Remove leading and trailing silence.

    Edge frames (``window_ms`` long, ``hop_ms`` apart) whose RMS falls below
    ``peak_rms * 10**(threshold_db/20)`` are dropped; the cut is then moved to
    the first/last sample inside the outermost active frames whose magnitude
    reaches the same level. Peak RMS is taken over every window offset so the
    result does not depend on where the frame grid happens to start, which
    keeps the operation idempotent.
    """
    if threshold_db >= 0:
        raise ValueError("threshold_db must be negative")
    x = clip.samples
    win, hop = frame_params(clip.sample_rate, window_ms, hop_ms)
    if x.size < win:
        raise ClipTooShort(f"{x.size} samples < one {win}-sample window")

    c = np.concatenate(([0.0], np.cumsum(x * x)))
    sliding = np.sqrt(np.maximum(c[win:] - c[:-win], 0.0) / win)
    peak = sliding.max()
    if peak <= 0.0:
        raise AllSilent("clip is entirely zero")
    level = peak * 10.0 ** (threshold_db / 20.0)

    starts = np.arange(0, x.size - win + 1, hop)
    active = np.flatnonzero(sliding[starts] >= level)
    if active.size == 0:
        raise AllSilent("no frame above threshold")
    lo = starts[active[0]]
    hi = x.size if active[-1] == starts.size - 1 else starts[active[-1]] + win
    # refine only the sides that actually lost frames
    loud = np.flatnonzero(np.abs(x[lo:hi]) >= level)
    s0 = lo + loud[0] if active[0] > 0 else 0
    s1 = lo + loud[-1] + 1 if hi < x.size else x.size

    if s1 - s0 < win + 2 * hop:
        raise AllSilent("fewer than 3 frames survive trimming")
    if s0 == 0 and s1 == x.size:
        return clip
    meta = dict(clip.metadata, trimmed=(int(s0), int(s1)))
    return replace(clip, samples=x[s0:s1], metadata=meta)


# --------------------------------------------------------------------------
# manifests


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: ClipLabel
    split: SplitTag


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple
    condition_name: str = ""

    def __post_init__(self):
        entries = tuple(sorted(self.entries, key=lambda e: e.path))
        object.__setattr__(self, "entries", entries)
        seen = set()
        for e in entries:
            if e.path in seen:
                raise DuplicatePath(e.path)
            seen.add(e.path)
        counts = self.counts()
        for (label, split), n in counts.items():
            if n == 0:
                raise EmptyClass(f"no {label.value} clips in {split.value} split")

    def counts(self) -> dict:
        out = {(lab, spl): 0 for lab in ClipLabel for spl in SplitTag}
        for e in self.entries:
            out[(e.label, e.split)] += 1
        return out

    def __len__(self):
        return len(self.entries)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["path", "label", "split"])
        for e in self.entries:
            w.writerow([e.path, e.label.value, e.split.value])
        return buf.getvalue()


def parse_manifest_csv(text: str, base_dir: str | os.PathLike | None = None,
                       condition_name: str = "") -> DatasetManifest:
    rows = csv.reader(io.StringIO(text))
    header = next(rows, None)
    if header is None or [h.strip().lower() for h in header] != ["path", "label", "split"]:
        raise DataError("manifest header must be 'path,label,split'")
    entries = []
    for row in rows:
        if not row or not "".join(row).strip():
            continue
        if len(row) != 3:
            raise DataError(f"bad manifest row {row!r}")
        path = row[0].strip()
        if base_dir is not None and not os.path.isabs(path):
            path = os.path.join(str(base_dir), path)
        entries.append(ManifestEntry(path, ClipLabel.parse(row[1]), SplitTag.parse(row[2])))
    return DatasetManifest(tuple(entries), condition_name)


def scan_dataset(root, condition_name: str = "") -> DatasetManifest:
    """Build a manifest from ``<root>/{training,testing}/{real,fake}/*.wav`` or a CSV file."""
    root = Path(root)
    if root.is_file():
        return parse_manifest_csv(root.read_text(encoding="utf-8"), base_dir=root.parent,
                                  condition_name=condition_name)
    if not root.is_dir():
        raise DataError(f"dataset root {root} not found")
    entries = []
    for split_dir, split in (("training", SplitTag.TRAIN), ("testing", SplitTag.TEST)):
        for label in ClipLabel:
            d = root / split_dir / label.value
            if not d.is_dir():
                continue
            for p in d.iterdir():
                if p.suffix.lower() == ".wav" and p.is_file():
                    entries.append(ManifestEntry(str(p), label, split))
    return DatasetManifest(tuple(entries), condition_name)
