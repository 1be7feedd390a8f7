"""Experiment configuration: YAML file, CLI overrides and per-stage content hashes."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .classifiers import ALL_VARIANTS, DEFAULT_C_GRID, DEFAULT_GAMMA_GRID
from .dsp import FramingParams
from .features import ExtractionParams


class ConfigError(ValueError):
    """Invalid configuration (reported as a usage error)."""


@dataclass
class ExtractionSection:
    trim_db: float = -40.0
    window_ms: float = 25.0
    hop_ms: float = 10.0
    yin_window_ms: float = 50.0
    yin_hop_ms: float = 10.0
    fmin: float = 65.0
    fmax: float = 500.0
    yin_threshold: float = 0.15
    min_seg_ms: float = 30.0
    rolloff_pct: float = 0.85
    contrast_bands: int = 6
    max_fail_frac: float = 0.10

    def params(self) -> ExtractionParams:
        return ExtractionParams(
            trim_db=self.trim_db,
            framing=FramingParams(self.window_ms, self.hop_ms),
            yin_framing=FramingParams(self.yin_window_ms, self.yin_hop_ms),
            fmin=self.fmin, fmax=self.fmax, yin_threshold=self.yin_threshold,
            min_seg_ms=self.min_seg_ms, rolloff_pct=self.rolloff_pct, contrast_bands=self.contrast_bands,
        )


@dataclass
class GridSection:
    C: list = field(default_factory=lambda: list(DEFAULT_C_GRID))
    gamma: list = field(default_factory=lambda: list(DEFAULT_GAMMA_GRID))
    folds: int = 3
    cv_seed: int = 0


@dataclass
class GmmSection:
    k: int = 8
    covariance: str = "diag"
    restarts: int = 3
    max_iter: int = 300
    tol: float = 1e-6


@dataclass
class ModelSection:
    logreg_l2: float = 1.0
    linear_svm_C: float = 1.0
    svm_tol: float = 1e-3
    svm_cache_mb: int = 512


@dataclass
class ExperimentConfig:
    """Every field is optional; defaults reproduce the documented settings."""

    dataset: str = ""
    condition: str = "default"
    out: str = "runs"
    seed: int = 0
    alpha: float = 0.05
    hist_bins: int = 50
    workers: int = 1
    models: list = field(default_factory=lambda: list(ALL_VARIANTS))
    extraction: ExtractionSection = field(default_factory=ExtractionSection)
    grid: GridSection = field(default_factory=GridSection)
    gmm: GmmSection = field(default_factory=GmmSection)
    model: ModelSection = field(default_factory=ModelSection)
    source_text: str = field(default="", repr=False, compare=False)

    # -- construction ------------------------------------------------------

    @classmethod
    def from_dict(cls, d: dict, source_text: str = "") -> "ExperimentConfig":
        d = copy.deepcopy(d or {})
        if not isinstance(d, dict):
            raise ConfigError("config must be a mapping")
        sections = {"extraction": ExtractionSection, "grid": GridSection, "gmm": GmmSection,
                    "model": ModelSection}
        kw = {}
        known = {f.name for f in fields(cls)} - {"source_text"}
        for k, v in d.items():
            if k not in known:
                raise ConfigError(f"unknown config key {k!r}")
            if k in sections:
                kw[k] = _section(sections[k], v, k)
            else:
                kw[k] = v
        cfg = cls(**kw, source_text=source_text)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        p = Path(path)
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc}") from None
        try:
            d = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {p} is not valid YAML: {exc}") from None
        cfg = cls.from_dict(d, source_text=text)
        if cfg.dataset and not Path(cfg.dataset).is_absolute():
            cfg.dataset = str((p.parent / cfg.dataset).resolve())
        return cfg

    def validate(self):
        bad = [m for m in self.models if m not in ALL_VARIANTS]
        if bad:
            raise ConfigError(f"unknown model(s) {bad}; choose from {list(ALL_VARIANTS)}")
        if not self.models:
            raise ConfigError("model list is empty")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.gmm.covariance not in ("diag", "full"):
            raise ConfigError("gmm.covariance must be 'diag' or 'full'")
        if not self.condition or "/" in self.condition:
            raise ConfigError("condition must be a plain name")

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("source_text")
        return d

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    @property
    def run_dir(self) -> Path:
        return Path(self.out) / self.condition

    # -- hashing -----------------------------------------------------------

    def extract_hash(self) -> str:
        return _digest({"stage": "extract", "dataset": self.dataset, "extraction": asdict(self.extraction)})

    def select_hash(self) -> str:
        return _digest({"stage": "select", "up": self.extract_hash(), "alpha": self.alpha})

    def analyze_hash(self) -> str:
        return _digest({"stage": "analyze", "up": self.select_hash(), "bins": self.hist_bins})

    def model_hash(self, variant: str) -> str:
        """Covers only what influences one model file, so unrelated edits leave it untouched."""
        spec = {"stage": "model", "variant": variant, "up": self.select_hash()}
        if variant == "LogReg":
            spec["l2"] = self.model.logreg_l2
        elif variant == "LinearSVM":
            spec.update(C=self.model.linear_svm_C, tol=self.model.svm_tol)
        elif variant == "RbfSVM":
            spec.update(grid=asdict(self.grid), tol=self.model.svm_tol)
        elif variant == "GMM":
            spec.update(gmm=asdict(self.gmm), seed=self.seed)
        return _digest(spec)

    def train_hash(self) -> str:
        return _digest({"stage": "train", "models": {m: self.model_hash(m) for m in sorted(self.models)}})

    def evaluate_hash(self) -> str:
        return _digest({"stage": "evaluate", "up": self.train_hash()})


def _section(cls, v, name):
    if v is None:
        return cls()
    if not isinstance(v, dict):
        raise ConfigError(f"config section {name!r} must be a mapping")
    known = {f.name for f in fields(cls)}
    bad = set(v) - known
    if bad:
        raise ConfigError(f"unknown key(s) {sorted(bad)} in section {name!r}")
    return cls(**v)


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]
