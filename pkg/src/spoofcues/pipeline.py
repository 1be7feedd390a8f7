"""Stage runners behind the CLI: extract, analyze, train, evaluate and run-all.

Every output file carries the hash of the configuration subset it depends on
(``config_hash=`` in a CSV comment line, a ``header`` object in JSON, an XML
comment in SVG). Stages verify the hashes of the inputs they read and refuse
artifacts produced under a different configuration. A ``.done`` marker per
stage records its hash and outputs so ``run-all`` can resume.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import dsp, pitch, svg
from .audio import AudioClip, ClipLabel, read_wav, scan_dataset, trim_silence
from .classifiers import (LabeledMatrix, Variant, grid_search, model_from_json, model_to_json,
                          schema_fingerprint, stratified_kfold, train_model)
from .config import ExperimentConfig
from .errors import ConfigMismatch, DataError, NonConvergenceWarning, SchemaMismatch, SpoofCuesError
from .evaluation import compare_all, eval_table_csv, evaluate
from .features import FEATURE_NAMES, extract_clip_features, read_feature_csv, write_feature_csv
from .stats import (FeatureTable, Preprocessor, class_histograms, clean, correlation_matrix,
                    fit_preprocessor, select_features)

log = logging.getLogger("spoofcues")

STAGES = ("extract", "analyze", "train", "evaluate")


class StageFailure(SpoofCuesError):
    """A stage could not complete (exit code 3)."""


# --------------------------------------------------------------------------
# run directory helpers


class RunDir:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.root = cfg.run_dir
        self.root.mkdir(parents=True, exist_ok=True)

    def path(self, rel: str) -> Path:
        return self.root / rel

    def write(self, rel: str, text: str) -> str:
        p = self.path(rel)
        p.parent.mkdir(parents=True, exist_ok=True)
        tmp = p.with_name(p.name + ".tmp")
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, p)
        return rel

    def read(self, rel: str) -> str:
        p = self.path(rel)
        if not p.is_file():
            raise StageFailure(f"missing input {p}; run the upstream stage first")
        return p.read_text(encoding="utf-8")

    # checkpoints

    def marker(self, stage: str) -> Path:
        return self.path(f".done/{stage}.json")

    def is_done(self, stage: str, stage_hash: str) -> bool:
        m = self.marker(stage)
        if not m.is_file():
            return False
        d = json.loads(m.read_text())
        return d.get("hash") == stage_hash and all(self.path(o).is_file() for o in d.get("outputs", []))

    def mark_done(self, stage: str, stage_hash: str, outputs):
        self.write(f".done/{stage}.json", json.dumps({"hash": stage_hash, "outputs": sorted(outputs)},
                                                      indent=1) + "\n")

    def clear(self, stage: str):
        m = self.marker(stage)
        if m.exists():
            m.unlink()


class RunLock:
    """Exclusive ownership of a run directory via an O_EXCL lock file."""

    def __init__(self, root: Path):
        self.path = Path(root) / ".lock"

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        for _ in range(2):
            try:
                fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
            except FileExistsError:
                if self._stale():
                    self.path.unlink(missing_ok=True)
                    continue
                raise StageFailure(f"run directory {self.path.parent} is locked by another process")
            with os.fdopen(fd, "w") as fh:
                fh.write(str(os.getpid()))
            return self
        raise StageFailure(f"could not acquire {self.path}")

    def _stale(self) -> bool:
        try:
            pid = int(self.path.read_text().strip() or "0")
        except (OSError, ValueError):
            return True
        if pid <= 0:
            return True
        try:
            os.kill(pid, 0)
        except ProcessLookupError:
            return True
        except PermissionError:
            return False
        return False

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)


def header(stage: str, h: str) -> str:
    return f"config_hash={h} stage={stage}"


def check_header(meta_hash: str | None, expected: str, what: str):
    if meta_hash != expected:
        raise ConfigMismatch(f"{what} was produced under config hash {meta_hash}, current config expects "
                             f"{expected}; re-run the upstream stage")


def _csv_hash(text: str) -> str | None:
    first = text.split("\n", 1)[0]
    if first.startswith("#"):
        for item in first[1:].split():
            if item.startswith("config_hash="):
                return item.split("=", 1)[1]
    return None


def _svg_with_header(svg_text: str, hdr: str) -> str:
    return svg_text.replace(">", f">\n<!-- {hdr} -->", 1)


# --------------------------------------------------------------------------
# extract


def _extract_one(job):
    path, ref, label, split, params, dump_dir = job
    try:
        clip = read_wav(path, label=label, split=split)
        clip = AudioClip(clip.samples, clip.sample_rate, ref, label, split, clip.metadata)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            fv = extract_clip_features(clip, params)
        if dump_dir:
            _debug_dump(clip, params, dump_dir)
        return fv, None
    except (DataError, OSError, ValueError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def _debug_dump(clip, params, dump_dir):
    stem = clip.source_path.replace("/", "__").replace("\\", "__")
    d = Path(dump_dir)
    d.mkdir(parents=True, exist_ok=True)
    trimmed = trim_silence(clip, params.trim_db, params.framing.window_ms, params.framing.hop_ms)
    (d / f"{stem}.spectrogram.csv").write_text(dsp.spectrogram_csv(dsp.stft(trimmed, params.framing)))
    track = pitch.yin_f0(trimmed, params.fmin, params.fmax, params.yin_framing, params.yin_threshold)
    (d / f"{stem}.pitch.csv").write_text(track.to_csv())


def _clip_ref(path: str, root: Path) -> str:
    try:
        return Path(path).resolve().relative_to(root.resolve()).as_posix()
    except ValueError:
        return str(path)


def run_extract(cfg: ExperimentConfig, rd: RunDir, debug_dump: bool = False) -> list:
    if not cfg.dataset:
        raise DataError("no dataset configured (set 'dataset' or pass --dataset)")
    manifest = scan_dataset(cfg.dataset, cfg.condition)
    root = Path(cfg.dataset)
    base = root.parent if root.is_file() else root
    params = cfg.extraction.params()
    dump = str(rd.path("debug")) if debug_dump else None
    jobs = [(e.path, _clip_ref(e.path, base), e.label, e.split, params, dump) for e in manifest.entries]
    log.info("extracting %d clips with %d worker(s)", len(jobs), cfg.workers)
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            results = list(ex.map(_extract_one, jobs, chunksize=8))
    else:
        results = [_extract_one(j) for j in jobs]
    vectors, skipped = [], []
    for job, (fv, err) in zip(jobs, results):
        if fv is None:
            skipped.append((job[1], err))
            log.warning("skipped %s: %s", job[1], err)
        else:
            vectors.append(fv)
    h = cfg.extract_hash()
    buf = io.StringIO()
    buf.write(f"# {header('extract', h)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["clip", "error"])
    w.writerows(skipped)
    outs = [rd.write("skipped.csv", buf.getvalue())]
    frac = len(skipped) / max(1, len(jobs))
    if frac > cfg.extraction.max_fail_frac:
        raise DataError(f"{len(skipped)} of {len(jobs)} clips failed ({frac:.1%}); see skipped.csv")
    outs.append(rd.write("features.csv", write_feature_csv(vectors, FEATURE_NAMES, header("extract", h))))
    log.info("extracted %d clips, skipped %d", len(vectors), len(skipped))
    return outs


def load_table(cfg: ExperimentConfig, rd: RunDir) -> FeatureTable:
    text = rd.read("features.csv")
    vectors, meta = read_feature_csv(text)
    check_header(meta.get("config_hash"), cfg.extract_hash(), "features.csv")
    if not vectors:
        raise DataError("feature table is empty")
    return FeatureTable.from_vectors(vectors)


# --------------------------------------------------------------------------
# analyze


def run_analyze(cfg: ExperimentConfig, rd: RunDir) -> list:
    table = clean(load_table(cfg, rd))
    h = cfg.analyze_hash()
    hdr = header("analyze", h)
    _, report = select_features(table, cfg.alpha)
    outs = [rd.write("analysis/anova.csv", report.to_csv(hdr))]
    train = table.train_rows()
    for label in ClipLabel:
        cm = correlation_matrix(train, label)
        text = cm.to_csv(hdr)
        outs.append(rd.write(f"analysis/corr_{label.value}.csv", text))
        outs.append(rd.write(f"analysis/corr_{label.value}.svg",
                             _svg_with_header(svg.heatmap_svg(text, f"{label.value} correlations"), hdr)))
        if cm.constant:
            log.warning("constant features in %s rows: %s", label.value, ", ".join(cm.constant))
    for name in table.names:
        try:
            hist = class_histograms(train, name, cfg.hist_bins)
        except DataError as exc:
            log.warning("no histogram for %s: %s", name, exc)
            continue
        text = f"# {hdr}\n" + svg.histogram_csv(hist)
        outs.append(rd.write(f"analysis/hist/{name}.csv", text))
        outs.append(rd.write(f"analysis/hist/{name}.svg", _svg_with_header(svg.histogram_svg(text, name), hdr)))
    return outs


# --------------------------------------------------------------------------
# train


def prepare(cfg: ExperimentConfig, rd: RunDir):
    """Clean, select and standardise; returns (preprocessor, scaled table, anova report)."""
    table = clean(load_table(cfg, rd))
    kept, report = select_features(table, cfg.alpha)
    sub = table.columns(kept)
    pre = fit_preprocessor(sub)
    return pre, pre.apply(sub), report


def _model_kwargs(cfg: ExperimentConfig, variant: str) -> dict:
    m = cfg.model
    cache = m.svm_cache_mb * 1024 * 1024
    if variant == "LogReg":
        return {"l2": m.logreg_l2}
    if variant == "LinearSVM":
        return {"C": m.linear_svm_C, "tol": m.svm_tol, "cache_bytes": cache}
    if variant == "GMM":
        g = cfg.gmm
        return {"k": g.k, "seed": cfg.seed, "covariance_type": g.covariance, "n_restarts": g.restarts,
                "max_iter": g.max_iter, "tol": g.tol}
    return {}


def run_train(cfg: ExperimentConfig, rd: RunDir) -> list:
    pre, table, _ = prepare(cfg, rd)
    tr = table.train_rows()
    data = LabeledMatrix(tr.X, tr.y, tuple(table.names))
    outs = []
    sel_hdr = {"config_hash": cfg.select_hash(), "stage": "train"}
    body = json.loads(pre.to_json())
    body["header"] = sel_hdr
    outs.append(rd.write("models/preprocessor.json", json.dumps(body, indent=1, sort_keys=True) + "\n"))
    ok = 0
    for variant in cfg.models:
        mh = cfg.model_hash(variant)
        extra = {"config_hash": mh, "stage": "train"}
        try:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", NonConvergenceWarning)
                if variant == Variant.RBF_SVM.value:
                    g = cfg.grid
                    plan = stratified_kfold(data.y, g.folds, g.cv_seed)
                    res = grid_search(data, g.C, g.gamma, plan, workers=cfg.workers,
                                      tol=cfg.model.svm_tol, cache_bytes=cfg.model.svm_cache_mb * 1024 * 1024)
                    outs.append(rd.write("models/grid_search.csv", f"# {header('train', mh)}\n" + res.to_csv()))
                    model = train_model(variant, data, C=res.best.C, gamma=res.best.gamma, tol=cfg.model.svm_tol,
                                        cache_bytes=cfg.model.svm_cache_mb * 1024 * 1024)
                    extra["grid_winner"] = {"C": res.best.C, "gamma": res.best.gamma,
                                            "cv_accuracy": res.best.mean_acc, "refit": "full training split"}
                else:
                    model = train_model(variant, data, **_model_kwargs(cfg, variant))
            for wmsg in caught:
                log.warning("%s: %s", variant, wmsg.message)
        except (SpoofCuesError, ValueError, np.linalg.LinAlgError, ArithmeticError) as exc:
            log.error("training %s failed: %s", variant, exc)
            continue
        outs.append(rd.write(f"models/{variant}.json", model_to_json(model, extra) + "\n"))
        ok += 1
        log.info("trained %s", variant)
    if ok == 0:
        raise StageFailure("every model failed to train")
    return outs


# --------------------------------------------------------------------------
# evaluate


def load_models(cfg: ExperimentConfig, rd: RunDir, fingerprint: str) -> dict:
    models = {}
    for variant in cfg.models:
        p = rd.path(f"models/{variant}.json")
        if not p.is_file():
            log.warning("no model file for %s; skipping", variant)
            continue
        text = p.read_text(encoding="utf-8")
        hdr = json.loads(text).get("header", {})
        check_header(hdr.get("config_hash"), cfg.model_hash(variant), p.name)
        m = model_from_json(text)
        if m.fingerprint != fingerprint:
            raise SchemaMismatch(f"{p.name} was trained on a different feature schema")
        models[variant] = m
    if not models:
        raise StageFailure("no trained models found")
    return models


def run_evaluate(cfg: ExperimentConfig, rd: RunDir) -> list:
    body = json.loads(rd.read("models/preprocessor.json"))
    check_header(body.get("header", {}).get("config_hash"), cfg.select_hash(), "preprocessor.json")
    pre = Preprocessor.from_json(json.dumps(body))
    table = pre.apply(clean(load_table(cfg, rd)).columns(pre.names))
    names = tuple(pre.names)
    fp = schema_fingerprint(names)
    tr, te = table.train_rows(), table.test_rows()
    dtr = LabeledMatrix(tr.X, tr.y, names)
    dte = LabeledMatrix(te.X, te.y, names)
    models = load_models(cfg, rd, fp)
    h = cfg.evaluate_hash()
    hdr = header("evaluate", h)
    train_r = {n: evaluate(m, dtr, "train", n) for n, m in models.items()}
    test_r = {n: evaluate(m, dte, "test", n) for n, m in models.items()}
    outs = [rd.write("eval/eval_table.csv", eval_table_csv(train_r, test_r, hdr))]
    roc_csv, det_csv = {}, {}
    for n, r in test_r.items():
        roc_csv[n] = f"# {hdr}\n" + r.roc.to_csv()
        det_csv[n] = f"# {hdr}\n" + r.det.to_csv()
        outs.append(rd.write(f"eval/curves/{n}_roc.csv", roc_csv[n]))
        outs.append(rd.write(f"eval/curves/{n}_det.csv", det_csv[n]))
        outs.append(rd.write(f"eval/curves/{n}_det.svg",
                             _svg_with_header(svg.det_svg({n: det_csv[n]}, f"{n} DET"), hdr)))
    outs.append(rd.write("eval/roc_det.svg", _svg_with_header(svg.roc_det_svg(roc_csv, det_csv), hdr)))
    if len(test_r) >= 2:
        order = sorted(test_r, key=lambda n: (-test_r[n].auc, n))
        comp = compare_all([test_r[n] for n in order], dte.y)
        outs.append(rd.write("eval/mcnemar.csv", f"# {hdr}\n" + comp.to_csv()))
        lines = [f"# {hdr}", "better,worse,b,c,p_exact,p_asymptotic"]
        for a, b in comp.edges:
            r = comp.results[(a, b)]
            lines.append(f"{a},{b},{r.b},{r.c},{r.p_exact!r},{r.p_asymptotic!r}")
        outs.append(rd.write("eval/ranking.csv", "\n".join(lines) + "\n"))
    return outs


# --------------------------------------------------------------------------
# orchestration


STAGE_FN = {"extract": run_extract, "analyze": run_analyze, "train": run_train, "evaluate": run_evaluate}


def stage_hash(cfg: ExperimentConfig, stage: str) -> str:
    return {"extract": cfg.extract_hash, "analyze": cfg.analyze_hash, "train": cfg.train_hash,
            "evaluate": cfg.evaluate_hash}[stage]()


def _copy_config(cfg: ExperimentConfig, rd: RunDir):
    text = cfg.source_text if cfg.source_text else cfg.to_yaml()
    rd.write("config.yaml", text)
    rd.write("config.effective.yaml", cfg.to_yaml())


def run_stage(cfg: ExperimentConfig, stage: str, debug_dump: bool = False, force: bool = True) -> bool:
    """Run one stage; returns False if it was skipped because its checkpoint is current."""
    rd = RunDir(cfg)
    with RunLock(rd.root):
        _attach_log(rd)
        _copy_config(cfg, rd)
        h = stage_hash(cfg, stage)
        if not force and rd.is_done(stage, h):
            log.info("%s is up to date; skipping", stage)
            return False
        rd.clear(stage)
        log.info("running %s (config_hash=%s)", stage, h)
        fn = STAGE_FN[stage]
        outs = fn(cfg, rd, debug_dump) if stage == "extract" else fn(cfg, rd)
        rd.mark_done(stage, h, outs)
        return True


def run_all(cfg: ExperimentConfig, debug_dump: bool = False) -> list:
    """Run every stage whose checkpoint is missing or stale; returns the stages executed."""
    ran = []
    for stage in STAGES:
        if run_stage(cfg, stage, debug_dump, force=False):
            ran.append(stage)
    rd = RunDir(cfg)
    with RunLock(rd.root):
        write_manifest(cfg, rd)
    return ran


def write_manifest(cfg: ExperimentConfig, rd: RunDir):
    files = {}
    for p in sorted(rd.root.rglob("*")):
        rel = p.relative_to(rd.root).as_posix()
        if not p.is_file() or rel.startswith(".") or rel in ("outputs.json", "summary.md", "run.log"):
            continue
        files[rel] = hashlib.sha256(p.read_bytes()).hexdigest()
    doc = {"condition": cfg.condition, "stages": {s: stage_hash(cfg, s) for s in STAGES}, "files": files}
    rd.write("outputs.json", json.dumps(doc, indent=1, sort_keys=True) + "\n")
    rd.write("summary.md", summary_markdown(cfg, rd))


def summary_markdown(cfg: ExperimentConfig, rd: RunDir) -> str:
    lines = [f"# Run summary: {cfg.condition}", "", f"- dataset: `{cfg.dataset}`",
             f"- train config hash: `{cfg.train_hash()}`", ""]
    p = rd.path("analysis/anova.csv")
    if p.is_file():
        rows = [r for r in csv.reader(ln for ln in p.read_text().splitlines() if not ln.startswith("#"))][1:]
        kept = [r[0] for r in rows if r[3] == "1"]
        dropped = [f"{r[0]} (p={float(r[2]):.3g})" for r in rows if r[3] == "0"]
        lines += ["## Feature selection", "", f"{len(kept)} features kept at alpha={cfg.alpha}.", "",
                  "Dropped: " + (", ".join(dropped) if dropped else "none"), ""]
    p = rd.path("eval/eval_table.csv")
    if p.is_file():
        rows = [r for r in csv.reader(ln for ln in p.read_text().splitlines() if not ln.startswith("#"))]
        lines += ["## Test performance", "", "| " + " | ".join(rows[0]) + " |",
                  "|" + "---|" * len(rows[0])]
        lines += ["| " + " | ".join(r) + " |" for r in rows[1:]]
        lines.append("")
    p = rd.path("eval/ranking.csv")
    if p.is_file():
        rows = [r for r in csv.reader(ln for ln in p.read_text().splitlines() if not ln.startswith("#"))][1:]
        lines += ["## Significant differences (McNemar, p < 0.05)", ""]
        lines += [f"- {r[0]} > {r[1]} (b={r[2]}, c={r[3]}, p={float(r[4]):.3g})" for r in rows] or ["- none"]
        lines.append("")
    return "\n".join(lines)


_LOG_HANDLERS = {}


def _attach_log(rd: RunDir):
    key = str(rd.root.resolve())
    if key in _LOG_HANDLERS:
        return
    h = logging.FileHandler(rd.path("run.log"), encoding="utf-8")
    h.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    log.addHandler(h)
    _LOG_HANDLERS[key] = h


def detach_logs():
    for h in _LOG_HANDLERS.values():
        log.removeHandler(h)
        h.close()
    _LOG_HANDLERS.clear()
