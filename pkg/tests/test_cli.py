import csv
import re
import hashlib
import json
import shutil

import numpy as np
import pytest

from spoofcues import cli, pipeline, svg
from spoofcues.audio import encode_wav
from spoofcues.config import ExperimentConfig
from spoofcues.errors import ConfigMismatch
from spoofcues.features import FEATURE_NAMES
from spoofcues.synthetic import SynthConfig, synth_clip, write_corpus

FAST = {"gmm": {"k": 1, "restarts": 1}, "grid": {"C": [1.0], "gamma": ["scale"]}}


def _cfg(dataset, out, **kw):
    d = {"dataset": str(dataset), "out": str(out), **FAST}
    d.update(kw)
    return ExperimentConfig.from_dict(d)


def _table(path):
    return list(csv.reader(ln for ln in path.read_text().splitlines() if not ln.startswith("#")))


def _tree_hashes(root):
    out = {}
    for p in sorted(root.rglob("*")):
        rel = p.relative_to(root).as_posix()
        if p.is_file() and rel != "run.log" and not rel.startswith(".") and ".lock" not in rel:
            out[rel] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    return write_corpus(tmp_path_factory.mktemp("c") / "corpus", n_train=12, n_test=6, seed=3)


@pytest.fixture(scope="module")
def full_run(corpus, tmp_path_factory):
    cfg = _cfg(corpus, tmp_path_factory.mktemp("runs"))
    pipeline.run_all(cfg)
    return cfg


def _toy_manifest(tmp_path, n=6, corrupt=False):
    rng = np.random.default_rng(0)
    lines = ["path,label,split"]
    for i in range(n):
        fake = i % 2 == 1
        split = "train" if i < n - 2 else "test"
        name = f"clip{i}.wav"
        (tmp_path / name).write_bytes(encode_wav(synth_clip(rng, fake, SynthConfig()), 16000, "pcm16"))
        lines.append(f"{name},{'fake' if fake else 'real'},{split}")
    if corrupt:
        (tmp_path / "broken.wav").write_bytes(b"RIFF\x10\x00\x00\x00WAVEjunk")
        lines.append("broken.wav,real,train")
    m = tmp_path / "manifest.csv"
    m.write_text("\n".join(lines) + "\n")
    return m


# -- exit codes ------------------------------------------------------------------------------

def test_exit_usage(capsys):
    assert cli.main(["run-all", "--models", "Bogus"]) == cli.EXIT_USAGE
    with pytest.raises(SystemExit) as e:
        cli.main(["no-such-command"])
    assert e.value.code == cli.EXIT_USAGE


def test_exit_data(tmp_path):
    assert cli.main(["extract", "--dataset", str(tmp_path / "missing"), "--out", str(tmp_path)]) == cli.EXIT_DATA


def test_exit_stage(tmp_path, corpus):
    out = tmp_path / "r"
    # evaluate before anything was trained
    assert cli.main(["evaluate", "--dataset", str(corpus), "--out", str(out)]) in (cli.EXIT_DATA, cli.EXIT_STAGE)
    assert cli.main(["extract", "--dataset", str(corpus), "--out", str(out)]) == 0
    assert cli.main(["evaluate", "--dataset", str(corpus), "--out", str(out)]) == cli.EXIT_STAGE


# -- extraction ------------------------------------------------------------------------------

def test_toy_manifest_table(tmp_path):
    m = _toy_manifest(tmp_path)
    cfg = _cfg(m, tmp_path / "runs")
    pipeline.run_stage(cfg, "extract")
    rows = _table(pipeline.RunDir(cfg).path("features.csv"))
    assert rows[0] == ["clip", "label", "split", *FEATURE_NAMES]
    assert len(rows) == 7
    assert sorted(r[0] for r in rows[1:]) == [f"clip{i}.wav" for i in range(6)]


def test_corrupt_clip_skipped(tmp_path):
    m = _toy_manifest(tmp_path, n=20, corrupt=True)
    out = tmp_path / "runs"
    assert cli.main(["extract", "--dataset", str(m), "--out", str(out)]) == 0
    rd = out / "default"
    assert len(_table(rd / "features.csv")) == 21
    skipped = _table(rd / "skipped.csv")
    assert [r[0] for r in skipped[1:]] == ["broken.wav"]


def test_too_many_failures(tmp_path):
    m = _toy_manifest(tmp_path, n=4, corrupt=True)
    assert cli.main(["extract", "--dataset", str(m), "--out", str(tmp_path / "runs")]) == cli.EXIT_DATA


# -- full runs -------------------------------------------------------------------------------

def test_run_outputs(full_run):
    rd = pipeline.RunDir(full_run)
    for rel in ("features.csv", "skipped.csv", "analysis/anova.csv", "analysis/corr_real.csv",
                "analysis/corr_fake.svg", "models/preprocessor.json", "models/grid_search.csv",
                "eval/eval_table.csv", "eval/mcnemar.csv", "eval/roc_det.svg", "outputs.json", "summary.md",
                "config.yaml"):
        assert rd.path(rel).is_file(), rel
    rows = _table(rd.path("eval/eval_table.csv"))
    assert rows[0] == ["model", "train_acc", "train_auc", "test_acc", "test_auc", "test_eer"]
    assert len(rows) == 8
    aucs = [float(r[4]) for r in rows[1:]]
    assert aucs == sorted(aucs, reverse=True)
    man = json.loads(rd.path("outputs.json").read_text())
    for rel, h in man["files"].items():
        assert hashlib.sha256(rd.path(rel).read_bytes()).hexdigest() == h


def test_rerun_byte_identical(full_run):
    root = pipeline.RunDir(full_run).root
    before = _tree_hashes(root)
    pipeline.detach_logs()
    shutil.rmtree(root)
    assert pipeline.run_all(full_run) == list(pipeline.STAGES)
    assert _tree_hashes(root) == before


def test_resume_reruns_only_evaluate(full_run, tmp_path):
    src = pipeline.RunDir(full_run).root
    dst = tmp_path / full_run.condition
    shutil.copytree(src, dst)
    cfg = ExperimentConfig.from_dict({**full_run.to_dict(), "out": str(tmp_path)})
    before = _tree_hashes(dst)
    shutil.rmtree(dst / "eval")
    assert pipeline.run_all(cfg) == ["evaluate"]
    assert pipeline.run_all(cfg) == []
    # the config copies and the manifest record the new output root
    moved = {"config.yaml", "config.effective.yaml", "outputs.json"}
    after = _tree_hashes(dst)
    assert {k: v for k, v in after.items() if k not in moved} == {k: v for k, v in before.items() if k not in moved}


def test_single_model(corpus, tmp_path):
    cfg = _cfg(corpus, tmp_path, models=["GNB"])
    pipeline.run_all(cfg)
    rd = pipeline.RunDir(cfg)
    assert sorted(p.name for p in rd.path("models").glob("*.json")) == ["GNB.json", "preprocessor.json"]
    assert len(_table(rd.path("eval/eval_table.csv"))) == 2
    assert not rd.path("eval/mcnemar.csv").exists()


def test_seed_changes_only_gmm(full_run, tmp_path):
    cfg = ExperimentConfig.from_dict({**full_run.to_dict(), "out": str(tmp_path), "seed": 7,
                                      "gmm": {"k": 2, "restarts": 1}})
    base = ExperimentConfig.from_dict({**full_run.to_dict(), "out": str(tmp_path / "b"),
                                       "gmm": {"k": 2, "restarts": 1}})
    pipeline.run_all(cfg)
    pipeline.run_all(base)
    a, b = pipeline.RunDir(cfg).path("models"), pipeline.RunDir(base).path("models")
    changed = sorted(p.name for p in a.glob("*.json") if p.read_bytes() != (b / p.name).read_bytes())
    assert changed == ["GMM.json"]


def test_conditions_separate(corpus, tmp_path):
    for cond in ("a", "b"):
        cfg = _cfg(corpus, tmp_path, condition=cond, models=["LDA"])
        pipeline.run_stage(cfg, "extract")
    assert (tmp_path / "a" / "features.csv").is_file() and (tmp_path / "b" / "features.csv").is_file()


def test_config_mismatch_refused(full_run, tmp_path):
    shutil.copytree(pipeline.RunDir(full_run).root, tmp_path / full_run.condition)
    changed = ExperimentConfig.from_dict({**full_run.to_dict(), "out": str(tmp_path),
                                          "extraction": {"trim_db": -30.0}})
    with pytest.raises(ConfigMismatch):
        pipeline.run_stage(changed, "train")


# -- analysis artifacts ----------------------------------------------------------------------

def test_histogram_counts(full_run):
    rd = pipeline.RunDir(full_run)
    rows = _table(rd.path("analysis/hist/f0_mean_v.csv"))
    head = rows[0]
    ri, fi = head.index("real"), head.index("fake")
    assert sum(int(r[ri]) for r in rows[1:]) == 12
    assert sum(int(r[fi]) for r in rows[1:]) == 12


def test_svg_regenerable(full_run):
    rd = pipeline.RunDir(full_run)
    text = rd.path("analysis/hist/f0_mean_v.csv").read_text()
    regen = svg.histogram_svg(text, "f0_mean_v")
    stored = rd.path("analysis/hist/f0_mean_v.svg").read_text()
    # the stored copy differs only by its config-hash comment
    assert re.sub(r"<!-- config_hash=[^>]*-->\n", "", stored) == regen


def test_two_pitch_modes_real(tmp_path):
    root = write_corpus(tmp_path / "c", n_train=60, n_test=4, seed=1)
    cfg = _cfg(root, tmp_path / "r", models=["GNB"], hist_bins=20)
    pipeline.run_stage(cfg, "extract")
    pipeline.run_stage(cfg, "analyze")
    rows = _table(pipeline.RunDir(cfg).path("analysis/hist/f0_mean_v.csv"))
    ri = rows[0].index("real")
    lo = [float(r[0]) for r in rows[1:]]
    counts = np.array([int(r[ri]) for r in rows[1:]])
    lo = np.array(lo)
    # both bands are populated and the gap between them is nearly empty
    assert counts[lo < 150].sum() > 15 and counts[lo > 170].sum() > 15
    assert counts[(lo >= 150) & (lo < 170)].sum() <= 3


def test_centroid_rolloff_correlated(full_run):
    rows = _table(pipeline.RunDir(full_run).path("analysis/corr_real.csv"))
    names = rows[0][1:]
    M = {r[0]: dict(zip(names, map(float, r[1:]))) for r in rows[1:]}
    assert M["spec_centroid_mean"]["spec_rolloff_mean"] > 0.5


# -- CLI surface -----------------------------------------------------------------------------

def test_quiet_stdout(corpus, tmp_path, capsys):
    args = ["run-all", "--dataset", str(corpus), "--out", str(tmp_path), "--models", "LDA,GNB"]
    assert cli.main(args) == 0
    assert capsys.readouterr().out == ""
    assert cli.main(args + ["--print-summary"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("# Run summary") and "LDA" in out


def test_synth_command(tmp_path):
    assert cli.main(["synth", "--out", str(tmp_path / "s"), "--n-train", "2", "--n-test", "1"]) == 0
    assert len(list((tmp_path / "s").rglob("*.wav"))) == 6
