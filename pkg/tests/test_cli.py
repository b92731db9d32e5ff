import hashlib
import json

import pytest

from embdebias import __version__
from embdebias.cli import build_parser, main
from embdebias.data import load_csv, write_csv

SMALL = ["--n-train", "120", "--n-test", "60", "--seed", "7"]
FAST = ["--epochs", "2", "--latent-dim", "4", "--beta-kl", "0.01"]


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out", str(d / "data.csv"), *SMALL]) == 0
    assert main(["train", "--data", str(d / "data.csv"), "--out-checkpoint", str(d / "model.json"), *FAST]) == 0
    assert main(["transform", "--checkpoint", str(d / "model.json"), "--data", str(d / "data.csv"),
                 "--out", str(d / "debiased.csv")]) == 0
    return d


def test_synth_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["synth", "--out", str(a), *SMALL]) == 0
    assert main(["synth", "--out", str(b), *SMALL]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_manifest_records_config_and_version(workdir):
    m = json.loads((workdir / "model.json.manifest.json").read_text())
    assert m["version"] == __version__
    assert m["subcommand"] == "train"
    assert m["config"]["latent_dim"] == 4 and m["seed"] == 0
    assert m["inputs"][str(workdir / "data.csv")] == digest(workdir / "data.csv")


def test_manifest_alone_reproduces_synth(workdir, tmp_path):
    m = json.loads((workdir / "data.csv.manifest.json").read_text())
    cfg = m["config"]
    argv = ["synth", "--out", str(tmp_path / "again.csv"), "--n-train", str(cfg["n_train"]),
            "--n-test", str(cfg["n_test"]), "--seed", str(cfg["seed"])]
    assert main(argv) == 0
    assert (tmp_path / "again.csv").read_bytes() == (workdir / "data.csv").read_bytes()


def test_latent_dim_zero_is_validation_error(workdir, tmp_path, capsys):
    code = main(["train", "--data", str(workdir / "data.csv"), "--out-checkpoint", str(tmp_path / "m.json"),
                 "--latent-dim", "0"])
    assert code == 1
    assert "--latent-dim" in capsys.readouterr().err
    assert not (tmp_path / "m.json").exists()


def test_unknown_flag_rejected(capsys):
    assert main(["synth", "--out", "x.csv", "--bogus", "1"]) == 1
    assert "--bogus" in capsys.readouterr().err


def test_synth_validation_names_flag(tmp_path, capsys):
    assert main(["synth", "--out", str(tmp_path / "x.csv"), "--dim", "8"]) == 1
    assert "--dim" in capsys.readouterr().err


def test_missing_input_file(tmp_path, capsys):
    assert main(["probe", "--data", str(tmp_path / "nope.csv"), "--out-report", str(tmp_path / "r.json")]) == 1
    assert "nope.csv" in capsys.readouterr().err


def test_corrupt_checkpoint_is_reported(workdir, tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    code = main(["transform", "--checkpoint", str(bad), "--data", str(workdir / "data.csv"),
                 "--out", str(tmp_path / "o.csv")])
    assert code == 1
    assert "bad.json" in capsys.readouterr().err


def test_runtime_failure_exit_code(workdir, tmp_path, capsys):
    ds = load_csv(workdir / "data.csv")
    flat = ds.replace(cancer_1y=ds.cancer_1y * 0)
    write_csv(flat, tmp_path / "flat.csv")
    assert main(["probe", "--data", str(tmp_path / "flat.csv"), "--out-report", str(tmp_path / "r.json")]) == 2
    assert "both classes" in capsys.readouterr().err


def test_fairness_report_has_before_and_after(workdir):
    out = workdir / "fair.json"
    before = digest(workdir / "data.csv"), digest(workdir / "debiased.csv")
    assert main(["fairness", "--original", str(workdir / "data.csv"), "--debiased", str(workdir / "debiased.csv"),
                 "--out-report", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert set(doc) >= {"before", "after", "format_version"}
    assert doc["before"]["label"] == "original" and doc["after"]["label"] == "debiased"
    assert (digest(workdir / "data.csv"), digest(workdir / "debiased.csv")) == before


def test_probe_subset(workdir):
    out = workdir / "probe.json"
    assert main(["probe", "--data", str(workdir / "data.csv"), "--out-report", str(out),
                 "--attributes", "sex", "--tasks", "cancer_2y"]) == 0
    doc = json.loads(out.read_text())
    assert set(doc["probes"]) == {"sex", "cancer_2y"}


def test_probe_rejects_unknown_task(workdir, tmp_path, capsys):
    assert main(["probe", "--data", str(workdir / "data.csv"), "--out-report", str(tmp_path / "r.json"),
                 "--tasks", "mortality"]) == 1
    assert "--tasks" in capsys.readouterr().err


def test_poison_outputs(workdir):
    out = workdir / "poison"
    assert main(["poison", "--original", str(workdir / "data.csv"), "--debiased", str(workdir / "debiased.csv"),
                 "--out-dir", str(out), "--fractions", "0,1"]) == 0
    lines = (out / "poison_curve.csv").read_text().splitlines()
    assert len(lines) == 1 + 2 * 2 * 2 * 2
    svgs = sorted(p.name for p in out.glob("*.svg"))
    assert len(svgs) == 4 and "poison_cancer_1y_male.svg" in svgs
    assert json.loads((out / "manifest.json").read_text())["config"]["fractions"] == [0.0, 1.0]


def test_poison_bad_fractions(workdir, tmp_path, capsys):
    assert main(["poison", "--original", str(workdir / "data.csv"), "--debiased", str(workdir / "debiased.csv"),
                 "--out-dir", str(tmp_path), "--fractions", "1,0.5"]) == 1
    assert "--fractions" in capsys.readouterr().err


def test_sweep_outputs(workdir):
    out = workdir / "sweep"
    assert main(["sweep", "--data", str(workdir / "data.csv"), "--dims", "4,2", "--out-dir", str(out),
                 "--epochs", "1"]) == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0] == "latent_dim,sex_auc,age_mae,task1_auc,task2_auc"
    assert [l.split(",")[0] for l in lines[1:]] == ["2", "4"]
    assert (out / "sweep.svg").exists()


def test_sweep_invalid_dim(workdir, tmp_path, capsys):
    assert main(["sweep", "--data", str(workdir / "data.csv"), "--dims", "0,4", "--out-dir", str(tmp_path)]) == 1
    assert "--dims" in capsys.readouterr().err


@pytest.mark.parametrize("command", ["synth", "train", "transform", "probe", "fairness", "poison", "sweep"])
def test_help_lists_defaults(command):
    parser = build_parser()
    sub = parser._subparsers._group_actions[0].choices[command]
    text = sub.format_help()
    if command == "train":
        for needle in ("default: 100", "default: 32", "default: 0.0005", "default: 0.002", "default: 500"):
            assert needle in text
    for action in sub._actions:
        if action.option_strings and not action.required and action.dest != "help":
            assert action.option_strings[0] in text
