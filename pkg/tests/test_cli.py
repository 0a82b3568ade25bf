import csv
import hashlib

import numpy as np
import pytest

from dcizip.cli import RunConfig, main
from dcizip.errors import ConfigError

MINI = "tti_count 700\nnum_ues 2\nepochs 1\nL 2\nrnn_L 2\nmax_frames 150\nmin_errors 20\n"


def _digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    cfg = d / "mini.cfg"
    cfg.write_text(MINI)
    base = ["--config", str(cfg), "--out", str(d)]
    assert main(base + ["gen"]) == 0
    assert main(base + ["train"]) == 0
    assert main(base + ["eval"]) == 0
    assert main(base + ["fer", "--snr-db=-2,0"]) == 0
    return d, base


def test_gen_is_reproducible(tmp_path):
    for name in ("a", "b"):
        assert main(["--seed", "7", "--out", str(tmp_path / name), "gen", "--tti-count", "300"]) == 0
    assert _digest(tmp_path / "a" / "trace.dcit") == _digest(tmp_path / "b" / "trace.dcit")
    assert main(["--seed", "8", "--out", str(tmp_path / "c"), "gen", "--tti-count", "300"]) == 0
    assert _digest(tmp_path / "a" / "trace.dcit") != _digest(tmp_path / "c" / "trace.dcit")


def test_missing_schema_is_config_error(tmp_path, capsys):
    assert main(["--schema", str(tmp_path / "none.schema"), "--out", str(tmp_path), "gen"]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_bad_config_file(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("epochs many\n")
    assert main(["--config", str(bad), "--out", str(tmp_path), "gen"]) == 2
    bad.write_text("no_such_key 1\n")
    assert main(["--config", str(bad), "--out", str(tmp_path), "gen"]) == 2
    assert main(["--config", str(tmp_path / "absent.cfg"), "--out", str(tmp_path), "gen"]) == 2


def test_commands_without_inputs_fail_cleanly(tmp_path):
    assert main(["--out", str(tmp_path), "train"]) == 2
    assert main(["--out", str(tmp_path), "fer"]) == 2


def test_run_config_parsing():
    kw = RunConfig.from_text("# comment\nepochs 3\nlr 0.01\norder ascending\n")
    cfg = RunConfig(**kw)
    assert (cfg.epochs, cfg.lr, cfg.order) == (3, 0.01, "ascending")
    assert RunConfig(snr_db="-1, 0 ,1").snr_grid() == (-1.0, 0.0, 1.0)
    with pytest.raises(ConfigError):
        RunConfig(snr_db=" ").snr_grid()
    with pytest.raises(ConfigError):
        RunConfig(methods="identity,zip").method_list()


def test_empty_snr_grid(run_dir):
    d, base = run_dir
    assert main(base + ["fer", "--snr-db="]) == 2


def test_pipeline_outputs(run_dir):
    d, _ = run_dir
    for name in ("trace.dcit", "models/ue0.huffman.txt", "models/ue1.transformer.dcim", "models/ue1.rnn.dcim",
                 "models/training_curves.csv", "report.csv", "summary.csv", "frames.dcif", "fer.csv",
                 "bitmap_joint.csv"):
        assert (d / name).exists(), name
    summary = {r["method"]: float(r["mean_ratio"]) for r in _rows(d / "summary.csv")}
    assert list(summary) == ["identity", "huffman", "adaptive", "rnn", "transformer", "joint"]
    assert summary["identity"] == 1.0
    rows = _rows(d / "report.csv")
    assert all(r["lossless_ok"] == "1" for r in rows)
    per = {}
    for r in rows:
        per.setdefault(r["method"], []).append(int(r["compressed_bits"]))
    # per message joint = min(transformer, huffman) + one selector bit
    assert np.mean(per["joint"]) <= np.mean(per["transformer"]) + 1
    bm = np.loadtxt(d / "bitmap_huffman.csv", delimiter=",")
    assert bm.shape[1] == 39 and set(np.unique(bm)) <= {0, 1, 2}


def test_fer_curves(run_dir):
    d, _ = run_dir
    labels = {r["curve_label"] for r in _rows(d / "fer.csv")}
    assert labels == {"uncompressed-39", "HC", "Joint"}


def test_fer_rerun_identical(run_dir, tmp_path):
    d, base = run_dir
    out = tmp_path / "again"
    assert main(base[:2] + ["--out", str(out), "fer", "--report", str(d / "report.csv"), "--snr-db=-2,0"]) == 0
    assert (out / "fer.csv").read_bytes() == (d / "fer.csv").read_bytes()


def test_ascending_order_training(run_dir, tmp_path):
    d, base = run_dir
    models = tmp_path / "asc"
    assert main(base + ["train", "--order", "ascending", "--kinds", "transformer", "--models", str(models)]) == 0
    assert (models / "ue0.transformer.dcim").exists() and not (models / "ue0.rnn.dcim").exists()
    assert main(base + ["eval", "--models", str(models), "--methods", "identity,transformer"]) == 0


def test_inspect(run_dir, capsys):
    d, base = run_dir
    assert main(base + ["inspect"]) == 0
    out = capsys.readouterr().out
    assert "dictionary=382" in out and "descending order" in out
