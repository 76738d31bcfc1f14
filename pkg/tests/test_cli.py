import json
import os

import numpy as np
import pytest

from diffpat.cli import main, derive_seed
from diffpat.data import load_sparse, save_sparse
from diffpat.model import init_params, save_checkpoint


def run(*argv):
    return main(list(argv))


def read(path):
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def strip_timings(manifest_text):
    d = json.loads(manifest_text)
    d.pop("timings_seconds", None)
    return d


GEN = ["generate", "--m", "80", "--low-dim", "--classes", "2",
       "--n-per-class", "50", "--seed", "7"]


@pytest.fixture()
def gen_dir(tmp_path):
    out = tmp_path / "gen"
    assert run(*GEN, "--out", str(out)) == 0
    return out


# ---------------------------------------------------------------- generate

def test_generate_artifacts_and_counts(gen_dir):
    D = load_sparse(gen_dir / "data.txt", gen_dir / "labels.txt")
    assert D.n == 100 and D.K == 2
    assert (gen_dir / "ground_truth.json").exists()
    assert (gen_dir / "generate.manifest.json").exists()


def test_generate_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run(*GEN, "--out", str(a))
    run(*GEN, "--out", str(b))
    assert read(a / "data.txt") == read(b / "data.txt")
    assert read(a / "labels.txt") == read(b / "labels.txt")
    assert read(a / "ground_truth.json") == read(b / "ground_truth.json")
    assert (strip_timings(read(a / "generate.manifest.json"))
            == strip_timings(read(b / "generate.manifest.json")))


def test_generate_infeasible_spec(tmp_path, capsys):
    rc = run("generate", "--m", "8", "--out", str(tmp_path / "x"))
    assert rc == 1
    assert "error:" in capsys.readouterr().err


# ---------------------------------------------------------------- train

def train_args(gen_dir, out, extra=()):
    return ["train", "--data", str(gen_dir / "data.txt"),
            "--labels", str(gen_dir / "labels.txt"),
            "--h", "20", "--epochs", "2", "--seed", "3",
            "--out", str(out), *extra]


def test_train_artifacts(gen_dir, tmp_path):
    out = tmp_path / "run"
    assert run(*train_args(gen_dir, out)) == 0
    assert (out / "model.ckpt").exists()
    csv_text = read(out / "train_report.csv")
    assert csv_text.startswith("epoch,recon_loss,class_loss")
    assert len(csv_text.strip().splitlines()) == 3  # header + 2 epochs
    manifest = json.loads(read(out / "train.manifest.json"))
    assert manifest["config"]["h"] == 20
    assert "data" in manifest["input_hashes"]


def test_train_rerun_identical_checkpoint(gen_dir, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run(*train_args(gen_dir, a))
    run(*train_args(gen_dir, b))
    with open(a / "model.ckpt", "rb") as fa, open(b / "model.ckpt", "rb") as fb:
        assert fa.read() == fb.read()


def test_train_config_file_and_flag_override(gen_dir, tmp_path):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("h = 10  # comment\nepochs = 1\n")
    out = tmp_path / "run"
    rc = run("train", "--data", str(gen_dir / "data.txt"),
             "--labels", str(gen_dir / "labels.txt"),
             "--config", str(cfg), "--h", "12", "--seed", "0",
             "--out", str(out))
    assert rc == 0
    manifest = json.loads(read(out / "train.manifest.json"))
    assert manifest["config"]["h"] == 12  # flag wins over file
    assert manifest["config"]["epochs"] == 1


def test_train_unknown_config_key(gen_dir, tmp_path, capsys):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("width = 10\n")
    rc = run("train", "--data", str(gen_dir / "data.txt"),
             "--labels", str(gen_dir / "labels.txt"),
             "--config", str(cfg), "--out", str(tmp_path / "r"))
    assert rc == 1
    assert "width" in capsys.readouterr().err


def test_train_resume_runs(gen_dir, tmp_path):
    first = tmp_path / "first"
    run(*train_args(gen_dir, first))
    second = tmp_path / "second"
    rc = run(*train_args(gen_dir, second,
                         extra=["--resume", str(first / "model.ckpt")]))
    assert rc == 0
    manifest = json.loads(read(second / "train.manifest.json"))
    assert "resume" in manifest["input_hashes"]


def test_train_corrupt_resume(gen_dir, tmp_path, capsys):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"NOTMAGIC" + b"\x00" * 64)
    rc = run(*train_args(gen_dir, tmp_path / "r",
                         extra=["--resume", str(bad)]))
    assert rc == 1
    assert "error:" in capsys.readouterr().err


# ---------------------------------------------------------------- extract

@pytest.fixture()
def trained(gen_dir, tmp_path):
    out = tmp_path / "trained"
    run(*train_args(gen_dir, out))
    return out


def test_extract_artifacts(gen_dir, trained, tmp_path):
    out = tmp_path / "ex"
    rc = run("extract", "--checkpoint", str(trained / "model.ckpt"),
             "--data", str(gen_dir / "data.txt"),
             "--labels", str(gen_dir / "labels.txt"),
             "--grid-e", "0.3", "--grid-c", "0.3",
             "--out", str(out))
    assert rc == 0
    manifest = json.loads(read(out / "extract.manifest.json"))
    assert manifest["config"]["tau_e"] == 0.3
    assert manifest["config"]["tau_c"] == 0.3
    assert (out / "patterns.json").exists() and (out / "patterns.txt").exists()


def test_extract_deterministic(gen_dir, trained, tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        run("extract", "--checkpoint", str(trained / "model.ckpt"),
            "--data", str(gen_dir / "data.txt"),
            "--labels", str(gen_dir / "labels.txt"),
            "--out", str(out))
        outs.append(read(out / "patterns.json"))
    assert outs[0] == outs[1]


def test_extract_shape_mismatch(gen_dir, tmp_path, capsys):
    rng = np.random.default_rng(0)
    ckpt = tmp_path / "wrong.ckpt"
    save_checkpoint(init_params(h=5, m=33, K=2, rng=rng), ckpt)
    rc = run("extract", "--checkpoint", str(ckpt),
             "--data", str(gen_dir / "data.txt"),
             "--labels", str(gen_dir / "labels.txt"),
             "--out", str(tmp_path / "r"))
    assert rc == 1
    assert "m=33" in capsys.readouterr().err


# ---------------------------------------------------------------- eval

def test_eval_end_to_end(gen_dir, trained, tmp_path, capsys):
    ex = tmp_path / "ex"
    run("extract", "--checkpoint", str(trained / "model.ckpt"),
        "--data", str(gen_dir / "data.txt"),
        "--labels", str(gen_dir / "labels.txt"), "--out", str(ex))
    out = tmp_path / "ev"
    rc = run("eval", "--patterns", str(ex / "patterns.json"),
             "--data", str(gen_dir / "data.txt"),
             "--labels", str(gen_dir / "labels.txt"),
             "--truth", str(gen_dir / "ground_truth.json"),
             "--out", str(out))
    assert rc == 0
    report = json.loads(read(out / "eval_report.json"))
    assert "soft_f1" in report and "auc" in report
    assert (out / "curve.csv").exists()
    assert "#P=" in capsys.readouterr().out


def test_eval_without_truth(gen_dir, trained, tmp_path):
    ex = tmp_path / "ex"
    run("extract", "--checkpoint", str(trained / "model.ckpt"),
        "--data", str(gen_dir / "data.txt"),
        "--labels", str(gen_dir / "labels.txt"), "--out", str(ex))
    out = tmp_path / "ev"
    assert run("eval", "--patterns", str(ex / "patterns.json"),
               "--data", str(gen_dir / "data.txt"),
               "--labels", str(gen_dir / "labels.txt"),
               "--out", str(out)) == 0
    report = json.loads(read(out / "eval_report.json"))
    assert report.get("soft_f1") is None


def test_eval_missing_patterns_file(gen_dir, tmp_path, capsys):
    rc = run("eval", "--patterns", str(tmp_path / "nope.json"),
             "--data", str(gen_dir / "data.txt"),
             "--labels", str(gen_dir / "labels.txt"),
             "--out", str(tmp_path / "r"))
    assert rc == 1
    assert "error:" in capsys.readouterr().err


# ---------------------------------------------------------------- bench

BENCH = ["bench", "--axis", "destructive", "--values", "0,0.1", "--reps", "2",
         "--m", "60", "--n-per-class", "30", "--h", "10", "--epochs", "1",
         "--seed", "5"]


def test_bench_row_count(tmp_path):
    out = tmp_path / "b"
    rc = run(*BENCH, "--out", str(out))
    assert rc == 0
    lines = read(out / "sweep.csv").strip().splitlines()
    assert lines[0].startswith("axis_value,rep,")
    assert len(lines) == 1 + 4  # header + 2 values x 2 reps


def test_bench_error_rows_continue(tmp_path):
    # m=4 cannot host length-5 planted patterns, every point fails but
    # the sweep still writes all rows with the error recorded
    out = tmp_path / "b"
    rc = run("bench", "--axis", "classes", "--values", "2,3", "--reps", "1",
             "--m", "4", "--n-per-class", "10", "--h", "5", "--epochs", "1",
             "--seed", "1", "--out", str(out))
    assert rc == 0
    lines = read(out / "sweep.csv").strip().splitlines()
    assert len(lines) == 3
    assert all(line.rstrip().split(",")[-1] != "" for line in lines[1:])


def test_bench_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run(*BENCH, "--out", str(a))
    run(*BENCH, "--out", str(b))
    def drop_timing(text):
        rows = [line.split(",") for line in text.strip().splitlines()]
        return [r[:4] + r[5:] for r in rows]  # train_seconds is run-dependent

    ra, rb = read(a / "sweep.csv"), read(b / "sweep.csv")
    assert drop_timing(ra) == drop_timing(rb)
    assert ra.count("\n") == 5


def test_derive_seed_distinct():
    seen = {derive_seed(0, "features", v, r)
            for v in (100, 200) for r in (0, 1)}
    assert len(seen) == 4
    assert derive_seed(0, "features", 100, 0) == derive_seed(0, "features", 100, 0)
    assert derive_seed(1, "features", 100, 0) != derive_seed(0, "features", 100, 0)


# ---------------------------------------------------------------- misc

def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        run("--version")
    assert exc.value.code == 0


def test_parse_error_reported(tmp_path, capsys):
    data = tmp_path / "data.txt"
    labels = tmp_path / "labels.txt"
    data.write_text("1 2\nx y\n")
    labels.write_text("0\n1\n")
    rc = run("train", "--data", str(data), "--labels", str(labels),
             "--out", str(tmp_path / "r"))
    assert rc == 1
    assert "error:" in capsys.readouterr().err
