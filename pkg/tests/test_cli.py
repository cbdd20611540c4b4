import json
import os
import subprocess
import sys

import pytest

from sgforge import __version__
from sgforge.cli import run
from sgforge.data import ingest
from sgforge.graph import extract_tuples

SRC = os.path.join(os.path.dirname(__file__), os.pardir, "src")


def sgforge_cmd(*args, stdin=None):
    env = dict(os.environ)
    env["PYTHONPATH"] = SRC + os.pathsep + env.get("PYTHONPATH", "")
    return subprocess.run(
        [sys.executable, "-m", "sgforge", *args],
        input=stdin,
        capture_output=True,
        text=True,
        env=env,
    )


def test_version():
    proc = sgforge_cmd("--version")
    assert proc.returncode == 0
    assert proc.stdout.strip() == f"sgforge {__version__}"


def test_unknown_flag_is_usage_error(tmp_path):
    proc = sgforge_cmd("gen", "--n", "1", "--out", str(tmp_path / "r.jsonl"), "--bogus")
    assert proc.returncode == 1
    assert proc.stderr


def test_missing_command_is_usage_error():
    proc = sgforge_cmd()
    assert proc.returncode == 1


def test_gen_align_convert_roundtrip(tmp_path, capsys):
    regions_file = str(tmp_path / "regions.jsonl")
    conll_file = str(tmp_path / "targets.conll")
    graphs_file = str(tmp_path / "decoded.jsonl")

    assert run(["gen", "--n", "25", "--seed", "17", "--out", regions_file]) == 0
    assert run(["align", "--regions", regions_file, "--out", conll_file]) == 0
    report = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert report["mean_coverage"] == 1.0
    assert run(["convert", "--in", conll_file, "--out", graphs_file]) == 0

    with open(regions_file) as f:
        source, _ = ingest(f.read())
    with open(graphs_file) as f:
        decoded, _ = ingest(f.read())
    assert len(source) == len(decoded)
    for a, b in zip(source, decoded):
        assert extract_tuples(a.graph) == extract_tuples(b.graph)


def test_gen_seed_determinism(tmp_path):
    a = str(tmp_path / "a.jsonl")
    b = str(tmp_path / "b.jsonl")
    assert run(["gen", "--n", "10", "--seed", "4", "--out", a]) == 0
    assert run(["gen", "--n", "10", "--seed", "4", "--out", b]) == 0
    assert open(a).read() == open(b).read()


def test_eval_identical_files_scores_one(tmp_path, capsys):
    regions_file = str(tmp_path / "regions.jsonl")
    report_file = str(tmp_path / "report.jsonl")
    run(["gen", "--n", "10", "--seed", "2", "--out", regions_file])
    code = run(
        ["eval", "--pred", regions_file, "--ref", regions_file, "--out", report_file]
    )
    assert code == 0
    out = capsys.readouterr().out
    assert json.loads(out.strip().splitlines()[-1])["aggregate_f"] == 1.0
    lines = open(report_file).read().strip().splitlines()
    aggregate = json.loads(lines[-1])["aggregate"]
    assert aggregate["mean_f"] == 1.0
    assert len(lines) == 11  # one row per region plus the aggregate


def test_eval_id_mismatch_is_data_error(tmp_path):
    a = str(tmp_path / "a.jsonl")
    b = str(tmp_path / "b.jsonl")
    run(["gen", "--n", "3", "--seed", "1", "--out", a])
    run(["gen", "--n", "4", "--seed", "1", "--out", b])
    proc = sgforge_cmd("eval", "--pred", a, "--ref", b)
    assert proc.returncode == 2


def test_eval_malformed_regions_is_data_error(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"image_id": 1}\n')
    proc = sgforge_cmd("eval", "--pred", str(bad), "--ref", str(bad))
    assert proc.returncode == 2
    assert proc.stderr


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """A tiny but fully trained pipeline shared across CLI tests."""
    tmp = tmp_path_factory.mktemp("pipeline")
    regions_file = str(tmp / "regions.jsonl")
    conll_file = str(tmp / "targets.conll")
    ckpt_base = str(tmp / "ckpt")
    model_cfg = str(tmp / "model.json")
    train_cfg = str(tmp / "train.json")
    with open(model_cfg, "w") as f:
        json.dump({"d_model": 32, "n_layers": 1, "n_heads": 2, "d_ff": 64,
                   "max_len": 16, "d_qk": 32}, f)
    with open(train_cfg, "w") as f:
        json.dump({"epochs": 4, "batch_size": 16, "seed": 1}, f)
    assert run(["gen", "--n", "300", "--seed", "17", "--out", regions_file]) == 0
    assert run(["align", "--regions", regions_file, "--out", conll_file]) == 0
    code = run(
        ["train", "--conll", conll_file, "--regions", regions_file,
         "--model-config", model_cfg, "--train-config", train_cfg,
         "--out", ckpt_base]
    )
    assert code == 0
    return tmp, regions_file, ckpt_base


def test_train_writes_checkpoints(trained):
    tmp, _, ckpt_base = trained
    for suffix in (".json", ".bin", ".best.json", ".best.bin"):
        assert os.path.exists(ckpt_base + suffix)


def test_parse_conll_and_graph_json(trained, tmp_path):
    tmp, regions_file, ckpt_base = trained
    out_conll = str(tmp_path / "pred.conll")
    out_json = str(tmp_path / "pred.jsonl")
    texts = str(tmp_path / "texts.txt")
    with open(texts, "w") as f:
        f.write("blue bus\ncat on table\n")
    assert run(["parse", "--ckpt", ckpt_base, "--input", texts,
                "--format", "conll", "--out", out_conll]) == 0
    assert len(open(out_conll).read().strip().splitlines()) >= 2
    assert run(["parse", "--ckpt", ckpt_base, "--input", texts,
                "--out", out_json]) == 0
    records = [json.loads(l) for l in open(out_json)]
    assert len(records) == 2
    assert records[0]["phrase"] == "blue bus"


def test_parse_then_eval_on_dev_regions(trained, tmp_path, capsys):
    tmp, regions_file, ckpt_base = trained
    dev_file = str(tmp_path / "dev.jsonl")
    pred_file = str(tmp_path / "pred.jsonl")
    with open(regions_file) as f:
        lines = f.read().splitlines()
    with open(dev_file, "w") as f:
        f.write("\n".join(lines[270:]) + "\n")
    assert run(["parse", "--ckpt", ckpt_base, "--regions", dev_file,
                "--out", pred_file]) == 0
    assert run(["eval", "--pred", pred_file, "--ref", dev_file,
                "--out", str(tmp_path / "report.jsonl")]) == 0
    f_line = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert f_line["aggregate_f"] > 0.5  # small run, loose bound


def test_parse_eval_pipe_equals_files(trained, tmp_path):
    tmp, regions_file, ckpt_base = trained
    dev_file = str(tmp_path / "dev.jsonl")
    with open(regions_file) as f:
        lines = f.read().splitlines()
    with open(dev_file, "w") as f:
        f.write("\n".join(lines[270:280]) + "\n")

    parse_proc = sgforge_cmd("parse", "--ckpt", ckpt_base, "--regions", dev_file,
                             "--out", "-")
    assert parse_proc.returncode == 0
    eval_proc = sgforge_cmd("eval", "--pred", "-", "--ref", dev_file, "--out", "-",
                            stdin=parse_proc.stdout)
    assert eval_proc.returncode == 0

    pred_file = str(tmp_path / "pred.jsonl")
    report_file = str(tmp_path / "report.jsonl")
    assert run(["parse", "--ckpt", ckpt_base, "--regions", dev_file,
                "--out", pred_file]) == 0
    assert run(["eval", "--pred", pred_file, "--ref", dev_file,
                "--out", report_file]) == 0
    assert eval_proc.stdout == open(report_file).read()
