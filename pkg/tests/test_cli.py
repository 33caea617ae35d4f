import json
import os

import pytest

from kgalign.cli import main


@pytest.fixture(scope="module")
def cli_dataset(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("cli_ds"))
    rc = main(["synth", "--out", out, "--entities", "20", "--relations", "4",
               "--triples", "50", "--dim", "6", "--seed", "7",
               "--triangles", "2"])
    assert rc == 0
    return out


TRAIN_FLAGS = ["--dim", "6", "--epochs", "2", "--negatives-per-side", "2",
               "--negative-refresh-epochs", "1"]


def test_synth_writes_expected_files(cli_dataset):
    for name in ("ent_ids_1", "ent_ids_2", "rel_ids_1", "rel_ids_2",
                 "triples_1", "triples_2", "ref_ent_ids", "gold_pairs",
                 "name_vectors"):
        assert os.path.exists(os.path.join(cli_dataset, name)), name


def test_prepare_summarizes_dataset(cli_dataset, capsys):
    assert main(["prepare", "--dataset", cli_dataset]) == 0
    out = capsys.readouterr().out
    assert "entities: 20 + 20" in out
    assert "seeds: 6 train / 14 test" in out
    assert "dual graph:" in out


def test_train_writes_artifacts(cli_dataset, tmp_path):
    out = str(tmp_path / "run")
    rc = main(["train", "--dataset", cli_dataset, "--out", out,
               "--variant", "gcn-s", *TRAIN_FLAGS])
    assert rc == 0
    for name in ("report.txt", "report.json", "config.json",
                 "train_log.jsonl", "checkpoint.npz"):
        assert os.path.exists(os.path.join(out, name)), name
    with open(os.path.join(out, "train_log.jsonl")) as fh:
        records = [json.loads(line) for line in fh]
    assert [r["epoch"] for r in records] == [0, 1]
    with open(os.path.join(out, "report.json")) as fh:
        payload = json.load(fh)
    assert payload["schema_version"] == 1
    assert "1" in payload["report"]["hits"]


def test_train_reports_are_deterministic(cli_dataset, tmp_path):
    outs = []
    for name in ("a", "b"):
        out = str(tmp_path / name)
        assert main(["train", "--dataset", cli_dataset, "--out", out,
                     "--variant", "gcn-s", "--seed", "3", *TRAIN_FLAGS]) == 0
        with open(os.path.join(out, "report.json")) as fh:
            report = json.load(fh)["report"]
        report.pop("runtime")  # wall-clock, the only legitimately varying field
        outs.append(report)
    assert outs[0] == outs[1]


def test_eval_roundtrips_checkpoint(cli_dataset, tmp_path):
    run_dir = str(tmp_path / "run")
    assert main(["train", "--dataset", cli_dataset, "--out", run_dir,
                 "--variant", "gcn-s", *TRAIN_FLAGS]) == 0
    eval_dir = str(tmp_path / "eval")
    rc = main(["eval", "--checkpoint", os.path.join(run_dir, "checkpoint.npz"),
               "--dataset", cli_dataset, "--out", eval_dir, "--ranks"])
    assert rc == 0
    with open(os.path.join(run_dir, "report.json")) as fh:
        trained = json.load(fh)["report"]
    with open(os.path.join(eval_dir, "report.json")) as fh:
        evaled = json.load(fh)["report"]
    assert evaled["hits"] == trained["hits"]
    assert "ranks" in evaled


def test_eval_rejects_mismatched_dataset(cli_dataset, tmp_path, capsys):
    run_dir = str(tmp_path / "run")
    assert main(["train", "--dataset", cli_dataset, "--out", run_dir,
                 "--variant", "gcn-s", *TRAIN_FLAGS]) == 0
    other = str(tmp_path / "other_ds")
    assert main(["synth", "--out", other, "--entities", "10",
                 "--relations", "2", "--triples", "25", "--dim", "6"]) == 0
    rc = main(["eval", "--checkpoint", os.path.join(run_dir, "checkpoint.npz"),
               "--dataset", other, "--out", str(tmp_path / "e")])
    assert rc == 1
    assert "checkpoint built for" in capsys.readouterr().err


def test_config_file_with_cli_override(cli_dataset, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        f"dataset = {cli_dataset}\n"
        "dim = 6\n"
        "epochs = 5   # overridden below\n"
        "negatives_per_side = 2\n"
        "negative_refresh_epochs = 1\n"
        "variant = gcn-s\n")
    out = str(tmp_path / "run")
    assert main(["train", "--config", str(cfg), "--epochs", "2",
                 "--out", out]) == 0
    with open(os.path.join(out, "config.json")) as fh:
        resolved = json.load(fh)
    assert resolved["epochs"] == 2
    assert resolved["dim"] == 6


def test_ablate_writes_table(cli_dataset, tmp_path, capsys):
    out = str(tmp_path / "ab")
    rc = main(["ablate", "--dataset", cli_dataset, "--out", out,
               "--variants", "gcn-s,rd", *TRAIN_FLAGS])
    assert rc == 0
    with open(os.path.join(out, "ablation.json")) as fh:
        rows = json.load(fh)["rows"]
    assert [r["variant"] for r in rows] == ["gcn-s", "rd"]
    assert all("hits" in r for r in rows)
    printed = capsys.readouterr().out
    assert "gcn-s: hits@1" in printed


def test_sweep_runs_fractions(cli_dataset, tmp_path):
    out = str(tmp_path / "sw")
    rc = main(["sweep", "--dataset", cli_dataset, "--out", out,
               "--fractions", "0.2,0.4", "--variant", "gcn-s", *TRAIN_FLAGS])
    assert rc == 0
    with open(os.path.join(out, "sweep.json")) as fh:
        rows = json.load(fh)["rows"]
    assert [r["fraction"] for r in rows] == [0.2, 0.4]


def test_dualgraph_stats(cli_dataset, capsys):
    assert main(["dualgraph-stats", "--dataset", cli_dataset]) == 0
    out = capsys.readouterr().out
    assert "vertices: 8" in out
    assert "w 0.0-0.2:" in out


def test_missing_dataset_is_reported_not_raised(tmp_path, capsys):
    rc = main(["prepare", "--dataset", str(tmp_path / "nowhere")])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


def test_bad_config_key_is_reported(cli_dataset, tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("no_such_key = 5\n")
    rc = main(["train", "--config", str(cfg), "--dataset", cli_dataset])
    assert rc == 1
    assert "unknown config key" in capsys.readouterr().err
