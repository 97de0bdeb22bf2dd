import csv
import json

import pytest

from mvcon.cli import main, read_config_file
from mvcon.dataset import fingerprint, load_manifest

FAST = ["--epochs", "2", "--groups", "4", "--views-per-group", "2"]


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    assert main(["gen-data", "--lesions-per-class", "10", "--views", "2:4", "--seed", "7",
                 "--out", str(out)]) == 0
    return out


def test_gen_data_counts(tmp_path):
    assert main(["gen-data", "--lesions-per-class", "100", "--views", "2:6", "--seed", "7",
                 "--out", str(tmp_path)]) == 0
    assert len(load_manifest(tmp_path)) == 200
    manifest = json.loads((tmp_path / "run_manifest.json").read_text())
    assert manifest["command"] == "gen-data" and manifest["config"]["seed"] == 7
    assert manifest["dataset_fingerprint"] == fingerprint(load_manifest(tmp_path))


def test_gen_data_same_seed_same_hash(tmp_path):
    for sub in ("a", "b"):
        main(["gen-data", "--lesions-per-class", "5", "--seed", "3", "--out", str(tmp_path / sub)])
    a = json.loads((tmp_path / "a" / "run_manifest.json").read_text())["dataset_fingerprint"]
    b = json.loads((tmp_path / "b" / "run_manifest.json").read_text())["dataset_fingerprint"]
    assert a == b


def test_gen_data_text_format(tmp_path):
    assert main(["gen-data", "--lesions-per-class", "2", "--format", "text",
                 "--out", str(tmp_path)]) == 0
    assert any(p.suffix == ".txt" for p in (tmp_path / "features").iterdir())


def test_missing_required_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["gen-data", "--seed", "1"])
    assert exc.value.code == 2


def test_env_seed_and_flag_precedence(tmp_path, monkeypatch):
    monkeypatch.setenv("MVC_SEED", "11")
    main(["gen-data", "--lesions-per-class", "2", "--out", str(tmp_path / "env")])
    main(["gen-data", "--lesions-per-class", "2", "--seed", "4", "--out", str(tmp_path / "flag")])
    read = lambda d: json.loads((tmp_path / d / "run_manifest.json").read_text())["config"]["seed"]
    assert read("env") == 11 and read("flag") == 4


def test_config_file_layering(tmp_path, data_dir):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nalpha = 0.2\nepochs = 2\ngroups_per_batch = 4\n"
                   "views_per_group = 2\nlesions_per_class = 3\n")
    assert read_config_file(cfg)["alpha"] == "0.2"
    out = tmp_path / "cv"
    assert main(["crossval", "--data", str(data_dir), "--config", str(cfg), "--alpha", "0.7",
                 "--folds", "2", "--out", str(out)]) == 0
    echo = json.loads((out / "result.json").read_text())["config"]
    assert echo["alpha"] == 0.7 and echo["epochs"] == 2
    assert echo["batch"]["groups_per_batch"] == 4


def test_crossval_outputs(tmp_path, data_dir):
    out = tmp_path / "cv"
    assert main(["crossval", "--data", str(data_dir), "--variant", "LR", "--alpha", "0.5",
                 "--folds", "5", "--seed", "1", "--out", str(out), *FAST]) == 0
    for f in range(5):
        fold = json.loads((out / f"fold_{f}.json").read_text())
        assert fold["run_manifest"] == "run_manifest.json"
        assert set(fold["metrics"]) >= {"auc", "acc", "mcr"}
    result = json.loads((out / "result.json").read_text())
    assert result["fold_count"] == 5 and result["config"]["seed"] == 1
    table = (out / "table.txt").read_text()
    assert table.splitlines()[0].startswith("Method") and "LR" in table
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert "result.json" in manifest["outputs"]


def test_crossval_baseline_alias(tmp_path, data_dir):
    out = tmp_path / "cv"
    assert main(["crossval", "--data", str(data_dir), "--variant", "baseline", "--folds", "2",
                 "--out", str(out), *FAST]) == 0
    echo = json.loads((out / "result.json").read_text())["config"]
    assert echo["alpha"] == 0.0 and echo["contrastive"] is False
    assert "baseline" in (out / "table.txt").read_text()


def test_crossval_one_fold_is_config_error(tmp_path, data_dir, capsys):
    assert main(["crossval", "--data", str(data_dir), "--folds", "1",
                 "--out", str(tmp_path), *FAST]) == 1
    assert "2 folds" in capsys.readouterr().err


def test_crossval_missing_data(tmp_path):
    assert main(["crossval", "--data", str(tmp_path / "none"), "--out", str(tmp_path)]) == 1


@pytest.mark.parametrize("axis,rows", [("alpha", ["0.1", "0.2", "0.5", "1"]),
                                       ("negatives", ["LR(-)", "LR(-SC)", "LR(-DC)", "LR"])])
def test_ablate_tables(tmp_path, data_dir, axis, rows):
    out = tmp_path / axis
    assert main(["ablate", "--data", str(data_dir), "--axis", axis, "--folds", "2",
                 "--out", str(out), *FAST]) == 0
    payload = json.loads((out / "ablation.json").read_text())
    assert [r["label"] for r in payload["rows"]] == rows
    body = (out / "table.txt").read_text().splitlines()
    assert len(body) == 2 + 4 + 1  # header, rule, rows, manifest footer


def test_ablate_unknown_axis(data_dir):
    with pytest.raises(SystemExit) as exc:
        main(["ablate", "--data", str(data_dir), "--axis", "beta"])
    assert exc.value.code == 2


def test_train_then_knn_probe(tmp_path, data_dir):
    model_dir = tmp_path / "model"
    assert main(["train", "--data", str(data_dir), "--out", str(model_dir), *FAST]) == 0
    out = tmp_path / "knn" / "knn.csv"
    assert main(["knn-probe", "--model", str(model_dir / "model.npz"), "--data", str(data_dir),
                 "--k", "1", "--out", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["k", "auc"] and rows[1] == ["1", "1.0"]

    out2 = tmp_path / "knn" / "grid.csv"
    assert main(["knn-probe", "--model", str(model_dir / "model.npz"), "--data", str(data_dir),
                 "--out", str(out2)]) == 0
    ks = [int(r[0]) for r in list(csv.reader(out2.open()))[1:]]
    assert ks == sorted(ks) and ks[0] == 1 and len(ks) == len(set(ks))


def test_knn_probe_missing_model(tmp_path, data_dir):
    assert main(["knn-probe", "--model", str(tmp_path / "nope.npz"), "--data", str(data_dir),
                 "--out", str(tmp_path / "k.csv")]) == 1
