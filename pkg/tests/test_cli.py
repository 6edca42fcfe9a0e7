import json

import pytest

from dagpose.cli import main


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["gen", "--n", "12", "--seed", "1", "--out", str(root / "train"), "--pool-size", "4"]) == 0
    assert main(["gen", "--n", "6", "--seed", "2", "--out", str(root / "val"), "--pool-size", "2"]) == 0
    return root


@pytest.fixture(scope="module")
def ckpt(data):
    path = data / "m.ckpt"
    assert main(["train", "--data", str(data / "train"), "--out-ckpt", str(path), "--epochs", "1"]) == 0
    return path


def test_gen_layout(data):
    ann = json.loads((data / "train" / "annotations.json").read_text())
    assert len(ann["images"]) == 12
    assert len(list((data / "train" / "images").glob("*.png"))) == 12
    assert len(list((data / "train" / "pool").glob("*.png"))) == 4


def test_train_writes_log(ckpt):
    rows = ckpt.with_suffix(".csv").read_text().splitlines()
    assert rows[0] == "epoch,l_m,l_t,l_p,total" and len(rows) == 2


def test_eval_report(data, ckpt, tmp_path, capsys):
    out = tmp_path / "r.json"
    assert main(["eval", "--data", str(data / "val"), "--ckpt", str(ckpt), "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert {"pck", "pck_visible", "pck_occluded", "pck_per_joint", "num_samples"} <= set(rep)
    assert rep["num_samples"] == 6 and len(rep["pck_per_joint"]) == 17


def test_augment_pairs(data, tmp_path):
    assert main(["augment", "--in", str(data / "train"), "--out", str(tmp_path), "--limit", "3"]) == 0
    assert len(list(tmp_path.glob("*_before.png"))) == 3
    assert len(json.loads((tmp_path / "records.json").read_text())) == 3


def test_viz(data, ckpt, tmp_path):
    img = sorted((data / "val" / "images").glob("*.png"))[0]
    assert main(["viz", "--ckpt", str(ckpt), "--image", str(img), "--ann",
                 str(data / "val" / "annotations.json"), "--out", str(tmp_path)]) == 0
    assert {p.name for p in tmp_path.iterdir()} == {f"{img.stem}_heatmaps.png", f"{img.stem}_pose.png"}


def test_ablate_tiny(data, tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("train: {batch_size: 6}\nmodel: {gcn_hidden: 8}\n")
    assert main(["ablate", "--data", str(data), "--config", str(cfg), "--seeds", "0",
                 "--epochs", "1", "--out", str(tmp_path)]) == 0
    md = (tmp_path / "ablation.md").read_text()
    for row in ("baseline", "+DA", "+ADAM", "+GCN", "DAG (all)"):
        assert f"| {row} |" in md
    assert len((tmp_path / "ablation.csv").read_text().splitlines()) == 6


def test_usage_errors_exit_one(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["nope"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["gen", "--n", "x", "--out", "o"])
    assert exc.value.code == 1


def test_missing_data_exit_two(tmp_path, capsys):
    assert main(["train", "--data", str(tmp_path / "none"), "--out-ckpt", str(tmp_path / "m")]) == 2
    assert "annotations.json" in capsys.readouterr().err


def test_bad_config_exit_two(data, tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("train: {epochz: 3}\n")
    assert main(["train", "--data", str(data / "train"), "--config", str(cfg),
                 "--out-ckpt", str(tmp_path / "m")]) == 2
    assert "epochz" in capsys.readouterr().err
    cfg.write_text("augment: {mask_prob: 1.5}\n")
    assert main(["train", "--data", str(data / "train"), "--config", str(cfg),
                 "--out-ckpt", str(tmp_path / "m")]) == 2


def test_corrupt_checkpoint_exit_two(data, tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"not a checkpoint")
    assert main(["eval", "--data", str(data / "val"), "--ckpt", str(bad)]) == 2


def test_divergence_exit_three(data, tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("train: {lr: 1.0e+300}\n")
    code = main(["train", "--data", str(data / "train"), "--config", str(cfg), "--no-da",
                 "--out-ckpt", str(tmp_path / "m"), "--epochs", "2"])
    assert code == 3
    assert "epoch" in capsys.readouterr().err


def test_gradcheck_passes(capsys):
    assert main(["gradcheck", "--instances", "1"]) == 0
    out = capsys.readouterr().out
    assert "all gradient checks passed" in out
