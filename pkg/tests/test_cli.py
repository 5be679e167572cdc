import shutil

import pytest
import yaml

from camoseg.cli import main
from camoseg.config import RunConfig, save_config


@pytest.fixture(scope="module")
def run_yaml(toy_root, tmp_path_factory):
    config = RunConfig.desk(epochs=2)
    config.data.train_root = toy_root
    config.data.test_root = toy_root
    path = tmp_path_factory.mktemp("cfg") / "run.yaml"
    save_config(config, path)
    return path


@pytest.fixture(scope="module")
def trained(run_yaml, tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    code = main(["train", "--config", str(run_yaml), "--out", str(out)])
    assert code == 0
    return out


class TestTrain:
    def test_artifacts_and_stdout(self, trained, capsys):
        assert (trained / "loss.csv").exists()
        assert (trained / "loss.png").exists()
        assert (trained / "config.yaml").exists()
        assert (trained / "last.pt").exists()

    def test_unknown_override_key_exits_2(self, run_yaml, tmp_path, capsys):
        code = main(["train", "--config", str(run_yaml), "--out", str(tmp_path),
                     "--override", "train.gamma=1"])
        assert code == 2
        assert "train.gamma" in capsys.readouterr().err

    def test_lr_flag_lands_in_config_snapshot(self, run_yaml, tmp_path):
        code = main(["train", "--config", str(run_yaml), "--out", str(tmp_path),
                     "--lr", "0.0005"])
        assert code == 0
        snapshot = yaml.safe_load((tmp_path / "config.yaml").read_text())
        assert snapshot["train"]["lr"] == 0.0005

    def test_missing_train_root_exits_2(self, tmp_path, capsys):
        code = main(["train", "--out", str(tmp_path)])
        assert code == 2
        assert "train_root" in capsys.readouterr().err

    def test_missing_config_file_exits_2(self, tmp_path, capsys):
        code = main(["train", "--config", str(tmp_path / "nope.yaml"),
                     "--out", str(tmp_path)])
        assert code == 2


class TestPredict:
    def test_writes_one_map_per_image(self, trained, toy_root, tmp_path, capsys):
        out = tmp_path / "pred"
        code = main(["predict", str(trained / "last.pt"), str(toy_root / "Imgs"),
                     "--out", str(out), "--input-size", "64"])
        assert code == 0
        maps = sorted(out.glob("*.png"))
        assert [p.name for p in maps] == [f"toy_{i}.png" for i in range(4)]
        assert "wrote 4 prediction maps" in capsys.readouterr().out

    def test_deterministic_bytes(self, trained, toy_root, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert main(["predict", str(trained / "last.pt"), str(toy_root / "Imgs"),
                         "--out", str(out), "--input-size", "64"]) == 0
        for name in ("toy_0.png", "toy_3.png"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_threshold_adds_masks(self, trained, toy_root, tmp_path):
        out = tmp_path / "pred"
        assert main(["predict", str(trained / "last.pt"), str(toy_root / "Imgs"),
                     "--out", str(out), "--input-size", "64",
                     "--threshold", "0.5"]) == 0
        assert len(list(out.glob("*_mask.png"))) == 4

    def test_empty_input_dir_exits_2(self, trained, tmp_path, capsys):
        empty = tmp_path / "empty"
        empty.mkdir()
        code = main(["predict", str(trained / "last.pt"), str(empty),
                     "--out", str(tmp_path / "o")])
        assert code == 2
        assert "no images" in capsys.readouterr().err


class TestEval:
    def test_perfect_predictions_report(self, toy_root, tmp_path, capsys):
        pred = tmp_path / "pred"
        pred.mkdir()
        for p in (toy_root / "GT").glob("*.png"):
            shutil.copy(p, pred / p.name)
        out = tmp_path / "report"
        code = main(["eval", str(pred), str(toy_root / "GT"), "--out", str(out)])
        assert code == 0
        line = [l for l in capsys.readouterr().out.splitlines()
                if l.startswith("aggregate,")][0]
        assert line.endswith("0.000000")  # MAE of a perfect prediction
        rows = (out / "per_image.csv").read_text().strip().splitlines()
        assert len(rows) == 1 + 4 + 1
        assert (out / "curves.csv").exists()
        assert (out / "pr_curve.png").exists()
        assert (out / "threshold_curves.png").exists()

    def test_missing_prediction_warns_on_stderr(self, toy_root, tmp_path, capsys):
        pred = tmp_path / "pred"
        pred.mkdir()
        files = sorted((toy_root / "GT").glob("*.png"))
        for p in files[:-1]:
            shutil.copy(p, pred / p.name)
        with pytest.warns(UserWarning):
            code = main(["eval", str(pred), str(toy_root / "GT"),
                         "--out", str(tmp_path / "report")])
        assert code == 0
        err = capsys.readouterr().err
        assert files[-1].stem in err

    def test_no_pairs_exits_2(self, tmp_path, capsys):
        (tmp_path / "pred").mkdir()
        (tmp_path / "gt").mkdir()
        code = main(["eval", str(tmp_path / "pred"), str(tmp_path / "gt"),
                     "--out", str(tmp_path / "report")])
        assert code == 2


class TestAblate:
    def test_two_variant_table(self, run_yaml, tmp_path, capsys):
        out = tmp_path / "ablate"
        code = main(["ablate", "--config", str(run_yaml), "--out", str(out),
                     "--variants", "A3", "E", "--seed", "0"])
        assert code == 0
        rows = (out / "ablation.csv").read_text().strip().splitlines()
        assert len(rows) == 1 + 2
        assert rows[1].startswith("A3,") and rows[2].startswith("E,")
        assert all(len(r.split(",")) == 8 for r in rows)
        out_text = capsys.readouterr().out
        assert "seed=0" in out_text
        assert (out / "A3" / "last.pt").exists()
        assert (out / "E" / "pred").is_dir()

    def test_unknown_variant_exits_2(self, run_yaml, tmp_path, capsys):
        code = main(["ablate", "--config", str(run_yaml),
                     "--out", str(tmp_path), "--variants", "Z9"])
        assert code == 2
        assert "Z9" in capsys.readouterr().err


class TestParser:
    def test_no_command_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2

    def test_entry_point_installed(self):
        import importlib.metadata as md
        eps = md.entry_points(group="console_scripts")
        assert any(ep.name == "camoseg" for ep in eps)
