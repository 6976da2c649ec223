import argparse
import json

import pytest
import yaml

from aalkit.cli import _str2bool, build_parser, main
from aalkit.harness import load_config, read_results


def write_config(tmp_path, **kw):
    config = dict(
        dataset="synthetic", learner="protonet", n_way=5, k_shot=1,
        target_per_class=2, augment="CHV", epochs=1, episodes_per_epoch=2,
        meta_batch=2, seed=0, n_blocks=2, n_filters=4, val_episodes=2,
        test_episodes=2, eval_seeds=1, out=str(tmp_path / "run"),
    )
    config.update(kw)
    path = tmp_path / "base.yaml"
    with open(path, "w") as fh:
        yaml.safe_dump(config, fh)
    return path


class TestParsing:
    def test_str2bool(self):
        for text in ("true", "True", "1", "yes"):
            assert _str2bool(text) is True
        for text in ("false", "FALSE", "0", "no"):
            assert _str2bool(text) is False
        with pytest.raises(argparse.ArgumentTypeError):
            _str2bool("maybe")

    def test_train_flag_surface(self):
        args = build_parser().parse_args([
            "train", "--dataset", "omniglot", "--learner", "maml",
            "--n-way", "20", "--k-shot", "5", "--target-per-class", "15",
            "--augment", "CHVW", "--inner-steps", "3",
            "--second-order", "false", "--msl", "true", "--epochs", "7",
            "--episodes-per-epoch", "50", "--meta-batch", "4", "--seed", "11",
            "--data-root", "/data", "--out", "runs/x",
        ])
        assert args.dataset == "omniglot"
        assert args.learner == "maml"
        assert args.n_way == 20
        assert args.k_shot == 5
        assert args.target_per_class == 15
        assert args.augment == "CHVW"
        assert args.inner_steps == 3
        assert args.second_order is False
        assert args.msl is True
        assert args.epochs == 7
        assert args.episodes_per_epoch == 50
        assert args.meta_batch == 4
        assert args.seed == 11
        assert args.data_root == "/data"
        assert args.out == "runs/x"

    def test_unset_flags_default_to_none(self):
        args = build_parser().parse_args(["train"])
        assert args.dataset is None
        assert args.second_order is None

    def test_bad_choices_exit(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["train", "--dataset", "imagenet"])
        with pytest.raises(SystemExit):
            build_parser().parse_args(["train", "--learner", "svm"])
        with pytest.raises(SystemExit):
            build_parser().parse_args(["frobnicate"])

    def test_subcommand_required(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])


class TestTrain:
    def test_end_to_end(self, tmp_path, capsys):
        config_path = write_config(tmp_path)
        assert main(["train", "--config", str(config_path)]) == 0
        run = tmp_path / "run"
        assert (run / "config.yaml").exists()
        assert (run / "record.json").exists()
        assert (run / "best.ckpt").exists()
        assert (run / "last.ckpt").exists()
        assert "best val_acc" in capsys.readouterr().out

    def test_flag_overrides_config(self, tmp_path):
        config_path = write_config(tmp_path, epochs=3, seed=1)
        out = tmp_path / "other"
        assert main(["train", "--config", str(config_path),
                     "--epochs", "0", "--out", str(out)]) == 0
        saved = load_config(out / "config.yaml")
        assert saved.epochs == 0
        assert saved.seed == 1
        record = json.loads((out / "record.json").read_text())
        assert record["config"]["epochs"] == 0
        assert len(record["history"]) == 1


class TestTest:
    def test_fresh_init(self, tmp_path, capsys):
        config_path = write_config(tmp_path)
        assert main(["test", "--config", str(config_path)]) == 0
        reports = read_results(tmp_path / "run" / "results.csv")
        assert len(reports) == 1
        assert reports[0].split == "meta-test"
        assert (tmp_path / "run" / "results.md").exists()
        assert "fresh initialization" in capsys.readouterr().out

    def test_with_checkpoint(self, tmp_path, capsys):
        config_path = write_config(tmp_path, epochs=0)
        main(["train", "--config", str(config_path)])
        ckpt = tmp_path / "run" / "best.ckpt"
        assert main(["test", "--config", str(config_path),
                     "--checkpoint", str(ckpt)]) == 0
        assert str(ckpt) in capsys.readouterr().out


class TestAblate:
    def test_grid_results(self, tmp_path):
        config_path = write_config(tmp_path, epochs=0)
        assert main(["ablate", "--config", str(config_path),
                     "--policies", "NONE", "CHV"]) == 0
        reports = read_results(tmp_path / "run" / "results.csv")
        assert [r.policy for r in reports] == ["NONE", "CHV"]

    def test_failures_set_exit_code(self, tmp_path, monkeypatch, capsys):
        import aalkit.harness as harness_mod

        def explode(config):
            raise RuntimeError("boom")

        monkeypatch.setattr(harness_mod, "run_meta_training", explode)
        config_path = write_config(tmp_path, epochs=0)
        assert main(["ablate", "--config", str(config_path),
                     "--policies", "CHV"]) == 1
        assert "FAILED CHV" in capsys.readouterr().err

    def test_policies_flag_required(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["ablate"])


class TestEpisodesDump:
    def test_unsupervised(self, tmp_path):
        config_path = write_config(tmp_path, out=str(tmp_path / "dump"))
        assert main(["episodes", "dump", "--config", str(config_path),
                     "--count", "2"]) == 0
        for i in range(2):
            where = tmp_path / "dump" / f"episode_{i:03d}"
            manifest = json.loads((where / "manifest.json").read_text())
            assert manifest["n_way"] == 5
            assert manifest["k_shot"] == 1
            assert len(list((where / "support").glob("*.png"))) == 5
            assert len(list((where / "target").glob("*.png"))) == 10

    def test_supervised_mode(self, tmp_path):
        config_path = write_config(tmp_path, out=str(tmp_path / "dump"))
        assert main(["episodes", "dump", "--config", str(config_path),
                     "--mode", "supervised"]) == 0
        manifest = json.loads(
            (tmp_path / "dump" / "episode_000" / "manifest.json").read_text())
        assert manifest["target_per_class"] == 2


class TestPolicyDump:
    def test_single_policy(self, capsys):
        assert main(["policy", "dump", "--dataset", "omniglot",
                     "--augment", "chv"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["name"] == "CHV"
        assert [op["token"] for op in payload["ops"]] == ["C", "H", "V"]
        assert payload["ops"][0]["params"] == {"pad": 7}

    def test_full_table(self, capsys):
        assert main(["policy", "dump", "--dataset", "miniimagenet"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert "G" in payload["available"]
        assert payload["params"]["C"] == {"pad": 21}


class TestPlot:
    def test_from_run_and_results(self, tmp_path):
        config_path = write_config(tmp_path, epochs=1)
        main(["train", "--config", str(config_path)])
        main(["test", "--config", str(config_path)])
        out = tmp_path / "plots"
        assert main(["plot", "--run", str(tmp_path / "run"),
                     "--results", str(tmp_path / "run" / "results.csv"),
                     "--out", str(out)]) == 0
        assert (out / "training_curve.png").exists()
        assert (out / "ablation.png").exists()

    def test_nothing_to_plot(self, tmp_path, capsys):
        assert main(["plot", "--out", str(tmp_path)]) == 2
        assert "nothing to plot" in capsys.readouterr().err
