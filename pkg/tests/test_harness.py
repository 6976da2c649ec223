import json
import re
from dataclasses import asdict, replace

import numpy as np
import pytest
import torch

from aalkit.data import LoadError
from aalkit.harness import (
    CSV_COLUMNS,
    EvalReport,
    ExperimentConfig,
    apply_overrides,
    build_learner,
    emit_plots,
    emit_results,
    load_config,
    load_learner,
    load_splits,
    make_eval_bank,
    read_results,
    run_ablation_grid,
    run_final_test,
    run_meta_training,
    save_config,
)
from aalkit.maml import MamlLearner
from aalkit.protonet import ProtoNetLearner


def tiny_config(tmp_path, **kw):
    base = dict(
        dataset="synthetic", learner="protonet", n_way=5, k_shot=1,
        target_per_class=2, augment="CHV", epochs=1, episodes_per_epoch=2,
        meta_batch=2, seed=0, out=str(tmp_path / "run"), n_blocks=2,
        n_filters=4, val_episodes=3, test_episodes=3, eval_seeds=2,
    )
    base.update(kw)
    return ExperimentConfig(**base)


class TestConfig:
    def test_yaml_roundtrip(self, tmp_path):
        config = tiny_config(tmp_path, lr=0.125, msl=False, data_root="/data")
        path = tmp_path / "config.yaml"
        save_config(config, path)
        assert load_config(path) == config

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "config.yaml"
        path.write_text("dataset: synthetic\nlerner: maml\n")
        with pytest.raises(ValueError, match="lerner"):
            load_config(path)

    def test_non_mapping_rejected(self, tmp_path):
        path = tmp_path / "config.yaml"
        path.write_text("- a\n- b\n")
        with pytest.raises(ValueError, match="mapping"):
            load_config(path)

    def test_empty_file_gives_defaults(self, tmp_path):
        path = tmp_path / "config.yaml"
        path.write_text("")
        assert load_config(path) == ExperimentConfig()

    def test_overrides_skip_none(self, tmp_path):
        config = tiny_config(tmp_path)
        out = apply_overrides(config, {"epochs": None, "seed": 9})
        assert out.seed == 9
        assert out.epochs == config.epochs
        assert apply_overrides(config, {}) == config

    def test_validation(self):
        with pytest.raises(ValueError, match="dataset"):
            ExperimentConfig(dataset="imagenet")
        with pytest.raises(ValueError, match="learner"):
            ExperimentConfig(learner="svm")
        with pytest.raises(ValueError, match="epochs"):
            ExperimentConfig(epochs=-1)
        with pytest.raises(ValueError, match="meta_batch"):
            ExperimentConfig(meta_batch=0)


class TestEvalBank:
    def test_same_tasks_across_policies(self, tmp_path):
        _, val_ds, _ = load_splits(tiny_config(tmp_path))
        banks = [
            make_eval_bank(val_ds, tiny_config(tmp_path, augment=policy),
                           "val-bank", 4)
            for policy in ("NONE", "CHV", "CHVW+DROP")
        ]
        for other in banks[1:]:
            for a, b in zip(banks[0], other):
                np.testing.assert_array_equal(a.support_ids, b.support_ids)
                np.testing.assert_array_equal(a.target_ids, b.target_ids)

    def test_eval_seed_changes_tasks(self, tmp_path):
        config = tiny_config(tmp_path)
        _, val_ds, _ = load_splits(config)
        a = make_eval_bank(val_ds, config, "test-bank", 4, eval_seed=0)
        b = make_eval_bank(val_ds, config, "test-bank", 4, eval_seed=1)
        assert any(not np.array_equal(x.support_ids, y.support_ids)
                   for x, y in zip(a, b))

    def test_purpose_separates_banks(self, tmp_path):
        config = tiny_config(tmp_path)
        _, val_ds, _ = load_splits(config)
        a = make_eval_bank(val_ds, config, "val-bank", 4)
        b = make_eval_bank(val_ds, config, "test-bank", 4)
        assert any(not np.array_equal(x.support_ids, y.support_ids)
                   for x, y in zip(a, b))


class TestMetaTraining:
    def test_artifacts_and_history(self, tmp_path):
        config = tiny_config(tmp_path, epochs=2)
        result = run_meta_training(config)
        assert result.best_checkpoint.exists()
        assert result.last_checkpoint.exists()
        record = json.loads((result.out_dir / "record.json").read_text())
        assert record["config"] == asdict(config)
        assert len(record["history"]) == 3
        first = record["history"][0]
        assert first["epoch"] == 0
        assert first["train_loss"] is None
        assert 0.0 <= first["val_acc"] <= 1.0
        assert all(h["train_loss"] is not None for h in record["history"][1:])
        assert record["best_epoch"] in (0, 1, 2)
        assert record["best_val_acc"] == max(h["val_acc"]
                                             for h in record["history"])

    def test_zero_epochs_keeps_init(self, tmp_path):
        config = tiny_config(tmp_path, epochs=0)
        result = run_meta_training(config)
        assert result.best_epoch == 0
        assert len(result.history) == 1
        fresh = build_learner(config, 1, 28)
        saved = load_learner(result.last_checkpoint)
        for k in fresh.params:
            assert torch.equal(fresh.params[k], saved.params[k])

    def test_rerun_is_bit_identical(self, tmp_path):
        config = tiny_config(tmp_path, epochs=2)
        run_meta_training(config)
        first_record = (tmp_path / "run" / "record.json").read_bytes()
        first = load_learner(tmp_path / "run" / "last.ckpt")
        run_meta_training(config)
        assert (tmp_path / "run" / "record.json").read_bytes() == first_record
        second = load_learner(tmp_path / "run" / "last.ckpt")
        for k in first.params:
            assert torch.equal(first.params[k], second.params[k]), k

    def test_maml_run(self, tmp_path):
        config = tiny_config(tmp_path, learner="maml", inner_steps=2,
                             msl_anneal_epochs=2)
        result = run_meta_training(config)
        assert isinstance(load_learner(result.last_checkpoint), MamlLearner)
        assert len(result.history) == 2


class TestFinalTest:
    def test_fresh_init_baseline(self, tmp_path):
        config = tiny_config(tmp_path)
        report = run_final_test(config)
        assert report.policy == "CHV"
        assert report.learner == "protonet"
        assert report.dataset == "synthetic"
        assert (report.N, report.K) == (5, 1)
        assert report.split == "meta-test"
        assert report.episodes == 3
        assert 0.0 <= report.mean_acc <= 1.0
        assert report.dispersion >= 0.0

    def test_single_seed_has_zero_dispersion(self, tmp_path):
        report = run_final_test(tiny_config(tmp_path, eval_seeds=1))
        assert report.dispersion == 0.0

    def test_checkpoint_equals_loaded_learner(self, tmp_path):
        config = tiny_config(tmp_path)
        result = run_meta_training(config)
        via_path = run_final_test(config, checkpoint=result.best_checkpoint)
        via_obj = run_final_test(config,
                                 learner=load_learner(result.best_checkpoint))
        assert via_path == via_obj


class TestAblationGrid:
    def test_duplicates_warn_and_collapse(self, tmp_path):
        base = tiny_config(tmp_path, epochs=0, val_episodes=1, test_episodes=1,
                           eval_seeds=1)
        with pytest.warns(UserWarning, match="duplicate"):
            reports, failures = run_ablation_grid(base, ["chv", "CHV"])
        assert len(reports) == 1
        assert failures == []
        assert reports[0].policy == "CHV"

    def test_failures_do_not_stop_grid(self, tmp_path, monkeypatch):
        import aalkit.harness as harness_mod
        base = tiny_config(tmp_path, epochs=0, val_episodes=1, test_episodes=1,
                           eval_seeds=1)
        real = harness_mod.run_meta_training

        def flaky(config):
            if config.augment == "CH":
                raise RuntimeError("boom")
            return real(config)

        monkeypatch.setattr(harness_mod, "run_meta_training", flaky)
        reports, failures = run_ablation_grid(base, ["CH", "CHV"])
        assert [r.policy for r in reports] == ["CHV"]
        assert len(failures) == 1
        assert failures[0][0] == "CH"
        assert "boom" in failures[0][1]

    def test_policy_output_dirs(self, tmp_path):
        base = tiny_config(tmp_path, epochs=0, val_episodes=1, test_episodes=1,
                           eval_seeds=1)
        run_ablation_grid(base, ["CHV+DROP"])
        assert (tmp_path / "run" / "policy_CHV_DROP" / "record.json").exists()


class TestResultsIO:
    def _reports(self):
        return [
            EvalReport("CHV", "protonet", "omniglot", 5, 1, "meta-test",
                       0.6412345678901234, 0.0123456789, 600, 0),
            EvalReport("NONE", "maml", "synthetic", 20, 5, "meta-test",
                       0.25, 0.0, 100, 3),
        ]

    def test_csv_roundtrip_exact(self, tmp_path):
        reports = self._reports()
        path = tmp_path / "results.csv"
        emit_results(reports, path)
        header = path.read_text().splitlines()[0]
        assert header == ",".join(CSV_COLUMNS)
        assert read_results(path) == reports

    def test_markdown_format(self, tmp_path):
        emit_results(self._reports(), tmp_path / "r.csv", tmp_path / "r.md")
        lines = (tmp_path / "r.md").read_text().splitlines()
        assert lines[0].startswith("| policy | learner |")
        assert re.search(r"\| 64\.12±1\.23% \|", lines[2])
        assert "| 5-way 1-shot |" in lines[2]
        assert "| 20-way 5-shot |" in lines[3]


class TestPlots:
    def test_written_files(self, tmp_path):
        history = [
            {"epoch": 0, "train_loss": None, "train_acc": None, "val_acc": 0.2},
            {"epoch": 1, "train_loss": 1.0, "train_acc": 0.5, "val_acc": 0.4},
        ]
        written = emit_plots(tmp_path, history=history,
                             reports=self._tiny_reports())
        names = sorted(p.name for p in written)
        assert names == ["ablation.png", "training_curve.png"]
        assert all(p.stat().st_size > 0 for p in written)

    def test_nothing_to_plot(self, tmp_path):
        assert emit_plots(tmp_path) == []

    @staticmethod
    def _tiny_reports():
        return [EvalReport("CHV", "protonet", "synthetic", 5, 1, "meta-test",
                           0.7, 0.01, 10, 0)]


class TestSplitAndLearnerWiring:
    def test_synthetic_splits_load(self, tmp_path):
        train, val, test = load_splits(tiny_config(tmp_path))
        assert train.split == "meta-train"
        assert val.split == "meta-val"
        assert test.split == "meta-test"

    def test_missing_data_root_message(self, tmp_path, monkeypatch):
        monkeypatch.delenv("DATA_ROOT", raising=False)
        config = tiny_config(tmp_path, dataset="omniglot")
        with pytest.raises(LoadError, match="--data-root"):
            load_splits(config)

    def test_build_learner_dispatch(self, tmp_path):
        config = tiny_config(tmp_path)
        learner = build_learner(config, 1, 28)
        assert isinstance(learner, ProtoNetLearner)
        assert learner.config.metric == config.metric
        maml = build_learner(replace(config, learner="maml", inner_steps=3),
                             1, 28)
        assert isinstance(maml, MamlLearner)
        assert maml.config.inner_steps == 3

    def test_load_learner_rejects_unknown(self, tmp_path):
        path = tmp_path / "x.ckpt"
        torch.save({"meta": {"learner": "forest"}}, path)
        with pytest.raises(ValueError, match="learner"):
            load_learner(path)
