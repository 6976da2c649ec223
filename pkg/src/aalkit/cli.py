"""Command-line interface.

Subcommands:

  train          meta-train a learner on fabricated episodes
  test           score a checkpoint (or a fresh init) on real-labeled episodes
  ablate         train+test once per augmentation policy, shared budget
  episodes dump  write sampled episodes to disk as PNGs for inspection
  policy dump    print operator tables or a policy's configuration as JSON
  plot           render training curves and ablation charts

Every subcommand accepts --config pointing at a YAML experiment file; any
explicit flags override it.  --data-root falls back to the DATA_ROOT
environment variable.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .augment.policy import DATASET_PARAMS, available_tokens, policy_from_name
from .data import strip_labels
from .episodes import (
    EpisodeSpec,
    dump_episode,
    sample_supervised_episode,
    sample_unsupervised_episode,
)
from .harness import (
    ExperimentConfig,
    apply_overrides,
    emit_plots,
    emit_results,
    load_config,
    load_splits,
    read_results,
    run_ablation_grid,
    run_final_test,
    run_meta_training,
    save_config,
)
from .rng import derive_rng

log = logging.getLogger("aalkit")


def _str2bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


def _add_experiment_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="YAML experiment file to start from")
    p.add_argument("--dataset", choices=("omniglot", "miniimagenet", "synthetic"))
    p.add_argument("--learner", choices=("maml", "protonet"))
    p.add_argument("--n-way", type=int, dest="n_way")
    p.add_argument("--k-shot", type=int, dest="k_shot")
    p.add_argument("--target-per-class", type=int, dest="target_per_class")
    p.add_argument("--augment", help="augmentation policy name, e.g. CHV+DROP")
    p.add_argument("--inner-steps", type=int, dest="inner_steps")
    p.add_argument("--second-order", type=_str2bool, dest="second_order",
                   metavar="{true,false}")
    p.add_argument("--msl", type=_str2bool, metavar="{true,false}")
    p.add_argument("--epochs", type=int)
    p.add_argument("--episodes-per-epoch", type=int, dest="episodes_per_epoch")
    p.add_argument("--meta-batch", type=int, dest="meta_batch")
    p.add_argument("--seed", type=int)
    p.add_argument("--data-root", dest="data_root")
    p.add_argument("--out")


_OVERRIDE_KEYS = (
    "dataset", "learner", "n_way", "k_shot", "target_per_class", "augment",
    "inner_steps", "second_order", "msl", "epochs", "episodes_per_epoch",
    "meta_batch", "seed", "data_root", "out",
)


def _config_from_args(args) -> ExperimentConfig:
    base = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {k: getattr(args, k, None) for k in _OVERRIDE_KEYS}
    return apply_overrides(base, overrides)


def _cmd_train(args) -> int:
    config = _config_from_args(args)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    save_config(config, out / "config.yaml")
    result = run_meta_training(config)
    print(f"best val_acc {result.best_val_acc:.4f} at epoch {result.best_epoch}")
    print(f"checkpoints: {result.best_checkpoint} {result.last_checkpoint}")
    return 0


def _cmd_test(args) -> int:
    config = _config_from_args(args)
    report = run_final_test(config, checkpoint=args.checkpoint)
    out = Path(config.out)
    emit_results([report], out / "results.csv", out / "results.md")
    source = args.checkpoint or "fresh initialization"
    print(f"{report.dataset} {report.N}-way {report.K}-shot, {source}: "
          f"mean_acc={report.mean_acc:.4f} dispersion={report.dispersion:.4f} "
          f"({report.episodes} episodes x {config.eval_seeds} repeats)")
    print(f"results written to {out / 'results.csv'}")
    return 0


def _cmd_ablate(args) -> int:
    config = _config_from_args(args)
    reports, failures = run_ablation_grid(config, args.policies)
    out = Path(config.out)
    emit_results(reports, out / "results.csv", out / "results.md")
    for r in reports:
        print(f"{r.policy}: mean_acc={r.mean_acc:.4f} dispersion={r.dispersion:.4f}")
    for name, err in failures:
        print(f"FAILED {name}: {err}", file=sys.stderr)
    print(f"results written to {out / 'results.csv'}")
    return 1 if failures else 0


def _cmd_episodes_dump(args) -> int:
    config = _config_from_args(args)
    train_ds, _, test_ds = load_splits(config)
    spec = EpisodeSpec(config.n_way, config.k_shot, config.target_per_class)
    out = Path(config.out)
    for i in range(args.count):
        rng = derive_rng(config.seed, "episode-dump", args.mode, i)
        if args.mode == "unsupervised":
            policy = policy_from_name(config.augment, config.dataset)
            ep = sample_unsupervised_episode(strip_labels(train_ds), spec, rng,
                                             policy)
        else:
            ep = sample_supervised_episode(test_ds, spec, rng)
        where = dump_episode(ep, out / f"episode_{i:03d}")
        print(f"wrote {where}")
    return 0


def _cmd_policy_dump(args) -> int:
    dataset = args.dataset or "omniglot"
    if args.augment:
        policy = policy_from_name(args.augment, dataset)
        payload = {
            "name": policy.name,
            "dataset": dataset,
            "ops": [{"token": op.token, "params": op.params} for op in policy.ops],
        }
    else:
        payload = {
            "dataset": dataset,
            "available": list(available_tokens(dataset)),
            "params": DATASET_PARAMS[dataset],
        }
    print(json.dumps(payload, indent=2))
    return 0


def _cmd_plot(args) -> int:
    history = None
    reports = None
    if args.run:
        with open(Path(args.run) / "record.json") as fh:
            history = json.load(fh)["history"]
    if args.results:
        reports = read_results(args.results)
    if history is None and reports is None:
        print("nothing to plot: pass --run and/or --results", file=sys.stderr)
        return 2
    written = emit_plots(args.out, history=history, reports=reports)
    for path in written:
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aalkit",
        description="Few-shot meta-learning from unlabeled images via "
                    "fabricated, augmentation-based episodes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="meta-train a learner")
    _add_experiment_flags(p_train)
    p_train.set_defaults(func=_cmd_train)

    p_test = sub.add_parser("test", help="evaluate on real-labeled episodes")
    _add_experiment_flags(p_test)
    p_test.add_argument("--checkpoint",
                        help="checkpoint to score; omit for a fresh init")
    p_test.set_defaults(func=_cmd_test)

    p_ablate = sub.add_parser("ablate", help="compare augmentation policies")
    _add_experiment_flags(p_ablate)
    p_ablate.add_argument("--policies", nargs="+", required=True,
                          metavar="POLICY")
    p_ablate.set_defaults(func=_cmd_ablate)

    p_episodes = sub.add_parser("episodes", help="episode utilities")
    ep_sub = p_episodes.add_subparsers(dest="episodes_command", required=True)
    p_dump = ep_sub.add_parser("dump", help="write sampled episodes as PNGs")
    _add_experiment_flags(p_dump)
    p_dump.add_argument("--mode", choices=("unsupervised", "supervised"),
                        default="unsupervised")
    p_dump.add_argument("--count", type=int, default=1)
    p_dump.set_defaults(func=_cmd_episodes_dump)

    p_policy = sub.add_parser("policy", help="policy utilities")
    pol_sub = p_policy.add_subparsers(dest="policy_command", required=True)
    p_pdump = pol_sub.add_parser("dump", help="print operator configuration")
    p_pdump.add_argument("--dataset",
                         choices=("omniglot", "miniimagenet", "synthetic"))
    p_pdump.add_argument("--augment", help="policy to describe; omit for the "
                                           "full operator table")
    p_pdump.set_defaults(func=_cmd_policy_dump)

    p_plot = sub.add_parser("plot", help="render charts from run artifacts")
    p_plot.add_argument("--run", help="run directory holding record.json")
    p_plot.add_argument("--results", help="results CSV from test or ablate")
    p_plot.add_argument("--out", default="plots")
    p_plot.set_defaults(func=_cmd_plot)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
