"""Command line interface for data generation, training, evaluation and export.

Every option can come from three places with a fixed precedence: an explicit
command line flag wins over a value in the ``--config`` JSON file, which wins
over the built-in default. Config files are flat JSON objects; unknown keys
are rejected so typos fail loudly. All commands are deterministic given the
resolved config.

Exit codes: 0 on success, 2 for bad flags or config values, 1 for I/O or
runtime failures (unreadable data, corrupt checkpoints, non-finite losses).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .baselines import STRATEGY_NAMES, StrategySpec
from .data import SyntheticConfig, generate_synthetic, load_dataset, make_split, write_dataset
from .errors import (
    CheckpointError,
    ConfigError,
    ContractError,
    DataFormatError,
    NumericError,
    PoolSizeError,
    SplitError,
)
from .models import load_checkpoint
from .seeding import derive_seed
from .trainer import (
    TrainConfig,
    evaluate,
    export_embeddings,
    read_metrics_csv,
    run_ablation,
    run_experiment,
    run_k_sweep,
    write_metrics_csv,
)

# one flat namespace: training knobs, synthetic-data knobs, paths
CONFIG_DEFAULTS: dict = {
    # training
    "strategy": "assl",
    "strategy_hypers": {},
    "lambda1": 1.0,
    "lambda2": 0.1,
    "k": 10,
    "frames": 40,
    "batch_labeled": 16,
    "batch_unlabeled": 16,
    "epochs": 100,
    "lr": 0.0005,
    "lr_decay": 0.5,
    "lr_decay_every": 30,
    "seed": 0,
    "kl_target_stop_gradient": True,
    "mask_fraction": 0.2,
    "hidden": 512,
    # synthetic data / split
    "labels_fraction": 0.1,
    "classes": 6,
    "joints": 8,
    "raw_frames": 60,
    "per_class": 100,
    "test_per_class": 0,  # 0 means per_class // 2
    "noise_scale": 0.05,
    "data_seed": 0,
    # paths ("" means unset)
    "data": "",
    "test_data": "",
    "out_dir": "assl-run",
    "dump_neighbors": False,
}

_EXIT_USAGE = 2
_EXIT_RUNTIME = 1


def load_config_file(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a JSON object")
    unknown = sorted(set(raw) - set(CONFIG_DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    for key, value in raw.items():
        default = CONFIG_DEFAULTS[key]
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"config key {key!r} must be true or false")
        elif isinstance(default, int):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"config key {key!r} must be an integer")
        elif isinstance(default, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"config key {key!r} must be a number")
        elif isinstance(default, str):
            if not isinstance(value, str):
                raise ConfigError(f"config key {key!r} must be a string")
        elif isinstance(default, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {key!r} must be an object")
    return raw


def resolve_config(args: argparse.Namespace) -> dict:
    """Merge defaults <- config file <- explicit flags."""
    cfg = dict(CONFIG_DEFAULTS)
    if getattr(args, "config", None):
        cfg.update(load_config_file(args.config))
    for key in CONFIG_DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if isinstance(cfg["strategy_hypers"], str):
        try:
            cfg["strategy_hypers"] = json.loads(cfg["strategy_hypers"])
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--strategy-hypers is not valid JSON: {exc}") from exc
        if not isinstance(cfg["strategy_hypers"], dict):
            raise ConfigError("--strategy-hypers must be a JSON object")
    return cfg


def build_train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(
        strategy=StrategySpec(cfg["strategy"], dict(cfg["strategy_hypers"])),
        lambda1=float(cfg["lambda1"]),
        lambda2=float(cfg["lambda2"]),
        k=cfg["k"],
        frames=cfg["frames"],
        batch_labeled=cfg["batch_labeled"],
        batch_unlabeled=cfg["batch_unlabeled"],
        epochs=cfg["epochs"],
        lr=float(cfg["lr"]),
        lr_decay=float(cfg["lr_decay"]),
        lr_decay_every=cfg["lr_decay_every"],
        seed=cfg["seed"],
        kl_target_stop_gradient=cfg["kl_target_stop_gradient"],
        mask_fraction=float(cfg["mask_fraction"]),
        hidden=cfg["hidden"],
    )


def synthetic_config(cfg: dict, seed: int, per_class: int) -> SyntheticConfig:
    return SyntheticConfig(
        classes=cfg["classes"],
        joints=cfg["joints"],
        frames=cfg["raw_frames"],
        samples_per_class=per_class,
        noise_scale=float(cfg["noise_scale"]),
        seed=seed,
    )


def load_corpora(cfg: dict):
    """Training and test corpora, loaded from disk or generated on the fly."""
    if cfg["data"]:
        train = load_dataset(cfg["data"])
    else:
        train = generate_synthetic(synthetic_config(cfg, cfg["data_seed"], cfg["per_class"]))
    if cfg["test_data"]:
        test = load_dataset(cfg["test_data"])
    else:
        per_class = cfg["test_per_class"] or max(1, cfg["per_class"] // 2)
        test = generate_synthetic(
            synthetic_config(cfg, derive_seed(cfg["data_seed"], "test-corpus"), per_class)
        )
    return train, test


def prepare_out_dir(cfg: dict) -> Path:
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# plots (convenience renderings; the CSVs stay the source of truth)
# ---------------------------------------------------------------------------


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_training_curves(rows, path) -> None:
    if not rows:
        return
    plt = _pyplot()
    epochs = [r.epoch for r in rows]
    fig, (left, right) = plt.subplots(1, 2, figsize=(9.0, 3.5))
    left.plot(epochs, [r.total for r in rows], label="total")
    left.plot(epochs, [r.l_sup for r in rows], label="supervised")
    left.plot(epochs, [r.l_unlabeled for r in rows], label="unlabeled")
    left.set_xlabel("epoch")
    left.set_ylabel("loss")
    left.legend(fontsize=8)
    right.plot(epochs, [r.test_accuracy for r in rows], color="tab:green")
    right.set_xlabel("epoch")
    right.set_ylabel("test accuracy")
    right.set_ylim(0.0, 1.0)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def plot_k_sweep(rows, path) -> None:
    if not rows:
        return
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5.0, 3.5))
    ax.errorbar(
        [r["k"] for r in rows],
        [r["mean_acc"] for r in rows],
        yerr=[r["std_acc"] for r in rows],
        marker="o",
        capsize=3,
    )
    ax.set_xlabel("neighborhood size K")
    ax.set_ylabel("mean test accuracy")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def plot_neighbor_quality(series: dict, path) -> None:
    """One line per run: neighbor quality ratio over epochs."""
    if not series:
        return
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5.0, 3.5))
    for label, rows in series.items():
        ax.plot(
            [r["epoch"] for r in rows],
            [r["neighbor_quality_ratio"] for r in rows],
            label=label,
        )
    ax.set_xlabel("epoch")
    ax.set_ylabel("neighbor quality ratio")
    ax.set_ylim(0.0, 1.0)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_gen_data(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    corpus = generate_synthetic(synthetic_config(cfg, cfg["data_seed"], cfg["per_class"]))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_dataset(corpus, out)
    print(
        json.dumps(
            {
                "path": str(out),
                "samples": len(corpus),
                "classes": cfg["classes"],
                "per_class": cfg["per_class"],
            }
        )
    )
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    train_cfg = build_train_config(cfg)
    train_corpus, test_corpus = load_corpora(cfg)
    split = make_split(
        train_corpus, float(cfg["labels_fraction"]), seed=cfg["seed"], test=test_corpus
    )
    out = prepare_out_dir(cfg)
    result = run_experiment(
        train_cfg, split, out_dir=out, dump_neighbors=cfg["dump_neighbors"]
    )
    write_metrics_csv(result.metrics, out / "metrics.csv")
    summary = {
        "strategy": cfg["strategy"],
        "fraction": float(cfg["labels_fraction"]),
        "seed": cfg["seed"],
        "best_accuracy": result.best_accuracy,
        "best_epoch": result.best_epoch,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    plot_training_curves(result.metrics, out / "curves.png")
    print(json.dumps(summary))
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    bundle, sidecar = load_checkpoint(args.checkpoint)
    corpus = load_dataset(args.data)
    accuracy = evaluate(bundle, corpus, frames=sidecar["frames"])
    print(json.dumps({"accuracy": accuracy, "samples": len(corpus)}))
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    if not variants:
        raise ConfigError("--variants needs at least one strategy name")
    bad = [v for v in variants if v not in STRATEGY_NAMES]
    if bad:
        raise ConfigError(
            f"unknown variants: {', '.join(bad)}; choose from {', '.join(STRATEGY_NAMES)}"
        )
    try:
        ks = [int(v) for v in args.ks.split(",") if v.strip()] if args.ks else []
    except ValueError as exc:
        raise ConfigError(f"--ks must be comma-separated integers: {exc}") from exc
    base_cfg = build_train_config(cfg)
    train_corpus, test_corpus = load_corpora(cfg)
    seeds = [cfg["seed"] + i for i in range(args.seeds)]
    fraction = float(cfg["labels_fraction"])
    out = prepare_out_dir(cfg)
    runs_dir = out / "runs"

    rows = run_ablation(
        train_corpus, test_corpus, base_cfg, fraction, variants, seeds, out_dir=runs_dir
    )
    with open(out / "ablation.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("variant,seeds,mean_acc,std_acc,accuracies\n")
        for row in rows:
            accs = ";".join(repr(a) for a in row["accuracies"])
            fh.write(
                f"{row['variant']},{row['seeds']},{row['mean_acc']!r},{row['std_acc']!r},{accs}\n"
            )

    k_rows = []
    if ks:
        k_rows = run_k_sweep(
            train_corpus, test_corpus, base_cfg, fraction, ks, seeds, out_dir=runs_dir
        )
        with open(out / "ksweep.csv", "w", encoding="utf-8", newline="") as fh:
            fh.write("k,seeds,mean_acc,std_acc,accuracies\n")
            for row in k_rows:
                accs = ";".join(repr(a) for a in row["accuracies"])
                fh.write(
                    f"{row['k']},{row['seeds']},{row['mean_acc']!r},{row['std_acc']!r},{accs}\n"
                )
        plot_k_sweep(k_rows, out / "ksweep.png")

    # neighbor quality over epochs, one line per neighborhood run (first seed)
    series = {}
    for variant in variants:
        if StrategySpec(variant).use_neighborhood:
            series[variant] = read_metrics_csv(runs_dir / f"{variant}-seed{seeds[0]}" / "metrics.csv")
    for k in ks:
        series[f"k={k}"] = read_metrics_csv(runs_dir / f"k{k}-seed{seeds[0]}" / "metrics.csv")
    plot_neighbor_quality(series, out / "neighbor_quality.png")

    print(json.dumps({"variants": rows, "k_sweep": k_rows}))
    return 0


def cmd_export_embeddings(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    bundle, sidecar = load_checkpoint(args.checkpoint)
    train_corpus, test_corpus = load_corpora(cfg)
    split = make_split(
        train_corpus, float(cfg["labels_fraction"]), seed=cfg["seed"], test=test_corpus
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    export_embeddings(bundle, split, out, frames=sidecar["frames"])
    rows = len(split.labeled) + len(split.unlabeled) + len(split.test)
    print(json.dumps({"path": str(out), "rows": rows, "dims": bundle.d}))
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_config_flags(parser: argparse.ArgumentParser, keys) -> None:
    """Register overlay flags. Defaults stay None so precedence can detect them."""
    helps = {
        "strategy": f"training strategy, one of: {', '.join(STRATEGY_NAMES)}",
        "strategy_hypers": "JSON object of strategy hyperparameters",
        "lambda1": "weight of the unlabeled objective",
        "lambda2": "weight of the adversarial objective",
        "k": "neighborhood size for the feature bank lookup",
        "frames": "frames sampled per sequence for model input",
        "batch_labeled": "labeled sequences per step",
        "batch_unlabeled": "unlabeled sequences per step",
        "epochs": "training epochs (one pass over the unlabeled pool)",
        "lr": "initial Adam learning rate",
        "lr_decay": "multiplicative learning-rate decay factor",
        "lr_decay_every": "epochs between learning-rate decays",
        "seed": "master seed for init, splits, masks and shuffles",
        "kl_target_stop_gradient": "treat local centers as fixed KL targets",
        "mask_fraction": "fraction of frames zeroed for inpainting",
        "hidden": "GRU hidden size per direction",
        "labels_fraction": "fraction of training samples keeping labels",
        "classes": "synthetic action classes",
        "joints": "synthetic skeleton joints",
        "raw_frames": "frames per generated sequence",
        "per_class": "generated training sequences per class",
        "test_per_class": "generated test sequences per class (0: per_class/2)",
        "noise_scale": "sensor noise level in generated data",
        "data_seed": "seed for synthetic corpus generation",
        "data": "path to a training dataset file (generated when empty)",
        "test_data": "path to a test dataset file (generated when empty)",
        "out_dir": "directory for run artifacts",
        "dump_neighbors": "also write per-epoch neighbor tables",
    }
    for key in keys:
        default = CONFIG_DEFAULTS[key]
        flag = "--" + key.replace("_", "-")
        text = f"{helps[key]} (default: {json.dumps(default)})"
        if isinstance(default, bool):
            parser.add_argument(
                flag, action=argparse.BooleanOptionalAction, default=None, help=text
            )
        elif isinstance(default, int):
            parser.add_argument(flag, type=int, default=None, help=text)
        elif isinstance(default, float):
            parser.add_argument(flag, type=float, default=None, help=text)
        else:
            parser.add_argument(flag, type=str, default=None, help=text)


_TRAIN_KEYS = [
    "strategy",
    "strategy_hypers",
    "lambda1",
    "lambda2",
    "k",
    "frames",
    "batch_labeled",
    "batch_unlabeled",
    "epochs",
    "lr",
    "lr_decay",
    "lr_decay_every",
    "seed",
    "kl_target_stop_gradient",
    "mask_fraction",
    "hidden",
]
_DATA_KEYS = [
    "labels_fraction",
    "classes",
    "joints",
    "raw_frames",
    "per_class",
    "test_per_class",
    "noise_scale",
    "data_seed",
]
_PATH_KEYS = ["data", "test_data", "out_dir", "dump_neighbors"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="assl",
        description="Semi-supervised skeleton action recognition workbench.",
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", default=None, help="JSON config file")
        p.set_defaults(func=func)
        return p

    p = add("gen-data", cmd_gen_data, "Generate a synthetic dataset file.")
    p.add_argument("--out", required=True, help="output dataset path")
    _add_config_flags(p, ["classes", "joints", "raw_frames", "per_class", "noise_scale", "data_seed"])

    p = add("train", cmd_train, "Train one strategy and write run artifacts.")
    _add_config_flags(p, _TRAIN_KEYS + _DATA_KEYS + _PATH_KEYS)

    p = add("eval", cmd_eval, "Score a checkpoint on a labeled dataset.")
    p.add_argument("--checkpoint", required=True, help="checkpoint archive path")
    p.add_argument("--data", required=True, help="labeled dataset path")

    p = add("ablate", cmd_ablate, "Compare strategy variants and sweep K.")
    p.add_argument("--variants", required=True, help="comma-separated strategy names")
    p.add_argument("--seeds", type=int, default=3, help="number of seeds (default: 3)")
    p.add_argument("--ks", default="", help="comma-separated K values to sweep (default: none)")
    _add_config_flags(p, _TRAIN_KEYS + _DATA_KEYS + _PATH_KEYS)

    p = add("export-embeddings", cmd_export_embeddings, "Dump translated features to TSV.")
    p.add_argument("--checkpoint", required=True, help="checkpoint archive path")
    p.add_argument("--out", required=True, help="output TSV path")
    _add_config_flags(p, _DATA_KEYS + ["data", "test_data", "seed"])

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return int(exc.code or 0)
    if getattr(args, "func", None) is None:
        parser.print_help()
        return _EXIT_USAGE
    try:
        return args.func(args)
    except (ConfigError, SplitError, PoolSizeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_USAGE
    except (
        DataFormatError,
        CheckpointError,
        ContractError,
        NumericError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
