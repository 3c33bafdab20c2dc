"""Run configuration files, manifests, and the metrics CSV.

Config files and manifests share one key=value format ('#' comments,
blank lines ignored). A manifest is just a config dict extended with
the run's file paths, so re-running from a manifest reproduces the
metrics CSV byte for byte: floats are serialized with repr, which
round-trips float64 exactly.
"""

import os

from .errors import ParseError
from .losses import LossWeights, Temperatures
from .rerank import ClusterConfig
from .sampling import BatchSpec, PerturbationConfig
from .trainer import EpochReport, TrainConfig

SEED_ENV_VAR = "SELFREID_SEED"

METRICS_COLUMNS = ("epoch", "n_clusters", "n_outliers", "L_agnostic", "L_cross",
                   "L_h_ins", "L_s_ins", "L_total", "mean_KL", "mAP",
                   "rank1", "rank5", "rank10")

# key -> (type, short description); order defines file and --help order.
CONFIG_SCHEMA = {
    "epochs": (int, "training epochs"),
    "iterations": (int, "iterations per epoch"),
    "n_identities": (int, "pseudo identities per batch"),
    "n_instances": (int, "instances per identity"),
    "tau_agnostic": (float, "cluster-proxy softmax temperature"),
    "tau_cross": (float, "cross-camera proxy temperature"),
    "tau_hard": (float, "hard-instance temperature"),
    "tau_soft": (float, "consistency temperature"),
    "lambda_hard": (float, "hard-instance loss weight"),
    "lambda_soft": (float, "consistency loss weight"),
    "k1": (int, "reciprocal neighborhood size"),
    "k2": (int, "local query expansion size"),
    "eps": (float, "DBSCAN distance threshold"),
    "min_samples": (int, "DBSCAN minimum cluster size"),
    "noise_sigma": (float, "augmentation noise scale"),
    "dropout": (float, "augmentation dropout fraction"),
    "restyle_prob": (float, "augmentation camera-restyle probability"),
    "restyle_scale": (float, "augmentation camera-restyle offset scale"),
    "alpha": (float, "EMA momentum coefficient"),
    "base_lr": (float, "optimizer learning rate"),
    "warmup_epochs": (int, "linear warmup epochs"),
    "weight_decay": (float, "decoupled weight decay"),
    "memory_mode": (str, "proxy memory mode: aware | agnostic"),
    "n_neg": (int, "nearest negative proxies in the cross-camera loss"),
    "hidden_dim": (int, "encoder hidden width"),
    "out_dim": (int, "embedding dimension"),
    "seed": (int, "master seed"),
    "labels_mode": (str, "pseudo | oracle (ground-truth labels)"),
    "hard_negatives": (str, "denominator variant: all | hardest"),
    "consistency_variant": (str, "kl_clean | mse | strong_strong"),
    "checkpoint_every": (int, "checkpoint interval in epochs (0 = off)"),
    "eval_every": (int, "evaluation interval in epochs (0 = final only)"),
}


def config_to_dict(cfg: TrainConfig) -> dict:
    return {
        "epochs": cfg.epochs,
        "iterations": cfg.iterations,
        "n_identities": cfg.batch.n_identities,
        "n_instances": cfg.batch.n_instances,
        "tau_agnostic": cfg.temperatures.agnostic,
        "tau_cross": cfg.temperatures.cross,
        "tau_hard": cfg.temperatures.hard,
        "tau_soft": cfg.temperatures.soft,
        "lambda_hard": cfg.weights.hard,
        "lambda_soft": cfg.weights.soft,
        "k1": cfg.cluster.k1,
        "k2": cfg.cluster.k2,
        "eps": cfg.cluster.eps,
        "min_samples": cfg.cluster.min_samples,
        "noise_sigma": cfg.perturbation.noise_sigma,
        "dropout": cfg.perturbation.dropout,
        "restyle_prob": cfg.perturbation.restyle_prob,
        "restyle_scale": cfg.perturbation.restyle_scale,
        "alpha": cfg.alpha,
        "base_lr": cfg.base_lr,
        "warmup_epochs": cfg.warmup_epochs,
        "weight_decay": cfg.weight_decay,
        "memory_mode": cfg.memory_mode,
        "n_neg": cfg.n_neg,
        "hidden_dim": cfg.hidden_dim,
        "out_dim": cfg.out_dim,
        "seed": cfg.seed,
        "labels_mode": cfg.labels_mode,
        "hard_negatives": cfg.hard_negatives,
        "consistency_variant": cfg.consistency_variant,
        "checkpoint_every": cfg.checkpoint_every,
        "eval_every": cfg.eval_every,
    }


def config_from_dict(values: dict) -> TrainConfig:
    unknown = set(values) - set(CONFIG_SCHEMA)
    if unknown:
        raise ParseError(f"unknown config keys: {sorted(unknown)}")
    d = {k: CONFIG_SCHEMA[k][0](values[k]) for k in values}
    base = config_to_dict(TrainConfig())
    base.update(d)
    cfg = TrainConfig(
        epochs=base["epochs"],
        iterations=base["iterations"],
        batch=BatchSpec(base["n_identities"], base["n_instances"]),
        temperatures=Temperatures(base["tau_agnostic"], base["tau_cross"],
                                  base["tau_hard"], base["tau_soft"]),
        weights=LossWeights(base["lambda_hard"], base["lambda_soft"]),
        cluster=ClusterConfig(base["k1"], base["k2"], base["eps"],
                              base["min_samples"]),
        perturbation=PerturbationConfig(base["noise_sigma"], base["dropout"],
                                        base["restyle_prob"], base["restyle_scale"]),
        alpha=base["alpha"],
        base_lr=base["base_lr"],
        warmup_epochs=base["warmup_epochs"],
        weight_decay=base["weight_decay"],
        memory_mode=base["memory_mode"],
        n_neg=base["n_neg"],
        hidden_dim=base["hidden_dim"],
        out_dim=base["out_dim"],
        seed=base["seed"],
        labels_mode=base["labels_mode"],
        hard_negatives=base["hard_negatives"],
        consistency_variant=base["consistency_variant"],
        checkpoint_every=base["checkpoint_every"],
        eval_every=base["eval_every"],
    )
    cfg.validate()
    return cfg


def default_seed() -> int:
    """Built-in default seed, overridable via the environment."""
    return int(os.environ.get(SEED_ENV_VAR, TrainConfig().seed))


def _format_value(value) -> str:
    return repr(float(value)) if isinstance(value, float) else str(value)


def write_keyvalue(path, values: dict, header: str = "") -> None:
    with open(path, "w") as fh:
        if header:
            fh.write(f"# {header}\n")
        for key, value in values.items():
            fh.write(f"{key} = {_format_value(value)}\n")


def read_keyvalue(path) -> dict:
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError(f"{path}:{lineno}: expected key = value")
            key, _, raw = line.partition("=")
            values[key.strip()] = raw.strip()
    return values


def _metrics_row(report: EpochReport) -> str:
    cells = [str(report.epoch), str(report.cluster_count),
             str(report.outlier_count)]
    cells += [repr(float(v)) for v in (report.mean_agnostic, report.mean_cross,
                                       report.mean_hard, report.mean_soft,
                                       report.mean_total, report.mean_kl)]
    if report.evaluation is not None:
        ev = report.evaluation
        cells += [repr(float(v)) for v in (ev.mean_ap, ev.rank1, ev.rank5, ev.rank10)]
    else:
        cells += ["", "", "", ""]
    return ",".join(cells)


def write_metrics_csv(path, reports) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(METRICS_COLUMNS) + "\n")
        for report in reports:
            fh.write(_metrics_row(report) + "\n")


def append_eval_row(path, evaluation) -> None:
    """Append an evaluation-only row (training columns blank)."""
    exists = os.path.exists(path)
    with open(path, "a") as fh:
        if not exists:
            fh.write(",".join(METRICS_COLUMNS) + "\n")
        cells = [""] * 9 + [repr(float(v)) for v in
                            (evaluation.mean_ap, evaluation.rank1,
                             evaluation.rank5, evaluation.rank10)]
        fh.write(",".join(cells) + "\n")
