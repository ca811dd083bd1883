"""Batch command-line front end.

    vmfml <command> [--config FILE] [--key value ...]

Commands: train, eval, retrieve, cluster, embed, sample, diagnose, help.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure (non-finite loss, zero-norm embedding).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .clustering import movmf_em, spherical_kmeans
from .config import KEYS, RunConfig, build_config, read_config_file
from .data import LabeledDataset, load_csv, load_idx
from .directional import VmfParams, mean_resultant_length, sample_vmf
from .errors import (
    ConfigError,
    DataError,
    DimensionMismatch,
    LabelOutOfRange,
    LengthMismatch,
    NumericError,
    VmfError,
)
from .evaluation import diagnostics_from_embeddings, nmi, predict, recall_at_k
from .network import NetworkConfig, embed, init_network
from .trainer import TrainConfig, train

log = logging.getLogger("vmfml")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

COMMANDS = {
    "train": "run alternating training and write model.vmf, checkpoints/ and train_log.txt",
    "eval": "nearest-prototype accuracy of a checkpoint",
    "retrieve": "Recall@K of a checkpoint's embeddings",
    "cluster": "spherical k-means / movMF clustering of embeddings",
    "embed": "write embeddings.txt: label followed by p coordinates per line",
    "sample": "draw vMF sample clouds (one file per kappa)",
    "diagnose": "average per-class kappa-hat and average prototype cosine",
    "help": "show the full flag reference",
}


# ---------------------------------------------------------------------------
# output helpers


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_report(path, items: dict) -> None:
    """``key: value`` lines."""
    Path(path).write_text("".join(f"{k}: {_fmt(v)}\n" for k, v in items.items()))


def write_metrics_csv(path, items: dict) -> None:
    """Two-column CSV with header ``metric,value``."""
    Path(path).write_text("metric,value\n" + "".join(f"{k},{_fmt(v)}\n" for k, v in items.items()))


def write_embeddings(path, embeddings: np.ndarray, labels: np.ndarray) -> None:
    p = embeddings.shape[1]
    with open(path, "w") as f:
        f.write("# label " + " ".join(f"x{j}" for j in range(p)) + "\n")
        for y, row in zip(labels, embeddings):
            f.write(f"{int(y)} " + " ".join(repr(float(v)) for v in row) + "\n")


def read_embeddings(path) -> tuple[np.ndarray, np.ndarray]:
    try:
        arr = np.loadtxt(path, comments="#", ndmin=2)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read embeddings from {path}: {exc}") from None
    if arr.shape[1] < 3:
        raise DataError(f"{path}: expected a label and at least two coordinates per line")
    return arr[:, 1:], arr[:, 0].astype(np.int64)


@contextmanager
def output_lock(out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / ".vmfml.lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ConfigError(f"output directory {out_dir} is locked by another run ({lock})") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


# ---------------------------------------------------------------------------
# data


def _load_split(cfg: RunConfig, split: str) -> LabeledDataset | None:
    csv = getattr(cfg, f"{split}_csv")
    images = getattr(cfg, f"{split}_images")
    try:
        if csv:
            data = load_csv(csv, split=split)
        elif images:
            data = load_idx(images, getattr(cfg, f"{split}_labels"), split=split)
        else:
            return None
    except OSError as exc:
        raise DataError(str(exc)) from None
    limit = getattr(cfg, f"max_{split}")
    if limit:
        data = data.subset(slice(0, limit), split)
    return data


def _require(cfg: RunConfig, split: str) -> LabeledDataset:
    data = _load_split(cfg, split)
    if data is None:
        raise ConfigError(f"no {split} data configured (set {split}_csv or {split}_images/{split}_labels)")
    return data


def _eval_data(cfg: RunConfig) -> LabeledDataset:
    return _require(cfg, cfg.split)


def _load_model(cfg: RunConfig):
    path = cfg.checkpoint_path
    if not path.exists():
        raise ConfigError(f"checkpoint {path} not found")
    net, protos, _ = load_checkpoint(path)
    return net, protos


# ---------------------------------------------------------------------------
# commands


def cmd_train(cfg: RunConfig, out: Path) -> None:
    data = _require(cfg, "train")
    widths = (data.n_features, *cfg.hidden, cfg.embedding_dim)
    net = init_network(NetworkConfig(widths, cfg.activation, cfg.sub_seed("init")))
    tconf = TrainConfig(
        kappa=cfg.kappa,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        update_interval=cfg.update_interval or None,
        lr_schedule=cfg.learning_rate,
        momentum=cfg.momentum,
        shuffle_seed=cfg.sub_seed("shuffle"),
        prototype_seed=cfg.sub_seed("prototypes"),
    )
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)
    net, protos, tlog = train(net, data, tconf, checkpoint_dir=ckpt_dir)
    save_checkpoint(out / "model.vmf", net, protos, {"iterations": len(tlog.losses)})
    tlog.write(out / "train_log.txt")
    emb = embed(net, data.features)
    report = {
        "command": "train",
        "n_train": len(data),
        "n_classes": protos.n_classes,
        "embedding_dim": protos.dim,
        "kappa": protos.kappa,
        "iterations": len(tlog.losses),
        "refreshes": len(tlog.refreshes),
        "final_batch_loss": tlog.losses[-1],
        "train_loss": tlog.refreshes[-1].train_loss_after,
        "train_accuracy": float(np.mean(predict(emb, protos) == data.labels)),
        "refresh_loss_increases": len(tlog.warnings),
    }
    write_report(out / "train_report.txt", report)
    write_metrics_csv(out / "train_metrics.csv", report)


def cmd_eval(cfg: RunConfig, out: Path) -> None:
    net, protos = _load_model(cfg)
    data = _eval_data(cfg)
    emb = embed(net, data.features)
    pred = predict(emb, protos)
    report = {"command": "eval", "split": cfg.split, "n": len(data),
              "accuracy": float(np.mean(pred == data.labels))}
    for c in range(protos.n_classes):
        members = data.labels == c
        if members.any():
            report[f"class_{c}_accuracy"] = float(np.mean(pred[members] == c))
            report[f"class_{c}_mean_cosine"] = float(np.mean(emb[members] @ protos.mus[c]))
    write_report(out / "eval_report.txt", report)
    write_metrics_csv(out / "eval_metrics.csv", report)


def cmd_retrieve(cfg: RunConfig, out: Path) -> None:
    net, _ = _load_model(cfg)
    data = _eval_data(cfg)
    res = recall_at_k(embed(net, data.features), data.labels, cfg.ks)
    report = {"command": "retrieve", "split": cfg.split, "n": len(data),
              "queries": res.n_queries, "excluded_queries": res.n_excluded}
    for k, v in res.recall.items():
        report[f"recall@{k}"] = v
    write_report(out / "retrieval_report.txt", report)
    write_metrics_csv(out / "retrieval_metrics.csv", report)


def cmd_embed(cfg: RunConfig, out: Path) -> None:
    net, _ = _load_model(cfg)
    data = _eval_data(cfg)
    write_embeddings(out / "embeddings.txt", embed(net, data.features), data.labels)


def cmd_diagnose(cfg: RunConfig, out: Path) -> None:
    net, protos = _load_model(cfg)
    data = _eval_data(cfg)
    diag = diagnostics_from_embeddings(embed(net, data.features), data.labels, protos)
    report = {"command": "diagnose", "split": cfg.split, "kappa": protos.kappa, **diag.as_dict()}
    for c, k in diag.per_class_kappa_hat.items():
        report[f"class_{c}_kappa_hat"] = k
    write_report(out / "diagnose_report.txt", report)
    write_metrics_csv(out / "diagnose_metrics.csv", report)


def cmd_cluster(cfg: RunConfig, out: Path) -> None:
    if cfg.embeddings:
        points, labels = read_embeddings(cfg.embeddings)
    else:
        net, _ = _load_model(cfg)
        data = _eval_data(cfg)
        points, labels = embed(net, data.features), data.labels
    k = cfg.clusters or int(np.unique(labels).size)
    methods = ["spkmeans", "movmf-soft", "movmf-hard"] if cfg.cluster_method == "all" else [cfg.cluster_method]
    seed = cfg.sub_seed("clustering")
    report = {"command": "cluster", "n": points.shape[0], "k": k}
    for method in methods:
        if method == "spkmeans":
            res = spherical_kmeans(points, k, seed=seed, max_iter=cfg.max_iter, tol=cfg.tol)
        else:
            res = movmf_em(points, k, mode=method.split("-")[1], seed=seed, max_iter=cfg.max_iter, tol=cfg.tol)
        score = nmi(labels, res.assignments)
        summary = {
            "method": method, "k": k, "n": points.shape[0], "iterations": res.n_iter,
            "converged": res.converged, "objective": res.objective_trace[-1], "nmi": score,
            "events": len(res.events),
        }
        with open(out / f"assignments_{method}.txt", "w") as f:
            f.write("".join(f"{a}\n" for a in res.assignments))
            f.write("# summary\n")
            f.write("".join(f"# {key}: {_fmt(v)}\n" for key, v in summary.items()))
        report[f"{method}_nmi"] = score
        report[f"{method}_iterations"] = res.n_iter
    write_report(out / "cluster_report.txt", report)
    write_metrics_csv(out / "cluster_metrics.csv", report)


def cmd_sample(cfg: RunConfig, out: Path) -> None:
    rng = np.random.default_rng(cfg.sub_seed("sampling"))
    mu = rng.standard_normal(cfg.sample_dim)
    mu /= np.linalg.norm(mu)
    report = {"command": "sample", "p": cfg.sample_dim, "n": cfg.sample_n}
    for i, kappa in enumerate(cfg.sample_kappas):
        pts = sample_vmf(VmfParams(mu, kappa), cfg.sample_n, cfg.sub_seed(f"sampling/{i}"))
        name = f"sample_kappa_{kappa:g}.txt"
        with open(out / name, "w") as f:
            f.write(f"# kappa={kappa!r} p={cfg.sample_dim} n={cfg.sample_n} mu={' '.join(map(repr, mu.tolist()))}\n")
            for row in pts:
                f.write(" ".join(repr(float(v)) for v in row) + "\n")
        report[f"kappa_{kappa:g}_rbar"] = mean_resultant_length(pts)
    write_report(out / "sample_report.txt", report)
    write_metrics_csv(out / "sample_metrics.csv", report)


HANDLERS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "retrieve": cmd_retrieve,
    "cluster": cmd_cluster,
    "embed": cmd_embed,
    "sample": cmd_sample,
    "diagnose": cmd_diagnose,
}


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    epilog = "commands:\n" + "".join(f"  {c:<10}{h}\n" for c, h in COMMANDS.items())
    epilog += (
        "\nprecedence: built-in default < --config file < command-line flag\n"
        "exit codes: 0 ok, 2 configuration error, 3 data error, 4 numeric failure\n"
    )
    parser = _Parser(
        prog="vmfml",
        description="von Mises-Fisher metric learning: train, evaluate, cluster, sample.",
        epilog=epilog,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("command", choices=list(COMMANDS), help="what to run")
    parser.add_argument("--config", help="key = value configuration file")
    parser.add_argument("--verbose", "-v", action="store_true", help="log progress to stderr")
    parser.add_argument("--version", action="version", version=f"vmfml {__version__}")
    group = parser.add_argument_group("configuration keys (also valid in the config file)")
    for key in KEYS:
        group.add_argument(
            f"--{key.name.replace('_', '-')}", dest=key.name, default=None, metavar="VALUE",
            help=f"{key.help} [default: {key.default!r}]",
        )
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "help":
            parser.print_help()
            return EXIT_OK
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        file_values = read_config_file(args.config) if args.config else {}
        flags = {k.name: getattr(args, k.name) for k in KEYS}
        cfg = build_config(file_values, flags)
        out = Path(cfg.output_dir)
        with output_lock(out):
            HANDLERS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"vmfml: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, DimensionMismatch, LabelOutOfRange, LengthMismatch) as exc:
        print(f"vmfml: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"vmfml: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except VmfError as exc:
        print(f"vmfml: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def main() -> None:
    sys.exit(run())
