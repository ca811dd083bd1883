"""Run configuration: flat ``key = value`` files plus command-line overrides.

Precedence is total: built-in default < config file < command-line flag.
Every key is validated before any computation starts. Unknown keys,
repeated keys within a file and mutually exclusive data sources are errors.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError


def _int_list(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(int(t) for t in text.split(","))


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.split(",") if t.strip())


def _schedule(text: str) -> tuple[tuple[int, float], ...]:
    """``"0:0.1,2000:0.01"`` -> ((0, 0.1), (2000, 0.01)); a bare number means from iteration 0."""
    pairs = []
    for item in text.split(","):
        item = item.strip()
        if ":" in item:
            it, rate = item.split(":", 1)
            pairs.append((int(it), float(rate)))
        else:
            pairs.append((0, float(item)))
    return tuple(pairs)


def _path(text: str) -> str:
    return text.strip()


@dataclass(frozen=True)
class Key:
    name: str
    parse: object
    default: str
    help: str


KEYS = [
    Key("seed", int, "0", "global seed; every random stage derives a named sub-seed from it"),
    Key("output_dir", _path, "out", "directory for all artifacts"),
    Key("train_csv", _path, "", "training data as CSV (label,f1,f2,...)"),
    Key("train_images", _path, "", "training images in IDX format"),
    Key("train_labels", _path, "", "training labels in IDX format"),
    Key("test_csv", _path, "", "held-out data as CSV"),
    Key("test_images", _path, "", "held-out images in IDX format"),
    Key("test_labels", _path, "", "held-out labels in IDX format"),
    Key("max_train", int, "0", "use only the first N training rows (0 = all)"),
    Key("max_test", int, "0", "use only the first N held-out rows (0 = all)"),
    Key("split", str, "test", "dataset used by eval/retrieve/embed/diagnose/cluster: train or test"),
    Key("hidden", _int_list, "256", "comma-separated hidden layer widths (empty for none)"),
    Key("embedding_dim", int, "2", "embedding dimension p"),
    Key("activation", str, "relu", "hidden activation: relu or tanh"),
    Key("kappa", float, "15", "shared concentration of the vMF loss"),
    Key("epochs", int, "10", "training epochs"),
    Key("batch_size", int, "64", "mini-batch size"),
    Key("update_interval", int, "0", "SGD iterations between prototype refreshes (0 = one epoch)"),
    Key("learning_rate", _schedule, "0:0.01", "learning-rate schedule, iteration:rate pairs"),
    Key("momentum", float, "0.9", "SGD momentum"),
    Key("checkpoint", _path, "", "checkpoint to read (default: <output_dir>/model.vmf)"),
    Key("ks", _int_list, "1,2,4,8", "K values for Recall@K"),
    Key("cluster_method", str, "all", "spkmeans, movmf-soft, movmf-hard or all"),
    Key("clusters", int, "0", "number of clusters (0 = number of classes)"),
    Key("max_iter", int, "100", "iteration cap for clustering"),
    Key("tol", float, "1e-10", "relative convergence tolerance for clustering"),
    Key("embeddings", _path, "", "embedding file (from embed) to cluster instead of a checkpoint"),
    Key("sample_kappas", _float_list, "1,10,100", "concentrations for the sample command"),
    Key("sample_dim", int, "3", "dimension p for the sample command"),
    Key("sample_n", int, "500", "points per distribution for the sample command"),
]

KEY_MAP = {k.name: k for k in KEYS}

CHOICES = {
    "activation": ("relu", "tanh"),
    "split": ("train", "test"),
    "cluster_method": ("spkmeans", "movmf-soft", "movmf-hard", "all"),
}


class RunConfig:
    """Validated configuration; values are attributes named after the keys."""

    def __init__(self, values: dict, sources: dict):
        self._values = values
        self.sources = sources

    def __getattr__(self, name):
        try:
            return self._values[name]
        except KeyError:
            raise AttributeError(name) from None

    def as_dict(self) -> dict:
        return dict(self._values)

    def sub_seed(self, name: str) -> int:
        """Independent, reproducible seed for one named pipeline stage."""
        ss = np.random.SeedSequence([self.seed, zlib.crc32(name.encode())])
        return int(ss.generate_state(1, dtype=np.uint64)[0])

    @property
    def checkpoint_path(self) -> Path:
        return Path(self.checkpoint) if self.checkpoint else Path(self.output_dir) / "model.vmf"


def read_config_file(path) -> dict[str, str]:
    raw: dict[str, str] = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEY_MAP:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"{path}:{lineno}: key {key!r} given twice")
        raw[key] = value
    return raw


def build_config(file_values: dict[str, str] | None = None, flag_values: dict[str, str] | None = None) -> RunConfig:
    file_values = file_values or {}
    flag_values = {k: v for k, v in (flag_values or {}).items() if v is not None}
    values, sources = {}, {}
    for key in KEYS:
        if key.name in flag_values:
            text, src = flag_values[key.name], "flag"
        elif key.name in file_values:
            text, src = file_values[key.name], "file"
        else:
            text, src = key.default, "default"
        try:
            values[key.name] = key.parse(str(text))
        except (ValueError, TypeError):
            raise ConfigError(f"invalid value {text!r} for {key.name} (from {src})") from None
        sources[key.name] = src
    _validate(values)
    return RunConfig(values, sources)


def _validate(v: dict) -> None:
    for name, allowed in CHOICES.items():
        if v[name] not in allowed:
            raise ConfigError(f"{name} must be one of {allowed}, got {v[name]!r}")
    for split in ("train", "test"):
        has_csv = bool(v[f"{split}_csv"])
        has_idx = bool(v[f"{split}_images"]) or bool(v[f"{split}_labels"])
        if has_csv and has_idx:
            raise ConfigError(f"{split} data given both as CSV and as IDX; choose one")
        if has_idx and not (v[f"{split}_images"] and v[f"{split}_labels"]):
            raise ConfigError(f"{split}_images and {split}_labels must be given together")
    positive = ["embedding_dim", "epochs", "batch_size", "max_iter", "sample_dim", "sample_n"]
    for name in positive:
        if v[name] < 1:
            raise ConfigError(f"{name} must be >= 1, got {v[name]}")
    for name in ("max_train", "max_test", "update_interval", "clusters"):
        if v[name] < 0:
            raise ConfigError(f"{name} must be >= 0, got {v[name]}")
    if v["embedding_dim"] < 2 or v["sample_dim"] < 2:
        raise ConfigError("embedding_dim and sample_dim must be >= 2")
    if v["kappa"] < 0 or not np.isfinite(v["kappa"]):
        raise ConfigError("kappa must be finite and >= 0")
    if not 0.0 <= v["momentum"] < 1.0:
        raise ConfigError("momentum must be in [0, 1)")
    if any(w < 1 for w in v["hidden"]):
        raise ConfigError("hidden widths must be positive")
    sched = v["learning_rate"]
    if not sched or sched[0][0] != 0 or any(b[0] <= a[0] for a, b in zip(sched, sched[1:])):
        raise ConfigError("learning_rate schedule must start at 0 with increasing iterations")
    if any(r <= 0 for _, r in sched):
        raise ConfigError("learning rates must be positive")
    if not v["ks"] or min(v["ks"]) < 1:
        raise ConfigError("ks must be positive integers")
    if not v["sample_kappas"] or min(v["sample_kappas"]) < 0:
        raise ConfigError("sample_kappas must be non-negative")
    if v["tol"] < 0:
        raise ConfigError("tol must be >= 0")
