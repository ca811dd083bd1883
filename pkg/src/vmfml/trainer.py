"""Alternating training: frozen prototypes during SGD, full-pass refresh between.

Each round forwards the whole training set, re-estimates every class mean
direction as the normalised sum of that class's embeddings, then runs
``update_interval`` mini-batch SGD iterations on the vMF loss with those
prototypes held fixed. Training stops when the epoch budget is spent; the
returned prototypes are re-estimated once more from the final network.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import save_checkpoint
from .data import LabeledDataset
from .directional import ZERO_NORM_EPS, normalize
from .errors import InvalidConfig, NonFiniteLoss
from .network import Network, OptimizerState, backward, embed, forward, sgd_step
from .objective import PrototypeSet, vmf_loss, vmf_loss_grad_embedding

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    kappa: float = 15.0
    epochs: int = 10
    batch_size: int = 64
    update_interval: int | None = None  # SGD iterations between refreshes; None = one epoch
    lr_schedule: tuple[tuple[int, float], ...] = ((0, 0.01),)
    momentum: float = 0.9
    shuffle_seed: int = 0
    prototype_seed: int = 0

    def __post_init__(self):
        if not math.isfinite(self.kappa) or self.kappa < 0:
            raise InvalidConfig(f"kappa must be finite and >= 0, got {self.kappa}")
        if self.epochs < 1:
            raise InvalidConfig(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise InvalidConfig(f"batch_size must be >= 1, got {self.batch_size}")
        if self.update_interval is not None and self.update_interval < 1:
            raise InvalidConfig(f"update_interval must be >= 1, got {self.update_interval}")
        if not 0.0 <= self.momentum < 1.0:
            raise InvalidConfig(f"momentum must be in [0, 1), got {self.momentum}")
        schedule = tuple((int(i), float(r)) for i, r in self.lr_schedule)
        if not schedule or schedule[0][0] != 0:
            raise InvalidConfig("learning-rate schedule must start at iteration 0")
        its = [i for i, _ in schedule]
        if any(b <= a for a, b in zip(its, its[1:])):
            raise InvalidConfig("learning-rate schedule iterations must be strictly increasing")
        if any(not (r > 0) or math.isinf(r) for _, r in schedule):
            raise InvalidConfig("learning rates must be positive and finite")
        object.__setattr__(self, "lr_schedule", schedule)

    def learning_rate(self, iteration: int) -> float:
        rate = self.lr_schedule[0][1]
        for start, r in self.lr_schedule:
            if iteration >= start:
                rate = r
        return rate


@dataclass
class Refresh:
    iteration: int
    prototypes: np.ndarray
    degenerate: list[int]
    train_loss_before: float | None
    train_loss_after: float


@dataclass
class TrainLog:
    losses: list[float] = field(default_factory=list)
    learning_rates: list[float] = field(default_factory=list)
    refreshes: list[Refresh] = field(default_factory=list)
    timestamps: list[float] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def to_text(self) -> str:
        """Line-oriented rendering. Wall-clock timestamps are left out so that
        reruns with the same seeds produce identical bytes."""
        lines = ["# vmfml train log v1", "# iteration loss learning_rate"]
        by_iter: dict[int, list[Refresh]] = {}
        for r in self.refreshes:
            by_iter.setdefault(r.iteration, []).append(r)
        n = len(self.losses)
        for it in range(n + 1):
            for r in by_iter.get(it, []):
                before = "nan" if r.train_loss_before is None else repr(r.train_loss_before)
                degenerate = ",".join(map(str, r.degenerate)) or "-"
                lines.append(
                    f"refresh {r.iteration} train_loss_before={before} "
                    f"train_loss_after={r.train_loss_after!r} degenerate={degenerate}"
                )
            if it < n:
                lines.append(f"{it} {self.losses[it]!r} {self.learning_rates[it]!r}")
        for w in self.warnings:
            lines.append(f"warning {w}")
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_text())


def random_prototypes(n_classes: int, dim: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return normalize(rng.standard_normal((n_classes, dim)))


def class_resultants(embeddings: np.ndarray, labels: np.ndarray, n_classes: int) -> np.ndarray:
    sums = np.zeros((n_classes, embeddings.shape[1]))
    np.add.at(sums, labels, embeddings)
    return sums


def update_prototypes(
    net: Network,
    data: LabeledDataset,
    previous: PrototypeSet | None = None,
    *,
    kappa: float | None = None,
    n_classes: int | None = None,
    seed: int = 0,
    embeddings: np.ndarray | None = None,
) -> tuple[PrototypeSet, list[int]]:
    """Re-estimate each class mean direction from a full forward pass.

    Classes with no samples, or whose embeddings cancel out, keep their
    previous direction (a seeded random unit vector when there is none).
    Returns the new prototype set and the list of degenerate class indices.
    """
    if n_classes is None:
        n_classes = previous.n_classes if previous is not None else data.n_classes
    if kappa is None:
        kappa = previous.kappa if previous is not None else 0.0
    if embeddings is None:
        embeddings = embed(net, data.features)
    sums = class_resultants(embeddings, data.labels, n_classes)
    norms = np.linalg.norm(sums, axis=1)
    if previous is not None:
        fallback = previous.mus
    else:
        fallback = random_prototypes(n_classes, embeddings.shape[1], seed)
    degenerate = np.flatnonzero(norms < ZERO_NORM_EPS)
    safe = np.where(norms < ZERO_NORM_EPS, 1.0, norms)
    mus = sums / safe[:, None]
    mus[degenerate] = fallback[degenerate]
    if degenerate.size:
        log.info("prototype refresh: classes %s degenerate, keeping previous direction", degenerate.tolist())
    return PrototypeSet(mus, kappa), degenerate.tolist()


class _BatchStream:
    """Uniformly shuffled mini-batches, reshuffled at every epoch boundary."""

    def __init__(self, n: int, batch_size: int, seed: int):
        self.n = n
        self.batch_size = batch_size
        self.rng = np.random.default_rng(seed)
        self.order = self.rng.permutation(n)
        self.pos = 0

    def next(self) -> np.ndarray:
        if self.pos >= self.n:
            self.order = self.rng.permutation(self.n)
            self.pos = 0
        idx = self.order[self.pos : self.pos + self.batch_size]
        self.pos += self.batch_size
        return idx


def train(
    net: Network,
    data: LabeledDataset,
    config: TrainConfig,
    *,
    n_classes: int | None = None,
    checkpoint_dir=None,
    on_iteration=None,
) -> tuple[Network, PrototypeSet, TrainLog]:
    """Run the alternating schedule for ``config.epochs`` epochs.

    ``on_iteration(iteration, prototypes)`` is called after every SGD step,
    which the tests use to watch the prototypes between refreshes.
    """
    n_classes = n_classes or data.n_classes
    if n_classes < 2:
        raise InvalidConfig("training needs at least two classes")
    n = len(data)
    iters_per_epoch = math.ceil(n / config.batch_size)
    total = config.epochs * iters_per_epoch
    interval = config.update_interval or iters_per_epoch

    opt = OptimizerState.zeros_like(net, config.lr_schedule[0][1], config.momentum)
    stream = _BatchStream(n, config.batch_size, config.shuffle_seed)
    tlog = TrainLog()
    protos: PrototypeSet | None = None
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None

    def refresh(iteration: int) -> PrototypeSet:
        emb = embed(net, data.features)
        before = None
        if protos is not None:
            before = vmf_loss(emb, data.labels, protos).total_loss
        new, degenerate = update_prototypes(
            net, data, protos, kappa=config.kappa, n_classes=n_classes,
            seed=config.prototype_seed, embeddings=emb,
        )
        after = vmf_loss(emb, data.labels, new).total_loss
        if before is not None and after > before:
            msg = f"iteration {iteration}: training loss rose across refresh ({before!r} -> {after!r})"
            log.warning(msg)
            tlog.warnings.append(msg)
        tlog.refreshes.append(Refresh(iteration, new.mus.copy(), degenerate, before, after))
        if ckpt_dir is not None:
            save_checkpoint(ckpt_dir / f"ckpt_iter{iteration:07d}.vmf", net, new, {"iteration": iteration})
        return new

    it = 0
    while it < total:
        protos = refresh(it)
        for _ in range(min(interval, total - it)):
            idx = stream.next()
            emb, cache = forward(net, data.features[idx])
            y = data.labels[idx]
            report = vmf_loss(emb, y, protos)
            if not math.isfinite(report.total_loss):
                raise NonFiniteLoss(f"non-finite loss at iteration {it}")
            grads = backward(net, cache, vmf_loss_grad_embedding(emb, y, protos))
            opt.learning_rate = config.learning_rate(it)
            sgd_step(net, grads, opt)
            tlog.losses.append(report.total_loss)
            tlog.learning_rates.append(opt.learning_rate)
            tlog.timestamps.append(time.time())
            if on_iteration is not None:
                on_iteration(it, protos)
            it += 1
    protos = refresh(it)
    return net, protos, tlog
