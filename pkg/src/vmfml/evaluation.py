"""Nearest-prototype classification, Recall@K, NMI and embedding-space diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .directional import RBAR_CEILING, kappa_from_rbar
from .errors import DimensionMismatch, InsufficientData, LengthMismatch
from .network import Network, embed
from .objective import PrototypeSet


def predict(r, protos: PrototypeSet):
    """Index of the prototype with the largest cosine; ties go to the smaller index.

    Accepts one unit vector (returns an int) or an (N, p) batch.
    """
    r = np.asarray(r, dtype=np.float64)
    if r.shape[-1] != protos.dim:
        raise DimensionMismatch(f"embedding dimension {r.shape[-1]} != prototype dimension {protos.dim}")
    scores = r @ protos.mus.T
    # np.argmax returns the first maximum
    out = np.argmax(scores, axis=-1)
    return int(out) if out.ndim == 0 else out


def accuracy(net: Network, protos: PrototypeSet, data) -> float:
    if len(data) == 0:
        raise InsufficientData("accuracy of an empty dataset")
    pred = predict(embed(net, data.features), protos)
    return float(np.mean(pred == data.labels))


@dataclass
class RetrievalResult:
    neighbors: np.ndarray  # (N, max K) ranked neighbour indices, self excluded
    recall: dict[int, float]
    n_queries: int
    n_excluded: int  # queries with no same-class candidate
    hits: dict[int, np.ndarray] = field(default_factory=dict, repr=False)


def ranked_neighbors(embeddings, k: int, metric: str = "cosine", chunk: int = 1024) -> np.ndarray:
    """Top-``k`` neighbours of every row, excluding itself.

    ``cosine`` ranks by descending dot product, ``euclidean`` by ascending
    squared distance; ties go to the smaller index. On unit vectors both
    orderings coincide because ``||a - b||^2 = 2 - 2 a.b``.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    n = x.shape[0]
    out = np.empty((n, k), dtype=np.int64)
    if metric == "euclidean":
        chunk = max(1, min(chunk, 4_000_000 // max(1, n * x.shape[1])))
    for start in range(0, n, chunk):
        rows = np.arange(start, min(start + chunk, n))
        if metric == "cosine":
            keys = -(x[rows] @ x.T)
        elif metric == "euclidean":
            diff = x[rows, None, :] - x[None, :, :]
            keys = np.einsum("ijk,ijk->ij", diff, diff)
        else:
            raise ValueError(f"unknown metric {metric!r}")
        keys[np.arange(rows.size), rows] = np.inf
        order = np.argsort(keys, axis=1, kind="stable")
        out[rows] = order[:, :k]
    return out


def recall_at_k(embeddings, labels, ks=(1, 2, 4, 8), metric: str = "cosine") -> RetrievalResult:
    """Fraction of queries with at least one same-class item in their top K.

    Queries whose class has no other member cannot succeed; they are left out
    of the denominator and counted in ``n_excluded``. If no query is left,
    every recall is reported as 0.0.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise LengthMismatch(f"{y.shape} labels for embeddings of shape {x.shape}")
    ks = sorted({int(k) for k in ks})
    if not ks or ks[0] < 1:
        raise ValueError("ks must be positive integers")
    kmax = ks[-1]
    n = x.shape[0]
    if n < kmax + 1:
        raise InsufficientData(f"need at least {kmax + 1} items for Recall@{kmax}, got {n}")
    nbrs = ranked_neighbors(x, kmax, metric)
    _, inverse, counts = np.unique(y, return_inverse=True, return_counts=True)
    valid = counts[inverse] >= 2
    same = y[nbrs] == y[:, None]
    first_hit = np.where(same.any(axis=1), same.argmax(axis=1), kmax)
    recall, hits = {}, {}
    n_valid = int(valid.sum())
    for k in ks:
        h = (first_hit < k) & valid
        hits[k] = h
        recall[k] = float(h.sum() / n_valid) if n_valid else 0.0
    return RetrievalResult(nbrs, recall, n_valid, n - n_valid, hits)


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-np.sum(p * np.log(p)))


def nmi(labels_a, labels_b) -> float:
    """Normalised mutual information, ``I(A;B) / sqrt(H(A) H(B))``, natural logs.

    Two single-cluster partitions score 1.0.
    """
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatch(f"label arrays have shapes {a.shape} and {b.shape}")
    if a.size == 0:
        raise LengthMismatch("empty labelings")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(table, (ai, bi), 1.0)
    h_a = _entropy(table.sum(axis=1))
    h_b = _entropy(table.sum(axis=0))
    if h_a == 0.0 and h_b == 0.0:
        return 1.0
    if h_a == 0.0 or h_b == 0.0:
        return 0.0
    n = a.size
    pij = table / n
    outer = np.outer(table.sum(axis=1), table.sum(axis=0)) / (n * n)
    nz = pij > 0
    mi = float(np.sum(pij[nz] * np.log(pij[nz] / outer[nz])))
    return float(min(max(mi / math.sqrt(h_a * h_b), 0.0), 1.0))


@dataclass
class SpaceDiagnostics:
    average_kappa_hat: float
    average_cosine: float
    per_class_kappa_hat: dict[int, float]
    skipped_classes: list[int]
    clamped_classes: list[int]

    def as_dict(self) -> dict:
        return {
            "average_kappa_hat": self.average_kappa_hat,
            "average_cosine": self.average_cosine,
            "classes_evaluated": len(self.per_class_kappa_hat),
            "classes_skipped": len(self.skipped_classes),
            "classes_clamped": len(self.clamped_classes),
        }


def diagnostics_from_embeddings(embeddings, labels, protos: PrototypeSet) -> SpaceDiagnostics:
    """Average per-class concentration estimate and average pairwise prototype cosine.

    Classes with fewer than two samples are skipped. Classes whose mean
    resultant length reaches the clamp (all samples identical) are reported
    in ``clamped_classes``.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels)
    p = x.shape[1]
    per_class, skipped, clamped = {}, [], []
    for c in range(protos.n_classes):
        members = x[y == c]
        if members.shape[0] < 2:
            skipped.append(c)
            continue
        rbar = float(np.linalg.norm(members.sum(axis=0)) / members.shape[0])
        if rbar >= RBAR_CEILING:
            clamped.append(c)
        per_class[c] = kappa_from_rbar(rbar, p)
    avg_kappa = float(np.mean(list(per_class.values()))) if per_class else math.nan
    gram = protos.mus @ protos.mus.T
    iu = np.triu_indices(protos.n_classes, k=1)
    avg_cos = float(np.clip(np.mean(gram[iu]), -1.0, 1.0))
    return SpaceDiagnostics(avg_kappa, avg_cos, per_class, skipped, clamped)


def diagnostics(net: Network, protos: PrototypeSet, data) -> SpaceDiagnostics:
    return diagnostics_from_embeddings(embed(net, data.features), data.labels, protos)
