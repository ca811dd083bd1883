"""The vMF loss, class posteriors and their gradients.

With one shared concentration ``kappa`` the normalisers Z_p cancel and the
posterior of class c for an embedding r is a softmax over ``kappa * mu_i . r``.
The loss is the batch mean of ``-log P(y_n | r_n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .directional import UNIT_TOL, log_normalizer
from .errors import DimensionMismatch, DomainError, LabelOutOfRange, ZeroNorm


@dataclass
class PrototypeSet:
    """Class mean directions (rows of ``mus``) with a shared concentration."""

    mus: np.ndarray
    kappa: float

    def __post_init__(self):
        mus = np.asarray(self.mus, dtype=np.float64)
        if mus.ndim != 2 or mus.shape[0] < 2 or mus.shape[1] < 2:
            raise DomainError(f"prototypes must be a (C>=2, p>=2) array, got shape {mus.shape}")
        norms = np.linalg.norm(mus, axis=1)
        if np.any(np.abs(norms - 1.0) > UNIT_TOL):
            raise DomainError("every prototype must have unit norm")
        kappa = float(self.kappa)
        if not math.isfinite(kappa) or kappa < 0:
            raise DomainError(f"kappa must be finite and >= 0, got {kappa}")
        self.mus = mus
        self.kappa = kappa

    @property
    def n_classes(self) -> int:
        return self.mus.shape[0]

    @property
    def dim(self) -> int:
        return self.mus.shape[1]

    def copy(self) -> "PrototypeSet":
        return PrototypeSet(self.mus.copy(), self.kappa)


@dataclass
class LossReport:
    total_loss: float
    per_sample: np.ndarray = field(repr=False)


def _logsumexp(a: np.ndarray) -> np.ndarray:
    top = a.max(axis=-1, keepdims=True)
    return (top + np.log(np.exp(a - top).sum(axis=-1, keepdims=True)))[..., 0]


def _check_batch(embeddings, protos: PrototypeSet) -> np.ndarray:
    r = np.asarray(embeddings, dtype=np.float64)
    if r.ndim == 1:
        r = r[None, :]
    if r.ndim != 2 or r.shape[1] != protos.dim:
        raise DimensionMismatch(
            f"embeddings of shape {r.shape} do not match prototype dimension {protos.dim}"
        )
    return r


def _check_labels(labels, n: int, n_classes: int) -> np.ndarray:
    y = np.asarray(labels)
    if y.ndim == 0:
        y = y[None]
    if y.shape != (n,):
        raise DimensionMismatch(f"{y.shape[0]} labels for {n} embeddings")
    if n == 0:
        raise DimensionMismatch("empty batch")
    if not np.issubdtype(y.dtype, np.integer):
        raise LabelOutOfRange("labels must be integers")
    if y.min() < 0 or y.max() >= n_classes:
        raise LabelOutOfRange(f"labels must lie in [0, {n_classes})")
    return y.astype(np.intp)


def class_logits(embeddings, protos: PrototypeSet, per_class_kappa=None) -> np.ndarray:
    """Unnormalised log posteriors, shape (N, C).

    Without ``per_class_kappa`` these are ``kappa * mu_i . r``. With it, the
    log normalisers ``ln Z_p(kappa_i)`` are included since they no longer
    cancel.
    """
    r = _check_batch(embeddings, protos)
    cos = r @ protos.mus.T
    if per_class_kappa is None:
        return protos.kappa * cos
    kappas = np.asarray(per_class_kappa, dtype=np.float64)
    if kappas.shape != (protos.n_classes,):
        raise DimensionMismatch(f"need {protos.n_classes} per-class kappas, got {kappas.shape}")
    if np.any(kappas < 0) or not np.all(np.isfinite(kappas)):
        raise DomainError("per-class kappas must be finite and >= 0")
    log_z = np.array([log_normalizer(protos.dim, k) for k in kappas])
    return log_z + kappas * cos


def class_posterior(r, protos: PrototypeSet, per_class_kappa=None) -> np.ndarray:
    """P(c | r) for every class. Returns shape (C,) for one point, (N, C) for a batch."""
    single = np.ndim(r) == 1
    logits = class_logits(r, protos, per_class_kappa)
    logits = logits - logits.max(axis=1, keepdims=True)
    post = np.exp(logits)
    post /= post.sum(axis=1, keepdims=True)
    return post[0] if single else post


def vmf_loss(embeddings, labels, protos: PrototypeSet) -> LossReport:
    r = _check_batch(embeddings, protos)
    y = _check_labels(labels, r.shape[0], protos.n_classes)
    logits = protos.kappa * (r @ protos.mus.T)
    per_sample = _logsumexp(logits) - logits[np.arange(r.shape[0]), y]
    # sequential summation keeps the mean bitwise reproducible
    total = math.fsum(per_sample) / per_sample.size
    return LossReport(total_loss=total, per_sample=per_sample)


def vmf_loss_grad_embedding(embeddings, labels, protos: PrototypeSet) -> np.ndarray:
    """d(mean loss)/d r_n = kappa * (sum_i P(i|r_n) mu_i - mu_{y_n}) / N.

    ``r`` is treated as a free vector; compose with :func:`normalize_backward`
    to respect the unit-norm constraint.
    """
    r = _check_batch(embeddings, protos)
    y = _check_labels(labels, r.shape[0], protos.n_classes)
    post = class_posterior(r, protos)
    expected = post @ protos.mus
    return protos.kappa * (expected - protos.mus[y]) / r.shape[0]


def normalize_backward(z, upstream) -> np.ndarray:
    """Backpropagate through ``r = z / ||z||``.

    Returns ``(g - (r . g) r) / ||z||``, row-wise for 2-D inputs.
    """
    z = np.asarray(z, dtype=np.float64)
    g = np.asarray(upstream, dtype=np.float64)
    if z.shape != g.shape:
        raise DimensionMismatch(f"z {z.shape} and upstream {g.shape} differ")
    norm = np.linalg.norm(z, axis=-1, keepdims=True)
    if np.any(norm < 1e-12):
        raise ZeroNorm("cannot backpropagate through a zero-norm vector")
    r = z / norm
    radial = np.sum(r * g, axis=-1, keepdims=True)
    return (g - radial * r) / norm
