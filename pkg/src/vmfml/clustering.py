"""Spherical k-means and mixtures of vMF distributions fitted by EM.

Both methods start from the same seeded farthest-point initialisation:
a random first centre, then repeatedly the point with the largest cosine
distance to its nearest chosen centre.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .directional import ZERO_NORM_EPS, kappa_from_rbar, log_normalizer
from .errors import DomainError, InvalidK

log = logging.getLogger(__name__)

KAPPA_CEILING = 1e5


@dataclass
class ClusteringResult:
    assignments: np.ndarray
    centroids: np.ndarray
    objective_trace: list[float]
    responsibilities: np.ndarray | None = None
    kappas: np.ndarray | None = None
    weights: np.ndarray | None = None
    n_iter: int = 0
    converged: bool = False
    events: list[str] = field(default_factory=list)


def _check_points(points, k: int) -> np.ndarray:
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] < 2:
        raise DomainError(f"points must be an (N, p>=2) array, got shape {x.shape}")
    if int(k) != k or k < 1:
        raise InvalidK(f"k must be a positive integer, got {k!r}")
    if k > x.shape[0]:
        raise InvalidK(f"k={k} exceeds the number of points {x.shape[0]}")
    return x


def farthest_point_init(points: np.ndarray, k: int, seed) -> np.ndarray:
    """Indices of ``k`` distinct seed points, chosen greedily on cosine distance."""
    rng = np.random.default_rng(seed)
    n = points.shape[0]
    first = int(rng.integers(n))
    chosen = [first]
    dist = 1.0 - points @ points[first]
    dist[first] = -np.inf
    for _ in range(1, k):
        nxt = int(np.argmax(dist))
        chosen.append(nxt)
        dist = np.minimum(dist, 1.0 - points @ points[nxt])
        dist[chosen] = -np.inf
    return np.array(chosen)


def _normalized_resultants(sums: np.ndarray, fallback: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(sums, axis=1)
    bad = norms < ZERO_NORM_EPS
    out = sums / np.where(bad, 1.0, norms)[:, None]
    out[bad] = fallback[bad]
    return out, norms


def spherical_kmeans(points, k: int, seed=0, max_iter: int = 100, tol: float = 0.0) -> ClusteringResult:
    """Alternate max-cosine assignment and normalised-resultant centroids.

    The objective (sum of cosines to the assigned centroid) is recorded after
    every assignment step and never decreases. Stops when assignments repeat,
    when the objective gains no more than ``tol``, or after ``max_iter``.
    """
    x = _check_points(points, k)
    if k < 2:
        raise InvalidK("spherical k-means needs k >= 2")
    centroids = x[farthest_point_init(x, k, seed)].copy()
    assign = None
    trace: list[float] = []
    events: list[str] = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        sims = x @ centroids.T
        new_assign = np.argmax(sims, axis=1)
        trace.append(float(sims[np.arange(x.shape[0]), new_assign].sum()))
        if assign is not None and np.array_equal(assign, new_assign):
            converged = True
            break
        if len(trace) > 1 and trace[-1] - trace[-2] <= tol and tol > 0:
            assign = new_assign
            converged = True
            break
        assign = new_assign
        sums = np.zeros_like(centroids)
        np.add.at(sums, assign, x)
        empty = np.bincount(assign, minlength=k) == 0
        if empty.any():
            events.append(f"iteration {it}: empty clusters {np.flatnonzero(empty).tolist()} kept their centroid")
        centroids, _ = _normalized_resultants(sums, centroids)
    return ClusteringResult(
        assignments=assign, centroids=centroids, objective_trace=trace,
        n_iter=it, converged=converged, events=events,
    )


def component_log_densities(points, mus, kappas, weights) -> np.ndarray:
    """``log pi_h + log f_p(x_n; mu_h, kappa_h)`` as an (N, k) matrix."""
    x = np.asarray(points, dtype=np.float64)
    p = x.shape[1]
    log_z = np.array([log_normalizer(p, kh) for kh in kappas])
    with np.errstate(divide="ignore"):
        log_w = np.log(np.asarray(weights, dtype=np.float64))
    return log_w + log_z + (x @ np.asarray(mus).T) * np.asarray(kappas)


def _logsumexp_rows(a: np.ndarray) -> np.ndarray:
    top = a.max(axis=1, keepdims=True)
    return (top + np.log(np.exp(a - top).sum(axis=1, keepdims=True)))[:, 0]


def mixture_responsibilities(points, mus, kappas, weights) -> np.ndarray:
    """Soft E-step: posterior component probabilities for every point."""
    logp = component_log_densities(points, mus, kappas, weights)
    return np.exp(logp - _logsumexp_rows(logp)[:, None])


def _m_step(x, resp, old_mus, old_kappas=None):
    """Weighted resultants for the means, the mean-resultant approximation for kappa.

    The approximation is not the exact maximiser, so a candidate kappa is
    kept only if it does not lower ``ln Z_p(kappa) + kappa * Rbar``, the
    component's expected complete-data log-likelihood per unit mass. This
    keeps the soft log-likelihood non-decreasing.
    """
    mass = resp.sum(axis=0)
    sums = resp.T @ x
    mus, norms = _normalized_resultants(sums, old_mus)
    p = x.shape[1]
    kappas = np.empty(resp.shape[1])
    for h in range(resp.shape[1]):
        rbar = norms[h] / mass[h] if mass[h] > 0 else 0.0
        kappas[h] = min(kappa_from_rbar(rbar, p), KAPPA_CEILING)
        if old_kappas is not None and kappas[h] != old_kappas[h]:
            gain = (log_normalizer(p, kappas[h]) + kappas[h] * rbar) - (
                log_normalizer(p, old_kappas[h]) + old_kappas[h] * rbar
            )
            if gain < 0:
                kappas[h] = old_kappas[h]
    return mus, kappas, mass / x.shape[0]


def movmf_em(points, k: int, mode: str = "soft", seed=0, max_iter: int = 100, tol: float = 1e-10) -> ClusteringResult:
    """Fit a k-component mixture of vMF distributions by EM.

    ``mode="soft"`` uses posterior responsibilities and records the data
    log-likelihood; ``mode="hard"`` assigns each point to its most probable
    component and records the classification log-likelihood. Concentrations
    come from the mean-resultant approximation, capped at 1e5; in soft mode
    a new concentration that would lower the likelihood is not taken.

    In hard mode a component left without points is re-seeded with the
    worst-fitting point; this is reported in ``events``.
    """
    if mode not in ("soft", "hard"):
        raise ValueError(f"mode must be 'soft' or 'hard', got {mode!r}")
    x = _check_points(points, k)
    n = x.shape[0]
    rows = np.arange(n)
    init = x[farthest_point_init(x, k, seed)].copy()
    resp = np.zeros((n, k))
    resp[rows, np.argmax(x @ init.T, axis=1)] = 1.0
    mus = init
    kappas = None
    trace: list[float] = []
    events: list[str] = []
    assign = None
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if mode == "hard":
            resp = _fill_empty(x, resp, mus, events, it)
        mus, kappas, weights = _m_step(x, resp, mus, kappas if mode == "soft" else None)
        logp = component_log_densities(x, mus, kappas, weights)
        lse = _logsumexp_rows(logp)
        if mode == "soft":
            resp = np.exp(logp - lse[:, None])
            trace.append(float(lse.sum()))
            if len(trace) > 1 and abs(trace[-1] - trace[-2]) <= tol * max(1.0, abs(trace[-1])):
                converged = True
                break
        else:
            new_assign = np.argmax(logp, axis=1)
            trace.append(float(logp[rows, new_assign].sum()))
            if len(trace) > 1 and trace[-1] < trace[-2]:
                log.info("hard movMF: classification log-likelihood decreased at iteration %d", it)
            resp = np.zeros((n, k))
            resp[rows, new_assign] = 1.0
            if assign is not None and np.array_equal(assign, new_assign):
                converged = True
                break
            assign = new_assign
    assign = np.argmax(resp, axis=1)
    return ClusteringResult(
        assignments=assign, centroids=mus, objective_trace=trace,
        responsibilities=resp if mode == "soft" else None,
        kappas=kappas, weights=weights, n_iter=it, converged=converged, events=events,
    )


def _fill_empty(x, resp, mus, events, it):
    counts = resp.sum(axis=0)
    empty = np.flatnonzero(counts == 0)
    if empty.size == 0:
        return resp
    resp = resp.copy()
    assign = np.argmax(resp, axis=1)
    fit = np.max(x @ mus.T, axis=1)
    for h in empty:
        counts = resp.sum(axis=0)
        movable = counts[assign] > 1
        candidates = np.flatnonzero(movable)
        worst = candidates[np.argmin(fit[candidates])]
        resp[worst] = 0.0
        resp[worst, h] = 1.0
        assign[worst] = h
        fit[worst] = np.inf
        msg = f"iteration {it}: component {h} empty, re-seeded at point {worst}"
        events.append(msg)
        log.info(msg)
    return resp
