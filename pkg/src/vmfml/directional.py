"""Directional statistics on the unit hypersphere.

Density, normalising constant, estimators and a sampler for the
von Mises-Fisher (vMF) distribution

    f_p(r; mu, kappa) = Z_p(kappa) * exp(kappa * mu . r)

    Z_p(kappa) = kappa^(p/2 - 1) / ((2 pi)^(p/2) * I_(p/2 - 1)(kappa))

All quantities are float64. Points are plain numpy arrays: a single unit
vector has shape ``(p,)`` and a sample cloud has shape ``(N, p)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.special import gammaln

from .errors import DegenerateResultant, DimensionMismatch, DomainError, ZeroNorm

ZERO_NORM_EPS = 1e-12
RBAR_CEILING = 1.0 - 1e-9
UNIT_TOL = 1e-9

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class VmfParams:
    """Mean direction and concentration of one vMF distribution."""

    mu: np.ndarray
    kappa: float

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64)
        if mu.ndim != 1 or mu.shape[0] < 2:
            raise DomainError(f"mu must be a vector of length >= 2, got shape {mu.shape}")
        if abs(np.linalg.norm(mu) - 1.0) > UNIT_TOL:
            raise DomainError(f"mu must be a unit vector, norm={np.linalg.norm(mu)!r}")
        kappa = float(self.kappa)
        if not math.isfinite(kappa) or kappa < 0:
            raise DomainError(f"kappa must be finite and >= 0, got {kappa!r}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "kappa", kappa)

    @property
    def dim(self) -> int:
        return self.mu.shape[0]


def normalize(v) -> np.ndarray:
    """Project ``v`` onto the unit sphere.

    Works row-wise on a 2-D array. Raises :class:`ZeroNorm` when any row has
    norm below 1e-12; no default direction is substituted. Rows already unit
    to within 1e-14 are returned untouched, which makes the map idempotent.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] < 2:
        raise DomainError(f"need dimension p >= 2, got {v.shape[-1]}")
    with np.errstate(over="ignore"):
        norms = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(np.isinf(norms)) and np.all(np.isfinite(v)):
        # squares overflowed; rescale by the largest entry first
        v = v / np.max(np.abs(v), axis=-1, keepdims=True)
        norms = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norms < ZERO_NORM_EPS):
        raise ZeroNorm("cannot normalize a vector with norm < 1e-12")
    norms = np.where(np.abs(norms - 1.0) <= 1e-14, 1.0, norms)
    return v / norms


# ---------------------------------------------------------------------------
# modified Bessel function of the first kind, log domain


def _debye_polynomials(n_terms: int) -> list[np.ndarray]:
    """Coefficients of the Debye polynomials divided by t^k.

    U_0 = 1 and U_{k+1}(t) = t^2 (1 - t^2) U_k'(t) / 2 + 1/8 int_0^t (1 - 5 s^2) U_k(s) ds.
    U_k is t^k times a polynomial Q_k in t; the returned arrays hold the
    ascending coefficients of Q_k. Built with exact rationals.
    """
    polys = [[Fraction(1)]]
    for _ in range(1, n_terms):
        u = polys[-1]
        deg = len(u) - 1
        out = [Fraction(0)] * (deg + 4)
        # t^2 (1 - t^2) u'(t) / 2
        for j in range(1, deg + 1):
            c = u[j] * j / 2
            out[j + 1] += c
            out[j + 3] -= c
        # 1/8 int_0^t (1 - 5 s^2) u(s) ds
        for j in range(deg + 1):
            out[j + 1] += u[j] / (8 * (j + 1))
            out[j + 3] -= 5 * u[j] / (8 * (j + 3))
        while len(out) > 1 and out[-1] == 0:
            out.pop()
        polys.append(out)
    shifted = []
    for k, u in enumerate(polys):
        assert all(c == 0 for c in u[:k])
        shifted.append(np.array([float(c) for c in u[k:]]))
    return shifted


_DEBYE_Q = _debye_polynomials(13)


def _log_bessel_i_series(order: float, x: float) -> float:
    # sum_m (x/2)^(2m + v) / (m! Gamma(m + v + 1)), accumulated in log space
    log_half_x = math.log(x / 2.0)
    peak = 0.5 * (-order + math.sqrt(order * order + x * x))
    n = int(peak + 12.0 * math.sqrt(peak + 1.0) + 40)
    while True:
        m = np.arange(n, dtype=np.float64)
        log_terms = (2.0 * m + order) * log_half_x - gammaln(m + 1.0) - gammaln(m + order + 1.0)
        top = log_terms.max()
        if log_terms[-1] < top - 40.0 and np.argmax(log_terms) < n - 1:
            break
        n *= 2
    return float(top + math.log(np.sum(np.exp(log_terms - top))))


def _log_bessel_i_debye(order: float, x: float) -> float:
    # uniform asymptotic expansion, written so that order = 0 is regular
    s = math.hypot(order, x)
    t = order / s
    eta_term = s + (order * math.log(x / (order + s)) if order > 0 else 0.0)
    inv_s = 1.0 / s
    total = 0.0
    scale = 1.0
    for q in _DEBYE_Q:
        total += scale * np.polynomial.polynomial.polyval(t, q)
        scale *= inv_s
    return eta_term - 0.5 * _LOG_2PI - 0.5 * math.log(s) + math.log(total)


def log_bessel_i(order: float, x: float) -> float:
    """Natural log of the modified Bessel function I_order(x).

    Power series below ``max(20, 2 * order)``, uniform (Debye) asymptotic
    expansion above. Returns ``-inf`` for ``x == 0`` and ``order > 0``.
    """
    order = float(order)
    x = float(x)
    if not (order >= 0.0) or not (x >= 0.0):
        raise DomainError(f"log_bessel_i needs order >= 0 and x >= 0, got ({order}, {x})")
    if math.isinf(x):
        return math.inf
    if x == 0.0:
        return 0.0 if order == 0.0 else -math.inf
    if x < max(20.0, 2.0 * order):
        return _log_bessel_i_series(order, x)
    return _log_bessel_i_debye(order, x)


# ---------------------------------------------------------------------------
# sphere geometry and the vMF density


def sphere_surface_area(p: int) -> float:
    """Surface area S_p of the unit sphere in R^p, ``2 pi^(p/2) / Gamma(p/2)``.

    Uses exact integer (double) factorials for moderate p, so S_2 = 2 pi and
    S_3 = 4 pi come out exactly.
    """
    p = _check_dim(p)
    if p > 300:
        return math.exp(log_sphere_surface_area(p))
    if p % 2 == 0:
        k = p // 2
        return 2.0 * math.pi**k / math.factorial(k - 1)
    dfact = math.prod(range(p - 2, 0, -2))  # (p-2)!!
    return 2.0 ** ((p + 1) // 2) * math.pi ** ((p - 1) // 2) / dfact


def log_sphere_surface_area(p: int) -> float:
    p = _check_dim(p)
    return math.log(2.0) + 0.5 * p * math.log(math.pi) - math.lgamma(0.5 * p)


def log_normalizer(p: int, kappa: float) -> float:
    """ln Z_p(kappa). At kappa = 0 this is the uniform density ln(1 / S_p)."""
    p = _check_dim(p)
    kappa = float(kappa)
    if not (kappa >= 0.0) or math.isinf(kappa):
        raise DomainError(f"kappa must be finite and >= 0, got {kappa}")
    if kappa == 0.0:
        return -log_sphere_surface_area(p)
    order = 0.5 * p - 1.0
    return order * math.log(kappa) - 0.5 * p * _LOG_2PI - log_bessel_i(order, kappa)


def log_vmf_density(r, params: VmfParams):
    """ln f_p(r; mu, kappa) for a unit vector (or rows of unit vectors)."""
    r = np.asarray(r, dtype=np.float64)
    if r.shape[-1] != params.dim:
        raise DimensionMismatch(f"point has dimension {r.shape[-1]}, mu has {params.dim}")
    cos = r @ params.mu
    return log_normalizer(params.dim, params.kappa) + params.kappa * cos


# ---------------------------------------------------------------------------
# estimators


def _as_cloud(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[0] == 0:
        raise DomainError("sample cloud must be a non-empty (N, p) array")
    if x.shape[1] < 2:
        raise DomainError(f"need dimension p >= 2, got {x.shape[1]}")
    return x


def estimate_mean_direction(samples) -> np.ndarray:
    """Normalised resultant of the sample cloud."""
    x = _as_cloud(samples)
    resultant = x.sum(axis=0)
    norm = np.linalg.norm(resultant)
    if norm < ZERO_NORM_EPS:
        raise DegenerateResultant("resultant vector vanishes; mean direction undefined")
    return resultant / norm


def kappa_from_rbar(rbar: float, p: int) -> float:
    """Banerjee et al. approximation ``R(p - R^2) / (1 - R^2)`` with R clamped below 1."""
    rbar = min(max(float(rbar), 0.0), RBAR_CEILING)
    r2 = rbar * rbar
    return rbar * (p - r2) / (1.0 - r2)


def mean_resultant_length(samples) -> float:
    x = _as_cloud(samples)
    return float(np.linalg.norm(x.sum(axis=0)) / x.shape[0])


def estimate_kappa(samples) -> float:
    x = _as_cloud(samples)
    return kappa_from_rbar(mean_resultant_length(x), x.shape[1])


# ---------------------------------------------------------------------------
# sampling


def _householder_to(mu: np.ndarray) -> np.ndarray | None:
    """Reflection taking e_1 to mu, or None when mu is already e_1."""
    e1 = np.zeros_like(mu)
    e1[0] = 1.0
    u = e1 - mu
    n = np.linalg.norm(u)
    if n < 1e-15:
        return None
    return u / n


def _sample_cosines(kappa: float, p: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Wood (1994) rejection sampler for w = mu . r."""
    dim = p - 1.0
    if kappa == 0.0:
        return 1.0 - 2.0 * rng.beta(0.5 * dim, 0.5 * dim, size=n)
    b = dim / (2.0 * kappa + math.sqrt(4.0 * kappa * kappa + dim * dim))
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + dim * math.log(1.0 - x0 * x0)
    out = np.empty(n)
    filled = 0
    while filled < n:
        m = max(2 * (n - filled), 16)
        z = rng.beta(0.5 * dim, 0.5 * dim, size=m)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        u = rng.random(size=m)
        accept = kappa * w + dim * np.log(1.0 - x0 * w) - c >= np.log(u)
        w = w[accept][: n - filled]
        out[filled : filled + w.size] = w
        filled += w.size
    return out


def sample_vmf(params: VmfParams, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` points from vMF(mu, kappa); deterministic for a given seed.

    Samples the cosine to the mean direction by rejection, attaches a uniform
    tangent direction, and reflects the frame built around e_1 onto mu.
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    p = params.dim
    rng = np.random.default_rng(seed)
    w = _sample_cosines(params.kappa, p, n, rng)
    v = rng.standard_normal(size=(n, p - 1))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    x = np.empty((n, p))
    x[:, 0] = w
    x[:, 1:] = np.sqrt(np.clip(1.0 - w * w, 0.0, None))[:, None] * v
    u = _householder_to(params.mu)
    if u is not None:
        x -= 2.0 * np.outer(x @ u, u)
    return x


def _check_dim(p) -> int:
    if int(p) != p or p < 2:
        raise DomainError(f"dimension p must be an integer >= 2, got {p!r}")
    return int(p)
