"""Gram matrix of the ramp dictionary under the chi radial law.

Q_ij = E[Psi_i(|X|) Psi_j(|X|)] for X ~ N(0, I_d).  On every interval between
consecutive ramp endpoints the product Psi_i Psi_j is a polynomial of degree
at most two in r, so each entry is a short sum of truncated chi moments
M_n(a, b) = int_a^b r^n d chi_d(r), n = 0, 1, 2, which reduce to upper
incomplete gamma functions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .basis import Dictionary, eval_basis
from .specfun import log_gamma, regularized_gamma_p, regularized_gamma_q

__all__ = [
    "chi_log_pdf",
    "truncated_moment",
    "ramp_product_moment",
    "GramMatrix",
    "IllConditionedDictionaryError",
    "gram_matrix",
    "gram_mc_validate",
    "sample_chi",
]

DROP_THRESHOLD = 1e-12
PIVOT_FLOOR = 1e-10


class IllConditionedDictionaryError(np.linalg.LinAlgError):
    """The Gram matrix of the retained ramps is not numerically positive definite."""


def chi_log_pdf(d: int, r):
    """Log density of |X| for X ~ N(0, I_d)."""
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore"):
        log_r = np.log(r)
    out = (d - 1) * log_r - 0.5 * r * r - (0.5 * d - 1.0) * math.log(2.0) - log_gamma(0.5 * d)
    return np.where(r > 0, out, -np.inf if d > 1 else out)


def truncated_moment(d: int, n: int, a, b):
    """M_n(a, b) = int_a^b r^n d chi_d(r); ``b`` may be ``np.inf``.

    Equal to 2^(n/2) / Gamma(d/2) * [Gamma((n+d)/2, a^2/2) - Gamma((n+d)/2, b^2/2)].
    The bracket is formed from lower or upper regularized functions depending
    on which side of the bulk the interval lies, to avoid cancellation.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scalar = a.ndim == 0 and b.ndim == 0
    a, b = np.broadcast_arrays(np.atleast_1d(a), np.atleast_1d(b))
    if np.any(a < 0) or np.any(b < a):
        raise ValueError("truncated_moment needs 0 <= a <= b")
    s = 0.5 * (n + d)
    xa = 0.5 * a * a
    xb = np.where(np.isinf(b), np.inf, 0.5 * b * b)
    finite_b = np.where(np.isinf(xb), 0.0, xb)
    lower_side = xb <= s
    diff = np.where(
        lower_side,
        regularized_gamma_p(s, finite_b) - regularized_gamma_p(s, xa),
        regularized_gamma_q(s, xa) - np.where(np.isinf(xb), 0.0, regularized_gamma_q(s, finite_b)),
    )
    log_scale = 0.5 * n * math.log(2.0) + log_gamma(s) - log_gamma(0.5 * d)
    out = np.maximum(diff, 0.0) * math.exp(log_scale)
    return float(out[0]) if scalar else out


def _ramp_poly(a, w, lo, hi):
    """Coefficients (c0, c1) of a ramp on [lo, hi], an interval free of its kinks."""
    if hi <= a:
        return 0.0, 0.0
    if lo >= a + w:
        return 1.0, 0.0
    return -a / w, 1.0 / w


def ramp_product_moment(d: int, a_i, w_i, a_j, w_j) -> float:
    """E[Psi_i Psi_j] under chi_d for two ramps of arbitrary offset and width.

    Splits [0, inf) at the four ramp endpoints; on each piece the product is
    c0 + c1 r + c2 r^2, integrated with M_0, M_1, M_2.  This covers the
    disjoint-ramp and overlapping-ramp cases, and unequal widths.
    """
    cuts = sorted({0.0, a_i, a_i + w_i, a_j, a_j + w_j})
    cuts.append(math.inf)
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi <= lo:
            continue
        p0, p1 = _ramp_poly(a_i, w_i, lo, hi)
        q0, q1 = _ramp_poly(a_j, w_j, lo, hi)
        c0, c1, c2 = p0 * q0, p0 * q1 + p1 * q0, p1 * q1
        if c0 == c1 == c2 == 0.0:
            continue
        m = truncated_moment(d, 0, lo, hi), truncated_moment(d, 1, lo, hi), truncated_moment(d, 2, lo, hi)
        total += c0 * m[0] + c1 * m[1] + c2 * m[2]
    return total


@dataclass(frozen=True)
class GramMatrix:
    """Q together with a Cholesky factor of its retained block.

    ``active`` lists the ramps kept for optimization; ramps whose diagonal
    entry is below ``DROP_THRESHOLD`` carry no chi mass and are excluded
    from the factorization (their weights are held fixed by the optimizer).
    """

    Q: np.ndarray
    chol: np.ndarray
    active: np.ndarray
    dropped: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def Q_active(self) -> np.ndarray:
        return self.Q[np.ix_(self.active, self.active)]

    def solve(self, v):
        """Q_active^{-1} v through the stored factor."""
        y = np.linalg.solve(self.chol, np.asarray(v, dtype=float))
        return np.linalg.solve(self.chol.T, y)

    def norm_sq(self, v):
        v = np.asarray(v, dtype=float)
        return float(v @ self.Q @ v)


def _factor(Q):
    msg = "Gram matrix is not positive definite; try a larger mesh delta"
    try:
        L = np.linalg.cholesky(Q)
    except np.linalg.LinAlgError as exc:
        raise IllConditionedDictionaryError(msg) from exc
    # roundoff can let a singular Q factor; reject vanishing relative pivots
    if np.any(np.diag(L) ** 2 < PIVOT_FLOOR * np.diag(Q)):
        raise IllConditionedDictionaryError(msg)
    return L


def gram_matrix(dictionary: Dictionary) -> GramMatrix:
    d = dictionary.dimension
    a, w = dictionary.offsets, dictionary.widths
    n = dictionary.size
    Q = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            Q[i, j] = Q[j, i] = ramp_product_moment(d, a[i], w[i], a[j], w[j])
    diag = np.diag(Q)
    active = np.flatnonzero(diag >= DROP_THRESHOLD)
    dropped = np.flatnonzero(diag < DROP_THRESHOLD)
    if active.size == 0:
        raise IllConditionedDictionaryError("every ramp has negligible chi mass")
    chol = _factor(Q[np.ix_(active, active)])
    return GramMatrix(Q, chol, active, dropped)


def sample_chi(d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Norms of n standard normal vectors in R^d (sqrt of chi-squared draws)."""
    return np.sqrt(rng.chisquare(d, size=n))


def gram_mc_validate(dictionary: Dictionary, n_samples: int, rng: np.random.Generator,
                     gram: GramMatrix | None = None, chunk: int = 250_000) -> float:
    """Max entrywise deviation between the closed-form Q and a Monte Carlo estimate."""
    if n_samples < 10_000:
        raise ValueError("use at least 1e4 samples")
    gram = gram_matrix(dictionary) if gram is None else gram
    acc = np.zeros_like(gram.Q)
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        psi = eval_basis(dictionary, sample_chi(dictionary.dimension, m, rng))
        acc += psi.T @ psi
        done += m
    return float(np.max(np.abs(acc / n_samples - gram.Q)))
