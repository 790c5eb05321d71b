"""Projection onto the nonnegative orthant in the metric |v|_Q^2 = v^T Q v."""
from __future__ import annotations

import numpy as np

__all__ = ["ProjectionError", "project_nonneg_Q", "kkt_residuals"]


class ProjectionError(ArithmeticError):
    """The active-set iteration failed to terminate."""


def project_nonneg_Q(Q, y) -> np.ndarray:
    """argmin_{lam >= 0} (lam - y)^T Q (lam - y) for symmetric positive definite Q.

    Lawson-Hanson active-set NNLS written in Gram form: with Q = L L^T this
    is min |L^T lam - L^T y| over lam >= 0, and every quantity the method
    needs (normal matrix and right-hand side) is Q or Q y, so no factor is
    formed.  Feasible ``y`` is returned unchanged.
    """
    Q = np.asarray(Q, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    if Q.shape != (n, n):
        raise ValueError(f"Q has shape {Q.shape}, expected {(n, n)}")
    if np.all(y >= 0):
        return y.copy()

    c = Q @ y
    tol = 1e-13 * n * max(np.abs(Q).max() * np.abs(y).max(), np.finfo(float).tiny)
    lam = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    w = c.copy()
    pivots = 0
    max_pivots = max(n * n, 4)
    while True:
        free = ~passive & (w > tol)
        if not free.any():
            break
        pivots += 1
        if pivots > max_pivots:
            raise ProjectionError(
                f"active set did not settle after {max_pivots} pivots; "
                f"passive={np.flatnonzero(passive).tolist()}, lam={lam.tolist()}"
            )
        t = int(np.argmax(np.where(free, w, -np.inf)))
        passive[t] = True
        while True:
            idx = np.flatnonzero(passive)
            s = np.zeros(n)
            s[idx] = np.linalg.solve(Q[np.ix_(idx, idx)], c[idx])
            if np.all(s[idx] > 0):
                lam = s
                break
            # step back toward lam until the first passive coordinate hits zero
            bad = idx[s[idx] <= 0]
            ratios = lam[bad] / (lam[bad] - s[bad])
            step = float(np.min(ratios))
            lam = lam + step * (s - lam)
            passive &= lam > tol
            lam[~passive] = 0.0
            if not passive.any():
                break
        w = c - Q @ lam
    return lam


def kkt_residuals(Q, y, lam) -> dict:
    """Violations of the projection's optimality conditions (all should be ~0)."""
    Q = np.asarray(Q, dtype=float)
    g = Q @ (np.asarray(lam) - np.asarray(y))
    return {
        "primal": float(max(0.0, -np.min(lam))),
        "dual": float(max(0.0, -np.min(g))),
        "complementarity": float(abs(np.dot(lam, g))),
    }
