"""Composite Gauss-Legendre rule against the chi radial law, aligned with the ramps.

Panels never straddle a ramp endpoint, so every integrand built from
g_lam, Psi and a smooth radial profile is analytic on each panel and the
rule converges geometrically.  The rule is built once per dictionary and
reused by the deterministic log-det gradient and the radial objective.
"""
from __future__ import annotations

import math

import numpy as np

from .basis import Dictionary, eval_basis
from .gram import chi_log_pdf, truncated_moment

__all__ = ["ChiQuadrature"]


class ChiQuadrature:
    """Nodes ``r``, chi-weighted weights ``w`` and the partition index of every node.

    Partition ``l`` in 0..J is the rising part of ramp ``l``; partition J + 1
    is the plateau beyond the last ramp, truncated where the chi density is
    below e^-90 relative to its mode.
    """

    def __init__(self, dictionary: Dictionary, order: int = 24, max_panel: float = 0.25,
                 tail: float = 14.0):
        self.dictionary = dictionary
        d = dictionary.dimension
        bp = dictionary.breakpoints
        top = max(bp[-1], math.sqrt(d)) + tail
        edges = list(zip(bp[:-1], bp[1:], range(len(bp) - 1)))
        edges.append((bp[-1], top, len(bp) - 1))
        x, wgl = np.polynomial.legendre.leggauss(order)
        nodes, weights, part = [], [], []
        for lo, hi, ell in edges:
            pieces = max(1, int(math.ceil((hi - lo) / max_panel)))
            cuts = np.linspace(lo, hi, pieces + 1)
            for p_lo, p_hi in zip(cuts[:-1], cuts[1:]):
                half = 0.5 * (p_hi - p_lo)
                nodes.append(p_lo + half * (x + 1.0))
                weights.append(half * wgl)
                part.append(np.full(order, ell))
        self.r = np.concatenate(nodes)
        self.w = np.concatenate(weights) * np.exp(chi_log_pdf(d, self.r))
        self.partition = np.concatenate(part)
        self.n_partitions = len(bp)  # J + 2
        self.psi = eval_basis(dictionary, self.r)
        # value of the node's own ramp (0 on the plateau partition)
        own = np.zeros_like(self.r)
        ramp = self.partition < dictionary.size
        own[ramp] = self.psi[np.flatnonzero(ramp), self.partition[ramp]]
        self.own_ramp = own
        # P(|X| in [a_j, a_j + w_j]), exact
        a, wd = dictionary.offsets, dictionary.widths
        self.interval_mass = truncated_moment(d, 0, a, a + wd)

    def integrate(self, values) -> float:
        return float(self.w @ np.asarray(values, dtype=float))

    def radial_value(self, lam):
        """g_lam at the nodes, using the partition structure
        g = alpha r + sum_{k < l} lam_k + lam_l Psi_l(r) on partition l."""
        lam = np.asarray(lam, dtype=float)
        lam_ext = np.append(lam, 0.0)
        before = np.concatenate([[0.0], np.cumsum(lam_ext)[:-1]])
        ell = self.partition
        return self.dictionary.alpha * self.r + before[ell] + lam_ext[ell] * self.own_ramp

    def radial_slope(self, lam):
        lam_ext = np.append(np.asarray(lam, dtype=float), 0.0)
        inv_w = np.append(1.0 / self.dictionary.widths, 0.0)
        return self.dictionary.alpha + lam_ext[self.partition] * inv_w[self.partition]
