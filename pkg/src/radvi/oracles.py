"""Ground-truth radial transport maps from N(0, I_d) to isotropic targets.

All oracles solve the one-dimensional mass balance

    P(|X| <= r) = P(|Y| <= Psi*(r)),   X ~ N(0, I_d), Y ~ pi,

in closed form where the radial law of Y is a scaled chi or an F law, and
by tabulating the target radial CDF otherwise.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .specfun import chi_squared_cdf, chi_squared_sf, f_quantile, log_bessel_k
from .targets import TargetModel, UnsupportedOperationError

__all__ = [
    "RadialOracle",
    "CoverageError",
    "gaussian_radial_oracle",
    "student_t_radial_oracle",
    "cdf_match_radial_oracle",
    "laplace_radial_oracle",
    "logistic_radial_oracle",
    "oracle_for_target",
    "SphericalAverage",
    "spherical_average_potential",
]


class CoverageError(ValueError):
    """The tabulation grid misses too much of the target radial mass."""


@dataclass
class RadialOracle:
    """Monotone radial map r -> Psi*(r); call it on radii."""

    kind: str
    map: Callable
    dimension: int
    grid: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)
    target_cdf: Optional[Callable] = None
    _pointwise: Optional[Callable] = None

    def __call__(self, r):
        return self.map(np.asarray(r, dtype=float))

    def solve_pointwise(self, r):
        """Brent root-finding on the target CDF, for spot-checking the table."""
        if self._pointwise is None:
            return self(r)
        return np.array([self._pointwise(float(x)) for x in np.atleast_1d(r)])

    def to_csv(self, path, radii=None):
        radii = self.grid if radii is None else np.asarray(radii, dtype=float)
        if radii is None:
            radii = np.linspace(0.0, math.sqrt(self.dimension) + 6.0, 513)
        values = self(radii)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "psi_star"])
            for a, b in zip(radii, values):
                w.writerow([repr(float(a)), repr(float(b))])


def gaussian_radial_oracle(sigma: float = 1.0, d: int = 1) -> RadialOracle:
    """Psi*(r) = sigma r, the map onto N(0, sigma^2 I)."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return RadialOracle("closed_form", lambda r: sigma * r, d, meta={"family": "gaussian", "sigma": sigma})


def _chi_tails(d, r):
    x = np.asarray(r, dtype=float) ** 2
    return chi_squared_cdf(d, x), chi_squared_sf(d, x)


def student_t_radial_oracle(d: int, nu: float) -> RadialOracle:
    """Psi*(r) = sqrt(d F^{-1}_{d,nu}(F_{chi2_d}(r^2)))."""
    if d < 1 or not nu > 0:
        raise ValueError("need d >= 1 and nu > 0")

    def psi(r):
        r = np.asarray(r, dtype=float)
        p, q = _chi_tails(d, np.atleast_1d(r))
        out = np.sqrt(d * f_quantile(d, nu, p, upper=q))
        return out.reshape(r.shape) if r.ndim else float(out[0])

    return RadialOracle("closed_form", psi, d, meta={"family": "student_t", "dof": nu})


def _cell_integrals(log_phi, edges, shift, order=16):
    x, w = np.polynomial.legendre.leggauss(order)
    lo, hi = edges[:-1], edges[1:]
    half = 0.5 * (hi - lo)
    nodes = lo[:, None] + half[:, None] * (x[None, :] + 1.0)
    return (np.exp(log_phi(nodes) - shift) * w[None, :]).sum(axis=1) * half


def _auto_range(log_phi, d):
    """Double r_max until the mass beyond it is negligible."""
    probe = np.linspace(1e-6, 4.0 * math.sqrt(d) + 10.0, 2001)
    shift = float(np.max(log_phi(probe)))
    r_max = float(probe[-1])
    for _ in range(40):
        body = _cell_integrals(log_phi, np.linspace(0.0, r_max, 257), shift).sum()
        tail = _cell_integrals(log_phi, np.linspace(r_max, 2 * r_max, 257), shift).sum()
        if tail <= 1e-14 * body:
            return r_max
        r_max *= 1.5
    raise CoverageError("could not find a range holding the target radial mass")


def cdf_match_radial_oracle(log_phi: Callable, d: int, r_max: Optional[float] = None,
                            n_points: int = 4096, name: str = "table") -> RadialOracle:
    """Oracle from an unnormalized radial density exp(log_phi(r)).

    The target radial CDF is tabulated on ``n_points`` equispaced radii by
    Gauss-Legendre integration of each cell, and its inverse is represented
    by monotone cubic (PCHIP) interpolation: in log CDF below the median and
    in log survival above it, so both tails keep relative precision.
    """
    if r_max is None:
        r_max = _auto_range(log_phi, d)
    grid = np.linspace(0.0, float(r_max), int(n_points))
    probe = np.linspace(grid[1] * 1e-3, grid[-1], 4 * len(grid))
    shift = float(np.max(log_phi(probe)))
    cells = _cell_integrals(log_phi, grid, shift)
    tail = _cell_integrals(log_phi, np.linspace(grid[-1], 3 * grid[-1], 513), shift).sum()
    total = cells.sum()
    captured = total / (total + tail)
    if captured < 1.0 - 1e-10:
        raise CoverageError(f"grid up to r_max={r_max} captures only {captured:.12f} of the radial mass")
    cdf = np.concatenate([[0.0], np.cumsum(cells)]) / total
    sf = np.concatenate([np.cumsum(cells[::-1])[::-1], [0.0]]) / total

    with np.errstate(divide="ignore"):
        log_cdf, log_sf = np.log(cdf), np.log(sf)
    lo_mask = (cdf > 0) & (cdf <= 0.75)
    hi_mask = (sf > 0) & (sf <= 0.75)
    lo_mask &= np.concatenate([[True], np.diff(log_cdf) > 0])
    hi_mask &= np.concatenate([np.diff(log_sf) < 0, [True]])
    # log r against log CDF is close to linear near the origin, where CDF ~ c r^k
    lower = PchipInterpolator(log_cdf[lo_mask], np.log(grid[lo_mask]))
    upper = PchipInterpolator(-log_sf[hi_mask], grid[hi_mask])
    # power-law continuation below the first tabulated point
    r1, r2 = grid[lo_mask][:2]
    c1, c2 = log_cdf[lo_mask][:2]
    k_low = (c2 - c1) / math.log(r2 / r1)
    lo_min, hi_max = log_cdf[lo_mask][0], -log_sf[hi_mask][-1]

    def inverse(log_p, log_q, use_lower):
        out = np.empty_like(log_p)
        a = use_lower
        lp = log_p[a]
        below = lp < lo_min
        vals = np.empty_like(lp)
        vals[~below] = np.exp(lower(lp[~below]))
        vals[below] = r1 * np.exp((lp[below] - c1) / k_low)
        out[a] = vals
        b = ~use_lower
        lq = -log_q[b]
        out[b] = np.where(lq > hi_max, grid[-1], upper(np.minimum(lq, hi_max)))
        return out

    def psi(r):
        r = np.asarray(r, dtype=float)
        flat = np.atleast_1d(r).ravel()
        p, q = _chi_tails(d, flat)
        with np.errstate(divide="ignore"):
            out = inverse(np.log(p), np.log(q), p <= 0.5)
        out = np.where(flat > 0, out, 0.0)
        return out.reshape(r.shape) if r.ndim else float(out[0])

    def target_cdf(s):
        s = np.clip(np.asarray(s, dtype=float), 0.0, grid[-1])
        flat = np.atleast_1d(s).ravel()
        k = np.clip(np.searchsorted(grid, flat, side="right") - 1, 0, len(grid) - 2)
        x, w = np.polynomial.legendre.leggauss(16)
        half = 0.5 * (flat - grid[k])
        nodes = grid[k][:, None] + half[:, None] * (x[None, :] + 1.0)
        part = (np.exp(log_phi(np.maximum(nodes, 1e-300)) - shift) * w).sum(axis=1) * half
        out = cdf[k] + part / total
        return out.reshape(s.shape) if s.ndim else float(out[0])

    def pointwise(r):
        if r <= 0:
            return 0.0
        p = float(chi_squared_cdf(d, r * r))
        return brentq(lambda s: target_cdf(s) - p, 0.0, grid[-1], xtol=1e-14, rtol=1e-14)

    return RadialOracle("table", psi, d, grid=grid,
                        meta={"family": name, "r_max": float(grid[-1]), "n_points": len(grid),
                              "captured_mass": float(captured)},
                        target_cdf=target_cdf, _pointwise=pointwise)


def laplace_radial_oracle(d: int, **grid) -> RadialOracle:
    """Radial density phi(s) = s^(d/2) K_{1-d/2}(sqrt(2) s)."""
    nu = 1.0 - 0.5 * d

    def log_phi(s):
        s = np.maximum(np.asarray(s, dtype=float), 1e-300)
        return 0.5 * d * np.log(s) + log_bessel_k(nu, math.sqrt(2) * s)

    return cdf_match_radial_oracle(log_phi, d, name="laplace", **grid)


def logistic_radial_oracle(d: int, scale: float = 1.0, **grid) -> RadialOracle:
    """Radial density phi(s) = s^(d-1) e^(-s/c) / (1 + e^(-s/c))^2, c the scale."""

    def log_phi(s):
        s = np.maximum(np.asarray(s, dtype=float), 1e-300)
        t = s / scale
        return (d - 1) * np.log(s) - t - 2.0 * np.logaddexp(0.0, -t)

    return cdf_match_radial_oracle(log_phi, d, name="logistic", **grid)


def oracle_for_target(model: TargetModel) -> RadialOracle:
    """The exact radial map for an isotropic target model."""
    spec = model.spec
    if spec is None or not model.isotropic:
        raise UnsupportedOperationError("oracle maps exist only for isotropic targets")
    d = spec.dimension
    if spec.family == "gaussian":
        return gaussian_radial_oracle(1.0, d)
    if spec.family == "student_t":
        return student_t_radial_oracle(d, float(spec.dof))
    if spec.family == "laplace":
        return laplace_radial_oracle(d)
    if spec.family == "logistic":
        return logistic_radial_oracle(d, spec.resolved_scale())
    raise UnsupportedOperationError(f"no oracle for family {spec.family!r}")


class SphericalAverage:
    """r -> mean of V(r theta_k) over a fixed set of uniform directions."""

    def __init__(self, target: TargetModel, directions: np.ndarray):
        self.target = target
        self.directions = directions

    def samples(self, r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        return self.target.potential(r[:, None, None] * self.directions[None, :, :])

    def __call__(self, r):
        out = self.samples(r).mean(axis=1)
        return out if np.ndim(r) else float(out[0])

    def stderr(self, r):
        v = self.samples(r)
        return v.std(axis=1, ddof=1) / math.sqrt(v.shape[1])


def spherical_average_potential(target: TargetModel, n_sphere: int, rng: np.random.Generator) -> SphericalAverage:
    """Monte Carlo spherical average of V; directions are drawn once so the
    estimate is a smooth function of r."""
    if n_sphere < 100:
        raise ValueError("use at least 100 sphere points")
    u = rng.standard_normal((int(n_sphere), target.dimension))
    return SphericalAverage(target, u / np.linalg.norm(u, axis=1, keepdims=True))
