"""Piecewise-linear radial dictionary and the parametrized radial maps.

A map in the family is

    T_lam(x) = g_lam(|x|) x / |x|,     g_lam(r) = alpha r + sum_j lam_j Psi_j(r),

with ramps Psi_j(r) = clip((r - a_j) / w_j, 0, 1).  Ramp 0 rises on
[0, sqrt(d) - R]; ramps 1..J have width delta and tile [sqrt(d) - R, a_J + delta]
end to end.  Every ramp is nondecreasing, so any lam >= 0 gives a strictly
increasing g_lam with slope >= alpha.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Dictionary",
    "ConfigurationError",
    "default_cutoff",
    "default_mesh",
    "build_dictionary",
    "eval_basis",
    "eval_basis_deriv",
    "radial_value",
    "radial_deriv",
    "apply_map",
    "log_det_jacobian",
    "invert_radial",
]


class ConfigurationError(ValueError):
    """Invalid dictionary or run parameters."""


def default_cutoff(d: int) -> float:
    """R = sqrt(log d)."""
    return math.sqrt(math.log(d))


def default_mesh(d: int) -> float:
    """delta = d^(-1/6)."""
    return d ** (-1.0 / 6.0)


@dataclass(frozen=True)
class Dictionary:
    dimension: int
    cutoff: float
    mesh: float
    alpha: float
    offsets: np.ndarray  # a_0 = 0, a_1, ..., a_J
    widths: np.ndarray  # delta_0 = sqrt(d) - R, then delta

    @property
    def size(self) -> int:
        """Number of weights, J + 1."""
        return len(self.offsets)

    @property
    def n_interior(self) -> int:
        """J, the number of ramps after the base ramp."""
        return len(self.offsets) - 1

    @property
    def knots(self) -> np.ndarray:
        return self.offsets[1:]

    @property
    def breakpoints(self) -> np.ndarray:
        """Ramp endpoints 0 = a_0 < a_1 < ... < a_J < a_J + delta."""
        return np.append(self.offsets, self.offsets[-1] + self.widths[-1])

    @property
    def upper(self) -> float:
        return float(self.offsets[-1] + self.widths[-1])

    def describe(self) -> dict:
        return {
            "dimension": self.dimension,
            "R": self.cutoff,
            "delta": self.mesh,
            "alpha": self.alpha,
            "J": self.n_interior,
            "knots": self.knots.tolist(),
        }


def build_dictionary(d: int, R: float | None = None, delta: float | None = None,
                     alpha: float = 0.01) -> Dictionary:
    """Build the ramp dictionary for dimension ``d``.

    ``R`` and ``delta`` default to sqrt(log d) and d^(-1/6).  The number of
    interior ramps is J = ceil(2R/delta) + 1 with knots
    a_j = sqrt(d) - R + (j - 1) delta, so the last ramp ends at or beyond
    sqrt(d) + R even when delta does not divide 2R.
    """
    if d < 1:
        raise ConfigurationError("dimension must be >= 1")
    R = default_cutoff(d) if R is None else float(R)
    delta = default_mesh(d) if delta is None else float(delta)
    root = math.sqrt(d)
    if not R > 0:
        raise ConfigurationError(f"cutoff R must be positive, got {R}")
    if R >= root:
        # R = sqrt(d) would give the base ramp zero width
        raise ConfigurationError(f"cutoff R={R} must be below sqrt(d)={root:.6g}")
    if not 0 < delta <= 2 * R:
        raise ConfigurationError(f"mesh delta={delta} must lie in (0, 2R]")
    if not alpha > 0:
        raise ConfigurationError("alpha must be positive")
    ratio = 2 * R / delta
    # guard against ceil(4.000000000001) = 5 from rounding
    J = int(math.ceil(ratio - 1e-9)) + 1
    knots = root - R + delta * np.arange(J)
    offsets = np.concatenate([[0.0], knots])
    widths = np.concatenate([[root - R], np.full(J, delta)])
    return Dictionary(d, R, delta, float(alpha), offsets, widths)


def eval_basis(dictionary: Dictionary, r) -> np.ndarray:
    """Psi(r) with shape ``r.shape + (J + 1,)``."""
    r = np.asarray(r, dtype=float)[..., None]
    return np.clip((r - dictionary.offsets) / dictionary.widths, 0.0, 1.0)


def eval_basis_deriv(dictionary: Dictionary, r) -> np.ndarray:
    """Psi'(r), using the right derivative at knots (1/w_j on [a_j, a_j + w_j))."""
    r = np.asarray(r, dtype=float)[..., None]
    a = dictionary.offsets
    inside = (r >= a) & (r < a + dictionary.widths)
    return np.where(inside, 1.0 / dictionary.widths, 0.0)


def radial_value(dictionary: Dictionary, lam, r):
    """g_lam(r) = alpha r + <lam, Psi(r)>."""
    r = np.asarray(r, dtype=float)
    return dictionary.alpha * r + eval_basis(dictionary, r) @ np.asarray(lam, dtype=float)


def radial_deriv(dictionary: Dictionary, lam, r):
    """g'_lam(r), right-continuous at the knots."""
    r = np.asarray(r, dtype=float)
    return dictionary.alpha + eval_basis_deriv(dictionary, r) @ np.asarray(lam, dtype=float)


def apply_map(dictionary: Dictionary, lam, x) -> np.ndarray:
    """T_lam(x) for a point or a batch of points (last axis is the dimension).

    The origin is sent to the origin, which is the continuous extension
    since g_lam(0) = 0.
    """
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    g = radial_value(dictionary, lam, r)
    scale = np.divide(g, r, out=np.zeros_like(r), where=r > 0)
    return x * scale[..., None]


def log_det_jacobian(dictionary: Dictionary, lam, r):
    """log det DT_lam at any point of radius ``r > 0``.

    DT has eigenvalue g'(r) along x/r and g(r)/r on the orthogonal complement,
    so the log-determinant is (d - 1) log(g(r)/r) + log g'(r).  Both
    arguments are >= alpha on the feasible set lam >= 0.
    """
    r = np.asarray(r, dtype=float)
    lam = np.asarray(lam, dtype=float)
    tangential = dictionary.alpha + (eval_basis(dictionary, r) @ lam) / r
    radial = radial_deriv(dictionary, lam, r)
    return (dictionary.dimension - 1) * np.log(tangential) + np.log(radial)


def invert_radial(dictionary: Dictionary, lam, s):
    """Solve g_lam(r) = s exactly, segment by segment.

    g_lam is linear between consecutive breakpoints, so after locating the
    segment containing ``s`` the inverse is a single division.
    """
    s = np.asarray(s, dtype=float)
    lam = np.asarray(lam, dtype=float)
    bp = dictionary.breakpoints
    g_bp = radial_value(dictionary, lam, bp)
    slopes = radial_deriv(dictionary, lam, bp)  # right slopes; last one is alpha
    seg = np.clip(np.searchsorted(g_bp, s, side="right") - 1, 0, len(bp) - 1)
    return bp[seg] + (s - g_bp[seg]) / slopes[seg]
