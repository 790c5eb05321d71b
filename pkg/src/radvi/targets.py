"""Target posteriors pi ∝ exp(-V): potentials, derivatives, samplers.

The elliptical families (gaussian, student_t, laplace, logistic) share one
implementation driven by a radial profile v(r) of the Mahalanobis radius
r(x) = sqrt((x - m)^T Sigma^{-1} (x - m)).  With P = Sigma^{-1}, y = x - m:

    grad V = (v'(r)/r) P y
    hess V = (v'(r)/r) P + ((v''(r) - v'(r)/r) / r^2) (P y)(P y)^T

Each profile supplies v'(r)/r and (v'' - v'/r)/r^2 in forms that stay finite
at r = 0 wherever the potential is smooth there.  The potentials are the
exact negative log-densities, normalizers included, so they double as
normalized log-densities for importance weighting.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .basis import ConfigurationError
from .specfun import log_bessel_k, log_gamma, zeta_int

__all__ = [
    "FAMILIES",
    "TargetSpec",
    "TargetModel",
    "UnsupportedOperationError",
    "build_target",
    "sample_target",
    "make_anisotropic",
]

FAMILIES = ("gaussian", "student_t", "laplace", "logistic", "funnel")
LAPLACE_R_MIN = 1e-8


class UnsupportedOperationError(RuntimeError):
    """The requested operation is not available for this target."""


@dataclass(frozen=True)
class TargetSpec:
    family: str
    dimension: int
    dof: Optional[float] = None
    scale: Optional[float] = None
    mean: Optional[np.ndarray] = None
    shape: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown target family {self.family!r}")
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise ConfigurationError("dimension must be a positive integer")
        if self.family == "student_t":
            if self.dof is None:
                raise ConfigurationError("student_t needs the degrees of freedom 'dof'")
            if not self.dof > 0:
                raise ConfigurationError("dof must be positive")
        if self.family == "logistic" and self.scale is not None and not self.scale > 0:
            raise ConfigurationError("logistic scale must be positive")
        n = self.model_dimension
        if self.mean is not None and np.shape(self.mean) != (n,):
            raise ConfigurationError(f"mean must have shape ({n},)")
        if self.shape is not None:
            S = np.asarray(self.shape, dtype=float)
            if S.shape != (n, n):
                raise ConfigurationError(f"shape matrix must be {n}x{n}")
            if not np.allclose(S, S.T, rtol=0, atol=1e-12 * max(1.0, np.abs(S).max())):
                raise ConfigurationError("shape matrix must be symmetric")
            if np.linalg.eigvalsh(S).min() <= 0:
                raise ConfigurationError("shape matrix must be positive definite")
        if self.family == "funnel" and (self.mean is not None or self.shape is not None):
            raise ConfigurationError("the funnel takes no mean or shape")

    @property
    def model_dimension(self) -> int:
        """Ambient dimension; the funnel adds the scale coordinate z."""
        return self.dimension + 1 if self.family == "funnel" else self.dimension

    @property
    def is_isotropic(self) -> bool:
        if self.family == "funnel":
            return False
        centred = self.mean is None or not np.any(self.mean)
        unit = self.shape is None or np.array_equal(self.shape, np.eye(self.dimension))
        return centred and unit

    def resolved_scale(self) -> float:
        return 1.0 if self.scale is None else float(self.scale)


@dataclass(frozen=True)
class TargetModel:
    """Query interface to pi ∝ exp(-V).

    ``potential``/``gradient`` act on arrays whose last axis is the
    dimension; ``hessian`` returns ``(..., d, d)``.  ``ell_V``/``L_V`` are
    ``None`` when unknown.  For isotropic targets ``radial_potential`` is
    v with V(x) = v(|x|) and ``radial_log_density`` is the log density of
    |Y| up to a constant.
    """

    dimension: int
    potential: Callable
    gradient: Callable
    hessian: Optional[Callable] = None
    ell_V: Optional[float] = None
    L_V: Optional[float] = None
    sampler: Optional[Callable] = None
    radial_potential: Optional[Callable] = None
    radial_potential_deriv: Optional[Callable] = None
    radial_log_density: Optional[Callable] = None
    spec: Optional[TargetSpec] = None
    name: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def isotropic(self) -> bool:
        return self.radial_potential is not None


# ---------------------------------------------------------------------------
# radial profiles v(r) of the elliptical families


@dataclass(frozen=True)
class _Profile:
    value: Callable  # v(r), including the normalizer that does not depend on Sigma
    deriv: Callable  # v'(r)
    deriv_over_r: Callable  # v'(r)/r
    curvature: Callable  # (v''(r) - v'(r)/r) / r^2
    r_floor: float = 0.0


def _gaussian_profile(d):
    const = 0.5 * d * math.log(2 * math.pi)
    return _Profile(
        value=lambda r: 0.5 * r * r + const,
        deriv=lambda r: r,
        deriv_over_r=lambda r: np.ones_like(r),
        curvature=lambda r: np.zeros_like(r),
    )


def _student_profile(d, nu):
    const = (0.5 * d * math.log(nu * math.pi) + log_gamma(0.5 * nu) - log_gamma(0.5 * (nu + d)))
    k = nu + d
    return _Profile(
        value=lambda r: 0.5 * k * np.log1p(r * r / nu) + const,
        deriv=lambda r: k * r / (nu + r * r),
        deriv_over_r=lambda r: k / (nu + r * r),
        curvature=lambda r: -2.0 * k / (nu + r * r) ** 2,
    )


def _laplace_profile(d):
    nu = 1.0 - 0.5 * d
    const = -math.log(2.0) + 0.5 * d * math.log(2 * math.pi)

    def value(r):
        r = np.maximum(r, LAPLACE_R_MIN)
        return const - 0.5 * nu * np.log(0.5 * r * r) - log_bessel_k(nu, math.sqrt(2) * r)

    def ratio(r):
        # K_{nu-1}(z) / K_nu(z) with z = sqrt(2) r; K_{nu-1} = K_{d/2}
        z = math.sqrt(2) * np.maximum(r, LAPLACE_R_MIN)
        return np.exp(log_bessel_k(nu - 1.0, z) - log_bessel_k(nu, z))

    def deriv(r):
        # d/dr [-(nu/2) log(r^2/2) - log K_nu(sqrt2 r)] = sqrt2 K_{nu-1}/K_nu
        return math.sqrt(2) * ratio(r)

    def deriv_over_r(r):
        return deriv(r) / np.maximum(r, LAPLACE_R_MIN)

    def curvature(r):
        rr = np.maximum(r, LAPLACE_R_MIN)
        z = math.sqrt(2) * rr
        rho = ratio(rr)
        second = 2.0 * (-1.0 + (2.0 * nu - 1.0) / z * rho + rho * rho)
        return (second - deriv(rr) / rr) / (rr * rr)

    return _Profile(value, deriv, deriv_over_r, curvature, r_floor=LAPLACE_R_MIN)


def _dirichlet_eta(k: int) -> float:
    """eta(k) = (1 - 2^(1-k)) zeta(k) for integer k >= 0."""
    if k == 0:
        return 0.5
    if k == 1:
        return math.log(2.0)
    return (1.0 - 2.0 ** (1 - k)) * zeta_int(k)


def _logistic_profile(d, s):
    # Z = 2 pi^(d/2)/Gamma(d/2) s^d Gamma(d) (1 - 2^-(d-2)) zeta(d-1), |Sigma| handled outside
    log_z = (math.log(2.0) + 0.5 * d * math.log(math.pi) - log_gamma(0.5 * d)
             + d * math.log(s) + log_gamma(d) + math.log(_dirichlet_eta(d - 1)))

    def value(r):
        t = r / s
        return t + 2.0 * np.logaddexp(0.0, -t) + log_z

    def deriv(r):
        return np.tanh(0.5 * r / s) / s

    def deriv_over_r(r):
        u = 0.5 * r / s
        safe = np.where(u > 1e-4, u, 1.0)
        return np.where(u > 1e-4, np.tanh(safe) / safe, 1.0 - u * u / 3.0) / (2.0 * s * s)

    def curvature(r):
        u = 0.5 * r / s
        safe = np.where(u > 1e-3, u, 1.0)
        exact = (1.0 / np.cosh(safe) ** 2 - np.tanh(safe) / safe) / (safe * safe)
        series = -2.0 / 3.0 + 8.0 / 15.0 * u * u
        # (v'' - v'/r)/r^2 = (sech^2 u - tanh(u)/u) / (2 s^2 r^2), and r^2 = 4 s^2 u^2
        return np.where(u > 1e-3, exact, series) / (8.0 * s ** 4)

    return _Profile(value, deriv, deriv_over_r, curvature)


def _profile_for(spec: TargetSpec) -> _Profile:
    d = spec.dimension
    if spec.family == "gaussian":
        return _gaussian_profile(d)
    if spec.family == "student_t":
        return _student_profile(d, float(spec.dof))
    if spec.family == "laplace":
        return _laplace_profile(d)
    if spec.family == "logistic":
        return _logistic_profile(d, spec.resolved_scale())
    raise ConfigurationError(f"no radial profile for {spec.family!r}")


def _uniform_directions(rng, n, d):
    u = rng.standard_normal((n, d))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def _logistic_radii(rng, n, d, s):
    """Rejection sampling with a Gamma(d, s) proposal; acceptance 1/(1+e^{-r/s})^2 >= 1/4."""
    out = np.empty(n)
    filled = 0
    while filled < n:
        want = n - filled
        batch = max(16, int(4.5 * want))
        r = rng.gamma(d, s, size=batch)
        keep = rng.random(batch) < 1.0 / (1.0 + np.exp(-r / s)) ** 2
        acc = r[keep][:want]
        out[filled:filled + acc.size] = acc
        filled += acc.size
    return out


def _elliptical(spec: TargetSpec) -> TargetModel:
    d = spec.dimension
    prof = _profile_for(spec)
    mean = np.zeros(d) if spec.mean is None else np.asarray(spec.mean, dtype=float)
    shape = np.eye(d) if spec.shape is None else np.asarray(spec.shape, dtype=float)
    chol = np.linalg.cholesky(shape)
    prec = np.linalg.inv(shape)
    prec = 0.5 * (prec + prec.T)
    half_logdet = float(np.log(np.diag(chol)).sum())

    def mahalanobis(x):
        y = np.asarray(x, dtype=float) - mean
        py = y @ prec
        r = np.sqrt(np.maximum(np.einsum("...i,...i->...", y, py), 0.0))
        return r, py

    def potential(x):
        r, _ = mahalanobis(x)
        return prof.value(r) + half_logdet

    def gradient(x):
        r, py = mahalanobis(x)
        return prof.deriv_over_r(r)[..., None] * py

    def hessian(x):
        r, py = mahalanobis(x)
        a = prof.deriv_over_r(r)[..., None, None]
        b = prof.curvature(r)[..., None, None]
        return a * prec + b * (py[..., :, None] * py[..., None, :])

    def sampler(rng, n):
        if spec.family == "gaussian":
            z = rng.standard_normal((n, d))
        elif spec.family == "student_t":
            nu = float(spec.dof)
            z = rng.standard_normal((n, d)) / np.sqrt(rng.chisquare(nu, size=n) / nu)[:, None]
        elif spec.family == "laplace":
            z = np.sqrt(rng.exponential(1.0, size=n))[:, None] * rng.standard_normal((n, d))
        else:
            radii = _logistic_radii(rng, n, d, spec.resolved_scale())
            z = radii[:, None] * _uniform_directions(rng, n, d)
        return mean + z @ chol.T

    ell = big_l = None
    if spec.family == "gaussian":
        eig = np.linalg.eigvalsh(shape)
        ell, big_l = 1.0 / eig.max(), 1.0 / eig.min()

    iso = spec.is_isotropic
    return TargetModel(
        dimension=d,
        potential=potential,
        gradient=gradient,
        hessian=hessian,
        ell_V=ell,
        L_V=big_l,
        sampler=sampler,
        radial_potential=prof.value if iso else None,
        radial_potential_deriv=prof.deriv if iso else None,
        radial_log_density=(lambda r: (d - 1) * np.log(np.maximum(r, 1e-300)) - prof.value(r)) if iso else None,
        spec=spec,
        name=spec.family,
    )


def _funnel(spec: TargetSpec) -> TargetModel:
    d = spec.dimension  # number of x coordinates; z is coordinate 0
    const = 0.5 * math.log(8 * math.pi) + 0.5 * d * math.log(2 * math.pi)

    def potential(x):
        x = np.asarray(x, dtype=float)
        z, rest = x[..., 0], x[..., 1:]
        return z * z / 8.0 + 0.5 * np.exp(-z) * np.sum(rest * rest, axis=-1) + 0.5 * d * z + const

    def gradient(x):
        x = np.asarray(x, dtype=float)
        z, rest = x[..., 0], x[..., 1:]
        ez = np.exp(-z)
        g = np.empty_like(x)
        g[..., 0] = z / 4.0 - 0.5 * ez * np.sum(rest * rest, axis=-1) + 0.5 * d
        g[..., 1:] = ez[..., None] * rest
        return g

    def hessian(x):
        x = np.asarray(x, dtype=float)
        z, rest = x[..., 0], x[..., 1:]
        ez = np.exp(-z)
        H = np.zeros(x.shape + (d + 1,))
        H[..., 0, 0] = 0.25 + 0.5 * ez * np.sum(rest * rest, axis=-1)
        H[..., 0, 1:] = -ez[..., None] * rest
        H[..., 1:, 0] = -ez[..., None] * rest
        idx = np.arange(1, d + 1)
        H[..., idx, idx] = ez[..., None]
        return H

    def sampler(rng, n):
        z = 2.0 * rng.standard_normal(n)
        rest = np.exp(0.5 * z)[:, None] * rng.standard_normal((n, d))
        return np.column_stack([z, rest])

    return TargetModel(d + 1, potential, gradient, hessian, sampler=sampler, spec=spec, name="funnel")


def build_target(spec: TargetSpec) -> TargetModel:
    """Build the query interface for a validated :class:`TargetSpec`."""
    if spec.family == "funnel":
        return _funnel(spec)
    return _elliptical(spec)


def sample_target(model: TargetModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` exact samples, shape ``(n, d)``."""
    if model.sampler is None:
        raise UnsupportedOperationError(f"target {model.name or '<anonymous>'} has no exact sampler")
    return model.sampler(rng, int(n))


def make_anisotropic(base: TargetSpec, seed) -> TargetSpec:
    """Replace the identity shape by Sigma = A A^T + I with A_ij ~ N(0, 1)."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    d = base.dimension
    A = rng.standard_normal((d, d))
    return replace(base, shape=A @ A.T + np.eye(d))
