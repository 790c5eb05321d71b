"""Gaussian preconditioners and the whitened composite map.

A Gaussian approximation N(m, A A^T) of the target gives the affine map
x -> A x + m.  Pulling the target back through it leaves a residual that is
close to standard normal, on which the radial map is learned; the final
sampler is y = A T_lam(x) + m with x ~ N(0, I).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.linalg import solve_triangular

from .basis import Dictionary, apply_map, invert_radial, log_det_jacobian
from .targets import TargetModel

__all__ = [
    "WhiteningTransform",
    "CompositeMap",
    "NonInvertibleHessianError",
    "GVIConfig",
    "GVIResult",
    "laplace_approx",
    "gaussian_vi",
    "gvi_objective",
    "whiten_target",
    "composite_push",
    "composite_log_density",
]

log = logging.getLogger(__name__)


class NonInvertibleHessianError(np.linalg.LinAlgError):
    """The Hessian at the mode is not positive definite."""


@dataclass(frozen=True)
class WhiteningTransform:
    """x -> A x + m with A lower triangular, so Sigma = A A^T."""

    mean: np.ndarray
    factor: np.ndarray
    log_abs_det: float

    @classmethod
    def from_factor(cls, mean, factor) -> "WhiteningTransform":
        factor = np.asarray(factor, dtype=float)
        sign, logdet = np.linalg.slogdet(factor)
        if sign == 0 or not np.isfinite(logdet):
            raise np.linalg.LinAlgError("whitening factor is singular")
        return cls(np.asarray(mean, dtype=float), factor, float(logdet))

    @classmethod
    def identity(cls, d: int) -> "WhiteningTransform":
        return cls(np.zeros(d), np.eye(d), 0.0)

    @property
    def dimension(self) -> int:
        return len(self.mean)

    @property
    def covariance(self) -> np.ndarray:
        return self.factor @ self.factor.T

    def forward(self, x):
        return np.asarray(x, dtype=float) @ self.factor.T + self.mean

    def inverse(self, y):
        y = np.asarray(y, dtype=float) - self.mean
        lower = np.allclose(self.factor, np.tril(self.factor))
        if lower:
            return solve_triangular(self.factor, y.T, lower=True).T
        return np.linalg.solve(self.factor, y.T).T

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "factor": self.factor.tolist(), "log_abs_det": self.log_abs_det}

    @classmethod
    def from_dict(cls, data: dict) -> "WhiteningTransform":
        return cls.from_factor(data["mean"], data["factor"])


@dataclass(frozen=True)
class CompositeMap:
    whitening: WhiteningTransform
    dictionary: Dictionary
    weights: np.ndarray

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return composite_push(self, rng.standard_normal((int(n), self.dictionary.dimension)))

    def log_density(self, y):
        return composite_log_density(self, y)


# ---------------------------------------------------------------------------
# Laplace approximation


def laplace_approx(target: TargetModel, x0=None, tol: float = 1e-8, max_iter: int = 500) -> WhiteningTransform:
    """Mode by damped Newton with Armijo backtracking; covariance = inverse Hessian.

    Where the Hessian is indefinite the Newton system is shifted by a
    multiple of the identity until it factors, so every direction is a
    descent direction.  The Hessian at the returned mode must be positive
    definite.
    """
    if target.hessian is None:
        raise ValueError("Laplace approximation needs the Hessian")
    if not tol > 0:
        raise ValueError("tol must be positive")
    d = target.dimension
    x = np.zeros(d) if x0 is None else np.array(x0, dtype=float)
    for _ in range(max_iter):
        g = target.gradient(x)
        if np.linalg.norm(g) <= tol:
            break
        H = target.hessian(x)
        shift = 0.0
        while True:
            try:
                L = np.linalg.cholesky(H + shift * np.eye(d))
                break
            except np.linalg.LinAlgError:
                shift = max(2 * shift, 1e-8 * max(1.0, np.abs(H).max()))
        p = -solve_triangular(L.T, solve_triangular(L, g, lower=True), lower=False)
        v0, slope = target.potential(x), float(g @ p)
        t = 1.0
        while t > 1e-12:
            x_new = x + t * p
            v_new = target.potential(x_new)
            if np.isfinite(v_new) and v_new <= v0 + 1e-4 * t * slope:
                break
            t *= 0.5
        x = x_new
    else:
        if np.linalg.norm(target.gradient(x)) > tol:
            raise RuntimeError(f"Newton did not reach |grad V| <= {tol} in {max_iter} iterations")
    H = target.hessian(x)
    try:
        Lh = np.linalg.cholesky(0.5 * (H + H.T))
    except np.linalg.LinAlgError as exc:
        raise NonInvertibleHessianError("Hessian at the mode is not positive definite") from exc
    # Sigma = H^{-1} = Lh^{-T} Lh^{-1}; its lower Cholesky factor comes from inverting Lh
    Sigma = solve_triangular(Lh.T, solve_triangular(Lh, np.eye(d), lower=True), lower=False)
    A = np.linalg.cholesky(0.5 * (Sigma + Sigma.T))
    return WhiteningTransform(x, A, float(np.log(np.diag(A)).sum()))


# ---------------------------------------------------------------------------
# Gaussian VI


@dataclass(frozen=True)
class GVIConfig:
    step: float = 7e-3
    iterations: int = 10_000
    batch: int = 100
    seed: int = 0
    averaging: bool = True  # average the second half of the iterates

    def __post_init__(self):
        if not self.step > 0 or self.iterations < 1 or self.batch < 1:
            raise ValueError("GVI needs step > 0, iterations >= 1, batch >= 1")


@dataclass
class GVIResult:
    transform: WhiteningTransform
    final_iterate: WhiteningTransform
    step_halvings: int
    objective_start: float
    objective_end: float


def gvi_objective(target: TargetModel, mean, factor, z) -> float:
    """E[V(m + A Z)] - sum log A_ii on the fixed batch ``z`` (KL up to a constant)."""
    y = z @ np.asarray(factor).T + mean
    return float(np.mean(target.potential(y)) - np.log(np.diag(factor)).sum())


def gaussian_vi(target: TargetModel, config: GVIConfig = GVIConfig(), mean0=None, factor0=None,
                validation_size: int = 4000) -> GVIResult:
    """Reparametrized SGD over (m, A) with A lower triangular and positive diagonal.

    Steps that push a diagonal entry of A below 1e-10 are rejected and the
    step size is halved.  With ``config.averaging`` the returned transform is
    the mean of the iterates over the second half of the run, which removes
    most of the stationary SGD noise; the last iterate is kept alongside.
    """
    d = target.dimension
    rng, valid_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(2))
    m = np.zeros(d) if mean0 is None else np.array(mean0, dtype=float)
    A = np.eye(d) if factor0 is None else np.tril(np.array(factor0, dtype=float))
    z_valid = valid_rng.standard_normal((validation_size, d))
    obj0 = gvi_objective(target, m, A, z_valid)
    step = config.step
    halvings = 0
    burn = config.iterations // 2
    m_sum, A_sum, count = np.zeros(d), np.zeros((d, d)), 0
    for k in range(config.iterations):
        z = rng.standard_normal((config.batch, d))
        gv = target.gradient(z @ A.T + m)
        grad_m = gv.mean(axis=0)
        grad_A = np.tril(gv.T @ z / config.batch) - np.diag(1.0 / np.diag(A))
        while True:
            A_new = A - step * grad_A
            if np.all(np.diag(A_new) > 1e-10) and np.all(np.isfinite(A_new)):
                break
            step *= 0.5
            halvings += 1
            log.info("GVI step rejected at iteration %d; step size now %g", k, step)
        m = m - step * grad_m
        A = A_new
        if k >= burn:
            m_sum += m
            A_sum += A
            count += 1
    last = WhiteningTransform.from_factor(m, A)
    out = WhiteningTransform.from_factor(m_sum / count, A_sum / count) if config.averaging else last
    obj1 = gvi_objective(target, out.mean, out.factor, z_valid)
    return GVIResult(out, last, halvings, obj0, obj1)


# ---------------------------------------------------------------------------
# whitening and the composite map


def whiten_target(target: TargetModel, w: WhiteningTransform) -> TargetModel:
    """Pull V back through x -> A x + m (gradient and Hessian by the chain rule)."""
    A, m = w.factor, w.mean

    def potential(x):
        return target.potential(np.asarray(x, dtype=float) @ A.T + m)

    def gradient(x):
        return target.gradient(np.asarray(x, dtype=float) @ A.T + m) @ A

    hessian = None
    if target.hessian is not None:
        def hessian(x):
            H = target.hessian(np.asarray(x, dtype=float) @ A.T + m)
            return A.T @ H @ A

    sampler = None
    if target.sampler is not None:
        def sampler(rng, n):
            return w.inverse(target.sampler(rng, n))

    return replace(
        target,
        potential=potential,
        gradient=gradient,
        hessian=hessian,
        sampler=sampler,
        ell_V=None,
        L_V=None,
        radial_potential=None,
        radial_potential_deriv=None,
        radial_log_density=None,
        name=f"whitened-{target.name}",
        extra={**target.extra, "whitening": w},
    )


def composite_push(cmap: CompositeMap, x) -> np.ndarray:
    """y = A T_lam(x) + m."""
    return cmap.whitening.forward(apply_map(cmap.dictionary, cmap.weights, x))


def composite_log_density(cmap: CompositeMap, y) -> np.ndarray:
    """Log density of the pushforward of N(0, I) under the composite map."""
    y = np.asarray(y, dtype=float)
    d = cmap.dictionary.dimension
    u = cmap.whitening.inverse(y)
    s = np.linalg.norm(u, axis=-1)
    r = invert_radial(cmap.dictionary, cmap.weights, s)
    r_safe = np.maximum(r, 1e-300)
    log_gauss = -0.5 * r * r - 0.5 * d * math.log(2 * math.pi)
    return log_gauss - log_det_jacobian(cmap.dictionary, cmap.weights, r_safe) - cmap.whitening.log_abs_det
