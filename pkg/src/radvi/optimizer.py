"""Projected gradient descent on the ramp weights in the Gram metric.

The KL objective over the map family is

    F(lam) = E[V(T_lam X)] - E[log det DT_lam(X)],   X ~ N(0, I_d),

and each iteration takes

    lam <- Proj_{lam >= 0, |.|_Q}(lam - h Q^{-1} grad F(lam)),

with the potential term estimated from a fresh Gaussian batch and the
log-det term evaluated deterministically (or by Monte Carlo on request).
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .basis import Dictionary, apply_map, eval_basis, eval_basis_deriv, log_det_jacobian, radial_value, radial_deriv
from .gram import GramMatrix, truncated_moment
from .projection import project_nonneg_Q
from .quadrature import ChiQuadrature
from .targets import TargetModel, UnsupportedOperationError

__all__ = [
    "OptimizerConfig",
    "IterateTrace",
    "RadVIResult",
    "DivergenceError",
    "potential_grad_estimate",
    "potential_grad_from_samples",
    "potential_grad_radial",
    "logdet_grad_semianalytic",
    "logdet_grad_mc",
    "logdet_objective_radial",
    "objective_eval_radial",
    "objective_eval_mc",
    "radvi_step",
    "radvi_run",
    "map_error_quadrature",
]

LOGDET_MODES = ("semianalytic", "monte_carlo")


class DivergenceError(FloatingPointError):
    """A non-finite gradient appeared; carries the iteration and the weights."""

    def __init__(self, iteration: int, weights: np.ndarray):
        self.iteration = iteration
        self.weights = np.array(weights, copy=True)
        super().__init__(f"non-finite gradient at iteration {iteration}; lambda={self.weights.tolist()}")


@dataclass(frozen=True)
class OptimizerConfig:
    step: float = 7e-3
    iterations: int = 10_000
    batch: int = 100
    seed: int = 0
    logdet_mode: str = "semianalytic"
    trace_every: int = 100

    def __post_init__(self):
        if not self.step >= 0:
            raise ValueError("step size must be nonnegative")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.batch < 1:
            raise ValueError("batch size must be >= 1")
        if self.trace_every < 1:
            raise ValueError("trace_every must be >= 1")
        if self.logdet_mode not in LOGDET_MODES:
            raise ValueError(f"logdet_mode must be one of {LOGDET_MODES}")


@dataclass
class IterateTrace:
    iterations: list = field(default_factory=list)
    weights: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    map_error: list = field(default_factory=list)
    wallclock_ms: list = field(default_factory=list)

    def record(self, k, lam, obj, err, ms):
        if self.iterations and k <= self.iterations[-1]:
            raise ValueError("trace iterations must increase")
        self.iterations.append(int(k))
        self.weights.append(np.array(lam, copy=True))
        self.objective.append(float(obj))
        self.map_error.append(None if err is None else float(err))
        self.wallclock_ms.append(float(ms))

    def __len__(self):
        return len(self.iterations)

    def rows(self, timing: bool = False):
        for k, obj, err, ms in zip(self.iterations, self.objective, self.map_error, self.wallclock_ms):
            row = [k, repr(obj), "" if err is None else repr(err)]
            if timing:
                row.append(f"{ms:.1f}")
            yield row


@dataclass
class RadVIResult:
    weights: np.ndarray
    trace: IterateTrace
    dictionary: Dictionary


# ---------------------------------------------------------------------------
# gradients


def potential_grad_from_samples(target: TargetModel, dictionary: Dictionary, lam, x) -> np.ndarray:
    """(1/n) sum_i Psi(|x_i|) <x_i/|x_i|, grad V(T_lam x_i)> for given samples."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    u = x / r[:, None]
    g = radial_value(dictionary, lam, r)
    gv = target.gradient(g[:, None] * u)
    proj = np.einsum("ij,ij->i", u, gv)
    return eval_basis(dictionary, r).T @ proj / len(r)


def potential_grad_estimate(target: TargetModel, dictionary: Dictionary, lam, n: int,
                            rng: np.random.Generator) -> np.ndarray:
    """Unbiased estimate of grad_lam E[V(T_lam X)] from ``n`` fresh Gaussian draws."""
    if n < 1:
        raise ValueError("n must be >= 1")
    x = rng.standard_normal((int(n), dictionary.dimension))
    return potential_grad_from_samples(target, dictionary, lam, x)


def _radial_profile(target: TargetModel):
    if not target.isotropic:
        raise UnsupportedOperationError("radial quadrature needs an isotropic target")
    return target.radial_potential, target.radial_potential_deriv


def potential_grad_radial(target: TargetModel, dictionary: Dictionary, lam,
                          quad: Optional[ChiQuadrature] = None) -> np.ndarray:
    """Exact (quadrature) gradient of E[v(g_lam(|X|))] for isotropic targets."""
    _, dv = _radial_profile(target)
    quad = quad or ChiQuadrature(dictionary)
    g = quad.radial_value(lam)
    return quad.psi.T @ (quad.w * dv(g))


def _interval_masses(dictionary: Dictionary, quad: Optional[ChiQuadrature] = None) -> np.ndarray:
    if quad is not None:
        return quad.interval_mass
    a, w = dictionary.offsets, dictionary.widths
    return truncated_moment(dictionary.dimension, 0, a, a + w)


def logdet_grad_semianalytic(dictionary: Dictionary, lam,
                             quad: Optional[ChiQuadrature] = None) -> np.ndarray:
    """grad_lam E[log det DT_lam] without sampling.

    Component j is P(|X| in I_j) / (alpha w_j + lam_j) from the radial slope,
    plus (d - 1) int Psi_j / g_lam d chi_d from the tangential part; the
    latter is integrated partition by partition, where g_lam reduces to
    alpha r + sum_{k<l} lam_k + lam_l Psi_l(r).
    """
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise ValueError("weights must be nonnegative")
    d = dictionary.dimension
    if d > 1:
        quad = quad or ChiQuadrature(dictionary)
    slope_part = _interval_masses(dictionary, quad) / (dictionary.alpha * dictionary.widths + lam)
    if d == 1:
        return slope_part
    g = quad.radial_value(lam)
    if not np.all(np.isfinite(g)) or np.any(g <= 0):
        raise FloatingPointError("radial map is not positive on the quadrature nodes")
    return slope_part + (d - 1) * (quad.psi.T @ (quad.w / g))


def logdet_grad_mc(dictionary: Dictionary, lam, n: int, rng: np.random.Generator,
                   return_stderr: bool = False):
    """Monte Carlo estimate of grad_lam E[log det DT_lam]."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise ValueError("weights must be nonnegative")
    d = dictionary.dimension
    r = np.sqrt(rng.chisquare(d, size=int(n)))
    psi = eval_basis(dictionary, r)
    dpsi = eval_basis_deriv(dictionary, r)
    g = psi @ lam + dictionary.alpha * r
    dg = dpsi @ lam + dictionary.alpha
    terms = (d - 1) * psi / g[:, None] + dpsi / dg[:, None]
    mean = terms.mean(axis=0)
    if return_stderr:
        return mean, terms.std(axis=0, ddof=1) / math.sqrt(len(r))
    return mean


# ---------------------------------------------------------------------------
# objectives


def logdet_objective_radial(dictionary: Dictionary, lam, quad: Optional[ChiQuadrature] = None) -> float:
    """E[log det DT_lam(X)] by quadrature."""
    lam = np.asarray(lam, dtype=float)
    quad = quad or ChiQuadrature(dictionary)
    d = dictionary.dimension
    tangential = quad.integrate(np.log(quad.radial_value(lam) / quad.r))
    masses = _interval_masses(dictionary, quad)
    slope = float(masses @ np.log(dictionary.alpha + lam / dictionary.widths))
    slope += (1.0 - masses.sum()) * math.log(dictionary.alpha)
    return (d - 1) * tangential + slope


def objective_eval_radial(target: TargetModel, dictionary: Dictionary, lam,
                          quad: Optional[ChiQuadrature] = None) -> float:
    """F(lam) = int v(g_lam) d chi_d - E[log det DT_lam] for isotropic targets."""
    v, _ = _radial_profile(target)
    quad = quad or ChiQuadrature(dictionary)
    potential = quad.integrate(v(quad.radial_value(lam)))
    return potential - logdet_objective_radial(dictionary, lam, quad)


def objective_eval_mc(target: TargetModel, dictionary: Dictionary, lam, x) -> float:
    """Sample-average KL objective on a fixed batch ``x``."""
    r = np.linalg.norm(x, axis=-1)
    return float(np.mean(target.potential(apply_map(dictionary, lam, x)))
                 - np.mean(log_det_jacobian(dictionary, lam, r)))


def map_error_quadrature(dictionary: Dictionary, lam, oracle: Callable,
                         quad: Optional[ChiQuadrature] = None, oracle_values=None) -> float:
    """int (g_lam(r) - Psi*(r))^2 d chi_d(r), the squared L2(rho) map distance."""
    quad = quad or ChiQuadrature(dictionary)
    ref = oracle(quad.r) if oracle_values is None else oracle_values
    return quad.integrate((quad.radial_value(lam) - ref) ** 2)


# ---------------------------------------------------------------------------
# iteration


def radvi_step(lam, grad, h: float, gram: GramMatrix) -> np.ndarray:
    """One projected step; weights of ramps dropped from the Gram factor stay put."""
    lam = np.asarray(lam, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if h == 0 or not np.any(grad):
        return lam.copy()
    a = gram.active
    out = lam.copy()
    y = lam[a] - h * gram.solve(grad[a])
    out[a] = project_nonneg_Q(gram.Q_active, y)
    return out


def _streams(seed: int):
    ss = np.random.SeedSequence(int(seed))
    return [np.random.default_rng(s) for s in ss.spawn(3)]


def radvi_run(target: TargetModel, dictionary: Dictionary, gram: GramMatrix, config: OptimizerConfig,
              oracle: Optional[Callable] = None, lam0=None, quad: Optional[ChiQuadrature] = None,
              validation_size: int = 2000) -> RadVIResult:
    """Run K projected stochastic gradient steps from ``lam0`` (default all ones).

    The trace records the objective (quadrature for isotropic targets,
    otherwise a sample average on a fixed validation batch) and, when an
    oracle is given, the squared L2 distance to it.
    """
    if target.dimension != dictionary.dimension:
        raise ValueError("target and dictionary dimensions differ")
    lam = np.ones(dictionary.size) if lam0 is None else np.array(lam0, dtype=float)
    if lam.shape != (dictionary.size,) or np.any(lam < 0):
        raise ValueError("lam0 must be a nonnegative vector of length J + 1")
    quad = quad or ChiQuadrature(dictionary)
    batch_rng, logdet_rng, valid_rng = _streams(config.seed)
    if target.isotropic:
        def objective(l):
            return objective_eval_radial(target, dictionary, l, quad)
    else:
        x_valid = valid_rng.standard_normal((validation_size, dictionary.dimension))

        def objective(l):
            return objective_eval_mc(target, dictionary, l, x_valid)
    ref = None if oracle is None else oracle(quad.r)

    trace = IterateTrace()
    start = time.perf_counter()

    def log(k):
        err = None if ref is None else map_error_quadrature(dictionary, lam, None, quad, ref)
        trace.record(k, lam, objective(lam), err, 1e3 * (time.perf_counter() - start))

    log(0)
    K = config.iterations
    for k in range(1, K + 1):
        grad = potential_grad_estimate(target, dictionary, lam, config.batch, batch_rng)
        if config.logdet_mode == "semianalytic":
            grad -= logdet_grad_semianalytic(dictionary, lam, quad)
        else:
            grad -= logdet_grad_mc(dictionary, lam, config.batch, logdet_rng)
        if not np.all(np.isfinite(grad)):
            raise DivergenceError(k, lam)
        lam = radvi_step(lam, grad, config.step, gram)
        if k % config.trace_every == 0 or k == K:
            log(k)
    return RadVIResult(lam, trace, dictionary)
