"""Evaluation metrics: map distance, Wasserstein distances, radial profiles and SNIS."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import logsumexp

from .basis import Dictionary, radial_value
from .targets import TargetModel

__all__ = [
    "MetricReport",
    "SizeError",
    "DegenerateWeightsError",
    "map_error_l2",
    "empirical_w2_squared",
    "radial_w2_squared",
    "radial_quantile_profile",
    "SNISResult",
    "snis_estimate",
]

EXACT_W2_CAP = 1024


class SizeError(ValueError):
    """Too many points for exact optimal assignment."""


class DegenerateWeightsError(FloatingPointError):
    """Every importance weight underflowed."""


@dataclass(frozen=True)
class MetricReport:
    name: str
    value: float
    standard_error: Optional[float] = None
    n_samples: int = 1
    seed: Optional[int] = None

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


def map_error_l2(dictionary: Dictionary, lam, oracle: Callable, n: int, rng: np.random.Generator,
                 seed: Optional[int] = None) -> MetricReport:
    """Monte Carlo estimate of |T_lam - T*|^2 in L2(N(0, I_d)).

    Both maps are radial along the same direction, so the pointwise squared
    distance is (g_lam(r) - Psi*(r))^2 with r = |X| ~ chi_d.
    """
    if getattr(oracle, "dimension", dictionary.dimension) != dictionary.dimension:
        raise ValueError("oracle and dictionary dimensions differ")
    r = np.sqrt(rng.chisquare(dictionary.dimension, size=int(n)))
    sq = (radial_value(dictionary, lam, r) - oracle(r)) ** 2
    se = float(sq.std(ddof=1) / math.sqrt(n)) if n > 1 else None
    return MetricReport("map_error", float(sq.mean()), se, int(n), seed)


def empirical_w2_squared(x, y) -> float:
    """Exact (1/n) min over permutations of sum |x_i - y_sigma(i)|^2."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if x.shape != y.shape:
        raise ValueError(f"point clouds differ in shape: {x.shape} vs {y.shape}")
    n = x.shape[0]
    if n > EXACT_W2_CAP:
        raise SizeError(f"exact assignment is capped at n={EXACT_W2_CAP}; split the samples into batches")
    cost = (x * x).sum(1)[:, None] + (y * y).sum(1)[None, :] - 2.0 * x @ y.T
    cost = np.maximum(cost, 0.0)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum() / n)


def radial_w2_squared(x_radii, y_radii) -> float:
    """Squared W2 between two 1D empirical laws of equal size (sorted coupling)."""
    a = np.sort(np.asarray(x_radii, dtype=float))
    b = np.sort(np.asarray(y_radii, dtype=float))
    if a.shape != b.shape:
        raise ValueError("samples must have equal size")
    return float(np.mean((a - b) ** 2))


def radial_quantile_profile(samples, quantiles) -> np.ndarray:
    """Empirical quantiles of |samples| at the given levels."""
    samples = np.asarray(samples, dtype=float)
    if samples.shape[0] < 100:
        raise ValueError("need at least 100 samples")
    norms = np.linalg.norm(samples, axis=-1) if samples.ndim > 1 else np.abs(samples)
    return np.quantile(norms, np.asarray(quantiles, dtype=float))


@dataclass(frozen=True)
class SNISResult:
    snis: MetricReport
    plug_in: MetricReport
    ess: float


def snis_estimate(f: Callable, target: TargetModel, proposal_log_density: Callable,
                  proposal_sampler: Callable, n: int, rng: np.random.Generator,
                  name: str = "snis", seed: Optional[int] = None) -> SNISResult:
    """Self-normalized importance sampling of E_pi[f] with unnormalized pi = exp(-V).

    log w_i = -V(Y_i) - log q(Y_i); the weights are normalized after
    subtracting their maximum.  The plug-in average of f under q and the
    effective sample size (sum w)^2 / sum w^2 are reported alongside.
    """
    y = proposal_sampler(rng, int(n))
    fy = np.asarray(f(y), dtype=float)
    log_w = -np.asarray(target.potential(y), dtype=float) - np.asarray(proposal_log_density(y), dtype=float)
    finite = np.isfinite(log_w)
    if not finite.any():
        raise DegenerateWeightsError("all importance weights are zero or undefined")
    log_w = np.where(finite, log_w, -np.inf)
    w = np.exp(log_w - logsumexp(log_w))
    if not np.isfinite(w).all() or w.sum() == 0:
        raise DegenerateWeightsError("importance weights underflowed")
    est = float(w @ fy)
    ess = float(1.0 / np.sum(w * w))
    # delta-method standard error of the ratio estimator
    se = float(math.sqrt(np.sum(w * w * (fy - est) ** 2)))
    plug = float(fy.mean())
    plug_se = float(fy.std(ddof=1) / math.sqrt(n)) if n > 1 else None
    return SNISResult(MetricReport(name, est, se, int(n), seed),
                      MetricReport(f"{name}_plug_in", plug, plug_se, int(n), seed), ess)
