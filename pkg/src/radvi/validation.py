"""Fast self-checks of the numerical building blocks."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List

import numpy as np
from scipy import integrate

from .basis import apply_map, build_dictionary
from .gram import chi_log_pdf, gram_matrix, gram_mc_validate, truncated_moment
from .optimizer import logdet_grad_semianalytic, objective_eval_radial, potential_grad_radial
from .oracles import laplace_radial_oracle, logistic_radial_oracle, student_t_radial_oracle
from .projection import kkt_residuals, project_nonneg_Q
from .quadrature import ChiQuadrature
from .specfun import chi_squared_cdf, chi_squared_quantile, f_cdf
from .targets import TargetSpec, build_target

__all__ = ["CheckResult", "run_checks"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _gram_check(rng, gram, dictionary):
    dev = gram_mc_validate(dictionary, 200_000, rng, gram=gram)
    return CheckResult("gram_monte_carlo", dev <= 1e-2, f"max |Q - Q_mc| = {dev:.2e} (tol 1e-2, n=2e5)")


def _isometry_check(rng, gram, dictionary):
    worst = 0.0
    x = rng.standard_normal((200_000, dictionary.dimension))
    for _ in range(5):
        lam, eta = rng.uniform(0, 2, dictionary.size), rng.uniform(0, 2, dictionary.size)
        mc = np.mean(np.sum((apply_map(dictionary, lam, x) - apply_map(dictionary, eta, x)) ** 2, axis=1))
        v = lam - eta
        exact = v @ gram.Q @ v
        worst = max(worst, abs(mc - exact) / exact)
    return CheckResult("isometry", worst <= 0.05, f"worst relative gap {worst:.2e} (tol 5e-2)")


def _gradient_check(rng):
    worst = 0.0
    for family, extra in (("gaussian", {}), ("student_t", {"dof": 5.0})):
        d = 10
        dictionary = build_dictionary(d)
        quad = ChiQuadrature(dictionary)
        target = build_target(TargetSpec(family, d, **extra))
        lam = rng.uniform(0.1, 2.0, dictionary.size)
        grad = potential_grad_radial(target, dictionary, lam, quad) - logdet_grad_semianalytic(dictionary, lam, quad)
        h = 1e-5
        fd = np.array([(objective_eval_radial(target, dictionary, lam + h * e, quad)
                        - objective_eval_radial(target, dictionary, lam - h * e, quad)) / (2 * h)
                       for e in np.eye(dictionary.size)])
        worst = max(worst, np.linalg.norm(grad - fd) / np.linalg.norm(fd))
    return CheckResult("gradient_finite_difference", worst <= 1e-6, f"worst relative error {worst:.2e} (tol 1e-6)")


def _projection_check(rng):
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 16))
        A = rng.standard_normal((n, n))
        Q = A @ A.T + 0.1 * np.eye(n)
        y = rng.standard_normal(n)
        res = kkt_residuals(Q, y, project_nonneg_Q(Q, y))
        worst = max(worst, *res.values())
    return CheckResult("projection_kkt", worst <= 1e-8, f"worst KKT violation {worst:.2e} (tol 1e-8)")


def _oracle_check():
    d = 10
    r = np.linspace(0.5, 6.0, 12)
    worst = 0.0
    for oracle in (laplace_radial_oracle(d), logistic_radial_oracle(d)):
        worst = max(worst, np.max(np.abs(oracle.target_cdf(oracle(r)) - chi_squared_cdf(d, r * r))))
    st = student_t_radial_oracle(d, 10.0)
    r_med = np.sqrt(chi_squared_quantile(d, 0.5))
    worst = max(worst, abs(f_cdf(d, 10.0, st(r_med) ** 2 / d) - 0.5))
    return CheckResult("oracle_round_trip", worst <= 1e-6, f"worst CDF mismatch {worst:.2e} (tol 1e-6)")


def _moment_check(rng):
    worst = 0.0
    for _ in range(20):
        d, n = int(rng.integers(1, 60)), int(rng.integers(0, 3))
        a = rng.uniform(0, np.sqrt(d) + 2)
        b = a + rng.uniform(0.05, 3)
        ref = integrate.quad(lambda t: t ** n * np.exp(chi_log_pdf(d, t)), a, b, epsabs=0, epsrel=1e-13)[0]
        worst = max(worst, abs(truncated_moment(d, n, a, b) - ref) / ref)
    return CheckResult("truncated_moments", worst <= 1e-10, f"worst relative error {worst:.2e} (tol 1e-10)")


def run_checks(seed: int = 0, corrupt_q: bool = False) -> List[CheckResult]:
    """Run every check; ``corrupt_q`` perturbs one Gram entry (a negative control)."""
    rng = np.random.default_rng(seed)
    dictionary = build_dictionary(10)
    gram = gram_matrix(dictionary)
    if corrupt_q:
        Q = gram.Q.copy()
        Q[2, 3] += 0.05
        Q[3, 2] += 0.05
        gram = replace(gram, Q=Q)
    return [
        _gram_check(rng, gram, dictionary),
        _isometry_check(rng, gram, dictionary),
        _gradient_check(rng),
        _projection_check(rng),
        _oracle_check(),
        _moment_check(rng),
    ]
