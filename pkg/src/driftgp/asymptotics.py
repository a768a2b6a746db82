"""Closed-form asymptotic variance blocks and standard errors.

The drift and kernel parameter estimates converge at different rates
(h^-1/2 and sqrt(n)); the corresponding variance blocks are

    drift block:  -d2K(0) * [ 2 * integral (d mu/d xi)^{x2} dt ]^-1
    sigma block:  V2^-1 V1 V2^-1,   with
                  V1 = ( (1/2) d/dsigma log(-d2K_sigma(0)) )^{x2}
                  V2 = d^2/dsigma^2 log(-d2K_sigma(0))

Only the curvature -d2K(0) of the kernel at the origin enters, so parameters
that leave it unchanged make V2 singular; in that case the sigma block is
omitted and flagged instead of inverted.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .contrast import EstimateReport
from .drift import DriftModel, EXP_DECAY, ZERO
from .errors import ParameterDomainError
from .kernels import FAMILY_PARAMS, KernelModel, kernel_d2_at_zero
from .simulate import SamplingScheme

_SINGULAR_COND = 1e12
_ENERGY_CUTOFF = 1e-14


@dataclass(frozen=True)
class AsymptoticInfo:
    """Variance blocks of the scaled estimation error."""

    drift_block: np.ndarray          # p x p (p = 0 for parameter-free drift)
    sigma_block: np.ndarray | None   # q x q, None when V2 is singular
    sigma_params: tuple[str, ...]
    rates: tuple[str, str] = ("h^-1/2", "n^1/2")
    sigma_flag: str | None = None
    diagnostics: dict = dataclasses.field(default_factory=dict)


def gradient_energy(drift: DriftModel) -> tuple[float, dict]:
    """integral_0^inf (d mu/d xi)^2 dt for scalar-parameter profiles."""
    if drift.profile == ZERO:
        return 0.0, {}
    if drift.profile == EXP_DECAY:
        return 0.5, {"closed_form": True}
    if drift.table_t is not None:
        tt, ww = drift.table_t, drift.table_w
        body = float(np.trapezoid(ww**2, tt))
        tail = float(ww[-1] ** 2) / (2.0 * drift.tail_rate)
        return body + tail, {"closed_form": False, "tail_mass": tail}
    # callable shape: adaptive panels until contributions die out
    from .drift import _adaptive_simpson

    def sq(t):
        return float(drift.shape(t)) ** 2

    total = 0.0
    lo, span = 0.0, 1.0
    T = 0.0
    while True:
        hi = lo + span
        piece = _adaptive_simpson(sq, lo, hi, 1e-10)
        total += piece
        T = hi
        if piece < _ENERGY_CUTOFF * (1.0 + total) or hi > 1e9:
            break
        lo, span = hi, span * 2.0
    return total, {"closed_form": False, "truncated_at": T}


def _log_neg_d2_grad_hess(kernel: KernelModel, params: tuple[str, ...]):
    """Analytic gradient/Hessian of log(-d2K(0)) in the named parameters."""
    fam = kernel.family
    a, b = kernel.alpha, kernel.beta
    grad_full: dict[str, float] = {}
    hess_full: dict[tuple[str, str], float] = {}
    if fam == "gaussian":
        grad_full = {"alpha": 1.0 / a, "beta": 1.0 / b}
        hess_full = {("alpha", "alpha"): -1.0 / a**2, ("beta", "beta"): -1.0 / b**2}
    elif fam == "rational_quadratic":
        grad_full = {"alpha": 1.0 / a, "beta": 2.0 / b, "gamma": 0.0}
        hess_full = {("alpha", "alpha"): -1.0 / a**2, ("beta", "beta"): -2.0 / b**2}
    elif fam == "matern":
        nu = kernel.nu
        grad_full = {"alpha": 1.0 / a, "beta": 2.0 / b, "nu": 1.0 / nu - 1.0 / (nu - 1.0)}
        hess_full = {
            ("alpha", "alpha"): -1.0 / a**2,
            ("beta", "beta"): -2.0 / b**2,
            ("nu", "nu"): -1.0 / nu**2 + 1.0 / (nu - 1.0) ** 2,
        }
    elif fam == "mollified_ou":
        eps = kernel.epsilon
        q = 1.0 + b * eps
        grad_full = {
            "alpha": 1.0 / a,
            "beta": 1.0 / b - eps / q,
            "epsilon": -1.0 / eps - b / q,
        }
        hess_full = {
            ("alpha", "alpha"): -1.0 / a**2,
            ("beta", "beta"): -1.0 / b**2 + (eps / q) ** 2,
            ("beta", "epsilon"): -1.0 / q**2,
            ("epsilon", "epsilon"): 1.0 / eps**2 + (b / q) ** 2,
        }
    else:
        raise ParameterDomainError(f"no curvature information for family {fam!r}")
    grad = np.array([grad_full[p] for p in params])
    q_ = len(params)
    hess = np.zeros((q_, q_))
    for i, pi in enumerate(params):
        for j, pj in enumerate(params):
            hess[i, j] = hess_full.get((pi, pj), hess_full.get((pj, pi), 0.0))
    return grad, hess


def log_neg_d2_grad_hess_fd(kernel: KernelModel, params: tuple[str, ...], rel_step: float = 1e-5):
    """Central-difference gradient/Hessian of log(-d2K(0)); FD cross-check."""

    def g(values: np.ndarray) -> float:
        kern = kernel.with_params(**dict(zip(params, values)))
        return math.log(-kernel_d2_at_zero(kern))

    x0 = np.array([getattr(kernel, p) for p in params], dtype=float)
    steps = rel_step * np.maximum(np.abs(x0), 1e-3)
    q = x0.size
    grad = np.empty(q)
    hess = np.empty((q, q))
    g0 = g(x0)
    for i in range(q):
        ei = np.zeros(q)
        ei[i] = steps[i]
        grad[i] = (g(x0 + ei) - g(x0 - ei)) / (2.0 * steps[i])
        hess[i, i] = (g(x0 + ei) - 2.0 * g0 + g(x0 - ei)) / steps[i] ** 2
        for j in range(i + 1, q):
            ej = np.zeros(q)
            ej[j] = steps[j]
            hess[i, j] = hess[j, i] = (
                g(x0 + ei + ej) - g(x0 + ei - ej) - g(x0 - ei + ej) + g(x0 - ei - ej)
            ) / (4.0 * steps[i] * steps[j])
    return grad, hess


def fisher_blocks(
    kernel: KernelModel,
    drift: DriftModel,
    sigma_params: tuple[str, ...] | None = None,
    derivatives: str = "analytic",
) -> AsymptoticInfo:
    """Assemble the asymptotic variance blocks at the given parameter values."""
    neg_d2 = -kernel_d2_at_zero(kernel)
    if neg_d2 <= 0.0:
        raise ParameterDomainError("-d2K(0) must be positive")

    diagnostics: dict = {}
    if drift.n_params:
        energy, energy_diag = gradient_energy(drift)
        diagnostics.update(energy_diag)
        if energy <= 0.0:
            raise ParameterDomainError("drift gradient energy must be positive")
        drift_block = np.array([[neg_d2 / (2.0 * energy)]])
    else:
        drift_block = np.zeros((0, 0))

    if sigma_params is None:
        sigma_params = FAMILY_PARAMS[kernel.family]
    sigma_params = tuple(sigma_params)
    if derivatives == "analytic":
        grad, hess = _log_neg_d2_grad_hess(kernel, sigma_params)
    elif derivatives == "fd":
        grad, hess = log_neg_d2_grad_hess_fd(kernel, sigma_params)
    else:
        raise ParameterDomainError(f"unknown derivatives mode {derivatives!r}")

    v1 = np.outer(0.5 * grad, 0.5 * grad)
    v2 = hess
    sigma_block = None
    flag = None
    cond = np.linalg.cond(v2) if v2.size else float("inf")
    if v2.size == 0 or not np.isfinite(cond) or cond > _SINGULAR_COND:
        flag = (
            "V2 is singular for these parameters (the origin curvature does not "
            "vary independently in all of them); sigma block omitted"
        )
    else:
        v2inv = np.linalg.inv(v2)
        sigma_block = v2inv @ v1 @ v2inv
    return AsymptoticInfo(
        drift_block=drift_block,
        sigma_block=sigma_block,
        sigma_params=sigma_params,
        sigma_flag=flag,
        diagnostics=diagnostics,
    )


def standard_errors(
    report: EstimateReport, info: AsymptoticInfo, scheme: SamplingScheme
) -> EstimateReport:
    """Attach rate-scaled standard errors to an estimate report.

    se(xi_j) = sqrt(Sigma_xi[j, j]) * sqrt(h);  se(sigma_k) = sqrt(Sigma_sigma[k, k]) / sqrt(n).
    """
    ses: dict[str, float] = {}
    if info.drift_block.size and "xi" in report.theta_hat:
        ses["xi"] = math.sqrt(float(info.drift_block[0, 0])) * math.sqrt(scheme.h)
    if info.sigma_block is not None:
        for k, name in enumerate(info.sigma_params):
            if name in report.theta_hat:
                ses[name] = math.sqrt(float(info.sigma_block[k, k])) / math.sqrt(scheme.n)
    diagnostics = dict(report.diagnostics)
    if info.sigma_flag:
        diagnostics["sigma_flag"] = info.sigma_flag
    return EstimateReport(
        theta_hat=dict(report.theta_hat),
        rates=dict(report.rates),
        std_errors=ses,
        diagnostics=diagnostics,
    )
