"""Stationary covariance kernel families and their behaviour at the origin.

Implemented families (time lag ``t >= 0`` throughout; evaluation at negative
lags goes through ``|t|``):

* ``gaussian``              K(t) = alpha * exp(-beta * t^2 / 2)
* ``matern``                K(t) = alpha * 2^(1-nu)/Gamma(nu) * x^nu * B_nu(x),
                            x = sqrt(2 nu) * beta * |t|  (B_nu: modified Bessel,
                            second kind)
* ``rational_quadratic``    K(t) = alpha * (1 + beta^2 t^2 / (2 gamma))^(-gamma)
* ``exponential_ou``        K(t) = alpha * exp(-beta |t|)   (kinked at 0)
* ``mollified_ou``          Laplace-smoothed exponential kernel,
                            K(t) = alpha * (e^(-beta t) - beta eps e^(-t/eps))
                                   / (1 - beta^2 eps^2)

The mollified family is the convolution of the exponential kernel with the
Laplace density ``(1/(2 eps)) exp(-|s|/eps)``; the closed form above is what
that convolution evaluates to and is certified against direct quadrature in
the test suite.  It is twice (but not three times) differentiable at 0 with

    K(0)        = alpha / (1 + beta*eps)
    d2 K(0)     = -alpha*beta / (eps * (1 + beta*eps))

All second/fourth derivative values returned by :func:`kernel_d2_at_zero` and
:func:`kernel_d4_at_zero` are analytic values of the closed forms; the test
suite pins them to Richardson-extrapolated finite differences of
:func:`kernel_eval`.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import (
    CapabilityError,
    DegenerateVarianceError,
    NumericalError,
    ParameterDomainError,
)

GAUSSIAN = "gaussian"
MATERN = "matern"
RATIONAL_QUADRATIC = "rational_quadratic"
EXPONENTIAL_OU = "exponential_ou"
MOLLIFIED_OU = "mollified_ou"

FAMILIES = (GAUSSIAN, MATERN, RATIONAL_QUADRATIC, EXPONENTIAL_OU, MOLLIFIED_OU)

# Named parameters each family carries, in canonical order.
FAMILY_PARAMS = {
    GAUSSIAN: ("alpha", "beta"),
    MATERN: ("alpha", "beta", "nu"),
    RATIONAL_QUADRATIC: ("alpha", "beta", "gamma"),
    EXPONENTIAL_OU: ("alpha", "beta"),
    MOLLIFIED_OU: ("alpha", "beta", "epsilon"),
}

# Lag floor below which the Matern closed form is replaced by its origin
# Taylor expansion (the Bessel product is 0 * inf at t = 0 and ill-conditioned
# just above it).
_MATERN_SERIES_X = 1e-6

# Variance floor: a local variance at or below this is treated as degenerate
# because it sits in a denominator of the local-Gauss objective.
_VARIANCE_FLOOR = 1e-300


@dataclass(frozen=True)
class KernelModel:
    """A parametric stationary covariance kernel.

    Immutable after construction and safe to share across threads; every
    operation on it is a pure function.
    """

    family: str
    alpha: float
    beta: float
    nu: float | None = None
    gamma: float | None = None
    epsilon: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterDomainError(
                f"unknown kernel family {self.family!r}; expected one of {FAMILIES}"
            )
        for name in FAMILY_PARAMS[self.family]:
            value = getattr(self, name)
            if value is None:
                raise ParameterDomainError(
                    f"{self.family} kernel requires parameter {name!r}"
                )
            if not math.isfinite(value) or value <= 0.0:
                raise ParameterDomainError(
                    f"{self.family} kernel parameter {name}={value!r} must be a "
                    "finite positive real"
                )
        if self.family == MOLLIFIED_OU:
            prod = self.beta * self.epsilon
            if prod >= 1.0:
                raise ParameterDomainError(
                    "mollified_ou requires beta*epsilon < 1 for the closed form "
                    f"(got beta*epsilon={prod!r})"
                )

    # -- constructors ------------------------------------------------------

    @classmethod
    def gaussian(cls, alpha: float, beta: float) -> "KernelModel":
        return cls(GAUSSIAN, alpha=alpha, beta=beta)

    @classmethod
    def matern(cls, alpha: float, beta: float, nu: float) -> "KernelModel":
        return cls(MATERN, alpha=alpha, beta=beta, nu=nu)

    @classmethod
    def rational_quadratic(cls, alpha: float, beta: float, gamma: float) -> "KernelModel":
        return cls(RATIONAL_QUADRATIC, alpha=alpha, beta=beta, gamma=gamma)

    @classmethod
    def exponential_ou(cls, alpha: float, beta: float) -> "KernelModel":
        return cls(EXPONENTIAL_OU, alpha=alpha, beta=beta)

    @classmethod
    def mollified_ou(cls, alpha: float, beta: float, epsilon: float) -> "KernelModel":
        return cls(MOLLIFIED_OU, alpha=alpha, beta=beta, epsilon=epsilon)

    # -- helpers -----------------------------------------------------------

    @property
    def params(self) -> dict[str, float]:
        """Named parameters of this family, in canonical order."""
        return {name: getattr(self, name) for name in FAMILY_PARAMS[self.family]}

    def with_params(self, **updates: float) -> "KernelModel":
        """Return a copy with some named parameters replaced (revalidated)."""
        for key in updates:
            if key not in FAMILY_PARAMS[self.family]:
                raise ParameterDomainError(
                    f"{self.family} kernel has no parameter {key!r}"
                )
        return dataclasses.replace(self, **updates)

    def to_dict(self) -> dict:
        return {"family": self.family, **self.params}

    @classmethod
    def from_dict(cls, spec: dict) -> "KernelModel":
        spec = dict(spec)
        family = str(spec.pop("family", "")).lower()
        if family not in FAMILIES:
            raise ParameterDomainError(f"unknown kernel family {family!r}")
        allowed = set(FAMILY_PARAMS[family])
        unknown = set(spec) - allowed
        if unknown:
            raise ParameterDomainError(
                f"unknown {family} kernel parameters: {sorted(unknown)}"
            )
        return cls(family, **{k: float(v) for k, v in spec.items()})


@dataclass(frozen=True)
class MollifierSpec:
    """Laplace mollifier with bandwidth ``epsilon``.

    Density: phi_eps(s) = (1/(2 eps)) * exp(-|s|/eps); integrates to 1.
    """

    epsilon: float

    def __post_init__(self):
        if not math.isfinite(self.epsilon) or self.epsilon <= 0.0:
            raise ParameterDomainError("mollifier bandwidth epsilon must be > 0")

    def density(self, s):
        s = np.asarray(s, dtype=float)
        out = np.exp(-np.abs(s) / self.epsilon) / (2.0 * self.epsilon)
        return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def _matern_eval(alpha, beta, nu, t):
    x = math.sqrt(2.0 * nu) * beta * np.abs(t)
    out = np.empty_like(x, dtype=float)
    small = x < _MATERN_SERIES_X
    if np.any(small):
        tt = np.abs(t)[small]
        val = np.full(tt.shape, 1.0)
        if nu > 1.0:
            c2 = -nu * beta * beta / (2.0 * (nu - 1.0))
            val = val + c2 * tt * tt
            if nu > 2.0:
                c4 = nu * nu * beta**4 / (8.0 * (nu - 1.0) * (nu - 2.0))
                val = val + c4 * tt**4
        out[small] = alpha * val
    big = ~small
    if np.any(big):
        xb = x[big]
        out[big] = (
            alpha
            * (2.0 ** (1.0 - nu) / special.gamma(nu))
            * xb**nu
            * special.kv(nu, xb)
        )
    return out


def kernel_eval(kernel: KernelModel, t):
    """Evaluate K(t).  Accepts scalars or arrays; symmetric in the lag."""
    arr = np.abs(np.asarray(t, dtype=float))
    a, b = kernel.alpha, kernel.beta
    if kernel.family == GAUSSIAN:
        out = a * np.exp(-0.5 * b * arr * arr)
    elif kernel.family == RATIONAL_QUADRATIC:
        g = kernel.gamma
        out = a * (1.0 + b * b * arr * arr / (2.0 * g)) ** (-g)
    elif kernel.family == EXPONENTIAL_OU:
        out = a * np.exp(-b * arr)
    elif kernel.family == MOLLIFIED_OU:
        eps = kernel.epsilon
        denom = 1.0 - (b * eps) ** 2
        out = a * (np.exp(-b * arr) - b * eps * np.exp(-arr / eps)) / denom
    else:  # matern
        out = _matern_eval(a, b, kernel.nu, arr)
    if not np.all(np.isfinite(out)):
        raise NumericalError(
            f"kernel evaluation produced non-finite values for {kernel.family} "
            f"params={kernel.params}"
        )
    return float(out) if out.ndim == 0 else out


def kernel_d2_at_zero(kernel: KernelModel) -> float:
    """Second derivative of K at lag 0 (strictly negative for these families)."""
    a, b = kernel.alpha, kernel.beta
    if kernel.family == GAUSSIAN:
        return -a * b
    if kernel.family == RATIONAL_QUADRATIC:
        return -a * b * b
    if kernel.family == MOLLIFIED_OU:
        eps = kernel.epsilon
        return -a * b / (eps * (1.0 + b * eps))
    if kernel.family == MATERN:
        nu = kernel.nu
        if nu <= 2.0:
            raise CapabilityError(
                f"matern kernel is not reliably twice differentiable at 0 for "
                f"nu={nu}; need nu > 2"
            )
        return -a * nu * b * b / (nu - 1.0)
    raise CapabilityError(
        "exponential_ou kernel is not twice differentiable at 0; use the "
        "mollified_ou family instead"
    )


def kernel_d4_at_zero(kernel: KernelModel) -> float:
    """Fourth derivative of K at lag 0 for the C^4 families."""
    a, b = kernel.alpha, kernel.beta
    if kernel.family == GAUSSIAN:
        return 3.0 * a * b * b
    if kernel.family == RATIONAL_QUADRATIC:
        g = kernel.gamma
        return 3.0 * a * b**4 * (1.0 + g) / g
    if kernel.family == MATERN:
        nu = kernel.nu
        if nu <= 4.0:
            raise CapabilityError(
                f"matern fourth derivative at 0 requires nu > 4 (got nu={nu})"
            )
        return 3.0 * a * nu * nu * b**4 / ((nu - 1.0) * (nu - 2.0))
    raise CapabilityError(
        f"{kernel.family} kernel is not four times differentiable at 0"
    )


def local_variance(kernel: KernelModel, h: float) -> float:
    """Variance 2*(K(0) - K(h)) of one increment at step ``h``.

    ``h == 0`` returns exactly 0; for ``h > 0`` a result at or below the
    degeneracy floor raises instead of returning, because callers divide by it.
    """
    if h < 0:
        raise ParameterDomainError(f"step h must be >= 0 (got {h!r})")
    if h == 0.0:
        return 0.0
    v = 2.0 * (kernel_eval(kernel, 0.0) - kernel_eval(kernel, h))
    if not math.isfinite(v):
        raise NumericalError(f"non-finite local variance at h={h}")
    if v <= _VARIANCE_FLOOR:
        raise DegenerateVarianceError(
            f"degenerate increment variance {v!r} for {kernel.family} at h={h}"
        )
    return v


def gram_matrix(kernel: KernelModel, grid) -> np.ndarray:
    """Covariance matrix M[i, j] = K(|t_i - t_j|) on an arbitrary grid."""
    t = np.asarray(grid, dtype=float)
    if t.ndim != 1:
        raise ParameterDomainError("grid must be one-dimensional")
    lags = np.abs(t[:, None] - t[None, :])
    return np.asarray(kernel_eval(kernel, lags), dtype=float)
