"""De-trending, moment/Z-estimators, and ergodic diagnostic statistics.

Index convention: sums over increments i = 1..n pair the level ``Y_{i-1}``
with the increment ``Y_i - Y_{i-1}``, so level statistics use the first n of
the n+1 grid values.  This one convention is applied everywhere below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .drift import DriftModel, drift_eval, drift_integral_grid
from .errors import (
    DegenerateVarianceError,
    NumericalError,
    ParameterDomainError,
    RootNotFoundError,
)
from .kernels import KernelModel, kernel_d2_at_zero, kernel_eval
from .simulate import PathSample

_GH_NODES = 64
_NEWTON_MAX_ITER = 80
_SECANT_MAX_EXPAND = 60


@dataclass(frozen=True)
class DetrendedSeries:
    """Y_i = X_{t_i} - integral_0^{t_i} mu_{xi_hat}(s) ds, on the full grid."""

    y: np.ndarray
    h: float
    xi_hat_used: float | None

    def __post_init__(self):
        if not np.all(np.isfinite(self.y)):
            raise NumericalError("de-trended series contains non-finite entries")

    @property
    def n(self) -> int:
        return self.y.size - 1

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.y)


def detrend(path: PathSample, drift_family: DriftModel, xi_hat: float | None = None) -> DetrendedSeries:
    """Subtract the fitted drift integral from the observed values."""
    xi = drift_family.xi if xi_hat is None else float(xi_hat)
    trend = drift_integral_grid(drift_family.with_xi(xi), path.times)
    return DetrendedSeries(y=path.values - trend, h=path.h, xi_hat_used=xi)


def moment_alpha(series: DetrendedSeries) -> float:
    """Mean of squared levels over the first n entries; estimates K(0)."""
    y = series.y[:-1]
    return float(y @ y) / y.size


def moment_beta(series: DetrendedSeries) -> float:
    """Ratio sum (dY)^2 / (h^2 sum Y_{i-1}^2); estimates -d2K(0)/K(0)."""
    y = series.y[:-1]
    denom = float(y @ y)
    if denom <= 0.0:
        raise DegenerateVarianceError("level sum of squares is zero; ratio undefined")
    dy = series.increments
    return float(dy @ dy) / (series.h**2 * denom)


# ---------------------------------------------------------------------------
# Z-estimators from single-time moment functions
# ---------------------------------------------------------------------------

_BUILTIN_F = {
    "x2": (lambda z: z * z, lambda v: v),
    "x4": (lambda z: z**4, lambda v: 3.0 * v * v),
}


def _gauss_moment(f: Callable, variance: float) -> float:
    # E[f(Z)] for Z ~ N(0, variance); f must accept numpy arrays
    nodes, weights = np.polynomial.hermite.hermgauss(_GH_NODES)
    z = math.sqrt(2.0 * variance) * nodes
    vals = np.broadcast_to(np.asarray(f(z), dtype=float), z.shape)
    return float(weights @ vals) / math.sqrt(math.pi)


def _resolve_moment_functions(f) -> list[tuple[Callable, Callable | None]]:
    """Normalise ``f`` to a list of (sample_fn, gaussian_moment_fn or None)."""
    if isinstance(f, str):
        f = (f,)
    if callable(f):
        return [(f, None)]
    out = []
    for item in f:
        if isinstance(item, str):
            if item not in _BUILTIN_F:
                raise ParameterDomainError(
                    f"unknown moment function {item!r}; built-ins: {sorted(_BUILTIN_F)}"
                )
            out.append(_BUILTIN_F[item])
        elif callable(item):
            out.append((item, None))
        else:
            raise ParameterDomainError(f"moment function {item!r} is neither a name nor callable")
    return out


def estimating_function(series: DetrendedSeries, f, kernel: KernelModel) -> np.ndarray:
    """Phi_n(sigma): sample moments of Y_{i-1} minus N(0, K_sigma(0)) moments."""
    fns = _resolve_moment_functions(f)
    y = series.y[:-1]
    v = float(kernel_eval(kernel, 0.0))
    out = np.empty(len(fns))
    for j, (sample_fn, model_fn) in enumerate(fns):
        emp = float(np.mean(sample_fn(y)))
        model = model_fn(v) if model_fn is not None else _gauss_moment(sample_fn, v)
        out[j] = emp - model
    return out


def z_estimator(
    series: DetrendedSeries,
    f,
    kernel_family: KernelModel,
    init: dict[str, float],
    *,
    tol: float = 1e-12,
) -> dict[str, float]:
    """Solve Phi_n(sigma) = 0 for the parameters named in ``init``.

    The number of moment functions must match the number of free parameters.
    Identifiability of the family through K_sigma(0) is the caller's
    responsibility; a failed bracket/Newton search raises
    :class:`RootNotFoundError` with diagnostics.
    """
    fns = _resolve_moment_functions(f)
    names = list(init)
    if len(fns) != len(names):
        raise ParameterDomainError(
            f"{len(fns)} moment functions cannot determine {len(names)} parameters"
        )

    def phi(values: np.ndarray) -> np.ndarray:
        kern = kernel_family.with_params(**dict(zip(names, values)))
        return estimating_function(series, f, kern)

    x0 = np.array([float(init[name]) for name in names])
    phi0 = phi(x0)
    if np.all(np.abs(phi0) <= tol):
        return dict(zip(names, x0))
    if len(names) == 1:
        root = _bracketed_root(lambda v: float(phi(np.array([v]))[0]), float(x0[0]), tol)
        return {names[0]: root}
    solution = _damped_newton(phi, x0, tol)
    return dict(zip(names, solution))


def _bracketed_root(g: Callable[[float], float], x0: float, tol: float) -> float:
    from scipy.optimize import brentq

    def g_in_domain(x):
        try:
            return g(x)
        except ParameterDomainError:
            return None

    g0 = g(x0)
    if g0 == 0.0:
        return x0
    lo = hi = x0
    glo = ghi = g0
    grow_lo = grow_hi = True
    for _ in range(_SECANT_MAX_EXPAND):
        if not (grow_lo or grow_hi):
            break
        if grow_lo:
            cand = 0.5 * lo
            val = g_in_domain(cand)
            if val is None:
                grow_lo = False
            else:
                lo, glo = cand, val
                if np.sign(glo) != np.sign(ghi) or glo == 0.0:
                    break
        if grow_hi:
            cand = 2.0 * hi
            val = g_in_domain(cand)
            if val is None:
                # bisect toward the domain edge instead of overshooting it
                edge = hi
                for _ in range(12):
                    mid = 0.5 * (edge + cand)
                    vmid = g_in_domain(mid)
                    if vmid is None:
                        cand = mid
                    else:
                        edge, vedge = mid, vmid
                if edge > hi:
                    hi, ghi = edge, vedge
                grow_hi = False
            else:
                hi, ghi = cand, val
            if np.sign(glo) != np.sign(ghi) or ghi == 0.0:
                break
    if np.sign(glo) == np.sign(ghi) and glo != 0.0 and ghi != 0.0:
        raise RootNotFoundError(
            "estimating function shows no sign change on the expanded bracket",
            diagnostics={"lo": lo, "hi": hi, "phi_lo": glo, "phi_hi": ghi},
        )
    return float(brentq(g, lo, hi, xtol=tol, rtol=4.0 * np.finfo(float).eps))


def _damped_newton(phi: Callable, x0: np.ndarray, tol: float) -> np.ndarray:
    x = x0.astype(float).copy()
    fx = phi(x)
    for _ in range(_NEWTON_MAX_ITER):
        norm = float(np.max(np.abs(fx)))
        if norm <= tol:
            return x
        jac = np.empty((x.size, x.size))
        for j in range(x.size):
            step = 1e-6 * max(abs(x[j]), 1e-3)
            xp = x.copy()
            xp[j] += step
            jac[:, j] = (phi(xp) - fx) / step
        try:
            delta = np.linalg.solve(jac, -fx)
        except np.linalg.LinAlgError as exc:
            raise RootNotFoundError(
                "singular Jacobian in Newton iteration",
                diagnostics={"x": x.tolist(), "phi": fx.tolist()},
            ) from exc
        lam = 1.0
        while lam > 1e-6:
            cand = x + lam * delta
            if np.all(cand > 0.0):
                fc = phi(cand)
                if float(np.max(np.abs(fc))) < norm:
                    x, fx = cand, fc
                    break
            lam *= 0.5
        else:
            raise RootNotFoundError(
                "Newton iteration stalled (no descent step)",
                diagnostics={"x": x.tolist(), "phi": fx.tolist(), "residual": norm},
            )
    raise RootNotFoundError(
        "Newton iteration did not converge",
        diagnostics={"x": x.tolist(), "phi": fx.tolist()},
    )


# ---------------------------------------------------------------------------
# paired-observation functionals
# ---------------------------------------------------------------------------

_BUILTIN_G = {
    # name -> (G(x, y), dG/dy at diag, d2G/dy2 at diag)
    "(y-x)^2": (lambda x, y: (y - x) ** 2, lambda z: 0.0 * z, lambda z: 2.0 + 0.0 * z),
    "(y-x)y^2": (
        lambda x, y: (y - x) * y * y,
        lambda z: z * z,
        lambda z: 4.0 * z,
    ),
}


def g_functional(series: DetrendedSeries, G) -> float:
    """(1/(n h^2)) * sum_i G(Y_{i-1}, Y_i) for a two-argument functional."""
    if isinstance(G, str):
        if G not in _BUILTIN_G:
            raise ParameterDomainError(
                f"unknown functional {G!r}; built-ins: {sorted(_BUILTIN_G)}"
            )
        fn = _BUILTIN_G[G][0]
    else:
        fn = G
    y = series.y
    vals = fn(y[:-1], y[1:])
    return float(np.sum(vals)) / (series.n * series.h**2)


def g_functional_limit(G, kernel: KernelModel) -> float:
    """Theoretical limit of :func:`g_functional` for the given kernel.

    Evaluates (d2K(0) / (2 K(0))) * E[ dG/dy(Z,Z) * Z - d2G/dy2(Z,Z) * K(0) ]
    with Z ~ N(0, K(0)).  Built-ins use the closed-form diagonal derivatives;
    a user functional gets central finite differences in its second argument.
    """
    k0 = float(kernel_eval(kernel, 0.0))
    d2 = kernel_d2_at_zero(kernel)
    if isinstance(G, str):
        if G not in _BUILTIN_G:
            raise ParameterDomainError(f"unknown functional {G!r}")
        _, dy, dyy = _BUILTIN_G[G]
    else:
        step = 1e-5 * math.sqrt(k0)

        def dy(z):
            return (G(z, z + step) - G(z, z - step)) / (2.0 * step)

        def dyy(z):
            return (G(z, z + step) - 2.0 * G(z, z) + G(z, z - step)) / step**2

    integrand = lambda z: dy(z) * z - dyy(z) * k0
    return d2 / (2.0 * k0) * _gauss_moment(integrand, k0)


# ---------------------------------------------------------------------------
# fourth-derivative correction
# ---------------------------------------------------------------------------


def k4_from_moments(delta_hat: float, m4_hat: float, h: float, variant: str = "corrected") -> float:
    """Invert the increment-moment expansion for the fourth kernel derivative.

    ``corrected`` (canonical): (2 / (delta h^2)) * (3 delta^2 - m4), the exact
    algebraic inverse of m4 = 3 delta^2 - (1/2) delta k4 h^2.  ``literal``
    keeps the uncorrected display (1/h^2) * (3 delta - m4/delta), retained only
    for the certification comparison; it is biased by construction.
    """
    if delta_hat <= 0.0:
        raise DegenerateVarianceError("delta_hat must be positive to invert for k4")
    if variant == "corrected":
        return 2.0 / (delta_hat * h * h) * (3.0 * delta_hat**2 - m4_hat)
    if variant == "literal":
        return (3.0 * delta_hat - m4_hat / delta_hat) / (h * h)
    raise ParameterDomainError(f"unknown k4 variant {variant!r}")


def increment_residuals(path: PathSample, drift_family: DriftModel, xi_hat: float | None = None) -> np.ndarray:
    """Residual increments dX_i - mu_{xi}(t_{i-1}) * h."""
    xi = drift_family.xi if xi_hat is None else float(xi_hat)
    mu = drift_eval(drift_family.with_xi(xi), path.times[:-1])
    return path.increments - np.asarray(mu) * path.h


def estimate_k4(
    path: PathSample,
    drift_family: DriftModel,
    xi_hat: float | None = None,
    variant: str = "corrected",
) -> float:
    """Estimate the fourth kernel derivative at 0 from residual increments."""
    resid = increment_residuals(path, drift_family, xi_hat)
    n, h = path.n, path.h
    delta_hat = float(resid @ resid) / (n * h * h)
    m4_hat = float(np.sum(resid**4)) / (n * h**4)
    return k4_from_moments(delta_hat, m4_hat, h, variant=variant)


# ---------------------------------------------------------------------------
# normalized even increment moments
# ---------------------------------------------------------------------------


def _values_and_step(obj) -> tuple[np.ndarray, float]:
    if isinstance(obj, PathSample):
        return obj.values, obj.h
    if isinstance(obj, DetrendedSeries):
        return obj.y, obj.h
    raise ParameterDomainError("expected a PathSample or DetrendedSeries")


def empirical_increment_moment(obj, kappa: int) -> float:
    """(1/(n h^{2 kappa})) * sum (dZ_i)^{2 kappa} for kappa in {1, 2, 3}."""
    if kappa not in (1, 2, 3):
        raise ParameterDomainError("kappa must be 1, 2 or 3")
    values, h = _values_and_step(obj)
    d = np.diff(values)
    n = d.size
    return float(np.sum(d ** (2 * kappa))) / (n * h ** (2 * kappa))


def increment_moment_limit(kappa: int, kernel: KernelModel) -> float:
    """Limit ((2 kappa)! / (2^kappa kappa!)) * (-d2K(0))^kappa."""
    if kappa not in (1, 2, 3):
        raise ParameterDomainError("kappa must be 1, 2 or 3")
    coeff = math.factorial(2 * kappa) / (2**kappa * math.factorial(kappa))
    return coeff * (-kernel_d2_at_zero(kernel)) ** kappa


def newey_west_lrv(values, max_lag: int | None = None) -> float:
    """Bartlett-weighted long-run variance of a stationary series.

    Plug-in approximation used as a labelled diagnostic for the Z-estimator's
    scaled variance; no claim is made that it equals the exact limiting
    variance of the estimating function.
    """
    x = np.asarray(values, dtype=float)
    m = x.size
    if m < 2:
        raise ParameterDomainError("need at least 2 observations")
    if max_lag is None:
        max_lag = min(m - 1, max(1, int(round(m ** (1.0 / 3.0)))))
    x = x - x.mean()
    out = float(x @ x) / m
    for k in range(1, max_lag + 1):
        gamma_k = float(x[:-k] @ x[k:]) / m
        out += 2.0 * (1.0 - k / (max_lag + 1.0)) * gamma_k
    return out
