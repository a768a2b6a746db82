"""Parametric time-inhomogeneous drift families mu_xi(t) = xi * w(t).

Profiles
--------
``exp_decay``   w(t) = exp(-t); closed-form integral xi * (1 - exp(-t))
``zero``        mu identically 0 (no parameter)
``scaled``      user-supplied shape w, either a callable or a dense (t, w)
                table with linear interpolation plus a declared exponential
                tail rate for mass beyond the table end

All profiles are integrable on [0, inf) with bounded gradient in xi; that
integrability is what the estimators' long-horizon behaviour rests on, so for
tabulated profiles the tail declaration is trusted and recorded rather than
inferred (a finite table cannot certify its own tail).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NumericalError, ParameterDomainError

EXP_DECAY = "exp_decay"
ZERO = "zero"
SCALED = "scaled"

PROFILES = (EXP_DECAY, ZERO, SCALED)

_QUAD_REL_TOL = 1e-10
_QUAD_MAX_DEPTH = 60


@dataclass(frozen=True)
class DriftModel:
    """Drift mu_xi(t) = xi * w(t); immutable, operations are pure."""

    profile: str
    xi: float = 0.0
    w: Callable[[np.ndarray], np.ndarray] | None = None
    table_t: np.ndarray | None = field(default=None, repr=False)
    table_w: np.ndarray | None = field(default=None, repr=False)
    tail_rate: float | None = None

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ParameterDomainError(
                f"unknown drift profile {self.profile!r}; expected one of {PROFILES}"
            )
        if not math.isfinite(self.xi):
            raise ParameterDomainError("drift parameter xi must be finite")
        if self.profile == SCALED:
            if self.w is None and self.table_t is None:
                raise ParameterDomainError(
                    "scaled profile needs a callable w or a (t, w) table"
                )
            if self.table_t is not None:
                t = np.asarray(self.table_t, dtype=float)
                wv = np.asarray(self.table_w, dtype=float)
                if t.ndim != 1 or t.shape != wv.shape or t.size < 2:
                    raise ParameterDomainError("profile table must be two equal 1-d columns")
                if np.any(np.diff(t) <= 0) or t[0] != 0.0:
                    raise ParameterDomainError("profile table times must start at 0 and increase")
                if self.tail_rate is None or self.tail_rate <= 0:
                    raise ParameterDomainError(
                        "tabulated profiles must declare a positive exponential tail_rate"
                    )
                object.__setattr__(self, "table_t", t)
                object.__setattr__(self, "table_w", wv)

    # -- constructors ------------------------------------------------------

    @classmethod
    def exp_decay(cls, xi: float) -> "DriftModel":
        return cls(EXP_DECAY, xi=xi)

    @classmethod
    def zero(cls) -> "DriftModel":
        return cls(ZERO, xi=0.0)

    @classmethod
    def scaled(cls, xi: float, w: Callable) -> "DriftModel":
        return cls(SCALED, xi=xi, w=w)

    @classmethod
    def from_table(cls, xi: float, t, w, tail_rate: float) -> "DriftModel":
        return cls(SCALED, xi=xi, table_t=np.asarray(t, float),
                   table_w=np.asarray(w, float), tail_rate=tail_rate)

    def with_xi(self, xi: float) -> "DriftModel":
        return dataclasses.replace(self, xi=xi)

    @property
    def n_params(self) -> int:
        return 0 if self.profile == ZERO else 1

    def to_dict(self) -> dict:
        out = {"profile": self.profile, "xi": self.xi}
        if self.tail_rate is not None:
            out["tail_rate"] = self.tail_rate
        return out

    # -- shape w and its pieces ---------------------------------------------

    def shape(self, t):
        """w(t) for t >= 0."""
        arr = np.asarray(t, dtype=float)
        if self.profile == EXP_DECAY:
            out = np.exp(-arr)
        elif self.profile == ZERO:
            out = np.zeros_like(arr)
        elif self.table_t is not None:
            out = np.interp(arr, self.table_t, self.table_w,
                            right=float(self.table_w[-1]))
            beyond = arr > self.table_t[-1]
            if np.any(beyond):
                out = np.where(
                    beyond,
                    self.table_w[-1] * np.exp(-self.tail_rate * (arr - self.table_t[-1])),
                    out,
                )
        else:
            out = np.asarray(self.w(arr), dtype=float)
        return float(out) if out.ndim == 0 else out


def drift_eval(drift: DriftModel, t):
    """mu_xi(t) = xi * w(t)."""
    out = np.asarray(drift.shape(t), dtype=float) * drift.xi
    return float(out) if out.ndim == 0 else out


def drift_grad_xi(drift: DriftModel, t):
    """Gradient of mu_xi(t) in xi, i.e. w(t) (0 for the zero profile)."""
    return drift.shape(t)


def _adaptive_simpson(f, a, b, rel_tol):
    def simpson(lo, hi, flo, fmid, fhi):
        return (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi)

    def recurse(lo, hi, flo, fmid, fhi, whole, depth):
        mid = 0.5 * (lo + hi)
        lmid = 0.5 * (lo + mid)
        rmid = 0.5 * (mid + hi)
        fl = f(lmid)
        fr = f(rmid)
        left = simpson(lo, mid, flo, fl, fmid)
        right = simpson(mid, hi, fmid, fr, fhi)
        err = left + right - whole
        if abs(err) <= 15.0 * rel_tol * (abs(left + right) + 1e-300):
            return left + right + err / 15.0
        if depth >= _QUAD_MAX_DEPTH:
            raise NumericalError(
                f"drift quadrature failed to converge on [{lo}, {hi}]: "
                f"residual {err!r} after depth {depth}"
            )
        return recurse(lo, mid, flo, fl, fmid, left, depth + 1) + recurse(
            mid, hi, fmid, fr, fhi, right, depth + 1
        )

    if a == b:
        return 0.0
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = simpson(a, b, fa, fm, fb)
    return recurse(a, b, fa, fm, fb, whole, 0)


def drift_integral(drift: DriftModel, t: float) -> float:
    """Integral of mu_xi over [0, t]; closed form where available."""
    if t < 0:
        raise ParameterDomainError("drift integral requires t >= 0")
    if drift.profile == ZERO or drift.xi == 0.0:
        return 0.0
    if drift.profile == EXP_DECAY:
        return drift.xi * (1.0 - math.exp(-t)) if math.isfinite(t) else drift.xi
    if drift.table_t is not None:
        return drift.xi * _table_cumulative(drift, t)
    return drift.xi * _adaptive_simpson(lambda s: float(drift.shape(s)), 0.0, t, _QUAD_REL_TOL)


def _table_cumulative(drift: DriftModel, t: float) -> float:
    # trapezoid is exact for the piecewise-linear interpolant
    tt, ww = drift.table_t, drift.table_w
    if t <= tt[-1]:
        grid = tt[tt < t]
        grid = np.append(grid, t)
        vals = drift.shape(grid)
        return float(np.trapezoid(vals, grid))
    body = float(np.trapezoid(ww, tt))
    lam = drift.tail_rate
    tail = ww[-1] / lam * (1.0 - math.exp(-lam * (t - tt[-1])))
    return body + tail


def drift_integral_grid(drift: DriftModel, times) -> np.ndarray:
    """Integral of mu_xi from 0 to each grid time (vectorised)."""
    times = np.asarray(times, dtype=float)
    if drift.profile == ZERO or drift.xi == 0.0:
        return np.zeros_like(times)
    if drift.profile == EXP_DECAY:
        return drift.xi * (1.0 - np.exp(-times))
    return np.array([drift_integral(drift, float(t)) for t in times])


def dri_tail_mass(drift: DriftModel, T: float) -> float:
    """Tail mass integral of |mu_xi| over [T, inf)."""
    if T < 0:
        raise ParameterDomainError("tail mass requires T >= 0")
    if drift.profile == ZERO or drift.xi == 0.0:
        return 0.0
    if drift.profile == EXP_DECAY:
        return abs(drift.xi) * math.exp(-T)
    if drift.table_t is not None:
        tt, ww = drift.table_t, drift.table_w
        lam = drift.tail_rate
        if T >= tt[-1]:
            return abs(drift.xi) * abs(ww[-1]) / lam * math.exp(-lam * (T - tt[-1]))
        grid = np.concatenate([[T], tt[tt > T]])
        body = float(np.trapezoid(np.abs(drift.shape(grid)), grid))
        return abs(drift.xi) * (body + abs(ww[-1]) / lam)
    # callable shape: integrate |w| out to where it is negligible
    total = 0.0
    lo = T
    span = max(1.0, T)
    while True:
        hi = lo + span
        piece = _adaptive_simpson(lambda s: abs(float(drift.shape(s))), lo, hi, 1e-9)
        total += piece
        if piece < 1e-14 * (1.0 + total):
            break
        lo = hi
        span *= 2.0
        if lo > T + 1e9:
            raise NumericalError("tail mass integral did not converge; shape may not be integrable")
    return abs(drift.xi) * total
