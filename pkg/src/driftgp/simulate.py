"""Exact sampling of drifted stationary Gaussian paths on equispaced grids.

The sampler draws exactly from the finite-dimensional law N(0, Gram) of the
stationary component on the grid t_i = i*h, i = 0..n.  The primary method is
circulant embedding of the Toeplitz covariance (O(n log n) via FFT); if the
minimal embedding has negative spectral mass beyond tolerance the sampler
falls back to a dense Cholesky factorisation with a tiny diagonal jitter.
Either way the law is exact up to the stated jitter.

A sampler is prepared once per (kernel, scheme) pair and can be reused across
replications; sampling is pure given the seed, so replications may run
concurrently and merge in any order.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .drift import DriftModel, drift_integral_grid
from .errors import ParameterDomainError, SimulationError
from .kernels import KernelModel, gram_matrix, kernel_eval

CIRCULANT = "circulant_embedding"
CHOLESKY = "cholesky"

# Relative tolerance on negative embedding eigenvalues before falling back.
_EMBED_NEG_TOL = 1e-12
# Largest grid the dense Cholesky fallback will accept.
_CHOLESKY_MAX_POINTS = 5001
# Diagonal jitter ladder, relative to K(0).
_JITTER_LADDER = (0.0, 1e-12, 1e-10)


@dataclass(frozen=True)
class SamplingScheme:
    """Observation grid t_i = i*h for i = 0..n, with optional h = n^-a rule."""

    n: int
    h: float
    a: float | None = None

    def __post_init__(self):
        if self.n < 2:
            raise ParameterDomainError(f"need n >= 2 grid steps (got {self.n})")
        if not (self.h > 0.0 and math.isfinite(self.h)):
            raise ParameterDomainError(f"step h must be a finite positive real (got {self.h!r})")

    @classmethod
    def from_rule(cls, n: int, a: float) -> "SamplingScheme":
        if not 0.0 < a < 1.0:
            raise ParameterDomainError(
                f"rule exponent a={a!r} must lie in (0, 1) so that h -> 0 and n*h -> inf"
            )
        return cls(n=n, h=float(n) ** (-a), a=a)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n + 1, dtype=float) * self.h

    @property
    def horizon(self) -> float:
        """Observation horizon T = n*h."""
        return self.n * self.h

    @property
    def regime_ok(self) -> bool:
        """Whether the configured rule keeps h -> 0 and n*h -> inf along n."""
        return self.a is not None and 0.0 < self.a < 1.0

    def to_dict(self) -> dict:
        out = {"n": self.n, "h": self.h}
        if self.a is not None:
            out["a"] = self.a
        return out


@dataclass(frozen=True)
class PathSample:
    """One discretely observed trajectory plus its provenance."""

    times: np.ndarray
    values: np.ndarray
    seed: int
    scheme: SamplingScheme
    method: str
    truth: dict | None = None

    def __post_init__(self):
        if self.values.shape != self.times.shape or self.values.size != self.scheme.n + 1:
            raise ParameterDomainError("path values/times must cover the n+1-point grid")
        if not np.all(np.isfinite(self.values)):
            raise SimulationError("path contains non-finite values")

    @property
    def n(self) -> int:
        return self.scheme.n

    @property
    def h(self) -> float:
        return self.scheme.h

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)


def derive_seed(master_seed: int, *indices: int) -> int:
    """Counter-style child seed: order-independent, parallel-safe."""
    ss = np.random.SeedSequence([int(master_seed), *[int(i) for i in indices]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


class GaussianPathSampler:
    """Prepared exact sampler for the stationary component on one grid."""

    def __init__(self, kernel: KernelModel, scheme: SamplingScheme, method: str = "auto"):
        self.kernel = kernel
        self.scheme = scheme
        m = scheme.n + 1
        cov_row = np.asarray(kernel_eval(kernel, scheme.times), dtype=float)
        self._sqrt_lam = None
        self._chol = None
        if method not in ("auto", CIRCULANT, CHOLESKY):
            raise ParameterDomainError(f"unknown sampling method {method!r}")
        if method in ("auto", CIRCULANT):
            lam = self._embedding_eigenvalues(cov_row)
            lam_max = float(lam.max(initial=0.0))
            if lam.min() >= -_EMBED_NEG_TOL * lam_max:
                self._sqrt_lam = np.sqrt(np.clip(lam, 0.0, None))
                self.method = CIRCULANT
                return
            if method == CIRCULANT:
                raise SimulationError(
                    "circulant embedding has negative spectral mass beyond tolerance "
                    f"(min eigenvalue {lam.min():.3e} vs max {lam_max:.3e})"
                )
        if m > _CHOLESKY_MAX_POINTS:
            raise SimulationError(
                f"grid of {m} points exceeds the dense Cholesky fallback limit "
                f"({_CHOLESKY_MAX_POINTS}); embedding was not usable"
            )
        self._chol = self._cholesky_factor(gram_matrix(kernel, scheme.times))
        self.method = CHOLESKY

    @staticmethod
    def _embedding_eigenvalues(cov_row: np.ndarray) -> np.ndarray:
        # minimal even circulant extension [c_0 .. c_n c_{n-1} .. c_1]
        row = np.concatenate([cov_row, cov_row[-2:0:-1]])
        return np.fft.rfft(row).real

    def _cholesky_factor(self, gram: np.ndarray) -> np.ndarray:
        k0 = float(kernel_eval(self.kernel, 0.0))
        eye = np.eye(gram.shape[0])
        for jitter in _JITTER_LADDER:
            try:
                return np.linalg.cholesky(gram + jitter * k0 * eye)
            except np.linalg.LinAlgError:
                continue
        raise SimulationError(
            "Cholesky factorisation failed even with maximal jitter "
            f"{_JITTER_LADDER[-1]:.1e} * K(0)"
        )

    def sample_values(self, seed: int) -> np.ndarray:
        """Draw the stationary component Z on the grid (deterministic in seed)."""
        rng = np.random.Generator(np.random.PCG64(seed))
        m = self.scheme.n + 1
        if self.method == CIRCULANT:
            lam = self._sqrt_lam  # length n+1 spectrum of the 2n circulant
            big = 2 * self.scheme.n
            g = rng.standard_normal(big)
            coeff = np.empty(m, dtype=complex)
            coeff[0] = lam[0] * g[0]
            coeff[-1] = lam[-1] * g[1]
            interior = lam[1:-1] / math.sqrt(2.0)
            coeff[1:-1] = interior * (g[2::2] + 1j * g[3::2])
            z = np.fft.irfft(coeff, n=big) * math.sqrt(big)
            return z[:m].copy()
        return self._chol @ rng.standard_normal(m)

    def sample(self, seed: int) -> PathSample:
        return PathSample(
            times=self.scheme.times,
            values=self.sample_values(seed),
            seed=int(seed),
            scheme=self.scheme,
            method=self.method,
            truth={"kernel": self.kernel.to_dict(), "drift": None},
        )


def sample_stationary_gp(
    kernel: KernelModel, scheme: SamplingScheme, seed: int, method: str = "auto"
) -> PathSample:
    """One drift-free path Z_{t_0..t_n} with the exact N(0, Gram) law."""
    return GaussianPathSampler(kernel, scheme, method=method).sample(seed)


def simulate_model(
    kernel: KernelModel,
    drift: DriftModel,
    scheme: SamplingScheme,
    seed: int,
    method: str = "auto",
    sampler: GaussianPathSampler | None = None,
) -> PathSample:
    """Sample X_{t_i} = Z_{t_i} + integral_0^{t_i} mu(s) ds.

    Passing a prepared ``sampler`` (same kernel/scheme) skips re-factorisation
    when generating many replications.
    """
    if sampler is None:
        sampler = GaussianPathSampler(kernel, scheme, method=method)
    z = sampler.sample_values(seed)
    values = z + drift_integral_grid(drift, scheme.times)
    return PathSample(
        times=scheme.times,
        values=values,
        seed=int(seed),
        scheme=scheme,
        method=sampler.method,
        truth={"kernel": kernel.to_dict(), "drift": drift.to_dict()},
    )


def empirical_covariance(values, maxlag: int) -> np.ndarray:
    """Biased sample autocovariance of a (possibly de-trended) series.

    c_k = (1/m) * sum_i (x_i - xbar)(x_{i+k} - xbar), k = 0..maxlag.
    """
    x = np.asarray(values, dtype=float)
    m = x.size
    if not 0 <= maxlag < m:
        raise ParameterDomainError(f"need 0 <= maxlag < {m} (got {maxlag})")
    x = x - x.mean()
    return np.array([float(x[: m - k] @ x[k:]) / m for k in range(maxlag + 1)])


# ---------------------------------------------------------------------------
# path CSV + provenance sidecar
# ---------------------------------------------------------------------------


def write_path_csv(path: PathSample, csv_file, sidecar_file=None) -> None:
    """Write columns (t, x) with shortest round-trip decimals, plus sidecar."""
    with open(csv_file, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x"])
        for t, x in zip(path.times, path.values):
            writer.writerow([repr(float(t)), repr(float(x))])
    if sidecar_file is not None:
        meta = {
            "seed": path.seed,
            "scheme": path.scheme.to_dict(),
            "method": path.method,
            "truth": path.truth,
        }
        with open(sidecar_file, "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")


def read_path_csv(csv_file, sidecar_file=None) -> PathSample:
    """Load a path written by :func:`write_path_csv`."""
    times, values = [], []
    with open(csv_file, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["t", "x"]:
            raise ParameterDomainError(f"unexpected path CSV header {header!r}")
        for row in reader:
            times.append(float(row[0]))
            values.append(float(row[1]))
    times = np.asarray(times)
    values = np.asarray(values)
    if times.size < 3:
        raise ParameterDomainError("path CSV must contain at least 3 grid points")
    steps = np.diff(times)
    h = float(steps[0])
    if not np.allclose(steps, h, rtol=1e-9, atol=0.0):
        raise ParameterDomainError("path grid is not equispaced")
    meta = {"seed": -1, "method": "imported", "truth": None}
    scheme_a = None
    if sidecar_file is not None:
        with open(sidecar_file) as fh:
            loaded = json.load(fh)
        meta.update({k: loaded[k] for k in ("seed", "method", "truth") if k in loaded})
        scheme_a = loaded.get("scheme", {}).get("a")
    scheme = SamplingScheme(n=times.size - 1, h=h, a=scheme_a)
    return PathSample(
        times=times,
        values=values,
        seed=int(meta["seed"]),
        scheme=scheme,
        method=str(meta["method"]),
        truth=meta["truth"],
    )
