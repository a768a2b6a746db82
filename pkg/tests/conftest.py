"""Shared numerical oracles for the test suite.

The finite-difference helpers are deliberately independent of the library's
analytic derivative code: they only call ``kernel_eval`` and extrapolate.
"""

from __future__ import annotations

import numpy as np
import pytest

from driftgp.kernels import kernel_eval


def richardson(values, factor):
    """Extrapolate a sequence of estimates with error ~ c * factor^-level."""
    tab = [list(values)]
    for m in range(1, len(values)):
        prev = tab[-1]
        fac = float(factor) ** m
        tab.append([(fac * prev[i + 1] - prev[i]) / (fac - 1.0) for i in range(len(prev) - 1)])
    return tab[-1][0]


def fd_d2_at_zero(kernel, h0=1e-2, levels=6):
    """Second derivative at 0 from 2*(K(h) - K(0))/h^2 with Richardson.

    Uses the generic order-h error model so families with a cubic origin term
    (the smoothed exponential kernel) are handled as well.
    """
    k0 = kernel_eval(kernel, 0.0)
    vals = [2.0 * (kernel_eval(kernel, h0 / 2**i) - k0) / (h0 / 2**i) ** 2 for i in range(levels)]
    return richardson(vals, 2.0)


def fd_d4_at_zero(kernel, h0=0.08, levels=6):
    """Fourth derivative at 0 from the symmetric five-point stencil."""
    k0 = kernel_eval(kernel, 0.0)

    def est(h):
        return (2.0 * kernel_eval(kernel, 2 * h) - 8.0 * kernel_eval(kernel, h) + 6.0 * k0) / h**4

    vals = [est(h0 / 2**i) for i in range(levels)]
    return richardson(vals, 4.0)


@pytest.fixture(scope="session")
def rng():
    return np.random.Generator(np.random.PCG64(987654321))
