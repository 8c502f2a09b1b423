"""Gauss–Legendre panel rules and tail-truncation helpers.

The spectral integrals of the Green's function are evaluated after
substitutions that remove the square-root endpoint behaviour, so plain
composite Gauss–Legendre on the substituted variable is enough. Panel counts
follow a Nyquist-style rule on the highest oscillation frequency of the
integrand.
"""

import logging
import math
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import brentq
from scipy.special import exp1

from slabguide.errors import NumericalError

logger = logging.getLogger("slabguide.quadrature")

# Nodes per panel of the composite rule.
GL_ORDER = 16

# Hard ceiling on the number of nodes in one quadrature plan.
MAX_NODES = 400_000


@lru_cache(maxsize=64)
def _rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = leggauss(order)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Return (nodes, weights) of the *order*-point rule on [-1, 1]."""
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    return _rule(order)


def composite_gauss(a: float, b: float, panels: int, order: int = GL_ORDER) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss–Legendre nodes and weights on [a, b].

    Args:
        a, b: Interval end points (a < b).
        panels: Number of equal panels.
        order: Nodes per panel.

    Returns:
        Tuple of 1-D arrays (nodes, weights), nodes strictly inside (a, b).
    """
    if panels < 1:
        raise ValueError(f"panels must be >= 1, got {panels}")
    if panels * order > MAX_NODES:
        raise NumericalError(
            f"quadrature plan on [{a:.4g}, {b:.4g}] needs {panels * order} nodes, "
            f"more than the {MAX_NODES} node budget"
        )
    x, w = gauss_legendre(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def panel_count(length: float, frequency: float, nodes_per_oscillation: int, order: int = GL_ORDER) -> int:
    """Number of panels so that every oscillation gets enough nodes.

    Args:
        length: Length of the integration interval.
        frequency: Largest angular frequency of the integrand on it.
        nodes_per_oscillation: Minimum nodes per period 2*pi/frequency.
        order: Nodes per panel.
    """
    oscillations = length * frequency / (2.0 * math.pi)
    return max(2, math.ceil(oscillations * nodes_per_oscillation / order))


def nodes_per_oscillation(tol: float) -> int:
    """Resolution rule tied to the requested tolerance (at least 8)."""
    return max(8, int(math.ceil(2.0 * math.log10(1.0 / tol))))


def exponential_tail_cutoff(amplitude: float, decay: float, target: float) -> float:
    """Smallest S with amplitude * E1(decay * S) <= target.

    This bounds the tail beyond S of an integrand dominated by
    amplitude * exp(-decay * s) / s.
    """
    if decay <= 0.0:
        raise ValueError(f"decay must be > 0, got {decay}")
    if amplitude <= 0.0:
        return 0.0

    def excess(y):
        return math.log(max(amplitude * exp1(y), 1e-300)) - math.log(target)

    if excess(1e-12) <= 0.0:
        return 0.0
    hi = 1.0
    while excess(hi) > 0.0:
        hi *= 2.0
    y = brentq(excess, 1e-12, hi, xtol=1e-10)
    return y / decay
