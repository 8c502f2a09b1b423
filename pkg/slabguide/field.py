"""Field synthesis u = L_0^{-1} f, the Picard iteration and stencil residuals.

``apply_green`` never evaluates G pointwise. With the source on the
cell-centre grid and the observation on the node grid, the double integral
factorises over the spectral nodes of G:

    F_jn(zeta) = sum_xi v_j(xi, lambda_n) f(xi, zeta) dxi
    H_jn(z)    = sum_zeta exp(i beta_n |z - zeta|) F_jn(zeta) dzeta
    u(x, z)    = sum_j sum_n A_jn v_j(x, lambda_n) H_jn(z)

and the z-sum is a discrete convolution whenever both grids share dz.

Usage:
    from slabguide.field import apply_green, helmholtz_residual

    u = apply_green(ev, f_cells, grid, threads=4)
    res = helmholtz_residual(u, slab, f_nodes)
    print(res.masked_max / f_nodes.max_abs())
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.signal import fftconvolve

from slabguide.errors import DivergenceError, DomainError
from slabguide.estimates import WeightSpec, weighted_norm
from slabguide.green import GreenEvaluator, SpectralNodes
from slabguide.grid import (
    ComplexField,
    Grid2D,
    boundary_mask,
    interface_mask,
    laplacian,
    support_mask,
)
from slabguide.modal import PARITIES, boundary_values, mode_values

logger = logging.getLogger("slabguide.field")

# Spectral nodes handled per work item.
CHUNK_SIZE = 512

# Consecutive non-contracting Picard steps tolerated before giving up.
DIVERGENCE_PATIENCE = 3

# Differences below this fraction of the iterate norm count as converged roundoff.
_ROUNDOFF = 1e-13


# ----------------------------------------------------------------------
# apply_green
# ----------------------------------------------------------------------


def _spectral_terms(ev: GreenEvaluator, nodes: SpectralNodes) -> list[tuple[str, np.ndarray, np.ndarray, np.ndarray]]:
    """(parity, lambda, amplitude, beta) per parity, guided modes first."""
    terms = []
    for parity in PARITIES:
        guided = [m for m in ev.modes if m.parity == parity]
        lam = np.concatenate([[m.lam for m in guided], nodes.lam])
        beta = np.concatenate([np.array([m.beta for m in guided], dtype=complex), nodes.beta])
        amp = np.concatenate([
            np.array([m.r / (2j * m.beta) for m in guided], dtype=complex),
            nodes.amplitude[parity],
        ])
        terms.append((parity, lam, amp, beta))
    return terms


def _z_convolution(fhat: np.ndarray, beta: np.ndarray, z_obs: np.ndarray, z_src: np.ndarray, uniform: bool) -> np.ndarray:
    """H[k, n] = sum_l exp(i beta_n |z_k - zeta_l|) fhat[l, n]."""
    if uniform:
        dz = z_obs[1] - z_obs[0]
        offset = z_obs[0] - z_src[0]
        n_src = z_src.size
        shifts = offset + dz * np.arange(-(n_src - 1), z_obs.size)
        kernel = np.exp(1j * np.abs(shifts)[:, None] * beta[None, :])
        full = fftconvolve(fhat, kernel, axes=0)
        return full[n_src - 1:n_src - 1 + z_obs.size]
    out = np.empty((z_obs.size, beta.size), dtype=complex)
    for k, z in enumerate(z_obs):
        out[k] = np.sum(np.exp(1j * np.abs(z - z_src)[:, None] * beta[None, :]) * fhat, axis=0)
    return out


def apply_green(ev: GreenEvaluator, f: ComplexField, out_grid: Grid2D, threads: int = 1) -> ComplexField:
    """u(x, z) = int G(x, z; xi, zeta) f(xi, zeta), midpoint rule on f's grid.

    Args:
        ev: Green's function evaluator.
        f: Source samples, normally on ``out_grid.staggered()``.
        out_grid: Observation grid.
        threads: Worker threads over chunks of spectral nodes.

    Raises:
        DomainError: if an observation row shares its z with a source row.
    """
    box = f.support_box()
    if box is None:
        return ComplexField.zeros(out_grid)
    rows, cols = box
    xi = f.grid.x[rows]
    zeta = f.grid.z[cols]
    values = f.values[rows, cols] * (f.grid.dx * f.grid.dz)
    z_obs = out_grid.z
    gaps = np.abs(z_obs[:, None] - zeta[None, :])
    if float(gaps.min()) <= 1e-12 * max(1.0, float(np.max(np.abs(z_obs)))):
        raise DomainError("observation and source grids share a z coordinate; offset them by half a cell")
    extent_x = float(np.max(np.abs(out_grid.x)) + np.max(np.abs(xi)))
    nodes = ev.plan_for(extent_x, float(gaps.min()), float(gaps.max()))
    uniform = out_grid.same_spacing(f.grid)
    x_obs = out_grid.x

    work = []
    for parity, lam, amp, beta in _spectral_terms(ev, nodes):
        for start in range(0, lam.size, CHUNK_SIZE):
            sl = slice(start, start + CHUNK_SIZE)
            work.append((parity, lam[sl], amp[sl], beta[sl]))
    logger.debug(f"apply_green: {sum(w[1].size for w in work)} spectral nodes in {len(work)} chunks, source box {values.shape}")

    def contribution(item) -> np.ndarray:
        parity, lam, amp, beta = item
        boundary = boundary_values(ev.profile, parity, lam)
        v_src = mode_values(ev.profile, parity, lam, xi, boundary)
        v_obs = mode_values(ev.profile, parity, lam, x_obs, boundary)
        fhat = values.T @ v_src
        h = _z_convolution(fhat, beta, z_obs, zeta, uniform)
        return (v_obs * amp[None, :]) @ h.T

    total = np.zeros(out_grid.shape, dtype=complex)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            # map keeps submission order, so the sum is deterministic.
            for part in pool.map(contribution, work):
                total += part
    else:
        for item in work:
            total += contribution(item)
    return ComplexField(out_grid, total)


def restrict_to_cells(field_: ComplexField) -> ComplexField:
    """Average the four corner nodes of every cell onto the staggered grid."""
    v = field_.values
    cells = 0.25 * (v[:-1, :-1] + v[1:, :-1] + v[:-1, 1:] + v[1:, 1:])
    return ComplexField(field_.grid.staggered(), cells)


# ----------------------------------------------------------------------
# Residuals
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class ResidualMap:
    """Pointwise |Delta_h u + k^2 n^2 u - f| with the cells excluded from reporting."""

    grid: Grid2D
    values: np.ndarray
    mask: np.ndarray

    @property
    def masked_max(self) -> float:
        keep = ~self.mask
        if not np.any(keep):
            raise DomainError("residual mask covers the whole grid")
        return float(np.max(self.values[keep]))

    def masked_values(self) -> np.ndarray:
        return np.where(self.mask, np.nan, self.values)


def helmholtz_residual(
    u: ComplexField,
    profile,
    f: Optional[ComplexField] = None,
    mask_cells: int = 2,
    pmap=None,
    eps: float = 0.0,
) -> ResidualMap:
    """Five-point residual of Delta u + k^2 n(x)^2 u = f.

    With a PerturbationMap ``pmap`` the residual is that of L_eps u = f in
    the straightened coordinates.

    Masked: the outer ring, nodes within ``mask_cells`` cells of x = -h or
    x = h, and nodes within ``mask_cells`` cells of the support of f.
    """
    grid = u.grid
    if f is not None and f.grid != grid:
        raise DomainError("residual needs u and f on the same grid")
    n2 = profile.index(grid.x) ** 2
    res = laplacian(u) + (profile.k**2) * n2[:, None] * u.values
    if pmap is not None and eps != 0.0:
        res = res + eps * pmap.perturbation_term(u, eps).values
    if f is not None:
        res = res - f.values
    mask = boundary_mask(grid) | interface_mask(grid, profile.h, mask_cells)
    if f is not None:
        mask |= support_mask(f, mask_cells)
    values = np.abs(np.where(np.isnan(res), 0.0, res))
    return ResidualMap(grid, values, mask)


# ----------------------------------------------------------------------
# Picard iteration
# ----------------------------------------------------------------------


@dataclass
class PicardTrace:
    differences: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.differences)

    def rows(self) -> list[tuple[int, float, float]]:
        return [
            (i + 1, d, self.ratios[i - 1] if i > 0 else math.nan)
            for i, d in enumerate(self.differences)
        ]


def picard_solve(
    ev: GreenEvaluator,
    pmap,
    f: Optional[ComplexField],
    eps: float,
    out_grid: Grid2D,
    weight: WeightSpec,
    max_iter: int = 30,
    tol: float = 1e-8,
    base: Optional[ComplexField] = None,
    linearized: bool = False,
    threads: int = 1,
) -> tuple[ComplexField, PicardTrace]:
    """Fixed point of u = u0 - eps L_0^{-1} (L~_eps u), L~_eps = (L_eps - L_0) / eps.

    u0 is L_0^{-1} f, or ``base`` when given (a solution of the unperturbed
    problem, e.g. a guided mode). Differences are measured in H^2(mu) and
    the iteration stops once a difference falls below tol times the
    iterate norm.

    Raises:
        DivergenceError: after DIVERGENCE_PATIENCE consecutive ratios >= 1.
    """
    if eps < 0.0:
        raise DomainError(f"eps must be >= 0, got {eps}")
    if base is not None:
        if base.grid != out_grid:
            raise DomainError("base field must live on the observation grid")
        u0 = base
    elif f is not None:
        u0 = apply_green(ev, f, out_grid, threads)
    else:
        raise DomainError("picard_solve needs a source f or a base field")
    trace = PicardTrace()
    if eps == 0.0:
        trace.differences.append(0.0)
        trace.converged = True
        return u0, trace

    pmap.check_invertible(eps)
    u = u0
    strikes = 0
    for it in range(1, max_iter + 1):
        source = restrict_to_cells(pmap.perturbation_term(u, eps, linearized=linearized))
        u_next = u0 - apply_green(ev, source, out_grid, threads).scaled(eps)
        diff = weighted_norm(u_next - u, weight, "H2")
        scale = weighted_norm(u_next, weight, "H2")
        if trace.differences:
            previous = trace.differences[-1]
            ratio = diff / previous if previous > 0.0 else 0.0
            trace.ratios.append(ratio)
            if ratio >= 1.0 and diff > _ROUNDOFF * scale:
                strikes += 1
            else:
                strikes = 0
        trace.differences.append(diff)
        u = u_next
        logger.debug(f"Picard {it}: difference {diff:.3e} (norm {scale:.3e})")
        if diff <= tol * scale:
            trace.converged = True
            break
        if strikes >= DIVERGENCE_PATIENCE:
            raise DivergenceError(
                f"Picard iteration stopped contracting at eps={eps:.4g} after {it} iterations",
                trace=trace,
            )
    if trace.converged:
        logger.info(f"Picard converged in {trace.iterations} iterations at eps={eps:.4g}")
    else:
        logger.warning(f"Picard stopped after {trace.iterations} iterations without reaching tol={tol:.1e}")
    return u, trace
