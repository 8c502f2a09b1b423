"""Green's function of the open slab, G = G^g + G^r + G^e.

Every part is a spectral sum over mode functions,

    G = sum_j sum_n A_jn v_j(x, lambda_n) v_j(xi, lambda_n) exp(i beta_n |z - zeta|),

with beta_n = sqrt(k^2 n*^2 - lambda_n) taken with Im >= 0. Guided nodes
are the eigenvalues (A = r / (2 i beta)); the radiation and evanescent
integrals become Gauss–Legendre nodes after the substitutions
lambda = d^2 + tau^2, lambda = k^2 n*^2 - s^2 and lambda = k^2 n*^2 + s^2,
which remove every square-root endpoint.

Usage:
    from slabguide.green import FieldPoint, build_evaluator, eval_full

    ev = build_evaluator(slab, tol=1e-6)
    g = eval_full(ev, FieldPoint(0.1, 0.0), FieldPoint(-0.3, 0.4))
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import hankel1

from slabguide.errors import DomainError, NumericalError
from slabguide.modal import (
    PARITIES,
    GuidedMode,
    WaveguideProfile,
    boundary_values,
    core_values,
    find_guided_modes,
    mode_values,
    sigma_from_boundary,
)
from slabguide.quadrature import (
    composite_gauss,
    exponential_tail_cutoff,
    nodes_per_oscillation,
    panel_count,
)

logger = logging.getLogger("slabguide.green")

# Refinement levels tried by the pointwise evaluators (panels double per level).
_MAX_LEVEL = 6

# Results below this magnitude are compared in absolute terms.
_ABS_FLOOR = 1e-3

# Default minimum |z - zeta| of the direct evanescent path, in units of 1/(k n*).
_MIN_SEPARATION_FACTOR = 0.05


@dataclass(frozen=True)
class FieldPoint:
    x: float
    z: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.z)):
            raise DomainError(f"field point must be finite, got ({self.x}, {self.z})")


@dataclass(frozen=True)
class SpectralNodes:
    """Quadrature nodes of a continuum part with their boundary data cached.

    ``amplitude[j]`` already contains the quadrature weight, the Jacobian of
    the substitution, sigma_j and the 1/(2 pi * 2 i beta) factor.
    """

    lam: np.ndarray
    beta: np.ndarray
    amplitude: dict
    boundary: dict

    @property
    def size(self) -> int:
        return int(self.lam.size)

    def values(self, profile: WaveguideProfile, parity, x) -> np.ndarray:
        return mode_values(profile, parity, self.lam, x, self.boundary[parity])


def spectral_nodes(profile: WaveguideProfile, lam: np.ndarray, dlam: np.ndarray) -> SpectralNodes:
    """Attach sigma_j, beta and amplitudes to continuum nodes lam with weights dlam."""
    beta = np.sqrt((profile.kn2 - lam).astype(complex))
    amplitude, boundary = {}, {}
    for parity in PARITIES:
        phi_h, dphi_h = boundary_values(profile, parity, lam)
        boundary[parity] = (phi_h, dphi_h)
        sigma = sigma_from_boundary(profile, lam, phi_h, dphi_h)
        amplitude[parity] = dlam * sigma / (2.0 * math.pi) / (2j * beta)
    return SpectralNodes(lam=lam, beta=beta, amplitude=amplitude, boundary=boundary)


def merge_nodes(*parts: SpectralNodes) -> SpectralNodes:
    return SpectralNodes(
        lam=np.concatenate([p.lam for p in parts]),
        beta=np.concatenate([p.beta for p in parts]),
        amplitude={j: np.concatenate([p.amplitude[j] for p in parts]) for j in PARITIES},
        boundary={
            j: tuple(np.concatenate([p.boundary[j][i] for p in parts]) for i in range(2))
            for j in PARITIES
        },
    )


# ----------------------------------------------------------------------
# Quadrature plans
# ----------------------------------------------------------------------


def radiation_nodes(profile: WaveguideProfile, extent_x: float, t_max: float, tol: float, level: int = 0) -> SpectralNodes:
    """Nodes for lambda in (d^2, k^2 n*^2), split at the midpoint.

    Lower panel: lambda = d^2 + tau^2. Upper panel: lambda = k^2 n*^2 - s^2.
    """
    d2, kn2 = profile.d2, profile.kn2
    half = math.sqrt(0.5 * (kn2 - d2))
    freq = extent_x + t_max + 2.0 * profile.h
    panels = panel_count(half, freq, nodes_per_oscillation(tol)) * 2**level
    tau, w_tau = composite_gauss(0.0, half, panels)
    s, w_s = composite_gauss(0.0, half, panels)
    lam = np.concatenate([d2 + tau**2, kn2 - s**2])
    dlam = np.concatenate([2.0 * tau * w_tau, 2.0 * s * w_s])
    return spectral_nodes(profile, lam, dlam)


def evanescent_nodes(profile: WaveguideProfile, extent_x: float, s_max: float, tol: float, level: int = 0) -> SpectralNodes:
    """Nodes for lambda = k^2 n*^2 + s^2, s in (0, s_max)."""
    freq = extent_x + 2.0 * profile.h + 1.0 / max(s_max, 1e-300)
    panels = panel_count(s_max, freq, nodes_per_oscillation(tol)) * 2**level
    s, w = composite_gauss(0.0, s_max, panels)
    return spectral_nodes(profile, profile.kn2 + s**2, 2.0 * s * w)


def _tail_constant(profile: WaveguideProfile) -> float:
    """A with |sum_j v_j(x) v_j(xi) sigma_j| / (2 pi) <= A / s on the evanescent ray.

    Uses |v_j|^2 <= max(max_core phi_j^2, phi_j(h)^2 + phi_j'(h)^2 / Q^2)
    and samples s * sigma_j, which tends to 1 by the large-lambda asymptotics.
    """
    scale = profile.k * profile.n_star
    s = np.geomspace(1e-3 * scale, 200.0 * scale, 240)
    lam = profile.kn2 + s**2
    xs = np.linspace(0.0, profile.h, 65)
    total = np.zeros_like(s)
    for parity in PARITIES:
        phi_h, dphi_h = boundary_values(profile, parity, lam)
        sigma = sigma_from_boundary(profile, lam, phi_h, dphi_h)
        core_max = np.max(core_values(profile, parity, lam, xs)[0] ** 2, axis=0)
        clad = phi_h**2 + dphi_h**2 / (lam - profile.d2)
        total += s * sigma * np.maximum(core_max, clad)
    return 1.25 * float(np.max(total)) / (2.0 * math.pi)


@dataclass(frozen=True)
class GreenEvaluator:
    """Precomputed modal data and quadrature plans for one profile."""

    profile: WaveguideProfile
    modes: tuple
    tol: float
    min_separation: float
    tail_constant: float
    lambda_max: float
    extent_x: float
    extent_z: float
    quad_plan: SpectralNodes = field(repr=False)

    def evanescent_cutoff(self, t: float) -> float:
        """s_max with the certified evanescent tail below tol/4 at separation t."""
        return exponential_tail_cutoff(self.tail_constant, t, 0.25 * self.tol)

    def plan_for(self, extent_x: float, t_min: float, t_max: float) -> SpectralNodes:
        """Continuum nodes valid for |x| + |xi| <= extent_x and t_min <= |z - zeta| <= t_max."""
        if extent_x <= self.extent_x and t_max <= self.extent_z and t_min >= self.min_separation:
            return self.quad_plan
        if t_min <= 0.0:
            raise DomainError("plan needs a positive minimum axial separation")
        s_max = self.evanescent_cutoff(t_min)
        logger.debug(f"Building plan: extent_x={extent_x:.3g} t=[{t_min:.3g}, {t_max:.3g}] s_max={s_max:.4g}")
        return merge_nodes(
            radiation_nodes(self.profile, extent_x, t_max, self.tol),
            evanescent_nodes(self.profile, extent_x, s_max, self.tol),
        )


def build_evaluator(
    profile: WaveguideProfile,
    tol: float = 1e-6,
    min_separation: Optional[float] = None,
    extent: Optional[tuple[float, float]] = None,
) -> GreenEvaluator:
    """Find the guided modes and precompute the default quadrature plan.

    Args:
        profile: Waveguide profile.
        tol: Target accuracy, in (1e-12, 1e-2).
        min_separation: Smallest |z - zeta| handled by the direct evanescent
            quadrature; closer pairs use the free-space reference subtraction.
        extent: (max |x| + |xi|, max |z - zeta|) covered by ``quad_plan``.
    """
    if not (1e-12 < tol < 1e-2):
        raise DomainError(f"tol must lie in (1e-12, 1e-2), got {tol}")
    scale = profile.k * profile.n_star
    if min_separation is None:
        min_separation = _MIN_SEPARATION_FACTOR / scale
    if min_separation <= 0.0:
        raise DomainError("min_separation must be > 0")
    if extent is None:
        extent = (2.0 * (profile.h + 2.0 * math.pi / scale), 4.0 * math.pi / scale)
    modes = tuple(find_guided_modes(profile))
    tail = _tail_constant(profile)
    s_max = exponential_tail_cutoff(tail, min_separation, 0.25 * tol)
    plan = merge_nodes(
        radiation_nodes(profile, extent[0], extent[1], tol),
        evanescent_nodes(profile, extent[0], s_max, tol),
    )
    logger.info(
        f"Evaluator ready: {len(modes)} guided modes, {plan.size} continuum nodes, "
        f"lambda_max={profile.kn2 + s_max**2:.4g}"
    )
    return GreenEvaluator(
        profile=profile,
        modes=modes,
        tol=tol,
        min_separation=min_separation,
        tail_constant=tail,
        lambda_max=profile.kn2 + s_max**2,
        extent_x=extent[0],
        extent_z=extent[1],
        quad_plan=plan,
    )


# ----------------------------------------------------------------------
# Pointwise evaluation
# ----------------------------------------------------------------------


def free_space_kernel(wavenumber: float, r) -> np.ndarray:
    """Outgoing 2-D kernel -(i/4) H0^(1)(K r), solution of Delta G + K^2 G = delta."""
    return -0.25j * hankel1(0, wavenumber * np.asarray(r, dtype=float))


def _node_sum(profile: WaveguideProfile, nodes: SpectralNodes, x: float, xi: float, t: float) -> complex:
    phase = np.exp(1j * nodes.beta * t)
    total = 0j
    for parity in PARITIES:
        v = nodes.values(profile, parity, [x, xi])
        total += complex(np.sum(nodes.amplitude[parity] * v[0] * v[1] * phase))
    return total


def _refine(make_nodes: Callable[[int], SpectralNodes], integrand: Callable[[SpectralNodes], complex], tol: float, what: str) -> complex:
    previous = integrand(make_nodes(0))
    error = math.inf
    for level in range(1, _MAX_LEVEL + 1):
        current = integrand(make_nodes(level))
        error = abs(current - previous)
        if error <= tol * max(abs(current), _ABS_FLOOR):
            return current
        previous = current
    raise NumericalError(f"{what} quadrature did not converge to tol={tol:.1e}", estimate=error)


def eval_guided(ev: GreenEvaluator, p: FieldPoint, q: FieldPoint) -> complex:
    """Guided part: sum_m r_m v(x) v(xi) exp(i beta_m |z - zeta|) / (2 i beta_m)."""
    if not ev.modes:
        return 0j
    t = abs(p.z - q.z)
    total = 0j
    for mode in ev.modes:
        v = mode_values(ev.profile, mode.parity, mode.lam, [p.x, q.x])[:, 0]
        total += mode.r * v[0] * v[1] * np.exp(1j * mode.beta * t) / (2j * mode.beta)
    return complex(total)


def eval_radiation(ev: GreenEvaluator, p: FieldPoint, q: FieldPoint) -> complex:
    """Radiation part, integral over (d^2, k^2 n*^2)."""
    extent_x = abs(p.x) + abs(q.x)
    t = abs(p.z - q.z)
    return _refine(
        lambda level: radiation_nodes(ev.profile, extent_x, t, ev.tol, level),
        lambda nodes: _node_sum(ev.profile, nodes, p.x, q.x, t),
        ev.tol,
        "radiation",
    )


def _reference_radiation(wavenumber: float, a: float, t: float) -> complex:
    """Radiation part of the uniform medium of index n*: (1/2 pi i) int_0^{pi/2} e^{i t K cos} cos(a K sin)."""
    freq = wavenumber * (t + abs(a)) + 1.0
    panels = 2 * panel_count(0.5 * math.pi, freq, 16)
    theta, w = composite_gauss(0.0, 0.5 * math.pi, panels)
    vals = np.exp(1j * t * wavenumber * np.cos(theta)) * np.cos(a * wavenumber * np.sin(theta))
    return complex(np.sum(w * vals) / (2j * math.pi))


def _reference_evanescent(wavenumber: float, a: float, t: float) -> complex:
    """Evanescent part of the uniform medium of index n*, from the closed-form total."""
    total = free_space_kernel(wavenumber, math.hypot(a, t))
    return complex(total) - _reference_radiation(wavenumber, a, t)


def eval_evanescent(ev: GreenEvaluator, p: FieldPoint, q: FieldPoint) -> float:
    """Evanescent part, integral over (k^2 n*^2, infinity).

    Pairs closer than ``ev.min_separation`` in z subtract the same integral
    for the uniform medium of index n* and add that back in closed form.
    """
    if p == q:
        raise DomainError("evanescent part is singular at coincident points")
    profile = ev.profile
    extent_x = abs(p.x) + abs(q.x)
    t = abs(p.z - q.z)
    if t >= ev.min_separation:
        s_max = ev.evanescent_cutoff(t)
        value = _refine(
            lambda level: evanescent_nodes(profile, extent_x, s_max, ev.tol, level),
            lambda nodes: _node_sum(profile, nodes, p.x, q.x, t),
            ev.tol,
            "evanescent",
        )
        return float(value.real)

    wavenumber = profile.k * profile.n_star
    a = p.x - q.x
    s_max = ev.evanescent_cutoff(ev.min_separation)
    logger.warning(
        f"Separation {t:.3g} below {ev.min_separation:.3g}: reference-subtracted evanescent sum, "
        f"tail beyond s={s_max:.4g} estimated heuristically"
    )

    def difference(nodes: SpectralNodes) -> complex:
        sqrt_lam = np.sqrt(nodes.lam)
        phi_h, dphi_h = nodes.boundary["s"]
        # amplitude / sigma is the bare node weight; the uniform medium has
        # sigma = 1/sqrt(lambda) and sum_j v_j(x) v_j(xi) = cos(sqrt(lambda) a).
        weight = np.real(nodes.amplitude["s"]) / sigma_from_boundary(profile, nodes.lam, phi_h, dphi_h)
        reference = weight * np.cos(sqrt_lam * a) / sqrt_lam * np.real(np.exp(1j * nodes.beta * t))
        return _node_sum(profile, nodes, p.x, q.x, t) - complex(np.sum(reference))

    value = _refine(
        lambda level: evanescent_nodes(profile, extent_x, s_max, ev.tol, level),
        difference,
        ev.tol,
        "evanescent (reference-subtracted)",
    )
    return float((value + _reference_evanescent(wavenumber, a, t)).real)


def eval_full(ev: GreenEvaluator, p: FieldPoint, q: FieldPoint) -> complex:
    """G(x, z; xi, zeta) = G^g + G^r + G^e."""
    if p == q:
        raise DomainError("Green's function is singular at coincident points")
    return eval_guided(ev, p, q) + eval_radiation(ev, p, q) + eval_evanescent(ev, p, q)


def eval_parts(ev: GreenEvaluator, p: FieldPoint, q: FieldPoint) -> dict:
    """All three parts and their sum, keyed guided/radiation/evanescent/full."""
    parts = {
        "guided": eval_guided(ev, p, q),
        "radiation": eval_radiation(ev, p, q),
        "evanescent": complex(eval_evanescent(ev, p, q)),
    }
    parts["full"] = parts["guided"] + parts["radiation"] + parts["evanescent"]
    return parts
