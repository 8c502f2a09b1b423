"""Transverse eigenvalue problem of the open slab.

Solves v'' + [lambda - q(x)] v = 0 with q(x) = k^2 (n*^2 - n(x)^2), builds the
symmetric and antisymmetric core solutions phi_s, phi_a, finds the guided
modes from the dispersion relation and provides the mode functions v_j and
the spectral density sigma_j of the continuous spectrum.

Usage:
    from slabguide.modal import WaveguideProfile, find_guided_modes

    slab = WaveguideProfile(k=5.0, h=0.2, n_co=2.0, n_cl=1.0)
    for mode in find_guided_modes(slab):
        print(mode.parity, mode.lam, mode.r)
"""

import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Literal, Union

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq

from slabguide.errors import DomainError, NumericalError
from slabguide.quadrature import gauss_legendre

logger = logging.getLogger("slabguide.modal")

Parity = Literal["s", "a"]
PARITIES: tuple[Parity, Parity] = ("s", "a")

IndexFunction = Callable[[np.ndarray], np.ndarray]

# Uniform points of the sign-change scan over (0, d^2).
SCAN_POINTS = 10_000

# Root acceptance: |dispersion| <= _ROOT_RTOL * (1 + lambda).
_ROOT_RTOL = 1e-12

# Base RK4 step count on [0, h]; doubled while the local phase per step is too large.
_ODE_BASE_STEPS = 512
_ODE_MAX_STEPS = 2**20
_ODE_MAX_PHASE_STEP = 0.05

# Samples used to find sup n_co and to check evenness of a graded core.
_INDEX_SAMPLES = 2049

# Gauss–Legendre order for integrals over the half core [0, h].
_CORE_QUAD_ORDER = 96


def parabolic_core(n_max: float, n_edge: float, h: float) -> IndexFunction:
    """Graded core with n(x)^2 = n_max^2 - (n_max^2 - n_edge^2)(x/h)^2."""
    if n_max <= 0 or n_edge <= 0:
        raise DomainError("parabolic core indices must be > 0")
    drop = n_max**2 - n_edge**2

    def index(x):
        x = np.asarray(x, dtype=float)
        return np.sqrt(n_max**2 - drop * (x / h) ** 2)

    return index


@dataclass(frozen=True)
class WaveguideProfile:
    """Geometry and index data of a symmetric slab.

    ``n_co`` is either a number (step index) or an even function of x on
    [-h, h] (graded core, solved by RK4).
    """

    k: float
    h: float
    n_co: Union[float, IndexFunction]
    n_cl: float
    label: str = field(default="", compare=False)

    def __post_init__(self):
        if not (self.k > 0 and math.isfinite(self.k)):
            raise DomainError(f"k must be a positive finite number, got {self.k}")
        if not (self.h > 0 and math.isfinite(self.h)):
            raise DomainError(f"h must be a positive finite number, got {self.h}")
        if not (self.n_cl > 0 and math.isfinite(self.n_cl)):
            raise DomainError(f"n_cl must be a positive finite number, got {self.n_cl}")
        if self.is_step:
            if not (self.n_co > 0 and math.isfinite(self.n_co)):
                raise DomainError(f"n_co must be a positive finite number, got {self.n_co}")
            return
        xs = np.linspace(0.0, self.h, _INDEX_SAMPLES)
        right = np.asarray(self.n_co(xs), dtype=float)
        left = np.asarray(self.n_co(-xs), dtype=float)
        if not np.all(np.isfinite(right)) or np.any(right <= 0):
            raise DomainError("core index must be positive and finite on [-h, h]")
        if np.max(np.abs(right - left)) > 1e-12 * np.max(right):
            raise DomainError("core index must be even in x")

    # ------------------------------------------------------------------
    # Derived constants
    # ------------------------------------------------------------------

    @property
    def is_step(self) -> bool:
        return not callable(self.n_co)

    @cached_property
    def n_star(self) -> float:
        if self.is_step:
            return max(float(self.n_co), self.n_cl)
        xs = np.linspace(0.0, self.h, _INDEX_SAMPLES)
        return max(float(np.max(self.n_co(xs))), self.n_cl)

    @property
    def kn2(self) -> float:
        """k^2 n*^2, the start of the evanescent spectrum."""
        return (self.k * self.n_star) ** 2

    @property
    def d2(self) -> float:
        """k^2 (n*^2 - n_cl^2), the end of the guided spectrum."""
        return self.k**2 * (self.n_star**2 - self.n_cl**2)

    @property
    def q_step(self) -> float:
        """Constant core value of q for a step-index core."""
        return self.k**2 * (self.n_star**2 - float(self.n_co) ** 2)

    def core_index(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.is_step:
            return np.full_like(x, float(self.n_co))
        return np.asarray(self.n_co(x), dtype=float)

    def index(self, x) -> np.ndarray:
        """Refractive index n(x) on the whole line (core for |x| <= h)."""
        x = np.asarray(x, dtype=float)
        inside = np.abs(x) <= self.h
        core = self.core_index(np.where(inside, x, 0.0))
        return np.where(inside, core, self.n_cl)

    def q(self, x) -> np.ndarray:
        return self.k**2 * (self.n_star**2 - self.index(x) ** 2)

    def with_half_width(self, h: float) -> "WaveguideProfile":
        return replace(self, h=h)


# ----------------------------------------------------------------------
# Core solutions
# ----------------------------------------------------------------------


def _check_lambda(lam) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    if np.any(~np.isfinite(lam)) or np.any(lam <= 0.0):
        raise DomainError("lambda must be > 0 (antisymmetric normalisation uses sqrt(lambda))")
    return lam


def _fundamental(m, x):
    """C and S = solutions of y'' = -m y with C(0)=1, C'(0)=0, S(0)=0, S'(0)=1."""
    m, x = np.broadcast_arrays(np.asarray(m, dtype=float), np.asarray(x, dtype=float))
    r = np.sqrt(np.abs(m))
    rx = r * x
    osc = m >= 0.0
    cos_part = np.cos(np.where(osc, rx, 0.0))
    cosh_part = np.cosh(np.where(osc, 0.0, rx))
    c = np.where(osc, cos_part, cosh_part)
    ev = np.where(osc, 1.0, rx)
    sinhc = np.where(ev == 0.0, 1.0, np.sinh(ev) / np.where(ev == 0.0, 1.0, ev))
    s = x * np.where(osc, np.sinc(rx / np.pi), sinhc)
    return c, s


def _closed_form(profile: WaveguideProfile, parity: Parity, lam, x):
    """phi_j and phi_j' for a step-index core, broadcasting lam against x."""
    lam = np.asarray(lam, dtype=float)
    m = lam - profile.q_step
    c, s = _fundamental(m, x)
    if parity == "s":
        return c, -m * s
    root = np.sqrt(lam)
    return root * s, root * c


def _ode_steps(profile: WaveguideProfile, lam_max: float) -> int:
    xs = np.linspace(0.0, profile.h, 257)
    q_max = float(np.max(profile.q(xs)))
    freq = math.sqrt(max(abs(lam_max), q_max, 1e-300))
    steps = _ODE_BASE_STEPS
    while freq * profile.h / steps > _ODE_MAX_PHASE_STEP:
        steps *= 2
        if steps > _ODE_MAX_STEPS:
            raise NumericalError(
                f"ODE step-size underflow: lambda={lam_max:.4g} needs more than {_ODE_MAX_STEPS} steps"
            )
    return steps


def _rk4(profile: WaveguideProfile, parity: Parity, lam: np.ndarray, steps: int, keep: bool = False):
    """Classical RK4 for y'' = (q - lambda) y on [0, h], vectorised over lambda."""
    dx = profile.h / steps
    q_half = profile.q(np.linspace(0.0, profile.h, 2 * steps + 1))
    if parity == "s":
        y = np.ones_like(lam)
        dy = np.zeros_like(lam)
    else:
        y = np.zeros_like(lam)
        dy = np.sqrt(lam)
    ys, dys = ([y.copy()], [dy.copy()]) if keep else (None, None)
    for i in range(steps):
        ga = q_half[2 * i] - lam
        gm = q_half[2 * i + 1] - lam
        gb = q_half[2 * i + 2] - lam
        k1y, k1d = dy, ga * y
        k2y, k2d = dy + 0.5 * dx * k1d, gm * (y + 0.5 * dx * k1y)
        k3y, k3d = dy + 0.5 * dx * k2d, gm * (y + 0.5 * dx * k2y)
        k4y, k4d = dy + dx * k3d, gb * (y + dx * k3y)
        y = y + dx / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        dy = dy + dx / 6.0 * (k1d + 2.0 * k2d + 2.0 * k3d + k4d)
        if keep:
            ys.append(y)
            dys.append(dy)
    if keep:
        return np.array(ys), np.array(dys)
    return y, dy


def boundary_values(profile: WaveguideProfile, parity: Parity, lam) -> tuple[np.ndarray, np.ndarray]:
    """phi_j(h, lambda) and phi_j'(h, lambda), vectorised over lambda."""
    lam = _check_lambda(lam)
    if profile.is_step:
        return _closed_form(profile, parity, lam, profile.h)
    flat = np.atleast_1d(lam).ravel()
    steps = _ode_steps(profile, float(np.max(flat)))
    y, dy = _rk4(profile, parity, flat, steps)
    y_half, _ = _rk4(profile, parity, flat, steps // 2)
    richardson = np.max(np.abs(y - y_half) / (1.0 + np.abs(y))) / 15.0
    if richardson > 1e-9:
        logger.warning(f"RK4 Richardson estimate {richardson:.2e} at {steps} steps (lambda up to {float(np.max(flat)):.4g})")
    return y.reshape(lam.shape), dy.reshape(lam.shape)


def core_values(profile: WaveguideProfile, parity: Parity, lam, x) -> tuple[np.ndarray, np.ndarray]:
    """phi_j(x, lambda) and phi_j'(x, lambda) for x in [-h, h].

    Returns arrays of shape (len(x), len(lam)).
    """
    lam = np.atleast_1d(_check_lambda(lam))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(np.abs(x) > profile.h * (1.0 + 1e-12)):
        raise DomainError("core solutions are only defined on [-h, h]")
    if profile.is_step:
        return _closed_form(profile, parity, lam[None, :], x[:, None])
    steps = _ode_steps(profile, float(np.max(lam)))
    ys, dys = _rk4(profile, parity, lam, steps, keep=True)
    nodes = np.linspace(0.0, profile.h, steps + 1)
    phi_spline = CubicHermiteSpline(nodes, ys, dys, axis=0)
    # phi'' = (q - lambda) phi gives the derivative data for phi'.
    ddys = (profile.q(nodes)[:, None] - lam[None, :]) * ys
    dphi_spline = CubicHermiteSpline(nodes, dys, ddys, axis=0)
    ax = np.minimum(np.abs(x), profile.h)
    phi = phi_spline(ax)
    dphi = dphi_spline(ax)
    sign = np.sign(x)[:, None]
    if parity == "s":
        return phi, np.where(sign == 0.0, dphi, sign * dphi)
    return np.where(sign == 0.0, 0.0, sign * phi), dphi


@dataclass(frozen=True)
class TransverseSolution:
    """Core solution phi_j(., lambda) with its cached boundary data."""

    profile: WaveguideProfile
    parity: Parity
    lam: float
    phi_h: float
    dphi_h: float

    def phi(self, x) -> np.ndarray:
        return core_values(self.profile, self.parity, self.lam, x)[0][:, 0]

    def dphi(self, x) -> np.ndarray:
        return core_values(self.profile, self.parity, self.lam, x)[1][:, 0]


def solve_transverse(profile: WaveguideProfile, parity: Parity, lam: float) -> TransverseSolution:
    """Solve the core problem for one lambda.

    Closed form when n_co is constant, RK4 on [0, h] otherwise.
    """
    if parity not in PARITIES:
        raise DomainError(f"parity must be one of {PARITIES}, got {parity!r}")
    phi_h, dphi_h = boundary_values(profile, parity, float(lam))
    return TransverseSolution(profile, parity, float(lam), float(phi_h), float(dphi_h))


# ----------------------------------------------------------------------
# Guided modes
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class GuidedMode:
    """One guided eigenpair (parity j, order m)."""

    parity: Parity
    order: int
    lam: float
    r: float
    beta: float
    residual: float
    k: float = field(repr=False)
    n_star: float = field(repr=False)

    @property
    def n_eff(self) -> float:
        return math.sqrt(self.n_star**2 - self.lam / self.k**2)


def dispersion(profile: WaveguideProfile, parity: Parity, lam) -> np.ndarray:
    """sqrt(d^2 - lambda) phi_j(h) + phi_j'(h) for 0 < lambda < d^2."""
    phi_h, dphi_h = boundary_values(profile, parity, lam)
    return np.sqrt(np.maximum(profile.d2 - np.asarray(lam, dtype=float), 0.0)) * phi_h + dphi_h


def core_integral_phi2(profile: WaveguideProfile, parity: Parity, lam: float) -> float:
    """Integral of phi_j(x, lambda)^2 over [-h, h]."""
    x, w = gauss_legendre(_CORE_QUAD_ORDER)
    xs = 0.5 * profile.h * (x + 1.0)
    phi, _ = core_values(profile, parity, lam, xs)
    return float(profile.h * np.sum(w * phi[:, 0] ** 2))


def _normalisation(profile: WaveguideProfile, parity: Parity, lam: float, phi_h: float) -> float:
    decay = math.sqrt(profile.d2 - lam)
    return decay / (decay * core_integral_phi2(profile, parity, lam) + phi_h**2)


def find_guided_modes(profile: WaveguideProfile, scan_points: int = SCAN_POINTS) -> list[GuidedMode]:
    """All roots of the dispersion relation in (0, d^2), both parities, ascending."""
    d2 = profile.d2
    if d2 <= 0.0:
        return []
    grid = d2 * np.arange(1, scan_points + 1) / (scan_points + 1)
    modes: list[GuidedMode] = []
    for parity in PARITIES:
        values = dispersion(profile, parity, grid)
        roots = []
        for i in np.flatnonzero(values == 0.0):
            roots.append(float(grid[i]))
        for i in np.flatnonzero(values[:-1] * values[1:] < 0.0):
            lam = brentq(
                lambda t: float(dispersion(profile, parity, t)),
                float(grid[i]), float(grid[i + 1]),
                xtol=1e-15 * d2, rtol=4.0 * np.finfo(float).eps, maxiter=200,
            )
            roots.append(lam)
        for order, lam in enumerate(sorted(roots), start=1):
            residual = abs(float(dispersion(profile, parity, lam)))
            if residual > _ROOT_RTOL * (1.0 + lam):
                logger.warning(
                    f"{parity}-mode {order} at lambda={lam:.12g} has residual {residual:.2e} "
                    f"(scan resolution {d2 / (scan_points + 1):.3e})"
                )
            phi_h, _ = boundary_values(profile, parity, lam)
            modes.append(GuidedMode(
                parity=parity,
                order=order,
                lam=lam,
                r=_normalisation(profile, parity, lam, float(phi_h)),
                beta=math.sqrt(profile.kn2 - lam),
                residual=residual,
                k=profile.k,
                n_star=profile.n_star,
            ))
    modes.sort(key=lambda m: m.lam)
    logger.info(f"Found {len(modes)} guided modes (d^2={d2:.6g})")
    return modes


# ----------------------------------------------------------------------
# Continuous spectrum
# ----------------------------------------------------------------------


def sigma_from_boundary(profile: WaveguideProfile, lam, phi_h, dphi_h) -> np.ndarray:
    """sigma_j from cached boundary data (lambda > d^2)."""
    excess = np.asarray(lam, dtype=float) - profile.d2
    return np.sqrt(excess) / (excess * phi_h**2 + dphi_h**2)


def spectral_density(profile: WaveguideProfile, parity: Parity, lam) -> np.ndarray:
    """sigma_j(lambda) = sqrt(lambda - d^2) / ((lambda - d^2) phi^2 + phi'^2)."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= profile.d2):
        raise DomainError(f"spectral density needs lambda > d^2 = {profile.d2:.6g}")
    phi_h, dphi_h = boundary_values(profile, parity, lam)
    return sigma_from_boundary(profile, lam, phi_h, dphi_h)


def cladding_values(profile: WaveguideProfile, parity: Parity, lam, x, phi_h, dphi_h) -> np.ndarray:
    """v_j for |x| > h, broadcasting x (column) against lambda (row).

    Oscillatory branch for lambda > d^2, exponential decay for lambda < d^2.
    """
    lam = np.asarray(lam, dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.abs(x) - profile.h
    excess = lam - profile.d2
    root = np.sqrt(np.abs(excess))
    osc = phi_h * np.cos(root * y) + dphi_h * y * np.sinc(root * y / np.pi)
    decay = phi_h * np.exp(-root * y)
    v = np.where(excess > 0.0, osc, decay)
    if parity == "a":
        v = np.sign(x) * v
    return v


def mode_values(profile: WaveguideProfile, parity: Parity, lam, x, boundary=None) -> np.ndarray:
    """v_j(x, lambda) on the whole line, shape (len(x), len(lam)).

    ``boundary`` may carry precomputed (phi_h, phi_h') for the lambdas.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if boundary is None:
        boundary = boundary_values(profile, parity, lam)
    phi_h, dphi_h = boundary
    inside = np.abs(x) <= profile.h
    out = np.empty((x.size, lam.size))
    if np.any(inside):
        out[inside] = core_values(profile, parity, lam, x[inside])[0]
    if np.any(~inside):
        out[~inside] = cladding_values(profile, parity, lam[None, :], x[~inside][:, None], phi_h, dphi_h)
    return out


def mode_slopes(profile: WaveguideProfile, parity: Parity, lam, x) -> np.ndarray:
    """v_j'(x, lambda), laid out like ``mode_values``."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    phi_h, dphi_h = boundary_values(profile, parity, lam)
    inside = np.abs(x) <= profile.h
    out = np.empty((x.size, lam.size))
    if np.any(inside):
        out[inside] = core_values(profile, parity, lam, x[inside])[1]
    if np.any(~inside):
        xo = x[~inside][:, None]
        y = np.abs(xo) - profile.h
        excess = lam[None, :] - profile.d2
        root = np.sqrt(np.abs(excess))
        osc = -phi_h * root * np.sin(root * y) + dphi_h * np.cos(root * y)
        decay = -root * phi_h * np.exp(-root * y)
        dv = np.where(excess > 0.0, osc, decay)
        out[~inside] = np.sign(xo) * dv if parity == "s" else dv
    return out


def mode_function(profile: WaveguideProfile, parity: Parity, lam: float, x) -> np.ndarray:
    """v_j(x, lambda) for one lambda.

    lambda > d^2 gives the radiation/evanescent mode function, 0 < lambda < d^2
    the cladding branch with exponential decay (a true mode only at roots of
    the dispersion relation).
    """
    lam = float(_check_lambda(lam))
    if lam == profile.d2:
        raise DomainError("mode function is not defined at lambda = d^2")
    scalar = np.ndim(x) == 0
    v = mode_values(profile, parity, lam, x)[:, 0]
    return float(v[0]) if scalar else v


def guided_mode_values(profile: WaveguideProfile, modes: list[GuidedMode], x) -> np.ndarray:
    """Columns v_j(x, lambda_m) for every guided mode, shape (len(x), len(modes))."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty((x.size, len(modes)))
    for col, mode in enumerate(modes):
        out[:, col] = mode_values(profile, mode.parity, mode.lam, x)[:, 0]
    return out
