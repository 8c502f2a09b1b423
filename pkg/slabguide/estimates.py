"""Constants of the existence theory and weighted Sobolev norms.

Everything here is an upper bound meant to be audited against directly
sampled quantities: Phi* against |phi_j|, the guided/radiation bounds
against |G^g| and |G^r|, the L^2(mu x mu) bound against a Monte-Carlo
estimate of ||G||, and C against measured norm ratios of L_0^{-1} f.

Usage:
    from slabguide.estimates import WeightSpec, estimate_report

    report = estimate_report(slab, WeightSpec(a=2.0), pmap)
    for line in report.as_lines():
        print(line)
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np
from scipy.integrate import quad, trapezoid
from scipy.special import gamma, kv

from slabguide.errors import DomainError, NumericalError
from slabguide.green import FieldPoint, GreenEvaluator, eval_full
from slabguide.grid import ComplexField, boundary_mask
from slabguide.modal import (
    PARITIES,
    GuidedMode,
    WaveguideProfile,
    boundary_values,
    find_guided_modes,
    mode_values,
    sigma_from_boundary,
)
from slabguide.quadrature import composite_gauss, gauss_legendre

logger = logging.getLogger("slabguide.estimates")

# Relative stability required from every refined quantity below.
_RATIO_RTOL = 1e-3
_NORM_RTOL = 1e-2

# Boundary mass (relative) above which weighted_norm warns.
_BOUNDARY_MASS_WARN = 1e-3


@dataclass(frozen=True)
class WeightSpec:
    """Weight mu and its dominating separable pair mu(x, z) <= mu1(x) mu2(z).

    kind="power":     mu = scale * (1 + x^2 + z^2)^(-a), a > 1,
                      mu1 = scale * (1 + x^2)^(-a/2), mu2 = (1 + z^2)^(-a/2).
    kind="separable": mu = scale * (1 + x^2)^(-b_x) * (1 + z^2)^(-b_z),
                      b_x, b_z > 1/2.
    """

    kind: Literal["power", "separable"] = "power"
    a: float = 2.0
    b_x: float = 1.0
    b_z: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("power", "separable"):
            raise DomainError(f"weight kind must be 'power' or 'separable', got {self.kind!r}")
        if self.scale <= 0.0:
            raise DomainError("weight scale must be > 0")
        if self.kind == "power" and self.a <= 1.0:
            raise DomainError(f"power weight needs a > 1 for mu in L^1, got a={self.a}")
        if self.kind == "separable" and min(self.b_x, self.b_z) <= 0.5:
            raise DomainError("separable weight needs b_x, b_z > 1/2")

    @property
    def exponents(self) -> tuple[float, float]:
        """Exponents (b1, b2) of the dominating pair (1 + x^2)^-b1, (1 + z^2)^-b2."""
        if self.kind == "power":
            return 0.5 * self.a, 0.5 * self.a
        return self.b_x, self.b_z

    def mu(self, x, z) -> np.ndarray:
        x, z = np.asarray(x, float), np.asarray(z, float)
        if self.kind == "power":
            return self.scale * (1.0 + x**2 + z**2) ** (-self.a)
        return self.scale * (1.0 + x**2) ** (-self.b_x) * (1.0 + z**2) ** (-self.b_z)

    def mu1(self, x) -> np.ndarray:
        return self.scale * (1.0 + np.asarray(x, float) ** 2) ** (-self.exponents[0])

    def mu2(self, z) -> np.ndarray:
        return (1.0 + np.asarray(z, float) ** 2) ** (-self.exponents[1])

    @property
    def mu1_l1(self) -> float:
        return self.scale * _power_l1(self.exponents[0])

    @property
    def mu2_l1(self) -> float:
        return _power_l1(self.exponents[1])

    @property
    def mu2_l2_squared(self) -> float:
        return _power_l1(2.0 * self.exponents[1])

    @property
    def mu_l1(self) -> float:
        if self.kind == "power":
            return self.scale * math.pi / (self.a - 1.0)
        return self.mu1_l1 * self.mu2_l1

    # ------------------------------------------------------------------
    # |grad mu| / mu and |Hess mu|_F / mu in closed form
    # ------------------------------------------------------------------

    def grad_ratio(self, x, z) -> np.ndarray:
        x, z = np.asarray(x, float), np.asarray(z, float)
        if self.kind == "power":
            w = 1.0 + x**2 + z**2
            return 2.0 * self.a * np.sqrt(x**2 + z**2) / w
        gx = -2.0 * self.b_x * x / (1.0 + x**2)
        gz = -2.0 * self.b_z * z / (1.0 + z**2)
        return np.hypot(gx, gz)

    def hessian_ratio(self, x, z) -> np.ndarray:
        x, z = np.asarray(x, float), np.asarray(z, float)
        if self.kind == "power":
            r2 = x**2 + z**2
            w = 1.0 + r2
            radial = (-2.0 * self.a * w + 4.0 * self.a * (self.a + 1.0) * r2) / w**2
            tangential = -2.0 * self.a / w
            return np.hypot(radial, tangential)
        gx = -2.0 * self.b_x * x / (1.0 + x**2)
        gz = -2.0 * self.b_z * z / (1.0 + z**2)
        hx = (-2.0 * self.b_x * (1.0 + x**2) + 4.0 * self.b_x * (self.b_x + 1.0) * x**2) / (1.0 + x**2) ** 2
        hz = (-2.0 * self.b_z * (1.0 + z**2) + 4.0 * self.b_z * (self.b_z + 1.0) * z**2) / (1.0 + z**2) ** 2
        return np.sqrt(hx**2 + 2.0 * (gx * gz) ** 2 + hz**2)

    def sample_points(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """n points drawn with density mu / ||mu||_1, shape (n, 2)."""
        if self.kind == "power":
            u = rng.random(n)
            r = np.sqrt((1.0 - u) ** (1.0 / (1.0 - self.a)) - 1.0)
            theta = 2.0 * math.pi * rng.random(n)
            return np.column_stack([r * np.cos(theta), r * np.sin(theta)])
        return np.column_stack([_sample_power_1d(self.b_x, n, rng), _sample_power_1d(self.b_z, n, rng)])


def _power_l1(b: float) -> float:
    """Integral of (1 + x^2)^(-b) over the real line."""
    return math.sqrt(math.pi) * gamma(b - 0.5) / gamma(b)


def _sample_power_1d(b: float, n: int, rng: np.random.Generator) -> np.ndarray:
    # Student-t with nu = 2b - 1 degrees of freedom, rescaled by 1/sqrt(nu).
    nu = 2.0 * b - 1.0
    return rng.standard_t(nu, size=n) / math.sqrt(nu)


@dataclass
class EstimateReport:
    phi_star: float
    lambda_0: float
    upsilon_s: float
    upsilon_a: float
    gg_bound: float
    gr_bound: float
    green_norm_bound: float
    C1: float
    C2: float
    C: float
    K: float
    eps0: float
    notes: dict = field(default_factory=dict)

    ORDER = (
        "phi_star", "lambda_0", "upsilon_s", "upsilon_a", "gg_bound", "gr_bound",
        "green_norm_bound", "C1", "C2", "C", "K", "eps0",
    )

    def as_dict(self) -> dict:
        return {key: getattr(self, key) for key in self.ORDER}

    def as_lines(self) -> list[str]:
        lines = []
        for key in self.ORDER:
            note = self.notes.get(key, "")
            suffix = f"  # {note}" if note else ""
            lines.append(f"{key} = {getattr(self, key):.12e}{suffix}")
        return lines


# ----------------------------------------------------------------------
# Modal constants
# ----------------------------------------------------------------------


def lambda_zero(modes: list[GuidedMode]) -> tuple[float, bool]:
    """min(lambda_1^s, lambda_1^a) and whether a parity was missing."""
    if not modes:
        raise DomainError("lambda_0 is undefined without guided modes")
    firsts = {}
    for mode in modes:
        firsts.setdefault(mode.parity, mode.lam)
        firsts[mode.parity] = min(firsts[mode.parity], mode.lam)
    fallback = len(firsts) < len(PARITIES)
    if fallback:
        logger.warning(f"Only {next(iter(firsts))}-modes are guided; lambda_0 falls back to their smallest eigenvalue")
    return min(firsts.values()), fallback


def q_integral(profile: WaveguideProfile) -> float:
    """Integral of |q| over the core [-h, h]."""
    if profile.is_step:
        return 2.0 * profile.h * abs(profile.q_step)
    x, w = gauss_legendre(96)
    xs = 0.5 * profile.h * (x + 1.0)
    return float(profile.h * np.sum(w * np.abs(profile.q(xs))))


def phi_star(profile: WaveguideProfile, modes: list[GuidedMode]) -> tuple[float, float]:
    """(lambda_0, Phi*) with Phi* = exp(int |q| / (2 sqrt(lambda_0)))."""
    lam0, _ = lambda_zero(modes)
    return lam0, math.exp(q_integral(profile) / (2.0 * math.sqrt(lam0)))


def _radiation_rule(profile: WaveguideProfile, panels: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(lambda, d lambda, sqrt(K^2 - lambda)) for (d^2, K^2) split at the midpoint."""
    d2, kn2 = profile.d2, profile.kn2
    half = math.sqrt(0.5 * (kn2 - d2))
    tau, w_tau = composite_gauss(0.0, half, panels)
    s, w_s = composite_gauss(0.0, half, panels)
    lam = np.concatenate([d2 + tau**2, kn2 - s**2])
    dlam = np.concatenate([2.0 * tau * w_tau, 2.0 * s * w_s])
    return lam, dlam, np.sqrt(kn2 - lam)


def upsilon(profile: WaveguideProfile, parity, tol: float = 1e-8) -> float:
    """Upsilon_j = (int_{d^2}^{K^2} sigma_j / (2 sqrt(K^2 - lambda)) d lambda)^(1/2)."""
    if profile.kn2 <= profile.d2:
        raise DomainError("upsilon needs d^2 < k^2 n*^2")
    previous = None
    panels = 4
    for _ in range(12):
        lam, dlam, beta = _radiation_rule(profile, panels)
        phi_h, dphi_h = boundary_values(profile, parity, lam)
        sigma = sigma_from_boundary(profile, lam, phi_h, dphi_h)
        value = float(np.sum(dlam * sigma / (2.0 * beta)))
        if previous is not None and abs(value - previous) <= tol * abs(value):
            return math.sqrt(value)
        previous = value
        panels *= 2
    raise NumericalError(f"upsilon_{parity} did not converge", estimate=abs(value - previous))


def green_part_bounds(profile: WaveguideProfile, modes: list[GuidedMode], phi_star_value: float, upsilons: dict) -> tuple[float, float]:
    """(sup |G^g| bound, sup |G^r| bound)."""
    gg = phi_star_value**2 * sum(m.r / (2.0 * m.beta) for m in modes)
    total = sum(upsilons.values())
    total_sq = sum(u**2 for u in upsilons.values())
    gr = max(
        0.5,
        phi_star_value * total / (4.0 * math.sqrt(math.pi)),
        phi_star_value**2 * total_sq / (2.0 * math.pi),
    )
    return gg, gr


# ----------------------------------------------------------------------
# ||G||_{L^2(mu x mu)}
# ----------------------------------------------------------------------


def q_overlap(weight: WeightSpec, s: float, u: float) -> float:
    """q = int int exp(-|z - zeta| (s + u)) mu2(z) mu2(zeta), via Fourier transforms.

    With mu2 = (1 + z^2)^-b, its transform is (2 sqrt(pi) / Gamma(b)) (w/2)^(b-1/2) K_{b-1/2}(w).
    """
    b = weight.exponents[1]
    c = s + u
    if c <= 0.0:
        return weight.mu2_l1**2
    nu = b - 0.5

    def transform(w):
        return 2.0 * math.sqrt(math.pi) / gamma(b) * (0.5 * w) ** nu * kv(nu, w)

    def integrand(w):
        return transform(w) ** 2 * 2.0 * c / (c**2 + w**2)

    value, _ = quad(integrand, 0.0, np.inf, limit=400)
    return value / math.pi


def q_majorant(weight: WeightSpec, s, u) -> np.ndarray:
    """min(||mu2||_1^2, ||mu2||_2^2 / sqrt(s u))."""
    s, u = np.asarray(s, float), np.asarray(u, float)
    with np.errstate(divide="ignore"):
        young = weight.mu2_l2_squared / np.sqrt(s * u)
    return np.minimum(weight.mu2_l1**2, young)


def p_overlap(profile: WaveguideProfile, weight: WeightSpec, j, l, s: float, u: float, extent: float = 200.0) -> float:
    """(int v_j(x, K^2+s^2) v_l(x, K^2+u^2) mu1(x) dx)^2 on [-extent, extent]."""
    lam = profile.kn2 + np.array([s, u], dtype=float) ** 2
    freq = float(np.sqrt(lam).sum())
    # Symmetric nodes so that odd integrands cancel.
    panels = max(64, int(math.ceil(extent * freq / math.pi)))
    xs, ws = composite_gauss(0.0, extent, panels)
    x = np.concatenate([-xs[::-1], xs])
    w = np.concatenate([ws[::-1], ws])
    vj = mode_values(profile, j, lam[0], x)[:, 0]
    vl = mode_values(profile, l, lam[1], x)[:, 0]
    return float(np.sum(w * vj * vl * weight.mu1(x))) ** 2


def _evanescent_majorant(profile: WaveguideProfile, phi_star_value: float, parity, s: np.ndarray) -> np.ndarray:
    """Phi*^2 sigma_j(K^2 + s^2) + 1/sqrt(K^2 + s^2 - d^2), a bound for sigma_j |v_j|^2."""
    lam = profile.kn2 + s**2
    phi_h, dphi_h = boundary_values(profile, parity, lam)
    sigma = sigma_from_boundary(profile, lam, phi_h, dphi_h)
    return phi_star_value**2 * sigma + 1.0 / np.sqrt(lam - profile.d2)


def evanescent_norm_bound(profile: WaveguideProfile, weight: WeightSpec, phi_star_value: float, panels: int = 32) -> float:
    """Bound for ||G^e||_{L^2(mu x mu)}.

    ||G^e||^2 <= (1/pi^2) ||mu1||_1^2 sum_j int int A_j(s) A_j(u) qbar(s, u) ds du
    with A_j the majorant above and qbar = q_majorant, integrated in log s
    on [s_lo, s_hi] plus closed-form tails.
    """
    scale = max(profile.k * profile.n_star, 1.0)
    s_lo, s_hi = 1e-8 * scale, 1e3 * scale
    c1, c2 = weight.mu2_l1**2, weight.mu2_l2_squared
    previous = None
    for _ in range(4):
        y, wy = composite_gauss(math.log(s_lo), math.log(s_hi), panels)
        s = np.exp(y)
        ds = wy * s
        total = 0.0
        for parity in PARITIES:
            a = _evanescent_majorant(profile, phi_star_value, parity, s)
            a_max = float(np.max(a[: max(1, a.size // 8)]))
            c_inf = 1.25 * float(np.max((s * a)[-max(1, a.size // 8):]))
            core = float((a * ds) @ q_majorant(weight, s[:, None], s[None, :]) @ (a * ds))
            # J = int_0^inf A(u) / sqrt(u) du, then the two tails bounded with qbar <= c2 / sqrt(su).
            j_int = float(np.sum(a * ds / np.sqrt(s))) + 2.0 * a_max * math.sqrt(s_lo) + 2.0 * c_inf / math.sqrt(s_hi)
            tails = 2.0 * c2 * j_int * (2.0 * a_max * math.sqrt(s_lo) + 2.0 * c_inf / math.sqrt(s_hi))
            total += core + tails
        value = weight.mu1_l1**2 * total / math.pi**2
        if not math.isfinite(value):
            raise NumericalError("evanescent double integral is not finite")
        if previous is not None and abs(value - previous) <= _NORM_RTOL * value:
            return math.sqrt(value)
        previous = value
        panels *= 2
    raise NumericalError("evanescent double integral did not stabilise", estimate=abs(value - previous) / value)


def green_norm_bound(
    profile: WaveguideProfile,
    weight: WeightSpec,
    modes: list[GuidedMode],
    phi_star_value: Optional[float] = None,
    upsilons: Optional[dict] = None,
) -> float:
    """Bound for ||G||_{L^2(mu x mu)}: (gg + gr) ||mu||_1 + ||G^e|| bound."""
    if phi_star_value is None:
        _, phi_star_value = phi_star(profile, modes) if modes else (None, 1.0)
    if upsilons is None:
        upsilons = {j: upsilon(profile, j) for j in PARITIES}
    gg, gr = green_part_bounds(profile, modes, phi_star_value, upsilons)
    bound = (gg + gr) * weight.mu_l1 + evanescent_norm_bound(profile, weight, phi_star_value)
    logger.debug(f"||G|| bound {bound:.6g} (gg={gg:.4g} gr={gr:.4g} ||mu||_1={weight.mu_l1:.4g})")
    return bound


def monte_carlo_green_norm(ev: GreenEvaluator, weight: WeightSpec, samples: int, rng: np.random.Generator) -> tuple[float, float]:
    """Monte-Carlo estimate of ||G||_{L^2(mu x mu)} and its standard error, pairs drawn from mu x mu.
    """
    p = weight.sample_points(samples, rng)
    q = weight.sample_points(samples, rng)
    values = np.array([
        abs(eval_full(ev, FieldPoint(*a), FieldPoint(*b))) ** 2 for a, b in zip(p, q)
    ])
    mean = float(values.mean())
    err = float(values.std(ddof=1) / math.sqrt(samples)) if samples > 1 else math.inf
    norm = weight.mu_l1 * math.sqrt(mean)
    return norm, weight.mu_l1 * err / (2.0 * math.sqrt(mean)) if mean > 0 else 0.0


# ----------------------------------------------------------------------
# Weight constants, C and epsilon_0
# ----------------------------------------------------------------------


def weight_ratios(weight: WeightSpec) -> tuple[float, float]:
    """(C1, C2) = sup |grad mu| / mu and sup |Hess mu|_F / mu, refined to 0.1 percent."""
    n = 256
    previous = None
    for _ in range(10):
        r = np.concatenate([[0.0], np.geomspace(1e-4, 1e4, n)])
        if weight.kind == "power":
            x, z = r, np.zeros_like(r)
        else:
            x, z = (a.ravel() for a in np.meshgrid(r, r, indexing="ij"))
        current = (float(np.max(weight.grad_ratio(x, z))), float(np.max(weight.hessian_ratio(x, z))))
        if previous is not None and all(abs(c - p) <= _RATIO_RTOL * c for c, p in zip(current, previous)):
            return current
        previous = current
        n *= 2
    return previous


def constant_C(weight: WeightSpec, green_norm: float, kn2: float, C2: Optional[float] = None) -> float:
    """C with ||L_0^{-1} f||_{H^2(mu)} <= C ||f||_{L^2(mu^{-1})}.

    C^2 = 5/2 + 2 C2 + [3/2 + 4 C2 + 8 C2^2 + (1 + 4 C2) K^2 + 2 K^4] ||G||^2, K^2 = k^2 n*^2.
    """
    if C2 is None:
        _, C2 = weight_ratios(weight)
    bracket = 1.5 + 4.0 * C2 + 8.0 * C2**2 + (1.0 + 4.0 * C2) * kn2 + 2.0 * kn2**2
    return math.sqrt(2.5 + 2.0 * C2 + bracket * green_norm**2)


def epsilon_threshold(C: float, K: float) -> float:
    """eps_0 = 1 / (C K); infinite for the unperturbed case K = 0."""
    if C <= 0.0 or K < 0.0:
        raise DomainError(f"epsilon threshold needs C > 0 and K >= 0, got C={C}, K={K}")
    if K == 0.0:
        return math.inf
    return 1.0 / (C * K)


# ----------------------------------------------------------------------
# Weighted norms and the regularity inequalities
# ----------------------------------------------------------------------


def _integrate(density: np.ndarray, field_: ComplexField) -> float:
    grid = field_.grid
    return float(trapezoid(trapezoid(density, grid.z, axis=1), grid.x))


def _weight_on(field_: ComplexField, weight: WeightSpec, inverse: bool) -> np.ndarray:
    xx, zz = field_.grid.mesh()
    mu = weight.mu(xx, zz)
    return 1.0 / mu if inverse else mu


def _gradient_sq(field_: ComplexField) -> np.ndarray:
    grid = field_.grid
    ux, uz = np.gradient(field_.values, grid.dx, grid.dz, edge_order=2)
    return np.abs(ux) ** 2 + np.abs(uz) ** 2


def _hessian_sq(field_: ComplexField) -> np.ndarray:
    grid = field_.grid
    ux, uz = np.gradient(field_.values, grid.dx, grid.dz, edge_order=2)
    uxx, uxz = np.gradient(ux, grid.dx, grid.dz, edge_order=2)
    _, uzz = np.gradient(uz, grid.dx, grid.dz, edge_order=2)
    return np.abs(uxx) ** 2 + 2.0 * np.abs(uxz) ** 2 + np.abs(uzz) ** 2


def weighted_norm(field_: ComplexField, weight: WeightSpec, order: str = "L2", inverse: bool = False) -> float:
    """||u|| in L^2(mu), H^1(mu) or H^2(mu); ``inverse`` uses mu^{-1}.

    Derivatives by second-order differences, integrals by the trapezoid rule.
    """
    if order not in ("L2", "H1", "H2"):
        raise DomainError(f"order must be L2, H1 or H2, got {order!r}")
    density = np.abs(field_.values) ** 2
    if order in ("H1", "H2"):
        density = density + _gradient_sq(field_)
    if order == "H2":
        density = density + _hessian_sq(field_)
    density = density * _weight_on(field_, weight, inverse)
    total = _integrate(density, field_)
    if total > 0.0:
        edge = boundary_mask(field_.grid)
        cell = field_.grid.dx * field_.grid.dz
        mass = float(np.sum(density[edge])) * cell / total
        if mass > _BOUNDARY_MASS_WARN:
            logger.warning(f"Field has not decayed at the grid boundary: boundary mass {mass:.2e} of the {order} norm")
    return math.sqrt(max(total, 0.0))


def gradient_inequality(u: ComplexField, f: ComplexField, weight: WeightSpec, profile: WaveguideProfile, C2: Optional[float] = None) -> tuple[float, float]:
    """(lhs, rhs) of int |grad u|^2 mu <= 1/2 int |f|^2 mu + (2 C2 + K^2 + 1/2) int |u|^2 mu."""
    if C2 is None:
        _, C2 = weight_ratios(weight)
    mu = _weight_on(u, weight, False)
    lhs = _integrate(_gradient_sq(u) * mu, u)
    rhs = 0.5 * _integrate(np.abs(f.values) ** 2 * mu, u) + (2.0 * C2 + profile.kn2 + 0.5) * _integrate(np.abs(u.values) ** 2 * mu, u)
    return lhs, rhs


def hessian_inequality(u: ComplexField, f: ComplexField, weight: WeightSpec, profile: WaveguideProfile, C2: Optional[float] = None) -> tuple[float, float]:
    """(lhs, rhs) of int |Hess u|^2 mu <= 2 int |f|^2 mu + 2 K^4 int |u|^2 mu + 4 C2 int |grad u|^2 mu."""
    if C2 is None:
        _, C2 = weight_ratios(weight)
    mu = _weight_on(u, weight, False)
    lhs = _integrate(_hessian_sq(u) * mu, u)
    rhs = (
        2.0 * _integrate(np.abs(f.values) ** 2 * mu, u)
        + 2.0 * profile.kn2**2 * _integrate(np.abs(u.values) ** 2 * mu, u)
        + 4.0 * C2 * _integrate(_gradient_sq(u) * mu, u)
    )
    return lhs, rhs


# ----------------------------------------------------------------------
# Report
# ----------------------------------------------------------------------


def estimate_report(profile: WaveguideProfile, weight: WeightSpec, pmap=None, modes: Optional[list[GuidedMode]] = None) -> EstimateReport:
    """Every constant of the existence argument, with provenance notes.

    Args:
        profile: Waveguide profile.
        weight: Weight specification.
        pmap: Optional PerturbationMap; K = 0 (and eps0 = inf) without it.
        modes: Guided modes, found here when omitted.
    """
    if modes is None:
        modes = find_guided_modes(profile)
    notes = {}
    lam0, fallback = lambda_zero(modes)
    phi = math.exp(q_integral(profile) / (2.0 * math.sqrt(lam0)))
    notes["lambda_0"] = "smallest eigenvalue of the only guided parity" if fallback else "min(lambda_1^s, lambda_1^a)"
    notes["phi_star"] = f"exp(int|q| / (2 sqrt(lambda_0))), int|q| = {q_integral(profile):.6g}"
    upsilons = {j: upsilon(profile, j) for j in PARITIES}
    gg, gr = green_part_bounds(profile, modes, phi, upsilons)
    notes["gg_bound"] = f"{len(modes)} guided modes"
    notes["gr_bound"] = "max of 1/2 and the two upsilon sums"
    norm = (gg + gr) * weight.mu_l1 + evanescent_norm_bound(profile, weight, phi)
    notes["green_norm_bound"] = f"||mu||_1 = {weight.mu_l1:.6g}, {weight.kind} weight"
    C1, C2 = weight_ratios(weight)
    notes["C1"] = notes["C2"] = "ratio maximisation on a log-radial grid, stable to 0.1%"
    C = constant_C(weight, norm, profile.kn2, C2)
    K = float(pmap.coefficient_bound(weight)) if pmap is not None else 0.0
    notes["K"] = "sampled coefficient/mu ratio, stable to 1%" if pmap is not None else "no perturbation"
    eps0 = epsilon_threshold(C, K)
    notes["eps0"] = "1/(C K)" if K > 0.0 else "unperturbed: infinite"
    report = EstimateReport(
        phi_star=phi,
        lambda_0=lam0,
        upsilon_s=upsilons["s"],
        upsilon_a=upsilons["a"],
        gg_bound=gg,
        gr_bound=gr,
        green_norm_bound=norm,
        C1=C1,
        C2=C2,
        C=C,
        K=K,
        eps0=eps0,
        notes=notes,
    )
    logger.info(f"Estimates: Phi*={phi:.4g} ||G||<={norm:.4g} C={C:.4g} K={K:.4g} eps0={eps0:.4g}")
    return report
