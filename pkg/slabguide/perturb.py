"""Coordinate maps of an imperfect guide and the first-order fields.

A map Gamma(s, t) = (s + eps phi(s, t), t + eps psi(s, t)) sends the
straight computational guide onto the physical one. In (s, t) the
Helmholtz operator becomes

    L_eps w = a11 w_ss + 2 a12 w_st + a22 w_tt + b1 w_s + b2 w_t + k^2 n(s)^2 w

with a = J^{-1} J^{-T} and b_k = Laplacian of the inverse map component.
To first order a = I + eps a~, b = eps b~ and c~ = 0.

Displacements are sums of separable bumps S(s) T(t):

    product  psi = S T   (axial shift; leaves the guide itself unchanged)
    lateral  phi = S T   (sideways shift of the core)
    general  phi and psi given separately

Usage:
    from slabguide.perturb import MapSpec, coefficients_first_order, first_order_rhs

    pmap = coefficients_first_order(MapSpec.from_config(cfg["map"]), slab)
    rhs = first_order_rhs(pmap, w0)
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.polynomial import Polynomial
from scipy.integrate import trapezoid

from slabguide.errors import DomainError, NumericalError
from slabguide.estimates import WeightSpec
from slabguide.field import apply_green, restrict_to_cells
from slabguide.green import GreenEvaluator
from slabguide.grid import ComplexField, Grid2D, boundary_mask, derivatives, interface_mask
from slabguide.modal import GuidedMode, WaveguideProfile, mode_slopes, mode_values

logger = logging.getLogger("slabguide.perturb")

MAP_KINDS = ("product", "lateral", "general")


# P(u) with P'(u) = 630 u^4 (1 - u)^4: P(0) = 0, P(1) = 1, derivatives 1..4 vanish at both ends.
_SMOOTHSTEP = Polynomial([0.0, 0.0, 0.0, 0.0, 0.0, 126.0, -420.0, 540.0, -315.0, 70.0])
_SMOOTHSTEP_DERIVATIVES = tuple(_SMOOTHSTEP.deriv(k) if k else _SMOOTHSTEP for k in range(5))


def _smoothstep(u: np.ndarray, order: int) -> np.ndarray:
    if not 0 <= order < len(_SMOOTHSTEP_DERIVATIVES):
        raise DomainError(f"bump derivatives go up to order 4, got {order}")
    return _SMOOTHSTEP_DERIVATIVES[order](u)


@dataclass(frozen=True)
class BumpFunction:
    """C^4 bump of height ``amplitude`` on [center - half_width, center + half_width].

    Flat for |x - center| <= plateau * half_width, degree-9 smoothstep outside.
    """

    amplitude: float
    center: float
    half_width: float
    plateau: float = 0.0

    def __post_init__(self):
        if self.half_width <= 0.0:
            raise DomainError(f"bump half_width must be > 0, got {self.half_width}")
        if not 0.0 <= self.plateau < 1.0:
            raise DomainError(f"bump plateau must lie in [0, 1), got {self.plateau}")

    @property
    def support(self) -> tuple[float, float]:
        return self.center - self.half_width, self.center + self.half_width

    def derivative(self, x, order: int = 0) -> np.ndarray:
        r = (np.asarray(x, dtype=float) - self.center) / self.half_width
        width = 1.0 - self.plateau
        u = np.clip((1.0 - np.abs(r)) / width, 0.0, 1.0)
        value = self.amplitude * _smoothstep(u, order)
        if order == 0:
            return value
        ramp = (u > 0.0) & (u < 1.0)
        du = np.where(ramp, -np.sign(r) / (width * self.half_width), 0.0)
        return value * du**order

    def __call__(self, x) -> np.ndarray:
        return self.derivative(x, 0)

    def scaled(self, factor: float) -> "BumpFunction":
        return BumpFunction(self.amplitude * factor, self.center, self.half_width, self.plateau)


@dataclass(frozen=True)
class SeparableField:
    """S(s) T(t) with its partial derivatives up to second order."""

    S: BumpFunction
    T: BumpFunction

    def partials(self, s, t) -> dict:
        S = [self.S.derivative(s, k) for k in range(3)]
        T = [self.T.derivative(t, k) for k in range(3)]
        return {
            "f": S[0] * T[0],
            "s": S[1] * T[0],
            "t": S[0] * T[1],
            "ss": S[2] * T[0],
            "st": S[1] * T[1],
            "tt": S[0] * T[2],
        }

    @property
    def box(self) -> tuple[float, float, float, float]:
        return (*self.S.support, *self.T.support)

    @property
    def is_zero(self) -> bool:
        return self.S.amplitude == 0.0 or self.T.amplitude == 0.0


@dataclass(frozen=True)
class MapSpec:
    kind: str = "product"
    phi: Optional[SeparableField] = None
    psi: Optional[SeparableField] = None
    printed_rhs: bool = False

    def __post_init__(self):
        if self.kind not in MAP_KINDS:
            raise DomainError(f"map kind must be one of {MAP_KINDS}, got {self.kind!r}")

    @classmethod
    def product(cls, S: BumpFunction, T: BumpFunction, printed_rhs: bool = False) -> "MapSpec":
        return cls("product", psi=SeparableField(S, T), printed_rhs=printed_rhs)

    @classmethod
    def lateral(cls, S: BumpFunction, T: BumpFunction, printed_rhs: bool = False) -> "MapSpec":
        return cls("lateral", phi=SeparableField(S, T), printed_rhs=printed_rhs)

    @classmethod
    def from_config(cls, cfg: dict) -> "MapSpec":
        """Build from the ``map`` table of a scenario (already validated)."""

        def bump(table):
            return BumpFunction(
                float(table["amplitude"]), float(table["center"]),
                float(table["half_width"]), float(table.get("plateau", 0.0)),
            )

        kind = cfg.get("kind", "product")
        printed = bool(cfg.get("printed_rhs", False))
        if kind == "product":
            return cls.product(bump(cfg["S"]), bump(cfg["T"]), printed)
        if kind == "lateral":
            return cls.lateral(bump(cfg["S"]), bump(cfg["T"]), printed)
        phi = SeparableField(bump(cfg["phi"]["S"]), bump(cfg["phi"]["T"])) if "phi" in cfg else None
        psi = SeparableField(bump(cfg["psi"]["S"]), bump(cfg["psi"]["T"])) if "psi" in cfg else None
        return cls("general", phi=phi, psi=psi, printed_rhs=printed)

    @property
    def separable(self) -> SeparableField:
        """The single S T factor of a product or lateral map."""
        if self.kind == "product":
            return self.psi
        if self.kind == "lateral":
            return self.phi
        raise DomainError("general maps have no single S, T pair")


_ZERO_PARTIALS = ("f", "s", "t", "ss", "st", "tt")


class PerturbationMap:
    """Gamma with its exact and first-order operator coefficients."""

    def __init__(self, spec: MapSpec, profile: WaveguideProfile):
        self.spec = spec
        self.profile = profile
        self.components = tuple(c for c in (spec.phi, spec.psi) if c is not None and not c.is_zero)

    # ------------------------------------------------------------------
    # Geometry
    # ------------------------------------------------------------------

    @property
    def is_identity(self) -> bool:
        return not self.components

    @property
    def support(self) -> Optional[tuple[float, float, float, float]]:
        """Bounding box (s_min, s_max, t_min, t_max) of every displacement."""
        if self.is_identity:
            return None
        boxes = np.array([c.box for c in self.components])
        return boxes[:, 0].min(), boxes[:, 1].max(), boxes[:, 2].min(), boxes[:, 3].max()

    def displacement(self, s, t) -> tuple[dict, dict]:
        """Partials of phi and psi at (s, t)."""
        s, t = np.broadcast_arrays(np.asarray(s, float), np.asarray(t, float))
        zero = {key: np.zeros(s.shape) for key in _ZERO_PARTIALS}

        def partials(component):
            if component is None or component.is_zero:
                return zero
            return component.partials(s, t)

        return partials(self.spec.phi), partials(self.spec.psi)

    def forward(self, s, t, eps: float) -> tuple[np.ndarray, np.ndarray]:
        phi, psi = self.displacement(s, t)
        return np.asarray(s, float) + eps * phi["f"], np.asarray(t, float) + eps * psi["f"]

    def _sample(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        s0, s1, t0, t1 = self.support
        return np.meshgrid(np.linspace(s0, s1, n), np.linspace(t0, t1, n), indexing="ij")

    def invertibility_margin(self, eps: float, samples: int = 129) -> float:
        """eps times the largest row sum of |d(displacement)| on the support."""
        if self.is_identity:
            return 0.0
        s, t = self._sample(samples)
        phi, psi = self.displacement(s, t)
        rows = np.maximum(np.abs(phi["s"]) + np.abs(phi["t"]), np.abs(psi["s"]) + np.abs(psi["t"]))
        return abs(eps) * float(rows.max())

    def check_invertible(self, eps: float) -> None:
        margin = self.invertibility_margin(eps)
        if margin >= 1.0:
            raise DomainError(f"map is not invertible at eps={eps:.4g}: eps * |d displacement| = {margin:.3f} >= 1")

    def invert(self, x, z, eps: float, tol: float = 1e-13, max_iter: int = 60) -> tuple[np.ndarray, np.ndarray]:
        """(s, t) with Gamma(s, t) = (x, z), by Newton iteration from (x, z)."""
        self.check_invertible(eps)
        x, z = np.broadcast_arrays(np.asarray(x, float), np.asarray(z, float))
        s, t = x.copy(), z.copy()
        for _ in range(max_iter):
            phi, psi = self.displacement(s, t)
            rx = s + eps * phi["f"] - x
            rz = t + eps * psi["f"] - z
            j11, j12 = 1.0 + eps * phi["s"], eps * phi["t"]
            j21, j22 = eps * psi["s"], 1.0 + eps * psi["t"]
            det = j11 * j22 - j12 * j21
            ds = (j22 * rx - j12 * rz) / det
            dt = (j11 * rz - j21 * rx) / det
            s, t = s - ds, t - dt
            if float(np.max(np.abs(ds) + np.abs(dt), initial=0.0)) <= tol * (1.0 + float(np.max(np.abs(x) + np.abs(z), initial=0.0))):
                return s, t
        raise NumericalError("map inversion did not converge")

    def image(self, grid: Grid2D, eps: float, lines: int = 21) -> list[np.ndarray]:
        """Images of the computational grid lines s = const and t = const, each (n, 2)."""
        out = []
        t_fine = np.linspace(grid.z_min, grid.z_max, 4 * grid.nz)
        s_fine = np.linspace(grid.x_min, grid.x_max, 4 * grid.nx)
        for s in np.linspace(grid.x_min, grid.x_max, lines):
            out.append(np.column_stack(self.forward(np.full_like(t_fine, s), t_fine, eps)))
        for t in np.linspace(grid.z_min, grid.z_max, lines):
            out.append(np.column_stack(self.forward(s_fine, np.full_like(s_fine, t), eps)))
        return out

    # ------------------------------------------------------------------
    # Coefficients
    # ------------------------------------------------------------------

    def first_order_coefficients(self, s, t) -> dict:
        """a~11, a~12, a~22, b~1, b~2, c~ with a = I + eps a~, b = eps b~."""
        phi, psi = self.displacement(s, t)
        return {
            "a11": -2.0 * phi["s"],
            "a12": -(phi["t"] + psi["s"]),
            "a22": -2.0 * psi["t"],
            "b1": -(phi["ss"] + phi["tt"]),
            "b2": -(psi["ss"] + psi["tt"]),
            "c": np.zeros_like(phi["f"]),
        }

    def exact_coefficients(self, s, t, eps: float) -> dict:
        """a11, a12, a22, b1, b2 of L_eps from the inverse Jacobian."""
        phi, psi = self.displacement(s, t)
        j11, j12 = 1.0 + eps * phi["s"], eps * phi["t"]
        j21, j22 = eps * psi["s"], 1.0 + eps * psi["t"]
        det = j11 * j22 - j12 * j21
        # Rows of J^{-1} are grad s and grad t.
        i11, i12 = j22 / det, -j12 / det
        i21, i22 = -j21 / det, j11 / det
        a11 = i11**2 + i12**2
        a12 = i11 * i21 + i12 * i22
        a22 = i21**2 + i22**2
        # tr(H^m a) with H^m = eps * Hessian of displacement m.
        tr_phi = eps * (phi["ss"] * a11 + 2.0 * phi["st"] * a12 + phi["tt"] * a22)
        tr_psi = eps * (psi["ss"] * a11 + 2.0 * psi["st"] * a12 + psi["tt"] * a22)
        return {
            "a11": a11,
            "a12": a12,
            "a22": a22,
            "b1": -(i11 * tr_phi + i12 * tr_psi),
            "b2": -(i21 * tr_phi + i22 * tr_psi),
        }

    def coefficient_bound(self, weight: WeightSpec, rtol: float = 1e-2) -> float:
        """K = sup max(|a~|_F, |b~|, |c~|) / mu over the support, refined until stable."""
        if self.is_identity:
            return 0.0
        previous = None
        n = 65
        for _ in range(6):
            s, t = self._sample(n)
            c = self.first_order_coefficients(s, t)
            frob = np.sqrt(c["a11"] ** 2 + 2.0 * c["a12"] ** 2 + c["a22"] ** 2)
            vec = np.hypot(c["b1"], c["b2"])
            ratio = np.maximum(np.maximum(frob, vec), np.abs(c["c"])) / weight.mu(s, t)
            current = float(ratio.max())
            if previous is not None and abs(current - previous) <= rtol * current:
                return current
            previous = current
            n = 2 * n - 1
        return previous

    # ------------------------------------------------------------------
    # Operators on sampled fields
    # ------------------------------------------------------------------

    def _terms(self, w: ComplexField) -> dict:
        d = derivatives(w, interfaces=(-self.profile.h, self.profile.h))
        d["f"] = w.values
        return d

    def _perturbation(self, d: dict, grid: Grid2D, eps: float, linearized: bool = False) -> np.ndarray:
        """(L_eps - L_0) w / eps from a table ``d`` of w and its partials."""
        s, t = grid.mesh()
        if eps == 0.0 or linearized:
            c = self.first_order_coefficients(s, t)
            out = c["a11"] * d["xx"] + 2.0 * c["a12"] * d["xz"] + c["a22"] * d["zz"] + c["b1"] * d["x"] + c["b2"] * d["z"]
            return out + c["c"] * d["f"]
        c = self.exact_coefficients(s, t, eps)
        out = (
            (c["a11"] - 1.0) * d["xx"] + 2.0 * c["a12"] * d["xz"] + (c["a22"] - 1.0) * d["zz"]
            + c["b1"] * d["x"] + c["b2"] * d["z"]
        )
        return out / eps

    def _unperturbed(self, d: dict, grid: Grid2D) -> np.ndarray:
        n2 = self.profile.index(grid.x) ** 2
        return d["xx"] + d["zz"] + self.profile.k**2 * n2[:, None] * d["f"]

    def perturbation_term(self, w: ComplexField, eps: float, linearized: bool = False) -> ComplexField:
        """(L_eps - L_0) w / eps; the first-order coefficients when eps = 0 or ``linearized``."""
        if self.is_identity:
            return ComplexField.zeros(w.grid)
        return ComplexField(w.grid, self._perturbation(self._terms(w), w.grid, eps, linearized))

    def unperturbed(self, w: ComplexField) -> ComplexField:
        """L_0 w = w_ss + w_tt + k^2 n(s)^2 w."""
        return ComplexField(w.grid, self._unperturbed(self._terms(w), w.grid))

    def apply(self, w: ComplexField, eps: float) -> ComplexField:
        """L_eps w."""
        out = self.unperturbed(w)
        if eps == 0.0:
            return out
        return out + self.perturbation_term(w, eps).scaled(eps)


def coefficients_first_order(spec: MapSpec, profile: WaveguideProfile) -> PerturbationMap:
    """PerturbationMap for ``spec``, logging its support relative to the core."""
    pmap = PerturbationMap(spec, profile)
    if pmap.is_identity:
        logger.info("Map is the identity: all coefficients vanish")
    else:
        s0, s1, t0, t1 = pmap.support
        logger.info(f"{spec.kind} map supported on s in [{s0:.3g}, {s1:.3g}], t in [{t0:.3g}, {t1:.3g}]")
    return pmap


# ----------------------------------------------------------------------
# Zeroth- and first-order fields
# ----------------------------------------------------------------------


def zeroth_order_field(profile: WaveguideProfile, mode: GuidedMode, grid: Grid2D) -> ComplexField:
    """w0(s, t) = v_j(s, lambda) exp(i beta t), the forward guided mode."""
    v = mode_values(profile, mode.parity, mode.lam, grid.x)[:, 0]
    return ComplexField(grid, v[:, None] * np.exp(1j * mode.beta * grid.z)[None, :])


def first_order_rhs(pmap: PerturbationMap, w0: ComplexField, printed: Optional[bool] = None) -> ComplexField:
    """Right-hand side of L_0 w1 = -(a~ : D^2 + b~ . D + c~) w0.

    With ``printed`` (default: the MapSpec flag) the printed variant
    -2 S'T w_ss - 2 S T' w_st - (S''T + S T'') w_t is returned instead.
    """
    if printed is None:
        printed = pmap.spec.printed_rhs
    if pmap.is_identity:
        return ComplexField.zeros(w0.grid)
    s, t = w0.grid.mesh()
    d = pmap._terms(w0)
    if printed:
        p = pmap.spec.separable.partials(s, t)
        return ComplexField(w0.grid, -2.0 * p["s"] * d["xx"] - 2.0 * p["t"] * d["xz"] - (p["ss"] + p["tt"]) * d["z"])
    return pmap.perturbation_term(w0, 0.0).scaled(-1.0)


def first_order_field(ev: GreenEvaluator, rhs: ComplexField, out_grid: Grid2D, threads: int = 1) -> ComplexField:
    """w1 = L_0^{-1} rhs on ``out_grid``; node-grid sources are restricted to cells first."""
    if rhs.grid == out_grid:
        rhs = restrict_to_cells(rhs)
    elif rhs.grid != out_grid.staggered():
        raise DomainError("rhs must live on the observation grid or its staggered grid")
    return apply_green(ev, rhs, out_grid, threads)


def mode_overlap(field_: ComplexField, profile: WaveguideProfile, mode: GuidedMode, t: float) -> complex:
    """r int v(x) w(x, t) dx at the grid column nearest to t."""
    col = int(np.argmin(np.abs(field_.grid.z - t)))
    v = mode_values(profile, mode.parity, mode.lam, field_.grid.x)[:, 0]
    return complex(mode.r * trapezoid(v * field_.values[:, col], field_.grid.x))


def _defect(pmap: PerturbationMap, grid: Grid2D, p0: dict, p1: dict, eps: float, mask_cells: int, l0_w1=None) -> float:
    """Masked max |eps L_0 w1 + (L_eps - L_0)(w0 + eps w1)| from partial tables of w0 and w1."""
    if l0_w1 is None:
        l0_w1 = pmap._unperturbed(p1, grid)
    composite = {key: p0[key] + eps * p1[key] for key in p0}
    defect = eps * l0_w1
    if not pmap.is_identity:
        defect = defect + eps * pmap._perturbation(composite, grid, eps)
    mask = boundary_mask(grid, 2) | interface_mask(grid, pmap.profile.h, mask_cells)
    return float(np.max(np.abs(defect[~mask])))


def first_order_defect(
    pmap: PerturbationMap,
    w0: ComplexField,
    w1: ComplexField,
    eps: float,
    mask_cells: int = 2,
    rhs: Optional[ComplexField] = None,
) -> float:
    """Masked max |L_eps(w0 + eps w1) - L_0 w0| on the stencil grid.

    When w1 was obtained as L_0^{-1} rhs, pass ``rhs`` so that L_0 w1 is
    taken from it instead of from second differences of w1.
    """
    if w0.grid != w1.grid:
        raise DomainError("w0 and w1 must share a grid")
    if rhs is not None and rhs.grid != w0.grid:
        raise DomainError("rhs must share the grid of w0")
    if eps == 0.0:
        return 0.0
    l0_w1 = None if rhs is None else rhs.values
    return _defect(pmap, w0.grid, pmap._terms(w0), pmap._terms(w1), eps, mask_cells, l0_w1)


def guided_mode_partials(profile: WaveguideProfile, mode: GuidedMode, grid: Grid2D) -> dict:
    """w0 = v(s) exp(i beta t) and its partials in closed form, keyed like ``derivatives``."""
    v = mode_values(profile, mode.parity, mode.lam, grid.x)[:, 0]
    dv = mode_slopes(profile, mode.parity, mode.lam, grid.x)[:, 0]
    ddv = (profile.q(grid.x) - mode.lam) * v
    phase = np.exp(1j * mode.beta * grid.z)[None, :]
    ib = 1j * mode.beta
    return {
        "f": v[:, None] * phase,
        "x": dv[:, None] * phase,
        "z": ib * v[:, None] * phase,
        "xx": ddv[:, None] * phase,
        "zz": -(mode.beta**2) * v[:, None] * phase,
        "xz": ib * dv[:, None] * phase,
    }


def _analytic_first_order_partials(pmap: PerturbationMap, mode: GuidedMode, p0: dict, grid: Grid2D) -> dict:
    s, t = grid.mesh()
    psi = pmap.spec.psi.partials(s, t)
    ib = 1j * mode.beta
    return {
        "f": ib * psi["f"] * p0["f"],
        "x": ib * (psi["s"] * p0["f"] + psi["f"] * p0["x"]),
        "z": ib * (psi["t"] * p0["f"] + psi["f"] * p0["z"]),
        "xx": ib * (psi["ss"] * p0["f"] + 2.0 * psi["s"] * p0["x"] + psi["f"] * p0["xx"]),
        "zz": ib * (psi["tt"] * p0["f"] + 2.0 * psi["t"] * p0["z"] + psi["f"] * p0["zz"]),
        "xz": ib * (psi["st"] * p0["f"] + psi["s"] * p0["z"] + psi["t"] * p0["x"] + psi["f"] * p0["xz"]),
    }


def _require_product(pmap: PerturbationMap) -> None:
    if pmap.spec.kind != "product":
        raise DomainError("closed-form first-order field exists for product maps only")


def analytic_first_order(pmap: PerturbationMap, mode: GuidedMode, w0: ComplexField) -> ComplexField:
    """i beta S T w0, the exact first-order field of a product map."""
    _require_product(pmap)
    s, t = w0.grid.mesh()
    st = pmap.spec.psi.partials(s, t)["f"]
    return ComplexField(w0.grid, 1j * mode.beta * st * w0.values)


def analytic_first_order_defect(pmap: PerturbationMap, mode: GuidedMode, grid: Grid2D, eps: float, mask_cells: int = 2) -> float:
    """``first_order_defect`` of w0 and i beta S T w0 with every derivative in closed form."""
    _require_product(pmap)
    if eps == 0.0:
        return 0.0
    p0 = guided_mode_partials(pmap.profile, mode, grid)
    p1 = _analytic_first_order_partials(pmap, mode, p0, grid)
    return _defect(pmap, grid, p0, p1, eps, mask_cells)


def map_image(pmap: PerturbationMap, grid: Grid2D, eps: float, lines: int = 21) -> list[np.ndarray]:
    return pmap.image(grid, eps, lines)
