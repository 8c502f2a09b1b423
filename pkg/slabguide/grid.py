"""Uniform rectangular grids, sampled complex fields and finite-difference stencils.

Fields are stored as arrays of shape (nx, nz) with ``indexing="ij"``: the
first axis is the transverse coordinate x (or s), the second the axial
coordinate z (or t).
"""

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.ndimage import binary_dilation

from slabguide.errors import DomainError


@dataclass(frozen=True)
class Grid2D:
    x_min: float
    x_max: float
    nx: int
    z_min: float
    z_max: float
    nz: int

    def __post_init__(self):
        if self.nx < 2 or self.nz < 2:
            raise DomainError(f"grid needs nx, nz >= 2, got ({self.nx}, {self.nz})")
        if not (self.x_max > self.x_min and self.z_max > self.z_min):
            raise DomainError("grid coordinates must be strictly increasing")

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)

    @property
    def z(self) -> np.ndarray:
        return np.linspace(self.z_min, self.z_max, self.nz)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def dz(self) -> float:
        return (self.z_max - self.z_min) / (self.nz - 1)

    @property
    def shape(self) -> tuple[int, int]:
        return self.nx, self.nz

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.z, indexing="ij")

    def staggered(self) -> "Grid2D":
        """Cell-centre grid: (nx-1) x (nz-1) points offset by half a cell."""
        if self.nx < 3 or self.nz < 3:
            raise DomainError("staggered grid needs nx, nz >= 3")
        return Grid2D(
            self.x_min + 0.5 * self.dx, self.x_max - 0.5 * self.dx, self.nx - 1,
            self.z_min + 0.5 * self.dz, self.z_max - 0.5 * self.dz, self.nz - 1,
        )

    def same_spacing(self, other: "Grid2D", rtol: float = 1e-12) -> bool:
        return math.isclose(self.dz, other.dz, rel_tol=rtol)

    def as_dict(self) -> dict:
        return {
            "x_min": self.x_min, "x_max": self.x_max, "nx": self.nx,
            "z_min": self.z_min, "z_max": self.z_max, "nz": self.nz,
        }


@dataclass(frozen=True)
class ComplexField:
    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.shape != self.grid.shape:
            raise DomainError(f"field shape {values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise DomainError("field has non-finite entries")
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid: Grid2D) -> "ComplexField":
        return cls(grid, np.zeros(grid.shape, dtype=complex))

    @classmethod
    def from_function(cls, grid: Grid2D, fn: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> "ComplexField":
        xx, zz = grid.mesh()
        return cls(grid, np.broadcast_to(fn(xx, zz), grid.shape))

    def _check(self, other: "ComplexField"):
        if other.grid != self.grid:
            raise DomainError("fields live on different grids")

    def __add__(self, other: "ComplexField") -> "ComplexField":
        self._check(other)
        return ComplexField(self.grid, self.values + other.values)

    def __sub__(self, other: "ComplexField") -> "ComplexField":
        self._check(other)
        return ComplexField(self.grid, self.values - other.values)

    def scaled(self, factor: complex) -> "ComplexField":
        return ComplexField(self.grid, factor * self.values)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def sample(self, x, z) -> np.ndarray:
        """Bilinear interpolation at arbitrary points inside the grid."""
        pts = np.stack(np.broadcast_arrays(np.asarray(x, float), np.asarray(z, float)), axis=-1)
        axes = (self.grid.x, self.grid.z)
        re = RegularGridInterpolator(axes, self.values.real)(pts)
        im = RegularGridInterpolator(axes, self.values.imag)(pts)
        return re + 1j * im

    def support_box(self, rel: float = 0.0) -> Optional[tuple[slice, slice]]:
        """Index slices bounding the entries with |value| > rel * max, None if the field is zero."""
        mag = np.abs(self.values)
        peak = float(mag.max())
        if peak == 0.0:
            return None
        rows = np.flatnonzero(np.any(mag > rel * peak, axis=1))
        cols = np.flatnonzero(np.any(mag > rel * peak, axis=0))
        return slice(rows[0], rows[-1] + 1), slice(cols[0], cols[-1] + 1)


# ----------------------------------------------------------------------
# Stencils
# ----------------------------------------------------------------------


def _interface_columns(x: np.ndarray, interfaces: Sequence[float]) -> list[tuple[int, int]]:
    """(node, side) pairs whose centred x-stencil straddles an interface.

    side = -1 takes the one-sided stencil to the left, +1 to the right.
    """
    out = []
    for xi in interfaces:
        for i in range(1, x.size - 1):
            if x[i - 1] < xi < x[i + 1]:
                if x[i] < xi:
                    side = -1
                elif x[i] > xi:
                    side = 1
                else:
                    side = -1 if xi > 0 else 1
                out.append((i, side))
    return out


def derivatives(field: ComplexField, interfaces: Sequence[float] = ()) -> dict:
    """First and second partial derivatives by second-order differences.

    Keys "x", "z", "xx", "zz", "xz". Interior nodes use centred stencils;
    the grid edges and nodes whose x-stencil straddles one of ``interfaces``
    use one-sided second-order stencils from their own side.
    """
    u = field.values
    dx, dz = field.grid.dx, field.grid.dz
    if min(u.shape) < 4:
        raise DomainError("stencils need at least 4 nodes per direction")
    ux = np.gradient(u, dx, axis=0, edge_order=2)
    uz = np.gradient(u, dz, axis=1, edge_order=2)
    uxx = np.empty_like(u)
    uzz = np.empty_like(u)
    uzz[:, 1:-1] = (u[:, 2:] - 2.0 * u[:, 1:-1] + u[:, :-2]) / dz**2
    uzz[:, 0] = (2.0 * u[:, 0] - 5.0 * u[:, 1] + 4.0 * u[:, 2] - u[:, 3]) / dz**2
    uzz[:, -1] = (2.0 * u[:, -1] - 5.0 * u[:, -2] + 4.0 * u[:, -3] - u[:, -4]) / dz**2
    uxx[1:-1] = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / dx**2
    uxx[0] = (2.0 * u[0] - 5.0 * u[1] + 4.0 * u[2] - u[3]) / dx**2
    uxx[-1] = (2.0 * u[-1] - 5.0 * u[-2] + 4.0 * u[-3] - u[-4]) / dx**2
    n = u.shape[0]
    for i, side in _interface_columns(field.grid.x, interfaces):
        # Need three neighbours on the chosen side; otherwise keep the centred value.
        j = [i, i + side, i + 2 * side, i + 3 * side]
        if min(j) < 0 or max(j) >= n:
            continue
        uxx[i] = (2.0 * u[j[0]] - 5.0 * u[j[1]] + 4.0 * u[j[2]] - u[j[3]]) / dx**2
        ux[i] = side * (-3.0 * u[j[0]] + 4.0 * u[j[1]] - u[j[2]]) / (2.0 * dx)
    uxz = np.gradient(ux, dz, axis=1, edge_order=2)
    return {"x": ux, "z": uz, "xx": uxx, "zz": uzz, "xz": uxz}


def laplacian(field: ComplexField) -> np.ndarray:
    """Five-point Laplacian on interior nodes, NaN on the boundary rows/columns."""
    u = field.values
    dx, dz = field.grid.dx, field.grid.dz
    out = np.full(u.shape, np.nan + 0j)
    out[1:-1, 1:-1] = (
        (u[2:, 1:-1] - 2.0 * u[1:-1, 1:-1] + u[:-2, 1:-1]) / dx**2
        + (u[1:-1, 2:] - 2.0 * u[1:-1, 1:-1] + u[1:-1, :-2]) / dz**2
    )
    return out


# ----------------------------------------------------------------------
# Masks
# ----------------------------------------------------------------------


def boundary_mask(grid: Grid2D, cells: int = 1) -> np.ndarray:
    mask = np.zeros(grid.shape, dtype=bool)
    mask[:cells] = mask[-cells:] = True
    mask[:, :cells] = mask[:, -cells:] = True
    return mask


def interface_mask(grid: Grid2D, h: float, cells: int = 2) -> np.ndarray:
    """Nodes within ``cells`` grid cells of x = -h or x = h."""
    near = np.min(np.abs(np.abs(grid.x)[:, None] - h), axis=1) <= cells * grid.dx * (1.0 + 1e-12)
    return np.broadcast_to(near[:, None], grid.shape).copy()


def support_mask(field: ComplexField, cells: int = 2, rel: float = 1e-8) -> np.ndarray:
    """Entries with |value| > rel * max, dilated by ``cells`` grid cells."""
    mag = np.abs(field.values)
    peak = float(mag.max())
    if peak == 0.0:
        return np.zeros(field.grid.shape, dtype=bool)
    structure = np.ones((2 * cells + 1, 2 * cells + 1), dtype=bool)
    return binary_dilation(mag > rel * peak, structure=structure)
