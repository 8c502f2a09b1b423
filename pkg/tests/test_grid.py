import numpy as np
import pytest

from slabguide.errors import DomainError
from slabguide.grid import (
    ComplexField,
    Grid2D,
    boundary_mask,
    derivatives,
    interface_mask,
    laplacian,
    support_mask,
)


@pytest.fixture
def grid():
    return Grid2D(-1.0, 1.0, 41, -2.0, 2.0, 81)


def test_grid_spacing_and_staggering(grid):
    assert grid.dx == pytest.approx(0.05)
    assert grid.dz == pytest.approx(0.05)
    cells = grid.staggered()
    assert cells.shape == (40, 80)
    assert cells.x[0] == pytest.approx(-0.975)
    assert cells.same_spacing(grid)


@pytest.mark.parametrize("args", [
    (-1.0, 1.0, 1, 0.0, 1.0, 10),
    (1.0, -1.0, 10, 0.0, 1.0, 10),
])
def test_invalid_grids_are_rejected(args):
    with pytest.raises(DomainError):
        Grid2D(*args)


def test_field_shape_and_finiteness_are_checked(grid):
    with pytest.raises(DomainError):
        ComplexField(grid, np.zeros((3, 3)))
    bad = np.zeros(grid.shape)
    bad[0, 0] = np.nan
    with pytest.raises(DomainError):
        ComplexField(grid, bad)


def test_fields_on_different_grids_do_not_mix(grid):
    a = ComplexField.zeros(grid)
    b = ComplexField.zeros(grid.staggered())
    with pytest.raises(DomainError):
        a + b


def test_sample_interpolates_linear_fields_exactly(grid):
    f = ComplexField.from_function(grid, lambda x, z: 2.0 * x - 1j * z)
    got = f.sample([0.123, -0.4], [1.01, -1.7])
    np.testing.assert_allclose(got, [0.246 - 1.01j, -0.8 + 1.7j], atol=1e-12)


def test_support_box(grid):
    values = np.zeros(grid.shape)
    values[10:13, 20:30] = 1.0
    rows, cols = ComplexField(grid, values).support_box()
    assert (rows.start, rows.stop, cols.start, cols.stop) == (10, 13, 20, 30)
    assert ComplexField.zeros(grid).support_box() is None


def test_stencils_are_exact_on_quadratics(grid):
    f = ComplexField.from_function(grid, lambda x, z: x**2 + 3.0 * x * z - 2.0 * z**2 + 1j * x)
    d = derivatives(f, interfaces=(-0.2, 0.2))
    xx, zz = grid.mesh()
    np.testing.assert_allclose(d["xx"], 2.0, atol=1e-9)
    np.testing.assert_allclose(d["zz"], -4.0, atol=1e-9)
    np.testing.assert_allclose(d["xz"], 3.0, atol=1e-9)
    np.testing.assert_allclose(d["x"], 2.0 * xx + 3.0 * zz + 1j, atol=1e-9)
    lap = laplacian(f)
    assert np.all(np.isnan(lap[0]))
    np.testing.assert_allclose(lap[1:-1, 1:-1], -2.0, atol=1e-9)


def test_one_sided_stencils_ignore_the_other_side_of_an_interface(grid):
    # Kink at x = 0.2: |x - 0.2|^2 sign-switched second derivative.
    f = ComplexField.from_function(grid, lambda x, z: np.where(x < 0.2, (x - 0.2) ** 2, -(x - 0.2) ** 2) + 0.0 * z)
    d = derivatives(f, interfaces=(0.2,))
    x = grid.x
    left = x < 0.2 - 1e-12
    right = x > 0.2 + 1e-12
    np.testing.assert_allclose(d["xx"][left[:, None].repeat(grid.nz, 1)], 2.0, atol=1e-8)
    np.testing.assert_allclose(d["xx"][right[:, None].repeat(grid.nz, 1)], -2.0, atol=1e-8)


def test_masks(grid):
    edge = boundary_mask(grid, 2)
    assert edge[:2].all() and edge[:, -2:].all()
    assert not edge[2:-2, 2:-2].any()
    near = interface_mask(grid, 0.2, cells=1)
    assert near[np.abs(np.abs(grid.x) - 0.2) < 0.051].all()
    assert not near[np.abs(grid.x) < 0.1].any()
    values = np.zeros(grid.shape)
    values[20, 40] = 1.0
    spread = support_mask(ComplexField(grid, values), cells=2)
    assert spread.sum() == 25
