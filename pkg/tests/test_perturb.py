import numpy as np
import pytest

from slabguide.errors import DomainError
from slabguide.estimates import WeightSpec
from slabguide.green import build_evaluator
from slabguide.grid import ComplexField, Grid2D, boundary_mask, interface_mask
from slabguide.modal import find_guided_modes
from slabguide.perturb import (
    BumpFunction,
    MapSpec,
    PerturbationMap,
    SeparableField,
    analytic_first_order,
    analytic_first_order_defect,
    first_order_defect,
    first_order_field,
    first_order_rhs,
    guided_mode_partials,
    map_image,
    mode_overlap,
    zeroth_order_field,
)

S_BUMP = BumpFunction(0.1, 0.0, 0.4)
T_BUMP = BumpFunction(1.0, 0.0, 0.6, plateau=0.2)


@pytest.fixture
def product_map(slab):
    return PerturbationMap(MapSpec.product(S_BUMP, T_BUMP), slab)


@pytest.fixture
def lateral_map(slab):
    return PerturbationMap(MapSpec.lateral(BumpFunction(0.05, 0.0, 0.5), BumpFunction(1.0, 0.0, 0.6)), slab)


@pytest.fixture
def general_map(slab):
    phi = SeparableField(BumpFunction(0.04, 0.1, 0.5), BumpFunction(1.0, -0.1, 0.5))
    psi = SeparableField(BumpFunction(0.06, -0.05, 0.6), BumpFunction(1.0, 0.2, 0.4, plateau=0.3))
    return PerturbationMap(MapSpec("general", phi=phi, psi=psi), slab)


@pytest.fixture
def grid():
    return Grid2D(-1.0, 1.0, 201, -1.0, 1.0, 201)


# ----------------------------------------------------------------------
# Bumps
# ----------------------------------------------------------------------


def test_bump_is_flat_on_plateau_and_zero_outside():
    x = np.array([-0.7, -0.6, -0.1, 0.0, 0.12, 0.6, 0.9])
    values = T_BUMP(x)
    assert values[[0, 1, 5, 6]] == pytest.approx(0.0)
    assert values[[2, 3, 4]] == pytest.approx(1.0)


@pytest.mark.parametrize("order, rel", [(1, 1e-4), (2, 1e-4), (3, 1e-4), (4, 1e-2)])
def test_bump_derivatives_match_finite_differences(order, rel):
    x = np.linspace(-0.8, 0.8, 16001)
    h = x[1] - x[0]
    exact = T_BUMP.derivative(x, order)
    numeric = np.gradient(T_BUMP.derivative(x, order - 1), h)
    np.testing.assert_allclose(exact[1:-1], numeric[1:-1], atol=rel * np.abs(exact).max())


@pytest.mark.parametrize("bump, edges", [
    (T_BUMP, (T_BUMP.support[1], 0.2 * 0.6)),
    (S_BUMP, (S_BUMP.support[0], S_BUMP.center)),
])
def test_bump_is_four_times_continuously_differentiable(bump, edges):
    x = np.linspace(*bump.support, 4001)
    for order in range(5):
        scale = max(np.abs(bump.derivative(x, order)).max(), 1.0)
        for edge in edges:
            left = bump.derivative(edge - 1e-10, order)
            right = bump.derivative(edge + 1e-10, order)
            assert left == pytest.approx(right, abs=1e-6 * scale)


def test_bump_derivatives_stop_at_fourth_order():
    with pytest.raises(DomainError):
        T_BUMP.derivative(0.3, 5)


@pytest.mark.parametrize("kwargs", [{"half_width": 0.0}, {"plateau": 1.0}, {"plateau": -0.1}])
def test_invalid_bumps_are_rejected(kwargs):
    args = {"amplitude": 1.0, "center": 0.0, "half_width": 0.5, **kwargs}
    with pytest.raises(DomainError):
        BumpFunction(**args)


# ----------------------------------------------------------------------
# Maps and coefficients
# ----------------------------------------------------------------------


def test_zero_amplitude_map_is_identity(slab):
    pmap = PerturbationMap(MapSpec.product(S_BUMP.scaled(0.0), T_BUMP), slab)
    assert pmap.is_identity
    assert pmap.support is None
    assert pmap.coefficient_bound(WeightSpec()) == 0.0
    s, t = np.meshgrid(np.linspace(-1, 1, 5), np.linspace(-1, 1, 5))
    coeffs = pmap.first_order_coefficients(s, t)
    assert all(np.all(c == 0.0) for c in coeffs.values())


def test_unknown_map_kind_is_rejected():
    with pytest.raises(DomainError):
        MapSpec("twist")


def test_invert_round_trip(general_map):
    x = np.linspace(-0.5, 0.5, 11)
    z = np.linspace(-0.6, 0.7, 11)
    s, t = general_map.invert(x, z, eps=1.0)
    fx, fz = general_map.forward(s, t, 1.0)
    np.testing.assert_allclose(fx, x, atol=1e-12)
    np.testing.assert_allclose(fz, z, atol=1e-12)


def test_non_invertible_map_is_rejected(product_map):
    margin = product_map.invertibility_margin(1.0)
    assert 0.0 < margin < 1.0
    with pytest.raises(DomainError):
        product_map.check_invertible(1.5 / margin)


@pytest.mark.parametrize("name", ["product_map", "lateral_map", "general_map"])
def test_first_order_coefficients_are_the_eps_derivative(request, name):
    pmap = request.getfixturevalue(name)
    s, t = np.meshgrid(np.linspace(-0.5, 0.5, 21), np.linspace(-0.6, 0.6, 21), indexing="ij")
    eps = 1e-6
    exact = pmap.exact_coefficients(s, t, eps)
    first = pmap.first_order_coefficients(s, t)
    for key, offset in (("a11", 1.0), ("a12", 0.0), ("a22", 1.0), ("b1", 0.0), ("b2", 0.0)):
        np.testing.assert_allclose((exact[key] - offset) / eps, first[key], atol=1e-3)


def test_exact_coefficients_match_numerical_inverse(general_map):
    eps = 0.8
    x0, z0 = np.array([0.05, -0.2, 0.3]), np.array([0.1, 0.25, -0.15])
    h = 1e-3

    def inverse(x, z):
        return general_map.invert(x, z, eps)

    s, t = inverse(x0, z0)
    sx = (inverse(x0 + h, z0)[0] - inverse(x0 - h, z0)[0]) / (2 * h)
    sz = (inverse(x0, z0 + h)[0] - inverse(x0, z0 - h)[0]) / (2 * h)
    tx = (inverse(x0 + h, z0)[1] - inverse(x0 - h, z0)[1]) / (2 * h)
    tz = (inverse(x0, z0 + h)[1] - inverse(x0, z0 - h)[1]) / (2 * h)
    lap_s = (
        inverse(x0 + h, z0)[0] + inverse(x0 - h, z0)[0] + inverse(x0, z0 + h)[0] + inverse(x0, z0 - h)[0] - 4 * s
    ) / h**2
    lap_t = (
        inverse(x0 + h, z0)[1] + inverse(x0 - h, z0)[1] + inverse(x0, z0 + h)[1] + inverse(x0, z0 - h)[1] - 4 * t
    ) / h**2
    c = general_map.exact_coefficients(s, t, eps)
    np.testing.assert_allclose(c["a11"], sx**2 + sz**2, atol=1e-4)
    np.testing.assert_allclose(c["a12"], sx * tx + sz * tz, atol=1e-4)
    np.testing.assert_allclose(c["a22"], tx**2 + tz**2, atol=1e-4)
    np.testing.assert_allclose(c["b1"], lap_s, atol=1e-3)
    np.testing.assert_allclose(c["b2"], lap_t, atol=1e-3)


def test_coefficient_bound_scales_with_amplitude(slab):
    weight = WeightSpec()
    small = PerturbationMap(MapSpec.product(S_BUMP, T_BUMP), slab).coefficient_bound(weight)
    large = PerturbationMap(MapSpec.product(S_BUMP.scaled(3.0), T_BUMP), slab).coefficient_bound(weight)
    assert small > 0.0
    assert large == pytest.approx(3.0 * small, rel=1e-9)


def test_map_image_is_the_grid_at_zero_eps(product_map):
    grid = Grid2D(-1.0, 1.0, 11, -1.0, 1.0, 11)
    lines = map_image(product_map, grid, 0.0, lines=5)
    assert len(lines) == 10
    np.testing.assert_allclose(lines[0][:, 0], -1.0)
    bent = map_image(product_map, grid, 1.0, lines=5)
    assert np.max(np.abs(bent[2][:, 1] - lines[2][:, 1])) > 0.01


# ----------------------------------------------------------------------
# Zeroth- and first-order fields
# ----------------------------------------------------------------------


def test_zeroth_order_field_projects_on_its_own_mode(slab, slab_modes, grid):
    even, odd = slab_modes
    w0 = zeroth_order_field(slab, even, grid)
    for t in (-1.0, 0.37, 1.0):
        own = mode_overlap(w0, slab, even, t)
        col = int(np.argmin(np.abs(grid.z - t)))
        assert abs(own) == pytest.approx(1.0, abs=1e-3)
        assert own == pytest.approx(np.exp(1j * even.beta * grid.z[col]), abs=1e-3)
        assert abs(mode_overlap(w0, slab, odd, t)) < 1e-10


def test_identity_map_gives_zero_rhs(slab, slab_modes, grid):
    pmap = PerturbationMap(MapSpec.product(S_BUMP.scaled(0.0), T_BUMP), slab)
    w0 = zeroth_order_field(slab, slab_modes[0], grid)
    assert first_order_rhs(pmap, w0).max_abs() == 0.0


def test_lateral_rhs_is_odd_for_an_even_mode(slab, slab_modes, lateral_map, grid):
    w0 = zeroth_order_field(slab, slab_modes[0], grid)
    rhs = first_order_rhs(lateral_map, w0).values
    keep = ~(boundary_mask(grid, 2) | interface_mask(grid, slab.h, 2))
    assert np.abs(rhs).max() > 0.0
    np.testing.assert_allclose((rhs[::-1] + rhs)[keep], 0.0, atol=1e-9 * np.abs(rhs).max())


@pytest.mark.parametrize("printed", [False, True])
def test_first_order_rhs_scales_with_amplitude_and_stays_on_the_support(slab, slab_modes, grid, printed):
    w0 = zeroth_order_field(slab, slab_modes[0], grid)
    pmap = PerturbationMap(MapSpec.product(S_BUMP, T_BUMP), slab)
    tripled = PerturbationMap(MapSpec.product(S_BUMP.scaled(3.0), T_BUMP), slab)
    rhs = first_order_rhs(pmap, w0, printed=printed)
    np.testing.assert_allclose(first_order_rhs(tripled, w0, printed=printed).values, 3.0 * rhs.values, rtol=1e-12)
    s0, s1, t0, t1 = pmap.support
    s, t = grid.mesh()
    outside = (s < s0) | (s > s1) | (t < t0) | (t > t1)
    assert np.abs(rhs.values[~outside]).max() > 0.0
    assert np.all(rhs.values[outside] == 0.0)


def test_printed_rhs_differs_from_derived_rhs(slab, slab_modes, product_map, grid):
    w0 = zeroth_order_field(slab, slab_modes[0], grid)
    derived = first_order_rhs(product_map, w0)
    printed = first_order_rhs(product_map, w0, printed=True)
    assert (derived - printed).max_abs() > 0.1 * derived.max_abs()


def test_analytic_first_order_solves_the_first_order_equation(slab, slab_modes, product_map, grid):
    mode = slab_modes[0]
    w0 = zeroth_order_field(slab, mode, grid)
    w1 = analytic_first_order(product_map, mode, w0)
    lhs = product_map.unperturbed(w1).values
    rhs = first_order_rhs(product_map, w0).values
    keep = ~(boundary_mask(grid, 2) | interface_mask(grid, slab.h, 2))
    assert np.max(np.abs(lhs - rhs)[keep]) < 5e-2 * np.max(np.abs(rhs))


def test_analytic_first_order_needs_product_map(slab, slab_modes, lateral_map, grid):
    w0 = zeroth_order_field(slab, slab_modes[0], grid)
    with pytest.raises(DomainError):
        analytic_first_order(lateral_map, slab_modes[0], w0)


def test_defect_vanishes_at_zero_eps(slab, slab_modes, product_map, grid):
    w0 = zeroth_order_field(slab, slab_modes[0], grid)
    assert first_order_defect(product_map, w0, w0, 0.0) == 0.0
    assert analytic_first_order_defect(product_map, slab_modes[0], grid, 0.0) == 0.0


def test_defect_rhs_must_share_the_grid(slab, slab_modes, product_map, grid):
    w0 = zeroth_order_field(slab, slab_modes[0], grid)
    with pytest.raises(DomainError):
        first_order_defect(product_map, w0, w0, 0.1, rhs=ComplexField.zeros(grid.staggered()))


@pytest.mark.parametrize("index", [0, 1])
def test_guided_mode_partials_match_stencils(slab, slab_modes, product_map, grid, index):
    mode = slab_modes[index]
    exact = guided_mode_partials(slab, mode, grid)
    w0 = zeroth_order_field(slab, mode, grid)
    np.testing.assert_allclose(exact["f"], w0.values, atol=1e-12)
    numeric = product_map._terms(w0)
    keep = ~(boundary_mask(grid, 2) | interface_mask(grid, slab.h, 2))
    for key in ("x", "z", "xx", "zz", "xz"):
        scale = np.abs(exact[key]).max()
        assert np.max(np.abs(numeric[key] - exact[key])[keep]) < 1e-2 * scale, key


def _slope(eps, defects):
    return np.polyfit(np.log(eps), np.log(defects), 1)[0]


EPS_SWEEP = np.array([1e-1, 1e-2, 1e-3])


@pytest.fixture(scope="module")
def gentle_product(gentle):
    mode = find_guided_modes(gentle)[0]
    spec = MapSpec.product(BumpFunction(0.2, 0.0, 1.0), BumpFunction(1.0, 0.0, 1.0, plateau=0.3))
    return PerturbationMap(spec, gentle), mode


def test_analytic_first_order_defect_is_quadratic_in_eps(gentle_product):
    pmap, mode = gentle_product
    grid = Grid2D(-1.5, 1.5, 301, -1.5, 1.5, 301)
    defects = np.array([analytic_first_order_defect(pmap, mode, grid, e) for e in EPS_SWEEP])
    assert np.all(defects > 0.0)
    assert _slope(EPS_SWEEP, defects) == pytest.approx(2.0, abs=0.3)


def test_analytic_first_order_defect_needs_product_map(slab, slab_modes, lateral_map, grid):
    with pytest.raises(DomainError):
        analytic_first_order_defect(lateral_map, slab_modes[0], grid, 0.1)


@pytest.fixture(scope="module")
def green_first_order(gentle, gentle_product):
    pmap, mode = gentle_product
    ev = build_evaluator(gentle, tol=1e-7)
    grid = Grid2D(-1.5, 1.5, 151, -1.5, 1.5, 151)
    w0 = zeroth_order_field(gentle, mode, grid)
    fields = {}
    for printed in (False, True):
        rhs = first_order_rhs(pmap, w0, printed=printed)
        fields[printed] = rhs, first_order_field(ev, rhs, grid)
    return pmap, mode, w0, fields


@pytest.mark.slow
def test_green_first_order_field_matches_closed_form(green_first_order):
    pmap, mode, w0, fields = green_first_order
    _, w1 = fields[False]
    exact = analytic_first_order(pmap, mode, w0)
    assert (w1 - exact).max_abs() < 5e-2 * exact.max_abs()


@pytest.mark.slow
@pytest.mark.parametrize("printed", [False, True])
def test_green_first_order_defect_slope(green_first_order, printed):
    pmap, _, w0, fields = green_first_order
    rhs, w1 = fields[printed]
    defects = np.array([first_order_defect(pmap, w0, w1, e, rhs=rhs) for e in EPS_SWEEP])
    slope = _slope(EPS_SWEEP, defects)
    if printed:
        assert slope < 1.5
    else:
        assert slope == pytest.approx(2.0, abs=0.3)
