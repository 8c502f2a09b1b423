import math

import numpy as np
import pytest

from slabguide.errors import DomainError
from slabguide.green import (
    FieldPoint,
    build_evaluator,
    eval_evanescent,
    eval_full,
    eval_guided,
    eval_parts,
    eval_radiation,
    free_space_kernel,
)


def _pairs_at_distance(rng, n, k_n, kr_range=(1.0, 20.0), x_range=1.0):
    """n point pairs with k n* |p - q| spread over kr_range."""
    pairs = []
    while len(pairs) < n:
        r = rng.uniform(*kr_range) / k_n
        theta = rng.uniform(0.0, 2.0 * math.pi)
        x = rng.uniform(-x_range, x_range)
        z = rng.uniform(-1.0, 1.0)
        dz = r * math.sin(theta)
        if abs(dz) < 1e-3:
            continue
        pairs.append((FieldPoint(x, z), FieldPoint(x + r * math.cos(theta), z + dz)))
    return pairs


def _distance(p, q):
    return math.hypot(p.x - q.x, p.z - q.z)


def test_uniform_medium_matches_free_space_kernel(uniform, uniform_ev, rng):
    K = uniform.k * uniform.n_star
    for p, q in _pairs_at_distance(rng, 12, K):
        want = complex(free_space_kernel(K, _distance(p, q)))
        got = eval_full(uniform_ev, p, q)
        assert abs(got - want) < 1e-3 * abs(want)


@pytest.mark.slow
def test_uniform_medium_matches_free_space_kernel_many_pairs(uniform, uniform_ev):
    rng = np.random.default_rng(7)
    K = uniform.k * uniform.n_star
    errors = []
    for p, q in _pairs_at_distance(rng, 50, K, x_range=2.0):
        want = complex(free_space_kernel(K, _distance(p, q)))
        errors.append(abs(eval_full(uniform_ev, p, q) - want) / abs(want))
    assert max(errors) < 1e-3


def test_uniform_medium_close_pairs_use_reference_subtraction(uniform, uniform_ev):
    K = uniform.k * uniform.n_star
    p = FieldPoint(0.1, 0.0)
    q = FieldPoint(0.35, 0.5 * uniform_ev.min_separation)
    want = complex(free_space_kernel(K, _distance(p, q)))
    assert eval_full(uniform_ev, p, q) == pytest.approx(want, rel=1e-3)


def test_uniform_medium_has_no_guided_part(uniform_ev):
    assert eval_guided(uniform_ev, FieldPoint(0.0, 0.0), FieldPoint(0.1, 0.3)) == 0j


def test_green_is_reciprocal_and_even(slab_ev, rng):
    for p, q in _pairs_at_distance(rng, 10, 10.0):
        g = eval_full(slab_ev, p, q)
        swapped = eval_full(slab_ev, q, p)
        mirrored = eval_full(slab_ev, FieldPoint(-p.x, p.z), FieldPoint(-q.x, q.z))
        assert abs(swapped - g) <= 1e-10 * abs(g)
        assert abs(mirrored - g) <= 1e-10 * abs(g)


def test_green_depends_on_axial_separation_only(slab_ev):
    g = eval_full(slab_ev, FieldPoint(0.1, 0.2), FieldPoint(-0.15, 0.6))
    shifted = eval_full(slab_ev, FieldPoint(0.1, -1.2), FieldPoint(-0.15, -0.8))
    assert shifted == pytest.approx(g, rel=1e-9)


def test_parts_add_up(slab_ev):
    parts = eval_parts(slab_ev, FieldPoint(0.05, 0.0), FieldPoint(-0.1, 0.3))
    assert parts["full"] == pytest.approx(parts["guided"] + parts["radiation"] + parts["evanescent"])
    assert parts["evanescent"].imag == 0.0


def test_evanescent_part_singular_at_coincident_points(slab_ev):
    p = FieldPoint(0.1, 0.2)
    with pytest.raises(DomainError):
        eval_evanescent(slab_ev, p, p)
    with pytest.raises(DomainError):
        eval_full(slab_ev, p, p)


def test_field_points_must_be_finite():
    with pytest.raises(DomainError):
        FieldPoint(float("nan"), 0.0)


@pytest.mark.parametrize("tol", [1e-1, 0.0, 1e-13])
def test_evaluator_rejects_bad_tolerance(slab, tol):
    with pytest.raises(DomainError):
        build_evaluator(slab, tol=tol)


def test_evaluator_rejects_nonpositive_min_separation(slab):
    with pytest.raises(DomainError):
        build_evaluator(slab, min_separation=0.0)


def test_free_space_kernel_is_outgoing():
    K = 5.0
    r = np.array([2.0, 4.0, 8.0])
    g = free_space_kernel(K, r)
    # -(i/4) H0 ~ -(i/4) sqrt(2 / (pi K r)) exp(i (K r - pi/4)) for large K r.
    far = -0.25j * np.sqrt(2.0 / (math.pi * K * r)) * np.exp(1j * (K * r - 0.25 * math.pi))
    np.testing.assert_allclose(g, far, rtol=2e-2)


@pytest.mark.slow
def test_halving_tol_changes_little(slab, slab_ev):
    finer = build_evaluator(slab, tol=0.5 * slab_ev.tol)
    pairs = [
        (FieldPoint(0.0, 0.0), FieldPoint(0.1, 0.25)),
        (FieldPoint(0.15, -0.3), FieldPoint(-0.5, 0.4)),
        (FieldPoint(0.8, 0.1), FieldPoint(0.3, -1.2)),
        (FieldPoint(-1.0, 0.6), FieldPoint(-0.05, 0.65)),
    ]
    for p, q in pairs:
        g = eval_full(slab_ev, p, q)
        assert abs(eval_full(finer, p, q) - g) < 1e-3 * abs(g)


def test_evanescent_part_decays_with_separation(slab_ev):
    t = np.array([0.5, 1.0, 2.0, 4.0, 8.0])
    origin = FieldPoint(0.0, 0.0)
    evanescent = np.array([abs(eval_evanescent(slab_ev, FieldPoint(0.0, z), origin)) for z in t])
    guided = np.array([abs(eval_guided(slab_ev, FieldPoint(0.0, z), origin)) for z in t])
    assert np.all(np.diff(evanescent) < 0.0)
    assert evanescent[-1] < 0.2 * evanescent[0]
    np.testing.assert_allclose(guided, guided[0], rtol=1e-12)


@pytest.mark.slow
def test_reference_subtraction_matches_direct_evanescent_sum(slab, slab_ev):
    direct = build_evaluator(slab, tol=slab_ev.tol, min_separation=0.1 * slab_ev.min_separation)
    p = FieldPoint(0.1, 0.0)
    for x, fraction in ((-0.05, 0.5), (0.3, 0.8)):
        q = FieldPoint(x, fraction * slab_ev.min_separation)
        subtracted = eval_evanescent(slab_ev, p, q)
        assert subtracted == pytest.approx(eval_evanescent(direct, p, q), rel=1e-3)


@pytest.mark.parametrize("x, z", [(0.05, 0.4), (0.5, 0.3), (-0.45, -0.6)])
def test_green_solves_helmholtz_away_from_the_source(slab, slab_ev, x, z):
    source = FieldPoint(0.0, 0.0)
    step = 0.02

    def g(dx, dz):
        return eval_full(slab_ev, FieldPoint(x + dx, z + dz), source)

    centre = g(0.0, 0.0)
    neighbours = [g(step, 0.0), g(-step, 0.0), g(0.0, step), g(0.0, -step)]
    laplacian = (sum(neighbours) - 4.0 * centre) / step**2
    k2n2 = (slab.k * float(slab.index(x))) ** 2
    scale = k2n2 * max(abs(v) for v in [centre, *neighbours])
    assert abs(laplacian + k2n2 * centre) < 2e-2 * scale


def test_radiation_part_between_cladding_points_is_at_most_one_half(slab, slab_ev, rng):
    for _ in range(20):
        x, xi = rng.uniform(slab.h, 1.5, size=2) * rng.choice([-1.0, 1.0], size=2)
        z, zeta = rng.uniform(-1.5, 1.5, size=2)
        assert abs(eval_radiation(slab_ev, FieldPoint(x, z), FieldPoint(xi, zeta))) <= 0.5
