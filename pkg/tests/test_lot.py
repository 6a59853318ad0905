import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lotlab.errors import InfeasibleBound, ReferenceMismatch
from lotlab.gaussian import basis_matrix, make_compatible_reference, rotation_matrix
from lotlab.gaussian import AffineMap
from lotlab.lot import (
    LotFeature,
    SeparationInputs,
    concat_features,
    discretized_compatibility,
    embed,
    empirical_min_separation,
    gaussian_min_references,
    gaussian_shear_eigen_bounds,
    lot_distance,
    min_references,
    multi_embed,
    product_distance,
    shear_class_bounds,
    transformation_budget,
)
from lotlab.measures import DiscreteMeasure, GaussianMeasure, pushforward
from lotlab.solver import wasserstein2


@pytest.fixture
def sigma(rng):
    return DiscreteMeasure.uniform(rng.normal(size=(8, 2)))


def test_embed_self_is_identity(sigma):
    f = embed(sigma, sigma)
    np.testing.assert_array_equal(f.targets, sigma.points)
    np.testing.assert_array_equal(f.indices, np.arange(8))


def test_embed_shift_and_scale(sigma):
    b = np.array([2.0, -1.0])
    shifted = embed(sigma, pushforward(sigma, lambda x: x + b, vectorized=True))
    np.testing.assert_allclose(shifted.targets, sigma.points + b, atol=1e-12)
    scaled = embed(sigma, pushforward(sigma, lambda x: 3.0 * x, vectorized=True))
    np.testing.assert_allclose(scaled.targets, 3.0 * sigma.points, atol=1e-12)


def test_embed_centered(sigma):
    f = embed(sigma, sigma, centered=True)
    np.testing.assert_array_equal(f.values, 0.0)
    with pytest.raises(ReferenceMismatch):
        lot_distance(f, embed(sigma, sigma))


def test_feature_layout(sigma, rng):
    mu = DiscreteMeasure.uniform(rng.normal(size=(5, 2)))
    f = embed(sigma, mu, extraction="barycentric")
    assert f.values.shape == (16,)
    assert f.indices is None
    with pytest.raises(ValueError):
        LotFeature(sigma, np.zeros(3))


def test_lot_distance_examples(sigma):
    f = embed(sigma, sigma)
    assert lot_distance(f, f) == 0.0
    v = np.array([3.0, 4.0])
    g = LotFeature(sigma, (sigma.points + v).ravel())
    assert lot_distance(f, g) == pytest.approx(5.0)


def test_lot_distance_reference_mismatch(sigma, rng):
    other = DiscreteMeasure.uniform(rng.normal(size=(8, 2)))
    with pytest.raises(ReferenceMismatch):
        lot_distance(embed(sigma, sigma), embed(other, other))


def test_lower_bound_on_wasserstein(rng):
    for _ in range(10):
        s, m, n = (DiscreteMeasure.uniform(rng.normal(size=(6, 2))) for _ in range(3))
        assert wasserstein2(m, n) <= lot_distance(embed(s, m), embed(s, n)) + 1e-9


def test_lot_distance_to_reference_is_w2(rng):
    s = DiscreteMeasure.uniform(rng.normal(size=(6, 2)))
    m = DiscreteMeasure.uniform(rng.normal(size=(6, 2)))
    assert lot_distance(embed(s, s), embed(s, m)) == pytest.approx(wasserstein2(s, m), abs=1e-12)


def test_multi_embed_single(sigma, rng):
    mu = DiscreteMeasure.uniform(rng.normal(size=(8, 2)))
    (only,) = multi_embed([sigma], mu)
    np.testing.assert_array_equal(only.values, embed(sigma, mu).values)
    with pytest.raises(ValueError):
        multi_embed([], mu)


def test_product_distance_examples(sigma):
    base = embed(sigma, sigma)
    shift = lambda v: LotFeature(sigma, (sigma.points + v).ravel())
    a = [base, base]
    b = [shift([3.0, 0.0]), shift([0.0, 4.0])]
    assert product_distance(a, a) == 0.0
    assert product_distance(a, b) == pytest.approx(5.0)
    assert product_distance(a, b, p=np.inf) == pytest.approx(4.0)
    equal = [shift([1.0, 0.0])] * 4
    assert product_distance([base] * 4, equal) == pytest.approx(2.0)
    assert concat_features(b).shape == (32,)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.0, 10.0), min_size=1, max_size=6))
def test_product_distance_bounds(ds):
    pts = np.array([[0.0, 0.0], [1.0, 0.0]])
    s = DiscreteMeasure.uniform(pts)
    a = [LotFeature(s, pts.ravel()) for _ in ds]
    b = [LotFeature(s, (pts + [d, 0.0]).ravel()) for d in ds]
    total = product_distance(a, b)
    assert max(ds) - 1e-9 <= total <= np.sqrt(len(ds)) * max(ds) + 1e-9


def test_empirical_min_separation(sigma):
    f = embed(sigma, sigma)
    assert empirical_min_separation([f], [f]) == 0.0
    g = LotFeature(sigma, (sigma.points + [3.0, 4.0]).ravel())
    h = LotFeature(sigma, (sigma.points + [0.0, 9.0]).ravel())
    assert empirical_min_separation([f], [g]) == pytest.approx(5.0)
    cross = [lot_distance(x, y) for x in (f, g) for y in (h,)]
    assert empirical_min_separation([f, g], [h]) <= np.mean(cross)


def test_transformation_budget():
    assert transformation_budget(10.0, 2.0, 1.0) == 3.0
    assert transformation_budget(10.0, 1e-12, 0.0) == pytest.approx(5.0)
    with pytest.raises(InfeasibleBound):
        transformation_budget(4.0, 4.0, 0.5)


def test_shear_bounds_case_one():
    b = shear_class_bounds(SeparationInputs(w2=10, delta=1, r1=2, r2=2))
    assert b.case == 1
    assert b.m_max == 3.25
    assert b.gamma_min is None
    assert b.m_b_admissible


def test_shear_bounds_case_two():
    b = shear_class_bounds(SeparationInputs(w2=3, delta=1, r1=2, r2=2))
    assert b.case == 2
    assert b.m_max == 1.5
    assert b.gamma_min == 0.5
    assert b.to_json()["m_b_interval"] == [0.0, 1.0]


def test_shear_bounds_shift_lowers_m_max():
    a = shear_class_bounds(SeparationInputs(w2=10, delta=1, r1=2, r2=2, m_b=0.0))
    b = shear_class_bounds(SeparationInputs(w2=10, delta=1, r1=2, r2=2, m_b=1.0))
    assert b.m_max == pytest.approx(a.m_max - 0.5)


def test_shear_bounds_infeasible():
    with pytest.raises(InfeasibleBound):
        shear_class_bounds(SeparationInputs(w2=1, delta=1, r1=2, r2=2))
    with pytest.raises(ValueError):
        SeparationInputs(w2=-1.0)


def test_min_references_examples():
    assert min_references(12.0, 10.0, 2.0) == 4
    assert min_references(6.0, 10.0, 2.0) == 1
    assert min_references(0.0, 10.0, 2.0) == 1
    with pytest.raises(InfeasibleBound):
        min_references(1.0, 4.0, 2.0)


def test_min_references_monotone():
    ns = [min_references(d, 10.0, 2.0) for d in np.linspace(0, 40, 50)]
    assert ns == sorted(ns)
    ns = [min_references(12.0, w, 2.0) for w in np.linspace(4.5, 30, 50)]
    assert ns == sorted(ns, reverse=True)


def test_gaussian_bound_helpers():
    m, big_m, w2, scale = gaussian_shear_eigen_bounds(np.eye(2), 4 * np.eye(2))
    assert w2 == pytest.approx(np.sqrt(2.0))
    assert m < 1 < big_m
    assert gaussian_min_references(np.eye(2), 4 * np.eye(2), 0.0) == pytest.approx(1.0)


def test_discretized_compatibility_single_pair():
    p = rotation_matrix(np.deg2rad(30))
    template = GaussianMeasure(np.zeros(2), 0.26**2 * np.eye(2))
    reference = make_compatible_reference(template, p, [1.2, 0.8])
    shear = AffineMap(basis_matrix(p, [0.8, 1.6]))
    w2_lot, w2 = discretized_compatibility(template, reference, shear)
    assert abs(w2_lot - w2) / w2 <= 0.05
    same, zero = discretized_compatibility(template, reference, AffineMap.identity(2))
    assert same == 0.0 and zero == 0.0
