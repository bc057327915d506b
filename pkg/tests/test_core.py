import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wbkmeans.core import (
    Assignment,
    ClusterBounds,
    EmptyClusterError,
    InfeasibleBoundsError,
    SiteSet,
    WeightedDataset,
    centroid,
    centroids,
    objective_theta,
    point_energy,
    shape,
    squared_error,
)

from _instances import random_instance, three_points

THREE_Y = np.array([[1.0, 0.5, 0.0], [0.0, 0.5, 1.0]])


def test_dataset_rejects_bad_weights():
    with pytest.raises(ValueError, match="point 1"):
        WeightedDataset([[0.0], [1.0]], [1.0, 0.0])
    with pytest.raises(ValueError):
        WeightedDataset([[0.0], [1.0]], [1.0, -2.0])


def test_dataset_rejects_duplicates_with_merge_hint():
    with pytest.raises(ValueError, match="merge"):
        WeightedDataset([[0.0, 1.0], [2.0, 2.0], [0.0, 1.0]], [1.0, 1.0, 1.0])


def test_dataset_reads_1d_as_column():
    data = WeightedDataset([0.0, 1.0, 2.0], [1.0, 1.0, 1.0])
    assert (data.n, data.d) == (3, 1)


def test_dataset_is_immutable():
    data = WeightedDataset([[0.0], [1.0]], [1.0, 1.0])
    with pytest.raises(ValueError):
        data.points[0, 0] = 5.0


def test_bounds_validation():
    with pytest.raises(ValueError):
        ClusterBounds([0.0, 1.0], [1.0, 1.0])
    with pytest.raises(ValueError, match="cluster 1"):
        ClusterBounds([1.0, 2.0], [1.0, 1.5])
    b = ClusterBounds.balanced(12.0, 3, 0.25)
    np.testing.assert_allclose(b.lower, 3.0)
    np.testing.assert_allclose(b.upper, 5.0)


def test_bounds_global_condition_named():
    b = ClusterBounds([2.0, 2.0], [2.0, 2.0])
    with pytest.raises(InfeasibleBoundsError, match="Σκ⁻ ≤ Σω ≤ Σκ⁺"):
        b.check_feasible(3.0)
    b.check_feasible(4.0)


def test_bounds_merge_sums_members():
    b = ClusterBounds([1.0, 2.0, 3.0], [4.0, 5.0, 6.0]).merged([(0, 2), (1,)])
    np.testing.assert_array_equal(b.lower, [4.0, 2.0])
    np.testing.assert_array_equal(b.upper, [10.0, 5.0])


def test_assignment_validation_and_clamp():
    a = Assignment([[1.0 + 5e-10, 0.0], [-5e-10, 1.0]])
    assert a.y.min() == 0.0 and a.y.max() == 1.0
    with pytest.raises(ValueError, match="point 1"):
        Assignment([[1.0, 0.5], [0.0, 0.4]])
    with pytest.raises(ValueError):
        Assignment([[1.1, 0.0], [-0.1, 1.0]])


def test_assignment_supports_and_fractional():
    a = Assignment(THREE_Y)
    assert [s.tolist() for s in a.supports()] == [[0, 1], [1, 2]]
    assert a.fractional_entries() == [(0, 1), (1, 1)]
    assert a.n_fractional() == 2


def test_shape_examples():
    data = WeightedDataset([[0.0], [1.0]], [1.0, 1.0])
    np.testing.assert_array_equal(shape(Assignment(np.eye(2)), data), [1.0, 1.0])
    np.testing.assert_array_equal(shape(Assignment([[1.0, 0.5], [0.0, 0.5]]), data), [1.5, 0.5])
    data3, _, _ = three_points()
    np.testing.assert_array_equal(shape(Assignment(THREE_Y), data3), [1.5, 1.5])


def test_shape_dimension_mismatch():
    data = WeightedDataset([[0.0], [1.0], [2.0]], [1.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        shape(Assignment(np.eye(2)), data)


def test_centroid_examples():
    one = Assignment([[1.0, 1.0]])
    assert centroid(one, WeightedDataset([[0.0], [2.0]], [1.0, 1.0]), 0)[0] == 1.0
    assert centroid(one, WeightedDataset([[0.0], [2.0]], [3.0, 1.0]), 0)[0] == 0.5
    data3, _, _ = three_points()
    c = centroids(Assignment(THREE_Y), data3)
    np.testing.assert_allclose(c[:, 0], [1 / 3, 5 / 3], atol=1e-15)


def test_centroid_of_empty_cluster_raises():
    data = WeightedDataset([[0.0], [2.0]], [1.0, 1.0])
    a = Assignment([[1.0, 1.0], [0.0, 0.0]])
    with pytest.raises(EmptyClusterError):
        centroid(a, data, 1)
    with pytest.raises(EmptyClusterError):
        centroids(a, data)


def test_theta_single_term():
    data = WeightedDataset([[2.0]], [1.0])
    a = Assignment([[1.0]])
    assert objective_theta(a, data, [[1.0]]) == -3.0
    assert objective_theta(a, data, [[1.0]]) + point_energy(data) == 1.0


def test_theta_empty_cluster_contributes_nothing():
    data = WeightedDataset([[0.0], [1.0]], [1.0, 1.0])
    a = Assignment([[1.0, 1.0], [0.0, 0.0]])
    assert objective_theta(a, data, [[0.5], [100.0]]) == objective_theta(
        Assignment([[1.0, 1.0]]), data, [[0.5]]
    )


def test_squared_error_examples():
    data = WeightedDataset([[0.0], [3.0]], [1.0, 1.0])
    assert squared_error(Assignment(np.eye(2)), data, data.points) == 0.0
    assert squared_error(Assignment([[1.0]]), WeightedDataset([[1.0]], [2.0]), [[0.0]]) == 2.0
    data3, _, sites = three_points()
    assert squared_error(Assignment(THREE_Y), data3, sites) == 1.0


def _random_assignment(rng, k, n):
    y = rng.random((k, n))
    return Assignment(y / y.sum(axis=0))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(2, 20), st.integers(1, 4))
def test_theta_plus_energy_is_squared_error(seed, k, n, d):
    rng = np.random.default_rng(seed)
    k = min(k, n)
    data, _, sites = random_instance(rng, k, n, d)
    a = _random_assignment(rng, k, n)
    lhs = objective_theta(a, data, sites) + point_energy(data)
    rhs = squared_error(a, data, sites)
    assert abs(lhs - rhs) <= 1e-9 * max(1.0, abs(rhs))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_centroid_minimizes_fixed_assignment_cost(seed):
    rng = np.random.default_rng(seed)
    k, n, d = 3, 15, 3
    data, _, _ = random_instance(rng, k, n, d)
    a = _random_assignment(rng, k, n)
    c = centroids(a, data)
    base = squared_error(a, data, c)
    for eps in (1e-3, 1e-2):
        z = rng.normal(size=c.shape)
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        assert squared_error(a, data, c + eps * z) >= base


def test_siteset_groups_coincident_sites():
    s = SiteSet([[0.0], [1.0], [0.0], [1.0 + 1e-12]])
    assert s.groups == ((0, 2), (1, 3))
    assert s.merged and s.n_groups == 2
    np.testing.assert_array_equal(s.representatives[:, 0], [0.0, 1.0])
    np.testing.assert_array_equal(s.expand(np.array([[5.0], [7.0]]))[:, 0], [5.0, 7.0, 5.0, 7.0])


def test_siteset_transitive_closure():
    s = SiteSet([[0.0], [0.6e-9], [1.2e-9]])
    assert s.groups == ((0, 1, 2),)


def test_siteset_distinct_sites_not_merged():
    s = SiteSet([[0.0], [2e-9]])
    assert not s.merged and s.n_groups == 2
