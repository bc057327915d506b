import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wbkmeans.core import Assignment, ClusterBounds, SiteSet, WeightedDataset
from wbkmeans.lp_assign import build_lp, solve_vertex, weight_balanced_assignment
from wbkmeans.power_diagram import (
    FEASIBLE,
    INFEASIBLE,
    STRONGLY_FEASIBLE,
    DiagramError,
    PowerDiagram,
    cell_membership,
    sigma_feasibility_lp,
    sigma_from_duals,
    strong_feasibility_from_power,
    verify_feasible,
    verify_strongly_feasible,
    witness_holds,
)

from _instances import instance_stream, three_points


def crossed_instance():
    """Two Voronoi-separable pairs with the outermost points swapped."""
    data = WeightedDataset([[0.0], [1.0], [9.0], [10.0]], np.ones(4))
    y = np.array([[0.0, 1.0, 0.0, 1.0], [1.0, 0.0, 1.0, 0.0]])
    return data, Assignment(y), SiteSet([[0.0], [10.0]])


def test_params_normalized_to_last_zero():
    d = PowerDiagram(SiteSet([[0.0], [1.0], [2.0]]), [3.0, 5.0, 1.0])
    np.testing.assert_array_equal(d.params, [2.0, 4.0, 0.0])


def test_params_size_checked():
    with pytest.raises(ValueError):
        PowerDiagram(SiteSet([[0.0], [1.0]]), [0.0, 0.0, 0.0])


def test_symmetric_example_duals():
    data = WeightedDataset([[-1.0], [1.0]], [1.0, 1.0])
    sites = [[-1.0], [1.0]]
    sol = weight_balanced_assignment(data, sites, ClusterBounds([1.0, 1.0], [1.0, 1.0]))
    d = sigma_from_duals(sol, data, sites)
    # both ranges are equalities, so the duals are not unique: any sigma
    # keeping each point in its own cell is optimal, the zero vector included
    assert verify_strongly_feasible(d, sol.assignment, data).strongly_feasible
    assert 0 in cell_membership(d, [-1.0]) and 1 in cell_membership(d, [1.0])
    zero = PowerDiagram(SiteSet(sites), [0.0, 0.0])
    assert verify_strongly_feasible(zero, sol.assignment, data).strongly_feasible
    assert cell_membership(zero, [0.0]) == {0, 1}


def test_three_point_sigma_puts_middle_point_on_boundary():
    data, bounds, sites = three_points()
    sol = weight_balanced_assignment(data, sites, bounds)
    d = sigma_from_duals(sol, data, sites)
    p = d.power(data.points[1])
    assert abs(p[0, 0] - p[1, 0]) <= 1e-12
    assert cell_membership(d, data.points[1]) == {0, 1}
    assert verify_strongly_feasible(d, sol.assignment, data).verdict == STRONGLY_FEASIBLE


def test_unconstrained_limit_gives_voronoi():
    for data, _, sites in instance_stream(4, 10):
        k = sites.shape[0]
        bounds = ClusterBounds(np.full(k, 1e-9), np.full(k, data.total_weight))
        sol = weight_balanced_assignment(data, sites, bounds)
        d = sigma_from_duals(sol, data, sites)
        np.testing.assert_allclose(d.params, 0.0, atol=1e-9)


def test_crossed_assignment_is_infeasible():
    data, a, sites = crossed_instance()
    assert sigma_feasibility_lp(a, data, sites) is None
    d = PowerDiagram(sites, [0.0, 0.0])
    cert = verify_feasible(d, a, data)
    assert cert.verdict == INFEASIBLE
    assert witness_holds(cert, d, a, data)
    j, i, l = cert.witness
    assert a.y[i, j] == 1.0 and l != i


def test_witness_check_rejects_non_witness():
    data, a, sites = crossed_instance()
    d = PowerDiagram(sites, [0.0, 0.0])
    good = Assignment(np.array([[1.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 1.0]]))
    cert = verify_feasible(d, good, data)
    assert cert.verdict == FEASIBLE
    assert not witness_holds(cert, d, good, data)


def test_single_group_trivially_feasible():
    data = WeightedDataset([[0.0], [1.0]], [1.0, 1.0])
    d = sigma_feasibility_lp(Assignment([[1.0, 1.0]]), data, SiteSet([[0.5]]))
    np.testing.assert_array_equal(d.params, [0.0])


def test_identity_assignment_feasible():
    data = WeightedDataset([[0.0, 0.0], [3.0, 1.0]], [1.0, 2.0])
    d = PowerDiagram(SiteSet(data.points), [0.0, 0.0])
    assert verify_feasible(d, Assignment(np.eye(2)), data).feasible


def test_sigma_from_duals_reports_bad_duals():
    data, bounds, sites = three_points()
    sol = weight_balanced_assignment(data, sites, bounds)
    broken = type(sol)(**{**sol.__dict__, "cluster_duals": np.array([10.0, 0.0])})
    with pytest.raises(DiagramError) as exc:
        sigma_from_duals(broken, data, sites)
    assert exc.value.witness is not None


def _flat(y):
    return np.zeros(np.shape(y))


def test_forest_of_two_shared_points():
    y = np.array([[0.5, 0.0, 1.0, 0.0], [0.5, 0.5, 0.0, 0.0], [0.0, 0.5, 0.0, 1.0]])
    cert = strong_feasibility_from_power(_flat(y), y)
    assert cert.verdict == STRONGLY_FEASIBLE
    assert cert.forest == ((0, (0, 1)), (1, (1, 2)))


def test_two_labels_between_same_clusters_is_a_cycle():
    y = np.array([[0.5, 0.5, 1.0], [0.5, 0.5, 0.0]])
    cert = strong_feasibility_from_power(_flat(y), y)
    assert cert.verdict == FEASIBLE
    assert cert.witness[0] == 1


def test_single_label_triangle_is_allowed():
    y = np.array([[0.4, 1.0, 0.0], [0.3, 0.0, 0.0], [0.3, 0.0, 1.0]])
    assert strong_feasibility_from_power(_flat(y), y).verdict == STRONGLY_FEASIBLE


def test_support_equality_at_the_slack():
    # within the slack point 1 counts as a boundary point of both cells;
    # beyond it, a point strictly inside cell 0 but held by cluster 1 is rejected
    power = np.array([[0.0, 0.0], [1.0, 1e-9]])
    y = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert strong_feasibility_from_power(power, y, tol=1e-8).verdict == STRONGLY_FEASIBLE
    power = np.array([[0.0, 0.0], [1.0, 0.5]])
    y2 = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert strong_feasibility_from_power(power, y2).verdict == INFEASIBLE


def test_boundary_point_with_zero_assignment_is_tolerated():
    power = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
    y = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 1.0]])
    assert strong_feasibility_from_power(power, y).verdict == STRONGLY_FEASIBLE


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-1e3, 1e3))
def test_shift_invariance(seed, shift):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 6))
    sites = SiteSet(rng.normal(size=(k, 2)) * 3)
    sigma = rng.normal(size=k)
    a = PowerDiagram(sites, sigma)
    b = PowerDiagram(sites, sigma + shift)
    for q in rng.normal(size=(100, 2)) * 4:
        m = cell_membership(a, q)
        assert m and m == cell_membership(b, q)


def test_certificate_serializes():
    data, bounds, sites = three_points()
    sol = weight_balanced_assignment(data, sites, bounds)
    d = sigma_from_duals(sol, data, sites)
    doc = verify_strongly_feasible(d, sol.assignment, data).to_dict()
    assert doc["verdict"] == STRONGLY_FEASIBLE
    assert doc["forest"] == [{"point": 1, "clusters": [0, 1]}]


def test_lp_outputs_strongly_feasible_both_routes():
    for data, bounds, sites in instance_stream(13, 100):
        lp = build_lp(data, sites, bounds)
        sol = solve_vertex(lp)
        ss = SiteSet(sites)
        d = sigma_from_duals(sol, data, ss)
        cert = verify_strongly_feasible(d, sol.assignment, data)
        assert cert.verdict == STRONGLY_FEASIBLE
        assert sol.n_fractional <= 2 * (lp.k - 1)
        other = sigma_feasibility_lp(sol.assignment, data, ss)
        assert other is not None
        assert verify_feasible(other, sol.assignment, data).feasible
