import numpy as np
import pytest

from ballistic.measures import measure, dirac
from ballistic.transport import (CostMatrix, TransportError, InfeasibleTransportError,
                                 solve_kantorovich, brenier_W, monotone_coupling_1d,
                                 c_transform, inner_product_cost, brute_force_value)
from oracles import permutation_value


def test_single_atom_pairing():
    mu = dirac([2.0], space="costate")
    nu = dirac([3.0], space="state")
    plan = brenier_W(mu, nu, "min")
    assert plan.coupling[0, 0] == 1.0
    assert np.isclose(plan.value, 6.0)


def test_two_atom_min_and_max_match_brute_force():
    m = measure([[0.0], [1.0]], [0.5, 0.5], space="costate")
    n = measure([[0.0], [1.0]], [0.5, 0.5])
    C = inner_product_cost(m, n)
    assert np.isclose(brenier_W(m, n, "min").value, permutation_value(C.values, "min"))
    assert np.isclose(brenier_W(m, n, "max").value, permutation_value(C.values, "max"))
    assert np.isclose(brenier_W(m, n, "min").value, 0.0)
    assert np.isclose(brenier_W(m, n, "max").value, 0.5)


def test_three_atom_max_is_the_sorted_pairing():
    rng = np.random.default_rng(3)
    vs = np.sort(rng.normal(size=3))
    xs = np.sort(rng.normal(size=3))
    m = measure(vs[:, None], space="costate")
    n = measure(xs[:, None])
    plan = brenier_W(m, n, "max")
    assert np.isclose(plan.value, np.mean(vs * xs))
    assert np.isclose(plan.value, permutation_value(np.outer(vs, xs), "max"))


def test_brute_force_equivalence_through_n6():
    rng = np.random.default_rng(4)
    for n in (2, 3, 4, 5, 6):
        C = CostMatrix(rng.normal(size=(n, n)))
        m = measure(rng.normal(size=(n, 1)), space="costate")
        t = measure(rng.normal(size=(n, 1)))
        for sense in ("min", "max"):
            lp = solve_kantorovich(C, m, t, sense)
            assert np.isclose(lp.value, permutation_value(C.values, sense), atol=1e-10)
            assert np.isclose(lp.value, brute_force_value(C, sense), atol=1e-10)


def test_translation_changes_value_by_the_linear_term():
    rng = np.random.default_rng(5)
    vs = rng.normal(size=4)
    xs = rng.normal(size=4)
    w = rng.dirichlet(np.ones(4))
    m = measure(vs[:, None], w, space="costate")
    n = measure(xs[:, None], rng.dirichlet(np.ones(4)))
    base = brenier_W(m, n, "max").value
    c = 0.8
    shifted = measure((xs + c)[:, None], n.weights)
    assert np.isclose(brenier_W(m, shifted, "max").value, base + c * float(w @ vs))


def test_monotone_coupling_identity_is_second_moment():
    m = measure([[-1.0], [0.5], [2.0]], [0.25, 0.5, 0.25])
    mc = monotone_coupling_1d(measure(m.atoms, m.weights, space="costate"), m)
    assert np.isclose(mc.value, float(m.weights @ (m.atoms[:, 0] ** 2)))
    assert np.allclose(mc.coupling, np.diag(m.weights))


def test_monotone_coupling_pairs_quantiles():
    mu = measure([[0.0], [1.0]], [0.5, 0.5], space="costate")
    nu = measure([[2.0], [3.0]], [0.5, 0.5])
    mc = monotone_coupling_1d(mu, nu)
    assert mc.coupling[0, 0] == 0.5 and mc.coupling[1, 1] == 0.5


def test_monotone_coupling_agrees_with_lp():
    rng = np.random.default_rng(6)
    mu = measure(rng.normal(size=(5, 1)), rng.dirichlet(np.ones(5)), space="costate")
    nu = measure(rng.normal(size=(5, 1)), rng.dirichlet(np.ones(5)))
    mc = monotone_coupling_1d(mu, nu)
    lp = brenier_W(mu, nu, "max")
    assert abs(mc.value - lp.value) < 1e-9


def test_c_transform_of_zero_potential():
    rng = np.random.default_rng(7)
    vs = rng.normal(size=4)
    xs = rng.normal(size=3)
    C = CostMatrix(np.outer(vs, xs))
    out = c_transform(np.zeros(4), C, "source_to_target")
    assert np.allclose(out, np.min(np.outer(vs, xs), axis=0))


def test_double_transform_idempotent():
    rng = np.random.default_rng(8)
    C = CostMatrix(rng.normal(size=(5, 6)))
    phi0 = rng.normal(size=5)
    phi1 = c_transform(phi0, C, "source_to_target")
    phi0b = c_transform(phi1, C, "target_to_source")
    phi1b = c_transform(phi0b, C, "source_to_target")
    assert np.allclose(phi1, phi1b)


def test_lp_duals_are_fixed_points_of_the_double_transform():
    rng = np.random.default_rng(9)
    C = CostMatrix(rng.normal(size=(4, 4)))
    m = measure(rng.normal(size=(4, 1)), space="costate")
    t = measure(rng.normal(size=(4, 1)))
    plan = solve_kantorovich(C, m, t, "min")
    phi1 = c_transform(plan.dual_source, C, "source_to_target")
    dual_from_transform = float(phi1 @ t.weights - plan.dual_source @ m.weights)
    assert abs(dual_from_transform - plan.value) < 1e-7


def test_weak_duality_for_random_admissible_potentials():
    rng = np.random.default_rng(10)
    C = CostMatrix(rng.normal(size=(5, 5)) + 3.0)
    m = measure(rng.normal(size=(5, 1)), rng.dirichlet(np.ones(5)), space="costate")
    t = measure(rng.normal(size=(5, 1)), rng.dirichlet(np.ones(5)))
    val = solve_kantorovich(C, m, t, "min").value
    for _ in range(30):
        phi0 = rng.normal(size=5)
        phi1 = c_transform(phi0, C, "source_to_target") + phi0.min() * 0
        phi1 = np.minimum(phi1, c_transform(phi0, C, "source_to_target"))
        dual = float(phi1 @ t.weights - phi0 @ m.weights)
        assert dual <= val + 1e-9


def test_support_lies_where_potentials_are_tight():
    rng = np.random.default_rng(11)
    C = CostMatrix(rng.normal(size=(6, 6)))
    m = measure(rng.normal(size=(6, 1)), rng.dirichlet(np.ones(6)), space="costate")
    t = measure(rng.normal(size=(6, 1)), rng.dirichlet(np.ones(6)))
    plan = solve_kantorovich(C, m, t, "min")
    for i, j in plan.support():
        gap = plan.dual_target[j] - plan.dual_source[i] - C.values[i, j]
        assert abs(gap) <= 1e-7


def test_forbidden_arcs_respected_and_infeasibility_detected():
    C = CostMatrix(np.array([[1.0, np.inf], [np.inf, 1.0]]))
    m = measure([[0.0], [1.0]], [0.5, 0.5], space="costate")
    t = measure([[0.0], [1.0]], [0.3, 0.7])
    with pytest.raises(InfeasibleTransportError):
        solve_kantorovich(C, m, t, "min")
    # feasible weights pass and avoid the forbidden arcs
    t2 = measure([[0.0], [1.0]], [0.5, 0.5])
    plan = solve_kantorovich(C, m, t2, "min")
    assert plan.coupling[0, 1] == 0.0 and plan.coupling[1, 0] == 0.0


def test_nan_and_neginf_costs_rejected():
    with pytest.raises(TransportError):
        CostMatrix(np.array([[np.nan]]))
    with pytest.raises(TransportError):
        CostMatrix(np.array([[-np.inf]]))


def test_plan_export_shape():
    m = dirac([1.0], space="costate")
    t = dirac([2.0])
    plan = brenier_W(m, t, "max")
    doc = plan.to_json_dict()
    assert doc["coupling"] == [(0, 0, 1.0)]
    assert doc["sense"] == "max"
