import numpy as np
import pytest

from ballistic.convexity import ConvexProfile, Lagrangian, dual_lagrangian
from ballistic.dynamics import ballistic_cost, ballistic_cost_matrix
from ballistic.measures import DiscreteMeasure, measure, dirac, canonical
from ballistic.transport import brenier_W
from ballistic.interpolation import (ballistic_min, ballistic_max, interpolate_min,
                                     interpolate_max, optimal_map_min, optimal_map_max,
                                     recover_fixed_end, factorization_check,
                                     fixed_end_transport, dual_fixed_end_transport,
                                     default_candidate_grid, min_dual_formula_value,
                                     max_dual_formula_value, concave_restricted_dual)
from oracles import permutation_value

QF = Lagrangian.quadratic_free()
HARM = Lagrangian.harmonic(1.0, 1.0)


def seeded_instance(rng, n=3, spread=1.2):
    mu0 = measure(np.sort(rng.uniform(-spread, spread, n))[:, None],
                  rng.dirichlet(np.ones(n)), space="costate")
    nuT = measure(np.sort(rng.uniform(-spread, spread, n))[:, None],
                  rng.dirichlet(np.ones(n)), space="state")
    return mu0, nuT


# ---------------------------------------------------------------------------
# ballistic LPs
# ---------------------------------------------------------------------------

def test_min_single_pair_value():
    plan = ballistic_min(QF, dirac([1.0], "costate"), dirac([2.0], "state"), 1.0)
    assert abs(plan.value - 1.5) < 1e-12


def test_min_two_atoms_matches_enumeration():
    mu0 = measure([[-1.0], [1.0]], [0.5, 0.5], space="costate")
    nuT = measure([[-2.0], [2.0]], [0.5, 0.5], space="state")
    C = ballistic_cost_matrix(QF, mu0.atoms, nuT.atoms, 1.0)
    plan = ballistic_min(QF, mu0, nuT, 1.0)
    assert abs(plan.value - permutation_value(C, "min")) < 1e-9


def test_max_matches_enumeration_on_three_atoms():
    rng = np.random.default_rng(1)
    mu0, nuT = seeded_instance(rng)
    mu0 = measure(mu0.atoms, space="costate")
    nuT = measure(nuT.atoms, space="state")
    C = ballistic_cost_matrix(HARM, mu0.atoms, nuT.atoms, 0.8)
    plan = ballistic_max(HARM, mu0, nuT, 0.8)
    assert abs(plan.value - permutation_value(C, "max")) < 1e-8


def test_zero_horizon_max_reduces_to_the_pairing_lp():
    rng = np.random.default_rng(2)
    mu0, nuT = seeded_instance(rng, n=4)
    a = ballistic_max(QF, mu0, nuT, 0.0).value
    b = brenier_W(mu0, nuT, "max").value
    assert a == b


def test_state_shift_moves_the_value_linearly():
    # state-independent running cost: shifting every target atom by s adds
    # s * (mean of mu0) to every cost entry
    rng = np.random.default_rng(3)
    mu0, nuT = seeded_instance(rng, n=4)
    base = ballistic_min(QF, mu0, nuT, 1.0).value
    s = 0.6
    shifted = DiscreteMeasure(nuT.atoms + s, nuT.weights, "state")
    got = ballistic_min(QF, mu0, shifted, 1.0).value
    assert abs(got - base - s * float(mu0.weights @ mu0.atoms[:, 0])) < 1e-6


def test_min_never_exceeds_max():
    rng = np.random.default_rng(4)
    for _ in range(5):
        mu0, nuT = seeded_instance(rng)
        lo = ballistic_min(HARM, mu0, nuT, 0.7).value
        hi = ballistic_max(HARM, mu0, nuT, 0.7).value
        assert lo <= hi + 1e-9


def test_retightened_potentials_have_the_stated_shape():
    rng = np.random.default_rng(5)
    mu0, nuT = seeded_instance(rng, n=5)
    from ballistic.convexity import midpoint_convex_1d
    pmin = ballistic_min(HARM, mu0, nuT, 0.8)
    # costate-side potential of the min problem: -dual_source is concave
    assert midpoint_convex_1d(mu0.atoms[:, 0], pmin.dual_source, tol=1e-8)
    pmax = ballistic_max(HARM, mu0, nuT, 0.8)
    assert midpoint_convex_1d(nuT.atoms[:, 0], pmax.dual_target, tol=1e-8)


# ---------------------------------------------------------------------------
# interpolation certificates
# ---------------------------------------------------------------------------

def test_min_interpolation_single_pair():
    mu0 = dirac([1.0], "costate")
    nuT = dirac([2.0], "state")
    cert = interpolate_min(QF, mu0, nuT, 1.0, default_candidate_grid(QF, mu0, nuT, 1.0))
    assert cert.certified
    assert abs(cert.direct_value - 1.5) < 1e-9
    assert abs(cert.w_part - 1.0) < 1e-9
    assert abs(cert.c_part - 0.5) < 1e-9
    assert cert.gap <= 1e-9
    assert np.allclose(cert.interpolant.atoms, [[1.0]])


def test_min_interpolation_reports_coarse_grid():
    mu0 = dirac([1.0], "costate")
    nuT = dirac([2.0], "state")
    cert = interpolate_min(QF, mu0, nuT, 1.0, np.array([[0.0], [2.5]]))
    assert not cert.certified
    assert cert.gap > 0
    assert "refine" in cert.hint


def test_min_interpolation_two_by_two():
    mu0 = measure([[-1.0], [1.0]], [0.5, 0.5], space="costate")
    nuT = measure([[-2.0], [2.0]], [0.5, 0.5], space="state")
    grid = (nuT.atoms[None, :, 0] - 1.0 * mu0.atoms[:, None, 0]).ravel()[:, None]
    cert = interpolate_min(QF, mu0, nuT, 1.0, grid)
    assert abs(cert.three_marginal_value - cert.direct_value) <= 1e-7
    assert cert.certified


def test_min_interpolation_inequality_half():
    rng = np.random.default_rng(6)
    mu0, nuT = seeded_instance(rng)
    direct = ballistic_min(QF, mu0, nuT, 1.0).value
    for _ in range(10):
        k = int(rng.integers(1, 5))
        cand = canonical(DiscreteMeasure(rng.uniform(-3, 3, k)[:, None],
                                         rng.dirichlet(np.ones(k)), "state"))
        w = brenier_W(mu0, cand, "min").value
        c = fixed_end_transport(QF, cand, nuT, 1.0).value
        assert direct <= w + c + 1e-7


def test_max_interpolation_on_point_masses():
    mu0 = dirac([0.7], "costate")
    nuT = dirac([1.2], "state")
    cert = interpolate_max(HARM, mu0, nuT, 0.8)
    assert cert.certified
    assert abs(cert.direct_value - ballistic_cost(HARM, [0.7], [1.2], 0.8)) < 1e-9


def test_max_interpolation_certificate_gap():
    mu0 = measure([[-0.5], [0.8]], [0.5, 0.5], space="costate")
    nuT = measure([[-0.4], [1.0]], [0.5, 0.5], space="state")
    cert = interpolate_max(HARM, mu0, nuT, 0.8)
    assert abs(cert.gap) <= 1e-5
    assert cert.certified


def test_max_interpolation_inequality_half():
    rng = np.random.default_rng(7)
    mu0, nuT = seeded_instance(rng)
    direct = ballistic_max(HARM, mu0, nuT, 0.8).value
    for _ in range(20):
        k = int(rng.integers(1, 5))
        cand = canonical(DiscreteMeasure(rng.uniform(-2, 2, k)[:, None],
                                         rng.dirichlet(np.ones(k)), "costate"))
        w = brenier_W(nuT, cand, "max").value
        ct = dual_fixed_end_transport(HARM, mu0, cand, 0.8).value
        assert direct >= w - ct - 1e-7


def test_dual_formula_value_at_the_lp_potential():
    rng = np.random.default_rng(8)
    mu0, nuT = seeded_instance(rng)
    T = 0.8
    plan = ballistic_min(HARM, mu0, nuT, T)
    ygrid = np.linspace(-4, 4, 1601)
    got = min_dual_formula_value(HARM, mu0, nuT, T, plan.dual_target, ygrid)
    assert abs(got - plan.value) < 1e-3
    # one-sided bound for arbitrary potentials
    for _ in range(10):
        g = rng.normal(0, 1, nuT.n)
        val = min_dual_formula_value(HARM, mu0, nuT, T, g, ygrid)
        assert val <= plan.value + 1e-3


def test_max_dual_formula_value_at_the_lp_potential():
    rng = np.random.default_rng(9)
    mu0, nuT = seeded_instance(rng)
    T = 0.8
    plan = ballistic_max(HARM, mu0, nuT, T)
    wgrid = np.linspace(-5, 5, 2001)
    got = max_dual_formula_value(HARM, mu0, nuT, T, plan.dual_target, wgrid)
    assert abs(got - plan.value) < 1e-3


# ---------------------------------------------------------------------------
# optimal maps
# ---------------------------------------------------------------------------

def test_min_map_on_point_masses():
    rep = optimal_map_min(QF, dirac([1.0], "costate"), dirac([2.0], "state"), 1.0)
    assert rep.pushforward_ok
    assert np.allclose(rep.images[0], [2.0], atol=1e-9)
    assert rep.cost_error < 1e-9


def test_min_map_is_antitone_then_free_flight():
    mu0 = measure([[-1.0], [1.0]], [0.5, 0.5], space="costate")
    nuT = measure([[-2.0], [2.0]], [0.5, 0.5], space="state")
    rep = optimal_map_min(QF, mu0, nuT, 1.0)
    assert rep.pushforward_ok and rep.cost_error < 1e-3
    # min pairing sends the larger costate to the smaller target
    src = rep.sources[:, 0]
    img = rep.images[:, 0]
    assert img[np.argmax(src)] < img[np.argmin(src)]


def test_min_map_transported_cost_matches_lp_on_seeds():
    rng = np.random.default_rng(10)
    for _ in range(3):
        mu0, nuT = seeded_instance(rng, n=4)
        mu0 = measure(mu0.atoms, space="costate")
        nuT = measure(nuT.atoms, space="state")
        rep = optimal_map_min(QF, mu0, nuT, 1.0)
        assert rep.pushforward_ok, rep.flags
        assert rep.cost_error <= 1e-3
        assert rep.max_atom_distance <= 1e-3


def test_max_map_matches_plan_support():
    rng = np.random.default_rng(11)
    mu0, nuT = seeded_instance(rng, n=3)
    mu0 = measure(mu0.atoms, space="costate")
    nuT = measure(nuT.atoms, space="state")
    plan = ballistic_max(HARM, mu0, nuT, 0.8)
    rep = optimal_map_max(HARM, mu0, nuT, 0.8)
    assert rep.pushforward_ok
    assert rep.cost_error <= 1e-3
    support = {(i, j) for i, j in plan.support()}
    for k in range(rep.sources.shape[0]):
        i = int(np.argmin(np.abs(mu0.atoms[:, 0] - rep.sources[k, 0])))
        j = int(np.argmin(np.abs(nuT.atoms[:, 0] - rep.images[k, 0])))
        assert (i, j) in support


def test_max_map_inverse_composition():
    mu0 = measure([[-0.5], [0.8]], [0.5, 0.5], space="costate")
    nuT = measure([[-0.4], [1.0]], [0.5, 0.5], space="state")
    rep = optimal_map_max(HARM, mu0, nuT, 0.8)
    assert "inverse composition drifted beyond tolerance" not in rep.flags
    assert rep.pushforward_ok


# ---------------------------------------------------------------------------
# endpoint recovery and factorization
# ---------------------------------------------------------------------------

def test_recover_point_masses():
    nu0 = dirac([0.3], "state")
    nuT = dirac([1.4], "state")
    rc = recover_fixed_end(QF, nu0, nuT, 0.9)
    assert rc.hypothesis_met
    assert abs(rc.recovered_value - rc.fixed_end_value) < 1e-9
    # the optimal costate atom is the straight-line slope
    assert np.allclose(rc.mu.atoms, [[(1.4 - 0.3) / 0.9]], atol=1e-5)


def test_recover_translated_grids():
    rng = np.random.default_rng(12)
    atoms = np.sort(rng.uniform(-1, 1, 4))
    w = rng.dirichlet(np.ones(4))
    nu0 = measure(atoms[:, None], w)
    nuT = measure((atoms + 0.7)[:, None], w)
    rc = recover_fixed_end(QF, nu0, nuT, 0.6)
    assert rc.hypothesis_met
    assert abs(rc.recovered_value - rc.fixed_end_value) < 1e-4
    assert rc.inequality_ok
    assert rc.certified


def test_recover_inequality_always_holds():
    rng = np.random.default_rng(13)
    nu0 = measure(np.sort(rng.uniform(-1, 1, 3))[:, None])
    nuT = measure(np.sort(rng.uniform(-1, 1, 3))[:, None])
    rc = recover_fixed_end(QF, nu0, nuT, 0.8, n_candidates=20)
    assert rc.inequality_ok
    assert rc.sup_over_candidates <= rc.fixed_end_value + 1e-7


def test_restricted_dual_never_beats_the_unrestricted():
    rng = np.random.default_rng(14)
    ys = np.sort(rng.uniform(-1, 1, 4))
    C = rng.normal(size=(4, 5)) ** 2
    w0 = rng.dirichlet(np.ones(4))
    w1 = rng.dirichlet(np.ones(5))
    val, g, h = concave_restricted_dual(C, ys, w0, w1)
    from ballistic.transport import solve_kantorovich, CostMatrix
    lp = solve_kantorovich(CostMatrix(C), measure(ys[:, None], w0, space="costate"),
                           measure(rng.normal(size=(5, 1)), w1), "min")
    assert val <= lp.value + 1e-9
    from ballistic.convexity import midpoint_convex_1d
    assert midpoint_convex_1d(ys, -g, tol=1e-8)


def test_factorization_symmetric_instance():
    ns = measure([[-1.0], [0.0], [1.0]])
    rep = factorization_check(ConvexProfile("quadratic"), ns, ns)
    assert rep.certified
    assert abs(rep.via_pairings - (rep.transport_value + rep.conjugate_mass)) < 1e-9


def test_factorization_generic_instance_is_map_like():
    # sorted atoms with decreasing displacements keep the initial potential concave
    rng = np.random.default_rng(15)
    y = np.sort(rng.uniform(-1.5, 1.5, 3))
    d = np.sort(rng.uniform(0.5, 1.0, 3))[::-1]
    nu0 = measure(y[:, None])
    nu1 = measure((y + d)[:, None])
    rep = factorization_check(ConvexProfile("quadratic"), nu0, nu1)
    assert rep.hypothesis_met
    assert rep.certified and rep.map_like
    assert abs(rep.via_map - rep.transport_value) < 1e-9
    assert abs(rep.via_pairings - (rep.transport_value + rep.conjugate_mass)) < 1e-9


def test_factorization_reports_failed_precondition():
    # increasing displacements break concavity of the initial potential
    rng = np.random.default_rng(16)
    y = np.sort(rng.uniform(-1.5, 1.5, 3))
    d = np.sort(rng.uniform(0.5, 2.5, 3))
    nu1 = measure((y + d)[:, None])
    rep = factorization_check(ConvexProfile("quadratic"), measure(y[:, None]), nu1)
    assert not rep.hypothesis_met
    assert not rep.certified


def test_factorization_point_masses():
    rep = factorization_check(ConvexProfile("quadratic"), dirac([0.2]), dirac([1.0]))
    assert rep.certified
