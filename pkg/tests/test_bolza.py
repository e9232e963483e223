import numpy as np
import pytest

from ballistic.convexity import Lagrangian, hamiltonian
from ballistic.bolza import (BolzaError, BolzaInstance, BolzaSolution, BoundaryCost,
                             hamiltonian_system_check, solve_bolza)
from ballistic.dynamics import ballistic_cost, fixed_end_cost

HARM = Lagrangian.harmonic(1.0, 1.0)
QF = Lagrangian.quadratic_free()

REGISTRY_INSTANCES = [
    BolzaInstance(HARM, BoundaryCost("quadratic", wa=1.0, ca=1.0, wb=2.0, cb=-0.5), 1.0, 256),
    BolzaInstance(Lagrangian.harmonic(2.0, 0.5),
                  BoundaryCost("quadratic", wa=0.7, ca=0.6, wb=1.3, cb=0.2), 0.8, 256),
    BolzaInstance(HARM, BoundaryCost("pinned-both", a0=0.0, b0=1.0), 0.7, 256),
    BolzaInstance(HARM, BoundaryCost("linear-in-b", v0=1.0, x0=2.0), 1.0, 256),
    BolzaInstance(QF, BoundaryCost("quadratic", wa=1.0, ca=0.4, wb=1.0, cb=1.2), 1.0, 256),
]


@pytest.mark.parametrize("inst", REGISTRY_INSTANCES)
def test_primal_plus_dual_vanishes(inst):
    sol = solve_bolza(inst)
    assert abs(sol.gap) <= 1e-5, sol.gap


def test_nonnegative_data_gives_nonnegative_value():
    inst = BolzaInstance(HARM, BoundaryCost("quadratic", wa=1.0, ca=0.0, wb=1.0, cb=0.0),
                         1.0, 64)
    assert solve_bolza(inst).primal_value >= 0.0


def test_ballistic_boundary_reproduces_the_ballistic_cost():
    v, x, T = 1.0, 2.0, 1.0
    inst = BolzaInstance(QF, BoundaryCost("linear-in-b", v0=v, x0=x), T, 128)
    sol = solve_bolza(inst)
    assert abs(sol.primal_value - ballistic_cost(QF, [v], [x], T)) < 1e-9
    inst2 = BolzaInstance(HARM, BoundaryCost("linear-in-b", v0=v, x0=x), T, 256)
    sol2 = solve_bolza(inst2)
    assert abs(sol2.primal_value - ballistic_cost(HARM, [v], [x], T)) < 5e-3


def test_pinned_both_reproduces_the_fixed_end_cost():
    inst = BolzaInstance(HARM, BoundaryCost("pinned-both", a0=0.0, b0=1.0), 0.7, 512)
    sol = solve_bolza(inst)
    want = fixed_end_cost(HARM, [0.0], [1.0], 0.7).value
    assert abs(sol.primal_value - want) < 5e-3
    assert abs(sol.gap) < 1e-9


def test_gap_stays_tiny_under_refinement():
    gaps = []
    for N in (32, 64, 128, 256):
        inst = BolzaInstance(HARM, BoundaryCost("quadratic", wa=1.0, ca=1.0, wb=2.0, cb=-0.5),
                             1.0, N)
        gaps.append(abs(solve_bolza(inst).gap))
    assert all(g <= 1e-6 for g in gaps)
    assert max(gaps) <= gaps[0] + 1e-9 or all(g <= 1e-8 for g in gaps)


def test_system_residual_halves_with_refinement():
    res = []
    for N in (64, 128, 256):
        inst = BolzaInstance(HARM, BoundaryCost("quadratic", wa=1.0, ca=1.0, wb=2.0, cb=-0.5),
                             1.0, N)
        sol = solve_bolza(inst)
        res.append(hamiltonian_system_check(sol, hamiltonian(HARM)).max_residual)
    assert res[1] < 0.6 * res[0]
    assert res[2] < 0.6 * res[1]
    assert res[2] <= 5e-3


def test_transversality_for_the_quadratic_boundary():
    inst = BolzaInstance(HARM, BoundaryCost("quadratic", wa=1.0, ca=1.0, wb=2.0, cb=-0.5),
                         1.0, 256)
    sol = solve_bolza(inst)
    assert sol.transversality_residual() <= 1e-4


def test_free_particle_with_pinned_ends_has_constant_momentum():
    inst = BolzaInstance(QF, BoundaryCost("pinned-both", a0=0.0, b0=1.0), 1.0, 64)
    sol = solve_bolza(inst)
    assert np.max(np.abs(np.diff(sol.dual_path))) < 1e-12
    assert abs(sol.dual_path[0] - 1.0) < 1e-9     # slope of the straight line


def test_weak_duality_for_random_arcs():
    rng = np.random.default_rng(0)
    inst = BolzaInstance(HARM, BoundaryCost("quadratic", wa=1.0, ca=0.3, wb=1.0, cb=-0.7),
                         1.0, 48)
    h = inst.T / inst.N

    def primal_obj(z):
        d = np.diff(z) / h
        return h * np.sum(z[:-1] ** 2 / 2 + d ** 2 / 2) \
            + inst.ell.value(z[0], z[-1])

    def dual_obj(u):
        d = np.diff(u) / h
        return h * np.sum(u[1:] ** 2 / 2 + d ** 2 / 2) \
            + inst.ell.conjugate_value(u[0], -u[-1])

    for _ in range(25):
        z = rng.normal(0, 1, inst.N + 1)
        u = rng.normal(0, 1, inst.N + 1)
        assert primal_obj(z) + dual_obj(u) >= -1e-9


def test_self_dual_instance_pairs_arc_with_momentum():
    # self-dual running cost and boundary: the dual arc is exactly the
    # discrete momentum of the primal arc
    inst = BolzaInstance(HARM, BoundaryCost("quadratic", wa=1.0, ca=0.8, wb=1.0, cb=-0.3),
                         1.0, 128)
    sol = solve_bolza(inst)
    h = inst.T / inst.N
    momentum = np.diff(sol.primal_path) / h
    assert np.max(np.abs(sol.dual_path[1:] - momentum)) < 1e-7 \
        or np.max(np.abs(sol.dual_path[:-1] - momentum)) < 1e-7


def test_validation_errors():
    with pytest.raises(BolzaError):
        BolzaInstance(HARM, BoundaryCost("quadratic"), 1.0, 1)
    with pytest.raises(BolzaError):
        BolzaInstance(Lagrangian.harmonic(-1.0, 1.0), BoundaryCost("quadratic"), 1.0, 8)
    with pytest.raises(BolzaError):
        BoundaryCost("mystery").value(0.0, 0.0)
