"""Independent oracles shared by the test modules.

These deliberately avoid the library's own solution paths: brute-force
enumeration for transport, an occupation-measure LP for the controlled walk,
and direct quadrature/minimization for dynamic costs.
"""

from itertools import permutations

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog, minimize_scalar


def permutation_value(cost: np.ndarray, sense: str) -> float:
    """Optimal equal-weight coupling by full permutation enumeration."""
    n = cost.shape[0]
    assert cost.shape == (n, n) and n <= 7
    vals = [sum(cost[i, p[i]] for i in range(n)) / n for p in permutations(range(n))]
    return min(vals) if sense == "min" else max(vals)


def harmonic_fixed_end(y, x, T, alpha, beta):
    """Closed-form least action for the quadratic family (componentwise)."""
    om = np.sqrt(alpha / beta)
    s, c = np.sinh(om * T), np.cosh(om * T)
    y = np.atleast_1d(np.asarray(y, float))
    x = np.atleast_1d(np.asarray(x, float))
    return float(np.sum((beta * om / (2 * s)) * ((x * x + y * y) * c - 2 * x * y)))


def brute_ballistic(L_value, v, x, T, lo=-30.0, hi=30.0):
    """inf_y { v y + c_T(y, x) } by bounded scalar minimization (1-d)."""
    res = minimize_scalar(lambda y: v * y + L_value(y, x, T), bounds=(lo, hi),
                          method="bounded", options=dict(xatol=1e-12))
    return float(res.fun)


def occupation_lp(lattice, controls, run_cost, rho0, rhoT, diffusion=True):
    """Exact walk-transport value by the occupation-measure LP.

    Variables m[t, i, b] >= 0 carry the (law x control) mass; flow
    conservation reproduces the controlled-chain dynamics, the first slice
    matches rho0 and the terminal law matches rhoT.  Returns the LP value.
    """
    from ballistic.lattice import step_probabilities, drift_probabilities

    n, K = lattice.n_nodes, lattice.n_steps
    dt, dx = lattice.dt, lattice.dx
    up, dn, stay = (step_probabilities if diffusion else drift_probabilities)(
        np.asarray(controls, float), dx, dt)
    B = len(controls)
    nvar = K * n * B
    idx = lambda t, i, b: (t * n + i) * B + b

    cobj = np.zeros(nvar)
    for t in range(K):
        for i in range(n):
            for b in range(B):
                cobj[idx(t, i, b)] = dt * run_cost(lattice.nodes[i], controls[b])

    rows, cols, data, rhs = [], [], [], []
    r = 0
    # slice t = 0 matches rho0
    for i in range(n):
        for b in range(B):
            rows.append(r); cols.append(idx(0, i, b)); data.append(1.0)
        rhs.append(rho0[i])
        r += 1
    # conservation into slice t = 1..K-1
    for t in range(1, K):
        for j in range(n):
            for b in range(B):
                rows.append(r); cols.append(idx(t, j, b)); data.append(1.0)
            for i in range(n):
                for b in range(B):
                    p = _into(i, j, n, up[b], dn[b], stay[b])
                    if p:
                        rows.append(r); cols.append(idx(t - 1, i, b)); data.append(-p)
            rhs.append(0.0)
            r += 1
    # terminal law
    for j in range(n):
        for i in range(n):
            for b in range(B):
                p = _into(i, j, n, up[b], dn[b], stay[b])
                if p:
                    rows.append(r); cols.append(idx(K - 1, i, b)); data.append(p)
        rhs.append(rhoT[j])
        r += 1
    A = sp.csr_matrix((data, (rows, cols)), shape=(r, nvar))
    res = linprog(cobj, A_eq=A, b_eq=np.array(rhs), bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"occupation LP: {res.message}")
    return float(res.fun)


def _into(i, j, n, pu, pd, ps):
    """Transition probability i -> j of the reflecting trinomial step."""
    p = 0.0
    if j == min(i + 1, n - 1):
        p += pu
    if j == max(i - 1, 0):
        p += pd
    if j == i:
        p += ps
    return p
