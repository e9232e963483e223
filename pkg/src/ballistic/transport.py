"""Finite Kantorovich problems: exact LP transport, dual potentials,
inner-product (Brenier) costs, 1-d monotone couplings, c-transforms.

The LP itself is delegated to scipy's HiGHS simplex, which is exact to
solver tolerances at desk scale and returns the equality multipliers we use
as Kantorovich potentials.  +inf cost entries are forbidden arcs and are
simply excluded from the variable set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .measures import DiscreteMeasure, canonical

MARGINAL_TOL = 1e-9
SLACK_TOL = 1e-7


class TransportError(RuntimeError):
    pass


class InfeasibleTransportError(TransportError):
    pass


@dataclass(frozen=True)
class CostMatrix:
    """Pairwise costs between source and target atoms; +inf marks a forbidden arc."""

    values: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if np.any(np.isnan(v)):
            raise TransportError("cost matrix contains NaN")
        if np.any(np.isneginf(v)):
            raise TransportError("cost matrix contains -inf")

    @property
    def shape(self):
        return self.values.shape


@dataclass
class TransportPlan:
    """Optimal coupling with its value and dual potentials.

    Admissibility convention: dual_target(j) - dual_source(i) <= cost(i, j)
    for the min sense (>= for max), tight on the support.  dual_source is
    pinned to 0 at the first atom.
    """

    coupling: np.ndarray
    value: float
    dual_source: np.ndarray
    dual_target: np.ndarray
    sense: str

    def support(self, tol: float = 1e-12):
        return np.argwhere(self.coupling > tol)

    def check(self, cost: CostMatrix, src_w: np.ndarray, tgt_w: np.ndarray) -> None:
        """Marginal and complementary-slackness invariants."""
        if np.max(np.abs(self.coupling.sum(axis=1) - src_w)) > MARGINAL_TOL:
            raise TransportError("row sums do not match source weights")
        if np.max(np.abs(self.coupling.sum(axis=0) - tgt_w)) > MARGINAL_TOL:
            raise TransportError("column sums do not match target weights")
        gap = self.dual_target[None, :] - self.dual_source[:, None] - cost.values
        on = self.coupling > 1e-12
        if on.any() and np.max(np.abs(gap[on])) > SLACK_TOL:
            raise TransportError("complementary slackness violated on the support")

    def to_json_dict(self) -> dict:
        trips = [(int(i), int(j), float(self.coupling[i, j])) for i, j in self.support()]
        return {"value": float(self.value), "sense": self.sense, "coupling": trips,
                "dual_source": [float(v) for v in self.dual_source],
                "dual_target": [float(v) for v in self.dual_target]}


def solve_kantorovich(cost: CostMatrix, src: DiscreteMeasure, tgt: DiscreteMeasure,
                      sense: str = "min") -> TransportPlan:
    """Exact optimal transport between two discrete measures.

    Strong duality holds for the finite LP, so the returned potentials are
    admissible and tight on the support of the coupling.
    """
    if sense not in ("min", "max"):
        raise TransportError(f"sense must be 'min' or 'max', got {sense!r}")
    C = cost.values
    m, n = C.shape
    if m != src.n or n != tgt.n:
        raise TransportError("cost matrix shape does not match the measures")
    finite = np.isfinite(C)
    if not finite.any(axis=1).all() or not finite.any(axis=0).all():
        raise InfeasibleTransportError("an atom has no finite-cost arc")

    rows, cols = np.nonzero(finite)
    narc = rows.size
    sign = 1.0 if sense == "min" else -1.0
    c_obj = sign * C[rows, cols]

    # equality constraints: row marginals then column marginals
    ones = np.ones(narc)
    A = sp.vstack([
        sp.csr_matrix((ones, (rows, np.arange(narc))), shape=(m, narc)),
        sp.csr_matrix((ones, (cols, np.arange(narc))), shape=(n, narc)),
    ])
    b = np.concatenate([src.weights, tgt.weights])
    res = linprog(c_obj, A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    if res.status == 2:
        raise InfeasibleTransportError("transport LP infeasible")
    if res.status != 0:
        raise TransportError(f"LP solver failure: {res.message}")
    if _marginal_residual(res.x, rows, cols, m, n, src.weights, tgt.weights) > MARGINAL_TOL:
        # weights below the solver's default feasibility tolerance get dropped
        # as noise; re-solve demanding near-exact feasibility
        res = linprog(c_obj, A_eq=A, b_eq=b, bounds=(0, None), method="highs",
                      options={"primal_feasibility_tolerance": 1e-10,
                               "dual_feasibility_tolerance": 1e-10})
        if res.status != 0:
            raise TransportError(f"LP solver failure: {res.message}")

    coupling = np.zeros((m, n))
    coupling[rows, cols] = res.x
    duals = np.asarray(res.eqlin.marginals, dtype=float)
    y_src, y_tgt = duals[:m], duals[m:]
    if sense == "min":
        phi_src, phi_tgt = -y_src, y_tgt
    else:
        phi_src, phi_tgt = y_src, -y_tgt
    shift = phi_src[0]
    phi_src = phi_src - shift
    phi_tgt = phi_tgt - shift
    value = float(sign * res.fun)
    plan = TransportPlan(coupling, value, phi_src, phi_tgt, sense)
    plan.check(cost, src.weights, tgt.weights)
    return plan


def _marginal_residual(x, rows, cols, m, n, src_w, tgt_w) -> float:
    row_sum = np.zeros(m)
    col_sum = np.zeros(n)
    np.add.at(row_sum, rows, x)
    np.add.at(col_sum, cols, x)
    return max(float(np.max(np.abs(row_sum - src_w))),
               float(np.max(np.abs(col_sum - tgt_w))))


def inner_product_cost(mu: DiscreteMeasure, nu: DiscreteMeasure) -> CostMatrix:
    if mu.dim != nu.dim:
        raise TransportError("measures live in different dimensions")
    return CostMatrix(mu.atoms @ nu.atoms.T, provenance="inner-product")


def brenier_W(mu: DiscreteMeasure, nu: DiscreteMeasure, sense: str) -> TransportPlan:
    """Optimal transport for the pairing cost <v, x> (minimized or maximized)."""
    return solve_kantorovich(inner_product_cost(mu, nu), mu, nu, sense)


def monotone_coupling_1d(mu: DiscreteMeasure, nu: DiscreteMeasure) -> TransportPlan:
    """Quantile (Hoeffding-Frechet) coupling of two 1-d measures.

    Matches cumulative weights of the sorted atoms; it maximizes the pairing
    cost, so its value agrees with the max-sense LP.
    """
    if mu.dim != 1 or nu.dim != 1:
        raise TransportError("monotone coupling requires d = 1")
    cmu, cnu = canonical(mu), canonical(nu)
    if cmu.n != mu.n or cnu.n != nu.n:
        raise TransportError("monotone coupling with coincident atoms is ambiguous; "
                             "canonicalize the measures first")
    # map canonical indices back to the caller's atom order
    mu_order = np.lexsort(mu.atoms.T[::-1])
    nu_order = np.lexsort(nu.atoms.T[::-1])

    coupling_c = np.zeros((cmu.n, cnu.n))
    i = j = 0
    wi = cmu.weights[0]
    wj = cnu.weights[0]
    while True:
        step = min(wi, wj)
        coupling_c[i, j] += step
        wi -= step
        wj -= step
        if wi <= 1e-15:
            i += 1
            if i == cmu.n:
                break
            wi = cmu.weights[i]
        if wj <= 1e-15:
            j += 1
            if j == cnu.n:
                break
            wj = cnu.weights[j]

    # scatter the canonical coupling back through the sort maps
    coupling = np.zeros((mu.n, nu.n))
    coupling[np.ix_(mu_order, nu_order)] = coupling_c
    value = float(np.sum(coupling * (mu.atoms @ nu.atoms.T)))
    cost = inner_product_cost(mu, nu)
    # reuse LP machinery for potentials of the same problem
    lp = solve_kantorovich(cost, mu, nu, "max")
    return TransportPlan(coupling, value, lp.dual_source, lp.dual_target, "max")


def c_transform(potential: np.ndarray, cost: CostMatrix, direction: str) -> np.ndarray:
    """Kantorovich transforms between source and target potentials.

    source_to_target: phi1(x_j) = min_i { cost(i, j) + phi0(y_i) }
    target_to_source: phi0(y_i) = max_j { phi1(x_j) - cost(i, j) }
    """
    phi = np.asarray(potential, dtype=float)
    C = cost.values
    if direction == "source_to_target":
        if phi.size != C.shape[0]:
            raise TransportError("potential must be defined on all source atoms")
        return np.min(C + phi[:, None], axis=0)
    if direction == "target_to_source":
        if phi.size != C.shape[1]:
            raise TransportError("potential must be defined on all target atoms")
        return np.max(phi[None, :] - C, axis=1)
    raise TransportError(f"unknown transform direction {direction!r}")


def brute_force_value(cost: CostMatrix, sense: str = "min") -> float:
    """Permutation-coupling optimum for equal-weight square instances (n <= 8)."""
    from itertools import permutations

    C = cost.values
    n = C.shape[0]
    if C.shape[0] != C.shape[1] or n > 8:
        raise TransportError("brute force oracle needs a small square instance")
    best: Optional[float] = None
    for perm in permutations(range(n)):
        v = float(sum(C[i, perm[i]] for i in range(n))) / n
        if best is None or (v < best if sense == "min" else v > best):
            best = v
    return best
