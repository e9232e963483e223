"""Ballistic transport problems and their certificates.

Headline operations on discrete measures mu0 (costate side) and nuT (state
side) for a jointly convex running cost:

  ballistic_min / ballistic_max     exact LPs for the ballistic pairing cost
  interpolate_min                   three-marginal certificate of
                                    Bmin = inf_nu { Wmin(mu0,nu) + C_T(nu,nuT) }
  interpolate_max                   constructive certificate of
                                    Bmax = sup_mu { Wmax(nuT,mu) - C~_T(mu0,mu) }
  optimal_map_min / optimal_map_max flow-composed optimal maps (d = 1)
  recover_fixed_end                 C_T = sup_mu { Bmin(mu,nuT) - Wmin(nu0,mu) }
  factorization_check               translation-cost factorization through two
                                    concave-potential maps
  eulerian_check                    space-time LP cross-check (see eulerian.py)

LP equalities are certified at 1e-7; anything passing through a grid or a
finite-difference gradient carries a stated grid tolerance instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .convexity import (ConvexProfile, Lagrangian, dual_lagrangian, hamiltonian,
                        midpoint_convex_1d, INF)
from .dynamics import (ballistic_cost, ballistic_cost_matrix, ballistic_cost_full,
                       ballistic_gradient_x, fixed_end_cost, fixed_end_cost_matrix,
                       hamiltonian_flow, PhasePoint)
from .measures import DiscreteMeasure, canonical
from .transport import (CostMatrix, TransportPlan, solve_kantorovich, brenier_W,
                        c_transform, TransportError)

LP_TOL = 1e-7
FLOW_STEPS = 2000


class InterpolationError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# ballistic LPs
# ---------------------------------------------------------------------------

def ballistic_cost_lp(L: Lagrangian, mu0: DiscreteMeasure, nuT: DiscreteMeasure,
                      T: float) -> CostMatrix:
    if mu0.space != "costate" or nuT.space != "state":
        raise InterpolationError("expects a costate-tagged source and state-tagged target")
    return CostMatrix(ballistic_cost_matrix(L, mu0.atoms, nuT.atoms, T),
                      provenance="ballistic")


def ballistic_min(L: Lagrangian, mu0: DiscreteMeasure, nuT: DiscreteMeasure,
                  T: float) -> TransportPlan:
    """Min-sense ballistic transport; v-side potential re-tightened so that
    -dual_source is concave (a pointwise min of concave ballistic slices)."""
    cost = ballistic_cost_lp(L, mu0, nuT, T)
    plan = solve_kantorovich(cost, mu0, nuT, "min")
    plan.dual_source = c_transform(plan.dual_target, cost, "target_to_source")
    _normalize(plan)
    plan.check(cost, mu0.weights, nuT.weights)
    return plan


def ballistic_max(L: Lagrangian, mu0: DiscreteMeasure, nuT: DiscreteMeasure,
                  T: float) -> TransportPlan:
    """Max-sense ballistic transport; x-side potential re-tightened so that
    dual_target is convex (a pointwise max of convex ballistic slices)."""
    cost = ballistic_cost_lp(L, mu0, nuT, T)
    plan = solve_kantorovich(cost, mu0, nuT, "max")
    # max-sense c-transform: h(x) = max_i { b(v_i, x) + g(v_i) }
    plan.dual_target = np.max(cost.values + plan.dual_source[:, None], axis=0)
    _normalize(plan)
    plan.check(cost, mu0.weights, nuT.weights)
    return plan


def _normalize(plan: TransportPlan) -> None:
    shift = plan.dual_source[0]
    plan.dual_source = plan.dual_source - shift
    plan.dual_target = plan.dual_target - shift


def fixed_end_transport(L: Lagrangian, nu0: DiscreteMeasure, nuT: DiscreteMeasure,
                        T: float) -> TransportPlan:
    """Optimal transport for the fixed-endpoint dynamic cost."""
    C = CostMatrix(fixed_end_cost_matrix(L, nu0.atoms, nuT.atoms, T), provenance="fixed-end")
    return solve_kantorovich(C, nu0, nuT, "min")


def dual_fixed_end_transport(L: Lagrangian, mu0: DiscreteMeasure, muT: DiscreteMeasure,
                             T: float) -> TransportPlan:
    """Optimal transport for the dual dynamic cost on costate space."""
    Lt = dual_lagrangian(L)
    C = CostMatrix(fixed_end_cost_matrix(Lt, mu0.atoms, muT.atoms, T),
                   provenance="dual-fixed-end")
    return solve_kantorovich(C, mu0, muT, "min")


# ---------------------------------------------------------------------------
# interpolation certificates
# ---------------------------------------------------------------------------

@dataclass
class InterpolationCertificate:
    direct_value: float
    interpolant: DiscreteMeasure
    w_part: float
    c_part: float
    gap: float
    sense: str
    certified: bool
    tolerance: float
    hint: str = ""
    three_marginal_value: Optional[float] = None

    def to_json_dict(self) -> dict:
        return {"direct_value": self.direct_value, "w_part": self.w_part,
                "c_part": self.c_part, "gap": self.gap, "sense": self.sense,
                "certified": self.certified, "tolerance": self.tolerance,
                "hint": self.hint, "three_marginal_value": self.three_marginal_value,
                "interpolant": {"atoms": self.interpolant.atoms.tolist(),
                                "weights": self.interpolant.weights.tolist()}}


def default_candidate_grid(L: Lagrangian, mu0: DiscreteMeasure, nuT: DiscreteMeasure,
                           T: float, fill: int = 33) -> np.ndarray:
    """Flow-preimage seeds (the ballistic minimizers y*(v, x)) plus the atom
    union plus a uniform fill of the spanned interval (d = 1)."""
    if mu0.dim != 1:
        raise InterpolationError("default candidate grid is 1-d")
    seeds = [ballistic_cost_full(L, v, x, T)[1][0]
             for v in mu0.atoms for x in nuT.atoms]
    pts = np.concatenate([np.asarray(seeds), mu0.atoms[:, 0], nuT.atoms[:, 0]])
    lo, hi = pts.min(), pts.max()
    pad = 0.25 * (hi - lo + 1.0)
    grid = np.concatenate([pts, np.linspace(lo - pad, hi + pad, fill)])
    return np.unique(np.round(grid, 12))[:, None]


def interpolate_min(L: Lagrangian, mu0: DiscreteMeasure, nuT: DiscreteMeasure, T: float,
                    candidate_grid, tolerance: float = LP_TOL) -> InterpolationCertificate:
    """Three-marginal LP over (v, y, x) with y restricted to candidate_grid.

    The y-marginal of the optimizer is the interpolating measure; the
    certificate compares the three-marginal value with the direct ballistic
    LP and reports the decomposition through its own Wmin and C_T LPs.
    """
    grid = np.atleast_2d(np.asarray(candidate_grid, float))
    if grid.shape[0] == 1 and grid.shape[1] > 1:
        grid = grid.T
    m, G, n = mu0.n, grid.shape[0], nuT.n

    pair_vy = mu0.atoms @ grid.T                                   # (m, G)
    cyx = fixed_end_cost_matrix(L, grid, nuT.atoms, T)             # (G, n)
    cost3 = pair_vy[:, :, None] + cyx[None, :, :]                  # (m, G, n)

    rows_i = np.repeat(np.arange(m), G * n)
    cols = np.arange(m * G * n)
    ones = np.ones(m * G * n)
    A = sp.vstack([
        sp.csr_matrix((ones, (rows_i, cols)), shape=(m, m * G * n)),
        sp.csr_matrix((ones, (np.tile(np.arange(n), m * G), cols)), shape=(n, m * G * n)),
    ])
    b = np.concatenate([mu0.weights, nuT.weights])
    res = linprog(cost3.ravel(), A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    if res.status != 0:
        raise InterpolationError(f"three-marginal LP failed: {res.message}")
    pi = res.x.reshape(m, G, n)
    three_val = float(res.fun)

    y_mass = pi.sum(axis=(0, 2))
    keep = y_mass > 1e-13
    interpolant = canonical(DiscreteMeasure(grid[keep], y_mass[keep] / y_mass[keep].sum(),
                                            "state"))

    direct = ballistic_min(L, mu0, nuT, T).value
    w_part = brenier_W(mu0, interpolant, "min").value
    c_part = fixed_end_transport(L, interpolant, nuT, T).value
    gap = (w_part + c_part) - direct
    certified = abs(three_val - direct) <= max(tolerance, 1e-9) and gap <= max(tolerance, 1e-9)
    hint = "" if certified else "refine the candidate grid (include the ballistic minimizers y*(v,x))"
    return InterpolationCertificate(direct, interpolant, w_part, c_part, gap, "min",
                                    certified, tolerance, hint, three_val)


def interpolate_max(L: Lagrangian, mu0: DiscreteMeasure, nuT: DiscreteMeasure, T: float,
                    tolerance: float = 1e-4) -> InterpolationCertificate:
    """Constructive certificate for the max-sense interpolation.

    From the optimal max plan, each support pair (v_i, x_j) receives the
    costate w_ij = d/dx b_T(v_i, x_j); pushing the plan mass to those points
    builds the interpolating measure mu_T, whose selection lies in the
    subdifferential of the convexified target potential.  The certificate
    evaluates Wmax(nuT, mu_T) - C~_T(mu0, mu_T) by independent LPs.
    """
    if not L.jointly_convex:
        raise InterpolationError("max interpolation needs a jointly convex running cost")
    plan = ballistic_max(L, mu0, nuT, T)
    support = plan.support()
    ws, masses = [], []
    hint = ""
    col_count = np.bincount(support[:, 1], minlength=nuT.n)
    if np.any(col_count > 1):
        hint = "target potential not differentiable at a tied atom; plan-split selection used"
    for i, j in support:
        w = ballistic_gradient_x(L, mu0.atoms[i], nuT.atoms[j], T)
        ws.append(w)
        masses.append(plan.coupling[i, j])
    muT = canonical(DiscreteMeasure(np.array(ws), np.array(masses), "costate"))

    w_part = brenier_W(nuT, muT, "max").value
    c_part = dual_fixed_end_transport(L, mu0, muT, T).value
    gap = plan.value - (w_part - c_part)
    certified = abs(gap) <= tolerance
    return InterpolationCertificate(plan.value, muT, w_part, c_part, gap, "max",
                                    certified, tolerance, hint)


# ---------------------------------------------------------------------------
# optimal maps via Hamiltonian flows (d = 1)
# ---------------------------------------------------------------------------

@dataclass
class MapReport:
    sense: str
    sources: np.ndarray          # (n, d) atoms of the mapped measure
    images: np.ndarray           # (n, d) map images
    masses: np.ndarray
    transported_cost: float
    lp_value: float
    max_atom_distance: float
    pushforward_ok: bool
    flags: list = field(default_factory=list)

    @property
    def cost_error(self) -> float:
        return abs(self.transported_cost - self.lp_value)

    def to_json_dict(self) -> dict:
        return {"sense": self.sense, "transported_cost": self.transported_cost,
                "lp_value": self.lp_value, "max_atom_distance": self.max_atom_distance,
                "pushforward_ok": self.pushforward_ok, "flags": self.flags,
                "pairs": [[s.tolist(), i.tolist(), float(m)] for s, i, m in
                          zip(self.sources, self.images, self.masses)]}


def _pair_selection(plan: TransportPlan, flags: list, label: str):
    """One (row -> col) selection per unit of plan mass; lowest column first."""
    pairs = []
    for i in range(plan.coupling.shape[0]):
        cols = np.nonzero(plan.coupling[i] > 1e-12)[0]
        if cols.size == 0:
            raise InterpolationError(f"{label}: empty plan row")
        if cols.size > 1:
            flags.append(f"{label}: atom {i} splits mass; per-pair images kept")
        for j in cols:
            pairs.append((i, int(j), float(plan.coupling[i, j])))
    return pairs


def _atom_match(images: np.ndarray, masses: np.ndarray, target: DiscreteMeasure,
                tol: float):
    """Greatest distance from each image to the target support, and whether the
    merged image weights reproduce the target weights at tolerance tol."""
    dmax = 0.0
    weights = np.zeros(target.n)
    ok = True
    for img, mass in zip(images, masses):
        d = np.max(np.abs(target.atoms - img[None, :]), axis=1)
        j = int(np.argmin(d))
        dmax = max(dmax, float(d[j]))
        if d[j] > tol:
            ok = False
        weights[j] += mass
    if np.max(np.abs(weights - target.weights)) > tol:
        ok = False
    return dmax, ok


def optimal_map_min(L: Lagrangian, mu0: DiscreteMeasure, nuT: DiscreteMeasure, T: float,
                    tol: float = 1e-3, flow_steps: int = FLOW_STEPS) -> MapReport:
    """Flow-composed optimal map for the min-sense problem (d = 1).

    The interpolant nu0 comes from the three-marginal certificate; the
    concave potential of Wmin(mu0, nu0) selects the initial point for each
    costate atom, and the Hamiltonian flow carries (y, v) to the claimed
    target x over time T.
    """
    if mu0.dim != 1:
        raise InterpolationError("optimal maps are implemented for d = 1")
    flags: list = []
    cert = interpolate_min(L, mu0, nuT, T, default_candidate_grid(L, mu0, nuT, T))
    if not cert.certified:
        flags.append("interpolation certificate not tight; map may be off-support")
    nu0 = cert.interpolant
    wplan = brenier_W(mu0, nu0, "min")
    if not midpoint_convex_1d(nu0.atoms[:, 0], -wplan.dual_target):
        flags.append("sampled initial potential not concave; selection by lowest index")
    pairs = _pair_selection(wplan, flags, "Wmin plan")

    H = hamiltonian(L)
    sources, images, masses = [], [], []
    for i, k, mass in pairs:
        v = mu0.atoms[i]
        y = nu0.atoms[k]
        traj = hamiltonian_flow(H, PhasePoint(y, v), T, flow_steps)
        sources.append(v)
        images.append(traj.end.x)
        masses.append(mass)
    sources = np.array(sources)
    images = np.array(images)
    masses = np.array(masses)
    dmax, ok = _atom_match(images, masses, nuT, tol)
    cost = float(sum(m * ballistic_cost(L, s, img, T)
                     for s, img, m in zip(sources, images, masses)))
    lp = ballistic_min(L, mu0, nuT, T).value
    return MapReport("min", sources, images, masses, cost, lp, dmax, ok, flags)


def optimal_map_max(L: Lagrangian, mu0: DiscreteMeasure, nuT: DiscreteMeasure, T: float,
                    tol: float = 1e-3, flow_steps: int = FLOW_STEPS) -> MapReport:
    """Flow-composed optimal map for the max-sense problem (d = 1).

    Each support pair rides the dual Hamiltonian flow seen in swapped
    coordinates: starting from (y*, v) with y* the ballistic minimizer, the
    orbit's costate lands on the interpolant atom w, and the monotone
    coupling of Wmax(nuT, mu_T) carries w to the target atom.
    """
    if mu0.dim != 1:
        raise InterpolationError("optimal maps are implemented for d = 1")
    if not L.jointly_convex:
        raise InterpolationError("max map needs a jointly convex running cost")
    flags: list = []
    plan = ballistic_max(L, mu0, nuT, T)
    pairs = _pair_selection(plan, flags, "max plan")

    H = hamiltonian(L)
    sources, w_atoms, x_claims, masses = [], [], [], []
    for i, j, mass in pairs:
        v = mu0.atoms[i]
        x = nuT.atoms[j]
        y = ballistic_cost_full(L, v, x, T)[1]
        traj = hamiltonian_flow(H, PhasePoint(y, v), T, flow_steps)
        sources.append(v)
        w_atoms.append(traj.end.v)       # interpolant atom on costate space
        x_claims.append(traj.end.x)      # should reproduce the paired target
        masses.append(mass)
        if np.max(np.abs(traj.end.x - x)) > tol:
            flags.append(f"flow endpoint missed the paired target atom {j}")
    sources = np.array(sources)
    w_atoms = np.array(w_atoms)
    masses = np.array(masses)
    muT = canonical(DiscreteMeasure(w_atoms, masses, "costate"))

    # monotone (convex-potential) coupling from the interpolant to the target
    wb = brenier_W(nuT, muT, "max")
    images = []
    for k in range(w_atoms.shape[0]):
        d = np.max(np.abs(muT.atoms - w_atoms[k][None, :]), axis=1)
        col = int(np.argmin(d))
        rows = np.nonzero(wb.coupling[:, col] > 1e-12)[0]
        if rows.size != 1:
            flags.append("interpolant atom pairs with several targets; lowest index used")
        images.append(nuT.atoms[rows[0]])
    images = np.array(images)

    dmax, ok = _atom_match(images, masses, nuT, tol)
    cost = float(sum(m * ballistic_cost(L, s, img, T)
                     for s, img, m in zip(sources, images, masses)))
    # inverse-composition check: image -> interpolant -> source pairing returns start
    inv_ok = True
    for k in range(images.shape[0]):
        if float(np.max(np.abs(images[k] - x_claims[k]))) > tol:
            inv_ok = False
    if not inv_ok:
        flags.append("inverse composition drifted beyond tolerance")
    return MapReport("max", sources, images, masses, cost, plan.value, dmax, ok, flags)


# ---------------------------------------------------------------------------
# endpoint recovery and factorization
# ---------------------------------------------------------------------------

@dataclass
class RecoveryCertificate:
    hypothesis_met: bool
    fixed_end_value: float
    recovered_value: float
    mu: Optional[DiscreteMeasure]
    sup_over_candidates: float
    inequality_ok: bool
    tolerance: float

    @property
    def certified(self) -> bool:
        return self.hypothesis_met and abs(self.fixed_end_value - self.recovered_value) <= self.tolerance


def concave_restricted_dual(C: np.ndarray, ys: np.ndarray, w0: np.ndarray,
                            w1: np.ndarray):
    """Best Kantorovich dual value attainable with a concave initial potential.

    Solves max { sum h w1 - sum g w0 : h_j - g_i <= C_ij, g concave on the
    sorted 1-d sites ys }.  Equality with the unrestricted transport value is
    exactly the concave-initial-potential hypothesis for discrete data.
    """
    m, n = C.shape
    order = np.argsort(ys)
    obj = np.concatenate([w0, -w1])
    rows, cols, data = [], [], []
    r = 0
    for i in range(m):
        for j in range(n):
            rows += [r, r]
            cols += [m + j, i]
            data += [1.0, -1.0]
            r += 1
    for k in range(1, m - 1):
        a, b, c3 = order[k - 1], order[k], order[k + 1]
        lam = (ys[c3] - ys[b]) / (ys[c3] - ys[a])
        # concavity: g_b >= lam g_a + (1-lam) g_c  ->  lam g_a + (1-lam) g_c - g_b <= 0
        rows += [r, r, r]
        cols += [a, c3, b]
        data += [lam, 1.0 - lam, -1.0]
        r += 1
    A_ub = sp.csr_matrix((data, (rows, cols)), shape=(r, m + n))
    bounds = [(None, None)] * (m + n)
    bounds[0] = (0.0, 0.0)   # gauge: pin g at the first atom
    res = linprog(obj, A_ub=A_ub, b_ub=np.concatenate([C.ravel(), np.zeros(max(0, m - 2))]),
                  bounds=bounds, method="highs")
    if res.status != 0:
        raise InterpolationError(f"restricted dual LP failed: {res.message}")
    g = res.x[:m]
    h = res.x[m:]
    return float(-res.fun), g, h


def _tight_slopes_decreasing(pairs_y, pairs_v, tol: float = 1e-9) -> bool:
    """Sorted by base point, the tight-derivative selections must be
    non-increasing for a concave potential to extend off the atoms."""
    order = np.argsort(pairs_y)
    v = np.asarray(pairs_v, float)[order]
    return bool(np.all(np.diff(v) <= tol))


def recover_fixed_end(L: Lagrangian, nu0: DiscreteMeasure, nuT: DiscreteMeasure, T: float,
                      candidate_costate_grid=None, tolerance: float = 1e-4,
                      n_candidates: int = 20, seed: int = 0) -> RecoveryCertificate:
    """Recover the fixed-endpoint transport value from ballistic data:
    C_T(nu0, nuT) = sup_mu { Bmin(mu, nuT) - Wmin(nu0, mu) } when the initial
    potential of C_T is concave.  The candidate mu is built by pushing nu0
    through the concave potential's gradient, realized per support pair as
    v = -d/dy c_T(y, x).
    """
    if nu0.dim != 1:
        raise InterpolationError("endpoint recovery is implemented for d = 1")
    cplan = fixed_end_transport(L, nu0, nuT, T)

    # hypothesis: some concave initial potential attains the transport value,
    # and the tight derivatives extend to a concave function off the atoms
    C = CostMatrix(fixed_end_cost_matrix(L, nu0.atoms, nuT.atoms, T))
    restricted, _, _ = concave_restricted_dual(C.values, nu0.atoms[:, 0],
                                               nu0.weights, nuT.weights)
    hypothesis = restricted >= cplan.value - max(tolerance, 1e-7)

    vs, masses, ys = [], [], []
    h = 1e-5
    for i, j in cplan.support():
        y = nu0.atoms[i]
        x = nuT.atoms[j]
        cm = fixed_end_cost(L, y - h, x, T, return_path=False).value
        cp = fixed_end_cost(L, y + h, x, T, return_path=False).value
        vs.append([-(cp - cm) / (2 * h)])
        masses.append(cplan.coupling[i, j])
        ys.append(float(y[0]))
    hypothesis = hypothesis and _tight_slopes_decreasing(ys, np.ravel(vs), 1e-7)

    mu = None
    recovered = float("nan")
    if hypothesis:
        mu = canonical(DiscreteMeasure(np.array(vs), np.array(masses), "costate"))
        bmin = ballistic_min(L, mu, nuT, T).value
        wmin = brenier_W(nu0, mu, "min").value
        recovered = bmin - wmin

    # inequality sweep over candidate costate measures
    rng = np.random.default_rng(seed)
    if candidate_costate_grid is None:
        span = np.concatenate([nu0.atoms[:, 0], nuT.atoms[:, 0]])
        lo, hi = span.min() - 1.0, span.max() + 1.0
        candidate_costate_grid = np.linspace(lo, hi, 41)
    cg = np.asarray(candidate_costate_grid, float).ravel()
    sup_cand = -INF
    ineq_ok = True
    for _ in range(n_candidates):
        k = int(rng.integers(1, min(5, cg.size) + 1))
        atoms = rng.choice(cg, size=k, replace=False)[:, None]
        wts = rng.dirichlet(np.ones(k))
        cand = canonical(DiscreteMeasure(atoms, wts, "costate"))
        val = ballistic_min(L, cand, nuT, T).value - brenier_W(nu0, cand, "min").value
        sup_cand = max(sup_cand, val)
        if val > cplan.value + max(tolerance, 1e-7):
            ineq_ok = False
    return RecoveryCertificate(hypothesis, cplan.value, recovered, mu, sup_cand,
                               ineq_ok, tolerance)


def _concave_envelope(xs: np.ndarray, vals: np.ndarray) -> np.ndarray:
    """Upper concave envelope of 1-d samples, evaluated at the sample sites."""
    n = xs.size
    if n <= 2:
        return vals.copy()
    hull = [0]
    for i in range(1, n):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            # drop b when it lies below chord a--i
            lam = (xs[b] - xs[a]) / (xs[i] - xs[a])
            if vals[b] <= vals[a] + lam * (vals[i] - vals[a]) + 1e-15:
                hull.pop()
            else:
                break
        hull.append(i)
    out = np.empty(n)
    for i in range(n):
        j = np.searchsorted(xs[hull], xs[i], side="right")
        j = min(max(j, 1), len(hull) - 1)
        a, b = hull[j - 1], hull[j]
        if xs[b] == xs[a]:
            out[i] = vals[a]
        else:
            lam = (xs[i] - xs[a]) / (xs[b] - xs[a])
            out[i] = vals[a] + lam * (vals[b] - vals[a])
    return out


@dataclass
class FactorizationReport:
    hypothesis_met: bool
    transport_value: float        # C_1(nu0, nu1)
    conjugate_mass: float         # integral of c* against the intermediate mu0
    via_map: float                # cost of the composed coupling (= C_1 when tight)
    via_pairings: float           # Wmin(mu0, nu1) - Wmin(nu0, mu0) (= C_1 + K)
    map_like: bool
    pushforward_ok: bool
    tolerance: float

    @property
    def certified(self) -> bool:
        shifted = self.transport_value + self.conjugate_mass
        ok = (self.hypothesis_met and self.pushforward_ok
              and abs(self.via_pairings - shifted) <= self.tolerance)
        if self.map_like:
            ok = ok and abs(self.via_map - self.transport_value) <= self.tolerance
        return ok


def factorization_check(kinetic_profile, nu0: DiscreteMeasure, nu1: DiscreteMeasure,
                        tolerance: float = 1e-4) -> FactorizationReport:
    """For the translation cost c(x - y) with convex c, factor the optimal
    coupling through two pairing-optimal stages nu0 -> mu0 -> nu1, where
    mu0 = (grad of the concave initial potential)_# nu0, realized per support
    pair as v = c'(x - y).

    Certified identities: the pairing difference Wmin(mu0, nu1) - Wmin(nu0, mu0)
    equals C_1 plus the conjugate mass of c* under mu0, and, when the composed
    coupling is single-valued, its cost reproduces C_1 itself.
    """
    if nu0.dim != 1:
        raise InterpolationError("factorization check is implemented for d = 1")
    L = Lagrangian("translation", V=ConvexProfile("zero"), K=kinetic_profile)
    T = 1.0
    cplan = fixed_end_transport(L, nu0, nu1, T)
    C = CostMatrix(fixed_end_cost_matrix(L, nu0.atoms, nu1.atoms, T))
    restricted, _, _ = concave_restricted_dual(C.values, nu0.atoms[:, 0],
                                               nu0.weights, nu1.weights)
    hypothesis = restricted >= cplan.value - max(tolerance, 1e-7)

    # grad phi per support pair: v = c'(x - y); keep the pre-merge pair list
    vs, masses, srcs = [], [], []
    for i, j in cplan.support():
        diff = nu1.atoms[j] - nu0.atoms[i]
        vs.append(np.atleast_1d(kinetic_profile.grad(diff)))
        masses.append(float(cplan.coupling[i, j]))
        srcs.append(int(i))
    vs_arr = np.array(vs)
    hypothesis = hypothesis and _tight_slopes_decreasing(
        [float(nu0.atoms[i, 0]) for i in srcs], vs_arr[:, 0], 1e-9)
    mu0 = canonical(DiscreteMeasure(vs_arr, np.array(masses), "costate"))

    cstar = kinetic_profile.conjugate()
    Kconst = float(sum(m * float(np.asarray(cstar(v))) for v, m in zip(vs_arr, masses)))

    # psi stage: pairing-optimal plan mu0 -> nu1, then compose through mu0
    wplan = brenier_W(mu0, nu1, "min")
    row_of = [int(np.argmin(np.max(np.abs(mu0.atoms - v[None, :]), axis=1))) for v in vs_arr]
    composed = np.zeros((nu0.n, nu1.n))
    for (v_row, m, i) in zip(row_of, masses, srcs):
        kernel = wplan.coupling[v_row] / mu0.weights[v_row]
        composed[i] += m * kernel
    map_like = all(np.count_nonzero(composed[i] > 1e-12) <= 1 for i in range(nu0.n))
    diffs = nu1.atoms[None, :, 0] - nu0.atoms[:, None, 0]
    via_map = float(np.sum(composed * np.asarray(kinetic_profile(diffs[:, :, None]))))
    push_ok = bool(np.max(np.abs(composed.sum(axis=0) - nu1.weights)) <= 1e-9)
    via_pair = wplan.value - brenier_W(nu0, mu0, "min").value

    return FactorizationReport(hypothesis, cplan.value, Kconst, via_map, via_pair,
                               map_like, push_ok, tolerance)


# ---------------------------------------------------------------------------
# dual-formula certificates
# ---------------------------------------------------------------------------

def min_dual_formula_value(L: Lagrangian, mu0: DiscreteMeasure, nuT: DiscreteMeasure,
                           T: float, g: np.ndarray, y_grid: np.ndarray) -> float:
    """Evaluate the backward-value dual form at a target potential g:
    sum g d(nuT) + sum (Phi0_{g,-})_* d(mu0), with the backward value computed
    on y_grid and its concave transform taken over the same grid."""
    y = np.asarray(y_grid, float).reshape(-1, 1)
    Cyx = fixed_end_cost_matrix(L, y, nuT.atoms, T)
    phi0 = np.max(g[None, :] - Cyx, axis=1)                 # backward value at t=0
    star = np.min(mu0.atoms @ y.T - phi0[None, :], axis=1)  # concave transform at mu0 atoms
    return float(g @ nuT.weights + star @ mu0.weights)


def max_dual_formula_value(L: Lagrangian, mu0: DiscreteMeasure, nuT: DiscreteMeasure,
                           T: float, h: np.ndarray, w_grid: np.ndarray) -> float:
    """Evaluate the dual-space backward form at a convex target potential h:
    sum h d(nuT) + sum Phi~0_{h*,-} d(mu0), with h* sampled on w_grid."""
    Lt = dual_lagrangian(L)
    w = np.asarray(w_grid, float).reshape(-1, 1)
    hstar = np.max(w @ nuT.atoms.T - h[None, :], axis=1)    # convex transform on w grid
    Cvw = fixed_end_cost_matrix(Lt, mu0.atoms, w, T)
    phi0 = np.max(hstar[None, :] - Cvw, axis=1)
    return float(h @ nuT.weights + phi0 @ mu0.weights)


from .eulerian import eulerian_check  # noqa: E402  (re-export; lives in its own file)

__all__ = [
    "ballistic_min", "ballistic_max", "interpolate_min", "interpolate_max",
    "optimal_map_min", "optimal_map_max", "recover_fixed_end", "factorization_check",
    "fixed_end_transport", "dual_fixed_end_transport", "default_candidate_grid",
    "min_dual_formula_value", "max_dual_formula_value", "eulerian_check",
    "InterpolationCertificate", "MapReport", "RecoveryCertificate", "FactorizationReport",
]
