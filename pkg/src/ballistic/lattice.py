"""Controlled-random-walk lattice: backward dynamic programming for the
drift-controlled value functions, the prescribed-marginal stochastic
transport cost, and the two stochastic ballistic brackets (1-d).

The walk matches the unit-diffusion SDE moment-by-moment: a trinomial step
with mean beta*dt and variance dt, valid under dt <= dx^2 and a bounded
control ladder.  Boundaries reflect (excess probability folds back onto the
edge node), so boxes must be sized generously around the data.

The prescribed-marginal cost is the concave maximization over terminal
potentials

    F(f) = <f, nu_T> - <Psi^0_f, nu_0>,

solved by a bundle (cutting-plane) supergradient ascent: every DP evaluation
contributes the exact supergradient nu_T - law_T(optimal policy), and the
polyhedral model is maximized by a small LP until the model gap certifies
the value.  Control-set truncation is observable: argmax hits on the ladder
boundary are counted and flagged, never silent.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .convexity import Lagrangian, dual_lagrangian, hamiltonian
from .measures import DiscreteMeasure
from .transport import CostMatrix, solve_kantorovich


class LatticeError(RuntimeError):
    pass


class CFLError(LatticeError):
    pass


# ---------------------------------------------------------------------------
# lattice and step kernels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Lattice:
    x_left: float
    dx: float
    n_nodes: int
    T: float
    n_steps: int

    def __post_init__(self):
        if self.n_steps < 1 or self.n_nodes < 3:
            raise LatticeError("need at least one step and three nodes")
        if self.dt > self.dx ** 2 + 1e-12:
            raise CFLError(f"dt = {self.dt:.3g} exceeds dx^2 = {self.dx**2:.3g}")

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        return self.x_left + self.dx * np.arange(self.n_nodes)

    def index_of(self, x: float, tol: float = 1e-9) -> int:
        i = int(round((x - self.x_left) / self.dx))
        if i < 0 or i >= self.n_nodes or abs(self.nodes[i] - x) > tol:
            raise LatticeError(f"point {x} is not a lattice node")
        return i


def lattice_covering(points: np.ndarray, T: float, n_steps: int, dx: float,
                     sigma_pad: float = 4.0) -> Lattice:
    """Box the data plus sigma_pad walk standard deviations, snapped to dx."""
    lo = float(np.min(points)) - sigma_pad * np.sqrt(T)
    hi = float(np.max(points)) + sigma_pad * np.sqrt(T)
    left = np.floor(lo / dx) * dx
    n = int(np.ceil((hi - left) / dx)) + 1
    return Lattice(left, dx, n, T, n_steps)


def control_ladder(b_max: float, db: float) -> np.ndarray:
    k = int(round(b_max / db))
    return db * np.arange(-k, k + 1)


def step_probabilities(controls: np.ndarray, dx: float, dt: float):
    """Trinomial jump probabilities with exact mean beta*dt and variance dt."""
    b = np.asarray(controls, float)
    mean = b * dt
    up = (dt + mean ** 2 + mean * dx) / (2 * dx * dx)
    dn = (dt + mean ** 2 - mean * dx) / (2 * dx * dx)
    stay = 1.0 - up - dn
    if np.any(up < -1e-14) or np.any(dn < -1e-14) or np.any(stay < -1e-14):
        raise CFLError("control ladder too wide for this lattice: "
                       "a jump probability left [0, 1]")
    return np.clip(up, 0, 1), np.clip(dn, 0, 1), np.clip(stay, 0, 1)


def drift_probabilities(controls: np.ndarray, dx: float, dt: float):
    """Zero-noise mode: split beta*dt across the two neighbouring nodes."""
    b = np.asarray(controls, float)
    frac = b * dt / dx
    if np.any(np.abs(frac) > 1.0 + 1e-12):
        raise CFLError("drift exceeds one node per step in zero-noise mode")
    up = np.clip(frac, 0, 1)
    dn = np.clip(-frac, 0, 1)
    stay = 1.0 - up - dn
    return up, dn, stay


# ---------------------------------------------------------------------------
# backward DP and forward law
# ---------------------------------------------------------------------------

@dataclass
class LatticeValueField:
    lattice: Lattice
    values: np.ndarray          # (K+1, n)
    policy_idx: np.ndarray      # (K, n) argmax control indices
    controls: np.ndarray
    equation_tag: str
    diffusion: bool

    @property
    def terminal(self) -> np.ndarray:
        return self.values[-1]

    def to_csv(self, path) -> None:
        nodes = self.lattice.nodes
        dt = self.lattice.dt
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("t,x,value\n")
            for k in range(self.values.shape[0]):
                for i in range(nodes.size):
                    fh.write(f"{k * dt!r},{nodes[i]!r},{self.values[k, i]!r}\n")


@dataclass
class ControlPolicy:
    drifts: np.ndarray          # (K, n)
    b_max: float
    boundary_hits: int

    @property
    def truncation_flagged(self) -> bool:
        return self.boundary_hits > 0


def _expected_next(values: np.ndarray, up: float, dn: float):
    """E[next value] per node under reflecting boundaries, in shift form so a
    constant added to `values` passes through unchanged."""
    mid = values
    vup = np.concatenate([values[1:], values[-1:]])
    vdn = np.concatenate([values[:1], values[:-1]])
    return mid + up * (vup - mid) + dn * (vdn - mid)


def hjb_backward(L: Lagrangian, terminal: np.ndarray, lattice: Lattice,
                 controls: np.ndarray, diffusion: bool = True,
                 tag: str = "HJB") -> LatticeValueField:
    """Backward dynamic programming for the controlled-walk value function:

        Psi(t - dt, i) = max_b { E[Psi(t, step_i(b))] - L(x_i, b) dt }.

    The terminal slice equals `terminal` exactly.
    """
    controls = np.asarray(controls, float)
    if controls.size == 0:
        raise LatticeError("empty control set")
    terminal = np.asarray(terminal, float)
    if terminal.size != lattice.n_nodes:
        raise LatticeError("terminal data must live on the lattice nodes")
    dt, dx = lattice.dt, lattice.dx
    up, dn, _ = (step_probabilities if diffusion else drift_probabilities)(controls, dx, dt)
    nodes = lattice.nodes
    run = np.empty((controls.size, nodes.size))
    for b in range(controls.size):
        run[b] = np.asarray(L.value(nodes[:, None], np.full((nodes.size, 1), controls[b])))
    K = lattice.n_steps
    values = np.empty((K + 1, nodes.size))
    policy = np.empty((K, nodes.size), dtype=int)
    values[K] = terminal
    for k in range(K - 1, -1, -1):
        cand = np.empty((controls.size, nodes.size))
        for b in range(controls.size):
            cand[b] = _expected_next(values[k + 1], up[b], dn[b]) - dt * run[b]
        policy[k] = np.argmax(cand, axis=0)
        values[k] = cand[policy[k], np.arange(nodes.size)]
    return LatticeValueField(lattice, values, policy, controls, tag, diffusion)


def forward_law(field: LatticeValueField, rho0: np.ndarray) -> np.ndarray:
    """Push an initial law through the field's argmax policy; (K+1, n)."""
    lat = field.lattice
    up, dn, stay = (step_probabilities if field.diffusion else drift_probabilities)(
        field.controls, lat.dx, lat.dt)
    laws = np.empty((lat.n_steps + 1, lat.n_nodes))
    laws[0] = np.asarray(rho0, float)
    for k in range(lat.n_steps):
        b = field.policy_idx[k]
        pu, pd, ps = up[b], dn[b], stay[b]
        mass = laws[k]
        mup = mass * pu
        mdn = mass * pd
        nxt = mass * ps
        # reflecting: edge overflow folds back on the edge node
        nxt[1:] += mup[:-1]
        nxt[-1] += mup[-1]
        nxt[:-1] += mdn[1:]
        nxt[0] += mdn[0]
        laws[k + 1] = nxt
    return laws


def policy_cost(field: LatticeValueField, L: Lagrangian, rho0: np.ndarray) -> float:
    """Expected running cost of the field's argmax policy from law rho0."""
    lat = field.lattice
    laws = forward_law(field, rho0)
    nodes = lat.nodes
    total = 0.0
    for k in range(lat.n_steps):
        beta = field.controls[field.policy_idx[k]]
        run = np.asarray(L.value(nodes[:, None], beta[:, None]))
        total += lat.dt * float(laws[k] @ run)
    return total


def extract_drift(field: LatticeValueField, L: Lagrangian) -> ControlPolicy:
    """Argmax drift per (time, node), with ladder-boundary hits flagged."""
    drifts = field.controls[field.policy_idx]
    hits = int(np.sum((field.policy_idx == 0) | (field.policy_idx == field.controls.size - 1)))
    return ControlPolicy(drifts, float(np.max(np.abs(field.controls))), hits)


def drift_consistency_residual(field: LatticeValueField, L: Lagrangian) -> float:
    """max | beta*(t, x) - dH/dq(x, grad Psi(t+dt, x)) | over interior nodes."""
    H = hamiltonian(L)
    lat = field.lattice
    nodes = lat.nodes
    worst = 0.0
    for k in range(lat.n_steps):
        psi = field.values[k + 1]
        grad = (psi[2:] - psi[:-2]) / (2 * lat.dx)
        beta = field.controls[field.policy_idx[k]][1:-1]
        target = np.array([np.asarray(H.grad_q(nodes[1 + i], np.atleast_1d(g))).ravel()[0]
                           for i, g in enumerate(grad)])
        worst = max(worst, float(np.max(np.abs(beta - target))))
    return worst


# ---------------------------------------------------------------------------
# prescribed-marginal stochastic transport cost
# ---------------------------------------------------------------------------

@dataclass
class MTResult:
    value: float
    potential: np.ndarray
    certified: bool
    iterations: int
    model_gap: float
    boundary_hits: int = 0
    cap_hit: bool = False


def default_potential_cap(L: Lagrangian, lattice: Lattice, controls: np.ndarray) -> float:
    """Generous bound on terminal-potential oscillation; a binding cap marks a
    (numerically) non-transportable marginal pair, whose true cost is +inf."""
    nodes = lattice.nodes
    lmax = float(np.max(np.asarray(L.value(nodes[:, None],
                                           np.full((nodes.size, 1), np.max(np.abs(controls)))))))
    return 32.0 * (1.0 + float(np.max(np.abs(nodes))) + lattice.T * lmax)


def mt_cost(L: Lagrangian, nu0: np.ndarray, nuT: np.ndarray, lattice: Lattice,
            controls: np.ndarray, tol: float = 1e-9, max_iter: int = 600,
            diffusion: bool = True, f_cap: Optional[float] = None,
            pool: Optional["CutPool"] = None) -> MTResult:
    """Least expected running cost transporting law nu0 to law nuT on the walk,
    by a stabilized bundle ascent on the terminal-potential objective

        F(f) = <f, nu_T> - <Psi^0_f, nu_0>.

    Each iteration evaluates one backward DP (value + exact supergradient),
    maximizes the polyhedral model inside a trust box around the incumbent,
    and periodically solves the full-box model for a certified optimality gap.
    The pool is seeded with linear potentials over the control ladder, which
    span the transport-relevant directions.

    Certification needs the global model gap below tol with the maximizer
    strictly inside the potential box; a maximizer pinned to the box signals
    an unreachable target law (the unrestricted supremum diverges) and the
    value is returned flagged instead.
    """
    nu0 = np.asarray(nu0, float)
    nuT = np.asarray(nuT, float)
    n = lattice.n_nodes
    if nu0.size != n or nuT.size != n:
        raise LatticeError("marginals must be given as node masses")
    if abs(nu0.sum() - 1) > 1e-9 or abs(nuT.sum() - 1) > 1e-9:
        raise LatticeError("marginals must be probability vectors")
    radius = f_cap if f_cap is not None else default_potential_cap(L, lattice, controls)
    if pool is None:
        pool = CutPool(L, lattice, controls, diffusion)
    if not pool.entries:
        pool.seed(lattice, controls)

    points = [e[0] for e in pool.entries]
    vals = [pool.value_at(r, nu0, nuT) for r in range(len(pool.entries))]
    grads = [pool.grad_at(r, nu0, nuT) for r in range(len(pool.entries))]

    def absorb(r: int):
        points.append(pool.entries[r][0])
        vals.append(pool.value_at(r, nu0, nuT))
        grads.append(pool.grad_at(r, nu0, nuT))

    best = int(np.argmax(vals))
    best_val = vals[best]
    best_f = points[best].copy()
    best_hits = pool.entries[best][3]
    model_gap = np.inf
    cap_hit = False
    trust = 2.0
    it = 0

    def model_prox(sel_center, sel_trust):
        sel = _select_bundle(vals)
        return _bundle_step([points[s] for s in sel], [vals[s] for s in sel],
                            [grads[s] for s in sel], n, radius,
                            center=sel_center, trust=sel_trust)

    def model_full():
        # the certification bound uses every cut: more cuts only tighten it
        return _bundle_step(points, vals, grads, n, radius)

    while it < max_iter:
        it += 1
        f_prox, bound_prox = model_prox(best_f, trust)
        predicted = bound_prox - best_val
        if predicted <= tol:
            # local model exhausted: certify against the full box, but step
            # outward gradually rather than jumping to a box corner
            f_glob, bound = model_full()
            model_gap = bound - best_val
            if model_gap <= tol:
                cap_hit = _cap_binds(points, vals, grads, n, radius, bound, tol)
                break
            trust = min(4.0 * trust, radius)
            f_prox = best_f + np.clip(f_glob - best_f, -trust, trust)
            f_prox[0] = 0.0
        r = pool.add(f_prox)
        absorb(r)
        if vals[-1] > best_val:
            gain = vals[-1] - best_val
            best_val = vals[-1]
            best_f = points[-1].copy()
            best_hits = pool.entries[r][3]
            if predicted > 0 and gain >= 0.25 * predicted:
                trust = min(2.0 * trust, radius)
        else:
            trust = max(0.6 * trust, 1e-4)
        if it % 25 == 0:
            f_glob, bound = model_full()
            model_gap = bound - best_val
            if model_gap <= tol:
                cap_hit = _cap_binds(points, vals, grads, n, radius, bound, tol)
                break
    certified = model_gap <= max(tol, 1e-7) and not cap_hit
    return MTResult(best_val, best_f, certified, it, model_gap, best_hits, cap_hit)


def _select_bundle(vals, keep_last: int = 120, keep_best: int = 20):
    """Working-subset selection: the most recent cuts plus the best scorers."""
    R = len(vals)
    if R <= keep_last + keep_best:
        return list(range(R))
    recent = list(range(R - keep_last, R))
    best = list(np.argsort(vals)[-keep_best:])
    return sorted(set(recent) | set(int(b) for b in best))


def _cap_binds(points, vals, grads, n, radius, bound, tol):
    """The potential box binds iff widening it raises the model bound."""
    _, wide = _bundle_step(points, vals, grads, n, 2.0 * radius)
    return wide > bound + max(tol, 1e-9)


class CutPool:
    """Shared bundle cuts for the terminal-potential objective.

    Each entry stores (f, Psi^0_f, argmax policy, ladder-boundary hits, field);
    value and supergradient against any marginal pair follow by cheap forward
    runs, so one pool serves every interpolant the outer loop proposes.
    """

    def __init__(self, L: Lagrangian, lattice: Lattice, controls: np.ndarray,
                 diffusion: bool = True):
        self.L = L
        self.lattice = lattice
        self.controls = np.asarray(controls, float)
        self.diffusion = diffusion
        self.entries: list = []
        self._law_cache: dict = {}

    def seed(self, lattice: Lattice, controls: np.ndarray) -> None:
        """Linear potentials f = v (x - x_left) across the control ladder."""
        base = lattice.nodes - lattice.nodes[0]
        for v in np.unique(np.asarray(controls, float)):
            self.add(v * base)

    def add(self, f: np.ndarray) -> int:
        field = hjb_backward(self.L, f, self.lattice, self.controls,
                             diffusion=self.diffusion)
        hits = extract_drift(field, self.L).boundary_hits
        self.entries.append((f.copy(), field.values[0].copy(),
                             field.policy_idx.astype(np.int16), hits, field))
        return len(self.entries) - 1

    def value_at(self, r: int, nu0: np.ndarray, nuT: np.ndarray) -> float:
        f, phi0 = self.entries[r][0], self.entries[r][1]
        return float(f @ nuT - phi0 @ nu0)

    def grad_at(self, r: int, nu0: np.ndarray, nuT: np.ndarray) -> np.ndarray:
        key = (r, nu0.tobytes())
        law_T = self._law_cache.get(key)
        if law_T is None:
            law_T = forward_law(self.entries[r][4], nu0)[-1]
            self._law_cache[key] = law_T
        return nuT - law_T


def _bundle_step(cut_points, cut_vals, cut_grads, n: int, radius: float,
                 center=None, trust=None):
    """Maximize the polyhedral upper model over the potential box (optionally
    intersected with a trust box around `center`); returns (argmax, bound).
    The gauge pins f at the first node."""
    R = len(cut_vals)
    G = np.asarray(cut_grads, float).reshape(R, n)
    rhs_full = np.array([cut_vals[r] - float(G[r] @ cut_points[r]) for r in range(R)])
    # drop duplicate cuts: converged pools produce many near-identical rows,
    # which trips the simplex's degeneracy handling
    _, keep = np.unique(np.round(np.column_stack([G, rhs_full]), 12),
                        axis=0, return_index=True)
    keep = np.sort(keep)
    G = G[keep]
    rhs = rhs_full[keep]
    R = keep.size
    c = np.zeros(n + 1)
    c[-1] = -1.0
    rows = np.repeat(np.arange(R), n + 1)
    cols = np.tile(np.concatenate([np.arange(n), [n]]), R)
    data = np.column_stack([-G, np.ones(R)]).ravel()
    A = sp.csr_matrix((data, (rows, cols)), shape=(R, n + 1))
    lo = np.full(n, -radius)
    hi = np.full(n, radius)
    if center is not None and trust is not None:
        lo = np.maximum(lo, center - trust)
        hi = np.minimum(hi, center + trust)
    bounds = [(lo[i], hi[i]) for i in range(n)] + [(None, None)]
    bounds[0] = (0.0, 0.0)
    res = None
    for method, slack in (("highs", 0.0), ("highs-ds", 1e-9), ("highs-ipm", 1e-7)):
        res = linprog(c, A_ub=A, b_ub=rhs + slack, bounds=bounds, method=method)
        if res.status == 0:
            break
    if res.status != 0:
        raise LatticeError(f"bundle LP failed: {res.message}")
    return res.x[:n], float(res.x[-1])


@dataclass
class StochMinResult:
    value: float                 # upper bound: attained value + bundle model gap
    dual_value: float            # lower bound from the backward-value dual form
    interpolant: np.ndarray
    rounds: int
    converged: bool
    value_attained: float = float("nan")

    @property
    def gap(self) -> float:
        return self.value - self.dual_value

    @property
    def relative_gap(self) -> float:
        return abs(self.gap) / max(abs(self.value), 1e-12)


def ballistic_min_stoch(L: Lagrangian, mu0: DiscreteMeasure, nuT: np.ndarray,
                        lattice: Lattice, controls: np.ndarray,
                        tol: float = 1e-3, max_rounds: int = 25,
                        inner_iters: int = 40) -> StochMinResult:
    """Joint minimization of pairing-plus-walk cost over interpolating laws:

        inf_nu { Wmin(mu0, nu) + C^s(nu, nu_T) },

    alternating an outer LP over nu (with polyhedral cuts standing in for the
    walk cost) against bundle refinements of the walk cost at the current nu.
    All rounds share one cut pool.  The reported value folds the remaining
    bundle model gap in as an upper bound; the certificate is the
    backward-value dual form at the final potential, a true lower bound.
    """
    if mu0.dim != 1:
        raise LatticeError("the stochastic problems are 1-d")
    nuT = np.asarray(nuT, float)
    n = lattice.n_nodes
    nodes = lattice.nodes
    vs = mu0.atoms[:, 0]

    cap = default_potential_cap(L, lattice, controls)
    pool = CutPool(L, lattice, controls, diffusion=True)
    pool.seed(lattice, controls)
    nu = nuT.copy()
    best_nu = nu.copy()
    best_upper = np.inf
    rounds = 0
    converged = False
    for rounds in range(1, max_rounds + 1):
        mt = mt_cost(L, nu, nuT, lattice, controls, tol=max(1e-8, 0.1 * tol),
                     max_iter=inner_iters, f_cap=cap, pool=pool)
        if not mt.cap_hit and np.isfinite(mt.model_gap):
            w_val = _pairing_lp_value(vs, mu0.weights, nodes, nu, "min")
            cand = w_val + mt.value + mt.model_gap
            if cand < best_upper:
                best_upper = cand
                best_nu = nu.copy()
        cut_phi0 = [np.zeros(n)] + [e[1] for e in pool.entries]
        cut_const = [0.0] + [float(e[0] @ nuT) for e in pool.entries]
        nu_next, lower = _stoch_min_outer_lp(vs, mu0.weights, nodes, cut_phi0, cut_const)
        if np.isfinite(best_upper) \
                and best_upper - lower <= max(tol, 1e-9) * max(1.0, abs(best_upper)):
            converged = True
            break
        if np.max(np.abs(nu_next - nu)) < 1e-12:
            break
        nu = nu_next

    # tighten the walk cost at the incumbent, then certify with the
    # backward-value dual form, polished by its own bundle ascent
    final = mt_cost(L, best_nu, nuT, lattice, controls,
                    tol=max(1e-9, 0.05 * tol * max(1.0, abs(best_upper))),
                    max_iter=400, f_cap=cap, pool=pool)
    w_val = _pairing_lp_value(vs, mu0.weights, nodes, best_nu, "min")
    attained = w_val + final.value
    upper = attained + max(final.model_gap, 0.0)
    dual = _polish_dual(pool, vs, mu0.weights, nuT, cap,
                        target=upper, tol=0.25 * tol * max(1.0, abs(upper)))
    certified = (not final.cap_hit) \
        and upper - dual <= max(tol, 1e-9) * max(1.0, abs(upper))
    return StochMinResult(upper, dual, best_nu, rounds, certified, attained)


def _dual_form_cut(entry, vs, w0, nodes, nuT):
    """Value and supergradient of the dual form
    D(f) = <f, nu_T> + sum_a w0(a) min_i { v_a x_i - Psi^0_f(x_i) }."""
    f, phi0 = entry[0], entry[1]
    scores = vs[:, None] * nodes[None, :] - phi0[None, :]
    idx = np.argmin(scores, axis=1)
    val = float(f @ nuT + scores[np.arange(vs.size), idx] @ w0)
    rho = np.zeros(nodes.size)
    np.add.at(rho, idx, w0)
    law_T = forward_law(entry[4], rho)[-1]
    return val, nuT - law_T


def _polish_dual(pool: CutPool, vs, w0, nuT, cap, target, tol,
                 max_iter: int = 80) -> float:
    """Proximal bundle ascent on the dual form, reusing and extending the cut
    pool.  Every evaluation is a true lower bound, so the best value seen is
    always safe to report."""
    nodes = pool.lattice.nodes
    n = nodes.size
    points, vals, grads = [], [], []
    for e in pool.entries:
        v, g = _dual_form_cut(e, vs, w0, nodes, nuT)
        points.append(e[0])
        vals.append(v)
        grads.append(g)
    k = int(np.argmax(vals))
    best = vals[k]
    center = points[k].copy()
    trust = 2.0
    it = 0
    while it < max_iter and target - best > tol:
        it += 1
        sel = _select_bundle(vals)
        f_next, bound = _bundle_step([points[s] for s in sel], [vals[s] for s in sel],
                                     [grads[s] for s in sel], n, cap,
                                     center=center, trust=trust)
        predicted = bound - best
        if predicted <= 0.1 * tol:
            f_glob, bound = _bundle_step([points[s] for s in sel], [vals[s] for s in sel],
                                         [grads[s] for s in sel], n, cap)
            if bound - best <= 0.1 * tol:
                break
            trust = min(4.0 * trust, cap)
            f_next = center + np.clip(f_glob - center, -trust, trust)
            f_next[0] = 0.0
        r = pool.add(f_next)
        v, g = _dual_form_cut(pool.entries[r], vs, w0, nodes, nuT)
        points.append(pool.entries[r][0])
        vals.append(v)
        grads.append(g)
        if v > best:
            gain = v - best
            best = v
            center = points[-1].copy()
            if predicted > 0 and gain >= 0.25 * predicted:
                trust = min(2.0 * trust, 2.0 * cap)
        else:
            trust = max(0.6 * trust, 1e-4)
    return best


def _pairing_lp_value(vs, w0, nodes, nu, sense) -> float:
    # sub-1e-11 masses are outer-LP solver noise; dropping them moves the
    # value by at most the dropped mass times the cost range
    keep = nu > 1e-11
    mu = DiscreteMeasure(vs[:, None], w0, "costate")
    target = DiscreteMeasure(nodes[keep][:, None], nu[keep] / nu[keep].sum(), "state")
    C = CostMatrix(vs[:, None] @ nodes[keep][None, :], provenance="pairing")
    return solve_kantorovich(C, mu, target, sense).value


def _stoch_min_outer_lp(vs, w0, nodes, cut_phi0, cut_const):
    """min over (gamma, nu, z): <v x, gamma> + z  s.t. marginals tie gamma to
    (w0, nu) and z dominates every walk-cost cut."""
    m, n = vs.size, nodes.size
    R = len(cut_phi0)
    ng = m * n
    # vars: gamma (m*n) | nu (n) | z
    c = np.zeros(ng + n + 1)
    c[:ng] = (vs[:, None] * nodes[None, :]).ravel()
    c[-1] = 1.0
    arange_g = np.arange(ng)
    rows_eq = np.concatenate([
        arange_g // n,                       # gamma row sums -> w0
        m + (arange_g % n),                  # gamma col sums tie to nu
        m + np.arange(n),                    # the -nu entries
    ])
    cols_eq = np.concatenate([arange_g, arange_g, ng + np.arange(n)])
    data_eq = np.concatenate([np.ones(ng), np.ones(ng), -np.ones(n)])
    A_eq = sp.csr_matrix((data_eq, (rows_eq, cols_eq)), shape=(m + n, ng + n + 1))
    b_eq = np.concatenate([w0, np.zeros(n)])

    rows_ub = np.concatenate([np.repeat(np.arange(R), n), np.arange(R)])
    cols_ub = np.concatenate([np.tile(ng + np.arange(n), R), np.full(R, ng + n)])
    data_ub = np.concatenate([-np.concatenate(cut_phi0), -np.ones(R)])
    A_ub = sp.csr_matrix((data_ub, (rows_ub, cols_ub)), shape=(R, ng + n + 1))
    b_ub = -np.asarray(cut_const, float)

    bounds = [(0, None)] * (ng + n) + [(None, None)]
    res = linprog(c, A_eq=A_eq, b_eq=b_eq, A_ub=A_ub, b_ub=b_ub, bounds=bounds,
                  method="highs")
    if res.status != 0:
        raise LatticeError(f"outer interpolation LP failed: {res.message}")
    nu = np.maximum(res.x[ng:ng + n], 0)
    nu /= nu.sum()
    return nu, float(res.fun)


@dataclass
class StochMaxResult:
    upper: float
    lower: float
    best_params: tuple
    certified: bool

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def relative_width(self) -> float:
        return self.width / max(abs(self.upper), abs(self.lower), 1e-12)


def _pl_conjugate(xs: np.ndarray, gvals: np.ndarray, vs: np.ndarray) -> np.ndarray:
    """Conjugate of the piecewise-linear convex interpolant through (xs, gvals),
    evaluated at vs; exact for slopes within the spanned range because the
    supremum sits at a breakpoint."""
    return np.max(vs[:, None] * xs[None, :] - gvals[None, :], axis=1)


def ballistic_max_stoch(L: Lagrangian, mu0: np.ndarray, nuT: DiscreteMeasure,
                        lattice: Lattice, controls: np.ndarray,
                        g_family: Optional[list] = None,
                        rel_tol: float = 0.05, refine_rounds: int = 6) -> StochMaxResult:
    """Bracket the max-sense stochastic ballistic cost on a costate lattice.

    Upper bound: min over convex target potentials g of
    <g, nu_T> + <Psi~^0_{g*}, mu0>, where the dual-space walk runs the dual
    running cost with terminal data g*.  The family starts with quadratics
    and is then refined by alternation: each candidate's argmax policy yields
    a terminal law whose max-pairing Kantorovich potential against nu_T
    becomes the next piecewise-linear convex candidate.

    Lower bound: every evaluated policy scores max-pairing of its own
    terminal law against nu_T minus its expected running cost, which is
    feasible by construction.
    """
    Lt = dual_lagrangian(L)
    if Lt.rigid:
        raise LatticeError("the dual walk needs a state-coercive running cost "
                           "(harmonic-type families)")
    mu0 = np.asarray(mu0, float)
    xs = nuT.atoms[:, 0]
    order = np.argsort(xs)
    nodes = lattice.nodes
    upper = np.inf
    lower = -np.inf
    best = None

    def probe_quadratic(a: float, mctr: float):
        gstar = nodes ** 2 / (2 * a) + mctr * nodes
        gx = 0.5 * a * (xs - mctr) ** 2
        return _probe(gstar, gx, ("quadratic", a, mctr))

    def probe_pl(gvals: np.ndarray):
        gstar = _pl_conjugate(xs[order], gvals[order], nodes)
        return _probe(gstar, gvals, ("piecewise-linear",))

    def _probe(gstar, gx, label):
        nonlocal upper, lower, best
        field = hjb_backward(Lt, gstar, lattice, controls, tag="HJB2")
        u = float(gx @ nuT.weights + field.values[0] @ mu0)
        if u < upper:
            upper = u
            best = label
        run_cost = policy_cost(field, Lt, mu0)
        law_T = forward_law(field, mu0)[-1]
        w_val = _pairing_lp_value(xs, nuT.weights, nodes, law_T, "max")
        lower = max(lower, w_val - run_cost)
        return law_T

    if g_family is None:
        center = float(nuT.weights @ xs)
        spread = max(float(np.max(np.abs(xs - center))), 0.5)
        g_family = [(a, m) for a in (0.5, 1.0, 2.0, 4.0)
                    for m in np.linspace(center - spread, center + spread, 5)]
    best_law = None
    for (a, mctr) in g_family:
        law = probe_quadratic(a, mctr)
        if best == ("quadratic", a, mctr):
            best_law = law

    law = best_law
    for _ in range(refine_rounds):
        if law is None:
            break
        keep = law > 1e-12
        src_m = DiscreteMeasure(nodes[keep][:, None], law[keep] / law[keep].sum(), "costate")
        plan = solve_kantorovich(
            CostMatrix(nodes[keep][:, None] @ xs[None, :], provenance="pairing"),
            src_m, nuT, "max")
        gvals = np.max(plan.dual_source[:, None]
                       + nodes[keep][:, None] * xs[None, :], axis=0)
        law = probe_pl(gvals)
    width_rel = (upper - lower) / max(abs(upper), abs(lower), 1e-12)
    return StochMaxResult(upper, lower, best, width_rel <= rel_tol)
