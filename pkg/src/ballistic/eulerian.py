"""Space-time (continuity-equation) cross-check of the min-sense ballistic
transport, d = 1 with the pure kinetic running cost |p|^2/2.

Densities live on cells of a 1-d grid, signed face flows carry mass between
adjacent cells per time step, and the kinetic action F^2 * dx^2 / (2 rho dt)
enters the LP through its supporting hyperplanes sampled over a velocity
ladder.  The initial density is free but pays the pairing cost against the
costate measure through an explicit coupling block; the terminal density is
pinned to the target snapped onto the grid.

This is a cross-check at grid tolerance, not a primary solver: the sampled
hyperplanes under-approximate the kinetic term by at most T * dv^2 / 8 and
the grid quantizes atoms by dx.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .convexity import Lagrangian
from .measures import DiscreteMeasure, canonical


class EulerianError(RuntimeError):
    pass


@dataclass
class EulerianReport:
    value: float
    reference_value: float       # ballistic min LP on the snapped target
    n_space: int
    n_time: int
    dx: float
    dt: float
    velocity_step: float
    feasible: bool
    hint: str = ""

    @property
    def relative_error(self) -> float:
        scale = max(abs(self.reference_value), 1e-12)
        return abs(self.value - self.reference_value) / scale


def snap_to_grid(m: DiscreteMeasure, nodes: np.ndarray) -> np.ndarray:
    """Accumulate atom weights onto nearest grid nodes (returns node masses)."""
    out = np.zeros(nodes.size)
    for a, w in zip(m.atoms[:, 0], m.weights):
        out[int(np.argmin(np.abs(nodes - a)))] += w
    return out


def eulerian_check(L: Lagrangian, mu0: DiscreteMeasure, nuT: DiscreteMeasure, T: float,
                   n_space: int = 64, n_time: int = 64,
                   velocity_step: float = 0.2) -> EulerianReport:
    """Solve the discretized flow formulation and compare with the direct LP."""
    if L.family != "quadratic-free":
        raise EulerianError("the flow cross-check covers the pure kinetic cost only")
    if mu0.dim != 1 or nuT.dim != 1:
        raise EulerianError("the flow cross-check is 1-d")

    from .interpolation import ballistic_min  # local import avoids a cycle

    vs = mu0.atoms[:, 0]
    xs = nuT.atoms[:, 0]
    starts = xs[None, :] - T * vs[:, None]          # ballistic minimizers y = x - T v
    lo = min(starts.min(), xs.min())
    hi = max(starts.max(), xs.max())
    pad = 0.15 * (hi - lo + 1.0)
    lo, hi = lo - pad, hi + pad
    nodes = np.linspace(lo, hi, n_space)
    dx = nodes[1] - nodes[0]
    dt = T / n_time
    vmax = float(np.abs(vs).max() + 2.0 * velocity_step)
    if vmax > dx / dt:
        raise EulerianError(
            f"grid too coarse in time: speeds up to {vmax:.3g} exceed dx/dt = {dx/dt:.3g}; "
            "increase n_time")

    S, K, m = n_space, n_time, mu0.n
    nF = S - 1
    # variable layout: rho (K+1, S) | F (K, nF) | s (K, nF) | gamma (m, S)
    n_rho = (K + 1) * S
    n_flow = K * nF
    nvar = n_rho + 2 * n_flow + m * S
    iRho = lambda t, i: t * S + i
    iF = lambda t, f: n_rho + t * nF + f
    iS = lambda t, f: n_rho + n_flow + t * nF + f
    iG = lambda a, i: n_rho + 2 * n_flow + a * S + i

    cobj = np.zeros(nvar)
    for t in range(K):
        for f in range(nF):
            cobj[iS(t, f)] = 1.0
    for a in range(m):
        for i in range(S):
            cobj[iG(a, i)] = vs[a] * nodes[i]

    # equality block, assembled vectorized: initial tie, coupling rows,
    # discrete continuity, terminal pin
    target = snap_to_grid(nuT, nodes)
    eq_rows, eq_cols, eq_data, eq_rhs = [], [], [], []

    r0 = 0
    eq_rows.append(np.repeat(np.arange(S), 1))
    eq_cols.append(np.arange(S))
    eq_data.append(np.ones(S))
    for a in range(m):
        eq_rows.append(np.arange(S))
        eq_cols.append(n_rho + 2 * n_flow + a * S + np.arange(S))
        eq_data.append(-np.ones(S))
    eq_rhs.append(np.zeros(S))

    r1 = S
    for a in range(m):
        eq_rows.append(np.full(S, r1 + a))
        eq_cols.append(n_rho + 2 * n_flow + a * S + np.arange(S))
        eq_data.append(np.ones(S))
    eq_rhs.append(np.asarray(mu0.weights, float))

    r2 = r1 + m
    t_idx = np.repeat(np.arange(K), S)
    i_idx = np.tile(np.arange(S), K)
    row_c = r2 + t_idx * S + i_idx
    eq_rows.append(row_c)
    eq_cols.append((t_idx + 1) * S + i_idx)
    eq_data.append(np.ones(K * S))
    eq_rows.append(row_c)
    eq_cols.append(t_idx * S + i_idx)
    eq_data.append(-np.ones(K * S))
    left = i_idx - 1 >= 0
    eq_rows.append(row_c[left])
    eq_cols.append(n_rho + t_idx[left] * nF + (i_idx[left] - 1))
    eq_data.append(-np.ones(int(left.sum())))
    right = i_idx < nF
    eq_rows.append(row_c[right])
    eq_cols.append(n_rho + t_idx[right] * nF + i_idx[right])
    eq_data.append(np.ones(int(right.sum())))
    eq_rhs.append(np.zeros(K * S))

    r3 = r2 + K * S
    eq_rows.append(r3 + np.arange(S))
    eq_cols.append(K * S + np.arange(S))
    eq_data.append(np.ones(S))
    eq_rhs.append(target)

    n_eq = r3 + S
    A_eq = sp.csr_matrix((np.concatenate(eq_data),
                          (np.concatenate(eq_rows), np.concatenate(eq_cols))),
                         shape=(n_eq, nvar))
    b_eq = np.concatenate(eq_rhs)

    # kinetic epigraph cuts: s >= a F - a^2/(2c) * (rho_i + rho_{i+1})/2, c = dx^2/dt
    c_coef = dx * dx / dt
    slopes = np.arange(-vmax, vmax + 1e-12, velocity_step) * dx
    nA = slopes.size
    tf = np.repeat(np.arange(K * nF), nA)
    aa = np.tile(slopes, K * nF)
    t_of = tf // nF
    f_of = tf % nF
    row_u = np.arange(K * nF * nA)
    coefs = -(aa * aa) / (2.0 * c_coef) * 0.5
    urows = np.concatenate([row_u, row_u, row_u, row_u])
    ucols = np.concatenate([
        n_rho + n_flow + tf,                 # -s
        n_rho + tf,                          # a F
        t_of * S + f_of,                     # rho left
        t_of * S + f_of + 1,                 # rho right
    ])
    udata = np.concatenate([-np.ones(row_u.size), aa, coefs, coefs])
    A_ub = sp.csr_matrix((udata, (urows, ucols)), shape=(row_u.size, nvar))
    b_ub = np.zeros(row_u.size)

    bounds = [(0, None)] * n_rho + [(None, None)] * n_flow + [(0, None)] * n_flow \
        + [(0, None)] * (m * S)
    # interior point handles this tall structured LP far faster than simplex
    res = linprog(cobj, A_eq=A_eq, b_eq=b_eq, A_ub=A_ub, b_ub=b_ub, bounds=bounds,
                  method="highs-ipm")
    if res.status not in (0, 2):
        res = linprog(cobj, A_eq=A_eq, b_eq=b_eq, A_ub=A_ub, b_ub=b_ub, bounds=bounds,
                      method="highs")
    if res.status == 2:
        return EulerianReport(float("nan"), float("nan"), S, K, dx, dt, velocity_step,
                              False, hint="infeasible at this resolution; refine the grid")
    if res.status != 0:
        raise EulerianError(f"flow LP failed: {res.message}")

    snapped = canonical(DiscreteMeasure(nodes[target > 1e-14][:, None],
                                        target[target > 1e-14], "state"))
    ref = ballistic_min(L, mu0, snapped, T).value
    return EulerianReport(float(res.fun), ref, S, K, dx, dt, velocity_step, True)
