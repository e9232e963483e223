"""Trajectory optimization with boundary cost, and its dual pair.

Primal (forward differences, running cost at the left node):

    min over (x_0..x_N)   sum_k h L(x_k, (x_{k+1}-x_k)/h) + ell(x_0, x_N)

Dual (the exact transpose scheme: running cost at the right node, backward
differences, boundary cost conjugated with the sign flip on the endpoint):

    min over (u_0..u_N)   sum_j h L~(u_j, (u_j-u_{j-1})/h) + ell*(u_0, -u_N)

For jointly convex L these two finite convex programs are exact duals, so
primal_value + dual_value vanishes to solver precision at every N; the
discretization error only enters the arcs, not the gap.  Optimal arcs pair
into an approximate Hamiltonian system whose residuals shrink at O(h).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .convexity import ConvexProfile, Hamiltonian, Lagrangian, dual_lagrangian, INF


class BolzaError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# boundary costs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundaryCost:
    """Convex boundary cost ell(a, b) from a small closed-form registry.

    kinds:
      quadratic    wa (a - ca)^2 / 2 + wb (b - cb)^2 / 2
      pinned-start a == a0 (free end)
      pinned-both  a == a0 and b == b0
      linear-in-b  <v0, a> + indicator(b == x0)   (ballistic-type)
    """

    kind: str
    wa: float = 1.0
    ca: float = 0.0
    wb: float = 1.0
    cb: float = 0.0
    a0: float = 0.0
    b0: float = 0.0
    v0: float = 0.0
    x0: float = 0.0

    def value(self, a: float, b: float) -> float:
        if self.kind == "quadratic":
            return 0.5 * self.wa * (a - self.ca) ** 2 + 0.5 * self.wb * (b - self.cb) ** 2
        if self.kind == "pinned-start":
            return 0.0 if abs(a - self.a0) < 1e-12 else INF
        if self.kind == "pinned-both":
            return 0.0 if abs(a - self.a0) < 1e-12 and abs(b - self.b0) < 1e-12 else INF
        if self.kind == "linear-in-b":
            return self.v0 * a if abs(b - self.x0) < 1e-12 else INF
        raise BolzaError(f"unknown boundary-cost kind {self.kind!r}")

    def conjugate_value(self, p: float, q: float) -> float:
        """ell*(p, q) = sup_{a,b} { p a + q b - ell(a, b) }."""
        if self.kind == "quadratic":
            out = p * self.ca + q * self.cb
            out += p * p / (2 * self.wa) if self.wa > 0 else (0.0 if p == 0 else INF)
            out += q * q / (2 * self.wb) if self.wb > 0 else (0.0 if q == 0 else INF)
            return out
        if self.kind == "pinned-start":
            return p * self.a0 if q == 0 else INF
        if self.kind == "pinned-both":
            return p * self.a0 + q * self.b0
        if self.kind == "linear-in-b":
            return q * self.x0 if p == self.v0 else INF
        raise BolzaError(f"unknown boundary-cost kind {self.kind!r}")

    def grad(self, a: float, b: float):
        if self.kind != "quadratic":
            raise BolzaError("only the quadratic boundary cost is differentiable")
        return self.wa * (a - self.ca), self.wb * (b - self.cb)

    # structural constraints imposed on the dual variables by ell*
    def dual_constraints(self):
        """Returns (fixed_u0, fixed_uN, lin_u0, lin_uN, quad_u0, quad_uN, const)
        describing ell*(u0, -uN) for the dual assembly."""
        if self.kind == "quadratic":
            terms = {}
            # p = u0, q = -uN
            lin_u0 = self.ca
            lin_uN = self.cb * -1.0
            quad_u0 = 1.0 / (2 * self.wa) if self.wa > 0 else None
            quad_uN = 1.0 / (2 * self.wb) if self.wb > 0 else None
            return (None, None, lin_u0, lin_uN, quad_u0, quad_uN, 0.0)
        if self.kind == "pinned-start":
            # finite only when q = -uN = 0
            return (None, 0.0, self.a0, 0.0, 0.0, 0.0, 0.0)
        if self.kind == "pinned-both":
            return (None, None, self.a0, -self.b0, 0.0, 0.0, 0.0)
        if self.kind == "linear-in-b":
            # finite only when p = u0 = v0
            return (self.v0, None, 0.0, -self.x0, 0.0, 0.0, 0.0)
        raise BolzaError(f"unknown boundary-cost kind {self.kind!r}")


@dataclass(frozen=True)
class BolzaInstance:
    L: Lagrangian
    ell: BoundaryCost
    T: float
    N: int

    def __post_init__(self):
        if self.N < 2:
            raise BolzaError("need at least two time steps")
        if not self.L.jointly_convex:
            raise BolzaError("Bolza duality needs a jointly convex running cost")


@dataclass
class BolzaSolution:
    primal_path: np.ndarray
    dual_path: np.ndarray
    primal_value: float
    dual_value: float
    instance: BolzaInstance

    @property
    def gap(self) -> float:
        return self.primal_value + self.dual_value

    def transversality_residual(self) -> float:
        """|(u(0), -u(T)) - grad ell(x(0), x(T))| for a differentiable ell."""
        ga, gb = self.instance.ell.grad(self.primal_path[0], self.primal_path[-1])
        return max(abs(self.dual_path[0] - ga), abs(-self.dual_path[-1] - gb))


# ---------------------------------------------------------------------------
# quadratic minimization helper
# ---------------------------------------------------------------------------

def _minimize_quadratic(P: np.ndarray, c: np.ndarray, const: float,
                        fixed: dict[int, float]):
    """Exact minimizer of z^T P z / 2 + c z + const with some coordinates fixed."""
    n = c.size
    free = [i for i in range(n) if i not in fixed]
    z = np.zeros(n)
    for i, val in fixed.items():
        z[i] = val
    if free:
        Pff = P[np.ix_(free, free)]
        rhs = -c[free]
        if fixed:
            idx = list(fixed)
            rhs = rhs - P[np.ix_(free, idx)] @ np.array([fixed[i] for i in idx])
        z[free] = np.linalg.solve(Pff, rhs)
    val = 0.5 * z @ P @ z + c @ z + const
    return float(val), z


def _quadratic_running_blocks(V: ConvexProfile, K: ConvexProfile, h: float, N: int,
                              left_nodes: bool):
    """Hessian and layout of sum_k h [V(node_k) + K(diff_k / h)] over z_0..z_N.

    left_nodes selects whether V sits on the left node with forward
    differences (primal) or on the right node with backward differences
    (dual); the two are transposes of each other.
    """
    a = V.coeff if V.kind == "quadratic" else 0.0
    b = K.coeff
    n = N + 1
    P = np.zeros((n, n))
    for k in range(N):
        i = k if left_nodes else k + 1
        P[i, i] += h * a
        P[k, k] += b / h
        P[k + 1, k + 1] += b / h
        P[k, k + 1] -= b / h
        P[k + 1, k] -= b / h
    return P


def solve_bolza(inst: BolzaInstance) -> BolzaSolution:
    """Solve the primal and dual discrete problems exactly (quadratic registry).

    The dual uses the transpose scheme with the conjugate running cost; when
    the primal running cost does not touch the state, the dual arcs are rigid
    (constant) and the problem collapses to a scalar minimization.
    """
    L, ell, T, N = inst.L, inst.ell, inst.T, inst.N
    h = T / N
    if not (L.separable and L.V.is_quadratic and L.K.is_quadratic):
        raise BolzaError("the discrete solver covers the quadratic registry families")
    Lt = dual_lagrangian(L)

    # ---- primal ----
    P = _quadratic_running_blocks(L.V, L.K, h, N, left_nodes=True)
    c = np.zeros(N + 1)
    const = 0.0
    fixed: dict[int, float] = {}
    if ell.kind == "quadratic":
        P[0, 0] += ell.wa
        c[0] -= ell.wa * ell.ca
        const += 0.5 * ell.wa * ell.ca ** 2
        P[-1, -1] += ell.wb
        c[-1] -= ell.wb * ell.cb
        const += 0.5 * ell.wb * ell.cb ** 2
    elif ell.kind == "pinned-start":
        fixed[0] = ell.a0
    elif ell.kind == "pinned-both":
        fixed[0] = ell.a0
        fixed[N] = ell.b0
    elif ell.kind == "linear-in-b":
        c[0] += ell.v0
        fixed[N] = ell.x0
    primal_value, x_path = _minimize_quadratic(P, c, const, fixed)

    # ---- dual (transpose scheme) ----
    if Lt.rigid:
        # dual arcs must be constant: scalar problem in u
        coef = Lt.V.coeff if Lt.V.kind == "quadratic" else 0.0
        u_star, dual_value = _minimize_rigid(ell, coef, T)
        u_path = np.full(N + 1, u_star)
    else:
        Pd = _quadratic_running_blocks(Lt.V, Lt.K, h, N, left_nodes=False)
        cd = np.zeros(N + 1)
        constd = 0.0
        fixedd: dict[int, float] = {}
        f_u0, f_uN, lin_u0, lin_uN, quad_u0, quad_uN, c0 = ell.dual_constraints()
        constd += c0
        cd[0] += lin_u0
        cd[-1] += lin_uN
        if quad_u0:
            Pd[0, 0] += 2 * quad_u0
        if quad_uN:
            Pd[-1, -1] += 2 * quad_uN
        if f_u0 is not None:
            fixedd[0] = f_u0
        if f_uN is not None:
            fixedd[N] = f_uN
        dual_value, u_path = _minimize_quadratic(Pd, cd, constd, fixedd)

    return BolzaSolution(x_path, u_path, primal_value, dual_value, inst)


def _minimize_rigid(ell: BoundaryCost, coef: float, T: float):
    """Minimize T*coef*u^2/2 + ell*(u, -u) over the scalar u."""
    f_u0, f_uN, lin_u0, lin_uN, quad_u0, quad_uN, c0 = ell.dual_constraints()
    fixed_vals = [v for v in (f_u0, f_uN) if v is not None]
    if len(fixed_vals) == 2 and abs(fixed_vals[0] - fixed_vals[1]) > 1e-12:
        return 0.0, INF
    if fixed_vals:
        u = fixed_vals[0]
        val = T * 0.5 * coef * u * u + (lin_u0 + lin_uN) * u \
            + (quad_u0 or 0.0) * u * u + (quad_uN or 0.0) * u * u + c0
        return u, float(val)
    quad = T * 0.5 * coef + (quad_u0 or 0.0) + (quad_uN or 0.0)
    lin = lin_u0 + lin_uN
    if quad <= 0:
        raise BolzaError("rigid dual is unbounded")
    u = -lin / (2 * quad)
    return u, float(quad * u * u + lin * u + c0)


# ---------------------------------------------------------------------------
# optimality-system residuals
# ---------------------------------------------------------------------------

@dataclass
class HamiltonianSystemReport:
    velocity_residual: float      # max | xdot - dH/dv(x, u) |
    costate_residual: float       # max | udot - (velocity-block force) |
    transversality_residual: Optional[float]

    @property
    def max_residual(self) -> float:
        return max(self.velocity_residual, self.costate_residual)


def hamiltonian_system_check(sol: BolzaSolution, H: Hamiltonian) -> HamiltonianSystemReport:
    """Finite-difference residuals of the paired optimality system along the
    discrete arcs; expected O(h) for smooth registry instances."""
    inst = sol.instance
    h = inst.T / inst.N
    x = sol.primal_path
    u = sol.dual_path
    xdot = np.diff(x) / h
    udot = np.diff(u) / h
    L = H.source
    Kstar = L.K.conjugate()
    kgrad = np.array([np.asarray(Kstar.grad(np.atleast_1d(u[k]))).ravel()[0]
                      for k in range(inst.N)])
    vgrad = np.array([np.asarray(L.V.grad(np.atleast_1d(x[k]))).ravel()[0]
                      for k in range(inst.N)])
    vres = float(np.max(np.abs(xdot - kgrad)))
    cres = float(np.max(np.abs(udot - vgrad)))
    tres = None
    if inst.ell.kind == "quadratic":
        tres = sol.transversality_residual()
    return HamiltonianSystemReport(vres, cres, tres)
