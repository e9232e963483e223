"""Dynamic costs, Hamiltonian flows, and variational value functions.

Costs:
  fixed_end_cost(L, y, x, T)      least action over paths y -> x in time T
  ballistic_cost(L, v, x, T)      inf_y { <v, y> + c_T(y, x) }
  dual_fixed_end_cost(Lt, u, v)   same action on costate space

Value functions (direct grid extremization of the variational formulas):
  hopf_lax_forward       Phi+(t, x) = min_y f(y) + c_t(y, x)
  hopf_lax_backward      Phi-(t, x) = max_z f(z) - c_{T-t}(x, z)
  dual_hopf_lax_backward dual-space analogue driven by the dual running cost

The action is discretized with midpoint sampling over N piecewise-linear
segments; N doubles until the value moves by less than REFINE_TOL (cap
MAX_SEGMENTS).  Quadratic families reduce to an exact tridiagonal solve whose
boundary dependence is cached as a 2x2 quadratic form.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .convexity import (Hamiltonian, Lagrangian, ConvexFunctionSamples,
                        UnsupportedLagrangianError, INF, _boundary_mask)

REFINE_TOL = 1e-5
MAX_SEGMENTS = 1024
EXPANSION_FACTOR = 2.0
MAX_EXPANSIONS = 4


class DynamicsError(RuntimeError):
    pass


class UnboundedBelowError(DynamicsError):
    """Inf-convolution minimizer escaped every expanded search box."""


class FlowError(DynamicsError):
    pass


# ---------------------------------------------------------------------------
# fixed-endpoint action
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FixedEndResult:
    value: float
    path: np.ndarray       # (N+1, d) minimizing piecewise-linear path
    segments: int


_QUAD_CACHE: dict = {}


def _quad_form_coeffs(a: float, b: float, T: float, n: int):
    """Boundary quadratic form of the midpoint action for L = a x^2/2 + b p^2/2.

    Returns (M00, M01, M11, wy, wx) with
      min over interior z of action(y, z, x) = (M00 y^2 + 2 M01 y x + M11 x^2)/2
    and interior minimizer z_k = wy[k] y + wx[k] x (componentwise in d).
    """
    key = (a, b, T, n)
    hit = _QUAD_CACHE.get(key)
    if hit is not None:
        return hit
    h = T / n
    # per segment: h*a/2 * ((z_k + z_{k+1})/2)^2 + b/(2h) * (z_{k+1}-z_k)^2
    #            = (h a/8)(z_k^2 + 2 z_k z_{k+1} + z_{k+1}^2)
    #            + (b/2h)(z_k^2 - 2 z_k z_{k+1} + z_{k+1}^2)
    m = n + 1
    H = np.zeros((m, m))
    dkk = h * a / 8.0 + b / (2 * h)
    dkk1 = h * a / 8.0 - b / (2 * h)
    for k in range(n):
        H[k, k] += dkk
        H[k + 1, k + 1] += dkk
        H[k, k + 1] += dkk1
        H[k + 1, k] += dkk1
    # action = z^T H z  (H holds the full coefficients, not halved)
    if n == 1:
        M00, M01, M11 = 2 * H[0, 0], 2 * H[0, 1], 2 * H[1, 1]
        wy = np.zeros(0)
        wx = np.zeros(0)
    else:
        Hii = H[1:-1, 1:-1]
        Hb = H[1:-1, [0, -1]]
        sol = np.linalg.solve(2 * Hii, -2 * Hb)      # z_int = sol @ [y, x]
        wy, wx = sol[:, 0], sol[:, 1]
        # value = [y,x]^T (Hbb + Hb^T sol) [y,x]
        Hbb = H[np.ix_([0, -1], [0, -1])]
        Mfull = Hbb + Hb.T @ sol
        Mfull = 0.5 * (Mfull + Mfull.T)
        M00, M01, M11 = 2 * Mfull[0, 0], 2 * Mfull[0, 1], 2 * Mfull[1, 1]
    out = (M00, M01, M11, wy, wx)
    _QUAD_CACHE[key] = out
    return out


def _quad_value_matrix(a: float, b: float, T: float, n: int, ys: np.ndarray, xs: np.ndarray):
    """Vectorized (len(ys), len(xs)) action values for the quadratic family."""
    M00, M01, M11, _, _ = _quad_form_coeffs(a, b, T, n)
    sy = np.sum(ys * ys, axis=1)
    sx = np.sum(xs * xs, axis=1)
    cross = ys @ xs.T
    return 0.5 * M00 * sy[:, None] + M01 * cross + 0.5 * M11 * sx[None, :]


def _refined_segments(L: Lagrangian, T: float) -> int:
    """Double N until the quadratic-form value is stable to REFINE_TOL."""
    a = L.V.coeff if L.V.kind == "quadratic" else 0.0
    b = L.K.coeff
    n = 32
    y = np.array([[1.0]])
    x = np.array([[1.0]])
    prev = _quad_value_matrix(a, b, T, n, y, x)[0, 0]
    while n < MAX_SEGMENTS:
        cur = _quad_value_matrix(a, b, T, 2 * n, y, x)[0, 0]
        if abs(cur - prev) < REFINE_TOL:
            return 2 * n
        prev = cur
        n *= 2
    return MAX_SEGMENTS


def fixed_end_cost(L: Lagrangian, y, x, T: float, return_path: bool = True) -> FixedEndResult:
    """Least discretized action over paths from y to x in time T > 0."""
    if T <= 0:
        raise DynamicsError("fixed-endpoint cost needs T > 0")
    y = np.atleast_1d(np.asarray(y, float))
    x = np.atleast_1d(np.asarray(x, float))

    if L.rigid:
        # velocity pinned at zero: the arc cannot move
        if np.max(np.abs(x - y)) > 1e-9:
            return FixedEndResult(INF, np.stack([y, x]), 1)
        return FixedEndResult(T * float(np.asarray(L.V(y))), np.stack([y, y]), 1)

    if L.separable and L.V.kind == "zero":
        # x-independent running cost: the constant-slope path is exactly optimal
        val = T * float(np.asarray(L.K((x - y) / T)))
        path = np.linspace(0, 1, 9)[:, None] * (x - y)[None, :] + y[None, :]
        return FixedEndResult(val, path, 8)

    if L.separable and L.V.is_quadratic and L.K.is_quadratic:
        a = L.V.coeff if L.V.kind == "quadratic" else 0.0
        b = L.K.coeff
        n = _refined_segments(L, T)
        M00, M01, M11, wy, wx = _quad_form_coeffs(a, b, T, n)
        val = 0.5 * M00 * float(y @ y) + M01 * float(y @ x) + 0.5 * M11 * float(x @ x)
        if return_path:
            interior = wy[:, None] * y[None, :] + wx[:, None] * x[None, :]
            path = np.vstack([y[None, :], interior, x[None, :]])
        else:
            path = np.stack([y, x])
        return FixedEndResult(val, path, n)

    if L.separable:
        return _fixed_end_generic(L, y, x, T)

    return _fixed_end_tabulated(L, y, x, T)


def _fixed_end_generic(L: Lagrangian, y, x, T):
    """Midpoint-action minimization by smooth convex optimization, N-doubling."""
    d = y.size
    prev_val = None
    n = 32
    best = None
    while True:
        h = T / n

        def action(zflat):
            z = zflat.reshape(n - 1, d)
            path = np.vstack([y[None, :], z, x[None, :]])
            mids = 0.5 * (path[:-1] + path[1:])
            vel = (path[1:] - path[:-1]) / h
            return h * float(np.sum(L.V(mids) + L.K(vel)))

        def grad(zflat):
            z = zflat.reshape(n - 1, d)
            path = np.vstack([y[None, :], z, x[None, :]])
            mids = 0.5 * (path[:-1] + path[1:])
            vel = (path[1:] - path[:-1]) / h
            gV = L.V.grad(mids)
            gK = L.K.grad(vel)
            g = np.zeros_like(path)
            g[:-1] += h * 0.5 * gV - gK
            g[1:] += h * 0.5 * gV + gK
            return g[1:-1].ravel()

        z0 = (np.linspace(0, 1, n + 1)[1:-1, None] * (x - y)[None, :] + y[None, :]).ravel()
        res = minimize(action, z0, jac=grad, method="L-BFGS-B",
                       options=dict(maxiter=4000, ftol=1e-15, gtol=1e-12))
        if not res.success and res.status != 1:
            raise DynamicsError(f"action minimization failed: {res.message}")
        val = float(res.fun)
        path = np.vstack([y[None, :], res.x.reshape(n - 1, d), x[None, :]])
        best = FixedEndResult(val, path, n)
        if prev_val is not None and abs(val - prev_val) < REFINE_TOL:
            break
        if n >= MAX_SEGMENTS:
            break
        prev_val = val
        n *= 2
    return best


def _fixed_end_tabulated(L: Lagrangian, y, x, T):
    """Coarse dynamic program over the tabulated grid (d = 1 only)."""
    xg, pg, vals = L.table
    n = 32
    h = T / n
    yi = int(np.argmin(np.abs(xg - y[0])))
    xi = int(np.argmin(np.abs(xg - x[0])))
    m = xg.size
    cost = np.full(m, INF)
    cost[yi] = 0.0
    back = np.zeros((n, m), dtype=int)
    for k in range(n):
        new = np.full(m, INF)
        for j in range(m):
            vel = (xg[j] - xg) / h
            ok = np.abs(vel) <= np.abs(pg).max()
            lv = np.array([np.interp(v, pg, vals[i]) if ok[i] else INF
                           for i, v in enumerate(vel)])
            tot = cost + h * lv
            b = int(np.argmin(tot))
            new[j] = tot[b]
            back[k, j] = b
        cost = new
    idx = [xi]
    for k in range(n - 1, -1, -1):
        idx.append(back[k, idx[-1]])
    path = xg[np.array(idx[::-1])][:, None]
    return FixedEndResult(float(cost[xi]), path, n)


def fixed_end_cost_matrix(L: Lagrangian, ys: np.ndarray, xs: np.ndarray, T: float) -> np.ndarray:
    """(len(ys), len(xs)) matrix of fixed-endpoint costs, vectorized when possible."""
    ys = np.atleast_2d(np.asarray(ys, float))
    xs = np.atleast_2d(np.asarray(xs, float))
    if ys.shape[1] != xs.shape[1]:
        raise DynamicsError("endpoint dimensions disagree")
    if T <= 0:
        raise DynamicsError("fixed-endpoint cost needs T > 0")
    if L.rigid:
        out = np.full((ys.shape[0], xs.shape[0]), INF)
        for i in range(ys.shape[0]):
            for j in range(xs.shape[0]):
                if np.max(np.abs(ys[i] - xs[j])) <= 1e-9:
                    out[i, j] = T * float(np.asarray(L.V(ys[i])))
        return out
    if L.separable and L.V.kind == "zero":
        diff = (xs[None, :, :] - ys[:, None, :]) / T
        return T * np.asarray(L.K(diff))
    if L.separable and L.V.is_quadratic and L.K.is_quadratic:
        a = L.V.coeff if L.V.kind == "quadratic" else 0.0
        n = _refined_segments(L, T)
        return _quad_value_matrix(a, L.K.coeff, T, n, ys, xs)
    out = np.empty((ys.shape[0], xs.shape[0]))
    for i in range(ys.shape[0]):
        for j in range(xs.shape[0]):
            out[i, j] = fixed_end_cost(L, ys[i], xs[j], T, return_path=False).value
    return out


def dual_fixed_end_cost(Lt: Lagrangian, u, v, T: float) -> FixedEndResult:
    """Fixed-endpoint action of the dual running cost on costate space."""
    return fixed_end_cost(Lt, u, v, T)


# ---------------------------------------------------------------------------
# ballistic cost
# ---------------------------------------------------------------------------

def ballistic_cost_full(L: Lagrangian, v, x, T: float, grid_points: int = 129):
    """(value, minimizer) of y -> <v, y> + c_T(y, x) with box auto-expansion."""
    v = np.atleast_1d(np.asarray(v, float))
    x = np.atleast_1d(np.asarray(x, float))
    if T < 0:
        raise DynamicsError("ballistic cost needs T >= 0")
    if T == 0:
        return float(v @ x), x.copy()
    d = x.size
    radius = 2.0 * (1.0 + float(np.max(np.abs(x))) + T * float(np.max(np.abs(v))))
    for _ in range(MAX_EXPANSIONS + 1):
        if d == 1:
            ys = np.linspace(x[0] - radius, x[0] + radius, grid_points)[:, None]
        else:
            per = max(9, int(round(grid_points ** (1.0 / d))))
            axes = [np.linspace(x[k] - radius, x[k] + radius, per) for k in range(d)]
            mesh = np.meshgrid(*axes, indexing="ij")
            ys = np.stack([mm.ravel() for mm in mesh], axis=1)
        vals = ys @ v + fixed_end_cost_matrix(L, ys, x[None, :], T)[:, 0]
        k = int(np.argmin(vals))
        on_edge = np.any(np.abs(np.abs(ys[k] - x) - radius) < 1e-12)
        if not on_edge:
            y0 = ys[k]
            break
        radius *= EXPANSION_FACTOR
    else:
        raise UnboundedBelowError("minimizer pinned to the expanded box limit")

    # local refinement around the best grid point
    if d == 1:
        spacing = ys[1, 0] - ys[0, 0]
        res = minimize_scalar(
            lambda yy: float(yy * v[0] + fixed_end_cost(L, [yy], x, T, return_path=False).value),
            bounds=(y0[0] - 2 * spacing, y0[0] + 2 * spacing), method="bounded",
            options=dict(xatol=1e-10))
        return float(res.fun), np.array([res.x])
    res = minimize(
        lambda yy: float(yy @ v + fixed_end_cost(L, yy, x, T, return_path=False).value),
        y0, method="Nelder-Mead", options=dict(xatol=1e-9, fatol=1e-12, maxiter=4000))
    return float(res.fun), np.asarray(res.x)


def ballistic_cost(L: Lagrangian, v, x, T: float) -> float:
    """Inf-convolution value <v, .> boxed against the fixed-endpoint cost."""
    return ballistic_cost_full(L, v, x, T)[0]


def ballistic_minimizer(L: Lagrangian, v, x, T: float) -> np.ndarray:
    """The initial point y* attaining the ballistic inf-convolution."""
    return ballistic_cost_full(L, v, x, T)[1]


def ballistic_cost_matrix(L: Lagrangian, vs: np.ndarray, xs: np.ndarray, T: float) -> np.ndarray:
    vs = np.atleast_2d(np.asarray(vs, float))
    xs = np.atleast_2d(np.asarray(xs, float))
    out = np.empty((vs.shape[0], xs.shape[0]))
    for i in range(vs.shape[0]):
        for j in range(xs.shape[0]):
            out[i, j] = ballistic_cost(L, vs[i], xs[j], T)
    return out


def ballistic_gradient_x(L: Lagrangian, v, x, T: float, h: float = 1e-5) -> np.ndarray:
    """Central-difference d/dx of the ballistic cost (convex in x)."""
    x = np.atleast_1d(np.asarray(x, float))
    g = np.zeros_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (ballistic_cost(L, v, x + e, T) - ballistic_cost(L, v, x - e, T)) / (2 * h)
    return g


# ---------------------------------------------------------------------------
# Hamiltonian flow
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhasePoint:
    x: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, float)))
        object.__setattr__(self, "v", np.atleast_1d(np.asarray(self.v, float)))
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.v))):
            raise FlowError("phase point has non-finite coordinates")


@dataclass
class FlowTrajectory:
    times: np.ndarray
    xs: np.ndarray          # (steps+1, d)
    vs: np.ndarray
    energy_drift: float
    steps: int

    @property
    def end(self) -> PhasePoint:
        return PhasePoint(self.xs[-1], self.vs[-1], float(self.times[-1]))

    def to_csv(self, path, H: Optional[Hamiltonian] = None) -> None:
        d = self.xs.shape[1]
        cols = ["t"] + [f"x{i+1}" for i in range(d)] + [f"v{i+1}" for i in range(d)] + ["H"]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(cols) + "\n")
            for k in range(self.times.size):
                hval = float(np.asarray(H.value(self.xs[k], self.vs[k]))) if H else float("nan")
                row = [repr(float(self.times[k]))]
                row += [repr(float(c)) for c in self.xs[k]]
                row += [repr(float(c)) for c in self.vs[k]]
                row.append(repr(hval))
                fh.write(",".join(row) + "\n")


def hamiltonian_flow(H: Hamiltonian, start: PhasePoint, T: float, steps: int) -> FlowTrajectory:
    """Symplectic leapfrog orbit of (xdot, vdot) = (dH/dq, -dH/dx).

    Negative T integrates backward; the stepping is symmetric, so forward
    then backward returns the start up to roundoff.
    """
    if steps <= 0:
        raise FlowError("step count must be positive")
    L = H.source
    if not L.separable:
        raise UnsupportedLagrangianError("flows need a separable (registry) Hamiltonian")
    h = T / steps
    x = start.x.astype(float).copy()
    q = start.v.astype(float).copy()
    xs = np.empty((steps + 1, x.size))
    vs = np.empty((steps + 1, x.size))
    xs[0], vs[0] = x, q
    Kstar = L.K.conjugate()
    e0 = float(np.asarray(H.value(x, q)))
    drift = 0.0
    for k in range(steps):
        q = q + 0.5 * h * np.asarray(L.V.grad(x))       # vdot = -dH/dx = +grad V
        x = x + h * np.asarray(Kstar.grad(q))           # xdot = dH/dq
        q = q + 0.5 * h * np.asarray(L.V.grad(x))
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(q))):
            raise FlowError(f"non-finite state at step {k + 1}")
        xs[k + 1], vs[k + 1] = x, q
        drift = max(drift, abs(float(np.asarray(H.value(x, q))) - e0))
    times = start.t + h * np.arange(steps + 1)
    return FlowTrajectory(times, xs, vs, drift, steps)


# ---------------------------------------------------------------------------
# grid value functions
# ---------------------------------------------------------------------------

@dataclass
class GridField:
    """Scalar field samples over (time slice, lattice point)."""

    points: np.ndarray       # (n, d)
    times: np.ndarray        # (nt,)
    values: np.ndarray       # (nt, n)
    equation_tag: str
    flags: np.ndarray        # (nt, n) bool: extremizer pinned to data boundary

    def slice(self, i: int) -> np.ndarray:
        return self.values[i]

    def to_csv(self, path) -> None:
        d = self.points.shape[1]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(["t"] + [f"x{i+1}" for i in range(d)] + ["value", "pinned"]) + "\n")
            for it, t in enumerate(self.times):
                for ip in range(self.points.shape[0]):
                    row = [repr(float(t))] + [repr(float(c)) for c in self.points[ip]]
                    row += [repr(float(self.values[it, ip])), str(int(self.flags[it, ip]))]
                    fh.write(",".join(row) + "\n")


def _as_points(grid) -> np.ndarray:
    g = np.asarray(grid, float)
    if g.ndim == 1:
        g = g[:, None]
    return g


def hopf_lax_forward(L: Lagrangian, f: ConvexFunctionSamples, t, grid) -> GridField:
    """Inf-convolution value function started at f, evaluated on grid."""
    pts = _as_points(grid)
    times = np.atleast_1d(np.asarray(t, float))
    vals = np.empty((times.size, pts.shape[0]))
    flags = np.zeros((times.size, pts.shape[0]), dtype=bool)
    boundary = _boundary_mask(f.grid)
    for it, tt in enumerate(times):
        if tt < 0:
            raise DynamicsError("forward value function needs t >= 0")
        if tt == 0:
            vals[it], flags[it] = _match_samples(f, pts)
            continue
        C = fixed_end_cost_matrix(L, f.grid, pts, tt)
        total = f.values[:, None] + C
        idx = np.argmin(total, axis=0)
        vals[it] = total[idx, np.arange(pts.shape[0])]
        flags[it] = boundary[idx]
    return GridField(pts, times, vals, "HJ_forward", flags)


def hopf_lax_backward(L: Lagrangian, f: ConvexFunctionSamples, t, T: float, grid) -> GridField:
    """Sup-convolution value function ending at f at time T."""
    pts = _as_points(grid)
    times = np.atleast_1d(np.asarray(t, float))
    vals = np.empty((times.size, pts.shape[0]))
    flags = np.zeros((times.size, pts.shape[0]), dtype=bool)
    boundary = _boundary_mask(f.grid)
    for it, tt in enumerate(times):
        if tt > T:
            raise DynamicsError("backward value function needs t <= T")
        if tt == T:
            vals[it], flags[it] = _match_samples(f, pts)
            continue
        C = fixed_end_cost_matrix(L, pts, f.grid, T - tt)   # cost x -> z
        total = f.values[None, :] - C
        idx = np.argmax(total, axis=1)
        vals[it] = total[np.arange(pts.shape[0]), idx]
        flags[it] = boundary[idx]
    return GridField(pts, times, vals, "HJ_backward", flags)


def dual_hopf_lax_backward(Lt: Lagrangian, k: ConvexFunctionSamples, t, T: float, grid) -> GridField:
    """Backward value function on costate space with the dual running cost."""
    field = hopf_lax_backward(Lt, k, t, T, grid)
    field.equation_tag = "dual_HJ_backward"
    return field


def _match_samples(f: ConvexFunctionSamples, pts: np.ndarray):
    vals = np.empty(pts.shape[0])
    flags = np.zeros(pts.shape[0], dtype=bool)
    for i, p in enumerate(pts):
        d = np.max(np.abs(f.grid - p[None, :]), axis=1)
        j = int(np.argmin(d))
        if d[j] > 1e-9:
            raise DynamicsError("evaluation grid must be contained in the data grid at t=0/T")
        vals[i] = f.values[j]
    return vals, flags
