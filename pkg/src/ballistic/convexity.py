"""Convex-analysis kernel: Lagrangian/Hamiltonian registry, Legendre transforms,
sampled convex functions, and assumption checkers.

Every built-in Lagrangian is separable, L(x, p) = V(x) + K(p), with V and K
drawn from a small closed-form registry of convex profiles.  That makes the
three derived objects exact:

    Hamiltonian       H(x, q)  = K*(q) - V(x)
    dual Lagrangian   L~(v, q) = K*(v) + V*(q)
    biconjugacy       (L~)~    = L

The dual Lagrangian pairs the dual arc's position with the primal velocity
(momentum pairing): L~(v, q) = sup_{y,p} { <q, y> + <v, p> - L(y, p) }.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

INF = float("inf")


class ConvexityError(ValueError):
    """Input violates a convexity or domain requirement."""


class UnsupportedLagrangianError(ConvexityError):
    """Operation not defined for this Lagrangian family."""


class UnboundedHamiltonianError(ConvexityError):
    """sup_p {<p,q> - L} diverges (coercivity exponent <= 1)."""


# ---------------------------------------------------------------------------
# convex profiles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConvexProfile:
    """One closed-form convex function on R^d used as a Lagrangian block.

    kinds:
      zero            0
      quadratic(c)    c |u|^2 / 2                (c > 0)
      power(e)        |u|^e / e                  (e > 1)
      cosh(c)         c * sum_i (cosh u_i - 1)
      coshstar(c)     conjugate of cosh(c), componentwise
      pinned(at)      indicator {u == at}        (conjugate of an affine part)
    """

    kind: str
    coeff: float = 1.0
    exponent: float = 2.0
    pin: float = 0.0

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "zero":
            return np.zeros(u.shape[:-1]) if u.ndim > 1 else 0.0
        if self.kind == "quadratic":
            return 0.5 * self.coeff * _sqnorm(u)
        if self.kind == "power":
            e = self.exponent
            return _norm(u) ** e / e
        if self.kind == "cosh":
            return self.coeff * np.sum(np.cosh(u) - 1.0, axis=-1) if u.ndim > 1 \
                else self.coeff * float(np.sum(np.cosh(u) - 1.0))
        if self.kind == "coshstar":
            c = self.coeff
            out = u * np.arcsinh(u / c) - np.sqrt(c * c + u * u) + c
            return np.sum(out, axis=-1) if u.ndim > 1 else float(np.sum(out))
        if self.kind == "pinned":
            dev = _norm(u - self.pin)
            return np.where(dev <= 1e-12, 0.0, INF) if np.ndim(dev) else (0.0 if dev <= 1e-12 else INF)
        raise ValueError(f"unknown profile kind {self.kind!r}")

    def grad(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(u)
        if self.kind == "quadratic":
            return self.coeff * u
        if self.kind == "power":
            n = _norm(u)
            n = np.where(n == 0, 1.0, n) if np.ndim(n) else (n or 1.0)
            return u * np.asarray(n) ** (self.exponent - 2.0)
        if self.kind == "cosh":
            return self.coeff * np.sinh(u)
        if self.kind == "coshstar":
            return np.arcsinh(u / self.coeff)
        raise UnsupportedLagrangianError(f"profile {self.kind!r} is not differentiable")

    def conjugate(self) -> "ConvexProfile":
        if self.kind == "zero":
            return ConvexProfile("pinned", pin=0.0)
        if self.kind == "pinned" and self.pin == 0.0:
            return ConvexProfile("zero")
        if self.kind == "quadratic":
            return ConvexProfile("quadratic", coeff=1.0 / self.coeff)
        if self.kind == "power":
            e = self.exponent
            return ConvexProfile("power", exponent=e / (e - 1.0))
        if self.kind == "cosh":
            return ConvexProfile("coshstar", coeff=self.coeff)
        if self.kind == "coshstar":
            return ConvexProfile("cosh", coeff=self.coeff)
        raise UnsupportedLagrangianError(f"no closed-form conjugate for {self.kind!r}")

    @property
    def is_quadratic(self) -> bool:
        return self.kind == "quadratic" or self.kind == "zero"

    @property
    def is_pinned(self) -> bool:
        return self.kind == "pinned"


def _norm(u):
    u = np.asarray(u, dtype=float)
    if u.ndim == 0:
        return abs(float(u))
    return np.sqrt(np.sum(u * u, axis=-1)) if u.ndim > 1 else float(np.sqrt(np.sum(u * u)))


def _sqnorm(u):
    u = np.asarray(u, dtype=float)
    if u.ndim == 0:
        return float(u) ** 2
    return np.sum(u * u, axis=-1) if u.ndim > 1 else float(np.sum(u * u))


# ---------------------------------------------------------------------------
# Lagrangians
# ---------------------------------------------------------------------------

FAMILIES = ("quadratic-free", "harmonic", "power-kinetic", "state-potential",
            "tabulated-convex", "dual-separable")


@dataclass(frozen=True)
class Lagrangian:
    """A running cost L(x, p), position x and velocity p in R^d.

    Built-ins are time independent and separable: L = V(x) + K(p).  The
    tabulated family carries grid samples instead and only supports the
    numeric code paths.
    """

    family: str
    V: ConvexProfile = field(default_factory=lambda: ConvexProfile("zero"))
    K: ConvexProfile = field(default_factory=lambda: ConvexProfile("quadratic"))
    coercivity_exponent: float = 2.0
    jointly_convex: bool = True
    lower_bound: float = 0.0
    time_dependent: bool = False
    table: Optional[tuple] = None  # (x_grid, p_grid, values) for tabulated-convex

    # -- constructors ------------------------------------------------------

    @staticmethod
    def quadratic_free() -> "Lagrangian":
        return Lagrangian("quadratic-free", ConvexProfile("zero"), ConvexProfile("quadratic"))

    @staticmethod
    def harmonic(alpha: float = 1.0, beta: float = 1.0) -> "Lagrangian":
        if beta <= 0:
            raise ConvexityError("harmonic family needs beta > 0")
        V = ConvexProfile("quadratic", coeff=alpha) if alpha != 0 else ConvexProfile("zero")
        return Lagrangian("harmonic", V, ConvexProfile("quadratic", coeff=beta),
                          jointly_convex=alpha >= 0)

    @staticmethod
    def power_kinetic(delta: float) -> "Lagrangian":
        if delta <= 1:
            raise ConvexityError("power-kinetic family needs exponent > 1")
        return Lagrangian("power-kinetic", ConvexProfile("zero"),
                          ConvexProfile("power", exponent=delta), coercivity_exponent=delta)

    @staticmethod
    def state_potential(name: str, coeff: float = 1.0) -> "Lagrangian":
        registry = {"quadratic": ConvexProfile("quadratic", coeff=coeff),
                    "cosh": ConvexProfile("cosh", coeff=coeff)}
        if name not in registry:
            raise ConvexityError(f"unknown potential {name!r}; choose from {sorted(registry)}")
        return Lagrangian("state-potential", registry[name], ConvexProfile("quadratic"))

    @staticmethod
    def tabulated(x_grid, p_grid, values) -> "Lagrangian":
        x_grid = np.asarray(x_grid, float)
        p_grid = np.asarray(p_grid, float)
        values = np.asarray(values, float)
        if values.shape != (x_grid.size, p_grid.size):
            raise ConvexityError("tabulated values must be shaped (len(x_grid), len(p_grid))")
        if not np.all(np.isfinite(values)):
            raise ConvexityError("tabulated values must be finite")
        for i in range(x_grid.size):
            if not midpoint_convex_1d(p_grid, values[i]):
                raise ConvexityError(f"tabulated samples not convex in p at x={x_grid[i]}")
        lag = Lagrangian("tabulated-convex", table=(x_grid, p_grid, values),
                         lower_bound=float(values.min()),
                         jointly_convex=midpoint_convex_2d(x_grid, p_grid, values))
        return lag

    # -- evaluation --------------------------------------------------------

    def value(self, x, p, t: float = 0.0):
        """L(t, x, p); the t argument is carried but the built-ins ignore it."""
        if self.family == "tabulated-convex":
            return self._table_value(x, p)
        return np.asarray(self.V(x)) + np.asarray(self.K(p))

    def velocity_grad(self, x, p):
        if self.family == "tabulated-convex":
            xg, pg, vals = self.table
            raise UnsupportedLagrangianError("tabulated family has no analytic gradient")
        return self.K.grad(p)

    def position_grad(self, x, p):
        if self.family == "tabulated-convex":
            raise UnsupportedLagrangianError("tabulated family has no analytic gradient")
        return self.V.grad(x)

    def _table_value(self, x, p):
        xg, pg, vals = self.table
        xi = np.clip(np.searchsorted(xg, np.atleast_1d(x).ravel()[0]), 0, xg.size - 1)
        pi = np.clip(np.searchsorted(pg, np.atleast_1d(p).ravel()[0]), 0, pg.size - 1)
        return float(vals[xi, pi])

    @property
    def separable(self) -> bool:
        return self.family != "tabulated-convex"

    @property
    def rigid(self) -> bool:
        """True when the velocity block pins the arc (dual of an x-free family)."""
        return self.separable and self.K.is_pinned


# ---------------------------------------------------------------------------
# Hamiltonians
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Hamiltonian:
    """H(x, q) = sup_p { <p, q> - L(x, p) }.

    Separable families give the closed form H = K*(q) - V(x).  The tabulated
    family falls back to a grid sup with a recorded truncation radius.
    """

    source: Lagrangian
    closed_form: bool = True
    truncation_radius: float = 0.0

    def value(self, x, q):
        L = self.source
        if L.separable:
            return np.asarray(L.K.conjugate()(q)) - np.asarray(L.V(x))
        xg, pg, vals = L.table
        q = np.atleast_1d(q)
        xi = int(np.argmin(np.abs(xg - np.ravel(x)[0])))
        return float(np.max(pg * q[0] - vals[xi]))

    def grad_q(self, x, q):
        return self.source.K.conjugate().grad(q)

    def grad_x(self, x, q):
        # H(x, q) = K*(q) - V(x)
        return -self.source.V.grad(x)


def hamiltonian(L: Lagrangian) -> Hamiltonian:
    """Closed-form Hamiltonian for registry families, grid sup otherwise."""
    if L.separable:
        if L.coercivity_exponent <= 1:
            raise UnboundedHamiltonianError(
                "velocity coercivity exponent <= 1: the conjugate can be +inf")
        return Hamiltonian(L, closed_form=True)
    xg, pg, vals = L.table
    return Hamiltonian(L, closed_form=False, truncation_radius=float(np.abs(pg).max()))


def dual_lagrangian(L: Lagrangian) -> Lagrangian:
    """Joint conjugate with momentum pairing: L~(v, q) = sup { <q,y> + <v,p> - L(y,p) }.

    Separable L = V + K maps to L~ = K*(position) + V*(velocity).  An
    x-independent L therefore dualizes to a rigid family whose arcs cannot
    move (velocity pinned at 0); that restriction is carried explicitly.
    """
    if not L.jointly_convex:
        raise UnsupportedLagrangianError("dual Lagrangian requires a jointly convex L")
    if not L.separable:
        raise UnsupportedLagrangianError("dual of a tabulated Lagrangian is not supported; "
                                         "tabulate the dual directly")
    Vd = L.K.conjugate()
    Kd = L.V.conjugate()
    family = "harmonic" if (Vd.is_quadratic and Kd.is_quadratic and not Kd.is_pinned) \
        else "dual-separable"
    delta = Kd.exponent if Kd.kind == "power" else 2.0
    return Lagrangian(family, Vd, Kd, coercivity_exponent=delta)


# ---------------------------------------------------------------------------
# sampled convex functions and grid Legendre transforms
# ---------------------------------------------------------------------------

@dataclass
class ConvexFunctionSamples:
    """Function samples on a finite lattice, with a declared shape.

    grid:   (n, d) points
    values: (n,) extended reals
    kind:   'convex' | 'concave' | 'general'
    unbounded: optional bool mask marking transform outputs whose extremum
               was pinned to the sampling boundary (value set to +-inf).
    """

    grid: np.ndarray
    values: np.ndarray
    kind: str = "general"
    unbounded: Optional[np.ndarray] = None

    def __post_init__(self):
        self.grid = np.atleast_2d(np.asarray(self.grid, float))
        if self.grid.shape[0] == 1 and self.grid.shape[1] > 1:
            # a flat 1-d vector of sample sites
            self.grid = self.grid.T
        self.values = np.asarray(self.values, float).ravel()
        if self.grid.shape[0] != self.values.size:
            raise ConvexityError("grid and values length mismatch")
        if self.unbounded is None and not np.all(np.isfinite(self.values)):
            raise ConvexityError("sample values must be finite on the declared grid")
        if self.kind == "convex" and self.grid.shape[1] == 1:
            order = np.argsort(self.grid[:, 0])
            if not midpoint_convex_1d(self.grid[order, 0], self.values[order]):
                raise ConvexityError("samples violate discrete midpoint convexity")
        if self.kind == "concave" and self.grid.shape[1] == 1:
            order = np.argsort(self.grid[:, 0])
            if not midpoint_convex_1d(self.grid[order, 0], -self.values[order]):
                raise ConvexityError("samples violate discrete midpoint concavity")

    @property
    def dim(self) -> int:
        return self.grid.shape[1]

    def grid_1d(self) -> np.ndarray:
        if self.dim != 1:
            raise ConvexityError("this operation requires 1-d samples")
        return self.grid[:, 0]


def legendre_transform(f: ConvexFunctionSamples, duals, direction: str) -> ConvexFunctionSamples:
    """Grid Legendre transform onto caller-provided dual points.

    convex_star:  g*(v) = max_x { <v,x> - g(x) }
    concave_star: h_*(v) = min_x { <v,x> - h(x) }

    Extrema attained on the boundary of the sampling box are flagged
    unbounded and reported as +-inf rather than as a grid number.
    """
    if direction not in ("convex_star", "concave_star"):
        raise ConvexityError(f"unknown transform direction {direction!r}")
    duals = np.atleast_2d(np.asarray(duals, float))
    if duals.shape[0] == 1 and duals.shape[1] > 1:
        duals = duals.T
    if f.grid.shape[0] == 0:
        raise ConvexityError("empty sample grid")
    if duals.shape[1] != f.dim:
        raise ConvexityError("dual points live in the wrong dimension")

    pair = duals @ f.grid.T                      # (m, n) inner products
    scores = pair - f.values[None, :]
    boundary = _boundary_mask(f.grid)
    if direction == "convex_star":
        idx = np.argmax(scores, axis=1)
        vals = scores[np.arange(duals.shape[0]), idx]
        out_kind = "convex"
        sentinel = INF
    else:
        idx = np.argmin(scores, axis=1)
        vals = scores[np.arange(duals.shape[0]), idx]
        out_kind = "concave"
        sentinel = -INF
    # an extremum tied with an interior point is not boundary-pinned
    flagged = boundary[idx]
    for row in np.nonzero(flagged)[0]:
        ties = np.abs(scores[row] - vals[row]) <= 1e-15 * max(1.0, abs(vals[row]))
        if np.any(ties & ~boundary):
            flagged[row] = False
    vals = np.where(flagged, sentinel, vals)
    return ConvexFunctionSamples(duals, vals, kind=out_kind, unbounded=flagged)


def _boundary_mask(grid: np.ndarray) -> np.ndarray:
    """Points extremal in some coordinate (box-lattice boundary)."""
    mask = np.zeros(grid.shape[0], dtype=bool)
    for d in range(grid.shape[1]):
        lo, hi = grid[:, d].min(), grid[:, d].max()
        mask |= (grid[:, d] == lo) | (grid[:, d] == hi)
    if mask.all():
        # a two-point (or degenerate) grid: only flag the true extremes of the
        # first coordinate so tiny grids remain usable
        mask = np.zeros(grid.shape[0], dtype=bool)
        mask[np.argmin(grid[:, 0])] = True
        mask[np.argmax(grid[:, 0])] = True
    return mask


def midpoint_convex_1d(xs: np.ndarray, vals: np.ndarray, tol: float = 1e-9) -> bool:
    """Discrete midpoint convexity for sorted 1-d samples: chords lie above."""
    xs = np.asarray(xs, float)
    vals = np.asarray(vals, float)
    if xs.size < 3:
        return True
    for i in range(xs.size - 2):
        x0, x1, x2 = xs[i], xs[i + 1], xs[i + 2]
        lam = (x2 - x1) / (x2 - x0)
        if vals[i + 1] > lam * vals[i] + (1 - lam) * vals[i + 2] + tol:
            return False
    return True


def midpoint_convex_2d(xg, pg, vals, tol: float = 1e-9) -> bool:
    """Joint midpoint convexity on a rectangular table, sampled along both
    axes and both diagonals."""
    vals = np.asarray(vals, float)
    nx, npp = vals.shape
    for i in range(0, nx - 2):
        for j in range(0, npp - 2):
            mid = vals[i + 1, j + 1]
            if mid > 0.5 * (vals[i, j] + vals[i + 2, j + 2]) + tol:
                return False
            if mid > 0.5 * (vals[i, j + 2] + vals[i + 2, j]) + tol:
                return False
            if mid > 0.5 * (vals[i, j + 1] + vals[i + 2, j + 1]) + tol:
                return False
            if mid > 0.5 * (vals[i + 1, j] + vals[i + 1, j + 2]) + tol:
                return False
    return True


def sample_convexity_check(fun, points, tol: float = 1e-8):
    """Midpoint sampling of p -> fun(p) on a 1-d point set; returns worst gap."""
    pts = np.sort(np.asarray(points, float))
    worst = 0.0
    witness = None
    for i in range(pts.size - 2):
        a, b, c = pts[i], pts[i + 1], pts[i + 2]
        lam = (c - b) / (c - a)
        gap = fun(b) - (lam * fun(a) + (1 - lam) * fun(c))
        if gap > worst:
            worst, witness = gap, (a, b, c)
    return worst <= tol, worst, witness


# ---------------------------------------------------------------------------
# assumption checkers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Clause:
    name: str
    passed: bool
    witness: Optional[tuple] = None
    detail: str = ""


@dataclass(frozen=True)
class AssumptionReport:
    profile: str
    clauses: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.clauses)

    def failures(self):
        return [c for c in self.clauses if not c.passed]


def check_assumptions(L: Lagrangian, profile: str,
                      box: float = 4.0, n: int = 17) -> AssumptionReport:
    """Sample the stated inequalities on a bounded grid and report per clause.

    Grid sampling only; nothing is certified beyond the sampled box.
    """
    xs = np.linspace(-box, box, n)
    ps = np.linspace(-box, box, n)
    clauses = []

    def Lval(x, p):
        return float(np.asarray(L.value(np.atleast_1d(x), np.atleast_1d(p))))

    if profile == "A0":
        vals = np.array([[Lval(x, p) for p in ps] for x in xs])
        clauses.append(Clause("A0.bounded-below", bool(np.min(vals) > -INF),
                              detail=f"min sampled value {np.min(vals):.6g}"))
        ok = True
        wit = None
        for x in xs[:: max(1, n // 5)]:
            good, gap, w = sample_convexity_check(lambda p: Lval(x, p), ps)
            if not good:
                ok, wit = False, (x,) + tuple(w)
                break
        clauses.append(Clause("A0.convex-in-velocity", ok, witness=wit))
        # delta-coercivity: L / |p|^d' grows along the sampled ray for some d' > 1
        dprime = 1.0 + 0.5 * (L.coercivity_exponent - 1.0)
        big = np.array([2.0, 4.0, 8.0, 16.0]) * box
        ratios = np.array([Lval(0.0, b) / b ** dprime for b in big])
        clauses.append(Clause("A0.coercive", bool(np.all(np.diff(ratios) > -1e-12)),
                              detail=f"ratios {np.round(ratios, 4).tolist()}"))

    elif profile == "A123":
        big = np.array([2.0, 4.0, 8.0, 16.0]) * box
        ratios = np.array([Lval(0.0, b) / b ** 2 for b in big])
        clauses.append(Clause("A1.two-coercive-minorant", bool(ratios[-1] > 1e-9),
                              detail=f"L(0,p)/p^2 at p={big[-1]:g}: {ratios[-1]:.4g}"))
        ok = True
        wit = None
        for x in xs[:: max(1, n // 5)]:
            good, gap, w = sample_convexity_check(lambda p: Lval(x, p), ps)
            if not good:
                ok, wit = False, (x,) + tuple(w)
                break
        clauses.append(Clause("A1.convex-in-velocity", ok, witness=wit))
        eps = 0.25
        worst = 0.0
        for u in ps:
            lu = np.array([Lval(x, u) for x in xs])
            for i in range(xs.size - 1):
                if abs(xs[i + 1] - xs[i]) <= eps:
                    worst = max(worst, abs((1 + lu[i + 1]) / (1 + lu[i]) - 1.0))
        clauses.append(Clause("A2.log-uniform-continuity", worst < 10.0,
                              detail=f"sampled modulus at eps={eps}: {worst:.4g}"))
        top = max(Lval(x, 0.0) for x in xs)
        clauses.append(Clause("A3.i.bounded-at-zero-velocity", math.isfinite(top),
                              detail=f"sup L(x,0) on box: {top:.6g}"))
        h = 1e-5
        gmax = max(abs(Lval(x + h, p) - Lval(x - h, p)) / (2 * h) / (1 + Lval(x, p))
                   for x in xs[1:-1] for p in ps)
        clauses.append(Clause("A3.ii.relative-x-gradient-bounded", gmax < 1e6,
                              detail=f"max |dL/dx|/(1+L): {gmax:.4g}"))
        vmax = max(abs(Lval(x, p + h) - Lval(x, p - h)) / (2 * h)
                   for x in xs[1:-1] for p in ps[1:-1])
        clauses.append(Clause("A3.iii.velocity-gradient-bounded-on-balls",
                              math.isfinite(vmax), detail=f"max |dL/dp| on box: {vmax:.4g}"))

    elif profile == "B123":
        ok = True
        wit = None
        directions = ((1, 1), (1, -1), (1, 0), (0, 1))
        for i in range(1, n - 1):
            for j in range(1, n - 1):
                mid = Lval(xs[i], ps[j])
                for di, dj in directions:
                    lo = 0.5 * (Lval(xs[i - di], ps[j - dj]) + Lval(xs[i + di], ps[j + dj]))
                    if mid > lo + 1e-9:
                        ok, wit = False, (xs[i], ps[j])
                        break
                if not ok:
                    break
            if not ok:
                break
        clauses.append(Clause("B1.jointly-convex", ok, witness=wit))
        # registry families are finite everywhere: dist(0, F(x)) = 0
        finite_at0 = all(math.isfinite(Lval(x, 0.0)) for x in xs)
        clauses.append(Clause("B2.finite-velocity-set", finite_at0,
                              detail="L(x, 0) finite on sampled box"))
        theta, alpha, beta = _b3_theta(L)
        if theta is None:
            clauses.append(Clause("B3.growth-minorant", False,
                                  detail="no explicit theta recorded for this family"))
        else:
            ok = True
            wit = None
            for x in xs:
                for p in ps:
                    lhs = Lval(x, p)
                    rhs = theta(max(0.0, abs(p) - alpha * abs(x))) - beta * abs(x)
                    if lhs < rhs - 1e-9:
                        ok, wit = False, (x, p)
                        break
                if not ok:
                    break
            clauses.append(Clause("B3.growth-minorant", ok, witness=wit,
                                  detail=f"theta from registry, alpha={alpha}, beta={beta}"))
    else:
        raise ConvexityError(f"unknown assumption profile {profile!r}")

    return AssumptionReport(profile, tuple(clauses))


def _b3_theta(L: Lagrangian):
    """Registry growth minorants: L(x,p) >= theta(max(0,|p|-a|x|)) - b|x|."""
    if not L.separable:
        return None, 0.0, 0.0
    K = L.K
    if K.kind == "quadratic":
        c = K.coeff
        return (lambda r: 0.5 * c * r * r), 0.0, 0.0
    if K.kind == "power":
        e = K.exponent
        return (lambda r: r ** e / e), 0.0, 0.0
    return None, 0.0, 0.0
