"""Finitely supported probability measures on R^d.

Atoms are the computational stand-in for measures with finite first moment;
grids refine toward any continuum claim.  Coordinates and weights are kept in
double precision and the text format round-trips them exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

MERGE_TOL = 1e-12
WEIGHT_TOL = 1e-12


class MeasureError(ValueError):
    pass


@dataclass(frozen=True)
class DiscreteMeasure:
    """Weighted atoms in R^d; weights sum to one.

    space is 'state' for measures on M and 'costate' for measures on M*.
    """

    atoms: np.ndarray      # (n, d)
    weights: np.ndarray    # (n,)
    space: str = "state"

    def __post_init__(self):
        atoms = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        if atoms.shape[0] == 1 and np.asarray(self.atoms).ndim == 1 and atoms.shape[1] > 1:
            atoms = atoms.T
        weights = np.asarray(self.weights, dtype=float).ravel()
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)
        if atoms.shape[0] != weights.size:
            raise MeasureError("atom/weight length mismatch")
        if np.any(weights < -WEIGHT_TOL):
            raise MeasureError("negative weight")
        if abs(weights.sum() - 1.0) > WEIGHT_TOL:
            raise MeasureError(f"weights sum to {weights.sum()!r}, not 1")
        if self.space not in ("state", "costate"):
            raise MeasureError(f"unknown space tag {self.space!r}")

    @property
    def n(self) -> int:
        return self.atoms.shape[0]

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    def coords_1d(self) -> np.ndarray:
        if self.dim != 1:
            raise MeasureError("operation requires 1-d atoms")
        return self.atoms[:, 0]

    def __eq__(self, other):
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        a, b = canonical(self), canonical(other)
        return (a.space == b.space and a.atoms.shape == b.atoms.shape
                and np.array_equal(a.atoms, b.atoms) and np.array_equal(a.weights, b.weights))


def measure(atoms, weights=None, space: str = "state") -> DiscreteMeasure:
    """Convenience constructor; uniform weights when omitted."""
    atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
    if atoms.shape[0] == 1 and np.asarray(atoms).size > 1 and np.ndim(weights) != 0:
        pass
    if atoms.shape[0] == 1 and atoms.shape[1] > 1 and weights is not None \
            and np.asarray(weights).size == atoms.shape[1]:
        atoms = atoms.T
    elif atoms.shape[0] == 1 and atoms.shape[1] > 1 and weights is None:
        atoms = atoms.T
    if weights is None:
        weights = np.full(atoms.shape[0], 1.0 / atoms.shape[0])
    return DiscreteMeasure(atoms, weights, space)


def dirac(point, space: str = "state") -> DiscreteMeasure:
    return DiscreteMeasure(np.atleast_1d(np.asarray(point, float))[None, :], np.array([1.0]), space)


def canonical(m: DiscreteMeasure) -> DiscreteMeasure:
    """Sort atoms lexicographically and merge coincident ones."""
    order = np.lexsort(m.atoms.T[::-1])
    atoms = m.atoms[order]
    weights = m.weights[order]
    out_a, out_w = [atoms[0]], [weights[0]]
    for a, w in zip(atoms[1:], weights[1:]):
        if np.max(np.abs(a - out_a[-1])) <= MERGE_TOL:
            out_w[-1] += w
        else:
            out_a.append(a)
            out_w.append(w)
    return DiscreteMeasure(np.array(out_a), np.array(out_w), m.space)


def push_forward(m: DiscreteMeasure, mapping: Callable, space: str | None = None) -> DiscreteMeasure:
    """Image measure of an atomwise map; coincident images are merged."""
    images = []
    for i in range(m.n):
        try:
            y = mapping(m.atoms[i])
        except Exception as exc:
            raise MeasureError(f"map undefined at atom {m.atoms[i]}: {exc}") from exc
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if not np.all(np.isfinite(y)):
            raise MeasureError(f"map undefined (non-finite) at atom {m.atoms[i]}")
        images.append(y)
    return canonical(DiscreteMeasure(np.array(images), m.weights.copy(),
                                     space or m.space))


def first_moment(m: DiscreteMeasure) -> float:
    return float(np.sum(m.weights * np.sqrt(np.sum(m.atoms ** 2, axis=1))))


def mean(m: DiscreteMeasure) -> np.ndarray:
    return m.weights @ m.atoms


@dataclass(frozen=True)
class QuantileFunction:
    """Right-continuous step quantile of a 1-d measure.

    G(t) = inf { z : F(z) >= t } with F the cumulative weight function.
    """

    positions: np.ndarray  # sorted atom positions
    cumulative: np.ndarray # cumulative weights, ending at 1

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.cumulative, t - 1e-15, side="left")
        idx = np.clip(idx, 0, self.positions.size - 1)
        out = self.positions[idx]
        return float(out) if out.ndim == 0 else out


def quantile(m: DiscreteMeasure) -> QuantileFunction:
    if m.dim != 1:
        raise MeasureError("quantile function requires d = 1")
    c = canonical(m)
    return QuantileFunction(c.atoms[:, 0], np.cumsum(c.weights))


def from_samples(points, space: str = "state") -> DiscreteMeasure:
    """Empirical measure of a sample array (n, d) or (n,)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    return canonical(DiscreteMeasure(pts, np.full(pts.shape[0], 1.0 / pts.shape[0]), space))


def to_file(m: DiscreteMeasure, path) -> None:
    """One atom per line: `w x1 ... xd`, full round-trip decimals."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# d={m.dim} space={m.space}\n")
        for w, a in zip(m.weights, m.atoms):
            coords = " ".join(repr(float(c)) for c in a)
            fh.write(f"{float(w)!r} {coords}\n")


def from_file(path) -> DiscreteMeasure:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("#"):
        raise MeasureError(f"{path}: missing header line")
    header = dict(tok.split("=") for tok in lines[0][1:].split())
    try:
        d = int(header["d"])
        space = header["space"]
    except (KeyError, ValueError) as exc:
        raise MeasureError(f"{path}: malformed header {lines[0]!r}") from exc
    ws, ats = [], []
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != d + 1:
            raise MeasureError(f"{path}: expected {d + 1} fields, got {ln!r}")
        ws.append(float(parts[0]))
        ats.append([float(p) for p in parts[1:]])
    return DiscreteMeasure(np.array(ats), np.array(ws), space)
