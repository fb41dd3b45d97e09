"""Grid functions on [0,1] and [0,1]^2 and their RKHS calculus.

A uniform grid with ``n`` cells per axis has nodes ``s_i = i/n``.  Derivatives
are forward differences scaled by ``n`` (mixed derivatives by ``n**2``), so the
discrete inner product is the exact RKHS inner product of the piecewise-linear
(1D) or bilinear (2D) interpolant.

Riemann-Stieltjes measures generated by a cell field live on nodes.  The atom
at an interior node is the second mixed difference of the four surrounding
cells.  Outside the square the cell field is extended as a constant, which
puts zero mass on every boundary node.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, DomainError

__all__ = [
    "GridFn1D",
    "GridFn2D",
    "CellField2D",
    "nodes",
    "mixed_second_diff",
    "cumulative_reconstruct",
    "forward_slopes",
    "rkhs_inner",
    "rkhs_norm",
    "rkhs_inner1d",
    "rkhs_norm1d",
    "measure_atoms",
    "measure_atoms_1d",
    "edge_mass",
    "stieltjes_integral_2d",
    "stieltjes_integral_1d",
    "corner_combination",
    "rkhs_gram",
    "outer",
    "read_csv",
    "write_csv",
]


def nodes(n: int) -> np.ndarray:
    return np.arange(n + 1, dtype=float) / n


def _check_n(n):
    if int(n) != n or n < 2:
        raise DomainError(f"grid needs n >= 2 cells, got n={n}")


@dataclass(frozen=True)
class GridFn1D:
    """Function sampled at the n+1 nodes of a uniform grid of [0,1]."""

    n: int
    values: np.ndarray

    def __post_init__(self):
        _check_n(self.n)
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.n + 1,):
            raise DimensionError(f"expected {self.n + 1} values, got shape {v.shape}")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_callable(cls, f, n: int) -> "GridFn1D":
        return cls(n, np.asarray(f(nodes(n)), dtype=float))

    @property
    def in_h0(self) -> bool:
        return self.values[0] == 0.0 and self.values[-1] == 0.0

    def require_h0(self, what: str = "function") -> None:
        for i in (0, self.n):
            if self.values[i] != 0.0:
                raise DomainError(
                    f"{what} must vanish at the endpoints; node {i} has value {self.values[i]!r}"
                )

    def __mul__(self, c: float) -> "GridFn1D":
        return GridFn1D(self.n, self.values * c)

    __rmul__ = __mul__

    def __neg__(self) -> "GridFn1D":
        return GridFn1D(self.n, -self.values)


@dataclass(frozen=True)
class GridFn2D:
    """Function sampled on the (n+1) x (n+1) nodes (i/n, j/n) of [0,1]^2."""

    n: int
    values: np.ndarray

    def __post_init__(self):
        _check_n(self.n)
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.n + 1, self.n + 1):
            raise DimensionError(
                f"expected {(self.n + 1, self.n + 1)} values, got shape {v.shape}"
            )
        object.__setattr__(self, "values", v)

    @classmethod
    def from_callable(cls, f, n: int) -> "GridFn2D":
        s = nodes(n)
        return cls(n, np.asarray(f(s[:, None], s[None, :]), dtype=float) * np.ones((n + 1, n + 1)))

    @classmethod
    def constant(cls, c: float, n: int) -> "GridFn2D":
        return cls(n, np.full((n + 1, n + 1), float(c)))

    @classmethod
    def zeros(cls, n: int) -> "GridFn2D":
        return cls(n, np.zeros((n + 1, n + 1)))

    def boundary_violation(self):
        """First boundary node (i, j) with a nonzero value, or None."""
        v = self.values
        mask = np.zeros_like(v, dtype=bool)
        mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = True
        bad = np.argwhere(mask & (v != 0.0))
        if len(bad) == 0:
            return None
        return tuple(int(k) for k in bad[0])

    @property
    def in_h0(self) -> bool:
        return self.boundary_violation() is None

    def require_h0(self, what: str = "function") -> None:
        node = self.boundary_violation()
        if node is not None:
            raise DomainError(
                f"{what} must vanish on the boundary; node {node} has value {self.values[node]!r}"
            )

    @property
    def interior(self) -> np.ndarray:
        return self.values[1:-1, 1:-1]

    def __add__(self, other: "GridFn2D") -> "GridFn2D":
        _same_n(self, other)
        return GridFn2D(self.n, self.values + other.values)

    def __sub__(self, other: "GridFn2D") -> "GridFn2D":
        _same_n(self, other)
        return GridFn2D(self.n, self.values - other.values)

    def __mul__(self, c: float) -> "GridFn2D":
        return GridFn2D(self.n, self.values * c)

    __rmul__ = __mul__

    def __neg__(self) -> "GridFn2D":
        return GridFn2D(self.n, -self.values)


@dataclass(frozen=True)
class CellField2D:
    """One value per grid cell [i/n,(i+1)/n) x [j/n,(j+1)/n); stands for a mixed derivative."""

    n: int
    values: np.ndarray

    def __post_init__(self):
        _check_n(self.n)
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.n, self.n):
            raise DimensionError(f"expected {(self.n, self.n)} cells, got shape {v.shape}")
        object.__setattr__(self, "values", v)


def _same_n(a, b):
    if a.n != b.n:
        raise DimensionError(f"grid size mismatch: n={a.n} vs n={b.n}")


def outer(h1: GridFn1D, h2: GridFn1D) -> GridFn2D:
    """Tensor product (h1 x h2)(s, t) = h1(s) h2(t)."""
    _same_n(h1, h2)
    return GridFn2D(h1.n, np.outer(h1.values, h2.values))


# ---------------------------------------------------------------------------
# derivatives, inner products


def forward_slopes(h: GridFn1D) -> np.ndarray:
    """Right-continuous derivative on each of the n cells."""
    return np.diff(h.values) * h.n


def mixed_second_diff(h: GridFn2D) -> CellField2D:
    h.require_h0("trend")
    v = h.values
    d = v[1:, 1:] - v[1:, :-1] - v[:-1, 1:] + v[:-1, :-1]
    return CellField2D(h.n, d * float(h.n) ** 2)


def cumulative_reconstruct(f: CellField2D) -> GridFn2D:
    """Node values of the integral of f over [0,s] x [0,t]."""
    out = np.zeros((f.n + 1, f.n + 1))
    out[1:, 1:] = np.cumsum(np.cumsum(f.values, axis=0), axis=1) / float(f.n) ** 2
    return GridFn2D(f.n, out)


def rkhs_inner(h1: GridFn2D, h2: GridFn2D) -> float:
    _same_n(h1, h2)
    a = mixed_second_diff(h1).values
    b = mixed_second_diff(h2).values
    return float(np.sum(a * b)) / float(h1.n) ** 2


def rkhs_norm(h: GridFn2D) -> float:
    return float(np.sqrt(rkhs_inner(h, h)))


def rkhs_inner1d(h1: GridFn1D, h2: GridFn1D) -> float:
    _same_n(h1, h2)
    h1.require_h0()
    h2.require_h0()
    return float(np.dot(forward_slopes(h1), forward_slopes(h2))) / h1.n


def rkhs_norm1d(h: GridFn1D) -> float:
    return float(np.sqrt(rkhs_inner1d(h, h)))


def rkhs_gram(n: int) -> sp.csr_matrix:
    """Sparse Gram operator Q on the (n-1)^2 interior nodes, ||g||^2 = g^T Q g.

    Interior nodes are ordered row-major over ``values[1:n, 1:n]``.  Q is the
    inverse of the pillow covariance restricted to those nodes.
    """
    m = n - 1
    lap = sp.diags([-np.ones(m - 1), 2.0 * np.ones(m), -np.ones(m - 1)], [-1, 0, 1]) * n
    return sp.kron(lap, lap, format="csr")


# ---------------------------------------------------------------------------
# Riemann-Stieltjes measures


def measure_atoms(f: CellField2D) -> np.ndarray:
    """Node atoms of the signed measure generated by the cell field f.

    Returns an (n+1) x (n+1) array.  With the constant extension of f outside
    the square, boundary atoms are identically zero.
    """
    p = np.pad(f.values, 1, mode="edge")
    return p[1:, 1:] - p[1:, :-1] - p[:-1, 1:] + p[:-1, :-1]


def edge_mass(f: CellField2D) -> float:
    """Total |mass| the measure places on boundary nodes (zero under the adopted convention)."""
    a = measure_atoms(f)
    inner = np.abs(a[1:-1, 1:-1]).sum()
    return float(np.abs(a).sum() - inner)


def stieltjes_integral_2d(g: GridFn2D, f: CellField2D) -> float:
    """Integral of g against the discrete measure generated by f."""
    _same_n(g, f)
    return float(np.sum(g.values * measure_atoms(f)))


def corner_combination(f: CellField2D) -> float:
    """f(1,1) - f(1,0) - f(0,1) + f(0,0) using the corner cells."""
    v = f.values
    return float(v[-1, -1] - v[-1, 0] - v[0, -1] + v[0, 0])


def measure_atoms_1d(h_tilde: GridFn1D) -> np.ndarray:
    """Node atoms of the measure d(-h'), zero at both endpoints."""
    d = forward_slopes(h_tilde)
    atoms = np.zeros(h_tilde.n + 1)
    atoms[1:-1] = d[:-1] - d[1:]
    return atoms


def stieltjes_integral_1d(g: GridFn1D, h_tilde: GridFn1D, tol: float = 1e-8) -> float:
    """Integral of g against d(-h_tilde') for a concave h_tilde."""
    _same_n(g, h_tilde)
    atoms = measure_atoms_1d(h_tilde)
    scale = max(1.0, float(np.abs(forward_slopes(h_tilde)).max()))
    worst = int(np.argmin(atoms))
    if atoms[worst] < -tol * scale:
        raise DomainError(
            f"majorant is not concave: slope increases by {-atoms[worst]:.3g} at node {worst}"
        )
    return float(np.dot(g.values, atoms))


# ---------------------------------------------------------------------------
# CSV serialization


def write_csv(fn, path) -> None:
    """Write 'n=<int>' then one row (1D) or n+1 rows (2D) with 17 significant digits."""
    v = np.atleast_2d(fn.values)
    lines = [f"n={fn.n}"]
    lines += [",".join(format(x, ".17g") for x in row) for row in v]
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path):
    """Inverse of :func:`write_csv`; returns GridFn1D or GridFn2D by row count."""
    text = Path(path).read_text().strip().splitlines()
    if not text or not text[0].startswith("n="):
        raise DomainError(f"{path}: first line must be 'n=<int>'")
    try:
        n = int(text[0][2:])
        rows = [[float(x) for x in line.split(",")] for line in text[1:] if line.strip()]
    except ValueError as exc:
        raise DomainError(f"{path}: malformed grid CSV ({exc})") from None
    if any(len(r) != n + 1 for r in rows):
        raise DomainError(f"{path}: every row must have n+1={n + 1} values")
    if len(rows) == 1:
        return GridFn1D(n, np.array(rows[0]))
    if len(rows) == n + 1:
        return GridFn2D(n, np.array(rows))
    raise DomainError(f"{path}: expected 1 or {n + 1} rows, got {len(rows)}")
