"""Uniform periodic grids on the unit torus, grid functions, and discrete norms.

Grids are axis-aligned with the same number of nodes N per axis; node j maps
to coordinate j/N and index arithmetic wraps modulo N.  The derivative
stencils here are centered second-order differences and serve as
scheme-independent measurement diagnostics; the upwind solver stencils live
in :mod:`ergodic_hjb.solver`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TorusGrid:
    """Uniform lattice on [0,1)^dim with N nodes per axis, spacing h = 1/N."""

    dim: int
    n: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"unsupported dimension {self.dim} (must be 1 or 2)")
        if self.n < 4:
            raise ValueError(f"points_per_axis must be at least 4 (got {self.n})")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    @property
    def num_nodes(self) -> int:
        return self.n**self.dim

    @property
    def origin_index(self) -> tuple:
        return (0,) * self.dim

    def axis_coordinates(self) -> np.ndarray:
        return np.arange(self.n) / self.n

    def nodes(self) -> np.ndarray:
        """All node coordinates, shape (num_nodes, dim), C-order."""
        c = self.axis_coordinates()
        if self.dim == 1:
            return c[:, None]
        gx, gy = np.meshgrid(c, c, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel()], axis=-1)


def build_grid(dim: int, n: int) -> TorusGrid:
    return TorusGrid(int(dim), int(n))


class GridFunction:
    """Values attached to torus nodes; scalar, vector, or matrix valued.

    Immutable after construction.  ``values`` has shape grid.shape for
    scalars, grid.shape + (dim,) for vectors, grid.shape + (dim, dim) for
    matrices.
    """

    def __init__(self, grid: TorusGrid, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        gs = grid.shape
        if values.shape[: grid.dim] != gs:
            raise ValueError(
                f"values shape {values.shape} incompatible with grid shape {gs}"
            )
        comp = values.shape[grid.dim :]
        if comp not in ((), (grid.dim,), (grid.dim, grid.dim)):
            raise ValueError(f"unsupported component shape {comp}")
        values = values.copy()
        values.setflags(write=False)
        self.grid = grid
        self.values = values

    @property
    def component_shape(self) -> tuple:
        return self.values.shape[self.grid.dim :]

    @property
    def is_scalar(self) -> bool:
        return self.component_shape == ()

    def value_at(self, *index: int):
        """Nodal value with modular index arithmetic (wraps on every axis)."""
        if len(index) != self.grid.dim:
            raise ValueError(f"expected {self.grid.dim} indices, got {len(index)}")
        idx = tuple(int(i) % self.grid.n for i in index)
        return self.values[idx]

    def shifted(self, *offsets: int) -> "GridFunction":
        """Cyclic shift of the nodal values (translation on the torus)."""
        vals = self.values
        for ax, off in enumerate(offsets):
            vals = np.roll(vals, -int(off), axis=ax)
        return GridFunction(self.grid, vals)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        if other.grid != self.grid:
            raise ValueError("grid mismatch")
        return GridFunction(self.grid, self.values - other.values)

    def __add__(self, other: "GridFunction") -> "GridFunction":
        if other.grid != self.grid:
            raise ValueError("grid mismatch")
        return GridFunction(self.grid, self.values + other.values)


def grid_function_from_callable(grid: TorusGrid, fn) -> GridFunction:
    pts = grid.nodes()
    vals = np.asarray(fn(pts), dtype=float)
    return GridFunction(grid, vals.reshape(grid.shape + vals.shape[1:]))


def gradient(u: GridFunction) -> GridFunction:
    """Centered first differences per axis; vector-valued result."""
    if not u.is_scalar:
        raise ValueError("gradient expects a scalar grid function")
    g = u.grid
    out = np.empty(g.shape + (g.dim,))
    for ax in range(g.dim):
        up = np.roll(u.values, -1, axis=ax)
        dn = np.roll(u.values, 1, axis=ax)
        out[..., ax] = (up - dn) / (2.0 * g.h)
    return GridFunction(g, out)


def hessian(u: GridFunction) -> GridFunction:
    """Centered second differences; cross terms by the four-point stencil."""
    if not u.is_scalar:
        raise ValueError("hessian expects a scalar grid function")
    g = u.grid
    h2 = g.h * g.h
    out = np.empty(g.shape + (g.dim, g.dim))
    for ax in range(g.dim):
        up = np.roll(u.values, -1, axis=ax)
        dn = np.roll(u.values, 1, axis=ax)
        out[..., ax, ax] = (up - 2.0 * u.values + dn) / h2
    if g.dim == 2:
        pp = np.roll(np.roll(u.values, -1, axis=0), -1, axis=1)
        pm = np.roll(np.roll(u.values, -1, axis=0), 1, axis=1)
        mp = np.roll(np.roll(u.values, 1, axis=0), -1, axis=1)
        mm = np.roll(np.roll(u.values, 1, axis=0), 1, axis=1)
        cross = (pp - pm - mp + mm) / (4.0 * h2)
        out[..., 0, 1] = cross
        out[..., 1, 0] = cross
    return GridFunction(g, out)


def discrete_derivatives(u: GridFunction) -> tuple:
    return gradient(u), hessian(u)


@dataclass(frozen=True)
class NormReport:
    sup_norm: float
    grad_sup: float
    hess_sup: float

    @property
    def c2_norm(self) -> float:
        return self.sup_norm + self.grad_sup + self.hess_sup


def discrete_norms(u: GridFunction) -> NormReport:
    """Sup norms of u, of its discrete gradient, and of its discrete Hessian."""
    if not u.is_scalar:
        raise ValueError("discrete_norms expects a scalar grid function")
    sup = float(np.max(np.abs(u.values)))
    gv = gradient(u).values
    grad_sup = float(np.max(np.sqrt(np.sum(gv * gv, axis=-1))))
    hv = hessian(u).values
    hess_sup = float(np.max(np.sqrt(np.sum(hv * hv, axis=(-2, -1)))))
    return NormReport(sup, grad_sup, hess_sup)


def c2_distance(u: GridFunction, v: GridFunction) -> float:
    return discrete_norms(u - v).c2_norm


def holder_seminorm(u: GridFunction, theta: float) -> float:
    """Exhaustive node-pair Hoelder seminorm with torus distance.

    O(num_nodes^2) sweep; intended for desk-scale grids only, which is why it
    is a separate opt-in call rather than part of discrete_norms.
    """
    if not u.is_scalar:
        raise ValueError("holder_seminorm expects a scalar grid function")
    if not 0.0 < theta <= 1.0:
        raise ValueError("theta must lie in (0, 1]")
    pts = u.grid.nodes()
    vals = u.values.ravel()
    best = 0.0
    for i in range(len(vals) - 1):
        d = np.abs(pts[i + 1 :] - pts[i])
        d = np.minimum(d, 1.0 - d)
        dist = np.sqrt(np.sum(d * d, axis=-1))
        ratio = np.abs(vals[i + 1 :] - vals[i]) / dist**theta
        best = max(best, float(np.max(ratio)))
    return best


def restrict(u: GridFunction, coarse: TorusGrid) -> GridFunction:
    """Exact subsampling of a fine-grid function onto a coarser grid.

    Requires the fine node count to be a multiple of the coarse one so that
    every coarse node is a fine node (no interpolation).
    """
    fine = u.grid
    if fine.dim != coarse.dim:
        raise ValueError("dimension mismatch")
    if fine.n % coarse.n != 0:
        raise ValueError(
            f"fine grid N={fine.n} is not a multiple of coarse N={coarse.n}"
        )
    s = fine.n // coarse.n
    sl = (slice(None, None, s),) * fine.dim
    return GridFunction(coarse, u.values[sl])


def format_float(x: float) -> str:
    """Canonical 12-significant-digit rendering used in all text artifacts."""
    return f"{float(x):.12g}"


def write_csv(u: GridFunction, path) -> None:
    """One row per node in lexicographic index order: indices, coords, values."""
    g = u.grid
    idx_cols = ["i"] if g.dim == 1 else ["i", "j"]
    coord_cols = ["x"] if g.dim == 1 else ["x", "y"]
    comp = u.component_shape
    if comp == ():
        val_cols = ["value"]
    elif len(comp) == 1:
        val_cols = [f"v{k}" for k in range(comp[0])]
    else:
        val_cols = [f"m{r}{c}" for r in range(comp[0]) for c in range(comp[1])]
    flat_vals = u.values.reshape(g.num_nodes, -1)
    pts = g.nodes()
    with open(path, "w") as fh:
        fh.write(",".join(idx_cols + coord_cols + val_cols) + "\n")
        for flat in range(g.num_nodes):
            idx = np.unravel_index(flat, g.shape)
            row = [str(int(k)) for k in idx]
            row += [format_float(c) for c in pts[flat]]
            row += [format_float(v) for v in flat_vals[flat]]
            fh.write(",".join(row) + "\n")
