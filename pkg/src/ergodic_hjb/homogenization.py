"""Two-scale pipeline: cell problems, effective equation, oscillatory solves.

The effective Hamiltonian at frozen slow data (x, p, X) is the ergodic
constant of the fast-variable problem obtained by freezing the slow variable;
the effective equation u + Heff(x, Du, D^2u) = 0 is solved either directly
through the one-scale machinery (semilinear single-control case, where the
fast variable averages out exactly) or by a damped fixed point driven by
cached cell solves.  Oscillatory problems use eps = 1/integer so the
composed coefficient x -> (a, f, l)(x, x/eps) is exactly 1-periodic and the
torus solver applies without boundary layers.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import expressions as ex
from .ergodic import solve_ergodic
from .grids import GridFunction, TorusGrid, build_grid, format_float, restrict
from .problems import (
    CellProblemSpec,
    CoefficientField,
    ConfigError,
    TwoScaleCoefficientField,
    freeze_cell_problem,
)
from .solver import SolverError, discretize, operator_from_samples, solve_discounted


@dataclass
class EffectiveHamiltonianSample:
    x_bar: np.ndarray
    p_bar: np.ndarray
    X_bar: np.ndarray
    value: float
    cell_grid_n: int
    corrector: GridFunction  # cell solution, 0 at the origin node


def effective_hamiltonian(source: TwoScaleCoefficientField, x_bar, p_bar, X_bar,
                          cell_n: int, tol: float = 1e-6,
                          initial_policy=None) -> EffectiveHamiltonianSample:
    """Ergodic constant of the frozen cell problem at (x_bar, p_bar, X_bar)."""
    spec = CellProblemSpec(source, x_bar, p_bar, X_bar)
    frozen = freeze_cell_problem(spec)
    grid = build_grid(source.dim, cell_n)
    sol = solve_ergodic(frozen, grid, tol=tol, initial_policy=initial_policy)
    return EffectiveHamiltonianSample(
        spec.x_bar, spec.p_bar, spec.X_bar, sol.U, cell_n, sol.v
    )


def _midpoints(n: int, dim: int) -> np.ndarray:
    c = (np.arange(n) + 0.5) / n
    if dim == 1:
        return c[:, None]
    gx, gy = np.meshgrid(c, c, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel()], axis=-1)


def semilinear_oracle(source: TwoScaleCoefficientField, x, p,
                      cell_n: int = 256) -> float:
    """Midpoint-rule average over the fast cell of max_a(-f.p - l).

    Valid only when the diffusion depends on the slow variable alone, so the
    second-order part decouples from the fast average.
    """
    if not source.is_semilinear():
        raise ConfigError(
            "fast-average oracle requires diffusion independent of the fast "
            "variable and of the control"
        )
    d = source.dim
    x = np.asarray(x, dtype=float).reshape(1, d)
    p = np.asarray(p, dtype=float).reshape(d)
    y = _midpoints(cell_n, d)
    fv = source.f_values(np.broadcast_to(x, y.shape), y)   # (M, npts, d)
    lv = source.ell_values(np.broadcast_to(x, y.shape), y)  # (M, npts)
    integrand = np.max(-fv @ p - lv, axis=0)
    return float(np.mean(integrand))


def _averaged_operator(source: TwoScaleCoefficientField, grid: TorusGrid,
                       cell_n: int):
    """One-scale operator with f and l replaced by their fast averages.

    Exact realization of the effective equation for semilinear single-control
    instances (average of a max over one control is the max of averages).
    """
    x = grid.nodes()
    y = _midpoints(cell_n, source.dim)
    xb = x[:, None, :]
    yb = y[None, :, :]
    a_nodes = source.a_values(x)  # diffusion is y-independent here
    f_nodes = source.f_values(xb, yb).mean(axis=2)  # (M, nodes, ncell, d) -> avg
    ell_nodes = source.ell_values(xb, yb).mean(axis=2)
    return operator_from_samples(grid, a_nodes, f_nodes, ell_nodes)


class CorrectorCache:
    """Concurrent map from quantized (node, p, X) keys to cell solves.

    Keys are quantized so nearby queries reuse one solve; values at identical
    keys agree to solver tolerance, so last-write-wins races are benign.
    """

    def __init__(self, quantum: float = 1e-3):
        self.quantum = quantum
        self._data = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def key(self, node: int, p: np.ndarray, X: np.ndarray):
        q = self.quantum
        if q <= 0:
            return (node, tuple(p.tolist()), tuple(X.ravel().tolist()))
        pq = tuple(int(round(v / q)) for v in p)
        xq = tuple(int(round(v / q)) for v in X.ravel())
        return (node, pq, xq)

    def get(self, key):
        with self._lock:
            val = self._data.get(key)
        if val is not None:
            self.hits += 1
        return val

    def put(self, key, value):
        self.misses += 1
        with self._lock:
            self._data[key] = value


def solve_effective(source: TwoScaleCoefficientField, outer_n: int, cell_n: int,
                    tol: float = 1e-8, max_iter: int = 400, damping: float = 1.0,
                    quantum: float = 1e-3) -> GridFunction:
    """Solve u + Heff(x, Du, D^2u) = 0 on the outer torus grid.

    Semilinear single-control instances reduce exactly to a one-scale solve
    with fast-averaged drift and running cost.  Otherwise a damped fixed
    point evaluates Heff nodewise through cached cell solves, preconditioned
    by a frozen constant-coefficient diffusion so the update is well scaled.
    """
    grid = build_grid(source.dim, outer_n)
    if source.is_semilinear() and len(source.controls) == 1:
        op = _averaged_operator(source, grid, cell_n)
        return solve_discounted(op, 1.0, tol=min(tol, 1e-10)).v

    return _solve_effective_fixed_point(
        source, grid, cell_n, tol, max_iter, damping, quantum
    )


def _laplacian_matrix(grid: TorusGrid) -> sp.csc_matrix:
    n_nodes = grid.num_nodes
    flat = np.arange(n_nodes).reshape(grid.shape)
    h2 = grid.h * grid.h
    rows, cols, vals = [], [], []
    node = np.arange(n_nodes)
    rows.append(node)
    cols.append(node)
    vals.append(np.full(n_nodes, -2.0 * grid.dim / h2))
    for ax in range(grid.dim):
        for step in (+1, -1):
            rows.append(node)
            cols.append(np.roll(flat, -step, axis=ax).ravel())
            vals.append(np.full(n_nodes, 1.0 / h2))
    return sp.csc_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_nodes, n_nodes),
    )


def _solve_effective_fixed_point(source, grid, cell_n, tol, max_iter, damping,
                                 quantum):
    from .grids import gradient, hessian

    cache = CorrectorCache(quantum)
    mu = 0.5 * (source.nu + source.bounds.K_a)
    precond = spla.splu(
        sp.identity(grid.num_nodes, format="csc") - mu * _laplacian_matrix(grid)
    )
    nodes = grid.nodes()
    u = np.zeros(grid.num_nodes)
    warm = {}
    history = []
    best = math.inf
    for it in range(max_iter):
        gf = GridFunction(grid, u.reshape(grid.shape))
        grad = gradient(gf).values.reshape(grid.num_nodes, source.dim)
        hess = hessian(gf).values.reshape(grid.num_nodes, source.dim, source.dim)
        h_eff = np.empty(grid.num_nodes)
        for j in range(grid.num_nodes):
            key = cache.key(j, grad[j], hess[j])
            hit = cache.get(key)
            if hit is None:
                sample = effective_hamiltonian(
                    source, nodes[j], grad[j], 0.5 * (hess[j] + hess[j].T),
                    cell_n, tol=max(tol, 1e-8), initial_policy=warm.get(j),
                )
                hit = sample.value
                cache.put(key, hit)
            h_eff[j] = hit
        residual_vec = u + h_eff
        residual = float(np.max(np.abs(residual_vec)))
        history.append(residual)
        if residual <= tol:
            return GridFunction(grid, u.reshape(grid.shape))
        if residual < best:
            best = residual
        elif len(history) > 30 and residual > 0.999 * min(history[-30:-1]):
            err = SolverError(
                f"effective fixed point stagnated at residual {residual:.3e} "
                f"after {it + 1} iterations (tol {tol:g})"
            )
            err.residual_history = history
            raise err
        u = u - damping * precond.solve(residual_vec)
    err = SolverError(
        f"effective fixed point did not reach tol {tol:g} in {max_iter} "
        f"iterations (last residual {history[-1]:.3e})"
    )
    err.residual_history = history
    raise err


def oscillatory_field(source: TwoScaleCoefficientField, epsilon: float) -> CoefficientField:
    """One-scale field x -> (a, f, l)(x, x/eps); requires 1/eps integer."""
    inv = 1.0 / epsilon
    if abs(inv - round(inv)) > 1e-9:
        raise ConfigError(f"1/epsilon must be an integer, got eps = {epsilon}")
    inv = int(round(inv))
    a = tuple(
        tuple(tuple(ex.oscillate(e, inv) for e in row) for row in am)
        for am in source.a
    )
    f = tuple(tuple(ex.oscillate(e, inv) for e in fv) for fv in source.f)
    ell = tuple(ex.oscillate(e, inv) for e in source.ell)
    return CoefficientField(source.dim, source.controls, a, f, ell, source.nu)


def solve_oscillatory(source: TwoScaleCoefficientField, epsilon: float,
                      fine_n: int) -> GridFunction:
    """Direct solve of u + H(x, x/eps, Du, D^2u) = 0 on a fine torus grid."""
    field = oscillatory_field(source, epsilon)
    inv = int(round(1.0 / epsilon))
    if fine_n % inv != 0:
        raise ConfigError(
            f"fine grid N={fine_n} must be a multiple of 1/eps = {inv}"
        )
    if fine_n * epsilon < 32 - 1e-9:
        raise ConfigError(
            f"need fine_n * eps >= 32 (h <= eps/32); got {fine_n * epsilon:g}"
        )
    grid = build_grid(source.dim, fine_n)
    op = discretize(field, grid)
    return solve_discounted(op, 1.0, tol=1e-10).v


def default_fine_rule(outer_n: int, cells_per_period: int = 32):
    """Smallest fine N that is a multiple of both outer_n and 1/eps with
    at least cells_per_period nodes per oscillation."""

    def rule(epsilon: float) -> int:
        inv = int(round(1.0 / epsilon))
        base = math.lcm(outer_n, inv)
        k = math.ceil(cells_per_period * inv / base)
        return base * k

    return rule


@dataclass
class RateReport:
    epsilons: list
    errors: list
    fine_grid_n: list
    fitted_theta: float
    fitted_M: float


def measure_rate(source: TwoScaleCoefficientField, epsilons, outer_n: int,
                 cell_n: int, fine_rule=None, tol: float = 1e-8,
                 workers: int = 1) -> RateReport:
    """Sup-norm distance of oscillatory solves to the effective one per eps.

    The fine solution is restricted to the outer grid nodes by exact
    subsampling, so the comparison carries no interpolation error; the rate
    and its constant come from a least-squares fit of log(error) vs log(eps).
    """
    epsilons = sorted((float(e) for e in epsilons), reverse=True)
    if len(epsilons) < 3:
        raise ConfigError("rate measurement needs at least 3 epsilons")
    if fine_rule is None:
        fine_rule = default_fine_rule(outer_n)
    grid = build_grid(source.dim, outer_n)
    u = solve_effective(source, outer_n, cell_n, tol=tol)

    fine_ns = [int(fine_rule(eps)) for eps in epsilons]

    def run(pair):
        eps, fine_n = pair
        u_eps = solve_oscillatory(source, eps, fine_n)
        return float(np.max(np.abs(restrict(u_eps, grid).values - u.values)))

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            errors = list(pool.map(run, zip(epsilons, fine_ns)))
    else:
        errors = [run(pair) for pair in zip(epsilons, fine_ns)]

    if min(errors) <= 0.0:
        raise SolverError(
            "zero oscillatory-vs-effective error measured; the comparison "
            "grid is sampling the oscillation at degenerate phases "
            f"(outer_n={outer_n}); use outer_n >= 4/min(eps)"
        )
    slope, intercept = np.polyfit(np.log(epsilons), np.log(errors), 1)
    return RateReport(
        epsilons=epsilons,
        errors=errors,
        fine_grid_n=fine_ns,
        fitted_theta=float(slope),
        fitted_M=float(np.exp(intercept)),
    )


def write_rate_csv(report: RateReport, path) -> None:
    with open(path, "w") as fh:
        fh.write("epsilon,fine_n,error\n")
        for eps, fn, err in zip(report.epsilons, report.fine_grid_n, report.errors):
            fh.write(f"{format_float(eps)},{fn},{format_float(err)}\n")


def write_samples_csv(samples, path) -> None:
    """Effective-Hamiltonian samples, one row per (x, p, X) query."""
    if not samples:
        with open(path, "w") as fh:
            fh.write("value\n")
        return
    d = len(samples[0].x_bar)
    cols = [f"x{i}" for i in range(d)] + [f"p{i}" for i in range(d)]
    cols += [f"X{i}{j}" for i in range(d) for j in range(d)]
    cols += ["cell_n", "value"]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for s in samples:
            row = [format_float(v) for v in s.x_bar]
            row += [format_float(v) for v in s.p_bar]
            row += [format_float(v) for v in s.X_bar.ravel()]
            row += [str(s.cell_grid_n), format_float(s.value)]
            fh.write(",".join(row) + "\n")
