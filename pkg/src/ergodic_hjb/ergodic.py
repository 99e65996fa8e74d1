"""Ergodic pair (corrector v, constant U) by vanishing-discount continuation.

The discounted problems are solved along the geometric schedule
lam_k = 2^-k with warm-started policies; U is estimated as minus the nodal
average of lam*v^lam (averaging damps the O(lam) spatial modulation) and the
corrector as v^lam normalized to vanish at the origin node.  The long-time
limit of the time-dependent problem provides an independent second route to
the same constant.

Sign convention: U = -lim lam*v^lam, so that v solves H(x, Dv, D^2v) = U.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import GridFunction, TorusGrid, format_float
from .problems import CoefficientField
from .solver import (
    DiscreteBellmanOperator,
    SolverError,
    discretize,
    march_evolutive,
    solve_discounted,
)

K_START_DEFAULT = 3
K_MAX_DEFAULT = 30


@dataclass
class LambdaTraceRow:
    lam: float
    U_estimate: float
    spread: float
    howard_iterations: int


@dataclass
class ErgodicSolution:
    v: GridFunction          # corrector, exactly 0 at the origin node
    U: float                 # ergodic constant
    lambda_trace: list       # LambdaTraceRow per continuation step
    converged: bool
    policy: np.ndarray


def _normalize(v: GridFunction) -> GridFunction:
    origin = v.values[v.grid.origin_index]
    return GridFunction(v.grid, v.values - origin)


def solve_ergodic(problem: CoefficientField, grid: TorusGrid, tol: float = 1e-6,
                  k_start: int = K_START_DEFAULT, k_max: int = K_MAX_DEFAULT,
                  k_min: int | None = None, richardson: bool = False,
                  initial_policy: np.ndarray | None = None,
                  op: DiscreteBellmanOperator | None = None) -> ErgodicSolution:
    """Continuation along lam_k = 2^-k until the constant settles.

    Stops once |U_k - U_{k-1}| <= tol and the nodal spread of -lam*v^lam is
    <= 10*tol (both, and not before k_min when given).  ``richardson``
    replaces the returned U by the one-step extrapolation 2*U_k - U_{k-1}.
    """
    if tol <= 0.0:
        raise ValueError("tolerance must be positive")
    if op is None:
        op = discretize(problem, grid)
    trace = []
    policy = initial_policy
    prev_u = None
    sol = None
    # keep the stationary solves well below the continuation tolerance but
    # above Howard's float64 residual floor
    inner_tol = min(max(tol * 1e-3, 1e-11), 1e-10)
    for k in range(k_start, k_max + 1):
        lam = 2.0 ** (-k)
        sol = solve_discounted(op, lam, tol=inner_tol, initial_policy=policy)
        policy = sol.policy
        neg_lam_v = -lam * sol.v.values
        u_k = float(np.mean(neg_lam_v))
        spread = float(np.max(neg_lam_v) - np.min(neg_lam_v))
        trace.append(LambdaTraceRow(lam, u_k, spread, sol.iterations))
        settled = prev_u is not None and abs(u_k - prev_u) <= tol and spread <= 10 * tol
        deep_enough = k_min is None or k >= k_min
        if settled and deep_enough:
            u_final = 2.0 * u_k - prev_u if richardson else u_k
            return ErgodicSolution(_normalize(sol.v), u_final, trace, True, policy)
        prev_u = u_k
    err = SolverError(
        f"vanishing-discount continuation did not settle by lam = 2^-{k_max} "
        f"(tol {tol:g}); last U estimate {trace[-1].U_estimate:.6g}, "
        f"spread {trace[-1].spread:.3e}"
    )
    err.lambda_trace = trace
    raise err


def ergodic_from_evolutive(problem: CoefficientField, grid: TorusGrid, T: float,
                           op: DiscreteBellmanOperator | None = None):
    """Long-time route: slope of V over [T/2, T] and the drift-free remainder.

    Returns (U_evolutive, corrector_estimate) with the same sign convention
    as solve_ergodic: U = -(V(T) - V(T/2)) * 2/T averaged over nodes, and the
    corrector V(T) + U*T normalized to vanish at the origin node.
    """
    if T <= 0.0:
        raise ValueError("final time T must be positive")
    if T < 10.0:
        raise ValueError("need T >= 10 so two averaging windows exist")
    if op is None:
        op = discretize(problem, grid)
    trace = march_evolutive(op, T, record_every=T / 2.0)
    v_half = trace.snapshots[1].values
    v_end = trace.snapshots[2].values
    u_ev = float(np.mean(-(v_end - v_half) * 2.0 / T))
    corrector = GridFunction(grid, v_end + u_ev * T)
    return u_ev, _normalize(corrector)


def write_lambda_trace(trace, path) -> None:
    with open(path, "w") as fh:
        fh.write("lambda,U_estimate,spread,howard_iterations\n")
        for row in trace:
            fh.write(
                f"{format_float(row.lam)},{format_float(row.U_estimate)},"
                f"{format_float(row.spread)},{row.howard_iterations}\n"
            )
