import numpy as np
import pytest

from ergodic_hjb import expressions as ex
from ergodic_hjb import instances
from ergodic_hjb.grids import build_grid, grid_function_from_callable
from ergodic_hjb.problems import CoefficientField, ControlSet
from ergodic_hjb.solver import (
    SolverError,
    discretize,
    march_evolutive,
    solve_discounted,
    write_iteration_log,
)

TWO_PI = 2.0 * np.pi


def make_1d(a, f, ell, labels=("only",), nu=1.0):
    return CoefficientField(
        1, ControlSet(labels),
        tuple(((e,),) for e in a), tuple((e,) for e in f), tuple(ell), nu,
    )


def dense_policy_matrix(op, control=0):
    policy = np.full(op.grid.num_nodes, control, dtype=int)
    mat, _ = op.policy_system(policy)
    return mat.toarray()


def test_pure_diffusion_stencil_is_classical():
    g = build_grid(1, 8)
    op = discretize(make_1d([ex.const(1.0)], [ex.const(0.0)], [ex.const(0.0)]), g)
    mat = dense_policy_matrix(op)
    h2 = g.h * g.h
    for j in range(8):
        assert mat[j, j] == pytest.approx(2.0 / h2)
        assert mat[j, (j + 1) % 8] == pytest.approx(-1.0 / h2)
        assert mat[j, (j - 1) % 8] == pytest.approx(-1.0 / h2)


def test_positive_drift_uses_forward_difference():
    # f = 3 > 0: the drift row is -3 (v_{j+1} - v_j)/h on top of the diffusion
    g = build_grid(1, 8)
    op = discretize(make_1d([ex.const(1.0)], [ex.const(3.0)], [ex.const(0.0)]), g)
    mat = dense_policy_matrix(op)
    h, h2 = g.h, g.h * g.h
    for j in range(8):
        assert mat[j, (j + 1) % 8] == pytest.approx(-1.0 / h2 - 3.0 / h)
        assert mat[j, (j - 1) % 8] == pytest.approx(-1.0 / h2)
        assert mat[j, j] == pytest.approx(2.0 / h2 + 3.0 / h)


@pytest.mark.parametrize(
    "builder", list(instances.ONE_SCALE.values()), ids=list(instances.ONE_SCALE)
)
def test_monotonicity_invariants(builder):
    field = builder()
    g = build_grid(field.dim, 16)
    op = discretize(field, g)
    assert np.all(op.offdiag <= 1e-14)        # -L off-diagonals nonnegative
    assert np.all(op.diag >= -1e-14)
    row_sums = op.diag + np.sum(op.offdiag, axis=1)
    assert np.max(np.abs(row_sums)) <= 1e-9   # constants annihilated


def test_operator_truncation_error_first_order():
    # upwind drift makes the scheme O(h): the dominant term is (h/2) |u''| |f|,
    # about 4 pi^2 h for u = sin(2 pi x), f = 1 (0.077 at N = 256)
    def worst(n):
        g = build_grid(1, n)
        op = discretize(make_1d([ex.const(1.0)], [ex.const(1.0)], [ex.const(0.0)]), g)
        u = grid_function_from_callable(g, lambda p: np.sin(TWO_PI * p[:, 0]))
        x = g.axis_coordinates()
        exact = TWO_PI**2 * np.sin(TWO_PI * x) - TWO_PI * np.cos(TWO_PI * x)
        return np.max(np.abs(op.apply(u.values) - exact))

    assert worst(256) <= 0.08
    assert worst(512) <= 0.04
    assert 1.8 <= worst(256) / worst(512) <= 2.2  # first-order decay


def test_discounted_constant_fixed_point():
    # two constant costs {2, 3}, lam = 0.5: 0.5 v + max(-l) = 0 -> v = 4
    field = make_1d(
        [ex.const(1.0), ex.const(1.0)], [ex.const(0.0), ex.const(0.0)],
        [ex.const(2.0), ex.const(3.0)], labels=("lo", "hi"),
    )
    op = discretize(field, build_grid(1, 16))
    sol = solve_discounted(op, 0.5)
    assert np.allclose(sol.v.values, 4.0, atol=1e-10)


def test_discounted_fourier_oracle():
    # lam v - v'' = sin(2 pi x) -> v = sin(2 pi x)/(lam + 4 pi^2)
    g = build_grid(1, 256)
    op = discretize(instances.ergodic_sine(), g)
    sol = solve_discounted(op, 0.1)
    x = g.axis_coordinates()
    oracle = np.sin(TWO_PI * x) / (0.1 + 4 * np.pi**2)
    assert np.max(np.abs(sol.v.values - oracle)) <= 1e-3
    assert sol.residual <= 1e-10


@pytest.mark.parametrize(
    "builder", list(instances.ONE_SCALE.values()), ids=list(instances.ONE_SCALE)
)
def test_discounted_maximum_principle_bound(builder):
    field = builder()
    g = build_grid(field.dim, 32 if field.dim == 2 else 64)
    op = discretize(field, g)
    for lam in (0.5, 0.1, 0.01):
        sol = solve_discounted(op, lam)
        assert lam * np.max(np.abs(sol.v.values)) <= field.bounds.K_ell + 1e-10


def test_explicit_update_preserves_order():
    # the discrete comparison principle: under the CFL bound the explicit
    # monotone update keeps nodewise ordering of arbitrary pairs
    field = instances.drift_two_controls()
    g = build_grid(1, 64)
    op = discretize(field, g)
    lam = 0.3
    dt = 1.0 / (lam + op.max_diagonal())
    rng = np.random.default_rng(0)
    for _ in range(50):
        v = rng.normal(size=g.num_nodes)
        w = v + np.abs(rng.normal(size=g.num_nodes))
        tv = v - dt * (lam * v + op.apply(v))
        tw = w - dt * (lam * w + op.apply(w))
        assert np.all(tv <= tw + 1e-12)


def test_discounted_unique_from_any_initial_policy():
    field = instances.diffusion_two_controls()
    g = build_grid(1, 128)
    op = discretize(field, g)
    tol = 1e-10
    a = solve_discounted(op, 0.05, tol=tol, initial_policy=np.zeros(g.num_nodes, int))
    b = solve_discounted(op, 0.05, tol=tol, initial_policy=np.ones(g.num_nodes, int))
    assert np.max(np.abs(a.v.values - b.v.values)) <= 10 * tol / 0.05


@pytest.mark.parametrize(
    "builder", list(instances.ONE_SCALE.values()), ids=list(instances.ONE_SCALE)
)
def test_howard_terminates_quickly(builder):
    field = builder()
    g = build_grid(field.dim, 32)
    op = discretize(field, g)
    sol = solve_discounted(op, 0.1)
    assert sol.iterations <= len(field.controls) * g.num_nodes  # finite policy space
    assert sol.iterations <= 20  # observed practical bound on shipped instances


def test_solver_input_validation():
    op = discretize(instances.ergodic_sine(), build_grid(1, 16))
    with pytest.raises(ValueError, match="discount"):
        solve_discounted(op, 1.5)
    with pytest.raises(ValueError, match="tolerance"):
        solve_discounted(op, 0.5, tol=0.0)
    with pytest.raises(ValueError, match="positive"):
        march_evolutive(op, -1.0, 0.5)


def test_solver_reports_nonconvergence():
    op = discretize(instances.drift_two_controls(), build_grid(1, 64))
    with pytest.raises(SolverError, match="did not converge"):
        solve_discounted(op, 0.5, tol=1e-18)


def test_2d_rejects_cross_diffusion():
    zero, one = ex.const(0.0), ex.const(1.0)
    field = CoefficientField(
        2, ControlSet(("only",)),
        (((one, ex.const(0.2)), (ex.const(0.2), one)),),
        ((zero, zero),), (zero,), 0.5,
    )
    with pytest.raises(ValueError, match="diagonal"):
        discretize(field, build_grid(2, 8))


def test_march_constant_dynamics_exact():
    # costs {2, 3}: V(t) = 2t exactly and V - 2t is the zero corrector
    field = make_1d(
        [ex.const(1.0), ex.const(1.0)], [ex.const(0.0), ex.const(0.0)],
        [ex.const(2.0), ex.const(3.0)], labels=("lo", "hi"),
    )
    op = discretize(field, build_grid(1, 16))
    trace = march_evolutive(op, 4.0, 1.0)
    assert trace.times == [0.0, 1.0, 2.0, 3.0, 4.0]
    assert np.all(trace.snapshots[0].values == 0.0)
    for t, snap in zip(trace.times, trace.snapshots):
        assert np.allclose(snap.values, 2.0 * t, atol=1e-12)
    assert trace.dt * op.max_diagonal() <= 1.0 + 1e-12


def test_march_long_time_slope_matches_mean_cost():
    # V(T)/T tends to minus the ergodic constant (= 1 for cost 1 + sin)
    g = build_grid(1, 128)
    op = discretize(instances.ergodic_sine_forced(), g)
    trace = march_evolutive(op, 20.0, 10.0)
    assert np.max(np.abs(trace.snapshots[-1].values / 20.0 - 1.0)) <= 5e-2


def test_iteration_log_artifact(tmp_path):
    op = discretize(instances.drift_two_controls(), build_grid(1, 64))
    sol = solve_discounted(op, 0.1)
    path = tmp_path / "log.csv"
    write_iteration_log(sol.iteration_log, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "iteration,residual,policy_changes"
    assert len(lines) == sol.iterations + 1
    assert lines[-1].split(",")[2] == "0"  # stationary policy at convergence
