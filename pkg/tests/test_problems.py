import numpy as np
import pytest

from ergodic_hjb import expressions as ex
from ergodic_hjb import instances
from ergodic_hjb.grids import build_grid
from ergodic_hjb.problems import (
    Bounds,
    CellProblemSpec,
    CoefficientField,
    ConfigError,
    ControlSet,
    TwoScaleCoefficientField,
    coefficient_distance,
    evaluate_hamiltonian,
    field_from_json,
    field_to_json,
    freeze_cell_problem,
)


def make_1d(a, f, ell, labels=("only",), nu=1.0):
    a = tuple(((e,),) for e in a)
    f = tuple((e,) for e in f)
    return CoefficientField(1, ControlSet(labels), a, f, tuple(ell), nu)


def test_hamiltonian_trivial_examples():
    p0 = make_1d([ex.const(1.0)], [ex.const(0.0)], [ex.const(0.0)])
    assert evaluate_hamiltonian(p0, [0.0], [3.0], [[0.0]]) == 0.0

    p1 = make_1d([ex.const(2.0)], [ex.const(3.0)], [ex.const(1.0)], nu=2.0)
    assert evaluate_hamiltonian(p1, [0.0], [1.0], [[1.0]]) == -6.0

    p2 = make_1d(
        [ex.const(1.0), ex.const(1.0)],
        [ex.const(0.0), ex.const(0.0)],
        [ex.const(1.0), ex.const(-1.0)],
        labels=("one", "two"),
    )
    assert evaluate_hamiltonian(p2, [0.0], [0.0], [[0.0]]) == 1.0


def test_argmax_tie_breaks_to_first_control():
    p = make_1d(
        [ex.const(1.0), ex.const(1.0)],
        [ex.const(0.0), ex.const(0.0)],
        [ex.const(2.0), ex.const(2.0)],
        labels=("first", "second"),
    )
    assert p.argmax_control([0.0], [1.0], [[1.0]]) == 0


def test_hamiltonian_monotone_in_hessian_argument():
    field = instances.diffusion_two_controls()
    rng = np.random.default_rng(1)
    for _ in range(30):
        x = rng.uniform(0, 1, 1)
        p = rng.uniform(-2, 2, 1)
        Y = rng.uniform(-2, 2, (1, 1))
        X = Y + np.abs(rng.uniform(0, 2)) * np.eye(1)  # X >= Y
        assert evaluate_hamiltonian(field, x, p, X) <= evaluate_hamiltonian(
            field, x, p, Y
        ) + 1e-12


def test_hamiltonian_uniform_ellipticity():
    field = instances.diffusion_two_controls()
    rng = np.random.default_rng(2)
    for _ in range(20):
        x = rng.uniform(0, 1, 1)
        p = rng.uniform(-2, 2, 1)
        X = rng.uniform(-2, 2, (1, 1))
        for t in (0.1, 0.5, 1.0):
            assert (
                evaluate_hamiltonian(field, x, p, X + t * np.eye(1))
                <= evaluate_hamiltonian(field, x, p, X) - field.nu * 1 * t + 1e-12
            )


def test_hamiltonian_convex_in_p_X():
    field = instances.drift_two_controls()
    rng = np.random.default_rng(3)
    for _ in range(30):
        x = rng.uniform(0, 1, 1)
        p1, p2 = rng.uniform(-2, 2, (2, 1))
        X1, X2 = rng.uniform(-2, 2, (2, 1, 1))
        mid = evaluate_hamiltonian(field, x, 0.5 * (p1 + p2), 0.5 * (X1 + X2))
        avg = 0.5 * (
            evaluate_hamiltonian(field, x, p1, X1)
            + evaluate_hamiltonian(field, x, p2, X2)
        )
        assert mid <= avg + 1e-12


def two_scale_sine():
    return TwoScaleCoefficientField(
        1,
        ControlSet(("only",)),
        (((ex.const(1.0),),),),
        ((ex.const(0.0),),),
        (ex.sin_y(),),
        1.0,
    )


def test_freeze_zero_augmentation_keeps_cost():
    src = instances.semilinear_x_coupled()
    spec = CellProblemSpec(src, [0.25], [0.0], [[0.0]])
    frozen = freeze_cell_problem(spec)
    y = np.linspace(0, 1, 17)[:, None]
    expected = src.ell_values(np.full_like(y, 0.25), y)
    assert np.allclose(frozen.ell_values(y), expected, atol=1e-14)


def test_freeze_absorbs_hessian_and_gradient_data():
    # l(x, y) = sin(2 pi y), p = 2, X = 3, a = 1, f = 0:
    # frozen cost = sin(2 pi y) + tr(1*3) + 0*2 = sin(2 pi y) + 3
    frozen = freeze_cell_problem(CellProblemSpec(two_scale_sine(), [0.0], [2.0], [[3.0]]))
    y = np.linspace(0, 1, 33)[:, None]
    assert np.allclose(
        frozen.ell_values(y)[0], np.sin(2 * np.pi * y[:, 0]) + 3.0, atol=1e-14
    )

    # a = 2, X = -1: frozen cost = l - 2
    src2 = TwoScaleCoefficientField(
        1, ControlSet(("only",)), (((ex.const(2.0),),),),
        ((ex.const(0.0),),), (ex.sin_y(),), 1.0,
    )
    frozen2 = freeze_cell_problem(CellProblemSpec(src2, [0.0], [0.0], [[-1.0]]))
    assert np.allclose(
        frozen2.ell_values(y)[0], np.sin(2 * np.pi * y[:, 0]) - 2.0, atol=1e-14
    )


def test_frozen_running_cost_bound_formula():
    src = instances.twoscale_two_controls()
    p_bar, X_bar = np.array([2.0]), np.array([[3.0]])
    frozen = freeze_cell_problem(CellProblemSpec(src, [0.5], p_bar, X_bar))
    K = max(src.bounds.K_a, src.bounds.K_f, src.bounds.K_ell)
    size = 1.0 + np.linalg.norm(p_bar) + np.linalg.norm(X_bar)
    assert frozen.bounds.K_ell == pytest.approx(K * size)
    assert frozen.nu == src.nu


def test_frozen_hamiltonian_composition_identity():
    # frozen-H(y, 0, Y) equals source-H(x_bar, y, p_bar, X_bar + Y)
    src = instances.twoscale_two_controls()
    rng = np.random.default_rng(4)
    x_bar, p_bar = rng.uniform(0, 1, 1), rng.uniform(-1, 1, 1)
    X_bar = rng.uniform(-1, 1, (1, 1))
    frozen = freeze_cell_problem(CellProblemSpec(src, x_bar, p_bar, X_bar))
    for _ in range(10):
        y = rng.uniform(0, 1, 1)
        Y = rng.uniform(-1, 1, (1, 1))
        lhs = evaluate_hamiltonian(frozen, y, np.zeros(1), Y)
        rhs = evaluate_hamiltonian(src, x_bar, p_bar, X_bar + Y, y=y)
        assert lhs == pytest.approx(rhs, abs=1e-12)


def test_coefficient_distance_examples():
    g = build_grid(1, 256)
    p1 = instances.ergodic_sine()
    assert coefficient_distance(p1, instances.ergodic_sine(), g) == (0.0, 0.0, 0.0)

    shifted = p1.shift_running_cost(0.25)
    da, df, dl = coefficient_distance(p1, shifted, g)
    assert (da, df) == (0.0, 0.0) and dl == pytest.approx(0.25, abs=1e-14)

    # (1 + delta) sin vs sin: exhaustive grid max as the oracle
    delta = 0.1
    p2 = make_1d([ex.const(1.0)], [ex.const(0.0)], [ex.sin_x(amp=1.0 + delta)])
    da, df, dl = coefficient_distance(p1, p2, g)
    x = g.axis_coordinates()
    brute = np.max(np.abs(delta * np.sin(2 * np.pi * x)))
    assert dl == pytest.approx(brute, abs=1e-14)
    assert dl == pytest.approx(delta, abs=1e-12)  # |sin| = 1 on the grid (4 | N)


def test_coefficient_distance_rejects_control_mismatch():
    g = build_grid(1, 16)
    with pytest.raises(ConfigError, match="control"):
        coefficient_distance(
            instances.ergodic_sine(), instances.const_two_controls(), g
        )


def test_validation_rejects_bad_fields():
    with pytest.raises(ConfigError, match="ellipticity"):
        make_1d([ex.const(0.5)], [ex.const(0.0)], [ex.const(0.0)], nu=1.0)
    with pytest.raises(ConfigError, match="nu"):
        make_1d([ex.const(1.0)], [ex.const(0.0)], [ex.const(0.0)], nu=-1.0)
    with pytest.raises(ConfigError, match="K_ell"):
        CoefficientField(
            1, ControlSet(("only",)), (((ex.const(1.0),),),), ((ex.const(0.0),),),
            (ex.const(5.0),), 1.0,
            bounds=Bounds(K_a=1, K_f=0, K_ell=1.0, L_a=0, L_f=0, L_ell=0),
        )
    with pytest.raises(ValueError, match="freq"):
        ex.Trig("sin", "x", 0, 0)  # non-integer / zero wave numbers break periodicity
    with pytest.raises(ConfigError, match="one-scale"):
        make_1d([ex.const(1.0)], [ex.const(0.0)], [ex.sin_y()])
    with pytest.raises(ConfigError, match="distinct"):
        ControlSet(("a", "a"))


def test_full_matrix_allowed_pointwise_in_2d():
    # off-diagonal diffusion is fine for pointwise algebra (solver rejects it)
    zero, one = ex.const(0.0), ex.const(1.0)
    field = CoefficientField(
        2, ControlSet(("only",)),
        (((one, ex.const(0.25)), (ex.const(0.25), one)),),
        ((zero, zero),), (zero,), 0.5,
    )
    X = np.array([[1.0, 2.0], [2.0, 1.0]])
    val = evaluate_hamiltonian(field, [0.0, 0.0], [0.0, 0.0], X)
    assert val == pytest.approx(-(np.trace(np.array([[1, 0.25], [0.25, 1]]) @ X)))


def test_periodicity_of_all_instances():
    # value at x and x + e_i agree on a sampled lattice
    for builder in list(instances.ONE_SCALE.values()) + list(instances.TWO_SCALE.values()):
        builder().validate(16)


def test_json_round_trip():
    for builder in (instances.drift_two_controls, instances.semilinear_x_coupled):
        field = builder()
        clone = field_from_json(field_to_json(field))
        assert type(clone) is type(field)
        g = build_grid(field.dim, 32)
        x = g.nodes()
        y = x if field.two_scale else None
        assert np.allclose(field.ell_values(x, y), clone.ell_values(x, y), atol=1e-15)
        assert np.allclose(field.a_values(x, y), clone.a_values(x, y), atol=1e-15)
        assert clone.bounds == field.bounds


def test_field_from_json_error_paths():
    with pytest.raises(ConfigError, match="missing"):
        field_from_json({"dim": 1})
    good = field_to_json(instances.ergodic_sine())
    bad = dict(good)
    bad["coefficients"] = {"only": {"a": [[1.0]], "f": [0.0], "ell": {"bogus": {}}}}
    with pytest.raises(ConfigError, match="coefficients.only"):
        field_from_json(bad)
