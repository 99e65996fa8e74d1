"""Canonical problem instances used by the shipped configs and the tests.

Each builder returns a fresh validated field.  Headline numbers quoted in
the shipped-config descriptions come from closed-form references: torus
solvability (the ergodic constant of -v'' - l is minus the mean of l),
single-mode inversion (forcing sin(2*pi*x) has corrector sin(2*pi*x)/(4*pi^2)),
or direct measurement through the pipeline.
"""

from __future__ import annotations

from . import expressions as ex
from .problems import CoefficientField, ControlSet, TwoScaleCoefficientField


def _one_scale_1d(controls, a, f, ell, nu=1.0) -> CoefficientField:
    return CoefficientField(
        1,
        ControlSet(tuple(controls)),
        tuple(((e,),) for e in a),
        tuple((e,) for e in f),
        tuple(ell),
        nu,
    )


def const_two_controls() -> CoefficientField:
    """Two constant running costs {2, 5}; U = -2 and the corrector vanishes."""
    return _one_scale_1d(
        ("cheap", "dear"),
        [ex.const(1.0), ex.const(1.0)],
        [ex.const(0.0), ex.const(0.0)],
        [ex.const(2.0), ex.const(5.0)],
    )


def ergodic_sine() -> CoefficientField:
    """Single control, unit diffusion, mean-zero sine cost; U = 0."""
    return _one_scale_1d(
        ("only",), [ex.const(1.0)], [ex.const(0.0)], [ex.sin_x()]
    )


def ergodic_sine_forced() -> CoefficientField:
    """Single control, cost 1 + sin(2 pi x); U = -1, corrector sin/(4 pi^2)."""
    return _one_scale_1d(
        ("only",), [ex.const(1.0)], [ex.const(0.0)], [ex.add(1.0, ex.sin_x())]
    )


def drift_two_controls() -> CoefficientField:
    """Opposite constant drifts with shifted sine costs; exercises switching."""
    return _one_scale_1d(
        ("fwd", "bwd"),
        [ex.const(1.0), ex.const(1.0)],
        [ex.const(1.0), ex.const(-1.0)],
        [ex.add(1.0, ex.sin_x()), ex.add(1.0, ex.cos_x())],
    )


def diffusion_two_controls() -> CoefficientField:
    """Control-dependent diffusion {1, 1.5+0.25cos}; max genuinely in X."""
    return _one_scale_1d(
        ("thin", "wide"),
        [ex.const(1.0), ex.add(1.5, ex.cos_x(amp=0.25))],
        [ex.const(0.0), ex.const(0.0)],
        [ex.add(1.0, ex.sin_x()), ex.add(2.0, ex.cos_x(amp=-0.5))],
    )


def ergodic_product_2d() -> CoefficientField:
    """2D single control, cost 1 + sin(2 pi x)sin(2 pi y); U = -1,
    corrector sin*sin/(8 pi^2)."""
    zero = ex.const(0.0)
    one = ex.const(1.0)
    wave = ex.mul(ex.sin_x(axis=0), ex.sin_x(axis=1))
    return CoefficientField(
        2,
        ControlSet(("only",)),
        (((one, zero), (zero, one)),),
        ((zero, zero),),
        (ex.add(1.0, wave),),
        1.0,
    )


def _two_scale_1d(controls, a, f, ell, nu=1.0) -> TwoScaleCoefficientField:
    return TwoScaleCoefficientField(
        1,
        ControlSet(tuple(controls)),
        tuple(((e,),) for e in a),
        tuple((e,) for e in f),
        tuple(ell),
        nu,
    )


def semilinear_x_independent() -> TwoScaleCoefficientField:
    """Fast cost 1 + sin(2 pi y), no slow coupling; effective solution u = 1."""
    return _two_scale_1d(
        ("only",), [ex.const(1.0)], [ex.const(0.0)], [ex.add(1.0, ex.sin_y())]
    )


def semilinear_x_coupled() -> TwoScaleCoefficientField:
    """Cost (1 + sin(2 pi x)/2)(1 + sin(2 pi y)); fast average 1 + sin(2 pi x)/2."""
    cost = ex.mul(
        ex.add(1.0, ex.sin_x(amp=0.5)),
        ex.add(1.0, ex.sin_y()),
    )
    return _two_scale_1d(("only",), [ex.const(1.0)], [ex.const(0.0)], [cost])


def twoscale_two_controls() -> TwoScaleCoefficientField:
    """Two controls with distinct diffusions and fast-oscillating costs."""
    return _two_scale_1d(
        ("calm", "bold"),
        [ex.const(1.0), ex.add(1.5, ex.cos_y(amp=0.25))],
        [ex.const(0.5), ex.const(-0.5)],
        [
            ex.add(1.0, ex.sin_y(), ex.sin_x(amp=0.3)),
            ex.add(2.0, ex.cos_y(amp=0.5)),
        ],
    )


ONE_SCALE = {
    "const_two_controls": const_two_controls,
    "ergodic_sine": ergodic_sine,
    "ergodic_sine_forced": ergodic_sine_forced,
    "drift_two_controls": drift_two_controls,
    "diffusion_two_controls": diffusion_two_controls,
    "ergodic_product_2d": ergodic_product_2d,
}

TWO_SCALE = {
    "semilinear_x_independent": semilinear_x_independent,
    "semilinear_x_coupled": semilinear_x_coupled,
    "twoscale_two_controls": twoscale_two_controls,
}
