"""Paired ergodic solves and coefficient-perturbation scaling studies.

The sup-norm distance between two correctors is expected to be controlled by
C_ell*(da + df) + dl, where da/df/dl are the max pointwise coefficient
distances and C_ell = 1 + min_i(K_ell_i + L_ell_i); the harness measures the
distances, fits log-log slopes along shrinking perturbation families, and
records the smallest family-wide constant making the bound hold.

The C2-distance law is only cleanly testable on families where the
maximizing control is locally constant (single-control families in
practice); reports carry a flag for that restriction.
"""

from __future__ import annotations

import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import expressions as ex
from .ergodic import solve_ergodic
from .grids import TorusGrid, discrete_norms, format_float
from .problems import CoefficientField, ConfigError, coefficient_distance


@dataclass
class CdeReport:
    da: float
    df: float
    dl: float
    sup_dist: float
    c2_dist: float
    dU: float
    C_ell: float

    @property
    def bound_rhs_sup(self) -> float:
        """C_ell*(da+df) + dl, the bound shape with its constant set to 1."""
        return self.C_ell * (self.da + self.df) + self.dl


def compare_ergodic(p1: CoefficientField, p2: CoefficientField, grid: TorusGrid,
                    tol: float = 1e-6) -> CdeReport:
    if p1.controls != p2.controls:
        raise ConfigError("paired solves require a shared control set")
    s1 = solve_ergodic(p1, grid, tol=tol)
    s2 = solve_ergodic(p2, grid, tol=tol)
    da, df, dl = coefficient_distance(p1, p2, grid)
    diff = s1.v - s2.v
    sup_dist = float(np.max(np.abs(diff.values)))
    c2 = discrete_norms(diff).c2_norm
    c_ell = 1.0 + min(
        p1.bounds.K_ell + p1.bounds.L_ell, p2.bounds.K_ell + p2.bounds.L_ell
    )
    return CdeReport(da, df, dl, sup_dist, c2, abs(s1.U - s2.U), c_ell)


@dataclass
class ScalingReport:
    deltas: list
    sup_dists: list
    c2_dists: list
    fitted_slope_sup: float
    fitted_slope_c2: float
    da: list
    df: list
    dl: list
    dU: list
    C_ell: float
    C_fit: float              # max over deltas of sup_dist / bound_rhs_sup
    c2_family_valid: bool     # single control: maximizing control locally constant
    dropped_deltas: list


def perturb(base: CoefficientField, direction: str, shape: ex.Expr,
            delta: float) -> CoefficientField:
    """base with delta*shape added to the named coefficient for every control.

    Directions: "ell" adds to the running cost, "f" to every drift component,
    "a" to the diffusion diagonal (keeping symmetry; ellipticity is
    re-validated and may reject the perturbed field).
    """
    bump = ex.scale(delta, shape)
    if direction == "ell":
        new_ell = tuple(ex.add(e, bump) for e in base.ell)
        return CoefficientField(base.dim, base.controls, base.a, base.f, new_ell, base.nu)
    if direction == "f":
        new_f = tuple(tuple(ex.add(c, bump) for c in fv) for fv in base.f)
        return CoefficientField(base.dim, base.controls, base.a, new_f, base.ell, base.nu)
    if direction == "a":
        new_a = tuple(
            tuple(
                tuple(ex.add(am[i][j], bump) if i == j else am[i][j]
                      for j in range(base.dim))
                for i in range(base.dim)
            )
            for am in base.a
        )
        return CoefficientField(base.dim, base.controls, new_a, base.f, base.ell, base.nu)
    raise ConfigError(f"unknown perturbation direction {direction!r} (use a, f, or ell)")


def scaling_study(base: CoefficientField, direction: str, shape: ex.Expr,
                  deltas, grid: TorusGrid, tol: float = 1e-6,
                  workers: int = 1) -> ScalingReport:
    """compare_ergodic along a shrinking family; least-squares log-log slopes."""
    deltas = sorted((float(d) for d in deltas), reverse=True)
    kept, dropped = [], []
    fields = []
    for d in deltas:
        try:
            fields.append(perturb(base, direction, shape, d))
            kept.append(d)
        except ConfigError as err:
            warnings.warn(f"delta {d:g} dropped: {err}", stacklevel=2)
            dropped.append(d)
    if len(kept) < 3:
        raise ConfigError(
            f"scaling study needs at least 3 admissible deltas, got {len(kept)}"
        )

    def run(field):
        return compare_ergodic(base, field, grid, tol=tol)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(run, fields))
    else:
        reports = [run(f) for f in fields]

    sup = [r.sup_dist for r in reports]
    c2 = [r.c2_dist for r in reports]
    slope_sup = float(np.polyfit(np.log(kept), np.log(sup), 1)[0])
    slope_c2 = float(np.polyfit(np.log(kept), np.log(c2), 1)[0])
    c_fit = max(r.sup_dist / r.bound_rhs_sup for r in reports)
    return ScalingReport(
        deltas=kept,
        sup_dists=sup,
        c2_dists=c2,
        fitted_slope_sup=slope_sup,
        fitted_slope_c2=slope_c2,
        da=[r.da for r in reports],
        df=[r.df for r in reports],
        dl=[r.dl for r in reports],
        dU=[r.dU for r in reports],
        C_ell=reports[0].C_ell,
        C_fit=c_fit,
        c2_family_valid=len(base.controls) == 1,
        dropped_deltas=dropped,
    )


def write_scaling_csv(report: ScalingReport, path) -> None:
    with open(path, "w") as fh:
        fh.write("delta,da,df,dl,sup_dist,c2_dist\n")
        for i, d in enumerate(report.deltas):
            row = [d, report.da[i], report.df[i], report.dl[i],
                   report.sup_dists[i], report.c2_dists[i]]
            fh.write(",".join(format_float(v) for v in row) + "\n")


def scaling_summary(report: ScalingReport, slope_sup_range=(0.9, 1.1),
                    slope_c2_range=(0.9, 1.1)) -> dict:
    lo, hi = slope_sup_range
    lo2, hi2 = slope_c2_range
    ratios = [s / d for s, d in zip(report.c2_dists, report.deltas)]
    return {
        "fitted_slope_sup": report.fitted_slope_sup,
        "fitted_slope_c2": report.fitted_slope_c2,
        "C_fit": report.C_fit,
        "C_ell": report.C_ell,
        "c2_family_valid": report.c2_family_valid,
        "c2_ratio_spread": max(ratios) / min(ratios) if min(ratios) > 0 else float("inf"),
        "slope_sup_pass": lo <= report.fitted_slope_sup <= hi,
        "slope_c2_pass": lo2 <= report.fitted_slope_c2 <= hi2,
        "dropped_deltas": report.dropped_deltas,
    }


def write_scaling_summary(report: ScalingReport, path, **kwargs) -> None:
    summary = scaling_summary(report, **kwargs)
    rounded = {
        k: (float(format_float(v)) if isinstance(v, float) else v)
        for k, v in summary.items()
    }
    with open(path, "w") as fh:
        json.dump(rounded, fh, indent=2)
        fh.write("\n")
