"""Bellman problem instances: control set, coefficients (a, f, l), bounds.

A problem instance holds, per control, a symmetric diffusion matrix a, a
drift vector f, and a running cost l, all given as closed-form terms from
:mod:`ergodic_hjb.expressions`.  Declared ellipticity/sup/Lipschitz bounds
are validated by sampling on a lattice at construction, not proven
symbolically.

The control set is a finite sample of the underlying compact control space;
this is a fixed modeling choice, no convergence in the number of controls is
claimed.  Two-scale instances carry a slow variable x and a fast variable y;
the slow variable is taken 1-periodic as well so every solve stays on the
torus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import expressions as ex
from .grids import TorusGrid


class ConfigError(ValueError):
    """A problem or experiment description failed validation."""


@dataclass(frozen=True)
class ControlSet:
    labels: tuple

    def __post_init__(self):
        if len(self.labels) < 1:
            raise ConfigError("control set must contain at least one control")
        if len(set(self.labels)) != len(self.labels):
            raise ConfigError("control labels must be distinct")

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class Bounds:
    """Declared sup (K) and Lipschitz (L) bounds for a, f, l."""

    K_a: float
    K_f: float
    K_ell: float
    L_a: float
    L_f: float
    L_ell: float


def _frob_bound(mat_exprs, agg) -> float:
    return math.sqrt(sum(agg(e) ** 2 for row in mat_exprs for e in row))


def _vec_bound(vec_exprs, agg) -> float:
    return math.sqrt(sum(agg(e) ** 2 for e in vec_exprs))


def derive_bounds(a, f, ell) -> Bounds:
    """Bounds from the term library: valid upper bounds, exact for single waves."""
    return Bounds(
        K_a=max(_frob_bound(am, ex.sup_bound) for am in a),
        K_f=max(_vec_bound(fv, ex.sup_bound) for fv in f),
        K_ell=max(ex.sup_bound(e) for e in ell),
        L_a=max(_frob_bound(am, ex.lip_bound) for am in a),
        L_f=max(_vec_bound(fv, ex.lip_bound) for fv in f),
        L_ell=max(ex.lip_bound(e) for e in ell),
    )


class CoefficientField:
    """One-scale coefficients (a, f, l)(x, control) with declared bounds.

    ``a``/``f``/``ell`` are tuples aligned with ``controls.labels``: per
    control a dim x dim nested tuple of terms, a length-dim tuple of terms,
    and a single term.  Immutable and safe to share between solves.
    """

    two_scale = False

    def __init__(self, dim, controls, a, f, ell, nu, bounds=None, validate_n=32):
        self.dim = int(dim)
        self.controls = controls
        self.a = tuple(tuple(tuple(row) for row in am) for am in a)
        self.f = tuple(tuple(fv) for fv in f)
        self.ell = tuple(ell)
        self.nu = float(nu)
        m = len(controls)
        if not (len(self.a) == len(self.f) == len(self.ell) == m):
            raise ConfigError("coefficient tuples must align with the control set")
        for am in self.a:
            if len(am) != self.dim or any(len(row) != self.dim for row in am):
                raise ConfigError("diffusion must be a dim x dim matrix of terms")
        for fv in self.f:
            if len(fv) != self.dim:
                raise ConfigError("drift must be a length-dim vector of terms")
        if self.nu <= 0:
            raise ConfigError("ellipticity constant nu must be positive")
        for e in self._all_exprs():
            if ex.depends_on(e, "y") and not self.two_scale:
                raise ConfigError("one-scale coefficients must not reference y")
        self.bounds = bounds if bounds is not None else derive_bounds(self.a, self.f, self.ell)
        if validate_n:
            self.validate(validate_n)

    def _all_exprs(self):
        for am in self.a:
            for row in am:
                yield from row
        for fv in self.f:
            yield from fv
        yield from self.ell

    # -- sampling ----------------------------------------------------------

    def _sample_points(self, n):
        c = np.arange(n) / n
        if self.dim == 1:
            x = c[:, None]
        else:
            gx, gy = np.meshgrid(c, c, indexing="ij")
            x = np.stack([gx.ravel(), gy.ravel()], axis=-1)
        return (x, None)

    def _base_shape(self, x, y):
        return np.broadcast_shapes(
            np.shape(x)[:-1], np.shape(y)[:-1] if y is not None else ()
        )

    def a_values(self, x, y=None) -> np.ndarray:
        """Diffusion at points, shape (M,) + points + (dim, dim)."""
        base = self._base_shape(x, y)
        out = np.empty((len(self.controls),) + base + (self.dim, self.dim))
        for m, am in enumerate(self.a):
            for i in range(self.dim):
                for j in range(self.dim):
                    out[m, ..., i, j] = ex.evaluate(am[i][j], x, y)
        return out

    def f_values(self, x, y=None) -> np.ndarray:
        base = self._base_shape(x, y)
        out = np.empty((len(self.controls),) + base + (self.dim,))
        for m, fv in enumerate(self.f):
            for i in range(self.dim):
                out[m, ..., i] = ex.evaluate(fv[i], x, y)
        return out

    def ell_values(self, x, y=None) -> np.ndarray:
        base = self._base_shape(x, y)
        out = np.empty((len(self.controls),) + base)
        for m, e in enumerate(self.ell):
            out[m] = ex.evaluate(e, x, y)
        return out

    def validate(self, n=32) -> None:
        """Sampled checks: symmetry, ellipticity, declared bounds, periodicity."""
        x, y = self._sample_points(n)
        av = self.a_values(x, y)
        fv = self.f_values(x, y)
        lv = self.ell_values(x, y)
        if not np.allclose(av, np.swapaxes(av, -1, -2), atol=1e-12):
            raise ConfigError("diffusion matrix is not symmetric")
        shifted = av - self.nu * np.eye(self.dim)
        eig_min = np.min(np.linalg.eigvalsh(shifted))
        if eig_min < -1e-10:
            raise ConfigError(
                f"ellipticity violated: min eig(a - nu*I) = {eig_min:.3e} < 0"
            )
        frob = np.sqrt(np.sum(av * av, axis=(-2, -1)))
        if np.max(frob) > self.bounds.K_a + 1e-10:
            raise ConfigError("declared bound K_a violated on the sampling lattice")
        if np.max(np.sqrt(np.sum(fv * fv, axis=-1))) > self.bounds.K_f + 1e-10:
            raise ConfigError("declared bound K_f violated on the sampling lattice")
        if np.max(np.abs(lv)) > self.bounds.K_ell + 1e-10:
            raise ConfigError("declared bound K_ell violated on the sampling lattice")
        self._check_periodicity(x, y)

    def _check_periodicity(self, x, y) -> None:
        for ax in range(self.dim):
            e = np.zeros(self.dim)
            e[ax] = 1.0
            for vals, args in (
                (self.a_values, (x, y)),
                (self.f_values, (x, y)),
                (self.ell_values, (x, y)),
            ):
                base = vals(*args)
                shifted = vals(args[0] + e, args[1])
                if not np.allclose(base, shifted, atol=1e-9):
                    raise ConfigError(f"coefficients are not 1-periodic along axis {ax}")

    # -- pointwise algebra ---------------------------------------------------

    def hamiltonian_terms(self, x, p, X, y=None) -> np.ndarray:
        """Per-control values of -tr(aX) - f.p - l at a single point."""
        x = np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, self.dim)
        if y is not None:
            y = np.atleast_1d(np.asarray(y, dtype=float)).reshape(1, self.dim)
        p = np.atleast_1d(np.asarray(p, dtype=float)).reshape(self.dim)
        X = np.asarray(X, dtype=float).reshape(self.dim, self.dim)
        av = self.a_values(x, y)[:, 0]
        fv = self.f_values(x, y)[:, 0]
        lv = self.ell_values(x, y)[:, 0]
        return -np.einsum("mij,ji->m", av, X) - fv @ p - lv

    def hamiltonian(self, x, p, X, y=None) -> float:
        return float(np.max(self.hamiltonian_terms(x, p, X, y=y)))

    def argmax_control(self, x, p, X, y=None) -> int:
        """Index of the maximizing control; ties break to the first label."""
        return int(np.argmax(self.hamiltonian_terms(x, p, X, y=y)))

    def is_diagonal(self) -> bool:
        for am in self.a:
            for i in range(self.dim):
                for j in range(self.dim):
                    if i != j and not (
                        isinstance(am[i][j], ex.Const) and am[i][j].value == 0.0
                    ):
                        return False
        return True

    def shift_running_cost(self, c: float) -> "CoefficientField":
        """New field with l := l + c for every control (bounds rederived)."""
        new_ell = tuple(ex.add(e, ex.const(c)) for e in self.ell)
        return CoefficientField(
            self.dim, self.controls, self.a, self.f, new_ell, self.nu
        )


class TwoScaleCoefficientField(CoefficientField):
    """Coefficients (a, f, l)(x, y, control), 1-periodic in both x and y."""

    two_scale = True

    def _sample_points(self, n):
        c = np.arange(n) / n
        if self.dim == 1:
            xs = c[:, None]
            x = np.repeat(xs, n, axis=0)
            y = np.tile(xs, (n, 1))
        else:
            gx, gy = np.meshgrid(c, c, indexing="ij")
            pts = np.stack([gx.ravel(), gy.ravel()], axis=-1)
            reps = len(pts)
            x = np.repeat(pts, reps, axis=0)
            y = np.tile(pts, (reps, 1))
        return (x, y)

    def _check_periodicity(self, x, y) -> None:
        super()._check_periodicity(x, y)
        for ax in range(self.dim):
            e = np.zeros(self.dim)
            e[ax] = 1.0
            for vals in (self.a_values, self.f_values, self.ell_values):
                if not np.allclose(vals(x, y), vals(x, y + e), atol=1e-9):
                    raise ConfigError(
                        f"coefficients are not 1-periodic in the fast variable, axis {ax}"
                    )

    def is_semilinear(self) -> bool:
        """Diffusion independent of both the control and the fast variable."""
        first = self.a[0]
        if any(am != first for am in self.a):
            return False
        return not any(ex.depends_on(e, "y") for row in first for e in row)

    def validate(self, n=16) -> None:
        # quadratic sample-point count in n, keep the lattice coarse
        super().validate(n)


@dataclass(frozen=True)
class CellProblemSpec:
    """Fast-variable problem with frozen slow data (x_bar, p_bar, X_bar)."""

    source: TwoScaleCoefficientField
    x_bar: np.ndarray
    p_bar: np.ndarray
    X_bar: np.ndarray

    def __post_init__(self):
        d = self.source.dim
        object.__setattr__(self, "x_bar", np.asarray(self.x_bar, float).reshape(d))
        object.__setattr__(self, "p_bar", np.asarray(self.p_bar, float).reshape(d))
        X = np.asarray(self.X_bar, float).reshape(d, d)
        if not np.allclose(X, X.T, atol=1e-12):
            raise ConfigError("X_bar must be symmetric")
        object.__setattr__(self, "X_bar", X)


def evaluate_hamiltonian(problem: CoefficientField, x, p, X, y=None) -> float:
    """max over controls of -tr(a(x)X) - f(x).p - l(x); first control wins ties."""
    return problem.hamiltonian(x, p, X, y=y)


def freeze_cell_problem(spec: CellProblemSpec) -> CoefficientField:
    """One-variable field whose ergodic constant is the effective value at spec.

    The slow variable is frozen at x_bar and the running cost absorbs the
    frozen derivative data: l'(y) = l(x_bar, y) + tr(a(x_bar, y) X_bar)
    + f(x_bar, y) . p_bar.  The declared running-cost bounds are enlarged to
    K*(1+|p_bar|+|X_bar|) with K the largest source sup bound (same for L).
    """
    src = spec.source
    d = src.dim
    a_frozen = []
    f_frozen = []
    ell_frozen = []
    for m in range(len(src.controls)):
        am = tuple(
            tuple(ex.freeze_slow(src.a[m][i][j], spec.x_bar) for j in range(d))
            for i in range(d)
        )
        fv = tuple(ex.freeze_slow(src.f[m][i], spec.x_bar) for i in range(d))
        terms = [ex.freeze_slow(src.ell[m], spec.x_bar)]
        for i in range(d):
            for j in range(d):
                if spec.X_bar[i, j] != 0.0:
                    terms.append(ex.scale(spec.X_bar[j, i], am[i][j]))
        for i in range(d):
            if spec.p_bar[i] != 0.0:
                terms.append(ex.scale(spec.p_bar[i], fv[i]))
        a_frozen.append(am)
        f_frozen.append(fv)
        ell_frozen.append(terms[0] if len(terms) == 1 else ex.Sum(tuple(terms)))
    K = max(src.bounds.K_a, src.bounds.K_f, src.bounds.K_ell)
    L = max(src.bounds.L_a, src.bounds.L_f, src.bounds.L_ell)
    size = 1.0 + float(np.linalg.norm(spec.p_bar)) + float(np.linalg.norm(spec.X_bar))
    bounds = Bounds(
        K_a=src.bounds.K_a,
        K_f=src.bounds.K_f,
        K_ell=K * size,
        L_a=src.bounds.L_a,
        L_f=src.bounds.L_f,
        L_ell=L * size,
    )
    return CoefficientField(
        d, src.controls, a_frozen, f_frozen, ell_frozen, src.nu, bounds=bounds
    )


def coefficient_distance(p1: CoefficientField, p2: CoefficientField, grid: TorusGrid):
    """(da, df, dl): max over grid nodes and controls of pointwise distances.

    da uses the Frobenius norm, df the Euclidean norm, dl the absolute value.
    """
    if p1.controls != p2.controls:
        raise ConfigError("coefficient distance requires a shared control set")
    if p1.dim != p2.dim or p1.dim != grid.dim:
        raise ConfigError("dimension mismatch")
    x = grid.nodes()
    da_mat = p1.a_values(x) - p2.a_values(x)
    df_vec = p1.f_values(x) - p2.f_values(x)
    dl_val = p1.ell_values(x) - p2.ell_values(x)
    da = float(np.max(np.sqrt(np.sum(da_mat * da_mat, axis=(-2, -1)))))
    df = float(np.max(np.sqrt(np.sum(df_vec * df_vec, axis=-1))))
    dl = float(np.max(np.abs(dl_val)))
    return da, df, dl


# -- JSON round trip ---------------------------------------------------------


def field_to_json(field_obj: CoefficientField) -> dict:
    coeffs = {}
    for m, label in enumerate(field_obj.controls.labels):
        coeffs[label] = {
            "a": [[ex.to_json(e) for e in row] for row in field_obj.a[m]],
            "f": [ex.to_json(e) for e in field_obj.f[m]],
            "ell": ex.to_json(field_obj.ell[m]),
        }
    b = field_obj.bounds
    return {
        "dim": field_obj.dim,
        "nu": field_obj.nu,
        "two_scale": field_obj.two_scale,
        "controls": list(field_obj.controls.labels),
        "coefficients": coeffs,
        "bounds": {
            "K_a": b.K_a, "K_f": b.K_f, "K_ell": b.K_ell,
            "L_a": b.L_a, "L_f": b.L_f, "L_ell": b.L_ell,
        },
    }


def field_from_json(obj: dict) -> CoefficientField:
    try:
        dim = int(obj["dim"])
        nu = float(obj["nu"])
        labels = tuple(obj["controls"])
        coeffs = obj["coefficients"]
    except (KeyError, TypeError) as err:
        raise ConfigError(f"malformed problem description: missing {err}") from err
    controls = ControlSet(labels)
    a, f, ell = [], [], []
    for label in labels:
        if label not in coeffs:
            raise ConfigError(f"coefficients missing for control {label!r}")
        body = coeffs[label]
        try:
            a.append(
                tuple(tuple(ex.from_json(e) for e in row) for row in body["a"])
            )
            f.append(tuple(ex.from_json(e) for e in body["f"]))
            ell.append(ex.from_json(body["ell"]))
        except (KeyError, ValueError, TypeError) as err:
            raise ConfigError(
                f"coefficients.{label}: {err}"
            ) from err
    bounds = None
    if "bounds" in obj:
        try:
            bounds = Bounds(**{k: float(v) for k, v in obj["bounds"].items()})
        except TypeError as err:
            raise ConfigError(f"bounds: {err}") from err
    cls = TwoScaleCoefficientField if obj.get("two_scale", False) else CoefficientField
    return cls(dim, controls, a, f, ell, nu, bounds=bounds)
