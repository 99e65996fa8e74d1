"""Report figures rendered to files next to the CSV/JSON artifacts.

All figures go through the Agg backend so runs work headless; nothing here
is interactive.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

FIGSIZE = (6.0, 3.7)
DPI = 150


def _new_axes(title, xlabel, ylabel):
    fig, ax = plt.subplots(figsize=FIGSIZE, dpi=DPI)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    return fig, ax


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_grid_function(u, path, title="solution", label=None) -> None:
    g = u.grid
    if g.dim == 1:
        fig, ax = _new_axes(title, "x", "value")
        ax.plot(g.axis_coordinates(), u.values, lw=1.5, label=label)
        if label:
            ax.legend()
    else:
        fig, ax = plt.subplots(figsize=(5.0, 4.2), dpi=DPI)
        im = ax.imshow(
            u.values.T, origin="lower", extent=(0, 1, 0, 1), cmap="viridis"
        )
        fig.colorbar(im, ax=ax)
        ax.set_title(title)
        ax.set_xlabel("x")
        ax.set_ylabel("y")
    _save(fig, path)


def plot_profiles(curves, path, title="profiles") -> None:
    """Overlay of 1D grid functions given as (label, GridFunction) pairs."""
    fig, ax = _new_axes(title, "x", "value")
    for label, u in curves:
        ax.plot(u.grid.axis_coordinates(), u.values, lw=1.2, label=label)
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_lambda_trace(trace, path) -> None:
    lams = [row.lam for row in trace]
    spreads = [row.spread for row in trace]
    fig, ax = _new_axes("vanishing-discount continuation", "discount rate", "")
    ax.set_xscale("log")
    if min(spreads) > 0:
        ax.set_yscale("log")
    ax.plot(lams, spreads, "o-", label="spread of -lam*v")
    du = [abs(a.U_estimate - b.U_estimate) for a, b in zip(trace[1:], trace[:-1])]
    if du and min(du) > 0:
        ax.plot(lams[1:], du, "s--", label="|U_k - U_{k-1}|")
    ax.invert_xaxis()
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_scaling(report, path) -> None:
    fig, ax = _new_axes("coefficient-perturbation scaling", "delta", "distance")
    ax.loglog(report.deltas, report.sup_dists, "o-",
              label=f"sup distance (slope {report.fitted_slope_sup:.3f})")
    ax.loglog(report.deltas, report.c2_dists, "s-",
              label=f"C2 distance (slope {report.fitted_slope_c2:.3f})")
    d = np.asarray(report.deltas)
    ref = report.sup_dists[0] * d / d[0]
    ax.loglog(d, ref, "k:", lw=1, label="slope 1 reference")
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_rate(report, path) -> None:
    fig, ax = _new_axes("homogenization error vs eps", "eps", "sup error")
    eps = np.asarray(report.epsilons)
    ax.loglog(eps, report.errors, "o-",
              label=f"measured (theta {report.fitted_theta:.3f})")
    ax.loglog(eps, report.fitted_M * eps**report.fitted_theta, "k:",
              lw=1, label="least-squares fit")
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_effective_samples(samples, path) -> None:
    fig, ax = _new_axes("effective Hamiltonian samples", "sample", "value")
    ax.plot([s.value for s in samples], "o-", lw=1)
    _save(fig, path)
