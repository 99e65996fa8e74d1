"""Command-line entry point: run experiment configs, list the shipped ones.

Exit codes: 0 success, 2 configuration/validation failure, 3 solver failure.
Every run writes CSV tables, a JSON summary, rendered figures, and a
manifest listing each artifact with its content hash.  Floating-point output
uses 12 significant digits throughout; with a fixed seed two runs of the
same config produce byte-identical CSV artifacts.

Note: the slow spatial variable is treated as 1-periodic as well, so every
solve lives on the unit torus.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from importlib import resources

import numpy as np

from . import __version__
from . import expressions as ex
from . import plots
from .cde import compare_ergodic, scaling_study, write_scaling_csv, write_scaling_summary
from .ergodic import ergodic_from_evolutive, solve_ergodic, write_lambda_trace
from .grids import build_grid, format_float, write_csv
from .homogenization import (
    effective_hamiltonian,
    measure_rate,
    semilinear_oracle,
    write_rate_csv,
    write_samples_csv,
)
from .problems import ConfigError, field_from_json
from .solver import SolverError, discretize, solve_discounted, write_iteration_log

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def _schema():
    ref = resources.files("ergodic_hjb").joinpath("schema/experiment_config.schema.json")
    return json.loads(ref.read_text())


def shipped_config_dir():
    return resources.files("ergodic_hjb").joinpath("configs")


def validate_config(config: dict) -> None:
    import jsonschema

    validator = jsonschema.Draft202012Validator(_schema())
    errors = sorted(validator.iter_errors(config), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = ".".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"config key {path}: {err.message}")


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            config = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: {err}")
    validate_config(config)
    return config


def _round12(obj):
    if isinstance(obj, float):
        return float(format_float(obj))
    if isinstance(obj, dict):
        return {k: _round12(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round12(v) for v in obj]
    return obj


class RunWriter:
    """Collects artifact paths so the manifest can hash every file written."""

    def __init__(self, out_dir: str):
        os.makedirs(out_dir, exist_ok=True)
        self.out_dir = out_dir
        self.artifacts = []

    def path(self, name: str) -> str:
        full = os.path.join(self.out_dir, name)
        self.artifacts.append(name)
        return full

    def write_summary(self, payload: dict) -> None:
        with open(self.path("summary.json"), "w") as fh:
            json.dump(_round12(payload), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_manifest(self, config: dict, wall_time: float) -> None:
        entries = {}
        for name in sorted(self.artifacts):
            with open(os.path.join(self.out_dir, name), "rb") as fh:
                entries[name] = hashlib.sha256(fh.read()).hexdigest()
        manifest = {
            "config_sha256": hashlib.sha256(
                json.dumps(config, sort_keys=True).encode()
            ).hexdigest(),
            "package_version": __version__,
            "wall_time_s": float(format_float(wall_time)),
            "artifacts": entries,
        }
        with open(os.path.join(self.out_dir, "run_manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _problem(config, key="problem"):
    field = field_from_json(config[key])
    expect_two_scale = config["kind"] in ("effective-H", "homogenize-rate")
    if expect_two_scale and not field.two_scale:
        raise ConfigError(f"config key {key}: kind {config['kind']} needs a two_scale problem")
    if not expect_two_scale and field.two_scale:
        raise ConfigError(f"config key {key}: kind {config['kind']} needs a one-scale problem")
    return field


def _grid(config):
    g = config["grid"]
    return build_grid(g["dim"], g["points_per_axis"])


def run_discounted(config, writer, workers, verbose):
    field = _problem(config)
    grid = _grid(config)
    op = discretize(field, grid)
    sol = solve_discounted(op, config["lambda"], tol=config.get("tol", 1e-10))
    write_csv(sol.v, writer.path("solution.csv"))
    plots.plot_grid_function(sol.v, writer.path("solution.png"), title="discounted solution")
    if verbose:
        write_iteration_log(sol.iteration_log, writer.path("iteration_log.csv"))
    writer.write_summary({
        "kind": "discounted",
        "lambda": sol.lam,
        "iterations": sol.iterations,
        "residual": sol.residual,
        "sup_norm": float(np.max(np.abs(sol.v.values))),
        "sup_norm_times_lambda": float(sol.lam * np.max(np.abs(sol.v.values))),
        "K_ell": field.bounds.K_ell,
    })


def run_ergodic(config, writer, workers, verbose):
    field = _problem(config)
    grid = _grid(config)
    sol = solve_ergodic(
        field, grid, tol=config.get("tol", 1e-6),
        richardson=config.get("richardson", False),
    )
    write_csv(sol.v, writer.path("corrector.csv"))
    write_lambda_trace(sol.lambda_trace, writer.path("lambda_trace.csv"))
    plots.plot_grid_function(sol.v, writer.path("corrector.png"), title="corrector")
    plots.plot_lambda_trace(sol.lambda_trace, writer.path("lambda_trace.png"))
    summary = {
        "kind": "ergodic",
        "U": sol.U,
        "converged": sol.converged,
        "continuation_steps": len(sol.lambda_trace),
        "final_spread": sol.lambda_trace[-1].spread,
        "corrector_sup": float(np.max(np.abs(sol.v.values))),
    }
    if "evolutive_T" in config:
        u_ev, _ = ergodic_from_evolutive(field, grid, config["evolutive_T"])
        summary["U_evolutive"] = u_ev
        summary["two_route_gap"] = abs(u_ev - sol.U)
    writer.write_summary(summary)


def run_cde_compare(config, writer, workers, verbose):
    p1 = _problem(config, "problem")
    p2 = _problem(config, "problem_2")
    grid = _grid(config)
    tol = config.get("tol", 1e-6)
    report = compare_ergodic(p1, p2, grid, tol=tol)
    s1 = solve_ergodic(p1, grid, tol=tol)
    s2 = solve_ergodic(p2, grid, tol=tol)
    write_csv(s1.v, writer.path("corrector_1.csv"))
    write_csv(s2.v, writer.path("corrector_2.csv"))
    if grid.dim == 1:
        plots.plot_profiles(
            [("corrector 1", s1.v), ("corrector 2", s2.v)],
            writer.path("correctors.png"),
            title="paired correctors",
        )
    writer.write_summary({
        "kind": "cde-compare",
        "da": report.da, "df": report.df, "dl": report.dl,
        "sup_dist": report.sup_dist, "c2_dist": report.c2_dist,
        "dU": report.dU, "C_ell": report.C_ell,
        "bound_rhs_sup": report.bound_rhs_sup,
    })


def run_cde_scaling(config, writer, workers, verbose):
    base = _problem(config)
    grid = _grid(config)
    shape = ex.from_json(config["shape"])
    report = scaling_study(
        base, config["direction"], shape, config["deltas"], grid,
        tol=config.get("tol", 1e-6), workers=workers,
    )
    write_scaling_csv(report, writer.path("scaling.csv"))
    write_scaling_summary(report, writer.path("scaling_summary.json"))
    plots.plot_scaling(report, writer.path("scaling.png"))
    writer.write_summary({
        "kind": "cde-scaling",
        "direction": config["direction"],
        "fitted_slope_sup": report.fitted_slope_sup,
        "fitted_slope_c2": report.fitted_slope_c2,
        "C_fit": report.C_fit,
        "C_ell": report.C_ell,
        "c2_family_valid": report.c2_family_valid,
        "deltas": report.deltas,
        "sup_dists": report.sup_dists,
    })


def run_effective_h(config, writer, workers, verbose):
    source = _problem(config)
    cell_n = config["cell_points_per_axis"]
    num = config.get("num_samples", 20)
    rng = np.random.default_rng(config.get("seed", 0))
    p_range = config.get("p_range", 1.0)
    x_range = config.get("X_range", 1.0)
    tol = config.get("tol", 1e-5)
    d = source.dim

    queries = []
    for _ in range(num):
        xb = rng.uniform(0.0, 1.0, d)
        pb = rng.uniform(-p_range, p_range, d)
        xm = rng.uniform(-x_range, x_range, (d, d))
        queries.append((xb, pb, 0.5 * (xm + xm.T)))

    def solve_one(q):
        return effective_hamiltonian(source, *q, cell_n, tol=tol)

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            samples = list(pool.map(solve_one, queries))
    else:
        samples = [solve_one(q) for q in queries]

    write_samples_csv(samples, writer.path("samples.csv"))
    plots.plot_effective_samples(samples, writer.path("samples.png"))
    summary = {
        "kind": "effective-H",
        "num_samples": num,
        "cell_points_per_axis": cell_n,
        "value_min": min(s.value for s in samples),
        "value_max": max(s.value for s in samples),
    }
    if source.is_semilinear():
        devs = []
        for s in samples:
            a_val = source.a_values(s.x_bar.reshape(1, d))[0, 0]
            oracle = -float(np.trace(a_val @ s.X_bar)) + semilinear_oracle(
                source, s.x_bar, s.p_bar, cell_n
            )
            devs.append(abs(s.value - oracle))
        summary["semilinear_oracle_max_dev"] = max(devs)
    writer.write_summary(summary)


def run_homogenize_rate(config, writer, workers, verbose):
    source = _problem(config)
    report = measure_rate(
        source,
        config["epsilons"],
        config["outer_points_per_axis"],
        config["cell_points_per_axis"],
        tol=config.get("tol", 1e-8),
        workers=workers,
    )
    write_rate_csv(report, writer.path("rate.csv"))
    plots.plot_rate(report, writer.path("rate.png"))
    upper_ok = all(
        err <= report.fitted_M * eps**0.9
        for err, eps in zip(report.errors, report.epsilons)
    )
    writer.write_summary({
        "kind": "homogenize-rate",
        "fitted_theta": report.fitted_theta,
        "fitted_M": report.fitted_M,
        "epsilons": report.epsilons,
        "errors": report.errors,
        "fine_grid_n": report.fine_grid_n,
        "errors_monotone": all(
            a > b for a, b in zip(report.errors, report.errors[1:])
        ),
        "upper_bound_theta_0_9_pass": upper_ok,
    })


RUNNERS = {
    "discounted": run_discounted,
    "ergodic": run_ergodic,
    "cde-compare": run_cde_compare,
    "cde-scaling": run_cde_scaling,
    "effective-H": run_effective_h,
    "homogenize-rate": run_homogenize_rate,
}


def resolve_config_path(name: str) -> str:
    if os.path.exists(name):
        return name
    base = name if name.endswith(".json") else name + ".json"
    shipped = shipped_config_dir().joinpath(base)
    if shipped.is_file():
        return str(shipped)
    raise ConfigError(f"config file not found: {name}")


def cmd_run(args) -> int:
    try:
        path = resolve_config_path(args.config)
        config = load_config(path)
        out_dir = args.out or os.path.join(
            "runs", os.path.splitext(os.path.basename(path))[0]
        )
        writer = RunWriter(out_dir)
        start = time.perf_counter()
        RUNNERS[config["kind"]](config, writer, args.workers, args.verbose)
        writer.write_manifest(config, time.perf_counter() - start)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as err:
        print(f"solver failure: {err}", file=sys.stderr)
        return EXIT_SOLVER
    print(f"wrote {len(writer.artifacts) + 1} artifacts to {writer.out_dir}")
    return EXIT_OK


def cmd_list(args) -> int:
    cfg_dir = args.configs_dir or shipped_config_dir()
    rows = []
    try:
        entries = sorted(
            p for p in os.listdir(str(cfg_dir)) if str(p).endswith(".json")
        )
    except FileNotFoundError:
        entries = []
    for name in entries:
        try:
            with open(os.path.join(str(cfg_dir), name)) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError):
            continue
        rows.append((
            os.path.splitext(name)[0],
            cfg.get("kind", "?"),
            cfg.get("description", ""),
            cfg.get("expected", ""),
        ))
    if rows:
        widths = [max(len(r[i]) for r in rows) for i in range(3)]
        for r in rows:
            print(f"{r[0]:<{widths[0]}}  {r[1]:<{widths[1]}}  {r[2]:<{widths[2]}}  {r[3]}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ergodic-hjb",
        description=(
            "Ergodic Bellman problems on the unit torus: discounted and "
            "ergodic solves, coefficient-perturbation scaling studies, and "
            "two-scale homogenization rate measurement. All problems are "
            "1-periodic in every spatial variable (the slow variable too)."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config (JSON)")
    p_run.add_argument("config", help="path to a config file, or a shipped config name")
    p_run.add_argument("--out", default=None, help="output directory (default runs/<name>)")
    p_run.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                       help="worker-pool size for independent solves")
    p_run.add_argument("--verbose", action="store_true",
                       help="also write per-iteration solver logs")
    p_run.set_defaults(fn=cmd_run)

    p_list = sub.add_parser("list", help="list shipped example configs")
    p_list.add_argument("--configs-dir", default=None,
                        help="directory to list instead of the shipped configs")
    p_list.set_defaults(fn=cmd_list)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
