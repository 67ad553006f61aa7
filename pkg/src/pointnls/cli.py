"""Command-line front end: kernel tables, solves, scans, verification.

Outputs are deterministic for identical configs: iteration orders are
fixed, no time-based seeds exist anywhere in the package, CSV floats use
17 significant digits, and JSON keys are sorted.
"""

import concurrent.futures
import json
import os
import sys
from dataclasses import dataclass
from typing import Optional

import click
import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import charge, field, ops, oracle, specfun
from .errors import (ConfigError, ConvergenceError, DomainError,
                     PointNLSError, ResolutionError, SolverError,
                     TailBoundError)

#: Exit codes by error class: 2 for configuration/domain problems, 3 for
#: solver/numerical failures, 1 for verification failures.
EXIT_CONFIG = 2
EXIT_SOLVER = 3

OUT_DIR_ENV = "POINTNLS_OUT_DIR"


def _fmt(x):
    """17-significant-digit scientific notation (round-trips doubles)."""
    return f"{float(x):.16e}"


# ---------------------------------------------------------------------------
# Run configuration


@dataclass(frozen=True)
class GridSpec:
    t_max: float
    kind: str = "adaptive"      # "adaptive" or "geometric"
    nodes: int = 512            # geometric only
    ratio: float = 0.7          # geometric only


@dataclass(frozen=True)
class RunConfig:
    """Validated solve configuration (datum, params, solver, grid, outputs)."""

    datum: field.InitialDatum
    params: field.ModelParams
    solver: charge.SolverConfig
    grid: GridSpec
    directory: Optional[str] = None
    samples: int = 25


def _check_keys(block, allowed, path):
    unknown = sorted(set(block) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in [{path}] "
                          f"(allowed: {sorted(allowed)})")


def _as_complex(value, path):
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2 and \
            all(isinstance(v, (int, float)) for v in value):
        return complex(value[0], value[1])
    raise ConfigError(f"{path} must be a number or [re, im], got {value!r}")


def _as_number(value, path):
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(f"{path} must be a number, got {value!r}")
    return float(value)


def _parse_regular(block):
    _check_keys(block, {"kind", "amplitude", "width"}, "datum.regular")
    kind = block.get("kind", "gaussian")
    if kind != "gaussian":
        raise ConfigError(f"datum.regular.kind must be 'gaussian', got {kind!r}")
    return field.GaussianProfile(
        amplitude=_as_complex(block.get("amplitude", 1.0),
                              "datum.regular.amplitude"),
        width=_as_number(block.get("width", 1.0), "datum.regular.width"))


def _parse_datum(block):
    _check_keys(block, {"lam", "q0", "eps", "regular"}, "datum")
    regular = None
    if "regular" in block:
        if not isinstance(block["regular"], dict):
            raise ConfigError("datum.regular must be a table/object")
        regular = _parse_regular(block["regular"])
    return field.InitialDatum(
        lam=_as_number(block.get("lam", 1.0), "datum.lam"),
        q0=_as_complex(block.get("q0", 0.0), "datum.q0"),
        regular=regular,
        eps=_as_number(block.get("eps", 0.5), "datum.eps"))


def _parse_params(block):
    _check_keys(block, {"sigma", "beta0", "allow_subcritical"}, "params")
    allow = block.get("allow_subcritical", False)
    if not isinstance(allow, bool):
        raise ConfigError("params.allow_subcritical must be a boolean")
    return field.ModelParams(
        sigma=_as_number(block.get("sigma", 1.0), "params.sigma"),
        beta0=_as_number(block.get("beta0", 1.0), "params.beta0"),
        allow_subcritical=allow)


_SOLVER_FIELDS = ("step_init", "step_min", "step_growth", "step_target_rel",
                  "picard_tol", "picard_max_iters", "blowup_threshold",
                  "refinement_levels")


def _parse_solver(block):
    _check_keys(block, set(_SOLVER_FIELDS), "solver")
    kwargs = {}
    for name in _SOLVER_FIELDS:
        if name in block:
            if name in ("picard_max_iters", "refinement_levels"):
                if not isinstance(block[name], int):
                    raise ConfigError(f"solver.{name} must be an integer")
                kwargs[name] = block[name]
            else:
                kwargs[name] = _as_number(block[name], f"solver.{name}")
    return charge.SolverConfig(**kwargs)


def _parse_grid(block):
    _check_keys(block, {"t_max", "kind", "nodes", "ratio"}, "grid")
    if "t_max" not in block:
        raise ConfigError("grid.t_max is required")
    kind = block.get("kind", "adaptive")
    if kind not in ("adaptive", "geometric"):
        raise ConfigError(f"grid.kind must be 'adaptive' or 'geometric', "
                          f"got {kind!r}")
    nodes = block.get("nodes", 512)
    if not isinstance(nodes, int) or nodes < 2:
        raise ConfigError("grid.nodes must be an integer >= 2")
    spec = GridSpec(t_max=_as_number(block["t_max"], "grid.t_max"),
                    kind=kind, nodes=nodes,
                    ratio=_as_number(block.get("ratio", 0.7), "grid.ratio"))
    if spec.t_max <= 0.0:
        raise ConfigError("grid.t_max must be > 0")
    return spec


def _parse_outputs(block):
    _check_keys(block, {"directory", "samples"}, "outputs")
    directory = block.get("directory")
    if directory is not None and not isinstance(directory, str):
        raise ConfigError("outputs.directory must be a string")
    samples = block.get("samples", 25)
    if not isinstance(samples, int) or samples < 2:
        raise ConfigError("outputs.samples must be an integer >= 2")
    return directory, samples


def parse_run_config(raw):
    """Validate a parsed TOML/JSON mapping into a RunConfig.

    Unknown keys anywhere are rejected with a field path diagnostic.
    """
    if not isinstance(raw, dict):
        raise ConfigError("run config must be a table/object at top level")
    _check_keys(raw, {"datum", "params", "solver", "grid", "outputs"}, "root")
    for name in ("datum", "params", "grid"):
        if name not in raw:
            raise ConfigError(f"missing required section [{name}]")
        if not isinstance(raw[name], dict):
            raise ConfigError(f"[{name}] must be a table/object")
    directory, samples = _parse_outputs(raw.get("outputs", {}))
    try:
        return RunConfig(datum=_parse_datum(raw["datum"]),
                         params=_parse_params(raw["params"]),
                         solver=_parse_solver(raw.get("solver", {})),
                         grid=_parse_grid(raw["grid"]),
                         directory=directory, samples=samples)
    except DomainError as exc:
        # Field-level invariant violations surface as config errors here.
        raise ConfigError(str(exc)) from exc


def load_run_config(path):
    """Read a TOML (default) or JSON run config file."""
    try:
        with open(path, "rb") as fh:
            if str(path).endswith(".json"):
                raw = json.load(fh)
            else:
                raw = tomllib.load(fh)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return parse_run_config(raw)


# ---------------------------------------------------------------------------
# Solve execution


def _solve_once(config, solver):
    if config.grid.kind == "geometric":
        grid = ops.TimeGrid.geometric(config.grid.t_max, config.grid.nodes,
                                      ratio=config.grid.ratio)
        return charge.solve_charge(config.datum, config.params, solver, grid)
    return charge.continue_until(config.datum, config.params, solver,
                                 config.grid.t_max)


def _refined_grid_spec(spec):
    return GridSpec(t_max=spec.t_max, kind=spec.kind, nodes=2 * spec.nodes,
                    ratio=spec.ratio)


def _write_csv(path, records):
    with open(path, "w") as fh:
        fh.write("t,q_re,q_im,abs_q,mass,energy,residual\n")
        for r in records:
            fh.write(",".join((_fmt(r.t), _fmt(r.q.real), _fmt(r.q.imag),
                               _fmt(abs(r.q)), _fmt(r.mass), _fmt(r.energy),
                               _fmt(abs(r.boundary_residual)))) + "\n")


def _level_summary(traj, obs, csv_name):
    status = traj.status
    out = {
        "status": "blowup" if isinstance(status, charge.BlowUp)
        else "completed",
        "t_end": float(traj.grid.t_max),
        "n_nodes": len(traj.grid),
        "sup_q": float(np.max(np.abs(traj.q))),
        "residual_sup": float(traj.residual_sup),
        "E0": float(obs.records[0].energy),
        "mass0": float(obs.records[0].mass),
        "mass_drift": obs.mass_drift,
        "energy_drift": obs.energy_drift,
        "max_boundary_residual": obs.max_boundary_residual,
        "trajectory_csv": csv_name,
    }
    if isinstance(status, charge.BlowUp):
        out["T_star"] = float(status.t_star)
        out["blowup_window"] = [float(status.window[0]),
                                float(status.window[1])]
    return out


def execute_run(config, out_dir, refine_levels=0):
    """Solve (plus optional refinement levels) and write CSV/JSON artifacts.

    Returns the summary dict that was written to summary.json.  Each level
    halves the adaptive step targets (or doubles the fixed grid) so
    convergence of sup_q, T*, and the drifts can be read off the summary.
    """
    os.makedirs(out_dir, exist_ok=True)
    solver = config.solver
    grid_spec = config.grid
    levels = []
    for level in range(refine_levels + 1):
        cfg = RunConfig(datum=config.datum, params=config.params,
                        solver=solver, grid=grid_spec,
                        directory=config.directory, samples=config.samples)
        traj = _solve_once(cfg, solver)
        obs = field.observables(config.datum, config.params, traj,
                                field.ObservableConfig(count=config.samples))
        csv_name = "solve.csv" if level == 0 else f"solve_refine{level}.csv"
        _write_csv(os.path.join(out_dir, csv_name), obs.records)
        levels.append(_level_summary(traj, obs, csv_name))
        solver = solver.refined()
        grid_spec = _refined_grid_spec(grid_spec)
    summary = dict(levels[0])
    summary["refinement_levels"] = levels[1:]
    summary["files"] = sorted([lev["trajectory_csv"] for lev in levels]
                              + ["summary.json"])
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return summary


def _resolve_out_dir(cli_value, config_value):
    if cli_value:
        return cli_value
    if config_value:
        return config_value
    return os.environ.get(OUT_DIR_ENV, ".")


# ---------------------------------------------------------------------------
# Command group


@click.group()
def main():
    """Point-concentrated NLS charge solver and verification toolkit."""


def _guarded(fn):
    try:
        return fn()
    except (ConfigError, DomainError, TailBoundError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except (SolverError, ConvergenceError, ResolutionError) as exc:
        click.echo(f"solver error: {exc}", err=True)
        sys.exit(EXIT_SOLVER)
    except PointNLSError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


_KERNEL_FUNCS = {
    "I": lambda t, lam: complex(specfun.volterra_I(t)),
    "N": lambda t, lam: complex(specfun.volterra_N(t)),
    "K0": lambda t, lam: complex(specfun.macdonald_K0(t)),
    "sici": lambda t, lam: complex(*specfun.sici(t)),
    "Q": lambda t, lam: complex(specfun.q_series(lam, t)),
}


@main.command("kernel-table")
@click.option("--function", "fn_name", required=True,
              type=click.Choice(sorted(_KERNEL_FUNCS)),
              help="I, N, K0 (value_im = 0); sici (value_re = si, "
                   "value_im = ci); Q (lam from --lam).")
@click.option("--tmin", type=float, required=True)
@click.option("--tmax", type=float, required=True)
@click.option("--points", type=int, default=64, show_default=True)
@click.option("--log-spacing/--linear-spacing", default=True,
              show_default=True)
@click.option("--lam", type=float, default=1.0, show_default=True,
              help="lambda parameter of Q(lam; t).")
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Output CSV path (default: stdout).")
def kernel_table_cmd(fn_name, tmin, tmax, points, log_spacing, lam, out):
    """Tabulate a kernel function as CSV `t,value_re,value_im`."""

    def run():
        if not (0.0 < tmin < tmax):
            raise ConfigError(f"need 0 < tmin < tmax, got {tmin}, {tmax}")
        if points < 2:
            raise ConfigError("--points must be >= 2")
        ts = (np.geomspace(tmin, tmax, points) if log_spacing
              else np.linspace(tmin, tmax, points))
        fn = _KERNEL_FUNCS[fn_name]
        lines = ["t,value_re,value_im"]
        for t in ts:
            v = fn(float(t), lam)
            lines.append(f"{_fmt(t)},{_fmt(v.real)},{_fmt(v.imag)}")
        text = "\n".join(lines) + "\n"
        if out:
            with open(out, "w") as fh:
                fh.write(text)
        else:
            click.echo(text, nl=False)

    _guarded(run)


@main.command("solve")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="TOML (or .json) run configuration.")
@click.option("--out-dir", type=click.Path(file_okay=False), default=None,
              help=f"Output directory (default: outputs.directory, then "
                   f"${OUT_DIR_ENV}, then '.').")
@click.option("--refine", "refine_levels", type=int, default=0,
              show_default=True,
              help="Extra refinement levels solved for convergence checks.")
def solve_cmd(config_path, out_dir, refine_levels):
    """Solve one run config; write solve.csv and summary.json."""

    def run():
        if refine_levels < 0:
            raise ConfigError("--refine must be >= 0")
        config = load_run_config(config_path)
        target = _resolve_out_dir(out_dir, config.directory)
        summary = execute_run(config, target, refine_levels)
        click.echo(f"status={summary['status']} sup_q={summary['sup_q']:.6g} "
                   f"out={target}")

    _guarded(run)


def _scan_cell(args):
    """One scan cell (runs in a worker process; no shared state)."""
    config, beta0, sigma, cell_dir = args
    params = field.ModelParams(sigma=sigma, beta0=beta0,
                               allow_subcritical=config.params.allow_subcritical)
    cell_cfg = RunConfig(datum=config.datum, params=params,
                         solver=config.solver, grid=config.grid,
                         directory=config.directory, samples=config.samples)
    summary = execute_run(cell_cfg, cell_dir, refine_levels=0)
    summary["beta0"] = beta0
    summary["sigma"] = sigma
    return summary


def _parse_float_list(text, name):
    try:
        values = [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"{name} must be comma-separated numbers: {exc}")
    if not values:
        raise ConfigError(f"{name} must contain at least one value")
    return values


@main.command("scan")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Base run configuration; params are overridden per cell.")
@click.option("--beta0-list", required=True,
              help="Comma-separated beta0 values, e.g. '-1,0,1'.")
@click.option("--sigma-list", required=True,
              help="Comma-separated sigma values, e.g. '1'.")
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Concurrent cells (independent solves, no shared state).")
@click.option("--out-dir", type=click.Path(file_okay=False), default=None)
def scan_cmd(config_path, beta0_list, sigma_list, jobs, out_dir):
    """Parameter scan: one summary per (beta0, sigma) cell."""

    def run():
        if jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        config = load_run_config(config_path)
        betas = _parse_float_list(beta0_list, "--beta0-list")
        sigmas = _parse_float_list(sigma_list, "--sigma-list")
        root = _resolve_out_dir(out_dir, config.directory)
        os.makedirs(root, exist_ok=True)
        tasks = []
        for beta0 in betas:
            for sigma in sigmas:
                cell = f"beta0_{beta0:g}_sigma_{sigma:g}"
                tasks.append((config, beta0, sigma, os.path.join(root, cell)))
        if jobs == 1 or len(tasks) == 1:
            summaries = [_scan_cell(task) for task in tasks]
        else:
            with concurrent.futures.ProcessPoolExecutor(
                    max_workers=min(jobs, len(tasks))) as pool:
                summaries = list(pool.map(_scan_cell, tasks))
        manifest = {
            "cells": summaries,
            "files": sorted(os.path.relpath(os.path.join(t[3], name), root)
                            for t in tasks
                            for name in ("solve.csv", "summary.json")),
        }
        with open(os.path.join(root, "scan_summary.json"), "w") as fh:
            json.dump(manifest, fh, sort_keys=True, indent=2)
            fh.write("\n")
        for s in summaries:
            click.echo(f"beta0={s['beta0']:g} sigma={s['sigma']:g} "
                       f"status={s['status']} sup_q={s['sup_q']:.6g}")

    _guarded(run)


@main.command("verify")
@click.option("--suite", "suites", multiple=True,
              type=click.Choice(sorted(oracle.VERIFY_SUITES) + ["all"]),
              default=("all",), show_default=True)
def verify_cmd(suites):
    """Run oracle verification suites; print a pass/fail table."""

    def run():
        names = sorted(oracle.VERIFY_SUITES) if "all" in suites \
            else list(dict.fromkeys(suites))
        failures = 0
        for name in names:
            click.echo(f"[{name}]")
            for report, tol in oracle.VERIFY_SUITES[name]():
                line = report.line(tol)
                failures += line.startswith("FAIL")
                click.echo(f"  {line}")
        click.echo(f"{failures} failure(s)" if failures else "all checks passed")
        if failures:
            sys.exit(1)

    _guarded(run)


if __name__ == "__main__":
    main()
