"""Command-line front end: run configured flows, tabulate kernels, re-certify.

Commands:

    lgflow run <config.json>                      evolve + write CSV/JSON outputs
    lgflow table <lagrangian.json> <samples.csv>  dump f, f0, f* rows to stdout
    lgflow certify <state.csv> <flux.csv> <config.json>   re-check one step

Exit codes: 0 all certificates pass, 2 any certificate failure or a
non-converged step, 1 malformed configuration or I/O trouble.

The configuration is one JSON object:

    {
      "problem": {
        "grid":       {"cells": [256], "spacing": [0.00390625]},
        "lagrangian": {"kind": "tv", "weights": null, "spatial_weight": null},
        "bc":         {"kind": "neumann"}
                      | {"kind": "dirichlet", "datum": <number | expression>},
        "initial":    <expression> | {"csv": "<path>"},
        "tau":        <number>            (or "schedule": [..]; default T/256)
        "horizon":    <number>
      },
      "solver": {
        "max_iterations": 20000, "tolerance": 1e-6,
        "dual_step": null, "primal_step": null,
        "relaxation": 1.0, "accelerate": true, "check_every": 25,
        "steady_tolerance": null        (detection-only; defaults to tolerance)
      },
      "outputs": {"directory": "out", "state_every": 1, "store_flux": false}
    }

Expressions follow the documented grammar (constants, coordinates x/y,
step, abs, min/max, + - * /). Set LGFLOW_THREADS to pin the BLAS thread
count. Outputs are byte-deterministic for identical configurations: CSV
values carry 17 significant digits and JSON keys are sorted.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path


class ConfigError(ValueError):
    """Configuration problem; the message names the offending field."""


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise ConfigError(f"{where}.{key}: missing required field")
    return obj[key]


def _positive(value, where: str) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected a number, got {value!r}") from None
    if not v > 0:
        raise ConfigError(f"{where}: must be > 0, got {value!r}")
    return v


def _load_json(path, where: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"{where}: file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{where}: invalid JSON ({e})") from None


def _build_problem(cfg: dict, base_dir: Path):
    from .expressions import ExpressionError, compile_expression
    from .flow import FlowProblem
    from .grid import BoundaryCondition, GridSpec, ScalarField, read_scalar
    from .lagrangian import LagrangianSpec

    import numpy as np

    prob = _require(cfg, "problem", "config")
    gspec = _require(prob, "grid", "problem")
    cells = _require(gspec, "cells", "problem.grid")
    spacing = _require(gspec, "spacing", "problem.grid")
    try:
        grid = GridSpec(tuple(cells), tuple(spacing))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"problem.grid: {e}") from None

    lag_obj = _require(prob, "lagrangian", "problem")
    try:
        lagrangian = LagrangianSpec.from_json(lag_obj)
    except (TypeError, ValueError, ExpressionError) as e:
        raise ConfigError(f"problem.lagrangian: {e}") from None

    bc_obj = _require(prob, "bc", "problem")
    kind = _require(bc_obj, "kind", "problem.bc")
    if kind == "neumann":
        bc = BoundaryCondition.neumann()
    elif kind == "dirichlet":
        datum = _require(bc_obj, "datum", "problem.bc")
        try:
            if isinstance(datum, str):
                datum = compile_expression(datum)
            bc = BoundaryCondition.dirichlet(grid, datum)
        except (TypeError, ValueError, ExpressionError) as e:
            raise ConfigError(f"problem.bc.datum: {e}") from None
    else:
        raise ConfigError(f"problem.bc.kind: unknown kind {kind!r}")

    initial = _require(prob, "initial", "problem")
    if isinstance(initial, dict):
        path = _require(initial, "csv", "problem.initial")
        full = Path(path)
        if not full.is_absolute():
            full = base_dir / full
        if not full.exists():
            raise ConfigError(f"problem.initial.csv: no such file: {full}")
        u0 = read_scalar(full)
        if u0.grid.cells != grid.cells:
            raise ConfigError("problem.initial.csv: grid mismatch with problem.grid")
        u0 = ScalarField(grid, u0.values)
    elif isinstance(initial, str):
        try:
            fn = compile_expression(initial)
            u0 = ScalarField(grid, np.asarray(fn(*grid.cell_centers()), float))
        except (ExpressionError, ValueError) as e:
            raise ConfigError(f"problem.initial: {e}") from None
    else:
        raise ConfigError("problem.initial: expected an expression or {'csv': path}")

    horizon = _positive(_require(prob, "horizon", "problem"), "problem.horizon")
    tau = prob.get("tau")
    schedule = prob.get("schedule")
    if tau is not None:
        tau = _positive(tau, "problem.tau")
    if schedule is not None:
        schedule = tuple(
            _positive(t, f"problem.schedule[{i}]") for i, t in enumerate(schedule)
        )
    try:
        return FlowProblem(
            grid=grid,
            lagrangian=lagrangian,
            bc=bc,
            u0=u0,
            horizon=horizon,
            tau=tau,
            schedule=schedule,
        )
    except ValueError as e:
        raise ConfigError(f"problem: {e}") from None


def _build_options(cfg: dict):
    from .resolvent import SolverOptions

    sol = cfg.get("solver", {})
    opts = SolverOptions()
    mapping = {
        "max_iterations": int,
        "tolerance": float,
        "dual_step": float,
        "primal_step": float,
        "relaxation": float,
        "check_every": int,
        "accelerate": bool,
    }
    for key, cast in mapping.items():
        if key in sol and sol[key] is not None:
            try:
                setattr(opts, key, cast(sol[key]))
            except (TypeError, ValueError):
                raise ConfigError(f"solver.{key}: bad value {sol[key]!r}") from None
    try:
        opts.validate()
    except ValueError as e:
        raise ConfigError(f"solver: {e}") from None
    steady = sol.get("steady_tolerance")
    if steady is not None:
        steady = _positive(steady, "solver.steady_tolerance")
    return opts, steady


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def cmd_run(config_path: str) -> int:
    from . import flow as _flow
    from .grid import inner_product, write_flux, write_scalar
    from .resolvent import SolverOptions

    base_dir = Path(config_path).resolve().parent
    cfg = _load_json(config_path, "config")
    problem = _build_problem(cfg, base_dir)
    opts, steady_tol = _build_options(cfg)

    out_cfg = cfg.get("outputs", {})
    out_dir = Path(out_cfg.get("directory", "out"))
    if not out_dir.is_absolute():
        out_dir = base_dir / out_dir
    state_every = int(out_cfg.get("state_every", 1))
    if state_every < 1:
        raise ConfigError("outputs.state_every: must be >= 1")
    store_flux = bool(out_cfg.get("store_flux", False))
    out_dir.mkdir(parents=True, exist_ok=True)

    try:
        traj = _flow.evolve(problem, opts, store_flux=store_flux)
    except _flow.NonConvergedStepError as e:
        print(f"lgflow: {e}", file=sys.stderr)
        return 2

    n_steps = len(traj.step_norms)
    for k in range(n_steps + 1):
        if k % state_every == 0 or k == n_steps:
            write_scalar(traj.states[k], out_dir / f"state_{k:06d}.csv")
    if store_flux and traj.fluxes is not None:
        for k, z in enumerate(traj.fluxes, start=1):
            write_flux(z, out_dir / f"flux_{k:06d}.csv")

    certs = [
        dict(step=k + 1, time=traj.times[k + 1], **traj.certificates[k].to_json())
        for k in range(n_steps)
    ]
    _dump_json(out_dir / "certificates.json", certs)

    mean0 = inner_product(traj.states[0], _ones_like(traj.states[0]))
    drift = max(
        (
            abs(inner_product(s, _ones_like(s)) - mean0)
            for s in traj.states
        ),
        default=0.0,
    )
    detect_opts = SolverOptions(
        tolerance=steady_tol if steady_tol is not None else opts.tolerance
    )
    steady = _flow.steady_state(traj, detect_opts)
    summary = {
        "final_time": traj.times[-1],
        "final_energy": traj.energies[-1],
        "max_gap": max((c.gap for c in traj.certificates), default=0.0),
        "conserved_mean_drift": drift,
    }
    if steady is not None:
        summary["steady_state_time"] = steady[1]
    _dump_json(out_dir / "summary.json", summary)

    all_pass = all(c.passed for c in traj.certificates)
    return 0 if all_pass else 2


def _ones_like(field):
    from .grid import ScalarField

    import numpy as np

    return ScalarField(field.grid, np.ones(field.grid.cells))


def cmd_table(lagrangian_path: str, samples_path: str) -> int:
    from .lagrangian import LagrangianSpec

    import numpy as np

    spec = LagrangianSpec.from_json(_load_json(lagrangian_path, "lagrangian"))
    try:
        rows = [
            [float(v) for v in line.split(",")]
            for line in Path(samples_path).read_text().strip().splitlines()
            if line.strip()
        ]
    except (FileNotFoundError, ValueError) as e:
        raise ConfigError(f"samples: {e}") from None
    if not rows:
        raise ConfigError("samples: no sample points")
    dim = len(rows[0])
    if any(len(r) != dim for r in rows):
        raise ConfigError("samples: inconsistent component counts")
    x0 = [0.0] * dim
    lam = 1e-6  # prox-derived subgradient: (xi - prox(xi, lam)) / lam
    header = [f"xi{k}" for k in range(dim)] + ["f", "f0", "fstar", "fy_residual"]
    print(",".join(header))
    for xi in rows:
        xi_arr = np.asarray(xi, float)
        f = spec.value(x0, xi_arr)
        f0 = spec.asymptotic(x0, xi_arr)
        fstar = spec.conjugate(x0, xi_arr)
        zeta = (xi_arr - spec.prox_primal(x0, xi_arr, lam)) / lam
        fy = spec.fenchel_young_residual(x0, xi_arr, zeta)
        cells = [f"{v:.17g}" for v in xi] + [
            f"{f:.17g}",
            f"{f0:.17g}",
            f"{fstar:.17g}",
            f"{fy:.17g}",
        ]
        print(",".join(cells))
    return 0


def cmd_certify(state_path: str, flux_path: str, config_path: str) -> int:
    from .certify import certify_step
    from .grid import read_flux, read_scalar
    from .resolvent import ResolventProblem

    base_dir = Path(config_path).resolve().parent
    cfg = _load_json(config_path, "config")
    flow_problem = _build_problem(cfg, base_dir)
    opts, _ = _build_options(cfg)
    try:
        u = read_scalar(state_path)
        z = read_flux(flux_path)
    except (FileNotFoundError, ValueError) as e:
        raise ConfigError(f"fields: {e}") from None
    if u.grid.cells != flow_problem.grid.cells:
        raise ConfigError("state: grid mismatch with configuration")
    taus = flow_problem.step_sizes()
    problem = ResolventProblem(
        grid=flow_problem.grid,
        lagrangian=flow_problem.lagrangian,
        bc=flow_problem.bc,
        g=flow_problem.u0,
        tau=taus[0],
    )
    report = certify_step(problem, u, z, opts.tolerance)
    print(json.dumps(report.to_json(), sort_keys=True, indent=2))
    return 0 if report.passed else 2


def main(argv=None) -> int:
    threads = os.environ.get("LGFLOW_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)

    parser = argparse.ArgumentParser(
        prog="lgflow",
        description="Certified implicit-Euler flows of linear-growth energies.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a configured flow")
    p_run.add_argument("config")
    p_tab = sub.add_parser("table", help="tabulate f, f0, f* at sample points")
    p_tab.add_argument("lagrangian")
    p_tab.add_argument("samples")
    p_cert = sub.add_parser("certify", help="re-certify a stored (state, flux) pair")
    p_cert.add_argument("state")
    p_cert.add_argument("flux")
    p_cert.add_argument("config")
    args = parser.parse_args(argv)

    try:
        if args.command == "run":
            return cmd_run(args.config)
        if args.command == "table":
            return cmd_table(args.lagrangian, args.samples)
        return cmd_certify(args.state, args.flux, args.config)
    except ConfigError as e:
        print(f"lgflow: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"lgflow: i/o error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
