# Command-line front end: config-driven runs emitting CSV/JSON artifacts.
#
# Exit codes: 0 success, 2 config/usage error, 3 numerical failure.

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np
import jsonschema

from . import __version__
from .mesh import Mesh, Partition, MeshArgumentError
from .field import (CoefficientField, ScalarField, FieldArgumentError,
                    FieldInvariantError, write_field_csv, read_field_csv)
from .forward import RightHandSide, SolverError, solve_1d, solve_fd_2d
from .positivity import (compute_weight, fit_pc_beta, DegenerateFitError,
                         write_envelope_csv)
from .mollify import MollifierSpec, mollify, approximation_functional, ResolutionError
from .recovery import (recover_pwc, recover_1d, RecoveryFailureError,
                       MalformedInputError, AmbiguousPivotError)
from .experiments import (coefficient_family, stability_scan, write_samples_csv,
                          PIVOT_ALPHA0, FAMILY_TAGS)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# Config schemas. additionalProperties is false everywhere: unknown keys are
# rejected by name before any compute starts.

_MESH_SCHEMA = {
    "type": "object",
    "properties": {
        "dim": {"enum": [1, 2]},
        "n": {"type": "integer", "minimum": 2},
    },
    "required": ["dim", "n"],
    "additionalProperties": False,
}

_COEFFICIENT_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["constant", "pwc", "fourier", "step", "file"]},
        "value": {"type": "number"},
        "lambda": {"type": "number", "exclusiveMinimum": 0},
        "Lambda": {"type": "number", "exclusiveMinimum": 0},
        "partition_n": {"type": "integer", "minimum": 1},
        "values": {"type": "array", "items": {"type": "number"}},
        "seed": {"type": "integer", "minimum": 0},
        "k_max": {"type": "integer", "minimum": 1},
        "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "path": {"type": "string"},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

_RHS_SCHEMA = {
    "type": "object",
    "properties": {
        "constant": {"type": "number"},
        "point_masses": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "number"},
                      "minItems": 2, "maxItems": 2},
        },
    },
    "additionalProperties": False,
}

_SOLVER_SCHEMA = {
    "type": "object",
    "properties": {
        "tol": {"type": "number", "exclusiveMinimum": 0},
        "max_iter": {"type": "integer", "minimum": 1},
    },
    "additionalProperties": False,
}

SCHEMAS = {
    "solve": {
        "type": "object",
        "properties": {
            "mesh": _MESH_SCHEMA,
            "coefficient": _COEFFICIENT_SCHEMA,
            "rhs": _RHS_SCHEMA,
            "solver": _SOLVER_SCHEMA,
        },
        "required": ["mesh", "coefficient", "rhs"],
        "additionalProperties": False,
    },
    "recover": {
        "type": "object",
        "properties": {
            "mesh": _MESH_SCHEMA,
            "mode": {"enum": ["pwc", "1d"]},
            "u_file": {"type": "string"},
            "rhs": _RHS_SCHEMA,
            "partition_n": {"type": "integer", "minimum": 1},
            "w_excl": {"type": "number", "exclusiveMinimum": 0},
            "lambda": {"type": "number", "exclusiveMinimum": 0},
            "Lambda": {"type": "number", "exclusiveMinimum": 0},
        },
        "required": ["mesh", "mode", "u_file", "rhs", "lambda", "Lambda"],
        "additionalProperties": False,
    },
    "scan": {
        "type": "object",
        "properties": {
            "mesh": _MESH_SCHEMA,
            "solver": _SOLVER_SCHEMA,
            "experiment": {
                "type": "object",
                "properties": {
                    "family": {"enum": list(FAMILY_TAGS)},
                    "seeds": {"type": "array", "items": {"type": "integer"}},
                    "n_pairs": {"type": "integer", "minimum": 1},
                    "floor": {"type": "number", "exclusiveMinimum": 0},
                    "partition_n": {"type": "integer", "minimum": 1},
                    "eps_min": {"type": "number", "exclusiveMinimum": 0},
                    "eps_max": {"type": "number", "exclusiveMinimum": 0},
                    "lambda": {"type": "number", "exclusiveMinimum": 0},
                    "Lambda": {"type": "number", "exclusiveMinimum": 0},
                },
                "required": ["family", "seeds"],
                "additionalProperties": False,
            },
        },
        "required": ["mesh", "experiment"],
        "additionalProperties": False,
    },
    "pcfit": {
        "type": "object",
        "properties": {
            "mesh": _MESH_SCHEMA,
            "coefficient": _COEFFICIENT_SCHEMA,
            "rhs": _RHS_SCHEMA,
            "solver": _SOLVER_SCHEMA,
            "fit": {
                "type": "object",
                "properties": {"n_bins": {"type": "integer", "minimum": 4}},
                "required": ["n_bins"],
                "additionalProperties": False,
            },
        },
        "required": ["mesh", "coefficient", "rhs", "fit"],
        "additionalProperties": False,
    },
    "mollcheck": {
        "type": "object",
        "properties": {
            "mesh": _MESH_SCHEMA,
            "field": {"enum": ["step", "smooth"]},
            "kernel": {"enum": ["box", "bump"]},
            "t_min_cells": {"type": "number", "minimum": 2},
            "t_max": {"type": "number", "exclusiveMinimum": 0},
            "n_t": {"type": "integer", "minimum": 3},
        },
        "required": ["mesh", "field"],
        "additionalProperties": False,
    },
}


def _config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def _load_config(path, command: str) -> dict:
    try:
        with open(path) as f:
            config = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    try:
        jsonschema.validate(config, SCHEMAS[command])
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "top level"
        raise ConfigError(f"bad config at {where}: {exc.message}")
    return config


def _write_json(path, payload: dict):
    with open(path, "w") as f:
        json.dump(payload, f, sort_keys=True, indent=2)
        f.write("\n")


def _build_mesh(config) -> Mesh:
    return Mesh(config["mesh"]["dim"], config["mesh"]["n"])


def _build_coefficient(config, mesh: Mesh) -> CoefficientField:
    spec = config["coefficient"]
    kind = spec["kind"]
    lam = spec.get("lambda")
    Lam = spec.get("Lambda")
    if kind == "step":
        lam = 0.4 if lam is None else lam
        Lam = 1.1 if Lam is None else Lam
        alpha = spec.get("alpha", PIVOT_ALPHA0)
        x = mesh.cell_centers_1d()
        if mesh.dim != 1:
            raise ConfigError("step coefficient is dim-1 only")
        return CoefficientField(mesh, np.where(x < alpha, 1.0, 0.5), lam, Lam)
    if lam is None or Lam is None:
        raise ConfigError(f"{kind} coefficient needs 'lambda' and 'Lambda'")
    if kind == "constant":
        if "value" not in spec:
            raise ConfigError("constant coefficient needs 'value'")
        return CoefficientField.constant(mesh, spec["value"], lam, Lam)
    if kind == "file":
        if "path" not in spec:
            raise ConfigError("file coefficient needs 'path'")
        try:
            values = read_field_csv(spec["path"], mesh, "cells")
        except FileNotFoundError:
            raise ConfigError(f"coefficient file not found: {spec['path']}")
        return CoefficientField(mesh, values, lam, Lam)
    if kind == "pwc":
        n = spec.get("partition_n")
        if n is None:
            raise ConfigError("pwc coefficient needs 'partition_n'")
        part = Partition(mesh, n)
        if "values" in spec:
            vals_q = np.asarray(spec["values"], dtype=float)
            if vals_q.shape != (part.n_subcubes,):
                raise ConfigError(
                    f"pwc needs {part.n_subcubes} values, got {vals_q.size}")
        else:
            rng = np.random.default_rng([spec.get("seed", 0)])
            vals_q = rng.uniform(lam, Lam, part.n_subcubes)
        return CoefficientField(mesh, vals_q[part.subcube_of_cells()], lam, Lam)
    # fourier
    rng = np.random.default_rng([spec.get("seed", 0)])
    k_max = spec.get("k_max", 6)
    k = np.arange(1, k_max + 1)
    xi = rng.standard_normal(k_max)
    x = mesh.cell_centers_1d()
    series = np.sum(xi[:, None] * k[:, None] ** -2.0
                    * np.sin(np.pi * k[:, None] * x[None, :]), axis=0)
    if mesh.dim == 2:
        eta = rng.standard_normal(k_max)
        series_y = np.sum(eta[:, None] * k[:, None] ** -2.0
                          * np.sin(np.pi * k[:, None] * x[None, :]), axis=0)
        series = np.add.outer(series, series_y)
    bound = float(np.max(np.abs(series)))
    mid, half = 0.5 * (lam + Lam), 0.5 * (Lam - lam)
    if bound > 0:
        series = series * (0.7 * half / bound)
    return CoefficientField(mesh, mid + series, lam, Lam)


def _build_rhs(config, mesh: Mesh) -> RightHandSide:
    spec = config.get("rhs", {})
    values = np.full(mesh.cell_shape, float(spec.get("constant", 0.0)))
    masses = tuple((loc, w) for loc, w in spec.get("point_masses", []))
    return RightHandSide(mesh, values, point_masses=masses)


def _stamp(config) -> dict:
    return {"config_hash": _config_hash(config), "version": __version__}


# --------------------------------------------------------------------------
# Subcommands

def cmd_solve(config, out: Path) -> int:
    mesh = _build_mesh(config)
    a = _build_coefficient(config, mesh)
    f = _build_rhs(config, mesh)
    solver = config.get("solver", {})
    if mesh.dim == 1:
        u, _, report = solve_1d(a, f)
    else:
        u, report = solve_fd_2d(a, f, tol=solver.get("tol", 1e-10),
                                max_iter=solver.get("max_iter", 50000))
    write_field_csv(out / "u.csv", mesh, u.values, "nodes")
    _write_json(out / "report.json", report.to_json_dict() | _stamp(config))
    return EXIT_OK


def cmd_recover(config, out: Path) -> int:
    mesh = _build_mesh(config)
    try:
        u_values = read_field_csv(config["u_file"], mesh, "nodes")
    except FileNotFoundError:
        raise ConfigError(f"input u missing: {config['u_file']}")
    u = ScalarField(mesh, u_values)
    f = _build_rhs(config, mesh)
    lam, Lam = config["lambda"], config["Lambda"]
    if config["mode"] == "pwc":
        if "partition_n" not in config:
            raise ConfigError("pwc recovery needs 'partition_n'")
        part = Partition(mesh, config["partition_n"])
        rec = recover_pwc(u, f, part, bounds=(lam, Lam))
        rec.write_csv(out / "a_rec.csv")
        payload = {"mode": "pwc", "partition_n": part.n,
                   "n_flagged": sum(fl != "ok" for fl in rec.flags)}
    else:
        rec = recover_1d(u, f, config.get("w_excl"), lam=lam, Lam=Lam)
        write_field_csv(out / "a_rec.csv", mesh, rec.values, "cells")
        payload = {"mode": "1d"} | rec.to_json_dict()
    _write_json(out / "recovery.json", payload | _stamp(config))
    return EXIT_OK


def cmd_scan(config, out: Path, seed_override=None) -> int:
    mesh = _build_mesh(config)
    exp = config["experiment"]
    seeds = [seed_override] if seed_override is not None else exp["seeds"]
    if not seeds:
        raise ConfigError("experiment needs a non-empty seed list")
    solver = config.get("solver", {})
    tol = solver.get("tol", 1e-10)
    floor = exp.get("floor", 1e-8)
    if floor < 10.0 * tol:
        raise ConfigError(f"floor {floor} below 10x solver tol {tol}")
    f = RightHandSide.constant(mesh, 1.0)
    if mesh.dim == 1:
        def solve(a):
            return solve_1d(a, f)[0]
    else:
        def solve(a):
            return solve_fd_2d(a, f, tol=tol,
                               max_iter=solver.get("max_iter", 50000))[0]
    kwargs = {}
    if "n_pairs" in exp:
        kwargs["n_pairs"] = exp["n_pairs"]
    if "partition_n" in exp:
        kwargs["partition_n"] = exp["partition_n"]
    if "eps_min" in exp or "eps_max" in exp:
        kwargs["eps_range"] = (exp.get("eps_min", 1e-3), exp.get("eps_max", 1e-1))
    if "lambda" in exp:
        kwargs["lam"] = exp["lambda"]
    if "Lambda" in exp:
        kwargs["Lam"] = exp["Lambda"]

    def all_pairs():
        for seed in seeds:
            yield from coefficient_family(exp["family"], seed, mesh, **kwargs)

    samples, fit = stability_scan(all_pairs(), solve, floor=floor, solver_tol=tol)
    write_samples_csv(out / "samples.csv", samples)
    _write_json(out / "fit.json", fit.to_json_dict() | _stamp(config))
    return EXIT_OK


def cmd_pcfit(config, out: Path) -> int:
    mesh = _build_mesh(config)
    a = _build_coefficient(config, mesh)
    f = _build_rhs(config, mesh)
    solver = config.get("solver", {})
    if mesh.dim == 1:
        u, _, _ = solve_1d(a, f)
    else:
        u, _ = solve_fd_2d(a, f, tol=solver.get("tol", 1e-10),
                           max_iter=solver.get("max_iter", 50000))
    w = compute_weight(a, u, f)
    fit = fit_pc_beta(w, config["fit"]["n_bins"])
    write_envelope_csv(out / "envelope.csv", fit)
    _write_json(out / "pcfit.json", fit.to_json_dict() | _stamp(config))
    return EXIT_OK


def cmd_mollcheck(config, out: Path) -> int:
    mesh = _build_mesh(config)
    if mesh.dim != 1:
        raise ConfigError("mollcheck runs on dim-1 meshes")
    x = mesh.cell_centers_1d()
    if config["field"] == "step":
        lam, Lam = 1.0, 2.0
        a = CoefficientField(mesh, np.where(x < 0.5, lam, Lam), lam, Lam)
    else:
        a = CoefficientField(mesh, 2.0 + np.sin(2 * np.pi * x), 0.5, 3.5)
    kernel = config.get("kernel", "box")
    t_lo = config.get("t_min_cells", 4) * mesh.h
    t_hi = config.get("t_max", 0.1)
    if t_hi <= t_lo:
        raise ConfigError(f"t range empty: [{t_lo}, {t_hi}]")
    ts = np.geomspace(t_lo, t_hi, config.get("n_t", 8))
    vals = [approximation_functional(a, mollify(a, MollifierSpec(t, kernel)), t)
            for t in ts]
    slope = float(np.polyfit(np.log(ts), np.log(vals), 1)[0])
    with open(out / "moll.csv", "w") as fobj:
        fobj.write("t,functional\n")
        for t, v in zip(ts, vals):
            fobj.write(f"{t:.17g},{v:.17g}\n")
    _write_json(out / "mollcheck.json",
                {"slope": slope, "field": config["field"], "kernel": kernel}
                | _stamp(config))
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "recover": cmd_recover,
    "scan": cmd_scan,
    "pcfit": cmd_pcfit,
    "mollcheck": cmd_mollcheck,
}

_CONFIG_ERRORS = (ConfigError, MeshArgumentError, FieldArgumentError,
                  FieldInvariantError)
_NUMERICAL_ERRORS = (SolverError, DegenerateFitError, RecoveryFailureError,
                     MalformedInputError, AmbiguousPivotError)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="invdiff",
        description="Forward solves, coefficient recovery, positivity fits and "
                    "stability scans for -div(a grad u) = f on the unit cube.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON config file")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--threads", type=int, default=1,
                        help="max internal worker threads (results are "
                             "identical for any value)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the experiment seed list (scan only)")
    args = parser.parse_args(argv)

    if args.threads < 1:
        print(f"invdiff: --threads must be >= 1, got {args.threads}",
              file=sys.stderr)
        return EXIT_CONFIG

    try:
        config = _load_config(args.config, args.command)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "scan":
            return cmd_scan(config, out, seed_override=args.seed)
        return COMMANDS[args.command](config, out)
    except _CONFIG_ERRORS as exc:
        print(f"invdiff: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _NUMERICAL_ERRORS as exc:
        print(f"invdiff: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
