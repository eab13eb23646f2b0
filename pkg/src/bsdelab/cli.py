"""Config-driven experiment runner.

Subcommands::

    bsdelab solve    --config cfg.json --out DIR    backward solve, CSV of t, y_mean, y_min, y_max, z_mean
    bsdelab bounds   --config cfg.json --out DIR    backward ODE bounds, CSV of t, L, U
    bsdelab envelope --config cfg.json --out DIR    driver regularisation sweep, CSV of y, g, envelope
    bsdelab verify   --config cfg.json --out DIR    run the config's checks, reports.csv
    bsdelab suite    [--config cfg.json] --out DIR  run a check suite (default: shipped), one CSV per check

Every run writes a ``run_manifest.json`` embedding the full config, its
SHA-256, the effective seed and library versions; re-running the manifest's
config with the same seed reproduces all CSV artifacts byte for byte.  Exit
codes: 0 all requested checks pass, 1 check failure, 2 config error,
3 runtime error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
from dataclasses import replace
from importlib import resources

import numpy as np

from . import __version__
from .certificates import SampleGrid, check_certificate
from .config import CheckConfig, ConfigError, ModelConfig, RunConfig, load_config
from .envelopes import EnvelopeGrid, LinearGrowthBound, sup_convolution_generator
from .generators import Generator, TerminalCondition, WeightFn
from .ode_bounds import BlowUpError, TimeGrid, sandwich_envelope
from .report import VerificationReport
from .solver import TreeModel, solve_mc_regression, solve_tree
from .verify import (
    comparison_check,
    indicator_premise_check,
    monotone_family_check,
    one_sided_dominance_check,
    sandwich_check,
    transform_residual_check,
    uniqueness_smoke_check,
)

OUT_DIR_ENV = "BSDELAB_OUT"

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_RUNTIME_ERROR = 3


def _atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv(rows, header):
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for cell in row:
            if cell is None:
                cells.append("")
            elif isinstance(cell, float):
                cells.append(repr(cell))
            else:
                cells.append(str(cell))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _write_manifest(out_dir, cfg_raw, seed, outputs, command):
    canonical = json.dumps(cfg_raw, sort_keys=True, separators=(",", ":"))
    manifest = {
        "command": command,
        "config": cfg_raw,
        "config_sha256": hashlib.sha256(canonical.encode()).hexdigest(),
        "seed": seed,
        "versions": {
            "bsdelab": __version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
        },
        "outputs": sorted(outputs),
    }
    _atomic_write(
        os.path.join(out_dir, "run_manifest.json"),
        json.dumps(manifest, indent=2, sort_keys=True) + "\n",
    )


def _solve_with(model: ModelConfig, generator, terminal):
    if model.backend == "tree":
        return solve_tree(
            generator,
            terminal,
            model.steps,
            model.horizon,
            model.scheme,
            z_clamp=model.z_clamp,
            threads=model.threads,
        )
    return solve_mc_regression(
        generator,
        terminal,
        model.steps,
        model.paths,
        model.basis_degree,
        model.seed,
        model.horizon,
        model.scheme,
        z_clamp=model.z_clamp,
        threads=model.threads,
    )


def _solution_rows(sol):
    rows = []
    if sol.backend == "tree":
        tree = TreeModel(sol.grid)
        for i, t in enumerate(sol.grid.nodes):
            w = tree.level_probabilities(i)
            row = np.asarray(sol.y[i])
            z_mean = None
            if i < sol.grid.steps:
                z_mean = float(np.sum(w * np.asarray(sol.z[i])))
            rows.append(
                (float(t), float(np.sum(w * row)), float(np.min(row)), float(np.max(row)), z_mean)
            )
    else:
        for i, t in enumerate(sol.grid.nodes):
            row = np.asarray(sol.y[i])
            z_mean = float(np.mean(sol.z[i])) if i < sol.grid.steps else None
            rows.append((float(t), float(np.mean(row)), float(np.min(row)), float(np.max(row)), z_mean))
    return rows


# ---------------------------------------------------------------------------
# Check registry


def _sub_generator(params, key):
    body = params.get(key)
    if body is None:
        raise ConfigError(key, "missing driver section")
    return Generator.parse(body["expr"])


def _sub_terminal(params, key):
    body = params.get(key)
    if body is None:
        raise ConfigError(key, "missing terminal section")
    return TerminalCondition.parse(
        body["expr"], bound=(float(body["bound"]) if body.get("bound") is not None else None)
    )


def _check_solver_oracle(cfg, check, tol):
    sol = _solve_with(cfg.model, cfg.generator, cfg.terminal)
    expected = float(check.params["expected"])
    gap = abs(sol.y0 - expected)
    return VerificationReport.from_violation(
        name=check.params.get("name", "solver-oracle"),
        claim=f"y_0 matches the closed-form value {expected}",
        violation=gap - tol,
        location={"y0": sol.y0},
        tolerance=0.0,
    )


def _check_comparison(cfg, check, tol):
    sol = _solve_with(cfg.model, cfg.generator, cfg.terminal)
    sol_p = _solve_with(
        cfg.model, _sub_generator(check.params, "generator_prime"), _sub_terminal(check.params, "terminal_prime")
    )
    return comparison_check(sol, sol_p, tol, name=check.params.get("name", "comparison"))


def _check_premise(cfg, check, tol):
    g_p = _sub_generator(check.params, "generator_prime")
    sol = _solve_with(cfg.model, cfg.generator, cfg.terminal)
    sol_p = _solve_with(cfg.model, g_p, _sub_terminal(check.params, "terminal_prime"))
    return indicator_premise_check(
        sol, sol_p, cfg.generator, g_p, check.params.get("which", "along_prime"), tol
    )


def _check_dominance(cfg, check, tol):
    g_p = _sub_generator(check.params, "generator_prime")
    return one_sided_dominance_check(
        cfg.generator,
        g_p,
        float(check.params.get("level", 0.0)),
        check.params.get("side", "below"),
        tol=tol,
    )


def _check_sandwich(cfg, check, tol):
    from .certificates import OneSidedSuperLinear

    cert = cfg.generator.certificate if cfg.generator is not None else None
    if not isinstance(cert, OneSidedSuperLinear):
        raise ConfigError(
            "generator.certificate", "sandwich needs a one_sided_super_linear certificate"
        )
    xi_bound = float(check.params.get("xi_bound", cfg.terminal.bound))
    grid = TimeGrid.uniform(cfg.model.horizon, cfg.model.steps)
    env = sandwich_envelope(xi_bound, cert.u, cert.l, grid)
    sol = _solve_with(cfg.model, cfg.generator, cfg.terminal)
    return sandwich_check(sol, env, tol)


def _check_monotone_family(cfg, check, tol):
    return monotone_family_check(
        cfg.generator,
        cfg.terminal,
        [float(n) for n in check.params.get("n_list", [1, 2, 4, 8])],
        cfg.model.steps,
        cfg.model.horizon,
        cfg.model.scheme,
        tol=tol,
    )


def _check_transform_residual(cfg, check, tol):
    sol = _solve_with(cfg.model, cfg.generator, cfg.terminal)
    return transform_residual_check(
        sol,
        cfg.generator,
        float(check.params.get("gamma", 1.0)),
        residual_coefficient=float(check.params.get("coefficient", 0.05)),
    )


def _check_bounds_oracle(cfg, check, tol):
    section = dict(cfg.bounds or {})
    section.update(check.params)
    grid = TimeGrid.uniform(
        float(section.get("T", cfg.model.horizon)), int(section.get("N", cfg.model.steps))
    )
    env = sandwich_envelope(
        float(section["xi_bound"]), WeightFn.parse(section["u"]), section["l"], grid
    )
    expected = float(section["expected_U0"])
    gap = abs(float(env.upper[0]) - expected)
    return VerificationReport.from_violation(
        name=check.params.get("name", "bounds-oracle"),
        claim=f"U_0 matches the closed-form value {expected}",
        violation=gap - tol,
        location={"U0": float(env.upper[0])},
        tolerance=0.0,
    )


def _check_certificate(cfg, check, tol):
    grid_params = check.params.get("grid", {})
    grid = SampleGrid(
        t_range=(0.0, float(grid_params.get("T", cfg.model.horizon))),
        t_count=int(grid_params.get("t_count", 21)),
        y_range=tuple(grid_params.get("y_range", (-5.0, 5.0))),
        y_count=int(grid_params.get("y_count", 51)),
        z_range=tuple(grid_params.get("z_range", (-5.0, 5.0))),
        z_count=int(grid_params.get("z_count", 51)),
    )
    return check_certificate(cfg.generator, cfg.generator.certificate, grid)


def _check_uniqueness(cfg, check, tol):
    return uniqueness_smoke_check(
        cfg.generator, cfg.terminal, cfg.model.steps, cfg.model.horizon, tol=tol
    )


def _check_envelope_domination(cfg, check, tol):
    params = check.params
    growth = LinearGrowthBound.from_parts(
        params["growth"]["f"], params["growth"]["u"], params["growth"]["v"]
    )
    env = sup_convolution_generator(
        cfg.generator,
        int(params.get("n", 2)),
        WeightFn.parse(params.get("u_w", "1")),
        WeightFn.parse(params.get("v_w", "1")),
        growth=growth,
    )
    rng = np.random.default_rng(cfg.model.seed)
    pts = rng.uniform(-3, 3, size=(int(params.get("points", 25)), 3))
    pts[:, 0] = np.abs(pts[:, 0]) / 3.0 * cfg.model.horizon
    worst = -np.inf
    where = {}
    for t, y, z in pts:
        gap = float(cfg.generator(t, y, z)) - env(t, y, z)
        if gap > worst:
            worst = gap
            where = {"t": float(t), "y": float(y), "z": float(z)}
    return VerificationReport.from_violation(
        name="envelope-domination",
        claim="the regularised driver dominates the driver pointwise",
        violation=worst,
        location=where,
        tolerance=tol,
    )


CHECKS = {
    "solver_oracle": (_check_solver_oracle, 1e-2),
    "comparison": (_check_comparison, 1e-6),
    "premise": (_check_premise, 0.0),
    "dominance": (_check_dominance, 0.0),
    "sandwich": (_check_sandwich, 1e-3),
    "monotone_family": (_check_monotone_family, 1e-9),
    "transform_residual": (_check_transform_residual, 0.0),
    "bounds_oracle": (_check_bounds_oracle, 1e-5),
    "certificate": (_check_certificate, 0.0),
    "uniqueness_smoke": (_check_uniqueness, 5e-3),
    "envelope_domination": (_check_envelope_domination, 0.0),
}


def _effective_config(cfg: RunConfig, check: CheckConfig) -> RunConfig:
    """Per-check generator/terminal/model sections override the top level."""
    p = check.params
    if not any(k in p for k in ("generator", "terminal", "model")):
        return cfg
    raw = dict(cfg.raw)
    if "generator" in p:
        raw["generator"] = p["generator"]
    if "terminal" in p:
        raw["terminal"] = p["terminal"]
    if "model" in p:
        raw["model"] = {**cfg.raw.get("model", {}), **p["model"]}
    eff = RunConfig.from_dict(raw)
    # keep CLI-applied seed/threads authoritative unless the check pins them
    model = eff.model
    if "model" not in p or "seed" not in p.get("model", {}):
        model = replace(model, seed=cfg.model.seed)
    if "model" not in p or "threads" not in p.get("model", {}):
        model = replace(model, threads=cfg.model.threads)
    return RunConfig(
        model=model,
        generator=eff.generator,
        terminal=eff.terminal,
        checks=(),
        bounds=eff.bounds,
        envelope=eff.envelope,
        raw=cfg.raw,
    )


def _run_check(cfg, check: CheckConfig):
    if check.kind not in CHECKS:
        raise ConfigError(f"checks.{check.kind}", f"unknown check kind; know {sorted(CHECKS)}")
    fn, default_tol = CHECKS[check.kind]
    tol = check.tol if check.tol is not None else default_tol
    return fn(_effective_config(cfg, check), check, tol)


def _report_row(check, report):
    matched = report.status == check.expect
    return (
        check.params.get("name", report.name),
        check.kind,
        report.claim,
        report.status,
        check.expect,
        "ok" if matched else "MISMATCH",
        report.violation,
        report.tolerance,
        json.dumps(report.location, sort_keys=True),
        "; ".join(report.notes),
    )


_REPORT_HEADER = (
    "name",
    "kind",
    "claim",
    "status",
    "expect",
    "outcome",
    "violation",
    "tolerance",
    "location",
    "notes",
)


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    model = cfg.model
    if args.seed is not None:
        model = replace(model, seed=int(args.seed))
    if args.threads is not None:
        model = replace(model, threads=int(args.threads))
    checks = cfg.checks
    if args.tol is not None:
        checks = tuple(replace(c, tol=float(args.tol)) for c in checks)
    return RunConfig(
        model=model,
        generator=cfg.generator,
        terminal=cfg.terminal,
        checks=checks,
        bounds=cfg.bounds,
        envelope=cfg.envelope,
        raw=cfg.raw,
    )


def _cmd_solve(cfg, out_dir, quiet):
    if cfg.generator is None or cfg.terminal is None:
        raise ConfigError("generator/terminal", "solve needs both sections")
    sol = _solve_with(cfg.model, cfg.generator, cfg.terminal)
    path = os.path.join(out_dir, "solution.csv")
    _atomic_write(path, _csv(_solution_rows(sol), ("t", "y_mean", "y_min", "y_max", "z_mean")))
    if not quiet:
        print(f"y0 = {sol.y0!r}")
        print(f"wrote {path}")
    return EXIT_OK, ["solution.csv"]


def _cmd_bounds(cfg, out_dir, quiet):
    section = cfg.bounds or {}
    needed = [k for k in ("u", "l", "xi_bound") if k not in section]
    if needed:
        raise ConfigError("bounds", f"missing keys {needed}")
    grid = TimeGrid.uniform(
        float(section.get("T", cfg.model.horizon)), int(section.get("N", cfg.model.steps))
    )
    env = sandwich_envelope(
        float(section["xi_bound"]), WeightFn.parse(section["u"]), section["l"], grid
    )
    rows = [
        (float(t), float(L), float(U))
        for t, L, U in zip(grid.nodes, env.lower, env.upper)
    ]
    path = os.path.join(out_dir, "bounds.csv")
    _atomic_write(path, _csv(rows, ("t", "L", "U")))
    if not quiet:
        print(f"U0 = {env.upper[0]!r}, L0 = {env.lower[0]!r}")
        print(f"wrote {path}")
    return EXIT_OK, ["bounds.csv"]


def _cmd_envelope(cfg, out_dir, quiet):
    section = cfg.envelope or {}
    if cfg.generator is None:
        raise ConfigError("generator", "envelope needs a generator section")
    growth_section = section.get("growth")
    growth = None
    if growth_section:
        growth = LinearGrowthBound.from_parts(
            growth_section.get("f", "0"), growth_section.get("u", "1"), growth_section.get("v", "1")
        )
    env = sup_convolution_generator(
        cfg.generator,
        int(section.get("n", 2)),
        WeightFn.parse(section.get("u_w", "1")),
        WeightFn.parse(section.get("v_w", "1")),
        EnvelopeGrid(
            radius=float(section.get("radius", 100.0)),
            nodes=int(section.get("nodes", 2001)),
            passes=int(section.get("passes", 3)),
        ),
        growth=growth,
    )
    t0 = float(section.get("t", 0.0))
    z0 = float(section.get("z", 0.0))
    ys = np.linspace(
        float(section.get("y_min", -3.0)),
        float(section.get("y_max", 3.0)),
        int(section.get("points", 61)),
    )
    rows = [
        (float(y), float(cfg.generator(t0, y, z0)), env(t0, float(y), z0)) for y in ys
    ]
    path = os.path.join(out_dir, "envelope.csv")
    _atomic_write(path, _csv(rows, ("y", "g", "envelope")))
    if not quiet:
        print(f"wrote {path}")
    return EXIT_OK, ["envelope.csv"]


def _cmd_verify(cfg, out_dir, quiet, per_check_files=False):
    if not cfg.checks:
        raise ConfigError("checks", "verify needs a non-empty checks list")
    rows = []
    outputs = []
    all_matched = True
    for idx, check in enumerate(cfg.checks):
        report = _run_check(cfg, check)
        row = _report_row(check, report)
        rows.append(row)
        matched = report.status == check.expect
        all_matched = all_matched and matched
        if per_check_files:
            label = check.params.get("name", report.name)
            stem = f"check_{idx:02d}_{label.replace(':', '_').replace('/', '_')}.csv"
            _atomic_write(os.path.join(out_dir, stem), _csv([row], _REPORT_HEADER))
            outputs.append(stem)
        if not quiet:
            mark = "ok " if matched else "FAIL"
            print(
                f"[{mark}] {check.params.get('name', report.name)}: status={report.status} "
                f"expected={check.expect} violation={report.violation:.3g}"
            )
    path = os.path.join(out_dir, "reports.csv")
    _atomic_write(path, _csv(rows, _REPORT_HEADER))
    outputs.append("reports.csv")
    return (EXIT_OK if all_matched else EXIT_CHECK_FAILED), outputs


def default_suite_path():
    return resources.files("bsdelab").joinpath("configs/acceptance_suite.json")


def build_parser():
    parser = argparse.ArgumentParser(prog="bsdelab", description=__doc__.split("\n")[0])
    parser.add_argument("subcommand", choices=("solve", "bounds", "envelope", "verify", "suite"))
    parser.add_argument("--config", help="path to the JSON run config")
    parser.add_argument(
        "--out",
        default=None,
        help=f"output directory (default: ${OUT_DIR_ENV} or the working directory)",
    )
    parser.add_argument("--seed", type=int, default=None, help="override model.seed")
    parser.add_argument("--threads", type=int, default=None, help="override model.threads")
    parser.add_argument("--tol", type=float, default=None, help="override every check tolerance")
    parser.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    out_dir = args.out or os.environ.get(OUT_DIR_ENV) or "."
    try:
        if args.config is not None:
            cfg = load_config(args.config)
        elif args.subcommand == "suite":
            with resources.as_file(default_suite_path()) as path:
                cfg = load_config(path)
        else:
            raise ConfigError("--config", "required for this subcommand")
        cfg = _apply_overrides(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    os.makedirs(out_dir, exist_ok=True)
    try:
        if args.subcommand == "solve":
            code, outputs = _cmd_solve(cfg, out_dir, args.quiet)
        elif args.subcommand == "bounds":
            code, outputs = _cmd_bounds(cfg, out_dir, args.quiet)
        elif args.subcommand == "envelope":
            code, outputs = _cmd_envelope(cfg, out_dir, args.quiet)
        elif args.subcommand == "verify":
            code, outputs = _cmd_verify(cfg, out_dir, args.quiet)
        else:
            code, outputs = _cmd_verify(cfg, out_dir, args.quiet, per_check_files=True)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except BlowUpError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME_ERROR
    except Exception as exc:  # noqa: BLE001 - map to the documented exit code
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME_ERROR
    _write_manifest(out_dir, cfg.raw, cfg.model.seed, outputs, args.subcommand)
    return code


if __name__ == "__main__":
    sys.exit(main())
