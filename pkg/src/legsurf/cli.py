"""Command-line entry points and experiment orchestration.

Commands: verify-identities, lift, energy, descend, monotonicity, density,
clifford-demo.  Every command is deterministic given (config, seed); reports
embed the config hash and library version.  Exit statuses: 0 success, 2
validation failure, 3 numerical-check failure, 4 solver abort.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, checks, corpus, energy, gauge_lab, heisenberg as hs
from . import stiefel as st
from .errors import (
    ConstraintViolationError,
    GeometryDomainError,
    ResolutionError,
    StageAbortedError,
)
from .mesh import DiscreteImmersion

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3
EXIT_SOLVER = 4


class ConfigError(ValueError):
    pass


def load_config(path, overrides, schema):
    """Merge a JSON config with CLI overrides and validate against a schema."""
    data = {}
    if path:
        with open(path) as f:
            data = json.load(f)
    data.update({k: v for k, v in overrides.items() if v is not None})
    unknown = set(data) - set(schema)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    out = {}
    for key, (required, default) in schema.items():
        if key in data:
            out[key] = data[key]
        elif required:
            raise ConfigError(f"missing required config key: {key}")
        else:
            out[key] = default
    return out


def config_hash(config):
    canonical = json.dumps(config, sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def report_header(config):
    return {"version": __version__, "config_hash": config_hash(config)}


def write_json(path, payload):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(payload, f, sort_keys=True, indent=1)
        f.write("\n")


def write_csv(path, header_lines, columns, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        for line in header_lines:
            f.write(f"# {line}\n")
        f.write(",".join(columns) + "\n")
        for row in rows:
            f.write(",".join(repr(x) if isinstance(x, float) else str(x) for x in row) + "\n")


def _generate(config):
    family = config["family"]
    kw = {}
    if family in ("flat_patch", "double_sheet"):
        kw = {"n": config["resolution"]}
    elif family == "clifford_lift":
        kw = {"n": config["resolution"], "target": config.get("target", "heisenberg")}
    elif family == "perturbed_clifford":
        kw = {
            "n": config["resolution"],
            "amplitude": config.get("amplitude", 1e-2),
            "seed": config.get("seed", 0),
            "target": config.get("target", "heisenberg"),
        }
    return corpus.generate(family, **kw)


def _load_or_generate(config):
    if config.get("mesh"):
        return DiscreteImmersion.load(config["mesh"])
    if config.get("family"):
        return _generate(config)
    raise ConfigError("config needs either a mesh path or a generator family")


# ---------------------------------------------------------------------------
# commands


def cmd_verify_identities(config, out_dir):
    jh_fn = None
    if config["inject_bug"]:
        def jh_fn(v, w):  # broken copy: sign of the first slot flipped
            return np.asarray(w, float).copy(), np.asarray(v, float).copy()

    results = checks.identity_battery(config["seed"], jh_fn=jh_fn)
    report = report_header(config)
    report["seed"] = config["seed"]
    report["checks"] = [r.to_json() for r in results]
    report["all_passed"] = all(r.passed for r in results)
    write_json(Path(out_dir) / "identities.json", report)
    if not report["all_passed"]:
        failing = [r.name for r in results if not r.passed]
        print(f"FAILED checks: {failing}")
        return EXIT_NUMERIC
    print(f"all {len(results)} identity checks passed")
    return EXIT_OK


def cmd_lift(config, out_dir):
    with open(config["grid"]) as f:
        grid = hs.LagrangianSampleGrid.from_json(json.load(f))
    try:
        lift = hs.legendrian_lift(grid, base_value=config["base_value"])
    except ConstraintViolationError as exc:
        print(f"non-Lagrangian input: {exc}")
        return EXIT_VALIDATION
    payload = report_header(config)
    payload["periods"] = list(lift.periods)
    payload["max_cell_residual"] = float(np.max(np.abs(lift.cell_residuals))) if lift.cell_residuals.size else 0.0
    payload["tolerance"] = lift.tol
    payload["phi"] = [float(x) for x in lift.phi.ravel()]
    payload["grid"] = grid.to_json()
    write_json(Path(out_dir) / "lift.json", payload)
    print(f"lift periods: {lift.periods}")
    return EXIT_OK


def cmd_energy(config, out_dir):
    imm = _load_or_generate(config)
    breakdown = energy.energy(imm, config["epsilon"])
    payload = report_header(config)
    payload.update(
        {
            "area": breakdown.area,
            "penalty": breakdown.penalty,
            "total": breakdown.total,
            "entropy_indicator": breakdown.entropy_indicator,
            "epsilon": config["epsilon"],
        }
    )
    write_json(Path(out_dir) / "energy.json", payload)
    print(f"area={breakdown.area!r} penalty={breakdown.penalty!r}")
    return EXIT_OK


def cmd_descend(config, out_dir):
    imm = _load_or_generate(config)
    opts = energy.DescentOptions(
        tau_init=config["tau_init"],
        tau_min=config["tau_min"],
        armijo=config["armijo"],
        max_iters=config["max_iters"],
        tol_scale=config["tol_scale"],
        reeb_convention=config["reeb_convention"],
        seed=config["seed"],
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    status = EXIT_OK
    try:
        result = energy.descend(imm, config["epsilon_schedule"], opts)
        records, stages, final = result.records, result.stages, result.final
        stopped = result.stopped_by_entropy
    except StageAbortedError as exc:
        print(f"stage aborted: {exc}")
        records, stages, final, stopped = [], [], imm, False
        status = EXIT_SOLVER
    with open(out / "trajectory.jsonl", "w") as f:
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    final.save(out / "final_mesh.json")
    summary = report_header(config)
    summary["stages"] = [s.to_json() for s in stages]
    summary["stopped_by_entropy"] = stopped
    if records:
        last = records[-1]
        summary["final"] = {
            "area": last["area"],
            "penalty": last["penalty"],
            "grad_norm": last["grad_norm"],
            "max_leg_residual": last["max_leg_residual"],
        }
    write_json(out / "summary.json", summary)
    print(f"descent: {len(records)} accepted steps over {len(stages)} stages")
    return status


def cmd_density(config, out_dir):
    imm = _load_or_generate(config)
    p0 = _base_point(imm, config)
    curve = gauge_lab.density_curve(
        imm, p0, config["radii"], min_radius=config["min_radius"]
    )
    theta0, mult, dist, eta = gauge_lab.theta0_estimate(imm, p0)
    out = Path(out_dir)
    header = report_header(config)
    write_csv(
        out / "density.csv",
        [
            f"density curve, version {__version__}, config {header['config_hash']}",
            f"base point {list(map(float, curve.base_point))}",
            f"resolution {config.get('resolution')}",
            f"theta0 {theta0!r} multiplicity {mult!r} eta {eta!r}",
            f"excluded radii {curve.excluded}",
        ],
        ["s", "ratio", "n_components"],
        [
            (float(s), float(ratio), int(c))
            for s, ratio, c in zip(curve.radii, curve.ratios, curve.counts)
        ],
    )
    print(f"density ratios: {[round(x, 4) for x in curve.ratios]}")
    return EXIT_OK


def cmd_monotonicity(config, out_dir):
    out = Path(out_dir)
    rows = []
    slopes_in = []
    status = EXIT_OK
    for n in config["resolution_ladder"]:
        sub = dict(config)
        sub["resolution"] = n
        imm = _generate(sub)
        p0 = _base_point(imm, sub)
        try:
            rep = gauge_lab.monotonicity_balance(
                imm, p0, config["r0"], config["eta"]
            )
        except ResolutionError as exc:
            print(f"n={n}: {exc}")
            status = EXIT_VALIDATION
            continue
        for name, value in rep.lhs_terms.items():
            rows.append((n, "lhs", name, float(value)))
        for name, value in rep.rhs_terms.items():
            rows.append((n, "rhs", name, float(value)))
        for name, value in rep.bookkeeping.items():
            rows.append((n, "bookkeeping", name, float(value)))
        rows.append((n, "summary", "residual", float(rep.residual)))
        slopes_in.append((n, rep.residual))
    header = report_header(config)
    write_csv(
        out / "monotonicity.csv",
        [
            f"truncated balance terms, version {__version__}, config {header['config_hash']}",
            f"chi: {gauge_lab.CHI_DESCRIPTION}",
            f"r0 {config['r0']!r} eta {config['eta']!r} family {config['family']}",
            f"base point {config['base_point']!r}",
            f"resolutions {config['resolution_ladder']}",
        ],
        ["resolution", "side", "term", "value"],
        rows,
    )
    summary = dict(header)
    if len(slopes_in) >= 2:
        ns = np.array([x[0] for x in slopes_in], float)
        rs = np.array([x[1] for x in slopes_in], float)
        summary["residual_slope_vs_h"] = checks.fit_loglog_slope(1.0 / ns, rs)
    summary["residuals"] = {str(n): float(r) for n, r in slopes_in}
    write_json(out / "monotonicity_summary.json", summary)
    return status


def cmd_clifford_demo(config, out_dir):
    out = Path(out_dir)
    n = config["resolution"]
    imm = corpus.clifford_lift(n)
    breakdown = energy.energy(imm, 0.2)
    from .immersion import legendrian_residual, mean_curvature_one_form

    res = legendrian_residual(imm)
    mcf = mean_curvature_one_form(imm)
    p0 = imm.positions[(n // 2) * n + n // 2]
    h = 2 * np.pi / n
    curve = gauge_lab.density_curve(imm, p0, [0.4, 0.5, 0.6], min_radius=3 * h)
    payload = report_header(config)
    payload.update(
        {
            "resolution": n,
            "area": breakdown.area,
            "area_target": float(4 * np.pi**2),
            "penalty": breakdown.penalty,
            "max_leg_residual": res.max,
            "maslov_periods": mcf.periods,
            "density_ratios_over_pi": [float(x) for x in curve.ratios / np.pi],
        }
    )
    write_json(out / "clifford_demo.json", payload)
    print(json.dumps(payload, sort_keys=True, indent=1))
    return EXIT_OK


def _base_point(imm, config):
    choice = config.get("base_point", "center")
    if choice == "center":
        if imm.mesh.uv is not None:
            mid = imm.mesh.uv.mean(axis=0)
            idx = int(np.argmin(np.sum((imm.mesh.uv - mid) ** 2, axis=1)))
        else:
            idx = 0
        return imm.positions[idx]
    if choice == "origin":
        return np.zeros(imm.positions.shape[1])
    if isinstance(choice, (list, tuple)):
        return np.asarray(choice, float)
    raise ConfigError(f"unknown base_point {choice!r}")


# ---------------------------------------------------------------------------
# schemas and argument parsing

SCHEMAS = {
    "verify-identities": {
        "seed": (False, 0),
        "inject_bug": (False, False),
    },
    "lift": {
        "grid": (True, None),
        "base_value": (False, 0.0),
    },
    "energy": {
        "mesh": (False, None),
        "family": (False, None),
        "target": (False, "heisenberg"),
        "resolution": (False, 32),
        "amplitude": (False, 1e-2),
        "seed": (False, 0),
        "epsilon": (True, None),
    },
    "descend": {
        "mesh": (False, None),
        "family": (False, None),
        "target": (False, "heisenberg"),
        "resolution": (False, 32),
        "amplitude": (False, 1e-2),
        "epsilon_schedule": (True, None),
        "tol_scale": (False, 1e-3),
        "tau_init": (False, 1e-2),
        "tau_min": (False, 1e-10),
        "armijo": (False, 1e-4),
        "max_iters": (False, 100),
        "seed": (False, 0),
        "reeb_convention": (False, "thm1"),
    },
    "density": {
        "mesh": (False, None),
        "family": (False, "flat_patch"),
        "target": (False, "heisenberg"),
        "resolution": (False, 128),
        "amplitude": (False, 1e-2),
        "seed": (False, 0),
        "radii": (False, [0.05, 0.075, 0.1]),
        "min_radius": (False, None),
        "base_point": (False, "center"),
    },
    "monotonicity": {
        "family": (False, "clifford_lift"),
        "target": (False, "heisenberg"),
        "resolution_ladder": (False, [32, 64]),
        "amplitude": (False, 1e-2),
        "seed": (False, 0),
        "r0": (False, 0.3),
        "eta": (False, 0.08),
        "base_point": (False, "center"),
    },
    "clifford-demo": {
        "resolution": (False, 24),
        "seed": (False, 0),
    },
}

COMMANDS = {
    "verify-identities": cmd_verify_identities,
    "lift": cmd_lift,
    "energy": cmd_energy,
    "descend": cmd_descend,
    "density": cmd_density,
    "monotonicity": cmd_monotonicity,
    "clifford-demo": cmd_clifford_demo,
}


def main(argv=None):
    parser = argparse.ArgumentParser(prog="legsurf", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default="out")
        p.add_argument("--resolution-ladder", default=None)
        p.add_argument("--grid", default=None)
        p.add_argument("--mesh", default=None)
        p.add_argument("--epsilon", type=float, default=None)
        p.add_argument("--family", default=None)
        p.add_argument("--resolution", type=int, default=None)
        p.add_argument("--inject-bug", action="store_true", default=None)
    args = parser.parse_args(argv)

    overrides = {
        "seed": args.seed,
        "grid": args.grid,
        "mesh": args.mesh,
        "epsilon": args.epsilon,
        "family": args.family,
        "resolution": args.resolution,
        "inject_bug": args.inject_bug,
    }
    if args.resolution_ladder:
        overrides["resolution_ladder"] = [int(x) for x in args.resolution_ladder.split(",")]
    schema = SCHEMAS[args.command]
    overrides = {k: v for k, v in overrides.items() if k in schema}
    try:
        config = load_config(args.config, overrides, schema)
    except (ConfigError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        return COMMANDS[args.command](config, args.out)
    except (GeometryDomainError, ConstraintViolationError, ConfigError) as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except StageAbortedError as exc:
        print(f"solver abort: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
