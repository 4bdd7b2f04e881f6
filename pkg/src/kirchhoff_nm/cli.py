"""Command line interface: ``kirchhoff-nm {hill,solve,sweep,verify,convert}``.

A run is described by a JSON config with optional blocks ``problem``,
``solver``, ``sweep`` and ``hill``; ``--set a.b=value`` overrides any entry
after the file is read. Exit status: 0 success, 2 rejected parameters
(resonance or failed contraction), 1 errors.
"""

from __future__ import annotations

import argparse
import copy
import dataclasses
import json
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .basis import DomainSpec, enumerate_modes
from .errors import ConfigError, KirchhoffError
from .field import Field, TimeProfile
from .hill import solve_hill
from .kirchhoff import ProblemData, convert_scaling
from .nashmoser import SolverParams, solve, verify_solution
from .sweep import SweepConfig, measure_curve, records_to_csv, sweep_omega, sweep_solver_defaults

COMMANDS = ("hill", "solve", "sweep", "verify", "convert")
EXIT_OK, EXIT_ERROR, EXIT_REJECTED = 0, 1, 2


# --------------------------------------------------------------------------
# config parsing

def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    if path.startswith("builtin:"):
        name = path.split(":", 1)[1]
        ref = resources.files("kirchhoff_nm") / "configs" / f"{name}.json"
        if not ref.is_file():
            raise ConfigError(f"no bundled config named {name!r}")
        text, where = ref.read_text(), path
    else:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {path} not found")
        text, where = p.read_text(), path
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{where}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: top level must be a JSON object")
    return data


def apply_overrides(data: dict, overrides) -> dict:
    """Set dotted keys; values are parsed as JSON when possible."""
    data = copy.deepcopy(data)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = data
        parts = key.strip().split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key}: {p} is not an object")
        node[parts[-1]] = value
    return data


TOP_KEYS = {"problem", "solver", "sweep", "hill", "output_dir", "seed"}
PROBLEM_KEYS = {"domain", "omega", "mu", "gamma", "tau", "forcing"}
SWEEP_KEYS = {"omega_interval", "n_omega", "mu_values", "gamma_values", "solver"}


def _check_keys(block: dict, allowed: set, path: str):
    unknown = sorted(set(block) - allowed)
    if unknown:
        prefix = f"{path}." if path else ""
        raise ConfigError(f"{prefix}{unknown[0]}: unknown key")


def _field_error(path: str, exc: Exception) -> ConfigError:
    return ConfigError(f"{path}: {exc}")


def _number(block: dict, key: str, path: str, default=None):
    if key not in block:
        if default is None:
            raise ConfigError(f"{path}.{key}: missing")
        return default
    try:
        return float(block[key])
    except (TypeError, ValueError):
        raise ConfigError(f"{path}.{key}: expected a number, got {block[key]!r}") from None


def parse_profile(spec: dict, path: str) -> TimeProfile:
    try:
        return TimeProfile.from_trig(spec.get("cos", []), spec.get("sin", []), float(spec.get("const", 0.0)))
    except (TypeError, ValueError) as exc:
        raise _field_error(path, exc) from None


def parse_forcing(spec, domain: DomainSpec, path: str) -> Field:
    if isinstance(spec, dict):  # a serialized field
        try:
            return Field.from_json(spec)
        except (KeyError, ValueError, TypeError) as exc:
            raise _field_error(path, exc) from None
    if not isinstance(spec, list) or not spec:
        raise ConfigError(f"{path}: expected a non-empty list of {{label, cos, sin}} entries")
    labels = []
    for i, entry in enumerate(spec):
        lab = entry.get("label") if isinstance(entry, dict) else None
        if lab is None:
            raise ConfigError(f"{path}[{i}].label: missing")
        labels.append(np.atleast_1d(np.asarray(lab, dtype=int)))
    if domain.is_torus:
        cutoff = max(max(float(np.linalg.norm(l)) for l in labels), 1.0)
    else:
        L = np.array(domain.lengths)
        cutoff = max(float(np.linalg.norm(l * np.pi / L)) for l in labels)
    modes = enumerate_modes(domain, cutoff)
    profiles = {}
    for i, (entry, lab) in enumerate(zip(spec, labels)):
        try:
            j = modes.find(lab)
        except KeyError as exc:
            raise _field_error(f"{path}[{i}].label", exc) from None
        prof = parse_profile(entry, f"{path}[{i}]")
        profiles[j] = profiles[j] + prof if j in profiles else prof
    return Field.from_profiles(modes, profiles)


def parse_problem(block: dict | None, path: str = "problem") -> ProblemData:
    if not isinstance(block, dict):
        raise ConfigError(f"{path}: missing block")
    _check_keys(block, PROBLEM_KEYS, path)
    try:
        dom = block.get("domain", {"kind": "dirichlet_interval"})
        domain = DomainSpec.from_json(dom)
    except (KeyError, TypeError, ValueError) as exc:
        raise _field_error(f"{path}.domain", exc) from None
    if "forcing" not in block:
        raise ConfigError(f"{path}.forcing: missing")
    g = parse_forcing(block["forcing"], domain, f"{path}.forcing")
    vals = {k: _number(block, k, path) for k in ("omega", "mu", "gamma")}
    d = domain.dimension
    vals["tau"] = _number(block, "tau", path, default=d + 0.2)
    try:
        return ProblemData(domain, g, vals["omega"], vals["mu"], vals["gamma"], vals["tau"])
    except KirchhoffError as exc:
        raise _field_error(path, exc) from None


def parse_solver(block: dict | None, d: int = 1, base: SolverParams | None = None,
                 path: str = "solver") -> SolverParams:
    block = block or {}
    if not isinstance(block, dict):
        raise ConfigError(f"{path}: expected an object")
    names = {f.name for f in dataclasses.fields(SolverParams)}
    unknown = set(block) - names
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}: unknown solver parameter")
    try:
        params = base if base is not None else SolverParams.defaults_for(d)
        params = dataclasses.replace(params, **block)
        params.validate_for(d)
    except (TypeError, KirchhoffError) as exc:
        raise _field_error(path, exc) from None
    return params


def parse_sweep(block: dict | None, d: int, seed: int, path: str = "sweep") -> SweepConfig:
    if not isinstance(block, dict):
        raise ConfigError(f"{path}: missing block")
    _check_keys(block, SWEEP_KEYS, path)
    try:
        solver = parse_solver(block.get("solver"), d, base=sweep_solver_defaults(d),
                              path=f"{path}.solver")
        return SweepConfig(tuple(block["omega_interval"]), int(block["n_omega"]),
                           [float(v) for v in block["mu_values"]],
                           [float(v) for v in block["gamma_values"]], solver, seed)
    except KeyError as exc:
        raise ConfigError(f"{path}.{exc.args[0]}: missing") from None
    except (TypeError, ValueError) as exc:
        raise _field_error(path, exc) from None


@dataclass
class RunConfig:
    command: str
    problem: ProblemData | None
    solver: SolverParams | None
    sweep: SweepConfig | None
    output_dir: Path
    seed: int
    raw: dict


def build_run_config(command: str, data: dict, out: str | None, seed: int | None) -> RunConfig:
    _check_keys(data, TOP_KEYS, "")
    seed = int(data.get("seed", 0) if seed is None else seed)
    output_dir = Path(out or data.get("output_dir", "out"))
    problem = solver = sweep = None
    if command in ("solve", "verify", "sweep"):
        problem = parse_problem(data.get("problem"))
        d = problem.domain.dimension
        solver = parse_solver(data.get("solver"), d)
        if "seed" not in (data.get("solver") or {}):
            solver = dataclasses.replace(solver, seed=seed)
        if command == "sweep":
            sweep = parse_sweep(data.get("sweep"), d, seed)
    return RunConfig(command, problem, solver, sweep, output_dir, seed, data)


# --------------------------------------------------------------------------
# commands

def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def cmd_hill(cfg: RunConfig, args) -> int:
    block = cfg.raw.get("hill")
    if not isinstance(block, dict):
        raise ConfigError("hill: missing block")
    alpha = parse_profile(block.get("alpha", {}), "hill.alpha")
    L = int(block.get("L", 10))
    Mdisc = int(block.get("Mdisc", max(64, 2 * L)))
    spec = solve_hill(alpha, L, Mdisc)
    lines = ["l,p,p_squared"] + [f"{l},{p!r},{p2!r}" for l, (p, p2) in
                                 enumerate(zip(spec.p.tolist(), spec.eigenvalues.tolist()))]
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    _write(cfg.output_dir / "hill.csv", text)
    if args.json:
        coeffs = spec.eigenfunction_coeffs
        payload = {"L": L, "Mdisc": Mdisc, "p": spec.p.tolist(),
                   "eigenfunctions": [[[c.real, c.imag] for c in row] for row in coeffs]}
        _write(cfg.output_dir / "hill.json", json.dumps(payload))
    return EXIT_OK


def cmd_solve(cfg: RunConfig, args) -> int:
    pd, params = cfg.problem, cfg.solver
    out = solve(pd, params)
    report = {"outcome": out.to_json(), "problem": {k: v for k, v in pd.to_json().items() if k != "forcing"},
              "solver": params.to_json()}
    _write(cfg.output_dir / "trace.csv", out.trace.to_csv())
    if out.converged:
        ver = verify_solution(pd, out.solution, s1=params.s1)
        report["verification"] = ver.to_json()
        _write(cfg.output_dir / "solution.json", out.solution.dumps())
        print(f"Converged: residual {ver.coefficient_residual:.3e} after {len(out.trace)} steps")
    else:
        off = out.offender
        extra = f" offender (j={off[0]}, l={off[1]})" if off else ""
        print(f"{out.status} at stage {out.stage}{extra}: {out.message}")
    _write(cfg.output_dir / "report.json", json.dumps(report, indent=2))
    return EXIT_OK if out.converged else EXIT_REJECTED


def cmd_sweep(cfg: RunConfig, args) -> int:
    records = sweep_omega(cfg.sweep, cfg.problem, workers=args.workers)
    _write(cfg.output_dir / "sweep.csv", records_to_csv(records, timing=args.timing))
    try:
        curve = measure_curve(records)
    except KirchhoffError as exc:
        print(f"measure curve skipped: {exc}")
    else:
        _write(cfg.output_dir / "measure.csv", curve.to_csv())
        for g, f in curve.rows():
            print(f"gamma={g:g} accepted={f:.4f}")
        print(f"fitted slope {curve.slope:.4g}")
    return EXIT_OK


def cmd_verify(cfg: RunConfig, args) -> int:
    if not args.solution:
        raise ConfigError("verify needs --solution PATH")
    path = Path(args.solution)
    if not path.is_file():
        raise ConfigError(f"solution file {path} not found")
    try:
        u = Field.loads(path.read_text())
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    rep = verify_solution(cfg.problem, u, s1=cfg.solver.s1)
    _write(cfg.output_dir / "verification.json", json.dumps(rep.to_json(), indent=2))
    print(f"coefficient residual {rep.coefficient_residual!r}")
    print(f"pointwise residual {rep.pointwise_residual!r}")
    return EXIT_OK


def cmd_convert(cfg: RunConfig, args) -> int:
    if (args.eps is None) == (args.mu is None):
        raise ConfigError("convert needs exactly one of --eps or --mu")
    if args.eps is not None:
        mu, _ = convert_scaling(args.eps, "PhysicalToScaled")
        print(f"mu = {mu:.15g}")
    else:
        eps, _ = convert_scaling(args.mu, "ScaledToPhysical")
        print(f"eps = {eps:.15g}")
    return EXIT_OK


HANDLERS = {"hill": cmd_hill, "solve": cmd_solve, "sweep": cmd_sweep,
            "verify": cmd_verify, "convert": cmd_convert}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kirchhoff-nm",
                                     description="Periodic solutions of the forced Kirchhoff equation.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config path, or builtin:NAME")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int, default=1)
        if name == "hill":
            p.add_argument("--json", action="store_true", help="also write eigenfunctions")
        if name == "sweep":
            p.add_argument("--timing", action="store_true", help="fill the wall_ms column")
        if name == "verify":
            p.add_argument("--solution", help="solution JSON written by solve")
        if name == "convert":
            p.add_argument("--eps", type=float)
            p.add_argument("--mu", type=float)
    return parser


def run(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        data = apply_overrides(load_config(args.config), args.overrides)
        cfg = build_run_config(args.command, data, args.out, args.seed)
        return HANDLERS[args.command](cfg, args)
    except KirchhoffError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main():
    sys.exit(run())
