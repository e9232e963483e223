"""Batch front end: parse a config file, dispatch one computation, and write a
deterministic JSON result document plus CSV side files.

Config format: INI-style key/value blocks (see README for the full schema).
The [run] block selects the command; [lagrangian] describes the running cost;
remaining blocks carry command-specific inputs.  The same config and seed
produce byte-identical JSON.

Exit codes: 0 success, 2 a certificate failed to certify, 1 error.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from .convexity import Lagrangian, ConvexFunctionSamples, check_assumptions, hamiltonian
from .measures import from_file, DiscreteMeasure
from .bolza import BolzaInstance, BoundaryCost, solve_bolza, hamiltonian_system_check
from .dynamics import (ballistic_cost, fixed_end_cost, hopf_lax_forward,
                       hopf_lax_backward)
from .interpolation import (ballistic_min, ballistic_max, interpolate_min,
                            interpolate_max, optimal_map_min, optimal_map_max,
                            default_candidate_grid, eulerian_check)
from .lattice import (lattice_covering, control_ladder, hjb_backward, forward_law,
                      mt_cost, extract_drift)

SCHEMA_VERSION = 1
COMMANDS = ("cost", "transport", "interpolate", "map", "hopf-lax", "hjb",
            "bolza", "verify", "eulerian")


class ConfigError(ValueError):
    pass


def parse_config(path: Path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cp.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if "run" not in cp or "command" not in cp["run"]:
        raise ConfigError(f"{path}: missing [run] command")
    cmd = cp["run"]["command"]
    if cmd not in COMMANDS:
        raise ConfigError(f"{path}: unknown command {cmd!r}; choose from {COMMANDS}")
    return cp


def build_lagrangian(cp: configparser.ConfigParser) -> Lagrangian:
    if "lagrangian" not in cp:
        raise ConfigError("missing [lagrangian] block")
    blk = cp["lagrangian"]
    family = blk.get("family", "quadratic-free")
    if family == "quadratic-free":
        return Lagrangian.quadratic_free()
    if family == "harmonic":
        return Lagrangian.harmonic(blk.getfloat("alpha", 1.0), blk.getfloat("beta", 1.0))
    if family == "power-kinetic":
        return Lagrangian.power_kinetic(blk.getfloat("delta", 2.0))
    if family == "state-potential":
        return Lagrangian.state_potential(blk.get("potential", "quadratic"),
                                          blk.getfloat("coeff", 1.0))
    raise ConfigError(f"unknown Lagrangian family {family!r}")


def _load_measure(cp, key: str, base: Path) -> DiscreteMeasure:
    if "measures" not in cp or key not in cp["measures"]:
        raise ConfigError(f"missing [measures] {key}")
    p = Path(cp["measures"][key])
    if not p.is_absolute():
        p = base / p
    if not p.exists():
        raise ConfigError(f"measure file does not exist: {p}")
    return from_file(p)


def _result_skeleton(cmd: str, cfg_text: str, seed: int) -> dict:
    return {"schema": SCHEMA_VERSION, "command": cmd, "seed": seed,
            "inputs_digest": hashlib.sha256(cfg_text.encode()).hexdigest(),
            "values": {}, "flags": [], "certified": True}


def write_result(doc: dict, out_dir: Path) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "result.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return path


def run(config_path: Path, out_dir: Path, seed: int = 0, tol: float | None = None) -> int:
    """Execute one config; returns the process exit code."""
    cfg_text = Path(config_path).read_text(encoding="utf-8")
    cp = parse_config(Path(config_path))
    cmd = cp["run"]["command"]
    base = Path(config_path).parent
    T = cp["run"].getfloat("T", 1.0)
    doc = _result_skeleton(cmd, cfg_text, seed)
    rng = np.random.default_rng(seed)

    try:
        if cmd == "cost":
            L = build_lagrangian(cp)
            blk = cp["cost"] if "cost" in cp else {}
            v = np.array([float(t) for t in blk.get("v", "1.0").split()])
            x = np.array([float(t) for t in blk.get("x", "2.0").split()])
            doc["values"]["ballistic_cost"] = ballistic_cost(L, v, x, T)
            if T > 0:
                y = np.array([float(t) for t in blk.get("y", " ".join(map(str, x))).split()])
                doc["values"]["fixed_end_cost"] = fixed_end_cost(L, y, x, T).value
            if "assumption_profile" in cp["lagrangian"]:
                rep = check_assumptions(L, cp["lagrangian"]["assumption_profile"])
                doc["values"]["assumptions_pass"] = rep.passed
                for c in rep.clauses:
                    if not c.passed:
                        doc["flags"].append(f"assumption {c.name} failed")

        elif cmd == "transport":
            L = build_lagrangian(cp)
            mu0 = _load_measure(cp, "mu0", base)
            nuT = _load_measure(cp, "nuT", base)
            sense = cp["run"].get("sense", "min")
            plan = (ballistic_min if sense == "min" else ballistic_max)(L, mu0, nuT, T)
            doc["values"]["value"] = plan.value
            doc["values"]["plan"] = plan.to_json_dict()

        elif cmd == "interpolate":
            L = build_lagrangian(cp)
            mu0 = _load_measure(cp, "mu0", base)
            nuT = _load_measure(cp, "nuT", base)
            sense = cp["run"].get("sense", "min")
            if sense == "min":
                grid = default_candidate_grid(L, mu0, nuT, T)
                cert = interpolate_min(L, mu0, nuT, T, grid)
            else:
                cert = interpolate_max(L, mu0, nuT, T)
            doc["values"]["certificate"] = cert.to_json_dict()
            doc["certified"] = bool(cert.certified)

        elif cmd == "map":
            L = build_lagrangian(cp)
            mu0 = _load_measure(cp, "mu0", base)
            nuT = _load_measure(cp, "nuT", base)
            sense = cp["run"].get("sense", "min")
            rep = (optimal_map_min if sense == "min" else optimal_map_max)(L, mu0, nuT, T)
            doc["values"]["map"] = rep.to_json_dict()
            doc["certified"] = bool(rep.pushforward_ok and rep.cost_error <= 1e-3)
            doc["flags"].extend(rep.flags)
            _write_map_csv(rep, out_dir)

        elif cmd == "hopf-lax":
            L = build_lagrangian(cp)
            g = cp["grid"]
            pts = np.linspace(g.getfloat("lo", -4.0), g.getfloat("hi", 4.0),
                              g.getint("points", 201))
            times = [float(t) for t in g.get("times", str(T)).split()]
            slope = g.getfloat("slope", 1.0)
            data = ConvexFunctionSamples(pts, slope * pts, kind="general")
            fld = hopf_lax_forward(L, data, times, pts)
            out_dir.mkdir(parents=True, exist_ok=True)
            fld.to_csv(out_dir / "hopf_lax.csv")
            doc["values"]["final_slice_min"] = float(np.min(fld.values[-1]))
            doc["values"]["final_slice_max"] = float(np.max(fld.values[-1]))
            doc["values"]["pinned_points"] = int(fld.flags.sum())
            if fld.flags.any():
                doc["flags"].append("boundary-pinned extremizer on some grid points")

        elif cmd == "hjb":
            L = build_lagrangian(cp)
            blk = cp["lattice"]
            lat = lattice_covering(np.array([blk.getfloat("lo", -1.0), blk.getfloat("hi", 1.0)]),
                                   T, blk.getint("steps", 100), blk.getfloat("dx", 0.1),
                                   sigma_pad=blk.getfloat("pad", 3.0))
            controls = control_ladder(blk.getfloat("b_max", 2.0), blk.getfloat("db", 0.25))
            slope = blk.getfloat("slope", 1.0)
            fld = hjb_backward(L, slope * lat.nodes, lat, controls)
            out_dir.mkdir(parents=True, exist_ok=True)
            fld.to_csv(out_dir / "hjb_field.csv")
            pol = extract_drift(fld, L)
            doc["values"]["initial_slice_mid"] = float(fld.values[0][lat.n_nodes // 2])
            doc["values"]["ladder_boundary_hits"] = pol.boundary_hits
            if pol.truncation_flagged:
                doc["flags"].append("drift ladder truncation reached")

        elif cmd == "bolza":
            L = build_lagrangian(cp)
            blk = cp["bolza"]
            kind = blk.get("ell", "quadratic")
            ell = BoundaryCost(kind, wa=blk.getfloat("wa", 1.0), ca=blk.getfloat("ca", 0.0),
                               wb=blk.getfloat("wb", 1.0), cb=blk.getfloat("cb", 0.0),
                               a0=blk.getfloat("a0", 0.0), b0=blk.getfloat("b0", 0.0),
                               v0=blk.getfloat("v0", 0.0), x0=blk.getfloat("x0", 0.0))
            sol = solve_bolza(BolzaInstance(L, ell, T, blk.getint("N", 256)))
            rep = hamiltonian_system_check(sol, hamiltonian(L))
            doc["values"]["primal"] = sol.primal_value
            doc["values"]["dual"] = sol.dual_value
            doc["values"]["gap"] = sol.gap
            doc["values"]["system_residual"] = rep.max_residual
            doc["certified"] = abs(sol.gap) <= (tol or 1e-5)
            _write_bolza_csv(sol, out_dir)

        elif cmd == "eulerian":
            L = build_lagrangian(cp)
            mu0 = _load_measure(cp, "mu0", base)
            nuT = _load_measure(cp, "nuT", base)
            g = cp["grid"] if "grid" in cp else {}
            rep = eulerian_check(L, mu0, nuT, T,
                                 n_space=int(g.get("points", 64)),
                                 n_time=int(g.get("steps", 64)))
            doc["values"]["flow_value"] = rep.value
            doc["values"]["reference_value"] = rep.reference_value
            doc["values"]["relative_error"] = rep.relative_error
            doc["certified"] = rep.feasible and rep.relative_error <= (tol or 0.05)
            if rep.hint:
                doc["flags"].append(rep.hint)

        elif cmd == "verify":
            ok = _verify_bundle(doc, rng, tol)
            doc["certified"] = ok

    except ConfigError:
        raise
    except Exception as exc:  # downstream failure: wrap with module context
        doc["certified"] = False
        doc["flags"].append(f"{type(exc).__module__}.{type(exc).__name__}: {exc}")
        write_result(doc, out_dir)
        return 1

    write_result(doc, out_dir)
    return 0 if doc["certified"] else 2


def _verify_bundle(doc: dict, rng, tol) -> bool:
    """Certificate sweep on a bundled self-dual demo instance."""
    from .measures import measure
    L = Lagrangian.harmonic(1.0, 1.0)
    mu0 = measure([[-0.9], [0.2], [1.1]], [0.3, 0.4, 0.3], space="costate")
    nuT = measure([[-1.0], [0.4], [1.3]], [0.25, 0.35, 0.4], space="state")
    T = 0.8
    checks = {}
    plan_min = ballistic_min(L, mu0, nuT, T)
    plan_max = ballistic_max(L, mu0, nuT, T)
    checks["ordering"] = plan_min.value <= plan_max.value + 1e-9
    grid = default_candidate_grid(L, mu0, nuT, T)
    cmin = interpolate_min(L, mu0, nuT, T, grid, tolerance=1e-3)
    checks["interpolation_min"] = cmin.certified
    cmax = interpolate_max(L, mu0, nuT, T, tolerance=1e-4)
    checks["interpolation_max"] = cmax.certified
    inst = BolzaInstance(L, BoundaryCost("quadratic", wa=1.0, ca=0.5, wb=1.5, cb=-0.2),
                         T, 128)
    sol = solve_bolza(inst)
    checks["bolza_gap"] = abs(sol.gap) <= 1e-6
    doc["values"]["checks"] = {k: bool(v) for k, v in checks.items()}
    doc["values"]["ballistic_min"] = plan_min.value
    doc["values"]["ballistic_max"] = plan_max.value
    for name, ok in checks.items():
        if not ok:
            doc["flags"].append(f"verify: {name} failed")
    return all(checks.values())


def _write_map_csv(rep, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "map.csv", "w", encoding="utf-8") as fh:
        fh.write("source,image,mass\n")
        for s, i, m in zip(rep.sources, rep.images, rep.masses):
            fh.write(f"{s[0]!r},{i[0]!r},{m!r}\n")


def _write_bolza_csv(sol, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    inst = sol.instance
    h = inst.T / inst.N
    with open(out_dir / "bolza_arcs.csv", "w", encoding="utf-8") as fh:
        fh.write("t,x,v\n")
        for k in range(inst.N + 1):
            fh.write(f"{k * h!r},{sol.primal_path[k]!r},{sol.dual_path[k]!r}\n")


DEMO_CONFIGS = {
    "min-ballistic": """[run]
command = interpolate
T = 1.0
sense = min

[lagrangian]
family = quadratic-free

[measures]
mu0 = mu0.txt
nuT = nuT.txt
""",
    "max-ballistic": """[run]
command = interpolate
T = 0.8
sense = max

[lagrangian]
family = harmonic
alpha = 1.0
beta = 1.0

[measures]
mu0 = mu0.txt
nuT = nuT.txt
""",
    "stochastic": """[run]
command = hjb
T = 1.0

[lagrangian]
family = quadratic-free

[lattice]
lo = -1.0
hi = 1.0
dx = 0.1
steps = 120
b_max = 2.0
db = 0.25
slope = 1.0
""",
}

_DEMO_MU0 = """# d=1 space=costate
0.5 -1.0
0.5 1.0
"""
_DEMO_NUT = """# d=1 space=state
0.5 -2.0
0.5 2.0
"""


def demo_suite(out_root: Path, seed: int = 0) -> int:
    """Write the bundled demo configs, run each, and emit a summary table."""
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    rows = []
    worst = 0
    for name, text in DEMO_CONFIGS.items():
        d = out_root / name
        d.mkdir(parents=True, exist_ok=True)
        (d / "config.ini").write_text(text, encoding="utf-8")
        (d / "mu0.txt").write_text(_DEMO_MU0, encoding="utf-8")
        (d / "nuT.txt").write_text(_DEMO_NUT, encoding="utf-8")
        code = run(d / "config.ini", d, seed=seed)
        worst = max(worst, code)
        rows.append((name, code))
    lines = ["demo            exit", "----            ----"]
    lines += [f"{name:<15} {code}" for name, code in rows]
    (out_root / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    return worst


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="ballistic",
                                 description="ballistic transport toolkit")
    ap.add_argument("--config", type=Path, help="config file to execute")
    ap.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--tol", type=float, default=None)
    ap.add_argument("--demo", action="store_true", help="run the bundled demo suite")
    args = ap.parse_args(argv)
    if args.demo:
        return demo_suite(args.out, args.seed)
    if args.config is None:
        ap.error("--config is required unless --demo is given")
    try:
        return run(args.config, args.out, args.seed, args.tol)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
