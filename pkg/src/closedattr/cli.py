"""Command-line front end.

    closedattr list
    closedattr reproduce <name> [--out DIR] [--seed N] [--tol X]
    closedattr run <simulate|stability|retract|reach|homology|cuts> --config FILE [--out DIR] [--seed N] [--tol X]

Exit codes: 0 when every expectation holds, 1 on a mismatch, 2 on a
configuration error.  The default output directory comes from the
CLOSEDATTR_OUT environment variable, falling back to ./closedattr-out.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from importlib import resources
from typing import Any, Callable

import jsonschema
import numpy as np

from . import __version__
from .cuts import CutFeasibilityProblem, derive_cut_constraints, render_table, verify_cut_instance
from .geometry import as_points, estimate_reach, grid_points, set_from_dict
from .homology import betti_vector, build_rips, induced_map_rank
from .registry import CASES, get_case
from .reporting import config_hash, read_points_csv, to_jsonable, write_csv, write_json
from .retraction import distance_flow_check, reach_retract_homotopy, weak_retract_homotopy
from .semiflow import ReachViolationError, integrate, system_from_dict
from .stability import certify_stability, squared_distance

OUT_ENV = "CLOSEDATTR_OUT"
EXIT_OK, EXIT_MISMATCH, EXIT_CONFIG = 0, 1, 2
SUBCOMMANDS = ("simulate", "stability", "retract", "reach", "homology", "cuts")


class ConfigError(Exception):
    pass


def load_schema() -> dict:
    text = resources.files("closedattr").joinpath("schemas/v1/config.json").read_text()
    return json.loads(text)


def validate_config(cfg: Any, subcommand: str) -> None:
    root = load_schema()
    schema = dict(root, **{"$ref": f"#/$defs/{subcommand}"})
    validator = jsonschema.Draft202012Validator(schema)
    err = jsonschema.exceptions.best_match(validator.iter_errors(cfg))
    if err is not None:
        pointer = "/" + "/".join(str(p) for p in err.absolute_path)
        raise ConfigError(f"config error at {pointer}: {err.message}")


def lookup(summary: Any, path: str) -> Any:
    cur = summary
    for part in path.split("."):
        if isinstance(cur, list):
            cur = cur[int(part)]
        elif isinstance(cur, dict) and part in cur:
            cur = cur[part]
        else:
            raise KeyError(path)
    return cur


def check_expectations(summary: dict, expect: dict, tol: float) -> list[dict]:
    rows = []
    for key, rule in expect.items():
        if isinstance(rule, dict):
            want, cmp, t = rule["value"], rule.get("compare", "eq"), rule.get("tol", tol)
        else:
            want, cmp, t = rule, "eq", tol
        try:
            got = to_jsonable(lookup(summary, key))
        except (KeyError, IndexError, ValueError):
            rows.append({"key": key, "expected": want, "observed": None, "passed": False})
            continue
        if cmp == "ge":
            ok = got >= want
        elif cmp == "le":
            ok = got <= want
        elif isinstance(want, (int, float, list)) and not isinstance(want, bool) and _numeric(got):
            g, w = np.asarray(got, float), np.asarray(want, float)
            ok = g.shape == w.shape and bool(np.all(np.abs(g - w) <= t))
        else:
            ok = got == want
        rows.append({"key": key, "expected": want, "observed": got, "passed": bool(ok)})
    return rows


def _numeric(x: Any) -> bool:
    try:
        np.asarray(x, dtype=float)
        return not isinstance(x, bool)
    except (TypeError, ValueError):
        return False


def grid_from_config(g: dict) -> np.ndarray:
    P = as_points(g["points"]) if "points" in g else grid_points(g["window"], g["spacing"])
    for ball in g.get("exclude", []):
        P = P[np.linalg.norm(P - np.asarray(ball["center"], float), axis=1) > ball["radius"]]
    return P


# ---------------------------------------------------------------------------
# run handlers: each returns a summary and writes its artifacts into ``out``


def run_simulate(cfg: dict, out: str, seed: int, tol: float) -> dict:
    sys_ = system_from_dict(cfg["system"])
    traj = integrate(sys_, cfg["x0"], float(cfg["T"]), cfg.get("h"))
    header = ["t"] + [f"x{i + 1}" for i in range(sys_.dim)]
    write_csv(os.path.join(out, "trajectory.csv"), header, traj.to_csv_rows())
    return {"system": sys_.name, "final": traj.states[-1].tolist(), "termination": traj.termination, "steps": len(traj.times) - 1}


def run_stability(cfg: dict, out: str, seed: int, tol: float) -> dict:
    sys_ = system_from_dict(cfg["system"])
    A = set_from_dict(cfg["set"])
    rep = certify_stability(
        sys_, A, cfg["eps_grid"], cfg["alpha"], cfg["windows"], cfg["horizon"], cfg.get("budget", 200), seed, cfg.get("extra_points")
    )
    rep.write_settling_csv(os.path.join(out, "settling.csv"))
    d = rep.to_dict()
    return {
        "system": sys_.name,
        "label": sys_.label,
        "verdict": d["uniformity_verdict"],
        "evidence": d["evidence"],
        "eps_grid": d["eps_grid"],
        "deltas": [x["delta"] for x in d["delta_of_eps"]],
        "sups": [x["sups"] for x in d["T_of_eps"]],
        "report": d,
    }


def run_retract(cfg: dict, out: str, seed: int, tol: float) -> dict:
    A = set_from_dict(cfg["set"])
    kind = cfg["kind"]
    try:
        if kind == "distance_flow":
            rep = distance_flow_check(A, cfg["r"], cfg["x0"], cfg.get("h", 1e-3), tol)
            write_csv(os.path.join(out, "decay.csv"), ["t", "distance"], zip(rep.times.tolist(), rep.distances.tolist()))
            return rep.to_dict()
        G = grid_from_config(cfg["grid"])
        if kind == "weak":
            sys_ = system_from_dict(cfg["system"])
            probe = weak_retract_homotopy(sys_, squared_distance(A), cfg["level"], G, cfg["horizon"], cfg.get("s_values"), tol)
        else:
            probe = reach_retract_homotopy(A, cfg["r"], G, cfg.get("s_values"), tol)
    except ReachViolationError as exc:
        return {"passed": False, "error": str(exc)}
    probe.write_trace_csv(os.path.join(out, "trace.csv"))
    return probe.to_dict()


def run_reach(cfg: dict, out: str, seed: int, tol: float) -> dict:
    A = set_from_dict(cfg["set"])
    rep = estimate_reach(
        A, cfg["r_max"], cfg["grid_resolution"], cfg.get("separation"), cfg.get("window"), cfg.get("ray_count", 512), seed
    )
    return rep.to_dict()


def run_homology(cfg: dict, out: str, seed: int, tol: float) -> dict:
    P = read_points_csv(cfg["points_csv"]) if "points_csv" in cfg else as_points(cfg["points"])
    cx = build_rips(P, cfg["scale"], cfg.get("max_dim", 2))
    with open(os.path.join(out, "complex.txt"), "w") as fh:
        fh.write(cx.to_text())
    summary: dict[str, Any] = {
        "betti": list(betti_vector(cx).ranks),
        "counts": [cx.count(k) for k in range(cx.max_dim + 1)],
        "euler": cx.euler_characteristic(),
    }
    if "sub_indices" in cfg:
        summary["induced_ranks"] = [induced_map_rank(cfg["sub_indices"], cx, k).rank for k in range(cx.max_dim + 1)]
    return summary


def run_cuts(cfg: dict, out: str, seed: int, tol: float) -> dict:
    p = CutFeasibilityProblem(tuple(cfg["betti_X"]), tuple(cfg["betti_A"]), cfg["codim"], cfg["top"])
    rep = derive_cut_constraints(p, cfg.get("assume_nonempty", False))
    print(render_table(rep))
    summary = rep.to_dict()
    if "betti_E" in cfg:
        summary["candidate"] = verify_cut_instance(p, cfg["betti_E"]).to_dict()
    return summary


HANDLERS: dict[str, Callable[[dict, str, int, float], dict]] = {
    "simulate": run_simulate,
    "stability": run_stability,
    "retract": run_retract,
    "reach": run_reach,
    "homology": run_homology,
    "cuts": run_cuts,
}


# ---------------------------------------------------------------------------


def _fmt(v: Any) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, list):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def print_checks(rows: list[dict]) -> None:
    if not rows:
        print("(no expectations)")
        return
    w = max(len(r["key"]) for r in rows)
    for r in rows:
        status = "ok" if r["passed"] else "MISMATCH"
        print(f"{r['key']:<{w}}  {status:<8}  observed {_fmt(r['observed'])}  expected {_fmt(r['expected'])}")


def run_report(command: str, cfg_hash: str, seed: int, tol: float, checks: list[dict], summary: Any, seconds: float) -> dict:
    return {
        "command": command,
        "version": __version__,
        "config_hash": cfg_hash,
        "seed": seed,
        "tol": tol,
        "checks": checks,
        "passed": all(c["passed"] for c in checks),
        "summary": summary,
        "timing": {"seconds": seconds},
    }


def cmd_reproduce(name: str, out: str, seed: int, tol: float | None) -> int:
    try:
        case = get_case(name)
    except KeyError as exc:
        print(exc.args[0], file=sys.stderr)
        return EXIT_CONFIG
    t0 = time.perf_counter()
    rows, observed = case.run(seed, tol)
    seconds = time.perf_counter() - t0
    checks = [to_jsonable(r.to_dict()) for r in rows]
    print(f"{case.name}: {case.title}")
    print_checks(checks)
    report = run_report(f"reproduce {name}", config_hash({"example": name}), seed, case.default_tol if tol is None else tol, checks, observed, seconds)
    write_json(os.path.join(out, name, "report.json"), report)
    return EXIT_OK if report["passed"] else EXIT_MISMATCH


def cmd_run(sub: str, config_path: str, out: str, seed: int, tol: float | None) -> int:
    tol = 1e-6 if tol is None else tol
    try:
        with open(config_path) as fh:
            cfg = json.load(fh)
        validate_config(cfg, sub)
    except (OSError, json.JSONDecodeError, ConfigError) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    target = os.path.join(out, sub)
    os.makedirs(target, exist_ok=True)
    t0 = time.perf_counter()
    try:
        summary = HANDLERS[sub](cfg, target, seed, tol)
    except (ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    seconds = time.perf_counter() - t0
    checks = check_expectations(summary, cfg.get("expect", {}), tol)
    if summary.get("passed") is False and not checks:
        checks = [{"key": "passed", "expected": True, "observed": False, "passed": False}]
    print_checks(checks)
    report = run_report(f"run {sub}", config_hash(cfg), seed, tol, checks, summary, seconds)
    write_json(os.path.join(target, "report.json"), report)
    return EXIT_OK if report["passed"] else EXIT_MISMATCH


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=os.environ.get(OUT_ENV, "closedattr-out"), help=f"output directory (default ${OUT_ENV} or ./closedattr-out)")
    common.add_argument("--seed", type=int, default=0, help="sampling seed")
    common.add_argument("--tol", type=float, default=None, help="verification tolerance")
    p = argparse.ArgumentParser(prog="closedattr", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("list", help="list the worked examples")
    rp = sub.add_parser("reproduce", parents=[common], help="run a worked example and compare with its expectations")
    rp.add_argument("name")
    run = sub.add_parser("run", parents=[common], help="run one pipeline from a JSON config")
    run.add_argument("subcommand", choices=SUBCOMMANDS)
    run.add_argument("--config", required=True)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        for name, case in CASES.items():
            print(f"{name:<20} {case.title}")
        return EXIT_OK
    if args.seed < 0:
        print("--seed must be nonnegative", file=sys.stderr)
        return EXIT_CONFIG
    if args.tol is not None and not (args.tol > 0 and math.isfinite(args.tol)):
        print("--tol must be a positive number", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "reproduce":
        return cmd_reproduce(args.name, args.out, args.seed, args.tol)
    return cmd_run(args.subcommand, args.config, args.out, args.seed, args.tol)


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
