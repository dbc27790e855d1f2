"""Command-line front end.

    layermpc sets     --config double-integrator --out out/
    layermpc simulate --config double-integrator --out out/ [--scenario NAME]
    layermpc compare  --config double-integrator --out out/ --seed 42
    layermpc check    --config double-integrator --out out/

``--config`` takes a JSON file or a preset name. Exit codes: 0 ok,
2 ladder not converged, 3 controller failure, 4 state outside domain,
5 configuration error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time

import numpy as np

from .config import ProjectConfig
from .exceptions import ConfigError, ControllerFailure, OutsideDomain
from .reachability import SetLadder, build_ladder, check_contractive, one_step_set
from .simulator import InvariantViolation, compare, sample_domain, simulate

EXIT_OK = 0
EXIT_NOT_CONVERGED = 2
EXIT_CONTROLLER_FAILURE = 3
EXIT_OUTSIDE_DOMAIN = 4
EXIT_CONFIG = 5

logger = logging.getLogger("layermpc")


def _write_json(path, data):
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_vertices(path, P):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x1", "x2"])
        for v in P.vertices_2d():
            w.writerow([repr(float(v[0])), repr(float(v[1]))])


def read_vertices(path) -> np.ndarray:
    with open(path) as fh:
        rows = list(csv.reader(fh))
    if rows[0] != ["x1", "x2"]:
        raise ValueError("unexpected vertex CSV header")
    return np.array([[float(a), float(b)] for a, b in rows[1:]])


def load_or_build_ladder(cfg: ProjectConfig, out: str) -> SetLadder:
    """Reuse ``out/ladder.json`` when its cache key matches the config, else rebuild it."""
    path = os.path.join(out, "ladder.json")
    key = cfg.ladder_key()
    if os.path.exists(path):
        with open(path) as fh:
            data = json.load(fh)
        if data.get("cache_key") == key:
            logger.info("reusing cached ladder %s", path)
            return SetLadder.from_dict(data)
    t0 = time.perf_counter()
    ladder = build_ladder(cfg.system, cfg.N, cfg.max_rungs, cfg.ladder_tol)
    logger.info("built ladder with %d rungs in %.1fs", len(ladder.rungs), time.perf_counter() - t0)
    data = ladder.to_dict()
    data["cache_key"] = key
    with open(path, "w") as fh:
        json.dump(data, fh)
    return ladder


def cmd_sets(cfg: ProjectConfig, args) -> int:
    ladder = load_or_build_ladder(cfg, args.out)
    report = check_contractive(ladder) if ladder.converged and len(ladder.rungs) > 1 else None
    if cfg.system.n == 2:
        write_vertices(os.path.join(args.out, "Xs.csv"), ladder.Xs)
        for k, P in enumerate(ladder.rungs):
            write_vertices(os.path.join(args.out, f"rung_{k}.csv"), P)
        for k in range(1, len(ladder.rungs) - 1):
            # layer k lies between rung k (inner) and rung k+1 (outer)
            with open(os.path.join(args.out, f"layer_{k}.csv"), "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["boundary", "x1", "x2"])
                for tag, P in (("outer", ladder.rungs[k + 1]), ("inner", ladder.rungs[k])):
                    for v in P.vertices_2d():
                        w.writerow([tag, repr(float(v[0])), repr(float(v[1]))])
        if len(ladder.rungs) > 1:
            S_N1 = one_step_set(ladder.S_N, cfg.system.U, cfg.system)
            write_vertices(os.path.join(args.out, "S_N_plus_1.csv"), S_N1)
    summary = {"converged": ladder.converged, "k_star": ladder.k_star, "rungs": len(ladder.rungs), "N": ladder.N}
    if report is not None:
        _write_json(os.path.join(args.out, "contractivity_report.json"), report.to_dict())
        summary["contractive"] = report.passed
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK if ladder.converged else EXIT_NOT_CONVERGED


def cmd_check(cfg: ProjectConfig, args) -> int:
    ladder = load_or_build_ladder(cfg, args.out)
    if not ladder.converged:
        print(json.dumps({"converged": False}))
        return EXIT_NOT_CONVERGED
    report = check_contractive(ladder).to_dict()
    _write_json(os.path.join(args.out, "contractivity_report.json"), report)
    print(json.dumps({"passed": report["passed"], "margin": report["margin"], "verdict": report["verdict"]}))
    return EXIT_OK


def cmd_simulate(cfg: ProjectConfig, args) -> int:
    ladder = load_or_build_ladder(cfg, args.out)
    if args.scenario:
        if args.scenario not in cfg.scenarios:
            raise ConfigError(f"unknown scenario {args.scenario!r}")
        names = [args.scenario]
    else:
        names = list(cfg.scenarios)
    if not names:
        raise ConfigError("config defines no scenarios")
    code = EXIT_OK
    for name in names:
        sc = cfg.scenarios[name]
        for ctl_name in sc.controllers or [n for n, c in cfg.controllers.items() if c.flavor.value == "layered"]:
            ctl = cfg.estimator(ctl_name, ladder)
            tag = f"{name}_{ctl_name}"
            try:
                traj = simulate(ctl, sc, check_invariants=True, strict=not args.no_assert)
            except OutsideDomain as exc:
                _write_json(os.path.join(args.out, f"summary_{tag}.json"),
                            {"feasible": False, "failure": str(exc), "failure_step": 0})
                print(f"{tag}: outside domain: {exc}", file=sys.stderr)
                return EXIT_OUTSIDE_DOMAIN
            except ControllerFailure as exc:
                _write_json(os.path.join(args.out, f"summary_{tag}.json"),
                            {"feasible": False, "failure": exc.reason, "failure_step": exc.step})
                print(f"{tag}: {exc}", file=sys.stderr)
                return EXIT_CONTROLLER_FAILURE
            except InvariantViolation as exc:
                print(f"{tag}: invariant violated: {exc}", file=sys.stderr)
                return EXIT_CONTROLLER_FAILURE
            with open(os.path.join(args.out, f"trajectory_{tag}.csv"), "w") as fh:
                fh.write(traj.to_csv())
            summary = traj.summary()
            _write_json(os.path.join(args.out, f"summary_{tag}.json"), summary)
            print(json.dumps({"run": tag, "feasible": summary["feasible"],
                              "final_error": summary["final_error"]}))
            if not traj.feasible:
                code = EXIT_CONTROLLER_FAILURE
    return code


def cmd_compare(cfg: ProjectConfig, args) -> int:
    section = cfg.raw.get("compare")
    if not section:
        raise ConfigError("config has no compare section")
    ladder = load_or_build_ladder(cfg, args.out)
    if not ladder.converged:
        print("ladder not converged; sampling from the last rung", file=sys.stderr)
    seed = args.seed if args.seed is not None else 0
    points = sample_domain(ladder, int(section.get("points", 50)), seed)
    ctls = {name: cfg.estimator(name, ladder) for name in section["controllers"]}
    setpoint = section.get("setpoint", [0.0] * cfg.system.n)
    table = compare(points, ctls, setpoint, int(section.get("T_sim", 100)), seed=seed,
                    check_invariants=not args.no_assert)
    with open(os.path.join(args.out, "comparison.csv"), "w") as fh:
        fh.write(table.to_csv())
    means = table.means()
    means["setpoint"] = list(map(float, setpoint))
    means["T_sim"] = int(section.get("T_sim", 100))
    _write_json(os.path.join(args.out, "means.json"), means)
    print(json.dumps(means, sort_keys=True))
    return EXIT_OK


COMMANDS = {"sets": cmd_sets, "simulate": cmd_simulate, "compare": cmd_compare, "check": cmd_check}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON config path or preset name")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", type=int, default=None, help="sampling seed")
    common.add_argument("--tol", type=float, default=None, help="ladder convergence tolerance")
    common.add_argument("--no-assert", action="store_true", help="downgrade invariant checks to warnings")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="layermpc", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("sets", parents=[common], help="compute the ladder, vertex CSVs and contractivity report")
    p = sub.add_parser("simulate", parents=[common], help="run closed-loop scenarios")
    p.add_argument("--scenario", default=None)
    sub.add_parser("compare", parents=[common], help="compare controllers over sampled initial states")
    sub.add_parser("check", parents=[common], help="contractivity check only")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = ProjectConfig.load(args.config, args.tol)
        os.makedirs(args.out, exist_ok=True)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
