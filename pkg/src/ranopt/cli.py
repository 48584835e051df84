"""Command-line front end.

Subcommands generate topologies, compute the minimum feasible delay bound,
solve and sweep the scalarized program, run the distributed algorithm, and
simulate a solution.  Every invocation writes a manifest next to its primary
output; re-running with the same arguments reproduces all outputs byte for
byte (no timestamps, full-precision number formatting).

Exit codes: 0 success, 2 infeasible, 3 non-convergence, 4 I/O, 5 validation.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys

import numpy as np

from . import __version__
from .central_solver import SolveReport, SolverConfig, solve, sweep
from .dist_solver import DistConfig
from .dist_solver import run as run_distributed
from .errors import ConvergenceError, InfeasibleError, TopologyError
from .feasibility import brute_force_maxmin, maxmin_throughput
from .perf_model import PrimalState, link_throughput
from .slotted_sim import SimConfig, simulate
from . import topology as topo_mod

EXIT_INFEASIBLE = 2
EXIT_NO_CONVERGENCE = 3
EXIT_IO = 4
EXIT_VALIDATION = 5


def _fmt(x) -> str:
    """Full-precision, locale-independent number formatting."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _digest(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _write_manifest(subcommand: str, args: argparse.Namespace, inputs: list[str],
                    outputs: list[str]) -> None:
    config = {}
    for key, val in sorted(vars(args).items()):
        if key in ("func", "command"):
            continue
        if isinstance(val, (list, tuple)):
            config[key] = list(val)
        else:
            config[key] = val
    manifest = {
        "subcommand": subcommand,
        "config": config,
        "input_digests": {path: _digest(path) for path in inputs},
        "outputs": outputs,
        "seed": getattr(args, "seed", None),
        "version": __version__,
    }
    path = outputs[0] + ".manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if not isinstance(v, str) else v
                              for v in row) + "\n")


def _solution_doc(report: SolveReport, topology) -> dict:
    cfg = report.config
    return {
        "type": "solve_report",
        "lambda1": cfg.lam1,
        "lambda2": cfg.lam2,
        "dc": cfg.d_c,
        "min_dc": report.min_dc,
        "energy": report.energy,
        "utility": report.utility,
        "cost": report.cost,
        "iterations": report.iterations,
        "status": report.status,
        "kkt": {
            "stationarity": report.kkt.stationarity,
            "feasibility": report.kkt.feasibility,
            "complementarity": report.kkt.complementarity,
        },
        "links": [
            {
                "from": ln.tx,
                "to": ln.rx,
                "p": float(report.state.p[li]),
                "r": float(report.state.r[li]),
                "z": float(report.state.z[li]),
                "mu": float(report.multipliers[li]),
                "residual": float(report.residuals[li]),
            }
            for li, ln in enumerate(topology.links)
        ],
    }


def _load_solution(path, topology) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise TopologyError(f"{path}: not valid JSON ({exc})") from exc
    if "links" not in doc or "cost" not in doc:
        raise TopologyError(f"{path}: not a solution file (missing links/cost)")
    m = topology.num_links
    p = np.empty(m)
    r = np.empty(m)
    mu = np.zeros(m)
    seen = 0
    for entry in doc["links"]:
        li = topology.link_index(entry["from"], entry["to"])
        p[li] = entry["p"]
        r[li] = entry["r"]
        mu[li] = entry.get("mu", 0.0)
        seen += 1
    if seen != m:
        raise TopologyError(f"{path}: solution covers {seen} links, topology has {m}")
    doc["_p"], doc["_r"], doc["_mu"] = p, r, mu
    return doc


def _warn_tight_dc(dc: float, min_dc: float) -> None:
    if dc < 4.0 * min_dc:
        print(f"warning: dc={_fmt(dc)} is below 4 x MinDc={_fmt(min_dc)}; "
              f"the feasible region is narrow", file=sys.stderr)


def cmd_gen(args) -> int:
    if args.shape == "linear":
        topo = topo_mod.gen_linear(args.n)
    elif args.shape == "star":
        topo = topo_mod.gen_star(args.n)
    else:
        if args.factor is None:
            raise ValueError("geometric shape requires --factor")
        topo = topo_mod.gen_geometric(args.n, args.factor,
                                      args.seed if args.seed is not None else 0)
    topo_mod.save(topo, args.out)
    _write_manifest("gen", args, [], [args.out])
    print(f"wrote {args.out}: {topo.num_nodes} nodes, {topo.num_links} links")
    return 0


def cmd_mindc(args) -> int:
    topo = topo_mod.load(args.topology)
    if args.method == "bruteforce":
        report = brute_force_maxmin(topo, args.resolution, refine_rounds=args.refine)
    else:
        report = maxmin_throughput(topo, tol=args.tol)
    print(_fmt(report.min_dc))
    if args.out:
        doc = {
            "type": "feasibility_report",
            "method": args.method,
            "x_star": report.x_star,
            "z_star": report.z_star,
            "min_dc": report.min_dc,
            "iterations": report.iterations,
            "gap": report.gap,
            "links": [{"from": ln.tx, "to": ln.rx, "p": float(report.p[li])}
                      for li, ln in enumerate(topo.links)],
        }
        with open(args.out, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        _write_manifest("mindc", args, [args.topology], [args.out])
    return 0


def cmd_solve(args) -> int:
    topo = topo_mod.load(args.topology)
    config = SolverConfig(lam1=args.lambda1, lam2=args.lambda2, d_c=args.dc)
    feas = maxmin_throughput(topo)
    _warn_tight_dc(args.dc, feas.min_dc)
    report = solve(topo, config, feasibility=feas)
    with open(args.out, "w") as fh:
        json.dump(_solution_doc(report, topo), fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest("solve", args, [args.topology], [args.out])
    print(f"cost={_fmt(report.cost)} energy={_fmt(report.energy)} "
          f"utility={_fmt(report.utility)} iterations={report.iterations} "
          f"status={report.status}")
    return 0


def cmd_sweep(args) -> int:
    topo = topo_mod.load(args.topology)
    dcs = [float(v) for v in args.dc_list.split(",") if v]
    lam1s = [float(v) for v in args.lambda1_list.split(",") if v]
    if not dcs or not lam1s:
        raise ValueError("empty --dc-list or --lambda1-list")
    pairs = [(l1, args.lambda2) for l1 in lam1s]
    feas = maxmin_throughput(topo)
    for dc in dcs:
        _warn_tight_dc(dc, feas.min_dc)
    points = sweep(topo, dcs, pairs)
    rows = [[tp.dc, tp.lam1, tp.lam2, tp.energy, tp.utility, tp.cost,
             tp.iterations, tp.status] for tp in points]
    _write_csv(args.out, ["dc", "lambda1", "lambda2", "energy", "utility",
                          "cost", "iterations", "status"], rows)
    _write_manifest("sweep", args, [args.topology], [args.out])
    print(f"wrote {args.out}: {len(points)} points")
    return 0


def cmd_distributed(args) -> int:
    topo = topo_mod.load(args.topology)
    config = DistConfig(lam1=args.lambda1, lam2=args.lambda2, d_c=args.dc,
                        alpha=args.alpha, max_iters=args.iters)
    inputs = [args.topology]
    reference = None
    ref_p = None
    if args.reference:
        doc = _load_solution(args.reference, topo)
        reference = float(doc["cost"])
        ref_p = doc["_p"]
        inputs.append(args.reference)
    watched = []
    for spec_pair in (args.watch or []):
        i, j = (int(v) for v in spec_pair.split(","))
        watched.append(topo.link_index(i, j))
    if not watched:
        watched = [0]
    feas = maxmin_throughput(topo)
    _warn_tight_dc(args.dc, feas.min_dc)
    trace = run_distributed(topo, config, reference=reference)

    header = ["iter", "cost", "cost_err_pct", "max_constraint_violation"]
    for li in watched:
        ln = topo.links[li]
        tag = f"{ln.tx}_{ln.rx}"
        header += [f"p_{tag}", f"r_{tag}", f"mu_{tag}", f"err_pct_{tag}"]
    rows = []
    for k in range(len(trace.cost)):
        row = [k, trace.cost[k], trace.cost_err_pct[k], trace.max_violation[k]]
        for li in watched:
            if ref_p is not None and ref_p[li] != 0:
                err = abs(trace.p[k, li] - ref_p[li]) / abs(ref_p[li]) * 100.0
            else:
                err = math.nan
            row += [trace.p[k, li], trace.r[k, li], trace.mu[k, li], err]
        rows.append(row)
    _write_csv(args.trace_out, header, rows)
    _write_manifest("distributed", args, inputs, [args.trace_out])
    where = (f"converged at iteration {trace.converged_iteration}"
             if trace.converged_iteration is not None
             else f"ran {trace.rounds} iterations")
    print(f"{where}; final cost {_fmt(trace.cost[-1])}")
    return 0


def cmd_simulate(args) -> int:
    topo = topo_mod.load(args.topology)
    doc = _load_solution(args.solution, topo)
    state = PrimalState.from_rates(topo, doc["_p"], doc["_r"])
    config = SimConfig.from_state(state, slots=args.slots, seed=args.seed,
                                  warmup=args.warmup, saturated=args.saturated)
    report = simulate(topo, config)
    x_model = link_throughput(topo, state)
    r = state.r
    rows = []
    for li, ln in enumerate(topo.links):
        analytic = ((1.0 - r[li] / 2.0) / (x_model[li] - r[li])
                    if r[li] < x_model[li] else math.nan)
        rows.append([ln.tx, ln.rx, report.mean_delay[li], report.delay_se[li],
                     analytic, report.throughput[li], x_model[li],
                     report.attempts[li], report.successes[li]])
    _write_csv(args.out, ["link_from", "link_to", "emp_delay", "emp_delay_se",
                          "analytic_delay", "emp_throughput", "analytic_throughput",
                          "attempts", "successes"], rows)
    _write_manifest("simulate", args, [args.topology, args.solution], [args.out])
    print(f"wrote {args.out}: {config.slots} slots, "
          f"{int(report.successes.sum())} deliveries")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ranopt",
        description="Persistence-probability optimization for slotted random access")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a canonical topology file")
    p.add_argument("--shape", required=True, choices=["linear", "star", "geometric"])
    p.add_argument("--n", required=True, type=int)
    p.add_argument("--factor", type=float, default=None,
                   help="communication range over network dimension (geometric)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("mindc", help="minimum feasible delay bound")
    p.add_argument("topology")
    p.add_argument("--method", choices=["solver", "bruteforce"], default="solver")
    p.add_argument("--resolution", type=float, default=0.01,
                   help="grid step for --method bruteforce")
    p.add_argument("--refine", type=int, default=0,
                   help="local refinement rounds for --method bruteforce")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--out", default=None, help="write the feasibility report here")
    p.set_defaults(func=cmd_mindc)

    p = sub.add_parser("solve", help="solve the scalarized program")
    p.add_argument("topology")
    p.add_argument("--lambda1", required=True, type=float)
    p.add_argument("--lambda2", required=True, type=float)
    p.add_argument("--dc", required=True, type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="trace tradeoff curves over dc and lambda1")
    p.add_argument("topology")
    p.add_argument("--dc-list", required=True, help="comma-separated delay bounds")
    p.add_argument("--lambda1-list", required=True, help="comma-separated weights")
    p.add_argument("--lambda2", type=float, default=0.1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("distributed", help="run the price-based distributed solver")
    p.add_argument("topology")
    p.add_argument("--lambda1", required=True, type=float)
    p.add_argument("--lambda2", required=True, type=float)
    p.add_argument("--dc", required=True, type=float)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--trace-out", required=True)
    p.add_argument("--reference", default=None,
                   help="solution JSON used for error curves and early stop")
    p.add_argument("--watch", action="append", default=None, metavar="I,J",
                   help="link to include in the trace columns (repeatable)")
    p.set_defaults(func=cmd_distributed)

    p = sub.add_parser("simulate", help="packet-level simulation of a solution")
    p.add_argument("topology")
    p.add_argument("--solution", required=True)
    p.add_argument("--slots", required=True, type=int)
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--warmup", type=int, default=0)
    p.add_argument("--saturated", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else EXIT_VALIDATION
    try:
        return args.func(args)
    except InfeasibleError as exc:
        print(f"error: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ConvergenceError as exc:
        print(f"error: no convergence: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except (TopologyError, ValueError) as exc:
        print(f"error: validation: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
