"""Command-line front end.

Four subcommands: `w1` and `ot` run the smoothed solvers on JSON problem
files, `exact` runs the min-cost-flow oracle on the same files, and
`verify` runs the structural property battery. Results are printed as JSON
on stdout (floats in round-trip precision); traces go to CSV via --trace.

Exit codes: 0 success, 2 input error, 3 numeric failure (partial trace is
still written when --trace was given), 4 verification failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from .analysis import (
    DEFAULT_SEED,
    check_monotone_sweep,
    check_nonexpansive,
    check_translation_equivariance,
)
from .blocklp import (
    ConvergenceTrace,
    DualState,
    NumericOverflowError,
    dual_objective,
    operator_norm_1to1,
    primal_from_dual,
    schedule_gamma,
    solve,
    solve_scheduled,
)
from .flowsinkhorn import (
    EdgeFlow,
    FlowProblem,
    flow_constants,
    project_C1,
    project_C2,
    sweep_scaling,
    vertex_dual_from_flow,
    vertex_dual_from_scaling,
    w1_estimate,
)
from .graph import Graph, spanning_tree_flow
from .oracle import exact_ot, exact_w1
from .sinkhorn import OTProblem, ot_constants

__all__ = ["main"]

_SWEEP_CAP = 10 ** 6
_FALLBACK_TOL = 1e-6


class _InputError(Exception):
    pass


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as err:
        raise _InputError(f"cannot read {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise _InputError(f"{path} is not valid JSON: {err}") from err
    if not isinstance(data, dict):
        raise _InputError(f"{path}: expected a JSON object at the top level")
    return data


def _json_gamma(data: dict, args) -> float:
    if args.gamma is not None:
        return args.gamma
    if "gamma" in data:
        gamma = data["gamma"]
        if not isinstance(gamma, (int, float)) or gamma <= 0:
            raise _InputError("JSON field 'gamma' must be a positive number")
        return float(gamma)
    raise _InputError("no --gamma/--epsilon given and the input has no 'gamma'")


def _build_graph(data: dict) -> Graph:
    try:
        spec = data["graph"]
        n = spec["n"]
        edges = [(int(i), int(j), float(w)) for i, j, w in spec["edges"]]
        return Graph(int(n), edges)
    except (KeyError, TypeError, ValueError) as err:
        raise _InputError(f"bad graph description: {err}") from err


def _build_flow(data: dict, gamma: float) -> FlowProblem:
    graph = _build_graph(data)
    try:
        return FlowProblem(graph, data["b1"], data["b2"], gamma)
    except (KeyError, TypeError, ValueError) as err:
        raise _InputError(f"bad flow problem: {err}") from err


def _build_ot(data: dict, gamma: float) -> OTProblem:
    try:
        return OTProblem(data["cost"], data["b1"], data["b2"], gamma)
    except (KeyError, TypeError, ValueError) as err:
        raise _InputError(f"bad transport problem: {err}") from err


def _emit(payload: dict) -> None:
    print(json.dumps(payload))


def _write_trace(trace: ConvergenceTrace | None, path: str | None) -> None:
    if trace is not None and path:
        trace.to_csv(path)


def _record_full_state(trace, problem, u, k, res2_half, half_mass, foc1):
    x = primal_from_dual(problem, u)
    r1 = problem.apply_A1(x) - problem.b1
    foc2 = float(np.abs(problem.apply_A2(x) - problem.b2).sum())
    trace.append(
        k,
        dual_objective(problem, u),
        float(np.abs(r1).sum()),
        res2_half,
        float(x.sum()),
        problem.seminorm_V1(u.u1),
        problem.seminorm_V2(u.u2),
        half_mass=half_mass,
        foc1=foc1,
        foc2=foc2,
    )
    return float(np.abs(r1).sum())


def _run_flow_path(problem: FlowProblem, mode: str, *, max_sweeps, residual_tol):
    """Drive the matrix or scaling iteration with solve()-compatible tracing.

    The scaling rows carry NaN in the half-state columns (res2_l1, and the
    hidden half_mass/foc1): that update fuses both half-steps, so there is
    no half state to measure.
    """
    trace = ConvergenceTrace(problem.gamma, operator_norm_1to1(problem),
                             problem.label)
    g = problem.graph
    u = problem.initial_state()
    f = None
    s = np.ones(g.n)
    try:
        res1 = _record_full_state(trace, problem, u, 0, math.nan, math.nan,
                                  math.nan)
        # patch row 0 half columns to match solve(): no half state yet
        trace.res2_l1[0] = float(
            np.abs(problem.apply_A2(primal_from_dual(problem, u))
                   - problem.b2).sum())
        if mode == "matrix":
            f = EdgeFlow(g, np.exp(-problem.w_eff / problem.gamma))
        k = 0
        while True:
            if residual_tol is not None and res1 <= residual_tol:
                break
            if max_sweeps is not None and k >= max_sweeps:
                break
            k += 1
            if mode == "matrix":
                f1, g1 = project_C1(problem, f)
                lifted = np.concatenate([f1.values, g1.values])
                foc1 = float(np.abs(problem.apply_A1(lifted) - problem.b1).sum())
                res2_half = float(np.abs(f1.values - g1.values).sum())
                half_mass = f1.mass() + g1.mass()
                f = project_C2(f1, g1)
                v = vertex_dual_from_flow(problem, f)
            else:
                s = sweep_scaling(problem, s)
                foc1 = res2_half = half_mass = math.nan
                v = vertex_dual_from_scaling(problem, s)
            u = DualState(v, problem.block_update_2(v))
            res1 = _record_full_state(trace, problem, u, k, res2_half,
                                      half_mass, foc1)
    except NumericOverflowError as err:
        err.trace = trace
        raise
    return u, trace


def _solve_flow(problem: FlowProblem, args):
    max_sweeps = args.max_sweeps
    tol = args.tol
    if max_sweeps is None and tol is None:
        tol = 1e-9
        max_sweeps = _SWEEP_CAP
    if args.path == "stable":
        return solve(problem, max_sweeps=max_sweeps, residual_tol=tol)
    return _run_flow_path(problem, args.path, max_sweeps=max_sweeps,
                          residual_tol=tol)


def cmd_w1(args) -> int:
    data = _load_json(args.input)
    if "graph" not in data:
        raise _InputError("w1 expects a flow problem (with a 'graph' field)")
    trace = None
    try:
        if args.epsilon is not None:
            graph = _build_graph(data)
            mu1 = np.asarray(data["b1"], dtype=float)
            mu2 = np.asarray(data["b2"], dtype=float)
            fbar_mass = spanning_tree_flow(graph, mu1, mu2).mass()
            x0 = fbar_mass if fbar_mass > 0 else 1.0
            d = 2 * graph.p
            gamma = schedule_gamma(args.epsilon, x0, d)
            probe = FlowProblem(graph, mu1, mu2, gamma)
            fbar = spanning_tree_flow(graph, mu1, mu2)
            consts = flow_constants(probe, fbar)
            problem, state, trace, planned_k, fell_back = solve_scheduled(
                lambda g: FlowProblem(graph, mu1, mu2, g),
                args.epsilon,
                X0=x0,
                X=consts.X_gamma,
                U=consts.U_gamma,
                A_norm=2.0,
                d=d,
                sweep_cap=_SWEEP_CAP,
                fallback_tol=_FALLBACK_TOL,
            )
        else:
            problem = _build_flow(data, _json_gamma(data, args))
            state, trace = _solve_flow(problem, args)
    except NumericOverflowError as err:
        _write_trace(err.trace, args.trace)
        where = f"; partial trace at {args.trace}" if args.trace else ""
        print(f"numeric failure: {err}{where}", file=sys.stderr)
        return 3
    _write_trace(trace, args.trace)
    primal, dual = w1_estimate(problem, state)
    _emit({
        "w1_dual": dual,
        "w1_primal": primal,
        "gamma": problem.gamma,
        "sweeps": trace.k[-1],
        "res1_l1": trace.res1_l1[-1],
    })
    return 0


def cmd_ot(args) -> int:
    data = _load_json(args.input)
    if "cost" not in data:
        raise _InputError("ot expects a transport problem (with a 'cost' field)")
    trace = None
    try:
        if args.epsilon is not None:
            cost = np.asarray(data["cost"], dtype=float)
            d = cost.size
            if d < 3:
                raise _InputError(
                    "epsilon scheduling needs a plan with at least 3 entries; "
                    "pass --gamma for tiny instances"
                )
            gamma = schedule_gamma(args.epsilon, 1.0, d)
            consts = ot_constants(_build_ot(data, gamma))
            problem, state, trace, planned_k, fell_back = solve_scheduled(
                lambda g: _build_ot(data, g),
                args.epsilon,
                X0=1.0,
                X=consts.X_gamma,
                U=consts.U_gamma,
                A_norm=2.0,
                d=d,
                sweep_cap=_SWEEP_CAP,
                fallback_tol=_FALLBACK_TOL,
            )
        else:
            problem = _build_ot(data, _json_gamma(data, args))
            max_sweeps, tol = args.max_sweeps, args.tol
            if max_sweeps is None and tol is None:
                tol = 1e-9
                max_sweeps = _SWEEP_CAP
            state, trace = solve(problem, max_sweeps=max_sweeps,
                                 residual_tol=tol)
    except NumericOverflowError as err:
        _write_trace(err.trace, args.trace)
        where = f"; partial trace at {args.trace}" if args.trace else ""
        print(f"numeric failure: {err}{where}", file=sys.stderr)
        return 3
    _write_trace(trace, args.trace)
    x = primal_from_dual(problem, state)
    _emit({
        "ot_dual": dual_objective(problem, state),
        "ot_primal": float(problem.cost @ x),
        "gamma": problem.gamma,
        "sweeps": trace.k[-1],
        "res1_l1": trace.res1_l1[-1],
    })
    return 0


def cmd_exact(args) -> int:
    data = _load_json(args.input)
    if "graph" in data:
        graph = _build_graph(data)
        try:
            value = exact_w1(graph, data["b1"], data["b2"])
        except (KeyError, ValueError) as err:
            raise _InputError(f"bad flow problem: {err}") from err
        _emit({"w1_exact": value})
    elif "cost" in data:
        try:
            value, _plan = exact_ot(data["cost"], data["b1"], data["b2"])
        except (KeyError, ValueError) as err:
            raise _InputError(f"bad transport problem: {err}") from err
        _emit({"ot_exact": value})
    else:
        raise _InputError("input has neither a 'graph' nor a 'cost' field")
    return 0


def _battery_instances(seed: int):
    rng = np.random.default_rng(seed)
    two_node = FlowProblem(
        Graph(2, [(0, 1, 1.0)]), np.array([1.0, 0.0]), np.array([0.0, 1.0]), 0.5
    )
    cost = rng.random((4, 4))
    raw1 = rng.random(4) + 0.5
    raw2 = rng.random(4) + 0.5
    ot = OTProblem(cost, raw1 / raw1.sum(), raw2 / raw2.sum(), 0.5)
    n = 8
    edges = [(i, i + 1, float(rng.uniform(0.5, 2.0))) for i in range(n - 1)]
    for i in range(n):
        for j in range(i + 2, n):
            if rng.random() < 0.3:
                edges.append((i, j, float(rng.uniform(0.5, 2.0))))
    m1 = rng.random(n) + 0.1
    m2 = rng.random(n) + 0.1
    m2 *= m1.sum() / m2.sum()
    flow = FlowProblem(Graph(n, edges), m1, m2, 0.5)
    return [two_node, ot, flow]


def cmd_verify(args) -> int:
    seed = args.seed if args.seed is not None else DEFAULT_SEED
    if args.input:
        data = _load_json(args.input)
        gamma = _json_gamma(data, args)
        if "graph" in data:
            instances = [_build_flow(data, gamma)]
        elif "cost" in data:
            instances = [_build_ot(data, gamma)]
        else:
            raise _InputError("input has neither a 'graph' nor a 'cost' field")
    else:
        instances = _battery_instances(seed)

    all_ok = True
    for problem in instances:
        reports = [
            check_nonexpansive(problem, trials=1000, seed=seed),
            check_translation_equivariance(problem, tau=-1, trials=100, seed=seed),
            check_monotone_sweep(problem, trials=200, seed=seed),
        ]
        for report in reports:
            _emit(report)
            all_ok = all_ok and report["pass"]
        control = check_translation_equivariance(problem, tau=1, trials=10,
                                                 seed=seed)
        control["negative_control"] = True
        _emit(control)
        # the deliberately wrong pairing sign must be caught
        all_ok = all_ok and not control["pass"]
    _emit({"check": "battery", "seed": seed, "pass": all_ok})
    return 0 if all_ok else 4


def _hex_seed(text: str) -> int:
    try:
        return int(text, 16)
    except ValueError as err:
        raise argparse.ArgumentTypeError(
            f"seed must be hexadecimal, got {text!r}"
        ) from err


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sinkflow",
        description="Smoothed Wasserstein-1 and transport solvers on graphs.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p, needs_input=True):
        if needs_input:
            p.add_argument("input", help="problem JSON file")
        else:
            p.add_argument("input", nargs="?", default=None,
                           help="optional problem JSON file")
        group = p.add_mutually_exclusive_group()
        group.add_argument("--gamma", type=float,
                           help="regularization strength (overrides the JSON)")
        group.add_argument("--epsilon", type=float,
                           help="target accuracy; picks gamma and the sweep "
                                "budget automatically")
        p.add_argument("--max-sweeps", type=int, default=None)
        p.add_argument("--tol", type=float, default=None,
                       help="stop when the block-1 residual l1 norm reaches "
                            "this level")
        p.add_argument("--path", choices=("matrix", "scaling", "stable"),
                       default="stable",
                       help="flow iteration variant (default: stable)")
        p.add_argument("--trace", default=None, metavar="FILE",
                       help="write the per-sweep trace CSV here")
        p.add_argument("--seed", type=_hex_seed, default=None, metavar="HEX",
                       help="hexadecimal seed for randomized checks")
        p.add_argument("--deterministic", action="store_true",
                       help="force single-threaded deterministic execution "
                            "(already the default; kept for scripts)")

    common(sub.add_parser("w1", help="smoothed Wasserstein-1 on a graph"))
    common(sub.add_parser("ot", help="smoothed transport between histograms"))
    common(sub.add_parser("exact", help="exact oracle value"))
    common(sub.add_parser("verify", help="structural property battery"),
           needs_input=False)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "w1": cmd_w1,
        "ot": cmd_ot,
        "exact": cmd_exact,
        "verify": cmd_verify,
    }
    try:
        return handlers[args.subcommand](args)
    except _InputError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
