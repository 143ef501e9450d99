"""Command-line interface.

Subcommands:

* ``solve``          -- solve a model document, print root values, and
                        optionally write the solution bundle JSON,
* ``plot-data``      -- evaluate a bundle's value functions on a simplex
                        grid and emit CSV rows for plotting,
* ``simulate``       -- Monte Carlo cross-check of a bundle against its
                        model, printing empirical vs. exact values,
* ``partition-dump`` -- dump the per-stage belief-space partitions.

Exit codes: 0 on success, 1 on solver/numeric failure, 2 on usage or
input errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from .model import ModelError, load_model_file, model_hash
from .partition import CoverageGapError, locate, simplex_grid
from .simulate import estimate_value, rollout, write_traces
from .stage_lp import SolverInternalError
from .value_iteration import (
    DEFAULT_REGION_CAP,
    RegionCapExceeded,
    bundle_from_json,
    bundle_to_json,
    solve_game,
)

USAGE_ERROR = 2
SOLVER_ERROR = 1


def _parse_belief(raw: str) -> np.ndarray:
    try:
        values = np.array([float(x) for x in raw.split(",")], dtype=float)
    except ValueError as exc:
        raise ModelError(f"--belief must be comma-separated numbers: {exc}") from exc
    if values.min() < -1e-9 or abs(values.sum() - 1.0) > 1e-9:
        raise ModelError(f"--belief {raw!r} is not on the probability simplex")
    return np.clip(values, 0.0, None) / values.sum()


def _load_bundle(path):
    with open(path, "r", encoding="utf-8") as fh:
        return bundle_from_json(fh.read())


def cmd_solve(args) -> int:
    model = load_model_file(args.model)
    belief = _parse_belief(args.belief) if args.belief else None
    if belief is not None and belief.shape != (model.n_states,):
        raise ModelError(f"--belief needs {model.n_states} entries, got {belief.shape[0]}")
    bundle = solve_game(
        model,
        horizon=args.horizon,
        epsilon=args.epsilon,
        region_cap=args.region_cap,
        belief=belief,
    )
    leader, follower = bundle.root_values()
    print(f"horizon      = {bundle.horizon}")
    print(f"epsilon      = {bundle.epsilon:.6f}")
    print(f"belief       = [{', '.join(f'{x:.6f}' for x in bundle.belief)}]")
    print(f"v_L(b0)      = {leader:.6f}")
    for name, value in zip(model.states, follower):
        print(f"v_F(b0, {name}) = {value:.6f}")
    for svf in bundle.stages:
        print(f"stage {svf.stage_index}: {len(svf.partition)} regions")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(bundle_to_json(bundle))
        print(f"bundle written to {args.out}")
    return 0


def cmd_plot_data(args) -> int:
    bundle = _load_bundle(args.bundle)
    n = bundle.belief.shape[0]
    grid = simplex_grid(n, args.grid)
    rows = []
    header = (
        ["stage"]
        + [f"b{i + 1}" for i in range(n - 1)]
        + ["region_id", "v_L"]
        + [f"v_F_s{i + 1}" for i in range(n)]
    )
    for svf in bundle.stages:
        for b in grid:
            rid = locate(b, svf.partition)
            theta = svf.theta[rid]
            rows.append(
                [svf.stage_index]
                + [repr(float(x)) for x in b[: n - 1]]
                + [rid, repr(float(b @ theta))]
                + [repr(float(x)) for x in theta]
            )
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
    else:
        writer = csv.writer(sys.stdout)
        writer.writerow(header)
        writer.writerows(rows)
    return 0


def cmd_simulate(args) -> int:
    bundle = _load_bundle(args.bundle)
    model = load_model_file(args.model)
    digest = model_hash(model)
    if digest != bundle.model_hash:
        print(
            f"error: model hash {digest[:12]}... does not match bundle hash "
            f"{bundle.model_hash[:12]}...; refusing to simulate",
            file=sys.stderr,
        )
        return USAGE_ERROR
    estimate = estimate_value(model, bundle, n_episodes=args.episodes, seed=args.seed)
    exact = bundle.leader_value(bundle.belief)
    print(f"episodes     = {estimate.n_episodes}")
    print(f"seed         = {estimate.seed}")
    print(f"mean         = {estimate.mean:.6f}")
    if estimate.stderr is None:
        print("stderr       = n/a")
    else:
        print(f"stderr       = {estimate.stderr:.6f}")
    print(f"exact_v_L    = {exact:.6f}")
    print(f"abs_error    = {abs(estimate.mean - exact):.6f}")
    if estimate.undefined_posterior_events:
        print(f"undefined_posterior_events = {estimate.undefined_posterior_events}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            traces = (rollout(model, bundle, args.seed, i) for i in range(args.episodes))
            write_traces(traces, fh)
        print(f"traces written to {args.out}")
    return 0


def cmd_partition_dump(args) -> int:
    bundle = _load_bundle(args.bundle)
    doc = [
        {
            "stage": svf.stage_index,
            "regions": [
                {
                    "id": region.id,
                    "Pi": [[float(x) for x in row] for row in region.Pi],
                    "provenance": [list(link) for link in region.provenance],
                }
                for region in svf.partition.regions
            ],
        }
        for svf in bundle.stages
    ]
    text = json.dumps(doc, indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="otzposg",
        description="Exact finite-horizon equilibrium solver for turn-based "
        "one-sided partially observable zero-sum games with public actions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve a model document")
    p_solve.add_argument("--model", required=True, help="path to the model JSON document")
    p_solve.add_argument("--horizon", type=int, required=True, help="number of stages (>= 1)")
    p_solve.add_argument("--epsilon", type=float, default=0.0, help="total sacrifice allowance")
    p_solve.add_argument("--belief", default=None, help="override the initial belief, e.g. 0.5,0.5")
    p_solve.add_argument("--out", default=None, help="write the solution bundle JSON here")
    p_solve.add_argument("--region-cap", type=int, default=DEFAULT_REGION_CAP)
    p_solve.set_defaults(func=cmd_solve)

    p_plot = sub.add_parser("plot-data", help="emit value-function CSV over a belief grid")
    p_plot.add_argument("bundle", help="path to a solved bundle JSON")
    p_plot.add_argument("--grid", type=int, default=101, help="points per simplex edge (>= 2)")
    p_plot.add_argument("--out", default=None, help="CSV output path (default: stdout)")
    p_plot.set_defaults(func=cmd_plot_data)

    p_sim = sub.add_parser("simulate", help="Monte Carlo check of a bundle against its model")
    p_sim.add_argument("bundle", help="path to a solved bundle JSON")
    p_sim.add_argument("--model", required=True, help="path to the model JSON document")
    p_sim.add_argument("--episodes", type=int, default=10_000)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out", default=None, help="write episode traces (JSON lines) here")
    p_sim.set_defaults(func=cmd_simulate)

    p_dump = sub.add_parser("partition-dump", help="dump per-stage belief partitions as JSON")
    p_dump.add_argument("bundle", help="path to a solved bundle JSON")
    p_dump.add_argument("--out", default=None, help="output path (default: stdout)")
    p_dump.set_defaults(func=cmd_partition_dump)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if getattr(args, "horizon", 1) < 1:
        print("error: --horizon must be at least 1", file=sys.stderr)
        return USAGE_ERROR
    if getattr(args, "epsilon", 0.0) < 0.0:
        print("error: --epsilon must be nonnegative", file=sys.stderr)
        return USAGE_ERROR
    if getattr(args, "grid", 2) < 2:
        print("error: --grid must be at least 2", file=sys.stderr)
        return USAGE_ERROR
    if getattr(args, "episodes", 1) < 1:
        print("error: --episodes must be at least 1", file=sys.stderr)
        return USAGE_ERROR

    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return USAGE_ERROR
    except (ModelError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: bad input: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (SolverInternalError, RegionCapExceeded, CoverageGapError) as exc:
        print(f"error: solver failure: {exc}", file=sys.stderr)
        return SOLVER_ERROR
    except (ValueError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return SOLVER_ERROR


if __name__ == "__main__":
    sys.exit(main())
