"""Command line front end.

Subcommands
-----------
solve       run both solvers on one scenario and print the allocations
sweep       re-solve across one swept parameter and tabulate utilities
trace       dump the per-iteration bound trace of the cut loop
allocation  per-user table comparing the two solvers

Exit codes: 0 success, 1 usage error, 2 bad configuration, 3 infeasible
scenario, 4 solver failure.  All CSV output uses 9 significant digits and
is byte-for-byte deterministic; charts are rendered from the CSV files
after they are written, never from in-memory state, so a chart can always
be reproduced from its CSV alone.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

from . import greedy, model, oa
from .errors import ConfigError, InfeasibleError, SolverError

__all__ = ["main", "build_parser"]

_SWEEP_PARAMS = ("df", "power", "gamma", "lambda")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # exit code 1 for usage problems (argparse defaults to 2)
    def error(self, message):
        raise _UsageError(message)


def _fmt(value: float) -> str:
    return format(float(value), ".9g")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="tieralloc",
        description="Joint tier selection and downlink power allocation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, out_default):
        p.add_argument(
            "--config",
            default=None,
            help="scenario file (key = value lines); defaults to the bundled five-user scenario",
        )
        p.add_argument(
            "--out",
            default=out_default,
            help="directory for CSV and chart output",
        )
        p.add_argument(
            "--redundancy",
            choices=("reward", "paper"),
            default=None,
            help="override the surplus-rate sign convention from the config",
        )
        p.add_argument(
            "--seed",
            type=int,
            default=None,
            help="reserved for randomized scenario generation; currently unused",
        )

    p_solve = sub.add_parser("solve", help="solve one scenario with both algorithms")
    common(p_solve, out_default=None)

    p_sweep = sub.add_parser("sweep", help="solve across a swept parameter")
    common(p_sweep, out_default=".")
    p_sweep.add_argument("--param", required=True, choices=_SWEEP_PARAMS)
    p_sweep.add_argument(
        "--values",
        required=True,
        help="comma separated numeric values for the swept parameter",
    )

    p_trace = sub.add_parser("trace", help="dump the bound trace of the cut loop")
    common(p_trace, out_default=".")

    p_alloc = sub.add_parser("allocation", help="per-user allocation table")
    common(p_alloc, out_default=".")
    return parser


def _load(args) -> model.ScenarioConfig:
    if args.config is None:
        cfg = model.table1_config()
    else:
        cfg = model.load_config(args.config)
    if args.redundancy is not None:
        convention = (
            model.RedundancyConvention.REWARD
            if args.redundancy == "reward"
            else model.RedundancyConvention.PAPER_LITERAL
        )
        cfg = dataclasses.replace(
            cfg,
            weights=dataclasses.replace(cfg.weights, redundancy_convention=convention),
        )
    return cfg


def _write_lines(path: str, lines) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for line in lines:
            handle.write(line + "\n")


def _read_csv(path: str):
    """Rows of a CSV written by this module, comments stripped."""
    with open(path, "r", encoding="utf-8") as handle:
        raw = [line.rstrip("\n") for line in handle]
    rows = [line.split(",") for line in raw if line and not line.startswith("#")]
    return rows[0], rows[1:]


def _plot_lines(path: str, x, series, xlabel: str, ylabel: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label, values in series:
        ax.plot(x, values, marker="o", label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _cmd_solve(args) -> int:
    cfg = _load(args)
    outcome_oa, _ = oa.oa_solve(cfg)
    outcome_greedy = greedy.greedy_solve(cfg)
    for name, outcome in (("outer_approximation", outcome_oa), ("greedy", outcome_greedy)):
        print(f"{name}:")
        print(f"  selection = {outcome.selection.to_string()}")
        print(f"  utility   = {_fmt(outcome.utility)}")
        print(f"  powers_w  = {' '.join(_fmt(p) for p in outcome.powers)}")
        if name == "outer_approximation":
            print(f"  iterations = {outcome.diagnostics['iterations']}")
    if args.out is not None:
        os.makedirs(args.out, exist_ok=True)
        rows = ["algorithm,utility,objective,iterations,selection,powers_w"]
        for name, outcome in (
            ("outer_approximation", outcome_oa),
            ("greedy", outcome_greedy),
        ):
            iterations = outcome.diagnostics.get("iterations", 1)
            powers = "/".join(_fmt(p) for p in outcome.powers)
            rows.append(
                f"{name},{_fmt(outcome.utility)},{_fmt(outcome.objective)},"
                f"{iterations},{outcome.selection.to_string()},{powers}"
            )
        _write_lines(os.path.join(args.out, "solve.csv"), rows)
    return 0


def _sweep_apply(cfg: model.ScenarioConfig, param: str, value: float):
    if param == "df":
        link = dataclasses.replace(cfg.link, distance_factor=value)
        return dataclasses.replace(cfg, link=link)
    if param == "power":
        weights = dataclasses.replace(cfg.weights, total_power_w=value)
        return dataclasses.replace(cfg, weights=weights)
    if param == "gamma":
        weights = dataclasses.replace(cfg.weights, gamma=value)
        return dataclasses.replace(cfg, weights=weights)
    weights = dataclasses.replace(cfg.weights, lambda_=value)
    return dataclasses.replace(cfg, weights=weights)


def _cmd_sweep(args) -> int:
    cfg = _load(args)
    try:
        values = [float(part) for part in args.values.split(",") if part.strip()]
    except ValueError as exc:
        raise _UsageError(f"--values must be comma separated numbers: {exc}") from exc
    if not values:
        raise _UsageError("--values is empty")
    os.makedirs(args.out, exist_ok=True)
    rows = ["param,value,utility_oa,utility_greedy,iters_oa,selection_oa,selection_greedy"]
    for value in values:
        scenario = _sweep_apply(cfg, args.param, value)
        try:
            outcome_oa, _ = oa.oa_solve(scenario)
            outcome_greedy = greedy.greedy_solve(scenario)
        except InfeasibleError as exc:
            print(
                f"warning: skipping {args.param} = {_fmt(value)}: {exc}",
                file=sys.stderr,
            )
            continue
        rows.append(
            f"{args.param},{_fmt(value)},{_fmt(outcome_oa.utility)},"
            f"{_fmt(outcome_greedy.utility)},{outcome_oa.diagnostics['iterations']},"
            f"{outcome_oa.selection.to_string()},{outcome_greedy.selection.to_string()}"
        )
    csv_path = os.path.join(args.out, f"sweep_{args.param}.csv")
    _write_lines(csv_path, rows)

    header, data = _read_csv(csv_path)
    if data:
        x = [float(row[header.index("value")]) for row in data]
        oa_utilities = [float(row[header.index("utility_oa")]) for row in data]
        greedy_utilities = [float(row[header.index("utility_greedy")]) for row in data]
        _plot_lines(
            os.path.join(args.out, f"sweep_{args.param}.png"),
            x,
            [("outer approximation", oa_utilities), ("greedy", greedy_utilities)],
            args.param,
            "utility",
        )
    return 0


def _cmd_trace(args) -> int:
    cfg = _load(args)
    _, trace = oa.oa_solve(cfg)
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "trace.csv")
    _write_lines(csv_path, [f"# epsilon = {_fmt(cfg.epsilon)}"] + trace.csv_rows())

    header, data = _read_csv(csv_path)
    iters = [int(row[header.index("iter")]) for row in data]
    z_ub = [float(row[header.index("z_ub")]) for row in data]
    z_lb = [float(row[header.index("z_lb")]) for row in data]
    _plot_lines(
        os.path.join(args.out, "trace.png"),
        iters,
        [("upper bound", z_ub), ("lower bound", z_lb)],
        "iteration",
        "objective bound",
    )
    return 0


def _cmd_allocation(args) -> int:
    cfg = _load(args)
    outcome_oa, _ = oa.oa_solve(cfg)
    outcome_greedy = greedy.greedy_solve(cfg)
    os.makedirs(args.out, exist_ok=True)
    distances = cfg.distances()
    gains = cfg.gains()
    rows = ["user,distance_m,gain,tier_oa,power_oa_w,tier_greedy,power_greedy_w"]
    for user in range(cfg.n_users):
        rows.append(
            f"{user + 1},{_fmt(distances[user])},{_fmt(gains[user])},"
            f"{outcome_oa.selection.tier_of_user[user]},{_fmt(outcome_oa.powers[user])},"
            f"{outcome_greedy.selection.tier_of_user[user]},{_fmt(outcome_greedy.powers[user])}"
        )
    _write_lines(os.path.join(args.out, "allocation.csv"), rows)
    return 0


_DISPATCH = {
    "solve": _cmd_solve,
    "sweep": _cmd_sweep,
    "trace": _cmd_trace,
    "allocation": _cmd_allocation,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # -h/--help
        return int(exc.code or 0)
    try:
        return _DISPATCH[args.command](args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 3
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
