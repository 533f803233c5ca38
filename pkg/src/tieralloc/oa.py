"""Outer approximation: alternate fixed-selection solves with a cut master.

Each round solves the continuous power problem for one tier selection
(an upper bound on the mixed-integer optimum, recorded as ``z_ub`` through
the running incumbent), linearizes every user's rate curve at that solution,
and hands the accumulated cuts to the master search, whose optimum is a
lower bound ``z_lb``.  The loop stops when the bound gap falls below the
scenario tolerance or when the master proposes a selection that was already
solved; because the master carries a tangent cut taken at each visited
solution, a repeat forces the bounds together, so the second rule is a
numerical backstop rather than a separate convergence mechanism.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import milp
from . import model as m
from . import nlp
from .errors import InfeasibleError, SolverError

__all__ = ["OaRecord", "OaTrace", "initial_selection", "gap", "oa_solve"]


@dataclass(frozen=True)
class OaRecord:
    iteration: int
    z_ub: float
    z_lb: float
    gap: float
    selection: m.TierSelection


@dataclass
class OaTrace:
    records: list[OaRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def final_gap(self) -> float:
        if not self.records:
            raise ValueError("empty trace has no gap")
        return self.records[-1].gap

    def csv_rows(self) -> list[str]:
        rows = ["iter,z_ub,z_lb,gap,selection"]
        for rec in self.records:
            rows.append(
                f"{rec.iteration},{rec.z_ub:.9g},{rec.z_lb:.9g},"
                f"{rec.gap:.9g},{rec.selection.to_string()}"
            )
        return rows


def initial_selection(cfg: m.ScenarioConfig) -> m.TierSelection:
    """Everyone on the lowest tier, the cheapest selection to power."""
    return m.TierSelection((1,) * cfg.n_users)


def gap(z_ub: float, z_lb: float) -> float:
    return abs(z_ub - z_lb)


def oa_solve(
    cfg: m.ScenarioConfig,
    initial: m.TierSelection | None = None,
    max_iterations: int = 50,
):
    """Solve the joint tier and power problem; returns (outcome, trace).

    Raises :class:`InfeasibleError` when even the all-lowest-tier selection
    exceeds the power budget, and :class:`SolverError` (with a ``trace``
    attribute) when the bounds fail to close within ``max_iterations``.
    """
    fallback = initial_selection(cfg)
    floor_need = float(np.sum(cfg.min_powers(fallback)))
    budget = cfg.weights.total_power_w
    if floor_need > budget * (1.0 + 1e-12):
        raise InfeasibleError(
            f"even the lowest tier for every user needs {floor_need:.6g} W "
            f"but the power budget is {budget:.6g} W"
        )

    selection = fallback if initial is None else initial
    mp = milp.MasterProblem(cfg)
    visited: dict[m.TierSelection, nlp.NlpResult | None] = {}
    incumbent_objective = float("inf")
    incumbent_powers: np.ndarray | None = None
    incumbent_selection: m.TierSelection | None = None
    trace = OaTrace()
    nlp_solves = 0
    master_nodes = 0
    newton_steps = 0
    termination = "iteration_cap"

    for iteration in range(1, max_iterations + 1):
        if selection not in visited:
            try:
                result = nlp.solve_fixed_selection(selection, cfg)
            except InfeasibleError:
                result = None
                if mp.total_cuts() == 0:
                    selection = fallback
                    result = nlp.solve_fixed_selection(selection, cfg)
            visited[selection] = result
            nlp_solves += 1
            if result is not None:
                newton_steps += result.iterations
                if result.objective < incumbent_objective:
                    incumbent_objective = result.objective
                    incumbent_powers = result.p_opt.copy()
                    incumbent_selection = selection
                mp.add_cuts(milp.linearize_rate(result.p_opt, cfg))

        master = milp.solve_master(mp)
        master_nodes += master.nodes_explored
        z_lb = master.objective
        bound_gap = gap(incumbent_objective, z_lb)
        trace.records.append(
            OaRecord(iteration, incumbent_objective, z_lb, bound_gap, selection)
        )
        if bound_gap <= cfg.epsilon:
            termination = "gap"
            break
        if master.selection in visited:
            termination = "repeated_selection"
            break
        selection = master.selection
    else:
        err = SolverError(
            f"bounds did not close within {max_iterations} iterations "
            f"(gap {trace.final_gap:.6g}, tolerance {cfg.epsilon:.6g})"
        )
        err.trace = trace
        raise err

    assert incumbent_powers is not None and incumbent_selection is not None
    report = m.check_feasibility(incumbent_selection, incumbent_powers, cfg)
    outcome = m.SolveOutcome(
        selection=incumbent_selection,
        powers=incumbent_powers,
        utility=-incumbent_objective,
        objective=incumbent_objective,
        feasible=bool(report),
        diagnostics={
            "iterations": len(trace),
            "termination": termination,
            "final_gap": trace.final_gap,
            "z_lb": trace.records[-1].z_lb,
            "nlp_solves": nlp_solves,
            "master_nodes": master_nodes,
            "newton_steps": newton_steps,
            "cuts": mp.total_cuts(),
        },
    )
    return outcome, trace
