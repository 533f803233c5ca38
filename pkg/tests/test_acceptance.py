"""End-to-end delivery checks over the full solver stack.

Every test prints one summary line, so running this file with ``-v -s``
doubles as the sign-off report.  The parameter grids are solved once in
session fixtures and shared across the dominance, convergence, and trend
checks.
"""

import dataclasses
import time

import numpy as np
import pytest

from tieralloc import milp, model, nlp, oa
from tieralloc.errors import InfeasibleError


def _report(num: int, name: str, ok: bool, extra: str = "") -> bool:
    verdict = "PASS" if ok else "FAIL"
    suffix = f" ({extra})" if extra else ""
    print(f"ACCEPTANCE {num} {name}: {verdict}{suffix}")
    return ok


def _variant(cfg, *, df=None, power=None, convention=None):
    link = cfg.link
    if df is not None:
        link = dataclasses.replace(link, distance_factor=float(df))
    weights = cfg.weights
    if power is not None:
        weights = dataclasses.replace(weights, total_power_w=float(power))
    if convention is not None:
        weights = dataclasses.replace(
            weights, redundancy_convention=convention)
    return dataclasses.replace(cfg, link=link, weights=weights)


def test_01_cut_loop_dominates_greedy_on_both_grids(df_grid, power_grid):
    results_df, elapsed_df = df_grid
    results_p, elapsed_p = power_grid
    worst = np.inf
    points = 0
    for results in (results_df, results_p):
        for outcome, _, greedy_outcome in results.values():
            worst = min(worst, outcome.utility - greedy_outcome.utility)
            points += 1
    elapsed = elapsed_df + elapsed_p
    ok = worst >= -1e-9 and elapsed < 60.0
    assert _report(
        1, "dominance over the distance and budget grids", ok,
        f"{points} points, worst margin {worst:.3e}, {elapsed:.1f} s")


def test_02_bounds_close_within_five_iterations(default_cfg, df_grid,
                                                power_grid):
    results_df, _ = df_grid
    results_p, _ = power_grid
    named = {
        "default": results_df[(0.1, 1)][1],
        "far": results_df[(0.1, 5)][1],
    }
    tight_cfg = _variant(default_cfg, df=8, power=30.0)
    _, named["far_tight"] = oa.oa_solve(tight_cfg)
    ok = all(
        len(trace) <= 5 and trace.final_gap <= 1e-3
        for trace in named.values())
    cap = max(
        len(trace)
        for results in (results_df, results_p)
        for _, trace, _ in results.values())
    ok = ok and cap <= 10
    assert _report(
        2, "bound gap closes in five iterations", ok,
        f"named scenarios {[len(t) for t in named.values()]} iters, "
        f"grid max {cap}")


def test_03_interior_point_matches_the_analytic_oracle():
    rng = np.random.default_rng(715517)
    worst_dp = 0.0
    worst_dobj = 0.0
    solved = 0
    while solved < 100:
        n = int(rng.integers(1, 9))
        link = dataclasses.replace(
            model.table1_config().link,
            reference_distances_m=tuple(rng.uniform(1.0, 60.0, size=n)))
        weights = model.UtilityWeights(
            lambda_=float(rng.uniform(0.0, 0.8)),
            mu=0.0,
            gamma=float(rng.uniform(0.5, 4.0)),
            r_th_bps=0.77e6,
            total_power_w=float(10.0 ** rng.uniform(-0.3, 3.2)),
        )
        weights = dataclasses.replace(
            weights, mu=float(rng.uniform(0.0, 1.0 - weights.lambda_)))
        cfg = model.ScenarioConfig(
            n_users=n, link=link, tiers=model.table1_config().tiers,
            weights=weights, epsilon=1e-3)
        sel = model.TierSelection(tuple(rng.integers(1, 4, size=n)))
        if float(cfg.min_powers(sel).sum()) > (
                weights.total_power_w * (1.0 - 1e-9)):
            continue
        res = nlp.solve_fixed_selection(sel, cfg)
        expected = nlp.analytic_power_oracle(sel, cfg)
        worst_dp = max(worst_dp, float(np.max(np.abs(res.p_opt - expected))))
        worst_dobj = max(
            worst_dobj,
            abs(res.objective - (-model.utility(sel, expected, cfg))))
        solved += 1
    ok = worst_dp <= 1e-5 and worst_dobj <= 1e-7
    assert _report(
        3, "power solver equals the water-filling oracle", ok,
        f"100 draws, max power gap {worst_dp:.2e} W, "
        f"max objective gap {worst_dobj:.2e}")


def test_04_branch_and_bound_equals_enumeration():
    rng = np.random.default_rng(90125)
    base = model.table1_config()
    agree = True
    worst = 0.0
    solved = 0
    while solved < 50:
        n = int(rng.integers(1, 7))
        link = dataclasses.replace(
            base.link,
            reference_distances_m=tuple(rng.uniform(1.0, 40.0, size=n)))
        lam = float(rng.uniform(0.0, 0.6))
        weights = model.UtilityWeights(
            lambda_=lam,
            mu=float(rng.uniform(0.0, min(0.35, 1.0 - lam))),
            gamma=float(rng.uniform(0.5, 3.0)),
            r_th_bps=0.77e6,
            total_power_w=float(10.0 ** rng.uniform(0.0, 2.0)),
            redundancy_convention=(
                model.RedundancyConvention.REWARD if rng.random() < 0.5
                else model.RedundancyConvention.PAPER_LITERAL),
        )
        cfg = model.ScenarioConfig(
            n_users=n, link=link, tiers=base.tiers, weights=weights,
            epsilon=1e-3)
        mp = milp.MasterProblem(cfg)
        for _ in range(int(rng.integers(1, 4))):
            point = rng.uniform(
                0.0, weights.total_power_w / n, size=n)
            mp.add_cuts(milp.linearize_rate(point, cfg))
        try:
            bb = milp.solve_master(mp)
        except InfeasibleError:
            with pytest.raises(InfeasibleError):
                milp.brute_force_master(mp)
            continue
        brute = milp.brute_force_master(mp)
        worst = max(worst, abs(bb.objective - brute.objective))
        agree = agree and bb.selection == brute.selection
        solved += 1
    ok = agree and worst <= 1e-9
    assert _report(
        4, "branch and bound equals brute force", ok,
        f"50 masters, max objective gap {worst:.2e}, "
        f"selections {'all equal' if agree else 'diverged'}")


def test_05_utility_trends_match_the_sweeps(df_grid, power_grid):
    results_df, _ = df_grid
    results_p, _ = power_grid
    ok = True
    for lam in (0.1, 0.5):
        df_utils = [results_df[(lam, df)][0].utility for df in range(1, 11)]
        for earlier, later in zip(df_utils, df_utils[1:]):
            ok = ok and later <= earlier + 1e-9
        p_utils = [results_p[(lam, power)][0].utility
                   for power in range(10, 101, 10)]
        for earlier, later in zip(p_utils, p_utils[1:]):
            ok = ok and later >= earlier - 1e-9
    assert _report(
        5, "utility falls with distance and rises with budget", ok)


def test_06_richer_tiers_migrate_to_nearer_users_first(gamma_study):
    top_counts = [
        sum(1 for t in sel if t == 3) for _, sel, _ in gamma_study]
    ok = all(b >= a for a, b in zip(top_counts, top_counts[1:]))
    distances = gamma_study[0][2].distances()
    for (_, before, _), (_, after, _) in zip(gamma_study, gamma_study[1:]):
        t1 = before.tier_of_user
        t2 = after.tier_of_user
        upgraded = [u for u in range(len(t1)) if t2[u] > t1[u]]
        skipped = [u for u in range(len(t1))
                   if t2[u] == t1[u] and t1[u] < 3]
        ok = ok and all(
            distances[u] < distances[v] for u in upgraded for v in skipped)
    assert _report(
        6, "QoS exponent pulls top tiers toward near users", ok,
        f"tier-3 counts {top_counts}")


def test_07_deficit_convention_pins_powers_to_the_floors(default_cfg):
    ok = True
    worst = 0.0
    for df in (1, 5):
        cfg = _variant(
            default_cfg, df=df,
            convention=model.RedundancyConvention.PAPER_LITERAL)
        outcome, _ = oa.oa_solve(cfg)
        floors = cfg.min_powers(outcome.selection)
        gapw = float(np.max(np.abs(outcome.powers - floors)))
        worst = max(worst, gapw)
        ok = ok and gapw <= 1e-6
    assert _report(
        7, "deficit convention spends only the minimum powers", ok,
        f"max floor gap {worst:.2e} W")


def test_08_single_solve_is_subsecond(default_cfg):
    start = time.perf_counter()
    outcome, _ = oa.oa_solve(default_cfg)
    elapsed = time.perf_counter() - start
    ok = elapsed < 1.0 and outcome.feasible
    assert _report(
        8, "five-user solve finishes under a second", ok,
        f"{elapsed * 1e3:.0f} ms")
