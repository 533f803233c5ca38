"""One-pass tier assignment with lookahead power reservations.

Users are visited in index order.  Each candidate tier is priced at its
minimum power and scored by the utility of the partial assignment built so
far (users not yet assigned contribute nothing).  A tier is admissible only
if, after paying for it, the remaining budget still covers the lowest-tier
minimum power of every unassigned user; without that reservation an early
user could strand a later one below its cheapest tier and make the whole
pass infeasible even though the budget is large enough overall.
"""

from __future__ import annotations

import numpy as np

from . import channel
from . import model as m
from .errors import InfeasibleError

__all__ = ["greedy_solve"]

_BUDGET_SLACK = 1e-12


def _partial_utility(tiers, powers, cfg: m.ScenarioConfig) -> float:
    """Utility of a prefix assignment; unassigned users contribute zero."""
    w = cfg.weights
    eta_q, eta_r, eta_p = m.normalizers(cfg)
    gains = cfg.gains()
    sgn = w.redundancy_convention.sign
    qos_sum = 0.0
    power_sum = 0.0
    redundancy_sum = 0.0
    for idx, (tier, power) in enumerate(zip(tiers, powers)):
        qos_sum += m.qos(tier, cfg.tiers, w)
        power_sum += power
        achieved = channel.rate(power, gains[idx], cfg.link)
        redundancy_sum += sgn * (achieved - cfg.tiers.rate_of(tier))
    return (
        w.qos_weight * eta_q * qos_sum
        - w.lambda_ * eta_p * power_sum
        + w.mu * eta_r * redundancy_sum
    )


def greedy_solve(cfg: m.ScenarioConfig) -> m.SolveOutcome:
    """Assign tiers user by user, spending minimum power for each choice."""
    budget = cfg.weights.total_power_w
    gains = cfg.gains()
    floor_powers = [
        channel.min_power(cfg.tiers.rate_of(1), gains[idx], cfg.link)
        for idx in range(cfg.n_users)
    ]

    tiers: list[int] = []
    powers: list[float] = []
    committed = 0.0
    for user in range(cfg.n_users):
        reserve = sum(floor_powers[user + 1 :])
        best_tier = 0
        best_power = 0.0
        best_score = -np.inf
        for tier in (1, 2, 3):
            need = channel.min_power(cfg.tiers.rate_of(tier), gains[user], cfg.link)
            if committed + need + reserve > budget * (1.0 + _BUDGET_SLACK):
                continue
            score = _partial_utility(tiers + [tier], powers + [need], cfg)
            # >= so that an exact tie upgrades to the richer tier
            if score >= best_score:
                best_score = score
                best_tier = tier
                best_power = need
        if best_tier == 0:
            raise InfeasibleError(
                f"user {user + 1} cannot afford the lowest tier within the "
                f"{budget:.6g} W budget"
            )
        tiers.append(best_tier)
        powers.append(best_power)
        committed += best_power

    selection = m.TierSelection(tuple(tiers))
    power_vec = np.asarray(powers, dtype=float)
    utility = m.utility(selection, power_vec, cfg)
    report = m.check_feasibility(selection, power_vec, cfg)
    return m.SolveOutcome(
        selection=selection,
        powers=power_vec,
        utility=utility,
        objective=-utility,
        feasible=bool(report),
        diagnostics={"spent_w": committed, "reserved_floor_w": sum(floor_powers)},
    )
