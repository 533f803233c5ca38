"""Shared fixtures: the bundled scenario and cached parameter-grid solves.

The grid fixtures are session-scoped because the dominance, convergence,
and monotonicity checks all consume the same sweeps; solving each grid
point once keeps the whole suite fast.
"""

import dataclasses
import time

import pytest
from hypothesis import HealthCheck, settings

from tieralloc import model, oa
from tieralloc.greedy import greedy_solve

settings.register_profile(
    "suite",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


def with_params(cfg, *, lambda_=None, mu=None, gamma=None, power=None,
                distance_factor=None, convention=None):
    """Copy ``cfg`` with selected knobs replaced."""
    link = cfg.link
    if distance_factor is not None:
        link = dataclasses.replace(link, distance_factor=float(distance_factor))
    weights = cfg.weights
    updates = {}
    if lambda_ is not None:
        updates["lambda_"] = float(lambda_)
    if mu is not None:
        updates["mu"] = float(mu)
    if gamma is not None:
        updates["gamma"] = float(gamma)
    if power is not None:
        updates["total_power_w"] = float(power)
    if convention is not None:
        updates["redundancy_convention"] = convention
    if updates:
        weights = dataclasses.replace(weights, **updates)
    return dataclasses.replace(cfg, link=link, weights=weights)


@pytest.fixture(scope="session")
def default_cfg():
    return model.table1_config()


@pytest.fixture(scope="session")
def df_grid(default_cfg):
    """OA and greedy results over distance factors 1..10 at two lambdas.

    Returns ``(results, elapsed_s)`` with ``results[(lam, df)]`` holding
    ``(oa_outcome, trace, greedy_outcome)``.
    """
    results = {}
    start = time.perf_counter()
    for lam in (0.1, 0.5):
        for df in range(1, 11):
            cfg = with_params(default_cfg, lambda_=lam, distance_factor=df)
            outcome, trace = oa.oa_solve(cfg)
            results[(lam, df)] = (outcome, trace, greedy_solve(cfg))
    return results, time.perf_counter() - start


@pytest.fixture(scope="session")
def power_grid(default_cfg):
    """OA and greedy results over budgets 10..100 W at two lambdas."""
    results = {}
    start = time.perf_counter()
    for lam in (0.1, 0.5):
        for power in range(10, 101, 10):
            cfg = with_params(default_cfg, lambda_=lam, power=power)
            outcome, trace = oa.oa_solve(cfg)
            results[(lam, power)] = (outcome, trace, greedy_solve(cfg))
    return results, time.perf_counter() - start


@pytest.fixture(scope="session")
def gamma_study(default_cfg):
    """OA selections for the QoS-exponent sweep at D_f=5, P=50, lambda=0.1."""
    selections = []
    for gamma in (1.0, 1.5, 2.0, 2.5, 3.0, 4.0):
        cfg = with_params(default_cfg, lambda_=0.1, gamma=gamma,
                          distance_factor=5, power=50)
        outcome, _ = oa.oa_solve(cfg)
        selections.append((gamma, outcome.selection, cfg))
    return selections
