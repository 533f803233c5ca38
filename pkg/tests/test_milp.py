"""Master-problem tests: tangent cuts, the LP core, and branch and bound.

Branch and bound is validated against full enumeration over the same LP
relaxation, and the relaxation itself is checked to under-estimate the
true mixed problem on feasible points.
"""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tieralloc import channel, milp, model, nlp
from tieralloc.errors import ConfigError, InfeasibleError

TIERS = model.TierTable((0.77e6, 1.92e6, 3.84e6))


def make_cfg(distances, lam=0.1, mu=0.1, gamma=2.0, power=50.0,
             convention=model.RedundancyConvention.REWARD):
    link = channel.LinkModel(
        carrier_frequency_hz=28e9, bandwidth_hz=5e6, noise_power_w=5e-8,
        reference_distances_m=tuple(distances), distance_factor=1.0)
    w = model.UtilityWeights(
        lambda_=lam, mu=mu, gamma=gamma, r_th_bps=0.77e6,
        total_power_w=power, redundancy_convention=convention)
    return model.ScenarioConfig(
        n_users=len(distances), link=link, tiers=TIERS, weights=w,
        epsilon=1e-3)


def seeded_master(cfg, points):
    mp = milp.MasterProblem(cfg)
    for p in points:
        mp.add_cuts(milp.linearize_rate(np.asarray(p, dtype=float), cfg))
    return mp


class TestRateCut:
    def test_value_is_affine_in_power(self):
        cut = milp.RateCut(user=0, a=2e6, b=1e6, linearization_point=1.0)
        assert cut.value(1.0) == 2e6
        assert cut.value(3.0) == 4e6

    @pytest.mark.parametrize("kw", [
        dict(user=-1, a=1.0, b=1.0, linearization_point=0.0),
        dict(user=0, a=1.0, b=0.0, linearization_point=0.0),
        dict(user=0, a=1.0, b=-1.0, linearization_point=0.0),
        dict(user=0, a=1.0, b=1.0, linearization_point=-0.1),
    ])
    def test_bad_fields_rejected(self, kw):
        with pytest.raises(ConfigError):
            milp.RateCut(**kw)


class TestLinearizeRate:
    def test_origin_tangent(self):
        cfg = make_cfg([5.0])
        (cut,) = milp.linearize_rate(np.zeros(1), cfg)
        g = cfg.gains()[0]
        assert cut.a == 0.0
        assert cut.b == pytest.approx(
            5e6 * g / (math.log(2.0) * 5e-8), rel=1e-12)

    def test_unit_snr_tangent(self):
        cfg = make_cfg([5.0])
        g = cfg.gains()[0]
        p0 = 5e-8 / g
        (cut,) = milp.linearize_rate(np.array([p0]), cfg)
        assert cut.a == pytest.approx(5e6, rel=1e-12)
        assert cut.b == pytest.approx(
            5e6 * g / (math.log(2.0) * 2.0 * 5e-8), rel=1e-12)

    def test_tangency_at_the_linearization_point(self):
        cfg = make_cfg([5, 4, 3])
        p0 = np.array([0.5, 1.5, 0.0])
        cuts = milp.linearize_rate(p0, cfg)
        rates = cfg.rates(p0)
        for n, cut in enumerate(cuts):
            assert cut.user == n
            assert cut.value(p0[n]) == pytest.approx(rates[n], rel=1e-12)

    @given(
        p0=st.floats(0.0, 40.0),
        p=st.floats(0.0, 50.0),
        d=st.floats(1.0, 40.0),
    )
    def test_tangent_over_estimates_the_rate(self, p0, p, d):
        cfg = make_cfg([d])
        (cut,) = milp.linearize_rate(np.array([p0]), cfg)
        true_rate = cfg.rates(np.array([p]))[0]
        assert cut.value(p) >= true_rate - 1e-6 * (1.0 + true_rate)

    def test_wrong_length_rejected(self):
        cfg = make_cfg([5, 4])
        with pytest.raises(ConfigError):
            milp.linearize_rate(np.zeros(3), cfg)

    def test_negative_point_rejected(self):
        cfg = make_cfg([5.0])
        with pytest.raises(ConfigError):
            milp.linearize_rate(np.array([-0.1]), cfg)


class TestMasterProblem:
    def test_cut_bookkeeping(self):
        cfg = make_cfg([5, 4])
        mp = milp.MasterProblem(cfg)
        assert mp.total_cuts() == 0
        mp.add_cuts(milp.linearize_rate(np.zeros(2), cfg))
        mp.add_cuts(milp.linearize_rate(np.ones(2), cfg))
        assert mp.total_cuts() == 4
        assert all(len(bucket) == 2 for bucket in mp.cuts)

    def test_out_of_range_cut_rejected(self):
        cfg = make_cfg([5.0])
        mp = milp.MasterProblem(cfg)
        with pytest.raises(ConfigError):
            mp.add_cuts([milp.RateCut(3, 1.0, 1.0, 0.0)])

    def test_missing_cut_bucket_rejected_at_solve(self):
        cfg = make_cfg([5, 4])
        mp = milp.MasterProblem(cfg)
        mp.add_cuts([milp.linearize_rate(np.zeros(2), cfg)[0]])
        with pytest.raises(ConfigError, match="no rate cut"):
            milp.solve_master(mp)


class TestSolveLp:
    def test_simple_bound_optimum(self):
        res = milp.solve_lp(
            cost=np.array([-1.0]),
            rows=np.array([[1.0]]),
            is_eq=np.array([False]),
            rhs=np.array([0.5]),
            lower=np.zeros(1),
            upper=np.ones(1),
        )
        assert res.feasible
        assert res.x[0] == pytest.approx(0.5, abs=1e-12)
        assert res.objective == pytest.approx(-0.5, abs=1e-12)

    def test_equality_row_is_honored(self):
        res = milp.solve_lp(
            cost=np.array([1.0, -1.0]),
            rows=np.array([[1.0, 1.0]]),
            is_eq=np.array([True]),
            rhs=np.array([1.0]),
            lower=np.zeros(2),
            upper=np.ones(2),
        )
        assert res.feasible
        np.testing.assert_allclose(res.x, [0.0, 1.0], atol=1e-12)
        assert res.x.sum() == pytest.approx(1.0, abs=1e-12)

    def test_infeasible_equality_detected(self):
        res = milp.solve_lp(
            cost=np.array([0.0]),
            rows=np.array([[1.0]]),
            is_eq=np.array([True]),
            rhs=np.array([2.0]),
            lower=np.zeros(1),
            upper=np.ones(1),
        )
        assert not res.feasible

    def test_residuals_reported_small(self):
        rng = np.random.default_rng(7)
        n, m_rows = 6, 4
        rows = rng.uniform(-1.0, 1.0, size=(m_rows, n))
        x_feas = rng.uniform(0.2, 0.8, size=n)
        rhs = rows @ x_feas + 0.1
        res = milp.solve_lp(
            cost=rng.uniform(-1.0, 1.0, size=n),
            rows=rows,
            is_eq=np.zeros(m_rows, dtype=bool),
            rhs=rhs,
            lower=np.zeros(n),
            upper=np.ones(n),
        )
        assert res.feasible
        assert res.primal_infeasibility <= 1e-9
        assert res.dual_infeasibility <= 1e-9
        assert np.all(rows @ res.x <= rhs + 1e-9)


class TestSolveMaster:
    def test_pure_qos_picks_the_top_tier(self):
        cfg = make_cfg([5.0], lam=0.0, mu=0.0, power=50.0)
        mp = seeded_master(cfg, [np.zeros(1), cfg.min_powers(
            model.TierSelection((3,)))])
        sol = milp.solve_master(mp)
        assert sol.selection == model.TierSelection((3,))
        assert sol.nodes_explored >= 1

    def test_starved_budget_is_infeasible(self):
        # The cap of every tangent at full budget sits below the lowest
        # tier requirement, so no indicator assignment fits.
        cfg = make_cfg([5.0], power=0.15)
        mp = seeded_master(cfg, [np.zeros(1)])
        with pytest.raises(InfeasibleError):
            milp.solve_master(mp)
        with pytest.raises(InfeasibleError):
            milp.brute_force_master(mp)

    def test_matches_enumeration_on_the_far_five_user_scenario(self):
        # Five users at distance factor 5, seeded with the tangents taken
        # at the all-lowest-tier floor powers.
        cfg = make_cfg([25, 20, 15, 10, 5])
        mp = seeded_master(
            cfg, [cfg.min_powers(model.TierSelection((1,) * 5))])
        bb = milp.solve_master(mp)
        brute = milp.brute_force_master(mp)
        assert bb.objective == pytest.approx(brute.objective, abs=1e-9)
        assert bb.selection == brute.selection
        assert float(bb.powers.sum()) <= 50.0 + 1e-7

    def test_matches_enumeration_with_a_rich_cut_pool(self):
        cfg = model.table1_config()
        points = [
            cfg.min_powers(model.TierSelection((1,) * 5)),
            cfg.min_powers(model.TierSelection((3,) * 5)),
            np.full(5, 10.0),
        ]
        mp = seeded_master(cfg, points)
        bb = milp.solve_master(mp)
        brute = milp.brute_force_master(mp)
        assert bb.objective == pytest.approx(brute.objective, abs=1e-9)
        assert bb.selection == brute.selection

    def test_surrogates_cover_the_selected_requirements(self):
        cfg = make_cfg([5, 3, 1])
        mp = seeded_master(cfg, [cfg.min_powers(model.TierSelection((2, 2, 2)))])
        sol = milp.solve_master(mp)
        needs = cfg.required_rates(sol.selection)
        assert np.all(sol.rate_surrogates >= needs - 1e-3)

    def test_relaxation_never_exceeds_the_true_optimum(self):
        # Any feasible power vector with its exact rates is feasible in the
        # master, so the master optimum under-estimates every selection.
        cfg = make_cfg([5, 3], lam=0.2, mu=0.1, power=20.0)
        mp = seeded_master(
            cfg, [np.zeros(2), np.full(2, 5.0), np.full(2, 10.0)])
        sol = milp.solve_master(mp)
        best_true = math.inf
        for tiers in itertools.product((1, 2, 3), repeat=2):
            sel = model.TierSelection(tiers)
            if float(cfg.min_powers(sel).sum()) > 20.0:
                continue
            p = nlp.analytic_power_oracle(sel, cfg)
            best_true = min(best_true, -model.utility(sel, p, cfg))
        assert sol.objective <= best_true + 1e-9

    def test_adding_cuts_never_improves_the_bound(self):
        cfg = make_cfg([5, 4, 3], power=30.0)
        mp = seeded_master(cfg, [np.zeros(3)])
        first = milp.solve_master(mp).objective
        mp.add_cuts(milp.linearize_rate(np.full(3, 10.0), cfg))
        second = milp.solve_master(mp).objective
        mp.add_cuts(milp.linearize_rate(np.full(3, 2.0), cfg))
        third = milp.solve_master(mp).objective
        assert second >= first - 1e-12
        assert third >= second - 1e-12

    def test_branch_and_bound_agrees_with_enumeration_randomized(self):
        rng = np.random.default_rng(4242)
        solved = 0
        while solved < 15:
            n = int(rng.integers(1, 6))
            cfg = make_cfg(
                rng.uniform(1.0, 40.0, size=n),
                lam=float(rng.uniform(0.0, 0.6)),
                mu=float(rng.uniform(0.0, 0.35)),
                gamma=float(rng.uniform(0.5, 3.0)),
                power=float(10.0 ** rng.uniform(0.0, 2.0)),
                convention=(model.RedundancyConvention.REWARD
                            if rng.random() < 0.5
                            else model.RedundancyConvention.PAPER_LITERAL),
            )
            points = [rng.uniform(0.0, cfg.weights.total_power_w / n, size=n)
                      for _ in range(int(rng.integers(1, 4)))]
            mp = seeded_master(cfg, points)
            try:
                bb = milp.solve_master(mp)
            except InfeasibleError:
                with pytest.raises(InfeasibleError):
                    milp.brute_force_master(mp)
                continue
            brute = milp.brute_force_master(mp)
            assert bb.objective == pytest.approx(brute.objective, abs=1e-9)
            assert bb.selection == brute.selection
            solved += 1

    def test_enumeration_guard(self):
        cfg = make_cfg(np.linspace(1.0, 12.0, 11))
        mp = seeded_master(cfg, [np.zeros(11)])
        with pytest.raises(ConfigError):
            milp.brute_force_master(mp)


class TestFormatMaster:
    def test_listing_mentions_every_section_and_variable_kind(self):
        cfg = make_cfg([5, 4])
        mp = seeded_master(cfg, [np.zeros(2)])
        text = milp.format_master(mp)
        assert "minimize" in text
        assert "subject to" in text
        assert "bounds" in text
        assert "scaling:" in text
        for token in ("p[1]", "t[2]", "I[1,1]", "I[2,3]"):
            assert token in text
