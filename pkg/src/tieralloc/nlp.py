"""Fixed-selection power allocation: primal-dual interior point + closed form.

With the tiers frozen, the remaining problem in the power vector ``p`` is

    minimize   f(p) = lambda*eta_p*sum(p) - s*mu*eta_r*sum(r_n(p_n) - C_n) - A1
    subject to r_n(p_n) >= C_n,   sum(p) <= P

where ``s`` is the redundancy sign and ``A1`` the (constant) weighted QoS
of the selection, so ``f`` equals the full problem's objective at the
assignment.  :func:`solve_fixed_selection` solves the slack reformulation
``r_n(p_n) - C_n = s_n >= 0`` with a log-barrier on the slacks and on the
power budget, driving the perturbed KKT system to zero with damped Newton
steps.  :func:`analytic_power_oracle` solves the same problem in closed
form (a water-filling level with per-user floors) and exists purely as an
independent correctness check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import model as m
from .errors import InfeasibleError, SolverError

_LN2 = math.log(2.0)

__all__ = [
    "NlpIterate",
    "NlpResult",
    "subproblem_constant",
    "barrier_value",
    "kkt_residual",
    "solve_fixed_selection",
    "analytic_power_oracle",
]

# Barrier schedule and step-control constants.
_TAU_START = 1.0
_TAU_SHRINK = 0.1
_TAU_FINAL = 1e-9
_BOUNDARY_FRACTION = 0.995
_ARMIJO_FACTOR = 0.5
_MAX_HALVINGS = 30
_MAX_INERTIA = 30
_MAX_POLISH = 40
_POLISH_TOL_W = 1e-9
# Randomized feasible draws finish in under a hundred Newton steps; the
# cap only exists to turn true stalls into errors instead of busy loops.
_MAX_NEWTON = 500


@dataclass
class NlpIterate:
    """One primal-dual point: powers, slacks, duals, and the barrier weight.

    ``s``/``z`` pair with the per-user rate constraints (slacks in bit/s);
    ``budget_slack``/``budget_dual`` pair with the total-power constraint.
    """

    p: np.ndarray
    s: np.ndarray
    z: np.ndarray
    budget_slack: float
    budget_dual: float
    tau: float


@dataclass
class NlpResult:
    p_opt: np.ndarray
    objective: float
    kkt_residual: float
    iterations: int
    diagnostics: dict = field(default_factory=dict)


def subproblem_constant(selection: m.TierSelection, cfg: m.ScenarioConfig) -> float:
    """Weighted QoS of the fixed selection, the constant part of the objective."""
    eta_q, _, _ = m.normalizers(cfg)
    total = sum(m.qos(t, cfg.tiers, cfg.weights) for t in selection)
    return cfg.weights.qos_weight * eta_q * total


def _objective(p: np.ndarray, selection: m.TierSelection, cfg: m.ScenarioConfig) -> float:
    # f(p) == -(utility): the QoS constant enters with a minus sign.
    return -m.utility(selection, p, cfg)


def barrier_value(it: NlpIterate, selection: m.TierSelection, cfg: m.ScenarioConfig) -> float:
    """Barrier objective ``f(p) - tau*(sum(log s_n) + log(P - sum(p)))``."""
    budget_room = cfg.weights.total_power_w - float(np.sum(it.p))
    if np.any(it.s <= 0) or budget_room <= 0:
        raise ValueError("barrier requires positive slacks and spare budget")
    return _objective(it.p, selection, cfg) - it.tau * (
        float(np.sum(np.log(it.s))) + math.log(budget_room)
    )


def kkt_residual(it: NlpIterate, selection: m.TierSelection, cfg: m.ScenarioConfig) -> float:
    """Max-norm of the perturbed KKT residuals at the iterate.

    Stacks Lagrangian stationarity in ``p``, the primal residuals of the
    slack reformulation (rate constraints and power budget), and the
    complementarity gaps ``s_i z_i - tau`` of both constraint groups.
    Rate-denominated rows are measured in units of the middle tier rate,
    which makes the norm comparable across bandwidth and tier setups; the
    complementarity products and the power rows are invariant under that
    scaling, so only the rate balance rows are affected.
    """
    w = cfg.weights
    eta_q, eta_r, eta_p = m.normalizers(cfg)
    g = cfg.gains()
    b = cfg.link.bandwidth_hz
    noise = cfg.link.noise_power_w
    sgn = w.redundancy_convention.sign
    rate_unit = cfg.tiers.required_rates_bps[1]

    rate_slope = b * g / (_LN2 * (noise + it.p * g))
    stationarity = (
        w.lambda_ * eta_p - sgn * w.mu * eta_r * rate_slope
        - it.z * rate_slope
        + it.budget_dual
    )
    primal = (cfg.rates(it.p) - cfg.required_rates(selection) - it.s) / rate_unit
    primal_budget = (w.total_power_w - float(np.sum(it.p))) - it.budget_slack
    comp = it.s * it.z - it.tau
    comp_budget = it.budget_slack * it.budget_dual - it.tau
    return max(
        float(np.max(np.abs(stationarity))),
        float(np.max(np.abs(primal))),
        abs(primal_budget),
        float(np.max(np.abs(comp))),
        abs(comp_budget),
    )


def _max_step(x: np.ndarray, dx: np.ndarray, fraction: float) -> float:
    """Largest step in [0, 1] keeping ``x + step*dx >= (1 - fraction)*x``."""
    shrink = dx < 0
    if not np.any(shrink):
        return 1.0
    return float(min(1.0, fraction * np.min(-x[shrink] / dx[shrink])))


def solve_fixed_selection(
    selection: m.TierSelection,
    cfg: m.ScenarioConfig,
    *,
    max_newton: int = _MAX_NEWTON,
) -> NlpResult:
    """Solve the fixed-selection power problem to interior-point optimality.

    Returns a point whose KKT residual (evaluated at ``tau = 0``) is below
    ``1e-8 * (1 + |objective|)``.  Raises :class:`InfeasibleError` when the
    selection's minimum powers exceed the budget, :class:`SolverError` when
    the Newton iteration cap is hit first.
    """
    if len(selection) != cfg.n_users:
        raise m.ConfigError("selection length does not match n_users")
    w = cfg.weights
    budget = w.total_power_w
    p_min = cfg.min_powers(selection)
    need = float(p_min.sum())
    if need > budget * (1.0 + 1e-12):
        raise InfeasibleError(
            f"selection needs at least {need:.6g} W but the power budget "
            f"is {budget:.6g} W"
        )
    slack0 = budget - need
    if slack0 <= 1e-11 * (1.0 + budget):
        # The feasible set collapses to the single point p_min; there is no
        # interior to walk through.
        p = p_min.copy()
        return NlpResult(
            p_opt=p,
            objective=_objective(p, selection, cfg),
            kkt_residual=0.0,
            iterations=0,
            diagnostics={
                "central_objectives": [_objective(p, selection, cfg)],
                "tau_final": 0.0,
                "degenerate_budget": True,
            },
        )

    n = cfg.n_users
    g = cfg.gains()
    noise = cfg.link.noise_power_w
    b = cfg.link.bandwidth_hz
    c2 = cfg.tiers.required_rates_bps[1]
    eta_q, eta_r, eta_p = m.normalizers(cfg)
    sgn = w.redundancy_convention.sign
    # Internally rates are measured in units of C_2 so every residual block
    # is O(1); eta_r * rate == mu-weight * scaled rate by construction.
    bs = b / (_LN2 * c2)
    c_req = cfg.required_rates(selection) / c2
    lam_p = w.lambda_ * eta_p
    a1 = subproblem_constant(selection, cfg)

    def pieces(p):
        width = noise + p * g
        r = bs * np.log1p(p * g / noise)
        rp = bs * g / width
        rpp = -bs * g * g / (width * width)
        return r, rp, rpp

    def residuals(p, s, sp, z, zp, tau):
        r, rp, _ = pieces(p)
        stat = lam_p - sgn * w.mu * rp - z * rp + zp
        prim = r - c_req - s
        prim_b = (budget - p.sum()) - sp
        comp = s * z - tau
        comp_b = sp * zp - tau
        return stat, prim, prim_b, comp, comp_b

    def resid_norm(parts):
        stat, prim, prim_b, comp, comp_b = parts
        return max(
            float(np.max(np.abs(stat))),
            float(np.max(np.abs(prim))),
            abs(prim_b),
            float(np.max(np.abs(comp))),
            abs(comp_b),
        )

    def scaled_f(p):
        r, _, _ = pieces(p)
        return lam_p * float(p.sum()) - sgn * w.mu * float((r - c_req).sum()) - a1

    p = p_min + 0.1 * slack0 / n
    r0, _, _ = pieces(p)
    s = r0 - c_req
    sp = budget - float(p.sum())
    tau = _TAU_START
    z = tau / s
    zp = tau / sp

    total_steps = 0
    central_objectives: list[float] = []
    tau_values = []
    t = _TAU_START
    while t > _TAU_FINAL * (1.0 + 1e-12):
        tau_values.append(t)
        t *= _TAU_SHRINK
    tau_values.append(_TAU_FINAL)

    def curvature_diag(p, s, z):
        # Reduced-system diagonal and its magnitude scale. Under the
        # deficit-counting redundancy sign the reward term is concave, so
        # the raw diagonal can lose positivity far from the boundary; the
        # caller regularizes it by adding an escalating shift.
        _, rp, rpp = pieces(p)
        hess = (-sgn * w.mu - z) * rpp
        base = rp * rp * z / np.maximum(s, 1e-40)
        return hess + base, np.abs(hess) + base

    def primal_merit(p, tau):
        # Barrier value measured with the true slacks recomputed from p,
        # so it stays meaningful when the slack variables drift off the
        # constraint manifold mid-stage. Infinite outside the interior.
        r, _, _ = pieces(p)
        slack = r - c_req
        room = budget - float(p.sum())
        if float(slack.min()) <= 0.0 or room <= 0.0:
            return math.inf
        return scaled_f(p) - tau * (float(np.log(slack).sum()) + math.log(room))

    def merit_slope(p, dp, tau):
        r, rp, _ = pieces(p)
        slack = r - c_req
        room = budget - float(p.sum())
        if float(slack.min()) <= 0.0 or room <= 0.0:
            return math.inf
        grad = lam_p - sgn * w.mu * rp - tau * rp / slack + tau / room
        return float((grad * dp).sum())

    def newton_direction(p, s, sp, z, zp, parts, diag):
        stat, prim, prim_b, comp, comp_b = parts
        _, rp, _ = pieces(p)
        s_safe = np.maximum(s, 1e-40)
        sp_safe = max(sp, 1e-40)
        rhs = (
            -stat
            - rp * (comp + z * prim) / s_safe
            + (comp_b + zp * prim_b) / sp_safe
        )
        # The reduced system is diag + (zp/sp) * ones @ ones.T; solve it
        # by Sherman-Morrison with the rank-1 coefficient arranged as
        # 1/(sp/zp + sum(1/diag)) so an active budget (sp -> 0) cannot
        # overflow or wash out the diagonal.
        inv_rhs = rhs / diag
        inv_one = 1.0 / diag
        coeff = float(inv_rhs.sum()) / (sp_safe / zp + float(inv_one.sum()))
        dp = inv_rhs - coeff * inv_one
        ds = rp * dp + prim
        dsp = -float(dp.sum()) + prim_b
        dz = (-comp - z * ds) / s_safe
        dzp = (-comp_b - zp * dsp) / sp_safe
        return dp, ds, dsp, dz, dzp

    def boundary_step(p, s, sp, z, zp, dp, ds, dsp, dz, dzp):
        # Keep slacks, duals, and the rate argument strictly positive.
        snr_floor = p + noise / g
        return min(
            _max_step(s, ds, _BOUNDARY_FRACTION),
            _max_step(z, dz, _BOUNDARY_FRACTION),
            _max_step(np.array([sp]), np.array([dsp]), _BOUNDARY_FRACTION),
            _max_step(np.array([zp]), np.array([dzp]), _BOUNDARY_FRACTION),
            _max_step(snr_floor, dp, _BOUNDARY_FRACTION),
        )

    delta_warm = 0.0
    for tau in tau_values:
        stage_tol = max(0.01 * tau, 1e-13)
        z = np.maximum(z, 1e-16)
        zp = max(zp, 1e-16)
        while True:
            parts = residuals(p, s, sp, z, zp, tau)
            norm0 = resid_norm(parts)
            if norm0 <= stage_tol:
                break
            if total_steps >= max_newton:
                raise SolverError(
                    f"interior point hit the {max_newton}-step cap with "
                    f"residual {norm0:.3e} at tau {tau:.1e}"
                )
            # A step is accepted when it contracts the residual norm (the
            # Newton regime) or when it makes Armijo progress on the true
            # slack barrier merit (the regime where the concave reward term
            # leaves the diagonal indefinite and the residual cannot
            # contract). If neither test passes, the diagonal shift is
            # escalated tenfold; a large shift turns the direction into
            # scaled steepest descent on the merit, which must accept.
            raw_diag, curv = curvature_diag(p, s, z)
            curv_scale = float(curv.max())
            merit0 = primal_merit(p, tau)
            accepted = False
            delta = delta_warm
            for _ in range(_MAX_INERTIA):
                diag = raw_diag + delta
                if float(diag.min()) > 1e-10 * curv_scale:
                    dp, ds, dsp, dz, dzp = newton_direction(
                        p, s, sp, z, zp, parts, diag
                    )
                    slope = (
                        merit_slope(p, dp, tau)
                        if math.isfinite(merit0)
                        else math.inf
                    )
                    alpha = boundary_step(p, s, sp, z, zp, dp, ds, dsp, dz, dzp)
                    for _ in range(_MAX_HALVINGS):
                        trial = (
                            p + alpha * dp,
                            s + alpha * ds,
                            sp + alpha * dsp,
                            z + alpha * dz,
                            zp + alpha * dzp,
                        )
                        trial_norm = resid_norm(residuals(*trial, tau))
                        if trial_norm <= (1.0 - 1e-4 * alpha) * norm0:
                            accepted = True
                            break
                        if slope < 0.0:
                            merit_t = primal_merit(trial[0], tau)
                            if merit_t <= merit0 + 1e-4 * alpha * slope:
                                accepted = True
                                break
                        alpha *= _ARMIJO_FACTOR
                    if accepted:
                        break
                delta = max(1e-8 * curv_scale, 1e-12) if delta == 0.0 else 10.0 * delta
            if not accepted:
                raise SolverError(
                    f"interior-point line search stalled at residual {norm0:.3e}"
                )
            p, s, sp, z, zp = trial
            delta_warm = delta / 3.0
            total_steps += 1
        central_objectives.append(scaled_f(p))

    # Final polish at tau = 0.  The barrier leaves every active pair at
    # s * z = tau_final, which parks the power of a weakly bound rate
    # constraint (small multiplier) as much as tau_final / (z * slope) watts
    # off its pin, and tilts flat interior rows by tau_final / slack.
    # Progress here is measured in the watts of power error each residual
    # row can still cause: stationarity rows divide by the curvature that
    # resists a power shift, complementarity rows by the dual-times-slope
    # route that drains them.  A raw max norm would instead stall on rows
    # with collapsed slacks, whose 1/s dual updates amplify round-off to
    # ~1e-8 while the powers they control cannot move by more than ~1e-13 W.
    def watt_norm(p, s, sp, z, zp, parts):
        stat, prim, prim_b, comp, comp_b = parts
        _, rp, rpp = pieces(p)
        hess = (-sgn * w.mu - z) * rpp
        diag = np.maximum(
            np.abs(hess) + rp * rp * z / np.maximum(s, 1e-40), 1e-12)
        drain = rp * z + s * diag + 1e-12
        drain_b = zp + sp * max(float(hess.min()), 1e-12) + 1e-12
        return max(
            float(np.max(np.abs(stat) / diag)),
            float(np.max(np.abs(prim) / rp)),
            abs(prim_b),
            float(np.max(np.abs(comp) / drain)),
            abs(comp_b) / drain_b,
        )

    z = np.maximum(z, 1e-16)
    zp = max(zp, 1e-16)
    for _ in range(_MAX_POLISH):
        parts = residuals(p, s, sp, z, zp, 0.0)
        norm0 = watt_norm(p, s, sp, z, zp, parts)
        if norm0 <= _POLISH_TOL_W or total_steps >= max_newton:
            break
        raw_diag, curv = curvature_diag(p, s, z)
        diag = np.maximum(raw_diag, np.maximum(0.05 * curv, 1e-12))
        dp, ds, dsp, dz, dzp = newton_direction(p, s, sp, z, zp, parts, diag)
        alpha = boundary_step(p, s, sp, z, zp, dp, ds, dsp, dz, dzp)
        accepted = False
        for _ in range(_MAX_HALVINGS):
            trial = (
                p + alpha * dp,
                s + alpha * ds,
                sp + alpha * dsp,
                z + alpha * dz,
                zp + alpha * dzp,
            )
            trial_norm = watt_norm(*trial, residuals(*trial, 0.0))
            if trial_norm <= (1.0 - 1e-4 * alpha) * norm0:
                accepted = True
                break
            alpha *= _ARMIJO_FACTOR
        if not accepted:
            # watt-measured round-off floor; keep the last good iterate
            break
        p, s, sp, z, zp = trial
        total_steps += 1
    central_objectives.append(scaled_f(p))

    # Rows whose slack fully collapsed carry the amplified round-off noted
    # above in their dual; recover those duals exactly from stationarity.
    _, rp, _ = pieces(p)
    stiff = z > 1e4 * s
    if bool(np.any(stiff)):
        recovered = (lam_p + zp) / rp - sgn * w.mu
        z = np.where(stiff, np.maximum(recovered, 0.0), z)

    iterate = NlpIterate(
        p=p.copy(),
        s=s * c2,
        z=z / c2,
        budget_slack=sp,
        budget_dual=zp,
        tau=0.0,
    )
    final_residual = kkt_residual(iterate, selection, cfg)
    objective = _objective(p, selection, cfg)
    if final_residual > 1e-8 * (1.0 + abs(objective)):
        raise SolverError(
            f"interior point returned KKT residual {final_residual:.3e} above "
            f"tolerance after {total_steps} steps"
        )
    return NlpResult(
        p_opt=p,
        objective=objective,
        kkt_residual=final_residual,
        iterations=total_steps,
        diagnostics={
            "central_objectives": central_objectives,
            "tau_final": _TAU_FINAL,
            "complementarity_max": float(np.max(np.append(s * z, sp * zp))),
            "budget_dual": float(zp),
        },
    )


def analytic_power_oracle(selection: m.TierSelection, cfg: m.ScenarioConfig) -> np.ndarray:
    """Closed-form optimum of the fixed-selection problem.

    Under the REWARD convention the stationarity conditions reduce to a
    water-filling level with per-user minimum-power floors,

        p_n = max(p_min_n, mu*eta_r*B / (ln2 * (lambda*eta_p + nu)) - noise/g_n),

    where ``nu >= 0`` is the budget multiplier, located by bisection when
    the budget binds.  Under PAPER_LITERAL the objective increases in every
    ``p_n`` and the floors are optimal outright.
    """
    w = cfg.weights
    budget = w.total_power_w
    p_min = cfg.min_powers(selection)
    if float(p_min.sum()) > budget * (1.0 + 1e-12):
        raise InfeasibleError(
            f"selection needs at least {float(p_min.sum()):.6g} W but the "
            f"power budget is {budget:.6g} W"
        )
    if w.redundancy_convention is m.RedundancyConvention.PAPER_LITERAL or w.mu == 0.0:
        return p_min.copy()

    _, eta_r, eta_p = m.normalizers(cfg)
    g = cfg.gains()
    level_num = w.mu * eta_r * cfg.link.bandwidth_hz / _LN2
    base = cfg.link.noise_power_w / g
    lam_p = w.lambda_ * eta_p

    def powers(nu: float) -> np.ndarray:
        return np.maximum(p_min, level_num / (lam_p + nu) - base)

    if lam_p > 0 and float(powers(0.0).sum()) <= budget:
        return powers(0.0)

    hi = max(lam_p, 1e-12)
    while float(powers(hi).sum()) > budget:
        hi *= 2.0
    lo = 0.0
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if float(powers(mid).sum()) > budget:
            lo = mid
        else:
            hi = mid
    return powers(hi)
