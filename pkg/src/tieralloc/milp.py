"""Tangent-cut master problem: bounded-variable simplex plus branch and bound.

The master linearizes each user's concave rate curve with accumulated
tangent cuts and optimizes jointly over tier indicators ``I``, powers, and
per-user rate surrogates ``t_n`` subject to

    t_n <= a_k + b_k * (p_n - p0_k)   for every cut k of user n,
    t_n >= sum_i C_i * I_{n,i},       sum_n p_n <= P,   sum_i I_{n,i} = 1.

Its optimum under-estimates the true mixed-integer optimum, which makes it
the lower-bound oracle of the outer-approximation loop.  The LP relaxations
are solved by a dense primal simplex with general variable bounds and
Bland's anti-cycling rule; integrality is enforced by branch and bound.
:func:`brute_force_master` enumerates all ``3**N`` selections with the same
LP core and exists as an independent check on the search.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import model as m
from .errors import ConfigError, InfeasibleError, SolverError

_LN2 = math.log(2.0)

__all__ = [
    "RateCut",
    "MasterProblem",
    "MilpSolution",
    "linearize_rate",
    "solve_master",
    "brute_force_master",
    "format_master",
]

_FEAS_TOL = 1e-9
_COST_TOL = 1e-9
_INT_TOL = 1e-6
_PRUNE_TOL = 1e-9
_RATIO_EPS = 1e-11


@dataclass(frozen=True)
class RateCut:
    """Tangent over-estimator of one user's rate curve.

    ``value(p) = a + b * (p - linearization_point)`` with ``a`` the exact
    rate at the linearization point and ``b`` the slope there; concavity
    makes the tangent an upper bound on the true rate everywhere.
    """

    user: int
    a: float
    b: float
    linearization_point: float

    def __post_init__(self) -> None:
        if self.user < 0:
            raise ConfigError("cut user index must be nonnegative")
        if not self.b > 0:
            raise ConfigError("cut slope must be positive")
        if self.linearization_point < 0:
            raise ConfigError("linearization point must be nonnegative")

    def value(self, p: float) -> float:
        return self.a + self.b * (p - self.linearization_point)


def linearize_rate(p_point, cfg: m.ScenarioConfig) -> list[RateCut]:
    """Tangent cuts for all users at the power vector ``p_point``."""
    p = np.asarray(p_point, dtype=float)
    if p.shape != (cfg.n_users,):
        raise ConfigError("linearization point length does not match n_users")
    if np.any(p < 0):
        raise ConfigError("linearization powers must be nonnegative")
    g = cfg.gains()
    values = cfg.rates(p)
    slopes = cfg.link.bandwidth_hz * g / (_LN2 * (cfg.link.noise_power_w + p * g))
    return [
        RateCut(n, float(values[n]), float(slopes[n]), float(p[n]))
        for n in range(cfg.n_users)
    ]


@dataclass
class MasterProblem:
    """Scenario plus the accumulated cut pool, grouped per user."""

    cfg: m.ScenarioConfig
    cuts: list[list[RateCut]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.cuts:
            self.cuts = [[] for _ in range(self.cfg.n_users)]
        if len(self.cuts) != self.cfg.n_users:
            raise ConfigError("cut pool must have one bucket per user")

    def add_cuts(self, cuts) -> None:
        for cut in cuts:
            if not 0 <= cut.user < self.cfg.n_users:
                raise ConfigError(f"cut user index {cut.user} out of range")
            self.cuts[cut.user].append(cut)

    def total_cuts(self) -> int:
        return sum(len(bucket) for bucket in self.cuts)


@dataclass
class MilpSolution:
    selection: m.TierSelection
    powers: np.ndarray
    rate_surrogates: np.ndarray
    objective: float
    nodes_explored: int


# --------------------------------------------------------------------------
# LP core: primal simplex on  min c.x  s.t.  A x (<=|=) b,  lower <= x <= upper.
# Rows are equilibrated by their largest coefficient, so the 1e-9 feasibility
# and reduced-cost tolerances apply to the scaled system.


@dataclass
class LpResult:
    feasible: bool
    x: np.ndarray
    objective: float
    iterations: int
    primal_infeasibility: float
    dual_infeasibility: float


def _simplex(a, b, cost, lower, upper, basis, state, max_iter):
    """Run primal simplex to optimality, mutating ``basis`` and ``state``.

    ``state`` per column: 0 nonbasic at lower, 1 nonbasic at upper, 2 basic.
    Entering and leaving variables follow Bland's lowest-index rule.
    """
    n_rows = a.shape[0]
    iters = 0
    while True:
        iters += 1
        if iters > max_iter:
            raise SolverError("simplex cycling guard tripped (iteration cap)")
        basis_matrix = a[:, basis]
        x = np.where(state == 1, upper, lower)
        x[basis] = 0.0
        try:
            x_basic = np.linalg.solve(basis_matrix, b - a @ x)
            y = np.linalg.solve(basis_matrix.T, cost[basis])
        except np.linalg.LinAlgError as exc:
            raise SolverError("singular basis in simplex") from exc
        x[basis] = x_basic
        reduced = cost - a.T @ y

        movable = upper > lower
        enter_lo = (state == 0) & movable & (reduced < -_COST_TOL)
        enter_hi = (state == 1) & movable & (reduced > _COST_TOL)
        eligible = np.nonzero(enter_lo | enter_hi)[0]
        if eligible.size == 0:
            return x, iters - 1
        j = int(eligible[0])
        direction = 1.0 if state[j] == 0 else -1.0
        w = np.linalg.solve(basis_matrix, a[:, j])
        basic_rate = -direction * w

        theta = np.full(n_rows, np.inf)
        inc = basic_rate > _RATIO_EPS
        if np.any(inc):
            room = np.maximum(upper[basis][inc] - x_basic[inc], 0.0)
            theta[inc] = room / basic_rate[inc]
        dec = basic_rate < -_RATIO_EPS
        if np.any(dec):
            room = np.maximum(x_basic[dec] - lower[basis][dec], 0.0)
            theta[dec] = room / (-basic_rate[dec])
        theta_basic = float(theta.min()) if n_rows else math.inf
        theta_self = upper[j] - lower[j]

        if theta_self <= theta_basic:
            if not math.isfinite(theta_self):
                raise SolverError("unbounded LP direction")
            state[j] = 1 - state[j]
            continue
        if not math.isfinite(theta_basic):
            raise SolverError("unbounded LP direction")
        near = theta <= theta_basic + 1e-15 + 1e-9 * theta_basic
        candidates = np.nonzero(near)[0]
        k = int(candidates[np.argmin(np.asarray(basis)[candidates])])
        leaving = basis[k]
        state[leaving] = 1 if basic_rate[k] > 0 else 0
        state[j] = 2
        basis[k] = j


def solve_lp(cost, rows, is_eq, rhs, lower, upper, max_iter: int = 20000) -> LpResult:
    """Two-phase bounded-variable primal simplex.

    All structural bounds must be finite.  Returns ``feasible=False`` when
    phase 1 cannot zero the artificial variables.
    """
    a = np.asarray(rows, dtype=float)
    b = np.asarray(rhs, dtype=float).copy()
    cost = np.asarray(cost, dtype=float)
    is_eq = np.asarray(is_eq, dtype=bool)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    n_rows, n_struct = a.shape

    scale = np.maximum(np.abs(a).max(axis=1), 1e-12)
    a = a / scale[:, None]
    b = b / scale

    columns = [a]
    col_lower = [lower]
    col_upper = [upper]
    slack_of_row = np.full(n_rows, -1, dtype=int)
    next_col = n_struct
    for i in range(n_rows):
        if not is_eq[i]:
            col = np.zeros((n_rows, 1))
            col[i, 0] = 1.0
            columns.append(col)
            col_lower.append([0.0])
            col_upper.append([np.inf])
            slack_of_row[i] = next_col
            next_col += 1

    residual = b - a @ lower
    basis: list[int] = []
    artificial: list[int] = []
    art_columns = []
    for i in range(n_rows):
        if not is_eq[i] and residual[i] >= 0.0:
            basis.append(slack_of_row[i])
            continue
        col = np.zeros((n_rows, 1))
        col[i, 0] = -1.0 if (not is_eq[i] or residual[i] < 0.0) else 1.0
        if is_eq[i]:
            col[i, 0] = 1.0 if residual[i] >= 0.0 else -1.0
        art_columns.append(col)
        artificial.append(next_col)
        basis.append(next_col)
        next_col += 1
    columns.extend(art_columns)
    col_lower.extend([[0.0]] * len(art_columns))
    col_upper.extend([[np.inf]] * len(art_columns))

    full = np.hstack(columns)
    full_lower = np.concatenate([np.asarray(part, dtype=float).ravel() for part in col_lower])
    full_upper = np.concatenate([np.asarray(part, dtype=float).ravel() for part in col_upper])
    n_total = full.shape[1]
    state = np.zeros(n_total, dtype=int)
    state[basis] = 2
    basis = list(basis)

    iterations = 0
    if artificial:
        phase1_cost = np.zeros(n_total)
        phase1_cost[artificial] = 1.0
        x, used = _simplex(full, b, phase1_cost, full_lower, full_upper, basis, state, max_iter)
        iterations += used
        if float(x[artificial].sum()) > _FEAS_TOL * (1.0 + float(np.abs(b).max())):
            return LpResult(False, np.full(n_struct, np.nan), math.inf, iterations, math.inf, math.inf)
        full_upper[artificial] = 0.0

    phase2_cost = np.zeros(n_total)
    phase2_cost[:n_struct] = cost
    x, used = _simplex(full, b, phase2_cost, full_lower, full_upper, basis, state, max_iter)
    iterations += used

    primal_inf = float(np.max(np.abs(full @ x - b))) if n_rows else 0.0
    bound_inf = float(np.max(np.maximum(full_lower - x, x - full_upper), initial=0.0))
    primal_inf = max(primal_inf, bound_inf)
    basis_matrix = full[:, basis]
    y = np.linalg.solve(basis_matrix.T, phase2_cost[basis])
    reduced = phase2_cost - full.T @ y
    movable = full_upper > full_lower
    dual_terms = np.zeros(n_total)
    at_lower = (state == 0) & movable
    at_upper = (state == 1) & movable
    dual_terms[at_lower] = np.maximum(0.0, -reduced[at_lower])
    dual_terms[at_upper] = np.maximum(0.0, reduced[at_upper])
    dual_terms[state == 2] = np.abs(reduced[state == 2])
    dual_inf = float(dual_terms.max()) if n_total else 0.0

    x_struct = x[:n_struct].copy()
    return LpResult(
        True,
        x_struct,
        float(phase2_cost[: n_struct] @ x_struct),
        iterations,
        primal_inf,
        dual_inf,
    )


# --------------------------------------------------------------------------
# Master construction and search.


@dataclass
class _MasterLp:
    cost: np.ndarray
    rows: np.ndarray
    is_eq: np.ndarray
    rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    n: int
    power_scale: float
    rate_scale: float

    def idx_p(self, user: int) -> int:
        return user

    def idx_t(self, user: int) -> int:
        return self.n + user

    def idx_i(self, user: int, tier: int) -> int:
        return 2 * self.n + 3 * user + (tier - 1)


def _build_master_lp(mp: MasterProblem) -> _MasterLp:
    cfg = mp.cfg
    n = cfg.n_users
    for user, bucket in enumerate(mp.cuts):
        if not bucket:
            raise ConfigError(f"user {user + 1} has no rate cut")
    w = cfg.weights
    eta_q, _, _ = m.normalizers(cfg)
    budget = w.total_power_w
    c2 = cfg.tiers.required_rates_bps[1]
    c_hat = np.asarray(cfg.tiers.required_rates_bps) / c2
    sgn = w.redundancy_convention.sign

    n_vars = 5 * n
    cost = np.zeros(n_vars)
    lower = np.zeros(n_vars)
    upper = np.ones(n_vars)
    lp = _MasterLp(
        cost=cost,
        rows=np.zeros((0, 0)),
        is_eq=np.zeros(0, dtype=bool),
        rhs=np.zeros(0),
        lower=lower,
        upper=upper,
        n=n,
        power_scale=budget,
        rate_scale=c2,
    )
    for user in range(n):
        cost[lp.idx_p(user)] = w.lambda_
        cost[lp.idx_t(user)] = -sgn * w.mu
        for tier in (1, 2, 3):
            q = m.qos(tier, cfg.tiers, w)
            cost[lp.idx_i(user, tier)] = sgn * w.mu * c_hat[tier - 1] - w.qos_weight * eta_q * q
        cap = min(
            (cut.a - cut.b * cut.linearization_point) / c2 + cut.b * budget / c2
            for cut in mp.cuts[user]
        )
        upper[lp.idx_t(user)] = max(cap, 0.0)

    rows: list[np.ndarray] = []
    rhs: list[float] = []
    eq: list[bool] = []
    for user in range(n):
        for cut in mp.cuts[user]:
            row = np.zeros(n_vars)
            row[lp.idx_t(user)] = 1.0
            row[lp.idx_p(user)] = -cut.b * budget / c2
            rows.append(row)
            rhs.append((cut.a - cut.b * cut.linearization_point) / c2)
            eq.append(False)
    for user in range(n):
        row = np.zeros(n_vars)
        for tier in (1, 2, 3):
            row[lp.idx_i(user, tier)] = c_hat[tier - 1]
        row[lp.idx_t(user)] = -1.0
        rows.append(row)
        rhs.append(0.0)
        eq.append(False)
    row = np.zeros(n_vars)
    row[: n] = 1.0
    rows.append(row)
    rhs.append(1.0)
    eq.append(False)
    for user in range(n):
        row = np.zeros(n_vars)
        for tier in (1, 2, 3):
            row[lp.idx_i(user, tier)] = 1.0
        rows.append(row)
        rhs.append(1.0)
        eq.append(True)

    lp.rows = np.vstack(rows)
    lp.rhs = np.asarray(rhs)
    lp.is_eq = np.asarray(eq, dtype=bool)
    return lp


def _solve_node(lp: _MasterLp, fixes: dict) -> LpResult:
    lower = lp.lower.copy()
    upper = lp.upper.copy()
    for (user, tier), value in fixes.items():
        idx = lp.idx_i(user, tier)
        lower[idx] = float(value)
        upper[idx] = float(value)
    return solve_lp(lp.cost, lp.rows, lp.is_eq, lp.rhs, lower, upper)


def _propagate(fixes: dict, n: int):
    """Close fixes under the one-hot rows; ``None`` when contradictory."""
    fixes = dict(fixes)
    changed = True
    while changed:
        changed = False
        for user in range(n):
            values = {tier: fixes.get((user, tier)) for tier in (1, 2, 3)}
            ones = [tier for tier, v in values.items() if v == 1]
            zeros = [tier for tier, v in values.items() if v == 0]
            if len(ones) > 1 or len(zeros) == 3:
                return None
            if ones:
                for tier in (1, 2, 3):
                    if tier != ones[0] and values[tier] != 0:
                        fixes[(user, tier)] = 0
                        changed = True
            elif len(zeros) == 2:
                remaining = next(t for t in (1, 2, 3) if t not in zeros)
                if values[remaining] != 1:
                    fixes[(user, remaining)] = 1
                    changed = True
    return fixes


def _decode(lp: _MasterLp, res: LpResult) -> MilpSolution:
    n = lp.n
    tiers = []
    for user in range(n):
        values = [res.x[lp.idx_i(user, tier)] for tier in (1, 2, 3)]
        tiers.append(1 + int(np.argmax(values)))
    powers = res.x[:n] * lp.power_scale
    surrogates = res.x[n : 2 * n] * lp.rate_scale
    return MilpSolution(
        selection=m.TierSelection(tuple(tiers)),
        powers=powers,
        rate_surrogates=surrogates,
        objective=res.objective,
        nodes_explored=0,
    )


def solve_master(mp: MasterProblem) -> MilpSolution:
    """Exact master optimum via branch and bound on the tier indicators.

    Branches on the most fractional indicator (ties to the lowest user and
    tier index), dives into the ``I = 1`` child first, and falls back to the
    open node with the best parent bound.  Nodes are pruned against the
    incumbent minus ``1e-9``.
    """
    lp = _build_master_lp(mp)
    n = lp.n
    indicator_index = [(user, tier) for user in range(n) for tier in (1, 2, 3)]

    best_objective = math.inf
    best: MilpSolution | None = None
    open_nodes: list[tuple[float, int, dict]] = []
    seq = 0
    current: tuple[float, dict] | None = (-math.inf, {})
    nodes = 0

    while current is not None:
        _, fixes = current
        res = _solve_node(lp, fixes)
        nodes += 1
        branched = False
        if res.feasible and res.objective < best_objective - _PRUNE_TOL:
            ivals = np.array([res.x[lp.idx_i(u, t)] for (u, t) in indicator_index])
            fractional = np.minimum(ivals, 1.0 - ivals)
            pick = int(np.argmax(fractional))
            if fractional[pick] <= _INT_TOL:
                candidate = _decode(lp, res)
                if res.objective < best_objective:
                    best_objective = res.objective
                    best = candidate
            else:
                user, tier = indicator_index[pick]
                child_zero = _propagate({**fixes, (user, tier): 0}, n)
                child_one = _propagate({**fixes, (user, tier): 1}, n)
                if child_zero is not None:
                    seq += 1
                    open_nodes.append((res.objective, seq, child_zero))
                if child_one is not None:
                    current = (res.objective, child_one)
                    branched = True
                elif child_zero is not None:
                    bound, _, fixes_next = open_nodes.pop()
                    current = (bound, fixes_next)
                    branched = True
        if not branched:
            open_nodes = [
                entry for entry in open_nodes if entry[0] < best_objective - _PRUNE_TOL
            ]
            if not open_nodes:
                current = None
            else:
                pick = min(range(len(open_nodes)), key=lambda k: (open_nodes[k][0], open_nodes[k][1]))
                bound, _, fixes_next = open_nodes.pop(pick)
                current = (bound, fixes_next)

    if best is None:
        raise InfeasibleError("master problem has no feasible tier assignment")
    best.nodes_explored = nodes
    return best


def brute_force_master(mp: MasterProblem) -> MilpSolution:
    """Enumerate every selection with the same LP core; the search oracle."""
    n = mp.cfg.n_users
    if n > 10:
        raise ConfigError("brute force enumeration is limited to 10 users")
    lp = _build_master_lp(mp)
    best: MilpSolution | None = None
    nodes = 0
    for tiers in itertools.product((1, 2, 3), repeat=n):
        fixes = {
            (user, tier): (1 if tiers[user] == tier else 0)
            for user in range(n)
            for tier in (1, 2, 3)
        }
        res = _solve_node(lp, fixes)
        nodes += 1
        if not res.feasible:
            continue
        if best is None or res.objective < best.objective:
            best = _decode(lp, res)
    if best is None:
        raise InfeasibleError("master problem has no feasible tier assignment")
    best.nodes_explored = nodes
    return best


def format_master(mp: MasterProblem) -> str:
    """Plain-text listing of the master LP, for debugging."""
    lp = _build_master_lp(mp)
    n = lp.n

    def name(idx: int) -> str:
        if idx < n:
            return f"p[{idx + 1}]"
        if idx < 2 * n:
            return f"t[{idx - n + 1}]"
        user, rem = divmod(idx - 2 * n, 3)
        return f"I[{user + 1},{rem + 1}]"

    def combo(coeffs) -> str:
        parts = []
        for idx, coef in enumerate(coeffs):
            if coef == 0.0:
                continue
            parts.append(f"{'+' if coef >= 0 else '-'} {abs(coef):.9g} {name(idx)}")
        return " ".join(parts) if parts else "0"

    lines = ["minimize", f"  {combo(lp.cost)}", "subject to"]
    for row, eq, rhs in zip(lp.rows, lp.is_eq, lp.rhs):
        op = "=" if eq else "<="
        lines.append(f"  {combo(row)} {op} {rhs:.9g}")
    lines.append("bounds")
    for idx in range(lp.cost.size):
        lines.append(f"  {lp.lower[idx]:.9g} <= {name(idx)} <= {lp.upper[idx]:.9g}")
    lines.append(
        f"scaling: power unit {lp.power_scale:.9g} W, rate unit {lp.rate_scale:.9g} bit/s"
    )
    return "\n".join(lines)
