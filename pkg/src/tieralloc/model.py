"""Problem instances: tier table, weights, utility, feasibility, config files.

The utility of an assignment ``(selection, powers)`` is

    U = (1 - lambda - mu) * eta_q * sum_n Q_n
        - lambda * eta_p * sum_n p_n
        + mu * eta_r * sum_n delta_r_n

where ``Q_n`` is the QoS factor of the selected tier, ``delta_r_n`` the
rate margin of user ``n`` (sign set by the redundancy convention), and the
normalizers are ``eta_q = 1/(N * Q_max)``, ``eta_r = 1/C_2``,
``eta_p = 1/P``.  Solvers minimize ``-U``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import channel
from .channel import LinkModel
from .errors import ConfigError

_LN2 = math.log(2.0)

__all__ = [
    "RedundancyConvention",
    "TierTable",
    "TierSelection",
    "UtilityWeights",
    "ScenarioConfig",
    "FeasibilityReport",
    "SolveOutcome",
    "qos",
    "best_qos",
    "normalizers",
    "redundancy",
    "utility",
    "check_feasibility",
    "load_config",
    "parse_config",
    "table1_path",
    "table1_config",
]


class RedundancyConvention(enum.Enum):
    """Sign convention for the per-user rate margin ``delta_r_n``.

    REWARD counts the margin as achieved rate minus required rate, so spare
    rate raises the utility.  PAPER_LITERAL flips the sign (required minus
    achieved), which makes extra transmit power pure cost.
    """

    REWARD = "reward"
    PAPER_LITERAL = "paper_literal"

    @property
    def sign(self) -> float:
        return 1.0 if self is RedundancyConvention.REWARD else -1.0


@dataclass(frozen=True)
class TierTable:
    """The three service tiers and their minimum required rates in bit/s."""

    required_rates_bps: tuple[float, float, float]
    labels: tuple[str, str, str] = ("360P", "720P", "1080P")

    def __post_init__(self) -> None:
        rates = tuple(float(c) for c in self.required_rates_bps)
        object.__setattr__(self, "required_rates_bps", rates)
        object.__setattr__(self, "labels", tuple(str(s) for s in self.labels))
        if len(rates) != 3 or len(self.labels) != 3:
            raise ConfigError("required_rates_bps and labels must have exactly 3 entries")
        if not all(c > 0 for c in rates):
            raise ConfigError("required_rates_bps entries must be positive")
        if not (rates[0] < rates[1] < rates[2]):
            raise ConfigError("required_rates_bps must be strictly increasing")

    def rate_of(self, tier: int) -> float:
        """Required rate of ``tier`` (1-based)."""
        if tier not in (1, 2, 3):
            raise ConfigError(f"tier must be 1, 2 or 3; got {tier}")
        return self.required_rates_bps[tier - 1]


@dataclass(frozen=True)
class TierSelection:
    """One tier index in {1, 2, 3} per user.  Hashable, usable as a dict key."""

    tier_of_user: tuple[int, ...]

    def __post_init__(self) -> None:
        tiers = tuple(int(t) for t in self.tier_of_user)
        object.__setattr__(self, "tier_of_user", tiers)
        if not tiers:
            raise ConfigError("selection must cover at least one user")
        if any(t not in (1, 2, 3) for t in tiers):
            raise ConfigError("tier indices must be 1, 2 or 3")

    def __len__(self) -> int:
        return len(self.tier_of_user)

    def __iter__(self):
        return iter(self.tier_of_user)

    def to_string(self) -> str:
        """Compact form used in CSV output, e.g. ``1/1/2/3/3``."""
        return "/".join(str(t) for t in self.tier_of_user)

    @classmethod
    def from_string(cls, text: str) -> "TierSelection":
        try:
            return cls(tuple(int(tok) for tok in text.split("/")))
        except ValueError as exc:
            raise ConfigError(f"malformed selection string: {text!r}") from exc


@dataclass(frozen=True)
class UtilityWeights:
    """Objective weights and the quantities they normalize against."""

    lambda_: float
    mu: float
    gamma: float
    r_th_bps: float
    total_power_w: float
    redundancy_convention: RedundancyConvention = RedundancyConvention.REWARD

    def __post_init__(self) -> None:
        if not 0.0 <= self.lambda_ <= 1.0:
            raise ConfigError("lambda must lie in [0, 1]")
        if not 0.0 <= self.mu <= 1.0:
            raise ConfigError("mu must lie in [0, 1]")
        if self.lambda_ + self.mu > 1.0:
            raise ConfigError(
                f"lambda+mu must be at most 1 (got {self.lambda_ + self.mu})"
            )
        if not self.gamma > 0:
            raise ConfigError("gamma must be positive")
        if not self.r_th_bps > 0:
            raise ConfigError("r_th_bps must be positive")
        # Zero budget is accepted here and reported as an infeasible
        # scenario by the solvers rather than a malformed config.
        if self.total_power_w < 0:
            raise ConfigError("total_power_w must be nonnegative")

    @property
    def qos_weight(self) -> float:
        return 1.0 - self.lambda_ - self.mu


@dataclass(frozen=True)
class ScenarioConfig:
    """A complete problem instance."""

    n_users: int
    link: LinkModel
    tiers: TierTable
    weights: UtilityWeights
    epsilon: float

    def __post_init__(self) -> None:
        if int(self.n_users) != self.n_users or self.n_users < 1:
            raise ConfigError("n_users must be a positive integer")
        object.__setattr__(self, "n_users", int(self.n_users))
        if self.link.n_users != self.n_users:
            raise ConfigError(
                f"n_users is {self.n_users} but reference_distances_m has "
                f"{self.link.n_users} entries"
            )
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        g = self.gains()
        if not np.all(np.isfinite(g)) or np.any(g <= 0):
            raise ConfigError("derived channel gains must be positive and finite")

    def distances(self) -> np.ndarray:
        """Per-user distances in meters."""
        return self.link.distance_factor * np.asarray(
            self.link.reference_distances_m, dtype=float
        )

    def gains(self) -> np.ndarray:
        """Per-user linear channel gains."""
        f = self.link.carrier_frequency_hz
        return np.array(
            [channel.channel_gain(d, f) for d in self.distances()], dtype=float
        )

    def rates(self, p) -> np.ndarray:
        """Per-user rates in bit/s for the power vector ``p`` (watts)."""
        p = np.asarray(p, dtype=float)
        snr = p * self.gains() / self.link.noise_power_w
        return self.link.bandwidth_hz * np.log1p(snr) / _LN2

    def required_rates(self, selection: TierSelection) -> np.ndarray:
        """Required rate in bit/s of each user's selected tier."""
        table = self.tiers.required_rates_bps
        return np.array([table[t - 1] for t in selection], dtype=float)

    def min_powers(self, selection: TierSelection) -> np.ndarray:
        """Smallest per-user powers meeting the selected tiers' rates."""
        c = self.required_rates(selection)
        snr_required = np.expm1(c / self.link.bandwidth_hz * _LN2)
        return self.link.noise_power_w * snr_required / self.gains()


def qos(tier: int, tiers: TierTable, weights: UtilityWeights) -> float:
    """QoS factor ``(C_tier / R_th) ** gamma`` of one tier."""
    return (tiers.rate_of(tier) / weights.r_th_bps) ** weights.gamma


def best_qos(tiers: TierTable, weights: UtilityWeights) -> float:
    """QoS factor of the top tier, the per-user normalization anchor."""
    return qos(3, tiers, weights)


def normalizers(cfg: ScenarioConfig) -> tuple[float, float, float]:
    """Return ``(eta_q, eta_r, eta_p)`` for the instance.

    ``eta_q = 1/(N * Q_max)`` bounds the QoS sum by 1, ``eta_r = 1/C_2``
    measures rate margins in mid-tier units, ``eta_p = 1/P`` measures power
    as a fraction of the budget.
    """
    eta_q = 1.0 / (cfg.n_users * best_qos(cfg.tiers, cfg.weights))
    eta_r = 1.0 / cfg.tiers.required_rates_bps[1]
    eta_p = 1.0 / cfg.weights.total_power_w
    return eta_q, eta_r, eta_p


def redundancy(n: int, selection: TierSelection, p, cfg: ScenarioConfig) -> float:
    """Rate margin of user ``n`` (1-based) in bit/s, signed per convention."""
    if not 1 <= n <= cfg.n_users:
        raise ConfigError(f"user index {n} out of range 1..{cfg.n_users}")
    r = cfg.rates(p)[n - 1]
    c = cfg.required_rates(selection)[n - 1]
    return cfg.weights.redundancy_convention.sign * (r - c)


def utility(selection: TierSelection, p, cfg: ScenarioConfig) -> float:
    """Utility of the assignment; solvers minimize its negation."""
    if len(selection) != cfg.n_users:
        raise ConfigError("selection length does not match n_users")
    p = np.asarray(p, dtype=float)
    if p.shape != (cfg.n_users,):
        raise ConfigError("power vector length does not match n_users")
    w = cfg.weights
    eta_q, eta_r, eta_p = normalizers(cfg)
    qos_sum = sum(qos(t, cfg.tiers, w) for t in selection)
    margins = w.redundancy_convention.sign * (
        cfg.rates(p) - cfg.required_rates(selection)
    )
    return (
        w.qos_weight * eta_q * qos_sum
        - w.lambda_ * eta_p * float(p.sum())
        + w.mu * eta_r * float(margins.sum())
    )


@dataclass(frozen=True)
class FeasibilityReport:
    """Outcome of a constraint check; falsy when any constraint is violated."""

    ok: bool
    violations: tuple[str, ...] = ()

    def __bool__(self) -> bool:
        return self.ok


_FEAS_RTOL = 1e-8


def check_feasibility(selection: TierSelection, p, cfg: ScenarioConfig) -> FeasibilityReport:
    """Verify rate requirements, the power budget, and power nonnegativity.

    Tolerances are relative: each rate may fall short by ``1e-8 * C_sel``
    and the power sum may exceed the budget by ``1e-8 * P``. The slack is
    wide enough that powers rounded to the 9 significant digits used in CSV
    output still pass (rate elasticity in power is below one, so a relative
    power perturbation never produces a larger relative rate shortfall).
    """
    violations: list[str] = []
    if len(selection) != cfg.n_users:
        return FeasibilityReport(False, ("selection length does not match n_users",))
    p = np.asarray(p, dtype=float)
    if p.shape != (cfg.n_users,):
        return FeasibilityReport(False, ("power vector length does not match n_users",))
    budget = cfg.weights.total_power_w
    if np.any(p < -_FEAS_RTOL * max(1.0, budget)):
        violations.append("negative transmit power")
    rates = cfg.rates(np.maximum(p, 0.0))
    needs = cfg.required_rates(selection)
    for n in range(cfg.n_users):
        if rates[n] < needs[n] * (1.0 - _FEAS_RTOL):
            violations.append(
                f"user {n + 1}: rate {rates[n]:.6g} bit/s below requirement "
                f"{needs[n]:.6g} bit/s"
            )
    total = float(p.sum())
    if total > budget * (1.0 + _FEAS_RTOL):
        violations.append(f"power sum {total:.6g} W exceeds budget {budget:.6g} W")
    return FeasibilityReport(not violations, tuple(violations))


@dataclass
class SolveOutcome:
    """Result of a complete solve: assignment, scores, and solver notes."""

    selection: TierSelection
    powers: np.ndarray
    utility: float
    objective: float
    feasible: bool
    diagnostics: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# Config files: flat "key = value" lines, "#" comments, vectors as
# comma-separated values.


_VECTOR_KEYS = {"reference_distances_m", "required_rates_bps", "labels"}
_SCALAR_KEYS = {
    "n_users",
    "epsilon",
    "carrier_frequency_hz",
    "bandwidth_hz",
    "noise_power_w",
    "distance_factor",
    "lambda",
    "mu",
    "gamma",
    "r_th_bps",
    "total_power_w",
    "redundancy_convention",
}
_OPTIONAL_KEYS = {"labels", "redundancy_convention"}
_ALL_KEYS = _VECTOR_KEYS | _SCALAR_KEYS


def _parse_float(key: str, text: str) -> float:
    try:
        return float(text)
    except ValueError as exc:
        raise ConfigError(f"malformed number for {key}: {text!r}") from exc


def parse_config(text: str, source: str = "<string>") -> ScenarioConfig:
    """Build a :class:`ScenarioConfig` from config-file text."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _ALL_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown config key: {key}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate config key: {key}")
        if not value:
            raise ConfigError(f"{source}:{lineno}: empty value for {key}")
        values[key] = value

    missing = sorted(_ALL_KEYS - _OPTIONAL_KEYS - set(values))
    if missing:
        raise ConfigError(f"{source}: missing config keys: {', '.join(missing)}")

    def vector(key: str) -> tuple[float, ...]:
        return tuple(_parse_float(key, tok) for tok in values[key].split(","))

    n_users_text = values["n_users"]
    try:
        n_users = int(n_users_text)
    except ValueError as exc:
        raise ConfigError(f"malformed integer for n_users: {n_users_text!r}") from exc

    convention = RedundancyConvention.REWARD
    if "redundancy_convention" in values:
        token = values["redundancy_convention"].lower()
        try:
            convention = RedundancyConvention(token)
        except ValueError as exc:
            options = ", ".join(c.value for c in RedundancyConvention)
            raise ConfigError(
                f"redundancy_convention must be one of: {options} (got {token!r})"
            ) from exc

    link = LinkModel(
        carrier_frequency_hz=_parse_float("carrier_frequency_hz", values["carrier_frequency_hz"]),
        bandwidth_hz=_parse_float("bandwidth_hz", values["bandwidth_hz"]),
        noise_power_w=_parse_float("noise_power_w", values["noise_power_w"]),
        reference_distances_m=vector("reference_distances_m"),
        distance_factor=_parse_float("distance_factor", values["distance_factor"]),
    )
    rates = vector("required_rates_bps")
    if len(rates) != 3:
        raise ConfigError("required_rates_bps must list exactly 3 rates")
    if "labels" in values:
        labels = tuple(tok.strip() for tok in values["labels"].split(","))
        if len(labels) != 3:
            raise ConfigError("labels must list exactly 3 names")
        tiers = TierTable(rates, labels)  # type: ignore[arg-type]
    else:
        tiers = TierTable(rates)  # type: ignore[arg-type]
    weights = UtilityWeights(
        lambda_=_parse_float("lambda", values["lambda"]),
        mu=_parse_float("mu", values["mu"]),
        gamma=_parse_float("gamma", values["gamma"]),
        r_th_bps=_parse_float("r_th_bps", values["r_th_bps"]),
        total_power_w=_parse_float("total_power_w", values["total_power_w"]),
        redundancy_convention=convention,
    )
    return ScenarioConfig(
        n_users=n_users,
        link=link,
        tiers=tiers,
        weights=weights,
        epsilon=_parse_float("epsilon", values["epsilon"]),
    )


def load_config(path) -> ScenarioConfig:
    """Load a :class:`ScenarioConfig` from a config file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config(text, source=str(path))


def table1_path() -> Path:
    """Filesystem path of the packaged default config."""
    return Path(resources.files("tieralloc").joinpath("data/table1.cfg"))  # type: ignore[arg-type]


def table1_config() -> ScenarioConfig:
    """The packaged five-user 28 GHz default scenario."""
    return load_config(table1_path())
