"""Free-space link model: distances, path loss, channel gains, Shannon rates.

All quantities are SI: distances in meters, frequencies in Hz, powers in
watts, rates in bit/s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError

_LN2 = math.log(2.0)

__all__ = [
    "LinkModel",
    "user_distance",
    "path_loss_db",
    "channel_gain",
    "rate",
    "min_power",
]


@dataclass(frozen=True)
class LinkModel:
    """Physical constants of the downlink.

    ``reference_distances_m`` holds the base distance of each user; the
    actual distance is scaled by ``distance_factor``.  Users are indexed
    1..N in the order of this tuple.
    """

    carrier_frequency_hz: float
    bandwidth_hz: float
    noise_power_w: float
    reference_distances_m: tuple[float, ...]
    distance_factor: float

    def __post_init__(self) -> None:
        object.__setattr__(
            self,
            "reference_distances_m",
            tuple(float(d) for d in self.reference_distances_m),
        )
        for name in (
            "carrier_frequency_hz",
            "bandwidth_hz",
            "noise_power_w",
            "distance_factor",
        ):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not self.reference_distances_m:
            raise ConfigError("reference_distances_m must not be empty")
        if any(not d > 0 for d in self.reference_distances_m):
            raise ConfigError("reference_distances_m entries must be positive")

    @property
    def n_users(self) -> int:
        return len(self.reference_distances_m)


def user_distance(n: int, model: LinkModel) -> float:
    """Distance in meters between the base station and user ``n`` (1-based)."""
    if not 1 <= n <= model.n_users:
        raise ConfigError(f"user index {n} out of range 1..{model.n_users}")
    return model.distance_factor * model.reference_distances_m[n - 1]


def path_loss_db(d: float, f: float) -> float:
    """Free-space path loss in dB at distance ``d`` (m) and carrier ``f`` (Hz)."""
    if not (d > 0 and f > 0):
        raise ValueError("distance and frequency must be positive")
    return 20.0 * math.log10(d) + 20.0 * math.log10(f) - 147.55


def channel_gain(d: float, f: float) -> float:
    """Linear channel power gain, the inverse of the dB path loss."""
    return 10.0 ** (-path_loss_db(d, f) / 10.0)


def rate(p: float, g: float, model: LinkModel) -> float:
    """Achievable rate in bit/s at transmit power ``p`` over gain ``g``.

    Computes ``B * log2(1 + p * g / noise)`` with ``log1p`` so that the
    round trip through :func:`min_power` is exact to machine precision.
    """
    if p < 0:
        raise ValueError("transmit power must be nonnegative")
    if not g > 0:
        raise ValueError("channel gain must be positive")
    snr = p * g / model.noise_power_w
    return model.bandwidth_hz * math.log1p(snr) / _LN2


def min_power(c: float, g: float, model: LinkModel) -> float:
    """Smallest transmit power whose rate meets the requirement ``c`` (bit/s)."""
    if c < 0:
        raise ValueError("required rate must be nonnegative")
    if not g > 0:
        raise ValueError("channel gain must be positive")
    snr_required = math.expm1(c / model.bandwidth_hz * _LN2)
    return model.noise_power_w * snr_required / g
