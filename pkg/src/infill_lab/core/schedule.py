"""
Log-linear noise schedule: sigma(t) = t * sigma_max, alpha_t = exp(-sigma(t)).
"""

import math
from dataclasses import dataclass

from ..errors import ContractError, DomainError

# Lower clamp on timesteps fed to the NELBO weight; the weight has a pole at t = 0.
T_MIN = 1e-3


@dataclass(frozen=True)
class NoiseSchedule:
    """Linear sigma schedule; `sigma_max` is the total noise at t = 1."""
    sigma_max: float = 10.0

    def __post_init__(self):
        if not self.sigma_max > 0:
            raise ContractError(f"sigma_max must be positive, got {self.sigma_max}")

    def sigma(self, t: float) -> float:
        return t * self.sigma_max


def alpha(t: float, schedule: NoiseSchedule) -> float:
    """Survival probability of a token at time t."""
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"t = {t} outside [0, 1]")
    return math.exp(-schedule.sigma(t))


def nelbo_weight(t: float, schedule: NoiseSchedule) -> float:
    """
    Positive per-timestep NELBO weight -alpha'_t / (1 - alpha_t).

    Evaluates sigma_max * exp(-t sigma_max) / (1 - exp(-t sigma_max)) in the
    numerically stable form sigma_max / expm1(t sigma_max).
    """
    if not T_MIN <= t <= 1.0:
        raise DomainError(f"t = {t} outside [{T_MIN}, 1]; the weight diverges as t -> 0")
    return schedule.sigma_max / math.expm1(schedule.sigma(t))


def clamp_timestep(t: float) -> float:
    return min(1.0, max(T_MIN, t))
