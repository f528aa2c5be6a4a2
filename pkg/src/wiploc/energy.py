"""Per-node energy accounting and the analytic WPA duty-cycle model.

Units are milliseconds, milliwatts and microjoules throughout
(1 mW x 1 ms = 1 uJ).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple


class EnergyError(ValueError):
    pass


class InfeasibleConfigError(EnergyError):
    """The duty cycle does not fit inside the localization period."""


class PowerState(str, enum.Enum):
    TX = "TX"
    RX = "RX"
    ADC = "ADC"
    WFI = "WFI"


@dataclass(frozen=True)
class PowerProfile:
    p_tx: float
    p_rx: float
    p_adc: float
    p_wfi: float
    t_tx: float = 0.80
    t_adc: float = 0.65
    # expected RX dwell per round for this role
    t_rx: float = 0.60

    def __post_init__(self):
        if min(self.p_tx, self.p_rx, self.p_adc, self.p_wfi) <= 0:
            raise EnergyError("state powers must be positive")
        if not self.p_wfi < self.p_adc < self.p_rx:
            raise EnergyError("expected p_wfi < p_adc < p_rx")
        if self.t_tx <= 0 or self.t_adc <= 0 or self.t_rx < 0:
            raise EnergyError("event durations must be positive")

    def power(self, state: PowerState) -> float:
        return {
            PowerState.TX: self.p_tx,
            PowerState.RX: self.p_rx,
            PowerState.ADC: self.p_adc,
            PowerState.WFI: self.p_wfi,
        }[PowerState(state)]


# Measured nRF51822 figures. The mobile column has no ADC entry; the WPA one
# is reused so the mobile can sample its harvester in cell-level mode.
MOBILE_PROFILE = PowerProfile(p_tx=35.88, p_rx=20.17, p_adc=1.69, p_wfi=0.15, t_tx=0.80, t_adc=0.65, t_rx=0.60)
WPA_PROFILE = PowerProfile(p_tx=35.88, p_rx=26.05, p_adc=1.69, p_wfi=0.14, t_tx=0.80, t_adc=0.65, t_rx=8.29)


@dataclass(frozen=True)
class DutyConfig:
    t_m: float = 1000.0
    t_c: float = 10.0

    def __post_init__(self):
        if not 0 < self.t_c < self.t_m:
            raise EnergyError(f"need 0 < t_c < t_m, got t_c={self.t_c}, t_m={self.t_m}")


def _zero_states() -> dict:
    return {s: 0.0 for s in PowerState}


@dataclass
class EnergyLedger:
    t_m: float = 1000.0
    time_ms: dict = field(default_factory=_zero_states)
    energy_uj: dict = field(default_factory=_zero_states)

    @property
    def elapsed_ms(self) -> float:
        return sum(self.time_ms.values())

    @property
    def total_uj(self) -> float:
        return sum(self.energy_uj.values())

    def average_mw(self, window_ms: float | None = None) -> float:
        window = self.elapsed_ms if window_ms is None else window_ms
        if window <= 0:
            raise EnergyError("empty ledger window")
        return self.total_uj / window

    def accumulate(self, state: PowerState, duration_ms: float, profile: PowerProfile) -> "EnergyLedger":
        if duration_ms < 0:
            raise EnergyError(f"negative duration {duration_ms}")
        state = PowerState(state)
        self.time_ms[state] += duration_ms
        self.energy_uj[state] += profile.power(state) * duration_ms
        return self

    def rows(self, node_id) -> list[tuple]:
        return [(node_id, s.value, self.time_ms[s], self.energy_uj[s]) for s in PowerState]


def accumulate(ledger: EnergyLedger, state: PowerState, duration_ms: float, profile: PowerProfile) -> EnergyLedger:
    return ledger.accumulate(state, duration_ms, profile)


def wpa_average_power(
    config: DutyConfig, profile: PowerProfile, t_rx: float | None = None, continuous: bool = False
) -> float:
    """Expected average WPA power (mW) over one localization period.

    One reply is sent per period. ``t_rx`` defaults to the expected listening
    time ``t_c / 2``; ``continuous`` replaces the ADC sample count
    ``floor(t_m / t_c)`` with ``t_m / t_c``.
    """
    t_m, t_c = config.t_m, config.t_c
    k_adc = t_m / t_c if continuous else math.floor(t_m / t_c)
    rx = t_c / 2 if t_rx is None else t_rx
    t_wfi = t_m - (k_adc * profile.t_adc + rx + profile.t_tx)
    if t_wfi < 0:
        raise InfeasibleConfigError(f"duty cycle exceeds t_m by {-t_wfi:.3f} ms")
    energy = profile.p_rx * rx + profile.p_tx * profile.t_tx + k_adc * profile.p_adc * profile.t_adc + profile.p_wfi * t_wfi
    return energy / t_m


def mobile_average_power(profile: PowerProfile, t_m: float = 1000.0) -> float:
    """One request, one reply reception, sleep for the rest of the period."""
    t_wfi = t_m - profile.t_tx - profile.t_rx
    if t_wfi < 0:
        raise InfeasibleConfigError("round longer than the localization period")
    return (profile.p_tx * profile.t_tx + profile.p_rx * profile.t_rx + profile.p_wfi * t_wfi) / t_m


def optimal_tc(profile: PowerProfile, t_m: float) -> float:
    """ADC period minimising the expected WPA power (continuous relaxation)."""
    if t_m <= 0:
        raise EnergyError("t_m must be positive")
    num = 2 * t_m * profile.t_adc * (profile.p_adc - profile.p_wfi)
    den = profile.p_rx - profile.p_wfi
    if den <= 0 or num <= 0:
        raise EnergyError("degenerate profile: need p_rx > p_wfi and p_adc > p_wfi")
    return math.sqrt(num / den)


def tc_grid_search(profile: PowerProfile, t_m: float, grid, continuous: bool = False) -> tuple[float, list[tuple[float, float]]]:
    """Brute-force minimiser of the average power over candidate ADC periods.

    Infeasible candidates are skipped. Returns ``(best_tc, [(t_c, mW), ...])``.
    """
    table = []
    for t_c in grid:
        try:
            table.append((t_c, wpa_average_power(DutyConfig(t_m, t_c), profile, continuous=continuous)))
        except EnergyError:
            continue
    if not table:
        raise EnergyError("no feasible t_c in grid")
    best = min(table, key=lambda r: r[1])[0]
    return best, table


class Feasibility(NamedTuple):
    feasible: bool
    margin_mw: float


def feasibility(average_mw: float, harvested_mw: float) -> Feasibility:
    return Feasibility(average_mw <= harvested_mw, harvested_mw - average_mw)


def with_rx(profile: PowerProfile, t_rx: float) -> PowerProfile:
    return replace(profile, t_rx=t_rx)
