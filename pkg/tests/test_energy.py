import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from wiploc import energy
from wiploc.energy import (
    MOBILE_PROFILE,
    WPA_PROFILE,
    DutyConfig,
    EnergyLedger,
    PowerProfile,
    PowerState,
)


def eq2_oracle(p, t_m, t_c, t_rx):
    k = math.floor(t_m / t_c)
    t_wfi = t_m - k * p.t_adc - t_rx - p.t_tx
    return (p.p_rx * t_rx + p.p_tx * p.t_tx + k * p.p_adc * p.t_adc + p.p_wfi * t_wfi) / t_m


def test_table_profile_average_power():
    # t_c = 10: k_adc = 100, t_rx measured 8.29 ms
    got = energy.wpa_average_power(DutyConfig(1000, 10), WPA_PROFILE, t_rx=8.29)
    assert got == pytest.approx(eq2_oracle(WPA_PROFILE, 1000, 10, 8.29))
    assert got == pytest.approx(0.49, rel=0.05)


def test_default_rx_is_half_period():
    a = energy.wpa_average_power(DutyConfig(1000, 10), WPA_PROFILE)
    assert a == pytest.approx(eq2_oracle(WPA_PROFILE, 1000, 10, 5.0))


def test_mobile_average_power():
    expected = (35.88 * 0.8 + 20.17 * 0.6 + 0.15 * (1000 - 1.4)) / 1000
    assert energy.mobile_average_power(MOBILE_PROFILE) == pytest.approx(expected)
    assert expected == pytest.approx(0.19, rel=0.05)


def test_optimal_tc_closed_form():
    t = energy.optimal_tc(WPA_PROFILE, 1000)
    assert t == pytest.approx(math.sqrt(2 * 1000 * 0.65 * (1.69 - 0.14) / (26.05 - 0.14)))
    assert t == pytest.approx(8.8, abs=0.05)


def test_degenerate_inputs():
    with pytest.raises(energy.EnergyError):
        energy.optimal_tc(WPA_PROFILE, 0)
    with pytest.raises(energy.InfeasibleConfigError):
        energy.wpa_average_power(DutyConfig(10, 0.5), WPA_PROFILE)
    with pytest.raises(energy.EnergyError):
        DutyConfig(100, 100)
    with pytest.raises(energy.EnergyError):
        PowerProfile(p_tx=1, p_rx=1, p_adc=2, p_wfi=0.1)
    with pytest.raises(energy.EnergyError):
        PowerProfile(p_tx=1, p_rx=3, p_adc=2, p_wfi=0)
    with pytest.raises(energy.EnergyError):
        energy.tc_grid_search(WPA_PROFILE, 2, [1.9])


def test_feasibility_examples():
    f = energy.feasibility(0.19, 0.16)
    assert not f.feasible and f.margin_mw == pytest.approx(-0.03)
    assert energy.feasibility(0.19, 0.79).feasible
    f = energy.feasibility(0.2, 0.2)
    assert f.feasible and f.margin_mw == 0


def test_ledger_accounting():
    led = EnergyLedger()
    led.accumulate(PowerState.TX, 0.8, WPA_PROFILE).accumulate("RX", 2.0, WPA_PROFILE)
    energy.accumulate(led, PowerState.WFI, 10.0, WPA_PROFILE)
    assert led.elapsed_ms == pytest.approx(12.8)
    assert led.total_uj == pytest.approx(35.88 * 0.8 + 26.05 * 2 + 0.14 * 10)
    assert led.average_mw() == pytest.approx(led.total_uj / 12.8)
    rows = led.rows(3)
    assert [r[1] for r in rows] == ["TX", "RX", "ADC", "WFI"]
    with pytest.raises(energy.EnergyError):
        led.accumulate(PowerState.ADC, -1, WPA_PROFILE)
    with pytest.raises(energy.EnergyError):
        EnergyLedger().average_mw()


@settings(max_examples=100)
@given(
    st.lists(st.tuples(st.sampled_from(list(PowerState)), st.floats(0, 100, allow_nan=False)), max_size=30)
)
def test_ledger_conservation(steps):
    led = EnergyLedger()
    for state, dt in steps:
        led.accumulate(state, dt, WPA_PROFILE)
    assert led.elapsed_ms == pytest.approx(sum(dt for _, dt in steps))
    assert led.total_uj == pytest.approx(sum(WPA_PROFILE.power(s) * dt for s, dt in steps))
    assert all(v >= 0 for v in led.energy_uj.values())


profiles = st.builds(
    lambda wfi, adc_f, rx_f, tx, t_adc: PowerProfile(
        p_tx=tx, p_rx=wfi * adc_f * rx_f, p_adc=wfi * adc_f, p_wfi=wfi, t_adc=t_adc
    ),
    st.floats(0.01, 1.0),
    st.floats(1.5, 30.0),
    st.floats(1.5, 40.0),
    st.floats(1.0, 50.0),
    st.floats(0.1, 2.0),
)


@settings(max_examples=100, deadline=None)
@given(p=profiles)
def test_grid_minimizer_matches_closed_form(p):
    t_m = 1000.0
    t_opt = energy.optimal_tc(p, t_m)
    assume(t_opt < t_m / 4)
    grid = np.geomspace(0.05, t_m / 2, 4000)
    best, _ = energy.tc_grid_search(p, t_m, grid, continuous=True)
    assert best == pytest.approx(t_opt, rel=0.02)


@settings(max_examples=100, deadline=None)
@given(p=profiles, scale=st.floats(1.01, 3.0))
def test_monotonicity(p, scale):
    t_m = 1000.0
    t_opt = energy.optimal_tc(p, t_m)
    assume(t_opt < t_m / 8)

    def f(t_c, prof=p):
        try:
            return energy.wpa_average_power(DutyConfig(t_m, t_c), prof, continuous=True)
        except energy.InfeasibleConfigError:
            return math.inf

    # unimodal around the optimum
    assert f(t_opt) <= f(t_opt * scale) <= f(t_opt * scale**2)
    assert f(t_opt) <= f(t_opt / scale) <= f(t_opt / scale**2)
    # increasing in p_rx
    hotter = PowerProfile(p.p_tx, p.p_rx * scale, p.p_adc, p.p_wfi, p.t_tx, p.t_adc)
    t_c = min(2 * t_opt, t_m / 4)
    assert f(t_c, hotter) > f(t_c)


def test_grid_over_table_range():
    grid = [round(0.5 * i, 1) for i in range(1, 201)]
    best, table = energy.tc_grid_search(WPA_PROFILE, 1000, grid)
    assert abs(best - energy.optimal_tc(WPA_PROFILE, 1000)) <= 0.5
    # 0.5 ms would need 2000 samples of 0.65 ms inside 1 s
    assert [t for t, _ in table] == grid[1:]


def test_with_rx():
    assert energy.with_rx(WPA_PROFILE, 3.0).t_rx == 3.0
