import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rampmeter.control import ControllerSettings
from rampmeter.metrics import compute_tts
from rampmeter.network import (
    Greenshield,
    Ramp,
    Segment,
    occupancy,
    reference_network,
    rho_max,
    synthetic_diagram,
    validate_network,
)
from rampmeter.scenario import load_preset
from rampmeter.simulation import (
    DemandProfile,
    Incident,
    InvalidScenario,
    Noise,
    Scenario,
    SimulationFault,
    apply_incident,
    merge_flows,
    metered_ramp_capacity,
    ramp_queue_step,
    receiving_flow,
    segment_density_step,
    sending_flow,
    simulate,
)

H = 3600.0


def single_segment(inflow, horizon=2 * H, **kw):
    net = validate_network([Segment(1.0, 3, synthetic_diagram(100.0, 20.0), name="A")], [])
    return Scenario(net, DemandProfile.constant(inflow), (), horizon, ControllerSettings(kind="none"), **kw)


class TestElementaryOperations:
    def test_density_equilibrium(self):
        assert segment_density_step(12.5, 7.0, 7.0, 0.6, 1 / 60) == 12.5

    def test_density_substitution(self):
        assert segment_density_step(10, 30, 0, 1.0, 1.0) == pytest.approx(40)

    def test_density_negative_is_fault(self):
        with pytest.raises(SimulationFault):
            segment_density_step(10, 0, 30, 2.0, 1.0)

    def test_density_above_jam_is_fault(self):
        with pytest.raises(SimulationFault):
            segment_density_step(10, 100, 0, 1.0, 1.0, rho_cap=50.0)

    def test_sending_flow(self):
        assert sending_flow(0.0, 100.0, 1.0, 1 / 60) == 0.0
        assert sending_flow(60.0, 60.0, 1.0, 1 / 60) == pytest.approx(60.0)
        # cap binds: 0.1 km holding 1 Veh/km at 100 km/h for a whole minute
        assert sending_flow(1.0, 100.0, 0.1, 1.0) == pytest.approx(0.1)

    def test_receiving_flow(self):
        jam = rho_max(3)
        assert receiving_flow(jam, jam, 1.0, 1.0) == 0.0
        assert receiving_flow(0.0, 545.45, 1.0, 1.0) == pytest.approx(545.45)

    def test_receiving_flow_scales_with_lanes(self):
        # same fraction of jam density left free, half the lanes: half the supply
        full = receiving_flow(0.25 * rho_max(4), rho_max(4), 1.0, 1.0)
        half = receiving_flow(0.25 * rho_max(2), rho_max(2), 1.0, 1.0)
        assert half == pytest.approx(full / 2)

    @pytest.mark.parametrize("gd, expected", [(40, 30), (15, 11.25), (0, 0)])
    def test_metered_capacity(self, gd, expected):
        assert metered_ramp_capacity(gd, 40, 30) == pytest.approx(expected)

    def test_metered_capacity_range(self):
        with pytest.raises(ValueError):
            metered_ramp_capacity(41, 40, 30)

    @pytest.mark.parametrize(
        "args, expected", [((10, 5, 100), (10, 5)), ((30, 10, 20), (15, 5)), ((0, 10, 4), (0, 4))]
    )
    def test_merge_examples(self, args, expected):
        assert merge_flows(*args) == pytest.approx(expected)

    @given(st.floats(0, 500), st.floats(0, 500), st.floats(0, 500))
    def test_merge_respects_supply_and_demand(self, m, r, s):
        a, b = merge_flows(m, r, s)
        assert a + b <= s * (1 + 1e-12)
        assert 0 <= a <= m and 0 <= b <= r

    def test_queue_examples(self):
        assert ramp_queue_step(5.0, 20.0, 20.0, 1.0) == 5.0
        q = ramp_queue_step(0.0, 20.0, 11.25, 1.0)
        assert q == pytest.approx(8.75)
        assert q * 0.0055 * 1000 == pytest.approx(48.125)

    def test_queue_cannot_admit_phantom_vehicles(self):
        with pytest.raises(SimulationFault):
            ramp_queue_step(0.0, 5.0, 6.0, 1.0)

    def test_incident_lanes(self):
        net = reference_network()
        inc = [Incident(1, 2, 100.0, 200.0)]
        assert apply_incident(net, inc, 50.0)[1] == 3
        assert apply_incident(net, inc, 150.0)[1] == 2
        assert rho_max(apply_incident(net, inc, 150.0)[1]) == pytest.approx(2 / 0.0055)
        assert apply_incident(net, [Incident(1, 3)], 0.0) == [s.lanes for s in net.segments]


class TestScenarioValidation:
    def test_ramp_demand_count(self):
        with pytest.raises(InvalidScenario, match="ramp demand"):
            Scenario(reference_network(), DemandProfile.constant(1), (), 100.0)

    def test_dt_must_divide_cycle(self):
        net = reference_network()
        d = DemandProfile.constant(1)
        with pytest.raises(InvalidScenario, match="divide the control cycle"):
            Scenario(net, d, (d, d, d), 3 * 7.0, dt_s=7.0, log_interval_s=7.0)

    def test_incident_lanes_bounded(self):
        net = reference_network()
        d = DemandProfile.constant(1)
        with pytest.raises(InvalidScenario, match="incident 0"):
            Scenario(net, d, (d, d, d), 100.0, incidents=(Incident(1, 4),))


class TestSimulate:
    def test_zero_demand(self):
        net = reference_network()
        z = DemandProfile.constant(0.0)
        res = simulate(Scenario(net, z, (z, z, z), 2 * H))
        log = res.log
        assert np.all(log.seg_veh == 0) and np.all(log.ramp_veh == 0)
        assert compute_tts(log) == 0.0

    def test_equilibrium_matches_bisection(self):
        inflow = 60.0
        sc = single_segment(inflow)
        dg = sc.network.segments[0].diagram
        jam = rho_max(3)
        flow = lambda r: r * dg.speed(r, occupancy(r, 3)) / 60.0
        lo, hi = 0.0, 0.2 * jam  # free branch up to the critical occupancy
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if flow(mid) < inflow else (lo, mid)
        rho_eq = 0.5 * (lo + hi)
        log = simulate(sc).log
        assert log.seg_veh[-1, 0] / 1.0 == pytest.approx(rho_eq, rel=1e-6)
        assert log.outflow[-1] == pytest.approx(inflow, rel=1e-9)

    def test_deterministic(self):
        sc = dataclasses.replace(load_preset("paper-incident"), horizon_s=3 * H, noise=Noise(5, 1.0, 2.0))
        a, b = simulate(sc).log, simulate(sc).log
        for name in ("seg_Q", "seg_To", "ramp_GD", "ramp_queue_m", "origin_veh"):
            assert np.array_equal(getattr(a, name), getattr(b, name))

    def test_noise_seed_changes_controls(self):
        base = dataclasses.replace(load_preset("paper-incident"), horizon_s=10 * H)
        a = simulate(dataclasses.replace(base, noise=Noise(1, 2.0, 5.0))).log
        b = simulate(dataclasses.replace(base, noise=Noise(2, 2.0, 5.0))).log
        assert not np.array_equal(a.ramp_setpoint, b.ramp_setpoint)

    def test_conservation_and_bounds_under_incident(self):
        sc = dataclasses.replace(load_preset("paper-incident"), log_interval_s=1.0, horizon_s=10 * H)
        res = simulate(sc)
        assert res.relative_drift < 1e-9
        log = res.log
        assert log.seg_To.min() >= 0 and log.seg_To.max() <= 100
        assert log.ramp_veh.min() >= 0 and log.origin_veh.min() >= 0
        # queues change by exactly (demand - admitted) dt
        dq = np.diff(log.ramp_veh, axis=0)
        expected = (log.ramp_demand - log.ramp_admitted)[:-1] / 60.0
        assert np.max(np.abs(dq - expected)) < 1e-9

    def test_no_large_sign_flips(self):
        sc = dataclasses.replace(load_preset("paper-incident"), log_interval_s=1.0, horizon_s=10 * H)
        log = simulate(sc).log
        rho = log.seg_veh / np.asarray(log.lengths_km)
        d = np.diff(rho, axis=0)
        flips = (d[1:] * d[:-1] < 0) & (np.minimum(np.abs(d[1:]), np.abs(d[:-1])) > rho_max(2) / 2)
        assert not flips.any()

    def test_never_above_jam_density(self):
        sc = dataclasses.replace(load_preset("paper-incident"), log_interval_s=1.0, horizon_s=10 * H)
        log = simulate(sc).log
        lanes = np.array([s.lanes for s in sc.network.segments], dtype=float)
        lanes_t = np.tile(lanes, (log.n, 1))
        active = (log.t_s >= 7 * H) & (log.t_s < 9.5 * H)
        lanes_t[active, 1] = 2
        rho = log.seg_veh / np.asarray(log.lengths_km)
        assert np.all(rho <= lanes_t / 0.0055 * (1 + 1e-9))

    def test_ip_no_worse_than_uncontrolled_on_reference_peak(self):
        sc = load_preset("paper-network")
        tts = {}
        for kind in ("none", "ip"):
            run = dataclasses.replace(sc, controller=dataclasses.replace(sc.controller, kind=kind))
            tts[kind] = compute_tts(simulate(run).log)
        assert tts["ip"] <= tts["none"]

    def test_exit_capacity_limits_outflow(self):
        sc = single_segment(60.0, horizon=H, exit_capacity_vpm=40.0)
        log = simulate(sc).log
        assert log.outflow.max() <= 40.0 + 1e-12
        assert log.seg_To[-1, 0] > log.seg_To[0, 0]

    def test_origin_queue_when_first_segment_full(self):
        sc = single_segment(60.0, horizon=H, exit_capacity_vpm=10.0)
        res = simulate(sc)
        assert res.log.origin_veh[-1] > 0
        assert res.relative_drift < 1e-9

    def test_fault_reports_step(self):
        with pytest.raises(SimulationFault) as info:
            segment_density_step(1.0, 0.0, 120.0, 1.0, 1.0)
        assert "outside" in str(info.value)


class TestLogging:
    def test_interval_means_sum_to_totals(self):
        sc = dataclasses.replace(load_preset("paper-incident"), horizon_s=4 * H)
        fine = simulate(dataclasses.replace(sc, log_interval_s=1.0)).log
        coarse = simulate(sc).log
        k = int(coarse.interval_s)
        assert np.allclose(fine.seg_Q.reshape(coarse.n, k, -1).mean(axis=1), coarse.seg_Q, rtol=0, atol=1e-9)
        assert np.allclose(fine.ramp_veh.reshape(coarse.n, k, -1).mean(axis=1), coarse.ramp_veh, atol=1e-9)

    def test_green_constant_within_cycle(self):
        sc = dataclasses.replace(load_preset("paper-incident"), log_interval_s=1.0, horizon_s=2 * H)
        log = simulate(sc).log
        g = log.ramp_GD.reshape(-1, 40, log.ramp_GD.shape[1])
        assert np.all(g == g[:, :1, :])
