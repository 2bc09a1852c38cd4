import dataclasses

import numpy as np
import pytest
from hypothesis import given, strategies as st

from helpers import make_log
from rampmeter.metrics import (
    compare_runs,
    compute_ms,
    compute_report,
    compute_tts,
    compute_ttd,
    report_table,
)


class TestTTS:
    def test_empty_traffic(self):
        assert compute_tts(make_log(np.zeros((5, 2)), np.zeros((5, 2)), (1, 1))) == 0.0

    def test_constant_stock(self):
        log = make_log(np.full((60, 1), 100.0), np.zeros((60, 1)), (2.0,), interval_s=60.0)
        assert compute_tts(log) == pytest.approx(100.0)

    def test_hand_sum(self):
        seg = [[10, 20], [12, 18], [15, 25]]
        ramps = [[1], [2], [0]]
        origin = [0, 3, 4]
        log = make_log(seg, np.zeros((3, 2)), (1, 2), interval_s=40.0, ramp_veh=ramps, origin_veh=origin)
        hand = (30 + 1 + 0) + (30 + 2 + 3) + (40 + 0 + 4)
        assert compute_tts(log) == pytest.approx(hand * 40 / 3600)

    def test_empty_log_rejected(self):
        with pytest.raises(ValueError):
            compute_tts(make_log(np.zeros((0, 1)), np.zeros((0, 1)), (1,)))

    @given(st.integers(1, 20), st.floats(0.01, 50))
    def test_monotone_in_queue_records(self, extra, queue):
        base = make_log(np.ones((3, 1)), np.zeros((3, 1)), (1,), ramp_veh=np.zeros((3, 1)))
        n = 3 + extra
        longer = make_log(
            np.vstack([np.ones((3, 1)), np.zeros((extra, 1))]),
            np.zeros((n, 1)),
            (1,),
            ramp_veh=np.vstack([np.zeros((3, 1)), np.full((extra, 1), queue)]),
        )
        assert compute_tts(longer) > compute_tts(base)


class TestTTD:
    def test_zero_flow(self):
        assert compute_ttd(make_log(np.ones((4, 1)), np.zeros((4, 1)), (3.0,))) == 0.0

    def test_one_hour_at_sixty(self):
        log = make_log(np.zeros((60, 1)), np.full((60, 1), 60.0), (1.0,), interval_s=60.0)
        assert compute_ttd(log) == pytest.approx(3600.0)

    def test_hand_sum(self):
        q = [[10, 5], [20, 0], [0, 30]]
        log = make_log(np.zeros((3, 2)), q, (0.5, 2.0), interval_s=30.0)
        hand = sum(row[0] * 0.5 + row[1] * 2.0 for row in q) * 0.5  # 30 s = 0.5 min
        assert compute_ttd(log) == pytest.approx(hand)


class TestMS:
    def test_examples(self):
        assert compute_ms(100.0, 6000.0) == pytest.approx(60.0)
        assert compute_ms(0.0, 0.0) == 0.0

    def test_negative_tts(self):
        with pytest.raises(ValueError):
            compute_ms(-1.0, 1.0)

    @given(st.floats(10, 130), st.floats(1, 500), st.floats(0.1, 5))
    def test_constant_speed_log(self, v, rho, L):
        # steady segment: stock rho*L, outflow rho*v/60 Veh/min
        n = 10
        log = make_log(np.full((n, 1), rho * L), np.full((n, 1), rho * v / 60), (L,))
        assert compute_report(log).ms == pytest.approx(v, rel=1e-9)

    @given(st.lists(st.floats(0, 100), min_size=2, max_size=10))
    def test_ms_times_tts_is_ttd(self, stock):
        n = len(stock)
        log = make_log(np.array(stock)[:, None], np.array(stock)[::-1, None], (1.3,))
        r = compute_report(log)
        if r.tts > 0:
            assert r.ms * r.tts == pytest.approx(r.ttd, rel=1e-12)


class TestReport:
    def test_time_above_critical(self):
        log = make_log(np.zeros((4, 1)), np.zeros((4, 1)), (1,), interval_s=60.0)
        log.seg_To[:, 0] = [10, 25, 30, 5]
        assert compute_report(log, critical_occupancy=[20.0]).time_above_critical_min == (2.0,)

    def test_queue_statistics(self):
        log = make_log(np.zeros((3, 1)), np.zeros((3, 1)), (1,), ramp_veh=[[0], [10], [20]])
        r = compute_report(log)
        assert r.ramp_max_queue_m == (110.0,)
        assert r.ramp_mean_queue_m == pytest.approx((55.0,))


class TestCompare:
    def _report(self, tts, ttd=1000.0, horizon=3600.0):
        log = make_log(np.full((60, 1), tts), np.full((60, 1), ttd / 60), (1.0,), interval_s=horizon / 60)
        return compute_report(log)

    def test_identical_runs(self):
        r = self._report(100)
        comp = compare_runs({"a": r, "b": r})
        assert all(row[k] == 0 for row in comp.rows for k in ("dTTS_pct", "dTTD_pct", "dMS_pct"))

    def test_percentage_delta(self):
        comp = compare_runs({"none": self._report(100), "ip": self._report(80)})
        assert comp.rows[1]["dTTS_pct"] == pytest.approx(-20.0)

    def test_baseline_choice(self):
        comp = compare_runs({"a": self._report(100), "b": self._report(50)}, baseline="b")
        assert comp.rows[0]["dTTS_pct"] == pytest.approx(100.0)
        with pytest.raises(KeyError):
            compare_runs({"a": self._report(1), "b": self._report(2)}, baseline="zzz")

    def test_horizon_mismatch_warns(self):
        comp = compare_runs({"a": self._report(100), "b": self._report(100, horizon=7200.0)})
        assert comp.warnings and "horizon" in comp.warnings[0]
        assert "warning" in comp.to_text()

    def test_needs_two(self):
        with pytest.raises(ValueError):
            compare_runs({"a": self._report(1)})

    def test_single_table(self):
        table = report_table("ip", self._report(10))
        assert table.to_csv().splitlines()[0].startswith("run,TTS_veh_h")
        assert len(table.to_csv().splitlines()) == 2
