"""Multiplexer addressing, gate resistance, and scan-time budgeting."""
import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qdfarm import mux


class TestDecodeAddress:
    def test_origin_selects_device_zero(self):
        hot = mux.decode_address(0, 0)
        assert hot.shape == (1024,)
        assert hot[0] == 1
        assert hot.sum() == 1

    def test_last_address_selects_device_1023(self):
        hot = mux.decode_address(31, 31)
        assert hot[1023] == 1
        assert hot.sum() == 1

    def test_all_addresses_form_a_bijection(self):
        seen = set()
        for row in range(32):
            for col in range(32):
                hot = mux.decode_address(row, col)
                assert hot.sum() == 1
                seen.add(int(np.argmax(hot)))
        assert seen == set(range(1024))

    def test_out_of_range_addresses_raise(self):
        for row, col in [(-1, 0), (32, 0), (0, -1), (0, 32)]:
            with pytest.raises(ValueError):
                mux.decode_address(row, col)

    def test_non_integer_address_raises(self):
        with pytest.raises(ValueError):
            mux.decode_address(1.5, 0)


class TestOnResistance:
    def test_full_back_bias_sits_near_the_floor(self):
        r = mux.r_on(2.0, -2.0, 0.4)
        assert r == pytest.approx(2000.0, rel=0.25)

    def test_zero_back_bias_value(self):
        assert mux.r_on(0.0, 0.0, 0.4) == pytest.approx(40000.0, rel=1e-9)

    def test_back_bias_saves_an_order_of_magnitude(self):
        ratio = mux.r_on(0.0, 0.0, 0.4) / mux.r_on(2.0, -2.0, 0.4)
        assert ratio >= 10.0

    def test_monotone_in_back_bias(self):
        assert mux.r_on(1.0, -1.0, 0.4) >= mux.r_on(2.0, -2.0, 0.4)

    def test_only_differential_bias_matters(self):
        # (v_nw - v_pw)/2 identical for both settings
        assert mux.r_on(2.0, 0.0) == pytest.approx(mux.r_on(1.0, -1.0), rel=1e-12)

    def test_common_mode_raises_resistance(self):
        assert mux.r_on(0.0, 0.0, 0.6) > mux.r_on(0.0, 0.0, 0.4)

    def test_array_arguments_broadcast(self):
        v = np.array([0.0, 1.0, 2.0])
        r = mux.r_on(v, -v)
        assert r.shape == (3,)
        assert np.all(np.diff(r) < 0)

    @given(lo=st.floats(0.0, 3.0), step=st.floats(0.0, 3.0))
    def test_never_increases_with_back_bias(self, lo, step):
        hi = lo + step
        assert mux.r_on(hi, -hi) <= mux.r_on(lo, -lo) + 1e-9


class TestEffectiveSnr:
    def test_floor_resistance_keeps_the_base_snr(self):
        assert mux.effective_snr(7.0, 2000.0) == 7.0

    def test_below_floor_does_not_boost(self):
        assert mux.effective_snr(7.0, 500.0) == 7.0

    def test_soft_switch_costs_signal(self):
        assert mux.effective_snr(7.0, 20000.0) < 7.0
        assert mux.effective_snr(7.0, 20000.0) == pytest.approx(0.7)

    def test_open_switch_kills_the_signal(self):
        assert mux.effective_snr(7.0, math.inf) == 0.0

    def test_monotone_non_increasing(self):
        r = np.geomspace(2e3, 2e7, 50)
        snr = mux.effective_snr(5.0, r)
        assert np.all(np.diff(snr) <= 0)

    def test_validation(self):
        with pytest.raises(ValueError):
            mux.effective_snr(-1.0, 2000.0)
        with pytest.raises(ValueError):
            mux.effective_snr(1.0, 0.0)


class TestMuxState:
    def test_powered_state_opens_exactly_one_gate(self):
        state = mux.MuxState(row_address=3, col_address=17)
        gates = state.gates()
        assert gates.sum() == 1
        assert gates[state.selected_device] == 1
        assert state.selected_device == 32 * 3 + 17

    def test_every_deselected_device_is_grounded(self):
        state = mux.MuxState(row_address=3, col_address=17)
        down = state.pulled_down()
        assert down.sum() == 1023
        assert not down[state.selected_device]

    def test_powered_off_grounds_the_whole_farm(self):
        state = mux.MuxState(row_address=3, col_address=17, powered=False)
        assert state.gates().sum() == 0
        assert state.pulled_down().all()

    def test_one_hot_over_every_address(self):
        for row in range(0, 32, 7):
            for col in range(0, 32, 5):
                state = mux.MuxState(row_address=row, col_address=col)
                assert state.gates().sum() == 1

    def test_invalid_address_rejected_at_construction(self):
        with pytest.raises(ValueError):
            mux.MuxState(row_address=32, col_address=0)

    def test_address_steps_through_replace(self):
        state = mux.MuxState(row_address=0, col_address=0)
        stepped = dataclasses.replace(state, col_address=5)
        assert stepped.selected_device == 5
        assert state.selected_device == 0  # snapshot unchanged

    def test_default_back_bias_is_saturated(self):
        state = mux.MuxState()
        assert state.on_resistance() == pytest.approx(2000.0, rel=0.25)


class TestDeviceScan:
    def test_seconds(self):
        scan = mux.DeviceScan(device_id=0, points=100, tau=1e-5,
                              averages=3, settle=2e-3)
        assert scan.seconds == pytest.approx(100 * 1e-5 * 3 + 2e-3, rel=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            mux.DeviceScan(device_id=0, points=0, tau=1e-5)
        with pytest.raises(ValueError):
            mux.DeviceScan(device_id=0, points=1, tau=0.0)
        with pytest.raises(ValueError):
            mux.DeviceScan(device_id=0, points=1, tau=1e-5, averages=0)
        with pytest.raises(ValueError):
            mux.DeviceScan(device_id=0, points=1, tau=1e-5, settle=-1e-3)


class TestScanTime:
    def test_headline_farm_scan_is_exactly_300_seconds(self):
        report = mux.scan_time(mux.default_plan())
        assert report.total_seconds == 1024 * (28600 * 10e-6 + 7e-3)
        assert report.total_seconds == pytest.approx(300.032, abs=1e-9)
        assert report.per_device.shape == (1024,)
        assert report.per_device[0] == pytest.approx(0.293, rel=1e-12)

    def test_microsecond_integration_example(self):
        plan = mux.default_plan(points=8192, tau=1e-6, settle=10e-3)
        report = mux.scan_time(plan)
        assert report.total_seconds == 1024 * (8192 * 1e-6 + 10e-3)
        assert report.total_seconds == pytest.approx(18.628608, rel=1e-12)

    def test_total_is_permutation_invariant(self):
        plan = mux.default_plan(n_devices=64, points=773, tau=3.1e-6, settle=1.9e-3)
        rng = np.random.default_rng(5)
        shuffled = mux.ScanPlan(entries=tuple(rng.permutation(plan.entries)),
                                n_devices=64)
        assert mux.scan_time(shuffled).total_seconds == mux.scan_time(plan).total_seconds

    def test_budget_flag(self):
        plan = mux.default_plan()
        assert mux.scan_time(plan, budget=300.0).over_budget
        assert not mux.scan_time(plan, budget=301.0).over_budget
        assert not mux.scan_time(plan).over_budget

    def test_empty_plan_is_an_error(self):
        with pytest.raises(ValueError, match="empty"):
            mux.scan_time(mux.ScanPlan(entries=(), n_devices=4))

    def test_duplicate_device_raises(self):
        entries = [mux.DeviceScan(device_id=i, points=10, tau=1e-6) for i in (0, 1, 1, 3)]
        with pytest.raises(ValueError, match="more than once"):
            mux.scan_time(mux.ScanPlan(entries=entries, n_devices=4))

    def test_missing_device_raises(self):
        entries = [mux.DeviceScan(device_id=i, points=10, tau=1e-6) for i in (0, 1, 2)]
        with pytest.raises(ValueError, match="cover"):
            mux.scan_time(mux.ScanPlan(entries=entries, n_devices=4))

    def test_unknown_device_raises(self):
        entries = [mux.DeviceScan(device_id=i, points=10, tau=1e-6) for i in (0, 1, 2, 7)]
        with pytest.raises(ValueError, match="cover"):
            mux.scan_time(mux.ScanPlan(entries=entries, n_devices=4))

    @settings(max_examples=25, deadline=None)
    @given(data=st.data())
    def test_total_matches_exact_sum_of_entries(self, data):
        n = data.draw(st.integers(1, 12))
        entries = []
        for i in range(n):
            entries.append(mux.DeviceScan(
                device_id=i,
                points=data.draw(st.integers(1, 10000)),
                tau=data.draw(st.floats(1e-7, 1e-3)),
                averages=data.draw(st.integers(1, 8)),
                settle=data.draw(st.floats(0.0, 0.1)),
            ))
        report = mux.scan_time(mux.ScanPlan(entries=entries, n_devices=n))
        assert report.total_seconds == math.fsum(e.seconds for e in entries)
