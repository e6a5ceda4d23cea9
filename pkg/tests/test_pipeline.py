"""End-to-end per-map analysis and batch farm analysis."""
import dataclasses

import numpy as np
import pytest

from qdfarm import pipeline, sim
from qdfarm.core import Axis, ChargeStabilityMap, DeviceClass, DotParameters, MapMode

TRUE = DotParameters(v_1e=0.387, alpha_g=0.741, asymmetry=-0.04, v_2e=0.412)


def spec_for(device_class=DeviceClass.GOOD, noise_sigma=0.0, drift_amplitude=0.0, **kw):
    dot = kw.pop("dot", TRUE if device_class is DeviceClass.GOOD else None)
    return sim.SimDeviceSpec(device_class=device_class, dot=dot,
                             noise_sigma=noise_sigma,
                             drift_amplitude=drift_amplitude, **kw)


@pytest.fixture(scope="module")
def clean_good_result():
    cmap = sim.synth_map(spec_for(), seed=21)
    return pipeline.analyze_map(cmap)


class TestAnalyzeMap:
    def test_clean_good_device_recovered(self, clean_good_result):
        r = clean_good_result
        assert r.device_class is DeviceClass.GOOD
        assert r.error is None
        assert r.params.v_1e == pytest.approx(TRUE.v_1e, abs=0.005)
        assert r.params.alpha_g == pytest.approx(TRUE.alpha_g, abs=0.05)
        assert r.params.asymmetry == pytest.approx(TRUE.asymmetry, abs=0.08)

    def test_second_electron_and_charging_energy(self, clean_good_result):
        params = clean_good_result.params
        assert params.v_2e == pytest.approx(TRUE.v_2e, abs=0.005)
        expected_ec = (params.v_2e - params.v_1e) * params.alpha_g * 1000
        assert params.charging_energy == pytest.approx(expected_ec)

    def test_noise_free_map_reports_infinite_snr(self, clean_good_result):
        assert clean_good_result.snr == float("inf")

    def test_noisy_map_reports_finite_snr(self):
        cmap = sim.synth_map(spec_for(noise_sigma=0.05), seed=22)
        r = pipeline.analyze_map(cmap)
        assert r.snr is not None and 1.0 < r.snr < 1e4

    def test_turn_on_device_is_bad(self):
        cmap = sim.synth_map(spec_for(DeviceClass.BAD, noise_sigma=0.0125,
                                      bad_kind="turnon"), seed=23)
        assert pipeline.analyze_map(cmap).device_class is DeviceClass.BAD

    def test_dead_device_is_bad(self):
        cmap = sim.synth_map(spec_for(DeviceClass.BAD, noise_sigma=0.0125,
                                      bad_kind="dead"), seed=24)
        r = pipeline.analyze_map(cmap)
        assert r.device_class is DeviceClass.BAD
        assert r.params is None

    def test_series_double_dot_is_multi(self):
        second = DotParameters(v_1e=0.397, alpha_g=0.70, asymmetry=0.05)
        cmap = sim.synth_map(spec_for(DeviceClass.MULTI, dot=TRUE,
                                      second_dot=second, noise_sigma=0.0125),
                             seed=25)
        assert pipeline.analyze_map(cmap).device_class is DeviceClass.MULTI

    def test_scale_invariance_of_extraction(self, clean_good_result):
        cmap = sim.synth_map(spec_for(), seed=21)
        scaled = pipeline.analyze_map(cmap.with_values(cmap.values * 3.7e-8))
        assert scaled.device_class is clean_good_result.device_class
        assert scaled.params.v_1e == clean_good_result.params.v_1e
        assert scaled.params.alpha_g == clean_good_result.params.alpha_g
        assert scaled.params.asymmetry == clean_good_result.params.asymmetry

    def test_dc_current_map_analyzed_like_rf(self, clean_good_result):
        cmap = sim.synth_map(spec_for(), seed=21, mode=MapMode.DC_CURRENT)
        r = pipeline.analyze_map(cmap)
        assert r.device_class is DeviceClass.GOOD
        assert r.params.v_1e == pytest.approx(clean_good_result.params.v_1e,
                                              abs=0.002)
        assert r.params.alpha_g == pytest.approx(clean_good_result.params.alpha_g,
                                                 abs=0.02)

    def test_noisy_dc_map_needs_averaging_like_a_slow_dc_sweep(self):
        # differentiating amplifies current noise, so the dc leg gets the
        # heavy averaging a real dc measurement would use
        spec = spec_for(noise_sigma=0.0125, drift_amplitude=0.002, n_averages=1000)
        cmap = sim.synth_map(spec, seed=26, mode=MapMode.DC_CURRENT)
        r = pipeline.analyze_map(cmap)
        assert r.device_class is DeviceClass.GOOD
        assert r.params.v_1e == pytest.approx(TRUE.v_1e, abs=0.005)


class TestAnalyzeFarm:
    def small_batch(self, n=6):
        maps = []
        for i in range(n):
            cls = (DeviceClass.GOOD, DeviceClass.BAD, DeviceClass.MULTI)[i % 3]
            dot = TRUE if cls is not DeviceClass.BAD else None
            second = (DotParameters(0.397, 0.70, 0.05)
                      if cls is DeviceClass.MULTI else None)
            spec = spec_for(cls, dot=dot, second_dot=second, noise_sigma=0.0125)
            maps.append(sim.synth_map(spec, seed=[30, i], device_id=i))
        return maps

    def test_results_in_device_order(self):
        maps = self.small_batch()
        analysis = pipeline.analyze_farm(maps[::-1], workers=1)
        assert [r.device_id for r in analysis.results] == list(range(len(maps)))

    def test_parallel_matches_serial(self):
        maps = self.small_batch()
        serial = pipeline.analyze_farm(maps, workers=1)
        parallel = pipeline.analyze_farm(maps, workers=2)
        for a, b in zip(serial.results, parallel.results):
            assert a.device_id == b.device_id
            assert a.device_class == b.device_class
            if a.params is None:
                assert b.params is None
            else:
                assert a.params.v_1e == b.params.v_1e

    def test_per_device_failure_recorded_without_stopping(self):
        maps = self.small_batch(3)
        # two bias rows cannot be differentiated: this device must fail
        broken = ChargeStabilityMap(np.zeros((2, 8)), Axis(0.0, 1.0, 8),
                                    Axis(-0.01, 0.01, 2),
                                    mode=MapMode.DC_CURRENT, device_id=99)
        analysis = pipeline.analyze_farm(maps + [broken], workers=1)
        assert analysis.n_failed == 1
        failed = analysis.by_id(99)
        assert failed.failed and "bias rows" in failed.error
        assert analysis.by_id(0).device_class is DeviceClass.GOOD

    def test_elapsed_recorded(self):
        analysis = pipeline.analyze_farm(self.small_batch(2), workers=1)
        assert analysis.elapsed_seconds > 0

    def test_worker_env_override(self, monkeypatch):
        monkeypatch.setenv(pipeline.WORKERS_ENV_VAR, "3")
        assert pipeline.default_worker_count() == 3
        monkeypatch.setenv(pipeline.WORKERS_ENV_VAR, "0")
        with pytest.raises(ValueError):
            pipeline.default_worker_count()

    def test_unknown_device_id_raises(self):
        analysis = pipeline.analyze_farm(self.small_batch(2), workers=1)
        with pytest.raises(KeyError):
            analysis.by_id(12345)
