"""Resonator model, reflection calibration, SNR/bandwidth fitting."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qdfarm import rfchain, sim
from qdfarm.core import Axis, ChargeStabilityMap, DeviceClass, DotParameters


@pytest.fixture(scope="module")
def calibrated():
    return rfchain.calibrate_internal_loss(rfchain.default_resonator())


class TestResonantFrequency:
    def test_design_values(self):
        f = rfchain.resonant_frequency(32.7e-9, 4.66e-12)
        assert f == pytest.approx(407.6e6, abs=0.5e6)

    def test_quadrupled_capacitance_halves_frequency(self):
        f1 = rfchain.resonant_frequency(32.7e-9, 4.66e-12)
        f2 = rfchain.resonant_frequency(32.7e-9, 4 * 4.66e-12)
        assert f2 == pytest.approx(f1 / 2, rel=1e-12)

    def test_monotone_decreasing_in_both_arguments(self):
        f = rfchain.resonant_frequency
        assert f(33e-9, 5e-12) < f(32e-9, 5e-12)
        assert f(33e-9, 5e-12) < f(33e-9, 4e-12)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            rfchain.resonant_frequency(0.0, 4.66e-12)
        with pytest.raises(ValueError):
            rfchain.resonant_frequency(32.7e-9, -1e-12)

    def test_default_model_capacitance_decomposition(self):
        m = rfchain.default_resonator()
        total = m.coupling_capacitance + m.parasitic_chip + m.parasitic_pcb
        assert total == pytest.approx(4.66e-12, rel=1e-9)
        assert m.natural_frequency == pytest.approx(407.7e6, abs=0.5e6)


class TestReflection:
    def test_off_resonance_is_nearly_total(self, calibrated):
        f_r = calibrated.natural_frequency
        gamma = rfchain.reflection(calibrated, 10 * f_r)
        assert abs(gamma) > 0.95

    def test_calibrated_dip_matches_design_matching(self, calibrated):
        f_dip, depth = rfchain.minimum_reflection(calibrated)
        assert depth == pytest.approx(rfchain.matching_dip(0.66), abs=0.1)
        assert f_dip == pytest.approx(calibrated.natural_frequency, rel=0.01)

    def test_loaded_q_near_design(self, calibrated):
        q = rfchain.loaded_q(calibrated)
        assert q == pytest.approx(rfchain.DESIGN_LOADED_Q, rel=0.25)

    def test_device_resistance_changes_the_dip(self, calibrated):
        f_r = calibrated.natural_frequency
        blockade = abs(rfchain.reflection(calibrated, f_r))
        on_peak = abs(rfchain.reflection(calibrated, f_r, device_resistance=1e5))
        assert abs(on_peak - blockade) > 0.01

    def test_matching_dip_values(self):
        assert rfchain.matching_dip(1.0) == 0.0
        assert rfchain.matching_dip(0.66) == pytest.approx(0.2048, abs=1e-4)

    @settings(max_examples=40, deadline=None)
    @given(freq=st.floats(1e6, 5e9),
           resistance=st.floats(1e2, 1e9),
           loss=st.floats(1e2, 1e7))
    def test_reflection_magnitude_never_exceeds_unity(self, freq, resistance, loss):
        import dataclasses
        model = dataclasses.replace(rfchain.default_resonator(),
                                    internal_loss_resistance=loss)
        gamma = rfchain.reflection(model, freq, device_resistance=resistance)
        assert abs(gamma) <= 1.0 + 1e-9


class TestFitTmin:
    def test_exact_data_recovered(self):
        times = np.geomspace(1e-9, 1e-5, 25)
        snr = np.sqrt(times / 160e-12)
        assert rfchain.fit_t_min(times, snr) == pytest.approx(160e-12, rel=1e-3)

    def test_two_point_example(self):
        t = rfchain.fit_t_min([1e-6, 4e-6], [100.0, 200.0])
        assert t == pytest.approx(0.1e-9, rel=1e-9)

    def test_flat_zero_snr_is_an_error(self):
        with pytest.raises(ValueError):
            rfchain.fit_t_min([1e-6, 2e-6], [0.0, 0.0])

    def test_needs_two_samples(self):
        with pytest.raises(ValueError):
            rfchain.fit_t_min([1e-6], [3.0])

    @given(k=st.floats(0.1, 100.0))
    def test_scale_equivariance(self, k):
        times = np.geomspace(1e-8, 1e-5, 12)
        snr = np.sqrt(times / 2e-10)
        base = rfchain.fit_t_min(times, snr)
        scaled = rfchain.fit_t_min(times, k * snr)
        assert scaled == pytest.approx(base / k**2, rel=1e-9)


class TestBandwidth:
    def lorentzian(self, fwhm, f0=408e6, step=0.1e6, span=60e6):
        freqs = np.arange(f0 - span / 2, f0 + span / 2 + step / 2, step)
        snr2 = 1.0 / (1.0 + ((freqs - f0) / (fwhm / 2)) ** 2)
        return freqs, snr2

    def test_average_bandwidth_value(self):
        freqs, snr2 = self.lorentzian(6.4e6)
        assert rfchain.bandwidth_fwhm(freqs, snr2) == pytest.approx(6.4e6, abs=0.1e6)

    def test_resonator_bandwidth_value(self):
        freqs, snr2 = self.lorentzian(9.5e6)
        assert rfchain.bandwidth_fwhm(freqs, snr2) == pytest.approx(9.5e6, abs=0.1e6)

    def test_triangle_half_width(self):
        freqs = np.linspace(0.0, 10.0, 101)
        snr2 = np.maximum(0.0, 1.0 - np.abs(freqs - 5.0) / 2.0)
        # half maximum at distance 1 from the apex on each side
        assert rfchain.bandwidth_fwhm(freqs, snr2) == pytest.approx(2.0, abs=0.1)

    def test_invariant_under_snr_rescaling(self):
        freqs, snr2 = self.lorentzian(6.4e6)
        a = rfchain.bandwidth_fwhm(freqs, snr2)
        b = rfchain.bandwidth_fwhm(freqs, snr2 * 3.3e4)
        assert a == b

    def test_uncrossed_half_maximum_is_an_error(self):
        freqs = np.linspace(405e6, 411e6, 61)  # span narrower than the width
        snr2 = 1.0 / (1.0 + ((freqs - 408e6) / (20e6 / 2)) ** 2)
        with pytest.raises(ValueError):
            rfchain.bandwidth_fwhm(freqs, snr2)


class TestSnrOfMap:
    def flat_map(self, values):
        values = np.asarray(values, dtype=float)
        return ChargeStabilityMap(values, Axis(0.0, 1.0, values.shape[1]),
                                  Axis(-0.01, 0.01, values.shape[0]))

    def test_peak_height_over_unit_noise(self):
        values = np.zeros((4, 8))
        values[0] = [1, -1, 1, -1, 1, -1, 1, -1]  # mean 0, std 1
        values[2, 3] = 10.0
        cmap = self.flat_map(values)
        peak = np.zeros_like(values, dtype=bool)
        peak[2, 3] = True
        background = np.zeros_like(values, dtype=bool)
        background[0] = True
        assert rfchain.snr_of_map(cmap, peak, background) == pytest.approx(10.0)

    def test_regions_must_be_disjoint_and_background_noisy(self):
        values = np.ones((4, 8))
        cmap = self.flat_map(values)
        mask = np.ones_like(values, dtype=bool)
        with pytest.raises(ValueError):
            rfchain.snr_of_map(cmap, mask, mask)
        peak = np.zeros_like(mask)
        peak[0, 0] = True
        background = ~peak
        with pytest.raises(ValueError):  # constant background
            rfchain.snr_of_map(cmap, peak, background)

    def test_averaging_scales_snr_as_root_n(self):
        dot = DotParameters(0.387, 0.741, -0.04)
        base = sim.SimDeviceSpec(device_class=DeviceClass.GOOD, dot=dot,
                                 noise_sigma=0.05, drift_amplitude=0.0)
        import dataclasses
        clean = sim.synth_map(dataclasses.replace(base, noise_sigma=0.0), seed=0)
        peak = clean.values > 0.6 * clean.values.max()
        background = clean.values < 1e-6
        snrs = []
        for n in (1, 4):
            noisy = sim.synth_map(dataclasses.replace(base, n_averages=n), seed=31)
            snrs.append(rfchain.snr_of_map(noisy, peak, background))
        assert snrs[1] / snrs[0] == pytest.approx(2.0, rel=0.15)

    def test_pure_noise_peak_region_has_low_snr(self):
        rng = np.random.default_rng(32)
        cmap = self.flat_map(rng.normal(0.0, 1.0, size=(64, 64)))
        peak = np.zeros((64, 64), dtype=bool)
        peak[10:20, 10:20] = True
        background = np.zeros_like(peak)
        background[40:60, :] = True
        assert rfchain.snr_of_map(cmap, peak, background) < 4.0
