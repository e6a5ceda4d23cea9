"""Image chain: drift removal, CLAHE, Canny, Hough, peak finding."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qdfarm import imaging, sim
from qdfarm.core import Axis, ChargeStabilityMap, DeviceClass, DotParameters, MapMode

VG = Axis(0.2, 0.6, 256)
VDS = Axis(-0.02, 0.02, 128)


def make_map(values, mode=MapMode.RF):
    values = np.asarray(values, dtype=float)
    nrow, ncol = values.shape
    return ChargeStabilityMap(values, Axis(0.0, 1.0, ncol), Axis(-0.01, 0.01, nrow), mode=mode)


def noise_map(shape=(32, 64), sigma=1.0, seed=0):
    rng = np.random.default_rng(seed)
    return make_map(rng.normal(0.0, sigma, size=shape))


def good_map(noise_sigma=0.0, drift_amplitude=0.0, **dot_kw):
    dot = DotParameters(v_1e=dot_kw.pop("v_1e", 0.387),
                        alpha_g=dot_kw.pop("alpha_g", 0.741),
                        asymmetry=dot_kw.pop("asymmetry", -0.04),
                        v_2e=dot_kw.pop("v_2e", None))
    spec = sim.SimDeviceSpec(device_class=DeviceClass.GOOD, dot=dot,
                             noise_sigma=noise_sigma, drift_amplitude=drift_amplitude)
    return sim.synth_map(spec, seed=9)


class TestDifferentiateDc:
    def test_ohmic_plane_gives_constant_conductance(self):
        g = 1e-6
        vds = Axis(-0.01, 0.01, 16)
        current = g * np.broadcast_to(vds.values[:, None], (16, 8)).copy()
        cmap = ChargeStabilityMap(current, Axis(0.0, 1.0, 8), vds, mode=MapMode.DC_CURRENT)
        out = imaging.differentiate_dc(cmap)
        assert out.mode is MapMode.DC_DERIVATIVE
        np.testing.assert_allclose(out.values, g, rtol=1e-12)

    def test_bias_independent_current_gives_zero(self):
        # zero up to the roundoff of the unequal linspace steps
        cmap = make_map(np.ones((16, 8)), mode=MapMode.DC_CURRENT)
        out = imaging.differentiate_dc(cmap)
        np.testing.assert_allclose(out.values, 0.0, atol=1e-10)

    def test_shape_preserved(self):
        cmap = make_map(np.random.default_rng(0).normal(size=(12, 20)),
                        mode=MapMode.DC_CURRENT)
        assert imaging.differentiate_dc(cmap).values.shape == (12, 20)

    def test_mode_and_row_count_checked(self):
        with pytest.raises(ValueError):
            imaging.differentiate_dc(make_map(np.ones((8, 8))))  # rf mode
        vds = Axis(-0.01, 0.01, 2)
        tiny = ChargeStabilityMap(np.ones((2, 4)), Axis(0.0, 1.0, 4), vds,
                                  mode=MapMode.DC_CURRENT)
        with pytest.raises(ValueError):
            imaging.differentiate_dc(tiny)


class TestRemoveDrift:
    def test_constant_row_offsets_removed(self):
        offsets = np.arange(16, dtype=float)[:, None]
        cmap = make_map(np.zeros((16, 8)) + offsets)
        out = imaging.remove_drift(cmap)
        np.testing.assert_allclose(out.values, 0.0, atol=1e-15)

    def test_offset_free_map_unchanged(self):
        values = np.zeros((4, 6))
        values[:, 3] = 1.0  # zero mean in the first-100 window? no: mean 1/6
        cmap = make_map(values)
        out = imaging.remove_drift(cmap)
        np.testing.assert_allclose(out.values.mean(axis=1), 0.0, atol=1e-15)

    def test_idempotent(self):
        # the second pass subtracts only the roundoff residue of the first
        cmap = noise_map(seed=4)
        once = imaging.remove_drift(cmap)
        twice = imaging.remove_drift(once)
        np.testing.assert_allclose(twice.values, once.values, atol=1e-14)

    def test_window_caps_at_row_length(self):
        cmap = noise_map(shape=(6, 10), seed=5)
        a = imaging.remove_drift(cmap, window=10)
        b = imaging.remove_drift(cmap, window=500)
        np.testing.assert_array_equal(a.values, b.values)

    def test_reduces_random_walk_drift(self):
        rng = np.random.default_rng(6)
        walk = np.cumsum(rng.normal(0.0, 0.5, size=64))
        clean = np.zeros((64, 128))
        drifted = make_map(clean + walk[:, None] + rng.normal(0.0, 0.01, (64, 128)))
        out = imaging.remove_drift(drifted)
        before = drifted.values.mean(axis=1).std()
        after = out.values.mean(axis=1).std()
        assert before / after >= 5.0


class TestClahe:
    def test_constant_map_stays_constant(self):
        out = imaging.clahe(make_map(np.full((32, 32), 3.7)))
        assert out.values.min() == out.values.max()

    def test_output_range_is_unit_interval(self):
        out = imaging.clahe(noise_map(shape=(64, 64), seed=7))
        assert out.values.min() >= 0.0
        assert out.values.max() <= 1.0

    def test_monotone_input_maps_monotonically(self):
        ramp = np.tile(np.linspace(0.0, 1.0, 64), (32, 1))
        out = imaging.clahe(make_map(ramp), tile_grid=(1, 1))
        row = out.values[0]
        assert np.all(np.diff(row) >= -1e-12)

    def test_expands_local_contrast_of_dim_region(self):
        # left half: tiny dynamic range; right half: same ramp near 1.
        # Global normalization leaves the left half nearly flat; per-tile
        # equalization spreads it over its own histogram.
        ramp = np.tile(np.linspace(0.0, 0.05, 32), (32, 1))
        values = np.concatenate([ramp, ramp + 0.95], axis=1)
        cmap = make_map(values)
        out = imaging.clahe(cmap, tile_grid=(1, 2), clip_limit=0.5)
        raw = (values - values.min()) / np.ptp(values)
        # columns left of the first tile center use the pure left mapping
        assert np.ptp(out.values[:, :16]) > 5 * np.ptp(raw[:, :16])

    def test_validates_arguments(self):
        with pytest.raises(ValueError):
            imaging.clahe(noise_map(), tile_grid=(0, 4))
        with pytest.raises(ValueError):
            imaging.clahe(noise_map(), clip_limit=0.0)


class TestCanny:
    def test_edge_map_shape_matches_source(self):
        cmap = noise_map(shape=(40, 50), seed=9)
        edges = imaging.canny(cmap)
        assert edges.pixels.shape == (40, 50)
        assert edges.pixels.dtype == bool

    def test_invariant_under_constant_shift(self):
        cmap = good_map()
        shifted = cmap.with_values(cmap.values + 123.0)
        a = imaging.canny(cmap)
        b = imaging.canny(shifted)
        np.testing.assert_array_equal(a.pixels, b.pixels)

    def test_invariant_under_rescaling(self):
        cmap = good_map()
        scaled = cmap.with_values(cmap.values * 3.2e-7)
        a = imaging.canny(cmap)
        b = imaging.canny(scaled)
        np.testing.assert_array_equal(a.pixels, b.pixels)

    def test_flat_map_has_no_edges(self):
        edges = imaging.canny(make_map(np.full((16, 16), 2.0)))
        assert not edges.pixels.any()

    def test_noise_below_absolute_thresholds_gives_empty_map(self):
        cmap = noise_map(shape=(48, 48), sigma=0.001, seed=10)
        edges = imaging.canny(cmap, gaussian_sigma=1.5,
                              low_threshold=0.5, high_threshold=1.0)
        assert not edges.pixels.any()

    def test_step_edge_found_and_thin(self):
        values = np.zeros((32, 64))
        values[:, 32:] = 1.0
        edges = imaging.canny(make_map(values), gaussian_sigma=1.0)
        cols = np.where(edges.pixels.any(axis=0))[0]
        assert cols.size > 0
        assert np.all(np.abs(cols - 31.5) <= 2.0)
        # at most 2 px wide anywhere
        assert edges.pixels.sum(axis=1).max() <= 2

    def test_threshold_ordering_enforced(self):
        with pytest.raises(ValueError):
            imaging.canny(noise_map(), low_threshold=1.0, high_threshold=0.5)


class TestHough:
    def test_recovers_a_drawn_line(self):
        values = np.zeros((64, 64))
        for i in range(10, 54):
            values[i, i] = 1.0
        edges = imaging.BinaryEdgeMap(values > 0, Axis(0.0, 1.0, 64),
                                      Axis(-0.01, 0.01, 64))
        segments = imaging.hough_segments(edges, min_length=20)
        assert segments
        # pixel slope 1 maps to axis slope (vds span / vg span) = 0.02
        assert segments[0].slope == pytest.approx(0.02 / 1.0, rel=0.1)

    def test_slopes_invariant_under_value_rescaling(self):
        cmap = good_map()
        a = imaging.hough_segments(imaging.canny(cmap))
        b = imaging.hough_segments(imaging.canny(cmap.with_values(cmap.values * 50)))
        assert [s.slope for s in a] == [s.slope for s in b]
        assert [(s.vg_start, s.vg_end) for s in a] == [(s.vg_start, s.vg_end) for s in b]

    def test_empty_edges_give_no_segments(self):
        edges = imaging.BinaryEdgeMap(np.zeros((32, 32), dtype=bool),
                                      Axis(0.0, 1.0, 32), Axis(-0.01, 0.01, 32))
        assert imaging.hough_segments(edges) == []

    def test_max_segments_respected(self):
        cmap = good_map()
        segments = imaging.hough_segments(imaging.canny(imaging.clahe(cmap)),
                                          max_segments=3)
        assert len(segments) <= 3

    def test_segment_lengths_meet_minimum(self):
        cmap = good_map()
        segments = imaging.hough_segments(imaging.canny(imaging.clahe(cmap)),
                                          min_length=15)
        assert all(s.n_pixels >= 15 for s in segments)


class TestTraces:
    def test_zero_bias_trace_picks_central_row(self):
        values = np.zeros((5, 8))
        values[2] = 7.0
        cmap = ChargeStabilityMap(values, Axis(0.0, 1.0, 8), Axis(-0.02, 0.02, 5))
        vg, trace = imaging.zero_bias_trace(cmap)
        np.testing.assert_array_equal(trace, 7.0)
        np.testing.assert_array_equal(vg, cmap.vg_values)

    def test_low_bias_trace_averages_band(self):
        values = np.zeros((5, 8))
        values[1:4] = [[1.0] * 8, [2.0] * 8, [3.0] * 8]
        cmap = ChargeStabilityMap(values, Axis(0.0, 1.0, 8), Axis(-0.02, 0.02, 5))
        _, trace = imaging.low_bias_trace(cmap, half_band=0.011)
        np.testing.assert_allclose(trace, 2.0)

    def test_low_bias_trace_falls_back_to_zero_row(self):
        # even bias count: no row inside the band, nearest-to-zero row wins
        values = np.zeros((4, 6))
        values[1] = 5.0
        cmap = ChargeStabilityMap(values, Axis(0.0, 1.0, 6), Axis(-0.03, 0.03, 4))
        _, trace = imaging.low_bias_trace(cmap, half_band=1e-6)
        assert trace.max() == 5.0


class TestFindPeaks:
    def test_flat_trace_has_no_peaks(self):
        assert imaging.find_peaks(np.zeros(100)).size == 0

    def test_two_thermal_peaks_located_within_one_pixel(self):
        vg = VG.values
        trace = (np.cosh((vg - 0.387) / 0.004) ** -2
                 + np.cosh((vg - 0.412) / 0.004) ** -2)
        found = imaging.find_peaks(trace, vg_values=vg)
        assert found.size == 2
        assert abs(found[0] - 0.387) <= VG.step
        assert abs(found[1] - 0.412) <= VG.step

    def test_subprominence_ripple_ignored(self):
        # ripple prominence (twice its amplitude) is half the threshold
        vg = VG.values
        trace = np.cosh((vg - 0.4) / 0.004) ** -2
        trace = trace + 0.012 * np.sin(2 * np.pi * (vg - 0.2) / 0.03)
        found = imaging.find_peaks(trace, min_prominence=0.05, vg_values=vg)
        assert found.size == 1
        assert abs(found[0] - 0.4) <= VG.step

    def test_prominence_is_relative_to_trace_range(self):
        vg = VG.values
        trace = np.cosh((vg - 0.4) / 0.004) ** -2
        big = imaging.find_peaks(trace, vg_values=vg)
        tiny = imaging.find_peaks(trace * 1e-9, vg_values=vg)
        np.testing.assert_array_equal(big, tiny)

    def test_indices_returned_without_axis(self):
        trace = np.zeros(50)
        trace[20] = 1.0
        found = imaging.find_peaks(trace)
        assert found.tolist() == [20]

    def test_zero_bias_peaks_on_simulated_map(self):
        cmap = good_map(v_2e=0.412)
        peaks = imaging.zero_bias_peaks(cmap)
        assert any(abs(p - 0.387) < 0.004 for p in peaks)
        assert any(abs(p - 0.412) < 0.004 for p in peaks)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), c=st.floats(-100.0, 100.0),
       k=st.floats(0.01, 100.0))
def test_edge_geometry_scale_and_shift_invariance(seed, c, k):
    """Canny output depends only on map geometry, not units or offsets."""
    rng = np.random.default_rng(seed)
    values = rng.normal(0.0, 1.0, size=(24, 32))
    cmap = make_map(values)
    other = make_map(k * values + c)
    a = imaging.canny(cmap)
    b = imaging.canny(other)
    np.testing.assert_array_equal(a.pixels, b.pixels)
