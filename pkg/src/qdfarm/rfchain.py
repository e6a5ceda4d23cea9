"""Reflectometry chain: resonator circuit, SNR scaling, bandwidth.

The readout resonator is an inductor against the chip and board parasitics,
coupled to a 50 ohm line through a capacitor.  The device appears as a
variable resistance in parallel with the tank; internal losses are lumped
into one parallel resistance calibrated from the measured matching.
"""

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

# design reference values for the readout chain
DESIGN_MATCHING = 0.66          # matching coefficient beta at resonance
DESIGN_LOADED_Q = 21.0
DESIGN_INTERNAL_Q = 34.9
RESONATOR_IMPEDANCE = 75.0      # ohm, sqrt(L/C); informational only


@dataclass(frozen=True)
class ResonatorModel:
    """Lumped-element readout resonator.

    internal_loss_resistance models the finite internal quality factor as
    a resistance across the tank; infinity means a lossless tank.
    """

    inductance: float
    coupling_capacitance: float
    parasitic_chip: float
    parasitic_pcb: float
    line_impedance: float = 50.0
    internal_loss_resistance: float = math.inf

    def __post_init__(self):
        for name in ("inductance", "coupling_capacitance", "parasitic_chip",
                     "parasitic_pcb", "line_impedance", "internal_loss_resistance"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def total_capacitance(self) -> float:
        return self.coupling_capacitance + self.parasitic_chip + self.parasitic_pcb

    @property
    def natural_frequency(self) -> float:
        return resonant_frequency(self.inductance, self.total_capacitance)


def resonant_frequency(inductance: float, total_capacitance: float) -> float:
    """Natural frequency 1/(2 pi sqrt(L C)) of the tank."""
    if not (inductance > 0 and total_capacitance > 0):
        raise ValueError("inductance and capacitance must be positive")
    return 1.0 / (2.0 * math.pi * math.sqrt(inductance * total_capacitance))


def reflection(model: ResonatorModel, frequency, device_resistance=math.inf):
    """Complex reflection coefficient seen from the line.

    The tank (inductor, the capacitance beyond the coupler, loss, and the
    device resistance in parallel) sits behind the coupling capacitor:
    Gamma = (Z_in - Z_0)/(Z_in + Z_0).  Accepts scalar or array frequency.
    """
    f = np.asarray(frequency, dtype=float)
    if np.any(f <= 0):
        raise ValueError("frequency must be positive")
    w = 2.0 * math.pi * f
    z_l = 1j * w * model.inductance
    c_tank = model.total_capacitance - model.coupling_capacitance
    y = 1.0 / z_l + 1j * w * c_tank
    r_eff = _parallel_r(model.internal_loss_resistance, device_resistance)
    if math.isfinite(r_eff):
        y = y + 1.0 / r_eff
    z_tank = 1.0 / y
    z_in = 1.0 / (1j * w * model.coupling_capacitance) + z_tank
    gamma = (z_in - model.line_impedance) / (z_in + model.line_impedance)
    if np.isscalar(frequency):
        return complex(gamma)
    return gamma


def _parallel_r(a: float, b: float) -> float:
    if math.isinf(a):
        return b
    if math.isinf(b):
        return a
    return a * b / (a + b)


def minimum_reflection(model: ResonatorModel, device_resistance=math.inf,
                       span: float = 0.2, n: int = 20001) -> tuple[float, float]:
    """(frequency, |Gamma|) at the reflection dip near the natural frequency."""
    f0 = model.natural_frequency
    f = np.linspace((1 - span) * f0, (1 + span) * f0, n)
    mag = np.abs(reflection(model, f, device_resistance))
    k = int(np.argmin(mag))
    return float(f[k]), float(mag[k])


def matching_dip(beta: float) -> float:
    """|Gamma| at resonance for a given matching coefficient."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    return abs(1.0 - beta) / (1.0 + beta)


def calibrate_internal_loss(model: ResonatorModel, beta: float = DESIGN_MATCHING,
                            r_lo: float = 10.0, r_hi: float = 1e7) -> ResonatorModel:
    """Set the tank loss so the reflection dip matches a matching coefficient.

    The dip closes to zero at critical coupling and reopens on both sides;
    beta < 1 selects the lossier (under-coupled) branch, where the depth
    is monotone in the loss resistance and the root is unique.
    """
    target = matching_dip(beta)

    def depth_error(r_loss: float) -> float:
        trial = replace(model, internal_loss_resistance=r_loss)
        _, dip = minimum_reflection(trial)
        return dip - target

    grid = np.geomspace(r_lo, r_hi, 61)
    depths = np.array([depth_error(r) for r in grid])
    k = int(np.argmin(depths))
    if depths[k] > 0:
        raise ValueError("matching target below the reachable dip depth")
    if beta < 1:  # under-coupled: between vanishing loss resistance and critical
        lo, hi = r_lo, grid[k]
    else:
        lo, hi = grid[k], r_hi
    if depth_error(lo) * depth_error(hi) > 0:
        raise ValueError("matching target not bracketed by the search range")
    r = brentq(depth_error, lo, hi, xtol=1e-3)
    return replace(model, internal_loss_resistance=float(r))


def default_resonator() -> ResonatorModel:
    """The readout resonator of this architecture, loss calibrated."""
    bare = ResonatorModel(inductance=32.7e-9, coupling_capacitance=0.8e-12,
                          parasitic_chip=0.8e-12, parasitic_pcb=3.06e-12)
    return calibrate_internal_loss(bare)


def loaded_q(model: ResonatorModel, device_resistance=math.inf,
             span: float = 0.5, n: int = 200001) -> float:
    """Loaded quality factor from the width of the absorbed power dip.

    Q_L = f_dip / FWHM of 1 - |Gamma|^2.
    """
    f0 = model.natural_frequency
    f = np.linspace((1 - span) * f0, (1 + span) * f0, n)
    absorbed = 1.0 - np.abs(reflection(model, f, device_resistance)) ** 2
    width = bandwidth_fwhm(f, absorbed)
    f_dip, _ = minimum_reflection(model, device_resistance, span=span, n=n)
    return f_dip / width


@dataclass
class SnrCurve:
    """SNR measurements against integration time and/or probe frequency."""

    integration_times: np.ndarray | None = None
    snr_values: np.ndarray | None = None
    fitted_t_min: float | None = None
    probe_frequencies: np.ndarray | None = None
    bandwidth_fwhm: float | None = None

    @classmethod
    def from_time_scan(cls, times, snr) -> "SnrCurve":
        times = np.asarray(times, dtype=float)
        snr = np.asarray(snr, dtype=float)
        return cls(integration_times=times, snr_values=snr,
                   fitted_t_min=fit_t_min(times, snr))

    @classmethod
    def from_frequency_scan(cls, freqs, snr_squared) -> "SnrCurve":
        freqs = np.asarray(freqs, dtype=float)
        snr_squared = np.asarray(snr_squared, dtype=float)
        return cls(probe_frequencies=freqs,
                   bandwidth_fwhm=bandwidth_fwhm(freqs, snr_squared))


def fit_t_min(times, snr) -> float:
    """Integration time at which SNR reaches 1.

    SNR^2 grows linearly with integration time from zero, so a one-slope
    least-squares fit of SNR^2 on tau gives t_min = 1/slope.
    """
    t = np.asarray(times, dtype=float)
    s = np.asarray(snr, dtype=float)
    if t.size < 2:
        raise ValueError("need at least two samples")
    if np.any(t <= 0):
        raise ValueError("integration times must be positive")
    slope = float(np.dot(t, s ** 2) / np.dot(t, t))
    if slope <= 0:
        raise ValueError("no signal: fitted SNR^2 slope is not positive")
    return 1.0 / slope


def bandwidth_fwhm(freqs, snr_squared) -> float:
    """Full width at half maximum of a sampled peak, by linear interpolation.

    The half-maximum level must be crossed on both sides of the peak.
    """
    f = np.asarray(freqs, dtype=float)
    y = np.asarray(snr_squared, dtype=float)
    if f.size != y.size or f.size < 3:
        raise ValueError("need matched arrays of at least three samples")
    if np.any(np.diff(f) <= 0):
        raise ValueError("frequencies must be strictly increasing")
    k = int(np.argmax(y))
    half = y[k] / 2.0

    left = np.nonzero(y[:k + 1] < half)[0]
    right = np.nonzero(y[k:] < half)[0]
    if left.size == 0 or right.size == 0:
        raise ValueError("half maximum not crossed on both sides of the peak")
    i = left[-1]  # last sample below half on the way up
    f_lo = f[i] + (half - y[i]) / (y[i + 1] - y[i]) * (f[i + 1] - f[i])
    j = k + right[0]  # first sample below half on the way down
    f_hi = f[j - 1] + (half - y[j - 1]) / (y[j] - y[j - 1]) * (f[j] - f[j - 1])
    return float(f_hi - f_lo)


def snr_of_map(cmap, peak_region, background_region) -> float:
    """Signal-to-noise of a map feature against an explicit background.

    Regions are boolean masks over the map; they must be disjoint and the
    background must carry variance.  SNR = (peak maximum - background
    mean) / background standard deviation.
    """
    values = cmap.values
    peak = np.asarray(peak_region, dtype=bool)
    bg = np.asarray(background_region, dtype=bool)
    if peak.shape != values.shape or bg.shape != values.shape:
        raise ValueError("region masks must match the map shape")
    if not peak.any() or not bg.any():
        raise ValueError("regions must be nonempty")
    if (peak & bg).any():
        raise ValueError("peak and background regions overlap")
    noise = float(values[bg].std())
    if noise == 0:
        raise ValueError("background has zero variance")
    return (float(values[peak].max()) - float(values[bg].mean())) / noise
