"""Forward synthesis of charge-stability maps for farm devices.

The Good-device model is constant-interaction phenomenology: with the bias
applied antisymmetrically (V_D = -V_S), the dot conducts when the detuning

    u = alpha_g*(V_GS - v_1e) + asymmetry*V_DS/2

sits inside the bias window |u| <= |V_DS|/2.  Thermal smearing by the
electron temperature turns the window boundaries into logistic shoulders;
at zero bias the response collapses to the classic (1/4)*sech^2(u/2w)
Coulomb peak of width w = k_B*T_e.  The blockade edges then lie exactly on
the lines

    V_DS = m1*(V_GS - v_1e),   m1 = +2*alpha_g/(1 - asymmetry)
    V_DS = m2*(V_GS - v_1e),   m2 = -2*alpha_g/(1 + asymmetry)

which is precisely what the extraction stage inverts.  Bad devices are a
featureless turn-on (or stuck open/dead channels); Multi devices are two
dots in series, so conduction needs both bias windows at once and the
wedge-shaped regions never close at V_DS = 0.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.special import expit

from .core import Axis, ChargeStabilityMap, DeviceClass, DotParameters, MapMode
from .layout import FarmLayout

DEFAULT_VG_AXIS = Axis(0.2, 0.6, 256)
DEFAULT_VDS_AXIS = Axis(-0.020, 0.020, 128)

# response = 1 corresponds to this channel conductance in dc mode
DC_CONDUCTANCE = 1.0e-7  # S
# harmonic tunnel rate giving unit response amplitude
REFERENCE_TUNNEL_RATE = 7.5e9  # 1/s


def edge_slopes(alpha_g: float, asymmetry: float) -> tuple[float, float]:
    """Slopes dV_DS/dV_GS of the two blockade edges through (v_1e, 0)."""
    if not 0.0 < alpha_g <= 1.0:
        raise ValueError(f"alpha_g {alpha_g} outside (0, 1]")
    if abs(asymmetry) >= 1.0:
        raise ValueError(f"|asymmetry| {abs(asymmetry)} must be < 1")
    if abs(asymmetry) + alpha_g > 1.0 + 1e-12:
        raise ValueError("lever arms violate the sum rule |asymmetry| + alpha_g <= 1")
    m1 = 2.0 * alpha_g / (1.0 - asymmetry)
    m2 = -2.0 * alpha_g / (1.0 + asymmetry)
    return m1, m2


@dataclass
class SimDeviceSpec:
    """Everything needed to synthesize one device's stability map."""

    device_class: DeviceClass = DeviceClass.GOOD
    dot: DotParameters | None = None
    second_dot: DotParameters | None = None  # Multi class only
    gate_length: float = 40.0       # nm, metadata
    channel_width: float = 100.0    # nm, metadata
    electron_temperature: float = 0.13   # meV, thermal broadening k_B*T_e
    tunnel_rate_source: float = 1.5e10   # 1/s
    tunnel_rate_drain: float = 1.5e10    # 1/s
    noise_sigma: float = 0.0125     # response units, before averaging
    drift_amplitude: float = 0.0    # response units per row step
    n_averages: int = 1
    bad_kind: str = "turnon"        # turnon | open | dead
    turn_on_voltage: float = 0.35   # V, Bad turn-on position

    def __post_init__(self):
        if self.electron_temperature <= 0:
            raise ValueError("electron temperature must be positive")
        if self.tunnel_rate_source <= 0 or self.tunnel_rate_drain <= 0:
            raise ValueError("tunnel rates must be strictly positive")
        if self.n_averages < 1:
            raise ValueError("n_averages must be >= 1")
        if self.noise_sigma < 0 or self.drift_amplitude < 0:
            raise ValueError("noise and drift amplitudes must be non-negative")

    @property
    def response_amplitude(self) -> float:
        """Peak response, scaled by the harmonic tunnel rate."""
        gs, gd = self.tunnel_rate_source, self.tunnel_rate_drain
        return (1.0 / (1.0 / gs + 1.0 / gd)) / REFERENCE_TUNNEL_RATE


def _dot_window(dot: DotParameters, vg_row, vds_col, w: float) -> np.ndarray:
    """Thermally smeared bias-window response of a single dot in (0, 1)."""
    u = dot.alpha_g * (vg_row - dot.v_1e) + 0.5 * dot.asymmetry * vds_col
    half = 0.5 * np.abs(vds_col)
    r = expit((half - u) / w) * expit((half + u) / w)
    if dot.v_2e is not None:
        u2 = dot.alpha_g * (vg_row - dot.v_2e) + 0.5 * dot.asymmetry * vds_col
        r2 = expit((half - u2) / w) * expit((half + u2) / w)
        r = r + r2 - r * r2
    return r


def _clean_response(spec: SimDeviceSpec, vg: Axis, vds: Axis) -> np.ndarray:
    vg_row = vg.values[None, :]
    vds_col = vds.values[:, None]
    w = spec.electron_temperature * 1e-3  # meV -> thermal voltage in V

    if spec.device_class is DeviceClass.GOOD:
        if spec.dot is None:
            raise ValueError("Good device needs dot parameters")
        spec.dot.validate()
        r = _dot_window(spec.dot, vg_row, vds_col, w)
    elif spec.device_class is DeviceClass.MULTI:
        if spec.dot is None or spec.second_dot is None:
            raise ValueError("Multi device needs two dots")
        spec.dot.validate()
        spec.second_dot.validate()
        # dots in series: conduction requires both bias windows at once
        r = (_dot_window(spec.dot, vg_row, vds_col, w)
             * _dot_window(spec.second_dot, vg_row, vds_col, w))
    else:
        r = _bad_response(spec, vg_row, vds_col)
    return spec.response_amplitude * np.broadcast_to(r, (vds.count, vg.count)).copy()


def _bad_response(spec: SimDeviceSpec, vg_row, vds_col) -> np.ndarray:
    if spec.bad_kind == "open":
        span = vg_row[0, -1] - vg_row[0, 0]
        return 0.85 + 0.05 * (vg_row - vg_row[0, 0]) / span + 0.0 * vds_col
    if spec.bad_kind == "dead":
        return np.zeros(np.broadcast_shapes(vg_row.shape, vds_col.shape))
    if spec.bad_kind == "turnon":
        dv = vg_row - spec.turn_on_voltage
        base = 0.55 * expit(dv / 0.012)
        ripple = 1.0 + 0.08 * np.sin(2 * np.pi * dv / 0.03)
        return base * ripple + 0.0 * vds_col
    raise ValueError(f"unknown bad device kind {spec.bad_kind!r}")


def synth_map(spec: SimDeviceSpec, vg: Axis = DEFAULT_VG_AXIS, vds: Axis = DEFAULT_VDS_AXIS,
              mode: MapMode = MapMode.RF, seed=0, device_id: int = 0) -> ChargeStabilityMap:
    """Synthesize one stability map; bit-deterministic for a fixed seed.

    The vds axis must be antisymmetric about zero.  In dc mode the current
    is the integral of the response-shaped conductance over bias, so its
    numerical V_DS-derivative reproduces the rf-mode shape.
    """
    if abs(vds.lo + vds.hi) > 1e-9 * (vds.hi - vds.lo):
        raise ValueError("vds axis must be antisymmetric about zero")
    if mode is MapMode.DC_DERIVATIVE:
        raise ValueError("derivative maps come from differentiating dc maps, not synthesis")

    values = _clean_response(spec, vg, vds)
    scale = 1.0
    if mode is MapMode.DC_CURRENT:
        vds_v = vds.values
        conductance = DC_CONDUCTANCE * values
        current = cumulative_trapezoid(conductance, vds_v, axis=0, initial=0.0)
        # reference the integral to I(V_DS = 0) = 0
        j = int(np.searchsorted(vds_v, 0.0)) - 1
        frac = (0.0 - vds_v[j]) / (vds_v[j + 1] - vds_v[j])
        i_zero = current[j] * (1 - frac) + current[j + 1] * frac
        values = current - i_zero[None, :]
        scale = DC_CONDUCTANCE * vds.hi  # noise/drift scale in amperes

    rng = np.random.default_rng(seed)
    if spec.drift_amplitude > 0:
        walk = np.cumsum(rng.normal(0.0, 1.0, size=vds.count))
        values = values + scale * spec.drift_amplitude * walk[:, None]
    if spec.noise_sigma > 0:
        sigma = scale * spec.noise_sigma / np.sqrt(spec.n_averages)
        values = values + rng.normal(0.0, sigma, size=values.shape)

    return ChargeStabilityMap(values=values, vg=vg, vds=vds, mode=mode, device_id=device_id)


# ---------------------------------------------------------------------------
# Farm populations


@dataclass
class SetPopulation:
    """Parameter distribution for one instance set (gate length x width)."""

    set_id: int
    gate_length: float
    channel_width: float
    n_devices: int = 128
    p_good: float = 0.78
    p_bad: float = 0.15
    p_multi: float = 0.07
    v1e_mean: float = 0.387
    v1e_std: float = 0.022
    alpha_mean: float = 0.741
    alpha_std: float = 0.082
    asym_mean: float = -0.040
    asym_std: float = 0.150
    spacing_mean: float = 0.025
    spacing_std: float = 0.004
    p_second_electron: float = 0.6

    def __post_init__(self):
        probs = (self.p_good, self.p_bad, self.p_multi)
        if any(p < 0 for p in probs) or abs(sum(probs) - 1.0) > 1e-9:
            raise ValueError("class probabilities must be non-negative and sum to 1")


@dataclass
class FarmSpec:
    """A full farm: per-set populations plus shared measurement settings."""

    sets: list
    noise_sigma: float = 0.0125
    drift_amplitude: float = 0.002
    electron_temperature: float = 0.13
    n_averages: int = 1

    @property
    def n_devices(self) -> int:
        return sum(p.n_devices for p in self.sets)


def default_farm(noise_sigma: float = 0.0125, drift_amplitude: float = 0.002,
                 n_averages: int = 1) -> FarmSpec:
    """Eight instance sets: gate lengths 28/40/60/80 nm by widths 80/100 nm.

    Class mixes follow the qualitative trend that short-channel devices
    mostly form one clean dot while long channels increasingly host several;
    the first-electron voltage creeps up slowly with gate length.
    """
    p_good_by_l = {28: 0.80, 40: 0.78, 60: 0.65, 80: 0.50}
    p_multi_by_l = {28: 0.05, 40: 0.07, 60: 0.20, 80: 0.35}
    sets = []
    set_id = 0
    for length in (28, 40, 60, 80):
        for width in (80, 100):
            p_good = p_good_by_l[length] + (0.02 if width == 100 else 0.0)
            p_multi = p_multi_by_l[length]
            sets.append(SetPopulation(
                set_id=set_id,
                gate_length=float(length),
                channel_width=float(width),
                p_good=p_good,
                p_multi=p_multi,
                p_bad=round(1.0 - p_good - p_multi, 12),
                v1e_mean=0.387 + 0.0005 * (length - 28),
            ))
            set_id += 1
    return FarmSpec(sets=sets, noise_sigma=noise_sigma,
                    drift_amplitude=drift_amplitude, n_averages=n_averages)


def sample_dot(rng, pop: SetPopulation, vg: Axis = DEFAULT_VG_AXIS,
               with_second_electron: bool | None = None) -> DotParameters:
    """Draw physical dot parameters, rejecting unphysical combinations.

    Rejection keeps alpha_g in [0.5, 1] (the architecture prior applied by
    the extraction filter) and enforces |asymmetry| + alpha_g <= 1; v_1e is
    confined to the map interior so the diamond apex stays in frame.
    """
    lo, hi = vg.lo + 0.05, vg.hi - 0.08
    while True:
        alpha = rng.normal(pop.alpha_mean, pop.alpha_std)
        asym = rng.normal(pop.asym_mean, pop.asym_std)
        if 0.5 <= alpha <= 1.0 and abs(asym) + alpha <= 1.0:
            break
    while True:
        v1e = rng.normal(pop.v1e_mean, pop.v1e_std)
        if lo <= v1e <= hi:
            break
    v2e = None
    if with_second_electron is None:
        with_second_electron = rng.random() < pop.p_second_electron
    if with_second_electron:
        while True:
            spacing = rng.normal(pop.spacing_mean, pop.spacing_std)
            if 0.015 <= spacing <= 0.038:
                break
        v2e = v1e + spacing
    return DotParameters(v_1e=v1e, alpha_g=alpha, asymmetry=asym, v_2e=v2e)


def sample_device(rng, pop: SetPopulation, farm: FarmSpec,
                  force_class: DeviceClass | None = None,
                  vg: Axis = DEFAULT_VG_AXIS) -> SimDeviceSpec:
    """Draw one device spec from the set population."""
    if force_class is None:
        cls = rng.choice(
            [DeviceClass.GOOD, DeviceClass.BAD, DeviceClass.MULTI],
            p=[pop.p_good, pop.p_bad, pop.p_multi],
        )
    else:
        cls = force_class

    rates = 1.5e10 * np.exp(rng.normal(0.0, 0.2, size=2))
    common = dict(
        device_class=cls,
        gate_length=pop.gate_length,
        channel_width=pop.channel_width,
        electron_temperature=farm.electron_temperature,
        tunnel_rate_source=float(rates[0]),
        tunnel_rate_drain=float(rates[1]),
        noise_sigma=farm.noise_sigma,
        drift_amplitude=farm.drift_amplitude,
        n_averages=farm.n_averages,
    )
    if cls is DeviceClass.GOOD:
        return SimDeviceSpec(dot=sample_dot(rng, pop, vg), **common)
    if cls is DeviceClass.MULTI:
        first = sample_dot(rng, pop, vg, with_second_electron=False)
        while True:
            delta = rng.normal(0.010, 0.003)
            if 0.006 <= delta <= 0.013:
                break
        second = sample_dot(rng, pop, vg, with_second_electron=False)
        second = replace(second, v_1e=first.v_1e + delta)
        return SimDeviceSpec(dot=first, second_dot=second, **common)
    kind = rng.choice(["turnon", "turnon", "open", "dead"])
    v_on = rng.normal(0.35, 0.03)
    return SimDeviceSpec(bad_kind=str(kind), turn_on_voltage=float(v_on), **common)


@dataclass
class FarmDevice:
    """One synthesized farm member with its ground truth."""

    device_id: int
    set_id: int
    spec: SimDeviceSpec
    stability_map: ChargeStabilityMap | None = None

    @property
    def true_class(self) -> DeviceClass:
        return self.spec.device_class

    @property
    def true_dot(self) -> DotParameters | None:
        return self.spec.dot if self.spec.device_class is DeviceClass.GOOD else None


def synth_farm(farm: FarmSpec, layout: FarmLayout, seed: int = 0,
               vg: Axis = DEFAULT_VG_AXIS, vds: Axis = DEFAULT_VDS_AXIS,
               force_class: DeviceClass | None = None,
               materialize_maps: bool = True) -> list[FarmDevice]:
    """Synthesize all devices placed by the layout, labeled with ground truth.

    Each device gets its own random stream keyed on (seed, device_id), so any
    subset can be regenerated independently and the population statistics do
    not depend on layout order.
    """
    if layout.n_devices != farm.n_devices:
        raise ValueError("layout and farm sizes disagree")
    pops = {p.set_id: p for p in farm.sets}
    devices = []
    for device_id in range(layout.n_devices):
        set_id = layout.set_of(device_id)
        rng = np.random.default_rng([seed, device_id])
        spec = sample_device(rng, pops[set_id], farm, force_class=force_class, vg=vg)
        cmap = None
        if materialize_maps:
            cmap = synth_map(spec, vg, vds, seed=[seed, device_id, 1], device_id=device_id)
        devices.append(FarmDevice(device_id=device_id, set_id=set_id,
                                  spec=spec, stability_map=cmap))
    return devices


__all__ = [
    "DEFAULT_VG_AXIS", "DEFAULT_VDS_AXIS", "DC_CONDUCTANCE", "REFERENCE_TUNNEL_RATE",
    "edge_slopes", "SimDeviceSpec", "synth_map",
    "SetPopulation", "FarmSpec", "default_farm",
    "sample_dot", "sample_device", "FarmDevice", "synth_farm",
]
