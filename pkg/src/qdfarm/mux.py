"""Time-division multiplexing of a 32x32 device farm.

A single pair of 5-bit addresses (row, column) drives a one-hot decoder so
that exactly one of 1024 transmission gates connects its device to the
measurement line; every deselected device is pulled to ground.  The gate
impedance depends on the CMOS back-gate voltages, and a soft switch costs
signal, so this module also models on-resistance, the resulting SNR
penalty, and the wall-clock budget of scanning the whole farm.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

N_ADDRESS_BITS = 5
GRID_SIZE = 1 << N_ADDRESS_BITS          # 32 rows x 32 columns
N_DEVICES = GRID_SIZE * GRID_SIZE        # 1024

# Transmission-gate resistance model.  The gate saturates near 2 kOhm once
# the wells are back-biased beyond ~1.5 V and climbs past 40 kOhm with the
# back gates grounded (common mode 0.4 V), an order of magnitude of avoidable
# series resistance.
R_ON_FLOOR = 2000.0          # ohm, fully back-biased gate
R_ON_ZERO_BIAS = 40000.0     # ohm, v_nw = v_pw = 0 at common mode 0.4 V
_BACK_BIAS_KNEE = 0.6        # V, where the excess resistance has dropped to half
_BACK_BIAS_SCALE = 0.2       # V, softness of the turn-off
_COMMON_MODE_REF = 0.4       # V, operating point the constants above refer to
_COMMON_MODE_SCALE = 0.2     # V, sensitivity of the excess resistance to common mode


def decode_address(row: int, col: int) -> np.ndarray:
    """One-hot select line for a (row, col) address.

    Returns a length-1024 uint8 vector with a single 1 at index
    32*row + col.  Addresses outside 0..31 raise ValueError.
    """
    row = _check_address(row, "row")
    col = _check_address(col, "col")
    hot = np.zeros(N_DEVICES, dtype=np.uint8)
    hot[GRID_SIZE * row + col] = 1
    return hot


def _check_address(value, name: str) -> int:
    if int(value) != value:
        raise ValueError(f"{name} address must be an integer, got {value!r}")
    value = int(value)
    if not 0 <= value < GRID_SIZE:
        raise ValueError(f"{name} address {value} outside 0..{GRID_SIZE - 1}")
    return value


def r_on(v_nw, v_pw, common_mode: float = _COMMON_MODE_REF):
    """Transmission-gate on-resistance (ohm) versus back-gate voltages.

    v_nw biases the n-well (positive helps), v_pw the p-well (negative
    helps); only the differential back-bias (v_nw - v_pw)/2 enters.  The
    excess resistance above the 2 kOhm floor falls off logistically with
    back-bias and grows exponentially with the common-mode level of the
    analog signal being passed.  Accepts scalars or arrays.
    """
    v_nw = np.asarray(v_nw, dtype=float)
    v_pw = np.asarray(v_pw, dtype=float)
    back_bias = 0.5 * (v_nw - v_pw)
    excess = (R_ON_ZERO_BIAS - R_ON_FLOOR) / expit(_BACK_BIAS_KNEE / _BACK_BIAS_SCALE)
    cm_factor = np.exp((common_mode - _COMMON_MODE_REF) / _COMMON_MODE_SCALE)
    r = R_ON_FLOOR + excess * cm_factor * expit((_BACK_BIAS_KNEE - back_bias) / _BACK_BIAS_SCALE)
    if r.ndim == 0:
        return float(r)
    return r


def effective_snr(base_snr, on_resistance):
    """SNR after the voltage division across a soft transmission gate.

    base_snr is the SNR measured with the gate at its 2 kOhm floor; extra
    series resistance divides the signal down proportionally, so SNR falls
    off as floor/r_on and tends to zero for an open switch.
    """
    base = np.asarray(base_snr, dtype=float)
    if np.any(base < 0):
        raise ValueError("base SNR must be non-negative")
    r = np.asarray(on_resistance, dtype=float)
    if np.any(r <= 0):
        raise ValueError("on-resistance must be positive")
    snr = base * R_ON_FLOOR / np.maximum(r, R_ON_FLOOR)
    if snr.ndim == 0:
        return float(snr)
    return snr


@dataclass(frozen=True)
class MuxState:
    """Snapshot of the multiplexer: address, back-gate bias, power.

    Address changes are serialized through a single logical instance;
    the dataclass is frozen so readers can hold a snapshot while the
    controller moves on (use dataclasses.replace to step the address).
    """

    row_address: int = 0
    col_address: int = 0
    v_nw: float = 2.0
    v_pw: float = -2.0
    powered: bool = True

    def __post_init__(self):
        _check_address(self.row_address, "row")
        _check_address(self.col_address, "col")

    @property
    def selected_device(self) -> int:
        return GRID_SIZE * self.row_address + self.col_address

    def gates(self) -> np.ndarray:
        """Open/closed state of all 1024 transmission gates (1 = open)."""
        if not self.powered:
            return np.zeros(N_DEVICES, dtype=np.uint8)
        return decode_address(self.row_address, self.col_address)

    def pulled_down(self) -> np.ndarray:
        """Which devices the pull-down transistor ties to ground.

        Every deselected device is grounded; with the decoder unpowered all
        gates close and the whole farm sits at ground.
        """
        return (self.gates() == 0)

    def on_resistance(self, common_mode: float = _COMMON_MODE_REF) -> float:
        return r_on(self.v_nw, self.v_pw, common_mode)


@dataclass(frozen=True)
class DeviceScan:
    """Acquisition settings for one device: a points-long sweep averaged
    `averages` times at integration time tau, after a settle delay."""

    device_id: int
    points: int
    tau: float
    averages: int = 1
    settle: float = 0.0

    def __post_init__(self):
        if self.points < 1:
            raise ValueError("a scan needs at least one point")
        if self.tau <= 0:
            raise ValueError("integration time must be positive")
        if self.averages < 1:
            raise ValueError("averages must be at least 1")
        if self.settle < 0:
            raise ValueError("settle time cannot be negative")

    @property
    def seconds(self) -> float:
        return self.points * self.tau * self.averages + self.settle


@dataclass(frozen=True)
class ScanPlan:
    """An ordered pass over the farm: one DeviceScan per device.

    The order is the multiplexer switching order; scan_time checks that the
    plan visits every device id exactly once.
    """

    entries: tuple = ()
    n_devices: int = N_DEVICES

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))


@dataclass(frozen=True)
class ScanReport:
    """Time budget of a scan plan."""

    total_seconds: float
    per_device: np.ndarray = field(repr=False)
    device_ids: np.ndarray = field(repr=False)
    budget: float | None = None

    @property
    def over_budget(self) -> bool:
        return self.budget is not None and self.total_seconds > self.budget


def scan_time(plan: ScanPlan, budget: float | None = None) -> ScanReport:
    """Total wall-clock time of a full-farm scan, with per-device breakdown.

    Each device costs points*tau*averages + settle seconds.  The plan must
    cover device ids 0..n_devices-1 exactly once (any order); duplicates,
    gaps, and empty plans raise ValueError.  If a budget is given, the
    report flags totals exceeding it.
    """
    if len(plan.entries) == 0:
        raise ValueError("scan plan is empty")
    ids = np.array([e.device_id for e in plan.entries], dtype=int)
    seen = np.unique(ids)
    if seen.size != ids.size:
        counts = np.bincount(ids[ids >= 0], minlength=0)
        dupes = np.nonzero(counts > 1)[0]
        raise ValueError(f"scan plan visits devices more than once: {dupes[:8].tolist()}")
    expected = np.arange(plan.n_devices)
    if seen.size != plan.n_devices or not np.array_equal(seen, expected):
        missing = np.setdiff1d(expected, seen)
        extra = np.setdiff1d(seen, expected)
        parts = []
        if missing.size:
            parts.append(f"missing {missing[:8].tolist()}")
        if extra.size:
            parts.append(f"unknown {extra[:8].tolist()}")
        raise ValueError("scan plan does not cover the farm exactly once: " + "; ".join(parts))
    per_device = np.array([e.seconds for e in plan.entries], dtype=float)
    # fsum: the budget is quoted to the millisecond and compared exactly, so
    # the total must not drift with summation order.
    return ScanReport(
        total_seconds=math.fsum(per_device),
        per_device=per_device,
        device_ids=ids,
        budget=budget,
    )


def default_plan(n_devices: int = N_DEVICES, points: int = 28600, tau: float = 10e-6,
                 averages: int = 1, settle: float = 7e-3) -> ScanPlan:
    """The headline farm scan: 28600 points at 10 us per device plus a 7 ms
    multiplexer settle, i.e. 293 ms per device and 300.032 s for 1024
    devices -- the five-minute full-farm characterization."""
    entries = tuple(
        DeviceScan(device_id=i, points=points, tau=tau, averages=averages, settle=settle)
        for i in range(n_devices)
    )
    return ScanPlan(entries=entries, n_devices=n_devices)


__all__ = [
    "N_ADDRESS_BITS",
    "GRID_SIZE",
    "N_DEVICES",
    "R_ON_FLOOR",
    "R_ON_ZERO_BIAS",
    "decode_address",
    "r_on",
    "effective_snr",
    "MuxState",
    "DeviceScan",
    "ScanPlan",
    "ScanReport",
    "scan_time",
    "default_plan",
]
