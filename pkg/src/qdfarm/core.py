"""Shared data types for quantum-dot farm simulation and analysis.

Everything downstream (simulation, image processing, parameter extraction,
reporting) trades in the small value types defined here: a charge-stability
map with its voltage axes, the per-dot electrostatic parameters, and the
coarse device classification used when triaging a farm.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

# CODATA exact value, coulombs.
ELEMENTARY_CHARGE = 1.602176634e-19


class MapMode(enum.Enum):
    """What physical quantity the pixels of a stability map hold."""

    RF = "rf"                       # demodulated reflectometry response, arb. units
    DC_CURRENT = "dc_current"       # source-drain current, amperes
    DC_DERIVATIVE = "dc_derivative"  # dI/dV_DS of a DC map, siemens


class DeviceClass(enum.Enum):
    GOOD = "good"       # single clean dot, regular blockade
    BAD = "bad"         # no dot: open/shorted channel or featureless turn-on
    MULTI = "multi"     # multiple dots / disordered potential


@dataclass(frozen=True)
class Axis:
    """A uniformly sampled voltage axis (volts)."""

    lo: float
    hi: float
    count: int

    def __post_init__(self):
        if not np.isfinite(self.lo) or not np.isfinite(self.hi):
            raise ValueError("axis endpoints must be finite")
        if self.hi <= self.lo:
            raise ValueError(f"axis upper bound {self.hi} must exceed lower bound {self.lo}")
        if self.count < 2:
            raise ValueError("axis needs at least 2 samples")

    @property
    def values(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.count)

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / (self.count - 1)

    def index_of(self, v: float) -> int:
        """Index of the sample closest to voltage v."""
        i = int(round((v - self.lo) / self.step))
        return min(max(i, 0), self.count - 1)


@dataclass
class ChargeStabilityMap:
    """A 2-D sweep of response versus (V_GS, V_DS).

    values has shape (vds.count, vg.count): one row per drain-source bias,
    swept along the gate axis.  Gate voltage increases with column index and
    bias increases with row index.
    """

    values: np.ndarray
    vg: Axis
    vds: Axis
    mode: MapMode = MapMode.RF
    device_id: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("stability map must be 2-D")
        if self.values.shape != (self.vds.count, self.vg.count):
            raise ValueError(
                f"map shape {self.values.shape} does not match axes "
                f"({self.vds.count}, {self.vg.count})"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("stability map contains non-finite samples")

    @property
    def vg_values(self) -> np.ndarray:
        return self.vg.values

    @property
    def vds_values(self) -> np.ndarray:
        return self.vds.values

    def zero_bias_row(self) -> int:
        """Row index of the bias sample closest to V_DS = 0."""
        return int(np.argmin(np.abs(self.vds_values)))

    def with_values(self, values: np.ndarray, mode: MapMode | None = None) -> "ChargeStabilityMap":
        return ChargeStabilityMap(
            values=values,
            vg=self.vg,
            vds=self.vds,
            mode=self.mode if mode is None else mode,
            device_id=self.device_id,
        )


@dataclass
class DotParameters:
    """Constant-interaction parameters of a single dot.

    Voltages in volts, lever arms dimensionless.  asymmetry is the
    difference between drain and source lever arms (alpha_d - alpha_s);
    charging_energy is in meV when present.
    """

    v_1e: float
    alpha_g: float
    asymmetry: float = 0.0
    v_2e: float | None = None
    charging_energy: float | None = None

    def validate(self) -> None:
        """Raise ValueError unless the parameters are physically consistent.

        Extraction routinely produces candidate parameter sets that fail
        these checks (they get filtered later), so this is opt-in rather
        than enforced at construction.
        """
        if not (0.0 < self.alpha_g <= 1.0):
            raise ValueError(f"gate lever arm {self.alpha_g} outside (0, 1]")
        if abs(self.asymmetry) >= 1.0:
            raise ValueError(f"|alpha_d - alpha_s| = {abs(self.asymmetry)} must be < 1")
        if abs(self.asymmetry) + self.alpha_g > 1.0 + 1e-12:
            raise ValueError(
                "lever arms violate sum rule: "
                f"|asymmetry| + alpha_g = {abs(self.asymmetry) + self.alpha_g:.4f} > 1"
            )
        if self.v_2e is not None and self.v_2e <= self.v_1e:
            raise ValueError("second-electron voltage must exceed the first")
        if self.charging_energy is not None and self.charging_energy <= 0:
            raise ValueError("charging energy must be positive")

    def is_physical(self) -> bool:
        try:
            self.validate()
        except ValueError:
            return False
        return True


__all__ = [
    "ELEMENTARY_CHARGE",
    "MapMode",
    "DeviceClass",
    "Axis",
    "ChargeStabilityMap",
    "DotParameters",
]
