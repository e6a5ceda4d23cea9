"""qdfarm: simulation and automated analysis of quantum-dot device farms.

Submodules:
    core      shared value types (maps, axes, dot parameters, classes)
    sim       forward synthesis of charge-stability maps and farm populations
    imaging   drift removal, CLAHE, Canny edges, Hough segments, peak finding
    extract   edge-pair scoring, parameter formulas, physicality filter, classifier
    pipeline  per-device and batch analysis drivers
    rfchain   resonator model, reflection coefficient, SNR/t_min/bandwidth fits
    mux       1:1024 addressing, transmission-gate resistance, scan budgeting
    stats     V_th extraction, HMC regression, LOO scoring, KLD diagnostics
    layout    common-centroid placement and uniformity checks
    io        CSM map files and structured-text tables
    report    farm-level aggregation, comparison tables, figures
"""

from .core import (
    ELEMENTARY_CHARGE,
    Axis,
    ChargeStabilityMap,
    DeviceClass,
    DotParameters,
    MapMode,
)

__version__ = "0.1.0"

__all__ = [
    "ELEMENTARY_CHARGE",
    "Axis",
    "ChargeStabilityMap",
    "DeviceClass",
    "DotParameters",
    "MapMode",
    "__version__",
]
