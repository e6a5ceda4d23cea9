"""On-disk formats for maps, tables, scan plans, and layouts.

Everything is plain structured text so results stay diff-able and
language-neutral:

* Stability maps use the CSM1 format: `# key=value` header lines
  (format, device_id, mode, axis bounds/counts, units) followed by one
  line per bias row of space-separated decimal floats.  Floats are
  written with shortest round-trip precision, so write-then-read is
  bit-exact.
* Tabular data (ground truth, analysis results, scan plans, layouts,
  SNR traces) is tab-separated with a header row naming the columns.
  Empty cells mean "not applicable" (e.g. dot parameters of a Bad
  device).

All readers raise FormatError on malformed input; callers map that to a
data-error exit.
"""
from __future__ import annotations

import enum
import os
from dataclasses import dataclass

import numpy as np

from .core import Axis, ChargeStabilityMap, DeviceClass, DotParameters, MapMode
from .layout import FarmLayout
from .mux import DeviceScan, ScanPlan
from .pipeline import DeviceResult


class FormatError(ValueError):
    """A file exists but does not parse as the expected format."""


# ---------------------------------------------------------------------------
# CSM1 stability maps

CSM_FORMAT = "CSM1"

_UNITS_BY_MODE = {
    MapMode.RF: "arb",
    MapMode.DC_CURRENT: "A",
    MapMode.DC_DERIVATIVE: "S",
}


def _fmt(value) -> str:
    """Shortest decimal string that round-trips the value exactly."""
    if value is None:
        return ""
    if isinstance(value, enum.Enum):
        return str(value.value)
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csm(path, cmap: ChargeStabilityMap) -> None:
    """Write one stability map in CSM1 format."""
    header = {
        "format": CSM_FORMAT,
        "device_id": cmap.device_id,
        "mode": cmap.mode.value,
        "vg_min": cmap.vg.lo,
        "vg_max": cmap.vg.hi,
        "vg_count": cmap.vg.count,
        "vds_min": cmap.vds.lo,
        "vds_max": cmap.vds.hi,
        "vds_count": cmap.vds.count,
        "units": _UNITS_BY_MODE[cmap.mode],
    }
    with open(path, "w") as fh:
        for key, value in header.items():
            fh.write(f"# {key}={_fmt(value)}\n")
        for row in cmap.values:
            fh.write(" ".join(repr(float(v)) for v in row))
            fh.write("\n")


def read_csm(path) -> ChargeStabilityMap:
    """Read a CSM1 map; raises FormatError on any structural problem."""
    header = {}
    data_lines = []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if line.startswith("#"):
                body = line.lstrip("#").strip()
                if "=" not in body:
                    raise FormatError(f"{path}: header line without key=value: {line!r}")
                key, _, value = body.partition("=")
                header[key.strip()] = value.strip()
            else:
                data_lines.append(line)

    if header.get("format") != CSM_FORMAT:
        raise FormatError(f"{path}: not a {CSM_FORMAT} file "
                          f"(format={header.get('format')!r})")
    try:
        vg = Axis(float(header["vg_min"]), float(header["vg_max"]), int(header["vg_count"]))
        vds = Axis(float(header["vds_min"]), float(header["vds_max"]), int(header["vds_count"]))
        mode = MapMode(header.get("mode", MapMode.RF.value))
        device_id = int(header.get("device_id", 0))
    except KeyError as exc:
        raise FormatError(f"{path}: missing header key {exc}") from exc
    except ValueError as exc:
        raise FormatError(f"{path}: bad header value: {exc}") from exc

    if len(data_lines) != vds.count:
        raise FormatError(f"{path}: expected {vds.count} data rows, found {len(data_lines)}")
    values = np.empty((vds.count, vg.count))
    for i, line in enumerate(data_lines):
        fields = line.split()
        if len(fields) != vg.count:
            raise FormatError(f"{path}: row {i} has {len(fields)} values, expected {vg.count}")
        try:
            values[i] = np.array(fields, dtype=float)
        except ValueError as exc:
            raise FormatError(f"{path}: row {i}: {exc}") from exc
    try:
        return ChargeStabilityMap(values=values, vg=vg, vds=vds,
                                  mode=mode, device_id=device_id)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def map_filename(device_id: int) -> str:
    return f"device_{device_id:04d}.csm"


def write_map_directory(directory, maps) -> list:
    """Write one CSM file per map into directory; returns the paths."""
    os.makedirs(directory, exist_ok=True)
    paths = []
    for cmap in maps:
        path = os.path.join(directory, map_filename(cmap.device_id))
        write_csm(path, cmap)
        paths.append(path)
    return paths


def csm_paths(target) -> list:
    """Expand a CSM file or a directory of .csm files to a sorted path list."""
    if os.path.isdir(target):
        names = sorted(n for n in os.listdir(target) if n.endswith(".csm"))
        if not names:
            raise FormatError(f"{target}: directory contains no .csm files")
        return [os.path.join(target, n) for n in names]
    if os.path.isfile(target):
        return [target]
    raise FormatError(f"{target}: no such file or directory")


# ---------------------------------------------------------------------------
# generic tab-separated tables

def write_table(path, columns, rows) -> None:
    """Write a header row plus data rows, tab-separated."""
    with open(path, "w") as fh:
        fh.write("\t".join(columns) + "\n")
        for row in rows:
            fh.write("\t".join(_fmt(v) for v in row) + "\n")


def read_table(path, expected_columns=None) -> tuple:
    """Read a tab-separated table; returns (columns, rows of strings)."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise FormatError(f"{path}: empty table")
    columns = lines[0].split("\t")
    if expected_columns is not None and columns != list(expected_columns):
        raise FormatError(f"{path}: expected columns {list(expected_columns)}, "
                          f"found {columns}")
    rows = []
    for i, line in enumerate(lines[1:], start=2):
        fields = line.split("\t")
        if len(fields) != len(columns):
            raise FormatError(f"{path}: line {i} has {len(fields)} fields, "
                              f"expected {len(columns)}")
        rows.append(fields)
    return columns, rows


def _opt_float(text: str):
    if text == "":
        return None
    try:
        return float(text)
    except ValueError as exc:
        raise FormatError(f"bad float {text!r}") from exc


def _req_int(text: str) -> int:
    try:
        return int(text)
    except ValueError as exc:
        raise FormatError(f"bad integer {text!r}") from exc


# ---------------------------------------------------------------------------
# ground truth and analysis results

TRUTH_COLUMNS = ("device_id", "set_id", "class", "v_1e", "alpha_g",
                 "asymmetry", "v_2e", "charging_energy_mev")


@dataclass(frozen=True)
class TruthRecord:
    """Ground-truth row for one device (dot fields only for Good devices)."""

    device_id: int
    set_id: int
    device_class: DeviceClass
    v_1e: float | None = None
    alpha_g: float | None = None
    asymmetry: float | None = None
    v_2e: float | None = None
    charging_energy: float | None = None


def write_truth(path, devices) -> None:
    """Serialize synthesized farm devices (sim.FarmDevice) as a truth table."""
    rows = []
    for dev in devices:
        dot = dev.true_dot
        rows.append((
            dev.device_id, dev.set_id, dev.true_class,
            None if dot is None else dot.v_1e,
            None if dot is None else dot.alpha_g,
            None if dot is None else dot.asymmetry,
            None if dot is None else dot.v_2e,
            None if dot is None else dot.charging_energy,
        ))
    write_table(path, TRUTH_COLUMNS, rows)


def read_truth(path) -> list:
    _, rows = read_table(path, TRUTH_COLUMNS)
    records = []
    for r in rows:
        try:
            cls = DeviceClass(r[2])
        except ValueError as exc:
            raise FormatError(f"{path}: unknown class {r[2]!r}") from exc
        records.append(TruthRecord(
            device_id=_req_int(r[0]), set_id=_req_int(r[1]), device_class=cls,
            v_1e=_opt_float(r[3]), alpha_g=_opt_float(r[4]),
            asymmetry=_opt_float(r[5]), v_2e=_opt_float(r[6]),
            charging_energy=_opt_float(r[7]),
        ))
    return records


RESULT_COLUMNS = ("device_id", "class", "v_1e", "alpha_g", "asymmetry",
                  "v_2e", "charging_energy_mev", "score", "snr",
                  "n_segments", "n_peaks", "error")


def write_results(path, results) -> None:
    """Serialize per-device analysis results (pipeline.DeviceResult)."""
    rows = []
    for res in results:
        p = res.params
        error = "" if res.error is None else " ".join(res.error.split())
        rows.append((
            res.device_id,
            None if res.device_class is None else res.device_class,
            None if p is None else p.v_1e,
            None if p is None else p.alpha_g,
            None if p is None else p.asymmetry,
            None if p is None else p.v_2e,
            None if p is None else p.charging_energy,
            res.score,
            res.snr,
            res.n_segments,
            res.n_peaks,
            error,
        ))
    write_table(path, RESULT_COLUMNS, rows)


def read_results(path) -> list:
    _, rows = read_table(path, RESULT_COLUMNS)
    results = []
    for r in rows:
        cls = None
        if r[1] != "":
            try:
                cls = DeviceClass(r[1])
            except ValueError as exc:
                raise FormatError(f"{path}: unknown class {r[1]!r}") from exc
        v_1e, alpha_g, asym = _opt_float(r[2]), _opt_float(r[3]), _opt_float(r[4])
        params = None
        if v_1e is not None and alpha_g is not None:
            params = DotParameters(v_1e=v_1e, alpha_g=alpha_g,
                                   asymmetry=0.0 if asym is None else asym,
                                   v_2e=_opt_float(r[5]),
                                   charging_energy=_opt_float(r[6]))
        results.append(DeviceResult(
            device_id=_req_int(r[0]), device_class=cls, params=params,
            score=_opt_float(r[7]) or 0.0,
            snr=_opt_float(r[8]),
            n_segments=_req_int(r[9]), n_peaks=_req_int(r[10]),
            error=r[11] if r[11] != "" else None,
        ))
    return results


# ---------------------------------------------------------------------------
# scan plans and layouts

SCAN_COLUMNS = ("device_id", "points", "tau", "averages", "settle")


def write_scan_plan(path, plan: ScanPlan) -> None:
    rows = [(e.device_id, e.points, e.tau, e.averages, e.settle)
            for e in plan.entries]
    write_table(path, SCAN_COLUMNS, rows)


def read_scan_plan(path) -> ScanPlan:
    _, rows = read_table(path, SCAN_COLUMNS)
    try:
        entries = tuple(
            DeviceScan(device_id=_req_int(r[0]), points=_req_int(r[1]),
                       tau=float(r[2]), averages=_req_int(r[3]),
                       settle=float(r[4]))
            for r in rows
        )
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return ScanPlan(entries=entries, n_devices=len(entries))


LAYOUT_COLUMNS = ("row", "col", "set_id", "device_id")


def write_layout(path, layout: FarmLayout) -> None:
    n = layout.grid_size
    rows = [(r, c, int(layout.set_grid[r, c]), n * r + c)
            for r in range(n) for c in range(n)]
    write_table(path, LAYOUT_COLUMNS, rows)


def read_layout(path) -> FarmLayout:
    _, rows = read_table(path, LAYOUT_COLUMNS)
    n = int(round(np.sqrt(len(rows))))
    if n * n != len(rows):
        raise FormatError(f"{path}: {len(rows)} cells do not form a square grid")
    grid = np.full((n, n), -1, dtype=int)
    for fields in rows:
        r, c = _req_int(fields[0]), _req_int(fields[1])
        if not (0 <= r < n and 0 <= c < n):
            raise FormatError(f"{path}: cell ({r}, {c}) outside the {n}x{n} grid")
        if grid[r, c] != -1:
            raise FormatError(f"{path}: cell ({r}, {c}) assigned twice")
        if _req_int(fields[3]) != n * r + c:
            raise FormatError(f"{path}: device_id {fields[3]} does not match "
                              f"cell ({r}, {c})")
        grid[r, c] = _req_int(fields[2])
    if (grid == -1).any():
        raise FormatError(f"{path}: grid has unassigned cells")
    return FarmLayout(set_grid=grid)


# ---------------------------------------------------------------------------
# two-column numeric traces (SNR vs time, SNR^2 vs frequency, V_th vs V_1e)

def write_xy(path, x, y, names=("x", "y")) -> None:
    write_table(path, names, zip(np.asarray(x, float), np.asarray(y, float)))


def read_xy(path) -> tuple:
    """Read any two-column numeric table; returns (x, y) float arrays."""
    _, rows = read_table(path)
    if rows and len(rows[0]) != 2:
        raise FormatError(f"{path}: expected exactly two columns")
    try:
        data = np.array(rows, dtype=float)
    except ValueError as exc:
        raise FormatError(f"{path}: non-numeric data: {exc}") from exc
    if data.size == 0:
        raise FormatError(f"{path}: no data rows")
    return data[:, 0], data[:, 1]


__all__ = [
    "FormatError", "CSM_FORMAT",
    "write_csm", "read_csm", "map_filename", "write_map_directory", "csm_paths",
    "write_table", "read_table",
    "TRUTH_COLUMNS", "TruthRecord", "write_truth", "read_truth",
    "RESULT_COLUMNS", "write_results", "read_results",
    "SCAN_COLUMNS", "write_scan_plan", "read_scan_plan",
    "LAYOUT_COLUMNS", "write_layout", "read_layout",
    "write_xy", "read_xy",
]
