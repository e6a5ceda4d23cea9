"""Image-processing chain turning a raw stability map into geometry.

The steps mirror how an experimentalist cleans up a measurement by hand:
remove the slow baseline wander between sweep lines, stretch the local
contrast so faint diamond edges survive binarization, trace the edges, fit
straight lines through them, and locate the zero-bias Coulomb oscillations.
All operations are deterministic and pure.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.signal import find_peaks as _scipy_find_peaks

from .core import Axis, ChargeStabilityMap, MapMode

# slope assigned to segments that are vertical at pixel resolution;
# kept finite so downstream arithmetic stays well-defined
VERTICAL_SLOPE = 1e9


def differentiate_dc(cmap: ChargeStabilityMap) -> ChargeStabilityMap:
    """Central-difference dI_D/dV_DS so dc maps can be analyzed like rf maps."""
    if cmap.mode is not MapMode.DC_CURRENT:
        raise ValueError(f"expected a dc current map, got mode {cmap.mode.value}")
    if cmap.vds.count < 3:
        raise ValueError("need at least 3 bias rows to differentiate")
    deriv = np.gradient(cmap.values, cmap.vds_values, axis=0)
    return cmap.with_values(deriv, mode=MapMode.DC_DERIVATIVE)


def remove_drift(cmap: ChargeStabilityMap, window: int = 100) -> ChargeStabilityMap:
    """Subtract each row's baseline, estimated from its leading samples.

    The sweep enters each line below turn-on, so the first min(window, width)
    samples are background and track the slow offset drift between lines.
    Idempotent: a second application subtracts zero.
    """
    n = min(window, cmap.vg.count)
    baseline = cmap.values[:, :n].mean(axis=1, keepdims=True)
    return cmap.with_values(cmap.values - baseline)


def clahe(cmap: ChargeStabilityMap, tile_grid: tuple[int, int] = (8, 8),
          clip_limit: float = 0.01, n_bins: int = 256) -> ChargeStabilityMap:
    """Contrast-limited adaptive histogram equalization.

    The map is normalized to [0, 1], a clipped-histogram equalization curve
    is built per tile (excess mass redistributed uniformly), and each pixel
    is mapped through the bilinear blend of the four surrounding tile
    curves.  Constant tiles keep the identity mapping; a globally constant
    map is returned unchanged.
    """
    gr, gc = int(tile_grid[0]), int(tile_grid[1])
    if gr < 1 or gc < 1:
        raise ValueError("tile grid must be at least 1x1")
    if clip_limit <= 0:
        raise ValueError("clip limit must be positive")

    v = cmap.values
    vmin, vmax = float(v.min()), float(v.max())
    if vmax <= vmin:
        return cmap.with_values(v.copy())
    norm = (v - vmin) / (vmax - vmin)
    h, w = norm.shape
    bin_idx = np.minimum((norm * n_bins).astype(int), n_bins - 1)

    row_edges = np.linspace(0, h, gr + 1).astype(int)
    col_edges = np.linspace(0, w, gc + 1).astype(int)
    bin_values = (np.arange(n_bins) + 0.5) / n_bins

    luts = np.empty((gr, gc, n_bins))
    for i in range(gr):
        for j in range(gc):
            tile = bin_idx[row_edges[i]:row_edges[i + 1], col_edges[j]:col_edges[j + 1]]
            hist = np.bincount(tile.ravel(), minlength=n_bins).astype(float)
            if np.count_nonzero(hist) <= 1:
                luts[i, j] = bin_values  # constant tile: identity
                continue
            clip = max(clip_limit * tile.size, 1.0)
            excess = np.clip(hist - clip, 0.0, None).sum()
            hist = np.minimum(hist, clip) + excess / n_bins
            cdf = np.cumsum(hist)
            luts[i, j] = (cdf - cdf[0]) / (cdf[-1] - cdf[0])

    # bilinear blend between tile centers; border pixels use the edge tiles
    r_centers = 0.5 * (row_edges[:-1] + row_edges[1:] - 1)
    c_centers = 0.5 * (col_edges[:-1] + col_edges[1:] - 1)
    fr = np.interp(np.arange(h), r_centers, np.arange(gr)) if gr > 1 else np.zeros(h)
    fc = np.interp(np.arange(w), c_centers, np.arange(gc)) if gc > 1 else np.zeros(w)
    i0 = np.floor(fr).astype(int)
    j0 = np.floor(fc).astype(int)
    i1 = np.minimum(i0 + 1, gr - 1)
    j1 = np.minimum(j0 + 1, gc - 1)
    wr = (fr - i0)[:, None]
    wc = (fc - j0)[None, :]

    i0c, i1c = i0[:, None], i1[:, None]
    j0c, j1c = j0[None, :], j1[None, :]
    v00 = luts[i0c, j0c, bin_idx]
    v01 = luts[i0c, j1c, bin_idx]
    v10 = luts[i1c, j0c, bin_idx]
    v11 = luts[i1c, j1c, bin_idx]
    out = (1 - wr) * ((1 - wc) * v00 + wc * v01) + wr * ((1 - wc) * v10 + wc * v11)
    return cmap.with_values(out)


@dataclass
class BinaryEdgeMap:
    """Binarized edge pixels with the axes of the source map.

    offset_x/offset_y hold per-pixel sub-pixel corrections (in pixel units,
    along the gradient direction) that line fitting can add to the integer
    coordinates.  They are zero wherever there is no edge.
    """

    pixels: np.ndarray
    vg: Axis
    vds: Axis
    offset_x: np.ndarray | None = None
    offset_y: np.ndarray | None = None

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=bool)
        if self.pixels.shape != (self.vds.count, self.vg.count):
            raise ValueError("edge map shape does not match axes")
        for off in (self.offset_x, self.offset_y):
            if off is not None and off.shape != self.pixels.shape:
                raise ValueError("offset map shape does not match edge map")

    @property
    def n_edge_pixels(self) -> int:
        return int(self.pixels.sum())


def canny(cmap: ChargeStabilityMap, gaussian_sigma: float = 1.0,
          low_threshold: float | None = None, high_threshold: float | None = None,
          low_fraction: float = 0.08, high_fraction: float = 0.20) -> BinaryEdgeMap:
    """Four-stage Canny edge detector.

    Gaussian smooth, Sobel gradients, four-sector non-maximum suppression,
    then hysteresis.  Absolute thresholds are in gradient units; when left
    unset they default to fractions of the maximum gradient magnitude, which
    makes the edge map invariant under shifting or rescaling the map values.
    """
    v = cmap.values
    smooth = ndimage.gaussian_filter(v, gaussian_sigma, mode="nearest")
    gx = ndimage.sobel(smooth, axis=1, mode="nearest") / 8.0
    gy = ndimage.sobel(smooth, axis=0, mode="nearest") / 8.0
    mag = np.hypot(gx, gy)
    gmax = float(mag.max())

    if high_threshold is None:
        high_threshold = high_fraction * gmax
    if low_threshold is None:
        low_threshold = low_fraction * gmax
    if gmax > 0 and not low_threshold < high_threshold:
        raise ValueError("low threshold must be below high threshold")
    if gmax == 0.0:
        return BinaryEdgeMap(np.zeros_like(v, dtype=bool), cmap.vg, cmap.vds)

    h, w = v.shape
    padded = np.pad(mag, 1, mode="constant")

    def shifted(dr: int, dc: int) -> np.ndarray:
        return padded[1 + dr:1 + dr + h, 1 + dc:1 + dc + w]

    # quantize the gradient direction into four sectors and compare each
    # pixel against its two neighbors along that direction
    sector = np.round(np.arctan2(gy, gx) / (np.pi / 4)).astype(int) % 4
    fwd = np.choose(sector, [shifted(0, 1), shifted(1, 1), shifted(1, 0), shifted(1, -1)])
    bwd = np.choose(sector, [shifted(0, -1), shifted(-1, -1), shifted(-1, 0), shifted(-1, 1)])
    ridge = (mag > fwd) & (mag >= bwd)

    strong = ridge & (mag >= high_threshold)
    weak = ridge & (mag >= low_threshold)
    if not strong.any():
        return BinaryEdgeMap(np.zeros_like(v, dtype=bool), cmap.vg, cmap.vds)
    labels, _ = ndimage.label(weak, structure=np.ones((3, 3), dtype=int))
    keep = np.unique(labels[strong])
    edges = np.isin(labels, keep[keep > 0])

    # sub-pixel refinement: the vertex of the parabola through the three
    # magnitudes along the gradient axis.  Integer pixel grids under-resolve
    # steep lines (few columns over many rows), and the quantization error
    # has enough leverage there to tilt fitted slopes by several percent.
    denom = bwd - 2.0 * mag + fwd
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = 0.5 * (bwd - fwd) / denom
    delta = np.where((denom < 0) & np.isfinite(delta), np.clip(delta, -0.5, 0.5), 0.0)
    delta[~edges] = 0.0
    axis_x = np.choose(sector, [1, 1, 0, -1])
    axis_y = np.choose(sector, [0, 1, 1, 1])
    return BinaryEdgeMap(edges, cmap.vg, cmap.vds,
                         offset_x=delta * axis_x, offset_y=delta * axis_y)


@dataclass
class Segment:
    """A straight edge segment in axis units with pixel-space metadata."""

    vg_start: float
    vds_start: float
    vg_end: float
    vds_end: float
    slope: float       # dV_DS/dV_GS
    n_pixels: int
    length: float      # pixel units, along the fitted line

    def __post_init__(self):
        if not np.isfinite(self.slope):
            raise ValueError("segment slope must be finite")
        if self.n_pixels < 2:
            raise ValueError("segment needs at least 2 pixels")


def _drop_converging(pixels: np.ndarray, reach: int = 4) -> np.ndarray:
    """Mask out edge pixels whose row holds another edge within `reach` columns.

    Where two edges run closer together than the smoothing width, the
    blurred intensity profile is a single narrow bump and its gradient
    extrema sit outside the true feature: localization there is biased
    outward, dragging line fits off-slope.  Pixels that have a same-row
    companion at 2..reach columns are in exactly that regime, so they are
    excluded from voting and fitting.  Companions at one column are kept;
    thinned edge chains themselves can be two pixels wide.
    """
    flagged = np.zeros_like(pixels)
    for dc in range(2, reach + 1):
        flagged[:, dc:] |= pixels[:, :-dc]
        flagged[:, :-dc] |= pixels[:, dc:]
    return pixels & ~flagged


def _principal_axis(x: np.ndarray, y: np.ndarray):
    cx, cy = x.mean(), y.mean()
    dx, dy = x - cx, y - cy
    sxx, syy, sxy = dx @ dx, dy @ dy, dx @ dy
    theta = 0.5 * np.arctan2(2.0 * sxy, sxx - syy)
    return cx, cy, np.cos(theta), np.sin(theta)


def _merge_collinear(runs: list, x: np.ndarray, y: np.ndarray,
                     rms_limit: float = 0.5) -> list:
    """Join gap-separated pixel runs that lie on one straight line.

    A feature interrupted in the middle (the bias window closes near zero
    bias, so each boundary appears as two collinear arms) fits far better
    from both halves at once: the baseline doubles, which matters most for
    steep lines.  Runs are merged when the union still fits a line with
    small perpendicular scatter.
    """
    merged = True
    while merged and len(runs) > 1:
        merged = False
        for i in range(len(runs)):
            for j in range(i + 1, len(runs)):
                union = np.concatenate([runs[i], runs[j]])
                cx, cy, vx, vy = _principal_axis(x[union], y[union])
                resid = -(x[union] - cx) * vy + (y[union] - cy) * vx
                if float(np.sqrt(np.mean(resid ** 2))) <= rms_limit:
                    runs = runs[:i] + [union] + runs[i + 1:j] + runs[j + 1:]
                    merged = True
                    break
            if merged:
                break
    return runs


def _fit_segment(px: np.ndarray, py: np.ndarray, vg: Axis, vds: Axis,
                 trim: float = 0.75) -> Segment:
    """Trimmed total-least-squares line through edge pixels, in axis units.

    Pixels more than `trim` px (or 2x the rms, whichever is larger) off the
    fitted line are discarded and the fit repeated: edge localization
    degrades systematically where diamond edges converge, and those few
    pixels otherwise tilt the whole segment.
    """
    x = px.astype(float)
    y = py.astype(float)
    for _ in range(3):
        cx, cy, vx, vy = _principal_axis(x, y)
        resid = np.abs(-(x - cx) * vy + (y - cy) * vx)
        keep = resid <= max(trim, 2.0 * float(np.sqrt(np.mean(resid ** 2))))
        if keep.all() or keep.sum() < 4:
            break
        x, y = x[keep], y[keep]
    cx, cy, vx, vy = _principal_axis(x, y)
    t = (x - cx) * vx + (y - cy) * vy
    t0, t1 = float(t.min()), float(t.max())
    x0, y0 = cx + t0 * vx, cy + t0 * vy
    x1, y1 = cx + t1 * vx, cy + t1 * vy

    if abs(vx) < 1e-12:
        slope = VERTICAL_SLOPE if vy >= 0 else -VERTICAL_SLOPE
    else:
        slope = (vy * vds.step) / (vx * vg.step)
        slope = float(np.clip(slope, -VERTICAL_SLOPE, VERTICAL_SLOPE))

    return Segment(
        vg_start=vg.lo + x0 * vg.step,
        vds_start=vds.lo + y0 * vds.step,
        vg_end=vg.lo + x1 * vg.step,
        vds_end=vds.lo + y1 * vds.step,
        slope=slope,
        n_pixels=int(x.size),
        length=t1 - t0,
    )


def hough_segments(edges: BinaryEdgeMap, accumulator_threshold: int | None = None,
                   min_length: int | None = None, max_gap: int = 3,
                   max_segments: int = 10, n_angles: int = 180,
                   window: float = 1.0, companion_reach: int = 4) -> list[Segment]:
    """Greedy Hough extraction of straight edge segments.

    Lines are pulled out of a 1-degree by 1-pixel accumulator strongest
    first; the pixels within `window` of each line are projected onto it,
    split at gaps larger than max_gap, and every run of at least min_length
    pixels is refined by a total-least-squares fit.  Consumed pixels stop
    voting, so the procedure is deterministic and terminates.

    min_length defaults to 15% of the bias-axis pixel count.
    """
    h, w = edges.pixels.shape
    if min_length is None:
        min_length = max(2, round(0.15 * h))
    if accumulator_threshold is None:
        accumulator_threshold = min_length

    pixels = _drop_converging(edges.pixels, reach=companion_reach)
    rows, cols = np.nonzero(pixels)
    if rows.size == 0:
        return []
    x = cols.astype(float)
    y = rows.astype(float)
    if edges.offset_x is not None:
        x = x + edges.offset_x[rows, cols]
    if edges.offset_y is not None:
        y = y + edges.offset_y[rows, cols]

    thetas = np.deg2rad(np.arange(n_angles, dtype=float))
    cos_t, sin_t = np.cos(thetas), np.sin(thetas)
    diag = int(np.ceil(np.hypot(h, w)))
    n_rho = 2 * diag + 1
    # each edge pixel votes once per angle; precompute all vote indices
    rho = x[:, None] * cos_t[None, :] + y[:, None] * sin_t[None, :]
    vote_idx = np.round(rho).astype(np.int64) + diag + np.arange(n_angles)[None, :] * n_rho

    active = np.ones(rows.size, dtype=bool)
    segments: list[Segment] = []
    while len(segments) < max_segments and int(active.sum()) >= accumulator_threshold:
        acc = np.bincount(vote_idx[active].ravel(), minlength=n_angles * n_rho)
        best = int(np.argmax(acc))
        if acc[best] < accumulator_threshold:
            break
        ti, ri = divmod(best, n_rho)
        rho0 = float(ri - diag)
        dist = np.abs(x * cos_t[ti] + y * sin_t[ti] - rho0)
        near = active & (dist <= window)
        if not near.any():
            break

        # order along the line and split at gaps
        direction = (-sin_t[ti], cos_t[ti])
        t = x[near] * direction[0] + y[near] * direction[1]
        order = np.argsort(t)
        idx = np.nonzero(near)[0][order]
        t_sorted = t[order]
        breaks = np.nonzero(np.diff(t_sorted) > max_gap)[0]
        runs = [run for run in np.split(idx, breaks + 1) if run.size >= min_length]
        runs = _merge_collinear(runs, x, y)
        for run in runs:
            seg = _fit_segment(x[run], y[run], edges.vg, edges.vds)
            if seg.n_pixels >= min_length:
                segments.append(seg)
        active[near] = False

    segments.sort(key=lambda s: (-s.n_pixels, s.vg_start))
    return segments


def zero_bias_trace(cmap: ChargeStabilityMap) -> tuple[np.ndarray, np.ndarray]:
    """(V_GS values, response) of the row closest to V_DS = 0."""
    return cmap.vg_values, cmap.values[cmap.zero_bias_row()]


def low_bias_trace(cmap: ChargeStabilityMap,
                   half_band: float = 0.0015) -> tuple[np.ndarray, np.ndarray]:
    """(V_GS values, response) averaged over rows with |V_DS| <= half_band.

    Oscillations can be narrower than the gate-voltage step right at zero
    bias; averaging a thin bias band widens them past the sampling limit
    and suppresses noise without moving their positions.
    """
    sel = np.abs(cmap.vds_values) <= half_band
    if not sel.any():
        return zero_bias_trace(cmap)
    return cmap.vg_values, cmap.values[sel].mean(axis=0)


def find_peaks(trace: np.ndarray, min_prominence: float = 0.05,
               vg_values: np.ndarray | None = None) -> np.ndarray:
    """Coulomb-oscillation positions on a zero-bias trace.

    Local maxima whose prominence is at least min_prominence times the
    trace's full range, in increasing gate-voltage order.  The relative
    threshold makes the result independent of measurement units, so rf
    response and dc conductance traces go through the same code.  Returns
    V_GS values when the axis is supplied, otherwise sample indices.
    """
    trace = np.asarray(trace, dtype=float)
    span = float(trace.max() - trace.min()) if trace.size else 0.0
    if span <= 0.0:
        idx = np.empty(0, dtype=int)
    else:
        idx, _ = _scipy_find_peaks(trace, prominence=min_prominence * span)
    if vg_values is None:
        return idx
    return np.asarray(vg_values)[idx]


def zero_bias_peaks(cmap: ChargeStabilityMap, min_prominence: float = 0.05) -> np.ndarray:
    """find_peaks applied to the map's zero-bias row; returns V_GS values."""
    vg, trace = zero_bias_trace(cmap)
    return find_peaks(trace, min_prominence, vg_values=vg)


__all__ = [
    "VERTICAL_SLOPE",
    "differentiate_dc",
    "remove_drift",
    "clahe",
    "BinaryEdgeMap",
    "canny",
    "Segment",
    "hough_segments",
    "zero_bias_trace",
    "low_bias_trace",
    "find_peaks",
    "zero_bias_peaks",
]
