"""Per-device analysis driver and batch (farm) analysis.

One function, analyze_map, runs the full chain on a single stability map:
drift removal, contrast equalization, edge detection, segment extraction,
peak finding, pair scoring, physicality filtering, classification, and
parameter conversion.  analyze_farm fans it out over many maps with a
process pool and merges results back in device order.
"""

import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import extract, imaging, rfchain
from .core import ChargeStabilityMap, DeviceClass, DotParameters, MapMode

WORKERS_ENV_VAR = "QDFARM_WORKERS"


@dataclass
class PipelineConfig:
    """Every knob of the per-device analysis chain in one place."""

    drift_window: int = 100
    clahe_tile_grid: tuple = (8, 8)
    clahe_clip_limit: float = 0.01
    gaussian_sigma: float = 1.0
    low_fraction: float = 0.08
    high_fraction: float = 0.20
    min_length: int | None = None
    max_gap: int = 3
    max_segments: int = 10
    companion_reach: int = 4
    peak_prominence: float = 0.05
    peak_band: float = 0.0015
    score_weights: dict | None = None
    classifier: extract.ClassifierConfig = field(default_factory=extract.ClassifierConfig)
    remove_drift: bool = True
    equalize: bool = True


@dataclass
class DeviceResult:
    """Outcome of analyzing one stability map."""

    device_id: int
    device_class: DeviceClass | None = None
    params: DotParameters | None = None
    score: float = 0.0
    snr: float | None = None
    n_segments: int = 0
    n_peaks: int = 0
    rejections: list = field(default_factory=list)
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


def _map_snr(cmap: ChargeStabilityMap) -> float | None:
    """Rough readout SNR of one map: the brightest half-percent of pixels
    against the quiet lower quartile.  None for a degenerate (flat) map,
    inf for a noise-free synthetic one."""
    values = cmap.values
    lo, hi = np.percentile(values, [25.0, 99.5])
    peak = values >= hi
    background = values <= lo
    if (peak & background).any():
        return None
    try:
        return rfchain.snr_of_map(cmap, peak, background)
    except ValueError:
        if float(values[background].std()) == 0.0 and \
                float(values[peak].max()) > float(values[background].mean()):
            return float("inf")
        return None


def analyze_map(cmap: ChargeStabilityMap, config: PipelineConfig | None = None) -> DeviceResult:
    """Run the full extraction chain on one map.

    dc current maps are differentiated to conductance first so that both
    modes feed the same imaging chain.
    """
    cfg = config or PipelineConfig()
    if cmap.mode is MapMode.DC_CURRENT:
        cmap = imaging.differentiate_dc(cmap)
    snr = _map_snr(cmap)

    base = cmap
    if cfg.remove_drift:
        base = imaging.remove_drift(base, window=cfg.drift_window)
    # peaks and intensity-ratio features come from the unequalized map;
    # contrast equalization would distort both.  A thin bias band makes
    # oscillations wider than the gate step and so reliably sampled.
    vg_vals, trace = imaging.low_bias_trace(base, half_band=cfg.peak_band)
    peaks = imaging.find_peaks(trace, min_prominence=cfg.peak_prominence,
                               vg_values=vg_vals)
    work = base
    if cfg.equalize:
        work = imaging.clahe(base, tile_grid=cfg.clahe_tile_grid,
                             clip_limit=cfg.clahe_clip_limit)
    edges = imaging.canny(work, gaussian_sigma=cfg.gaussian_sigma,
                          low_fraction=cfg.low_fraction,
                          high_fraction=cfg.high_fraction)
    segments = imaging.hough_segments(edges, min_length=cfg.min_length,
                                      max_gap=cfg.max_gap,
                                      max_segments=cfg.max_segments,
                                      companion_reach=cfg.companion_reach)
    pairs = extract.score_pairs(segments, peaks, weights=cfg.score_weights)
    device_class = extract.classify(base, segments, peaks, pairs, cfg.classifier)

    result = DeviceResult(device_id=cmap.device_id, device_class=device_class,
                          snr=snr, n_segments=len(segments), n_peaks=len(peaks))
    if device_class is not DeviceClass.GOOD:
        return result

    closing = extract.closing_pairs(pairs, peaks, cfg.classifier)
    if not closing:  # classifier said Good, so this should not happen
        result.error = "no closing pair despite Good classification"
        return result
    # the first electron transition is the lowest-gate-voltage diamond
    # that closes; higher closing diamonds belong to later electrons
    pair = min(closing, key=lambda p: p.crossing[0])
    params = extract.params_from_pair(pair)
    v_2e = extract.estimate_v2e(params.v_1e, peaks, pairs, cfg.classifier)
    if v_2e is not None:
        e_c = extract.charging_energy(v_2e - params.v_1e, params.alpha_g)
        params = replace(params, v_2e=v_2e, charging_energy=e_c)
    result.params = params
    result.score = pair.total_score
    return result


def _analyze_one(args) -> DeviceResult:
    cmap, config = args
    try:
        return analyze_map(cmap, config)
    except Exception as exc:  # record the failure, keep the batch running
        return DeviceResult(device_id=cmap.device_id, error=f"{type(exc).__name__}: {exc}")


def default_worker_count() -> int:
    """Worker processes to use: env override, else the CPU count."""
    env = os.environ.get(WORKERS_ENV_VAR)
    if env:
        n = int(env)
        if n < 1:
            raise ValueError(f"{WORKERS_ENV_VAR} must be >= 1")
        return n
    return os.cpu_count() or 1


@dataclass
class FarmAnalysis:
    """Results for a batch of maps, in device_id order, with timing."""

    results: list
    elapsed_seconds: float
    config: PipelineConfig

    @property
    def n_failed(self) -> int:
        return sum(1 for r in self.results if r.failed)

    def by_id(self, device_id: int) -> DeviceResult:
        for r in self.results:
            if r.device_id == device_id:
                return r
        raise KeyError(device_id)


def analyze_farm(maps: list, config: PipelineConfig | None = None,
                 workers: int | None = None) -> FarmAnalysis:
    """Analyze a batch of stability maps, in parallel when workers > 1.

    Results are merged by device_id so the output order is deterministic
    regardless of scheduling.  A failure in one device is recorded in its
    result and does not stop the batch.
    """
    cfg = config or PipelineConfig()
    if workers is None:
        workers = default_worker_count()
    t0 = time.perf_counter()
    tasks = [(m, cfg) for m in maps]
    if workers == 1 or len(maps) <= 1:
        results = [_analyze_one(t) for t in tasks]
    else:
        import multiprocessing as mp
        ctx = mp.get_context("spawn" if os.name == "nt" else "fork")
        chunk = max(1, len(tasks) // (4 * workers))
        with ctx.Pool(processes=workers) as pool:
            results = pool.map(_analyze_one, tasks, chunksize=chunk)
    results.sort(key=lambda r: r.device_id)
    elapsed = time.perf_counter() - t0
    return FarmAnalysis(results=results, elapsed_seconds=elapsed, config=cfg)
