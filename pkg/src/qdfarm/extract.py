"""Diamond-edge pair selection and device parameter extraction.

Takes the straight segments and zero-bias peaks produced by the imaging
chain, pairs up positive- and negative-slope edges, scores the pairs,
converts the best physical pair into dot parameters, and classifies the
device.  Also hosts the small energy/rate conversion helpers.
"""

from dataclasses import dataclass, field

import numpy as np

from .core import ChargeStabilityMap, DeviceClass, DotParameters, ELEMENTARY_CHARGE
from .imaging import Segment, VERTICAL_SLOPE, low_bias_trace

# score components, all oriented so that larger is better
SCORE_COMPONENTS = ("length", "vds_proximity", "peak_proximity",
                    "gradient_similarity", "low_vg")


def line_crossing(a: Segment, b: Segment) -> tuple[float, float]:
    """Intersection (V_GS, V_DS) of the infinite extensions of two segments.

    The fitted arms rarely touch, so the crossing always comes from
    extrapolation.
    """
    if a.slope == b.slope:
        raise ValueError("parallel segments have no crossing")
    # vds = vds_start + m (vg - vg_start) for each line
    ba = a.vds_start - a.slope * a.vg_start
    bb = b.vds_start - b.slope * b.vg_start
    vg = (bb - ba) / (a.slope - b.slope)
    vds = a.slope * vg + ba
    return float(vg), float(vds)


@dataclass
class ScoredPair:
    """One positive/negative edge-slope pairing with its ranking scores.

    scores holds the standardized components; total_score is their
    weighted sum.  raw holds the unstandardized component values, which
    are useful when debugging a ranking.
    """

    positive_segment: Segment
    negative_segment: Segment
    crossing: tuple[float, float]
    scores: dict = field(default_factory=dict)
    total_score: float = 0.0
    raw: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.positive_segment.slope > 0:
            raise ValueError("positive_segment must have positive slope")
        if not self.negative_segment.slope < 0:
            raise ValueError("negative_segment must have negative slope")


def _raw_components(pos: Segment, neg: Segment, crossing, peaks) -> dict:
    vg_c, vds_c = crossing
    peaks = np.asarray(peaks, dtype=float)
    peak_term = 0.0 if peaks.size == 0 else -float(np.min(np.abs(peaks - vg_c)))
    return {
        "length": pos.length + neg.length,
        "vds_proximity": -abs(vds_c),
        "peak_proximity": peak_term,
        "gradient_similarity": -abs(abs(pos.slope) - abs(neg.slope)),
        "low_vg": -vg_c,
    }


def score_pairs(segments: list, peaks=(), weights: dict | None = None) -> list:
    """Score and rank every positive/negative slope pairing.

    Five criteria, each oriented so larger is better: total line length,
    closeness of the crossing to zero bias, closeness of the crossing to a
    zero-bias oscillation, similarity of the two slope magnitudes, and how
    low in gate voltage the crossing sits.  Components are z-standardized
    across the candidate pairs and combined with equal weights unless
    overridden.  Ties break toward lower crossing V_GS, then longer pairs.
    """
    if weights is None:
        weights = {name: 1.0 for name in SCORE_COMPONENTS}
    unknown = set(weights) - set(SCORE_COMPONENTS)
    if unknown:
        raise ValueError(f"unknown score components: {sorted(unknown)}")

    positives = [s for s in segments if s.slope > 0]
    negatives = [s for s in segments if s.slope < 0]
    pairs = []
    for pos in positives:
        for neg in negatives:
            crossing = line_crossing(pos, neg)
            pairs.append(ScoredPair(pos, neg, crossing,
                                    raw=_raw_components(pos, neg, crossing, peaks)))
    if not pairs:
        return []

    for name in SCORE_COMPONENTS:
        col = np.array([p.raw[name] for p in pairs], dtype=float)
        std = col.std()
        z = (col - col.mean()) / std if std > 0 else np.zeros_like(col)
        for p, zi in zip(pairs, z):
            p.scores[name] = float(zi)
    for p in pairs:
        p.total_score = float(sum(weights.get(name, 0.0) * p.scores[name]
                                  for name in SCORE_COMPONENTS))

    pairs.sort(key=lambda p: (-p.total_score, p.crossing[0],
                              -(p.positive_segment.length + p.negative_segment.length)))
    return pairs


def params_from_slopes(m1: float, m2: float) -> tuple[float, float]:
    """(alpha_g, asymmetry) from the positive and negative edge slopes.

    alpha_g = (1/m1 - 1/m2)^-1 and asymmetry = (m1 + m2)/(m1 - m2); the
    exact inverse of the forward slope formulas.
    """
    if not (m1 > 0 > m2):
        raise ValueError("need one positive and one negative slope")
    if abs(m1) >= VERTICAL_SLOPE and abs(m2) >= VERTICAL_SLOPE:
        raise ValueError("both edges vertical: lever arm degenerate")
    alpha = 1.0 / (1.0 / m1 - 1.0 / m2)
    asym = (m1 + m2) / (m1 - m2)
    return float(alpha), float(asym)


def params_from_pair(pair: ScoredPair) -> DotParameters:
    """DotParameters implied by one scored pair (no physicality check)."""
    alpha, asym = params_from_slopes(pair.positive_segment.slope,
                                     pair.negative_segment.slope)
    return DotParameters(v_1e=pair.crossing[0], alpha_g=alpha, asymmetry=asym)


def physical_filter(params: DotParameters) -> tuple[bool, str | None]:
    """Accept/reject extracted parameters against the lever-arm bounds.

    Source and drain couplings are non-negative and all couplings sum to
    at most one, so |asymmetry| + alpha_g <= 1; a gate lever arm below 0.5
    is rejected as implausible for this gate geometry.
    """
    if params.alpha_g > 1.0:
        return False, "lever arm above unity"
    if params.alpha_g < 0.5:
        return False, "lever arm below 0.5"
    if abs(params.asymmetry) >= 1.0:
        return False, "asymmetry magnitude at or above unity"
    if abs(params.asymmetry) + params.alpha_g > 1.0:
        return False, "lever arm plus asymmetry exceeds unity"
    return True, None


def charging_energy(delta_vg: float, alpha_g: float) -> float:
    """Addition energy in meV from the gate-voltage spacing of transitions.

    E_C = |e| * delta_vg * alpha_g; with delta_vg in volts the numeric
    value is delta_vg * alpha_g expressed in meV.
    """
    if not delta_vg > 0:
        raise ValueError("delta_vg must be positive")
    if not 0.0 < alpha_g <= 1.0:
        raise ValueError("alpha_g must be in (0, 1]")
    return delta_vg * 1e3 * alpha_g


def gross_tunnel_rate(i_d: float) -> float:
    """Electrons per second carried by a dc current: Gamma = I_D / |e|."""
    if i_d < 0:
        raise ValueError("current must be non-negative")
    return i_d / ELEMENTARY_CHARGE


def harmonic_rate(gamma_s: float, gamma_d: float) -> float:
    """Net rate of sequential tunneling through both barriers.

    1/Gamma = 1/Gamma_S + 1/Gamma_D; dominated by the slower barrier.
    """
    if np.isinf(gamma_s):
        return float(gamma_d)
    if np.isinf(gamma_d):
        return float(gamma_s)
    if not (gamma_s > 0 and gamma_d > 0):
        raise ValueError("rates must be positive")
    return 1.0 / (1.0 / gamma_s + 1.0 / gamma_d)


# ---------------------------------------------------------------------------
# Classification


@dataclass
class ClassifierConfig:
    """Decision thresholds for the feature-based device classifier."""

    # a closing diamond must cross within this |V_DS| (V)
    vds_tolerance: float = 0.002
    # and within this V_GS distance (V) of a zero-bias oscillation
    peak_tolerance: float = 0.008
    # zero-bias row counts as blockaded below this fraction of the map max
    blockade_fraction: float = 0.2
    # high-bias rows count as conducting above this fraction of the map max
    conduction_fraction: float = 0.5
    # fraction of V_DS range treated as "high bias" at each end
    high_bias_band: float = 0.15


def best_physical_pair(pairs: list) -> tuple[ScoredPair | None, list]:
    """First pair passing the physicality filter, plus rejection reasons."""
    reasons = []
    for pair in pairs:
        params = params_from_pair(pair)
        ok, reason = physical_filter(params)
        if ok:
            return pair, reasons
        reasons.append(reason)
    return None, reasons


def accepted_pairs(pairs: list) -> list:
    """Pairs that survive the physicality filter, in score order."""
    out = []
    for pair in pairs:
        ok, _ = physical_filter(params_from_pair(pair))
        if ok:
            out.append(pair)
    return out


def closing_pairs(pairs: list, peaks, config: "ClassifierConfig | None" = None) -> list:
    """Physical pairs whose diamond closes at zero bias, in score order.

    Closing means the extrapolated crossing sits within the bias tolerance
    of V_DS = 0 and within the gate tolerance of a zero-bias oscillation.
    """
    cfg = config or ClassifierConfig()
    peaks = np.asarray(peaks, dtype=float)
    out = []
    for pair in accepted_pairs(pairs):
        vg_c, vds_c = pair.crossing
        if abs(vds_c) > cfg.vds_tolerance:
            continue
        if peaks.size and np.min(np.abs(peaks - vg_c)) <= cfg.peak_tolerance:
            out.append(pair)
    return out


def classify(cmap: ChargeStabilityMap, segments: list, peaks, pairs: list,
             config: ClassifierConfig | None = None) -> DeviceClass:
    """Good / Bad / Multi decision from pipeline features.

    Good needs an accepted pair whose diamond closes -- crossing near zero
    bias and at a zero-bias oscillation -- at genuine zero-bias conduction.
    Dots in series also oscillate at zero bias, but only weakly (both dots
    must conduct at once), so a closing pair over a blockaded zero-bias row
    still means Multi.  So do accepted pairs whose crossings all sit at
    finite bias, and a blockaded zero-bias row under visible high-bias
    conduction when no pairs survive at all.  Everything else is Bad.
    """
    cfg = config or ClassifierConfig()

    vmax = float(cmap.values.max())
    _, low_trace = low_bias_trace(cmap)
    zero_bias_conducting = (vmax > 0
                            and float(low_trace.max()) >= cfg.blockade_fraction * vmax)

    if closing_pairs(pairs, peaks, cfg):
        return DeviceClass.GOOD if zero_bias_conducting else DeviceClass.MULTI

    # series dots: edges pair up but the diamonds never close at zero bias
    if accepted_pairs(pairs):
        return DeviceClass.MULTI

    # or nothing paired: look for blockade at zero bias with conduction at
    # high bias, which distinguishes series dots from genuinely dead or
    # featureless devices.  Both traces are band averages so that noise is
    # suppressed equally on each side of the comparison; a pure-noise map
    # must not read as "blockaded here, conducting there".
    if vmax > 0 and not zero_bias_conducting:
        band = max(1, int(round(cfg.high_bias_band * cmap.vds.count)))
        high_trace = np.concatenate([cmap.values[:band],
                                     cmap.values[-band:]]).mean(axis=0)
        if float(high_trace.max()) > cfg.conduction_fraction * vmax:
            return DeviceClass.MULTI

    return DeviceClass.BAD


def estimate_v2e(v_1e: float, peaks, pairs: list,
                 config: "ClassifierConfig | None" = None,
                 min_spacing: float = 0.005) -> float | None:
    """Gate voltage of the second transition, when clearly visible.

    The next zero-bias oscillation above v_1e counts when some physical
    pair also closes there; otherwise the second transition is not
    considered established and None is returned.
    """
    cfg = config or ClassifierConfig()
    peaks = np.asarray(peaks, dtype=float)
    above = peaks[peaks > v_1e + min_spacing]
    if above.size == 0:
        return None
    candidate = float(above[0])
    for pair in closing_pairs(pairs, peaks, cfg):
        if abs(pair.crossing[0] - candidate) <= cfg.peak_tolerance:
            return candidate
    return None
