"""Farm-level reporting: aggregate tables, truth comparison, figures.

A report folds per-device analysis results together with the layout (which
instance set each device belongs to) into:

* one record per device,
* per-set aggregates (class mix, mean/std of the extracted dot parameters),
* an overall classification frequency table,
* optional comparison against simulator ground truth.

write_report renders all of that to tab-separated tables, a plain-text
summary, and PNG figures in an output directory.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import io as qio
from .core import DeviceClass, DotParameters

CLASS_ORDER = (DeviceClass.GOOD, DeviceClass.BAD, DeviceClass.MULTI)
FAILED = "failed"  # pseudo-class for devices whose analysis raised


def _class_name(device_class) -> str:
    return FAILED if device_class is None else device_class.value


@dataclass(frozen=True)
class ReportRecord:
    """One device in the report: identity, class, parameters, diagnostics."""

    device_id: int
    set_id: int
    device_class: DeviceClass | None
    params: DotParameters | None
    score: float
    snr: float | None
    error: str | None


@dataclass(frozen=True)
class SetAggregate:
    """Summary of one instance set, recomputable from the records."""

    set_id: int
    n_devices: int
    class_counts: dict
    n_extracted: int
    v1e_mean: float | None = None
    v1e_std: float | None = None
    alpha_mean: float | None = None
    alpha_std: float | None = None
    asym_mean: float | None = None
    asym_std: float | None = None


def _aggregate_set(set_id: int, records: list) -> SetAggregate:
    counts = {_class_name(c): 0 for c in CLASS_ORDER}
    counts[FAILED] = 0
    good_params = []
    for rec in records:
        counts[_class_name(rec.device_class)] += 1
        if rec.device_class is DeviceClass.GOOD and rec.params is not None:
            good_params.append(rec.params)
    agg = SetAggregate(set_id=set_id, n_devices=len(records),
                       class_counts=counts, n_extracted=len(good_params))
    if good_params:
        v1e = np.array([p.v_1e for p in good_params])
        alpha = np.array([p.alpha_g for p in good_params])
        asym = np.array([p.asymmetry for p in good_params])
        agg = SetAggregate(
            set_id=set_id, n_devices=len(records), class_counts=counts,
            n_extracted=len(good_params),
            v1e_mean=float(v1e.mean()), v1e_std=float(v1e.std()),
            alpha_mean=float(alpha.mean()), alpha_std=float(alpha.std()),
            asym_mean=float(asym.mean()), asym_std=float(asym.std()),
        )
    return agg


@dataclass
class FarmReport:
    """Everything the `report` subcommand writes, in memory."""

    records: list
    set_aggregates: list = field(default_factory=list)
    class_counts: dict = field(default_factory=dict)
    elapsed_seconds: float | None = None

    @property
    def n_devices(self) -> int:
        return len(self.records)

    def class_frequencies(self) -> dict:
        n = max(self.n_devices, 1)
        return {name: count / n for name, count in self.class_counts.items()}

    def check_consistency(self) -> None:
        """Recompute every aggregate from the records; raise on mismatch.

        Guards against a report assembled from stale or partial tables.
        """
        rebuilt = build_report(self.records, elapsed_seconds=self.elapsed_seconds)
        if rebuilt.class_counts != self.class_counts:
            raise ValueError("class counts do not match the records")
        if len(rebuilt.set_aggregates) != len(self.set_aggregates):
            raise ValueError("set aggregate table does not match the records")
        for mine, theirs in zip(self.set_aggregates, rebuilt.set_aggregates):
            if mine != theirs:
                raise ValueError(f"aggregates for set {mine.set_id} do not "
                                 "match the records")


def build_report(records_or_results, set_ids=None,
                 elapsed_seconds: float | None = None) -> FarmReport:
    """Assemble a FarmReport.

    Accepts either ReportRecords, or pipeline DeviceResults plus a
    device_id -> set_id mapping (a dict, or a layout via set_of).
    """
    records = []
    for item in records_or_results:
        if isinstance(item, ReportRecord):
            records.append(item)
            continue
        if set_ids is None:
            set_id = 0
        elif hasattr(set_ids, "set_of"):
            set_id = set_ids.set_of(item.device_id)
        else:
            set_id = set_ids[item.device_id]
        records.append(ReportRecord(
            device_id=item.device_id, set_id=int(set_id),
            device_class=item.device_class, params=item.params,
            score=item.score, snr=item.snr, error=item.error,
        ))
    records.sort(key=lambda r: r.device_id)

    class_counts = {_class_name(c): 0 for c in CLASS_ORDER}
    class_counts[FAILED] = 0
    for rec in records:
        class_counts[_class_name(rec.device_class)] += 1

    by_set = {}
    for rec in records:
        by_set.setdefault(rec.set_id, []).append(rec)
    aggregates = [_aggregate_set(sid, recs) for sid, recs in sorted(by_set.items())]

    return FarmReport(records=records, set_aggregates=aggregates,
                      class_counts=class_counts, elapsed_seconds=elapsed_seconds)


# ---------------------------------------------------------------------------
# comparison against simulator ground truth

@dataclass
class TruthComparison:
    """Classification agreement and parameter errors vs ground truth."""

    n_devices: int
    n_agreeing: int
    confusion: dict                 # (true class, predicted class) -> count
    v1e_errors: np.ndarray          # V, over devices Good in both
    alpha_errors: np.ndarray
    asym_errors: np.ndarray
    rows: list = field(default_factory=list)  # per-device comparison rows

    @property
    def agreement(self) -> float:
        return self.n_agreeing / self.n_devices if self.n_devices else math.nan

    def within(self, v1e_tol: float = 0.005, alpha_tol: float = 0.05,
               asym_tol: float = 0.08) -> float:
        """Fraction of both-Good devices with all parameters inside tolerance."""
        if self.v1e_errors.size == 0:
            return math.nan
        ok = ((np.abs(self.v1e_errors) <= v1e_tol)
              & (np.abs(self.alpha_errors) <= alpha_tol)
              & (np.abs(self.asym_errors) <= asym_tol))
        return float(ok.mean())


COMPARISON_COLUMNS = ("device_id", "set_id", "true_class", "predicted_class",
                      "true_v_1e", "v_1e", "v_1e_error",
                      "alpha_error", "asymmetry_error")


def compare_with_truth(report: FarmReport, truth) -> TruthComparison:
    """Join report records with truth records on device_id."""
    truth_by_id = {t.device_id: t for t in truth}
    confusion = {}
    rows = []
    n = n_agree = 0
    dv1e, dalpha, dasym = [], [], []
    for rec in report.records:
        t = truth_by_id.get(rec.device_id)
        if t is None:
            continue
        n += 1
        true_name = t.device_class.value
        pred_name = _class_name(rec.device_class)
        confusion[(true_name, pred_name)] = confusion.get((true_name, pred_name), 0) + 1
        if rec.device_class is t.device_class:
            n_agree += 1
        ev = ea = es = None
        if (t.device_class is DeviceClass.GOOD and t.v_1e is not None
                and rec.device_class is DeviceClass.GOOD and rec.params is not None):
            ev = rec.params.v_1e - t.v_1e
            ea = rec.params.alpha_g - t.alpha_g
            es = rec.params.asymmetry - t.asymmetry
            dv1e.append(ev)
            dalpha.append(ea)
            dasym.append(es)
        rows.append((rec.device_id, rec.set_id, true_name, pred_name,
                     t.v_1e, None if rec.params is None else rec.params.v_1e,
                     ev, ea, es))
    return TruthComparison(
        n_devices=n, n_agreeing=n_agree, confusion=confusion,
        v1e_errors=np.array(dv1e), alpha_errors=np.array(dalpha),
        asym_errors=np.array(dasym), rows=rows,
    )


# ---------------------------------------------------------------------------
# rendering

RECORD_COLUMNS = ("device_id", "set_id", "class", "v_1e", "alpha_g",
                  "asymmetry", "v_2e", "charging_energy_mev", "score",
                  "snr", "error")

AGGREGATE_COLUMNS = ("set_id", "n_devices", "n_good", "n_bad", "n_multi",
                     "n_failed", "n_extracted", "v1e_mean", "v1e_std",
                     "alpha_mean", "alpha_std", "asym_mean", "asym_std")


def _record_rows(records):
    for rec in records:
        p = rec.params
        yield (rec.device_id, rec.set_id,
               None if rec.device_class is None else rec.device_class,
               None if p is None else p.v_1e,
               None if p is None else p.alpha_g,
               None if p is None else p.asymmetry,
               None if p is None else p.v_2e,
               None if p is None else p.charging_energy,
               rec.score, rec.snr,
               "" if rec.error is None else " ".join(rec.error.split()))


def summary_text(report: FarmReport, comparison: TruthComparison | None = None) -> str:
    lines = [f"devices analyzed: {report.n_devices}"]
    if report.elapsed_seconds is not None:
        lines.append(f"analysis wall time: {report.elapsed_seconds:.1f} s "
                     f"({1e3 * report.elapsed_seconds / max(report.n_devices, 1):.1f} ms/device)")
    freqs = report.class_frequencies()
    for name in [c.value for c in CLASS_ORDER] + [FAILED]:
        lines.append(f"  {name:<7s} {report.class_counts.get(name, 0):4d}  "
                     f"({100 * freqs.get(name, 0.0):.1f}%)")
    extracted = sum(a.n_extracted for a in report.set_aggregates)
    lines.append(f"dot parameters extracted: {extracted}")
    if comparison is not None:
        lines.append(f"classification agreement with ground truth: "
                     f"{100 * comparison.agreement:.1f}% "
                     f"({comparison.n_agreeing}/{comparison.n_devices})")
        if comparison.v1e_errors.size:
            lines.append(f"both-Good devices: {comparison.v1e_errors.size}; "
                         f"|v_1e error| p95 = "
                         f"{1e3 * np.percentile(np.abs(comparison.v1e_errors), 95):.2f} mV; "
                         f"within (5 mV, 0.05, 0.08): "
                         f"{100 * comparison.within():.1f}%")
    return "\n".join(lines) + "\n"


def _plot_class_mix(report: FarmReport, path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    names = [c.value for c in CLASS_ORDER] + [FAILED]
    colors = {"good": "tab:green", "bad": "tab:red",
              "multi": "tab:orange", FAILED: "tab:gray"}
    sets = [a.set_id for a in report.set_aggregates]
    x = np.arange(len(sets) + 1)
    fig, ax = plt.subplots(figsize=(7, 4))
    bottom = np.zeros(len(x))
    for name in names:
        fracs = [report.class_frequencies().get(name, 0.0)]
        fracs += [a.class_counts.get(name, 0) / a.n_devices
                  for a in report.set_aggregates]
        fracs = np.array(fracs)
        ax.bar(x, fracs, bottom=bottom, label=name, color=colors[name])
        bottom += fracs
    ax.set_xticks(x)
    ax.set_xticklabels(["all"] + [f"set {s}" for s in sets], rotation=45)
    ax.set_ylabel("relative frequency")
    ax.set_title("device classification by instance set")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _plot_parameters(report: FarmReport, path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    good = [r.params for r in report.records
            if r.device_class is DeviceClass.GOOD and r.params is not None]
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.5))
    panels = [
        ("first-electron voltage (mV)", [1e3 * p.v_1e for p in good]),
        ("gate lever arm", [p.alpha_g for p in good]),
        ("lever-arm asymmetry", [p.asymmetry for p in good]),
    ]
    for ax, (label, values) in zip(axes, panels):
        if values:
            ax.hist(values, bins=30, color="tab:blue", alpha=0.85)
        ax.set_xlabel(label)
        ax.set_ylabel("devices")
    fig.suptitle(f"extracted dot parameters ({len(good)} Good devices)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _plot_truth_scatter(comparison: TruthComparison, report: FarmReport, path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    true_v, est_v = [], []
    for row in comparison.rows:
        if row[4] is not None and row[5] is not None and row[6] is not None:
            true_v.append(1e3 * row[4])
            est_v.append(1e3 * row[5])
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    if true_v:
        ax.scatter(true_v, est_v, s=8, alpha=0.6)
        lo, hi = min(true_v + est_v), max(true_v + est_v)
        ax.plot([lo, hi], [lo, hi], "k--", lw=1)
    ax.set_xlabel("true first-electron voltage (mV)")
    ax.set_ylabel("extracted (mV)")
    ax.set_title("round-trip accuracy")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_report(outdir, report: FarmReport, truth=None, figures: bool = True) -> dict:
    """Render the report to a directory; returns {name: path} of outputs."""
    import os

    os.makedirs(outdir, exist_ok=True)
    report.check_consistency()
    paths = {}

    paths["records"] = os.path.join(outdir, "records.tsv")
    qio.write_table(paths["records"], RECORD_COLUMNS, _record_rows(report.records))

    agg_rows = []
    for a in report.set_aggregates:
        agg_rows.append((a.set_id, a.n_devices,
                         a.class_counts.get("good", 0), a.class_counts.get("bad", 0),
                         a.class_counts.get("multi", 0), a.class_counts.get(FAILED, 0),
                         a.n_extracted, a.v1e_mean, a.v1e_std,
                         a.alpha_mean, a.alpha_std, a.asym_mean, a.asym_std))
    paths["sets"] = os.path.join(outdir, "set_aggregates.tsv")
    qio.write_table(paths["sets"], AGGREGATE_COLUMNS, agg_rows)

    freq_rows = [(name, report.class_counts.get(name, 0),
                  report.class_frequencies().get(name, 0.0))
                 for name in [c.value for c in CLASS_ORDER] + [FAILED]]
    paths["classes"] = os.path.join(outdir, "class_frequencies.tsv")
    qio.write_table(paths["classes"], ("class", "count", "frequency"), freq_rows)

    comparison = None
    if truth is not None:
        comparison = compare_with_truth(report, truth)
        paths["comparison"] = os.path.join(outdir, "comparison.tsv")
        qio.write_table(paths["comparison"], COMPARISON_COLUMNS, comparison.rows)

    paths["summary"] = os.path.join(outdir, "summary.txt")
    with open(paths["summary"], "w") as fh:
        fh.write(summary_text(report, comparison))

    if figures:
        paths["class_mix_png"] = os.path.join(outdir, "class_mix.png")
        _plot_class_mix(report, paths["class_mix_png"])
        paths["parameters_png"] = os.path.join(outdir, "parameters.png")
        _plot_parameters(report, paths["parameters_png"])
        if comparison is not None:
            paths["truth_png"] = os.path.join(outdir, "truth_scatter.png")
            _plot_truth_scatter(comparison, report, paths["truth_png"])
    return paths


__all__ = [
    "ReportRecord", "SetAggregate", "FarmReport", "build_report",
    "TruthComparison", "compare_with_truth", "summary_text", "write_report",
    "RECORD_COLUMNS", "AGGREGATE_COLUMNS", "COMPARISON_COLUMNS",
]
