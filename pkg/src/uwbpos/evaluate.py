"""Ranging/positioning evaluation pipelines and percentile/CDF reports.

Percentile convention (pinned, stated in every report header): linear
interpolation between closest ranks, i.e. the value at sorted position
(n - 1) * p / 100. Tables aggregate repetitions by averaging each
repetition's percentile; pooled per-sample errors are kept alongside so
CDFs can be drawn from all repetitions at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import PhysConstants, preprocess, toa_label, toa_to_range
from .dataio import SplitPlan, ToaDataset, make_fp_dataset, make_toa_dataset, split
from .detectors import FAILURE_PENALTY, LdeParams, PeakParams, estimate_batch
from .errors import EmptySamples, MissingArtifacts, TooFewAnchors
from .locate import SolverConfig, position_from_toas, positioning_error
from .models import FpEstimator, ToaEstimator, estimate_position_fp

PERCENTILE_CONVENTION = "linear interpolation between closest ranks"

RANGING_METHODS = ("Peak", "LDE", "ANN_ToA")
POSITIONING_METHODS = (
    "Peak+Algo2@Algo1",
    "LDE+Algo2@Algo1",
    "ANN_ToA+Algo2@Algo1",
    "ANN_FP",
)
SOLVER_COMPARISON_METHODS = (
    "Peak+Algo1",
    "Peak+Algo2@Closest",
    "Peak+Algo2@Algo1",
)

_INIT_MODES = {"Algo1": "algo1_only", "Algo2@Algo1": "algo1", "Algo2@Closest": "closest_anchor"}


def percentile(samples, p: float) -> float:
    """p-th percentile with linear interpolation between closest ranks."""
    s = np.sort(np.asarray(samples, dtype=float))
    if s.size == 0:
        raise EmptySamples("percentile of an empty sample set")
    if not 0.0 <= p <= 100.0:
        raise ValueError("p must be in [0, 100]")
    pos = (s.size - 1) * p / 100.0
    lo = int(math.floor(pos))
    if lo == s.size - 1:
        return float(s[-1])
    frac = pos - lo
    return float(s[lo] + frac * (s[lo + 1] - s[lo]))


@dataclass
class EvalReport:
    """Per-method error samples with their percentile and CDF summaries."""

    method: str
    errors_cm: np.ndarray
    mae_cm: float
    percentiles: dict
    cdf_errors: np.ndarray
    cdf_fractions: np.ndarray
    meta: dict = field(default_factory=dict)


def build_report(method: str, errors_cm, meta: dict | None = None) -> EvalReport:
    errors = np.asarray(errors_cm, dtype=float)
    if errors.size == 0:
        raise EmptySamples(f"no error samples for method {method}")
    sorted_errors = np.sort(errors)
    fractions = np.arange(1, errors.size + 1) / errors.size
    return EvalReport(
        method=method,
        errors_cm=errors,
        mae_cm=float(np.mean(np.abs(errors))),
        percentiles={p: percentile(errors, p) for p in (50, 90, 95)},
        cdf_errors=sorted_errors,
        cdf_fractions=fractions,
        meta=dict(meta or {}),
    )


# ---------------------------------------------------------------------------
# Report files (deterministic text; repr floats)

def write_report(path, report: EvalReport) -> None:
    with open(path, "w") as fh:
        fh.write("# uwbpos-eval v1\n")
        fh.write(f"# percentile_convention = {PERCENTILE_CONVENTION}\n")
        fh.write(f"method = {report.method}\n")
        for key in sorted(report.meta):
            fh.write(f"{key} = {report.meta[key]}\n")
        fh.write(f"n = {report.errors_cm.size}\n")
        fh.write(f"mae_cm = {report.mae_cm!r}\n")
        for p in sorted(report.percentiles):
            fh.write(f"p{p}_cm = {report.percentiles[p]!r}\n")
        fh.write("cdf:\n")
        for err, frac in zip(report.cdf_errors, report.cdf_fractions):
            fh.write(f"{err!r} {frac!r}\n")


def read_report(path) -> EvalReport:
    meta = {}
    method = None
    errors = []
    with open(path) as fh:
        in_cdf = False
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line == "cdf:":
                in_cdf = True
                continue
            if in_cdf:
                errors.append(float(line.split()[0]))
            elif "=" in line:
                key, value = (part.strip() for part in line.split("=", 1))
                if key == "method":
                    method = value
                elif key not in ("n", "mae_cm") and not key.startswith("p"):
                    meta[key] = value
    return build_report(method or "unknown", np.array(errors), meta)


# ---------------------------------------------------------------------------
# Ranging evaluation

@dataclass
class RangingArtifacts:
    peak: PeakParams | None = None
    lde: LdeParams | None = None
    ann_toa: ToaEstimator | None = None


def ranging_errors_cm(
    dataset: ToaDataset,
    idx,
    method: str,
    artifacts: RangingArtifacts,
    k: PhysConstants = PhysConstants(),
) -> np.ndarray:
    """|estimated range - true range| per selected record, in cm."""
    windows = [dataset.windows[i] for i in idx]
    labels_rel = dataset.labels[idx]
    values = np.stack([w.values for w in windows])
    if method == "Peak":
        if artifacts.peak is None:
            raise MissingArtifacts("Peak evaluation needs tuned PeakParams")
        est_rel = estimate_batch("peak", values, artifacts.peak)
    elif method == "LDE":
        if artifacts.lde is None:
            raise MissingArtifacts("LDE evaluation needs tuned LdeParams")
        est_rel = estimate_batch("lde", values, artifacts.lde)
    elif method == "ANN_ToA":
        if artifacts.ann_toa is None:
            raise MissingArtifacts("ANN_ToA evaluation needs a trained model")
        est_rel = artifacts.ann_toa.predict(values[:, None, :])
    else:
        raise ValueError(f"unknown ranging method {method!r}")
    # A detector failure (NaN) is charged the full window span.
    est_rel = np.where(np.isnan(est_rel), labels_rel + FAILURE_PENALTY, est_rel)
    est_abs = np.array([w.to_absolute(e) for w, e in zip(windows, est_rel)])
    true_abs = np.array([w.to_absolute(l) for w, l in zip(windows, labels_rel)])
    return np.abs(toa_to_range(est_abs, k) - toa_to_range(true_abs, k))


def run_ranging_eval(
    records,
    plan: SplitPlan,
    rep: int,
    artifacts: RangingArtifacts,
    methods=RANGING_METHODS,
    k: PhysConstants = PhysConstants(),
    env: str | None = None,
) -> dict:
    """Test-split ranging error report per method for one repetition."""
    if env is not None:
        records = [r for r in records if r.env_id == env]
    dataset = make_toa_dataset(records, k)
    _, _, test_idx = split(len(dataset.windows), plan, rep)
    reports = {}
    for method in methods:
        errors = ranging_errors_cm(dataset, test_idx, method, artifacts, k)
        reports[method] = build_report(
            method,
            errors,
            meta={"task": "ranging", "env": env or "all", "rep": rep},
        )
    return reports


# ---------------------------------------------------------------------------
# Positioning evaluation

@dataclass
class PositioningArtifacts:
    peak: PeakParams | None = None
    lde: LdeParams | None = None
    ann_toa: ToaEstimator | None = None
    ann_fp: FpEstimator | None = None


def _toa_method_position(
    fp_set, anchor_positions, estimator_kind, artifacts, k, solver_cfg, init_mode
):
    toas = []
    anchor_pos = []
    for window, aid in zip(fp_set.windows, fp_set.anchor_ids):
        if window.norm_factor == 1.0 and not window.values.any():
            continue  # zero channel from an incomplete group
        values = window.values
        if estimator_kind == "peak":
            rel = estimate_batch("peak", values, artifacts.peak)[0]
        elif estimator_kind == "lde":
            rel = estimate_batch("lde", values, artifacts.lde)[0]
        else:
            rel = float(artifacts.ann_toa.predict(values[None, None, :])[0])
        if np.isnan(rel):
            continue
        toas.append(window.to_absolute(rel))
        anchor_pos.append(anchor_positions[aid])
    return position_from_toas(toas, anchor_pos, k, solver_cfg, init_mode)


def positioning_errors_cm(
    fp_sets,
    anchor_positions: dict,
    method: str,
    artifacts: PositioningArtifacts,
    k: PhysConstants = PhysConstants(),
    solver_cfg: SolverConfig = SolverConfig(),
) -> np.ndarray:
    """Per-set 2-norm positioning error for one method, in cm.

    ``anchor_positions`` maps anchor_id -> Position2D. Sets with fewer than
    three usable ToAs are skipped.
    """
    errors = []
    if method == "ANN_FP":
        if artifacts.ann_fp is None:
            raise MissingArtifacts("ANN_FP evaluation needs a trained model")
        for s in fp_sets:
            est = estimate_position_fp(artifacts.ann_fp, s)
            errors.append(positioning_error(est, s.position))
        return np.array(errors)

    estimator_name, _, solver_name = method.partition("+")
    kind = estimator_name.lower().replace("ann_toa", "ann")
    if kind == "peak" and artifacts.peak is None:
        raise MissingArtifacts("Peak positioning needs tuned PeakParams")
    if kind == "lde" and artifacts.lde is None:
        raise MissingArtifacts("LDE positioning needs tuned LdeParams")
    if kind == "ann" and artifacts.ann_toa is None:
        raise MissingArtifacts("ANN_ToA positioning needs a trained model")
    init_mode = _INIT_MODES[solver_name]
    for s in fp_sets:
        try:
            fix = _toa_method_position(
                s, anchor_positions, kind, artifacts, k, solver_cfg, init_mode
            )
        except TooFewAnchors:
            continue
        errors.append(positioning_error(fix.position, s.position))
    return np.array(errors)


def run_positioning_eval(
    records,
    plan: SplitPlan,
    rep: int,
    artifacts: PositioningArtifacts,
    methods=POSITIONING_METHODS,
    k: PhysConstants = PhysConstants(),
    solver_cfg: SolverConfig = SolverConfig(),
    env: str | None = None,
) -> dict:
    """Test-split positioning error report per method for one repetition.

    The split is over fingerprint sets so every method sees the same held-out
    tag points.
    """
    if env is not None:
        records = [r for r in records if r.env_id == env]
    fp = make_fp_dataset(records)
    _, _, test_idx = split(len(fp.sets), plan, rep)
    test_sets = [fp.sets[i] for i in test_idx]
    anchor_positions = {r.anchor_id: r.anchor_pos for r in records}
    reports = {}
    for method in methods:
        errors = positioning_errors_cm(
            test_sets, anchor_positions, method, artifacts, k, solver_cfg
        )
        reports[method] = build_report(
            method,
            errors,
            meta={"task": "positioning", "env": env or "all", "rep": rep},
        )
    return reports


# ---------------------------------------------------------------------------
# Aggregation across repetitions

def aggregate_p90(reports_by_rep) -> tuple[float, np.ndarray]:
    """Mean of per-repetition 90th percentiles plus the pooled samples."""
    p90s = [r.percentiles[90] for r in reports_by_rep]
    pooled = np.concatenate([r.errors_cm for r in reports_by_rep])
    return float(np.mean(p90s)), pooled
