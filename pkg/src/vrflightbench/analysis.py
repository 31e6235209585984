"""Per-trial flight metrics, Fitts-style regression, balanced two-way ANOVA,
and report emission (CSV, structured JSON, plot data series)."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .logfile import TrialLog, find_logs, read_log
from .sim import Vec3
from .tasks import KINDS, MODES

METRIC_NAMES = ("completion_time", "mean_speed", "mean_accel", "mean_jerk", "trajectory_area")

ANOVA_ROWS = ("mode", "id", "mode_x_id", "error")

# Convergence target for the incomplete-beta continued fraction.
_BETACF_TOL = 1e-10
_BETACF_TINY = 1e-300


class DesignError(ValueError):
    """The dataset cannot support the requested statistical procedure."""


# ---------------------------------------------------------------------------
# F distribution upper tail via the regularized incomplete beta function.


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _BETACF_TINY:
        d = _BETACF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, 400):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETACF_TINY:
            d = _BETACF_TINY
        c = 1.0 + aa / c
        if abs(c) < _BETACF_TINY:
            c = _BETACF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETACF_TINY:
            d = _BETACF_TINY
        c = 1.0 + aa / c
        if abs(c) < _BETACF_TINY:
            c = _BETACF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETACF_TOL:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def reg_inc_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if not (a > 0.0 and b > 0.0):
        raise ValueError("beta parameters must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    front = math.exp(
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_upper_tail(f_value: float, df1: int, df2: int) -> float:
    """P(F > f) for an F(df1, df2) variate."""
    if df1 <= 0 or df2 <= 0:
        raise ValueError("degrees of freedom must be positive")
    if math.isnan(f_value):
        return math.nan
    if f_value <= 0.0:
        return 1.0
    x = df2 / (df2 + df1 * f_value)
    return reg_inc_beta(df2 / 2.0, df1 / 2.0, x)


# ---------------------------------------------------------------------------
# Core metric operations.


def derive_jerk(acc_samples: Sequence[Vec3], dt: float) -> list[float]:
    """Jerk magnitudes |(a_{k+1} - a_k)| / dt over consecutive pairs."""
    if len(acc_samples) < 2:
        raise ValueError("need at least two acceleration samples")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    return [(b - a).norm() / dt for a, b in zip(acc_samples, acc_samples[1:])]


def trajectory_area(positions: Sequence[Vec3], approach_axis: Vec3 = Vec3(1.0, 0.0, 0.0)) -> float:
    """Dispersion rectangle in the approach-vertical plane.

    Positions are projected onto (approach axis, z); the rectangle extends
    three per-axis population standard deviations each side of the centroid,
    so its area is (6 sigma_u) * (6 sigma_w).
    """
    if len(positions) < 2:
        raise ValueError("need at least two positions")
    norm = approach_axis.norm()
    if norm == 0.0:
        raise ValueError("approach axis must be non-zero")
    axis = approach_axis.scale(1.0 / norm)
    u = np.array([p.dot(axis) for p in positions])
    w = np.array([p.z for p in positions])
    return float(36.0 * u.std() * w.std())


@dataclass(frozen=True)
class FittsFit:
    intercept: float  # a, s
    slope: float      # b, s/bit
    r_squared: float
    n_points: int


def fitts_regression(points: Sequence[tuple[float, float]]) -> FittsFit:
    """Ordinary least squares for MT = a + b * ID."""
    if len(points) < 2:
        raise DesignError("need at least two (ID, MT) points")
    ids = np.array([p[0] for p in points], dtype=float)
    mts = np.array([p[1] for p in points], dtype=float)
    if np.unique(ids).size < 2:
        raise DesignError("all difficulty indices are equal: regression is rank-deficient")
    id_mean = float(ids.mean())
    mt_mean = float(mts.mean())
    sxx = float(((ids - id_mean) ** 2).sum())
    sxy = float(((ids - id_mean) * (mts - mt_mean)).sum())
    slope = sxy / sxx
    intercept = mt_mean - slope * id_mean
    ss_res = float(((mts - (intercept + slope * ids)) ** 2).sum())
    ss_tot = float(((mts - mt_mean) ** 2).sum())
    if ss_tot == 0.0:
        r_squared = 1.0 if ss_res == 0.0 else 0.0
    else:
        r_squared = 1.0 - ss_res / ss_tot
    return FittsFit(intercept=intercept, slope=slope, r_squared=r_squared, n_points=len(points))


@dataclass(frozen=True)
class AnovaRow:
    name: str
    ss: float
    df: int
    ms: float
    f: float
    p: float


@dataclass(frozen=True)
class AnovaTable:
    rows: tuple[AnovaRow, ...]
    degenerate: bool = False

    def row(self, name: str) -> AnovaRow:
        for row in self.rows:
            if row.name == name:
                return row
        raise KeyError(name)

    def to_dict(self) -> dict:
        def num(x: float):
            return None if math.isnan(x) else x

        return {
            "degenerate": self.degenerate,
            "rows": [
                {"name": r.name, "SS": r.ss, "df": r.df, "MS": r.ms, "F": num(r.f), "p": num(r.p)}
                for r in self.rows
            ],
        }


def two_way_anova(cells: Sequence[Sequence[Sequence[float]]]) -> AnovaTable:
    """Balanced two-way ANOVA with interaction over cells[a][b] -> replicates.

    Standard decomposition: SS_total = SS_A + SS_B + SS_AB + SS_error, with
    F = MS_factor / MS_error and p the upper tail of the matching F
    distribution.  A zero error mean square flags the table degenerate and
    reports F and p as NaN.
    """
    a_levels = len(cells)
    if a_levels < 2:
        raise DesignError("need at least two levels of the first factor")
    b_levels = len(cells[0])
    if b_levels < 2 or any(len(row) != b_levels for row in cells):
        raise DesignError("ragged factor grid")
    r = len(cells[0][0])
    for row in cells:
        for cell in row:
            if len(cell) != r:
                raise DesignError("unbalanced design: unequal cell sizes")
            for value in cell:
                if not math.isfinite(value):
                    raise DesignError("non-finite observation")
    if r < 2:
        raise DesignError("need at least two replicates per cell")

    grand = sum(sum(sum(cell) for cell in row) for row in cells) / (a_levels * b_levels * r)
    cell_means = [[sum(cell) / r for cell in row] for row in cells]
    a_means = [sum(row) / b_levels for row in cell_means]
    b_means = [sum(cell_means[i][j] for i in range(a_levels)) / a_levels for j in range(b_levels)]

    ss_a = b_levels * r * sum((m - grand) ** 2 for m in a_means)
    ss_b = a_levels * r * sum((m - grand) ** 2 for m in b_means)
    ss_ab = r * sum(
        (cell_means[i][j] - a_means[i] - b_means[j] + grand) ** 2
        for i in range(a_levels)
        for j in range(b_levels)
    )
    ss_err = sum(
        (value - cell_means[i][j]) ** 2
        for i in range(a_levels)
        for j in range(b_levels)
        for value in cells[i][j]
    )

    df_a = a_levels - 1
    df_b = b_levels - 1
    df_ab = df_a * df_b
    df_err = a_levels * b_levels * (r - 1)
    ms_err = ss_err / df_err
    degenerate = ms_err == 0.0

    def factor_row(name: str, ss: float, df: int) -> AnovaRow:
        ms = ss / df
        if degenerate:
            return AnovaRow(name, ss, df, ms, math.nan, math.nan)
        f_value = ms / ms_err
        return AnovaRow(name, ss, df, ms, f_value, f_upper_tail(f_value, df, df_err))

    rows = (
        factor_row("mode", ss_a, df_a),
        factor_row("id", ss_b, df_b),
        factor_row("mode_x_id", ss_ab, df_ab),
        AnovaRow("error", ss_err, df_err, ms_err, math.nan, math.nan),
    )
    return AnovaTable(rows=rows, degenerate=degenerate)


# ---------------------------------------------------------------------------
# Trial metrics from logs.


@dataclass(frozen=True)
class TrialMetrics:
    participant: str
    kind: str
    mode: str
    distance: float
    width: float
    id_value: float
    trial_index: int
    outcome: str
    completion_time: Optional[float]
    mean_speed: float
    mean_accel: float
    mean_jerk: float
    trajectory_area: float
    speed_series: tuple[float, ...] = ()
    accel_mag_series: tuple[float, ...] = ()
    jerk_mag_series: tuple[float, ...] = ()
    path: Optional[Path] = None


def trial_metrics(log: TrialLog) -> TrialMetrics:
    header = log.header
    dt = header.session["sim_config"]["dt"]
    samples = log.samples
    speed = tuple(s.vel.norm() for s in samples)
    accs = [s.acc for s in samples[1:]]  # the reset sample carries no step acceleration
    accel = tuple(a.norm() for a in accs)
    jerk = tuple(derive_jerk(accs, dt)) if len(accs) >= 2 else ()
    area = trajectory_area([s.pos for s in samples]) if len(samples) >= 2 else 0.0

    outcome = log.outcome() or "aborted"
    completion_time: Optional[float] = None
    if outcome == "trial_complete":
        for event in log.events:
            if event.kind == "trial_complete":
                completion_time = event.tick * dt
                break

    def mean(series: tuple[float, ...]) -> float:
        return float(np.mean(series)) if series else 0.0

    return TrialMetrics(
        participant=header.session["participant_id"],
        kind=header.condition["kind"],
        mode=header.controller_mode,
        distance=header.condition["D"],
        width=header.condition["W"],
        id_value=header.condition["id"],
        trial_index=header.trial_index,
        outcome="complete" if outcome == "trial_complete" else
                ("failed_collision" if outcome == "trial_failed" else "aborted"),
        completion_time=completion_time,
        mean_speed=mean(speed),
        mean_accel=mean(accel),
        mean_jerk=mean(jerk),
        trajectory_area=area,
        speed_series=speed,
        accel_mag_series=accel,
        jerk_mag_series=jerk,
        path=log.path,
    )


def _metric_value(tm: TrialMetrics, name: str) -> float:
    if name == "completion_time":
        return tm.completion_time if tm.completion_time is not None else math.nan
    return getattr(tm, name)


@dataclass
class KindReport:
    kind: str
    fitts: dict = field(default_factory=dict)        # mode -> FittsFit
    anova: dict = field(default_factory=dict)        # metric -> AnovaTable | None
    aggregates: list = field(default_factory=list)   # per (mode, id) summary dicts
    trial_area_curve: dict = field(default_factory=dict)  # mode -> [per-trial-index relative area]


@dataclass
class AnalysisReport:
    trials: list[TrialMetrics]
    sections: dict  # kind -> KindReport
    warnings: list[str]
    include_failed: bool = False


def summarize(logs: Path | Sequence[Path], include_failed: bool = False) -> AnalysisReport:
    """Turn a directory (or list) of trial logs into a full analysis report.

    Failed and aborted trials are excluded unless include_failed is set; they
    never enter the fits or ANOVA tables either way, since they carry no
    completion time and their trajectories are not comparable.
    """
    paths = find_logs(logs) if isinstance(logs, (str, Path)) else sorted(Path(p) for p in logs)
    warnings: list[str] = []
    all_metrics: list[TrialMetrics] = []
    for path in paths:
        log = read_log(path)
        if log.truncated:
            warnings.append(f"{path}: truncated final record recovered")
        all_metrics.append(trial_metrics(log))

    complete = [m for m in all_metrics if m.outcome == "complete"]
    reported = all_metrics if include_failed else complete

    sections: dict[str, KindReport] = {}
    for kind in KINDS:
        kind_complete = [m for m in complete if m.kind == kind]
        if not kind_complete:
            continue
        section = KindReport(kind=kind)

        for mode in MODES:
            pts = [(m.id_value, m.completion_time) for m in kind_complete if m.mode == mode]
            if len(pts) >= 2 and len({p[0] for p in pts}) >= 2:
                section.fitts[mode] = fitts_regression(pts)
            else:
                warnings.append(f"{kind}/{mode}: not enough coverage for a regression")

        id_levels = sorted({m.id_value for m in kind_complete})
        by_cell: dict[tuple[str, float], list[TrialMetrics]] = {}
        for m in kind_complete:
            by_cell.setdefault((m.mode, m.id_value), []).append(m)

        for mode in MODES:
            for level in id_levels:
                group = by_cell.get((mode, level), [])
                if not group:
                    warnings.append(f"{kind}: no complete trials for {mode} at ID {level:.4f}")
                    continue
                section.aggregates.append({
                    "mode": mode,
                    "id": level,
                    "n": len(group),
                    "D": group[0].distance,
                    "W": group[0].width,
                    "mean_completion_time": float(np.mean([m.completion_time for m in group])),
                    "mean_speed": float(np.mean([m.mean_speed for m in group])),
                    "mean_accel": float(np.mean([m.mean_accel for m in group])),
                    "mean_jerk": float(np.mean([m.mean_jerk for m in group])),
                    "mean_trajectory_area": float(np.mean([m.trajectory_area for m in group])),
                })

        counts = {len(by_cell.get((mode, level), [])) for mode in MODES for level in id_levels}
        balanced = len(counts) == 1 and min(counts) >= 2 and len(id_levels) >= 2
        for metric in METRIC_NAMES:
            if not balanced:
                section.anova[metric] = None
                continue
            cells = [
                [
                    [_metric_value(m, metric) for m in by_cell[(mode, level)]]
                    for level in id_levels
                ]
                for mode in MODES
            ]
            section.anova[metric] = two_way_anova(cells)
        if not balanced:
            warnings.append(f"{kind}: unbalanced cells, ANOVA skipped")

        for mode in MODES:
            by_trial: dict[int, list[float]] = {}
            for m in kind_complete:
                if m.mode == mode:
                    by_trial.setdefault(m.trial_index, []).append(m.trajectory_area)
            if not by_trial:
                continue
            indices = sorted(by_trial)
            means = [float(np.mean(by_trial[i])) for i in indices]
            top = max(means)
            section.trial_area_curve[mode] = [
                {"trial": i, "mean_area": mu, "relative": (mu / top if top > 0.0 else 0.0)}
                for i, mu in zip(indices, means)
            ]

        sections[kind] = section

    return AnalysisReport(
        trials=reported, sections=sections, warnings=warnings, include_failed=include_failed
    )


# ---------------------------------------------------------------------------
# Report emission.


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_metrics_csv(report: AnalysisReport, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "participant", "kind", "mode", "D", "W", "ID", "outcome",
            "completion_time", "mean_speed", "mean_accel", "mean_jerk", "trajectory_area",
        ])
        for m in report.trials:
            writer.writerow([_csv_cell(v) for v in (
                m.participant, m.kind, m.mode, m.distance, m.width, m.id_value, m.outcome,
                m.completion_time, m.mean_speed, m.mean_accel, m.mean_jerk, m.trajectory_area,
            )])


def _fit_dict(fit: FittsFit) -> dict:
    return {"a": fit.intercept, "b": fit.slope, "r_squared": fit.r_squared, "n": fit.n_points}


def report_to_dict(report: AnalysisReport) -> dict:
    return {
        "include_failed": report.include_failed,
        "n_trials": len(report.trials),
        "warnings": report.warnings,
        "kinds": {
            kind: {
                "fitts": {mode: _fit_dict(fit) for mode, fit in section.fitts.items()},
                "anova": {
                    metric: (table.to_dict() if table is not None else None)
                    for metric, table in section.anova.items()
                },
                "aggregates": section.aggregates,
                "trial_area_curve": section.trial_area_curve,
            }
            for kind, section in report.sections.items()
        },
    }


def write_report(report: AnalysisReport, out_dir: Path) -> None:
    """metrics.csv + report.json + plotdata/ series for external plotting."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(report, out_dir / "metrics.csv")

    with open(out_dir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report_to_dict(report), fh, indent=2, sort_keys=True)
        fh.write("\n")

    plot_dir = out_dir / "plotdata"
    plot_dir.mkdir(exist_ok=True)
    for kind, section in report.sections.items():
        with open(plot_dir / f"fitts_{kind}.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["mode", "id", "completion_time"])
            for m in report.trials:
                if m.kind == kind and m.completion_time is not None:
                    writer.writerow([m.mode, repr(m.id_value), repr(m.completion_time)])
            writer.writerow([])
            writer.writerow(["mode", "a", "b", "r_squared"])
            for mode, fit in section.fitts.items():
                writer.writerow([mode, repr(fit.intercept), repr(fit.slope), repr(fit.r_squared)])

        for series_name in ("speed_series", "accel_mag_series", "jerk_mag_series"):
            label = series_name.split("_")[0]
            with open(plot_dir / f"{label}_{kind}.csv", "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(["mode", "id", "value"])
                for m in report.trials:
                    if m.kind != kind:
                        continue
                    for value in getattr(m, series_name):
                        writer.writerow([m.mode, repr(m.id_value), repr(value)])

        with open(plot_dir / f"trial_area_{kind}.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["mode", "trial", "mean_area", "relative"])
            for mode, curve in section.trial_area_curve.items():
                for point in curve:
                    writer.writerow([
                        mode, point["trial"], repr(point["mean_area"]), repr(point["relative"]),
                    ])
