"""
Synthetic localization benchmark: replay seeded scenes through
correlation → iterative flow → weighted solve and score the recovered poses.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

from rich.table import Table

from .metrics import ErrorRecord, MetricsTable, Thresholds, aggregate, localization_errors
from .synth import SynthConfig, gen_scene, trial_rng
from ..core.exceptions import ConfigError, NumericalError
from ..flow.base import UpdateOperator
from ..flow.correlation import DEFAULT_LEVELS
from ..flow.estimator import DEFAULT_ITERS, estimate_flow
from ..geometry.camera import BevGrid
from ..geometry.se2 import pose_to_json
from ..solver.matches import flow_to_matches
from ..solver.procrustes import solve_pose

log = logging.getLogger(__name__)


@dataclass
class TrialOutcome:
    trial: int
    record_m: Optional[ErrorRecord] = None
    record_px: Optional[ErrorRecord] = None
    pose_gt: Optional[dict] = None
    pose_pred: Optional[dict] = None
    error: Optional[str] = None


@dataclass
class BenchReport:
    outcomes: List[TrialOutcome] = field(default_factory=list)
    table_m: Optional[MetricsTable] = None
    table_px: Optional[MetricsTable] = None

    @property
    def failures(self) -> int:
        return sum(1 for o in self.outcomes if o.error is not None)

    def to_json(self) -> dict:
        return {
            "trials": len(self.outcomes),
            "failures": self.failures,
            "metrics_m": self.table_m.to_json() if self.table_m else None,
            "metrics_px": self.table_px.to_json() if self.table_px else None,
        }


class BenchEngine:
    def __init__(
        self,
        cfg: SynthConfig,
        operator: UpdateOperator,
        iters: int = DEFAULT_ITERS,
        num_levels: int = DEFAULT_LEVELS,
        thresholds: Optional[Thresholds] = None,
        workers: int = 1,
    ):
        self.cfg = cfg
        self.operator = operator
        self.iters = iters
        self.num_levels = num_levels
        self.thresholds = thresholds or Thresholds()
        if workers < 1:
            raise ConfigError(f"workers must be >= 1, got {workers}")
        self.workers = workers
        self.grid: BevGrid = cfg.grid()

    def run_trial(self, trial: int) -> TrialOutcome:
        sample = gen_scene(self.cfg, self.grid, trial_rng(self.cfg.seed, trial))
        trace = estimate_flow(sample.f_bev, sample.f_s, self.operator, self.iters, sample.visibility, self.num_levels)
        sid = f"{trial:05d}"
        try:
            res = solve_pose(flow_to_matches(trace.final, self.grid), self.grid)
        except NumericalError as e:
            log.warning("trial %d: solve failed: %s", trial, e)
            return TrialOutcome(trial, pose_gt=pose_to_json(sample.pose), error=str(e))

        rec_m = localization_errors(res, sample.pose, self.grid, self.cfg.meters_per_pixel, sample_id=sid)
        rec_px = localization_errors(res, sample.pose, self.grid, 1.0, sample_id=sid)
        log.debug("trial %d: %.3f px, %.3f°", trial, rec_px.location, rec_px.azimuth_deg)
        return TrialOutcome(trial, rec_m, rec_px, pose_to_json(sample.pose), pose_to_json(res.pose))

    def run(self, trials: Optional[int] = None) -> BenchReport:
        """
        Run trials 0..N-1. Results are collected in trial order whatever the
        worker count, so the report depends only on the config.
        """
        n = trials if trials is not None else self.cfg.trials
        log.info("synthetic bench: %d trials, grid %d px, %s × %d iterations, %d workers",
                 n, self.grid.size, self.operator.name, self.iters, self.workers)

        if self.workers == 1:
            outcomes = [self.run_trial(i) for i in range(n)]
        else:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                outcomes = list(pool.map(self.run_trial, range(n)))

        report = BenchReport(outcomes=outcomes)
        rec_m, rec_px = self._records(outcomes)
        if rec_m:
            report.table_m = aggregate(rec_m, self.thresholds, unit="m", misses=report.failures)
            report.table_px = aggregate(rec_px, self.thresholds, unit="px", misses=report.failures)
            log.info("median position error %.3f px (%.3f m), median azimuth error %.3f°",
                     report.table_px.median_location, report.table_m.median_location, report.table_m.median_azimuth_deg)
        if report.failures:
            log.warning("%d of %d trials failed to solve", report.failures, n)
        return report

    @staticmethod
    def _records(outcomes: List[TrialOutcome]) -> Tuple[List[ErrorRecord], List[ErrorRecord]]:
        ok = [o for o in outcomes if o.error is None]
        return [o.record_m for o in ok], [o.record_px for o in ok]


# =========================
# Orientation-prior sweep
# =========================

@dataclass
class SweepPoint:
    rotation_deg: float
    report: BenchReport

    def to_json(self) -> dict:
        return {"rotation_deg": self.rotation_deg, **self.report.to_json()}


def rotation_sweep(engine: BenchEngine, rotations_deg: Sequence[float]) -> List[SweepPoint]:
    """Rerun the engine's bench once per orientation prior; everything else is held fixed."""
    if not rotations_deg:
        raise ConfigError("rotation sweep needs at least one value")
    points = []
    for deg in rotations_deg:
        if deg < 0:
            raise ConfigError(f"rotation prior must be >= 0 degrees, got {deg}")
        cfg = engine.cfg.model_copy(update={"rotation_deg": float(deg)})
        sub = BenchEngine(cfg, engine.operator, engine.iters, engine.num_levels, engine.thresholds, engine.workers)
        log.info("sweep: rotation prior ±%g°", deg)
        points.append(SweepPoint(float(deg), sub.run()))
    return points


def render_sweep(points: Sequence[SweepPoint], title: str = "Error vs orientation prior") -> Table:
    table = Table(title=title)
    for name in ("Prior ±°", "Trials", "Unsolved", "Median px", "Loc r@1px", "Median az °"):
        table.add_column(name, justify="right")
    for p in points:
        px = p.report.table_px
        m = p.report.table_m
        if px is None:
            table.add_row(f"{p.rotation_deg:g}", str(len(p.report.outcomes)), str(p.report.failures), "-", "-", "-")
            continue
        r1 = px.recall_location.get(1.0)
        table.add_row(
            f"{p.rotation_deg:g}", str(len(p.report.outcomes)), str(p.report.failures),
            f"{px.median_location:.3f}", "-" if r1 is None else f"{r1:.2f}", f"{m.median_azimuth_deg:.3f}",
        )
    return table
