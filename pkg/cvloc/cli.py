from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import List, Optional

import numpy as np
import typer
from rich.console import Console

from .bench.engine import BenchEngine, render_sweep, rotation_sweep
from .bench.metrics import aggregate, evaluate_pose_lists, load_pose_csv, save_pose_csv
from .bench.synth import random_match_set, trial_rng
from .config import AppConfig, load_config
from .core.exceptions import ConfigError, CvlocError, DataError, UsageError
from .flow.argmax import ArgmaxOperator, ArgmaxParams
from .flow.base import FlowTrace
from .flow.estimator import estimate_flow
from .flow.gru import GruOperator, GruParams, GruWeights
from .geometry.camera import BevGrid, CameraModel
from .geometry.presets import get_preset, satellite_size_px
from .geometry.projection import project_ground_features
from .geometry.se2 import Se2Pose, load_pose
from .logging_setup import setup_logging
from .manifest import RunManifest, write_json, write_manifest
from .refine import RefineWeights, refine_block
from .solver.gradients import GradcheckReport, gradcheck as audit_gradients
from .solver.matches import MatchSet, flow_to_matches, load_matches_csv
from .solver.procrustes import solve_pose, solve_pose_closed_form, solve_translation_only
from .supervision import gt_flow, total_loss
from .tensor.feature_map import FeatureMap
from .tensor.io import load_feature_map, load_flow, load_weights, save_feature_map, save_flow

app = typer.Typer(add_completion=False, help="Dense-flow cross-view camera localization toolkit.")
log = logging.getLogger(__name__)
stderr = Console(stderr=True)

GRADCHECK_FAILED = 3


# =========================
# Helpers
# =========================

def _cfg(ctx: typer.Context) -> AppConfig:
    return ctx.obj


def _is_parser_error(e: Exception) -> bool:
    # typer may raise click exceptions from its own vendored copy, so match on shape
    return isinstance(getattr(e, "exit_code", None), int) and callable(getattr(e, "show", None))


def _given(value, default):
    return value if value is not None else default


def _out_dir(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


def _emit(data: dict) -> None:
    typer.echo(json.dumps(data, sort_keys=True, indent=2))


def _manifest(ctx: typer.Context, command: str, out: Path, inputs: dict, outputs: dict, options: dict, seed: Optional[int] = None) -> None:
    manifest = RunManifest(
        command=command,
        seed=seed,
        inputs={k: str(v) for k, v in inputs.items() if v is not None},
        outputs=outputs,
        options=options,
        config=_cfg(ctx).model_dump(mode="json"),
    )
    write_manifest(manifest, out)


def _load_mask(path: Optional[Path]) -> Optional[np.ndarray]:
    if path is None:
        return None
    fm = load_feature_map(path)
    if fm.channels != 1 or not np.all((fm.data == 0.0) | (fm.data == 1.0)):
        raise DataError(f"{path}: mask must be a 1-channel map of 0/1 values")
    return fm.data[..., 0].astype(np.uint8)


def _grid(cfg: AppConfig, grid: Optional[Path], preset: Optional[str]) -> BevGrid:
    if grid is not None:
        return BevGrid.load(grid)
    name = _given(preset, cfg.geometry.preset)
    if name is None:
        raise UsageError("either --grid or --preset is required")
    p = get_preset(name)
    height = cfg.geometry.height_m or p.camera_height_m
    if height is None:
        raise ConfigError(f"preset {name!r} has no camera height; set geometry.height_m")
    return BevGrid.centered(satellite_size_px(p), p.meters_per_pixel, height)


def _operator(cfg: AppConfig, name: str, weights: Optional[Path], context: Optional[FeatureMap]):
    if name == "argmax":
        return ArgmaxOperator(ArgmaxParams(temperature=cfg.flow.temperature))
    if name == "gru":
        if weights is None:
            raise UsageError("--weights is required for --operator gru")
        return GruOperator(GruWeights.from_store(load_weights(weights)), GruParams(radius=cfg.correlation.radius), context)
    raise UsageError(f"unknown operator {name!r}; choose argmax or gru")


@app.callback()
def main(
    ctx: typer.Context,
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="YAML config; defaults are used when omitted."),
    log_level: Optional[str] = typer.Option(None, "--log-level"),
):
    cfg = load_config(config)
    if log_level:
        cfg.runtime.log_level = log_level
    setup_logging(cfg.runtime.log_level)
    ctx.obj = cfg


# =========================
# Pipeline stages
# =========================

@app.command()
def project(
    ctx: typer.Context,
    features: Path = typer.Option(..., "--features", help="Ground-image feature map (CVFM)."),
    camera: Path = typer.Option(..., "--camera", help="Camera JSON."),
    grid: Optional[Path] = typer.Option(None, "--grid", help="BEV grid JSON."),
    preset: Optional[str] = typer.Option(None, "--preset"),
    stride: Optional[int] = typer.Option(None, "--stride", min=1, help="Feature stride (default 8)."),
    out_dir: Path = typer.Option(..., "--out-dir"),
):
    """Project ground features onto the BEV grid (bev.cvfm + mask.cvfm)."""
    cfg = _cfg(ctx)
    g = _grid(cfg, grid, preset)
    s = _given(stride, cfg.geometry.feature_stride)
    bev, vis = project_ground_features(load_feature_map(features), CameraModel.load(camera), g, s)

    out = _out_dir(out_dir)
    save_feature_map(bev, out / "bev.cvfm")
    save_feature_map(FeatureMap(vis[..., None].astype(np.float64)), out / "mask.cvfm")
    _manifest(ctx, "project", out, {"features": features, "camera": camera, "grid": grid},
              {"bev": "bev.cvfm", "mask": "mask.cvfm"}, {"stride": s, "preset": preset})
    log.info("projected %d/%d visible cells to %s", int(vis.sum()), vis.size, out)


@app.command()
def refine(
    ctx: typer.Context,
    bev: Path = typer.Option(..., "--bev"),
    weights: Path = typer.Option(..., "--weights", help="CVWT file with refine.* tensors."),
    out_dir: Path = typer.Option(..., "--out-dir"),
):
    """Run the RefineBlock over a projected BEV map."""
    w = RefineWeights.from_store(load_weights(weights))
    refined = refine_block(load_feature_map(bev), w)
    out = _out_dir(out_dir)
    save_feature_map(refined, out / "refined.cvfm")
    _manifest(ctx, "refine", out, {"bev": bev, "weights": weights}, {"refined": "refined.cvfm"}, {})
    log.info("refined map %s written to %s", refined.shape, out)


@app.command()
def flow(
    ctx: typer.Context,
    bev: Path = typer.Option(..., "--bev", help="Refined BEV features (CVFM)."),
    sat: Path = typer.Option(..., "--sat", help="Satellite features (CVFM)."),
    mask: Optional[Path] = typer.Option(None, "--mask", help="Visibility mask (1-channel CVFM)."),
    operator: Optional[str] = typer.Option(None, "--operator", help="argmax or gru."),
    iters: Optional[int] = typer.Option(None, "--iters", min=1, help="Update iterations (default 12)."),
    weights: Optional[Path] = typer.Option(None, "--weights", help="GRU weights (CVWT)."),
    context: Optional[Path] = typer.Option(None, "--context", help="Context features for the GRU (CVFM)."),
    trace_dir: Optional[Path] = typer.Option(None, "--trace-dir", help="Also write every iterate as iter_XX.cvfl."),
    out_dir: Path = typer.Option(..., "--out-dir"),
):
    """Estimate dense BEV→satellite flow."""
    cfg = _cfg(ctx)
    name = _given(operator, cfg.flow.operator)
    n_iters = _given(iters, cfg.flow.iters)
    ctx_map = load_feature_map(context) if context is not None else None
    op = _operator(cfg, name, weights, ctx_map)

    trace = estimate_flow(load_feature_map(bev), load_feature_map(sat), op, n_iters, _load_mask(mask), cfg.correlation.levels)

    out = _out_dir(out_dir)
    save_flow(trace.final, out / "flow.cvfl")
    outputs = {"flow": "flow.cvfl"}
    if trace_dir is not None:
        tdir = _out_dir(trace_dir)
        for i, it in enumerate(trace.iterations, start=1):
            save_flow(it, tdir / f"iter_{i:02d}.cvfl")
        outputs["trace"] = str(tdir)
    _manifest(ctx, "flow", out, {"bev": bev, "sat": sat, "mask": mask, "weights": weights, "context": context},
              outputs, {"operator": name, "iters": n_iters, "levels": cfg.correlation.levels})
    log.info("%s flow over %d iterations written to %s", name, n_iters, out)


@app.command()
def gtflow(
    ctx: typer.Context,
    pose: Path = typer.Option(..., "--pose", help="Ground-truth pose JSON."),
    grid: Optional[Path] = typer.Option(None, "--grid"),
    preset: Optional[str] = typer.Option(None, "--preset"),
    mask: Optional[Path] = typer.Option(None, "--mask"),
    sat_size: Optional[int] = typer.Option(None, "--sat-size", help="Satellite map edge in px; cells mapped outside become invisible."),
    out_dir: Path = typer.Option(..., "--out-dir"),
):
    """Ground-truth flow field of a pose."""
    g = _grid(_cfg(ctx), grid, preset)
    gt_field = gt_flow(load_pose(pose), g, _load_mask(mask), (sat_size, sat_size) if sat_size else None)
    out = _out_dir(out_dir)
    save_flow(gt_field, out / "gt.cvfl")
    _manifest(ctx, "gtflow", out, {"pose": pose, "grid": grid, "mask": mask}, {"gt": "gt.cvfl"}, {"sat_size": sat_size})


@app.command()
def solve(
    ctx: typer.Context,
    matches: Optional[Path] = typer.Option(None, "--matches", help="Matches CSV (px,py,qx,qy,s)."),
    flow_path: Optional[Path] = typer.Option(None, "--flow", help="Flow field (CVFL)."),
    grid: Optional[Path] = typer.Option(None, "--grid"),
    mpp: Optional[float] = typer.Option(None, "--mpp", help="Meters per pixel (default: grid, else 1)."),
    closed_form: bool = typer.Option(False, "--closed-form", help="Use the atan2 closed form instead of the SVD."),
    theta: Optional[float] = typer.Option(None, "--theta", help="Known orientation in radians; solve translation only."),
    out_dir: Optional[Path] = typer.Option(None, "--out-dir"),
):
    """Weighted least-squares pose from matches."""
    if (matches is None) == (flow_path is None):
        raise UsageError("give exactly one of --matches or --flow")
    g = BevGrid.load(grid) if grid is not None else None
    m: MatchSet = load_matches_csv(matches) if matches is not None else flow_to_matches(load_flow(flow_path), g)

    if theta is not None:
        res = solve_translation_only(m, theta, g, mpp)
    elif closed_form:
        res = solve_pose_closed_form(m, g, mpp)
    else:
        res = solve_pose(m, g, mpp)
    scale = mpp if mpp is not None else (g.meters_per_pixel if g is not None else 1.0)
    data = res.to_json(scale)
    _emit(data)

    if out_dir is not None:
        out = _out_dir(out_dir)
        write_json(data, out / "pose.json")
        _manifest(ctx, "solve", out, {"matches": matches, "flow": flow_path, "grid": grid},
                  {"pose": "pose.json"}, {"mpp": mpp, "closed_form": closed_form, "theta": theta})
    log.info("θ = %.6f rad, t = (%.4f, %.4f) px, residual %.6g", res.pose.theta, res.pose.tu, res.pose.tv, res.diagnostics.residual)


@app.command()
def loss(
    ctx: typer.Context,
    trace_dir: Optional[Path] = typer.Option(None, "--trace-dir", help="Directory of iter_XX.cvfl iterates."),
    flow_path: Optional[Path] = typer.Option(None, "--flow", help="Single flow iterate (CVFL)."),
    gt: Path = typer.Option(..., "--gt", help="Ground-truth flow (CVFL)."),
    pose_pred: Path = typer.Option(..., "--pose-pred"),
    pose_gt: Path = typer.Option(..., "--pose-gt"),
    epoch: int = typer.Option(0, "--epoch", help="Epoch selecting κ and β from the schedule."),
    out_dir: Optional[Path] = typer.Option(None, "--out-dir"),
):
    """Evaluate the training objective on a flow trace."""
    if (trace_dir is None) == (flow_path is None):
        raise UsageError("give exactly one of --trace-dir or --flow")
    if trace_dir is not None:
        files = sorted(trace_dir.glob("iter_*.cvfl"))
        if not files:
            raise DataError(f"{trace_dir}: no iter_*.cvfl files")
        trace = FlowTrace([load_flow(f) for f in files])
    else:
        trace = FlowTrace([load_flow(flow_path)])

    report = total_loss(trace, load_flow(gt), load_pose(pose_pred), load_pose(pose_gt), _cfg(ctx).schedule, epoch)
    data = report.to_json()
    _emit(data)
    if out_dir is not None:
        out = _out_dir(out_dir)
        write_json(data, out / "loss.json")
        _manifest(ctx, "loss", out, {"trace_dir": trace_dir, "flow": flow_path, "gt": gt, "pose_pred": pose_pred, "pose_gt": pose_gt},
                  {"loss": "loss.json"}, {"epoch": epoch})


# =========================
# Benchmarks / audits
# =========================

@app.command("synth-bench")
def synth_bench(
    ctx: typer.Context,
    trials: Optional[int] = typer.Option(None, "--trials", min=1),
    seed: Optional[int] = typer.Option(None, "--seed"),
    workers: Optional[int] = typer.Option(None, "--workers", min=1),
    preset: Optional[str] = typer.Option(None, "--preset", help="Take meters-per-pixel from a dataset preset."),
    operator: Optional[str] = typer.Option(None, "--operator"),
    weights: Optional[Path] = typer.Option(None, "--weights"),
    iters: Optional[int] = typer.Option(None, "--iters", min=1),
    rotation_deg: Optional[List[float]] = typer.Option(
        None, "--rotation-deg", help="Sweep the orientation prior (degrees); repeat once per value."
    ),
    out_dir: Optional[Path] = typer.Option(None, "--out-dir"),
):
    """Localize seeded synthetic scenes end to end and report metrics in m and px."""
    cfg = _cfg(ctx)
    updates = {k: v for k, v in {"trials": trials, "seed": seed}.items() if v is not None}
    name = _given(preset, cfg.geometry.preset)
    if name is not None:
        updates["meters_per_pixel"] = get_preset(name).meters_per_pixel
    scfg = cfg.synth.model_copy(update=updates)

    engine = BenchEngine(
        scfg,
        _operator(cfg, _given(operator, cfg.flow.operator), weights, None),
        iters=_given(iters, cfg.flow.iters),
        num_levels=cfg.correlation.levels,
        thresholds=cfg.eval,
        workers=_given(workers, cfg.runtime.workers),
    )
    if rotation_deg:
        _sweep(ctx, engine, rotation_deg, out_dir)
        return

    report = engine.run()
    data = report.to_json()
    _emit(data)
    if report.table_m is not None:
        stderr.print(report.table_m.render("Synthetic bench, meters"))
        stderr.print(report.table_px.render("Synthetic bench, BEV pixels"))

    if out_dir is not None:
        out = _out_dir(out_dir)
        write_json(data, out / "metrics.json")
        gt_poses = {f"{o.trial:05d}": Se2Pose(o.pose_gt["theta_rad"], o.pose_gt["tu_px"], o.pose_gt["tv_px"]) for o in report.outcomes}
        pred_poses = {
            f"{o.trial:05d}": Se2Pose(o.pose_pred["theta_rad"], o.pose_pred["tu_px"], o.pose_pred["tv_px"])
            for o in report.outcomes if o.pose_pred is not None
        }
        save_pose_csv(gt_poses, out / "gt_poses.csv")
        save_pose_csv(pred_poses, out / "pred_poses.csv")
        _manifest(ctx, "synth-bench", out, {}, {"metrics": "metrics.json", "gt_poses": "gt_poses.csv", "pred_poses": "pred_poses.csv"},
                  {"synth": scfg.model_dump(mode="json"), "operator": engine.operator.name, "iters": engine.iters}, seed=scfg.seed)


def _sweep(ctx: typer.Context, engine: BenchEngine, rotations: List[float], out_dir: Optional[Path]) -> None:
    points = rotation_sweep(engine, rotations)
    data = {"sweep": [p.to_json() for p in points]}
    _emit(data)
    stderr.print(render_sweep(points))
    if out_dir is not None:
        out = _out_dir(out_dir)
        write_json(data, out / "sweep.json")
        _manifest(ctx, "synth-bench", out, {}, {"sweep": "sweep.json"},
                  {"synth": engine.cfg.model_dump(mode="json"), "operator": engine.operator.name, "iters": engine.iters,
                   "rotation_deg": [p.rotation_deg for p in points]}, seed=engine.cfg.seed)


@app.command("eval")
def eval_poses(
    ctx: typer.Context,
    pred: Path = typer.Option(..., "--pred", help="Predicted pose list CSV (id,theta_rad,tu_px,tv_px)."),
    gt: Path = typer.Option(..., "--gt", help="Ground-truth pose list CSV."),
    grid: Optional[Path] = typer.Option(None, "--grid", help="BEV grid JSON (anchor and meters per pixel)."),
    mpp: Optional[float] = typer.Option(None, "--mpp"),
    out_dir: Optional[Path] = typer.Option(None, "--out-dir"),
):
    """Error decomposition and recall table for pose lists."""
    cfg = _cfg(ctx)
    g = BevGrid.load(grid) if grid is not None else None
    scale = mpp if mpp is not None else (g.meters_per_pixel if g is not None else 1.0)
    records = evaluate_pose_lists(load_pose_csv(pred), load_pose_csv(gt), g, scale)
    table = aggregate(records, cfg.eval, unit="m" if (g is not None or mpp is not None) else "px")
    data = table.to_json()
    _emit(data)
    stderr.print(table.render())
    if out_dir is not None:
        out = _out_dir(out_dir)
        write_json(data, out / "metrics.json")
        _manifest(ctx, "eval", out, {"pred": pred, "gt": gt, "grid": grid}, {"metrics": "metrics.json"}, {"mpp": scale})


@app.command("gradcheck")
def gradcheck_cmd(
    ctx: typer.Context,
    seed: int = typer.Option(0, "--seed"),
    n: int = typer.Option(100, "--n", min=1, help="Number of random match sets."),
    points: int = typer.Option(30, "--points", help="Matches per set."),
    out_dir: Optional[Path] = typer.Option(None, "--out-dir"),
):
    """Audit analytic pose gradients against central finite differences."""
    if n < 1 or points < 3:
        raise UsageError("--n must be >= 1 and --points >= 3")
    total = GradcheckReport()
    for i in range(n):
        total.merge(audit_gradients(random_match_set(trial_rng(seed, i), points)))
    data = total.to_json()
    _emit(data)
    if out_dir is not None:
        out = _out_dir(out_dir)
        write_json(data, out / "gradcheck.json")
        _manifest(ctx, "gradcheck", out, {}, {"report": "gradcheck.json"}, {"n": n, "points": points}, seed=seed)

    if total.passed:
        log.info("gradient audit passed: worst relative error %.3g over %d sets", total.worst, total.sets)
    else:
        log.error("gradient audit failed: worst relative error %.3g (tolerance %.0e)", total.worst, total.rtol)
        raise typer.Exit(code=GRADCHECK_FAILED)


# =========================
# Entry point
# =========================

def run(argv: Optional[List[str]] = None) -> int:
    """Run the CLI and map failures to exit codes (1 usage, 2 data, 3 numerical)."""
    try:
        result = app(args=argv, standalone_mode=False)
    except typer.Abort:
        return 1
    except CvlocError as e:
        typer.echo(f"error: {e}", err=True)
        return e.exit_code
    except OSError as e:
        typer.echo(f"error: {e}", err=True)
        return DataError.exit_code
    except Exception as e:
        if not _is_parser_error(e):
            raise
        e.show()
        return UsageError.exit_code
    return result if isinstance(result, int) else 0
