import math

import numpy as np
import pytest

from cvloc.bench.synth import SynthConfig, gen_pose, trial_rng
from cvloc.core.exceptions import DataError, DegenerateInputError, ShapeError
from cvloc.flow.base import FlowField, FlowTrace
from cvloc.geometry.camera import BevGrid
from cvloc.geometry.se2 import Se2Pose, wrap_angle
from cvloc.solver import flow_to_matches, solve_pose
from cvloc.supervision import (
    TrainSchedule,
    confidence_loss,
    flow_errors,
    gt_flow,
    matching_loss,
    position_loss,
    total_loss,
)


def test_gt_flow_quarter_turn():
    field = gt_flow(Se2Pose(math.pi / 2, 3.0, 0.0), (2, 2))
    # cell (x=1, y=0) goes to R(1, 0) + t = (3, 1)
    np.testing.assert_allclose(field.flow[0, 1], [2.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(field.targets()[1, 1], [2.0, 1.0], atol=1e-12)
    assert np.all(field.score == 1.0)


def test_gt_flow_masks_cells_leaving_the_satellite():
    vis = np.ones((2, 2), dtype=np.uint8)
    vis[0, 0] = 0
    field = gt_flow(Se2Pose(0.0, 2.0, 0.0), BevGrid.centered(2, 1.0, 1.0), visibility=vis, sat_shape=(3, 3))
    assert field.visibility.tolist() == [[0, 0], [1, 0]]
    assert field.score.tolist() == [[0.0, 0.0], [1.0, 0.0]]
    assert np.all(field.flow[0, 0] == 0.0) and np.all(field.flow[:, 1] == 0.0)
    assert field.flow[1, 0].tolist() == [2.0, 0.0]
    with pytest.raises(ShapeError):
        gt_flow(Se2Pose(), (2, 2), visibility=np.ones((3, 2)))


def test_gt_flow_round_trips_through_the_solver():
    cfg = SynthConfig(grid_size=16, rotation_deg=45.0, translation_px=20.0)
    grid = cfg.grid()
    for trial in range(100):
        pose = gen_pose(cfg, tuple(grid.anchor_xy), trial_rng(1, trial))
        res = solve_pose(flow_to_matches(gt_flow(pose, grid)))
        assert abs(wrap_angle(res.pose.theta - pose.theta)) < 1e-9
        np.testing.assert_allclose(res.pose.t, pose.t, atol=1e-9)


def flat_field(flow, score=0.5, vis=None):
    h, w = flow.shape[:2]
    return FlowField(flow=flow, score=np.full((h, w), score), visibility=np.ones((h, w)) if vis is None else vis)


def test_matching_loss_examples():
    gt = gt_flow(Se2Pose(0.0, 1.0, 1.0), (2, 3))
    assert matching_loss(gt, gt) == 0.0
    off = gt.flow.copy()
    off[1, 2] += [1.0, -2.0]
    assert matching_loss(flat_field(off), gt) == 3.0

    # errors on cells hidden in either field do not count
    vis = np.ones((2, 3))
    vis[1, 2] = 0
    d, joint = flow_errors(flat_field(off, vis=vis), gt)
    assert not joint[1, 2] and d[1, 2] == 0.0
    with pytest.raises(ShapeError):
        matching_loss(flat_field(np.zeros((3, 3, 2))), gt)


def test_confidence_loss_is_half_per_cell_without_spread():
    rng = np.random.default_rng(0)
    scores = rng.uniform(size=50)
    assert confidence_loss(scores, np.full(50, 3.7), kappa=20.0) == 25.0


def test_confidence_loss_matches_elementwise_formula():
    rng = np.random.default_rng(1)
    s = rng.uniform(size=40)
    d = rng.exponential(2.0, size=40)
    kappa = 0.5
    z = (d - d.mean()) / d.std()
    sig = lambda x: 1.0 / (1.0 + np.exp(-x))
    expected = np.sum(s * sig(z / kappa) + (1 - s) * sig(-z / kappa))
    assert confidence_loss(s, d, kappa) == pytest.approx(expected, abs=1e-9)

    vis = np.ones(40)
    vis[:10] = 0
    zv = (d[10:] - d[10:].mean()) / d[10:].std()
    expected_v = np.sum(s[10:] * sig(zv / kappa) + (1 - s[10:]) * sig(-zv / kappa))
    assert confidence_loss(s, d, kappa, vis) == pytest.approx(expected_v, abs=1e-9)


def test_confident_small_errors_cost_less():
    d = np.array([0.0, 0.0, 10.0, 10.0])
    good = confidence_loss(np.array([1.0, 1.0, 0.0, 0.0]), d, kappa=1.0)
    bad = confidence_loss(np.array([0.0, 0.0, 1.0, 1.0]), d, kappa=1.0)
    assert good < 2.0 < bad


def test_confidence_loss_errors():
    with pytest.raises(DegenerateInputError):
        confidence_loss(np.array([0.5]), np.array([1.0]), kappa=1.0)
    with pytest.raises(DegenerateInputError):
        confidence_loss(np.ones(3), np.ones(3), kappa=1.0, visibility=np.array([1, 0, 0]))
    with pytest.raises(DataError):
        confidence_loss(np.ones(3), np.ones(3), kappa=0.0)
    with pytest.raises(ShapeError):
        confidence_loss(np.ones(3), np.ones(4), kappa=1.0)


def test_position_loss():
    assert position_loss(Se2Pose(0.0, 0.0, 0.0), Se2Pose(0.1, 1.0, -2.0)) == pytest.approx(3.1)
    assert position_loss(Se2Pose(-3.1), Se2Pose(3.1)) == pytest.approx(2 * math.pi - 6.2)


def test_schedule_switches_at_epoch():
    sched = TrainSchedule()
    assert (sched.kappa(14), sched.beta(14)) == (200.0, 1.0)
    assert (sched.kappa(15), sched.beta(15)) == (20.0, 10.0)
    assert sched.alpha == 100.0


def noisy_trace(gt, iters, seed=2):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(iters):
        out.append(FlowField(
            flow=gt.flow + rng.normal(0.0, 1.0, gt.flow.shape),
            score=rng.uniform(size=gt.shape),
            visibility=gt.visibility,
        ))
    return FlowTrace(out)


def test_total_loss_composition():
    gt = gt_flow(Se2Pose(0.2, 1.0, -1.0), (4, 4))
    trace = noisy_trace(gt, 3)
    pred_pose, gt_pose = Se2Pose(0.25, 1.5, -1.0), Se2Pose(0.2, 1.0, -1.0)
    rep = total_loss(trace, gt, pred_pose, gt_pose, epoch=20)
    assert (rep.kappa, rep.beta) == (20.0, 10.0)
    assert len(rep.matching) == len(rep.confidence) == 3
    for pred, lm, lc in zip(trace.iterations, rep.matching, rep.confidence):
        d, _ = flow_errors(pred, gt)
        assert lm == matching_loss(pred, gt)
        assert lc == confidence_loss(pred.score, d, 20.0)
    expected = 10.0 * position_loss(pred_pose, gt_pose) + sum(rep.matching) + 100.0 * sum(rep.confidence)
    assert rep.total == pytest.approx(expected, rel=1e-12)
    assert set(rep.to_json()) == {"alpha", "beta", "kappa", "epoch", "iterations", "position", "total"}


def test_perfect_trace_costs_only_the_neutral_confidence():
    vis = np.ones((3, 3))
    vis[0] = 0
    gt = gt_flow(Se2Pose(0.1, 2.0, 0.0), (3, 3), visibility=vis)
    field = FlowField(flow=gt.flow, score=np.full((3, 3), 0.9), visibility=vis)
    rep = total_loss(FlowTrace([field] * 4), gt, Se2Pose(), Se2Pose())
    assert rep.matching == [0.0] * 4
    assert rep.total == 4 * 100.0 * 6 / 2


def test_total_loss_is_linear_in_alpha_and_beta():
    gt = gt_flow(Se2Pose(-0.3, 0.0, 2.0), (4, 4))
    trace = noisy_trace(gt, 2, seed=3)
    args = (trace, gt, Se2Pose(0.0, 1.0, 2.0), Se2Pose(-0.3, 0.0, 2.0))
    base = total_loss(*args, TrainSchedule(alpha=1.0, beta_initial=1.0))
    double_a = total_loss(*args, TrainSchedule(alpha=2.0, beta_initial=1.0))
    double_b = total_loss(*args, TrainSchedule(alpha=1.0, beta_initial=2.0))
    assert double_a.total - base.total == pytest.approx(sum(base.confidence), rel=1e-9)
    assert double_b.total - base.total == pytest.approx(base.position, rel=1e-9)
