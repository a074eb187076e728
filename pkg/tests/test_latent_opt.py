import numpy as np
import pytest

from reachgen import autodiff as ag
from reachgen import latent_opt as lo
from reachgen import rollout as ro
from reachgen.autodiff import Tape, Tensor
from reachgen.body import desk_skeleton, rest_pose
from reachgen.intention import GoalSpec
from reachgen.model import fresh_model


@pytest.fixture(scope="module")
def skel():
    return desk_skeleton()


@pytest.fixture(scope="module")
def model(skel):
    return fresh_model(skel, latent_dim=6, hidden_dim=24, n_layers=2,
                       dropout=0.0, seed=21)


@pytest.fixture(scope="module")
def short_record(model, skel):
    goal = GoalSpec(np.array([1.0, 0.8, 1.1]), 40)
    return ro.generate(rest_pose(skel), ro.GoalSchedule.single(goal), 5,
                       model, np.random.default_rng(2))


def test_prior_only_keeps_zero_latents(model, skel, short_record):
    zero_rec = ro.with_latents(short_record, np.zeros_like(short_record.latents), model)
    goal = GoalSpec(np.array([1.0, 0.8, 1.1]), 40)
    objective = lo.OptObjective(goal_weight=0.0, prior_weight=1.0)
    refined, report = lo.optimize_latents(zero_rec, goal, objective, model,
                                          steps=10, lr=1e-2)
    np.testing.assert_array_equal(refined.latents, 0.0)
    assert report.l_norm[-1] == 0.0


def test_lopt_gradient_matches_finite_differences(model, skel, short_record):
    # 5-frame rollout, 2-layer decoder: every latent entry
    goal = GoalSpec(np.array([0.6, 0.7, 1.2]), 30)
    objective = lo.OptObjective(goal_weight=1.0, prior_weight=1e-3,
                                waypoints=((3, np.array([0.2, 0.3]), 0.5),))
    z0 = short_record.latents.copy()

    t = Tensor(z0, requires_grad=True)
    with Tape() as tape:
        total, _, _, _ = lo._objective_terms(t, short_record, goal, objective, model)
    tape.backward(total)

    def f(z):
        val, _, _, _ = lo._objective_terms(z, short_record, goal, objective, model)
        return float(ag.value(val))

    fd = ag.finite_difference_gradient(f, z0.copy(), h=1e-5)
    rel = np.abs(t.grad - fd) / np.maximum(np.abs(fd), 1e-8)
    assert np.max(rel) < 1e-4, np.max(rel)


def test_goal_gradient_reaches_every_frame(model, short_record):
    goal = GoalSpec(np.array([2.0, 2.0, 1.5]), 30)  # unmet goal
    objective = lo.OptObjective(goal_weight=1.0, prior_weight=0.0)
    t = Tensor(short_record.latents.copy(), requires_grad=True)
    with Tape() as tape:
        total, _, l_goal, _ = lo._objective_terms(t, short_record, goal,
                                                  objective, model)
    tape.backward(total)
    per_frame = np.linalg.norm(t.grad, axis=1)
    assert np.all(per_frame > 0), per_frame


def test_huge_prior_pulls_latents_toward_zero(model, short_record):
    goal = GoalSpec(np.array([0.6, 0.7, 1.2]), 30)
    objective = lo.OptObjective(goal_weight=1.0, prior_weight=1e6)
    refined, _ = lo.optimize_latents(short_record, goal, objective, model,
                                     steps=60, lr=5e-2)
    assert np.linalg.norm(refined.latents) < 0.05 * np.linalg.norm(short_record.latents)


def test_optimization_reduces_final_distance(model, skel):
    goal = GoalSpec(np.array([0.8, 0.9, 1.2]), 60)
    rec = ro.generate(rest_pose(skel), ro.GoalSchedule.single(goal), 30,
                      model, np.random.default_rng(8))
    before = lo.final_wrist_distance(rec, goal, model)
    refined, report = lo.optimize_latents(
        rec, goal, lo.OptObjective(), model, steps=60, lr=1e-2)
    after = report.final_distance
    assert after < before
    np.testing.assert_allclose(lo.final_wrist_distance(refined, goal, model),
                               after, atol=1e-12)


def test_waypoints_from_curve():
    assert lo.waypoints_from_curve([], [], 1.0) == ()
    pts = [np.array([0.0, 0.0]), np.array([0.5, 0.5]), np.array([1.0, 0.2])]
    cons = lo.waypoints_from_curve(pts, [5, 10, 15], 2.0)
    assert len(cons) == 3
    assert [c[0] for c in cons] == [5, 10, 15]
    assert all(c[2] == 2.0 for c in cons)
    with pytest.raises(ValueError):
        lo.waypoints_from_curve(pts, [5, 10], 1.0)
    with pytest.raises(ValueError):
        lo.waypoints_from_curve(pts, [5, 5, 6], 1.0)


def test_waypoint_optimization_reduces_xy_error(model, skel):
    goal = GoalSpec(np.array([0.5, 1.2, 1.1]), 60)
    rec = ro.generate(rest_pose(skel), ro.GoalSchedule.single(goal), 24,
                      model, np.random.default_rng(6))
    frame = 12
    pelvis = rec.sequence.poses[frame][:2]
    target_xy = pelvis + np.array([0.3, -0.2])
    objective = lo.OptObjective(goal_weight=0.2, prior_weight=1e-4,
                                waypoints=((frame, target_xy, 2.0),))
    before = np.linalg.norm(pelvis - target_xy)
    refined, report = lo.optimize_latents(rec, goal, objective, model,
                                          steps=60, lr=2e-2)
    after = np.linalg.norm(refined.sequence.poses[frame][:2] - target_xy)
    assert after < before
    assert report.l_waypoint[-1] < report.l_waypoint[0]


def test_report_csv(tmp_path, model, short_record):
    goal = GoalSpec(np.array([0.6, 0.7, 1.2]), 30)
    _, report = lo.optimize_latents(short_record, goal, lo.OptObjective(),
                                    model, steps=5)
    path = tmp_path / "opt.csv"
    report.to_csv(path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "iteration,l_opt,l_norm,l_goal,l_waypoint,wrist_distance"
    assert len(lines) == 6
