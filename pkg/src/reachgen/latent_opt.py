"""Gradient refinement of a rollout's latent sequence. The generation loop is
fully differentiable (conditions recomputed inside it each iteration), so the
goal term on the final frame sends gradient to every latent.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ag
from .autodiff import Tape, Tensor
from .body import joint_position, vector_to_pose
from .errors import ModelMismatchError
from .intention import GoalSpec
from .model import MotionModel
from .nn import AdamState, ParameterStore, adam_step
from .rollout import RolloutRecord, rollout_poses, with_latents


@dataclass(frozen=True)
class OptObjective:
    """Weights of the optimization terms plus optional waypoint constraints.

    Waypoints are (frame index, xy position, weight) triples pulling the
    pelvis ground projection at that frame toward the point.
    """

    goal_weight: float = 1.0
    prior_weight: float = 1e-3
    waypoints: tuple = ()

    def __post_init__(self):
        if self.goal_weight < 0 or self.prior_weight < 0:
            raise ValueError("weights must be >= 0")
        for frame, xy, weight in self.waypoints:
            if weight < 0:
                raise ValueError("waypoint weights must be >= 0")
            if len(np.asarray(xy)) != 2:
                raise ValueError("waypoints are xy points")


def waypoints_from_curve(points, frames, weight: float) -> tuple:
    """One waypoint constraint per sampled curve point."""
    points = [np.asarray(p, dtype=np.float64) for p in points]
    frames = list(frames)
    if len(points) != len(frames):
        raise ValueError("points and frames must have equal length")
    if any(b <= a for a, b in zip(frames, frames[1:])):
        raise ValueError("frames must be increasing")
    return tuple((int(f), p, float(weight)) for f, p in zip(frames, points))


@dataclass
class OptReport:
    """Per-iteration loss terms and the final wrist-goal distance (meters)."""

    l_opt: list = field(default_factory=list)
    l_norm: list = field(default_factory=list)
    l_goal: list = field(default_factory=list)
    l_waypoint: list = field(default_factory=list)
    final_distance: float = float("nan")
    iterations: int = 0

    def to_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write("iteration,l_opt,l_norm,l_goal,l_waypoint,wrist_distance\n")
            for i in range(self.iterations):
                dist = np.sqrt(self.l_goal[i]) if self.l_goal[i] >= 0 else float("nan")
                f.write(f"{i},{self.l_opt[i]!r},{self.l_norm[i]!r},"
                        f"{self.l_goal[i]!r},{self.l_waypoint[i]!r},{dist!r}\n")


def _objective_terms(latents: Tensor, record: RolloutRecord, goal: GoalSpec,
                     objective: OptObjective, model: MotionModel):
    skeleton = model.skeleton
    initial = vector_to_pose(record.sequence.poses[0], skeleton.n_rotated)
    poses, _, _ = rollout_poses(initial, goal, record.duration, model, latents)
    l_norm = 0.5 * ag.sum(latents * latents)
    wrist_idx = skeleton.joint_index(goal.target_joint)
    wrist = joint_position(poses[-1], skeleton, wrist_idx)
    gdiff = wrist - goal.position
    l_goal = ag.sum(gdiff * gdiff)
    l_way = 0.0
    for frame, xy, weight in objective.waypoints:
        if not 0 <= frame <= record.duration:
            raise ValueError(f"waypoint frame {frame} outside rollout duration")
        pelvis_xy = poses[frame].translation[..., 0:2]
        wdiff = pelvis_xy - np.asarray(xy)
        l_way = l_way + weight * ag.sum(wdiff * wdiff)
    total = (objective.prior_weight * l_norm
             + objective.goal_weight * l_goal + l_way)
    return total, l_norm, l_goal, l_way


def optimize_latents(record: RolloutRecord, goal: GoalSpec,
                     objective: OptObjective, model: MotionModel,
                     steps: int = 100, lr: float = 1e-2):
    """Adam on the latent rows; returns (refined record, report).

    Dropout stays off and there is no fresh sampling, so the objective is a
    deterministic function of the latents.
    """
    if record.model_hash != model.hash():
        raise ModelMismatchError("record was generated by a different model")
    store = ParameterStore()
    latents = store.add("latents", record.latents.copy())
    adam = AdamState(lr_base=lr, lr_final=lr, total_steps=steps)
    report = OptReport()
    for _ in range(steps):
        store.zero_grad()
        with Tape() as tape:
            total, l_norm, l_goal, l_way = _objective_terms(
                latents, record, goal, objective, model)
        tape.backward(total)
        adam_step(adam, store, store.gradients())
        report.l_opt.append(float(ag.value(total)))
        report.l_norm.append(float(ag.value(l_norm)))
        report.l_goal.append(float(ag.value(l_goal)))
        report.l_waypoint.append(float(ag.value(l_way)))
    report.iterations = steps
    refined = with_latents(record, latents.data.copy(), model)
    final_pose = vector_to_pose(refined.sequence.poses[-1], model.skeleton.n_rotated)
    wrist = np.asarray(joint_position(final_pose, model.skeleton,
                                      model.skeleton.joint_index(goal.target_joint)))
    report.final_distance = float(np.linalg.norm(wrist - goal.position))
    return refined, report


def final_wrist_distance(record: RolloutRecord, goal: GoalSpec,
                         model: MotionModel) -> float:
    """Distance of the last frame's target joint to the goal."""
    pose = vector_to_pose(record.sequence.poses[-1], model.skeleton.n_rotated)
    wrist = np.asarray(joint_position(pose, model.skeleton,
                                      model.skeleton.joint_index(goal.target_joint)))
    return float(np.linalg.norm(wrist - goal.position))
