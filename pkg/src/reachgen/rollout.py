"""Closed-loop autoregressive generation: recompute intention against the
active goal each frame, decode a delta, integrate, repeat. Records carry
everything needed to replay bit-exactly or to re-optimize the latents.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ag
from .body import (Pose, integrate_delta, joint_position, pose_to_vector,
                   vector_to_delta, vector_to_pose, zero_delta)
from .dataset import MOTION_MAGIC, MotionSequence, load_motion, save_motion
from .errors import (CorruptFileError, ModelMismatchError, NumericFault,
                     TimeScaleError, VersionMismatchError)
from .intention import GoalSpec, assemble_condition, compute_intention
from .model import MotionModel

SIDECAR_MAGIC = b"RGLA"
SIDECAR_VERSION = 1


@dataclass(frozen=True)
class GoalSchedule:
    """Ordered goals with a switch policy.

    on_frame: advance once the clock passes the active goal's target frame.
    on_reach: advance once the wrist comes within `radius` of the active goal.
    """

    goals: tuple[GoalSpec, ...]
    policy: str = "on_frame"
    radius: float = 0.10

    def __post_init__(self):
        if not self.goals:
            raise ValueError("schedule needs at least one goal")
        if self.policy not in ("on_frame", "on_reach"):
            raise ValueError(f"unknown switch policy {self.policy!r}")
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        frames = [g.target_frame for g in self.goals]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValueError("goal target frames must be strictly increasing")

    @classmethod
    def single(cls, goal: GoalSpec) -> "GoalSchedule":
        return cls((goal,))


def time_to_reach(schedule: GoalSchedule, speedup: float) -> GoalSchedule:
    """Rescale every target frame by 1/speedup (rounded, at least frame 1)."""
    if speedup <= 0:
        raise ValueError("speedup factor must be positive")
    frames = [max(int(round(g.target_frame / speedup)), 1) for g in schedule.goals]
    if any(b <= a for a, b in zip(frames, frames[1:])):
        raise TimeScaleError("rescaled target frames collapse the goal order")
    goals = tuple(replace(g, target_frame=f) for g, f in zip(schedule.goals, frames))
    return GoalSchedule(goals, schedule.policy, schedule.radius)


@dataclass
class RolloutRecord:
    """A generated motion plus everything needed to reproduce it."""

    sequence: MotionSequence
    latents: np.ndarray        # (duration, latent_dim)
    intentions: np.ndarray     # (duration, 7)
    noise_seeds: np.ndarray    # (duration,) uint64
    goal_indices: np.ndarray   # (duration,) active goal per generated frame
    schedule: GoalSchedule
    model_hash: str
    mode: str = "sample"
    temperature: float = 1.0

    @property
    def duration(self) -> int:
        return self.latents.shape[0]


def _advance_schedule(schedule: GoalSchedule, active: int, cur_pose: Pose,
                      model: MotionModel, current_frame: int) -> int:
    if active >= len(schedule.goals) - 1:
        return active
    goal = schedule.goals[active]
    if schedule.policy == "on_frame":
        while (active < len(schedule.goals) - 1
               and current_frame >= schedule.goals[active].target_frame):
            active += 1
        return active
    wrist_idx = model.skeleton.joint_index(goal.target_joint)
    wrist = ag.value(joint_position(cur_pose, model.skeleton, wrist_idx))
    if np.linalg.norm(wrist - goal.position) <= schedule.radius:
        active += 1
    return active


def rollout_poses(initial_pose: Pose, schedule_or_goal, duration: int,
                  model: MotionModel, latents, collect=None):
    """Core loop shared by generation, replay, and latent optimization.

    latents: (duration, latent_dim) array or Tensor rows; when a Tape is
    active and latents require gradients, every pose is differentiable in
    them. Returns (pose list incl. initial, per-frame intention vectors,
    per-frame goal indices).
    """
    if duration < 1:
        raise ValueError("duration must be >= 1")
    if isinstance(schedule_or_goal, GoalSpec):
        schedule = GoalSchedule.single(schedule_or_goal)
    else:
        schedule = schedule_or_goal
    skeleton = model.skeleton
    n = skeleton.n_rotated
    cur = initial_pose
    prev_delta = zero_delta(n)
    poses = [cur]
    intents = []
    goal_idx = []
    active = 0
    for i in range(1, duration + 1):
        current_frame = i - 1
        active = _advance_schedule(schedule, active, cur, model, current_frame)
        goal = schedule.goals[active]
        intent = compute_intention(cur, skeleton, goal, current_frame,
                                   canonical=True)
        cond = assemble_condition(cur, prev_delta, intent)
        z = latents[i - 1]
        delta_vec = model.decode_delta(z, cond)
        if not np.all(np.isfinite(ag.value(delta_vec))):
            raise NumericFault("non-finite delta", where=f"rollout frame {i}")
        delta = vector_to_delta(delta_vec, n)
        cur = integrate_delta(cur, delta)
        poses.append(cur)
        intents.append(intent.as_vector())
        goal_idx.append(active)
        prev_delta = delta
        if collect is not None:
            collect(i, cur)
    return poses, intents, goal_idx


def generate(initial_pose: Pose, schedule: GoalSchedule, duration: int,
             model: MotionModel, rng: np.random.Generator,
             mode: str = "sample", temperature: float = 1.0,
             fps: float = 30.0, ident: str = "rollout") -> RolloutRecord:
    """Generate `duration` new frames from the initial pose."""
    if mode not in ("sample", "mean"):
        raise ValueError(f"unknown mode {mode!r}")
    k = model.spec.latent_dim
    if mode == "mean":
        noise_seeds = np.zeros(duration, dtype=np.uint64)
        latents = np.zeros((duration, k))
    else:
        noise_seeds = rng.integers(0, 2**63 - 1, size=duration, dtype=np.uint64)
        latents = np.stack([
            np.random.default_rng(int(s)).standard_normal(k) * temperature
            for s in noise_seeds])
    try:
        poses, intents, goal_idx = rollout_poses(
            initial_pose, schedule, duration, model, latents)
    except NumericFault:
        raise
    pose_mat = np.stack([np.asarray(pose_to_vector(p)) for p in poses])
    seq = MotionSequence(fps, pose_mat, model.skeleton, None, "generated", ident)
    return RolloutRecord(
        sequence=seq, latents=latents, intentions=np.stack(intents),
        noise_seeds=noise_seeds, goal_indices=np.array(goal_idx),
        schedule=schedule, model_hash=model.hash(), mode=mode,
        temperature=temperature)


def replay(record: RolloutRecord, model: MotionModel) -> MotionSequence:
    """Re-decode the recorded latents; reproduces the poses bit-exactly."""
    if record.model_hash != model.hash():
        raise ModelMismatchError("record was generated by a different model")
    initial = vector_to_pose(record.sequence.poses[0], model.skeleton.n_rotated)
    poses, _, _ = rollout_poses(initial, record.schedule, record.duration,
                                model, record.latents)
    pose_mat = np.stack([np.asarray(pose_to_vector(p)) for p in poses])
    return MotionSequence(record.sequence.fps, pose_mat, model.skeleton, None,
                          "generated", record.sequence.ident)


def with_latents(record: RolloutRecord, latents: np.ndarray,
                 model: MotionModel) -> RolloutRecord:
    """New record generated from the same start with different latents."""
    initial = vector_to_pose(record.sequence.poses[0], model.skeleton.n_rotated)
    poses, intents, goal_idx = rollout_poses(
        initial, record.schedule, record.duration, model, latents)
    pose_mat = np.stack([np.asarray(pose_to_vector(p)) for p in poses])
    seq = MotionSequence(record.sequence.fps, pose_mat, model.skeleton, None,
                         "generated", record.sequence.ident)
    return replace(record, sequence=seq, latents=np.asarray(latents),
                   intentions=np.stack(intents),
                   goal_indices=np.array(goal_idx))


# ------------------------------------------------------------------ file IO

def _pack_goal(g: GoalSpec) -> bytes:
    tj = g.target_joint.encode()
    return (struct.pack("<3dI", *g.position, int(g.target_frame))
            + struct.pack("<H", len(tj)) + tj)


def save_record(record: RolloutRecord, motion_path, sidecar_path) -> None:
    save_motion(record.sequence, motion_path)
    n, k = record.latents.shape
    out = bytearray()
    out += SIDECAR_MAGIC
    out += struct.pack("<H", SIDECAR_VERSION)
    out += bytes.fromhex(record.model_hash)
    out += struct.pack("<B", 0 if record.mode == "sample" else 1)
    out += struct.pack("<d", record.temperature)
    out += struct.pack("<II", n, k)
    out += struct.pack("<H", len(record.schedule.goals))
    for g in record.schedule.goals:
        out += _pack_goal(g)
    out += struct.pack("<Bd", 0 if record.schedule.policy == "on_frame" else 1,
                       record.schedule.radius)
    out += np.ascontiguousarray(record.latents, dtype="<f8").tobytes()
    out += np.ascontiguousarray(record.intentions, dtype="<f8").tobytes()
    out += np.ascontiguousarray(record.noise_seeds, dtype="<u8").tobytes()
    out += np.ascontiguousarray(record.goal_indices, dtype="<i8").tobytes()
    with open(sidecar_path, "wb") as f:
        f.write(bytes(out))


def load_record(motion_path, sidecar_path, model: MotionModel) -> RolloutRecord:
    seq = load_motion(motion_path, model.skeleton)
    with open(sidecar_path, "rb") as f:
        raw = f.read()
    if len(raw) < 6 or raw[:4] != SIDECAR_MAGIC:
        raise CorruptFileError(f"{sidecar_path}: not a latent sidecar")
    (version,) = struct.unpack("<H", raw[4:6])
    if version != SIDECAR_VERSION:
        raise VersionMismatchError(f"{sidecar_path}: sidecar version {version}")
    off = 6
    model_hash = raw[off:off + 32].hex(); off += 32
    (mode_b,) = struct.unpack("<B", raw[off:off + 1]); off += 1
    (temperature,) = struct.unpack("<d", raw[off:off + 8]); off += 8
    n, k = struct.unpack("<II", raw[off:off + 8]); off += 8
    (n_goals,) = struct.unpack("<H", raw[off:off + 2]); off += 2
    goals = []
    for _ in range(n_goals):
        x, y, z, tf = struct.unpack("<3dI", raw[off:off + 28]); off += 28
        (tl,) = struct.unpack("<H", raw[off:off + 2]); off += 2
        tj = raw[off:off + tl].decode(); off += tl
        goals.append(GoalSpec(np.array([x, y, z]), tf, tj))
    policy_b, radius = struct.unpack("<Bd", raw[off:off + 9]); off += 9
    need = n * k * 8 + n * 7 * 8 + n * 8 + n * 8
    if len(raw) - off != need:
        raise CorruptFileError(f"{sidecar_path}: truncated payload")
    latents = np.frombuffer(raw, "<f8", n * k, off).reshape(n, k).copy(); off += n * k * 8
    intentions = np.frombuffer(raw, "<f8", n * 7, off).reshape(n, 7).copy(); off += n * 7 * 8
    noise_seeds = np.frombuffer(raw, "<u8", n, off).copy(); off += n * 8
    goal_indices = np.frombuffer(raw, "<i8", n, off).copy()
    schedule = GoalSchedule(tuple(goals),
                            "on_frame" if policy_b == 0 else "on_reach", radius)
    return RolloutRecord(seq, latents, intentions, noise_seeds, goal_indices,
                         schedule, model_hash,
                         "sample" if mode_b == 0 else "mean", temperature)
