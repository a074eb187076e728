"""Synthetic motion corpus, preprocessing, window sampling, motion file IO.

Locomotion clips are kinematic walks with the stance foot locked exactly on
its plant (root height solves the leg-length constraint), so the corpus
itself scores near-zero foot skating. Reaching clips solve a closed-form
two-link arm IK so the wrist lands exactly on the sampled target at the
labeled frame. Everything is a pure function of (config, seed).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .body import (Pose, Skeleton, forward_kinematics, heading_of,
                   joint_position, pose_dim, pose_to_vector, rest_pose,
                   vector_to_pose)
from .errors import (CorruptFileError, DimensionMismatchError,
                     InfeasibleTargetError, ModelMismatchError, SkipWindow,
                     VersionMismatchError)
from .geometry import axis_angle_matrix, matrix_to_sixd, rotation_z_matrix
from .intention import GoalSpec, hindsight_goal

MOTION_MAGIC = b"RGMO"
MOTION_VERSION = 1


@dataclass
class MotionSequence:
    """Ordered poses at a fixed fps plus metadata."""

    fps: float
    poses: np.ndarray          # (n_frames, pose_dim)
    skeleton: Skeleton
    label: GoalSpec | None = None
    provenance: str = "locomotion"
    ident: str = ""

    def __post_init__(self):
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        if self.poses.ndim != 2 or self.poses.shape[0] < 2:
            raise ValueError("a motion sequence needs at least 2 frames")
        if self.poses.shape[1] != pose_dim(self.skeleton.n_rotated):
            raise DimensionMismatchError("pose rows do not match the skeleton")
        if self.label is not None and not (0 <= self.label.target_frame < self.n_frames):
            raise ValueError("label target_frame outside sequence")

    @property
    def n_frames(self) -> int:
        return self.poses.shape[0]

    def pose_at(self, i: int) -> Pose:
        return vector_to_pose(self.poses[i], self.skeleton.n_rotated)

    def batched_poses(self) -> Pose:
        return vector_to_pose(self.poses, self.skeleton.n_rotated)


@dataclass(frozen=True)
class SyntheticGenConfig:
    n_locomotion: int = 120
    n_reaching: int = 120
    n_walk_reach: int = 60
    duration_range: tuple[float, float] = (4.0, 8.0)     # seconds (locomotion)
    reach_duration_range: tuple[float, float] = (1.5, 3.0)
    speed_range: tuple[float, float] = (0.45, 0.75)      # m/s
    turn_rate_range: tuple[float, float] = (-0.5, 0.5)   # rad/s
    step_time_range: tuple[float, float] = (0.40, 0.55)  # s per step
    reach_height_range: tuple[float, float] = (0.5, 1.7)
    reach_radius_range: tuple[float, float] = (0.15, 0.46)
    fps: float = 30.0
    seed: int = 0

    def __post_init__(self):
        for lo, hi in (self.duration_range, self.reach_duration_range,
                       self.speed_range, self.step_time_range,
                       self.reach_height_range, self.reach_radius_range):
            if lo > hi:
                raise ValueError("config range is not well-ordered")
        if min(self.n_locomotion, self.n_reaching, self.n_walk_reach) < 0:
            raise ValueError("counts must be >= 0")


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[str, ...]
    val: tuple[str, ...]
    test: tuple[str, ...]


def _smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def _align_to(direction):
    """Rotation matrix taking (0, 0, -1) onto the given unit direction."""
    u = np.array([0.0, 0.0, -1.0])
    v = np.asarray(direction, dtype=np.float64)
    c = float(np.dot(u, v))
    axis = np.cross(u, v)
    s = float(np.linalg.norm(axis))
    if s < 1e-12:
        if c > 0:
            return np.eye(3)
        return axis_angle_matrix([1.0, 0.0, 0.0], np.pi)
    return axis_angle_matrix(axis / s, np.arctan2(s, c))


def _align_vec_to(src, dst):
    """Rotation matrix taking unit src onto unit dst."""
    c = float(np.dot(src, dst))
    axis = np.cross(src, dst)
    s = float(np.linalg.norm(axis))
    if s < 1e-12:
        if c > 0:
            return np.eye(3)
        # pick any axis orthogonal to src
        helper = np.array([1.0, 0.0, 0.0])
        if abs(src[0]) > 0.9:
            helper = np.array([0.0, 1.0, 0.0])
        axis = np.cross(src, helper)
        return axis_angle_matrix(axis / np.linalg.norm(axis), np.pi)
    return axis_angle_matrix(axis / s, np.arctan2(s, c))


def _matrix_log_axis_angle(m):
    """Inverse Rodrigues; angle in [0, pi)."""
    c = np.clip((np.trace(m) - 1.0) * 0.5, -1.0, 1.0)
    angle = np.arccos(c)
    if angle < 1e-10:
        return np.array([1.0, 0.0, 0.0]), 0.0
    axis = np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])
    n = np.linalg.norm(axis)
    if n < 1e-10:
        # angle near pi: extract axis from the symmetric part
        w, vecs = np.linalg.eigh(m)
        axis = vecs[:, np.argmax(w)]
        return axis / np.linalg.norm(axis), angle
    return axis / n, angle


def _slerp(m0, m1, s):
    axis, angle = _matrix_log_axis_angle(m0.T @ m1)
    return m0 @ axis_angle_matrix(axis, s * angle)


class _WalkRig:
    """Shared geometry for the procedural gait."""

    def __init__(self, skeleton: Skeleton):
        self.skel = skeleton
        self.hip_idx = {"left": skeleton.joint_index("left_hip"),
                        "right": skeleton.joint_index("right_hip")}
        self.hip_slot = {"left": skeleton.joint_index("left_hip") - 1,
                         "right": skeleton.joint_index("right_hip") - 1}
        self.hip_off = {s: skeleton.offsets[self.hip_idx[s]] for s in ("left", "right")}
        self.leg_len = float(np.linalg.norm(
            skeleton.offsets[skeleton.joint_index("left_foot")]))
        self.arm_slots = {
            "left_shoulder": skeleton.joint_index("left_shoulder") - 1,
            "right_shoulder": skeleton.joint_index("right_shoulder") - 1,
        }

    def stance_height(self, root_xy, yaw, stance, stance_plant) -> float:
        """Root z that makes the stance leg exactly leg-length."""
        L = self.leg_len
        hip_off_st = self.hip_off[stance]
        rz2 = rotation_z_matrix(yaw)[:2, :2]
        hip_xy = np.asarray(root_xy) + rz2 @ hip_off_st[:2]
        d = min(np.linalg.norm(stance_plant[:2] - hip_xy), L - 1e-3)
        return stance_plant[2] + np.sqrt(L * L - d * d) - hip_off_st[2]

    def leg_to_point(self, root, yaw_mat, side, point):
        """Hip rotation aiming the foot at a world point along the leg ray.

        Exact when the point is one leg-length away; otherwise the foot sits
        on the ray at leg-length (error = distance mismatch).
        """
        hip_pos = root + yaw_mat @ self.hip_off[side]
        vec = np.asarray(point) - hip_pos
        n = np.linalg.norm(vec)
        if n < 1e-9:
            return None
        return matrix_to_sixd(yaw_mat.T @ _align_to(vec / n))

    def leg_swing(self, root, yaw_mat, side, swing_xy, floor_z, clearance):
        """Hip rotation placing the foot on the reachable sphere at an xy.

        The radius is clamped up so the foot keeps `clearance` above
        `floor_z` (z >= floor requires r >= horizontal stance reach).
        """
        L = self.leg_len
        hip_sw = root + yaw_mat @ self.hip_off[side]
        dx = np.asarray(swing_xy) - hip_sw[:2]
        r = np.linalg.norm(dx)
        zc = max(hip_sw[2] - floor_z - clearance, 0.0)
        lo = min(np.sqrt(max(L * L - zc * zc, 0.0)), L * 0.999)
        hi = L * 0.999
        if r < 1e-9:
            dx = yaw_mat[:2, :2] @ np.array([0.0, lo])
            r = lo
        elif r < lo:
            dx = dx * (lo / r)
            r = lo
        elif r > hi:
            dx = dx * (hi / r)
            r = hi
        dz = -np.sqrt(L * L - r * r)
        return matrix_to_sixd(yaw_mat.T @ _align_to(np.array([dx[0], dx[1], dz]) / L))

    def arm_locals(self, phase, amp=0.5, droop=1.1):
        """Arms lowered from T-pose, counter-swinging with the gait phase."""
        out = {}
        sw = amp * np.sin(phase)
        out["right_shoulder"] = matrix_to_sixd(
            rotation_z_matrix(sw) @ axis_angle_matrix([0, 1, 0], droop))
        out["left_shoulder"] = matrix_to_sixd(
            rotation_z_matrix(-sw) @ axis_angle_matrix([0, 1, 0], -droop))
        return out


class _ArmGestures:
    """Slowly varying random arm poses layered over a gait.

    Keyframed shoulder/elbow rotations (slerped) move the wrists through a
    wide height/offset range, so hindsight goals from locomotion cover far
    more than the walking swing plane, and raised-arm states come with
    recovery examples.
    """

    def __init__(self, skeleton: Skeleton, rng: np.random.Generator, n: int,
                 fps: float):
        self.slots = {
            "right_shoulder": skeleton.joint_index("right_shoulder") - 1,
            "right_elbow": skeleton.joint_index("right_elbow") - 1,
            "left_shoulder": skeleton.joint_index("left_shoulder") - 1,
            "left_elbow": skeleton.joint_index("left_elbow") - 1,
            "spine": skeleton.joint_index("spine") - 1,
        }
        self.keys_at = np.arange(0, n + 1, max(int(rng.uniform(0.8, 1.6) * fps), 8))
        if self.keys_at[-1] < n:
            self.keys_at = np.append(self.keys_at, n)
        self.keyframes = [self._random_pose(rng) for _ in self.keys_at]

    def _random_pose(self, rng):
        out = {}
        for side, sign in (("right", 1.0), ("left", -1.0)):
            droop = rng.uniform(-0.5, 1.4)   # negative raises above horizontal
            swing = rng.uniform(-0.9, 0.9)
            tilt = rng.uniform(-0.9, 0.9)
            out[f"{side}_shoulder"] = (
                rotation_z_matrix(swing)
                @ axis_angle_matrix([1, 0, 0], tilt)
                @ axis_angle_matrix([0, 1, 0], sign * droop))
            out[f"{side}_elbow"] = rotation_z_matrix(sign * rng.uniform(0.0, 1.5))
        # occasional forward lean brings low wrist goals into the data
        out["spine"] = axis_angle_matrix([1, 0, 0], rng.uniform(-0.8, 0.15))
        return out

    def apply(self, joints: np.ndarray, i: int) -> None:
        k = int(np.searchsorted(self.keys_at, i, side="right") - 1)
        k = min(k, len(self.keyframes) - 2)
        span = self.keys_at[k + 1] - self.keys_at[k]
        s = _smoothstep((i - self.keys_at[k]) / max(span, 1))
        for name, slot in self.slots.items():
            m = _slerp(self.keyframes[k][name], self.keyframes[k + 1][name], s)
            joints[slot] = matrix_to_sixd(m)


def _edge_ramp(n: int, fps: float, ramp_s: float = 1.0) -> np.ndarray:
    """Smooth 0 -> 1 -> 0 profile: clips start and end at a standstill."""
    t = np.arange(n) / fps
    ramp_t = min(ramp_s, (n / fps) / 3.0)
    return _smoothstep(t / ramp_t) * _smoothstep((t[-1] - t) / ramp_t)


def _generate_gait(skeleton: Skeleton, fps: float, yaw: np.ndarray,
                   speed: np.ndarray, start_xy=(0.0, 0.0),
                   step_time: float = 0.5, swing_lift: float = 0.06,
                   gestures: "_ArmGestures | None" = None) -> np.ndarray:
    """Stance-locked gait following per-frame yaw and speed series."""
    rig = _WalkRig(skeleton)
    n = len(yaw)
    frames_per_step = max(int(round(step_time * fps)), 6)

    heading = np.stack([-np.sin(yaw), np.cos(yaw)], axis=-1)
    root_xy = np.zeros((n, 2))
    root_xy[0] = start_xy
    for i in range(1, n):
        root_xy[i] = root_xy[i - 1] + heading[i - 1] * (speed[i - 1] / fps)

    # footstep plan: each foot plants at the midpoint of its own hip path
    # between landing and liftoff, so the leg-length height constraint takes
    # the same value at both handovers and the root height is continuous
    def hip_xy_at(i, side):
        j = min(max(i, 0), n - 1)
        return root_xy[j] + rotation_z_matrix(yaw[j])[:2, :2] @ rig.hip_off[side][:2]

    def plant_at(land_i, side):
        a = hip_xy_at(land_i, side)
        b = hip_xy_at(land_i + frames_per_step, side)
        if land_i < 0:  # extrapolate the pre-roll plant for the first swing
            a = 2.0 * hip_xy_at(0, side) - hip_xy_at(frames_per_step, side)
            b = hip_xy_at(0, side)
        mid = 0.5 * (a + b)
        return np.array([mid[0], mid[1], 0.0])

    plants = {"left": plant_at(0, "left"),
              "right": plant_at(-frames_per_step, "right")}

    # pass 1: gait state machine; per-frame targets and the root height.
    # Turning makes the two legs' exact height constraints disagree by ~cm at
    # handover, so the height crossfades between them across the
    # double-support window and is exact during single support.
    stance = "left"
    swing = "right"
    step_start = 0
    prev_plant = plants[swing].copy()
    next_plant = plant_at(frames_per_step, swing)
    outward = {"left": -1.0, "right": 1.0}
    frame_plan = []
    z_root = np.zeros(n)
    for i in range(n):
        if i - step_start >= frames_per_step:
            # handover: the swing foot becomes stance at its planned plant
            plants[swing] = next_plant
            stance, swing = swing, stance
            step_start = i
            prev_plant = plants[swing].copy()
            next_plant = plant_at(step_start + frames_per_step, swing)
        raw = (i - step_start) / frames_per_step
        ds_w = 0.2  # double-support fraction at each end of the step
        z_cur = rig.stance_height(root_xy[i], yaw[i], stance, plants[stance])
        if raw < ds_w or raw > 1.0 - ds_w:
            # double support: the root rides the taller of the two leg
            # constraints, so neither grounded leg is ever over-length and
            # ray-held feet stay between plant and hip (never underground)
            hold = prev_plant if raw < ds_w else next_plant
            spec = ("hold", hold.copy())
            z_other = rig.stance_height(root_xy[i], yaw[i], swing, hold)
            z_root[i] = max(z_cur, z_other)
        else:
            s = _smoothstep((raw - ds_w) / (1.0 - 2 * ds_w))
            # circumduction: an outward bulge buys clearance for a rigid leg
            rz2 = rotation_z_matrix(yaw[i])[:2, :2]
            bulge = rz2 @ np.array([outward[swing] * swing_lift * 2.0, 0.0])
            swing_xy = (prev_plant[:2] + (next_plant[:2] - prev_plant[:2]) * s
                        + bulge * np.sin(np.pi * s))
            arc_s = (raw - ds_w) / (1.0 - 2 * ds_w)
            spec = ("arc", swing_xy, max(0.02 * np.sin(np.pi * arc_s), 0.004))
            z_root[i] = z_cur
        frame_plan.append((stance, swing, plants[stance].copy(), spec))

    # pass 2: build the frames
    poses = np.zeros((n, pose_dim(skeleton.n_rotated)))
    ident6 = np.array([1.0, 0, 0, 0, 1.0, 0])
    for i, (stance, swing, stance_plant, spec) in enumerate(frame_plan):
        yaw_mat = rotation_z_matrix(yaw[i])
        root = np.array([root_xy[i][0], root_xy[i][1], z_root[i]])
        joints = np.tile(ident6, (skeleton.n_rotated, 1))
        st = rig.leg_to_point(root, yaw_mat, stance, stance_plant)
        if st is not None:
            joints[rig.hip_slot[stance]] = st
        if spec[0] == "hold":
            sw = rig.leg_to_point(root, yaw_mat, swing, spec[1])
            if sw is not None:
                joints[rig.hip_slot[swing]] = sw
        else:
            joints[rig.hip_slot[swing]] = rig.leg_swing(
                root, yaw_mat, swing, spec[1], floor_z=0.0, clearance=spec[2])
        phase = 2.0 * np.pi * i / (2 * frames_per_step)
        amp = 0.5 * min(speed[i] / 0.5, 1.0)   # arms swing with walking speed
        for name, six in rig.arm_locals(phase, amp=amp).items():
            joints[rig.arm_slots[name]] = six
        if gestures is not None:
            gestures.apply(joints, i)
        poses[i] = np.concatenate([root, matrix_to_sixd(yaw_mat), joints.reshape(-1)])
    return poses


def _generate_walk(skeleton: Skeleton, rng: np.random.Generator, fps: float,
                   duration_s: float, speed: float, turn_rate: float,
                   start_xy=(0.0, 0.0), start_yaw=None, step_time=None,
                   ramp_edges=True, gesture=False) -> np.ndarray:
    """Constant-turn walk; with ramped edges it starts and ends standing."""
    n = max(int(round(duration_s * fps)), 8)
    if start_yaw is None:
        start_yaw = rng.uniform(-np.pi, np.pi)
    if step_time is None:
        step_time = rng.uniform(0.40, 0.55)
    yaw = start_yaw + turn_rate * np.arange(n) / fps
    profile = _edge_ramp(n, fps) if ramp_edges else np.ones(n)
    gestures = _ArmGestures(skeleton, rng, n, fps) if gesture else None
    return _generate_gait(skeleton, fps, yaw, speed * profile, start_xy,
                          step_time=step_time, gestures=gestures)


def _generate_turn_in_place(skeleton: Skeleton, rng: np.random.Generator,
                            fps: float, duration_s: float,
                            start_xy=(0.0, 0.0)) -> np.ndarray:
    """Rotate on the spot; covers goals at every bearing via hindsight."""
    n = max(int(round(duration_s * fps)), 12)
    start_yaw = rng.uniform(-np.pi, np.pi)
    rate = rng.uniform(0.6, 1.4) * rng.choice([-1.0, 1.0])
    ramp = _edge_ramp(n, fps)
    yaw = start_yaw + np.concatenate([[0.0], np.cumsum(rate * ramp[:-1] / fps)])
    speed = np.full(n, 0.04) * ramp   # slight drift keeps the step plan alive
    gestures = _ArmGestures(skeleton, rng, n, fps)
    return _generate_gait(skeleton, fps, yaw, speed, start_xy,
                          step_time=rng.uniform(0.40, 0.55), gestures=gestures)


def standing_pose(skeleton: Skeleton, xy=(0.0, 0.0), yaw: float = 0.0) -> Pose:
    """Corpus-style standing pose (feet grounded, arms lowered)."""
    return vector_to_pose(_standing_pose(skeleton, xy, yaw), skeleton.n_rotated)


def _standing_pose(skeleton: Skeleton, xy, yaw) -> np.ndarray:
    """Symmetric stance at a point; both feet grounded exactly, arms lowered."""
    rig = _WalkRig(skeleton)
    yaw_mat = rotation_z_matrix(yaw)
    xy = np.asarray(xy, dtype=np.float64)
    left_plant = np.append(xy + yaw_mat[:2, :2] @ rig.hip_off["left"][:2], 0.0)
    right_plant = np.append(xy + yaw_mat[:2, :2] @ rig.hip_off["right"][:2], 0.0)
    root = np.array([xy[0], xy[1],
                     rig.stance_height(xy, yaw, "left", left_plant)])
    ident6 = np.array([1.0, 0, 0, 0, 1.0, 0])
    joints = np.tile(ident6, (skeleton.n_rotated, 1))
    for side, plant in (("left", left_plant), ("right", right_plant)):
        six = rig.leg_to_point(root, yaw_mat, side, plant)
        if six is not None:
            joints[rig.hip_slot[side]] = six
    for name, six in rig.arm_locals(0.0, amp=0.0).items():
        joints[rig.arm_slots[name]] = six
    return np.concatenate([root, matrix_to_sixd(yaw_mat), joints.reshape(-1)])


def _solve_reach(skeleton: Skeleton, stand_vec: np.ndarray, target: np.ndarray):
    """Spine/shoulder/elbow rotations placing the right wrist on `target`.

    Returns {joint_name: 6d} or None when the target is outside the
    pitched-spine reach envelope.
    """
    n_rot = skeleton.n_rotated
    base = vector_to_pose(stand_vec.copy(), n_rot)
    i_spine = skeleton.joint_index("spine")
    i_sh = skeleton.joint_index("right_shoulder")
    a = float(np.linalg.norm(skeleton.offsets[skeleton.joint_index("right_elbow")]))
    b = float(np.linalg.norm(skeleton.offsets[skeleton.joint_index("right_wrist")]))

    from .geometry import sixd_to_matrix

    for pitch in np.linspace(0.0, 1.1, 8):
        joints = np.array(base.joint_rotations, copy=True)
        spine_local = axis_angle_matrix([1.0, 0.0, 0.0], -pitch)  # lean toward +y
        joints[i_spine - 1] = matrix_to_sixd(spine_local)
        probe = Pose(base.translation, base.root_orientation, joints)
        shoulder_pos = np.asarray(joint_position(probe, skeleton, i_sh))
        v = target - shoulder_pos
        r = float(np.linalg.norm(v))
        if not (abs(a - b) + 0.02 <= r <= a + b - 0.005):
            continue
        # elbow bend in-plane, then one shoulder alignment
        cos_al = np.clip((r * r - a * a - b * b) / (2 * a * b), -1.0, 1.0)
        alpha = float(np.arccos(cos_al))
        elbow_local = rotation_z_matrix(alpha)
        wrist_in_shoulder = np.array([a + b * np.cos(alpha), b * np.sin(alpha), 0.0])
        w_sh_parent = (sixd_to_matrix(probe.root_orientation)
                       @ sixd_to_matrix(joints[i_spine - 1]))
        # shoulder world rotation must map wrist_in_shoulder onto v
        world = _align_vec_to(wrist_in_shoulder / r, v / r)
        shoulder_local = w_sh_parent.T @ world
        return {
            "spine": matrix_to_sixd(spine_local),
            "right_shoulder": matrix_to_sixd(shoulder_local),
            "right_elbow": matrix_to_sixd(elbow_local),
        }
    return None


def _generate_reach(skeleton: Skeleton, rng: np.random.Generator, fps: float,
                    duration_s: float, cfg: SyntheticGenConfig,
                    stand_xy=(0.0, 0.0), yaw=None, start_vec=None,
                    resample_cap: int = 25):
    """Stand-and-reach clip; returns (poses, GoalSpec)."""
    if yaw is None:
        yaw = rng.uniform(-np.pi, np.pi)
    stand = _standing_pose(skeleton, stand_xy, yaw) if start_vec is None else start_vec
    n_rot = skeleton.n_rotated
    n = max(int(round(duration_s * fps)), 10)
    hold = max(int(round(0.2 * fps)), 2)
    t_reach = n - 1 - hold

    solution = None
    target = None
    for _ in range(resample_cap):
        # target sampled in a forward shell relative to the body heading
        rz2 = rotation_z_matrix(yaw)[:2, :2]
        lateral = rng.uniform(-0.35, 0.45)     # biased toward the right arm
        forward = rng.uniform(0.15, 0.45)
        height = rng.uniform(*cfg.reach_height_range)
        xy = np.asarray(stand_xy) + rz2 @ np.array([lateral, forward])
        target = np.array([xy[0], xy[1], height])
        solution = _solve_reach(skeleton, stand, target)
        if solution is not None:
            break
    if solution is None:
        raise InfeasibleTargetError(
            f"no reachable target found in {resample_cap} samples")

    from .geometry import sixd_to_matrix

    base = vector_to_pose(stand.copy(), n_rot)
    slots = {name: skeleton.joint_index(name) - 1 for name in solution}
    start_rot = {name: sixd_to_matrix(np.array(base.joint_rotations[s]))
                 for name, s in slots.items()}
    end_rot = {name: sixd_to_matrix(solution[name]) for name in slots}

    poses = np.tile(stand, (n, 1))
    for i in range(n):
        s = _smoothstep(min(i / t_reach, 1.0))
        joints = np.array(base.joint_rotations, copy=True)
        for name, slot in slots.items():
            if s >= 1.0:
                joints[slot] = solution[name]
            else:
                joints[slot] = matrix_to_sixd(_slerp(start_rot[name], end_rot[name], s))
        poses[i, 9:] = joints.reshape(-1)

    goal = GoalSpec(position=target, target_frame=t_reach, target_joint="right_wrist")
    return poses, goal


def _generate_walk_reach(skeleton: Skeleton, rng: np.random.Generator,
                         fps: float, cfg: SyntheticGenConfig):
    """Turn toward a bearing, walk, stop, reach. Labeled.

    The initial turn makes the composite cover goals at every bearing, which
    closed-loop generation needs when the goal starts beside or behind the
    body.
    """
    start_yaw = rng.uniform(-np.pi, np.pi)
    turn = rng.uniform(-np.pi, np.pi)
    turn_s = max(abs(turn) / rng.uniform(0.8, 1.2), 0.3)
    walk_s = rng.uniform(2.0, 4.0)
    speed = rng.uniform(*cfg.speed_range)

    n_turn = int(round(turn_s * fps))
    n_walk = int(round(walk_s * fps))
    n = n_turn + n_walk
    # yaw: smooth turn then hold; speed: still during the turn, ramped walk
    t_turn = np.arange(n_turn) / max(n_turn - 1, 1)
    yaw = np.concatenate([start_yaw + turn * _smoothstep(t_turn),
                          np.full(n_walk, start_yaw + turn)])
    speed_series = np.concatenate([np.zeros(n_turn),
                                   speed * _edge_ramp(n_walk, fps)])
    walk = _generate_gait(skeleton, fps, yaw, speed_series,
                          start_xy=rng.uniform(-1.0, 1.0, size=2),
                          step_time=rng.uniform(*cfg.step_time_range))

    # freeze the final frame and blend the arm into a reach
    final = walk[-1].copy()
    final_pose = vector_to_pose(final, skeleton.n_rotated)
    hd = np.asarray(heading_of(final_pose, skeleton))
    end_yaw = float(np.arctan2(-hd[0], hd[1]))
    reach_s = rng.uniform(*cfg.reach_duration_range)
    reach, goal = _generate_reach(
        skeleton, rng, fps, reach_s, cfg,
        stand_xy=np.asarray(final_pose.translation)[:2], yaw=end_yaw,
        start_vec=final)
    poses = np.concatenate([walk[:-1], reach], axis=0)
    goal = replace(goal, target_frame=goal.target_frame + walk.shape[0] - 1)
    return poses, goal


def generate_synthetic_corpus(cfg: SyntheticGenConfig,
                              skeleton: Skeleton | None = None) -> list[MotionSequence]:
    """Deterministic corpus: unlabeled walks + labeled reaches (+ composites)."""
    from .body import desk_skeleton

    skeleton = skeleton or desk_skeleton()
    sequences: list[MotionSequence] = []
    root_ss = np.random.SeedSequence(cfg.seed)
    n_total = cfg.n_locomotion + cfg.n_reaching + cfg.n_walk_reach
    children = root_ss.spawn(n_total)
    k = 0
    for i in range(cfg.n_locomotion):
        rng = np.random.default_rng(children[k]); k += 1
        if i % 4 == 3:
            # every fourth clip rotates on the spot: hindsight goals then
            # appear at all bearings, teaching the model to turn
            poses = _generate_turn_in_place(
                skeleton, rng, cfg.fps,
                duration_s=rng.uniform(2.5, 5.0),
                start_xy=rng.uniform(-1.0, 1.0, size=2))
        else:
            poses = _generate_walk(
                skeleton, rng, cfg.fps,
                duration_s=rng.uniform(*cfg.duration_range),
                speed=rng.uniform(*cfg.speed_range),
                turn_rate=rng.uniform(*cfg.turn_rate_range),
                start_xy=rng.uniform(-1.0, 1.0, size=2),
                step_time=rng.uniform(*cfg.step_time_range),
                gesture=(i % 2 == 0))
        sequences.append(MotionSequence(cfg.fps, poses, skeleton, None,
                                        "locomotion", f"loco_{i:04d}"))
    for i in range(cfg.n_reaching):
        rng = np.random.default_rng(children[k]); k += 1
        poses, goal = _generate_reach(
            skeleton, rng, cfg.fps, rng.uniform(*cfg.reach_duration_range), cfg,
            stand_xy=rng.uniform(-1.0, 1.0, size=2))
        sequences.append(MotionSequence(cfg.fps, poses, skeleton, goal,
                                        "reaching", f"reach_{i:04d}"))
    for i in range(cfg.n_walk_reach):
        rng = np.random.default_rng(children[k]); k += 1
        poses, goal = _generate_walk_reach(skeleton, rng, cfg.fps, cfg)
        sequences.append(MotionSequence(cfg.fps, poses, skeleton, goal,
                                        "reaching", f"walkreach_{i:04d}"))
    return sequences


def resample_fps(seq: MotionSequence, target_fps: float = 30.0) -> MotionSequence:
    """Linear interpolation of every pose component; duration preserved.

    Interpolated 6D encodings are re-orthonormalized whenever they are
    decoded, so raw linear mixing is safe.
    """
    if seq.n_frames < 2:
        raise ValueError("cannot resample a single-frame sequence")
    if seq.fps == target_fps:
        return seq
    duration = (seq.n_frames - 1) / seq.fps
    n_new = int(round(duration * target_fps)) + 1
    old_t = np.arange(seq.n_frames) / seq.fps
    new_t = np.arange(n_new) / target_fps
    new_t = np.minimum(new_t, old_t[-1])
    poses = np.empty((n_new, seq.poses.shape[1]))
    for c in range(seq.poses.shape[1]):
        poses[:, c] = np.interp(new_t, old_t, seq.poses[:, c])
    label = seq.label
    if label is not None:
        scaled = int(round(label.target_frame * target_fps / seq.fps))
        label = replace(label, target_frame=min(scaled, n_new - 1))
    return MotionSequence(target_fps, poses, seq.skeleton, label,
                          seq.provenance, seq.ident)


def filter_floating(sequences, skeleton: Skeleton,
                    threshold: float = 0.20) -> list[MotionSequence]:
    """Drop sequences with any frame whose lowest foot exceeds `threshold`.

    The boundary is strict: exactly `threshold` is kept.
    """
    lf = skeleton.joint_index("left_foot")
    rf = skeleton.joint_index("right_foot")
    kept = []
    for seq in sequences:
        pos = forward_kinematics(seq.batched_poses(), skeleton)
        lowest_foot = np.minimum(pos[:, lf, 2], pos[:, rf, 2])
        if not np.any(lowest_foot > threshold):
            kept.append(seq)
    return kept


def split_dataset(sequences, seed: int) -> DatasetSplit:
    """Deterministic shuffle then 80/10/10 by count."""
    if len(sequences) < 10:
        raise ValueError("need at least 10 sequences to split")
    ids = sorted(s.ident for s in sequences)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    shuffled = [ids[i] for i in order]
    n = len(ids)
    n_train = int(round(0.8 * n))
    n_val = int(round(0.1 * n))
    return DatasetSplit(tuple(shuffled[:n_train]),
                        tuple(shuffled[n_train:n_train + n_val]),
                        tuple(shuffled[n_train + n_val:]))


@dataclass
class TrainingWindow:
    """window_len + 1 poses (one leading context frame) plus a goal."""

    poses: np.ndarray        # (window_len + 1, pose_dim)
    start_frame: int         # absolute index of poses[1] in the source
    goal: GoalSpec
    goal_heading: np.ndarray
    source_id: str = ""


def sample_training_window(seq: MotionSequence, window_len: int,
                           rng: np.random.Generator,
                           horizon=(15, 150)) -> TrainingWindow:
    """One fixed-length window with its goal (stored label, else hindsight)."""
    if seq.n_frames < window_len + 1:
        raise SkipWindow(
            f"sequence {seq.ident} has {seq.n_frames} frames, needs {window_len + 1}")
    start = int(rng.integers(1, seq.n_frames - window_len + 1))
    poses = seq.poses[start - 1:start + window_len].copy()
    if seq.label is not None:
        goal = seq.label
        gh = np.asarray(heading_of(seq.pose_at(goal.target_frame), seq.skeleton))
    else:
        hg = hindsight_goal(seq, start, rng, horizon=horizon)
        goal, gh = hg.goal, hg.goal_heading
    return TrainingWindow(poses, start, goal, gh, seq.ident)


# ------------------------------------------------------------------ file IO

def save_motion(seq: MotionSequence, path) -> None:
    """Binary container: header + n x dim little-endian float64 rows."""
    has_label = seq.label is not None
    header = bytearray()
    header += MOTION_MAGIC
    header += struct.pack("<HH", MOTION_VERSION, 1 if has_label else 0)
    header += struct.pack("<d", seq.fps)
    header += bytes.fromhex(seq.skeleton.hash())
    header += struct.pack("<II", seq.n_frames, seq.poses.shape[1])
    if has_label:
        header += struct.pack("<3d", *seq.label.position)
        header += struct.pack("<I", seq.label.target_frame)
        tj = seq.label.target_joint.encode()
        header += struct.pack("<H", len(tj)) + tj
    prov = seq.provenance.encode()
    ident = seq.ident.encode()
    header += struct.pack("<H", len(prov)) + prov
    header += struct.pack("<H", len(ident)) + ident
    with open(path, "wb") as f:
        f.write(bytes(header))
        f.write(np.ascontiguousarray(seq.poses, dtype="<f8").tobytes())


def load_motion(path, skeleton: Skeleton) -> MotionSequence:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 8 or raw[:4] != MOTION_MAGIC:
        raise CorruptFileError(f"{path}: not a motion container")
    version, has_label = struct.unpack("<HH", raw[4:8])
    if version != MOTION_VERSION:
        raise VersionMismatchError(f"{path}: motion format version {version}")
    off = 8
    (fps,) = struct.unpack("<d", raw[off:off + 8]); off += 8
    skel_hash = raw[off:off + 32].hex(); off += 32
    if skel_hash != skeleton.hash():
        raise ModelMismatchError(f"{path}: skeleton hash mismatch")
    n_frames, dim = struct.unpack("<II", raw[off:off + 8]); off += 8
    label = None
    if has_label:
        pos = struct.unpack("<3d", raw[off:off + 24]); off += 24
        (tf,) = struct.unpack("<I", raw[off:off + 4]); off += 4
        (tl,) = struct.unpack("<H", raw[off:off + 2]); off += 2
        tj = raw[off:off + tl].decode(); off += tl
        label = GoalSpec(np.array(pos), tf, tj)
    (pl,) = struct.unpack("<H", raw[off:off + 2]); off += 2
    prov = raw[off:off + pl].decode(); off += pl
    (il,) = struct.unpack("<H", raw[off:off + 2]); off += 2
    ident = raw[off:off + il].decode(); off += il
    expected = n_frames * dim * 8
    payload = raw[off:]
    if len(payload) != expected:
        raise CorruptFileError(
            f"{path}: payload truncated ({len(payload)} of {expected} bytes)")
    poses = np.frombuffer(payload, dtype="<f8").reshape(n_frames, dim).copy()
    return MotionSequence(fps, poses, skeleton, label, prov, ident)


def save_motion_csv(seq: MotionSequence, path) -> None:
    """Lossless CSV twin (shortest-roundtrip float repr)."""
    lines = [f"# fps={seq.fps!r} skeleton={seq.skeleton.hash()} "
             f"provenance={seq.provenance} ident={seq.ident}"]
    if seq.label is not None:
        g = seq.label
        gx, gy, gz = (repr(float(v)) for v in g.position)
        lines.append(f"# goal={gx},{gy},{gz}"
                     f" target_frame={g.target_frame} target_joint={g.target_joint}")
    dim = seq.poses.shape[1]
    lines.append(",".join(f"c{i}" for i in range(dim)))
    for row in seq.poses:
        lines.append(",".join(repr(float(v)) for v in row))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_motion_csv(path, skeleton: Skeleton) -> MotionSequence:
    fps = 30.0
    provenance, ident, label = "locomotion", "", None
    rows = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for token in line[1:].split():
                    if token.startswith("fps="):
                        fps = float(token[4:])
                    elif token.startswith("provenance="):
                        provenance = token[11:]
                    elif token.startswith("ident="):
                        ident = token[6:]
                    elif token.startswith("goal="):
                        label = [float(v) for v in token[5:].split(",")]
                    elif token.startswith("target_frame="):
                        label = (label, int(token[13:]))
                    elif token.startswith("target_joint="):
                        label = (*label, token[13:])
                continue
            if line.split(",")[0] == "c0":
                continue
            rows.append([float(v) for v in line.split(",")])
    goal = None
    if label is not None:
        pos, tf, tj = label
        goal = GoalSpec(np.array(pos), tf, tj)
    return MotionSequence(fps, np.array(rows), skeleton, goal, provenance, ident)


def write_manifest(sequences, split: DatasetSplit, path) -> None:
    import json

    membership = {}
    for name, ids in (("train", split.train), ("val", split.val), ("test", split.test)):
        for i in ids:
            membership[i] = name
    payload = {
        "sequences": [
            {"ident": s.ident, "provenance": s.provenance, "frames": s.n_frames,
             "labeled": s.label is not None, "split": membership.get(s.ident, "")}
            for s in sorted(sequences, key=lambda s: s.ident)
        ],
    }
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
