"""Benchmark harness: cylindrical goal grid around the initial human,
SR/FS/DTG metrics, per-bucket breakdowns, CSV + SVG reports.

Metric conventions (documented deviations from mesh-based setups):
lowest joint stands in for the lowest mesh vertex; FS applies no
contact/height gating; DTG aggregates as the mean over sequences.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .body import Pose, Skeleton, forward_kinematics
from .dataset import MotionSequence, standing_pose
from .errors import NumericFault
from .intention import GoalSpec
from .model import MotionModel
from .rollout import GoalSchedule, generate


@dataclass(frozen=True)
class EvalConfig:
    n_angles: int = 5
    n_heights: int = 5
    n_distances: int = 5
    height_range: tuple[float, float] = (0.0, 1.8)
    distance_range: tuple[float, float] = (0.5, 5.0)
    n_initial_poses: int = 6
    samples_per_pair: int = 5
    duration: int = 240           # 8 s at 30 fps
    success_radius: float = 0.10
    skate_threshold: float = 0.0066
    temperature: float = 1.0

    @property
    def n_rollouts(self) -> int:
        return (self.n_angles * self.n_heights * self.n_distances
                * self.n_initial_poses * self.samples_per_pair)

    @classmethod
    def reduced(cls) -> "EvalConfig":
        """Small grid for desk-scale comparisons (goals within easy reach)."""
        return cls(n_angles=3, n_heights=3, n_distances=3,
                   height_range=(0.7, 1.3), distance_range=(0.4, 2.0),
                   n_initial_poses=2, samples_per_pair=3, duration=240)


@dataclass
class GoalGrid:
    angles: np.ndarray
    heights: np.ndarray
    distances: np.ndarray
    goals: list        # GoalSpec per (angle, height, distance), angle-major
    combos: list       # parallel (angle, height, distance) values


def build_goal_grid(center_pose: Pose, cfg: EvalConfig = EvalConfig()) -> GoalGrid:
    """Goals covering a cylinder around the human: angles equally spaced over
    2 pi, heights and distances linearly spaced over their ranges."""
    angles = 2.0 * np.pi * np.arange(cfg.n_angles) / cfg.n_angles
    heights = np.linspace(*cfg.height_range, cfg.n_heights)
    distances = np.linspace(*cfg.distance_range, cfg.n_distances)
    center = np.asarray(center_pose.translation, dtype=np.float64)[:2]
    goals, combos = [], []
    for a in angles:
        for h in heights:
            for d in distances:
                pos = np.array([center[0] + d * np.cos(a),
                                center[1] + d * np.sin(a), h])
                goals.append(GoalSpec(pos, cfg.duration))
                combos.append((float(a), float(h), float(d)))
    return GoalGrid(angles, heights, distances, goals, combos)


def wrist_positions(seq: MotionSequence, skeleton: Skeleton,
                    joint: str = "right_wrist") -> np.ndarray:
    pos = forward_kinematics(seq.batched_poses(), skeleton)
    return np.asarray(pos[:, skeleton.joint_index(joint), :])


def distance_to_goal(seq: MotionSequence, goal: GoalSpec,
                     skeleton: Skeleton) -> float:
    """Closest the target joint ever gets to the goal, in meters."""
    wrists = wrist_positions(seq, skeleton, goal.target_joint)
    return float(np.min(np.linalg.norm(wrists - goal.position, axis=-1)))


def is_success(seq: MotionSequence, goal: GoalSpec, skeleton: Skeleton,
               radius: float = 0.10) -> bool:
    """Within the radius counts, boundary inclusive."""
    return distance_to_goal(seq, goal, skeleton) <= radius


def foot_skate(seq: MotionSequence, skeleton: Skeleton,
               threshold: float = 0.0066) -> float:
    """Fraction of frames whose lowest joint moves more than `threshold`
    (3D displacement, meters) to the next frame."""
    if seq.n_frames < 2:
        raise ValueError("foot skate needs at least 2 frames")
    pos = np.asarray(forward_kinematics(seq.batched_poses(), skeleton))
    lowest = np.argmin(pos[:, :, 2], axis=1)
    idx = np.arange(seq.n_frames - 1)
    a = pos[idx, lowest[:-1]]
    b = pos[idx + 1, lowest[:-1]]
    disp = np.linalg.norm(b - a, axis=-1)
    return float(np.mean(disp > threshold))


@dataclass
class EvalRow:
    pose_id: int
    angle: float
    height: float
    distance: float
    sample: int
    dtg_cm: float
    success: bool
    fs: float


@dataclass
class EvalReport:
    rows: list
    sr: float
    fs: float
    dtg_cm: float
    sr_by_angle: dict
    sr_by_height: dict
    sr_by_distance: dict
    n_failures: int = 0
    config: EvalConfig | None = None


def default_initial_poses(skeleton: Skeleton, n: int = 6) -> list[Pose]:
    """Corpus-style standing poses facing n evenly spread directions."""
    return [standing_pose(skeleton, yaw=2.0 * np.pi * k / n) for k in range(n)]


def _rollout_metrics(args):
    model, cfg, pose_vec, goal, combo, pose_id, sample, seed_key = args
    from .body import vector_to_pose
    pose = vector_to_pose(pose_vec, model.skeleton.n_rotated)
    rng = np.random.default_rng(seed_key)
    try:
        rec = generate(pose, GoalSchedule.single(goal), cfg.duration, model,
                       rng, mode="sample", temperature=cfg.temperature)
        seq = rec.sequence
        dtg = distance_to_goal(seq, goal, model.skeleton)
        row = EvalRow(pose_id, *combo, sample, dtg * 100.0,
                      dtg <= cfg.success_radius,
                      foot_skate(seq, model.skeleton, cfg.skate_threshold))
        return row, False
    except NumericFault:
        return EvalRow(pose_id, *combo, sample, float("inf"), False, 1.0), True


def run_benchmark(model: MotionModel, cfg: EvalConfig,
                  initial_poses: list[Pose] | None = None, seed: int = 0,
                  workers: int = 1) -> EvalReport:
    """One rollout per (pose, goal, sample); per-rollout seeds derive from the
    index tuple, so reports are identical for any worker count."""
    from .body import pose_to_vector

    if initial_poses is None:
        initial_poses = default_initial_poses(model.skeleton, cfg.n_initial_poses)
    if len(initial_poses) != cfg.n_initial_poses:
        raise ValueError(f"expected {cfg.n_initial_poses} initial poses")

    tasks = []
    for pose_id, pose in enumerate(initial_poses):
        grid = build_goal_grid(pose, cfg)
        pose_vec = np.asarray(pose_to_vector(pose))
        for goal_id, (goal, combo) in enumerate(zip(grid.goals, grid.combos)):
            for sample in range(cfg.samples_per_pair):
                tasks.append((model, cfg, pose_vec, goal, combo, pose_id,
                              sample, [seed, pose_id, goal_id, sample]))

    if workers <= 1:
        results = [_rollout_metrics(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_rollout_metrics, tasks,
                                    chunksize=max(len(tasks) // (workers * 4), 1)))

    rows = [r for r, _ in results]
    n_failures = sum(1 for _, failed in results if failed)
    return summarize(rows, cfg, n_failures)


def summarize(rows: list, cfg: EvalConfig | None = None,
              n_failures: int = 0) -> EvalReport:
    ok = [r for r in rows if np.isfinite(r.dtg_cm)]
    sr = float(np.mean([r.success for r in rows])) if rows else 0.0
    fs = float(np.mean([r.fs for r in rows])) if rows else 0.0
    dtg = float(np.mean([r.dtg_cm for r in ok])) if ok else float("inf")

    def bucket(key):
        vals = {}
        for r in rows:
            vals.setdefault(getattr(r, key), []).append(r.success)
        return {k: float(np.mean(v)) for k, v in sorted(vals.items())}

    return EvalReport(rows, sr, fs, dtg, bucket("angle"), bucket("height"),
                      bucket("distance"), n_failures, cfg)


# ------------------------------------------------------------------- output

def _svg_bar_chart(title: str, labels: list[str], values: list[float]) -> str:
    width, height, pad = 420, 300, 40
    n = max(len(values), 1)
    bar_w = (width - 2 * pad) / n
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<text x="{width // 2}" y="20" text-anchor="middle" '
        f'font-family="monospace" font-size="14">{title}</text>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" '
        f'y2="{height - pad}" stroke="black"/>',
    ]
    for i, (label, v) in enumerate(zip(labels, values)):
        h = (height - 2 * pad) * min(max(v, 0.0), 1.0)
        x = pad + i * bar_w + bar_w * 0.1
        y = height - pad - h
        parts.append(f'<rect x="{x:.1f}" y="{y:.1f}" width="{bar_w * 0.8:.1f}" '
                     f'height="{h:.1f}" fill="#4878a8"/>')
        parts.append(f'<text x="{x + bar_w * 0.4:.1f}" y="{height - pad + 16}" '
                     f'text-anchor="middle" font-family="monospace" '
                     f'font-size="11">{label}</text>')
        parts.append(f'<text x="{x + bar_w * 0.4:.1f}" y="{y - 4:.1f}" '
                     f'text-anchor="middle" font-family="monospace" '
                     f'font-size="10">{v:.2f}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


REPORT_HEADER = ("# lowest joint stands in for the lowest mesh vertex; "
                 "FS ungated; DTG = mean over sequences\n"
                 "pose_id,angle,height,distance,sample,dtg_cm,success,fs\n")


def emit_report(report: EvalReport, out_dir) -> list[str]:
    """Write report.csv, aggregates.csv, and SR bar charts; returns paths."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    paths = []

    path = os.path.join(out_dir, "report.csv")
    with open(path, "w") as f:
        f.write(REPORT_HEADER)
        for r in report.rows:
            f.write(f"{r.pose_id},{r.angle!r},{r.height!r},{r.distance!r},"
                    f"{r.sample},{r.dtg_cm!r},{int(r.success)},{r.fs!r}\n")
    paths.append(path)

    path = os.path.join(out_dir, "aggregates.csv")
    with open(path, "w") as f:
        f.write("metric,value\n")
        f.write(f"rollouts,{len(report.rows)}\n")
        f.write(f"sr,{report.sr!r}\n")
        f.write(f"fs,{report.fs!r}\n")
        f.write(f"dtg_cm,{report.dtg_cm!r}\n")
        f.write(f"failures,{report.n_failures}\n")
        for name, buckets in (("angle", report.sr_by_angle),
                              ("height", report.sr_by_height),
                              ("distance", report.sr_by_distance)):
            for k, v in buckets.items():
                f.write(f"sr_by_{name}[{k!r}],{v!r}\n")
    paths.append(path)

    for name, buckets in (("angle", report.sr_by_angle),
                          ("height", report.sr_by_height),
                          ("distance", report.sr_by_distance)):
        path = os.path.join(out_dir, f"sr_by_{name}.svg")
        labels = [f"{k:.2f}" for k in buckets]
        with open(path, "w") as f:
            f.write(_svg_bar_chart(f"success rate by {name}", labels,
                                   list(buckets.values())))
        paths.append(path)
    return paths


def parse_report_csv(path) -> list[EvalRow]:
    rows = []
    with open(path) as f:
        for line in f:
            if line.startswith("#") or line.startswith("pose_id"):
                continue
            p = line.strip().split(",")
            rows.append(EvalRow(int(p[0]), float(p[1]), float(p[2]), float(p[3]),
                                int(p[4]), float(p[5]), bool(int(p[6])), float(p[7])))
    return rows
