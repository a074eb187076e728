"""Operator command line: corpus generation, training, generation,
evaluation, latent optimization, and file inspection.

Settings merge as defaults (preset) <- config file <- REACHGEN_* environment
variables <- command-line flags; the resolved merge is written into every
run directory next to the outputs.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .body import desk_skeleton, vector_to_pose
from .dataset import (MotionSequence, SyntheticGenConfig, filter_floating,
                      generate_synthetic_corpus, load_motion, save_motion,
                      save_motion_csv, split_dataset, standing_pose,
                      write_manifest)
from .errors import ReachGenError
from .evaluation import EvalConfig, emit_report, run_benchmark, distance_to_goal
from .intention import GoalSpec
from .latent_opt import OptObjective, optimize_latents, final_wrist_distance
from .model import fresh_model, load_checkpoint, save_checkpoint
from .rollout import GoalSchedule, generate as rollout_generate, save_record
from .training import TrainConfig, train

ENV_PREFIX = "REACHGEN_"

PRESETS = {
    "desk": {
        "data": {"n_locomotion": 150, "n_reaching": 100, "n_walk_reach": 60},
        "model": {"latent_dim": 16, "hidden_dim": 64, "n_layers": 4,
                  "dropout": 0.1},
        "train": {"alpha": 1e-2, "batch_size": 32, "epochs": 60,
                  "lr_base": 1e-3, "lr_final": 1e-4, "s_max": 10,
                  "ramp_epochs": 50, "window_len": 40,
                  "windows_per_sequence": 2},
        "eval": {"n_angles": 3, "n_heights": 3, "n_distances": 3,
                 "height_range": [0.7, 1.3], "distance_range": [0.4, 2.0],
                 "n_initial_poses": 2, "samples_per_pair": 3, "duration": 240},
    },
    "paper": {
        "data": {"n_locomotion": 1500, "n_reaching": 1000, "n_walk_reach": 600},
        "model": {"latent_dim": 64, "hidden_dim": 512, "n_layers": 15,
                  "dropout": 0.1},
        "train": {"alpha": 1e-2, "batch_size": 512, "epochs": 900,
                  "lr_base": 1e-4, "lr_final": 1e-5, "s_max": 10,
                  "ramp_epochs": 50, "window_len": 40,
                  "windows_per_sequence": 4},
        "eval": {"n_angles": 5, "n_heights": 5, "n_distances": 5,
                 "height_range": [0.0, 1.8], "distance_range": [0.5, 5.0],
                 "n_initial_poses": 6, "samples_per_pair": 5, "duration": 240},
    },
}


def _fail(code: str, message: str) -> int:
    print(f'error code={code} msg="{message}"', file=sys.stderr)
    return 1


def _deep_update(base: dict, extra: dict) -> dict:
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _deep_update(base[k], v)
        else:
            base[k] = v
    return base


def resolve_config(args) -> dict:
    """defaults(preset) <- config file <- env <- flags."""
    preset = args.preset or os.environ.get(ENV_PREFIX + "PRESET") or "desk"
    if preset not in PRESETS:
        raise ReachGenError(f"unknown preset {preset!r}")
    cfg = json.loads(json.dumps(PRESETS[preset]))  # deep copy
    cfg["preset"] = preset
    cfg["seed"] = 0
    cfg["workers"] = 1

    config_path = args.config or os.environ.get(ENV_PREFIX + "CONFIG")
    if config_path:
        try:
            with open(config_path) as f:
                _deep_update(cfg, json.load(f))
        except (OSError, json.JSONDecodeError) as e:
            raise ReachGenError(f"unreadable config {config_path}: {e}") from e

    if os.environ.get(ENV_PREFIX + "SEED"):
        cfg["seed"] = int(os.environ[ENV_PREFIX + "SEED"])
    if os.environ.get(ENV_PREFIX + "WORKERS"):
        cfg["workers"] = int(os.environ[ENV_PREFIX + "WORKERS"])

    if args.seed is not None:
        cfg["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        cfg["workers"] = args.workers
    return cfg


def _write_resolved(cfg: dict, out_dir: str, command: str,
                    input_hashes: dict | None = None) -> None:
    os.makedirs(out_dir, exist_ok=True)
    payload = {"command": command, "tool_version": __version__,
               "resolved": cfg, "input_hashes": input_hashes or {}}
    with open(os.path.join(out_dir, "resolved_config.json"), "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def _file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _parse_goal(text: str) -> np.ndarray:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 3:
        raise ReachGenError(f"goal must be x,y,z meters, got {text!r}")
    return np.array(parts)


# ------------------------------------------------------------- subcommands

def cmd_gen_data(args) -> int:
    cfg = resolve_config(args)
    out = args.out or "runs/gen-data"
    skeleton = desk_skeleton()
    gen_cfg = SyntheticGenConfig(seed=cfg["seed"], **cfg["data"])
    corpus = generate_synthetic_corpus(gen_cfg, skeleton)
    corpus = filter_floating(corpus, skeleton)
    split = split_dataset(corpus, cfg["seed"])
    motion_dir = os.path.join(out, "motions")
    os.makedirs(motion_dir, exist_ok=True)
    for seq in corpus:
        save_motion(seq, os.path.join(motion_dir, f"{seq.ident}.mot"))
    write_manifest(corpus, split, os.path.join(out, "manifest.json"))
    skeleton.save(os.path.join(out, "skeleton.json"))
    _write_resolved(cfg, out, "gen-data")
    print(f"wrote {len(corpus)} sequences to {out}")
    return 0


def _load_corpus(data_dir: str, skeleton):
    manifest_path = os.path.join(data_dir, "manifest.json")
    with open(manifest_path) as f:
        manifest = json.load(f)
    train_seqs, ids = [], []
    for entry in manifest["sequences"]:
        if entry["split"] != "train":
            continue
        seq = load_motion(os.path.join(data_dir, "motions",
                                       f"{entry['ident']}.mot"), skeleton)
        train_seqs.append(seq)
        ids.append(entry["ident"])
    return train_seqs, _file_hash(manifest_path)


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    out = args.out or "runs/train"
    skeleton = desk_skeleton()
    sequences, manifest_hash = _load_corpus(args.data, skeleton)
    if not sequences:
        raise ReachGenError(f"no training sequences in {args.data}")
    if args.epochs is not None:
        cfg["train"]["epochs"] = args.epochs
    train_cfg = TrainConfig(seed=cfg["seed"], **cfg["train"])
    model = fresh_model(skeleton, seed=cfg["seed"], **cfg["model"])
    os.makedirs(out, exist_ok=True)
    model, adam, rows = train(sequences, skeleton, train_cfg, model=model,
                              log_path=os.path.join(out, "train_log.csv"))
    ckpt = os.path.join(out, "checkpoint.ckpt")
    save_checkpoint(model, ckpt, adam_state=adam,
                    train_meta={"epochs": train_cfg.epochs})
    _write_resolved(cfg, out, "train", {"manifest": manifest_hash})
    print(f"trained {train_cfg.epochs} epochs; final total loss {rows[-1][5]:.6f}; "
          f"checkpoint {ckpt}")
    return 0


def _load_model(args):
    if not args.checkpoint:
        raise ReachGenError("missing --checkpoint path")
    if not os.path.exists(args.checkpoint):
        raise ReachGenError(f"checkpoint {args.checkpoint} does not exist")
    model, _ = load_checkpoint(args.checkpoint)
    return model


def cmd_generate(args) -> int:
    cfg = resolve_config(args)
    out = args.out or "runs/generate"
    model = _load_model(args)
    duration = args.duration
    positions = [_parse_goal(g) for g in args.goal]
    if not positions:
        raise ReachGenError("at least one --goal x,y,z is required")
    frames = args.goal_frame or []
    if frames and len(frames) != len(positions):
        raise ReachGenError("--goal-frame count must match --goal count")
    if not frames:
        step = duration // len(positions)
        frames = [step * (i + 1) for i in range(len(positions))]
    goals = tuple(GoalSpec(p, f) for p, f in zip(positions, frames))
    schedule = GoalSchedule(goals, policy=args.switch_policy, radius=args.radius)
    initial = standing_pose(model.skeleton)
    rng = np.random.default_rng(cfg["seed"])
    record = rollout_generate(initial, schedule, duration, model, rng,
                              mode=args.mode, ident="generated")
    os.makedirs(out, exist_ok=True)
    save_record(record, os.path.join(out, "motion.mot"),
                os.path.join(out, "motion.lat"))
    save_motion_csv(record.sequence, os.path.join(out, "motion.csv"))
    _write_resolved(cfg, out, "generate",
                    {"checkpoint": _file_hash(args.checkpoint)})
    dtg = distance_to_goal(record.sequence, goals[-1], model.skeleton)
    print(f"generated {duration} frames; final-goal DTG {dtg * 100:.1f} cm; "
          f"outputs in {out}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = resolve_config(args)
    out = args.out or "runs/evaluate"
    model = _load_model(args)
    eval_cfg = EvalConfig(**{k: tuple(v) if isinstance(v, list) else v
                             for k, v in cfg["eval"].items()})
    report = run_benchmark(model, eval_cfg, seed=cfg["seed"],
                           workers=cfg["workers"])
    os.makedirs(out, exist_ok=True)
    emit_report(report, out)
    _write_resolved(cfg, out, "evaluate",
                    {"checkpoint": _file_hash(args.checkpoint)})
    print(f"{len(report.rows)} rollouts: SR {report.sr * 100:.1f}% "
          f"FS {report.fs * 100:.1f}% DTG {report.dtg_cm:.1f} cm; reports in {out}")
    return 0


def cmd_optimize(args) -> int:
    cfg = resolve_config(args)
    out = args.out or "runs/optimize"
    model = _load_model(args)
    goal = GoalSpec(_parse_goal(args.goal[0]), args.duration)
    initial = standing_pose(model.skeleton)
    rng = np.random.default_rng(cfg["seed"])
    record = rollout_generate(initial, GoalSchedule.single(goal), args.duration,
                              model, rng, mode="sample")
    before = final_wrist_distance(record, goal, model)
    objective = OptObjective(goal_weight=1.0, prior_weight=args.prior_weight)
    refined, report = optimize_latents(record, goal, objective, model,
                                       steps=args.steps, lr=args.lr)
    os.makedirs(out, exist_ok=True)
    save_record(record, os.path.join(out, "initial.mot"),
                os.path.join(out, "initial.lat"))
    save_record(refined, os.path.join(out, "optimized.mot"),
                os.path.join(out, "optimized.lat"))
    report.to_csv(os.path.join(out, "opt_report.csv"))
    _write_resolved(cfg, out, "optimize",
                    {"checkpoint": _file_hash(args.checkpoint)})
    print(f"optimized {args.steps} steps: final wrist distance "
          f"{before * 100:.1f} cm -> {report.final_distance * 100:.1f} cm; "
          f"outputs in {out}")
    return 0


def cmd_inspect(args) -> int:
    skeleton = desk_skeleton()
    seq = load_motion(args.motion, skeleton)
    print(f"fps: {seq.fps}")
    print(f"frames: {seq.n_frames}")
    print(f"skeleton: {skeleton.hash()}")
    print(f"provenance: {seq.provenance}")
    print(f"ident: {seq.ident}")
    if seq.label is not None:
        g = seq.label
        print(f"label: goal=({g.position[0]:.4f},{g.position[1]:.4f},"
              f"{g.position[2]:.4f}) frame={g.target_frame} joint={g.target_joint}")
    else:
        print("label: none")
    if args.goal:
        goal = GoalSpec(_parse_goal(args.goal[0]), seq.n_frames - 1)
        dtg = distance_to_goal(seq, goal, skeleton)
        print(f"dtg_m: {dtg!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reachgen",
        description="goal-conditioned motion generation engine")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, workers=False):
        p.add_argument("--config", help="JSON settings file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--preset", choices=sorted(PRESETS), default=None)
        p.add_argument("--out", help="output directory")
        if workers:
            p.add_argument("--workers", type=int, default=None)

    p = sub.add_parser("gen-data", help="generate the synthetic corpus")
    common(p, workers=True)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="train the motion model")
    common(p, workers=True)
    p.add_argument("--data", required=True, help="gen-data output directory")
    p.add_argument("--epochs", type=int, default=None)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("generate", help="generate a goal-reaching motion")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--goal", action="append", default=[],
                   help="x,y,z meters (repeatable for multi-goal)")
    p.add_argument("--goal-frame", action="append", type=int,
                   help="target frame per goal")
    p.add_argument("--duration", type=int, default=240)
    p.add_argument("--mode", choices=("sample", "mean"), default="sample")
    p.add_argument("--switch-policy", choices=("on_frame", "on_reach"),
                   default="on_frame")
    p.add_argument("--radius", type=float, default=0.10)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("evaluate", help="run the goal-reaching benchmark")
    common(p, workers=True)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("optimize", help="latent-space refinement of a rollout")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--goal", action="append", default=[], required=True)
    p.add_argument("--duration", type=int, default=90)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--prior-weight", type=float, default=1e-3)
    p.set_defaults(fn=cmd_optimize)

    p = sub.add_parser("inspect", help="summarize a motion container file")
    p.add_argument("motion", help="path to a .mot file")
    p.add_argument("--goal", action="append", default=[],
                   help="x,y,z to report DTG against")
    p.set_defaults(fn=cmd_inspect)
    return parser


def dispatch(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ReachGenError as e:
        return _fail(type(e).__name__, str(e))
    except FileNotFoundError as e:
        return _fail("FileNotFound", str(e))


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
