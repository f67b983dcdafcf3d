"""Batch command-line entry points for the whole pipeline.

Subcommands: gen-data, train-retarget, train-contact, retarget,
train-policy, ablate, workspace. Every command writes a manifest.json next
to its outputs; with --deterministic the manifest timestamp is pinned, so
identical seeds give byte-identical output trees.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import mlp
from .analysis import ABLATION_VARIANTS, success_ratio_ablation, workspace_comparison
from .datagen import (
    EmptyTasks,
    RobotState,
    Task,
    TaskSpec,
    build_dataset,
    load_dataset,
    save_dataset,
)
from .imitation import ImitationVecEnv, default_curriculum, final_stage_schedule, DomainParams
from .kinematics import QuadrupedModel, parse_config_text
from .motion import load_human_clip, save_clip
from .ppo import PpoConfig, load_policy, save_policy, train
from .retarget import (
    InsufficientData,
    RetargetRuntime,
    TrainConfig,
    build_index,
    contact_accuracy,
    load_bundle,
    train_contact,
    train_retarget,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

DATA_ERRORS = (FileNotFoundError, EmptyTasks, InsufficientData, mlp.CorruptFile, mlp.VersionMismatch, ValueError, KeyError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(EXIT_USAGE)


def _hash_file(path) -> str:
    return hashlib.sha256(open(path, "rb").read()).hexdigest()[:16]


def write_manifest(out_dir, command: str, args: dict, seeds, outputs, deterministic: bool, extra=None) -> str:
    os.makedirs(out_dir, exist_ok=True)
    if deterministic:
        stamp = "1970-01-01T00:00:00Z"
    else:
        epoch = os.environ.get("SOURCE_DATE_EPOCH")
        stamp = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(int(epoch) if epoch else time.time()))
    manifest = {
        "command": command,
        "args": {k: v for k, v in sorted(args.items())},
        "config_hash": hashlib.sha256(json.dumps(args, sort_keys=True).encode()).hexdigest()[:16],
        "seeds": seeds,
        "model_hash": QuadrupedModel.default().content_hash(),
        "outputs": sorted(os.path.relpath(p, out_dir) for p in outputs),
        "timestamp": stamp,
    }
    if extra:
        manifest.update(extra)
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _load_model(args) -> QuadrupedModel:
    if getattr(args, "model_config", None):
        return QuadrupedModel.from_config(args.model_config)
    return QuadrupedModel.default()


def _parse_tasks(spec: str, difficulty: float):
    tasks = []
    for name in [s.strip() for s in spec.split(",") if s.strip()]:
        tasks.append(TaskSpec(Task(name), difficulty))
    return tasks


def cmd_gen_data(args) -> int:
    config = parse_config_text(open(args.config).read()) if args.config else {}
    task_spec = config.get("tasks", "tilt_at_stand,manip_at_stand")
    difficulty = float(config.get("difficulty", 0.8))
    clips = int(config.get("clips_per_task", 10))
    style_seed = int(config.get("style_seed", 1))
    pairs = config.get("pairs_per_task")
    tasks = _parse_tasks(task_spec if isinstance(task_spec, str) else ",".join(task_spec), difficulty)
    model = _load_model(args)
    dataset = build_dataset(tasks, clips, seed=args.seed, style_seed=style_seed, model=model,
                            pairs_per_task=int(pairs) if pairs is not None else None)
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "dataset.jsonl")
    save_dataset(dataset, out_path)
    write_manifest(args.out, "gen-data", {"tasks": [t.task.value for t in tasks], "difficulty": difficulty,
                                          "clips_per_task": clips, "style_seed": style_seed},
                   [args.seed], [out_path], args.deterministic,
                   extra={"samples": len(dataset.samples), "dataset_hash": _hash_file(out_path)})
    print(f"wrote {len(dataset.samples)} samples to {out_path}")
    return EXIT_OK


def _write_history_csv(history, path):
    if not history:
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(history[0].keys()))
        writer.writeheader()
        writer.writerows(history)


def cmd_train_retarget(args) -> int:
    dataset = load_dataset(args.dataset)
    model = _load_model(args)
    state = RobotState(args.state)
    cfg = TrainConfig(max_steps=args.max_steps, seed=args.seed)
    net, history = train_retarget(dataset, state, cfg, model)
    os.makedirs(args.out, exist_ok=True)
    ckpt = os.path.join(args.out, f"retarget_{state.value}.json")
    mlp.save_checkpoint(net.params, net.spec, ckpt, extra={"state": state.value, "model_hash": model.content_hash(),
                                                           "norm": {"mean": net.norm.mean.tolist(), "std": net.norm.std.tolist()}})
    metrics = os.path.join(args.out, f"metrics_retarget_{state.value}.csv")
    _write_history_csv(history, metrics)
    outputs = [ckpt, metrics]
    if args.write_index:
        feats, states = build_index(dataset)
        feats = np.ascontiguousarray(feats)
        with open(os.path.join(args.out, "index.bin"), "wb") as fh:
            fh.write(feats.tobytes())
        with open(os.path.join(args.out, "index.json"), "w") as fh:
            json.dump({"count": int(feats.shape[0]), "dim": int(feats.shape[1]), "dtype": "<f8", "k": 5,
                       "states": states.tolist(), "state_order": ["stand", "sit", "walk"]}, fh)
        outputs += [os.path.join(args.out, "index.bin"), os.path.join(args.out, "index.json")]
    write_manifest(args.out, "train-retarget", {"dataset": os.path.abspath(args.dataset), "state": state.value,
                                                "max_steps": args.max_steps},
                   [args.seed], outputs, args.deterministic,
                   extra={"final_holdout_loss": history[-1]["holdout_loss"] if history else None})
    print(f"holdout loss {history[-1]['holdout_loss']:.4f} after {history[-1]['step']} steps -> {ckpt}")
    return EXIT_OK


def cmd_train_contact(args) -> int:
    dataset = load_dataset(args.dataset)
    state = RobotState(args.state)
    cfg = TrainConfig(max_steps=args.max_steps, seed=args.seed)
    net, history = train_contact(dataset, state, cfg)
    os.makedirs(args.out, exist_ok=True)
    ckpt = os.path.join(args.out, f"contact_{state.value}.json")
    mlp.save_checkpoint(net.params, net.spec, ckpt, extra={"state": state.value,
                                                           "norm": {"mean": net.norm.mean.tolist(), "std": net.norm.std.tolist()}})
    metrics = os.path.join(args.out, f"metrics_contact_{state.value}.csv")
    _write_history_csv(history, metrics)
    acc = contact_accuracy(net, dataset, state)
    write_manifest(args.out, "train-contact", {"dataset": os.path.abspath(args.dataset), "state": state.value,
                                               "max_steps": args.max_steps},
                   [args.seed], [ckpt, metrics], args.deterministic, extra={"holdout_accuracy": acc})
    print(f"holdout accuracy {acc:.4f} -> {ckpt}")
    return EXIT_OK


def cmd_retarget(args) -> int:
    model = _load_model(args)
    experts = load_bundle(args.bundle, model)
    human = load_human_clip(args.input)
    runtime = RetargetRuntime(
        experts,
        model,
        contact_correction=not args.no_contact_correction,
        temporal_clip=not args.no_rate_limit,
        state=RobotState(args.state),
    )
    clip, report = runtime.stream(human)
    out_dir = os.path.dirname(os.path.abspath(args.out)) or "."
    save_clip(clip, args.out)
    report["max_joint_velocity_deg_s"] = float(np.rad2deg(report["max_joint_velocity"]))
    report_path = args.report or os.path.join(out_dir, "retarget_report.json")
    with open(report_path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_manifest(out_dir, "retarget", {"bundle": os.path.abspath(args.bundle), "input": os.path.abspath(args.input),
                                         "contact_correction": not args.no_contact_correction,
                                         "rate_limit": not args.no_rate_limit, "state": args.state},
                   [], [args.out, report_path], args.deterministic, extra={"report": report})
    print(f"retargeted {report['frames']} frames; max joint velocity {report['max_joint_velocity_deg_s']:.1f} deg/s, "
          f"{report['velocity_violations']} violations -> {args.out}")
    return EXIT_OK


def cmd_train_policy(args) -> int:
    model = _load_model(args)
    state = RobotState(args.state)
    if args.no_curriculum:
        schedule = final_stage_schedule(state, dr_scale=0.0 if args.no_dr else 1.0)
    else:
        schedule = default_curriculum(state)
        if args.no_dr:
            from .imitation import CurriculumSchedule, CurriculumStage

            schedule = CurriculumSchedule(
                [CurriculumStage(s.tasks, s.difficulty_cap, 0.0) for s in schedule.stages]
            )
    fixed = DomainParams.nominal() if args.no_dr else None
    env = ImitationVecEnv(model, args.n_envs, state=state, seed=args.seed, schedule=schedule,
                          noise_std=args.noise_std, fixed_domain=fixed)
    cfg = PpoConfig(seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    log_path = os.path.join(args.out, "train_log.csv")
    policy, value, rows = train(env, schedule, cfg, total_steps=args.total_steps, log_path=log_path)
    policy_path = os.path.join(args.out, f"policy_{state.value}.json")
    save_policy(policy, policy_path)
    write_manifest(args.out, "train-policy", {"state": state.value, "total_steps": args.total_steps,
                                              "no_curriculum": args.no_curriculum, "no_dr": args.no_dr,
                                              "n_envs": args.n_envs, "noise_std": args.noise_std},
                   [args.seed], [policy_path, log_path], args.deterministic,
                   extra={"final_reward": rows[-1].mean_reward if rows else None,
                          "final_stage": rows[-1].stage if rows else None,
                          "domain_mode": "nominal" if args.no_dr else "randomized"})
    print(f"trained {env.total_steps} steps, final mean reward "
          f"{rows[-1].mean_reward:.4f} at stage {rows[-1].stage} -> {policy_path}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    model = _load_model(args)
    experts = load_bundle(args.bundle, model)
    policy_fn = None
    if args.policy and args.policy != "tracking-oracle":
        policy = load_policy(args.policy)
        policy_fn = lambda obs: policy.mean(obs)
    rows, episodes = success_ratio_ablation(
        experts, model, RobotState(args.state),
        variants=tuple(args.variants.split(",")),
        n_episodes=args.episodes, duration=args.duration,
        dr_scale=args.dr_scale, seed=args.seed, policy_fn=policy_fn,
        style_seed=args.style_seed,
    )
    os.makedirs(args.out, exist_ok=True)
    table = os.path.join(args.out, "success_ratios.csv")
    with open(table, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "state", "episodes", "mean_ratio", "mean_reward", "terminations"])
        for r in rows:
            writer.writerow([r.variant, r.state, r.episodes, r.mean_ratio, r.mean_reward, r.terminations])
    per_ep = os.path.join(args.out, "episodes.csv")
    with open(per_ep, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(episodes[0].keys()))
        writer.writeheader()
        writer.writerows(episodes)
    write_manifest(args.out, "ablate", {"bundle": os.path.abspath(args.bundle), "state": args.state,
                                        "episodes": args.episodes, "duration": args.duration,
                                        "variants": args.variants, "dr_scale": args.dr_scale},
                   [args.seed], [table, per_ep], args.deterministic,
                   extra={"ratios": {r.variant: r.mean_ratio for r in rows}})
    for r in rows:
        print(f"{r.variant:12s} state={r.state} mean ratio {r.mean_ratio:.3f} ({r.terminations} terminations)")
    return EXIT_OK


def cmd_workspace(args) -> int:
    model = _load_model(args)
    result = workspace_comparison(model, np.deg2rad(args.tilt_deg), joint_samples=args.joint_samples,
                                  tilt_samples=args.tilt_samples, resolution=args.resolution)
    os.makedirs(args.out, exist_ok=True)
    outputs = []
    for name in ("fixed_cloud", "tilt_cloud"):
        path = os.path.join(args.out, f"{name}.csv")
        np.savetxt(path, result[name], delimiter=",", header="x,y,z", comments="")
        outputs.append(path)
    summary = {k: result[k] for k in ("fixed_voxels", "tilt_voxels", "volume_ratio", "voxel_volume")}
    spath = os.path.join(args.out, "workspace.json")
    with open(spath, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    outputs.append(spath)
    write_manifest(args.out, "workspace", {"tilt_deg": args.tilt_deg, "resolution": args.resolution,
                                           "joint_samples": args.joint_samples, "tilt_samples": args.tilt_samples},
                   [], outputs, args.deterministic, extra=summary)
    print(f"volume ratio {result['volume_ratio']:.3f} "
          f"({result['tilt_voxels']} vs {result['fixed_voxels']} voxels)")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="quadmimic", description=__doc__)
    parser.add_argument("--deterministic", action="store_true", help="single-worker mode with pinned timestamps")
    parser.add_argument("--model-config", help="key/value file overriding the robot geometry")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="synthesize a paired human/robot dataset")
    p.add_argument("--config", help="key/value config (tasks, difficulty, clips_per_task, style_seed)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train-retarget", help="train the per-state mapper network")
    p.add_argument("--dataset", required=True)
    p.add_argument("--state", choices=[s.value for s in RobotState], required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-steps", type=int, default=5000)
    p.add_argument("--write-index", action=argparse.BooleanOptionalAction, default=True)
    p.set_defaults(func=cmd_train_retarget)

    p = sub.add_parser("train-contact", help="train the contact-probability network")
    p.add_argument("--dataset", required=True)
    p.add_argument("--state", choices=[s.value for s in RobotState], required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-steps", type=int, default=3000)
    p.set_defaults(func=cmd_train_contact)

    p = sub.add_parser("retarget", help="stream a human clip through an expert bundle")
    p.add_argument("--bundle", required=True)
    p.add_argument("--input", required=True, help="human clip (JSON-lines)")
    p.add_argument("--out", required=True, help="output motion clip (JSON-lines)")
    p.add_argument("--report", help="report path (default: retarget_report.json next to --out)")
    p.add_argument("--state", choices=[s.value for s in RobotState], default="stand")
    p.add_argument("--no-contact-correction", action="store_true")
    p.add_argument("--no-rate-limit", action="store_true")
    p.set_defaults(func=cmd_retarget)

    p = sub.add_parser("train-policy", help="train an imitation policy with PPO")
    p.add_argument("--state", choices=[s.value for s in RobotState], default="stand")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--total-steps", type=int, default=2_000_000)
    p.add_argument("--n-envs", type=int, default=32)
    p.add_argument("--noise-std", type=float, default=0.03)
    p.add_argument("--no-curriculum", action="store_true")
    p.add_argument("--no-dr", action="store_true")
    p.set_defaults(func=cmd_train_policy)

    p = sub.add_parser("ablate", help="success-time-ratio table over pipeline variants")
    p.add_argument("--bundle", required=True)
    p.add_argument("--state", choices=[s.value for s in RobotState], default="stand")
    p.add_argument("--episodes", type=int, default=128)
    p.add_argument("--duration", type=float, default=10.0)
    p.add_argument("--variants", default=",".join(ABLATION_VARIANTS))
    p.add_argument("--policy", default="tracking-oracle", help="'tracking-oracle' or a policy checkpoint path")
    p.add_argument("--dr-scale", type=float, default=0.5)
    p.add_argument("--style-seed", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("workspace", help="reachable-volume comparison with and without tilting")
    p.add_argument("--tilt-deg", type=float, default=40.0)
    p.add_argument("--resolution", type=float, default=0.01)
    p.add_argument("--joint-samples", type=int, default=55)
    p.add_argument("--tilt-samples", type=int, default=7)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_workspace)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DATA_ERRORS as exc:
        sys.stderr.write(f"data error: {exc}\n")
        return EXIT_DATA
    except FloatingPointError as exc:
        sys.stderr.write(f"numeric failure: {exc}\n")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
