"""Command-line interface: compile-task, gen, bench-gen, bench-rollout,
ablate, inspect, validate.

Exit codes: 0 success, 2 validation error, 3 generation-failure threshold
breach.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from .bench import (
    ablation_tasks,
    emit_ablation_table,
    emit_report,
    load_suite,
    run_ablation,
    run_generation_bench,
    run_rollout_bench,
    validate_suite,
)
from .config import load_config
from .dataset import DemoRecord, read_dataset, summarize, write_dataset
from .pipeline import build_world, generate_demo
from .randomizer import RandomizationSpec, randomize_scene, spec_to_json
from .tasks import CompileError, SceneValidationError, compile_task, scene_to_json, validate_scene
from .world import CameraConfig, load_asset_data

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_GENERATION_GATE = 3


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--embodiment", default="fr3")
    p.add_argument("--backend", default=None, help="affordance backend (uniform|annotated|heuristic)")
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None, help="YAML config overriding engine defaults")
    p.add_argument("--workers", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="affordgen", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile-task", help="compile a description into task + scene JSON")
    p.add_argument("description")
    _add_common(p)

    p = sub.add_parser("gen", help="generate a demonstration dataset for one task")
    p.add_argument("description")
    p.add_argument("--demos", type=int, default=10)
    p.add_argument("--depth", action="store_true", help="record depth observations")
    _add_common(p)

    p = sub.add_parser("bench-gen", help="generation-success benchmark")
    p.add_argument("--rollouts", type=int, default=None)
    p.add_argument("--suite", default=None, help="suite YAML (default: bundled 50-task suite)")
    p.add_argument("--category", default=None)
    p.add_argument("--gate", type=float, default=None, help="exit 3 when overall generation SR falls below this")
    p.add_argument("--format", default="text", choices=("text", "csv", "json"))
    _add_common(p)

    p = sub.add_parser("bench-rollout", help="scripted-rollout goal benchmark")
    p.add_argument("--rollouts", type=int, default=None)
    p.add_argument("--suite", default=None)
    p.add_argument("--category", default=None)
    p.add_argument("--format", default="text", choices=("text", "csv", "json"))
    _add_common(p)

    p = sub.add_parser("ablate", help="affordance-backend ablation on demanding tasks")
    p.add_argument("--rollouts", type=int, default=None)
    p.add_argument("--suite", default=None)
    p.add_argument("--backends", default="annotated,heuristic,uniform")
    _add_common(p)

    p = sub.add_parser("inspect", help="pretty-print a dataset manifest or report file")
    p.add_argument("path")

    p = sub.add_parser("validate", help="validate asset / scene / task / suite files")
    p.add_argument("path")
    p.add_argument("--kind", choices=("asset", "scene", "task", "suite"), default=None)
    _add_common(p)

    return parser


def _engine_config(args):
    overrides = {}
    if args.backend:
        overrides["backend"] = args.backend
    if getattr(args, "workers", None):
        overrides["workers"] = args.workers
    if getattr(args, "rollouts", None):
        overrides["rollouts_per_task"] = args.rollouts
    return load_config(args.config, **overrides)


def _cmd_compile(args) -> int:
    try:
        spec, scene = compile_task(args.description, args.embodiment, args.seed)
    except (CompileError, SceneValidationError) as exc:
        print(f"compile error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    doc = {
        "task": {
            "id": spec.id,
            "category": spec.category,
            "description": spec.description,
            "embodiment": spec.embodiment,
            "skills": [
                {"kind": s.kind, "object": s.object_id, "target": s.target_id, "phrase": s.grasp_phrase}
                for s in spec.skills
            ],
            "goals": [
                {"predicate": g.predicate, "subject": g.subject, "reference": g.reference, "threshold": g.threshold}
                for g in spec.goals
            ],
        },
        "scene": scene_to_json(scene),
    }
    text = json.dumps(doc, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


def _cmd_gen(args) -> int:
    config = _engine_config(args)
    out = Path(args.out or "dataset_out")
    try:
        spec, scene = compile_task(args.description, args.embodiment, seed=0)
    except (CompileError, SceneValidationError) as exc:
        print(f"compile error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    rspec = RandomizationSpec(
        master_seed=args.seed,
        translation_radius=config.pose_jitter_radius,
        yaw_range=config.pose_jitter_yaw,
    )
    camera = None
    if args.depth:
        from .geometry import Pose, quat_from_rpy

        camera = CameraConfig(
            Pose(quat_from_rpy(0.0, 1.1, 0.0), np.array([0.0, 0.0, 0.9])), height=64, width=64
        )
    demos = []
    n_success = 0
    for i in range(args.demos):
        scene_r, meta = randomize_scene(scene, rspec, rollout_seed=i)
        result = generate_demo(spec, scene_r, config, seed=i, camera=camera)
        if not result.success:
            print(f"demo {i}: generation failure at {result.failure_skill}/{result.failure_phase}")
            continue
        n_success += 1
        world, initial = build_world(scene_r, config)
        final = result.trajectory.final_state
        goals_ok = all(world.eval_goal(final, g, initial=initial) for g in spec.goals)
        demos.append(
            DemoRecord(
                trajectory=result.trajectory,
                seed=i,
                success=goals_ok,
                subtasks={},
                visual=meta.to_json(),
                grasp_audits=result.audits,
                depth_frames=result.trajectory.depth_frames,
            )
        )
    manifest = write_dataset(demos, spec.id, args.embodiment, spec_to_json(rspec), out)
    stats = summarize(manifest)
    print(json.dumps(stats, indent=2, sort_keys=True))
    print(f"wrote {len(demos)} demos ({n_success}/{args.demos} generated) to {out}")
    return EXIT_OK


def _suite_and_tasks(args):
    suite = load_suite(args.suite)
    tasks = suite.tasks
    if getattr(args, "category", None):
        tasks = suite.subset(categories=(args.category,))
    return suite, tasks


def _cmd_bench_gen(args) -> int:
    config = _engine_config(args)
    suite, tasks = _suite_and_tasks(args)
    report = run_generation_bench(suite, args.embodiment, args.seed, config, tasks)
    out = Path(args.out or f"bench_gen_{args.embodiment}.{args.format if args.format != 'text' else 'txt'}")
    emit_report(report, args.format, out)
    print(out.read_text())
    if args.gate is not None and report.overall("generation_sr") < args.gate:
        print(f"generation SR {report.overall('generation_sr'):.3f} below gate {args.gate}", file=sys.stderr)
        return EXIT_GENERATION_GATE
    return EXIT_OK


def _cmd_bench_rollout(args) -> int:
    config = _engine_config(args)
    suite, tasks = _suite_and_tasks(args)
    report = run_rollout_bench(suite, args.embodiment, config.backend, args.seed, config, tasks)
    out = Path(args.out or f"bench_rollout_{args.embodiment}.{args.format if args.format != 'text' else 'txt'}")
    emit_report(report, args.format, out)
    print(out.read_text())
    return EXIT_OK


def _cmd_ablate(args) -> int:
    config = _engine_config(args)
    suite = load_suite(args.suite)
    backends = tuple(b.strip() for b in args.backends.split(","))
    reports = run_ablation(suite, backends, args.embodiment, args.seed, config)
    out = Path(args.out or "ablation.txt")
    emit_ablation_table(reports, out)
    print(out.read_text())
    return EXIT_OK


def _cmd_inspect(args) -> int:
    path = Path(args.path)
    if path.is_dir():
        manifest, demos = read_dataset(path)
        print(json.dumps(summarize(manifest), indent=2, sort_keys=True))
        for demo in demos:
            h = demo.header
            print(
                f"  {demo.manifest_entry['file']}: seed={h['seed']} steps={demo.step_count} "
                f"success={demo.manifest_entry['success']} phases={len(h['phases'])}"
            )
        return EXIT_OK
    doc = json.loads(path.read_text())
    print(json.dumps(doc, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_validate(args) -> int:
    path = Path(args.path)
    kind = args.kind
    if kind is None:
        kind = "suite" if "suite" in path.name else ("asset" if path.suffix == ".yaml" else "scene")
    try:
        if kind == "asset":
            asset = load_asset_data(yaml.safe_load(path.read_text()))
            print(f"asset {asset.id!r}: ok ({len(asset.shapes.shapes)} shapes)")
            return EXIT_OK
        if kind == "suite":
            suite = load_suite(path)
            problems = validate_suite(suite, args.embodiment)
            if problems:
                for p in problems:
                    print(p, file=sys.stderr)
                return EXIT_VALIDATION
            print(f"suite ok: {len(suite.tasks)} tasks")
            return EXIT_OK
        if kind == "task":
            raw = yaml.safe_load(path.read_text())
            spec, scene = compile_task(
                raw["description"],
                raw.get("embodiment", args.embodiment),
                args.seed,
                task_id=raw.get("id"),
                goal_overrides=raw.get("goal_overrides"),
            )
            declared = raw.get("category")
            if declared and declared != spec.category:
                print(f"category mismatch: declared {declared}, compiled {spec.category}", file=sys.stderr)
                return EXIT_VALIDATION
            print(f"task {spec.id!r}: ok ({spec.category}, {len(spec.skills)} skills)")
            return EXIT_OK
        # scene JSON
        doc = json.loads(path.read_text())
        from .tasks import _scene_from_json
        from .kinematics import load_embodiment

        scene = _scene_from_json(doc, args.embodiment, load_embodiment(args.embodiment).home)
        report = validate_scene(scene)
        if not report.ok:
            for v in report.violations:
                print(v, file=sys.stderr)
            return EXIT_VALIDATION
        print("scene ok")
        return EXIT_OK
    except (CompileError, SceneValidationError, ValueError, KeyError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


_COMMANDS = {
    "compile-task": _cmd_compile,
    "gen": _cmd_gen,
    "bench-gen": _cmd_bench_gen,
    "bench-rollout": _cmd_bench_rollout,
    "ablate": _cmd_ablate,
    "inspect": _cmd_inspect,
    "validate": _cmd_validate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return _COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
