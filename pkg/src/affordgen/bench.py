"""Benchmark suite, generation/rollout harness, ablation runner, and reports.

The generation bench measures trajectory planning success over randomized
scene instances (data-collection mode). The rollout bench plans once per task
on the nominal scene and replays that script under fresh pose randomization,
evaluating goal and sub-task predicates — a scripted stand-in for trained
policy evaluation that stresses the same geometric tolerances.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .config import EngineConfig
from .pipeline import GenerationResult, build_world, generate_demo
from .randomizer import RandomizationSpec, randomize_scene, spec_to_json
from .tasks import CATEGORIES, SceneConfig, TaskSpec, compile_task, _skill_goals
from .world import Action, World, WorldState

CATEGORY_COUNTS = {
    "grasping": 10,
    "placing": 10,
    "stacking": 5,
    "push_pull": 6,
    "pouring": 8,
    "mug_hanging": 3,
    "long_horizon": 8,
}

AFFORDANCE_DEMANDING = ("pouring", "mug_hanging")


@dataclass(frozen=True)
class SuiteTask:
    id: str
    category: str
    description: str
    goal_overrides: dict = field(default_factory=dict)


@dataclass(frozen=True)
class BenchmarkSuite:
    tasks: tuple[SuiteTask, ...]
    rollouts_per_task: int = 30

    def __post_init__(self):
        counts: dict[str, int] = {}
        for t in self.tasks:
            if t.category not in CATEGORIES:
                raise ValueError(f"unknown category {t.category!r}")
            counts[t.category] = counts.get(t.category, 0) + 1
        if counts != CATEGORY_COUNTS:
            raise ValueError(f"suite category counts {counts} do not match {CATEGORY_COUNTS}")

    def subset(self, categories: tuple[str, ...] | None = None, ids: tuple[str, ...] | None = None) -> tuple[SuiteTask, ...]:
        out = self.tasks
        if categories:
            out = tuple(t for t in out if t.category in categories)
        if ids:
            out = tuple(t for t in out if t.id in ids)
        return out


def load_suite(path: str | Path | None = None) -> BenchmarkSuite:
    """The bundled 50-task suite, or one from a YAML file."""
    if path is None:
        text = resources.files("affordgen").joinpath("data/benchmark/suite.yaml").read_text()
    else:
        text = Path(path).read_text()
    raw = yaml.safe_load(text)
    if raw.get("schema") != "suite/1":
        raise ValueError(f"unsupported suite schema {raw.get('schema')!r}")
    tasks = tuple(
        SuiteTask(t["id"], t["category"], t["description"], t.get("goal_overrides", {}))
        for t in raw["tasks"]
    )
    return BenchmarkSuite(tasks, int(raw.get("rollouts_per_task", 30)))


def validate_suite(suite: BenchmarkSuite, embodiment: str = "fr3") -> list[str]:
    """Compile every task; returns the list of failures (empty when clean)."""
    problems = []
    for t in suite.tasks:
        try:
            spec, scene = compile_task(t.description, embodiment, seed=0, task_id=t.id)
            if spec.category != t.category:
                problems.append(f"{t.id}: compiled category {spec.category} != declared {t.category}")
        except Exception as exc:
            problems.append(f"{t.id}: {exc}")
    return problems


# -- results -----------------------------------------------------------------------


@dataclass(frozen=True)
class TaskResult:
    task_id: str
    category: str
    rollouts: int
    generation_sr: float
    goal_sr: float
    subtask_sr: dict[str, float] = field(default_factory=dict)
    failure_phases: dict[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class BenchReport:
    kind: str  # "generation" | "rollout"
    embodiment: str
    backend: str
    base_seed: int
    rollouts_per_task: int
    tasks: tuple[TaskResult, ...]
    fingerprint: str = ""

    def category_sr(self, metric: str = "goal_sr") -> dict[str, float]:
        by_cat: dict[str, list[float]] = {}
        for t in self.tasks:
            by_cat.setdefault(t.category, []).append(getattr(t, metric))
        return {k: float(np.mean(v)) for k, v in sorted(by_cat.items())}

    def overall(self, metric: str = "goal_sr") -> float:
        return float(np.mean([getattr(t, metric) for t in self.tasks])) if self.tasks else 0.0

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "embodiment": self.embodiment,
            "backend": self.backend,
            "base_seed": self.base_seed,
            "rollouts_per_task": self.rollouts_per_task,
            "fingerprint": self.fingerprint,
            "tasks": [
                {
                    "task_id": t.task_id,
                    "category": t.category,
                    "rollouts": t.rollouts,
                    "generation_sr": t.generation_sr,
                    "goal_sr": t.goal_sr,
                    "subtask_sr": dict(sorted(t.subtask_sr.items())),
                    "failure_phases": dict(sorted(t.failure_phases.items())),
                }
                for t in self.tasks
            ],
            "category_generation_sr": self.category_sr("generation_sr"),
            "category_goal_sr": self.category_sr("goal_sr"),
            "overall_generation_sr": self.overall("generation_sr"),
            "overall_goal_sr": self.overall("goal_sr"),
        }


def _fingerprint(*parts) -> str:
    blob = json.dumps(parts, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _cell_seed(base_seed: int, task_idx: int, rollout: int) -> int:
    return (base_seed * 7919 + task_idx * 104729 + rollout * 31 + 1) & 0x7FFFFFFF


# -- generation bench ----------------------------------------------------------------


def _generation_cell(args) -> tuple[int, int, bool, str]:
    (task, embodiment, config_kw, rand_kw, base_seed, task_idx, rollout) = args
    config = EngineConfig(**config_kw)
    seed = _cell_seed(base_seed, task_idx, rollout)
    try:
        spec, scene = compile_task(
            task.description, embodiment, seed=0, task_id=task.id, goal_overrides=task.goal_overrides
        )
        rspec = RandomizationSpec(master_seed=base_seed, **rand_kw)
        scene_r, _meta = randomize_scene(scene, rspec, rollout_seed=seed)
        result = generate_demo(spec, scene_r, config, seed=seed)
    except Exception as exc:  # failures are data, not crashes
        return task_idx, rollout, False, f"error:{type(exc).__name__}"
    phase = "" if result.success else (result.failure_phase or "unknown")
    return task_idx, rollout, result.success, phase


def run_generation_bench(
    suite: BenchmarkSuite,
    embodiment: str,
    base_seed: int = 0,
    config: EngineConfig | None = None,
    tasks: tuple[SuiteTask, ...] | None = None,
) -> BenchReport:
    """compile -> randomize -> plan for every task x rollout seed; generation
    success means every skill planned."""
    config = config or EngineConfig()
    tasks = tasks if tasks is not None else suite.tasks
    cells = [
        (task, embodiment, _config_kw(config), _rand_kw(config), base_seed, ti, r)
        for ti, task in enumerate(tasks)
        for r in range(config.rollouts_per_task)
    ]
    outcomes = _run_cells(_generation_cell, cells, config.workers)
    results = []
    for ti, task in enumerate(tasks):
        mine = [(r, ok, phase) for (t2, r, ok, phase) in outcomes if t2 == ti]
        n = len(mine)
        ok_count = sum(1 for _, ok, _ in mine if ok)
        phases: dict[str, int] = {}
        for _, ok, phase in mine:
            if not ok:
                phases[phase] = phases.get(phase, 0) + 1
        results.append(
            TaskResult(task.id, task.category, n, ok_count / n if n else 0.0, ok_count / n if n else 0.0, {}, phases)
        )
    return BenchReport(
        "generation",
        embodiment,
        config.backend,
        base_seed,
        config.rollouts_per_task,
        tuple(results),
        _fingerprint("generation", embodiment, config.backend, base_seed, [t.id for t in tasks]),
    )


def _config_kw(config: EngineConfig) -> dict:
    return {
        "cloud_n": config.cloud_n,
        "candidates_k": config.candidates_k,
        "backend": config.backend,
        "rollouts_per_task": config.rollouts_per_task,
        "workers": 1,
        "pose_jitter_radius": config.pose_jitter_radius,
        "pose_jitter_yaw": config.pose_jitter_yaw,
        "pour_rate": config.pour_rate,
    }


def _rand_kw(config: EngineConfig) -> dict:
    return {
        "translation_radius": config.pose_jitter_radius,
        "yaw_range": config.pose_jitter_yaw,
    }


def _run_cells(fn, cells, workers: int):
    if workers <= 1 or len(cells) <= 1:
        return [fn(c) for c in cells]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, cells, chunksize=4))


# -- rollout bench -------------------------------------------------------------------


def replay_trajectory(world: World, state: WorldState, trajectory) -> list[WorldState]:
    """Step the recorded action script in a (possibly perturbed) world,
    returning the state after every step."""
    states = []
    for s in trajectory.steps:
        state = world.step(state, Action(s.action_pose, s.action_gripper))
        states.append(state)
    return states


def _skill_end_steps(trajectory, n_skills: int) -> dict[int, int]:
    """Last step index of each skill, from the phase table labels."""
    ends: dict[int, int] = {}
    for label, _a, b in trajectory.phase_table:
        idx = int(label.split(":", 1)[0])
        ends[idx] = b - 1
    return ends


def _grasp_close_ends(trajectory) -> dict[int, int]:
    ends: dict[int, int] = {}
    for label, _a, b in trajectory.phase_table:
        idx, phase = label.split(":", 1)
        if phase == "grasp_close":
            ends[int(idx)] = b - 1
    return ends


def evaluate_rollout(
    world: World,
    initial: WorldState,
    spec: TaskSpec,
    trajectory,
    states: list[WorldState],
) -> tuple[bool, dict[str, bool]]:
    """(all final goals hold, cumulative per-skill sub-task flags)."""
    skill_ends = _skill_end_steps(trajectory, len(spec.skills))
    grasp_ends = _grasp_close_ends(trajectory)
    flags: dict[str, bool] = {}
    running = True
    for i, skill in enumerate(spec.skills):
        if i in grasp_ends:
            st = states[grasp_ends[i]]
            attached_ok = st.attached is not None and st.attached[0] == skill.object_id
            running = running and attached_ok
        flags[f"s{i}_grasp"] = running
        end = skill_ends.get(i)
        if end is not None:
            st = states[end]
            try:
                goal_ok = all(world.eval_goal(st, g, initial=initial) for g in _skill_goals(skill))
            except Exception:
                goal_ok = False
            running = running and goal_ok
        flags[f"s{i}_goal"] = running
    final = states[-1] if states else initial
    try:
        success = all(world.eval_goal(final, g, initial=initial) for g in spec.goals)
    except Exception:
        success = False
    return success, flags


def _rollout_task(args) -> tuple[int, dict]:
    (task, embodiment, backend, config_kw, rand_kw, base_seed, task_idx, n_rollouts) = args
    config = EngineConfig(**{**config_kw, "backend": backend})
    out = {
        "generated": False,
        "gen_phase": "",
        "successes": 0,
        "subtask_counts": {},
        "rollouts": n_rollouts,
    }
    try:
        spec, scene = compile_task(
            task.description, embodiment, seed=0, task_id=task.id, goal_overrides=task.goal_overrides
        )
        gen = generate_demo(spec, scene, config, seed=_cell_seed(base_seed, task_idx, 0))
    except Exception as exc:
        out["gen_phase"] = f"error:{type(exc).__name__}"
        return task_idx, out
    if not gen.success:
        out["gen_phase"] = gen.failure_phase or "unknown"
        return task_idx, out
    out["generated"] = True
    rspec = RandomizationSpec(master_seed=base_seed, **rand_kw)
    counts: dict[str, int] = {}
    for r in range(n_rollouts):
        seed = _cell_seed(base_seed, task_idx, r)
        try:
            scene_r, _meta = randomize_scene(scene, rspec, rollout_seed=seed)
            world, initial = build_world(scene_r, config)
            states = replay_trajectory(world, initial, gen.trajectory)
            success, flags = evaluate_rollout(world, initial, spec, gen.trajectory, states)
        except Exception:
            success, flags = False, {}
        if success:
            out["successes"] += 1
        for k, v in flags.items():
            if v:
                counts[k] = counts.get(k, 0) + 1
    out["subtask_counts"] = counts
    return task_idx, out


def run_rollout_bench(
    suite: BenchmarkSuite,
    embodiment: str,
    backend: str = "annotated",
    base_seed: int = 0,
    config: EngineConfig | None = None,
    tasks: tuple[SuiteTask, ...] | None = None,
) -> BenchReport:
    """Plan each task once on its nominal scene, then replay the script under
    per-rollout pose randomization and evaluate all goal and sub-task
    predicates."""
    config = config or EngineConfig()
    tasks = tasks if tasks is not None else suite.tasks
    cells = [
        (task, embodiment, backend, _config_kw(config), _rand_kw(config), base_seed, ti, config.rollouts_per_task)
        for ti, task in enumerate(tasks)
    ]
    outcomes = dict(_run_cells(_rollout_task, cells, config.workers))
    results = []
    for ti, task in enumerate(tasks):
        o = outcomes[ti]
        n = o["rollouts"]
        goal_sr = o["successes"] / n if n else 0.0
        subtask_sr = {k: v / n for k, v in o["subtask_counts"].items()}
        failure = {} if o["generated"] else {o["gen_phase"]: n}
        results.append(
            TaskResult(
                task.id,
                task.category,
                n,
                1.0 if o["generated"] else 0.0,
                goal_sr,
                subtask_sr,
                failure,
            )
        )
    return BenchReport(
        "rollout",
        embodiment,
        backend,
        base_seed,
        config.rollouts_per_task,
        tuple(results),
        _fingerprint("rollout", embodiment, backend, base_seed, [t.id for t in tasks]),
    )


# -- ablation ------------------------------------------------------------------------


def ablation_tasks(suite: BenchmarkSuite) -> tuple[SuiteTask, ...]:
    """Affordance-demanding subset: pouring, hanging, and handle grasps."""
    demanding = suite.subset(categories=AFFORDANCE_DEMANDING)
    handle = tuple(t for t in suite.tasks if "by its handle" in t.description)
    return demanding + handle


def run_ablation(
    suite: BenchmarkSuite,
    backends: tuple[str, ...] = ("annotated", "heuristic", "uniform"),
    embodiment: str = "fr3",
    base_seed: int = 0,
    config: EngineConfig | None = None,
    tasks: tuple[SuiteTask, ...] | None = None,
) -> dict[str, BenchReport]:
    """Rollout bench per affordance backend on the affordance-demanding tasks."""
    tasks = tasks if tasks is not None else ablation_tasks(suite)
    return {
        backend: run_rollout_bench(suite, embodiment, backend, base_seed, config, tasks)
        for backend in backends
    }


# -- report emission -----------------------------------------------------------------


def _pct(x: float) -> str:
    return f"{100.0 * x:5.1f}"


def emit_report(report: BenchReport, fmt: str, path: str | Path) -> Path:
    """Serialize a report as a text table, comma-separated values, or JSON."""
    path = Path(path)
    if fmt == "json":
        path.write_text(json.dumps(report.to_json(), sort_keys=True, indent=2) + "\n")
        return path
    rows = [
        (t.task_id, t.category, _pct(t.generation_sr), _pct(t.goal_sr), t.rollouts)
        for t in report.tasks
    ]
    if fmt == "csv":
        lines = ["task_id,category,generation_sr_pct,goal_sr_pct,rollouts"]
        lines += [f"{a},{b},{c.strip()},{d.strip()},{e}" for a, b, c, d, e in rows]
        for cat, sr in report.category_sr().items():
            lines.append(f"__category_{cat},,{_pct(report.category_sr('generation_sr')[cat]).strip()},{_pct(sr).strip()},")
        lines.append(f"__overall,,{_pct(report.overall('generation_sr')).strip()},{_pct(report.overall()).strip()},")
        path.write_text("\n".join(lines) + "\n")
        return path
    if fmt != "text":
        raise ValueError(f"unknown report format {fmt!r}")
    width = max((len(t.task_id) for t in report.tasks), default=10) + 2
    lines = [
        f"{report.kind} bench  embodiment={report.embodiment}  backend={report.backend}  "
        f"seed={report.base_seed}  rollouts={report.rollouts_per_task}  fp={report.fingerprint}",
        f"{'task':{width}s}{'category':14s}{'gen%':>7s}{'goal%':>7s}",
    ]
    for t in report.tasks:
        lines.append(f"{t.task_id:{width}s}{t.category:14s}{_pct(t.generation_sr):>7s}{_pct(t.goal_sr):>7s}")
        for k, v in sorted(t.subtask_sr.items()):
            lines.append(f"{'':{width}s}  sub {k:18s}{_pct(v):>7s}")
    lines.append("-" * (width + 28))
    for cat, sr in report.category_sr().items():
        lines.append(
            f"{cat:{width}s}{'':14s}{_pct(report.category_sr('generation_sr')[cat]):>7s}{_pct(sr):>7s}"
        )
    lines.append(
        f"{'overall':{width}s}{'':14s}{_pct(report.overall('generation_sr')):>7s}{_pct(report.overall()):>7s}"
    )
    path.write_text("\n".join(lines) + "\n")
    return path


def emit_ablation_table(reports: dict[str, BenchReport], path: str | Path) -> Path:
    """Side-by-side per-task goal SR across backends (text table)."""
    path = Path(path)
    backends = list(reports)
    tasks = reports[backends[0]].tasks
    width = max(len(t.task_id) for t in tasks) + 2
    lines = [f"{'task':{width}s}{'category':14s}" + "".join(f"{b:>12s}" for b in backends)]
    for i, t in enumerate(tasks):
        cells = "".join(f"{_pct(reports[b].tasks[i].goal_sr):>12s}" for b in backends)
        lines.append(f"{t.task_id:{width}s}{t.category:14s}{cells}")
    agg = "".join(f"{_pct(reports[b].overall()):>12s}" for b in backends)
    lines.append(f"{'overall':{width}s}{'':14s}{agg}")
    path.write_text("\n".join(lines) + "\n")
    return path
