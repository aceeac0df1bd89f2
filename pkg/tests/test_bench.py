from __future__ import annotations

import json

import pytest

from affordgen.bench import (
    CATEGORY_COUNTS,
    BenchmarkSuite,
    SuiteTask,
    ablation_tasks,
    emit_ablation_table,
    emit_report,
    load_suite,
    run_generation_bench,
    run_rollout_bench,
    validate_suite,
)
from affordgen.config import EngineConfig


@pytest.fixture(scope="module")
def suite():
    return load_suite()


@pytest.fixture(scope="module")
def tiny_config():
    return EngineConfig(rollouts_per_task=2, workers=1)


class TestSuite:
    def test_category_counts(self, suite):
        counts = {}
        for t in suite.tasks:
            counts[t.category] = counts.get(t.category, 0) + 1
        assert counts == CATEGORY_COUNTS
        assert len(suite.tasks) == 50

    def test_every_task_compiles(self, suite):
        assert validate_suite(suite) == []

    def test_bad_counts_rejected(self):
        with pytest.raises(ValueError, match="category counts"):
            BenchmarkSuite((SuiteTask("x", "grasping", "pick up the ball"),))

    def test_ablation_subset(self, suite):
        tasks = ablation_tasks(suite)
        cats = {t.category for t in tasks}
        assert "pouring" in cats and "mug_hanging" in cats
        assert any("by its handle" in t.description for t in tasks)


class TestGenerationBench:
    def test_report_shape_and_determinism(self, suite, tiny_config):
        sub = suite.subset(ids=("grasp_ball", "place_block_tray"))
        a = run_generation_bench(suite, "fr3", base_seed=3, config=tiny_config, tasks=sub)
        b = run_generation_bench(suite, "fr3", base_seed=3, config=tiny_config, tasks=sub)
        assert a.to_json() == b.to_json()
        assert all(0.0 <= t.generation_sr <= 1.0 for t in a.tasks)
        assert {t.task_id for t in a.tasks} == {"grasp_ball", "place_block_tray"}

    def test_failures_are_data(self, suite, tiny_config):
        report = run_generation_bench(
            suite, "fr3", base_seed=1, config=tiny_config, tasks=suite.subset(ids=("grasp_ball",))
        )
        t = report.tasks[0]
        assert t.rollouts == 2
        assert sum(t.failure_phases.values()) == round((1.0 - t.generation_sr) * t.rollouts)


class TestRolloutBench:
    def test_subtask_chain_monotone(self, suite, tiny_config):
        sub = suite.subset(ids=("pour_mug_bowl", "lh_ball_bowl"))
        report = run_rollout_bench(suite, "fr3", "annotated", base_seed=2, config=tiny_config, tasks=sub)
        def chain_order(key: str) -> tuple[int, int]:
            skill, phase = key.split("_", 1)
            return int(skill[1:]), 0 if phase == "grasp" else 1

        for t in report.tasks:
            keys = sorted(t.subtask_sr, key=chain_order)
            rates = [t.subtask_sr[k] for k in keys]
            assert all(a >= b - 1e-9 for a, b in zip(rates, rates[1:])), (t.task_id, t.subtask_sr)

    def test_reproducible(self, suite, tiny_config):
        sub = suite.subset(ids=("grasp_mug_handle",))
        a = run_rollout_bench(suite, "fr3", "annotated", base_seed=5, config=tiny_config, tasks=sub)
        b = run_rollout_bench(suite, "fr3", "annotated", base_seed=5, config=tiny_config, tasks=sub)
        assert a.to_json() == b.to_json()


class TestReports:
    def test_emit_text_csv_json(self, suite, tiny_config, tmp_path):
        sub = suite.subset(ids=("grasp_ball",))
        report = run_generation_bench(suite, "fr3", base_seed=7, config=tiny_config, tasks=sub)
        txt = emit_report(report, "text", tmp_path / "r.txt")
        csv = emit_report(report, "csv", tmp_path / "r.csv")
        js = emit_report(report, "json", tmp_path / "r.json")
        assert "grasp_ball" in txt.read_text()
        assert csv.read_text().startswith("task_id,")
        doc = json.loads(js.read_text())
        assert doc["tasks"][0]["task_id"] == "grasp_ball"
        # percentages carry one decimal
        assert "." in csv.read_text().splitlines()[1].split(",")[2]

    def test_json_round_trip_matches_report(self, suite, tiny_config, tmp_path):
        sub = suite.subset(ids=("grasp_ball",))
        report = run_generation_bench(suite, "fr3", base_seed=7, config=tiny_config, tasks=sub)
        js = emit_report(report, "json", tmp_path / "r.json")
        doc = json.loads(js.read_text())
        assert doc == report.to_json()

    def test_unknown_format(self, suite, tiny_config, tmp_path):
        sub = suite.subset(ids=("grasp_ball",))
        report = run_generation_bench(suite, "fr3", base_seed=7, config=tiny_config, tasks=sub)
        with pytest.raises(ValueError):
            emit_report(report, "yaml", tmp_path / "r.yaml")

    def test_identical_backends_identical_columns(self, suite, tiny_config, tmp_path):
        sub = suite.subset(ids=("grasp_mug_handle",))
        a = run_rollout_bench(suite, "fr3", "annotated", base_seed=4, config=tiny_config, tasks=sub)
        b = run_rollout_bench(suite, "fr3", "annotated", base_seed=4, config=tiny_config, tasks=sub)
        out = emit_ablation_table({"left": a, "right": b}, tmp_path / "abl.txt")
        for line in out.read_text().splitlines()[1:]:
            cols = line.split()
            assert cols[-1] == cols[-2]
