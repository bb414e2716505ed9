"""Tests for the comparison tables."""

import pytest

from dsnn.errors import PlanError
from dsnn.pruning.plan import SparsityConfig, SparsityPlan
from dsnn.report import COMPARE_FIELDS, compare, rows_to_csv, rows_to_markdown, write_report
from dsnn.training.trainer import train_dsnn, train_single_sparsity


@pytest.fixture
def nets(pretrained, clusters, train_plan):
    tp = train_plan.replace(total_steps=4, freeze_steps=1)
    return [train_dsnn(pretrained, clusters, tp), train_single_sparsity(pretrained, clusters, "Small", tp)]


class TestCompare:
    def test_rows(self, nets, clusters):
        rows = compare(nets, clusters)
        assert [(r.sparsity, r.type) for r in rows] == [
            ("Large", "DSNN"),
            ("Medium", "DSNN"),
            ("Small", "Single"),
            ("Small", "DSNN"),
        ]
        small = rows[3]
        assert small.model == "dsnn"
        assert small.params < rows[0].params

    def test_checkpoint_against_itself(self, nets, clusters):
        rows = compare([nets[0], nets[0]], clusters)
        assert rows[0::2] == rows[1::2]

    def test_needs_two_checkpoints(self, nets, clusters):
        with pytest.raises(PlanError):
            compare(nets[:1], clusters)

    def test_incompatible_plans(self, nets, pretrained, clusters, train_plan):
        other_plan = SparsityPlan.of([
            train_plan.plan.full,
            SparsityConfig(name="Small", levels={"fc0.w": 0.5, "fc1.w": 0.5}),
        ])
        tp = train_plan.replace(plan=other_plan, total_steps=2, freeze_steps=0)
        other = train_dsnn(pretrained, clusters, tp, label="other")
        with pytest.raises(PlanError):
            compare([nets[0], other], clusters)

    def test_ablation_order(self, pretrained, clusters, train_plan):
        tp = train_plan.replace(total_steps=2, freeze_steps=0)
        late = train_dsnn(pretrained, clusters, tp, label="+distillation")
        early = train_dsnn(pretrained, clusters, tp, label="baseline")
        rows = compare([late, early], clusters, ablation=True)
        assert [r.model for r in rows[:2]] == ["baseline", "+distillation"]


class TestOutput:
    def test_csv_and_markdown(self, nets, clusters, tmp_path):
        rows = compare(nets, clusters)
        assert rows_to_csv(rows).splitlines()[0] == ",".join(COMPARE_FIELDS)
        md = rows_to_markdown(rows).splitlines()
        assert md[0] == "| " + " | ".join(COMPARE_FIELDS) + " |"
        assert len(md) == 2 + len(rows)
        write_report(rows, tmp_path / "out" / "t.csv", tmp_path / "out" / "t.md")
        assert (tmp_path / "out" / "t.md").read_text() == rows_to_markdown(rows)
