"""Tests for the trainers: pretraining, DSNN steps, freezing, baselines, eval."""

import numpy as np
import pytest

from dsnn.core.autodiff import backward
from dsnn.core.optim import adam_step
from dsnn.data.synthetic import SyntheticDataset, gen_gaussian_clusters
from dsnn.errors import ConfigError, DivergenceError, UnknownConfigError
from dsnn.models.mlp import MlpModel
from dsnn.models.toy import build_toy_plan
from dsnn.pruning.masks import BinaryMask, mask_union, prune_count, snn_structured_mask
from dsnn.pruning.plan import SparsityConfig, SparsityPlan
from dsnn.pruning.schedule import PruneSchedule, cubic_sparsity
from dsnn.training.losses import distillation_loss, ground_truth_loss
from dsnn.training.metrics import get_metrics
from dsnn.training.supernet import SuperNetwork
from dsnn.training.trainer import (
    ABLATION_VARIANTS,
    TrainPlan,
    dsnn_train_step,
    evaluate,
    pretrain,
    progressive_freeze,
    run_ablation,
    run_pipeline,
    train_dsnn,
    train_single_sparsity,
    train_snn_baseline,
)


def _values(net):
    return {n: p.value.copy() for n, p in net.model.parameters.items()}


def _same(a, b):
    return all(np.array_equal(a[n], b[n]) for n in a)


class TestTrainPlan:
    def test_validation(self, toy_plan):
        with pytest.raises(ConfigError) as exc:
            TrainPlan(plan=toy_plan, batch_size=0)
        assert exc.value.key == "train.batch_size"

    def test_refresh_steps(self, toy_plan):
        tp = TrainPlan(plan=toy_plan, mask_update_frequency=5)
        assert [s for s in range(12) if tp.is_refresh_step(s)] == [0, 5, 10]

    def test_never_refresh_after_first(self, toy_plan):
        tp = TrainPlan(plan=toy_plan, mask_update_frequency=None)
        assert tp.is_refresh_step(0) and not tp.is_refresh_step(100)

    def test_eager_refreshes_every_step(self, toy_plan):
        tp = TrainPlan(plan=toy_plan, lazy_update=False)
        assert all(tp.is_refresh_step(s) for s in range(5))


class TestPretrain:
    def test_zero_steps_leaves_init(self, clusters, train_plan):
        model = MlpModel(input_dim=10, hidden=[20], classes=4, seed=0)
        before = {n: p.value.copy() for n, p in model.parameters.items()}
        net = pretrain(model, clusters, 0, train_plan)
        assert _same(before, _values(net))
        assert net.history == []

    def test_deterministic(self, clusters, train_plan):
        a = pretrain(MlpModel(input_dim=10, hidden=[20], classes=4, seed=0), clusters, 5, train_plan)
        b = pretrain(MlpModel(input_dim=10, hidden=[20], classes=4, seed=0), clusters, 5, train_plan)
        assert _same(_values(a), _values(b))
        assert [r.deterministic() for r in a.history] == [r.deterministic() for r in b.history]

    def test_records_full_config_only(self, pretrained):
        assert {r.config for r in pretrained.history} == {"Large"}
        assert pretrained.trained_configs == ["Large"]
        assert pretrained.step == 10

    def test_negative_steps(self, mlp, clusters, train_plan):
        with pytest.raises(ConfigError):
            pretrain(mlp, clusters, -1, train_plan)

    def test_divergence_names_config_and_step(self, train_plan):
        inputs = np.full((8, 10), np.inf)
        data = SyntheticDataset("clusters", 0, inputs, np.zeros(8, dtype=np.int64), 4)
        model = MlpModel(input_dim=10, hidden=[20], classes=4)
        with pytest.raises(DivergenceError) as exc:
            pretrain(model, data, 3, train_plan.replace(batch_size=4))
        assert exc.value.config == "Large"
        assert exc.value.step == 0
        assert exc.value.exit_code == 2
        assert get_metrics().divergences.value == 1


class TestDsnnStep:
    def test_full_only_plan_matches_dense_training(self, pretrained, clusters, train_plan):
        tp = train_plan.replace(plan=SparsityPlan.of([train_plan.plan.full]), total_steps=5)
        net = train_dsnn(pretrained, clusters, tp)

        model = pretrained.model.clone()
        shadows = {n: p.ema for n, p in model.parameters.items()}
        model.load_values(shadows, shadows)
        dense = pretrain(model, clusters, 5, tp)
        assert _same(_values(net), _values(dense))

    def test_one_record_per_config(self, pretrained, clusters, train_plan):
        net = train_dsnn(pretrained, clusters, train_plan.replace(total_steps=1, freeze_steps=0))
        assert [r.config for r in net.history] == ["Large", "Medium", "Small"]

    def test_masks_constant_without_refresh(self, pretrained, clusters, train_plan):
        tp = train_plan.replace(mask_update_frequency=None)
        net = SuperNetwork.create(pretrained.model.clone(), tp.plan, tp.block_height, variant="dsnn")
        state = tp.adam_state()
        batches = clusters.batches(tp.batch_size, tp.seed)
        dsnn_train_step(net, next(batches), 0, tp, state)
        after_first = {c: dict(m) for c, m in net.masks.items()}
        for step in range(1, 6):
            dsnn_train_step(net, next(batches), step, tp, state)
        assert net.masks == after_first

    def test_score_grads_are_summed(self, pretrained, clusters, train_plan):
        net = SuperNetwork.create(pretrained.model.clone(), train_plan.plan, 2, variant="dsnn")
        dsnn_train_step(net, next(clusters.batches(32, 0)), 0, train_plan, train_plan.adam_state())
        assert set(net.score_grads) == {"fc0.w", "fc1.w"}
        assert np.any(net.score_grads["fc0.w"] != 0.0)
        assert net.step == 1 and net.ema_updates == 1

    def test_eager_update_steps_per_config(self, pretrained, clusters, train_plan):
        tp = train_plan.replace(lazy_update=False)
        net = SuperNetwork.create(pretrained.model.clone(), tp.plan, tp.block_height, variant="dsnn")
        state = tp.adam_state()
        dsnn_train_step(net, next(clusters.batches(32, 0)), 0, tp, state)
        assert state.step == 3

    def test_mask_refreshes_recorded(self, pretrained, clusters, train_plan):
        train_dsnn(pretrained, clusters, train_plan.replace(total_steps=6, freeze_steps=0))
        # Refresh steps 0 and 5, for Medium and Small.
        assert get_metrics().mask_refreshes.value == 4


class TestTrainDsnn:
    def test_realized_sparsity_after_ramp(self, pretrained, clusters, train_plan):
        net = train_dsnn(pretrained, clusters, train_plan.replace(freeze_steps=0))
        assert net.realized_sparsity("Small") == pytest.approx({"fc0.w": 0.9, "fc1.w": 0.5})
        assert net.realized_sparsity("Medium") == pytest.approx({"fc0.w": 0.7, "fc1.w": 0.0})
        assert net.realized_sparsity("Large") == {"fc0.w": 0.0, "fc1.w": 0.0}
        assert net.trained_configs == ["Large", "Medium", "Small"]

    def test_masks_are_block_aligned(self, pretrained, clusters, train_plan):
        net = train_dsnn(pretrained, clusters, train_plan.replace(freeze_steps=0))
        for mask in net.masks["Small"].values():
            BinaryMask.from_array(mask.to_array(), block_height=2)

    def test_deterministic(self, pretrained, clusters, train_plan):
        a = train_dsnn(pretrained, clusters, train_plan)
        b = train_dsnn(pretrained, clusters, train_plan)
        assert _same(_values(a), _values(b))
        assert a.masks == b.masks

    def test_does_not_touch_pretrained(self, pretrained, clusters, train_plan):
        before = _values(pretrained)
        train_dsnn(pretrained, clusters, train_plan.replace(total_steps=3, freeze_steps=0))
        assert _same(before, _values(pretrained))


class TestProgressiveFreeze:
    def test_zero_steps_is_noop(self, pretrained, clusters, train_plan):
        net = train_dsnn(pretrained, clusters, train_plan.replace(freeze_steps=0))
        before = _values(net)
        progressive_freeze(net, clusters, train_plan, steps=0)
        assert _same(before, _values(net))

    def test_all_ones_union_changes_nothing(self, pretrained, clusters, train_plan):
        plan = SparsityPlan.of([
            train_plan.plan.full,
            SparsityConfig(name="Dense", levels={"fc*": 0.0}),
        ])
        tp = train_plan.replace(plan=plan)
        net = SuperNetwork.create(pretrained.model.clone(), plan, 2, variant="dsnn")
        before = _values(net)
        ema_before = {n: p.ema.copy() for n, p in net.model.parameters.items()}
        progressive_freeze(net, clusters, tp, steps=3)
        assert _same(before, _values(net))
        assert _same(ema_before, {n: p.ema for n, p in net.model.parameters.items()})

    def test_only_weights_outside_union_move(self, pretrained, clusters, train_plan):
        net = train_dsnn(pretrained, clusters, train_plan.replace(freeze_steps=0))
        before = _values(net)
        progressive_freeze(net, clusters, train_plan, steps=3)
        after = _values(net)
        moved_any = False
        for w in net.model.prunable:
            union = mask_union([net.masks[c][w] for c in ("Medium", "Small")]).to_array()
            np.testing.assert_array_equal(after[w][union], before[w][union])
            moved_any |= bool(np.any(after[w][~union] != before[w][~union]))
        for name in ("fc0.b", "fc1.b"):
            np.testing.assert_array_equal(after[name], before[name])
        assert moved_any

    def test_freeze_records(self, pretrained, clusters, train_plan):
        net = train_dsnn(pretrained, clusters, train_plan)
        freeze_rows = [r for r in net.history if r.config == "freeze"]
        assert len(freeze_rows) == train_plan.freeze_steps
        assert freeze_rows[0].step == train_plan.total_steps


class TestBaselines:
    def test_single_sparsity(self, pretrained, clusters, train_plan):
        net = train_single_sparsity(pretrained, clusters, "Small", train_plan)
        assert net.plan.names == ["Large", "Small"]
        assert net.trained_configs == ["Small"]
        assert net.label == "single-Small"
        assert {r.config for r in net.history} == {"Small"}
        assert net.realized_sparsity("Small") == pytest.approx({"fc0.w": 0.9, "fc1.w": 0.5})

    def test_single_full_config(self, pretrained, clusters, train_plan):
        net = train_single_sparsity(pretrained, clusters, "Large", train_plan.replace(total_steps=2))
        assert net.plan.names == ["Large"]
        assert {r.config for r in net.history} == {"Large"}

    def test_single_unknown_config(self, pretrained, clusters, train_plan):
        with pytest.raises(UnknownConfigError):
            train_single_sparsity(pretrained, clusters, "Tiny", train_plan)

    def test_snn_masks_are_structured(self, pretrained, clusters, train_plan):
        net = train_snn_baseline(pretrained, clusters, train_plan.replace(total_steps=12, freeze_steps=2))
        assert net.variant == "snn"
        for config in net.plan.sparse:
            for w in net.model.prunable:
                expected = snn_structured_mask(net.model.parameters[w].shape, config.level_for(w))
                np.testing.assert_array_equal(net.masks[config.name][w].to_array(), expected.to_array())


class TestEvaluate:
    def test_reads_only(self, pretrained, clusters, train_plan):
        net = train_dsnn(pretrained, clusters, train_plan.replace(freeze_steps=0))
        before = _values(net)
        result = evaluate(net, "Small", clusters)
        assert _same(before, _values(net))
        assert 0.0 <= result.accuracy <= 1.0
        assert result.sparsity == net.average_sparsity("Small")
        assert result.parameters < net.model.num_parameters()

    def test_full_config_counts_every_parameter(self, pretrained, clusters):
        assert evaluate(pretrained, "Large", clusters).parameters == pretrained.model.num_parameters()

    def test_unknown_config(self, pretrained, clusters):
        with pytest.raises(UnknownConfigError):
            evaluate(pretrained, "Small", clusters)


class TestDrivers:
    def test_ablation_rows(self, pretrained, clusters, train_plan):
        nets = run_ablation(pretrained, clusters, train_plan.replace(total_steps=2, freeze_steps=1))
        assert list(nets) == [label for label, _ in ABLATION_VARIANTS]
        assert not any(r.config == "freeze" for r in nets["+distillation"].history)
        assert any(r.config == "freeze" for r in nets["+freezing"].history)

    def test_pipeline_outputs(self, mlp, clusters, train_plan):
        tp = train_plan.replace(total_steps=2, freeze_steps=1)
        nets = run_pipeline(mlp, clusters, tp, pretrain_steps=2, with_snn=True)
        assert list(nets) == ["pretrain", "dsnn", "single-Medium", "single-Small", "snn"]


@pytest.mark.slow
class TestConvergence:
    def test_two_clusters_fit(self):
        data = gen_gaussian_clusters(0, 512, 2, 10, 0.1)
        model = MlpModel(input_dim=10, hidden=[20], classes=2)
        plan = SparsityPlan.of([SparsityConfig(name="Large", levels={"fc*": 0.0})])
        tp = TrainPlan(plan=plan, lr=1e-2, batch_size=64, log_every=500)
        net = pretrain(model, data, 2000, tp)
        assert np.mean([r.loss for r in net.history[-50:]]) < 0.1
        assert evaluate(net, "Large", data).accuracy > 0.95


class TestRefreshInvariant:
    def test_zero_blocks_follow_the_ramp(self, pretrained, clusters, train_plan):
        tp = train_plan
        net = SuperNetwork.create(pretrained.model.clone(), tp.plan, tp.block_height, variant="dsnn")
        state = tp.adam_state()
        batches = clusters.batches(tp.batch_size, tp.seed)
        small = tp.plan.get("Small")
        for step in range(12):
            dsnn_train_step(net, next(batches), step, tp, state)
            if not tp.is_refresh_step(step):
                continue
            for w, mask in net.masks["Small"].items():
                s = cubic_sparsity(step, PruneSchedule(tp.ramp_steps, small.level_for(w)))
                assert mask.zero_blocks == prune_count(s, mask.num_blocks)


class TestEvaluateReads:
    def test_idempotent(self, pretrained, clusters, train_plan):
        net = train_dsnn(pretrained, clusters, train_plan.replace(total_steps=4, freeze_steps=0))
        assert evaluate(net, "Medium", clusters) == evaluate(net, "Medium", clusters)

    def test_full_config_is_the_unmasked_model(self, pretrained, clusters):
        result = evaluate(pretrained, "Large", clusters)
        logits = pretrained.model.logits(clusters.inputs, use_ema=True)
        assert result.loss == pytest.approx(float(ground_truth_loss(logits, clusters.labels).value), rel=1e-9)


@pytest.mark.slow
class TestSnnGap:
    def test_dsnn_beats_structured_at_small(self):
        data = gen_gaussian_clusters(0, 1024, 4, 32, 0.3)
        model = MlpModel(input_dim=32, hidden=[64], classes=4, seed=0)
        tp = TrainPlan(
            plan=build_toy_plan(model),
            total_steps=400,
            freeze_steps=50,
            mask_update_frequency=20,
            ramp_steps=200,
            lr=1e-2,
            batch_size=64,
            log_every=1000,
        )
        base = pretrain(model, data, 400, tp)
        dsnn = evaluate(train_dsnn(base, data, tp), "Small", data)
        snn = evaluate(train_snn_baseline(base, data, tp), "Small", data)
        assert dsnn.loss < snn.loss


def _expected_zero_blocks(net, config, step, tp):
    out = {}
    for w, mask in net.masks[config.name].items():
        s = cubic_sparsity(step, PruneSchedule(tp.ramp_steps, config.level_for(w)))
        out[w] = prune_count(s, mask.num_blocks)
    return out


def _zero_blocks(net, name):
    return {w: m.zero_blocks for w, m in net.masks[name].items()}


class TestSingleSparsityScores:
    def _net(self, pretrained, tp):
        return SuperNetwork.create(pretrained.model.clone(), tp.plan, tp.block_height, variant="single")

    def test_score_grads_reach_masked_entries(self, pretrained, clusters, train_plan):
        net = train_single_sparsity(pretrained, clusters, "Small", train_plan.replace(total_steps=12, freeze_steps=0))
        keep = net.masks["Small"]["fc0.w"].to_array()
        assert not keep.all()
        assert np.any(net.score_grads["fc0.w"][~keep] != 0.0)

    def test_score_pass_is_not_applied(self, pretrained, clusters, train_plan):
        plan = SparsityPlan.of([train_plan.plan.full, train_plan.plan.get("Small")])
        tp = train_plan.replace(plan=plan, distillation=False)
        net = self._net(pretrained, tp)
        reference = pretrained.model.clone()
        state, ref_state = tp.adam_state(), tp.adam_state()
        batches = clusters.batches(32, 0)
        # Steps 0 and 1 run with all-ones masks: sparsity is 0 at step 0 and F=5.
        for step in range(2):
            batch = next(batches)
            records = dsnn_train_step(net, batch, step, tp, state, include_full=False)
            reference.zero_grad()
            backward(ground_truth_loss(reference.logits(batch.inputs), batch.labels))
            adam_step(reference.values(), reference.grads(), ref_state, lr=tp.lr)
        assert [r.config for r in records] == ["Small"]
        assert _same(_values(net), reference.values())

    def test_pruned_blocks_come_back(self, pretrained, clusters, train_plan):
        plan = SparsityPlan.of([train_plan.plan.full, train_plan.plan.get("Small")])
        tp = train_plan.replace(plan=plan, distillation=False, mask_update_frequency=1, ramp_steps=30)
        net = self._net(pretrained, tp)
        state = tp.adam_state()
        batches = clusters.batches(tp.batch_size, tp.seed)
        previous = None
        recovered = 0
        for step in range(60):
            dsnn_train_step(net, next(batches), step, tp, state, include_full=False)
            current = {w: m.to_array() for w, m in net.masks["Small"].items()}
            if previous is not None:
                recovered += sum(int((~previous[w] & current[w]).sum()) for w in current)
            previous = current
        assert recovered > 0


class TestTeacherConstancy:
    def test_student_backward_leaves_teacher_alone(self, pretrained, clusters):
        model = pretrained.model.clone()
        x = clusters.inputs[:32]
        keep = np.ones((20, 10), dtype=bool)
        keep[:10] = False
        masks = {"fc0.w": BinaryMask.from_array(keep, 2)}
        teacher = model.logits(x)
        before = teacher.value.copy()
        backward(distillation_loss(model.logits(x, masks=masks), teacher))
        np.testing.assert_array_equal(teacher.value, before)
        assert teacher.grad is None
        through_node = {n: p.grad.copy() for n, p in model.parameters.items()}
        model.zero_grad()
        backward(distillation_loss(model.logits(x, masks=masks), before.copy()))
        assert _same(through_node, {n: p.grad for n, p in model.parameters.items()})

    def test_full_pass_runs_before_students(self, pretrained, clusters, train_plan):
        net = SuperNetwork.create(pretrained.model.clone(), train_plan.plan, 2, variant="dsnn")
        batch = next(clusters.batches(32, 0))
        expected = float(ground_truth_loss(net.model.logits(batch.inputs), batch.labels).value)
        records = dsnn_train_step(net, batch, 0, train_plan, train_plan.adam_state())
        assert records[0].config == "Large"
        assert records[0].loss == expected


class TestEagerUpdates:
    def test_every_step_keeps_exact_sparsity(self, pretrained, clusters, train_plan):
        tp = train_plan.replace(lazy_update=False)
        net = SuperNetwork.create(pretrained.model.clone(), tp.plan, tp.block_height, variant="dsnn")
        state = tp.adam_state()
        batches = clusters.batches(tp.batch_size, tp.seed)
        for step in range(14):
            dsnn_train_step(net, next(batches), step, tp, state)
            for config in tp.plan.sparse:
                assert _zero_blocks(net, config.name) == _expected_zero_blocks(net, config, step, tp)
        assert state.step == 14 * len(tp.plan.configs)


class TestLstmTraining:
    def test_dsnn_end_to_end(self, lstm, symbols, lstm_train_plan):
        tp = lstm_train_plan.replace(total_steps=12, freeze_steps=2)
        base = pretrain(lstm, symbols, 3, tp)
        net = train_dsnn(base, symbols, tp)
        assert net.trained_configs == ["Large", "Medium", "Small"]
        for config in tp.plan.sparse:
            assert _zero_blocks(net, config.name) == _expected_zero_blocks(net, config, tp.ramp_steps, tp)
        assert net.realized_sparsity("Large") == {w: 0.0 for w in lstm.prunable}
        assert net.realized_sparsity("Small")["lstm0.w"] == pytest.approx(0.9, abs=0.02)
        result = evaluate(net, "Small", symbols)
        assert np.isfinite(result.loss)
        assert result.parameters < lstm.num_parameters()
