"""Quality trends on the symbol-count LSTM task, three seeds each."""

import logging

import pytest

from dsnn.data.synthetic import gen_symbol_count
from dsnn.models.lstm import LstmModel
from dsnn.models.toy import build_toy_plan
from dsnn.training.trainer import (
    TrainPlan,
    evaluate,
    pretrain,
    run_ablation,
    train_dsnn,
    train_single_sparsity,
    train_snn_baseline,
)

pytestmark = pytest.mark.slow

SEEDS = (0, 1, 2)
logger = logging.getLogger("dsnn.tests")


def _setup(seed):
    train, test = gen_symbol_count(seed, 1536, seq_len=8, vocab=4, classes=3).split(512)
    model = LstmModel(vocab=4, hidden=32, projection=16, classes=3, seed=seed)
    tp = TrainPlan(
        plan=build_toy_plan(model),
        total_steps=600,
        freeze_steps=100,
        mask_update_frequency=20,
        ramp_steps=300,
        lr=1e-2,
        batch_size=64,
        block_height=4,
        seed=seed,
        log_every=1000,
    )
    return train, test, tp, pretrain(model, train, 400, tp)


@pytest.fixture(scope="module")
def runs():
    out = {}
    for seed in SEEDS:
        train, test, tp, base = _setup(seed)
        dsnn = train_dsnn(base, train, tp)
        out[seed] = {
            "dsnn": {name: evaluate(dsnn, name, test).loss for name in tp.plan.names},
            "single": {name: evaluate(train_single_sparsity(base, train, name, tp), name, test).loss
                       for name in tp.plan.names},
            "snn": evaluate(train_snn_baseline(base, train, tp), "Small", test).loss,
        }
    return out


class TestSingleSparsityParity:
    @pytest.mark.parametrize("seed", SEEDS)
    def test_each_config_within_ten_percent(self, runs, seed):
        for name, single in runs[seed]["single"].items():
            assert runs[seed]["dsnn"][name] <= 1.10 * single, name


class TestStructuredGap:
    @pytest.mark.parametrize("seed", SEEDS)
    def test_dsnn_beats_snn_at_small(self, runs, seed):
        assert runs[seed]["dsnn"]["Small"] < runs[seed]["snn"]


class TestAblation:
    def test_distillation_helps_small(self):
        wins = 0
        for seed in SEEDS:
            train, test, tp, base = _setup(seed)
            nets = run_ablation(base, train, tp)
            without = evaluate(nets["+lazy-update"], "Small", test).loss
            with_distillation = evaluate(nets["+distillation"], "Small", test).loss
            logger.info(f"seed {seed}: Small loss {without:.4f} -> {with_distillation:.4f} with distillation")
            wins += with_distillation < without
        assert wins >= 2
