"""Tests for harness module."""

from dataclasses import replace
from unittest.mock import MagicMock, patch

import numpy as np
import pytest

from algebra import get_group
from config import ExperimentConfig
from dataset import TaggingRecord, gen_dataset
from harness import (
    dataset_dir,
    depth_sweep,
    ensure_dataset,
    evaluate,
    sweep_cell,
    train_model,
    width_sweep,
)
from models import ExactTagger
from results import BUDGET_EXHAUSTED, CONVERGED, DIVERGED, RUN_STATUSES, ResultRecord
from storage import ResultStorage


@pytest.fixture
def smoke_config(tmp_path):
    """Smoke preset writing under a temporary directory."""
    return replace(ExperimentConfig.smoke(), output_dir=str(tmp_path / "runs"))


def fake_record(depth, full, seed=0):
    return ResultRecord("rnn", "Z60", 4, depth, seed, 10, full, full, CONVERGED)


class TestDatasets:
    """Test cases for dataset caching."""

    def test_dataset_dir(self, smoke_config):
        """Test datasets live under output/datasets/<group>-n<length>-s<seed>."""
        path = dataset_dir(smoke_config, 8, 2)

        assert path.parts[-2:] == ("datasets", "Z60-n8-s2")

    def test_indexing_dataset_dir(self, smoke_config):
        """Test indexing datasets are named by task and data vocabulary."""
        config = replace(smoke_config, task="post-index", index_vocab_size=4)

        assert dataset_dir(config, 4, 0).parts[-1] == "post-index-v4-n4-s0"

    def test_ensure_indexing_dataset(self, smoke_config):
        """Test an indexing task generates indexing splits."""
        config = replace(smoke_config, task="pre-index")

        splits = ensure_dataset(config, 4, 0)

        assert splits.task == "pre-index"
        assert splits.group_id == "pre-index-v5"
        assert dataset_dir(config, 4, 0).joinpath("metadata.yaml").exists()

    def test_ensure_dataset_reuses_files(self, smoke_config):
        """Test the second call loads instead of regenerating."""
        first = ensure_dataset(smoke_config, 4, 0)

        with patch("harness.gen_dataset") as mock_gen:
            second = ensure_dataset(smoke_config, 4, 0)

        mock_gen.assert_not_called()
        assert second.test == first.test


class TestEvaluate:
    """Test cases for evaluate."""

    def test_exact_tagger_scores_one(self):
        """Test a compiled automaton gets every word right."""
        g = get_group("Z60")
        splits = gen_dataset("Z60", 6, (10, 10, 40), seed=0)

        full, per_token = evaluate(ExactTagger("rnn-ssm-exact", g), splits.test, pad_token=60)

        assert full == 1.0
        assert per_token == 1.0

    def test_shuffled_labels_score_chance(self):
        """Test random labels bring per-token accuracy down to about 1/60."""
        g = get_group("Z60")
        rng = np.random.default_rng(0)
        splits = gen_dataset("Z60", 8, (10, 10, 500), seed=1)
        shuffled = [TaggingRecord(r.tokens, tuple(int(y) for y in rng.integers(0, 60, size=8))) for r in splits.test]

        full, per_token = evaluate(ExactTagger("rnn-ssm-exact", g), shuffled, pad_token=60)

        assert full == 0.0
        assert per_token == pytest.approx(1 / 60, abs=0.01)

    def test_ignored_positions_do_not_count(self):
        """Test the BOS position with an ignore label is skipped."""
        g = get_group("Z60")
        records = [TaggingRecord((60, 1, 2), (-1, 1, 3))]

        assert evaluate(ExactTagger("ids4-exact", g, bos_token=60), records, pad_token=60) == (1.0, 1.0)

    def test_no_records(self):
        """Test an empty split scores zero."""
        assert evaluate(MagicMock(), [], pad_token=0) == (0.0, 0.0)


class TestTrainModel:
    """Test cases for train_model."""

    @pytest.mark.parametrize("family", ["ids4-exact", "rnn-ssm-exact"])
    def test_exact_families(self, smoke_config, family):
        """Test compiled families converge without training."""
        record = train_model(smoke_config, family, length=4, depth=1, seed=0)

        assert record.status == CONVERGED
        assert record.steps_used == 0
        assert record.full_sequence_accuracy == 1.0
        assert record.key == (family, "Z60", 4, 1, 16, 0)

    def test_smoke_run(self, smoke_config):
        """Test a short training run finishes with a valid record."""
        record = train_model(smoke_config, "rnn", length=4, depth=1, seed=0)

        assert record.status in RUN_STATUSES
        assert 1 <= record.steps_used <= smoke_config.max_steps
        assert 0.0 <= record.per_token_accuracy <= 1.0

    @pytest.mark.parametrize("family", ["transformer", "s4-const", "mamba-diag", "ids4"])
    def test_one_step_per_family(self, smoke_config, family):
        """Test every trainable family runs through the loop."""
        config = replace(smoke_config, max_steps=2, eval_interval=1)

        record = train_model(config, family, length=4, depth=1, seed=0)

        assert record.family == family
        assert record.steps_used <= 2

    def test_indexing_run(self, smoke_config):
        """Test a trainable family runs on an indexing task and records its width."""
        config = replace(smoke_config, task="post-index")

        record = train_model(config, "mamba-diag", length=4, depth=1, seed=0)

        assert record.group_id == "post-index-v5"
        assert record.d_model == 16
        assert record.status in RUN_STATUSES

    @patch("harness.evaluate")
    def test_converges_when_validation_clears_threshold(self, mock_evaluate, smoke_config):
        """Test training stops at the first eval that clears the threshold."""
        mock_evaluate.return_value = (1.0, 1.0)

        record = train_model(smoke_config, "rnn", length=4, depth=1, seed=0)

        assert record.status == CONVERGED
        assert record.steps_used == smoke_config.eval_interval

    @patch("autodiff.cross_entropy_tagging_loss")
    def test_non_finite_loss_diverges(self, mock_loss, smoke_config):
        """Test a NaN loss ends the run as diverged."""
        mock_loss.return_value.item.return_value = float("nan")

        record = train_model(smoke_config, "rnn", length=4, depth=1, seed=0)

        assert record.status == DIVERGED
        assert record.steps_used == 1

    def test_wall_clock_budget(self, smoke_config):
        """Test a zero time budget stops after the first step."""
        config = replace(smoke_config, max_seconds=0.0)

        record = train_model(config, "rnn", length=4, depth=1, seed=0)

        assert record.status == BUDGET_EXHAUSTED
        assert record.steps_used == 1

    def test_step_budget(self, smoke_config):
        """Test running out of steps below the threshold."""
        with patch("harness.evaluate", return_value=(0.0, 0.0)):
            record = train_model(smoke_config, "rnn", length=4, depth=1, seed=0)

        assert record.status == BUDGET_EXHAUSTED
        assert record.steps_used == smoke_config.max_steps


class TestSweep:
    """Test cases for sweep_cell and depth_sweep."""

    @patch("harness.train_model")
    def test_sweep_cell_stops_at_first_success(self, mock_train, smoke_config):
        """Test deeper models are not trained once a depth succeeds."""
        config = replace(smoke_config, depths=[1, 2, 3], seeds=[0, 1])
        outcomes = {1: 0.1, 2: 0.95, 3: 1.0}
        mock_train.side_effect = lambda cfg, family, length, depth, seed: fake_record(depth, outcomes[depth], seed)

        records = sweep_cell(config, "rnn", 4)

        assert [r.depth for r in records] == [1, 1, 2, 2]
        assert mock_train.call_count == 4

    @patch("harness.train_model")
    def test_sweep_cell_without_success(self, mock_train, smoke_config):
        """Test every depth is tried when none succeeds."""
        mock_train.side_effect = lambda cfg, family, length, depth, seed: fake_record(depth, 0.0, seed)

        records = sweep_cell(smoke_config, "rnn", 4)

        assert len(records) == len(smoke_config.depths)

    def test_exact_families_need_depth_one(self, smoke_config):
        """Test the sweep reports depth 1 for compiled automata at every length."""
        config = replace(smoke_config, families=["ids4-exact", "rnn-ssm-exact"], lengths=[2, 4])
        storage = ResultStorage(config.output_path / "results.jsonl")
        finished = []

        result = depth_sweep(config, storage, on_cell_done=lambda f, n: finished.append((f, n)))

        assert [row.minimum for row in result.rows] == [1, 1, 1, 1]
        assert len(finished) == 4
        assert len(storage.load_records()) == 4

    @pytest.mark.slow
    def test_parallel_sweep_matches_serial(self, smoke_config):
        """Test worker processes give the same records as a serial sweep."""
        config = replace(smoke_config, families=["rnn", "ids4-exact"], depths=[1])

        serial = depth_sweep(config)
        parallel = depth_sweep(replace(config, workers=2))

        assert [r.key for r in parallel.records] == [r.key for r in serial.records]
        assert [r.full_sequence_accuracy for r in parallel.records] == [
            r.full_sequence_accuracy for r in serial.records
        ]

    @patch("harness.train_model")
    def test_width_cell_walks_widths(self, mock_train, smoke_config):
        """Test the width axis raises d_model at the smallest depth and stops at the first success."""
        config = replace(smoke_config, depths=[2, 1], widths=[32, 8, 16])
        mock_train.side_effect = lambda cfg, family, length, depth, seed: replace(
            fake_record(depth, 1.0 if cfg.d_model >= 16 else 0.2, seed), d_model=cfg.d_model
        )

        records = sweep_cell(config, "rnn", 4, axis="d_model")

        assert [call.args[0].d_model for call in mock_train.call_args_list] == [8, 16]
        assert {call.args[3] for call in mock_train.call_args_list} == {1}
        assert [r.d_model for r in records] == [8, 16]

    def test_unknown_axis(self, smoke_config):
        """Test only depth and d_model can be swept."""
        with pytest.raises(ValueError):
            sweep_cell(smoke_config, "rnn", 4, axis="heads")

    @patch("harness.train_model")
    def test_width_sweep_rows(self, mock_train, smoke_config):
        """Test width sweeps report minimum widths per cell."""
        config = replace(smoke_config, task="pre-index", families=["mamba-diag"], widths=[4, 8])
        mock_train.side_effect = lambda cfg, family, length, depth, seed: ResultRecord(
            family, "pre-index-v5", length, depth, seed, 10, 1.0 if cfg.d_model == 8 else 0.0, 1.0, CONVERGED,
            d_model=cfg.d_model,
        )

        result = width_sweep(config)

        assert [(row.family, row.minimum, row.axis) for row in result.rows] == [("mamba-diag", 8, "d_model")]


@pytest.mark.slow
class TestGroupDataTrend:
    """Depth-1 tracking of A5 by the trained IDS4 and RNN families."""

    def test_depth_one_tracks_a5(self, tmp_path):
        """Test ids4 and rnn clear the threshold at depth 1 for lengths 4, 8 and 16."""
        config = replace(
            ExperimentConfig.group_trend(),
            families=["ids4", "rnn"],
            depths=[1],
            output_dir=str(tmp_path / "runs"),
        )

        result = depth_sweep(config)

        assert {(row.family, row.length) for row in result.rows} == {
            (family, length) for family in ("ids4", "rnn") for length in (4, 8, 16)
        }
        assert all(row.minimum == 1 for row in result.rows)
