"""Tests for ui module."""

from unittest.mock import MagicMock, patch

import pytest
from rich.console import Console

from chess_reduction import initial_board
from constructions import Mismatch, VerificationReport
from dataset import DatasetSplits, TaggingRecord
from logfloat import SuiteResult
from results import ResultRecord, SweepRow
from ui import ACTIONS, ExperimentConsole


@pytest.fixture
def ui():
    return ExperimentConsole(Console(record=True, width=160))


def output(ui: ExperimentConsole) -> str:
    return ui.console.export_text()


class TestPrompts:
    """Test cases for questionary prompts."""

    @patch('ui.questionary.select')
    def test_select_action(self, mock_select, ui):
        """Test selecting a subcommand."""
        mock_select.return_value.ask = MagicMock(return_value="sweep-depth")

        assert ui.select_action() == "sweep-depth"

        choices = mock_select.call_args.kwargs["choices"]
        assert [c.value for c in choices] == [name for name, _ in ACTIONS] + ["exit"]

    @patch('ui.questionary.select')
    def test_select_action_cancelled(self, mock_select, ui):
        """Test Ctrl-C in the menu means exit."""
        mock_select.return_value.ask = MagicMock(return_value=None)

        assert ui.select_action() == "exit"

    @patch('ui.questionary.select')
    def test_select_group_cancelled(self, mock_select, ui):
        """Test cancelling the group prompt keeps the default."""
        mock_select.return_value.ask = MagicMock(return_value=None)

        assert ui.select_group(default="S5") == "S5"

    @patch('ui.questionary.select')
    def test_select_task(self, mock_select, ui):
        """Test the indexing task prompt offers both orders."""
        mock_select.return_value.ask = MagicMock(return_value="post-index")

        assert ui.select_task() == "post-index"
        assert mock_select.call_args.kwargs["choices"] == ["pre-index", "post-index"]

    @patch('ui.questionary.text')
    def test_ask_word(self, mock_text, ui):
        """Test a space-separated answer becomes a list of indices."""
        mock_text.return_value.ask = MagicMock(return_value="3 17 42")

        assert ui.ask_word() == [3, 17, 42]

        validate = mock_text.call_args.kwargs["validate"]
        assert validate("1 2") is True
        assert validate("1 x") == "Please enter non-negative integers"

    @patch('ui.questionary.text')
    def test_ask_word_cancelled(self, mock_text, ui):
        """Test a cancelled prompt gives the empty word."""
        mock_text.return_value.ask = MagicMock(return_value=None)

        assert ui.ask_word() == []

    @patch('ui.questionary.confirm')
    def test_confirm_action_yes(self, mock_confirm, ui):
        """Test confirming action."""
        mock_confirm.return_value.ask = MagicMock(return_value=True)

        assert ui.confirm_action("Overwrite?") is True

    @patch('ui.questionary.confirm')
    def test_confirm_action_cancelled(self, mock_confirm, ui):
        """Test cancelling confirm action."""
        mock_confirm.return_value.ask = MagicMock(return_value=None)

        assert ui.confirm_action("Overwrite?") is False


class TestDisplay:
    """Test cases for rich tables."""

    def test_show_dataset(self, ui):
        """Test split sizes and the BOS token are shown."""
        splits = DatasetSplits(
            "Z60", 2, 0,
            train=[TaggingRecord((1, 2), (1, 3))] * 3,
            test=[TaggingRecord((1, 1), (1, 2))],
            vocabulary=[str(i) for i in range(60)],
        )

        ui.show_dataset(splits, "runs/datasets")
        text = output(ui)

        assert "Z60 dataset, length 2" in text
        assert "$ token = 60" in text

    def test_show_records(self, ui):
        """Test one row per record with formatted accuracies."""
        records = [
            ResultRecord("ids4", "A5", 8, 2, 0, 300, 0.25, 0.99, "converged"),
            ResultRecord("rnn", "A5", 8, 1, 0, 1000, 0.0, 0.1, "diverged"),
        ]

        ui.show_records(records)
        text = output(ui)

        assert "0.250" in text
        assert "diverged" in text
        assert "budget-exhausted" not in text

    def test_show_sweep(self, ui):
        """Test a table per group with a column per length."""
        rows = [
            SweepRow("ids4", "A5", 4, 1),
            SweepRow("ids4", "A5", 8, 2),
            SweepRow("rnn", "A5", 4, None),
        ]

        ui.show_sweep(rows, [4, 8])
        text = output(ui)

        assert "Minimum depth on A5" in text
        assert "n=8" in text
        assert "none" in text

    def test_show_width_sweep(self, ui):
        """Test width rows are titled by d_model."""
        rows = [SweepRow("mamba-diag", "post-index-v5", 8, 32, "d_model")]

        ui.show_sweep(rows, [8])
        text = output(ui)

        assert "Minimum d_model on post-index-v5" in text
        assert "32" in text

    def test_show_verification_lists_mismatches(self, ui):
        """Test failing reports print their first mismatching words."""
        reports = [
            VerificationReport("ids4", "A5", words_tested=10),
            VerificationReport("rnn-ssm", "parity", words_tested=4, mismatches=[Mismatch((1, 1), (1, 0), (1, 1))]),
        ]

        ui.show_verification(reports)
        text = output(ui)

        assert "PASS" in text
        assert "FAIL" in text
        assert "word [1, 1]: expected (1, 0), got (1, 1)" in text

    def test_show_suites(self, ui):
        """Test suite counts are listed."""
        ui.show_suites([SuiteResult("exp", cases=5, exact=4, within_ulp=1)])
        text = output(ui)

        assert "exp" in text
        assert "PASS" in text

    def test_show_board(self, ui):
        """Test the board diagram and the accept flag are printed."""
        ui.show_board(initial_board(), "", accept=True)
        text = output(ui)

        assert "Final board" in text
        assert "(none)" in text
        assert "PASS" in text

    def test_show_summary(self, ui):
        """Test the job counts are shown."""
        ui.show_summary(total=3, completed=2, failed=1)
        text = output(ui)

        assert "Jobs requested" in text
        assert "Failed" in text

    def test_print_panel(self, ui):
        """Test panel output."""
        ui.print_panel("content", title="Title")

        assert "content" in output(ui)
