"""Terminal UI for experiment runs."""

from typing import Optional

import questionary
from loguru import logger
from questionary import Choice
from rich import box
from rich.console import Console
from rich.panel import Panel
from rich.progress import BarColumn, Progress, SpinnerColumn, TaskProgressColumn, TextColumn
from rich.table import Table

from algebra import REGISTERED_GROUP_IDS
from chess_reduction import BoardState
from constructions import VerificationReport
from dataset import DatasetSplits
from logfloat import SuiteResult
from results import ResultRecord, SweepRow

ACTIONS = [
    ("gen-dataset", "📦 Generate a tagging dataset"),
    ("train", "🏋️  Train one model"),
    ("sweep-depth", "📈 Sweep minimum depth"),
    ("sweep-width", "📐 Sweep minimum width on an indexing task"),
    ("verify-constructions", "🎯 Verify exact IDS4 / RNN-SSM constructions"),
    ("chess-encode", "♜ Encode an S5 word as chess moves"),
    ("logfloat-test", "🔢 Run log-precision float differential tests"),
    ("emit-results", "📝 Emit stored results"),
]


def _pass_fail(passed: bool) -> str:
    return "[green]PASS[/green]" if passed else "[red]FAIL[/red]"


class ExperimentConsole:
    """Rich tables and questionary prompts for every subcommand."""

    def __init__(self, console: Optional[Console] = None):
        self.console = console or Console()

    def select_action(self) -> str:
        """
        Select a subcommand.

        Returns:
            Subcommand name, or "exit"
        """
        self.console.print()
        action = questionary.select(
            "What would you like to do?",
            choices=[Choice(label, value=name) for name, label in ACTIONS] + [Choice("Exit", value="exit")],
        ).ask()

        return action if action is not None else "exit"

    def select_group(self, default: str = "A5") -> str:
        self.console.print()
        group_id = questionary.select(
            "Which group?",
            choices=list(REGISTERED_GROUP_IDS),
            default=default if default in REGISTERED_GROUP_IDS else None,
        ).ask()

        return group_id if group_id is not None else default

    def select_task(self, default: str = "pre-index") -> str:
        self.console.print()
        task = questionary.select(
            "Which indexing task?",
            choices=["pre-index", "post-index"],
            default=default,
        ).ask()

        return task if task is not None else default

    def ask_word(self, message: str = "Word (space-separated element indices):") -> list[int]:
        """Prompt for a word; an empty answer gives the empty word."""
        self.console.print()
        text = questionary.text(
            message,
            validate=lambda x: all(p.isdigit() for p in x.split()) or "Please enter non-negative integers",
        ).ask()

        return [int(p) for p in (text or "").split()]

    def confirm_action(self, message: str) -> bool:
        """
        Ask for confirmation.

        Args:
            message: Confirmation message

        Returns:
            True if confirmed, False otherwise
        """
        self.console.print()
        result = questionary.confirm(message).ask()
        return result if result is not None else False

    def show_dataset(self, splits: DatasetSplits, directory: str) -> None:
        table = Table(title=f"📦 {splits.group_id} dataset, length {splits.length}", box=box.ROUNDED)
        table.add_column("Split", style="cyan")
        table.add_column("Records", justify="right", style="magenta")
        for name in ("train", "val", "test"):
            table.add_row(name, str(len(splits.split(name))))

        self.console.print(table)
        self.console.print(f"[dim]Saved to {directory}; $ token = {splits.bos_token}[/dim]")

    def show_records(self, records: list[ResultRecord], title: str = "Runs") -> None:
        table = Table(title=title, box=box.ROUNDED)
        for column, justify in [
            ("Family", "left"),
            ("Group", "left"),
            ("n", "right"),
            ("Depth", "right"),
            ("Seed", "right"),
            ("Steps", "right"),
            ("Full-seq", "right"),
            ("Per-token", "right"),
            ("Status", "left"),
        ]:
            table.add_column(column, justify=justify)

        status_styles = {"converged": "green", "budget-exhausted": "yellow", "diverged": "red"}
        for r in records:
            style = status_styles.get(r.status, "")
            table.add_row(
                r.family,
                r.group_id,
                str(r.length),
                str(r.depth),
                str(r.seed),
                str(r.steps_used),
                f"{r.full_sequence_accuracy:.3f}",
                f"{r.per_token_accuracy:.3f}",
                f"[{style}]{r.status}[/{style}]" if style else r.status,
            )

        self.console.print(table)

    def show_sweep(self, rows: list[SweepRow], lengths: list[int]) -> None:
        """Minimum depth (or width) per family (rows) and length (columns)."""
        groups = sorted({r.group_id for r in rows})
        setting = "d_model" if any(r.axis == "d_model" for r in rows) else "depth"
        for group_id in groups:
            table = Table(title=f"📈 Minimum {setting} on {group_id}", box=box.DOUBLE)
            table.add_column("Family", style="cyan")
            for length in lengths:
                table.add_column(f"n={length}", justify="right")

            cells = {(r.family, r.length): r for r in rows if r.group_id == group_id}
            for family in sorted({f for f, _ in cells}):
                labels = []
                for length in lengths:
                    row = cells.get((family, length))
                    label = row.label if row else "-"
                    labels.append(f"[red]{label}[/red]" if label == "none" else label)
                table.add_row(family, *labels)

            self.console.print(table)

    def show_verification(self, reports: list[VerificationReport]) -> None:
        table = Table(title="🎯 Construction verification", box=box.ROUNDED)
        table.add_column("Construction", style="cyan")
        table.add_column("Automaton")
        table.add_column("Words", justify="right")
        table.add_column("Mismatches", justify="right")
        table.add_column("Result")

        for report in reports:
            table.add_row(
                report.kind,
                report.label,
                str(report.words_tested),
                str(len(report.mismatches)),
                _pass_fail(report.passed),
            )

        self.console.print(table)
        for report in reports:
            for mismatch in report.mismatches[:3]:
                self.console.print(
                    f"[red]{report.kind} {report.label}[/red] word {list(mismatch.word)}: "
                    f"expected {mismatch.expected}, got {mismatch.actual}"
                )

    def show_suites(self, results: list[SuiteResult], title: str = "🔢 Differential tests") -> None:
        table = Table(title=title, box=box.ROUNDED)
        table.add_column("Suite", style="cyan")
        table.add_column("Cases", justify="right")
        table.add_column("Exact", justify="right", style="green")
        table.add_column("≤ 1 ulp", justify="right", style="yellow")
        table.add_column("Worse", justify="right", style="red")
        table.add_column("Result")

        for suite in results:
            table.add_row(
                suite.name,
                str(suite.cases),
                str(suite.exact),
                str(suite.within_ulp),
                str(suite.worse),
                _pass_fail(suite.passed),
            )

        self.console.print(table)

    def show_board(self, board: BoardState, moves_text: str, accept: bool) -> None:
        self.print_panel(board.ascii(), title="Final board", style="green" if accept else "red")
        self.console.print(f"[dim]Moves:[/dim] {moves_text or '(none)'}")
        self.console.print(f"Accept: {_pass_fail(accept)}")

    def show_summary(self, total: int, completed: int, failed: int) -> None:
        """
        Display job completion counts.

        Args:
            total: Jobs requested
            completed: Jobs that finished
            failed: Jobs that raised
        """
        table = Table(title="✨ Summary", box=box.DOUBLE, show_header=True)
        table.add_column("Metric", style="cyan", no_wrap=True)
        table.add_column("Count", justify="right", style="magenta")

        table.add_row("Jobs requested", str(total))
        table.add_row("Completed", f"[green]{completed}[/green]")
        table.add_row("Failed", f"[red]{failed}[/red]" if failed else "0")

        self.console.print()
        self.console.print(table)
        logger.debug(f"Summary: {completed}/{total} completed, {failed} failed")

    def show_progress(self, description: str, total: int):
        """
        Create a progress bar for long operations.

        Args:
            description: Description of the operation
            total: Total number of items to process

        Returns:
            Progress context manager
        """
        return Progress(
            SpinnerColumn(),
            TextColumn("[bold blue]{task.description}"),
            BarColumn(),
            TaskProgressColumn(),
            console=self.console,
        )

    def print_status(self, message: str, style: str = ""):
        """Print a status message with Rich formatting."""
        self.console.print(message, style=style)

    def print_panel(self, content: str, title: str = "", style: str = "cyan"):
        """Print content in a Rich panel."""
        panel = Panel(content, title=title, border_style=style, box=box.ROUNDED)
        self.console.print(panel)
