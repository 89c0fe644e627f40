"""Main entry point for state-tracking experiments."""

import argparse
import dataclasses
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

from loguru import logger
from rich import box
from rich.console import Console
from rich.panel import Panel

from algebra import REGISTERED_GROUP_IDS, get_group, sample_word, word_product
from chess_reduction import encode_word, reduce_word, to_uci_text
from config import MODEL_FAMILIES, TASKS, ExperimentConfig, FloatProfile
from constructions import WordSample, dfa_to_ids4, group_to_dfa, parity_dfa, verify_construction
from harness import depth_sweep, ensure_dataset, train_model, width_sweep
from layer_format import save_layer_spec
from logfloat import run_differential_suites
from report import FORMATS, emit_results
from results import SWEEP_AXES
from storage import ResultStorage
from ui import ExperimentConsole

console = Console()

LOG_FILE = "ssm_state_tracking.log"


def setup_logging(level: str = "INFO", log_file: str = LOG_FILE):
    """Configure loguru logger."""
    logger.remove()
    logger.add(
        log_file,
        rotation="10 MB",
        retention="7 days",
        level="DEBUG",
        format="{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | {message}",
    )
    logger.add(sys.stderr, level=level, format="<level>{level: <8}</level> | {message}")


def show_banner():
    """Display application banner."""
    banner = (
        "[bold cyan]SSM state tracking[/bold cyan]\n"
        "[dim]Group word problems, string indexing, exact automaton constructions and depth sweeps[/dim]"
    )
    console.print(Panel(banner, box=box.DOUBLE, border_style="cyan", padding=(0, 2)))


@dataclass
class JobTally:
    """Requested versus completed jobs for one subcommand."""

    total: int = 0
    failed: int = 0

    @property
    def completed(self) -> int:
        return self.total - self.failed

    def run(self, name: str, job: Callable[[], None]) -> None:
        self.total += 1
        try:
            job()
        except KeyboardInterrupt:
            raise
        except Exception as e:
            self.failed += 1
            logger.error(f"Job {name} failed: {e}", exc_info=True)


def _int_list(text: str) -> list[int]:
    return [int(part) for part in text.replace(",", " ").split()]


def _str_list(text: str) -> list[str]:
    return [part for part in text.replace(",", " ").split() if part]


PRESETS: dict[str, Callable[[], ExperimentConfig]] = {
    "desk": ExperimentConfig.desk_scale,
    "smoke": ExperimentConfig.smoke,
    "trend": ExperimentConfig.group_trend,
    "indexing": ExperimentConfig.indexing,
}


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    """
    Build the experiment config from a preset or file plus command-line overrides.

    Args:
        args: Parsed arguments

    Returns:
        ExperimentConfig
    """
    if getattr(args, "config", None):
        config = ExperimentConfig.from_file(args.config)
    else:
        config = PRESETS[getattr(args, "preset", "desk")]()

    overrides = {}
    for name in (
        "group_id",
        "task",
        "lengths",
        "depths",
        "widths",
        "families",
        "seeds",
        "max_steps",
        "workers",
        "output_dir",
    ):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value

    if overrides:
        logger.debug(f"Config overrides: {overrides}")
        config = dataclasses.replace(config, **overrides)
    return config


def _results_path(config: ExperimentConfig) -> Path:
    return config.output_path / "results.jsonl"


def cmd_gen_dataset(args, ui: ExperimentConsole) -> JobTally:
    config = load_config(args)
    tally = JobTally()

    for length in config.lengths:
        for seed in config.seeds:

            def job(length=length, seed=seed):
                splits = ensure_dataset(config, length, seed)
                ui.show_dataset(splits, str(config.output_path / "datasets"))

            tally.run(f"gen-dataset n={length} seed={seed}", job)
    return tally


def cmd_train(args, ui: ExperimentConsole) -> JobTally:
    config = load_config(args)
    storage = ResultStorage(_results_path(config))
    tally = JobTally()
    records = []

    for seed in config.seeds:

        def job(seed=seed):
            record = train_model(config, args.family, args.length, args.depth, seed)
            storage.save_records([record], merge=True)
            records.append(record)

        tally.run(f"train {args.family} seed={seed}", job)

    if records:
        ui.show_records(records, title=f"🏋️  {args.family} on {config.group_id}")
    return tally


def _run_sweep(args, ui: ExperimentConsole, sweep, name: str) -> JobTally:
    config = load_config(args)
    storage = ResultStorage(_results_path(config))
    tally = JobTally()
    cells = len(config.families) * len(config.lengths)

    def job():
        with ui.show_progress("Sweeping", cells) as progress:
            task = progress.add_task("[cyan]Sweeping cells...", total=cells)

            def advance(family: str, length: int):
                progress.update(task, description=f"[cyan]Done: {family} n={length}")
                progress.advance(task)

            result = sweep(config, result_storage=storage, on_cell_done=advance)

        ui.show_records(result.records)
        ui.show_sweep(result.rows, config.lengths)

    tally.run(name, job)
    return tally


def cmd_sweep_depth(args, ui: ExperimentConsole) -> JobTally:
    return _run_sweep(args, ui, depth_sweep, "sweep-depth")


def cmd_sweep_width(args, ui: ExperimentConsole) -> JobTally:
    return _run_sweep(args, ui, width_sweep, "sweep-width")


def cmd_verify_constructions(args, ui: ExperimentConsole) -> JobTally:
    tally = JobTally()
    reports = []
    save_dir = Path(args.save_specs) if args.save_specs else None

    parity = ("parity", parity_dfa(), WordSample("exhaustive", max_length=args.parity_length))

    for kind in args.kinds:
        group_ids = args.groups if kind == "ids4" else args.rnn_groups
        for label, dfa, sample in [parity] + [(group_id, None, None) for group_id in group_ids]:

            def job(kind=kind, label=label, dfa=dfa, sample=sample):
                if dfa is None:
                    dfa = group_to_dfa(get_group(label))
                    if kind == "ids4":
                        sample = WordSample("random", max_length=args.max_length, count=args.count, seed=args.seed)
                    else:
                        sample = WordSample(
                            "random", max_length=args.rnn_max_length, count=args.rnn_count, seed=args.seed
                        )

                model = None
                if kind == "ids4" and save_dir is not None:
                    model = dfa_to_ids4(dfa)
                    save_layer_spec(model, save_dir / f"ids4-{label}.layer")
                reports.append(verify_construction(kind, dfa, sample, model=model, label=label))

            tally.run(f"verify {kind} {label}", job)

    if reports:
        ui.show_verification(reports)
    return tally


def cmd_chess_encode(args, ui: ExperimentConsole) -> JobTally:
    tally = JobTally()

    def job():
        if args.group != "S5":
            raise ValueError(f"The chess reduction encodes S5 words only, got --group {args.group}")
        group = get_group(args.group)
        word = args.word if args.word is not None else sample_word(group, args.random, args.seed)
        moves = encode_word(word, group)
        output = reduce_word(word, group)

        product = group.elements[word_product(group, word)]
        fixes_first = product[0] == 0
        logger.info(f"Word {word}: {len(moves)} moves, accept={output.accept}, product fixes 1: {fixes_first}")

        if args.emit_uci:
            console.print(to_uci_text(moves), markup=False, highlight=False, soft_wrap=True)
            console.print(f"accept={int(output.accept)}", markup=False, highlight=False)
        else:
            ui.print_status(f"Word: {word}")
            ui.show_board(output.final_board, to_uci_text(moves), output.accept)
        if output.accept != fixes_first:
            ui.print_status("✗ Reduction disagrees with the word product", style="red bold")

    tally.run("chess-encode", job)
    return tally


def cmd_logfloat_test(args, ui: ExperimentConsole) -> JobTally:
    tally = JobTally()

    def job():
        profile = FloatProfile(mantissa_bits=args.mantissa_bits, exponent_bits=args.exponent_bits)
        with console.status("[cyan]Running differential suites..."):
            results = run_differential_suites(profile, cases=args.cases, seed=args.seed)
        ui.show_suites(results, title=f"🔢 p_m={profile.mantissa_bits}, p_e={profile.exponent_bits}")

    tally.run("logfloat-test", job)
    return tally


def cmd_emit_results(args, ui: ExperimentConsole) -> JobTally:
    config = load_config(args)
    results_path = Path(args.results) if args.results else _results_path(config)
    tally = JobTally()

    records = ResultStorage(results_path).load_records()
    for fmt in args.formats:

        def job(fmt=fmt):
            path = emit_results(
                records, fmt, config.output_path / f"results.{fmt}", threshold=config.threshold, axis=args.axis
            )
            ui.print_status(f"✓ Wrote {path}", style="green")

        tally.run(f"emit-results {fmt}", job)
    return tally


COMMANDS: dict[str, Callable[[argparse.Namespace, ExperimentConsole], JobTally]] = {
    "gen-dataset": cmd_gen_dataset,
    "train": cmd_train,
    "sweep-depth": cmd_sweep_depth,
    "sweep-width": cmd_sweep_width,
    "verify-constructions": cmd_verify_constructions,
    "chess-encode": cmd_chess_encode,
    "logfloat-test": cmd_logfloat_test,
    "emit-results": cmd_emit_results,
}


def _add_config_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="Config file of key = value lines")
    parser.add_argument("--preset", choices=list(PRESETS), default="desk")
    parser.add_argument("--group", dest="group_id", choices=REGISTERED_GROUP_IDS)
    parser.add_argument("--task", choices=TASKS)
    parser.add_argument("--lengths", type=_int_list, help="e.g. '4,8,16'")
    parser.add_argument("--seeds", type=_int_list)
    parser.add_argument("--max-steps", dest="max_steps", type=int)
    parser.add_argument("--output-dir", dest="output_dir")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssm-state-tracking", description=__doc__)
    parser.add_argument("--log-level", default="INFO")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("gen-dataset", help="Generate train/val/test splits")
    _add_config_options(p)

    p = sub.add_parser("train", help="Train one (family, length, depth) over the config seeds")
    _add_config_options(p)
    p.add_argument("--family", choices=MODEL_FAMILIES, required=True)
    p.add_argument("--length", type=int, required=True)
    p.add_argument("--depth", type=int, default=1)

    p = sub.add_parser("sweep-depth", help="Minimum depth per family and length")
    _add_config_options(p)
    p.add_argument("--depths", type=_int_list)
    p.add_argument("--families", type=_str_list)
    p.add_argument("--workers", type=int)

    p = sub.add_parser("sweep-width", help="Minimum d_model per family and length at the smallest depth")
    _add_config_options(p)
    p.add_argument("--depths", type=_int_list)
    p.add_argument("--widths", type=_int_list, help="e.g. '4,8,16,32'")
    p.add_argument("--families", type=_str_list)
    p.add_argument("--workers", type=int)

    p = sub.add_parser("verify-constructions", help="Check exact IDS4 and RNN-SSM automata")
    p.add_argument("--groups", type=_str_list, default=list(REGISTERED_GROUP_IDS))
    # the RNN-SSM state has |Q|(|Sigma|+1) coordinates; S5 needs a 14520-square matrix
    p.add_argument("--rnn-groups", type=_str_list, default=["Z60", "A4xZ5", "A5"])
    p.add_argument("--kinds", type=_str_list, default=["ids4", "rnn-ssm"])
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--max-length", type=int, default=64)
    p.add_argument("--rnn-count", type=int, default=200)
    p.add_argument("--rnn-max-length", type=int, default=32)
    p.add_argument("--parity-length", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--save-specs", help="Directory for compiled IDS4 layer specs")

    p = sub.add_parser("chess-encode", help="Encode an S5 word as a chess move sequence")
    p.add_argument("--group", choices=REGISTERED_GROUP_IDS, default="S5", help="Only S5 has a chess encoding")
    p.add_argument("--emit-uci", action="store_true", help="Print the UCI move list and accept bit as plain text")
    word = p.add_mutually_exclusive_group(required=True)
    word.add_argument("--word", type=_int_list, help="S5 element indices, e.g. '3 17 42'")
    word.add_argument("--random", type=int, metavar="LENGTH")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("logfloat-test", help="Differential tests of log-precision arithmetic")
    p.add_argument("--mantissa-bits", type=int, default=12)
    p.add_argument("--exponent-bits", type=int, default=8)
    p.add_argument("--cases", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("emit-results", help="Write stored results as csv, jsonl or svg")
    _add_config_options(p)
    p.add_argument("--results", help="Results JSONL (default: <output-dir>/results.jsonl)")
    p.add_argument("--formats", type=_str_list, default=list(FORMATS))
    p.add_argument("--axis", choices=SWEEP_AXES, default="depth", help="Setting the svg chart plots")

    return parser


def interactive(parser: argparse.ArgumentParser, ui: ExperimentConsole) -> Optional[argparse.Namespace]:
    """Pick a subcommand with questionary and fill its arguments with defaults."""
    action = ui.select_action()
    if action == "exit":
        return None

    argv = [action]
    match action:
        case "gen-dataset" | "sweep-depth" | "emit-results":
            argv += ["--group", ui.select_group()]
        case "sweep-width":
            argv += ["--preset", "indexing", "--task", ui.select_task()]
        case "train":
            argv += ["--group", ui.select_group(), "--family", "ids4", "--length", "8"]
        case "verify-constructions":
            argv += ["--groups", ui.select_group()]
        case "chess-encode":
            argv += ["--word", " ".join(str(t) for t in ui.ask_word("S5 word (element indices 0-119):"))]

    logger.debug(f"Interactive arguments: {argv}")
    args = parser.parse_args(argv)

    if action == "emit-results":
        config = load_config(args)
        existing = [p for p in (config.output_path / f"results.{fmt}" for fmt in args.formats) if p.exists()]
        if existing and not ui.confirm_action(f"Overwrite {len(existing)} existing result file(s)?"):
            logger.info("Emit cancelled; existing result files kept")
            return None
    return args


def main(argv: Optional[list[str]] = None) -> int:
    """
    Run one subcommand.

    Returns:
        0 if every requested job completed, 1 otherwise, 130 on interrupt
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level)

    ui = ExperimentConsole(console)
    try:
        if args.command is None:
            show_banner()
            args = interactive(parser, ui)
            if args is None:
                logger.info("Exiting")
                return 0

        logger.info(f"Running {args.command}")
        tally = COMMANDS[args.command](args, ui)
        ui.show_summary(tally.total, tally.completed, tally.failed)

        if tally.failed:
            ui.print_status(f"✗ {tally.failed} job(s) did not complete; see {LOG_FILE}", style="red bold")
            return 1
        return 0

    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        console.print("\nCancelled")
        return 130

    except Exception as e:
        logger.error(f"Unexpected error: {e}", exc_info=True)
        console.print(f"\n[red]Error: {e}[/red]")
        return 1


if __name__ == "__main__":
    sys.exit(main())
