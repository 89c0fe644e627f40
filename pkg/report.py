"""Emit run results as CSV, JSONL or an SVG minimum-depth or minimum-width chart."""

import csv
from pathlib import Path

from loguru import logger

from results import ResultRecord, minimum_per_cell
from storage import ResultStorage

RESULT_COLUMNS = [
    "family",
    "group_id",
    "length",
    "depth",
    "d_model",
    "seed",
    "steps_used",
    "full_sequence_accuracy",
    "per_token_accuracy",
    "status",
    "seconds",
]
"""CSV header, in order. Accuracies are fractions in [0, 1]."""

FORMATS = ("csv", "jsonl", "svg")


def write_csv(records: list[ResultRecord], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=RESULT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for record in records:
            writer.writerow(record.to_dict())


def read_csv(path: Path) -> list[ResultRecord]:
    with path.open("r", encoding="utf-8", newline="") as f:
        return [ResultRecord.from_dict(row) for row in csv.DictReader(f)]


def write_svg(records: list[ResultRecord], path: Path, threshold: float, axis: str = "depth") -> None:
    """
    Minimum depth (or width) against sequence length, one panel per group and one line per family.

    Each family's line carries the SVG id ``series-<family>``. Cells with no
    successful setting are drawn on a row labelled "none" above the largest
    one tried. Widths use a log2 axis.
    """
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "min-depth"
    import matplotlib.pyplot as plt

    rows = minimum_per_cell(records, threshold, axis)
    groups = sorted({row.group_id for row in rows})
    tried = sorted({getattr(r, axis) for r in records})
    if axis == "depth":
        ticks = list(range(1, tried[-1] + 1))
        none_level = tried[-1] + 1
    else:
        ticks = tried
        none_level = 2 * tried[-1]

    fig, axes = plt.subplots(1, len(groups), figsize=(4.5 * len(groups), 3.6), squeeze=False, constrained_layout=True)
    for ax, group_id in zip(axes[0], groups, strict=True):
        by_family: dict[str, list] = {}
        for row in rows:
            if row.group_id == group_id:
                by_family.setdefault(row.family, []).append(row)

        for family, family_rows in sorted(by_family.items()):
            xs = [r.length for r in family_rows]
            ys = [none_level if r.minimum is None else r.minimum for r in family_rows]
            (line,) = ax.plot(xs, ys, marker="o", label=family)
            line.set_gid(f"series-{family}")

        if axis == "d_model":
            ax.set_yscale("log", base=2)
        ax.set_title(group_id)
        ax.set_xlabel("Sequence length")
        ax.set_yticks(ticks + [none_level])
        ax.set_yticklabels([str(t) for t in ticks] + ["none"])
        ax.grid(True, alpha=0.3)
        ax.legend(loc="best", fontsize=8)
    axes[0][0].set_ylabel("Minimum depth" if axis == "depth" else "Minimum d_model")

    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def emit_results(
    records: list[ResultRecord],
    fmt: str,
    path: str | Path,
    threshold: float = 0.9,
    axis: str = "depth",
) -> Path:
    """
    Write records in one of the supported formats.

    Args:
        records: Run records, non-empty
        fmt: csv, jsonl or svg
        path: Output file
        threshold: Accuracy counted as success when deriving minimum settings (svg)
        axis: ``depth`` or ``d_model``, the setting the svg chart plots

    Returns:
        The path written
    """
    if not records:
        raise ValueError("emit_results needs at least one record")
    if fmt not in FORMATS:
        raise ValueError(f"Unknown format {fmt!r}; choose from {list(FORMATS)}")

    path = Path(path)
    match fmt:
        case "csv":
            write_csv(records, path)
        case "jsonl":
            ResultStorage(path).save_records(records)
        case "svg":
            write_svg(records, path, threshold, axis)

    logger.info(f"Wrote {len(records)} records as {fmt} to {path}")
    return path
