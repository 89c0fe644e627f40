"""Training, evaluation and minimum-depth and minimum-width sweeps."""

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from loguru import logger

import autodiff as ad
from algebra import get_group
from config import EXACT_FAMILIES, ExperimentConfig
from dataset import DatasetSplits, TaggingRecord, gen_dataset, gen_indexing_dataset, pad_batch, with_bos
from models import SequenceTagger, Tagger, build_model
from results import BUDGET_EXHAUSTED, CONVERGED, DIVERGED, ResultRecord, SweepRow, minimum_per_cell
from storage import DatasetStorage, ResultStorage

EVAL_BATCH_SIZE = 256


def dataset_dir(config: ExperimentConfig, length: int, seed: int) -> Path:
    return config.output_path / "datasets" / f"{config.task_id}-n{length}-s{seed}"


def ensure_dataset(config: ExperimentConfig, length: int, seed: int) -> DatasetSplits:
    """
    Load the dataset for (task, length, seed), generating and saving it if absent.

    Args:
        config: Experiment configuration (group or task, sizes, output directory)
        length: Sequence length
        seed: Dataset seed

    Returns:
        DatasetSplits
    """
    storage = DatasetStorage(dataset_dir(config, length, seed))
    if storage.exists():
        return storage.load()

    sizes = (config.train_size, config.val_size, config.test_size)
    if config.task == "group":
        splits = gen_dataset(config.group_id, length, sizes, seed)
    else:
        splits = gen_indexing_dataset(config.task, length, config.index_vocab_size, sizes, seed)
    storage.save(splits)
    return splits


def uses_bos(family: str) -> bool:
    return family in ("ids4", "ids4-exact")


def evaluate(model: Tagger, records: list[TaggingRecord], pad_token: int) -> tuple[float, float]:
    """
    Score a model on labelled records.

    Positions with the ignore label are skipped by both metrics.

    Returns:
        (full-sequence accuracy, per-token accuracy); (0.0, 0.0) for no records
    """
    if not records:
        return 0.0, 0.0

    words_correct = 0
    tokens_correct = 0
    tokens_total = 0
    for start in range(0, len(records), EVAL_BATCH_SIZE):
        tokens, labels = pad_batch(records[start : start + EVAL_BATCH_SIZE], pad_token)
        predictions = model.predict(tokens)
        scored = labels != ad.IGNORE_LABEL
        hits = (predictions == labels) & scored

        words_correct += int(np.all(hits | ~scored, axis=1).sum())
        tokens_correct += int(hits.sum())
        tokens_total += int(scored.sum())

    return words_correct / len(records), tokens_correct / max(tokens_total, 1)


def train_model(
    config: ExperimentConfig,
    family: str,
    length: int,
    depth: int,
    seed: int,
    splits: Optional[DatasetSplits] = None,
) -> ResultRecord:
    """
    Train one model and score it on the test split.

    Training stops early once validation full-sequence accuracy reaches the
    threshold. Exact families skip training. A non-finite loss ends the run
    with status ``diverged``.

    Args:
        config: Experiment configuration
        family: Model family
        length: Sequence length of the dataset
        depth: Number of blocks
        seed: Seed for data, initialization and batch order
        splits: Dataset to use; loaded or generated when omitted

    Returns:
        ResultRecord
    """
    if splits is None:
        splits = ensure_dataset(config, length, seed)

    group = get_group(splits.group_id) if splits.task == "group" else None
    bos = splits.bos_token
    prepare = (lambda rs: with_bos(rs, bos)) if uses_bos(family) else (lambda rs: rs)
    train, val, test = prepare(splits.train), prepare(splits.val), prepare(splits.test)
    max_len = max(len(r.tokens) for r in train + val + test)

    model = build_model(
        family,
        depth,
        group,
        config,
        seed,
        max_len=max_len,
        bos_token=bos,
        vocab_size=bos + 1,
        num_labels=splits.num_labels,
    )
    started = time.monotonic()

    def finish(steps: int, status: str) -> ResultRecord:
        full, per_token = evaluate(model, test, bos)
        if status == CONVERGED and family in EXACT_FAMILIES and full < config.threshold:
            status = BUDGET_EXHAUSTED
        record = ResultRecord(
            family=family,
            group_id=splits.group_id,
            length=length,
            depth=depth,
            seed=seed,
            steps_used=steps,
            full_sequence_accuracy=full,
            per_token_accuracy=per_token,
            status=status,
            seconds=round(time.monotonic() - started, 3),
            d_model=config.d_model,
        )
        logger.info(
            f"{family} {splits.group_id} n={length} depth={depth} d_model={config.d_model} seed={seed}: "
            f"{status} after {steps} steps, test full-seq {full:.3f}, per-token {per_token:.3f}"
        )
        return record

    if not isinstance(model, SequenceTagger):
        return finish(0, CONVERGED)

    rng = np.random.default_rng(seed)
    optimizer = ad.Adam(model.parameters(), learning_rate=config.learning_rate)

    for step in range(1, config.max_steps + 1):
        batch_index = rng.choice(len(train), size=config.batch_size, replace=len(train) < config.batch_size)
        tokens, labels = pad_batch([train[i] for i in batch_index], bos)

        optimizer.zero_grad()
        loss = ad.cross_entropy_tagging_loss(model.forward(tokens), labels)
        if not np.isfinite(loss.item()):
            logger.warning(f"{family} depth={depth} seed={seed}: non-finite loss at step {step}")
            return finish(step, DIVERGED)
        loss.backward()
        optimizer.step()

        if step % config.eval_interval == 0 or step == config.max_steps:
            val_full, val_token = evaluate(model, val, bos)
            logger.debug(
                f"step {step}: loss {loss.item():.4f}, val full-seq {val_full:.3f}, per-token {val_token:.3f}"
            )
            if val_full >= config.threshold:
                return finish(step, CONVERGED)

        if config.max_seconds is not None and time.monotonic() - started > config.max_seconds:
            logger.warning(f"{family} depth={depth} seed={seed}: wall-clock budget hit at step {step}")
            return finish(step, BUDGET_EXHAUSTED)

    return finish(config.max_steps, BUDGET_EXHAUSTED)


@dataclass
class SweepResult:
    records: list[ResultRecord] = field(default_factory=list)
    rows: list[SweepRow] = field(default_factory=list)


def sweep_cell(config: ExperimentConfig, family: str, length: int, axis: str = "depth") -> list[ResultRecord]:
    """
    Try settings in ascending order over all seeds; stop at the first one any seed clears.

    ``axis="depth"`` walks ``config.depths`` at ``config.d_model``;
    ``axis="d_model"`` walks ``config.widths`` at the smallest configured depth.
    """
    if axis == "depth":
        settings = [(config, depth) for depth in sorted(config.depths)]
    elif axis == "d_model":
        depth = min(config.depths)
        settings = [(replace(config, d_model=width), depth) for width in sorted(config.widths)]
    else:
        raise ValueError(f"Unknown sweep axis: {axis!r}")

    records = []
    for run_config, depth in settings:
        outcomes = [train_model(run_config, family, length, depth, seed) for seed in config.seeds]
        records.extend(outcomes)
        if any(r.succeeded(config.threshold) for r in outcomes):
            value = depth if axis == "depth" else run_config.d_model
            logger.info(f"{family} {config.task_id} n={length}: minimum {axis} {value}")
            return records

    tried = config.depths if axis == "depth" else config.widths
    logger.info(f"{family} {config.task_id} n={length}: no {axis} in {tried} cleared {config.threshold}")
    return records


def _sweep(
    config: ExperimentConfig,
    axis: str,
    result_storage: Optional[ResultStorage],
    on_cell_done: Optional[Callable[[str, int], None]],
) -> SweepResult:
    for length in config.lengths:
        for seed in config.seeds:
            ensure_dataset(config, length, seed)

    cells = [(family, length) for family in config.families for length in config.lengths]
    logger.info(f"Sweeping {axis} over {len(cells)} cells on {config.task_id} with {config.workers} worker(s)")

    records: list[ResultRecord] = []
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = {cell: pool.submit(sweep_cell, config, *cell, axis) for cell in cells}
            for cell, future in futures.items():
                records.extend(future.result())
                if on_cell_done:
                    on_cell_done(*cell)
    else:
        for cell in cells:
            records.extend(sweep_cell(config, *cell, axis))
            if on_cell_done:
                on_cell_done(*cell)

    records.sort(key=lambda r: r.key)
    if result_storage is not None:
        result_storage.save_records(records, merge=True)

    return SweepResult(records=records, rows=minimum_per_cell(records, config.threshold, axis))


def depth_sweep(
    config: ExperimentConfig,
    result_storage: Optional[ResultStorage] = None,
    on_cell_done: Optional[Callable[[str, int], None]] = None,
) -> SweepResult:
    """
    Find the minimum depth reaching the accuracy threshold for every (family, length).

    Datasets are generated up front so parallel cells only read them.

    Args:
        config: Experiment configuration
        result_storage: If given, records are merged into it
        on_cell_done: Called with (family, length) as each cell finishes

    Returns:
        SweepResult with every run record and the minimum-depth table
    """
    return _sweep(config, "depth", result_storage, on_cell_done)


def width_sweep(
    config: ExperimentConfig,
    result_storage: Optional[ResultStorage] = None,
    on_cell_done: Optional[Callable[[str, int], None]] = None,
) -> SweepResult:
    """Find the minimum d_model reaching the threshold at the smallest configured depth."""
    return _sweep(config, "d_model", result_storage, on_cell_done)
