"""Token-tagging datasets for the group word problem and the string indexing tasks."""

import itertools
import string
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from loguru import logger

from algebra import FiniteGroup, get_group, prefix_products
from autodiff import IGNORE_LABEL


@dataclass(frozen=True)
class TaggingRecord:
    """One word with its prefix-product labels."""

    tokens: tuple[int, ...]
    labels: tuple[int, ...]

    def __post_init__(self):
        if len(self.tokens) != len(self.labels):
            raise ValueError(f"{len(self.tokens)} tokens but {len(self.labels)} labels")

    def to_dict(self) -> dict:
        return {"tokens": list(self.tokens), "labels": list(self.labels)}

    @classmethod
    def from_dict(cls, data: dict) -> "TaggingRecord":
        return cls(tuple(int(t) for t in data["tokens"]), tuple(int(y) for y in data["labels"]))

    @classmethod
    def for_word(cls, g: FiniteGroup, word) -> "TaggingRecord":
        word = tuple(int(t) for t in word)
        return cls(word, tuple(prefix_products(g, word)))


@dataclass
class DatasetSplits:
    """Train/val/test records plus what is needed to read them back."""

    group_id: str
    length: int
    seed: int
    train: list[TaggingRecord] = field(default_factory=list)
    val: list[TaggingRecord] = field(default_factory=list)
    test: list[TaggingRecord] = field(default_factory=list)
    vocabulary: list[str] = field(default_factory=list)
    task: str = "group"
    """group, pre-index or post-index"""

    @property
    def bos_token(self) -> int:
        """Token id of ``$``, one past the last vocabulary entry."""
        return len(self.vocabulary)

    @property
    def num_labels(self) -> int:
        """Group elements, or data tokens for the indexing tasks (the index token is never a label)."""
        if self.task == "group":
            return len(self.vocabulary)
        return len(self.vocabulary) - 1

    @property
    def ignore_label(self) -> int:
        return IGNORE_LABEL

    def split(self, name: str) -> list[TaggingRecord]:
        if name not in ("train", "val", "test"):
            raise ValueError(f"Unknown split: {name!r}")
        return getattr(self, name)

    def metadata(self) -> dict:
        return {
            "group_id": self.group_id,
            "task": self.task,
            "length": self.length,
            "seed": self.seed,
            "sizes": {name: len(self.split(name)) for name in ("train", "val", "test")},
            "vocabulary": list(self.vocabulary),
            "bos_token": self.bos_token,
            "ignore_label": self.ignore_label,
        }


def with_bos(records: list[TaggingRecord], bos_token: int) -> list[TaggingRecord]:
    """Prepend ``$`` to every word; its position carries the ignore label."""
    return [TaggingRecord((bos_token,) + r.tokens, (IGNORE_LABEL,) + r.labels) for r in records]


def pairwise_records(g: FiniteGroup) -> list[TaggingRecord]:
    """Every length-2 word, in lexicographic order."""
    return [TaggingRecord.for_word(g, pair) for pair in itertools.product(range(g.order), repeat=2)]


def _distinct_words(
    g: FiniteGroup, length: int, count: int, rng: np.random.Generator
) -> list[tuple[int, ...]]:
    space = g.order**length
    if count > space:
        logger.warning(f"Requested {count} distinct words but only {space} exist; capping")
        count = space

    # Dense draws enumerate instead of rejection sampling
    if count * 2 > space:
        chosen = rng.choice(space, size=count, replace=False)
        return [tuple(int(d) for d in np.unravel_index(int(i), (g.order,) * length)) for i in chosen]

    seen: set[tuple[int, ...]] = set()
    words = []
    while len(words) < count:
        word = tuple(int(x) for x in rng.integers(0, g.order, size=length))
        if word not in seen:
            seen.add(word)
            words.append(word)
    return words


def gen_dataset(
    group_id: str,
    length: int,
    sizes: tuple[int, int, int],
    seed: int,
) -> DatasetSplits:
    """
    Generate train/val/test splits for prefix-product tagging.

    Sampled words are distinct across all three splits. The training split
    also contains every length-2 word, which at length 2 means the held-out
    splits repeat training pairs.

    Args:
        group_id: Registered group id
        length: Length of the sampled words, at least 2
        sizes: Number of sampled (train, val, test) words
        seed: Sampling seed

    Returns:
        DatasetSplits with one token per group element
    """
    if length < 2:
        raise ValueError(f"Sequence length must be >= 2, got {length}")
    if len(sizes) != 3 or any(s < 0 for s in sizes):
        raise ValueError(f"sizes must be three non-negative counts, got {sizes}")

    g = get_group(group_id)
    rng = np.random.default_rng(seed)

    train_size, val_size, test_size = sizes
    words = _distinct_words(g, length, train_size + val_size + test_size, rng)
    records = [TaggingRecord.for_word(g, w) for w in words]

    # A cap shrinks the held-out splits last
    test_size = min(test_size, len(records))
    val_size = min(val_size, len(records) - test_size)
    test = records[:test_size]
    val = records[test_size : test_size + val_size]
    sampled_train = records[test_size + val_size :]

    pairs = pairwise_records(g)
    if length == 2:
        held_out = {r.tokens for r in sampled_train}
        train = sampled_train + [p for p in pairs if p.tokens not in held_out]
    else:
        train = pairs + sampled_train

    splits = DatasetSplits(
        group_id=g.group_id,
        length=length,
        seed=seed,
        train=train,
        val=val,
        test=test,
        vocabulary=list(g.names),
    )
    logger.info(
        f"Generated {g.group_id} dataset at length {length} (seed {seed}): "
        f"{len(train)} train ({len(pairs)} pairwise), {len(val)} val, {len(test)} test"
    )
    return splits


INDEX_TASKS = ("pre-index", "post-index")


def indexing_record(task: str, data: tuple[int, ...], index: int, index_token: int) -> TaggingRecord:
    """
    One indexing query, labelled ``data[index]`` at its last position only.

    Pre-indexing puts ``index`` index tokens before the data, post-indexing
    after it.
    """
    if task not in INDEX_TASKS:
        raise ValueError(f"Unknown indexing task {task!r}; choose from {list(INDEX_TASKS)}")
    if not 0 <= index < len(data):
        raise ValueError(f"Index {index} outside data of length {len(data)}")

    run = (index_token,) * index
    tokens = run + tuple(data) if task == "pre-index" else tuple(data) + run
    labels = (IGNORE_LABEL,) * (len(tokens) - 1) + (int(data[index]),)
    return TaggingRecord(tokens, labels)


def _distinct_queries(
    length: int, vocab_size: int, count: int, rng: np.random.Generator
) -> list[tuple[int, tuple[int, ...]]]:
    strings = vocab_size**length
    space = length * strings
    if count > space:
        logger.warning(f"Requested {count} distinct queries but only {space} exist; capping")
        count = space

    if count * 2 > space:
        chosen = rng.choice(space, size=count, replace=False)
        shape = (vocab_size,) * length
        return [
            (int(i) // strings, tuple(int(d) for d in np.unravel_index(int(i) % strings, shape)))
            for i in chosen
        ]

    seen: set[tuple[int, tuple[int, ...]]] = set()
    queries = []
    while len(queries) < count:
        query = (int(rng.integers(0, length)), tuple(int(t) for t in rng.integers(0, vocab_size, size=length)))
        if query not in seen:
            seen.add(query)
            queries.append(query)
    return queries


def gen_indexing_dataset(
    task: str,
    length: int,
    vocab_size: int,
    sizes: tuple[int, int, int],
    seed: int,
) -> DatasetSplits:
    """
    Generate train/val/test splits for pre- or post-indexing.

    Data tokens are ``0 .. v-1`` (named b, c, d, ...), the index token ``a``
    is ``v`` and ``$`` is ``v + 1``. Sampled (index, data) pairs are distinct
    across all three splits.

    Args:
        task: ``pre-index`` or ``post-index``
        length: Number of data tokens n; indices run over 0..n-1
        vocab_size: Number of data tokens v, 2 to 25
        sizes: Number of sampled (train, val, test) queries
        seed: Sampling seed

    Returns:
        DatasetSplits with group_id ``<task>-v<v>``
    """
    if task not in INDEX_TASKS:
        raise ValueError(f"Unknown indexing task {task!r}; choose from {list(INDEX_TASKS)}")
    if length < 1:
        raise ValueError(f"Sequence length must be >= 1, got {length}")
    if not 2 <= vocab_size <= 25:
        raise ValueError(f"vocab_size must be in [2, 25], got {vocab_size}")
    if len(sizes) != 3 or any(s < 0 for s in sizes):
        raise ValueError(f"sizes must be three non-negative counts, got {sizes}")

    rng = np.random.default_rng(seed)
    train_size, val_size, test_size = sizes
    queries = _distinct_queries(length, vocab_size, train_size + val_size + test_size, rng)
    records = [indexing_record(task, data, index, vocab_size) for index, data in queries]

    test_size = min(test_size, len(records))
    val_size = min(val_size, len(records) - test_size)

    splits = DatasetSplits(
        group_id=f"{task}-v{vocab_size}",
        length=length,
        seed=seed,
        train=records[test_size + val_size :],
        val=records[test_size : test_size + val_size],
        test=records[:test_size],
        vocabulary=list(string.ascii_lowercase[1 : vocab_size + 1]) + ["a"],
        task=task,
    )
    logger.info(
        f"Generated {task} dataset with {vocab_size} data tokens at length {length} (seed {seed}): "
        f"{len(splits.train)} train, {len(splits.val)} val, {len(splits.test)} test"
    )
    return splits


def pad_batch(
    records: list[TaggingRecord], pad_token: int, max_len: Optional[int] = None
) -> tuple[np.ndarray, np.ndarray]:
    """
    Stack records into (batch, n) token and label arrays.

    Short rows are padded on the right; padded positions carry the ignore
    label, so causal models see them only after every real position.
    """
    if not records:
        raise ValueError("Cannot batch zero records")

    width = max_len or max(len(r.tokens) for r in records)
    tokens = np.full((len(records), width), pad_token, dtype=np.int64)
    labels = np.full((len(records), width), IGNORE_LABEL, dtype=np.int64)
    for row, record in enumerate(records):
        tokens[row, : len(record.tokens)] = record.tokens
        labels[row, : len(record.labels)] = record.labels
    return tokens, labels
