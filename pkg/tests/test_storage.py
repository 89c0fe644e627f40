"""Tests for storage module."""

import json

import pytest
import yaml

from dataset import gen_dataset, gen_indexing_dataset
from results import ResultRecord
from storage import DatasetStorage, ResultStorage


def make_record(depth=1, seed=0, full=0.5, family="ids4"):
    return ResultRecord(
        family=family,
        group_id="A5",
        length=8,
        depth=depth,
        seed=seed,
        steps_used=100,
        full_sequence_accuracy=full,
        per_token_accuracy=0.8,
    )


class TestDatasetStorage:
    """Test cases for DatasetStorage class."""

    def test_save_and_load(self, tmp_path):
        """Test saving and loading a dataset."""
        splits = gen_dataset("A5", 4, (30, 10, 10), seed=0)
        storage = DatasetStorage(tmp_path / "A5-n4-s0")

        storage.save(splits)
        loaded = storage.load()

        assert loaded.group_id == "A5"
        assert loaded.length == 4
        assert loaded.train == splits.train
        assert loaded.val == splits.val
        assert loaded.test == splits.test
        assert loaded.bos_token == 60

    def test_indexing_round_trip(self, tmp_path):
        """Test an indexing dataset keeps its task and label count."""
        splits = gen_indexing_dataset("post-index", 4, 5, (20, 5, 5), seed=0)
        storage = DatasetStorage(tmp_path / "post-index-v5-n4-s0")

        storage.save(splits)
        loaded = storage.load()

        assert loaded.task == "post-index"
        assert loaded.num_labels == 5
        assert loaded.bos_token == 6
        assert loaded.train == splits.train

    def test_files_written(self, tmp_path):
        """Test split files are JSON lines and metadata is YAML."""
        storage = DatasetStorage(tmp_path / "ds")
        storage.save(gen_dataset("Z60", 3, (5, 2, 2), seed=1))

        with open(storage.split_path("test"), "r") as f:
            lines = f.read().splitlines()
        with open(storage.metadata_path, "r") as f:
            metadata = yaml.safe_load(f)

        assert len(lines) == 2
        assert set(json.loads(lines[0])) == {"tokens", "labels"}
        assert metadata["sizes"]["test"] == 2
        assert metadata["ignore_label"] == -1

    def test_byte_identical_for_equal_seeds(self, tmp_path):
        """Test regenerating with the same seed writes identical files."""
        first = DatasetStorage(tmp_path / "a")
        second = DatasetStorage(tmp_path / "b")

        first.save(gen_dataset("S5", 3, (20, 5, 5), seed=3))
        second.save(gen_dataset("S5", 3, (20, 5, 5), seed=3))

        for name in ("train", "val", "test"):
            assert first.split_path(name).read_bytes() == second.split_path(name).read_bytes()
        assert first.metadata_path.read_bytes() == second.metadata_path.read_bytes()

    def test_exists_check(self, tmp_path):
        """Test exists() needs metadata and all three splits."""
        storage = DatasetStorage(tmp_path / "ds")

        assert not storage.exists()

        storage.save(gen_dataset("Z60", 2, (1, 1, 1), seed=0))
        assert storage.exists()

        storage.split_path("val").unlink()
        assert not storage.exists()

    def test_load_missing(self, tmp_path):
        """Test loading a missing dataset raises."""
        with pytest.raises(FileNotFoundError):
            DatasetStorage(tmp_path / "missing").load()


class TestResultStorage:
    """Test cases for ResultStorage class."""

    def test_save_and_load_records(self, tmp_path):
        """Test saving and loading result records."""
        storage = ResultStorage(tmp_path / "results.jsonl")
        records = [make_record(depth=1), make_record(depth=2, full=0.95)]

        storage.save_records(records)

        assert storage.load_records() == records

    def test_load_nonexistent_file(self, tmp_path):
        """Test loading from non-existent file."""
        storage = ResultStorage(tmp_path / "nonexistent.jsonl")

        assert storage.load_records() == []
        assert not storage.exists()

    def test_merge_new_and_existing(self, tmp_path):
        """Test a re-run replaces the record with the same key."""
        storage = ResultStorage(tmp_path / "results.jsonl")
        storage.save_records([make_record(depth=1, full=0.2), make_record(depth=2, full=0.3)])

        storage.save_records([make_record(depth=1, full=0.7), make_record(depth=3, full=0.9)], merge=True)
        records = storage.load_records()

        assert len(records) == 3
        by_depth = {r.depth: r.full_sequence_accuracy for r in records}
        assert by_depth == {1: 0.7, 2: 0.3, 3: 0.9}

    def test_save_without_merge_overwrites(self, tmp_path):
        """Test that saving without merge overwrites existing records."""
        storage = ResultStorage(tmp_path / "results.jsonl")
        storage.save_records([make_record(depth=1)])

        storage.save_records([make_record(depth=2)], merge=False)

        records = storage.load_records()
        assert len(records) == 1
        assert records[0].depth == 2

    def test_save_creates_parent_directories(self, tmp_path):
        """Test saving into a missing directory creates it."""
        storage = ResultStorage(tmp_path / "nested" / "results.jsonl")

        storage.save_records([make_record(seed=0), make_record(seed=1)])

        assert [r.seed for r in storage.load_records()] == [0, 1]

    def test_sorted_keys_on_disk(self, tmp_path):
        """Test each line is compact JSON with sorted keys."""
        storage = ResultStorage(tmp_path / "results.jsonl")
        storage.save_records([make_record()])

        line = (tmp_path / "results.jsonl").read_text().splitlines()[0]

        assert line.startswith('{"d_model":64,"depth":1,"family":"ids4"')
