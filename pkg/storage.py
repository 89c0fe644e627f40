"""Storage for generated datasets and run results."""

import json
from pathlib import Path

import yaml
from loguru import logger

from dataset import DatasetSplits, TaggingRecord
from results import ResultRecord

SPLIT_NAMES = ("train", "val", "test")


def _dump_line(data: dict) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


class DatasetStorage:
    """Handles the split files and metadata sidecar of one dataset directory."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)

    @property
    def metadata_path(self) -> Path:
        return self.directory / "metadata.yaml"

    def split_path(self, name: str) -> Path:
        return self.directory / f"{name}.jsonl"

    def save(self, splits: DatasetSplits) -> None:
        """
        Write ``train.jsonl``, ``val.jsonl``, ``test.jsonl`` and ``metadata.yaml``.

        Output is byte-identical for identical splits.

        Args:
            splits: Generated dataset
        """
        self.directory.mkdir(parents=True, exist_ok=True)

        for name in SPLIT_NAMES:
            records = splits.split(name)
            with open(self.split_path(name), "w", encoding="utf-8", newline="\n") as f:
                for record in records:
                    f.write(_dump_line(record.to_dict()) + "\n")
            logger.debug(f"Wrote {len(records)} records to {self.split_path(name)}")

        with open(self.metadata_path, "w", encoding="utf-8", newline="\n") as f:
            yaml.safe_dump(splits.metadata(), f, sort_keys=True)

        logger.info(f"Saved {splits.group_id} length-{splits.length} dataset to {self.directory}")

    def load(self) -> DatasetSplits:
        """
        Load a dataset written by save().

        Returns:
            DatasetSplits
        """
        if not self.exists():
            raise FileNotFoundError(f"No dataset in {self.directory}")

        with open(self.metadata_path, "r", encoding="utf-8") as f:
            metadata = yaml.safe_load(f)

        splits = DatasetSplits(
            group_id=metadata["group_id"],
            length=int(metadata["length"]),
            seed=int(metadata["seed"]),
            vocabulary=[str(name) for name in metadata["vocabulary"]],
            task=metadata.get("task", "group"),
        )
        for name in SPLIT_NAMES:
            with open(self.split_path(name), "r", encoding="utf-8") as f:
                records = [TaggingRecord.from_dict(json.loads(line)) for line in f if line.strip()]
            setattr(splits, name, records)

        logger.info(
            f"Loaded dataset from {self.directory}: "
            + ", ".join(f"{len(splits.split(n))} {n}" for n in SPLIT_NAMES)
        )
        return splits

    def exists(self) -> bool:
        """Check that the metadata and every split file are present."""
        return self.metadata_path.exists() and all(self.split_path(n).exists() for n in SPLIT_NAMES)


class ResultStorage:
    """Handles a JSONL file of run results."""

    def __init__(self, storage_file: str | Path = "results.jsonl"):
        self.storage_path = Path(storage_file)

    def save_records(self, records: list[ResultRecord], merge: bool = False) -> None:
        """
        Save result records.

        Args:
            records: Records to write
            merge: If True, merge with existing records instead of overwriting
        """
        if merge and self.exists():
            existing = self.load_records()
            to_save = self._merge_records(existing, records)
            logger.info(f"Merging {len(records)} new records with {len(existing)} existing")
        else:
            to_save = records
            logger.info(f"Saving {len(records)} records to {self.storage_path}")

        self.storage_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.storage_path, "w", encoding="utf-8", newline="\n") as f:
            for record in to_save:
                f.write(_dump_line(record.to_dict()) + "\n")

        logger.info(f"Successfully saved {len(to_save)} records to {self.storage_path}")

    def load_records(self) -> list[ResultRecord]:
        """
        Load result records.

        Returns:
            List of ResultRecord, empty if the file does not exist
        """
        if not self.storage_path.exists():
            logger.warning(f"Storage file {self.storage_path} does not exist")
            return []

        logger.info(f"Loading results from {self.storage_path}")
        with open(self.storage_path, "r", encoding="utf-8") as f:
            records = [ResultRecord.from_dict(json.loads(line)) for line in f if line.strip()]

        logger.info(f"Loaded {len(records)} records")
        return records

    def exists(self) -> bool:
        """Check if storage file exists."""
        return self.storage_path.exists()

    def _merge_records(self, existing: list[ResultRecord], new: list[ResultRecord]) -> list[ResultRecord]:
        """
        Merge new records with existing ones.

        Strategy:
        - Use (family, group, length, depth, seed) as unique key
        - If a record exists, replace it with the newer one
        - Keep all existing records not in the new batch

        Args:
            existing: Existing records
            new: New records

        Returns:
            Merged records in first-seen order
        """
        record_map = {record.key: record for record in existing}

        updated_count = 0
        added_count = 0

        for record in new:
            if record.key in record_map:
                updated_count += 1
                logger.debug(f"Updated existing record: {record.key}")
            else:
                added_count += 1
                logger.debug(f"Added new record: {record.key}")
            record_map[record.key] = record

        logger.info(f"Merge complete: {added_count} added, {updated_count} updated, {len(record_map)} total")

        return list(record_map.values())
