"""Interaction logs: ingestion from delimited text, index maps, sparse views.

Raw user/item identifiers are opaque strings; every log carries bijective
maps onto dense contiguous indices assigned in first-appearance order.
Duplicate (user, item) records survive ingestion and only collapse when a
sparse matrix is materialized.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from ._util import sha256_file


@dataclass(frozen=True)
class Interaction:
    """One feedback record: user liked/rated/consumed item at a point in time."""

    user: str
    item: str
    value: float = 1.0
    timestamp: Optional[int] = None


class InteractionLog:
    """Ordered multiset of interactions plus dense user/item index maps.

    Record-level fields are parallel numpy arrays over dense indices;
    ``user_ids`` / ``item_ids`` give the reverse map (dense -> raw).
    Instances are immutable after construction and safe to share.
    """

    def __init__(self, users, items, values, timestamps, user_ids, item_ids):
        self.users = np.asarray(users, dtype=np.int64)
        self.items = np.asarray(items, dtype=np.int64)
        self.values = np.asarray(values, dtype=np.float64)
        self.timestamps = (
            None if timestamps is None else np.asarray(timestamps, dtype=np.int64)
        )
        self.user_ids = list(user_ids)
        self.item_ids = list(item_ids)
        self.user_index = {raw: idx for idx, raw in enumerate(self.user_ids)}
        self.item_index = {raw: idx for idx, raw in enumerate(self.item_ids)}
        lengths = {len(self.users), len(self.items), len(self.values)}
        if self.timestamps is not None:
            lengths.add(len(self.timestamps))
        if len(lengths) > 1:
            raise ValueError("record arrays must have equal length")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("interaction values must be finite")
        if self.timestamps is not None and len(self.timestamps) and self.timestamps.min() < 0:
            raise ValueError("timestamps must be non-negative")

    @classmethod
    def from_interactions(cls, interactions: Sequence[Interaction]) -> "InteractionLog":
        """Build a log from records, assigning dense ids in first-appearance order."""
        user_ids: list[str] = []
        item_ids: list[str] = []
        user_index: dict[str, int] = {}
        item_index: dict[str, int] = {}
        users, items, values, timestamps = [], [], [], []
        has_ts = any(rec.timestamp is not None for rec in interactions)
        for rec in interactions:
            if rec.user not in user_index:
                user_index[rec.user] = len(user_ids)
                user_ids.append(rec.user)
            if rec.item not in item_index:
                item_index[rec.item] = len(item_ids)
                item_ids.append(rec.item)
            users.append(user_index[rec.user])
            items.append(item_index[rec.item])
            values.append(float(rec.value))
            if has_ts:
                if rec.timestamp is None:
                    raise ValueError("mixed records: some have timestamps, some do not")
                timestamps.append(int(rec.timestamp))
        return cls(users, items, values, timestamps if has_ts else None, user_ids, item_ids)

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def has_timestamps(self) -> bool:
        return self.timestamps is not None

    def __len__(self) -> int:
        return len(self.users)

    def interactions(self) -> Iterator[Interaction]:
        """Iterate the records with raw identifiers, in stored order."""
        for pos in range(len(self)):
            yield Interaction(
                user=self.user_ids[self.users[pos]],
                item=self.item_ids[self.items[pos]],
                value=float(self.values[pos]),
                timestamp=None if self.timestamps is None else int(self.timestamps[pos]),
            )

    def take(self, positions) -> "InteractionLog":
        """Sub-log of the records at ``positions``, keeping the parent index maps.

        Used by splitters: train/validation/test partitions must agree on
        what each dense index means.
        """
        positions = np.asarray(positions, dtype=np.int64)
        return InteractionLog(
            self.users[positions],
            self.items[positions],
            self.values[positions],
            None if self.timestamps is None else self.timestamps[positions],
            self.user_ids,
            self.item_ids,
        )

    def replace_records(self, mask) -> "InteractionLog":
        """Records selected by ``mask``, with index maps rebuilt dense.

        Used by filters: entities that lost all records disappear from the
        maps and the survivors are renumbered in first-appearance order.
        """
        mask = np.asarray(mask, dtype=bool)
        return InteractionLog.from_interactions(
            [rec for keep, rec in zip(mask, self.interactions()) if keep]
        )

    def with_values(self, values) -> "InteractionLog":
        return InteractionLog(
            self.users, self.items, values,
            self.timestamps, self.user_ids, self.item_ids,
        )


def concatenate_logs(first: InteractionLog, second: InteractionLog) -> InteractionLog:
    """Append two logs that share the same index maps (e.g. train + validation)."""
    if first.user_ids != second.user_ids or first.item_ids != second.item_ids:
        raise ValueError("cannot concatenate logs with different index maps")
    if first.has_timestamps != second.has_timestamps:
        raise ValueError("cannot concatenate logs with mismatched timestamp presence")
    return InteractionLog(
        np.concatenate([first.users, second.users]),
        np.concatenate([first.items, second.items]),
        np.concatenate([first.values, second.values]),
        None if first.timestamps is None
        else np.concatenate([first.timestamps, second.timestamps]),
        first.user_ids,
        first.item_ids,
    )


def ingest(path, schema, delimiter: str = ",", has_header: bool = False) -> InteractionLog:
    """Parse a delimited interaction file into an :class:`InteractionLog`.

    ``schema`` maps the keys ``user``, ``item`` (required) and ``value``,
    ``timestamp`` (optional) to either 0-based column positions or, when the
    file has a header row, column names. A missing value column yields
    value 1.0 for every record; a missing timestamp column yields a log with
    ``has_timestamps == False``. Malformed rows abort with their line number.
    """
    if "user" not in schema or "item" not in schema:
        raise ValueError("schema must name 'user' and 'item' columns")
    if not os.path.exists(path):
        raise FileNotFoundError(path)

    records: list[Interaction] = []
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle, delimiter=delimiter)
        header = None
        if has_header:
            header = next(reader, None)
            if header is None:
                raise ValueError(f"{path}: empty file, expected a header row")
        columns = _resolve_schema(schema, header, path)
        start_line = 2 if has_header else 1
        for line_no, row in enumerate(reader, start=start_line):
            if not row or (len(row) == 1 and row[0].strip() == ""):
                continue
            try:
                user = row[columns["user"]].strip()
                item = row[columns["item"]].strip()
                value = float(row[columns["value"]]) if "value" in columns else 1.0
                timestamp = (
                    int(float(row[columns["timestamp"]])) if "timestamp" in columns else None
                )
            except (IndexError, ValueError) as exc:
                raise ValueError(f"{path}: malformed row at line {line_no}: {exc}") from exc
            if user == "" or item == "":
                raise ValueError(f"{path}: malformed row at line {line_no}: empty identifier")
            records.append(Interaction(user, item, value, timestamp))
    if not records:
        raise ValueError(f"{path}: no interaction records")
    return InteractionLog.from_interactions(records)


def _resolve_schema(schema, header, path) -> dict[str, int]:
    columns = {}
    for key, ref in schema.items():
        if key not in ("user", "item", "value", "timestamp"):
            raise ValueError(f"unknown schema key {key!r}")
        if ref is None:
            continue
        if isinstance(ref, int):
            columns[key] = ref
        else:
            if header is None:
                raise ValueError(f"{path}: schema names column {ref!r} but file has no header")
            if ref not in header:
                raise ValueError(f"{path}: column {ref!r} not in header {header}")
            columns[key] = header.index(ref)
    return columns


def write_log(log: InteractionLog, path, delimiter: str = ",") -> None:
    """Serialize a log back to delimited text (user, item, value[, timestamp])."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, delimiter=delimiter, lineterminator="\n")
        for rec in log.interactions():
            row = [rec.user, rec.item, repr(rec.value)]
            if log.has_timestamps:
                row.append(str(rec.timestamp))
            writer.writerow(row)


def to_matrix(log: InteractionLog) -> sp.csr_matrix:
    """Binary user-item matrix in compressed-row form; duplicates collapse.

    Every recorded (u, i) pair becomes a single entry of 1.0; everything
    unobserved stays an implicit zero.
    """
    if len(log) == 0:
        raise ValueError("empty dataset")
    positive = log.values > 0
    if not positive.any():
        raise ValueError("no positive interactions to materialize")
    matrix = sp.csr_matrix(
        (np.ones(int(positive.sum())), (log.users[positive], log.items[positive])),
        shape=(log.n_users, log.n_items),
    )
    matrix.sum_duplicates()
    matrix.data[:] = 1.0
    matrix.sort_indices()
    return matrix


def write_manifest(path, data_path, schema, delimiter: str, has_header: bool) -> dict:
    """Record a dataset's location, parse schema, and content hash as JSON."""
    manifest = {
        "path": os.path.abspath(data_path),
        "schema": schema,
        "delimiter": delimiter,
        "has_header": has_header,
        "sha256": sha256_file(data_path),
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return manifest


def load_manifest(path) -> dict:
    with open(path, "r", encoding="utf-8") as handle:
        manifest = json.load(handle)
    for key in ("path", "schema", "delimiter", "has_header"):
        if key not in manifest:
            raise ValueError(f"{path}: dataset manifest missing {key!r}")
    return manifest


def ingest_manifest(manifest: dict, verify_hash: bool = True) -> InteractionLog:
    """Ingest the dataset a manifest points at, optionally checking its hash."""
    if verify_hash and "sha256" in manifest:
        actual = sha256_file(manifest["path"])
        if actual != manifest["sha256"]:
            raise ValueError(
                f"dataset content hash mismatch: manifest {manifest['sha256']}, file {actual}"
            )
    return ingest(
        manifest["path"],
        manifest["schema"],
        delimiter=manifest["delimiter"],
        has_header=manifest["has_header"],
    )
