"""Ingestion, index maps, round-trips, and the sparse matrix view."""

import numpy as np
import pytest

from rankbench.data import (
    Interaction,
    InteractionLog,
    concatenate_logs,
    ingest,
    ingest_manifest,
    to_matrix,
    write_log,
    write_manifest,
)

from conftest import make_log


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


SCHEMA_FULL = {"user": 0, "item": 1, "value": 2, "timestamp": 3}


def test_ingest_three_line_file(tmp_path):
    path = tmp_path / "toy.csv"
    write_lines(path, ["u1,i1,5,10", "u1,i2,3,20", "u2,i1,4,5"])
    log = ingest(path, SCHEMA_FULL)
    assert log.n_users == 2
    assert log.n_items == 2
    assert len(log) == 3
    assert log.has_timestamps
    # dense ids in first-appearance order
    assert log.user_index == {"u1": 0, "u2": 1}
    assert log.item_index == {"i1": 0, "i2": 1}


def test_ingest_without_timestamp_column(tmp_path):
    path = tmp_path / "nots.csv"
    write_lines(path, ["u1,i1,5", "u2,i2,3"])
    log = ingest(path, {"user": 0, "item": 1, "value": 2})
    assert not log.has_timestamps
    from rankbench.splitting import split_by_ratio

    with pytest.raises(ValueError, match="timestamps"):
        split_by_ratio(log, 0.8, time_aware=True)


def test_ingest_without_value_column(tmp_path):
    # count-style data: presence of the record is the signal
    path = tmp_path / "counts.csv"
    write_lines(path, ["u1,i1", "u1,i2", "u2,i1"])
    log = ingest(path, {"user": 0, "item": 1})
    assert np.all(log.values == 1.0)


def test_ingest_header_names(tmp_path):
    path = tmp_path / "hdr.csv"
    write_lines(path, ["user,track,plays", "a,x,3", "b,y,1"])
    log = ingest(path, {"user": "user", "item": "track", "value": "plays"},
                 has_header=True)
    assert len(log) == 2
    assert log.values.tolist() == [3.0, 1.0]


def test_ingest_malformed_row_reports_line_number(tmp_path):
    path = tmp_path / "bad.csv"
    write_lines(path, ["u1,i1,5,10", "u2,i2,not_a_number,3"])
    with pytest.raises(ValueError, match="line 2"):
        ingest(path, SCHEMA_FULL)


def test_ingest_keeps_duplicate_records(tmp_path):
    path = tmp_path / "dup.csv"
    write_lines(path, ["u1,i1,5,10", "u1,i1,5,10", "u1,i1,4,11"])
    log = ingest(path, SCHEMA_FULL)
    assert len(log) == 3


def test_round_trip_preserves_interaction_multiset(tmp_path, rng):
    from conftest import random_log

    log = random_log(rng)
    path = tmp_path / "out.csv"
    write_log(log, path)
    again = ingest(path, SCHEMA_FULL)
    original = sorted((r.user, r.item, r.value, r.timestamp) for r in log.interactions())
    reloaded = sorted((r.user, r.item, r.value, r.timestamp) for r in again.interactions())
    assert original == reloaded


def test_index_stability_same_file_twice(tmp_path):
    path = tmp_path / "stable.csv"
    write_lines(path, ["b,y,1,1", "a,x,2,2", "b,x,3,3"])
    first = ingest(path, SCHEMA_FULL)
    second = ingest(path, SCHEMA_FULL)
    assert first.user_index == second.user_index
    assert first.item_index == second.item_index


def test_to_matrix_counts_and_dedup():
    log = make_log([("u1", "i1"), ("u1", "i2"), ("u2", "i1")])
    matrix = to_matrix(log)
    assert matrix.nnz == 3
    assert matrix.shape == (2, 2)

    dup = make_log([("u1", "i1"), ("u1", "i1"), ("u2", "i2")])
    assert to_matrix(dup).nnz == 2
    assert to_matrix(dup).max() == 1.0


def test_to_matrix_nnz_bound(rng):
    from conftest import random_log

    log = random_log(rng, n_records=80)
    matrix = to_matrix(log)
    assert matrix.nnz <= len(log)
    unique_pairs = len({(u, i) for u, i in zip(log.users, log.items)})
    assert matrix.nnz == unique_pairs


def test_to_matrix_empty_log_errors():
    log = make_log([("u1", "i1")]).take(np.empty(0, dtype=np.int64))
    with pytest.raises(ValueError, match="empty dataset"):
        to_matrix(log)


def test_matrix_invariants(rng):
    from conftest import random_log

    matrix = to_matrix(random_log(rng, n_records=100))
    # strictly increasing column indices within each row, no duplicates
    for row in range(matrix.shape[0]):
        cols = matrix.indices[matrix.indptr[row]:matrix.indptr[row + 1]]
        assert np.all(np.diff(cols) > 0)
    assert np.all(np.isfinite(matrix.data))


def test_manifest_round_trip(tmp_path):
    path = tmp_path / "toy.csv"
    write_lines(path, ["u1,i1,5,10", "u2,i2,4,5"])
    manifest_path = tmp_path / "toy.manifest.json"
    manifest = write_manifest(manifest_path, path, SCHEMA_FULL, ",", False)
    log = ingest_manifest(manifest)
    assert len(log) == 2
    # hash check catches edits
    path.write_text("u1,i1,5,10\n", encoding="utf-8")
    with pytest.raises(ValueError, match="hash mismatch"):
        ingest_manifest(manifest)


def test_concatenate_logs_shares_maps():
    log = make_log([("u1", "i1", 1.0, 1), ("u2", "i2", 1.0, 2), ("u1", "i2", 1.0, 3)])
    first = log.take([0, 1])
    second = log.take([2])
    merged = concatenate_logs(first, second)
    assert len(merged) == 3
    assert merged.user_ids == log.user_ids

    other = make_log([("v1", "j1")])
    with pytest.raises(ValueError, match="index maps"):
        concatenate_logs(first, other)


def test_mixed_timestamp_presence_rejected():
    with pytest.raises(ValueError, match="mixed"):
        InteractionLog.from_interactions(
            [Interaction("a", "x", 1.0, 5), Interaction("b", "y", 1.0, None)]
        )
