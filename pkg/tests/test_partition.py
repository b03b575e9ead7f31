import csv

import pytest

from src.services.partition import (
    Partition,
    PartitionError,
    classify,
    make_partitions,
    sfc_order,
    split_balanced,
    split_ill_balanced,
    validate_tiling,
    write_layout_csv,
)


def sizes(partitions):
    return [p.count for p in partitions]


def brute_force_skeletons(order, partitions, M):
    owner = {}
    for part in partitions:
        for k in range(part.start, part.stop):
            owner[order[k]] = part.id
    count = 0
    for x in range(M):
        for y in range(M):
            around = [((x - 1) % M, y), ((x + 1) % M, y), (x, (y - 1) % M), (x, (y + 1) % M)]
            if any(owner[p] != owner[(x, y)] for p in around):
                count += 1
    return count


def test_sfc_trivial_grid():
    assert list(sfc_order(1)) == [(0, 0)]


def test_sfc_base_case_is_column_serpentine():
    assert list(sfc_order(3)) == [(0, 0), (0, 1), (0, 2), (1, 2), (1, 1), (1, 0), (2, 0), (2, 1), (2, 2)]


@pytest.mark.parametrize("M", [3, 9, 27])
def test_sfc_is_adjacent_bijection(M):
    order = sfc_order(M)
    assert order.is_bijection()
    assert order.non_adjacent_pairs() == []
    assert order.index_of(order[len(order) - 1]) == M * M - 1


def test_sfc_rejects_non_power_of_three():
    with pytest.raises(PartitionError):
        sfc_order(6)


def test_split_balanced_examples():
    order = sfc_order(9)
    assert sizes(split_balanced(order, 4)) == [21, 20, 20, 20]
    assert sizes(split_balanced(order, 1)) == [81]
    assert sizes(split_balanced(order, 81)) == [1] * 81
    with pytest.raises(PartitionError):
        split_balanced(order, 0)
    with pytest.raises(PartitionError):
        split_balanced(order, 82)


@pytest.mark.parametrize("M", [9, 27])
@pytest.mark.parametrize("P", [1, 2, 3, 4, 6, 8])
def test_split_balanced_ratio(M, P):
    parts = split_balanced(sfc_order(M), P)
    assert max(sizes(parts)) / min(sizes(parts)) <= 1.1
    validate_tiling(parts, M * M)


def test_split_ill_balanced_examples():
    order = sfc_order(9)
    assert sizes(split_ill_balanced(order, 4)) == [41, 20, 10, 10]
    assert sizes(split_ill_balanced(order, 20)) == [41, 20, 10, 5, 3, 1, 1]
    with pytest.raises(PartitionError):
        split_ill_balanced(order, 1)


def test_split_ill_balanced_large_grid():
    parts = split_ill_balanced(sfc_order(243), 20)
    counts = sizes(parts)
    assert counts[0] == 29525
    assert len(parts) <= 20
    assert min(counts) == 1
    assert sum(counts) == 59049
    assert counts == sorted(counts, reverse=True)


def test_validate_tiling_detects_gaps():
    with pytest.raises(PartitionError):
        validate_tiling([Partition(0, 0, 4), Partition(1, 5, 9)], 9)
    with pytest.raises(PartitionError):
        validate_tiling([Partition(0, 0, 4)], 9)


def test_single_partition_has_no_skeletons():
    cell_class = classify(split_balanced(sfc_order(9), 1), 9)
    assert cell_class.skeleton_count == 0
    assert cell_class.enclave_count == 81


def test_two_partitions_on_three_by_three_are_all_skeleton():
    order = sfc_order(3)
    parts = split_balanced(order, 2)
    assert sizes(parts) == [5, 4]
    cell_class = classify(parts, 3, order)
    assert cell_class.skeleton_count == 9


@pytest.mark.parametrize("balance,P", [("well", 2), ("well", 4), ("ill", 4), ("ill", 20)])
def test_classify_matches_brute_force(balance, P):
    order = sfc_order(9)
    parts = make_partitions(order, P, balance)
    cell_class = classify(parts, 9, order)
    assert cell_class.skeleton_count == brute_force_skeletons(order, parts, 9)
    assert cell_class.skeleton_count + cell_class.enclave_count == 81


def test_more_partitions_never_reduce_skeletons():
    order = sfc_order(9)
    counts = [classify(split_balanced(order, P), 9, order).skeleton_count for P in (1, 2, 4, 8)]
    assert counts == sorted(counts)


def test_counts_per_partition_cover_all_patches():
    order = sfc_order(9)
    parts = split_ill_balanced(order, 4)
    counts = classify(parts, 9, order).counts_per_partition()
    for part in parts:
        assert sum(counts[part.id]) == part.count


def test_layout_csv(tmp_path):
    order = sfc_order(3)
    parts = split_balanced(order, 2)
    path = tmp_path / "layout.csv"
    write_layout_csv(path, order, classify(parts, 3, order))
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 9
    assert rows[3] == {"ix": "1", "iy": "2", "sfc_index": "3", "partition_id": "0", "class": "skeleton"}
    assert {row["partition_id"] for row in rows} == {"0", "1"}
