"""Expert replica placement: packing strategies, replication, imbalance."""

import numpy as np
import pytest

from sysevolve.core import derive_rng
from sysevolve.eplb import (
    BalanceReport,
    CapacityError,
    DegenerateError,
    ExpertLoad,
    Placement,
    greedy_pack,
    imbalance_factor,
    load_loads,
    rebalance,
    replicate_hot,
    save_loads,
    zigzag_pack,
    zipf_loads,
)


# ---------------------------------------------------------------------------
# packing strategies


def test_zigzag_snake_fixture_balances_exactly():
    items = [8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0]
    assignment = zigzag_pack(items, 4)
    assert assignment == [0, 1, 2, 3, 3, 2, 1, 0]
    sums = [0.0] * 4
    for item, pack in zip(items, assignment):
        sums[pack] += item
    assert tuple(sums) == (9.0, 9.0, 9.0, 9.0)


def test_zigzag_pads_non_multiple_counts():
    assignment = zigzag_pack([5.0, 3.0, 1.0], 2)
    assert len(assignment) == 3
    assert set(assignment) <= {0, 1}
    # descending order 5,3,1: 5->0, 3->1, then backward block puts 1->1
    assert assignment == [0, 1, 1]


def test_greedy_pack_hand_values():
    # desc order 5,4,3,2: 5->p0, 4->p1, 3->p1 (lighter), 2->p0 (p1 full)
    assignment = greedy_pack([5.0, 4.0, 3.0, 2.0], 2, capacity=2)
    assert assignment == [0, 1, 1, 0]


def test_greedy_pack_respects_capacity():
    with pytest.raises(CapacityError):
        greedy_pack([1.0] * 5, 2, capacity=2)


def test_pack_strategies_agree_on_equal_items():
    items = [2.0] * 8
    for assignment in (greedy_pack(items, 4, 2), zigzag_pack(items, 4)):
        counts = [assignment.count(p) for p in range(4)]
        assert counts == [2, 2, 2, 2]


# ---------------------------------------------------------------------------
# replication and imbalance


def test_replicate_hot_targets_highest_per_replica_load():
    assert replicate_hot([10.0, 4.0], spare_slots=2) == [3, 1]
    assert replicate_hot([4.0, 4.0], spare_slots=1) == [2, 1]  # tie -> low index
    assert replicate_hot([1.0, 2.0], spare_slots=0) == [1, 1]
    with pytest.raises(ValueError):
        replicate_hot([1.0], spare_slots=-1)


def test_imbalance_factor_hand_values():
    # unreplicated: per-gpu loads (6, 2) -> mean 4 / peak 6
    p = Placement(gpu_of=(0, 1), expert_of=(0, 1))
    assert imbalance_factor(p, [6.0, 2.0], 2) == pytest.approx(4.0 / 6.0)
    # expert 0 replicated across both GPUs: (3+2=5, 3) -> mean 4 / peak 5
    p2 = Placement(gpu_of=(0, 1, 0), expert_of=(0, 0, 1))
    assert imbalance_factor(p2, [6.0, 2.0], 2) == pytest.approx(0.8)


def test_imbalance_degenerate_when_all_zero():
    p = Placement(gpu_of=(0, 1), expert_of=(0, 1))
    with pytest.raises(DegenerateError):
        imbalance_factor(p, [0.0, 0.0], 2)


def test_placement_validation_errors():
    load = ExpertLoad(loads=(1.0, 1.0), group_size=1, num_nodes=1,
                      gpus_per_node=2, slots_per_gpu=1)
    Placement((0, 1), (0, 1)).validate(load)
    with pytest.raises(ValueError):
        Placement((0, 0), (0, 1)).validate(load)  # slot overflow
    with pytest.raises(ValueError):
        Placement((0, 1), (0, 0)).validate(load)  # expert 1 missing
    with pytest.raises(ValueError):
        Placement((0, 5), (0, 1)).validate(load)  # gpu out of range


def test_expert_load_validation():
    with pytest.raises(ValueError):
        ExpertLoad((-1.0, 1.0), 1, 1, 2, 1)
    with pytest.raises(ValueError):
        ExpertLoad((1.0, 1.0, 1.0), group_size=2, num_nodes=1,
                   gpus_per_node=2, slots_per_gpu=2)
    with pytest.raises(CapacityError):
        ExpertLoad((1.0,) * 8, group_size=1, num_nodes=1,
                   gpus_per_node=2, slots_per_gpu=2)


# ---------------------------------------------------------------------------
# full pipeline


@pytest.mark.parametrize("strategy", ["greedy", "zigzag"])
def test_rebalance_produces_valid_placements(strategy):
    rng = derive_rng(13, "pipe")
    load = ExpertLoad(
        loads=zipf_loads(rng, 64, s=1.2),
        group_size=8,
        num_nodes=2,
        gpus_per_node=4,
        slots_per_gpu=12,
    )
    placement, report = rebalance(load, strategy, timing_repeats=1)
    placement.validate(load)
    assert isinstance(report, BalanceReport)
    assert 0.0 < report.imbalance <= 1.0
    assert report.runtime_ms > 0.0


def test_rebalance_rejects_unknown_strategy():
    load = ExpertLoad((1.0, 1.0), 1, 1, 2, 2)
    with pytest.raises(ValueError):
        rebalance(load, "mystery")


def test_replication_uses_all_slots_on_benchmark_shape():
    rng = derive_rng(13, "slots")
    load = ExpertLoad(
        loads=zipf_loads(rng, 32, s=1.2),
        group_size=4,
        num_nodes=1,
        gpus_per_node=8,
        slots_per_gpu=6,
    )
    placement, _ = rebalance(load, "zigzag", timing_repeats=1)
    assert len(placement.gpu_of) == load.total_slots


# ---------------------------------------------------------------------------
# load vectors and files


def test_zipf_loads_deterministic_and_skewed():
    a = zipf_loads(derive_rng(3, "z"), 128)
    b = zipf_loads(derive_rng(3, "z"), 128)
    assert a == b
    assert all(v >= 0 for v in a)
    assert max(a) > 10 * np.median(a)  # heavy-tailed


def test_load_file_round_trip(tmp_path):
    loads = zipf_loads(derive_rng(4, "io"), 16)
    path = tmp_path / "loads.csv"
    save_loads(path, loads)
    assert load_loads(path) == loads
