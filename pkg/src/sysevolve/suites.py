"""Seeded benchmark suites for every environment.

Each builder is a pure function of its seed, so the instances behind scoring,
comparisons, and regression baselines are frozen: same seed, same bytes.
The spot suite mixes late-onset, flaky, and stable availability regimes under
tight deadlines, which is the regime where the policies separate cleanly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sysevolve.core import derive_rng
from sysevolve.eplb import ExpertLoad, zipf_loads
from sysevolve.spot_multi import Region, RegionSet
from sysevolve.spot_single import PriceModel, SpotTrace, Task, generate_trace
from sysevolve.sql_reorder import Table, generate_table
from sysevolve.txn_sched import Transaction, generate_workload

TRACE_LEN = 600


@dataclass(frozen=True)
class SpotInstance:
    task: Task
    trace: SpotTrace
    prices: PriceModel


@dataclass(frozen=True)
class MultiInstance:
    task: Task
    regions: RegionSet


def spot_suite(seed: int, n: int = 200) -> list[SpotInstance]:
    """Tight-deadline single-region suite: 60% late-onset traces (spot only
    appears partway in), 12% ultra-flaky, 8% flaky, 20% stable."""
    rng = derive_rng(seed, "suite")
    out: list[SpotInstance] = []
    for _ in range(n):
        duration = int(rng.integers(40, 150))
        overhead = int(rng.integers(1, 4))
        deadline = min(TRACE_LEN, int((duration + overhead) * rng.uniform(1.15, 1.4)))
        task = Task(duration=duration, deadline=deadline, overhead=overhead)
        prices = PriceModel(spot_price=float(rng.uniform(0.2, 0.4)), od_price=1.0)
        u = rng.random()
        if u < 0.6:
            off = int(rng.uniform(0.3, 0.7) * deadline)
            tail = generate_trace(
                rng,
                TRACE_LEN - off,
                "two_state",
                mean_up=float(rng.uniform(60, 300)),
                mean_down=float(rng.uniform(2, 8)),
            )
            trace = SpotTrace((False,) * off + tail.availability)
        elif u < 0.72:
            trace = generate_trace(
                rng, TRACE_LEN, "two_state", mean_up=1.0, mean_down=float(rng.uniform(1, 3))
            )
        elif u < 0.8:
            trace = generate_trace(
                rng,
                TRACE_LEN,
                "two_state",
                mean_up=float(rng.uniform(2, 5)),
                mean_down=float(rng.uniform(6, 16)),
            )
        else:
            trace = generate_trace(
                rng,
                TRACE_LEN,
                "two_state",
                mean_up=float(rng.uniform(60, 200)),
                mean_down=float(rng.uniform(5, 20)),
            )
        out.append(SpotInstance(task, trace, prices))
    return out


def _complementary_traces(rng: np.random.Generator, length: int) -> tuple[SpotTrace, SpotTrace]:
    """Two traces whose availability mostly alternates: spot moves between the
    regions in sojourns, with occasional overlap and occasional joint outage."""
    a: list[bool] = []
    b: list[bool] = []
    active = int(rng.integers(0, 2))
    while len(a) < length:
        stay = int(rng.geometric(1.0 / rng.uniform(15, 60)))
        roll = rng.random()
        if roll < 0.1:
            va, vb = True, True
        elif roll < 0.25:
            va, vb = False, False
        else:
            va, vb = active == 0, active == 1
        for _ in range(min(stay, length - len(a))):
            a.append(va)
            b.append(vb)
        active = 1 - active
    return SpotTrace(tuple(a)), SpotTrace(tuple(b))


def multi_suite(seed: int, n: int = 100) -> list[MultiInstance]:
    """Two-region suite with complementary availability, equal prices, and a
    migration changeover a few ticks larger than the local one."""
    rng = derive_rng(seed, "multi_suite")
    out: list[MultiInstance] = []
    for _ in range(n):
        duration = int(rng.integers(40, 150))
        overhead = int(rng.integers(1, 4))
        migration_cost = overhead + int(rng.integers(1, 4))
        deadline = min(TRACE_LEN, int((duration + migration_cost) * rng.uniform(1.3, 1.9)))
        task = Task(duration=duration, deadline=deadline, overhead=overhead)
        spot = float(rng.uniform(0.2, 0.4))
        tr0, tr1 = _complementary_traces(rng, TRACE_LEN)
        regions = RegionSet(
            (
                Region("region_0", tr0, PriceModel(spot, 1.0)),
                Region("region_1", tr1, PriceModel(spot, 1.0)),
            ),
            migration_cost=migration_cost,
        )
        out.append(MultiInstance(task, regions))
    return out


def eplb_suite(seed: int, n: int = 20, *, num_experts: int = 64, num_nodes: int = 2,
               gpus_per_node: int = 4, group_size: int = 4, slots_per_gpu: int = 10,
               zipf_s: float = 1.2) -> list[ExpertLoad]:
    rng = derive_rng(seed, "eplb_suite")
    return [
        ExpertLoad(
            loads=zipf_loads(rng, num_experts, s=zipf_s),
            group_size=group_size,
            num_nodes=num_nodes,
            gpus_per_node=gpus_per_node,
            slots_per_gpu=slots_per_gpu,
        )
        for _ in range(n)
    ]


def eplb_benchmark_load(seed: int) -> ExpertLoad:
    """The large configuration used for runtime comparisons: 256 experts on a
    single 32-GPU node, 16 groups, skewed Zipf token loads. One node keeps
    replication global, so both strategies pack the same flattened replica
    set and the comparison isolates packing speed."""
    rng = derive_rng(seed, "eplb_bench")
    return ExpertLoad(
        loads=zipf_loads(rng, 256, s=1.2),
        group_size=16,
        num_nodes=1,
        gpus_per_node=32,
        slots_per_gpu=12,
    )


def sql_suite(seed: int, n: int = 10, *, num_rows: int = 200, num_cols: int = 6) -> list[Table]:
    rng = derive_rng(seed, "sql_suite")
    return [generate_table(rng, num_rows, num_cols) for _ in range(n)]


def sql_benchmark_table(seed: int, *, num_rows: int = 10_000, num_cols: int = 8) -> Table:
    """The large table used for runtime comparisons between the two policies."""
    rng = derive_rng(seed, "sql_bench")
    return generate_table(rng, num_rows, num_cols, vocab_size=120, repeat_prob=0.55)


def txn_suite(seed: int, n: int = 100, *, num_txns: int = 200) -> list[tuple[Transaction, ...]]:
    """Mixed transaction workloads cycling through the three generator models."""
    rng = derive_rng(seed, "txn_suite")
    models = ("zipf-keys", "hot-cold", "read-heavy")
    out = []
    for i in range(n):
        out.append(tuple(generate_workload(rng, models[i % 3], num_txns, ops_per_txn=8)))
    return out
