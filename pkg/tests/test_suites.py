"""Frozen benchmark suites: determinism and feasibility."""

from sysevolve.suites import (
    TRACE_LEN,
    eplb_benchmark_load,
    eplb_suite,
    multi_suite,
    spot_suite,
    sql_benchmark_table,
    sql_suite,
    txn_suite,
)


def test_spot_suite_deterministic_and_feasible():
    a = spot_suite(7, n=30)
    b = spot_suite(7, n=30)
    assert a == b
    for inst in a:
        # deadlines are feasible and covered by the trace
        assert inst.task.deadline >= inst.task.duration + inst.task.overhead
        assert len(inst.trace) >= inst.task.deadline
        assert 0.0 < inst.prices.spot_price < inst.prices.od_price
    assert spot_suite(8, n=30) != a


def test_spot_suite_mixes_regimes():
    suite = spot_suite(7)
    late_onset = sum(
        1 for inst in suite
        if not any(inst.trace.availability[: inst.task.deadline // 4])
    )
    assert late_onset > 50  # most instances start with a long outage


def test_multi_suite_deterministic_and_feasible():
    a = multi_suite(11, n=20)
    assert a == multi_suite(11, n=20)
    for inst in a:
        assert inst.task.deadline >= inst.task.duration + inst.regions.migration_cost
        assert inst.regions.trace_length() >= inst.task.deadline
        assert inst.regions.migration_cost > inst.task.overhead


def test_multi_suite_traces_are_complementary():
    inst = multi_suite(11, n=1)[0]
    t0 = inst.regions.regions[0].trace.availability
    t1 = inst.regions.regions[1].trace.availability
    exclusive = sum(1 for x, y in zip(t0, t1) if x != y)
    assert exclusive > 0.5 * TRACE_LEN


def test_eplb_suite_and_benchmark_deterministic():
    assert eplb_suite(3, n=5) == eplb_suite(3, n=5)
    bench = eplb_benchmark_load(3)
    assert bench == eplb_benchmark_load(3)
    assert bench.num_experts == 256
    assert bench.num_gpus == 32
    assert bench.total_slots >= bench.num_experts


def test_sql_suite_and_benchmark_deterministic():
    assert sql_suite(5, n=3) == sql_suite(5, n=3)
    bench = sql_benchmark_table(5, num_rows=500)
    assert bench == sql_benchmark_table(5, num_rows=500)
    assert bench.num_rows == 500 and bench.num_cols == 8


def test_txn_suite_deterministic_and_mixed():
    a = txn_suite(9, n=6, num_txns=20)
    assert a == txn_suite(9, n=6, num_txns=20)
    assert len(a) == 6
    assert all(len(wl) == 20 for wl in a)
    # the read-heavy slots carry far fewer writes than the zipf slots
    writes = [sum(t.write_count for t in wl) for wl in a]
    assert writes[2] < writes[0] and writes[5] < writes[3]
