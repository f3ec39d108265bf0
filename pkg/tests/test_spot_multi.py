"""Multi-region simulator, round-robin baseline, and urgency policy."""

import pytest

from sysevolve.core import derive_rng
from sysevolve.spot_multi import (
    MultiDecision,
    MultiEnvView,
    Region,
    RegionSet,
    UrgencyParams,
    load_region_traces,
    round_robin_baseline,
    save_region_traces,
    simulate_multi,
    urgency_policy,
    wrap_single_policy,
)
from sysevolve.spot_single import (
    Decision,
    InfeasibleTaskError,
    PolicyError,
    PriceModel,
    SpotTrace,
    Task,
    adaptive_policy,
    generate_trace,
    greedy_policy,
    simulate,
    uniform_progress_policy,
)
from sysevolve.suites import multi_suite

PRICES = PriceModel(0.3, 1.0)


def two_regions(trace0, trace1, migration_cost=2):
    return RegionSet(
        (
            Region("region_0", SpotTrace(tuple(trace0)), PRICES),
            Region("region_1", SpotTrace(tuple(trace1)), PRICES),
        ),
        migration_cost=migration_cost,
    )


def test_region_set_validation():
    trace = SpotTrace((True,) * 10)
    with pytest.raises(ValueError):
        RegionSet((Region("only", trace, PRICES),), migration_cost=2)
    with pytest.raises(ValueError):
        two_regions([True] * 10, [True] * 8)


def test_infeasible_deadline_for_migration():
    regions = two_regions([True] * 10, [True] * 10, migration_cost=4)
    with pytest.raises(InfeasibleTaskError):
        simulate_multi(round_robin_baseline, regions, Task(7, 10, 1))


def test_policy_error_on_bad_region_and_unavailable_spot():
    regions = two_regions([False] * 10, [False] * 10)

    def out_of_range(has_spot, state, env, task):
        return MultiDecision(Decision.NONE, 7)

    with pytest.raises(PolicyError):
        simulate_multi(out_of_range, regions, Task(2, 10, 1))

    def blind_spot(has_spot, state, env, task):
        return MultiDecision(Decision.SPOT, 0)

    with pytest.raises(PolicyError):
        simulate_multi(blind_spot, regions, Task(2, 10, 1))


def test_round_robin_migration_hand_values():
    # spot moves from region 0 to region 1 after two ticks: the baseline
    # starts locally, is preempted once, migrates once, finishes on remote spot
    regions = two_regions(
        [True, True] + [False] * 10,
        [False, False] + [True] * 10,
        migration_cost=2,
    )
    report = simulate_multi(round_robin_baseline, regions, Task(4, 12, 1))
    assert report.deadline_met
    assert report.total_cost == pytest.approx(2.1)  # 7 spot ticks at 0.3
    assert report.preemptions == 1
    assert report.changeovers == 1
    assert report.migrations == 1
    assert report.regions_visited == [0, 0, 1, 1, 1, 1, 1]


def test_urgency_same_hand_instance_also_meets_deadline():
    regions = two_regions(
        [True, True] + [False] * 10,
        [False, False] + [True] * 10,
        migration_cost=2,
    )
    report = simulate_multi(urgency_policy(2), regions, Task(4, 12, 1))
    assert report.deadline_met
    assert report.total_cost <= 5.0


@pytest.mark.parametrize("single_factory", [
    lambda: greedy_policy,
    lambda: uniform_progress_policy,
    lambda: adaptive_policy(),
])
def test_single_region_reduction_field_for_field(single_factory):
    """With every remote region permanently unavailable, the multi-region
    engine must reproduce the single-region simulator exactly."""
    rng = derive_rng(31, "reduction")
    for _ in range(25):
        duration = int(rng.integers(5, 40))
        overhead = int(rng.integers(0, 3))
        deadline = duration + overhead + int(rng.integers(2, 40))
        task = Task(duration, deadline, overhead)
        trace = generate_trace(rng, deadline, "two_state", mean_up=20, mean_down=8)
        regions = two_regions(trace.availability, [False] * deadline, migration_cost=2)
        multi = simulate_multi(wrap_single_policy(single_factory()), regions, task)
        single = simulate(single_factory(), trace, task, PRICES)
        assert multi.base_report() == single
        assert multi.migrations == 0


def test_urgency_beats_round_robin_on_complementary_sample():
    suite = multi_suite(41, n=20)
    urgency_total = 0.0
    rr_total = 0.0
    for inst in suite:
        u = simulate_multi(urgency_policy(len(inst.regions)), inst.regions, inst.task)
        r = simulate_multi(round_robin_baseline, inst.regions, inst.task)
        assert u.deadline_met and r.deadline_met
        urgency_total += u.total_cost
        rr_total += r.total_cost
    assert urgency_total <= rr_total


def test_urgency_params_control_window():
    params = UrgencyParams(window_len=4)
    policy = urgency_policy(2, params)
    assert policy.cache.windows[0].maxlen == 4


def test_region_trace_file_round_trip(tmp_path):
    regions = two_regions([True, False, True], [False, True, True], migration_cost=3)
    path = tmp_path / "regions.csv"
    save_region_traces(path, regions)
    loaded = load_region_traces(path, [PRICES, PRICES], migration_cost=3)
    assert loaded == regions
    with pytest.raises(ValueError):
        load_region_traces(path, [PRICES], migration_cost=3)


def test_multi_env_view_carries_migration_cost():
    seen = {}

    def probe(has_spot, state, env, task):
        seen["env"] = env
        return MultiDecision(Decision.NONE, env.current_region)

    regions = two_regions([False] * 8, [False] * 8, migration_cost=3)
    simulate_multi(probe, regions, Task(1, 8, 1))
    env = seen["env"]
    assert isinstance(env, MultiEnvView)
    assert env.migration_cost == 3
    assert env.current_region == 0
