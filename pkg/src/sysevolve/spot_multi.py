"""Multi-region spot scheduling: per-region traces and prices, migration as a
larger changeover, the round-robin baseline and the two-stage urgency policy.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

from sysevolve.spot_single import (
    Decision,
    EnvView,
    InfeasibleTaskError,
    PolicyError,
    PriceModel,
    SimReport,
    SpotTrace,
    Task,
    must_lock_on_demand,
    ticks_needed_on_demand,
)


@dataclass(frozen=True)
class Region:
    region_id: str
    trace: SpotTrace
    prices: PriceModel


@dataclass(frozen=True)
class RegionSet:
    regions: tuple[Region, ...]
    migration_cost: int

    def __post_init__(self) -> None:
        if len(self.regions) < 2:
            raise ValueError("a RegionSet needs >= 2 regions")
        lengths = {len(r.trace) for r in self.regions}
        if len(lengths) != 1:
            raise ValueError("all region traces must have equal length")

    def __len__(self) -> int:
        return len(self.regions)

    def trace_length(self) -> int:
        return len(self.regions[0].trace)


@dataclass(frozen=True)
class MultiDecision:
    action: Decision
    region: int


@dataclass
class MultiSimReport(SimReport):
    migrations: int = 0
    regions_visited: list[int] = field(default_factory=list)

    def base_report(self) -> SimReport:
        return SimReport(
            total_cost=self.total_cost,
            deadline_met=self.deadline_met,
            decisions=self.decisions,
            preemptions=self.preemptions,
            changeovers=self.changeovers,
        )


@dataclass(frozen=True)
class MultiEnvView(EnvView):
    current_region: int
    migration_cost: int


MultiPolicy = Callable[[Sequence[bool], Decision, MultiEnvView, Task], MultiDecision]


def simulate_multi(policy: MultiPolicy, regions: RegionSet, task: Task) -> MultiSimReport:
    """Tick loop as in the single-region simulator; changing region adds a
    changeover of ``migration_cost`` ticks charged at the target price."""
    if task.deadline < task.duration + regions.migration_cost:
        raise InfeasibleTaskError("deadline leaves no room for even one migration changeover")
    if regions.trace_length() < task.deadline:
        raise ValueError("region traces shorter than the deadline")
    task = replace(task)

    occupancy = Decision.NONE
    region = 0
    changeover_left = 0
    cost = 0.0
    preemptions = 0
    changeovers = 0
    migrations = 0
    decisions: list[Decision] = []
    regions_visited: list[int] = []

    for tick in range(task.deadline):
        if task.progress_made >= task.duration:
            break
        has_spot = [r.trace[tick] for r in regions.regions]

        if occupancy is Decision.SPOT and not has_spot[region]:
            preemptions += 1
            occupancy = Decision.NONE
            changeover_left = 0

        env = MultiEnvView(
            elapsed=tick,
            changeover_remaining=changeover_left,
            current_region=region,
            migration_cost=regions.migration_cost,
        )
        choice = policy(has_spot, occupancy, env, task)
        if not 0 <= choice.region < len(regions):
            raise PolicyError(f"invalid region {choice.region} at tick {tick}")
        if choice.action is Decision.SPOT and not has_spot[choice.region]:
            raise PolicyError(f"policy chose SPOT in region {choice.region} without availability")
        decisions.append(choice.action)
        regions_visited.append(choice.region)

        if choice.action is Decision.NONE:
            occupancy = Decision.NONE
            changeover_left = 0
            region = choice.region
            continue

        moved = choice.region != region
        if moved or choice.action is not occupancy:
            occupancy = choice.action
            changeover_left = regions.migration_cost if moved else task.overhead
            if moved:
                migrations += 1
            else:
                changeovers += 1
            region = choice.region

        cost += regions.regions[region].prices.price(choice.action)
        if changeover_left > 0:
            changeover_left -= 1
        else:
            task.progress_made += 1

    return MultiSimReport(
        total_cost=cost,
        deadline_met=task.progress_made >= task.duration,
        decisions=decisions,
        preemptions=preemptions,
        changeovers=changeovers,
        migrations=migrations,
        regions_visited=regions_visited,
    )


# ---------------------------------------------------------------------------
# shared guards


def _safe_to_start_spot_local(task: Task, state: Decision, env: EnvView) -> bool:
    if state is Decision.SPOT:
        return True
    remaining = task.duration - task.progress_made
    slack = task.deadline - env.elapsed
    return slack >= remaining + 2 * task.overhead


def _safe_to_migrate(task: Task, env: MultiEnvView) -> bool:
    """Migration onto a remote spot must survive an immediate preemption."""
    remaining = task.duration - task.progress_made
    slack = task.deadline - env.elapsed
    return slack >= remaining + task.overhead + env.migration_cost


# ---------------------------------------------------------------------------
# policies


def round_robin_baseline(
    has_spot: Sequence[bool], state: Decision, env: MultiEnvView, task: Task
) -> MultiDecision:
    """Local spot first; otherwise probe regions cyclically and migrate to the
    first with spot; otherwise uniform-progress fallback locally."""
    cur = env.current_region
    if must_lock_on_demand(task, state, env):
        return MultiDecision(Decision.ON_DEMAND, cur)

    if has_spot[cur] and _safe_to_start_spot_local(task, state, env):
        return MultiDecision(Decision.SPOT, cur)

    if _safe_to_migrate(task, env):
        n = len(has_spot)
        for step in range(1, n):
            cand = (cur + step) % n
            if has_spot[cand]:
                return MultiDecision(Decision.SPOT, cand)

    # uniform-progress fallback in the current region
    expected = env.elapsed * task.duration / task.deadline
    if task.progress_made < expected:
        return MultiDecision(Decision.ON_DEMAND, cur)
    if state is Decision.ON_DEMAND and task.progress_made < expected + 2 * task.overhead:
        return MultiDecision(Decision.ON_DEMAND, cur)
    return MultiDecision(Decision.NONE, cur)


@dataclass(frozen=True)
class UrgencyParams:
    window_len: int = 24
    urgency_margin_mult: float = 2.0  # x migration_cost
    explore_safety_mult: float = 1.0  # x overhead
    alpha_hysteresis: float = 0.2  # required alpha edge to leave a working region
    behind_grace: float = 0.1  # fraction of duration we may lag the schedule line


class RegionCache:
    """Per-region recent-availability windows; alpha = mean of each window."""

    def __init__(self, num_regions: int, window_len: int):
        self.windows = [deque(maxlen=window_len) for _ in range(num_regions)]

    def update(self, has_spot: Sequence[bool]) -> None:
        for w, b in zip(self.windows, has_spot):
            w.append(bool(b))

    def alpha(self, region: int) -> float:
        w = self.windows[region]
        return sum(w) / len(w) if w else 0.0


class UrgencyPolicy:
    """Two-stage deadline check: schedule-based progress monitoring plus a
    direct deadline-pressure test. Spot capacity anywhere is taken first
    (ranked by cached availability, with hysteresis before abandoning a
    working region); paid on-demand progress only under urgency."""

    def __init__(self, num_regions: int, params: UrgencyParams | None = None):
        self.params = params or UrgencyParams()
        self.cache = RegionCache(num_regions, self.params.window_len)

    def __call__(
        self, has_spot: Sequence[bool], state: Decision, env: MultiEnvView, task: Task
    ) -> MultiDecision:
        p = self.params
        self.cache.update(has_spot)
        cur = env.current_region

        if must_lock_on_demand(task, state, env):
            return MultiDecision(Decision.ON_DEMAND, cur)

        slack = task.deadline - env.elapsed
        need = ticks_needed_on_demand(task, state, env)

        # stage 1: schedule-based progress check (with a grace band so brief
        # waits for spot do not trigger paid pacing)
        expected = env.elapsed * task.duration / task.deadline
        behind = task.progress_made < expected - p.behind_grace * task.duration
        # stage 2: direct deadline-pressure check
        pressured = slack - need <= p.urgency_margin_mult * env.migration_cost
        urgent = behind or pressured

        # spot anywhere beats on-demand: stay on a working local spot, else
        # migrate to the most reliable region currently offering spot
        candidates = [r for r in range(len(has_spot)) if has_spot[r]]
        if candidates:
            if has_spot[cur] and _safe_to_start_spot_local(task, state, env):
                best = max(candidates, key=self.cache.alpha)
                if (
                    best != cur
                    and self.cache.alpha(best) - self.cache.alpha(cur) > p.alpha_hysteresis
                    and slack - need > env.migration_cost + p.explore_safety_mult * task.overhead
                    and _safe_to_migrate(task, env)
                ):
                    return MultiDecision(Decision.SPOT, best)
                return MultiDecision(Decision.SPOT, cur)
            remote = max(candidates, key=self.cache.alpha)
            if remote != cur and _safe_to_migrate(task, env):
                return MultiDecision(Decision.SPOT, remote)

        # no usable spot: pay for progress only under deadline or schedule
        # pressure; keep a started on-demand run until a buffer is built so
        # the changeover is not repaid every few ticks
        if urgent:
            return MultiDecision(Decision.ON_DEMAND, cur)
        if (
            state is Decision.ON_DEMAND
            and task.progress_made < expected + 2 * task.overhead
        ):
            return MultiDecision(Decision.ON_DEMAND, cur)
        return MultiDecision(Decision.NONE, cur)


def urgency_policy(num_regions: int, params: UrgencyParams | None = None) -> UrgencyPolicy:
    """Fresh per-run instance of the urgency policy."""
    return UrgencyPolicy(num_regions, params)


def save_region_traces(path: str | Path, regions: RegionSet) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["tick"] + [f"region_{i}" for i in range(len(regions))])
        for t in range(regions.trace_length()):
            w.writerow([t] + [int(r.trace[t]) for r in regions.regions])


def load_region_traces(
    path: str | Path, prices: Sequence[PriceModel], migration_cost: int
) -> RegionSet:
    with open(path, newline="") as f:
        r = csv.reader(f)
        header = next(r)
        n = len(header) - 1
        if header[0] != "tick" or n < 2:
            raise ValueError(f"bad region trace header: {header}")
        cols: list[list[bool]] = [[] for _ in range(n)]
        for row in r:
            for i in range(n):
                cols[i].append(bool(int(row[i + 1])))
    if len(prices) != n:
        raise ValueError(f"expected {n} price models, got {len(prices)}")
    regions = tuple(
        Region(f"region_{i}", SpotTrace(tuple(cols[i])), prices[i]) for i in range(n)
    )
    return RegionSet(regions, migration_cost)


def wrap_single_policy(policy) -> MultiPolicy:
    """Adapt a single-region policy to the multi-region engine: it never
    leaves region 0."""

    def multi(has_spot: Sequence[bool], state: Decision, env: MultiEnvView, task: Task):
        single_env = EnvView(elapsed=env.elapsed, changeover_remaining=env.changeover_remaining)
        return MultiDecision(policy(has_spot[0], state, single_env, task), 0)

    return multi
