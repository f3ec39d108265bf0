"""Single-region spot-vs-on-demand deadline scheduling: discrete-tick
simulator plus the greedy, uniform-progress and adaptive policies.

Model: one tick = one policy consultation. Starting (or switching) an
instance consumes ``overhead`` whole ticks of changeover, charged at the
target instance's price with zero progress. Running on spot while the trace
says unavailable is a preemption: the instance is lost and a fresh
changeover is required on the next start. NONE ticks cost nothing and make
no progress.
"""

from __future__ import annotations

import csv
import enum
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from sysevolve.core import ParamVector


class PolicyError(Exception):
    """A policy chose SPOT on a tick without spot availability."""


class InfeasibleTaskError(Exception):
    """deadline < duration + overhead: no policy can meet the deadline."""


class InvalidPolicyRun(Exception):
    """Savings requested for a run that missed its deadline."""


class Decision(enum.Enum):
    NONE = "none"
    SPOT = "spot"
    ON_DEMAND = "on_demand"


@dataclass
class Task:
    duration: int
    deadline: int
    overhead: int
    progress_made: int = 0

    def __post_init__(self) -> None:
        if self.duration <= 0:
            raise InfeasibleTaskError(f"duration must be positive, got {self.duration}")
        if self.overhead < 0:
            raise InfeasibleTaskError(f"overhead must be non-negative, got {self.overhead}")
        if self.deadline < self.duration + self.overhead:
            raise InfeasibleTaskError(
                f"infeasible task: deadline {self.deadline} < duration {self.duration}"
                f" + overhead {self.overhead}"
            )


@dataclass(frozen=True)
class SpotTrace:
    availability: tuple[bool, ...]

    def __len__(self) -> int:
        return len(self.availability)

    def __getitem__(self, tick: int) -> bool:
        return self.availability[tick]


@dataclass(frozen=True)
class PriceModel:
    spot_price: float
    od_price: float

    def __post_init__(self) -> None:
        if not 0 < self.spot_price < self.od_price:
            raise ValueError(
                f"prices must satisfy 0 < spot < on-demand, got {self.spot_price}, {self.od_price}"
            )

    def price(self, decision: Decision) -> float:
        if decision is Decision.SPOT:
            return self.spot_price
        if decision is Decision.ON_DEMAND:
            return self.od_price
        return 0.0


@dataclass(frozen=True)
class EnvView:
    """What a policy may observe about the running simulation."""

    elapsed: int
    changeover_remaining: int


@dataclass
class SimReport:
    total_cost: float
    deadline_met: bool
    decisions: list[Decision]
    preemptions: int
    changeovers: int


Policy = Callable[[bool, Decision, EnvView, Task], Decision]


# ---------------------------------------------------------------------------
# shared policy arithmetic


def ticks_needed_on_demand(task: Task, state: Decision, env: EnvView) -> int:
    """Ticks to finish if we commit to on-demand right now.

    Includes pending changeover ticks whenever we are not already occupying
    an on-demand instance.
    """
    remaining = task.duration - task.progress_made
    if state is Decision.ON_DEMAND:
        return remaining + env.changeover_remaining
    return remaining + task.overhead


def safe_to_start_spot(task: Task, state: Decision, env: EnvView) -> bool:
    """A changeover onto spot is safe iff, even with an immediate preemption
    at the worst moment, there is still room to fall back to on-demand."""
    if state is Decision.SPOT:
        return True
    remaining = task.duration - task.progress_made
    slack = task.deadline - env.elapsed
    return slack >= remaining + 2 * task.overhead


def must_lock_on_demand(task: Task, state: Decision, env: EnvView) -> bool:
    slack = task.deadline - env.elapsed
    return ticks_needed_on_demand(task, state, env) >= slack


# ---------------------------------------------------------------------------
# policies


def greedy_policy(has_spot: bool, state: Decision, env: EnvView, task: Task) -> Decision:
    """Use spot whenever available (and survivable), on-demand only once the
    deadline is at risk, idle otherwise."""
    if state is Decision.SPOT and has_spot:
        return Decision.SPOT
    if has_spot and safe_to_start_spot(task, state, env):
        return Decision.SPOT
    if must_lock_on_demand(task, state, env):
        return Decision.ON_DEMAND
    return Decision.NONE


def uniform_progress_policy(has_spot: bool, state: Decision, env: EnvView, task: Task) -> Decision:
    """Keep actual progress proportional to elapsed time; hysteresis keeps an
    on-demand instance until a 2x-overhead buffer is built."""
    if must_lock_on_demand(task, state, env):
        return Decision.ON_DEMAND

    expected = env.elapsed * task.duration / task.deadline
    actual = task.progress_made

    if actual < expected:
        if has_spot and safe_to_start_spot(task, state, env):
            return Decision.SPOT
        return Decision.ON_DEMAND

    if state is Decision.ON_DEMAND and actual < expected + 2 * task.overhead:
        return Decision.ON_DEMAND

    if has_spot and safe_to_start_spot(task, state, env):
        return Decision.SPOT
    return Decision.NONE


@dataclass(frozen=True)
class AdaptiveParams:
    """Knobs of the adaptive policy; also the parameter family evolved offline."""

    window_len: int = 24
    stable_alpha: float = 0.8
    stable_streak: int = 6
    stable_tail: int = 2
    unstable_alpha: float = 0.4
    lock_margin_mult: float = 2.0  # x overhead
    wait_margin_mult: float = 1.0  # x overhead
    dwell: int = 4
    unlock_tail: int = 3
    safety_mult_stable: float = 1.0
    safety_mult_moderate: float = 2.0
    safety_mult_unstable: float = 3.0

    def __post_init__(self) -> None:
        if self.window_len < 1:
            raise ValueError("window_len must be >= 1")
        if self.stable_alpha <= self.unstable_alpha:
            raise ValueError("stable_alpha must exceed unstable_alpha")
        for name in ("lock_margin_mult", "wait_margin_mult"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @staticmethod
    def bounds() -> dict[str, tuple[float, float]]:
        return {
            "window_len": (4, 64),
            "stable_alpha": (0.5, 0.99),
            "stable_streak": (1, 24),
            "stable_tail": (1, 12),
            "unstable_alpha": (0.01, 0.49),
            "lock_margin_mult": (0.0, 6.0),
            "wait_margin_mult": (0.0, 6.0),
            "dwell": (0, 16),
            "unlock_tail": (0, 12),
            "safety_mult_stable": (0.0, 6.0),
            "safety_mult_moderate": (0.0, 8.0),
            "safety_mult_unstable": (0.0, 10.0),
        }

    def to_param_vector(self) -> ParamVector:
        values = {k: float(getattr(self, k)) for k in self.bounds()}
        return ParamVector("spot_adaptive", values, self.bounds())

    @classmethod
    def from_param_vector(cls, vec: ParamVector) -> "AdaptiveParams":
        v = vec.values
        ints = {"window_len", "stable_streak", "stable_tail", "dwell", "unlock_tail"}
        kwargs = {k: (int(round(v[k])) if k in ints else float(v[k])) for k in v}
        # keep the threshold ordering invariant under arbitrary mutations
        if kwargs["stable_alpha"] <= kwargs["unstable_alpha"]:
            kwargs["unstable_alpha"] = max(0.01, kwargs["stable_alpha"] - 0.05)
        return cls(**kwargs)


def window_stats(window: Sequence[bool]) -> tuple[float, int, int]:
    """(alpha, streak, tail): mean availability, longest run of True, trailing
    run of True over the sliding window."""
    if not window:
        return 0.0, 0, 0
    alpha = sum(window) / len(window)
    streak = best = 0
    for v in window:
        best = best + 1 if v else 0
        streak = max(streak, best)
    tail = 0
    for v in reversed(window):
        if not v:
            break
        tail += 1
    return alpha, streak, tail


class AdaptivePolicy:
    """Availability-pattern-tracking policy: classifies the recent spot regime
    from a sliding window and trades off selective waiting, spot use and
    on-demand buffer rebuilds. One instance per simulation run."""

    def __init__(self, params: AdaptiveParams | None = None):
        self.params = params or AdaptiveParams()
        self.window: deque[bool] = deque(maxlen=self.params.window_len)
        self.locked = False
        self.rebuilding = False
        self.dwell_left = 0

    def classify(self, alpha: float, streak: int, tail: int) -> str:
        p = self.params
        if alpha <= p.unstable_alpha or tail == 0:
            return "unstable"
        if alpha >= p.stable_alpha and streak >= p.stable_streak:
            return "stable"
        return "moderate"

    def __call__(self, has_spot: bool, state: Decision, env: EnvView, task: Task) -> Decision:
        p = self.params
        self.window.append(has_spot)
        alpha, streak, tail = window_stats(self.window)
        regime = self.classify(alpha, streak, tail)
        safety_mult = {
            "stable": p.safety_mult_stable,
            "moderate": p.safety_mult_moderate,
            "unstable": p.safety_mult_unstable,
        }[regime]
        safety = safety_mult * task.overhead

        remaining = task.duration - task.progress_made
        slack = task.deadline - env.elapsed
        need = ticks_needed_on_demand(task, state, env)
        spot_ok = has_spot and safe_to_start_spot(task, state, env)

        if need >= slack:
            self.locked = True
            return Decision.ON_DEMAND

        if self.locked:
            if spot_ok and tail >= p.unlock_tail:
                self.locked = False
            else:
                return Decision.ON_DEMAND
        elif state is not Decision.SPOT and slack <= need + p.lock_margin_mult * task.overhead:
            # pre-lock margin applies off-spot only: riding spot keeps its
            # margin constant, and the hard guard still backstops it
            self.locked = True
            return Decision.ON_DEMAND

        if self.rebuilding:
            self.dwell_left = max(0, self.dwell_left - 1)
            if slack - need >= safety and self.dwell_left == 0:
                self.rebuilding = False
            elif not (spot_ok and tail >= p.unlock_tail):
                return Decision.ON_DEMAND
            else:
                self.rebuilding = False

        if safety >= slack:
            return Decision.SPOT if spot_ok else Decision.ON_DEMAND

        if state is Decision.ON_DEMAND:
            if spot_ok and streak >= p.stable_streak and tail >= p.unlock_tail:
                return Decision.SPOT
            return Decision.ON_DEMAND

        if spot_ok and streak >= p.stable_streak and tail >= p.stable_tail:
            return Decision.SPOT
        if slack > need + safety + p.wait_margin_mult * task.overhead:
            return Decision.NONE  # selective waiting: skip unreliable spots
        self.rebuilding = True
        self.dwell_left = p.dwell
        return Decision.ON_DEMAND


def adaptive_policy(params: AdaptiveParams | None = None) -> AdaptivePolicy:
    """Fresh per-run instance of the adaptive policy."""
    return AdaptivePolicy(params)


# ---------------------------------------------------------------------------
# simulator


def simulate(policy: Policy, trace: SpotTrace, task: Task, prices: PriceModel) -> SimReport:
    """Advance the world one tick at a time, consulting the policy each tick.

    The caller's task is not mutated; the policy sees a private copy whose
    ``progress_made`` tracks the run.
    """
    if len(trace) < task.deadline:
        raise ValueError(f"trace length {len(trace)} < deadline {task.deadline}")
    task = replace(task)

    occupancy = Decision.NONE
    changeover_left = 0
    cost = 0.0
    preemptions = 0
    changeovers = 0
    decisions: list[Decision] = []

    for tick in range(task.deadline):
        if task.progress_made >= task.duration:
            break
        has_spot = trace[tick]

        if occupancy is Decision.SPOT and not has_spot:
            preemptions += 1
            occupancy = Decision.NONE
            changeover_left = 0

        env = EnvView(elapsed=tick, changeover_remaining=changeover_left)
        decision = policy(has_spot, occupancy, env, task)
        if decision is Decision.SPOT and not has_spot:
            raise PolicyError(f"policy chose SPOT at tick {tick} with no spot available")
        decisions.append(decision)

        if decision is Decision.NONE:
            occupancy = Decision.NONE
            changeover_left = 0
            continue

        if decision is not occupancy:
            occupancy = decision
            changeover_left = task.overhead
            changeovers += 1

        cost += prices.price(decision)
        if changeover_left > 0:
            changeover_left -= 1
        else:
            task.progress_made += 1

    return SimReport(
        total_cost=cost,
        deadline_met=task.progress_made >= task.duration,
        decisions=decisions,
        preemptions=preemptions,
        changeovers=changeovers,
    )


def cost_savings(report: SimReport, task: Task, prices: PriceModel) -> float:
    """Savings relative to running entirely on-demand from t=0 (one changeover)."""
    if not report.deadline_met:
        raise InvalidPolicyRun("savings undefined: deadline missed")
    baseline = (task.duration + task.overhead) * prices.od_price
    return 1.0 - report.total_cost / baseline


# ---------------------------------------------------------------------------
# trace generation and file formats


def generate_trace(
    rng: np.random.Generator,
    length: int,
    model: str = "bernoulli",
    *,
    p: float = 0.5,
    mean_up: float = 8.0,
    mean_down: float = 8.0,
) -> SpotTrace:
    """Seeded synthetic availability traces.

    ``bernoulli``: independent per-tick availability with probability p.
    ``two_state``: on/off chain with geometric sojourns of the given means.
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    if model == "bernoulli":
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"p must be in [0,1], got {p}")
        avail = rng.random(length) < p
    elif model == "two_state":
        if mean_up < 1 or mean_down < 1:
            raise ValueError("sojourn means must be >= 1")
        p_leave_up = 1.0 / mean_up
        p_leave_down = 1.0 / mean_down
        state = bool(rng.random() < mean_up / (mean_up + mean_down))
        avail = np.empty(length, dtype=bool)
        for i in range(length):
            avail[i] = state
            leave = p_leave_up if state else p_leave_down
            if rng.random() < leave:
                state = not state
    else:
        raise ValueError(f"unknown availability model: {model!r}")
    return SpotTrace(tuple(bool(b) for b in avail))


def save_trace(path: str | Path, trace: SpotTrace) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["tick", "has_spot"])
        for t, b in enumerate(trace.availability):
            w.writerow([t, int(b)])


def load_trace(path: str | Path) -> SpotTrace:
    with open(path, newline="") as f:
        r = csv.reader(f)
        header = next(r)
        if header[:2] != ["tick", "has_spot"]:
            raise ValueError(f"bad trace header: {header}")
        return SpotTrace(tuple(bool(int(row[1])) for row in r))


def save_task_file(path: str | Path, task: Task, prices: PriceModel) -> None:
    with open(path, "w") as f:
        f.write(f"duration={task.duration}\n")
        f.write(f"deadline={task.deadline}\n")
        f.write(f"overhead={task.overhead}\n")
        f.write(f"spot_price={prices.spot_price}\n")
        f.write(f"od_price={prices.od_price}\n")


def load_task_file(path: str | Path) -> tuple[Task, PriceModel]:
    fields: dict[str, str] = {}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            fields[key.strip()] = value.strip()
    task = Task(
        duration=int(fields["duration"]),
        deadline=int(fields["deadline"]),
        overhead=int(fields["overhead"]),
    )
    prices = PriceModel(spot_price=float(fields["spot_price"]), od_price=float(fields["od_price"]))
    return task, prices
