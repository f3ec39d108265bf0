"""Two-stage candidate evaluation against the optimization environments.

Stage 1 is a cheap compliance check (parameter bounds, or a subprocess
handshake plus one smoke instance); stage 2 runs the selected instance subset
and scores it. Every metric that enters a score is recomputed on the
evaluator side from the candidate's raw outputs — numbers reported by the
candidate itself are never trusted.
"""

from __future__ import annotations

import json
import select
import statistics
import subprocess
import time
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

from sysevolve import eplb, spot_multi, spot_single, sql_reorder, txn_sched
from sysevolve.core import CandidateProgram, ParamVector, SourceText, clamp_score, derive_rng
from sysevolve import suites

ENV_IDS = ("spot_single", "spot_multi", "eplb", "sql_reorder", "txn_sched")

# failure taxonomy used in feedback text
LABEL_SYNTAX = "Syntax & Interface Errors"
LABEL_BUDGET = "Budget Exhaustion"
LABEL_PREMATURE = "Premature Convergence"
LABEL_STUCK = "Stuck-in-the-Loop"
LABEL_DRIFT = "Mutation Drift"
LABEL_MISALIGNED = "Misaligned Objectives"
LABEL_SUBOPTIMAL = "Sub-Optimal Optimizations"
LABEL_OVERFITTING = "Overfitting"
LABEL_REWARD_HACKING = "Reward Hacking"

FAILURE_LABELS = (
    LABEL_SYNTAX,
    LABEL_BUDGET,
    LABEL_PREMATURE,
    LABEL_STUCK,
    LABEL_DRIFT,
    LABEL_MISALIGNED,
    LABEL_SUBOPTIMAL,
    LABEL_OVERFITTING,
    LABEL_REWARD_HACKING,
)


class ProtocolError(Exception):
    """The candidate process violated the stdio message contract."""


class SandboxTimeout(Exception):
    """The candidate process exceeded a per-message or total wall budget."""


@dataclass(frozen=True)
class Environment:
    """A scored workload: the frozen instance suite plus scoring knobs."""

    env_id: str
    seed: int
    instances: tuple[Any, ...]
    feedback_fraction: float = 0.3
    score_lo: float = -0.2  # affine mapping bounds for delta-style scores
    score_hi: float = 0.2
    message_timeout: float = 10.0
    total_budget: float = 120.0

    def __post_init__(self) -> None:
        if self.env_id not in ENV_IDS:
            raise ValueError(f"unknown environment {self.env_id!r}")
        if not self.instances:
            raise ValueError("environment needs at least one instance")
        if not 0.0 < self.feedback_fraction <= 1.0:
            raise ValueError("feedback fraction must be in (0, 1]")

    def split(self) -> tuple[list[int], list[int]]:
        """Seeded feedback/holdout index split (feedback_fraction vs rest)."""
        rng = derive_rng(self.seed, f"{self.env_id}_split")
        order = list(rng.permutation(len(self.instances)))
        cut = max(1, int(round(self.feedback_fraction * len(self.instances))))
        return sorted(order[:cut]), sorted(order[cut:])

    def subset(self, mode: str) -> list[Any]:
        feedback, holdout = self.split()
        if mode == "feedback":
            return [self.instances[i] for i in feedback]
        if mode == "full":
            return list(self.instances)
        if mode == "holdout":
            return [self.instances[i] for i in holdout]
        raise ValueError(f"unknown mode {mode!r}")


def build_environment(env_id: str, seed: int, size: Optional[int] = None) -> Environment:
    """The default frozen suite for each environment id."""
    if env_id == "spot_single":
        return Environment(env_id, seed, tuple(suites.spot_suite(seed, size or 200)))
    if env_id == "spot_multi":
        return Environment(env_id, seed, tuple(suites.multi_suite(seed, size or 100)))
    if env_id == "eplb":
        return Environment(env_id, seed, tuple(suites.eplb_suite(seed, size or 20)))
    if env_id == "sql_reorder":
        return Environment(env_id, seed, tuple(suites.sql_suite(seed, size or 10)))
    if env_id == "txn_sched":
        return Environment(env_id, seed, tuple(suites.txn_suite(seed, size or 20)))
    raise ValueError(f"unknown environment {env_id!r}")


@dataclass
class EvaluationResult:
    stage1_ok: bool
    score: float
    metrics: dict[str, float] = field(default_factory=dict)
    mean: float = 0.0
    deviation: float = 0.0
    count: int = 0
    feedback: str = ""
    wall_time: float = 0.0


# ---------------------------------------------------------------------------
# scoring helpers


def score_spot(deltas: Sequence[float], all_deadlines_met: bool, lo: float, hi: float) -> float:
    """Mean savings delta over the per-environment baseline, affinely mapped
    into [0, 1]; a single missed deadline zeroes the score."""
    if not all_deadlines_met:
        return 0.0
    mean = float(np.mean(deltas)) if len(deltas) else 0.0
    return clamp_score((mean - lo) / (hi - lo))


def score_combined(
    primary_metric: float, runtime: float, weights: tuple[float, float], *,
    runtime_mode: str, ref_runtime: float = 1.0,
) -> float:
    """w1 x metric + w2 x runtime term; the runtime term is 1/(1+runtime) or
    ref/(ref+runtime) depending on the environment."""
    if runtime < 0:
        raise ValueError("runtime must be >= 0")
    w1, w2 = weights
    if abs(w1 + w2 - 1.0) > 1e-9:
        raise ValueError("weights must sum to 1")
    if runtime_mode == "inverse":
        term = 1.0 / (1.0 + runtime)
    elif runtime_mode == "reference":
        term = ref_runtime / (ref_runtime + runtime)
    else:
        raise ValueError(f"unknown runtime mode {runtime_mode!r}")
    return clamp_score(w1 * primary_metric + w2 * term)


def _trace_features(instances: Sequence[suites.SpotInstance]) -> str:
    avail = [sum(i.trace.availability) / len(i.trace) for i in instances]
    runs: list[int] = []
    for inst in instances:
        n = 0
        for b in inst.trace.availability:
            if b:
                n += 1
            elif n:
                runs.append(n)
                n = 0
        if n:
            runs.append(n)
    mean_run = statistics.mean(runs) if runs else 0.0
    return (
        f"availability mean {statistics.mean(avail):.3f}, "
        f"average spot run length {mean_run:.1f} ticks"
    )


# ---------------------------------------------------------------------------
# candidate process (stdio protocol, JSON lines)


class CandidateProcess:
    """One sandboxed candidate executable speaking the versioned protocol."""

    def __init__(self, argv: Sequence[str], env_id: str, message_timeout: float):
        self.message_timeout = message_timeout
        self.proc = subprocess.Popen(
            list(argv),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
        )
        self._buffer = ""
        self.send({"hello": True, "env_id": env_id, "protocol": 1})
        ready = self.recv()
        if ready.get("ready") is not True:
            raise ProtocolError(f"bad handshake reply: {ready}")

    def send(self, message: dict) -> None:
        assert self.proc.stdin is not None
        try:
            self.proc.stdin.write(json.dumps(message) + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, ValueError) as exc:
            raise ProtocolError(f"candidate closed its stdin: {exc}") from exc

    def recv(self) -> dict:
        assert self.proc.stdout is not None
        deadline = time.monotonic() + self.message_timeout
        while "\n" not in self._buffer:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise SandboxTimeout(f"no reply within {self.message_timeout}s")
            ready, _, _ = select.select([self.proc.stdout], [], [], remaining)
            if not ready:
                raise SandboxTimeout(f"no reply within {self.message_timeout}s")
            chunk = self.proc.stdout.readline()
            if chunk == "":
                raise ProtocolError("candidate exited before replying")
            self._buffer += chunk
        line, self._buffer = self._buffer.split("\n", 1)
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"reply is not JSON: {line!r}") from exc
        if not isinstance(msg, dict):
            raise ProtocolError(f"reply is not an object: {msg!r}")
        return msg

    def close(self) -> None:
        if self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(timeout=2)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()

    def __enter__(self) -> "CandidateProcess":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


_ACTIONS = {
    "SPOT": spot_single.Decision.SPOT,
    "ON_DEMAND": spot_single.Decision.ON_DEMAND,
    "NONE": spot_single.Decision.NONE,
}


def _stepwise_policy(proc: CandidateProcess, task, *, multi: bool):
    """Adapt the per-tick wire protocol to an in-process policy callable."""
    first = {"value": True}

    def policy(has_spot, state, env, task_):
        msg = {
            "tick": env.elapsed,
            "has_spot": list(has_spot) if multi else [bool(has_spot)],
            "state": state.name,
            "progress": task_.progress_made,
            "duration": task_.duration,
            "deadline": task_.deadline,
            "overhead": task_.overhead,
            "changeover_remaining": env.changeover_remaining,
            "reset": first["value"],
        }
        if multi:
            msg["region"] = env.current_region
            msg["migration_cost"] = env.migration_cost
        first["value"] = False
        proc.send(msg)
        reply = proc.recv()
        action = reply.get("action")
        if action not in _ACTIONS:
            raise ProtocolError(f"unknown action {action!r}")
        if multi:
            region = reply.get("region", env.current_region)
            if not isinstance(region, int):
                raise ProtocolError(f"bad region {region!r}")
            return spot_multi.MultiDecision(_ACTIONS[action], region)
        return _ACTIONS[action]

    return policy


# ---------------------------------------------------------------------------
# per-environment runners: each returns (per-instance metric list, extras)


def _named_policy(env_id: str, name: str):
    """In-process reference policies runnable by name."""
    table = {
        "spot_single": {
            "greedy": lambda: spot_single.greedy_policy,
            "uniform_progress": lambda: spot_single.uniform_progress_policy,
            "adaptive": lambda: spot_single.adaptive_policy(),
        },
        "spot_multi": {
            "round_robin": lambda: spot_multi.round_robin_baseline,
            "urgency": lambda: spot_multi.urgency_policy(2),
        },
        "eplb": {"greedy": lambda: "greedy", "zigzag": lambda: "zigzag"},
        "sql_reorder": {
            "quick_greedy": lambda: sql_reorder.quick_greedy,
            "evolved": lambda: sql_reorder.evolved_reorder,
        },
        "txn_sched": {
            "random": lambda: "random",
            "smf": lambda: "smf",
            "offline": lambda: "offline",
        },
    }
    envs = table[env_id]
    if name not in envs:
        raise ValueError(f"unknown policy {name!r} for {env_id} (have {sorted(envs)})")
    return envs[name]()


def _spot_single_savings(policy_factory, instances) -> tuple[list[float], bool]:
    savings = []
    all_met = True
    for inst in instances:
        policy = policy_factory()
        report = spot_single.simulate(policy, inst.trace, inst.task, inst.prices)
        all_met &= report.deadline_met
        savings.append(spot_single.cost_savings(report, inst.task, inst.prices))
    return savings, all_met


def _spot_multi_savings(policy_factory, instances) -> tuple[list[float], bool]:
    savings = []
    all_met = True
    for inst in instances:
        policy = policy_factory()
        report = spot_multi.simulate_multi(policy, inst.regions, inst.task)
        all_met &= report.deadline_met
        od = inst.regions.regions[0].prices.od_price
        full = (inst.task.duration + inst.task.overhead) * od
        savings.append(1.0 - report.total_cost / full)
    return savings, all_met


def _uniform_progress_reference(env: Environment, mode: str) -> list[float]:
    if env.env_id == "spot_single":
        s, _ = _spot_single_savings(lambda: spot_single.uniform_progress_policy, env.subset(mode))
        return s
    s, _ = _spot_multi_savings(lambda: spot_multi.round_robin_baseline, env.subset(mode))
    return s


# ---------------------------------------------------------------------------
# evaluation entry point


def _stage1(candidate: CandidateProgram, env: Environment) -> Optional[str]:
    """None when stage 1 passes, else a labeled failure message."""
    payload = candidate.payload
    if isinstance(payload, ParamVector):
        if payload.family != "spot_adaptive" or env.env_id != "spot_single":
            return f"{LABEL_SYNTAX}: family {payload.family!r} not runnable on {env.env_id}"
        for name, value in payload.values.items():
            if name not in payload.bounds:
                return f"{LABEL_SYNTAX}: unknown parameter {name!r}"
            lo, hi = payload.bounds[name]
            if not lo <= value <= hi:
                return f"{LABEL_SYNTAX}: parameter {name}={value} outside [{lo}, {hi}]"
        try:
            spot_single.AdaptiveParams.from_param_vector(payload)
        except Exception as exc:  # noqa: BLE001 - any constructor failure is a stage-1 reject
            return f"{LABEL_SYNTAX}: {exc}"
        return None
    if isinstance(payload, SourceText):
        try:
            with CandidateProcess(_source_argv(payload), env.env_id, env.message_timeout) as proc:
                _run_instances(proc, env, env.subset("feedback")[:1])
        except SandboxTimeout as exc:
            return f"{LABEL_BUDGET}: {exc}"
        except (ProtocolError, OSError) as exc:
            return f"{LABEL_SYNTAX}: {exc}"
        return None
    return f"{LABEL_SYNTAX}: unsupported payload type {type(payload).__name__}"


def _source_argv(payload: SourceText) -> list[str]:
    """Source candidates are executable paths (optionally with arguments)."""
    return payload.text.split()


def _run_instances(proc: CandidateProcess, env: Environment, instances) -> list[dict]:
    """Drive the candidate over the instances; returns raw per-instance facts
    recomputed evaluator-side."""
    out = []
    for inst in instances:
        if env.env_id == "spot_single":
            policy = _stepwise_policy(proc, inst.task, multi=False)
            report = spot_single.simulate(policy, inst.trace, inst.task, inst.prices)
            out.append({
                "deadline_met": report.deadline_met,
                "savings": spot_single.cost_savings(report, inst.task, inst.prices),
            })
        elif env.env_id == "spot_multi":
            policy = _stepwise_policy(proc, inst.task, multi=True)
            report = spot_multi.simulate_multi(policy, inst.regions, inst.task)
            od = inst.regions.regions[0].prices.od_price
            full = (inst.task.duration + inst.task.overhead) * od
            out.append({
                "deadline_met": report.deadline_met,
                "savings": 1.0 - report.total_cost / full,
            })
        elif env.env_id == "eplb":
            start = time.perf_counter()
            proc.send({
                "loads": list(inst.loads), "group_size": inst.group_size,
                "num_nodes": inst.num_nodes, "gpus_per_node": inst.gpus_per_node,
                "slots_per_gpu": inst.slots_per_gpu,
            })
            reply = proc.recv()
            elapsed = time.perf_counter() - start
            placement = eplb.Placement(
                tuple(reply.get("gpu_of", ())), tuple(reply.get("expert_of", ()))
            )
            placement.validate(inst)
            out.append({
                "imbalance": eplb.imbalance_factor(placement, inst.loads, inst.num_gpus),
                "runtime": elapsed,
            })
        elif env.env_id == "sql_reorder":
            start = time.perf_counter()
            proc.send({"columns": list(inst.columns), "rows": [list(r) for r in inst.rows]})
            reply = proc.recv()
            elapsed = time.perf_counter() - start
            ordering = sql_reorder.Ordering(
                tuple(reply.get("row_perm", ())),
                tuple(tuple(fp) for fp in reply.get("field_perms", ())),
            )
            if not sql_reorder.verify_semantics(inst, ordering):
                raise ProtocolError("ordering does not preserve table semantics")
            out.append({
                "phr": sql_reorder.compute_phr(inst, ordering),
                "runtime": elapsed,
            })
        else:  # txn_sched
            start = time.perf_counter()
            proc.send({"txns": [[list(op) for op in t.ops] for t in inst]})
            reply = proc.recv()
            elapsed = time.perf_counter() - start
            order = list(reply.get("order", ()))
            if sorted(order) != list(range(len(inst))):
                raise ProtocolError("schedule is not a permutation")
            report = txn_sched.makespan(list(inst), order)
            out.append({"makespan": report.makespan, "runtime": elapsed})
    return out


def _score_from_facts(env: Environment, facts: list[dict], mode: str) -> EvaluationResult:
    """Turn evaluator-side raw facts into the environment's score."""
    if env.env_id in ("spot_single", "spot_multi"):
        all_met = all(f["deadline_met"] for f in facts)
        ref = _uniform_progress_reference(env, mode)
        deltas = [f["savings"] - r for f, r in zip(facts, ref)]
        score = score_spot(deltas, all_met, env.score_lo, env.score_hi)
        values = [f["savings"] for f in facts]
        feedback = (
            f"mean savings {np.mean(values):.4f} over {len(values)} instances; "
            f"delta vs baseline {np.mean(deltas):+.4f}; "
        )
        if env.env_id == "spot_single":
            feedback += _trace_features(env.subset(mode))
        if not all_met:
            misses = sum(not f["deadline_met"] for f in facts)
            feedback = f"{LABEL_MISALIGNED}: {misses} deadline violations; " + feedback
        return EvaluationResult(
            stage1_ok=True, score=score,
            metrics={"mean_savings": float(np.mean(values)),
                     "delta_vs_baseline": float(np.mean(deltas))},
            mean=float(np.mean(values)),
            deviation=float(np.std(values)),
            count=len(values), feedback=feedback,
        )
    if env.env_id == "eplb":
        imb = [f["imbalance"] for f in facts]
        rt = [f["runtime"] for f in facts]
        ref = _eplb_reference_runtime(env, mode)
        score = score_combined(
            float(np.mean(imb)), float(np.mean(rt)), (0.5, 0.5),
            runtime_mode="reference", ref_runtime=ref,
        )
        return EvaluationResult(
            stage1_ok=True, score=score,
            metrics={"imbalance": float(np.mean(imb)), "runtime": float(np.mean(rt))},
            mean=float(np.mean(imb)), deviation=float(np.std(imb)), count=len(imb),
            feedback=f"mean imbalance {np.mean(imb):.4f}, mean runtime {np.mean(rt)*1e3:.2f} ms",
        )
    if env.env_id == "sql_reorder":
        phr = [f["phr"] for f in facts]
        rt = [f["runtime"] for f in facts]
        score = score_combined(
            float(np.mean(phr)), float(np.mean(rt)), (0.5, 0.5), runtime_mode="inverse"
        )
        return EvaluationResult(
            stage1_ok=True, score=score,
            metrics={"phr": float(np.mean(phr)), "runtime": float(np.mean(rt))},
            mean=float(np.mean(phr)), deviation=float(np.std(phr)), count=len(phr),
            feedback=f"mean PHR {np.mean(phr):.4f}, mean runtime {np.mean(rt)*1e3:.2f} ms",
        )
    # txn_sched: score by makespan ratio against the sampling scheduler
    spans = [f["makespan"] for f in facts]
    ref = _txn_reference_makespans(env, mode)
    ratios = [r / s if s > 0 else 0.0 for r, s in zip(ref, spans)]
    score = clamp_score((float(np.mean(ratios)) - 0.5) / 1.0)
    return EvaluationResult(
        stage1_ok=True, score=score,
        metrics={"mean_makespan": float(np.mean(spans)),
                 "baseline_ratio": float(np.mean(ratios))},
        mean=float(np.mean(spans)), deviation=float(np.std(spans)), count=len(spans),
        feedback=f"mean makespan {np.mean(spans):.1f}, baseline ratio {np.mean(ratios):.3f}",
    )


def _eplb_reference_runtime(env: Environment, mode: str) -> float:
    times = []
    for inst in env.subset(mode):
        _, report = eplb.rebalance(inst, "greedy", timing_repeats=1)
        times.append(report.runtime_ms / 1e3)
    return float(np.mean(times))


def _txn_reference_makespans(env: Environment, mode: str) -> list[float]:
    out = []
    for i, txns in enumerate(env.subset(mode)):
        rng = derive_rng(env.seed, f"txn_ref_{mode}_{i}")
        cost, _ = txn_sched.smf_schedule(list(txns), rng)
        out.append(float(cost))
    return out


def evaluate(candidate: CandidateProgram, env: Environment, mode: str = "feedback") -> EvaluationResult:
    """Two-stage evaluation; hard-constraint violations and protocol failures
    score 0 with a taxonomy-labeled feedback message."""
    start = time.time()
    failure = _stage1(candidate, env)
    if failure is not None:
        return EvaluationResult(
            stage1_ok=False, score=0.0, feedback=failure, wall_time=time.time() - start
        )

    instances = env.subset(mode)
    try:
        if isinstance(candidate.payload, ParamVector):
            params = spot_single.AdaptiveParams.from_param_vector(candidate.payload)
            facts = []
            for inst in instances:
                report = spot_single.simulate(
                    spot_single.adaptive_policy(params), inst.trace, inst.task, inst.prices
                )
                facts.append({
                    "deadline_met": report.deadline_met,
                    "savings": spot_single.cost_savings(report, inst.task, inst.prices),
                })
        else:
            deadline = time.time() + env.total_budget
            with CandidateProcess(
                _source_argv(candidate.payload), env.env_id, env.message_timeout
            ) as proc:
                facts = []
                for inst in instances:
                    if time.time() > deadline:
                        raise SandboxTimeout(
                            f"total budget of {env.total_budget}s exhausted"
                        )
                    facts.extend(_run_instances(proc, env, [inst]))
    except SandboxTimeout as exc:
        return EvaluationResult(
            stage1_ok=True, score=0.0,
            feedback=f"{LABEL_BUDGET}: {exc}", wall_time=time.time() - start,
        )
    except (ProtocolError, ValueError, eplb.CapacityError) as exc:
        return EvaluationResult(
            stage1_ok=True, score=0.0,
            feedback=f"{LABEL_MISALIGNED}: {exc}", wall_time=time.time() - start,
        )

    result = _score_from_facts(env, facts, mode)
    result.wall_time = time.time() - start
    return result


def evaluate_policy(env: Environment, policy_name: str, mode: str = "full") -> EvaluationResult:
    """Score a named in-process reference policy through the same pipeline."""
    start = time.time()
    impl = _named_policy(env.env_id, policy_name)
    facts: list[dict] = []
    if env.env_id == "spot_single":
        factory = dict(
            greedy=lambda: spot_single.greedy_policy,
            uniform_progress=lambda: spot_single.uniform_progress_policy,
            adaptive=lambda: spot_single.adaptive_policy(),
        )[policy_name]
        for inst in env.subset(mode):
            report = spot_single.simulate(factory(), inst.trace, inst.task, inst.prices)
            facts.append({
                "deadline_met": report.deadline_met,
                "savings": spot_single.cost_savings(report, inst.task, inst.prices),
            })
    elif env.env_id == "spot_multi":
        factory = dict(
            round_robin=lambda: spot_multi.round_robin_baseline,
            urgency=lambda: spot_multi.urgency_policy(2),
        )[policy_name]
        for inst in env.subset(mode):
            report = spot_multi.simulate_multi(factory(), inst.regions, inst.task)
            od = inst.regions.regions[0].prices.od_price
            full = (inst.task.duration + inst.task.overhead) * od
            facts.append({
                "deadline_met": report.deadline_met,
                "savings": 1.0 - report.total_cost / full,
            })
    elif env.env_id == "eplb":
        for inst in env.subset(mode):
            _, report = eplb.rebalance(inst, impl)
            facts.append({"imbalance": report.imbalance, "runtime": report.runtime_ms / 1e3})
    elif env.env_id == "sql_reorder":
        for inst in env.subset(mode):
            t0 = time.perf_counter()
            ordering = impl(inst)
            elapsed = time.perf_counter() - t0
            if not sql_reorder.verify_semantics(inst, ordering):
                return EvaluationResult(
                    stage1_ok=True, score=0.0,
                    feedback=f"{LABEL_MISALIGNED}: semantics violated",
                    wall_time=time.time() - start,
                )
            facts.append({"phr": sql_reorder.compute_phr(inst, ordering), "runtime": elapsed})
    else:
        for i, txns in enumerate(env.subset(mode)):
            rng = derive_rng(env.seed, f"txn_pol_{mode}_{i}")
            t0 = time.perf_counter()
            if impl == "random":
                order = txn_sched.random_schedule(list(txns), rng)
                cost = txn_sched.makespan(list(txns), order).makespan
            elif impl == "smf":
                cost, _ = txn_sched.smf_schedule(list(txns), rng)
            else:
                cost, _ = txn_sched.offline_schedule(list(txns), rng=rng)
            facts.append({"makespan": float(cost), "runtime": time.perf_counter() - t0})
    result = _score_from_facts(env, facts, mode)
    result.wall_time = time.time() - start
    return result
