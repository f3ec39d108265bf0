"""Two-stage evaluation harness: splits, scoring, candidate protocol."""

import sys
from dataclasses import replace

import numpy as np
import pytest

from sysevolve import eval_harness, spot_single, txn_sched
from sysevolve.core import CandidateProgram, ParamVector, SourceText
from sysevolve.eval_harness import (
    FAILURE_LABELS,
    LABEL_BUDGET,
    LABEL_MISALIGNED,
    LABEL_SYNTAX,
    Environment,
    build_environment,
    evaluate,
    evaluate_policy,
    score_combined,
    score_spot,
)
from sysevolve.spot_single import AdaptiveParams
from sysevolve.txn_sched import generate_workload
from sysevolve.core import derive_rng


def make_candidate(tmp_path, name, body):
    path = tmp_path / name
    path.write_text(body)
    return CandidateProgram(id=name, payload=SourceText(f"{sys.executable} {path}"))


SPOT_OD_CANDIDATE = """\
import sys, json
for line in sys.stdin:
    msg = json.loads(line)
    if msg.get("hello"):
        print(json.dumps({"ready": True}), flush=True)
    else:
        print(json.dumps({"action": "ON_DEMAND"}), flush=True)
"""

TXN_LYING_CANDIDATE = """\
import sys, json
for line in sys.stdin:
    msg = json.loads(line)
    if msg.get("hello"):
        print(json.dumps({"ready": True}), flush=True)
    else:
        n = len(msg["txns"])
        # identity schedule plus a wildly false self-reported makespan
        print(json.dumps({"order": list(range(n)), "makespan": 1}), flush=True)
"""

SQL_TURNCOAT_CANDIDATE = """\
import sys, json
calls = 0
for line in sys.stdin:
    msg = json.loads(line)
    if msg.get("hello"):
        print(json.dumps({"ready": True}), flush=True)
        continue
    calls += 1
    n = len(msg["rows"])
    m = len(msg["columns"])
    if calls == 1:
        reply = {"row_perm": list(range(n)),
                 "field_perms": [list(range(m)) for _ in range(n)]}
    else:
        # drops rows: duplicates index 0
        reply = {"row_perm": [0] * n,
                 "field_perms": [list(range(m)) for _ in range(n)]}
    print(json.dumps(reply), flush=True)
"""

SLEEPER_CANDIDATE = """\
import sys, json, time
for line in sys.stdin:
    msg = json.loads(line)
    if msg.get("hello"):
        print(json.dumps({"ready": True}), flush=True)
    else:
        time.sleep(60)
"""

BAD_HANDSHAKE_CANDIDATE = """\
import sys, json
for line in sys.stdin:
    print(json.dumps({"ready": False}), flush=True)
"""


# ---------------------------------------------------------------------------
# environments and splits


def test_environment_validation():
    with pytest.raises(ValueError):
        Environment("mystery", 1, (1,))
    with pytest.raises(ValueError):
        Environment("spot_single", 1, ())
    with pytest.raises(ValueError):
        Environment("spot_single", 1, (1,), feedback_fraction=0.0)


def test_split_is_seeded_disjoint_cover():
    env = build_environment("spot_single", 7, size=20)
    feedback, holdout = env.split()
    assert feedback == build_environment("spot_single", 7, size=20).split()[0]
    assert len(feedback) == 6  # 30% of 20
    assert not set(feedback) & set(holdout)
    assert sorted(feedback + holdout) == list(range(20))


def test_subset_modes():
    env = build_environment("sql_reorder", 3, size=10)
    assert len(env.subset("feedback")) == 3
    assert len(env.subset("holdout")) == 7
    assert len(env.subset("full")) == 10
    with pytest.raises(ValueError):
        env.subset("mystery")


def test_build_environment_ids():
    for env_id in eval_harness.ENV_IDS:
        env = build_environment(env_id, 5, size=3)
        assert env.env_id == env_id and len(env.instances) == 3
    with pytest.raises(ValueError):
        build_environment("mystery", 5)


# ---------------------------------------------------------------------------
# scoring functions


def test_score_spot_baseline_maps_to_half():
    assert score_spot([0.0, 0.0], True, -0.2, 0.2) == pytest.approx(0.5)
    assert score_spot([0.2], True, -0.2, 0.2) == pytest.approx(1.0)
    assert score_spot([-0.3], True, -0.2, 0.2) == 0.0  # clamped
    assert score_spot([0.5], False, -0.2, 0.2) == 0.0  # deadline miss zeroes


def test_score_combined_hand_values():
    # inverse mode: 0.5*0.8 + 0.5 * 1/(1+1) = 0.65
    assert score_combined(0.8, 1.0, (0.5, 0.5), runtime_mode="inverse") == pytest.approx(0.65)
    # reference mode: 0.5*0.8 + 0.5 * 1/(1+3) = 0.525
    assert score_combined(0.8, 3.0, (0.5, 0.5), runtime_mode="reference",
                          ref_runtime=1.0) == pytest.approx(0.525)
    with pytest.raises(ValueError):
        score_combined(0.5, 1.0, (0.7, 0.5), runtime_mode="inverse")
    with pytest.raises(ValueError):
        score_combined(0.5, -1.0, (0.5, 0.5), runtime_mode="inverse")
    with pytest.raises(ValueError):
        score_combined(0.5, 1.0, (0.5, 0.5), runtime_mode="mystery")


def test_failure_label_strings_are_frozen():
    assert FAILURE_LABELS == (
        "Syntax & Interface Errors",
        "Budget Exhaustion",
        "Premature Convergence",
        "Stuck-in-the-Loop",
        "Mutation Drift",
        "Misaligned Objectives",
        "Sub-Optimal Optimizations",
        "Overfitting",
        "Reward Hacking",
    )


# ---------------------------------------------------------------------------
# stage 1: parameter candidates


def test_param_candidate_wrong_family_rejected():
    env = build_environment("spot_single", 7, size=5)
    prog = CandidateProgram(id="x", payload=ParamVector("other", {"a": 0.5}, {"a": (0, 1)}))
    result = evaluate(prog, env)
    assert not result.stage1_ok and result.score == 0.0
    assert result.feedback.startswith(LABEL_SYNTAX)


def test_param_candidate_out_of_bounds_rejected():
    env = build_environment("spot_single", 7, size=5)
    vec = AdaptiveParams().to_param_vector()
    broken = ParamVector(vec.family, {**vec.values, "window_len": 1e6}, vec.bounds)
    result = evaluate(CandidateProgram(id="x", payload=broken), env)
    assert not result.stage1_ok
    assert result.feedback.startswith(LABEL_SYNTAX)


def test_param_candidate_scores_like_adaptive_policy():
    env = build_environment("spot_single", 7, size=30)
    prog = CandidateProgram(id="x", payload=AdaptiveParams().to_param_vector())
    via_harness = evaluate(prog, env, mode="full")
    direct = evaluate_policy(env, "adaptive", mode="full")
    assert via_harness.stage1_ok
    assert via_harness.score == pytest.approx(direct.score)
    assert via_harness.metrics["mean_savings"] == pytest.approx(direct.metrics["mean_savings"])


# ---------------------------------------------------------------------------
# reference policies through the pipeline


def test_uniform_progress_scores_exactly_half():
    env = build_environment("spot_single", 7, size=30)
    result = evaluate_policy(env, "uniform_progress", mode="full")
    assert result.score == pytest.approx(0.5)
    assert result.metrics["delta_vs_baseline"] == pytest.approx(0.0)


def test_unknown_policy_name_raises():
    env = build_environment("spot_single", 7, size=5)
    with pytest.raises(ValueError):
        evaluate_policy(env, "mystery")


def test_txn_smf_scores_near_half():
    workloads = tuple(
        tuple(generate_workload(derive_rng(2, f"w{i}"), "zipf-keys", 20, ops_per_txn=4))
        for i in range(4)
    )
    env = Environment("txn_sched", 2, workloads)
    result = evaluate_policy(env, "smf", mode="full")
    # ratio of one seeded SMF run to another hovers around 1 -> score near 0.5
    assert 0.3 < result.score < 0.7


# ---------------------------------------------------------------------------
# subprocess candidates


def spot_env(seed=7, size=5, **kw):
    env = build_environment("spot_single", seed, size=size)
    return replace(env, **kw) if kw else env


def test_source_candidate_honest_on_demand(tmp_path):
    env = spot_env(size=6)
    prog = make_candidate(tmp_path, "od.py", SPOT_OD_CANDIDATE)
    result = evaluate(prog, env, mode="full")
    assert result.stage1_ok
    # always-on-demand meets every deadline at zero savings
    assert result.metrics["mean_savings"] == pytest.approx(0.0)
    assert result.score < 0.5


def test_lying_candidate_scored_from_recomputation(tmp_path):
    workloads = tuple(
        tuple(generate_workload(derive_rng(3, f"w{i}"), "hot-cold", 15, ops_per_txn=4))
        for i in range(3)
    )
    env = Environment("txn_sched", 3, workloads)
    prog = make_candidate(tmp_path, "liar.py", TXN_LYING_CANDIDATE)
    result = evaluate(prog, env, mode="full")
    assert result.stage1_ok
    true_mean = np.mean([
        txn_sched.makespan(list(wl), list(range(len(wl)))).makespan for wl in workloads
    ])
    # the claimed makespan of 1 is ignored; only the evaluator's number counts
    assert result.metrics["mean_makespan"] == pytest.approx(true_mean)
    assert result.mean > 1.0


def test_constraint_violation_scores_zero_with_label(tmp_path):
    env = build_environment("sql_reorder", 5, size=6)
    prog = make_candidate(tmp_path, "turncoat.py", SQL_TURNCOAT_CANDIDATE)
    result = evaluate(prog, env, mode="full")
    # passes the single-instance smoke test, then violates semantics
    assert result.stage1_ok
    assert result.score == 0.0
    assert result.feedback.startswith(LABEL_MISALIGNED)


def test_unresponsive_candidate_hits_budget_label(tmp_path):
    env = spot_env(size=3, message_timeout=0.5)
    prog = make_candidate(tmp_path, "sleeper.py", SLEEPER_CANDIDATE)
    result = evaluate(prog, env, mode="full")
    assert not result.stage1_ok
    assert result.feedback.startswith(LABEL_BUDGET)


def test_bad_handshake_is_interface_error(tmp_path):
    env = spot_env(size=3)
    prog = make_candidate(tmp_path, "badhs.py", BAD_HANDSHAKE_CANDIDATE)
    result = evaluate(prog, env)
    assert not result.stage1_ok
    assert result.feedback.startswith(LABEL_SYNTAX)


def test_unsupported_payload_type_rejected():
    env = spot_env(size=3)

    class Weird:
        pass

    prog = CandidateProgram(id="w", payload=SourceText("true"))
    object.__setattr__(prog, "payload", Weird())
    result = evaluate(prog, env)
    assert not result.stage1_ok
    assert result.feedback.startswith(LABEL_SYNTAX)
