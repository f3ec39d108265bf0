"""Command-line front door: evaluate policies or external candidates on an
environment suite, run the evolution loop, and build comparison reports.

Exit codes: 0 success, 1 usage or configuration error, 2 hard-constraint
violation, 3 generator-backend failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path
from typing import Any, Optional

import yaml

from sysevolve import eval_harness
from sysevolve.core import CandidateProgram, SourceText
from sysevolve.evolve import (
    EvolutionConfig,
    Hint,
    LLMBackend,
    LLMModel,
    MutationBackend,
    ProblemSpec,
    run_evolution,
)
from sysevolve.spot_single import AdaptiveParams

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONSTRAINT = 2
EXIT_BACKEND = 3

API_KEY_VAR = "SYSEVOLVE_API_KEY"


def _load_config(path: Optional[str]) -> dict[str, Any]:
    if path is None:
        return {}
    try:
        with open(path) as f:
            data = yaml.safe_load(f) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise SystemExit(f"cannot read config {path}: {exc}")
    if not isinstance(data, dict):
        raise SystemExit(f"config {path} must be a mapping")
    return data


def _setting(args: argparse.Namespace, config: dict, name: str, default=None):
    """Precedence: command-line flag > config file > default."""
    value = getattr(args, name, None)
    if value is not None:
        return value
    if name in config:
        return config[name]
    return default


def _write_jsonl(path: Path, records: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True) + "\n")


def _print_table(rows: list[dict]) -> None:
    if not rows:
        return
    cols = list(rows[0])
    widths = {c: max(len(c), *(len(str(r.get(c, ""))) for r in rows)) for c in cols}
    print("  ".join(c.ljust(widths[c]) for c in cols))
    for r in rows:
        print("  ".join(str(r.get(c, "")).ljust(widths[c]) for c in cols))


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args: argparse.Namespace, config: dict) -> int:
    env_id = _setting(args, config, "env")
    seed = _setting(args, config, "seed")
    if env_id is None or seed is None:
        print("eval requires --env and --seed", file=sys.stderr)
        return EXIT_USAGE
    policy = _setting(args, config, "policy")
    candidate = _setting(args, config, "candidate")
    if (policy is None) == (candidate is None):
        print("eval requires exactly one of --policy or --candidate", file=sys.stderr)
        return EXIT_USAGE
    out_dir = Path(_setting(args, config, "out", "runs"))
    try:
        env = eval_harness.build_environment(env_id, int(seed))
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    if policy is not None:
        try:
            result = eval_harness.evaluate_policy(env, policy, mode="full")
        except ValueError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        name = policy
    else:
        prog = CandidateProgram(id="cli-candidate", payload=SourceText(candidate))
        result = eval_harness.evaluate(prog, env, mode="full")
        name = Path(candidate.split()[0]).name

    record = {
        "env": env_id,
        "policy": name,
        "seed": int(seed),
        "score": result.score,
        "metrics": result.metrics,
        "mean": result.mean,
        "deviation": result.deviation,
        "count": result.count,
        "feedback": result.feedback,
    }
    _write_jsonl(out_dir / f"eval_{env_id}_{name}_{seed}.jsonl", [record])
    _print_table([
        {"env": env_id, "policy": name, "score": f"{result.score:.4f}",
         "mean": f"{result.mean:.4f}", "deviation": f"{result.deviation:.4f}",
         "count": result.count}
    ])
    print(result.feedback)
    violated = result.score == 0.0 and any(
        label in result.feedback for label in eval_harness.FAILURE_LABELS
    )
    if not result.stage1_ok or violated:
        return EXIT_CONSTRAINT
    return EXIT_OK


# ---------------------------------------------------------------------------
# evolve


def _load_hints(path: Optional[str]) -> tuple[Hint, ...]:
    if path is None:
        return ()
    hints = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            hints.append(Hint(iteration=int(rec["iteration"]), text=str(rec["text"])))
    return tuple(sorted(hints, key=lambda h: h.iteration))


def _spot_problem_spec(hints: tuple[Hint, ...]) -> ProblemSpec:
    return ProblemSpec(
        description="Schedule a deadline-constrained job across spot and "
        "on-demand capacity with a changeover delay on every (re)start.",
        objective="Maximize average cost savings versus the uniform-progress "
        "baseline while meeting every deadline.",
        constraints="All deadlines must be met; occupying spot requires "
        "availability at that tick.",
        context="Parameters control the availability window, stability "
        "thresholds, lock/unlock margins and dwell ticks of the adaptive "
        "policy.",
        hints=hints,
    )


def cmd_evolve(args: argparse.Namespace, config: dict) -> int:
    env_id = _setting(args, config, "env", "spot_single")
    seed = _setting(args, config, "seed")
    if seed is None:
        print("evolve requires --seed", file=sys.stderr)
        return EXIT_USAGE
    backend_kind = _setting(args, config, "backend", "mutation")
    iterations = int(_setting(args, config, "iterations", 100))
    islands = int(_setting(args, config, "islands", 4))
    workers = int(_setting(args, config, "workers", 1))
    out_dir = Path(_setting(args, config, "out", "runs")) / f"evolve_{env_id}_{seed}"
    hints = _load_hints(_setting(args, config, "hint_file"))
    spec = _spot_problem_spec(hints)

    env = eval_harness.build_environment(env_id, int(seed))

    if backend_kind == "mutation":
        if env_id != "spot_single":
            print("the mutation backend evolves the spot_single parameter family",
                  file=sys.stderr)
            return EXIT_USAGE
        backend = MutationBackend("spot_adaptive", scale=float(
            _setting(args, config, "scale", 0.1)
        ))
        initial = CandidateProgram(id="seed", payload=AdaptiveParams().to_param_vector())
    elif backend_kind == "llm":
        endpoint = _setting(args, config, "endpoint")
        if endpoint is None:
            print("the llm backend requires --endpoint", file=sys.stderr)
            return EXIT_USAGE
        candidate = _setting(args, config, "candidate")
        if candidate is None:
            print("the llm backend requires --candidate (initial program path)",
                  file=sys.stderr)
            return EXIT_USAGE
        backend = LLMBackend(
            [LLMModel(endpoint=endpoint, model=_setting(args, config, "model", "default"),
                      weight=1.0, api_key=os.environ.get(API_KEY_VAR, ""))],
            spec,
        )
        initial = CandidateProgram(id="seed", payload=SourceText(Path(candidate).read_text()))
    else:
        print(f"unknown backend {backend_kind!r}", file=sys.stderr)
        return EXIT_USAGE

    evo_config = EvolutionConfig(
        iterations=iterations,
        seed=int(seed),
        num_islands=islands,
        workers=workers,
        checkpoint_dir=str(out_dir),
    )

    def evaluator(candidate: CandidateProgram, mode: str):
        return eval_harness.evaluate(candidate, env, mode)

    try:
        result = run_evolution(
            spec, initial, backend, evaluator, evo_config,
            resume_from=_setting(args, config, "resume"),
        )
    except RuntimeError as exc:
        print(f"evolution aborted: {exc}", file=sys.stderr)
        return EXIT_CONSTRAINT
    except (ConnectionError, OSError) as exc:
        print(f"backend failure: {exc}", file=sys.stderr)
        return EXIT_BACKEND

    for rec in result.history:
        print(f"iteration {rec.iteration:4d} island {rec.island} "
              f"outcome {rec.outcome:12s} best {rec.best_score:.4f}")
    best = result.best
    print(f"best program {best.id} score {best.score:.4f}")
    _write_jsonl(out_dir / "best.jsonl", [best.to_record()])
    return EXIT_OK


# ---------------------------------------------------------------------------
# report


def cmd_report(args: argparse.Namespace, config: dict) -> int:
    run_dir = Path(_setting(args, config, "runs", "runs"))
    if not run_dir.is_dir():
        print(f"no run directory at {run_dir}", file=sys.stderr)
        return EXIT_USAGE
    records = []
    for path in sorted(run_dir.glob("eval_*.jsonl")):
        with open(path) as f:
            for line in f:
                records.append(json.loads(line))
    if not records:
        print(f"no eval records under {run_dir}", file=sys.stderr)
        return EXIT_USAGE

    by_env: dict[str, list[dict]] = {}
    for rec in records:
        by_env.setdefault(rec["env"], []).append(rec)

    rows = []
    for env_id, recs in sorted(by_env.items()):
        baseline = recs[0]
        for rec in recs:
            delta = rec["score"] - baseline["score"]
            rows.append({
                "env": env_id,
                "policy": rec["policy"],
                "score": f"{rec['score']:.4f}",
                "delta_vs_first": f"{delta:+.4f}",
                "mean": f"{rec['mean']:.4f}",
                "count": rec["count"],
            })
    _print_table(rows)

    out_csv = run_dir / "comparison.csv"
    with open(out_csv, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {out_csv}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sysevolve",
        description="Evaluate scheduling policies and evolve new ones.",
    )
    parser.add_argument("--config", help="YAML config file; flags override it")
    sub = parser.add_subparsers(dest="command", required=True)

    p_eval = sub.add_parser("eval", help="run a policy or candidate on a suite")
    p_eval.add_argument("--env", choices=eval_harness.ENV_IDS)
    p_eval.add_argument("--policy")
    p_eval.add_argument("--candidate", help="external candidate command line")
    p_eval.add_argument("--seed", type=int)
    p_eval.add_argument("--out")

    p_evo = sub.add_parser("evolve", help="run the evolution loop")
    p_evo.add_argument("--env", choices=eval_harness.ENV_IDS)
    p_evo.add_argument("--seed", type=int)
    p_evo.add_argument("--iterations", type=int)
    p_evo.add_argument("--islands", type=int)
    p_evo.add_argument("--backend", choices=["llm", "mutation"])
    p_evo.add_argument("--endpoint")
    p_evo.add_argument("--model")
    p_evo.add_argument("--candidate", help="initial program file for the llm backend")
    p_evo.add_argument("--workers", type=int)
    p_evo.add_argument("--hint-file", dest="hint_file")
    p_evo.add_argument("--resume", help="checkpoint directory to continue from")
    p_evo.add_argument("--scale", type=float, help="mutation scale")
    p_evo.add_argument("--out")

    p_rep = sub.add_parser("report", help="summarize eval runs")
    p_rep.add_argument("--runs", help="directory containing eval_*.jsonl")

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args.config)
    except SystemExit as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    handlers = {"eval": cmd_eval, "evolve": cmd_evolve, "report": cmd_report}
    return handlers[args.command](args, config)


if __name__ == "__main__":
    sys.exit(main())
