"""Evolutionary search loop: prompt construction, pluggable candidate
generators (an HTTP chat-completion backend and a deterministic parameter
mutator), an island-structured archive keeping the best program per
(score bin, length bin) cell, and the iteration controller with
checkpoint/resume.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence

import numpy as np
import requests

from sysevolve.core import CandidateProgram, ParamVector, SourceText, derive_rng


class BudgetError(Exception):
    """The fixed prompt sections alone exceed the length budget."""


class EmptyIslandError(Exception):
    """Parent selection from an island with no programs."""


class GeneratorTimeout(Exception):
    """The backend did not produce a candidate within its time budget."""


class MalformedResponse(Exception):
    """The backend reply contained no usable code block."""


# failure labels shared with the evaluation harness
LABEL_SYNTAX = "Syntax & Interface Errors"
LABEL_BUDGET = "Budget Exhaustion"


@dataclass(frozen=True)
class Hint:
    """Guidance text that enters prompts from a given iteration onward."""

    iteration: int
    text: str


@dataclass(frozen=True)
class ProblemSpec:
    description: str
    objective: str
    constraints: str
    context: str
    region_begin: str = "# >>> EVOLVE"
    region_end: str = "# <<< EVOLVE"
    hints: tuple[Hint, ...] = ()

    def __post_init__(self) -> None:
        if self.region_begin == self.region_end:
            raise ValueError("region markers must be distinct")
        its = [h.iteration for h in self.hints]
        if its != sorted(its):
            raise ValueError("hints must be sorted by activation iteration")


@dataclass(frozen=True)
class Prompt:
    text: str


def _payload_text(program: CandidateProgram) -> str:
    if isinstance(program.payload, SourceText):
        return program.payload.text
    return json.dumps(program.payload.values, sort_keys=True)


def _program_section(title: str, program: CandidateProgram) -> str:
    return (
        f"## {title} (score={program.score}, metrics={json.dumps(program.metrics, sort_keys=True)})\n"
        f"{_payload_text(program)}\n"
    )


def build_prompt(
    spec: ProblemSpec,
    parent: CandidateProgram,
    inspirations: Sequence[CandidateProgram],
    feedback: str,
    iteration: int,
    budget: int = 16000,
) -> Prompt:
    """Deterministic prompt rendering. Inspirations are dropped lowest score
    first until the rendering fits the budget; the parent is never dropped."""
    if not parent.evaluated:
        raise ValueError("parent must be evaluated before prompting")
    head = (
        "# Problem\n"
        f"{spec.description}\n\n# Objective\n{spec.objective}\n\n"
        f"# Constraints\n{spec.constraints}\n\n# Environment\n{spec.context}\n\n"
    )
    active = [h.text for h in spec.hints if h.iteration <= iteration]
    if active:
        head += "# Hints\n" + "\n".join(active) + "\n\n"
    tail = (
        f"\n## Evaluator feedback\n{feedback}\n\n"
        "# Output format\n"
        "Reply with a single fenced code block containing the full replacement "
        f"for the region between {spec.region_begin!r} and {spec.region_end!r}.\n"
    )
    fixed = head + _program_section("Current program", parent) + tail
    if len(fixed) > budget:
        raise BudgetError(f"prompt base is {len(fixed)} chars, budget {budget}")

    keep = sorted(inspirations, key=lambda p: (p.score or 0.0), reverse=True)
    while keep:
        body = "".join(_program_section(f"Inspiration {i}", p) for i, p in enumerate(keep))
        if len(fixed) + len(body) <= budget:
            break
        keep.pop()  # lowest-scoring inspiration goes first
    body = "".join(_program_section(f"Inspiration {i}", p) for i, p in enumerate(keep))
    return Prompt(head + _program_section("Current program", parent) + body + tail)


# ---------------------------------------------------------------------------
# generator backends


class GeneratorBackend(Protocol):
    def generate(
        self, prompt: Prompt, parent: CandidateProgram, rng: np.random.Generator
    ) -> "SourceText | ParamVector": ...


_FENCE = re.compile(r"```[a-zA-Z0-9_+-]*\n(.*?)```", re.DOTALL)


def extract_code_block(reply: str) -> str:
    m = _FENCE.search(reply)
    if m is None:
        raise MalformedResponse("reply contains no fenced code block")
    return m.group(1)


def splice_region(source: str, spec: ProblemSpec, replacement: str) -> str:
    """Replace everything between the region markers (exclusive) with the
    replacement text."""
    begin = source.find(spec.region_begin)
    end = source.find(spec.region_end)
    if begin < 0 or end < 0 or end < begin:
        raise MalformedResponse("source does not contain a well-formed evolve region")
    begin += len(spec.region_begin)
    if not replacement.startswith("\n"):
        replacement = "\n" + replacement
    if not replacement.endswith("\n"):
        replacement = replacement + "\n"
    return source[:begin] + replacement + source[end:]


@dataclass(frozen=True)
class LLMModel:
    endpoint: str
    model: str
    weight: float
    api_key: str = ""


class LLMBackend:
    """Chat-completion ensemble: one member is sampled per call by weight, the
    first fenced code block of the reply replaces the evolve region."""

    def __init__(self, models: Sequence[LLMModel], spec: ProblemSpec, timeout: float = 120.0):
        if not models or any(m.weight <= 0 for m in models):
            raise ValueError("ensemble weights must be positive")
        total = sum(m.weight for m in models)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"ensemble weights must sum to 1, got {total}")
        self.models = tuple(models)
        self.spec = spec
        self.timeout = timeout

    def generate(
        self, prompt: Prompt, parent: CandidateProgram, rng: np.random.Generator
    ) -> SourceText:
        if not isinstance(parent.payload, SourceText):
            raise ValueError("LLM backend evolves source programs only")
        weights = np.array([m.weight for m in self.models])
        member = self.models[int(rng.choice(len(self.models), p=weights / weights.sum()))]
        headers = {"Content-Type": "application/json"}
        if member.api_key:
            headers["Authorization"] = f"Bearer {member.api_key}"
        try:
            resp = requests.post(
                member.endpoint.rstrip("/") + "/chat/completions",
                json={
                    "model": member.model,
                    "messages": [{"role": "user", "content": prompt.text}],
                },
                headers=headers,
                timeout=self.timeout,
            )
            resp.raise_for_status()
        except requests.Timeout as exc:
            raise GeneratorTimeout(str(exc)) from exc
        except requests.RequestException as exc:
            raise MalformedResponse(f"backend request failed: {exc}") from exc
        try:
            reply = resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise MalformedResponse(f"unexpected completion payload: {exc}") from exc
        block = extract_code_block(reply)
        return SourceText(splice_region(parent.payload.text, self.spec, block))


class MutationBackend:
    """Seeded Gaussian perturbation of a parameter-vector program. Noise is
    scaled per parameter by its bound range and clipped back into bounds."""

    def __init__(self, family: str, scale: float = 0.1):
        if scale < 0:
            raise ValueError("perturbation scale must be >= 0")
        self.family = family
        self.scale = scale

    def generate(
        self, prompt: Prompt, parent: CandidateProgram, rng: np.random.Generator
    ) -> ParamVector:
        if not isinstance(parent.payload, ParamVector):
            raise ValueError("mutation backend evolves parameter vectors only")
        vec = parent.payload
        if vec.family != self.family:
            raise ValueError(f"expected family {self.family!r}, got {vec.family!r}")
        child = {}
        for name in sorted(vec.values):
            lo, hi = vec.bounds[name]
            child[name] = vec.values[name] + float(rng.normal(0.0, self.scale)) * (hi - lo)
        return vec.clipped(child)


# ---------------------------------------------------------------------------
# program database


@dataclass(frozen=True)
class ArchiveConfig:
    num_islands: int = 4
    score_bins: int = 10
    length_bins: int = 10
    length_bin_width: int = 200


class ProgramDatabase:
    """Islands of MAP-Elites grids keyed by (score bin, length bin); each cell
    keeps the single best program seen for that cell."""

    def __init__(self, config: ArchiveConfig):
        if config.num_islands < 1:
            raise ValueError("need at least one island")
        self.config = config
        self.islands: list[dict[tuple[int, int], CandidateProgram]] = [
            {} for _ in range(config.num_islands)
        ]
        self.best: Optional[CandidateProgram] = None

    def cell_of(self, program: CandidateProgram) -> tuple[int, int]:
        score = program.score or 0.0
        sbin = min(self.config.score_bins - 1, int(score * self.config.score_bins))
        lbin = min(
            self.config.length_bins - 1,
            program.payload_length() // self.config.length_bin_width,
        )
        return (sbin, lbin)

    def insert(self, program: CandidateProgram) -> str:
        """Returns 'inserted', 'replaced', or 'rejected' (strict improvement
        is required to evict an occupant)."""
        if not program.evaluated:
            raise ValueError("only evaluated programs enter the archive")
        island = self.islands[program.island]
        cell = self.cell_of(program)
        occupant = island.get(cell)
        if occupant is None:
            island[cell] = program
            outcome = "inserted"
        elif (program.score or 0.0) > (occupant.score or 0.0):
            island[cell] = program
            outcome = "replaced"
        else:
            return "rejected"
        if self.best is None or (program.score or 0.0) > (self.best.score or 0.0):
            self.best = program
        return outcome

    def island_best(self, island: int) -> CandidateProgram:
        cells = self.islands[island]
        if not cells:
            raise EmptyIslandError(f"island {island} is empty")
        return max(cells.values(), key=lambda p: (p.score or 0.0, p.id))

    def select_parent(
        self, island: int, rng: np.random.Generator, epsilon: float, k: int
    ) -> tuple[CandidateProgram, list[CandidateProgram]]:
        """Epsilon-greedy parent choice plus the global top-k as inspirations."""
        cells = self.islands[island]
        if not cells:
            raise EmptyIslandError(f"island {island} is empty")
        if rng.random() < epsilon:
            keys = sorted(cells)
            parent = cells[keys[int(rng.integers(len(keys)))]]
        else:
            parent = self.island_best(island)
        pool = [p for isl in self.islands for p in isl.values() if p.id != parent.id]
        pool.sort(key=lambda p: ((p.score or 0.0), p.id), reverse=True)
        return parent, pool[:k]

    def migrate(self) -> None:
        """Copy each island's best into the next island on the ring."""
        n = self.config.num_islands
        if n == 1:
            return
        bests = []
        for i in range(n):
            try:
                bests.append(self.island_best(i))
            except EmptyIslandError:
                bests.append(None)
        for i, b in enumerate(bests):
            if b is None:
                continue
            target = (i + 1) % n
            self.insert(replace(b, island=target))

    def all_programs(self) -> list[CandidateProgram]:
        return [p for isl in self.islands for p in isl.values()]


# ---------------------------------------------------------------------------
# iteration controller


class EvaluationLike(Protocol):
    stage1_ok: bool
    score: float
    metrics: dict[str, float]
    feedback: str


Evaluator = Callable[[CandidateProgram, str], "EvaluationLike"]


@dataclass(frozen=True)
class EvolutionConfig:
    iterations: int
    seed: int
    num_islands: int = 4
    epsilon: float = 0.3
    score_bins: int = 10
    length_bins: int = 10
    inspiration_count: int = 3
    migration_interval: int = 20
    checkpoint_interval: int = 50
    checkpoint_dir: Optional[str] = None
    prompt_budget: int = 16000
    target_score: Optional[float] = None
    workers: int = 1

    def fingerprint(self) -> str:
        """Hash of the trajectory-determining fields only; run length,
        checkpoint cadence and stop conditions may change across resumes."""
        relevant = (
            "seed", "num_islands", "epsilon", "score_bins", "length_bins",
            "inspiration_count", "migration_interval", "prompt_budget", "workers",
        )
        payload = json.dumps({k: getattr(self, k) for k in relevant}, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass
class IterationRecord:
    iteration: int
    island: int
    program: CandidateProgram
    outcome: str  # archive placement or a failure label
    best_score: float

    def to_record(self) -> dict:
        return {
            "iteration": self.iteration,
            "island": self.island,
            "outcome": self.outcome,
            "best_score": self.best_score,
            "program": self.program.to_record(),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "IterationRecord":
        return cls(
            iteration=rec["iteration"],
            island=rec["island"],
            program=CandidateProgram.from_record(rec["program"]),
            outcome=rec["outcome"],
            best_score=rec["best_score"],
        )


@dataclass
class EvolutionResult:
    best: CandidateProgram
    history: list[IterationRecord]
    database: ProgramDatabase


def _write_checkpoint(
    path: Path, config: EvolutionConfig, history: list[IterationRecord], iteration: int
) -> None:
    path.mkdir(parents=True, exist_ok=True)
    with open(path / "history.jsonl", "w") as f:
        for rec in history:
            f.write(json.dumps(rec.to_record(), sort_keys=True) + "\n")
    with open(path / "manifest.json", "w") as f:
        json.dump(
            {"config_fingerprint": config.fingerprint(), "iteration": iteration,
             "seed": config.seed},
            f,
            sort_keys=True,
        )


def load_checkpoint(path: str | Path, config: EvolutionConfig) -> tuple[list[IterationRecord], int]:
    """Returns (history, next iteration); refuses checkpoints from a different
    configuration."""
    path = Path(path)
    with open(path / "manifest.json") as f:
        manifest = json.load(f)
    if manifest["config_fingerprint"] != config.fingerprint():
        raise ValueError("checkpoint was produced by a different configuration")
    history = []
    with open(path / "history.jsonl") as f:
        for line in f:
            history.append(IterationRecord.from_record(json.loads(line)))
    return history, manifest["iteration"] + 1


def run_evolution(
    spec: ProblemSpec,
    initial: CandidateProgram,
    backend: GeneratorBackend,
    evaluator: Evaluator,
    config: EvolutionConfig,
    resume_from: Optional[str] = None,
) -> EvolutionResult:
    """Round-robin island loop: select, prompt, generate, evaluate, insert;
    failed generations consume an iteration and enter history with score 0 and
    a failure label. Deterministic per (seed, config) at worker budget 1."""
    db = ProgramDatabase(
        ArchiveConfig(
            num_islands=config.num_islands,
            score_bins=config.score_bins,
            length_bins=config.length_bins,
        )
    )

    seed_eval = evaluator(initial, "feedback")
    if not seed_eval.stage1_ok:
        raise RuntimeError(f"initial program failed evaluation: {seed_eval.feedback}")
    for island in range(config.num_islands):
        clone = replace(
            initial,
            id=f"{initial.id}-i{island}",
            island=island,
            score=seed_eval.score,
            metrics=dict(seed_eval.metrics),
            feedback=seed_eval.feedback,
        )
        db.insert(clone)

    history: list[IterationRecord] = []
    start_iteration = 0
    if resume_from is not None:
        history, start_iteration = load_checkpoint(resume_from, config)
        # replay archive state in iteration order so migrations see the same
        # island contents they saw in the original run
        for rec in history:
            if rec.outcome in ("inserted", "replaced", "rejected"):
                db.insert(rec.program)
            if (rec.iteration + 1) % config.migration_interval == 0:
                db.migrate()

    checkpoint_dir = Path(config.checkpoint_dir) if config.checkpoint_dir else None

    for iteration in range(start_iteration, config.iterations):
        rng = derive_rng(config.seed, f"iter_{iteration}")
        island = iteration % config.num_islands
        parent, inspirations = db.select_parent(
            island, rng, config.epsilon, config.inspiration_count
        )
        prompt = build_prompt(
            spec, parent, inspirations, parent.feedback, iteration, config.prompt_budget
        )
        child_id = f"g{iteration}-{island}"
        try:
            payload = backend.generate(prompt, parent, rng)
        except (GeneratorTimeout, MalformedResponse) as exc:
            label = LABEL_BUDGET if isinstance(exc, GeneratorTimeout) else LABEL_SYNTAX
            child = replace(
                parent, id=child_id, parent_id=parent.id, island=island, score=0.0,
                metrics={}, feedback=f"{label}: {exc}",
                generation=parent.generation + 1, created_iteration=iteration,
            )
            outcome = label
        else:
            child = CandidateProgram(
                id=child_id,
                payload=payload,
                island=island,
                generation=parent.generation + 1,
                parent_id=parent.id,
                created_iteration=iteration,
            )
            result = evaluator(child, "feedback")
            child.score = result.score if result.stage1_ok else 0.0
            child.metrics = dict(result.metrics)
            child.feedback = result.feedback
            if result.stage1_ok:
                outcome = db.insert(child)
            else:
                outcome = result.feedback.split(":", 1)[0] or LABEL_SYNTAX
        history.append(IterationRecord(iteration, island, child, outcome,
                                       db.best.score if db.best else 0.0))

        if (iteration + 1) % config.migration_interval == 0:
            db.migrate()
        if checkpoint_dir and (iteration + 1) % config.checkpoint_interval == 0:
            _write_checkpoint(checkpoint_dir, config, history, iteration)
        if config.target_score is not None and db.best and (
            db.best.score or 0.0
        ) >= config.target_score:
            break

    if checkpoint_dir:
        _write_checkpoint(checkpoint_dir, config, history,
                          history[-1].iteration if history else -1)
    assert db.best is not None
    return EvolutionResult(best=db.best, history=history, database=db)
