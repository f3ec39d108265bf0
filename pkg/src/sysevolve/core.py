"""Shared domain-neutral types: scores, metrics, seeded randomness and the
candidate-program record used by every other module."""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from typing import Any, Optional, Union

import numpy as np


def clamp_score(raw: float) -> float:
    """Map an arbitrary real (or NaN/Inf) into the canonical [0, 1] score range.

    NaN and infinities collapse to 0.0 so a broken metric can never rank a
    candidate above a working one.
    """
    if not math.isfinite(raw):
        return 0.0
    return min(1.0, max(0.0, raw))


def validate_metrics(metrics: dict[str, float]) -> dict[str, float]:
    """Reject non-finite metric values; returns the dict unchanged if valid."""
    for name, value in metrics.items():
        if not math.isfinite(value):
            raise ValueError(f"metric {name!r} is not finite: {value!r}")
    return metrics


def derive_rng(seed: int, tag: str) -> np.random.Generator:
    """Deterministic per-component stream: same (seed, tag) => same draws.

    Components must never share a Generator instance; each derives its own.
    """
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, zlib.crc32(tag.encode())]))


@dataclass(frozen=True)
class ParamVector:
    """Named real parameters over a registered policy family, with bounds."""

    family: str
    values: dict[str, float]
    bounds: dict[str, tuple[float, float]]

    def clipped(self, values: dict[str, float]) -> "ParamVector":
        out = {}
        for name, v in values.items():
            lo, hi = self.bounds[name]
            out[name] = min(hi, max(lo, v))
        return ParamVector(self.family, out, self.bounds)


@dataclass(frozen=True)
class SourceText:
    """Opaque program text; the evaluator runs it through the stdio protocol."""

    text: str


Payload = Union[ParamVector, SourceText]


@dataclass
class CandidateProgram:
    """One evolvable program plus everything the storage layer knows about it."""

    id: str
    payload: Payload
    island: int = 0
    generation: int = 0
    parent_id: Optional[str] = None
    metrics: dict[str, float] = field(default_factory=dict)
    score: Optional[float] = None
    feedback: str = ""
    created_iteration: int = 0

    def __post_init__(self) -> None:
        if self.score is not None and not math.isfinite(self.score):
            raise ValueError("score must be finite")
        validate_metrics(self.metrics)

    @property
    def evaluated(self) -> bool:
        return self.score is not None

    def payload_length(self) -> int:
        """Length descriptor used for archive binning."""
        if isinstance(self.payload, SourceText):
            return len(self.payload.text)
        return len(self.payload.values)

    def to_record(self) -> dict[str, Any]:
        rec: dict[str, Any] = {
            "id": self.id,
            "island": self.island,
            "generation": self.generation,
            "parent_id": self.parent_id,
            "metrics": self.metrics,
            "score": self.score,
            "feedback": self.feedback,
            "created_iteration": self.created_iteration,
        }
        if isinstance(self.payload, SourceText):
            rec["payload"] = {"kind": "source", "text": self.payload.text}
        else:
            rec["payload"] = {
                "kind": "params",
                "family": self.payload.family,
                "values": self.payload.values,
                "bounds": {k: list(v) for k, v in self.payload.bounds.items()},
            }
        return rec

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> "CandidateProgram":
        p = rec["payload"]
        if p["kind"] == "source":
            payload: Payload = SourceText(p["text"])
        else:
            payload = ParamVector(
                p["family"], dict(p["values"]), {k: (v[0], v[1]) for k, v in p["bounds"].items()}
            )
        return cls(
            id=rec["id"],
            payload=payload,
            island=rec["island"],
            generation=rec["generation"],
            parent_id=rec.get("parent_id"),
            metrics=dict(rec.get("metrics", {})),
            score=rec.get("score"),
            feedback=rec.get("feedback", ""),
            created_iteration=rec.get("created_iteration", 0),
        )


def check_lineage(programs: list[CandidateProgram]) -> None:
    """Verify parent links form a forest over the given set (no cycles,
    no dangling parents)."""
    by_id = {p.id: p for p in programs}
    for p in programs:
        seen = set()
        cur: Optional[CandidateProgram] = p
        while cur is not None:
            if cur.id in seen:
                raise ValueError(f"lineage cycle through {cur.id}")
            seen.add(cur.id)
            if cur.parent_id is None:
                break
            if cur.parent_id not in by_id:
                raise ValueError(f"{cur.id} has unknown parent {cur.parent_id}")
            cur = by_id[cur.parent_id]
