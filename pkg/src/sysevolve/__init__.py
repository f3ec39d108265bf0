"""Evolutionary search harness for systems policies, plus the deterministic
simulation environments it optimizes against."""

__version__ = "0.1.0"

from sysevolve.core import CandidateProgram, clamp_score, derive_rng

__all__ = ["CandidateProgram", "clamp_score", "derive_rng", "__version__"]
