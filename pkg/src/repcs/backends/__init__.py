"""Sources of paired retrieval-augmented / parametric token distributions.

A backend is any object with a ``fingerprint`` string and a
``dual_pass(case) -> DualPathOutput`` method.
"""

from .base import DualPathOutput, Label, QueryCase, build_rag_prompt
from .http import HttpBackend
from .replay import ReplayBackend, replay_load, write_replay
from .synthetic import SyntheticBackend, make_population, synthetic_generate

__all__ = [
    "DualPathOutput",
    "HttpBackend",
    "Label",
    "QueryCase",
    "ReplayBackend",
    "SyntheticBackend",
    "build_rag_prompt",
    "make_population",
    "replay_load",
    "synthetic_generate",
    "write_replay",
]
