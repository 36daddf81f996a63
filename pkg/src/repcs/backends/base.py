from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from ..dist import TokenDistribution
from ..errors import DimensionError, DomainError

DEFAULT_TOP_K_PASSAGES = 4


class Label(str, enum.Enum):
    CLEAN = "clean"
    CONTAMINATED = "contaminated"
    PARAPHRASED = "paraphrased"
    UNKNOWN = "unknown"

    @property
    def is_positive(self):
        """Contaminated and paraphrased queries are both memorisation to catch."""
        return self in (Label.CONTAMINATED, Label.PARAPHRASED)


@dataclass(frozen=True)
class QueryCase:
    query_id: str
    prompt: str = ""
    passages: tuple = ()
    label: Label = Label.UNKNOWN
    true_eta: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "label", Label(self.label))
        object.__setattr__(self, "passages", tuple(self.passages))
        if self.true_eta is not None and not 0.0 <= self.true_eta <= 1.0:
            raise DomainError(f"{self.query_id}: true_eta must lie in [0, 1]")


@dataclass(frozen=True)
class DualPathOutput:
    rag: TokenDistribution
    parametric: TokenDistribution
    anchor_tokens: tuple
    rag_latency: float = 0.0
    para_latency: float = 0.0
    warnings: tuple = ()
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.rag.shape != self.parametric.shape:
            raise DimensionError(f"path shapes differ: {self.rag.shape} vs {self.parametric.shape}")
        anchor = tuple(int(a) for a in self.anchor_tokens)
        if len(anchor) != self.rag.length:
            raise DimensionError(f"anchor has {len(anchor)} tokens, paths have T={self.rag.length}")
        if any(a < 0 or a >= self.rag.vocab_size for a in anchor):
            raise DomainError("anchor token index outside the vocabulary")
        object.__setattr__(self, "anchor_tokens", anchor)

    def same_paths(self, other):
        return (
            self.rag == other.rag
            and self.parametric == other.parametric
            and self.anchor_tokens == other.anchor_tokens
        )


def build_rag_prompt(prompt, passages, top_k=DEFAULT_TOP_K_PASSAGES):
    """Prepend up to ``top_k`` passages, each headed by ``[doc i]``, to the query."""
    parts = [f"[doc {i}]\n{text}\n" for i, text in enumerate(passages[:top_k], start=1)]
    return "".join(parts) + prompt


def greedy_anchor(dist):
    return tuple(int(i) for i in np.argmax(dist.probs, axis=0))
