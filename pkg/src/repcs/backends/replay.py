"""JSON Lines replay of previously captured dual-path outputs.

One record per line::

    {"query_id": ..., "label": ..., "true_eta": ...?, "vocab_size": V,
     "length": T, "anchor": [...], "rag_probs": [...], "para_probs": [...]}

Probability arrays are the row-major flattening of the ``V x T`` matrix.  With
``"logprob": true`` they hold natural-log probabilities instead.
"""

from __future__ import annotations

import hashlib
import json
import os

from ..dist import TokenDistribution
from ..errors import ArgumentError, DimensionError, DomainError, ParseError
from .base import DualPathOutput, Label, QueryCase


def encode_record(case, out, logprob=False):
    rag = out.rag.to_record(logprob)
    para = out.parametric.to_record(logprob)
    rec = {"query_id": case.query_id, "label": case.label.value}
    if case.true_eta is not None:
        rec["true_eta"] = case.true_eta
    if case.prompt:
        rec["prompt"] = case.prompt
    if case.passages:
        rec["passages"] = list(case.passages)
    rec.update(
        vocab_size=out.rag.vocab_size,
        length=out.rag.length,
        anchor=list(out.anchor_tokens),
        rag_probs=rag["probs"],
        para_probs=para["probs"],
    )
    if logprob:
        rec["logprob"] = True
    return rec


def decode_record(rec):
    qid = rec.get("query_id")
    if not isinstance(qid, str):
        raise ArgumentError("record has no string query_id")
    case = QueryCase(
        query_id=qid,
        prompt=rec.get("prompt", ""),
        passages=tuple(rec.get("passages", ())),
        label=Label(rec.get("label", "unknown")),
        true_eta=rec.get("true_eta"),
    )
    try:
        rag = TokenDistribution.from_record(rec, key="rag_probs")
        para = TokenDistribution.from_record(rec, key="para_probs")
        out = DualPathOutput(rag, para, tuple(rec["anchor"]), meta={"source": "replay"})
    except DimensionError as exc:
        raise DimensionError(f"{qid}: {exc}") from None
    except KeyError as exc:
        raise ArgumentError(f"{qid}: missing field {exc.args[0]!r}") from None
    return case, out


def write_replay(path, stream, logprob=False):
    with open(path, "w") as fh:
        for case, out in stream:
            fh.write(json.dumps(encode_record(case, out, logprob)))
            fh.write("\n")


def replay_load(path):
    """Yield ``(QueryCase, DualPathOutput)`` pairs in file order."""
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", line=lineno) from None
            if not isinstance(rec, dict):
                raise ParseError("record is not a JSON object", line=lineno)
            try:
                yield decode_record(rec)
            except DimensionError as exc:
                raise DimensionError(f"line {lineno}: {exc}") from None
            except (DomainError, ArgumentError, ValueError) as exc:
                raise ParseError(str(exc), line=lineno) from None


class ReplayBackend:
    def __init__(self, path):
        self.path = os.fspath(path)
        self._records = {}
        self._order = []
        for case, out in replay_load(self.path):
            self._records[case.query_id] = out
            self._order.append(case)
        with open(self.path, "rb") as fh:
            self._digest = hashlib.sha256(fh.read()).hexdigest()[:16]

    @property
    def fingerprint(self):
        return f"replay:{os.path.basename(self.path)}:{self._digest}"

    def cases(self):
        return list(self._order)

    def dual_pass(self, case):
        try:
            return self._records[case.query_id]
        except KeyError:
            raise ArgumentError(f"{case.query_id}: not present in replay file {self.path}") from None
