"""Live dual pass against a completions endpoint that returns top-k log-probs.

Pass 1 decodes greedily from the retrieval-augmented prompt and records the
anchor tokens.  Pass 2 sends the bare prompt followed by the anchor text with
``echo`` and ``max_tokens=0`` so the server scores the anchor under the
parametric path (teacher forcing).  Public APIs expose only the top-k
alternatives per position, so both paths are projected onto the union of
returned tokens plus one residual bucket.
"""

from __future__ import annotations

import math
import os
import threading
import time

import httpx
import numpy as np

from ..dist import TokenDistribution
from ..errors import CapabilityError, TransportError
from .base import DEFAULT_TOP_K_PASSAGES, DualPathOutput, build_rag_prompt

OTHER_TOKEN = "<other>"


def _logprobs_block(payload):
    try:
        choice = payload["choices"][0]
    except (KeyError, IndexError, TypeError):
        raise CapabilityError("response has no choices") from None
    lp = choice.get("logprobs")
    if not lp or "tokens" not in lp or "top_logprobs" not in lp:
        raise CapabilityError("endpoint did not return per-token log-probabilities")
    return lp


def project(columns, vocab):
    """Map per-position ``{token: logprob}`` dicts onto a fixed token list.

    Mass not covered by the returned alternatives is spread evenly over the
    vocabulary tokens this path did not report at that position (those that
    another path or position did report) and the trailing residual bucket.
    """
    index = {tok: i for i, tok in enumerate(vocab)}
    other = index[OTHER_TOKEN]
    mat = np.zeros((len(vocab), len(columns)))
    for t, (known, seen) in enumerate(columns):
        for tok, lp in known.items():
            mat[index[tok], t] = math.exp(lp)
        total = mat[:, t].sum()
        if total > 1.0:
            mat[:, t] /= total
            continue
        missing = [index[tok] for tok in seen if tok not in known]
        share = (1.0 - total) / (len(missing) + 1)
        mat[missing, t] = share
        mat[other, t] = share
    return mat


class HttpBackend:
    def __init__(
        self,
        endpoint,
        model,
        t_len=64,
        top_logprobs=5,
        timeout=30.0,
        completions_path="/v1/completions",
        api_key_env="REPCS_API_KEY",
        top_k_passages=DEFAULT_TOP_K_PASSAGES,
        max_in_flight=4,
        client=None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.t_len = t_len
        self.top_logprobs = top_logprobs
        self.timeout = timeout
        self.completions_path = completions_path
        self.api_key_env = api_key_env
        self.top_k_passages = top_k_passages
        self._client = client or httpx.Client(timeout=timeout)
        self._slots = threading.BoundedSemaphore(max_in_flight)

    @property
    def fingerprint(self):
        return f"http:{self.model}@{self.endpoint}"

    def _post(self, body):
        headers = {}
        key = os.environ.get(self.api_key_env) if self.api_key_env else None
        if key:
            headers["Authorization"] = f"Bearer {key}"
        url = self.endpoint + self.completions_path
        with self._slots:
            try:
                resp = self._client.post(url, json=body, headers=headers, timeout=self.timeout)
            except httpx.TimeoutException as exc:
                raise TransportError(f"timeout after {self.timeout}s: {exc}") from exc
            except httpx.TransportError as exc:
                raise TransportError(str(exc)) from exc
        if resp.status_code >= 500 or resp.status_code == 429:
            raise TransportError(f"server returned {resp.status_code}")
        if resp.status_code >= 400:
            raise CapabilityError(f"request rejected ({resp.status_code}): {resp.text[:200]}")
        return resp.json()

    def generate(self, prompt):
        """Greedy decode of ``t_len`` tokens with top-k log-probs."""
        body = {
            "model": self.model,
            "prompt": prompt,
            "max_tokens": self.t_len,
            "temperature": 0,
            "logprobs": self.top_logprobs,
        }
        return _logprobs_block(self._post(body))

    def score(self, prompt, continuation):
        """Teacher-forced log-probs of ``continuation`` after ``prompt``."""
        body = {
            "model": self.model,
            "prompt": prompt + continuation,
            "max_tokens": 0,
            "temperature": 0,
            "logprobs": self.top_logprobs,
            "echo": True,
        }
        return _logprobs_block(self._post(body))

    def dual_pass(self, case):
        t0 = time.perf_counter()
        first = self.generate(build_rag_prompt(case.prompt, case.passages, self.top_k_passages))
        t1 = time.perf_counter()
        anchor = list(first["tokens"][: self.t_len])
        if not anchor:
            raise CapabilityError(f"{case.query_id}: retrieval-augmented pass produced no tokens")
        second = self.score(case.prompt, "".join(anchor))
        t2 = time.perf_counter()

        t = len(anchor)
        warnings = []
        rag_cols = _columns(first, slice(0, t))
        para_tokens = second["tokens"][-t:]
        para_cols = _columns(second, slice(len(second["tokens"]) - t, None))
        if len(para_cols) != t or list(para_tokens) != anchor:
            warnings.append("teacher-forced tokens do not align with the anchor")
        for pos, tok in enumerate(anchor):
            tops = second["top_logprobs"][len(second["tokens"]) - t + pos] or {}
            if tok not in tops:
                warnings.append(f"degraded coverage: anchor token {pos} absent from parametric alternatives")
                break

        vocab = []
        seen_vocab = set()
        for cols in (rag_cols, para_cols):
            for known in cols:
                for tok in known:
                    if tok not in seen_vocab:
                        seen_vocab.add(tok)
                        vocab.append(tok)
        vocab.append(OTHER_TOKEN)
        union_at = [set(a) | set(b) for a, b in zip(rag_cols, para_cols)]
        rag = TokenDistribution.from_probs(project(list(zip(rag_cols, union_at)), vocab))
        para = TokenDistribution.from_probs(project(list(zip(para_cols, union_at)), vocab))
        index = {tok: i for i, tok in enumerate(vocab)}
        return DualPathOutput(
            rag=rag,
            parametric=para,
            anchor_tokens=tuple(index[tok] for tok in anchor),
            rag_latency=t1 - t0,
            para_latency=t2 - t1,
            warnings=tuple(warnings),
            meta={"source": "http", "projection": "topk-union+other", "vocab": vocab},
        )


def _columns(block, sl):
    """Per-position ``{token: logprob}`` including the realized token itself."""
    tokens = block["tokens"][sl]
    tops = block["top_logprobs"][sl]
    realized = (block.get("token_logprobs") or [None] * len(block["tokens"]))[sl]
    cols = []
    for tok, top, lp in zip(tokens, tops, realized):
        col = {k: float(v) for k, v in (top or {}).items()}
        if lp is not None and tok not in col:
            col[tok] = float(lp)
        cols.append(col)
    return cols
