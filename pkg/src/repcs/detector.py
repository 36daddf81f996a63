"""Per-query inference: dual pass, KL score, threshold decision."""

from __future__ import annotations

import enum
import json
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .backends.base import Label
from .calibrate import check_fingerprint
from .dist import KlScore, ScoreMode, kl_divergence
from .errors import ConfigurationError, RepcsError


class Decision(str, enum.Enum):
    MEMORISED = "memorised"
    GROUNDED = "grounded"


class BackendFailure(RepcsError):
    def __init__(self, query_id, cause):
        super().__init__(f"{query_id}: {type(cause).__name__}: {cause}")
        self.query_id = query_id
        self.cause = cause


def decide(z_total, tau):
    # strict: a score equal to tau counts as grounded
    return Decision.MEMORISED if z_total < tau else Decision.GROUNDED


@dataclass(frozen=True)
class ScoreRecord:
    query_id: str
    z: KlScore | None
    tau: float
    decision: Decision | None
    label: Label = Label.UNKNOWN
    rag_latency: float = 0.0
    para_latency: float = 0.0
    score_latency: float = 0.0
    warnings: tuple = ()

    @property
    def ok(self):
        return self.decision is not None

    @property
    def score(self):
        return None if self.z is None else self.z.total

    def to_dict(self):
        return {
            "query_id": self.query_id,
            "z": None if self.z is None else self.z.to_dict(),
            "tau": self.tau,
            "decision": None if self.decision is None else self.decision.value,
            "label": self.label.value,
            "rag_latency": self.rag_latency,
            "para_latency": self.para_latency,
            "score_latency": self.score_latency,
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            query_id=d["query_id"],
            z=None if d.get("z") is None else KlScore.from_dict(d["z"]),
            tau=float(d["tau"]),
            decision=None if d.get("decision") is None else Decision(d["decision"]),
            label=Label(d.get("label", "unknown")),
            rag_latency=float(d.get("rag_latency", 0.0)),
            para_latency=float(d.get("para_latency", 0.0)),
            score_latency=float(d.get("score_latency", 0.0)),
            warnings=tuple(d.get("warnings", ())),
        )


class RunLog:
    """Append-only JSONL log of score records; never overwrites an existing run."""

    def __init__(self, path):
        self.path = os.fspath(path)
        os.makedirs(os.path.dirname(os.path.abspath(self.path)), exist_ok=True)
        try:
            self._fh = open(self.path, "x")
        except FileExistsError:
            raise ConfigurationError(f"run log {self.path} already exists; choose a new run id") from None
        self._lock = threading.Lock()

    def append(self, record):
        line = json.dumps(record.to_dict())
        with self._lock:
            self._fh.write(line + "\n")
            self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_run_log(path):
    with open(path) as fh:
        return [ScoreRecord.from_dict(json.loads(line)) for line in fh if line.strip()]


def score_output(out, mode=ScoreMode.FULL_VOCAB):
    return kl_divergence(out.rag, out.parametric, mode, realized=out.anchor_tokens)


def _detect_one(case, backend, tau, mode):
    try:
        out = backend.dual_pass(case)
    except Exception as exc:
        raise BackendFailure(case.query_id, exc) from exc
    t0 = time.perf_counter()
    z = score_output(out, mode)
    score_latency = time.perf_counter() - t0
    return ScoreRecord(
        query_id=case.query_id,
        z=z,
        tau=tau,
        decision=decide(z.total, tau),
        label=case.label,
        rag_latency=out.rag_latency,
        para_latency=out.para_latency,
        score_latency=score_latency,
        warnings=tuple(out.warnings),
    )


def detect(case, backend, calib, mode=ScoreMode.FULL_VOCAB, run_log=None, force=False, tau=None):
    """Run one query through both paths and flag it if its score falls below tau.

    ``tau`` overrides the calibrated threshold (sensitivity sweeps).
    """
    check_fingerprint(calib, backend.fingerprint, force)
    record = _detect_one(case, backend, calib.tau if tau is None else tau, ScoreMode(mode))
    if run_log is not None:
        run_log.append(record)
    return record


def detect_batch(
    cases, backend, calib, mode=ScoreMode.FULL_VOCAB, concurrency=1, run_log=None, force=False, tau=None
):
    """Detect over many queries; output order follows input order.

    A query whose backend call fails yields a record with no decision and the
    error in ``warnings`` instead of aborting the batch.
    """
    check_fingerprint(calib, backend.fingerprint, force)
    tau = calib.tau if tau is None else tau
    mode = ScoreMode(mode)
    cases = list(cases)

    def run(case):
        try:
            return _detect_one(case, backend, tau, mode)
        except BackendFailure as exc:
            return ScoreRecord(case.query_id, None, tau, None, case.label, warnings=(f"error: {exc}",))

    records = []
    with ThreadPoolExecutor(max_workers=max(1, concurrency)) as pool:
        for rec in pool.map(run, cases):
            if run_log is not None:
                run_log.append(rec)
            records.append(rec)
    return records
