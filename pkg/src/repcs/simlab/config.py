from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field

from ..errors import DomainError


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    trials: int = 10_000
    vocab: int = 50
    t_len: int = 16
    eta_grid: tuple = (0.0, 0.01, 0.05, 0.1, 0.2, 0.3, 0.5)
    gamma: float = 0.5
    delta: float = 0.3
    alpha: float = 0.05
    epsilon: float = 0.05
    batch_m: int = 100
    concentration: float = 5.0
    clean_eta: tuple = (0.5, 0.9)
    memorised_eta: tuple = (0.01, 0.1)
    repeats: int = 200
    pool_size: int = 100_000
    n_calibration: int = 500
    n_batches: int = 2_000
    adversary_queries: int = 500
    adversary_arms: int = 10
    minimax_instances: int = 50
    minimax_factor: float = 3.0
    confidence: float = 0.95
    hist_bins: int = 40
    chunk: int = 2_000
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "eta_grid", tuple(float(e) for e in self.eta_grid))
        object.__setattr__(self, "clean_eta", tuple(self.clean_eta))
        object.__setattr__(self, "memorised_eta", tuple(self.memorised_eta))
        if self.trials < 1 or self.repeats < 1 or self.chunk < 1:
            raise DomainError("trials, repeats and chunk must be positive")
        if not self.eta_grid:
            raise DomainError("eta_grid must be non-empty")
        if any(not 0.0 <= e <= 1.0 for e in self.eta_grid):
            raise DomainError("eta_grid values must lie in [0, 1]")
        if self.vocab < 2 or self.t_len < 1:
            raise DomainError("need vocab >= 2 and t_len >= 1")
        if not 0.0 < self.alpha < 1.0 or not 0.0 < self.epsilon < 1.0:
            raise DomainError("alpha and epsilon must lie in (0, 1)")
        if self.batch_m < 1:
            raise DomainError("batch_m must be at least 1")
        for lo, hi in (self.clean_eta, self.memorised_eta):
            if not 0.0 <= lo <= hi <= 1.0:
                raise DomainError("eta ranges must be ordered sub-intervals of [0, 1]")

    def to_dict(self):
        return asdict(self)


@dataclass
class PointResult:
    inputs: dict
    observed: dict
    bound: dict
    passed: bool
    informational: bool = False


@dataclass
class ExperimentReport:
    name: str
    config: ExperimentConfig
    points: list
    summary: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict, repr=False)

    @property
    def overall_pass(self):
        return all(p.passed for p in self.points if not p.informational)

    def to_dict(self):
        return {
            "name": self.name,
            "config": self.config.to_dict(),
            "overall_pass": self.overall_pass,
            "summary": self.summary,
            "points": [asdict(p) for p in self.points],
        }


def write_report(report, out_dir):
    """``<name>.json`` plus one CSV per table, the first being the figure data."""
    os.makedirs(out_dir, exist_ok=True)
    paths = [os.path.join(out_dir, f"{report.name}.json")]
    with open(paths[0], "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)
    for table, (header, rows) in report.tables.items():
        path = os.path.join(out_dir, f"{table}.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
        paths.append(path)
    return paths
