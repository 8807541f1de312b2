"""Per-generation run records and their on-disk formats.

``history.jsonl`` holds one generation per line and contains no wall-clock
values, so reruns with the same config and seed are byte-identical.  Timing
lives in ``curves.csv`` and ``summary.json``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from gabigan.genome import Candidate

CURVE_COLUMNS = ("elapsed_seconds", "generation", "best_fitness", "mean_fitness", "mean_loss")


@dataclass
class GenerationRecord:
    generation: int
    candidates: list[Candidate]
    evaluations: int
    bigan_evaluations: int = 0
    elapsed_seconds: float = 0.0
    bigan: list[dict] = field(default_factory=list)
    # best candidate so far, for runs that do not keep every candidate
    incumbent: Optional[Candidate] = None
    summary: Optional[dict] = None

    def _scores(self) -> list[float]:
        return [c.fitness.accuracy for c in self.candidates]

    @property
    def best_fitness(self) -> float:
        """Best score in this generation, or of the incumbent when one is carried."""
        if self.summary is not None:
            return self.summary["best_fitness"]
        scores = self._scores()
        if self.incumbent is not None:
            scores.append(self.incumbent.fitness.accuracy)
        return max(scores)

    @property
    def mean_fitness(self) -> float:
        if self.summary is not None:
            return self.summary["mean_fitness"]
        return float(np.mean(self._scores()))

    @property
    def mean_loss(self) -> Optional[float]:
        if self.summary is not None:
            return self.summary.get("mean_loss")
        losses = [c.fitness.loss for c in self.candidates if c.fitness.loss is not None]
        return float(np.mean(losses)) if losses else None

    def best_candidate(self) -> Candidate:
        pool = list(self.candidates)
        if self.incumbent is not None:
            # the incumbent goes first so that it wins ties
            pool.insert(0, self.incumbent)
        return max(pool, key=lambda c: c.fitness.accuracy)

    def to_dict(self) -> dict[str, Any]:
        d = {
            "generation": self.generation,
            "best_fitness": self.best_fitness,
            "mean_fitness": self.mean_fitness,
            "mean_loss": self.mean_loss,
            "evaluations": self.evaluations,
            "bigan_evaluations": self.bigan_evaluations,
            "candidates": [c.to_dict(with_time=False) for c in self.candidates],
            "bigan": self.bigan,
        }
        if self.incumbent is not None:
            d["incumbent"] = self.incumbent.to_dict(with_time=False)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "GenerationRecord":
        inc = d.get("incumbent")
        cands = [Candidate.from_dict(c) for c in d["candidates"]]
        return cls(
            generation=d["generation"],
            candidates=cands,
            evaluations=d["evaluations"],
            bigan_evaluations=d.get("bigan_evaluations", 0),
            bigan=d.get("bigan", []),
            incumbent=None if inc is None else Candidate.from_dict(inc),
            summary=None if cands else {k: d[k] for k in
                                        ("best_fitness", "mean_fitness", "mean_loss")},
        )


@dataclass
class RunHistory:
    method: str
    config: dict[str, Any]
    records: list[GenerationRecord] = field(default_factory=list)
    total_seconds: float = 0.0

    def append(self, record: GenerationRecord) -> None:
        if self.records and record.generation <= self.records[-1].generation:
            raise ValueError("generation indices must increase")
        self.records.append(record)

    @property
    def total_evaluations(self) -> int:
        return sum(r.evaluations + r.bigan_evaluations for r in self.records)

    @property
    def best_fitness(self) -> float:
        return max(r.best_fitness for r in self.records) if self.records else 0.0

    def best_candidate(self) -> Optional[Candidate]:
        if not self.records:
            return None
        best = max(self.records, key=lambda r: r.best_fitness)
        return best.best_candidate()

    def running_best(self) -> list[float]:
        return list(np.maximum.accumulate([r.best_fitness for r in self.records]))

    def summary(self) -> dict[str, Any]:
        best = self.best_candidate()
        return {
            "method": self.method,
            "generations": len(self.records),
            "total_evaluations": self.total_evaluations,
            "total_seconds": self.total_seconds,
            "best_fitness": self.best_fitness,
            "best_candidate": None if best is None else best.to_dict(),
            "config": self.config,
        }

    def curve_rows(self) -> list[dict[str, Any]]:
        return [{"elapsed_seconds": r.elapsed_seconds, "generation": r.generation,
                 "best_fitness": r.best_fitness, "mean_fitness": r.mean_fitness,
                 "mean_loss": r.mean_loss} for r in self.records]

    # -- files -----------------------------------------------------------------

    def jsonl_lines(self) -> list[str]:
        return [json.dumps(r.to_dict(), sort_keys=True) for r in self.records]

    def write(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"history": out / "history.jsonl", "summary": out / "summary.json",
                 "curves": out / "curves.csv"}
        paths["history"].write_text("".join(line + "\n" for line in self.jsonl_lines()))
        paths["summary"].write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")
        with open(paths["curves"], "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=CURVE_COLUMNS)
            w.writeheader()
            for row in self.curve_rows():
                w.writerow({k: "" if v is None else v for k, v in row.items()})
        return paths

    @classmethod
    def read(cls, run_dir) -> "RunHistory":
        run_dir = Path(run_dir)
        hist = run_dir / "history.jsonl"
        if not hist.is_file():
            raise FileNotFoundError(f"no history found in {run_dir}")
        method, config = "unknown", {}
        summary = run_dir / "summary.json"
        if summary.is_file():
            s = json.loads(summary.read_text())
            method, config = s.get("method", method), s.get("config", {})
        records = []
        for n, line in enumerate(hist.read_text().splitlines(), start=1):
            if not line.strip():
                continue
            try:
                records.append(GenerationRecord.from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"corrupt history line {n}: {exc}") from exc
        if not records:
            raise ValueError(f"no history found in {run_dir}: history.jsonl is empty")
        return cls(method, config, records)
