"""Held-out obstacle suite: 20 families, each instantiated at 10 difficulty levels."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from .compiler import DEFAULT_GRID, CompiledTerrain, compile_program
from .curriculum import level_to_difficulty
from .dsl import TerrainProgram, parse_program
from .instances import LEVELS
from .sim import SkillVector, goals_reached, rollout
from .trainer import SkillPolicy

FAMILIES = (
    "box_climb", "forward_ramp", "sideways_ramp", "a_frame", "box_jump", "stepping_stones",
    "staircase_up", "staircase_down", "narrow_passage", "agility_poles", "balance_beam", "gap_cross",
    "hurdle", "platform_jump_down", "platform_jump_up", "slope_traverse", "zigzag_walls",
    "mixed_ramp_box", "double_gap", "beam_sequence",
)


@dataclass(frozen=True)
class BenchmarkSuite:
    obstacles: tuple[TerrainProgram, ...]
    terrains: tuple[tuple[CompiledTerrain, ...], ...]  # [family][level - 1]

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.obstacles]

    def __len__(self) -> int:
        return sum(len(row) for row in self.terrains)


def benchmark_source(name: str) -> str:
    return resources.files("terraverse.data.benchmark").joinpath(f"{name}.terrain").read_text("utf-8")


@lru_cache(maxsize=1)
def build_benchmark() -> BenchmarkSuite:
    """Benchmark terrains are compiled as written; they are never auto-fixed or shown to a generator."""
    programs = tuple(parse_program(benchmark_source(n)) for n in FAMILIES)
    terrains = tuple(
        tuple(compile_program(p, level_to_difficulty(k), DEFAULT_GRID) for k in LEVELS) for p in programs
    )
    return BenchmarkSuite(programs, terrains)


@dataclass
class BenchmarkResult:
    families: list[str]
    goals: np.ndarray  # (families, levels)
    steps: np.ndarray
    edge_violations: np.ndarray

    @property
    def mean(self) -> float:
        return float(self.goals.mean())

    def auc(self) -> dict[str, float]:
        """Normalized area under each family's goals-vs-level curve (trapezoid rule, 1.0 = all goals)."""
        x = np.linspace(0.0, 1.0, self.goals.shape[1])
        return {f: float(np.trapezoid(row, x) / 8.0) for f, row in zip(self.families, self.goals)}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["family", "level", "goals", "steps", "edge_violations"])
        for i, fam in enumerate(self.families):
            for k in range(self.goals.shape[1]):
                w.writerow([fam, k + 1, int(self.goals[i, k]), int(self.steps[i, k]), int(self.edge_violations[i, k])])
        return buf.getvalue()

    def summary(self) -> dict:
        return {"mean": self.mean, "auc": self.auc(),
                "per_family_mean": {f: float(r.mean()) for f, r in zip(self.families, self.goals)}}

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


def _skill(p) -> SkillVector:
    return p.mean if isinstance(p, SkillPolicy) else p


def evaluate_benchmark(p, suite: BenchmarkSuite = None) -> BenchmarkResult:
    suite = suite or build_benchmark()
    s = _skill(p)
    shape = (len(suite.obstacles), len(LEVELS))
    goals, steps, ev = np.zeros(shape), np.zeros(shape), np.zeros(shape)
    for i, row in enumerate(suite.terrains):
        for k, t in enumerate(row):
            r = rollout(t, s, with_path=False)
            goals[i, k], steps[i, k], ev[i, k] = r.goals_reached, r.steps, r.edge_violations
    return BenchmarkResult(list(suite.names), goals, steps, ev)


def benchmark_mean(p, suite: BenchmarkSuite = None) -> float:
    """Headline metric: mean goals over all 200 instances (goals-only fast path)."""
    suite = suite or build_benchmark()
    s = _skill(p)
    return float(np.mean([goals_reached(t, s) for row in suite.terrains for t in row]))
