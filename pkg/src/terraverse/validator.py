"""Environment check and automatic fixing applied to every generated terrain."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .compiler import DEFAULT_GRID, CompileError, CompiledTerrain, GridConfig, compile_program, terrain_stats
from .dsl import GOAL_COUNT, DslError, TerrainProgram

DEFAULT_D_SAMPLES = tuple(k / 9 for k in range(10))


@dataclass(frozen=True)
class CheckLimits:
    max_height: float = 3.0
    max_goal_step: float = 0.8


@dataclass(frozen=True)
class FixConfig:
    spawn_length: float = 1.5
    min_feature: int = 3


@dataclass
class Violation:
    code: str
    message: str
    measured: Optional[float] = None
    threshold: Optional[float] = None
    difficulty: Optional[float] = None


@dataclass
class ValidityReport:
    violations: list[Violation] = field(default_factory=list)
    checked_difficulties: list[float] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def codes(self) -> set[str]:
        return {v.code for v in self.violations}

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "violations": [asdict(v) for v in self.violations],
            "checked_difficulties": list(self.checked_difficulties),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


@dataclass
class FixLog:
    applied: list[dict] = field(default_factory=list)

    def add(self, fix_code: str, detail: str):
        self.applied.append({"fix_code": fix_code, "detail": detail})

    def to_dict(self) -> dict:
        return {"applied": list(self.applied)}


def check(t: CompiledTerrain, limits: CheckLimits = CheckLimits()) -> ValidityReport:
    """Thresholds are strict: a measured value equal to the limit fails."""
    rep = ValidityReport(checked_difficulties=[t.difficulty])
    d = t.difficulty
    if not np.all(np.isfinite(t.heights)):
        rep.violations.append(Violation("NONFINITE", "terrain contains non-finite heights", difficulty=d))
        return rep
    if len(t.goals) != GOAL_COUNT:
        rep.violations.append(Violation("GOAL_COUNT", f"expected {GOAL_COUNT} goals",
                                        float(len(t.goals)), float(GOAL_COUNT), d))
    for k, (x, y) in enumerate(t.goals):
        if not t.in_bounds(x, y):
            rep.violations.append(Violation("GOAL_OOB", f"goal {k} at ({x}, {y}) is outside the grid",
                                            difficulty=d))
    stats = terrain_stats(t)
    if stats.max_height >= limits.max_height:
        rep.violations.append(Violation("MAX_HEIGHT", "maximum height not below limit",
                                        stats.max_height, limits.max_height, d))
    if stats.max_goal_step >= limits.max_goal_step:
        rep.violations.append(Violation("GOAL_STEP", "height difference between consecutive goals not below limit",
                                        stats.max_goal_step, limits.max_goal_step, d))
    return rep


def check_program(
    p: TerrainProgram,
    limits: CheckLimits = CheckLimits(),
    d_samples: Sequence[float] = DEFAULT_D_SAMPLES,
    grid: GridConfig = DEFAULT_GRID,
    fix: Optional[FixConfig] = None,
) -> ValidityReport:
    """Compile at every sampled difficulty (optionally auto-fixing) and merge the reports."""
    rep = ValidityReport(checked_difficulties=list(d_samples))
    for d in d_samples:
        try:
            t = compile_program(p, d, grid)
        except (CompileError, DslError, ValueError) as exc:
            rep.violations.append(Violation("EXEC_FAIL", str(exc), difficulty=d))
            continue
        if fix is not None:
            t, _ = auto_fix(t, fix)
        rep.violations.extend(check(t, limits).violations)
    return rep


def _clamp_goal(x: float, y: float, t: CompiledTerrain) -> tuple[float, float]:
    cs = t.cell_size
    if not math.isfinite(x):
        x = cs
    if not math.isfinite(y):
        y = t.width / 2.0
    return min(max(x, cs), t.length - cs), min(max(y, cs), t.width - cs)


def auto_fix(t: CompiledTerrain, cfg: FixConfig = FixConfig()) -> tuple[CompiledTerrain, FixLog]:
    """Clamp goals, flatten the spawn area, widen skinny raised features (in that order).

    Idempotent, and never raises the maximum height.
    """
    log = FixLog()
    goals = list(t.goals)
    for k, (x, y) in enumerate(goals):
        if not t.in_bounds(x, y):
            nx, ny = _clamp_goal(x, y, t)
            if (nx, ny) != (x, y):
                goals[k] = (nx, ny)
                log.add("clamp_goal", f"goal {k}: ({x}, {y}) -> ({nx}, {ny})")

    h = np.array(t.heights, dtype=np.float64)
    spawn_rows = min(h.shape[0], int(math.ceil(cfg.spawn_length / t.cell_size - 1e-9)))
    if np.any(h[:spawn_rows] != 0.0):
        n = int(np.count_nonzero(h[:spawn_rows]))
        h[:spawn_rows] = 0.0
        log.add("flatten_spawn", f"zeroed {n} cells with x < {cfg.spawn_length} m")

    widened = _widen(h, spawn_rows, cfg.min_feature)
    if widened:
        log.add("widen_obstacle", f"widened {widened} raised region(s) to {cfg.min_feature} cells")

    if log.applied:
        return t.with_changes(heights=h, goals=goals), log
    return t, log


def _widen(h: np.ndarray, spawn_rows: int, min_feature: int) -> int:
    """Dilate raised regions narrower than ``min_feature`` cells, copying their own heights outward."""
    labels, n = ndimage.label(h > 0.0)
    if n == 0:
        return 0
    src = h.copy()
    count = 0
    for k, sl in enumerate(ndimage.find_objects(labels), start=1):
        spans = [sl[0].stop - sl[0].start, sl[1].stop - sl[1].start]
        if min(spans) >= min_feature:
            continue
        # work in a window padded by min_feature cells; rows never extend into the spawn area
        r0 = max(spawn_rows, sl[0].start - min_feature)
        r1 = min(h.shape[0], sl[0].stop + min_feature)
        c0 = max(0, sl[1].start - min_feature)
        c1 = min(h.shape[1], sl[1].stop + min_feature)
        win = (slice(r0, r1), slice(c0, c1))
        region = np.where(labels[win] == k, src[win], -np.inf)
        bounds = [(sl[0].start, sl[0].stop, spawn_rows, h.shape[0], r0),
                  (sl[1].start, sl[1].stop, 0, h.shape[1], c0)]
        for axis in (0, 1):
            need = min_feature - spans[axis]
            if need <= 0:
                continue
            start, stop, lo_bound, hi_bound, _ = bounds[axis]
            room_plus, room_minus = hi_bound - stop, max(0, start - lo_bound)
            plus = min(room_plus, (need + 1) // 2)
            minus = min(room_minus, need - plus)
            plus = min(room_plus, need - minus)
            grown = region.copy()
            for s in list(range(1, plus + 1)) + [-s for s in range(1, minus + 1)]:
                grown = np.maximum(grown, _shift(region, s, axis))
            region = grown
        merged = np.maximum(h[win], region)
        if not np.array_equal(merged, h[win]):
            h[win] = merged
            count += 1
    return count


def _shift(a: np.ndarray, s: int, axis: int) -> np.ndarray:
    out = np.full_like(a, -np.inf)
    if s > 0:
        src = [slice(None), slice(None)]
        dst = [slice(None), slice(None)]
        src[axis] = slice(0, a.shape[axis] - s)
        dst[axis] = slice(s, None)
    else:
        src = [slice(None), slice(None)]
        dst = [slice(None), slice(None)]
        src[axis] = slice(-s, None)
        dst[axis] = slice(0, a.shape[axis] + s)
    out[tuple(dst)] = a[tuple(src)]
    return out
