"""Instantiate terrain programs into height fields with eight goals."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dsl import GOAL_COUNT, Segment, TerrainProgram, eval_expr, round_half_away

BEAM_FALL_HEIGHT = -1.0
POLE_HEIGHT = 1.5
_IDX_EPS = 1e-9


class CompileError(Exception):
    pass


@dataclass(frozen=True)
class GridConfig:
    cell_size: float = 0.1
    course_length: float = 18.0
    course_width: float = 4.0
    spawn_x: float = 0.5

    @property
    def rows(self) -> int:
        return int(round(self.course_length / self.cell_size))

    @property
    def cols(self) -> int:
        return int(round(self.course_width / self.cell_size))

    @property
    def centerline(self) -> float:
        return self.course_width / 2.0


DEFAULT_GRID = GridConfig()


@dataclass(frozen=True, eq=False)
class CompiledTerrain:
    """Height grid indexed ``[x_index, y_index]`` (rows run along the course)."""

    heights: np.ndarray
    cell_size: float
    goals: tuple[tuple[float, float], ...]
    spawn: tuple[float, float]
    source_name: str
    difficulty: float

    @property
    def rows(self) -> int:
        return self.heights.shape[0]

    @property
    def cols(self) -> int:
        return self.heights.shape[1]

    @property
    def length(self) -> float:
        return self.rows * self.cell_size

    @property
    def width(self) -> float:
        return self.cols * self.cell_size

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return m_to_idx(x, self.cell_size), m_to_idx(y, self.cell_size)

    def in_bounds(self, x: float, y: float) -> bool:
        if x < 0 or y < 0 or not (math.isfinite(x) and math.isfinite(y)):
            return False
        i, j = self.cell_of(x, y)
        return i < self.rows and j < self.cols

    def goal_cells(self, clamp: bool = True) -> list[tuple[int, int]]:
        cells = []
        for x, y in self.goals:
            i = m_to_idx(x, self.cell_size) if math.isfinite(x) and x >= 0 else 0
            j = m_to_idx(y, self.cell_size) if math.isfinite(y) and y >= 0 else 0
            if clamp:
                i, j = min(i, self.rows - 1), min(j, self.cols - 1)
            cells.append((i, j))
        return cells

    def spawn_cell(self) -> tuple[int, int]:
        i, j = self.cell_of(*self.spawn)
        return min(i, self.rows - 1), min(j, self.cols - 1)

    def with_changes(self, heights: Optional[np.ndarray] = None, goals=None) -> "CompiledTerrain":
        h = self.heights if heights is None else _frozen(heights)
        return CompiledTerrain(h, self.cell_size, tuple(goals) if goals is not None else self.goals,
                               self.spawn, self.source_name, self.difficulty)


@dataclass(frozen=True)
class TerrainStats:
    max_height: float
    max_consecutive_diff: float
    height_std: float
    max_goal_step: float

    def as_dict(self) -> dict:
        return {k: float(v) for k, v in self.__dict__.items()}


def m_to_idx(x: float, cell_size: float) -> int:
    """Meters to grid index: ``floor(x / cell_size)``, tolerant of float noise (0.3/0.1 -> 3)."""
    return int(math.floor(x / cell_size + _IDX_EPS))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def segment_length(seg: Segment, d: float) -> float:
    if seg.kind == "stairs":
        return _count(seg, "steps", d) * eval_expr(seg["step_length"], d)
    if seg.kind == "poles":
        return _count(seg, "count", d) * eval_expr(seg["spacing"], d)
    return eval_expr(seg["length"], d)


def _count(seg: Segment, name: str, d: float) -> int:
    n = round_half_away(eval_expr(seg[name], d))
    if n < 1:
        raise CompileError(f"{seg.kind}.{name} must round to a positive integer, got {n}")
    return int(n)


def _strip(seg: Segment, d: float, grid: GridConfig, width_name: str = "width") -> tuple[int, int]:
    """Column range [lo, hi) covered by a segment's lateral strip."""
    w_expr = seg.get(width_name)
    width = eval_expr(w_expr, d) if w_expr is not None else grid.course_width
    off_expr = seg.get("lateral_offset")
    offset = eval_expr(off_expr, d) if off_expr is not None else 0.0
    center = grid.centerline + offset
    lo = max(0, m_to_idx(max(center - width / 2.0, 0.0), grid.cell_size))
    hi = min(grid.cols, m_to_idx(max(center + width / 2.0, 0.0), grid.cell_size))
    return lo, hi


def _write_segment(h: np.ndarray, seg: Segment, r0: int, r1: int, x0: float, d: float, grid: GridConfig):
    cs = grid.cell_size
    k = seg.kind
    if r1 <= r0:
        return
    if k in ("platform", "box"):
        lo, hi = _strip(seg, d, grid)
        h[r0:r1, lo:hi] = eval_expr(seg["height"], d)
    elif k == "gap":
        lo, hi = _strip(seg, d, grid)
        h[r0:r1, lo:hi] = -eval_expr(seg["depth"], d)
    elif k == "ramp":
        length = eval_expr(seg["length"], d)
        a = eval_expr(seg["start_height"], d)
        b = eval_expr(seg["end_height"], d)
        lo, hi = _strip(seg, d, grid)
        xs = np.arange(r0, r1) * cs
        t = (xs - x0) / length if length > 0 else np.zeros_like(xs)
        h[r0:r1, lo:hi] = (a + (b - a) * np.clip(t, 0.0, 1.0))[:, None]
    elif k == "stairs":
        n = _count(seg, "steps", d)
        sl = eval_expr(seg["step_length"], d)
        sh = eval_expr(seg["step_height"], d)
        lo, hi = _strip(seg, d, grid)
        for s in range(n):
            a = m_to_idx(x0 + s * sl, cs)
            b = r1 if s == n - 1 else m_to_idx(x0 + (s + 1) * sl, cs)
            a, b = max(a, r0), min(b, r1)
            h[a:b, lo:hi] = (s + 1) * sh
    elif k == "beam":
        h[r0:r1, :] = BEAM_FALL_HEIGHT
        lo, hi = _strip(seg, d, grid)
        h[r0:r1, lo:hi] = eval_expr(seg["height"], d)
    elif k == "poles":
        n = _count(seg, "count", d)
        spacing = eval_expr(seg["spacing"], d)
        pw = eval_expr(seg["pole_width"], d)
        off_expr = seg.get("lateral_offset")
        off = eval_expr(off_expr, d) if off_expr is not None else 0.0
        for p in range(n):
            cx = x0 + (p + 0.5) * spacing
            cy = grid.centerline + (off if p % 2 == 0 else -off)
            a = max(r0, m_to_idx(max(cx - pw / 2.0, 0.0), cs))
            b = min(r1, m_to_idx(max(cx + pw / 2.0, 0.0), cs))
            lo = max(0, m_to_idx(max(cy - pw / 2.0, 0.0), cs))
            hi = min(grid.cols, m_to_idx(max(cy + pw / 2.0, 0.0), cs))
            h[a:b, lo:hi] = POLE_HEIGHT


def segment_layout(p: TerrainProgram, d: float, grid: GridConfig = DEFAULT_GRID) -> list[tuple[float, float]]:
    """Start and end x (meters) of every segment at difficulty ``d``."""
    spans, x = [], 0.0
    for seg in p.segments:
        length = segment_length(seg, d)
        if not math.isfinite(length) or length < 0:
            raise CompileError(f"{seg.kind}: invalid length {length}")
        spans.append((x, x + length))
        x += length
    if x > grid.course_length + 1e-9:
        raise CompileError(f"{p.name}: course length {x:.3f} m exceeds {grid.course_length} m")
    return spans


def auto_goals(p: TerrainProgram, spans, d: float, grid: GridConfig) -> list[tuple[float, float]]:
    """Goal i goes to the ceil(i*S/8)-th landing segment; goals sharing a segment are spread evenly."""
    landing = [k for k, s in enumerate(p.segments) if s.kind != "gap"]
    S = len(landing)
    owner = [landing[math.ceil(i * S / GOAL_COUNT) - 1] for i in range(1, GOAL_COUNT + 1)]
    goals = []
    for i, k in enumerate(owner):
        same = [g for g, o in enumerate(owner) if o == k]
        rank = same.index(i)
        x0, x1 = spans[k]
        x = x0 + (rank + 0.5) / len(same) * (x1 - x0)
        seg = p.segments[k]
        y = grid.centerline
        off = seg.get("lateral_offset")
        if off is not None and seg.kind != "poles":
            y += eval_expr(off, d)
        goals.append((x, y))
    return goals


def compile_program(p: TerrainProgram, d: float, grid: GridConfig = DEFAULT_GRID) -> CompiledTerrain:
    """Lay segments out along x from 0 and rasterize them; cells past the last segment stay at 0."""
    if not 0.0 <= d <= 1.0:
        raise ValueError(f"difficulty must lie in [0, 1], got {d}")
    spans = segment_layout(p, d, grid)
    h = np.zeros((grid.rows, grid.cols), dtype=np.float64)
    cs = grid.cell_size
    for seg, (x0, x1) in zip(p.segments, spans):
        r0 = min(m_to_idx(x0, cs), grid.rows)
        r1 = min(m_to_idx(x1, cs), grid.rows)
        _write_segment(h, seg, r0, r1, x0, d, grid)
    if not np.all(np.isfinite(h)):
        raise CompileError(f"{p.name}: non-finite height at d={d}")
    if p.goals is None:
        goals = auto_goals(p, spans, d, grid)
    else:
        goals = [(eval_expr(gx, d), eval_expr(gy, d)) for gx, gy in p.goals]
    return CompiledTerrain(
        heights=_frozen(h),
        cell_size=cs,
        goals=tuple(goals),
        spawn=(grid.spawn_x, grid.centerline),
        source_name=p.name,
        difficulty=d,
    )


def terrain_stats(t: CompiledTerrain) -> TerrainStats:
    h = t.heights
    diffs = [0.0]
    if h.shape[0] > 1:
        diffs.append(float(np.abs(np.diff(h, axis=0)).max()))
    if h.shape[1] > 1:
        diffs.append(float(np.abs(np.diff(h, axis=1)).max()))
    cells = t.goal_cells()
    goal_h = [h[i, j] for i, j in cells]
    step = max((abs(a - b) for a, b in zip(goal_h, goal_h[1:])), default=0.0)
    return TerrainStats(
        max_height=float(h.max()),
        max_consecutive_diff=max(diffs),
        height_std=float(h.std()),
        max_goal_step=float(step),
    )


# --------------------------------------------------------------------------
# exports

def heights_csv(t: CompiledTerrain) -> str:
    buf = io.StringIO()
    for row in t.heights:
        buf.write(",".join(f"{v:.4f}" for v in row))
        buf.write("\n")
    return buf.getvalue()


def goals_csv(t: CompiledTerrain) -> str:
    lines = ["idx,x_m,y_m"]
    lines += [f"{k},{x:.4f},{y:.4f}" for k, (x, y) in enumerate(t.goals)]
    return "\n".join(lines) + "\n"


def heights_pgm(t: CompiledTerrain, transpose: bool = True) -> str:
    """Plain PGM (P2), 16-bit; the header comment records ``height = lo + value * scale``."""
    h = t.heights.T if transpose else t.heights
    lo, hi = float(h.min()), float(h.max())
    scale = (hi - lo) / 65535.0 if hi > lo else 1.0
    vals = np.rint((h - lo) / scale).astype(np.int64) if hi > lo else np.zeros(h.shape, dtype=np.int64)
    out = [
        "P2",
        f"# height_m = {lo!r} + value * {scale!r}",
        f"{h.shape[1]} {h.shape[0]}",
        "65535",
    ]
    out += [" ".join(str(v) for v in row) for row in vals]
    return "\n".join(out) + "\n"
